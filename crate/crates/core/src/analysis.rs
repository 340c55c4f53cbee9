//! Cross-ISA surface similarity (chrF) and opcode distribution shifts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asmtext::OpcodeHistogram;
use crate::corpus::{Corpus, CorpusError, UnitStatus};
use crate::isa::{CompileSpec, Isa, OptLevel};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("opcode histogram for {0} is empty")]
    EmptyHistogram(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

pub const CHRF_MAX_N: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut out = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// chrF with the standard parameters (n up to 6, β = 2).
pub fn chrf(reference: &str, hypothesis: &str) -> f64 {
    chrf_with(reference, hypothesis, CHRF_MAX_N, CHRF_BETA)
}

/// Character n-gram F-score in percent. Whitespace is ignored; precision
/// and recall are averaged over the orders 1..=max_n for which either side
/// has n-grams.
pub fn chrf_with(reference: &str, hypothesis: &str, max_n: usize, beta: f64) -> f64 {
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let h: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    match (r.is_empty(), h.is_empty()) {
        (true, true) => return 100.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0usize);
    for n in 1..=max_n {
        let rg = char_ngrams(&r, n);
        let hg = char_ngrams(&h, n);
        let r_total: usize = rg.values().sum();
        let h_total: usize = hg.values().sum();
        if r_total == 0 && h_total == 0 {
            continue;
        }
        let matched: usize = hg.iter().map(|(g, &c)| c.min(rg.get(g).copied().unwrap_or(0))).sum();
        if h_total > 0 {
            p_sum += matched as f64 / h_total as f64;
        }
        if r_total > 0 {
            r_sum += matched as f64 / r_total as f64;
        }
        orders += 1;
    }
    let p = p_sum / orders as f64;
    let rc = r_sum / orders as f64;
    let b2 = beta * beta;
    if p + rc == 0.0 {
        return 0.0;
    }
    (1.0 + b2) * p * rc / (b2 * p + rc) * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSimilarity {
    pub base: Isa,
    pub other: Isa,
    pub mean: f64,
    pub count: usize,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub opt: Option<OptLevel>,
    pub pairs: Vec<PairSimilarity>,
    /// Programs left out of a pair, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Mean file-level chrF of each other ISA's assembly against the base ISA's.
pub fn isa_similarity(corpus: &Corpus, base: Isa, others: &[Isa], opt: OptLevel) -> Result<SimilarityReport, AnalysisError> {
    let mut report = SimilarityReport { opt: Some(opt), ..Default::default() };
    let accepted: Vec<&str> = corpus.records.iter().filter(|r| r.status == UnitStatus::Accepted).map(|r| r.id.as_str()).collect();
    let base_spec = CompileSpec::new(base, opt);
    let mut base_texts = BTreeMap::new();
    for id in &accepted {
        match corpus.artifact(id, &base_spec)? {
            Some(a) => {
                base_texts.insert(id.to_string(), a.normalized_text);
            }
            None => report.skipped.push((id.to_string(), format!("no {} artifact", base_spec.key()))),
        }
    }
    for &other in others {
        let spec = CompileSpec::new(other, opt);
        let mut texts = Vec::new();
        for (id, base_text) in &base_texts {
            match corpus.artifact(id, &spec)? {
                Some(a) => texts.push((id.clone(), base_text, a.normalized_text)),
                None => report.skipped.push((id.clone(), format!("no {} artifact", spec.key()))),
            }
        }
        let scores: BTreeMap<String, f64> = texts.par_iter().map(|(id, b, o)| (id.clone(), chrf(b, o))).collect();
        report.pairs.push(similarity_from_scores(base, other, scores));
    }
    Ok(report)
}

pub fn similarity_from_scores(base: Isa, other: Isa, scores: BTreeMap<String, f64>) -> PairSimilarity {
    let count = scores.len();
    let mean = if count == 0 { 0.0 } else { scores.values().sum::<f64>() / count as f64 };
    PairSimilarity { base, other, mean, count, scores }
}

impl SimilarityReport {
    pub fn render(&self) -> String {
        let mut s = format!("{:<22}{:>12}{:>10}\n", "ISA pair", "mean chrF", "programs");
        for p in &self.pairs {
            let _ = writeln!(s, "{:<22}{:>11.2}%{:>10}", format!("{} vs {}", p.base, p.other), p.mean, p.count);
        }
        for (id, why) in &self.skipped {
            let _ = writeln!(s, "note: skipped {id}: {why}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("base,other,program,chrf\n");
        for p in &self.pairs {
            for (id, v) in &p.scores {
                let _ = writeln!(s, "{},{},{},{:.6}", p.base, p.other, id, v);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub opcode: String,
    /// Percent of all instructions at the first optimization level.
    pub share_o0: f64,
    pub share_o2: f64,
    /// `share_o2 - share_o0`, in percentage points.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpcodeShift {
    /// Every opcode seen in either histogram, largest |delta| first.
    pub rows: Vec<ShiftRow>,
    pub top_k: usize,
}

impl OpcodeShift {
    pub fn top(&self) -> &[ShiftRow] {
        &self.rows[..self.top_k.min(self.rows.len())]
    }

    pub fn row(&self, opcode: &str) -> Option<&ShiftRow> {
        self.rows.iter().find(|r| r.opcode == opcode)
    }

    pub fn delta_sum(&self) -> f64 {
        self.rows.iter().map(|r| r.delta).sum()
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<12}{:>10}{:>10}{:>10}\n", "opcode", "O0 %", "O2 %", "delta");
        for r in self.top() {
            let _ = writeln!(s, "{:<12}{:>10.2}{:>10.2}{:>+10.2}", r.opcode, r.share_o0, r.share_o2, r.delta);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("opcode,share_o0,share_o2,delta\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6}", r.opcode, r.share_o0, r.share_o2, r.delta);
        }
        s
    }
}

/// Percentage-share change of every opcode between two histograms.
pub fn opcode_shift(hist_o0: &OpcodeHistogram, hist_o2: &OpcodeHistogram, top_k: usize) -> Result<OpcodeShift, AnalysisError> {
    if hist_o0.total == 0 {
        return Err(AnalysisError::EmptyHistogram("O0".into()));
    }
    if hist_o2.total == 0 {
        return Err(AnalysisError::EmptyHistogram("O2".into()));
    }
    let share = |h: &OpcodeHistogram, op: &str| h.counts.get(op).copied().unwrap_or(0) as f64 / h.total as f64 * 100.0;
    let mut ops: Vec<&String> = hist_o0.counts.keys().chain(hist_o2.counts.keys()).collect();
    ops.sort();
    ops.dedup();
    let mut rows: Vec<ShiftRow> = ops
        .into_iter()
        .map(|op| {
            let (a, b) = (share(hist_o0, op), share(hist_o2, op));
            ShiftRow { opcode: op.clone(), share_o0: a, share_o2: b, delta: b - a }
        })
        .collect();
    rows.sort_by(|x, y| y.delta.abs().total_cmp(&x.delta.abs()).then_with(|| x.opcode.cmp(&y.opcode)));
    Ok(OpcodeShift { rows, top_k })
}

/// Summed opcode histogram of every accepted program's artifact for `isa` at `opt`.
pub fn corpus_histogram(corpus: &Corpus, isa: Isa, opt: OptLevel) -> Result<OpcodeHistogram, AnalysisError> {
    let mut h = OpcodeHistogram::default();
    for a in corpus.artifacts_for(isa, Some(opt))? {
        h.merge(&a.opcode_histogram);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn chrf_edges() {
        assert_eq!(chrf("mov x0, x1", "mov x0, x1"), 100.0);
        assert_eq!(chrf("abc", "xyz"), 0.0);
        assert_eq!(chrf("", ""), 100.0);
        assert_eq!(chrf("", "a"), 0.0);
        assert_eq!(chrf("a", ""), 0.0);
        assert_eq!(chrf("a b", "ab"), 100.0);
    }

    #[test]
    fn chrf_hand_computed() {
        // "ab" vs "ac": n=1 P=R=1/2, n=2 P=R=0 → P=R=1/4, F=1/4
        assert!((chrf("ab", "ac") - 25.0).abs() < 1e-12);
        // "ab" (ref) vs "a" (hyp): n=1 P=1, R=1/2; n=2 P=0 (no hyp grams), R=0
        // P=1/2, R=1/4, F2 = 5*(1/8)/(4*(1/2)+1/4) = 0.625/2.25
        assert!((chrf("ab", "a") - 0.625 / 2.25 * 100.0).abs() < 1e-12);
    }

    #[test]
    fn opcode_shift_arithmetic() {
        let mut a = OpcodeHistogram::default();
        a.add("mov", 1);
        a.add("ldr", 1);
        let mut b = OpcodeHistogram::default();
        b.add("mov", 3);
        b.add("ldr", 1);
        let s = opcode_shift(&a, &b, 5).unwrap();
        let mov = s.row("mov").unwrap();
        assert_eq!((mov.share_o0, mov.share_o2, mov.delta), (50.0, 75.0, 25.0));
        assert_eq!(s.rows[0].opcode, "ldr");
        assert_eq!(s.delta_sum(), 0.0);
        let same = opcode_shift(&a, &a, 5).unwrap();
        assert!(same.rows.iter().all(|r| r.delta == 0.0));
        assert!(matches!(opcode_shift(&OpcodeHistogram::default(), &a, 3), Err(AnalysisError::EmptyHistogram(_))));
        assert_eq!(opcode_shift(&a, &b, 1).unwrap().top().len(), 1);
    }

    #[test]
    fn similarity_means() {
        let one = similarity_from_scores(Isa::X86_64, Isa::Armv8, BTreeMap::from([("p".to_string(), 42.5)]));
        assert_eq!(one.mean, 42.5);
        assert_eq!(similarity_from_scores(Isa::X86_64, Isa::Armv8, BTreeMap::new()).mean, 0.0);
    }

    fn hist() -> impl Strategy<Value = OpcodeHistogram> {
        prop::collection::btree_map("[a-e]{1,3}", 1u64..50, 1..12).prop_map(|m| {
            let mut h = OpcodeHistogram::default();
            for (k, v) in m {
                h.add(&k, v);
            }
            h
        })
    }

    proptest! {
        #[test]
        fn chrf_bounds_and_identity(a in "[a-d ]{0,30}", b in "[a-d ]{0,30}") {
            let s = chrf(&a, &b);
            prop_assert!((0.0..=100.0).contains(&s));
            if !a.trim().is_empty() {
                prop_assert_eq!(chrf(&a, &a), 100.0);
            }
        }

        #[test]
        fn chrf_beta1_symmetry(a in "[a-d]{1,20}", b in "[a-d]{1,20}") {
            prop_assert!((chrf_with(&a, &b, 6, 1.0) - chrf_with(&b, &a, 6, 1.0)).abs() < 1e-9);
        }

        #[test]
        fn shift_conserves_share(a in hist(), b in hist()) {
            let s = opcode_shift(&a, &b, 5).unwrap();
            prop_assert!(s.delta_sum().abs() < 1e-9);
            let col: f64 = s.rows.iter().map(|r| r.share_o0).sum();
            prop_assert!((col - 100.0).abs() < 1e-9);
        }
    }
}
