//! Tokenizer-extension experiments over assembly text.
//!
//! A [`Vocab`] is an ordered set of token strings. Text is cut into maximal
//! whitespace and non-whitespace runs; each run is segmented into the
//! fewest vocabulary tokens, falling back to single characters, with ties
//! broken in favour of the longest leading token. Because any segmentation
//! under a vocabulary stays valid under a superset, extending a vocabulary
//! can never increase a token count.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexSet;
use thiserror::Error;

use crate::asmtext::{count_words, OpcodeHistogram};
use crate::isa::Isa;

#[derive(Debug, Error)]
pub enum TokenlabError {
    #[error("cannot load vocabulary {path}: {msg}")]
    VocabLoad { path: String, msg: String },
    #[error("no words found for {0}")]
    IsaEmpty(Isa),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pub name: String,
    entries: IndexSet<String>,
    max_chars: usize,
}

impl Vocab {
    /// Builds a vocabulary, dropping empty strings and repeats.
    pub fn new<I, S>(name: &str, entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab { name: name.to_string(), entries: IndexSet::new(), max_chars: 0 };
        for e in entries {
            v.insert(e.into());
        }
        v
    }

    fn insert(&mut self, token: String) -> bool {
        if token.is_empty() {
            return false;
        }
        self.max_chars = self.max_chars.max(token.chars().count());
        self.entries.insert(token)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains(token)
    }

    pub fn entries(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    /// Newline-delimited file body, the inverse of [`load_vocab`].
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(e);
            s.push('\n');
        }
        s
    }
}

/// Reads a newline-delimited vocabulary. Lines are taken verbatim (a line
/// holding a single space is the space token); empty lines are ignored.
pub fn load_vocab(path: &Path) -> Result<Vocab, TokenlabError> {
    let err = |msg: String| TokenlabError::VocabLoad { path: path.display().to_string(), msg };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "vocab".into());
    let vocab = parse_vocab(&name, &text);
    if vocab.is_empty() {
        return Err(err("vocabulary is empty".into()));
    }
    Ok(vocab)
}

pub fn parse_vocab(name: &str, text: &str) -> Vocab {
    Vocab::new(name, text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).filter(|l| !l.is_empty()))
}

/// `base` followed by the terms it lacks, in the order given.
pub fn extend_vocab(base: &Vocab, isa_terms: &[String]) -> Vocab {
    let mut v = base.clone();
    let added = isa_terms.iter().fold(0, |n, t| n + usize::from(v.insert(t.clone())));
    if added > 0 {
        v.name = format!("{}+isa", base.name);
    }
    v
}

/// Fewest-token segmentation of one whitespace-free (or all-whitespace) run.
fn segment<'a>(vocab: &Vocab, run: &'a str, out: &mut Vec<&'a str>) {
    let offsets: Vec<usize> = run.char_indices().map(|(i, _)| i).chain(std::iter::once(run.len())).collect();
    let n = offsets.len() - 1;
    // best[i] = (token count for run[i..], length in chars of the first token)
    let mut best = vec![(0usize, 0usize); n + 1];
    for i in (0..n).rev() {
        let longest = vocab.max_chars.min(n - i).max(1);
        let mut choice = (usize::MAX, 0);
        for len in (1..=longest).rev() {
            let piece = &run[offsets[i]..offsets[i + len]];
            if len > 1 && !vocab.contains(piece) {
                continue;
            }
            let cost = 1 + best[i + len].0;
            if cost < choice.0 {
                choice = (cost, len);
            }
        }
        best[i] = choice;
    }
    let mut i = 0;
    while i < n {
        let len = best[i].1;
        out.push(&run[offsets[i]..offsets[i + len]]);
        i += len;
    }
}

/// Splits `text` into tokens; concatenating them gives back `text`.
pub fn tokenize<'a>(vocab: &Vocab, text: &'a str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut prev_ws: Option<bool> = None;
    for (i, ch) in text.char_indices() {
        let ws = ch.is_whitespace();
        if prev_ws.is_some_and(|p| p != ws) {
            segment(vocab, &text[start..i], &mut out);
            start = i;
        }
        prev_ws = Some(ws);
    }
    if start < text.len() {
        segment(vocab, &text[start..], &mut out);
    }
    out
}

pub fn token_count(vocab: &Vocab, text: &str) -> usize {
    tokenize(vocab, text).len()
}

/// General-purpose register names, in the spelling the toolchains emit.
pub fn register_names(isa: Isa) -> Vec<String> {
    let mut out = Vec::new();
    match isa {
        Isa::X86_64 => {
            for r in ["ax", "bx", "cx", "dx", "si", "di", "bp", "sp"] {
                out.push(format!("%r{r}"));
                out.push(format!("%e{r}"));
            }
            for n in 8..16 {
                out.push(format!("%r{n}"));
                out.push(format!("%r{n}d"));
            }
            for r in ["al", "bl", "cl", "dl", "sil", "dil", "rip"] {
                out.push(format!("%{r}"));
            }
        }
        Isa::Armv8 => {
            for n in 0..31 {
                out.push(format!("x{n}"));
                out.push(format!("w{n}"));
            }
            out.extend(["sp", "wsp", "xzr", "wzr", "fp", "lr"].map(String::from));
        }
        Isa::Armv5 => {
            out.extend((0..16).map(|n| format!("r{n}")));
            out.extend(["sp", "lr", "pc", "fp", "ip", "sl"].map(String::from));
        }
        Isa::Riscv64 => {
            out.extend(["zero", "ra", "sp", "gp", "tp", "fp"].map(String::from));
            out.extend((0..7).map(|n| format!("t{n}")));
            out.extend((0..12).map(|n| format!("s{n}")));
            out.extend((0..8).map(|n| format!("a{n}")));
        }
    }
    out
}

/// Number of opcodes shipped per ISA term list.
pub const SHIPPED_OPCODES: usize = 64;

/// Registers followed by the `top` most frequent opcodes of `hist`.
pub fn derive_isa_terms(isa: Isa, hist: &OpcodeHistogram, top: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    register_names(isa)
        .into_iter()
        .chain(hist.most_common(top).into_iter().map(|(op, _)| op.to_string()))
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Renders a term list file with a provenance header.
pub fn render_term_file(isa: Isa, terms: &[String], provenance: &str) -> String {
    let mut s = format!("# {isa} tokenizer extension terms\n# {provenance}\n");
    for t in terms {
        s.push_str(t);
        s.push('\n');
    }
    s
}

/// Parses a term list: one term per line, `# ` lines are comments.
pub fn parse_term_file(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with("# ") && *l != "#").map(String::from).collect()
}

pub fn shipped_terms(isa: Isa) -> Vec<String> {
    let text = match isa {
        Isa::X86_64 => include_str!("../data/terms/x86_64.txt"),
        Isa::Armv8 => include_str!("../data/terms/armv8.txt"),
        Isa::Armv5 => include_str!("../data/terms/armv5.txt"),
        Isa::Riscv64 => include_str!("../data/terms/riscv64.txt"),
    };
    parse_term_file(text)
}

/// Generic code-oriented base vocabulary shipped with the crate.
pub fn default_base_vocab() -> Vocab {
    parse_vocab("base", include_str!("../data/base_vocab.txt"))
}

/// The default base vocabulary extended with the shipped terms of `isas`.
pub fn default_extended_vocab(isas: &[Isa]) -> Vocab {
    let terms: Vec<String> = isas.iter().flat_map(|&i| shipped_terms(i)).collect();
    extend_vocab(&default_base_vocab(), &terms)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FertilityRow {
    pub vocab: String,
    pub isa: Isa,
    pub tokens: usize,
    pub words: usize,
    pub fertility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FertilityReport {
    pub base_name: String,
    pub extended_name: String,
    pub isas: Vec<Isa>,
    pub rows: Vec<FertilityRow>,
    /// Signed percent change of the extended vocabulary's fertility
    /// relative to the base; negative means fewer tokens per word.
    pub deltas: Vec<(Isa, f64)>,
}

impl FertilityReport {
    pub fn fertility(&self, vocab: &str, isa: Isa) -> Option<f64> {
        self.rows.iter().find(|r| r.vocab == vocab && r.isa == isa).map(|r| r.fertility)
    }

    pub fn delta(&self, isa: Isa) -> Option<f64> {
        self.deltas.iter().find(|(i, _)| *i == isa).map(|(_, d)| *d)
    }

    /// Plain-text table: one row per vocabulary, one column per ISA, then a
    /// delta row. Lower is better.
    pub fn render(&self) -> String {
        let name_w = self.base_name.len().max(self.extended_name.len()).max(7) + 2;
        let mut s = format!("{:<name_w$}", "Vocab");
        for isa in &self.isas {
            let _ = write!(s, "{:>10}", isa.as_str());
        }
        s.push('\n');
        for name in [&self.base_name, &self.extended_name] {
            let _ = write!(s, "{name:<name_w$}");
            for &isa in &self.isas {
                let _ = write!(s, "{:>10.2}", self.fertility(name, isa).unwrap_or(f64::NAN));
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<name_w$}", "Δ (%)");
        for &isa in &self.isas {
            let d = self.delta(isa).unwrap_or(0.0);
            let arrow = if d < 0.0 { "↓" } else if d > 0.0 { "↑" } else { "" };
            let _ = write!(s, "{:>10}", format!("{arrow}{:.1}%", d.abs()));
        }
        s.push_str("\nFertility = tokens/words. Lower is better.\n");
        s
    }
}

/// Fertility of both vocabularies over the texts of every ISA.
pub fn fertility_report(texts: &[(Isa, Vec<String>)], base: &Vocab, extended: &Vocab) -> Result<FertilityReport, TokenlabError> {
    let base_name = base.name.clone();
    let extended_name = if extended.name == base.name { format!("{}'", extended.name) } else { extended.name.clone() };
    let mut rows = Vec::new();
    let mut deltas = Vec::new();
    for (isa, docs) in texts {
        let words: usize = docs.iter().map(|d| count_words(d)).sum();
        if words == 0 {
            return Err(TokenlabError::IsaEmpty(*isa));
        }
        let mut fert = [0.0; 2];
        for (slot, (name, vocab)) in [(&base_name, base), (&extended_name, extended)].into_iter().enumerate() {
            let tokens: usize = docs.iter().map(|d| token_count(vocab, d)).sum();
            fert[slot] = tokens as f64 / words as f64;
            rows.push(FertilityRow { vocab: name.clone(), isa: *isa, tokens, words, fertility: fert[slot] });
        }
        deltas.push((*isa, (fert[1] - fert[0]) / fert[0] * 100.0));
    }
    Ok(FertilityReport { base_name, extended_name, isas: texts.iter().map(|(i, _)| *i).collect(), rows, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ldr_base() -> Vocab {
        Vocab::new("base", ["ld", "r", "1", "2", ",", " "])
    }

    #[test]
    fn ldr_tokenizations() {
        let base = ldr_base();
        assert_eq!(tokenize(&base, "ldr r1, r2"), vec!["ld", "r", " ", "r", "1", ",", " ", "r", "2"]);
        let ext = extend_vocab(&base, &["ldr".into(), "r1".into(), "r2".into()]);
        assert!(ext.contains("ldr"));
        assert_eq!(tokenize(&ext, "ldr r1, r2"), vec!["ldr", " ", "r1", ",", " ", "r2"]);
        assert!(tokenize(&base, "").is_empty());
    }

    #[test]
    fn extend_is_idempotent() {
        let base = ldr_base();
        assert_eq!(extend_vocab(&base, &[]), base);
        assert_eq!(extend_vocab(&base, &["ld".into(), "r".into()]), base);
        let ext = extend_vocab(&base, &["ldr".into()]);
        assert_eq!(extend_vocab(&ext, &["ldr".into()]), ext);
        assert_eq!(ext.entries().last(), Some("ldr"));
    }

    #[test]
    fn vocab_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.txt");
        fs::write(&p, "ld\nr\n \n").unwrap();
        assert_eq!(load_vocab(&p).unwrap().len(), 3);
        fs::write(&p, "ld\nld\nr\nld\n").unwrap();
        let v = load_vocab(&p).unwrap();
        assert_eq!(v.entries().collect::<Vec<_>>(), vec!["ld", "r"]);
        fs::write(&p, "").unwrap();
        assert!(matches!(load_vocab(&p), Err(TokenlabError::VocabLoad { .. })));
        assert!(matches!(load_vocab(&dir.path().join("nope")), Err(TokenlabError::VocabLoad { .. })));
    }

    #[test]
    fn fertility_of_ldr_example() {
        let base = ldr_base();
        let ext = extend_vocab(&base, &["ldr".into(), "r1".into(), "r2".into()]);
        let r = fertility_report(&[(Isa::Armv5, vec!["ldr r1, r2".into()])], &base, &ext).unwrap();
        assert_eq!(r.fertility("base", Isa::Armv5), Some(3.0));
        assert_eq!(r.fertility("base+isa", Isa::Armv5), Some(2.0));
        assert!((r.delta(Isa::Armv5).unwrap() + 100.0 / 3.0).abs() < 1e-12);
        assert!(r.render().contains("↓33.3%"));

        let same = fertility_report(&[(Isa::Armv5, vec!["ldr r1, r2".into()])], &base, &base).unwrap();
        assert_eq!(same.delta(Isa::Armv5), Some(0.0));
    }

    #[test]
    fn empty_isa_is_an_error() {
        let v = ldr_base();
        assert!(matches!(fertility_report(&[(Isa::Armv8, vec!["  \n".into()])], &v, &v), Err(TokenlabError::IsaEmpty(Isa::Armv8))));
    }

    #[test]
    fn greedy_trap_is_avoided() {
        // greedy longest match would take "abc" and then need "d", "e"
        let v = Vocab::new("v", ["ab", "cde", "abc"]);
        assert_eq!(tokenize(&v, "abcde"), vec!["ab", "cde"]);
    }

    #[test]
    fn shipped_terms_cover_registers() {
        for isa in Isa::ALL {
            let terms = shipped_terms(isa);
            for r in register_names(isa) {
                assert!(terms.contains(&r), "{isa} term list lacks {r}");
            }
            assert!(terms.len() > register_names(isa).len(), "{isa} term list has no opcodes");
        }
        assert!(default_base_vocab().contains(" "));
    }

    fn small_vocab() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec("[abc ,]{1,4}", 0..12)
    }

    proptest! {
        #[test]
        fn detokenization_is_exact(words in small_vocab(), text in "[abc ,\n]{0,40}") {
            let v = Vocab::new("v", words);
            prop_assert_eq!(tokenize(&v, &text).concat(), text.clone());
            for t in tokenize(&v, &text) {
                let ws = t.chars().filter(|c| c.is_whitespace()).count();
                prop_assert!(ws == 0 || ws == t.chars().count(), "token {:?} spans whitespace", t);
            }
        }

        #[test]
        fn superset_never_costs_more(a in small_vocab(), extra in small_vocab(), text in "[abc ,]{0,40}") {
            let small = Vocab::new("v", a.clone());
            let big = Vocab::new("w", a.into_iter().chain(extra));
            prop_assert!(token_count(&big, &text) <= token_count(&small, &text));
        }
    }
}
