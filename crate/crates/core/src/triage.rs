//! Failure taxonomy, token edit distances and instruction alignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asmtext::{classify_operand, extract_instructions, token_stream, Instruction, OperandKind};
use crate::guesser::MutationRule;
use crate::isa::Isa;
use crate::verify::{VerificationOutcome, VerifyStatus};

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("unknown error class '{0}'")]
    UnknownClass(String),
    #[error("bad pattern for {class}: {msg}")]
    BadPattern { class: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorClass {
    ContextOverflow,
    DuplicateFunction,
    StackMemory,
    MissingFunction,
    UndefinedLabel,
    RegisterMislabel,
    IncorrectImmediate,
    Unclassified,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 8] = [
        ErrorClass::ContextOverflow,
        ErrorClass::DuplicateFunction,
        ErrorClass::StackMemory,
        ErrorClass::MissingFunction,
        ErrorClass::UndefinedLabel,
        ErrorClass::RegisterMislabel,
        ErrorClass::IncorrectImmediate,
        ErrorClass::Unclassified,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::ContextOverflow => "ContextOverflow",
            ErrorClass::DuplicateFunction => "DuplicateFunction",
            ErrorClass::StackMemory => "StackMemory",
            ErrorClass::MissingFunction => "MissingFunction",
            ErrorClass::UndefinedLabel => "UndefinedLabel",
            ErrorClass::RegisterMislabel => "RegisterMislabel",
            ErrorClass::IncorrectImmediate => "IncorrectImmediate",
            ErrorClass::Unclassified => "Unclassified",
        }
    }

    /// Row label used in reports.
    pub fn description(self) -> &'static str {
        match self {
            ErrorClass::ContextOverflow => "Input + output out of context window",
            ErrorClass::DuplicateFunction => "Duplicate function error",
            ErrorClass::StackMemory => "Stack/memory error",
            ErrorClass::MissingFunction => "Missing function error",
            ErrorClass::UndefinedLabel => "Labels referred but not defined",
            ErrorClass::RegisterMislabel => "Register mislabel error",
            ErrorClass::IncorrectImmediate => "Incorrect immediate value",
            ErrorClass::Unclassified => "Unclassified",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ErrorClass {
    type Err = TriageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squash = |t: &str| t.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        let want = squash(s);
        ErrorClass::ALL.into_iter().find(|c| squash(c.as_str()) == want).ok_or_else(|| TriageError::UnknownClass(s.to_string()))
    }
}

/// Class a mutant-backend rule is expected to be triaged as.
pub fn class_for_rule(rule: MutationRule) -> ErrorClass {
    match rule {
        MutationRule::ImmediateValue | MutationRule::IndexOffset => ErrorClass::IncorrectImmediate,
        MutationRule::RegisterOverwrite => ErrorClass::RegisterMislabel,
        MutationRule::MemoryOffset => ErrorClass::StackMemory,
        // an opcode swap has no dedicated class in the taxonomy
        MutationRule::InstructionSequence => ErrorClass::Unclassified,
    }
}

/// Build-log diagnostics per class, covering GNU as/ld and LLVM wording.
#[derive(Debug, Clone)]
pub struct TriagePatterns {
    patterns: Vec<(ErrorClass, Regex)>,
}

const DEFAULT_PATTERNS: [(ErrorClass, &str); 3] = [
    (ErrorClass::DuplicateFunction, r"(?i)symbol\s+\S+\s+is already defined|multiple definition of|duplicate symbol"),
    (ErrorClass::UndefinedLabel, r#"(?i)undefined temporary symbol|undefined (?:reference to|symbol:?)\s*[`'"]?\.L"#),
    (ErrorClass::MissingFunction, r#"(?i)undefined (?:reference to|symbol:?)\s*[`'"]?[A-Za-z_$]"#),
];

impl Default for TriagePatterns {
    fn default() -> Self {
        TriagePatterns {
            patterns: DEFAULT_PATTERNS.iter().map(|(c, p)| (*c, Regex::new(p).expect("default pattern compiles"))).collect(),
        }
    }
}

impl TriagePatterns {
    /// Defaults with per-class replacements (class name → regex).
    pub fn with_overrides(overrides: &BTreeMap<String, String>) -> Result<Self, TriageError> {
        let mut out = TriagePatterns::default();
        for (name, pat) in overrides {
            let class: ErrorClass = name.parse()?;
            let re = Regex::new(pat).map_err(|e| TriageError::BadPattern { class: name.clone(), msg: e.to_string() })?;
            out.patterns.retain(|(c, _)| *c != class);
            out.patterns.push((class, re));
        }
        Ok(out)
    }

    pub fn matches(&self, log: &str) -> Vec<ErrorClass> {
        self.patterns.iter().filter(|(_, re)| re.is_match(log)).map(|(c, _)| *c).collect()
    }
}

/// Unit-cost Levenshtein distance over arbitrary sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Token-level edit distance between two normalized assembly texts.
pub fn edit_distance(reference: &str, candidate: &str) -> usize {
    levenshtein(&token_stream(reference), &token_stream(candidate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignKind {
    Matched,
    Substituted,
    /// Present only in the reference.
    Deleted,
    /// Present only in the candidate.
    Inserted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPair {
    pub kind: AlignKind,
    pub reference: Option<Instruction>,
    pub candidate: Option<Instruction>,
}

/// Global alignment of instruction lines; substituting costs the token edit
/// distance between the lines, inserting or deleting costs the line's tokens.
pub fn align_instructions(reference: &[Instruction], candidate: &[Instruction]) -> Vec<AlignedPair> {
    let rt: Vec<Vec<String>> = reference.iter().map(Instruction::tokens).collect();
    let ct: Vec<Vec<String>> = candidate.iter().map(Instruction::tokens).collect();
    let (n, m) = (rt.len(), ct.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 1..=n {
        cost[i * w] = cost[(i - 1) * w] + rt[i - 1].len();
    }
    for j in 1..=m {
        cost[j] = cost[j - 1] + ct[j - 1].len();
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[(i - 1) * w + j - 1] + levenshtein(&rt[i - 1], &ct[j - 1]);
            let del = cost[(i - 1) * w + j] + rt[i - 1].len();
            let ins = cost[i * w + j - 1] + ct[j - 1].len();
            cost[i * w + j] = sub.min(del).min(ins);
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let d = levenshtein(&rt[i - 1], &ct[j - 1]);
            if here == cost[(i - 1) * w + j - 1] + d {
                let kind = if d == 0 { AlignKind::Matched } else { AlignKind::Substituted };
                out.push(AlignedPair { kind, reference: Some(reference[i - 1].clone()), candidate: Some(candidate[j - 1].clone()) });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == cost[(i - 1) * w + j] + rt[i - 1].len() {
            out.push(AlignedPair { kind: AlignKind::Deleted, reference: Some(reference[i - 1].clone()), candidate: None });
            i -= 1;
        } else {
            out.push(AlignedPair { kind: AlignKind::Inserted, reference: None, candidate: Some(candidate[j - 1].clone()) });
            j -= 1;
        }
    }
    out.reverse();
    out
}

/// What kind of operand differs in same-opcode substitutions.
fn operand_differences(pair: &AlignedPair, isa: Isa) -> Vec<OperandKind> {
    let (Some(r), Some(c)) = (&pair.reference, &pair.candidate) else { return Vec::new() };
    if pair.kind != AlignKind::Substituted || r.opcode != c.opcode || r.operands.len() != c.operands.len() {
        return Vec::new();
    }
    r.operands
        .iter()
        .zip(&c.operands)
        .filter(|(a, b)| a != b)
        .map(|(a, b)| {
            let (ka, kb) = (classify_operand(a, isa), classify_operand(b, isa));
            if ka == kb {
                ka
            } else {
                OperandKind::Other
            }
        })
        .collect()
}

fn crashed_on_memory(outcome: &VerificationOutcome) -> bool {
    let log = &outcome.build_log;
    ["signal 11", "signal 7", "exit 139", "exit 135"].iter().any(|s| log.contains(s))
}

/// Rule-based classification of a failed outcome; never empty.
pub fn classify_outcome(
    outcome: &VerificationOutcome,
    reference: &str,
    candidate: &str,
    isa: Isa,
    patterns: &TriagePatterns,
) -> Vec<ErrorClass> {
    if outcome.status == VerifyStatus::ContextOverflow {
        return vec![ErrorClass::ContextOverflow];
    }
    let mut classes = BTreeSet::new();
    if outcome.status == VerifyStatus::BuildFail {
        classes.extend(patterns.matches(&outcome.build_log));
    }
    if outcome.status == VerifyStatus::RuntimeCrash && crashed_on_memory(outcome) {
        classes.insert(ErrorClass::StackMemory);
    }
    let aligned = align_instructions(&extract_instructions(reference), &extract_instructions(candidate));
    for pair in &aligned {
        for kind in operand_differences(pair, isa) {
            match kind {
                OperandKind::Register => classes.insert(ErrorClass::RegisterMislabel),
                OperandKind::Immediate => classes.insert(ErrorClass::IncorrectImmediate),
                OperandKind::Memory => classes.insert(ErrorClass::StackMemory),
                OperandKind::Other => false,
            };
        }
    }
    if classes.is_empty() {
        classes.insert(ErrorClass::Unclassified);
    }
    classes.into_iter().collect()
}

/// Descriptive notes on how the candidate departs from the reference.
pub fn describe_alignment(aligned: &[AlignedPair], isa: Isa) -> String {
    let mut notes = Vec::new();
    let (mut del, mut ins) = (0, 0);
    for pair in aligned {
        match pair.kind {
            AlignKind::Matched => {}
            AlignKind::Deleted => del += 1,
            AlignKind::Inserted => ins += 1,
            AlignKind::Substituted => {
                let r = pair.reference.as_ref().expect("substitution has both sides");
                let c = pair.candidate.as_ref().expect("substitution has both sides");
                let what = match operand_differences(pair, isa).first() {
                    Some(OperandKind::Register) => "register",
                    Some(OperandKind::Immediate) => "immediate",
                    Some(OperandKind::Memory) => "memory offset",
                    _ if r.opcode != c.opcode => "opcode",
                    _ => "operands",
                };
                notes.push(format!("line {}: {what} `{}` -> `{}`", r.line_no, r.render(), c.render()));
            }
        }
    }
    if del > 0 || ins > 0 {
        notes.push(format!("{del} instruction(s) missing, {ins} extra"));
    }
    notes.join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageRecord {
    pub program_id: String,
    pub classes: Vec<ErrorClass>,
    pub edit_distance: usize,
    pub notes: String,
}

/// Classifies one failed outcome and measures its distance from the reference.
pub fn triage_outcome(
    outcome: &VerificationOutcome,
    reference: &str,
    candidate: &str,
    isa: Isa,
    patterns: &TriagePatterns,
) -> TriageRecord {
    let classes = classify_outcome(outcome, reference, candidate, isa, patterns);
    let notes = if outcome.status == VerifyStatus::ContextOverflow {
        outcome.build_log.clone()
    } else {
        describe_alignment(&align_instructions(&extract_instructions(reference), &extract_instructions(candidate)), isa)
    };
    TriageRecord { program_id: outcome.program_id.clone(), classes, edit_distance: edit_distance(reference, candidate), notes }
}

const BUCKETS: [(usize, usize, &str); 7] =
    [(0, 0, "0"), (1, 1, "1"), (2, 5, "2-5"), (6, 10, "6-10"), (11, 20, "11-20"), (21, 50, "21-50"), (51, usize::MAX, "51+")];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriageReport {
    pub by_class: BTreeMap<ErrorClass, Vec<String>>,
    /// Edit-distance bucket label → record count, in bucket order.
    pub histogram: Vec<(String, usize)>,
}

pub fn triage_report(records: &[TriageRecord]) -> TriageReport {
    let mut by_class: BTreeMap<ErrorClass, Vec<String>> = BTreeMap::new();
    for r in records {
        for c in &r.classes {
            by_class.entry(*c).or_default().push(r.program_id.clone());
        }
    }
    for ids in by_class.values_mut() {
        ids.sort();
        ids.dedup();
    }
    let histogram = if records.is_empty() {
        Vec::new()
    } else {
        BUCKETS
            .iter()
            .map(|(lo, hi, label)| (label.to_string(), records.iter().filter(|r| (*lo..=*hi).contains(&r.edit_distance)).count()))
            .collect()
    };
    TriageReport { by_class, histogram }
}

impl TriageReport {
    pub fn is_empty(&self) -> bool {
        self.by_class.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (class, ids) in &self.by_class {
            let _ = writeln!(s, "{:<40}{}", class.description(), ids.join(", "));
        }
        if !self.histogram.is_empty() {
            s.push_str("\nEdit distance (tokens)\n");
            for (label, n) in &self.histogram {
                let _ = writeln!(s, "{label:>8}  {n}");
            }
        }
        s
    }
}
