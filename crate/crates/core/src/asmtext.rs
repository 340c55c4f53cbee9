//! ISA-aware assembly text processing.
//!
//! Everything downstream (hashing, diffing, similarity, tokenizer fertility,
//! edit distances) works on the normalized form produced here, so the
//! normalizer has to be total and idempotent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::isa::Isa;

/// Metadata directives dropped by [`normalize`].
const METADATA_DIRECTIVES: [&str; 2] = [".ident", ".file"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub opcode: String,
    pub operands: Vec<String>,
    /// 1-based line number in the normalized text.
    pub line_no: usize,
}

impl Instruction {
    /// Opcode followed by operands, the unit stream used for edit distances.
    pub fn tokens(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.operands.len() + 1);
        out.push(self.opcode.clone());
        out.extend(self.operands.iter().cloned());
        out
    }

    pub fn render(&self) -> String {
        if self.operands.is_empty() {
            self.opcode.clone()
        } else {
            format!("{} {}", self.opcode, self.operands.join(", "))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpcodeHistogram {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

impl OpcodeHistogram {
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn add(&mut self, opcode: &str, n: u64) {
        *self.counts.entry(opcode.to_string()).or_insert(0) += n;
        self.total += n;
    }

    pub fn merge(&mut self, other: &OpcodeHistogram) {
        for (op, n) in &other.counts {
            self.add(op, *n);
        }
    }

    /// Opcodes sorted by descending count, ties broken by name.
    pub fn most_common(&self, k: usize) -> Vec<(&str, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v.truncate(k);
        v
    }
}

/// Result of [`extract_with_diagnostics`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub instructions: Vec<Instruction>,
    /// Lines that were neither labels, directives nor parseable instructions.
    pub skipped_residue: usize,
}

fn comment_starts(isa: Isa) -> &'static [&'static str] {
    match isa {
        Isa::X86_64 | Isa::Riscv64 => &["#", ";"],
        // `@` is a type prefix (`.type f,@function`) in AArch64 syntax, not a comment.
        Isa::Armv8 => &["//", ";"],
        Isa::Armv5 => &["@", "//", ";"],
    }
}

/// Strips comments and collapses blanks on one line, leaving string literals alone.
fn normalize_line(line: &str, markers: &[&str]) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut pending_space = false;
    let mut idx = 0;
    let bytes = line.as_bytes();
    while idx < line.len() {
        let ch = line[idx..].chars().next().unwrap();
        if in_string {
            out.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            idx += ch.len_utf8();
            continue;
        }
        if markers.iter().any(|m| bytes[idx..].starts_with(m.as_bytes())) {
            break;
        }
        if ch == ' ' || ch == '\t' || ch == '\r' || ch == '\x0b' || ch == '\x0c' {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            if ch == '"' {
                in_string = true;
            }
            out.push(ch);
        }
        idx += ch.len_utf8();
    }
    out
}

/// Canonical form of compiler-emitted assembly.
///
/// Comments are removed per the ISA's dialect, blank runs collapse to one
/// space, blank lines and `.ident`/`.file` directives are dropped. Lines are
/// joined with `\n` and there is no trailing newline.
pub fn normalize(raw: &str, isa: Isa) -> String {
    let markers = comment_starts(isa);
    let mut lines = Vec::new();
    for line in raw.lines() {
        let norm = normalize_line(line, markers);
        if norm.is_empty() {
            continue;
        }
        let first = norm.split(' ').next().unwrap_or("");
        if METADATA_DIRECTIVES.contains(&first) {
            continue;
        }
        lines.push(norm);
    }
    lines.join("\n")
}

/// Splits an operand list on top-level commas; brackets, parentheses,
/// braces and string literals are kept intact.
pub fn split_operands(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut in_string = false;
    let mut escaped = false;
    let mut cur = String::new();
    for ch in text.chars() {
        if in_string {
            cur.push(ch);
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' => {
                in_string = true;
                cur.push(ch);
            }
            '[' | '(' | '{' => {
                depth += 1;
                cur.push(ch);
            }
            ']' | ')' | '}' => {
                depth -= 1;
                cur.push(ch);
            }
            ',' if depth <= 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
            }
            _ => cur.push(ch),
        }
    }
    let last = cur.trim();
    if !last.is_empty() || !out.is_empty() {
        out.push(last.to_string());
    }
    out
}

fn is_label_token(tok: &str) -> bool {
    tok.len() > 1 && tok.ends_with(':') && !tok.contains('"')
}

fn is_valid_opcode(tok: &str) -> bool {
    let mut chars = tok.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '.' || c == '_')
}

/// Splits a normalized line into its label prefix (if any) and the rest.
fn strip_label(line: &str) -> (Option<&str>, &str) {
    let first = line.split(' ').next().unwrap_or("");
    if is_label_token(first) {
        (Some(first), line[first.len()..].trim_start())
    } else {
        (None, line)
    }
}

/// Parses one label-free, non-directive line.
fn parse_instruction(body: &str, line_no: usize) -> Option<Instruction> {
    let (head, rest) = match body.split_once(' ') {
        Some((h, r)) => (h, r.trim()),
        None => (body, ""),
    };
    if !is_valid_opcode(head) {
        return None;
    }
    // `sym = expr` assignments are not instructions
    if rest.starts_with('=') {
        return None;
    }
    let operands = if rest.is_empty() { Vec::new() } else { split_operands(rest) };
    Some(Instruction { opcode: head.to_ascii_lowercase(), operands, line_no })
}

pub fn extract_with_diagnostics(normalized: &str) -> Extraction {
    let mut ex = Extraction::default();
    for (i, line) in normalized.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (_, body) = strip_label(line);
        if body.is_empty() || body.starts_with('.') {
            continue;
        }
        match parse_instruction(body, i + 1) {
            Some(ins) => ex.instructions.push(ins),
            None => ex.skipped_residue += 1,
        }
    }
    ex
}

/// Instructions of a normalized listing; labels and directives are skipped.
pub fn extract_instructions(normalized: &str) -> Vec<Instruction> {
    extract_with_diagnostics(normalized).instructions
}

pub fn opcode_histogram(instructions: &[Instruction]) -> OpcodeHistogram {
    let mut hist = OpcodeHistogram::default();
    for ins in instructions {
        hist.add(&ins.opcode, 1);
    }
    hist
}

/// Number of maximal non-whitespace runs.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Flattened token stream of a normalized listing: every line contributes
/// its label, its first token and its comma-split operands.
pub fn token_stream(normalized: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in normalized.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label, body) = strip_label(line);
        if let Some(l) = label {
            out.push(l.to_string());
        }
        if body.is_empty() {
            continue;
        }
        let (head, rest) = match body.split_once(' ') {
            Some((h, r)) => (h, r.trim()),
            None => (body, ""),
        };
        out.push(head.to_string());
        if !rest.is_empty() {
            out.extend(split_operands(rest));
        }
    }
    out
}

/// Coarse operand categories used by triage and the mutant backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperandKind {
    Register,
    Immediate,
    Memory,
    Other,
}

fn is_register(op: &str, isa: Isa) -> bool {
    let op = op.trim_end_matches('!');
    let digits = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit());
    match isa {
        Isa::X86_64 => op.len() > 1 && op.starts_with('%') && op[1..].chars().all(|c| c.is_ascii_alphanumeric()),
        Isa::Armv8 => {
            matches!(op, "sp" | "wsp" | "xzr" | "wzr" | "fp" | "lr")
                || (op.len() > 1 && "wxbhsdqv".contains(&op[..1]) && digits(&op[1..]))
        }
        Isa::Armv5 => {
            matches!(op, "sp" | "lr" | "pc" | "fp" | "ip" | "sl" | "sb")
                || (op.len() > 1 && matches!(&op[..1], "r" | "s" | "d") && digits(&op[1..]))
        }
        Isa::Riscv64 => {
            matches!(op, "zero" | "ra" | "sp" | "gp" | "tp" | "fp")
                || (op.len() > 1 && matches!(&op[..1], "x" | "a" | "s" | "t" | "f") && digits(&op[1..]))
                || (op.len() > 2 && matches!(&op[..2], "fa" | "fs" | "ft") && digits(&op[2..]))
        }
    }
}

fn is_immediate(op: &str, isa: Isa) -> bool {
    let body = match isa {
        Isa::X86_64 => match op.strip_prefix('$') {
            Some(b) => b,
            None => return false,
        },
        Isa::Armv8 | Isa::Armv5 => match op.strip_prefix('#') {
            Some(b) => b,
            None => return false,
        },
        Isa::Riscv64 => op,
    };
    parse_int(body).is_some()
}

pub fn classify_operand(op: &str, isa: Isa) -> OperandKind {
    if is_register(op, isa) {
        OperandKind::Register
    } else if is_immediate(op, isa) {
        OperandKind::Immediate
    } else if op.contains('[') || op.contains('(') {
        OperandKind::Memory
    } else {
        OperandKind::Other
    }
}

/// Parses a decimal or `0x` hex integer with optional sign.
pub fn parse_int(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        body.parse().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Prefix that marks an immediate operand in the ISA's syntax.
pub fn immediate_prefix(isa: Isa) -> &'static str {
    match isa {
        Isa::X86_64 => "$",
        Isa::Armv8 | Isa::Armv5 => "#",
        Isa::Riscv64 => "",
    }
}

/// Registers named inside an operand (including those within memory brackets).
pub fn registers_in(op: &str, isa: Isa) -> Vec<String> {
    op.split(|c: char| !(c.is_ascii_alphanumeric() || c == '%' || c == '_'))
        .filter(|t| !t.is_empty() && is_register(t, isa))
        .map(str::to_string)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_arm_comment_and_blanks() {
        assert_eq!(normalize("  ldr   r1, r2   @ load", Isa::Armv5), "ldr r1, r2");
    }

    #[test]
    fn keeps_hash_inside_string_literals() {
        let raw = "\t.ascii\t\"a # b\"\t# trailing comment\n";
        assert_eq!(normalize(raw, Isa::X86_64), ".ascii \"a # b\"");
        // escaped quote does not end the literal
        let raw = ".ascii \"x\\\" # y\" # c";
        assert_eq!(normalize(raw, Isa::X86_64), ".ascii \"x\\\" # y\"");
        // blanks inside the literal survive untouched
        assert_eq!(normalize(".string \"a    b\"", Isa::Riscv64), ".string \"a    b\"");
    }

    #[test]
    fn drops_metadata_directives_and_blank_lines() {
        let raw = "\t.file\t\"t.c\"\n\n\t.text\nf:\n\tret\n\t.ident\t\"clang\"\n";
        assert_eq!(normalize(raw, Isa::Armv8), ".text\nf:\nret");
    }

    #[test]
    fn armv8_keeps_type_annotations() {
        let raw = "\t.type\tf,@function   // comment\n";
        assert_eq!(normalize(raw, Isa::Armv8), ".type f,@function");
        // the same line under ARMv5 rules loses everything after `@`
        assert_eq!(normalize(raw, Isa::Armv5), ".type f,");
    }

    #[test]
    fn x86_hash_is_a_comment_but_arm_hash_is_an_immediate() {
        assert_eq!(normalize("movl $1, %eax # one", Isa::X86_64), "movl $1, %eax");
        assert_eq!(normalize("mov w0, #1 // one", Isa::Armv8), "mov w0, #1");
    }

    #[test]
    fn already_normalized_is_fixed_point() {
        let once = normalize("f:\n  mov r0, #1 @ x\n  bx lr\n", Isa::Armv5);
        assert_eq!(normalize(&once, Isa::Armv5), once);
    }

    #[test]
    fn extracts_simple_instruction() {
        let ins = extract_instructions("mov r0, #1");
        assert_eq!(ins.len(), 1);
        assert_eq!(ins[0].opcode, "mov");
        assert_eq!(ins[0].operands, vec!["r0", "#1"]);
        assert!(extract_instructions(".word 42").is_empty());
    }

    #[test]
    fn hand_counted_fixture() {
        // 3 labels, 2 directives, 5 instructions
        let text = "main:\n.p2align 2\nsub sp, sp, #16\n.LBB0_1:\nldr w8, [sp, #12]\nadd w8, w8, #1\n.LBB0_2:\n.cfi_endproc\nstr w8, [sp, #12]\nret";
        assert_eq!(text.lines().count(), 10);
        let ex = extract_with_diagnostics(text);
        assert_eq!(ex.instructions.len(), 5);
        assert_eq!(ex.skipped_residue, 0);
        assert_eq!(ex.instructions[1].operands, vec!["w8", "[sp, #12]"]);
    }

    #[test]
    fn bracketed_operand_stays_whole() {
        assert_eq!(split_operands("r3, [fp, #-8]"), vec!["r3", "[fp, #-8]"]);
        assert_eq!(split_operands("-8(%rbp), %eax"), vec!["-8(%rbp)", "%eax"]);
        assert_eq!(split_operands("{r4, fp, lr}"), vec!["{r4, fp, lr}"]);
    }

    #[test]
    fn residue_is_counted() {
        let ex = extract_with_diagnostics("x = 5\nmov r0, r1\n}");
        assert_eq!(ex.instructions.len(), 1);
        assert_eq!(ex.skipped_residue, 2);
    }

    #[test]
    fn label_with_trailing_instruction() {
        let ins = extract_instructions("loop: subs r0, r0, #1");
        assert_eq!(ins[0].opcode, "subs");
        assert_eq!(token_stream("loop: subs r0, r0, #1"), vec!["loop:", "subs", "r0", "r0", "#1"]);
    }

    #[test]
    fn histogram_counts() {
        assert_eq!(opcode_histogram(&[]), OpcodeHistogram::default());
        let ins = extract_instructions("mov r0, r1\nmov r1, r2\nldr r0, [r1]");
        let h = opcode_histogram(&ins);
        assert_eq!(h.counts["mov"], 2);
        assert_eq!(h.counts["ldr"], 1);
        assert_eq!(h.total, 3);
    }

    #[test]
    fn word_counts() {
        assert_eq!(count_words("ldr r1, r2"), 3);
        assert_eq!(count_words(""), 0);
        let text = "f:\n\tmov x0, #1\n\n  ret  ";
        let per_line: usize = text.lines().map(|l| l.split(|c: char| c.is_whitespace()).filter(|s| !s.is_empty()).count()).sum();
        assert_eq!(count_words(text), per_line);
    }

    #[test]
    fn operand_kinds() {
        assert_eq!(classify_operand("w8", Isa::Armv8), OperandKind::Register);
        assert_eq!(classify_operand("#-404", Isa::Armv5), OperandKind::Immediate);
        assert_eq!(classify_operand("[fp, #-8]", Isa::Armv5), OperandKind::Memory);
        assert_eq!(classify_operand("$42", Isa::X86_64), OperandKind::Immediate);
        assert_eq!(classify_operand("-8(%rbp)", Isa::X86_64), OperandKind::Memory);
        assert_eq!(classify_operand("a5", Isa::Riscv64), OperandKind::Register);
        assert_eq!(classify_operand("-20", Isa::Riscv64), OperandKind::Immediate);
        assert_eq!(classify_operand(".L8", Isa::Armv8), OperandKind::Other);
        assert_eq!(registers_in("[x8, x9, lsl #2]", Isa::Armv8), vec!["x8", "x9"]);
    }

    fn asm_line() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("mov".to_string()),
                Just("ldr".to_string()),
                Just(".text".to_string()),
                Just(".file".to_string()),
                Just("loop:".to_string()),
                Just("r1,".to_string()),
                Just("[fp, #-8]".to_string()),
                Just("\"a # b\"".to_string()),
                Just("#3".to_string()),
                Just("@ note".to_string()),
                Just("// c".to_string()),
                Just("; c".to_string()),
                Just("   ".to_string()),
                Just("\t".to_string()),
            ],
            0..8,
        )
        .prop_map(|parts| parts.join(" "))
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(lines in prop::collection::vec(asm_line(), 0..10), isa_idx in 0usize..4) {
            let isa = Isa::ALL[isa_idx];
            let raw = lines.join("\n");
            let once = normalize(&raw, isa);
            prop_assert_eq!(normalize(&once, isa), once.clone());
            for line in once.lines() {
                prop_assert!(!line.ends_with(' ') && !line.is_empty());
            }
        }

        #[test]
        fn opcodes_are_never_labels_or_directives(lines in prop::collection::vec(asm_line(), 0..10), isa_idx in 0usize..4) {
            let norm = normalize(&lines.join("\n"), Isa::ALL[isa_idx]);
            let ins = extract_instructions(&norm);
            for i in &ins {
                prop_assert!(!i.opcode.starts_with('.') && !i.opcode.ends_with(':'));
                prop_assert!(!i.opcode.is_empty() && !i.opcode.contains(char::is_whitespace));
            }
            prop_assert_eq!(opcode_histogram(&ins).total as usize, ins.len());
        }

        #[test]
        fn word_count_ignores_whitespace_width(words in prop::collection::vec("[a-z#,\\[\\]0-9]{1,5}", 0..12), pad in 1usize..4) {
            let tight = words.join(" ");
            let loose = words.join(&" \t".repeat(pad));
            prop_assert_eq!(count_words(&tight), count_words(&loose));
        }
    }
}
