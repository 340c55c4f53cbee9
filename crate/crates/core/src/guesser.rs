//! Candidate generation backends and the request/response contract.
//!
//! Backends return ranked candidates for one [`GuessRequest`]. Four are
//! provided: an HTTP endpoint speaking the repo's JSON protocol (or a
//! generic text-completion API through a prompt template), a local command
//! speaking the same JSON over stdin/stdout, a ground-truth oracle and a
//! fault-injecting mutant built on the oracle.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Write as _;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asmtext::{self, classify_operand, extract_instructions, registers_in, Instruction, OperandKind};
use crate::isa::{Isa, OptLevel};
use crate::process::{split_command, wait_with_timeout};
use crate::tokenlab::{token_count, Vocab};

pub const DEFAULT_BEAM_WIDTH: u32 = 8;
pub const DEFAULT_CONTEXT_WINDOW: u32 = 32768;

#[derive(Debug, Error)]
pub enum GuessError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("context overflow: estimated {estimated} tokens, window {window}")]
    ContextOverflow { estimated: usize, window: u32 },
    #[error("template error: {0}")]
    TemplateError(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("mutation rule {0} found no site in the reference")]
    NoMutationSite(MutationRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessRequest {
    pub request_id: String,
    /// Program the request belongs to; not part of the wire format.
    #[serde(skip)]
    pub program_id: String,
    pub source_isa: Isa,
    pub target_isa: Isa,
    pub opt: OptLevel,
    pub input_asm: String,
    pub beam_width: u32,
    pub max_new_tokens: u32,
    #[serde(skip, default = "default_window")]
    pub context_window: u32,
}

fn default_window() -> u32 {
    DEFAULT_CONTEXT_WINDOW
}

impl GuessRequest {
    pub fn new(program_id: &str, source_isa: Isa, target_isa: Isa, opt: OptLevel, input_asm: String) -> Self {
        GuessRequest {
            request_id: format!("{program_id}:{source_isa}:{target_isa}:{opt}"),
            program_id: program_id.to_string(),
            source_isa,
            target_isa,
            opt,
            input_asm,
            beam_width: DEFAULT_BEAM_WIDTH,
            max_new_tokens: 16384,
            context_window: DEFAULT_CONTEXT_WINDOW,
        }
    }

    pub fn validate(&self) -> Result<(), GuessError> {
        if self.beam_width == 0 {
            return Err(GuessError::InvalidRequest("beam_width must be at least 1".into()));
        }
        if self.context_window == 0 {
            return Err(GuessError::InvalidRequest("context_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessCandidate {
    pub rank: u32,
    pub text: String,
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuessResponse {
    pub request_id: String,
    pub candidates: Vec<GuessCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetVerdict {
    pub estimated_input_tokens: usize,
    pub estimated_total: usize,
    pub fits: bool,
}

/// Input tokens plus the predicted output size must fit the context window.
pub fn estimate_budget(request: &GuessRequest, vocab: &Vocab, expansion_factor: f64) -> BudgetVerdict {
    let input = token_count(vocab, &request.input_asm);
    budget_for(input, expansion_factor, request.context_window)
}

pub fn budget_for(input_tokens: usize, expansion_factor: f64, window: u32) -> BudgetVerdict {
    let output = (input_tokens as f64 * expansion_factor).ceil().max(0.0) as usize;
    let total = input_tokens + output;
    BudgetVerdict { estimated_input_tokens: input_tokens, estimated_total: total, fits: total <= window as usize }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn guess(&self, request: &GuessRequest) -> Result<GuessResponse, GuessError>;
}

/// Budget check, backend call and response validation.
///
/// With `override_budget` set an overflowing request is still sent.
pub fn request_guess(
    backend: &dyn Backend,
    request: &GuessRequest,
    vocab: &Vocab,
    expansion_factor: f64,
    override_budget: bool,
) -> Result<Vec<GuessCandidate>, GuessError> {
    request.validate()?;
    let verdict = estimate_budget(request, vocab, expansion_factor);
    if !verdict.fits && !override_budget {
        return Err(GuessError::ContextOverflow { estimated: verdict.estimated_total, window: request.context_window });
    }
    let response = backend.guess(request)?;
    let mut candidates = check_response(request, response)?;
    for c in &mut candidates {
        if token_count(vocab, &c.text) >= request.max_new_tokens as usize {
            c.truncated = true;
        }
    }
    Ok(candidates)
}

/// Validates ids and ranks and returns candidates sorted by rank.
pub fn check_response(request: &GuessRequest, response: GuessResponse) -> Result<Vec<GuessCandidate>, GuessError> {
    if response.request_id != request.request_id {
        return Err(GuessError::ProtocolError(format!(
            "response for '{}' does not match request '{}'",
            response.request_id, request.request_id
        )));
    }
    let mut candidates = response.candidates;
    if candidates.is_empty() {
        return Err(GuessError::ProtocolError("response has no candidates".into()));
    }
    if candidates.len() > request.beam_width as usize {
        return Err(GuessError::ProtocolError(format!(
            "{} candidates for beam width {}",
            candidates.len(),
            request.beam_width
        )));
    }
    candidates.sort_by_key(|c| c.rank);
    for (i, c) in candidates.iter().enumerate() {
        if c.rank as usize != i {
            return Err(GuessError::ProtocolError(format!("candidate ranks are not contiguous from 0 (saw {})", c.rank)));
        }
    }
    Ok(candidates)
}

pub const DEFAULT_TEMPLATE: &str =
    "Translate the following {src} assembly, compiled at {opt}, into equivalent {dst} assembly.\n<asm>\n{asm}\n</asm>\n";

const PLACEHOLDERS: [&str; 4] = ["src", "dst", "opt", "asm"];

/// Substitutes `{src}`, `{dst}`, `{opt}` and `{asm}` in one pass, so text
/// inserted for a placeholder is never rescanned.
pub fn render_prompt(request: &GuessRequest, template: &str) -> Result<String, GuessError> {
    if !template.contains("{asm}") {
        return Err(GuessError::TemplateError("template has no {asm} placeholder".into()));
    }
    let mut out = String::with_capacity(template.len() + request.input_asm.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name = after.find('}').map(|close| &after[..close]).filter(|n| PLACEHOLDERS.contains(n));
        match name {
            Some(n) => {
                match n {
                    "src" => out.push_str(request.source_isa.as_str()),
                    "dst" => out.push_str(request.target_isa.as_str()),
                    "opt" => out.push_str(request.opt.as_str()),
                    _ => out.push_str(&request.input_asm),
                }
                rest = &after[n.len() + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Recovers the assembly block from a prompt rendered with [`DEFAULT_TEMPLATE`].
pub fn extract_asm_block(prompt: &str) -> Option<&str> {
    let start = prompt.find("<asm>\n")? + "<asm>\n".len();
    let end = prompt.rfind("\n</asm>")?;
    (end >= start).then(|| &prompt[start..end])
}

/// Wire format spoken by an HTTP backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HttpProtocol {
    /// `POST <url>/v1/transpile` with the repo's request object.
    Native,
    /// `POST <url>` with `{prompt, max_tokens, n, temperature: 0}`; the
    /// candidates are read from `choices[].text`.
    Completion { template: String },
}

pub struct HttpBackend {
    base_url: String,
    protocol: HttpProtocol,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(base_url: &str, protocol: HttpProtocol, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().new_agent();
        HttpBackend { base_url: base_url.trim_end_matches('/').to_string(), protocol, agent }
    }

    fn post(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value, GuessError> {
        let mut resp = self.agent.post(url).send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => GuessError::BackendUnavailable(format!("{url} answered HTTP {code}")),
            other => GuessError::BackendUnavailable(format!("{url}: {other}")),
        })?;
        resp.body_mut().read_json().map_err(|e| GuessError::ProtocolError(format!("{url}: {e}")))
    }
}

#[derive(Deserialize)]
struct CompletionChoice {
    #[serde(default)]
    index: Option<u32>,
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn guess(&self, request: &GuessRequest) -> Result<GuessResponse, GuessError> {
        match &self.protocol {
            HttpProtocol::Native => {
                let body = serde_json::to_value(request).map_err(|e| GuessError::ProtocolError(e.to_string()))?;
                let value = self.post(&format!("{}/v1/transpile", self.base_url), &body)?;
                serde_json::from_value(value).map_err(|e| GuessError::ProtocolError(e.to_string()))
            }
            HttpProtocol::Completion { template } => {
                let prompt = render_prompt(request, template)?;
                let body = serde_json::json!({
                    "prompt": prompt,
                    "max_tokens": request.max_new_tokens,
                    "n": request.beam_width,
                    "temperature": 0,
                });
                let value = self.post(&self.base_url, &body)?;
                let parsed: CompletionResponse =
                    serde_json::from_value(value).map_err(|e| GuessError::ProtocolError(e.to_string()))?;
                let candidates = parsed
                    .choices
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| GuessCandidate {
                        rank: c.index.unwrap_or(i as u32),
                        text: c.text.trim_matches('\n').to_string(),
                        score: None,
                        truncated: c.finish_reason.as_deref() == Some("length"),
                    })
                    .collect();
                Ok(GuessResponse { request_id: request.request_id.clone(), candidates })
            }
        }
    }
}

/// Runs a command per request: request JSON on stdin, response JSON on stdout.
pub struct CommandBackend {
    argv: Vec<String>,
    timeout: Duration,
}

impl CommandBackend {
    pub fn new(command: &str, timeout: Duration) -> Result<Self, GuessError> {
        let argv = split_command(command);
        if argv.is_empty() {
            return Err(GuessError::BackendUnavailable("empty backend command".into()));
        }
        Ok(CommandBackend { argv, timeout })
    }
}

impl Backend for CommandBackend {
    fn name(&self) -> &str {
        "command"
    }

    fn guess(&self, request: &GuessRequest) -> Result<GuessResponse, GuessError> {
        let unavailable = |e: std::io::Error| GuessError::BackendUnavailable(format!("{}: {e}", self.argv[0]));
        let body = serde_json::to_vec(request).map_err(|e| GuessError::ProtocolError(e.to_string()))?;
        let mut child = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(unavailable)?;
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(&body));
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            std::io::Read::read_to_end(&mut stdout, &mut buf).map(|_| buf)
        });
        let (status, timed_out) = wait_with_timeout(&mut child, Some(self.timeout)).map_err(unavailable)?;
        let _ = writer.join();
        let out = reader.join().map_err(|_| GuessError::ProtocolError("reader thread panicked".into()))?.map_err(unavailable)?;
        if timed_out {
            return Err(GuessError::BackendUnavailable(format!("{} timed out after {:?}", self.argv[0], self.timeout)));
        }
        match status {
            Some(s) if s.success() => {}
            other => return Err(GuessError::BackendUnavailable(format!("{} exited with {:?}", self.argv[0], other))),
        }
        serde_json::from_slice(&out).map_err(|e| GuessError::ProtocolError(format!("malformed response: {e}")))
    }
}

/// Answers every request with the reference target assembly.
pub struct OracleBackend {
    references: HashMap<String, String>,
}

impl OracleBackend {
    /// `references` maps program id to normalized target assembly.
    pub fn new(references: HashMap<String, String>) -> Self {
        OracleBackend { references }
    }

    fn reference(&self, request: &GuessRequest) -> Result<&str, GuessError> {
        self.references
            .get(&request.program_id)
            .map(String::as_str)
            .ok_or_else(|| GuessError::BackendUnavailable(format!("no reference for {}", request.program_id)))
    }
}

impl Backend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn guess(&self, request: &GuessRequest) -> Result<GuessResponse, GuessError> {
        let text = self.reference(request)?.to_string();
        Ok(GuessResponse {
            request_id: request.request_id.clone(),
            candidates: vec![GuessCandidate { rank: 0, text, score: Some(0.0), truncated: false }],
        })
    }
}

/// The oracle with one semantic mutation applied to its answer.
pub struct MutantBackend {
    oracle: OracleBackend,
    rule: MutationRule,
}

impl MutantBackend {
    pub fn new(references: HashMap<String, String>, rule: MutationRule) -> Self {
        MutantBackend { oracle: OracleBackend::new(references), rule }
    }
}

impl Backend for MutantBackend {
    fn name(&self) -> &str {
        "mutant"
    }

    fn guess(&self, request: &GuessRequest) -> Result<GuessResponse, GuessError> {
        let reference = self.oracle.reference(request)?;
        let (text, _) = apply_mutation(self.rule, reference, request.target_isa).ok_or(GuessError::NoMutationSite(self.rule))?;
        Ok(GuessResponse {
            request_id: request.request_id.clone(),
            candidates: vec![GuessCandidate { rank: 0, text, score: None, truncated: false }],
        })
    }
}

/// Semantic fault patterns: a wrong immediate, an off-by-one array index
/// adjustment, a clobbered destination register, a swapped opcode and a
/// shifted memory offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationRule {
    ImmediateValue,
    IndexOffset,
    RegisterOverwrite,
    InstructionSequence,
    MemoryOffset,
}

impl MutationRule {
    pub const ALL: [MutationRule; 5] = [
        MutationRule::ImmediateValue,
        MutationRule::IndexOffset,
        MutationRule::RegisterOverwrite,
        MutationRule::InstructionSequence,
        MutationRule::MemoryOffset,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationRule::ImmediateValue => "immediate_value",
            MutationRule::IndexOffset => "index_offset",
            MutationRule::RegisterOverwrite => "register_overwrite",
            MutationRule::InstructionSequence => "instruction_sequence",
            MutationRule::MemoryOffset => "memory_offset",
        }
    }
}

impl fmt::Display for MutationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MutationRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        MutationRule::ALL
            .into_iter()
            .find(|r| r.as_str() == norm)
            .ok_or_else(|| format!("unknown mutation rule '{s}'"))
    }
}

/// Where a mutation landed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutation {
    pub rule: MutationRule,
    /// 1-based line in the normalized text.
    pub line_no: usize,
    pub before: String,
    pub after: String,
}

/// Applies `rule` at its first eligible site in normalized assembly.
pub fn apply_mutation(rule: MutationRule, normalized: &str, isa: Isa) -> Option<(String, Mutation)> {
    let instrs = extract_instructions(normalized);
    let (idx, mutated) = match rule {
        MutationRule::ImmediateValue => find_map(&instrs, |i, _| mutate_immediate(i, isa)),
        MutationRule::IndexOffset => find_map(&instrs, |i, k| mutate_index_offset(&instrs, k, i, isa)),
        MutationRule::RegisterOverwrite => find_map(&instrs, |i, _| mutate_register(i, isa)),
        MutationRule::InstructionSequence => find_map(&instrs, |i, _| mutate_opcode(i, isa)),
        MutationRule::MemoryOffset => find_map(&instrs, |i, _| mutate_memory(i, isa)),
    }?;
    let original = &instrs[idx];
    let after = mutated.render();
    let mut lines: Vec<&str> = normalized.split('\n').collect();
    let before = lines[original.line_no - 1].to_string();
    lines[original.line_no - 1] = &after;
    let text = lines.join("\n");
    Some((text, Mutation { rule, line_no: original.line_no, before, after }))
}

fn find_map<F>(instrs: &[Instruction], mut f: F) -> Option<(usize, Instruction)>
where
    F: FnMut(&Instruction, usize) -> Option<Instruction>,
{
    instrs.iter().enumerate().find_map(|(k, i)| f(i, k).map(|m| (k, m)))
}

/// Stack, frame, link and program-counter registers.
fn is_frame_reg(reg: &str, isa: Isa) -> bool {
    match isa {
        Isa::X86_64 => matches!(reg, "%rsp" | "%esp" | "%rbp" | "%ebp" | "%rip"),
        Isa::Armv8 => matches!(reg, "sp" | "wsp" | "x29" | "fp" | "x30" | "lr"),
        Isa::Armv5 => matches!(reg, "sp" | "fp" | "lr" | "pc" | "r11" | "r13" | "r14" | "r15"),
        Isa::Riscv64 => matches!(reg, "sp" | "s0" | "fp" | "ra" | "x1" | "x2" | "x8"),
    }
}

/// Canonical name shared by all widths of one architectural register.
fn reg_family(reg: &str, isa: Isa) -> String {
    match isa {
        Isa::Armv8 if reg.len() > 1 && (reg.starts_with('w') || reg.starts_with('x')) && reg[1..].chars().all(|c| c.is_ascii_digit()) => {
            format!("r{}", &reg[1..])
        }
        Isa::X86_64 => {
            let r = reg.trim_start_matches('%');
            if let Some(n) = r.strip_prefix('r').filter(|n| n.starts_with(|c: char| c.is_ascii_digit())) {
                return n.trim_end_matches(['d', 'w', 'b']).to_string();
            }
            let core = r.strip_prefix('r').or_else(|| r.strip_prefix('e')).unwrap_or(r);
            match core {
                "al" | "ax" => "ax".into(),
                "bl" | "bx" => "bx".into(),
                "cl" | "cx" => "cx".into(),
                "dl" | "dx" => "dx".into(),
                "sil" | "si" => "si".into(),
                "dil" | "di" => "di".into(),
                other => other.to_string(),
            }
        }
        _ => reg.to_string(),
    }
}

fn is_control(opcode: &str, isa: Isa) -> bool {
    let op = opcode.to_ascii_lowercase();
    match isa {
        Isa::X86_64 => op.starts_with('j') || op.starts_with("call") || op.starts_with("ret") || op.starts_with("push") || op.starts_with("pop"),
        Isa::Armv8 | Isa::Armv5 => {
            op == "b" || op.starts_with("b.") || op.starts_with("bl") || op == "bx" || op.starts_with("cb") || op.starts_with("tb") || op == "ret" || op.starts_with("push") || op.starts_with("pop")
        }
        Isa::Riscv64 => op.starts_with('b') || op.starts_with('j') || op == "call" || op == "ret" || op == "tail",
    }
}

fn uses_frame_outside_memory(instr: &Instruction, isa: Isa) -> bool {
    instr
        .operands
        .iter()
        .filter(|o| classify_operand(o, isa) != OperandKind::Memory)
        .flat_map(|o| registers_in(o, isa))
        .any(|r| is_frame_reg(&r, isa))
}

/// Index of the destination operand, if the instruction writes a register.
fn dest_index(instr: &Instruction, isa: Isa) -> Option<usize> {
    if instr.operands.is_empty() || is_control(&instr.opcode, isa) || is_store(&instr.opcode, isa) || is_compare(&instr.opcode) {
        return None;
    }
    let idx = match isa {
        Isa::X86_64 => instr.operands.len() - 1,
        _ => 0,
    };
    (classify_operand(&instr.operands[idx], isa) == OperandKind::Register).then_some(idx)
}

fn is_store(opcode: &str, isa: Isa) -> bool {
    let op = opcode.to_ascii_lowercase();
    match isa {
        Isa::Armv8 | Isa::Armv5 => op.starts_with("st"),
        Isa::Riscv64 => matches!(op.as_str(), "sb" | "sh" | "sw" | "sd" | "fsw" | "fsd"),
        Isa::X86_64 => false,
    }
}

fn is_compare(opcode: &str) -> bool {
    let op = opcode.to_ascii_lowercase();
    op.starts_with("cmp") || op.starts_with("cmn") || op.starts_with("tst") || op.starts_with("test") || op.starts_with("teq")
}

fn immediate_value(op: &str, isa: Isa) -> Option<i64> {
    if classify_operand(op, isa) != OperandKind::Immediate {
        return None;
    }
    asmtext::parse_int(op.strip_prefix(asmtext::immediate_prefix(isa)).unwrap_or(op))
}

fn bump(v: i64) -> i64 {
    if v >= 2 {
        v - 1
    } else {
        v + 1
    }
}

fn with_immediate(instr: &Instruction, pos: usize, value: i64, isa: Isa) -> Instruction {
    let mut m = instr.clone();
    m.operands[pos] = format!("{}{}", asmtext::immediate_prefix(isa), value);
    m
}

fn first_immediate(instr: &Instruction, isa: Isa) -> Option<(usize, i64)> {
    instr.operands.iter().enumerate().find_map(|(k, o)| immediate_value(o, isa).map(|v| (k, v)))
}

fn mutate_immediate(instr: &Instruction, isa: Isa) -> Option<Instruction> {
    if is_control(&instr.opcode, isa) || uses_frame_outside_memory(instr, isa) {
        return None;
    }
    let (pos, v) = first_immediate(instr, isa)?;
    Some(with_immediate(instr, pos, bump(v), isa))
}

fn is_add_sub(opcode: &str, isa: Isa) -> bool {
    let op = opcode.to_ascii_lowercase();
    match isa {
        Isa::X86_64 => ["add", "sub"].iter().any(|p| op.starts_with(p)),
        Isa::Armv8 | Isa::Armv5 => matches!(op.as_str(), "add" | "sub" | "adds" | "subs"),
        Isa::Riscv64 => matches!(op.as_str(), "addi" | "addiw"),
    }
}

/// An add/sub of a constant whose result reaches a memory operand's
/// address within the next few instructions.
fn mutate_index_offset(instrs: &[Instruction], k: usize, instr: &Instruction, isa: Isa) -> Option<Instruction> {
    const WINDOW: usize = 6;
    if !is_add_sub(&instr.opcode, isa) || uses_frame_outside_memory(instr, isa) {
        return None;
    }
    let (pos, v) = first_immediate(instr, isa)?;
    let dest = dest_index(instr, isa)?;
    let mut tainted = BTreeSet::from([reg_family(&instr.operands[dest], isa)]);
    for next in instrs.iter().skip(k + 1).take(WINDOW) {
        if is_control(&next.opcode, isa) {
            break;
        }
        let mut reads_taint = false;
        for (j, op) in next.operands.iter().enumerate() {
            let regs = registers_in(op, isa);
            let hit = regs.iter().any(|r| tainted.contains(&reg_family(r, isa)));
            if classify_operand(op, isa) == OperandKind::Memory && hit {
                return Some(with_immediate(instr, pos, bump(v), isa));
            }
            if Some(j) != dest_index(next, isa) && hit {
                reads_taint = true;
            }
        }
        if let Some(d) = dest_index(next, isa) {
            let fam = reg_family(&next.operands[d], isa);
            let src_hit = next.operands.iter().enumerate().any(|(j, o)| j != d && registers_in(o, isa).iter().any(|r| tainted.contains(&reg_family(r, isa))));
            if reads_taint || src_hit {
                tainted.insert(fam);
            } else {
                tainted.remove(&fam);
            }
        }
        if tainted.is_empty() {
            break;
        }
    }
    None
}

fn reg_class(reg: &str, isa: Isa) -> char {
    match isa {
        Isa::Armv8 => reg.chars().next().unwrap_or(' '),
        Isa::X86_64 => {
            let r = reg.trim_start_matches('%');
            if r.starts_with('r') && !r.ends_with('d') && !r.ends_with('b') && !r.ends_with('w') {
                'q'
            } else if r.starts_with('e') || r.ends_with('d') {
                'l'
            } else {
                'o'
            }
        }
        _ => 'r',
    }
}

/// Redirects an arithmetic result into one of its own source registers,
/// clobbering that source and leaving the real destination stale.
fn mutate_register(instr: &Instruction, isa: Isa) -> Option<Instruction> {
    let op = instr.opcode.to_ascii_lowercase();
    if op.starts_with("mov") || op.starts_with("lea") || op.starts_with("ld") || op.starts_with("sxt") || op.starts_with("uxt") {
        return None;
    }
    let d = dest_index(instr, isa)?;
    let dest = &instr.operands[d];
    let kinds: Vec<OperandKind> = instr.operands.iter().map(|o| classify_operand(o, isa)).collect();
    let needed = if isa == Isa::X86_64 { 2 } else { 3 };
    if instr.operands.len() < needed || kinds.contains(&OperandKind::Memory) || is_frame_reg(dest, isa) {
        return None;
    }
    let source = instr.operands.iter().enumerate().find(|(j, o)| {
        *j != d
            && kinds[*j] == OperandKind::Register
            && !is_frame_reg(o, isa)
            && reg_family(o, isa) != reg_family(dest, isa)
            && reg_class(o, isa) == reg_class(dest, isa)
    })?;
    let mut m = instr.clone();
    m.operands[d] = source.1.clone();
    Some(m)
}

fn swapped_opcode(opcode: &str, isa: Isa) -> Option<String> {
    let pairs: &[(&str, &str)] = match isa {
        Isa::X86_64 => &[("addl", "subl"), ("addq", "subq"), ("subl", "addl"), ("subq", "addq"), ("imull", "addl"), ("xorl", "orl"), ("andl", "orl")],
        Isa::Armv8 | Isa::Armv5 => &[("add", "sub"), ("sub", "add"), ("mul", "add"), ("eor", "orr"), ("and", "orr"), ("orr", "eor"), ("lsl", "lsr")],
        Isa::Riscv64 => &[("add", "sub"), ("sub", "add"), ("addw", "subw"), ("subw", "addw"), ("mul", "add"), ("mulw", "addw"), ("xor", "or"), ("and", "or")],
    };
    pairs.iter().find(|(from, _)| *from == opcode).map(|(_, to)| to.to_string())
}

/// Replaces an arithmetic opcode with a different operation.
fn mutate_opcode(instr: &Instruction, isa: Isa) -> Option<Instruction> {
    let to = swapped_opcode(&instr.opcode, isa)?;
    if uses_frame_outside_memory(instr, isa) {
        return None;
    }
    let plain = instr.operands.iter().all(|o| matches!(classify_operand(o, isa), OperandKind::Register | OperandKind::Immediate));
    if !plain {
        return None;
    }
    let mut m = instr.clone();
    m.opcode = to;
    Some(m)
}

fn is_load(instr: &Instruction, isa: Isa) -> bool {
    let op = instr.opcode.to_ascii_lowercase();
    match isa {
        Isa::Armv8 | Isa::Armv5 => (op.starts_with("ldr") || op.starts_with("ldur")) && !op.starts_with("ldrex"),
        Isa::Riscv64 => matches!(op.as_str(), "lb" | "lh" | "lw" | "ld" | "lbu" | "lhu" | "lwu"),
        Isa::X86_64 => {
            op.starts_with("mov")
                && instr.operands.len() == 2
                && classify_operand(&instr.operands[0], isa) == OperandKind::Memory
                && classify_operand(&instr.operands[1], isa) == OperandKind::Register
        }
    }
}

fn access_width(instr: &Instruction, isa: Isa) -> i64 {
    let op = instr.opcode.to_ascii_lowercase();
    match isa {
        Isa::Armv8 if instr.operands.first().is_some_and(|d| d.starts_with('x')) => 8,
        Isa::Riscv64 if op == "ld" => 8,
        Isa::X86_64 if op.ends_with('q') => 8,
        _ => 4,
    }
}

/// Rewrites the displacement of a memory operand, returning None when the
/// operand has no plain displacement.
fn shift_displacement(op: &str, isa: Isa, width: i64) -> Option<String> {
    let shifted = |off: i64| if off >= width || off < 0 { off - width } else { off + width };
    match isa {
        Isa::Armv8 | Isa::Armv5 => {
            let inner = op.strip_prefix('[')?.strip_suffix(']')?;
            let (base, disp) = inner.split_once(',')?;
            let value = asmtext::parse_int(disp.trim().strip_prefix('#')?)?;
            Some(format!("[{base}, #{}]", shifted(value)))
        }
        Isa::X86_64 | Isa::Riscv64 => {
            let open = op.find('(')?;
            if op.contains("%rip") {
                return None;
            }
            let value = if open == 0 { 0 } else { asmtext::parse_int(&op[..open])? };
            Some(format!("{}{}", shifted(value), &op[open..]))
        }
    }
}

/// Loads from a neighbouring slot instead of the intended one.
fn mutate_memory(instr: &Instruction, isa: Isa) -> Option<Instruction> {
    if !is_load(instr, isa) {
        return None;
    }
    let d = dest_index(instr, isa)?;
    if is_frame_reg(&instr.operands[d], isa) || instr.operands.len() != 2 {
        return None;
    }
    let width = access_width(instr, isa);
    let pos = instr.operands.iter().position(|o| classify_operand(o, isa) == OperandKind::Memory)?;
    let mut m = instr.clone();
    m.operands[pos] = shift_displacement(&instr.operands[pos], isa, width)?;
    Some(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(asm: &str) -> GuessRequest {
        GuessRequest::new("p1", Isa::X86_64, Isa::Armv8, OptLevel::O0, asm.into())
    }

    #[test]
    fn budget_arithmetic() {
        let v = budget_for(100, 1.0, 32768);
        assert!(v.fits);
        assert_eq!(v.estimated_total, 200);
        let v = budget_for(20000, 1.0, 32768);
        assert_eq!(v.estimated_total, 40000);
        assert!(!v.fits);
        assert_eq!(budget_for(3, 0.5, 10).estimated_total, 5);
        assert!(budget_for(5, 1.0, 10).fits);
    }

    #[test]
    fn budget_is_monotone_in_input() {
        let vocab = Vocab::new("v", ["mov", " "]);
        let mut last = 0;
        for n in 0..50 {
            let r = req(&"mov x0 ".repeat(n));
            let v = estimate_budget(&r, &vocab, 1.3);
            assert!(v.estimated_total >= last);
            last = v.estimated_total;
        }
    }

    #[test]
    fn overflow_is_refused_unless_overridden() {
        let vocab = Vocab::new("v", ["a"]);
        let mut r = req("aaaa");
        r.context_window = 5;
        let oracle = OracleBackend::new(HashMap::from([("p1".to_string(), "ret".to_string())]));
        assert!(matches!(request_guess(&oracle, &r, &vocab, 1.0, false), Err(GuessError::ContextOverflow { estimated: 8, window: 5 })));
        let c = request_guess(&oracle, &r, &vocab, 1.0, true).unwrap();
        assert_eq!(c[0].text, "ret");
    }

    #[test]
    fn oracle_returns_reference() {
        let oracle = OracleBackend::new(HashMap::from([("p1".to_string(), "mov w0, #1\nret".to_string())]));
        let c = request_guess(&oracle, &req("movl $1, %eax"), &Vocab::new("v", ["x"]), 1.0, false).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].rank, 0);
        assert_eq!(c[0].text, "mov w0, #1\nret");
        let mut other = req("x");
        other.program_id = "nope".into();
        assert!(matches!(oracle.guess(&other), Err(GuessError::BackendUnavailable(_))));
    }

    #[test]
    fn response_checks() {
        let r = {
            let mut r = req("x");
            r.beam_width = 3;
            r
        };
        let cand = |rank| GuessCandidate { rank, text: format!("c{rank}"), score: None, truncated: false };
        let ok = GuessResponse { request_id: r.request_id.clone(), candidates: vec![cand(2), cand(0), cand(1)] };
        let c = check_response(&r, ok).unwrap();
        assert_eq!(c.iter().map(|c| c.rank).collect::<Vec<_>>(), vec![0, 1, 2]);
        let gap = GuessResponse { request_id: r.request_id.clone(), candidates: vec![cand(0), cand(2)] };
        assert!(matches!(check_response(&r, gap), Err(GuessError::ProtocolError(_))));
        let wrong = GuessResponse { request_id: "other".into(), candidates: vec![cand(0)] };
        assert!(matches!(check_response(&r, wrong), Err(GuessError::ProtocolError(_))));
        let many = GuessResponse { request_id: r.request_id.clone(), candidates: (0..4).map(cand).collect() };
        assert!(matches!(check_response(&r, many), Err(GuessError::ProtocolError(_))));
    }

    #[test]
    fn truncation_flag_from_token_budget() {
        let oracle = OracleBackend::new(HashMap::from([("p1".to_string(), "abcdef".to_string())]));
        let mut r = req("a");
        r.max_new_tokens = 6;
        let c = request_guess(&oracle, &r, &Vocab::new("v", ["q"]), 1.0, false).unwrap();
        assert!(c[0].truncated);
        r.max_new_tokens = 7;
        let c = request_guess(&oracle, &r, &Vocab::new("v", ["q"]), 1.0, false).unwrap();
        assert!(!c[0].truncated);
    }

    #[test]
    fn prompt_rendering() {
        let r = req("movl $1, %eax\nret");
        assert_eq!(render_prompt(&r, "X:{src}→{dst}\n{asm}").unwrap(), "X:x86_64→armv8\nmovl $1, %eax\nret");
        assert!(matches!(render_prompt(&r, "X:{src}→{dst}"), Err(GuessError::TemplateError(_))));
        // inserted text is not rescanned
        let tricky = req("{src}");
        assert_eq!(render_prompt(&tricky, "{asm}|{other}").unwrap(), "{src}|{other}");
        let p = render_prompt(&r, DEFAULT_TEMPLATE).unwrap();
        assert_eq!(extract_asm_block(&p), Some(r.input_asm.as_str()));
        let empty = req("");
        assert_eq!(extract_asm_block(&render_prompt(&empty, DEFAULT_TEMPLATE).unwrap()), Some(""));
    }

    #[test]
    fn wire_format() {
        let r = req("nop");
        let v = serde_json::to_value(&r).unwrap();
        let keys: BTreeSet<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, BTreeSet::from(["request_id", "source_isa", "target_isa", "opt", "input_asm", "beam_width", "max_new_tokens"]));
        assert_eq!(v["opt"], "O0");
        let resp: GuessResponse = serde_json::from_str(r#"{"request_id":"x","candidates":[{"rank":0,"text":"t"}]}"#).unwrap();
        assert_eq!(resp.candidates[0].score, None);
        assert!(!resp.candidates[0].truncated);
    }

    #[test]
    fn command_backend_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("backend.sh");
        std::fs::write(
            &script,
            "line=$(cat)\nid=$(printf '%s' \"$line\" | sed 's/.*\"request_id\":\"\\([^\"]*\\)\".*/\\1/')\nprintf '{\"request_id\":\"%s\",\"candidates\":[{\"rank\":1,\"text\":\"b\"},{\"rank\":0,\"text\":\"a\"}]}' \"$id\"\n",
        )
        .unwrap();
        let b = CommandBackend::new(&format!("sh {}", script.display()), Duration::from_secs(10)).unwrap();
        let mut r = req("nop");
        r.beam_width = 2;
        let c = request_guess(&b, &r, &Vocab::new("v", ["a"]), 1.0, false).unwrap();
        assert_eq!(c[0].text, "a");
        assert_eq!(c[1].rank, 1);

        let failing = CommandBackend::new("sh -c 'exit 4'", Duration::from_secs(10)).unwrap();
        assert!(matches!(failing.guess(&r), Err(GuessError::BackendUnavailable(_))));
        let garbage = CommandBackend::new("echo nope", Duration::from_secs(10)).unwrap();
        assert!(matches!(garbage.guess(&r), Err(GuessError::ProtocolError(_))));
        let missing = CommandBackend::new("/nonexistent/backend", Duration::from_secs(10)).unwrap();
        assert!(matches!(missing.guess(&r), Err(GuessError::BackendUnavailable(_))));
    }

    #[test]
    fn http_backend_unreachable() {
        let b = HttpBackend::new("http://127.0.0.1:9", HttpProtocol::Native, Duration::from_secs(2));
        assert!(matches!(b.guess(&req("nop")), Err(GuessError::BackendUnavailable(_))));
    }

    #[test]
    fn rule_names_round_trip() {
        for r in MutationRule::ALL {
            assert_eq!(r.as_str().parse::<MutationRule>().unwrap(), r);
        }
        assert_eq!("Memory-Offset".parse::<MutationRule>().unwrap(), MutationRule::MemoryOffset);
        assert!("nope".parse::<MutationRule>().is_err());
    }

    #[test]
    fn immediate_mutation_matches_table_example() {
        let (text, m) = apply_mutation(MutationRule::ImmediateValue, "f:\nasr r2, r2, #2\nbx lr", Isa::Armv5).unwrap();
        assert_eq!(text, "f:\nasr r2, r2, #1\nbx lr");
        assert_eq!(m.line_no, 2);
        assert_eq!(m.before, "asr r2, r2, #2");
        // prologue adjustments of the stack pointer are left alone
        let (text, _) = apply_mutation(MutationRule::ImmediateValue, "sub sp, sp, #16\nmov w8, #0\nadd sp, sp, #16", Isa::Armv8).unwrap();
        assert_eq!(text, "sub sp, sp, #16\nmov w8, #1\nadd sp, sp, #16");
        let (text, _) = apply_mutation(MutationRule::ImmediateValue, "movl $5, %eax", Isa::X86_64).unwrap();
        assert_eq!(text, "movl $4, %eax");
        assert!(apply_mutation(MutationRule::ImmediateValue, "ret", Isa::Armv8).is_none());
    }

    #[test]
    fn index_offset_needs_an_address_use() {
        let asm = "mov r3, #7\nsub r3, r3, #2\nldr r2, [r1, r3, lsl #2]";
        let (text, m) = apply_mutation(MutationRule::IndexOffset, asm, Isa::Armv5).unwrap();
        assert_eq!(m.after, "sub r3, r3, #1");
        assert!(text.contains("ldr r2, [r1, r3, lsl #2]"));
        let via_extend = "sub w8, w8, #1\nldr x9, [sp, #8]\nldr w8, [x9, w8, sxtw #2]";
        assert_eq!(apply_mutation(MutationRule::IndexOffset, via_extend, Isa::Armv8).unwrap().1.after, "sub w8, w8, #2");
        let through = "subs w8, w8, #1\nsxtw x8, w8\nldr w0, [x9, x8, lsl #2]";
        assert!(apply_mutation(MutationRule::IndexOffset, through, Isa::Armv8).is_some());
        assert!(apply_mutation(MutationRule::IndexOffset, "sub w8, w8, #1\nstr w8, [sp, #4]", Isa::Armv8).is_none());
        assert!(apply_mutation(MutationRule::IndexOffset, "sub sp, sp, #16\nldr w0, [sp, #4]", Isa::Armv8).is_none());
    }

    #[test]
    fn register_overwrite_redirects_destination() {
        let (_, m) = apply_mutation(MutationRule::RegisterOverwrite, "ldr w8, [sp, #4]\nadd w8, w8, w9\nstr w8, [sp]", Isa::Armv8).unwrap();
        assert_eq!(m.after, "add w9, w8, w9");
        let (_, m) = apply_mutation(MutationRule::RegisterOverwrite, "movl %edi, %eax\naddl %edx, %eax", Isa::X86_64).unwrap();
        assert_eq!(m.after, "addl %edx, %edx");
        assert!(apply_mutation(MutationRule::RegisterOverwrite, "lsl w8, w8, #2\nadd x29, sp, #16", Isa::Armv8).is_none());
    }

    #[test]
    fn opcode_swap() {
        let (_, m) = apply_mutation(MutationRule::InstructionSequence, "add x29, sp, #0\nsub r2, r2, r3", Isa::Armv5).unwrap();
        assert_eq!(m.after, "add r2, r2, r3");
    }

    #[test]
    fn memory_offset_shift() {
        let (_, m) = apply_mutation(MutationRule::MemoryOffset, "ldp x29, x30, [sp], #16\nldr w8, [sp, #12]", Isa::Armv8).unwrap();
        assert_eq!(m.after, "ldr w8, [sp, #8]");
        let (_, m) = apply_mutation(MutationRule::MemoryOffset, "ldr r2, [fp, #-404]", Isa::Armv5).unwrap();
        assert_eq!(m.after, "ldr r2, [fp, #-408]");
        let (_, m) = apply_mutation(MutationRule::MemoryOffset, "movl -20(%rbp), %eax", Isa::X86_64).unwrap();
        assert_eq!(m.after, "movl -24(%rbp), %eax");
        let (_, m) = apply_mutation(MutationRule::MemoryOffset, "ld a0, 0(sp)", Isa::Riscv64).unwrap();
        assert_eq!(m.after, "ld a0, 8(sp)");
        assert!(apply_mutation(MutationRule::MemoryOffset, "ldr x30, [sp, #8]", Isa::Armv8).is_none());
    }

    #[test]
    fn mutant_backend_reports_missing_site() {
        let refs = HashMap::from([("p1".to_string(), "ret".to_string())]);
        let b = MutantBackend::new(refs, MutationRule::MemoryOffset);
        assert!(matches!(b.guess(&req("x")), Err(GuessError::NoMutationSite(MutationRule::MemoryOffset))));
    }
}
