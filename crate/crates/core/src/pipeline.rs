//! End-to-end runs: reference self-test, guess, verify, triage, accuracy.
//!
//! Everything a run produces lives under the work directory:
//!
//! ```text
//! <work>/<program_id>/reference/outcome.json   reference self-test
//!                    /coverage/                instrumented build
//!                    /candidates.json
//!                    /0/outcome.json           rank-0 verdict
//! <work>/accuracy.txt, triage.txt, triage.jsonl, summary.json
//! ```
//!
//! A program whose `0/outcome.json` already exists is not redone, so an
//! interrupted run picks up where it stopped.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::Duration;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{BackendKind, ConfigError, PipelineConfig};
use crate::corpus::{build_pairs, Corpus, CorpusError, TranspilePair, UnitStatus};
use crate::guesser::{
    request_guess, Backend, CommandBackend, GuessCandidate, GuessError, GuessRequest, HttpBackend, HttpProtocol, MutantBackend,
    OracleBackend, DEFAULT_TEMPLATE,
};
use crate::isa::{CompileSpec, Isa};
use crate::lock::{LockError, LockFile};
use crate::process::{resolve_program, run_captured, split_command, Runner};
use crate::tokenlab::{default_extended_vocab, load_vocab, TokenlabError, Vocab};
use crate::triage::{triage_outcome, triage_report, ErrorClass, TriageError, TriagePatterns, TriageRecord};
use crate::verify::{
    accuracy_table, effective_timeout, measure_coverage, verify_candidate, verify_text, AccuracyTable, CoverageTools, GradedOutcome,
    TestBundle, VerificationOutcome, VerifyContext, VerifyError, VerifyStatus, OUTCOME_FILE,
};

pub const LOCK_FILE: &str = ".gg.lock";
const BACKEND_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("work directory busy: {0}")]
    Lock(#[from] LockError),
    #[error("cannot set up backend: {0}")]
    Backend(#[from] GuessError),
    #[error(transparent)]
    Vocab(#[from] TokenlabError),
    #[error(transparent)]
    Triage(#[from] TriageError),
    #[error("no toolchain configured for {0}")]
    NoToolchain(Isa),
    #[error("sweep needs at least one value")]
    EmptySweep,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Where a manifest program ended up; exactly one per program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TerminalState {
    Verified(VerifyStatus),
    GuessFailed,
    /// Reference failed its own tests or has no usable bundle.
    Excluded,
    /// Accepted unit without both artifacts.
    Unpaired,
    /// Rejected by the corpus filter.
    Filtered,
    /// The harness itself failed on this program.
    HarnessError,
}

impl TerminalState {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalState::Verified(s) => s.as_str(),
            TerminalState::GuessFailed => "guess_failed",
            TerminalState::Excluded => "excluded",
            TerminalState::Unpaired => "unpaired",
            TerminalState::Filtered => "filtered",
            TerminalState::HarnessError => "harness_error",
        }
    }

    /// True for states that count against the run.
    pub fn is_failure(self) -> bool {
        matches!(self, TerminalState::Verified(s) if s != VerifyStatus::Pass)
            || matches!(self, TerminalState::GuessFailed | TerminalState::HarnessError)
    }
}

impl fmt::Display for TerminalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramResult {
    pub program_id: String,
    pub state: TerminalState,
    pub detail: String,
    pub coverage_pct: Option<f64>,
    pub classes: Vec<ErrorClass>,
    /// Taken from an earlier run's outcome file.
    pub resumed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub manifest_size: usize,
    pub programs: Vec<ProgramResult>,
    pub accuracy: AccuracyTable,
    pub triage: Vec<TriageRecord>,
    pub reports: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct SummaryFile {
    manifest_size: usize,
    counts: BTreeMap<String, usize>,
    accuracy: AccuracyTable,
    mean_coverage_pct: Option<f64>,
    programs: BTreeMap<String, String>,
}

impl RunSummary {
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for p in &self.programs {
            *out.entry(p.state.as_str().to_string()).or_insert(0) += 1;
        }
        out
    }

    pub fn count(&self, state: TerminalState) -> usize {
        self.programs.iter().filter(|p| p.state == state).count()
    }

    pub fn is_complete(&self) -> bool {
        self.programs.len() == self.manifest_size
    }

    pub fn has_failures(&self) -> bool {
        self.programs.iter().any(|p| p.state.is_failure())
    }

    pub fn resumed(&self) -> usize {
        self.programs.iter().filter(|p| p.resumed).count()
    }

    /// Mean reference coverage over programs where it was measured.
    pub fn mean_coverage(&self) -> Option<f64> {
        let v: Vec<f64> = self.programs.iter().filter_map(|p| p.coverage_pct).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn render(&self) -> String {
        let mut s = format!("programs: {}\n", self.manifest_size);
        for (state, n) in self.counts() {
            let _ = writeln!(s, "  {state:<18}{n:>6}");
        }
        if let Some(c) = self.mean_coverage() {
            let _ = writeln!(s, "mean reference coverage: {c:.2}%");
        }
        s.push('\n');
        s.push_str(&self.accuracy.render());
        if !self.reports.is_empty() {
            s.push_str("\nreports:\n");
            for r in &self.reports {
                let _ = writeln!(s, "  {}", r.display());
            }
        }
        s
    }

    fn to_file(&self) -> SummaryFile {
        SummaryFile {
            manifest_size: self.manifest_size,
            counts: self.counts(),
            accuracy: self.accuracy.clone(),
            mean_coverage_pct: self.mean_coverage(),
            programs: self.programs.iter().map(|p| (p.program_id.clone(), p.state.as_str().to_string())).collect(),
        }
    }
}

/// Backend named by the config; `references` maps program id to target assembly.
pub fn build_backend(cfg: &PipelineConfig, references: HashMap<String, String>) -> Result<Box<dyn Backend>, PipelineError> {
    Ok(match cfg.backend {
        BackendKind::Oracle => Box::new(OracleBackend::new(references)),
        BackendKind::Mutant => Box::new(MutantBackend::new(references, cfg.mutation)),
        BackendKind::Command => {
            let cmd = cfg.backend_command.as_deref().ok_or_else(|| GuessError::BackendUnavailable("backend.command is not set".into()))?;
            Box::new(CommandBackend::new(cmd, BACKEND_TIMEOUT)?)
        }
        BackendKind::Http => {
            let url = cfg.backend_url.as_deref().ok_or_else(|| GuessError::BackendUnavailable("backend.url is not set".into()))?;
            let protocol = if cfg.backend_protocol == "completion" {
                let template = match &cfg.backend_template {
                    Some(p) => fs::read_to_string(p).map_err(|e| GuessError::TemplateError(format!("{}: {e}", p.display())))?,
                    None => DEFAULT_TEMPLATE.to_string(),
                };
                HttpProtocol::Completion { template }
            } else {
                HttpProtocol::Native
            };
            Box::new(HttpBackend::new(url, protocol, BACKEND_TIMEOUT))
        }
    })
}

fn budget_vocab(cfg: &PipelineConfig) -> Result<Vocab, PipelineError> {
    Ok(match &cfg.vocab {
        Some(p) => load_vocab(p)?,
        None => default_extended_vocab(&[cfg.source_isa, cfg.target_isa]),
    })
}

fn verify_context(cfg: &PipelineConfig, spec: &CompileSpec) -> Result<VerifyContext, PipelineError> {
    let tc = cfg.toolchain(spec.isa).ok_or(PipelineError::NoToolchain(spec.isa))?.clone();
    let mut ctx = VerifyContext::new(spec.clone(), tc, cfg.runner(spec.isa), Duration::from_secs_f64(cfg.timeout_s));
    ctx.runtime_dir = runtime_dir(cfg);
    Ok(ctx)
}

/// Absolute, since makefile bundles build from inside their own directory.
fn runtime_dir(cfg: &PipelineConfig) -> Option<PathBuf> {
    cfg.runtime_dir.as_ref().map(|d| std::path::absolute(d).unwrap_or_else(|_| d.clone()))
}

fn pool(n: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| PipelineError::Io(io::Error::other(e)))
}

enum Stage {
    Done(ProgramResult),
    /// Reference passed; `runtime_s` and coverage carried to the candidate.
    Ready { bundle: Box<TestBundle>, runtime_s: Option<f64>, coverage_pct: Option<f64> },
}

fn done(id: &str, state: TerminalState, detail: impl Into<String>) -> Stage {
    Stage::Done(ProgramResult { program_id: id.to_string(), state, detail: detail.into(), coverage_pct: None, classes: Vec::new(), resumed: false })
}

fn outcome_result(o: &VerificationOutcome, resumed: bool) -> ProgramResult {
    let detail = match o.status {
        VerifyStatus::Pass => String::new(),
        _ => o.build_log.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or_default().to_string(),
    };
    ProgramResult {
        program_id: o.program_id.clone(),
        state: TerminalState::Verified(o.status),
        detail,
        coverage_pct: o.coverage_pct,
        classes: Vec::new(),
        resumed,
    }
}

/// Reference self-test plus coverage gate for one pair.
fn prepare(pair: &TranspilePair, cfg: &PipelineConfig, ctx: &VerifyContext, work: &Path) -> Stage {
    let id = pair.program_id();
    let dir = work.join(id);
    if let Ok(o) = VerificationOutcome::load(&dir.join("0").join(OUTCOME_FILE)) {
        return Stage::Done(outcome_result(&o, true));
    }
    let bundle = match TestBundle::load(&pair.test_bundle_path) {
        Ok(b) => b,
        Err(e) => return done(id, TerminalState::Excluded, e.to_string()),
    };
    let ref_path = dir.join("reference").join(OUTCOME_FILE);
    let reference = match VerificationOutcome::load(&ref_path) {
        Ok(o) => o,
        Err(_) => {
            let mut o = match verify_text(id, 0, &pair.target_reference.normalized_text, &bundle, ctx, &dir.join("reference")) {
                Ok(o) => o,
                Err(e) => return done(id, TerminalState::HarnessError, e.to_string()),
            };
            if cfg.coverage && o.status == VerifyStatus::Pass {
                let tools = CoverageTools {
                    cc: cfg.coverage_cc.clone(),
                    gcov: cfg.coverage_tool.clone(),
                    runtime_dir: ctx.runtime_dir.clone(),
                    timeout: ctx.timeout,
                };
                let source = pair.test_bundle_path.parent().map(|p| p.join("source.c")).unwrap_or_default();
                match measure_coverage(&bundle, &source, &tools, &dir.join("coverage")) {
                    Ok(c) => o.coverage_pct = Some(c),
                    Err(e) => info!("{id}: {e}"),
                }
                if let Err(e) = o.save(&ref_path) {
                    return done(id, TerminalState::HarnessError, e.to_string());
                }
            }
            o
        }
    };
    if reference.status != VerifyStatus::Pass {
        warn!("{id}: reference fails its own tests ({}), excluded", reference.status);
        return Stage::Done(ProgramResult {
            program_id: id.to_string(),
            state: TerminalState::Excluded,
            detail: format!("reference self-test: {}", reference.status),
            coverage_pct: None,
            classes: Vec::new(),
            resumed: false,
        });
    }
    Stage::Ready { bundle: Box::new(bundle), runtime_s: reference.runtime_s, coverage_pct: reference.coverage_pct }
}

fn save_candidates(path: &Path, candidates: &[GuessCandidate]) -> io::Result<()> {
    fs::write(path, serde_json::to_string_pretty(candidates).expect("candidates serialize"))
}

fn load_candidates(path: &Path) -> Vec<GuessCandidate> {
    fs::read_to_string(path).ok().and_then(|t| serde_json::from_str(&t).ok()).unwrap_or_default()
}

/// Runs the whole pipeline with the backend named in `cfg`.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &Path) -> Result<RunSummary, PipelineError> {
    run_pipeline_with(cfg, manifest, None)
}

/// Like [`run_pipeline`], with an explicit backend instead of the configured one.
pub fn run_pipeline_with(cfg: &PipelineConfig, manifest: &Path, backend: Option<&dyn Backend>) -> Result<RunSummary, PipelineError> {
    let corpus = Corpus::open(manifest)?;
    let src_spec = CompileSpec::new(cfg.source_isa, cfg.opt);
    let dst_spec = CompileSpec::new(cfg.target_isa, cfg.opt);
    let pairing = build_pairs(&corpus, &src_spec, &dst_spec)?;
    let work = cfg.workdir.clone();
    fs::create_dir_all(&work)?;
    let _lock = LockFile::try_acquire(&work.join(LOCK_FILE))?;

    let owned;
    let backend: &dyn Backend = match backend {
        Some(b) => b,
        None => {
            let refs = pairing.pairs.iter().map(|p| (p.program_id().to_string(), p.target_reference.normalized_text.clone())).collect();
            owned = build_backend(cfg, refs)?;
            owned.as_ref()
        }
    };
    let vocab = budget_vocab(cfg)?;
    let patterns = TriagePatterns::with_overrides(&cfg.triage_patterns)?;
    let ctx = verify_context(cfg, &dst_spec)?;
    info!("{} pairs, backend {}", pairing.pairs.len(), backend.name());

    let verify_pool = pool(cfg.pool_verify)?;
    let guess_pool = pool(cfg.pool_guess)?;

    let stages: Vec<Stage> = verify_pool.install(|| pairing.pairs.par_iter().map(|p| prepare(p, cfg, &ctx, &work)).collect());

    // Guess for every pair that still needs a verdict.
    let guessed: Vec<Option<Result<Vec<GuessCandidate>, GuessError>>> = guess_pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .zip(stages.par_iter())
            .map(|(pair, stage)| {
                if !matches!(stage, Stage::Ready { .. }) {
                    return None;
                }
                let mut req = GuessRequest::new(pair.program_id(), cfg.source_isa, cfg.target_isa, cfg.opt, pair.source.normalized_text.clone());
                req.beam_width = cfg.beam_width;
                req.context_window = u32::try_from(cfg.context_window).unwrap_or(u32::MAX);
                req.max_new_tokens = u32::try_from(cfg.max_new_tokens).unwrap_or(u32::MAX);
                Some(request_guess(backend, &req, &vocab, cfg.expansion_factor(cfg.target_isa), false))
            })
            .collect()
    });

    let results: Vec<ProgramResult> = verify_pool.install(|| {
        pairing
            .pairs
            .par_iter()
            .zip(stages.into_par_iter())
            .zip(guessed.into_par_iter())
            .map(|((pair, stage), guess)| {
                let (bundle, runtime_s, coverage_pct) = match stage {
                    Stage::Done(r) => return r,
                    Stage::Ready { bundle, runtime_s, coverage_pct } => (bundle, runtime_s, coverage_pct),
                };
                let id = pair.program_id();
                let dir = work.join(id);
                let fail = |state, detail: String| ProgramResult {
                    program_id: id.to_string(),
                    state,
                    detail,
                    coverage_pct,
                    classes: Vec::new(),
                    resumed: false,
                };
                let outcome = match guess.expect("guessed for every ready pair") {
                    Ok(candidates) => {
                        if let Err(e) = save_candidates(&dir.join("candidates.json"), &candidates) {
                            return fail(TerminalState::HarnessError, e.to_string());
                        }
                        let mut c = ctx.clone();
                        c.timeout = effective_timeout(ctx.timeout, runtime_s);
                        verify_candidate(id, &candidates, &bundle, &c, &work)
                    }
                    Err(GuessError::ContextOverflow { estimated, window }) => {
                        let note = format!("estimated {estimated} tokens exceed the {window}-token window\n");
                        let o = VerificationOutcome::context_overflow(id, &ctx.runner, &note);
                        fs::create_dir_all(dir.join("0")).map_err(VerifyError::from).and_then(|_| o.save(&dir.join("0").join(OUTCOME_FILE))).map(|_| o)
                    }
                    Err(e) => {
                        let _ = fs::write(dir.join("guess_error.txt"), format!("{e}\n"));
                        warn!("{id}: {e}");
                        return fail(TerminalState::GuessFailed, e.to_string());
                    }
                };
                match outcome {
                    Ok(mut o) => {
                        if coverage_pct.is_some() {
                            o.coverage_pct = coverage_pct;
                            if let Err(e) = o.save(&dir.join("0").join(OUTCOME_FILE)) {
                                return fail(TerminalState::HarnessError, e.to_string());
                            }
                        }
                        outcome_result(&o, false)
                    }
                    Err(e) => fail(TerminalState::HarnessError, e.to_string()),
                }
            })
            .collect()
    });

    let mut programs: Vec<ProgramResult> = Vec::with_capacity(corpus.records.len());
    let mut by_id: HashMap<String, ProgramResult> = results.into_iter().map(|r| (r.program_id.clone(), r)).collect();
    let excluded: HashMap<&str, &str> = pairing.excluded.iter().map(|(id, why)| (id.as_str(), why.as_str())).collect();
    for rec in &corpus.records {
        let r = if let Some(r) = by_id.remove(&rec.id) {
            r
        } else {
            let state = if rec.status != UnitStatus::Accepted { TerminalState::Filtered } else { TerminalState::Unpaired };
            let detail = excluded.get(rec.id.as_str()).copied().unwrap_or("not paired").to_string();
            ProgramResult { program_id: rec.id.clone(), state, detail, coverage_pct: None, classes: Vec::new(), resumed: false }
        };
        programs.push(r);
    }

    // Triage every failed verdict against its reference.
    let pairs_by_id: HashMap<&str, &TranspilePair> = pairing.pairs.iter().map(|p| (p.program_id(), p)).collect();
    let mut triage = Vec::new();
    for p in programs.iter_mut() {
        let TerminalState::Verified(status) = p.state else { continue };
        if status == VerifyStatus::Pass {
            continue;
        }
        let dir = work.join(&p.program_id);
        let (Some(pair), Ok(o)) = (pairs_by_id.get(p.program_id.as_str()), VerificationOutcome::load(&dir.join("0").join(OUTCOME_FILE))) else {
            continue;
        };
        let candidate = load_candidates(&dir.join("candidates.json")).into_iter().find(|c| c.rank == 0).map(|c| c.text).unwrap_or_default();
        let rec = triage_outcome(&o, &pair.target_reference.normalized_text, &candidate, cfg.target_isa, &patterns);
        p.classes = rec.classes.clone();
        triage.push(rec);
    }

    let outcomes: HashMap<String, VerificationOutcome> = programs
        .iter()
        .filter(|p| matches!(p.state, TerminalState::Verified(_)))
        .filter_map(|p| VerificationOutcome::load(&work.join(&p.program_id).join("0").join(OUTCOME_FILE)).ok().map(|o| (p.program_id.clone(), o)))
        .collect();
    let graded: Vec<GradedOutcome<'_>> = programs
        .iter()
        .filter(|p| matches!(p.state, TerminalState::Verified(_) | TerminalState::GuessFailed | TerminalState::Excluded | TerminalState::HarnessError))
        .map(|p| GradedOutcome {
            benchmark: &cfg.benchmark,
            isa: cfg.target_isa,
            opt: cfg.opt,
            outcome: outcomes.get(&p.program_id),
            excluded: p.state == TerminalState::Excluded,
        })
        .collect();
    let accuracy = accuracy_table(&graded);

    let mut summary = RunSummary { manifest_size: corpus.records.len(), programs, accuracy, triage, reports: Vec::new() };
    summary.reports = write_reports(&summary, &work)?;
    Ok(summary)
}

fn write_reports(summary: &RunSummary, work: &Path) -> io::Result<Vec<PathBuf>> {
    let accuracy = work.join("accuracy.txt");
    fs::write(&accuracy, summary.accuracy.render())?;
    let triage_txt = work.join("triage.txt");
    fs::write(&triage_txt, triage_report(&summary.triage).render())?;
    let triage_jsonl = work.join("triage.jsonl");
    let mut lines = String::new();
    for r in &summary.triage {
        lines.push_str(&serde_json::to_string(r).expect("triage record serializes"));
        lines.push('\n');
    }
    fs::write(&triage_jsonl, lines)?;
    let json = work.join("summary.json");
    fs::write(&json, serde_json::to_string_pretty(&summary.to_file()).expect("summary serializes"))?;
    Ok(vec![accuracy, triage_txt, triage_jsonl, json])
}

/// Configuration knob varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKnob {
    BeamWidth,
    ContextWindow,
    Backend,
}

impl SweepKnob {
    pub fn key(self) -> &'static str {
        match self {
            SweepKnob::BeamWidth => "beam_width",
            SweepKnob::ContextWindow => "context_window",
            SweepKnob::Backend => "backend",
        }
    }
}

impl FromStr for SweepKnob {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "beam_width" => Ok(SweepKnob::BeamWidth),
            "context_window" => Ok(SweepKnob::ContextWindow),
            "backend" => Ok(SweepKnob::Backend),
            _ => Err(format!("unknown knob '{s}' (expected beam_width, context_window or backend)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    pub summary: RunSummary,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub knob: SweepKnob,
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

impl SweepTable {
    pub fn render(&self) -> String {
        let mut s = format!("{:<20}{:>8}{:>8}{:>10}{:>10}\n", self.knob.key(), "Pass", "Total", "pass@1", "overflow");
        for r in &self.rows {
            let (passed, total) = r.summary.accuracy.rows.iter().fold((0, 0), |(p, t), row| (p + row.passed, t + row.total));
            let pct = if total > 0 { format!("{:.2}%", passed as f64 / total as f64 * 100.0) } else { "-".into() };
            let overflow = r.summary.count(TerminalState::Verified(VerifyStatus::ContextOverflow));
            let _ = writeln!(s, "{:<20}{passed:>8}{total:>8}{pct:>10}{overflow:>10}", r.value);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}

/// One run per distinct value, each in its own work directory.
pub fn sweep(cfg: &PipelineConfig, manifest: &Path, knob: SweepKnob, values: &[String]) -> Result<SweepTable, PipelineError> {
    if values.is_empty() {
        return Err(PipelineError::EmptySweep);
    }
    let mut distinct: Vec<String> = Vec::new();
    let mut notes = Vec::new();
    for v in values {
        let v = v.trim().to_string();
        if distinct.contains(&v) {
            notes.push(format!("duplicate value '{v}' dropped"));
        } else {
            distinct.push(v);
        }
    }
    let mut rows = Vec::new();
    for v in distinct {
        let mut c = cfg.clone();
        c.set(knob.key(), &v)?;
        c.workdir = cfg.workdir.join("sweep").join(format!("{}-{v}", knob.key()));
        info!("sweep {}={v}", knob.key());
        let summary = run_pipeline(&c, manifest)?;
        rows.push(SweepRow { value: v, summary });
    }
    Ok(SweepTable { knob, rows, notes })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Ok,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub severity: Severity,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct DoctorReport {
    pub checks: Vec<Check>,
}

impl DoctorReport {
    fn push(&mut self, name: impl Into<String>, severity: Severity, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), severity, detail: detail.into() });
    }

    pub fn has_failures(&self) -> bool {
        self.checks.iter().any(|c| c.severity == Severity::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = match c.severity {
                Severity::Ok => "ok  ",
                Severity::Warn => "warn",
                Severity::Fail => "FAIL",
            };
            let _ = writeln!(s, "[{tag}] {:<22}{}", c.name, c.detail);
        }
        s
    }
}

/// Compiles a trivial translation unit to prove the toolchain works.
fn probe_toolchain(cfg: &PipelineConfig, isa: Isa, scratch: &Path) -> Result<String, String> {
    let tc = cfg.toolchain(isa).ok_or("not configured")?;
    let argv = split_command(&tc.command);
    let (prog, lead) = argv.split_first().ok_or("empty command")?;
    let path = resolve_program(prog).ok_or_else(|| format!("'{prog}' not found"))?;
    let src = scratch.join(format!("probe_{isa}.c"));
    fs::write(&src, "int gg_probe(int x) { return x + 1; }\n").map_err(|e| e.to_string())?;
    let mut cmd = Command::new(prog);
    cmd.args(lead).args(split_command(&tc.flags)).arg("-c").arg(&src).arg("-o").arg(scratch.join(format!("probe_{isa}.o")));
    let out = run_captured(cmd, Some(Duration::from_secs(60))).map_err(|e| e.to_string())?;
    if !out.success() {
        return Err(format!("cannot compile for {isa}: {}", out.stderr.lines().next().unwrap_or("failed")));
    }
    Ok(path.display().to_string())
}

fn check_runner(runner: &Runner) -> Result<String, String> {
    let Runner::Emulate(cmd) = runner else { return Ok("native".into()) };
    let argv = split_command(cmd);
    let prog = argv.first().ok_or("empty emulator command")?;
    resolve_program(prog).ok_or_else(|| format!("'{prog}' not found"))?;
    for a in argv.iter().skip(1).filter(|a| !a.starts_with('-') && a.contains('/')) {
        if !Path::new(a).exists() {
            return Err(format!("'{a}' does not exist"));
        }
    }
    Ok(cmd.clone())
}

fn check_http(url: &str) -> Result<String, String> {
    let uri: ureq::http::Uri = url.parse().map_err(|e| format!("bad url: {e}"))?;
    let host = uri.host().ok_or("url has no host")?;
    let port = uri.port_u16().unwrap_or(if uri.scheme_str() == Some("https") { 443 } else { 80 });
    let addr = (host, port).to_socket_addrs().map_err(|e| format!("{host}: {e}"))?.next().ok_or("no address")?;
    TcpStream::connect_timeout(&addr, Duration::from_secs(3)).map_err(|e| format!("{url} unreachable: {e}"))?;
    Ok(format!("{url} reachable"))
}

/// Checks every external tool the config refers to.
pub fn doctor(cfg: &PipelineConfig) -> DoctorReport {
    let mut r = DoctorReport::default();
    let scratch = match tempfile_dir() {
        Ok(d) => d,
        Err(e) => {
            r.push("scratch", Severity::Fail, e.to_string());
            return r;
        }
    };
    for isa in Isa::ALL {
        match probe_toolchain(cfg, isa, &scratch) {
            Ok(d) => r.push(format!("toolchain.{isa}"), Severity::Ok, d),
            Err(e) => r.push(format!("toolchain.{isa}"), Severity::Fail, e),
        }
        match check_runner(&cfg.runner(isa)) {
            Ok(d) => r.push(format!("runner.{isa}"), Severity::Ok, d),
            Err(e) => r.push(format!("runner.{isa}"), Severity::Fail, e),
        }
    }
    let cov = if cfg.coverage { Severity::Fail } else { Severity::Warn };
    for (name, tool) in [("coverage.cc", &cfg.coverage_cc), ("coverage.tool", &cfg.coverage_tool)] {
        let prog = split_command(tool).into_iter().next().unwrap_or_default();
        match resolve_program(&prog) {
            Some(p) => r.push(name, Severity::Ok, p.display().to_string()),
            None => r.push(name, cov, format!("'{prog}' not found")),
        }
    }
    match &cfg.runtime_dir {
        Some(d) if d.is_dir() => r.push("verify.runtime", Severity::Ok, d.display().to_string()),
        Some(d) => r.push("verify.runtime", Severity::Fail, format!("{} is not a directory", d.display())),
        None => r.push("verify.runtime", Severity::Warn, "not set; drivers must bring their own startup code"),
    }
    match resolve_program("make") {
        Some(p) => r.push("make", Severity::Ok, p.display().to_string()),
        None => r.push("make", Severity::Warn, "not found; makefile bundles cannot build"),
    }
    if let Some(v) = &cfg.vocab {
        match load_vocab(v) {
            Ok(v) => r.push("vocab", Severity::Ok, format!("{} entries", v.len())),
            Err(e) => r.push("vocab", Severity::Fail, e.to_string()),
        }
    }
    let backend = match cfg.backend {
        BackendKind::Oracle | BackendKind::Mutant => Ok(format!("{} (built in)", cfg.backend.as_str())),
        BackendKind::Http => cfg.backend_url.as_deref().ok_or_else(|| "backend.url is not set".to_string()).and_then(check_http),
        BackendKind::Command => cfg
            .backend_command
            .as_deref()
            .ok_or_else(|| "backend.command is not set".to_string())
            .and_then(|c| {
                let prog = split_command(c).into_iter().next().unwrap_or_default();
                resolve_program(&prog).map(|p| p.display().to_string()).ok_or(format!("'{prog}' not found"))
            }),
    };
    match backend {
        Ok(d) => r.push("backend", Severity::Ok, d),
        Err(e) => r.push("backend", Severity::Fail, e),
    }
    let _ = fs::remove_dir_all(&scratch);
    r
}

fn tempfile_dir() -> io::Result<PathBuf> {
    let dir = std::env::temp_dir().join(format!("gg-doctor-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminal_state_failures() {
        assert!(!TerminalState::Verified(VerifyStatus::Pass).is_failure());
        assert!(TerminalState::Verified(VerifyStatus::TestFail).is_failure());
        assert!(TerminalState::GuessFailed.is_failure());
        assert!(!TerminalState::Excluded.is_failure());
        assert!(!TerminalState::Filtered.is_failure());
    }

    #[test]
    fn knob_names() {
        assert_eq!("beam-width".parse::<SweepKnob>().unwrap(), SweepKnob::BeamWidth);
        assert_eq!("context_window".parse::<SweepKnob>().unwrap(), SweepKnob::ContextWindow);
        assert!("temperature".parse::<SweepKnob>().is_err());
    }

    #[test]
    fn empty_sweep_is_refused() {
        let cfg = PipelineConfig::default();
        assert!(matches!(sweep(&cfg, Path::new("/nonexistent/manifest.jsonl"), SweepKnob::BeamWidth, &[]), Err(PipelineError::EmptySweep)));
    }

    #[test]
    fn doctor_names_missing_toolchain() {
        let mut cfg = PipelineConfig::default();
        cfg.set("toolchain.riscv64.command", "gg-no-such-compiler").unwrap();
        let r = doctor(&cfg);
        assert!(r.has_failures());
        let c = r.check("toolchain.riscv64").unwrap();
        assert_eq!(c.severity, Severity::Fail);
        assert!(c.detail.contains("gg-no-such-compiler"));
        assert!(r.render().contains("[FAIL] toolchain.riscv64"));
    }

    #[test]
    fn doctor_names_unreachable_backend() {
        let mut cfg = PipelineConfig::default();
        cfg.backend = BackendKind::Http;
        cfg.backend_url = Some("http://127.0.0.1:9".into());
        let r = doctor(&cfg);
        assert_eq!(r.check("backend").unwrap().severity, Severity::Fail);
    }

    #[test]
    fn http_backend_needs_url() {
        let mut cfg = PipelineConfig::default();
        cfg.backend = BackendKind::Http;
        assert!(matches!(build_backend(&cfg, HashMap::new()), Err(PipelineError::Backend(_))));
    }
}
