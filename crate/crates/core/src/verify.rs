//! Build, run and check candidate assembly against a program's unit tests.
//!
//! Every verification gets a fresh scratch directory:
//!
//! ```text
//! <work>/<program_id>/<rank>/candidate.s
//!                           /drivers/...
//!                           /build.log
//!                           /stdout.txt
//!                           /outcome.json
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Toolchain;
use crate::isa::{CompileSpec, Isa, OptLevel};
use crate::process::{render_argv, run_captured, split_command, Captured, Runner};

pub const BUNDLE_FILE: &str = "bundle.json";
pub const OUTCOME_FILE: &str = "outcome.json";
/// Line printed by test drivers after their last check.
pub const RESULT_MARKER: &str = "GG_RESULT";

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid test bundle {path}: {msg}")]
    BundleInvalid { path: String, msg: String },
    #[error("coverage unavailable: {0}")]
    CoverageUnavailable(String),
    #[error("outcome file {path}: {msg}")]
    OutcomeCorrupt { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    /// Test driver C files linked directly against the candidate.
    HumanevalStyle,
    /// A project built by `make` with the candidate object substituted,
    /// checked by diffing its output.
    MakefileStyle,
}

/// On-disk form of `bundle.json`; paths are relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    kind: BundleKind,
    #[serde(default)]
    drivers: Vec<PathBuf>,
    #[serde(default)]
    include_dirs: Vec<PathBuf>,
    #[serde(default)]
    cflags: Vec<String>,
    #[serde(default)]
    ldflags: Vec<String>,
    #[serde(default)]
    expected_output: Option<String>,
    #[serde(default)]
    expected_output_file: Option<PathBuf>,
    #[serde(default)]
    project: Option<PathBuf>,
    #[serde(default)]
    timeout_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestBundle {
    pub root: PathBuf,
    pub kind: BundleKind,
    pub driver_paths: Vec<PathBuf>,
    pub include_dirs: Vec<PathBuf>,
    pub cflags: Vec<String>,
    pub ldflags: Vec<String>,
    pub expected_output: Option<String>,
    /// Makefile project directory (makefile_style only).
    pub project: Option<PathBuf>,
    pub timeout_s: Option<f64>,
}

impl TestBundle {
    pub fn load(dir: &Path) -> Result<Self, VerifyError> {
        let path = dir.join(BUNDLE_FILE);
        let invalid = |msg: String| VerifyError::BundleInvalid { path: path.display().to_string(), msg };
        let text = fs::read_to_string(&path).map_err(|e| invalid(e.to_string()))?;
        let file: BundleFile = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let expected_output = match (&file.expected_output, &file.expected_output_file) {
            (Some(_), Some(_)) => return Err(invalid("both expected_output and expected_output_file given".into())),
            (Some(t), None) => Some(t.clone()),
            (None, Some(p)) => Some(fs::read_to_string(dir.join(p)).map_err(|e| invalid(format!("{}: {e}", p.display())))?),
            (None, None) => None,
        };
        let bundle = TestBundle {
            root: dir.to_path_buf(),
            kind: file.kind,
            driver_paths: file.drivers.iter().map(|p| dir.join(p)).collect(),
            include_dirs: file.include_dirs.iter().map(|p| dir.join(p)).collect(),
            cflags: file.cflags,
            ldflags: file.ldflags,
            expected_output,
            project: match file.kind {
                BundleKind::MakefileStyle => Some(dir.join(file.project.unwrap_or_else(|| PathBuf::from("project")))),
                BundleKind::HumanevalStyle => None,
            },
            timeout_s: file.timeout_s,
        };
        bundle.validate().map_err(invalid)?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<(), String> {
        match self.kind {
            BundleKind::HumanevalStyle if self.driver_paths.is_empty() => Err("humaneval_style bundle has no drivers".into()),
            BundleKind::MakefileStyle if self.expected_output.is_none() => Err("makefile_style bundle has no expected output".into()),
            BundleKind::MakefileStyle if !self.project.as_ref().is_some_and(|p| p.join("Makefile").is_file()) => {
                Err("makefile_style bundle has no project Makefile".into())
            }
            _ => {
                for d in &self.driver_paths {
                    if !d.is_file() {
                        return Err(format!("driver {} not found", d.display()));
                    }
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VerifyStatus {
    Pass,
    TestFail,
    BuildFail,
    RuntimeCrash,
    Timeout,
    ContextOverflow,
    DiffMismatch,
}

impl VerifyStatus {
    pub const ALL: [VerifyStatus; 7] = [
        VerifyStatus::Pass,
        VerifyStatus::TestFail,
        VerifyStatus::BuildFail,
        VerifyStatus::RuntimeCrash,
        VerifyStatus::Timeout,
        VerifyStatus::ContextOverflow,
        VerifyStatus::DiffMismatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerifyStatus::Pass => "Pass",
            VerifyStatus::TestFail => "TestFail",
            VerifyStatus::BuildFail => "BuildFail",
            VerifyStatus::RuntimeCrash => "RuntimeCrash",
            VerifyStatus::Timeout => "Timeout",
            VerifyStatus::ContextOverflow => "ContextOverflow",
            VerifyStatus::DiffMismatch => "DiffMismatch",
        }
    }
}

impl fmt::Display for VerifyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationOutcome {
    pub program_id: String,
    pub candidate_rank: u32,
    pub status: VerifyStatus,
    pub build_log: String,
    pub tests_passed: u32,
    pub tests_total: u32,
    pub coverage_pct: Option<f64>,
    pub diff_summary: Option<String>,
    /// How the binary was executed (`native` or `emulate:<cmd>`).
    pub runner: String,
    /// Wall time of the test run, when one happened.
    pub runtime_s: Option<f64>,
}

impl VerificationOutcome {
    fn new(program_id: &str, rank: u32, status: VerifyStatus, runner: &Runner) -> Self {
        VerificationOutcome {
            program_id: program_id.to_string(),
            candidate_rank: rank,
            status,
            build_log: String::new(),
            tests_passed: 0,
            tests_total: 0,
            coverage_pct: None,
            diff_summary: None,
            runner: runner.to_string(),
            runtime_s: None,
        }
    }

    /// Outcome for a request refused by the context budget.
    pub fn context_overflow(program_id: &str, runner: &Runner, note: &str) -> Self {
        let mut o = Self::new(program_id, 0, VerifyStatus::ContextOverflow, runner);
        o.build_log = note.to_string();
        o
    }

    /// Pass must be backed by a clean test run and an empty diff.
    pub fn is_consistent(&self) -> bool {
        match self.status {
            VerifyStatus::Pass => self.tests_passed == self.tests_total && self.diff_summary.as_deref().is_none_or(str::is_empty),
            _ => self.tests_passed <= self.tests_total || self.tests_total == 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), VerifyError> {
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(self).expect("outcome serializes"))?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VerifyError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| VerifyError::OutcomeCorrupt { path: path.display().to_string(), msg: e.to_string() })
    }
}

/// Result of comparing program output with the expected text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffCheck {
    pub equal: bool,
    pub summary: String,
}

fn trim_trailing_newlines(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

/// Byte equality once trailing newlines are dropped; a unified diff otherwise.
pub fn check_diff(actual: &str, expected: &str) -> DiffCheck {
    let a = trim_trailing_newlines(actual);
    let e = trim_trailing_newlines(expected);
    if a == e {
        return DiffCheck { equal: true, summary: String::new() };
    }
    let (a, e) = (format!("{a}\n"), format!("{e}\n"));
    let summary = similar::TextDiff::from_lines(&e, &a).unified_diff().context_radius(2).header("expected", "actual").to_string();
    DiffCheck { equal: false, summary }
}

/// Counts parsed from a driver's `GG_RESULT passed=N total=M` line.
pub fn parse_test_counts(stdout: &str) -> Option<(u32, u32)> {
    let line = stdout.lines().rev().find(|l| l.starts_with(RESULT_MARKER))?;
    let mut passed = None;
    let mut total = None;
    for field in line[RESULT_MARKER.len()..].split_whitespace() {
        match field.split_once('=') {
            Some(("passed", v)) => passed = v.parse().ok(),
            Some(("total", v)) => total = v.parse().ok(),
            _ => {}
        }
    }
    Some((passed?, total?))
}

/// Everything needed to build and run candidates for one target.
#[derive(Debug, Clone)]
pub struct VerifyContext {
    pub spec: CompileSpec,
    pub toolchain: Toolchain,
    pub runner: Runner,
    /// Per-test wall-clock limit.
    pub timeout: Duration,
    /// Support sources compiled into every test binary; also an include dir.
    pub runtime_dir: Option<PathBuf>,
    pub make: String,
}

impl VerifyContext {
    pub fn new(spec: CompileSpec, toolchain: Toolchain, runner: Runner, timeout: Duration) -> Self {
        VerifyContext { spec, toolchain, runner, timeout, runtime_dir: None, make: "make".into() }
    }

    fn driver_command(&self) -> Result<(String, Vec<String>), String> {
        let argv = split_command(&self.toolchain.command);
        let (prog, lead) = argv.split_first().ok_or("toolchain command is empty")?;
        let mut args = lead.to_vec();
        args.extend(split_command(&self.toolchain.flags));
        Ok((prog.clone(), args))
    }

    fn runtime_sources(&self) -> io::Result<Vec<PathBuf>> {
        let Some(dir) = &self.runtime_dir else { return Ok(Vec::new()) };
        let mut out: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "c"))
            .collect();
        out.sort();
        Ok(out)
    }
}

fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in fs::read_dir(src)? {
        let entry = entry?;
        let to = dst.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_tree(&entry.path(), &to)?;
        } else {
            fs::copy(entry.path(), &to)?;
        }
    }
    Ok(())
}

fn log_step(log: &mut String, cmd: &Command, captured: &Captured) {
    let _ = writeln!(log, "$ {}", render_argv(cmd));
    log.push_str(&captured.stdout);
    log.push_str(&captured.stderr);
    if captured.timed_out {
        log.push_str("[timed out]\n");
    } else if !captured.success() {
        let _ = writeln!(log, "[exit: {:?}]", captured.status);
    }
}

/// A built test binary, or the diagnostics of the failed build.
#[derive(Debug, Clone)]
pub enum BuildResult {
    Built { binary: PathBuf, log: String },
    Failed { log: String },
}

const BUILD_TIMEOUT: Duration = Duration::from_secs(120);

/// Assembles the candidate and links it with the bundle's drivers (or the
/// bundle's make project) inside `scratch`.
pub fn build_candidate(candidate_text: &str, bundle: &TestBundle, ctx: &VerifyContext, scratch: &Path) -> Result<BuildResult, VerifyError> {
    fs::create_dir_all(scratch)?;
    let candidate = scratch.join("candidate.s");
    fs::write(&candidate, format!("{}\n", candidate_text.trim_end_matches('\n')))?;
    let mut log = String::new();
    if candidate_text.trim().is_empty() {
        log.push_str("candidate is empty\n");
        return Ok(BuildResult::Failed { log });
    }
    let (prog, lead) = match ctx.driver_command() {
        Ok(x) => x,
        Err(e) => return Ok(BuildResult::Failed { log: e }),
    };
    let ldflags = split_command(&ctx.toolchain.ldflags);

    let object = scratch.join("candidate.o");
    let mut asm = Command::new(&prog);
    asm.args(&lead).arg("-c").arg(&candidate).arg("-o").arg(&object);
    if !run_step(&mut log, asm)? {
        return Ok(BuildResult::Failed { log });
    }

    let binary = scratch.join("test.bin");
    let includes: Vec<PathBuf> = bundle.include_dirs.iter().cloned().chain(ctx.runtime_dir.clone()).collect();
    match bundle.kind {
        BundleKind::HumanevalStyle => {
            let drivers_dir = scratch.join("drivers");
            fs::create_dir_all(&drivers_dir)?;
            let mut local = Vec::new();
            for d in &bundle.driver_paths {
                let to = drivers_dir.join(d.file_name().unwrap_or(d.as_os_str()));
                fs::copy(d, &to)?;
                local.push(to);
            }
            let mut link = Command::new(&prog);
            link.args(&lead).arg(ctx.spec.opt.flag()).args(&bundle.cflags);
            for i in &includes {
                link.arg("-I").arg(i);
            }
            link.args(&local).args(ctx.runtime_sources()?).arg(&object).args(&bundle.ldflags).args(&ldflags).arg("-o").arg(&binary);
            if !run_step(&mut log, link)? {
                return Ok(BuildResult::Failed { log });
            }
        }
        BundleKind::MakefileStyle => {
            let project = scratch.join("project");
            if project.exists() {
                fs::remove_dir_all(&project)?;
            }
            copy_tree(bundle.project.as_ref().expect("validated"), &project)?;
            let cc = std::iter::once(prog.clone()).chain(lead.iter().cloned()).collect::<Vec<_>>().join(" ");
            let mut extra = bundle.cflags.clone();
            extra.push(ctx.spec.opt.flag().to_string());
            for i in &includes {
                extra.push(format!("-I{}", i.display()));
            }
            let runtime: Vec<String> = ctx.runtime_sources()?.iter().map(|p| p.display().to_string()).collect();
            let ld: Vec<String> = bundle.ldflags.iter().cloned().chain(ldflags).collect();
            let mut make = Command::new(&ctx.make);
            make.arg("-C")
                .arg(&project)
                .arg(format!("CC={cc}"))
                .arg(format!("CFLAGS={}", extra.join(" ")))
                .arg(format!("LDFLAGS={}", ld.join(" ")))
                .arg(format!("RUNTIME_SRCS={}", runtime.join(" ")))
                .arg(format!("CANDIDATE_OBJ={}", object.display()))
                .arg(format!("OUT={}", binary.display()));
            if !run_step(&mut log, make)? || !binary.is_file() {
                if !binary.is_file() {
                    log.push_str("make did not produce the test binary\n");
                }
                return Ok(BuildResult::Failed { log });
            }
        }
    }
    Ok(BuildResult::Built { binary, log })
}

fn run_step(log: &mut String, cmd: Command) -> Result<bool, VerifyError> {
    let mut shown = Command::new(cmd.get_program());
    shown.args(cmd.get_args());
    match run_captured(cmd, Some(BUILD_TIMEOUT)) {
        Ok(c) => {
            log_step(log, &shown, &c);
            Ok(c.success())
        }
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let _ = writeln!(log, "$ {}\n{}: {e}", render_argv(&shown), shown.get_program().to_string_lossy());
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

/// What happened when the test binary ran.
#[derive(Debug, Clone, PartialEq)]
pub struct TestRun {
    pub status: VerifyStatus,
    pub tests_passed: u32,
    pub tests_total: u32,
    pub stdout: String,
    pub exit_info: String,
    pub diff_summary: Option<String>,
    pub runtime_s: f64,
}

/// Exit codes a shell or wrapper reports for a child killed by a fault signal.
fn crash_exit_code(code: i32) -> bool {
    matches!(code - 128, 4 | 6 | 7 | 8 | 11)
}

/// Runs a built test binary under the runner and grades the result.
pub fn run_tests(binary: &Path, bundle: &TestBundle, runner: &Runner, timeout: Duration) -> Result<TestRun, VerifyError> {
    let cmd = runner.command(binary, &[]);
    let c = run_captured(cmd, Some(timeout))?;
    let runtime_s = c.elapsed.as_secs_f64();
    let exit_info = if c.timed_out {
        format!("killed after {:.1}s", timeout.as_secs_f64())
    } else if let Some(sig) = c.signal() {
        format!("signal {sig}")
    } else {
        format!("exit {}", c.status.and_then(|s| s.code()).unwrap_or(-1))
    };
    let mut run = TestRun { status: VerifyStatus::TestFail, tests_passed: 0, tests_total: 0, stdout: c.stdout.clone(), exit_info, diff_summary: None, runtime_s };
    let code = c.status.and_then(|s| s.code());
    if c.timed_out {
        run.status = VerifyStatus::Timeout;
        return Ok(run);
    }
    if c.signal().is_some() || code.is_some_and(crash_exit_code) {
        run.status = VerifyStatus::RuntimeCrash;
        if let Some((p, t)) = parse_test_counts(&c.stdout) {
            (run.tests_passed, run.tests_total) = (p, t);
        }
        return Ok(run);
    }
    let counts = parse_test_counts(&c.stdout);
    match bundle.kind {
        BundleKind::HumanevalStyle => {
            let (p, t) = counts.unwrap_or((0, 0));
            (run.tests_passed, run.tests_total) = (p, t);
            let tests_ok = code == Some(0) && counts.is_some() && p == t;
            run.status = if tests_ok { VerifyStatus::Pass } else { VerifyStatus::TestFail };
        }
        BundleKind::MakefileStyle => {
            run.tests_total = 1;
            run.status = if code == Some(0) { VerifyStatus::Pass } else { VerifyStatus::TestFail };
        }
    }
    if run.status == VerifyStatus::Pass {
        if let Some(expected) = &bundle.expected_output {
            let d = check_diff(&c.stdout, expected);
            if !d.equal {
                run.status = VerifyStatus::DiffMismatch;
                run.diff_summary = Some(d.summary);
            } else {
                run.diff_summary = Some(String::new());
            }
        }
        if bundle.kind == BundleKind::MakefileStyle && run.status == VerifyStatus::Pass {
            run.tests_passed = 1;
        }
    }
    Ok(run)
}

/// Build, run and diff one candidate in `scratch`, writing the artifacts
/// and `outcome.json` there.
pub fn verify_text(
    program_id: &str,
    rank: u32,
    candidate_text: &str,
    bundle: &TestBundle,
    ctx: &VerifyContext,
    scratch: &Path,
) -> Result<VerificationOutcome, VerifyError> {
    if scratch.exists() {
        fs::remove_dir_all(scratch)?;
    }
    fs::create_dir_all(scratch)?;
    let mut outcome = VerificationOutcome::new(program_id, rank, VerifyStatus::BuildFail, &ctx.runner);
    match build_candidate(candidate_text, bundle, ctx, scratch)? {
        BuildResult::Failed { log } => outcome.build_log = log,
        BuildResult::Built { binary, log } => {
            outcome.build_log = log;
            let timeout = bundle.timeout_s.map(Duration::from_secs_f64).map_or(ctx.timeout, |t| t.max(ctx.timeout));
            let run = run_tests(&binary, bundle, &ctx.runner, timeout)?;
            fs::write(scratch.join("stdout.txt"), &run.stdout)?;
            let _ = writeln!(outcome.build_log, "[run: {}]", run.exit_info);
            outcome.status = run.status;
            outcome.tests_passed = run.tests_passed;
            outcome.tests_total = run.tests_total;
            outcome.diff_summary = run.diff_summary;
            outcome.runtime_s = Some(run.runtime_s);
        }
    }
    fs::write(scratch.join("build.log"), &outcome.build_log)?;
    outcome.save(&scratch.join(OUTCOME_FILE))?;
    Ok(outcome)
}

/// Verifies rank 0 only; lower ranks are ignored for accounting.
pub fn verify_candidate(
    program_id: &str,
    candidates: &[crate::guesser::GuessCandidate],
    bundle: &TestBundle,
    ctx: &VerifyContext,
    work: &Path,
) -> Result<VerificationOutcome, VerifyError> {
    let scratch = work.join(program_id).join("0");
    match candidates.iter().find(|c| c.rank == 0) {
        Some(c) => verify_text(program_id, 0, &c.text, bundle, ctx, &scratch),
        None => {
            fs::create_dir_all(&scratch)?;
            let mut o = VerificationOutcome::new(program_id, 0, VerifyStatus::BuildFail, &ctx.runner);
            o.build_log = "no rank-0 candidate\n".into();
            o.save(&scratch.join(OUTCOME_FILE))?;
            Ok(o)
        }
    }
}

/// Effective per-test limit: the configured value, raised to twice the
/// reference's own runtime so slow programs are not stamped Timeout.
pub fn effective_timeout(configured: Duration, reference_runtime_s: Option<f64>) -> Duration {
    match reference_runtime_s {
        Some(r) if r.is_finite() && r > 0.0 => configured.max(Duration::from_secs_f64(2.0 * r)),
        _ => configured,
    }
}

/// Tools for the coverage gate.
#[derive(Debug, Clone)]
pub struct CoverageTools {
    pub cc: String,
    pub gcov: String,
    pub runtime_dir: Option<PathBuf>,
    pub timeout: Duration,
}

/// Line coverage of `reference_source` under the bundle's drivers: lines
/// executed at least once over executable lines, as reported by gcov.
pub fn measure_coverage(bundle: &TestBundle, reference_source: &Path, tools: &CoverageTools, scratch: &Path) -> Result<f64, VerifyError> {
    let unavailable = |m: String| VerifyError::CoverageUnavailable(m);
    if bundle.kind != BundleKind::HumanevalStyle {
        return Err(unavailable("coverage needs driver sources".into()));
    }
    if scratch.exists() {
        fs::remove_dir_all(scratch)?;
    }
    fs::create_dir_all(scratch)?;
    let source = scratch.join("source.c");
    fs::copy(reference_source, &source)?;
    let includes: Vec<PathBuf> = bundle.include_dirs.iter().cloned().chain(tools.runtime_dir.clone()).collect();
    let cc = split_command(&tools.cc);
    let (prog, lead) = cc.split_first().ok_or_else(|| unavailable("empty coverage compiler".into()))?;
    let mut log = String::new();

    let mut compile = Command::new(prog);
    compile.current_dir(scratch).args(lead).args(["--coverage", "-O0", "-c", "source.c", "-o", "source.o"]);
    if !run_step(&mut log, compile)? {
        return Err(unavailable(format!("instrumented build failed:\n{log}")));
    }
    let mut link = Command::new(prog);
    link.current_dir(scratch).args(lead).args(["--coverage", "-O0", "-DGG_HOSTED"]);
    for i in &includes {
        link.arg("-I").arg(i);
    }
    let runtime: Vec<PathBuf> = match &tools.runtime_dir {
        Some(d) => {
            let mut v: Vec<PathBuf> = fs::read_dir(d)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "c")).collect();
            v.sort();
            v
        }
        None => Vec::new(),
    };
    link.args(&bundle.driver_paths).args(&runtime).arg("source.o").args(["-o", "cov.bin"]);
    if !run_step(&mut log, link)? {
        return Err(unavailable(format!("instrumented link failed:\n{log}")));
    }
    let run = run_captured(Command::new(scratch.join("cov.bin")), Some(tools.timeout))?;
    if run.timed_out || run.signal().is_some() {
        return Err(unavailable("instrumented test run did not finish".into()));
    }

    let mut gcov = Command::new(&tools.gcov);
    gcov.current_dir(scratch).args(["--json-format", "--stdout", "source.o"]);
    let out = match run_captured(gcov, Some(BUILD_TIMEOUT)) {
        Ok(c) if c.success() => c.stdout,
        Ok(c) => return Err(unavailable(format!("{} failed: {}", tools.gcov, c.stderr.trim()))),
        Err(e) => return Err(unavailable(format!("{}: {e}", tools.gcov))),
    };
    let (executed, executable) = parse_gcov_json(&out, "source.c").map_err(unavailable)?;
    if executable == 0 {
        return Err(unavailable("no executable lines reported".into()));
    }
    Ok(executed as f64 / executable as f64 * 100.0)
}

/// (executed, executable) line counts for `file` from `gcov --json-format`
/// output; one JSON document per line.
pub fn parse_gcov_json(text: &str, file: &str) -> Result<(u64, u64), String> {
    #[derive(Deserialize)]
    struct Line {
        line_number: u64,
        count: u64,
    }
    #[derive(Deserialize)]
    struct FileEntry {
        file: String,
        lines: Vec<Line>,
    }
    #[derive(Deserialize)]
    struct Doc {
        files: Vec<FileEntry>,
    }
    let mut lines: BTreeMap<u64, u64> = BTreeMap::new();
    let mut found = false;
    for doc in text.lines().filter(|l| !l.trim().is_empty()) {
        let doc: Doc = serde_json::from_str(doc).map_err(|e| format!("malformed gcov output: {e}"))?;
        for f in doc.files.into_iter().filter(|f| Path::new(&f.file).file_name() == Path::new(file).file_name()) {
            found = true;
            for l in f.lines {
                *lines.entry(l.line_number).or_default() += l.count;
            }
        }
    }
    if !found {
        return Err(format!("gcov output has no entry for {file}"));
    }
    let executed = lines.values().filter(|&&c| c > 0).count() as u64;
    Ok((executed, lines.len() as u64))
}

/// pass@1 for one (benchmark, target ISA, opt) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub benchmark: String,
    pub isa: Isa,
    pub opt: OptLevel,
    pub passed: u32,
    pub total: u32,
    /// Pairs whose reference failed its own tests.
    pub excluded: u32,
}

impl AccuracyRow {
    pub fn pass_at_1(&self) -> Option<f64> {
        (self.total > 0).then(|| self.passed as f64 / self.total as f64 * 100.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub rows: Vec<AccuracyRow>,
}

/// One graded rank-0 outcome with its grouping key.
#[derive(Debug, Clone)]
pub struct GradedOutcome<'a> {
    pub benchmark: &'a str,
    pub isa: Isa,
    pub opt: OptLevel,
    pub outcome: Option<&'a VerificationOutcome>,
    /// Reference self-test failed; kept out of the denominator.
    pub excluded: bool,
}

/// Strict pass@1: only rank-0 Pass counts; excluded pairs are not counted.
pub fn accuracy_table(items: &[GradedOutcome<'_>]) -> AccuracyTable {
    let mut groups: BTreeMap<(String, Isa, OptLevel), AccuracyRow> = BTreeMap::new();
    for it in items {
        let row = groups.entry((it.benchmark.to_string(), it.isa, it.opt)).or_insert_with(|| AccuracyRow {
            benchmark: it.benchmark.to_string(),
            isa: it.isa,
            opt: it.opt,
            passed: 0,
            total: 0,
            excluded: 0,
        });
        if it.excluded {
            row.excluded += 1;
            continue;
        }
        row.total += 1;
        if it.outcome.is_some_and(|o| o.candidate_rank == 0 && o.status == VerifyStatus::Pass) {
            row.passed += 1;
        }
    }
    AccuracyTable { rows: groups.into_values().collect() }
}

impl AccuracyTable {
    pub fn row(&self, benchmark: &str, isa: Isa, opt: OptLevel) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.benchmark == benchmark && r.isa == isa && r.opt == opt)
    }

    /// Plain-text table, one row per group; empty groups are noted and omitted.
    pub fn render(&self) -> String {
        let mut s = format!("{:<14}{:<10}{:<6}{:>8}{:>8}{:>10}\n", "Benchmark", "ISA", "Opt", "Pass", "Total", "pass@1");
        let mut notes = Vec::new();
        for r in &self.rows {
            match r.pass_at_1() {
                Some(p) => {
                    let _ = writeln!(s, "{:<14}{:<10}{:<6}{:>8}{:>8}{:>9.2}%", r.benchmark, r.isa.as_str(), r.opt.as_str(), r.passed, r.total, p);
                }
                None => notes.push(format!("{} {} {}: no gradable programs", r.benchmark, r.isa, r.opt)),
            }
            if r.excluded > 0 {
                notes.push(format!("{} {} {}: {} pair(s) excluded, reference failed its own tests", r.benchmark, r.isa, r.opt, r.excluded));
            }
        }
        for n in notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
