//! Timing and memory harness for comparing execution modes.
//!
//! Samples are collected strictly one at a time under a machine-wide lock
//! file; aggregates are geometric means.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lock::{LockError, LockFile};
use crate::process::{run_captured, split_command, Runner};

/// Default location of the machine-wide benchmark lock.
pub const DEFAULT_LOCK_PATH: &str = "/tmp/gg-bench.lock";
/// Largest tolerated share of invalid samples.
pub const MAX_INVALID_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("sample invalid: {0}")]
    SampleInvalid(String),
    #[error("{invalid} of {runs} samples invalid (more than 10%)")]
    BenchUnreliable { invalid: u32, runs: u32 },
    #[error("n_runs must be at least 1")]
    NoRuns,
    #[error("energy probe failed: {0}")]
    EnergyProbe(String),
    #[error("bad records file {path}: {msg}")]
    RecordsCorrupt { path: String, msg: String },
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Native,
    Transpiled,
    TranslatedLayer,
}

impl BenchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Native => "native",
            BenchMode::Transpiled => "transpiled",
            BenchMode::TranslatedLayer => "translated_layer",
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().replace('-', "_").as_str() {
            "native" => Ok(BenchMode::Native),
            "transpiled" => Ok(BenchMode::Transpiled),
            "translated_layer" | "translated" => Ok(BenchMode::TranslatedLayer),
            other => Err(format!("unknown mode '{other}' (native, transpiled, translated_layer)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub wall_time_s: f64,
    pub peak_rss_bytes: f64,
}

/// `exp(mean(ln x))`; `None` for an empty list or any non-positive value.
pub fn geomean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

/// Runs the binary once, timing it with a monotonic clock and reading the
/// child's peak resident set from its resource usage.
pub fn run_once(binary: &Path, args: &[String], runner: &Runner) -> Result<Sample, BenchError> {
    let mut cmd = runner.command(binary, args);
    cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::null());
    let start = Instant::now();
    let child = cmd.spawn()?;
    let pid = child.id() as libc::pid_t;
    let mut status: libc::c_int = 0;
    // SAFETY: rusage is plain old data, fully written by wait4.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        // SAFETY: waiting on our own child; pointers are to live locals.
        let rc = unsafe { libc::wait4(pid, &mut status, 0, &mut usage) };
        if rc == pid {
            break;
        }
        let err = io::Error::last_os_error();
        if err.kind() != io::ErrorKind::Interrupted {
            return Err(err.into());
        }
    }
    let wall = start.elapsed().as_secs_f64();
    // the child has been reaped by wait4; std must not wait on it again
    std::mem::forget(child);
    if libc::WIFSIGNALED(status) {
        return Err(BenchError::SampleInvalid(format!("killed by signal {}", libc::WTERMSIG(status))));
    }
    let code = libc::WEXITSTATUS(status);
    if code != 0 {
        return Err(BenchError::SampleInvalid(format!("exit status {code}")));
    }
    Ok(Sample { wall_time_s: wall, peak_rss_bytes: usage.ru_maxrss as f64 * 1024.0 })
}

/// External meter: `<cmd> start` before the measured runs, `<cmd> stop`
/// after; `stop` prints the joules consumed in between.
#[derive(Debug, Clone)]
pub struct EnergyProbe {
    pub command: String,
}

impl EnergyProbe {
    fn call(&self, verb: &str) -> Result<String, BenchError> {
        let argv = split_command(&self.command);
        let (prog, rest) = argv.split_first().ok_or_else(|| BenchError::EnergyProbe("empty probe command".into()))?;
        let mut cmd = Command::new(prog);
        cmd.args(rest).arg(verb);
        let c = run_captured(cmd, Some(Duration::from_secs(30))).map_err(|e| BenchError::EnergyProbe(format!("{prog}: {e}")))?;
        if !c.success() {
            return Err(BenchError::EnergyProbe(format!("{prog} {verb} failed: {}", c.stderr.trim())));
        }
        Ok(c.stdout)
    }

    pub fn start(&self) -> Result<(), BenchError> {
        self.call("start").map(|_| ())
    }

    pub fn stop(&self) -> Result<f64, BenchError> {
        let out = self.call("stop")?;
        out.trim().parse().map_err(|_| BenchError::EnergyProbe(format!("expected joules, got '{}'", out.trim())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRecord {
    pub program_id: String,
    pub mode: BenchMode,
    /// Execution path of the samples (`native` or `emulate:<cmd>`).
    pub runner: String,
    pub runs: u32,
    pub invalid: u32,
    pub geomean_time_s: f64,
    pub geomean_peak_rss_bytes: f64,
    /// Mean joules per measured run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_j: Option<f64>,
    pub samples: Vec<Sample>,
}

impl BenchRecord {
    /// Aggregates valid samples; `runs` counts them.
    pub fn from_samples(program_id: &str, mode: BenchMode, runner: &Runner, samples: Vec<Sample>, invalid: u32, energy_j: Option<f64>) -> Option<Self> {
        let times: Vec<f64> = samples.iter().map(|s| s.wall_time_s).collect();
        let rss: Vec<f64> = samples.iter().map(|s| s.peak_rss_bytes).collect();
        Some(BenchRecord {
            program_id: program_id.to_string(),
            mode,
            runner: runner.to_string(),
            runs: samples.len() as u32,
            invalid,
            geomean_time_s: geomean(&times)?,
            geomean_peak_rss_bytes: geomean(&rss)?,
            energy_j,
            samples,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub n_runs: u32,
    pub energy_probe: Option<EnergyProbe>,
    pub lock_path: PathBuf,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings { n_runs: 100, energy_probe: None, lock_path: PathBuf::from(DEFAULT_LOCK_PATH) }
    }
}

/// One discarded warm-up, then `n_runs` sequential samples.
pub fn benchmark(
    program_id: &str,
    binary: &Path,
    args: &[String],
    runner: &Runner,
    mode: BenchMode,
    settings: &BenchSettings,
) -> Result<BenchRecord, BenchError> {
    if settings.n_runs == 0 {
        return Err(BenchError::NoRuns);
    }
    let _lock = LockFile::try_acquire(&settings.lock_path)?;
    let _ = run_once(binary, args, runner);
    if let Some(p) = &settings.energy_probe {
        p.start()?;
    }
    let mut samples = Vec::with_capacity(settings.n_runs as usize);
    let mut invalid = 0u32;
    for _ in 0..settings.n_runs {
        match run_once(binary, args, runner) {
            Ok(s) => samples.push(s),
            Err(BenchError::SampleInvalid(why)) => {
                log::debug!("{program_id}: invalid sample: {why}");
                invalid += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let energy = match &settings.energy_probe {
        Some(p) => Some(p.stop()? / settings.n_runs as f64),
        None => None,
    };
    if invalid as f64 > MAX_INVALID_FRACTION * settings.n_runs as f64 || samples.is_empty() {
        return Err(BenchError::BenchUnreliable { invalid, runs: settings.n_runs });
    }
    BenchRecord::from_samples(program_id, mode, runner, samples, invalid, energy)
        .ok_or_else(|| BenchError::SampleInvalid("non-positive sample".into()))
}

pub fn append_record(path: &Path, record: &BenchRecord) -> Result<(), BenchError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", serde_json::to_string(record).expect("record serializes"))?;
    Ok(())
}

pub fn load_records(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::RecordsCorrupt { path: path.display().to_string(), msg: format!("line {}: {e}", i + 1) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Time,
    Memory,
    Energy,
}

impl Metric {
    fn label(self) -> &'static str {
        match self {
            Metric::Time => "time",
            Metric::Memory => "peak memory",
            Metric::Energy => "energy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub program_id: String,
    pub metric: Metric,
    pub numerator: BenchMode,
    pub denominator: BenchMode,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub ratios: Vec<Ratio>,
    /// Programs with fewer than two modes.
    pub omitted: Vec<String>,
}

/// Mode pairs reported, numerator first.
const MODE_PAIRS: [(BenchMode, BenchMode); 3] = [
    (BenchMode::TranslatedLayer, BenchMode::Transpiled),
    (BenchMode::TranslatedLayer, BenchMode::Native),
    (BenchMode::Transpiled, BenchMode::Native),
];

/// Ratios of each metric between modes of the same program. A ratio above
/// one means the numerator mode is slower or uses more.
pub fn compare(records: &[BenchRecord]) -> ComparisonTable {
    let mut by_program: BTreeMap<&str, BTreeMap<BenchMode, &BenchRecord>> = BTreeMap::new();
    for r in records {
        by_program.entry(&r.program_id).or_default().insert(r.mode, r);
    }
    let mut table = ComparisonTable::default();
    for (id, modes) in by_program {
        if modes.len() < 2 {
            table.omitted.push(id.to_string());
            continue;
        }
        for (a, b) in MODE_PAIRS {
            let (Some(ra), Some(rb)) = (modes.get(&a), modes.get(&b)) else { continue };
            let mut push = |metric, x: f64, y: f64| {
                if x > 0.0 && y > 0.0 {
                    table.ratios.push(Ratio { program_id: id.to_string(), metric, numerator: a, denominator: b, ratio: x / y });
                }
            };
            push(Metric::Time, ra.geomean_time_s, rb.geomean_time_s);
            push(Metric::Memory, ra.geomean_peak_rss_bytes, rb.geomean_peak_rss_bytes);
            if let (Some(x), Some(y)) = (ra.energy_j, rb.energy_j) {
                push(Metric::Energy, x, y);
            }
        }
    }
    table
}

impl ComparisonTable {
    pub fn ratio(&self, program_id: &str, metric: Metric, numerator: BenchMode, denominator: BenchMode) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.program_id == program_id && r.metric == metric && r.numerator == numerator && r.denominator == denominator)
            .map(|r| r.ratio)
    }

    pub fn render(&self) -> String {
        let mut s = format!("{:<20}{:<13}{:<36}{:>9}\n", "program", "metric", "modes", "ratio");
        for r in &self.ratios {
            let dir = if r.ratio > 1.0 { "higher" } else if r.ratio < 1.0 { "lower" } else { "equal" };
            let _ = writeln!(
                s,
                "{:<20}{:<13}{:<36}{:>8.2}x  ({} {dir})",
                r.program_id,
                r.metric.label(),
                format!("{} / {}", r.numerator, r.denominator),
                r.ratio,
                r.numerator
            );
        }
        for id in &self.omitted {
            let _ = writeln!(s, "note: {id} has a single mode, omitted");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, mode: BenchMode, t: f64, m: f64) -> BenchRecord {
        BenchRecord::from_samples(id, mode, &Runner::Native, vec![Sample { wall_time_s: t, peak_rss_bytes: m }], 0, None).unwrap()
    }

    #[test]
    fn geomean_examples() {
        assert_eq!(geomean(&[1.0, 4.0]), Some(2.0));
        assert!((geomean(&[3.5; 7]).unwrap() - 3.5).abs() < 1e-12);
        assert_eq!(geomean(&[0.25]), Some(0.25));
        assert_eq!(geomean(&[]), None);
        assert_eq!(geomean(&[1.0, 0.0]), None);
    }

    #[test]
    fn comparison_ratios() {
        let recs = vec![
            record("p", BenchMode::TranslatedLayer, 1.73, 2.49e6),
            record("p", BenchMode::Transpiled, 1.0, 1.034e6),
            record("solo", BenchMode::Native, 1.0, 1.0),
        ];
        let t = compare(&recs);
        let time = t.ratio("p", Metric::Time, BenchMode::TranslatedLayer, BenchMode::Transpiled).unwrap();
        assert!((time - 1.73).abs() < 1e-12);
        let mem = t.ratio("p", Metric::Memory, BenchMode::TranslatedLayer, BenchMode::Transpiled).unwrap();
        assert_eq!(format!("{mem:.2}"), "2.41");
        assert_eq!(t.omitted, vec!["solo"]);
        assert!(t.render().contains("2.41x"));

        let same = compare(&[record("q", BenchMode::Native, 2.0, 5.0), record("q", BenchMode::Transpiled, 2.0, 5.0)]);
        assert!(same.ratios.iter().all(|r| r.ratio == 1.0));
    }

    #[test]
    fn records_round_trip_and_omit_missing_energy() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let a = record("p", BenchMode::Native, 0.5, 1024.0);
        let mut b = record("p", BenchMode::Transpiled, 0.7, 2048.0);
        b.energy_j = Some(1.5);
        append_record(&p, &a).unwrap();
        append_record(&p, &b).unwrap();
        assert!(!fs::read_to_string(&p).unwrap().lines().next().unwrap().contains("energy_j"));
        assert_eq!(load_records(&p).unwrap(), vec![a, b]);
    }

    #[test]
    fn sleep_fixture_timing() {
        let s = run_once(Path::new("sleep"), &["0.1".into()], &Runner::Native).unwrap();
        assert!(s.wall_time_s >= 0.1 && s.wall_time_s < 0.2, "{}", s.wall_time_s);
    }

    #[test]
    fn allocation_fixture_rss() {
        let args = vec!["-c".to_string(), "b = b'\\x01' * (64 << 20)".to_string()];
        let s = run_once(Path::new("python3"), &args, &Runner::Native).unwrap();
        assert!(s.peak_rss_bytes >= (64u64 << 20) as f64, "{}", s.peak_rss_bytes);
    }

    #[test]
    fn failing_binary_is_invalid() {
        assert!(matches!(run_once(Path::new("false"), &[], &Runner::Native), Err(BenchError::SampleInvalid(_))));
        let args = vec!["-c".to_string(), "kill -SEGV $$".to_string()];
        assert!(matches!(run_once(Path::new("sh"), &args, &Runner::Native), Err(BenchError::SampleInvalid(_))));
    }

    #[test]
    fn benchmark_aggregates_and_locks() {
        let dir = tempfile::tempdir().unwrap();
        let settings = BenchSettings { n_runs: 3, energy_probe: None, lock_path: dir.path().join("b.lock") };
        let r = benchmark("t", Path::new("true"), &[], &Runner::Native, BenchMode::Native, &settings).unwrap();
        assert_eq!(r.runs, 3);
        assert_eq!(r.samples.len(), 3);
        assert!(r.energy_j.is_none());
        let times: Vec<f64> = r.samples.iter().map(|s| s.wall_time_s).collect();
        assert_eq!(r.geomean_time_s, geomean(&times).unwrap());

        let held = LockFile::try_acquire(&settings.lock_path).unwrap();
        assert!(matches!(benchmark("t", Path::new("true"), &[], &Runner::Native, BenchMode::Native, &settings), Err(BenchError::Lock(_))));
        drop(held);

        let unreliable = benchmark("f", Path::new("false"), &[], &Runner::Native, BenchMode::Native, &settings);
        assert!(matches!(unreliable, Err(BenchError::BenchUnreliable { invalid: 3, runs: 3 })));
        let zero = BenchSettings { n_runs: 0, ..settings };
        assert!(matches!(benchmark("t", Path::new("true"), &[], &Runner::Native, BenchMode::Native, &zero), Err(BenchError::NoRuns)));
    }

    #[test]
    fn energy_probe_protocol() {
        let dir = tempfile::tempdir().unwrap();
        let probe = dir.path().join("probe.sh");
        fs::write(&probe, "case \"$1\" in start) ;; stop) echo 6.0 ;; esac\n").unwrap();
        let settings = BenchSettings {
            n_runs: 2,
            energy_probe: Some(EnergyProbe { command: format!("sh {}", probe.display()) }),
            lock_path: dir.path().join("b.lock"),
        };
        let r = benchmark("t", Path::new("true"), &[], &Runner::Native, BenchMode::Native, &settings).unwrap();
        assert_eq!(r.energy_j, Some(3.0));
    }

    proptest! {
        #[test]
        fn geomean_matches_closed_form(v in prop::collection::vec(1e-3f64..1e3, 1..40), k in 1e-2f64..1e2) {
            let g = geomean(&v).unwrap();
            let closed = v.iter().product::<f64>().powf(1.0 / v.len() as f64);
            prop_assert!(((g - closed) / closed).abs() < 1e-12);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((geomean(&scaled).unwrap() / (g * k) - 1.0).abs() < 1e-12);
        }
    }
}
