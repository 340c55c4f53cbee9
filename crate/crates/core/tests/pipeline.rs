use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use gg_core::config::PipelineConfig;
use gg_core::corpus::{build_corpus, load_manifest, CorpusRequest};
use gg_core::lock::LockFile;
use gg_core::pipeline::{run_pipeline, sweep, PipelineError, SweepKnob, TerminalState, LOCK_FILE};
use gg_core::verify::{VerifyStatus, OUTCOME_FILE};
use gg_core::{CompileSpec, Isa, OptLevel};

const PROGRAMS: [&str; 4] = ["fib", "gcd", "factorial", "bits"];

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn base_config() -> PipelineConfig {
    let root = root();
    let mut cfg = PipelineConfig::load(&root.join("desk/gg.conf")).unwrap();
    cfg.set("runner.armv8", &format!("emulate:python3 {}", root.join("tools/gg-emu.py").display())).unwrap();
    cfg.runtime_dir = Some(root.join("desk/runtime"));
    cfg.coverage = false;
    cfg
}

/// Small x86_64/armv8 corpus shared by every test in this file.
fn manifest() -> &'static Path {
    static MANIFEST: OnceLock<PathBuf> = OnceLock::new();
    MANIFEST.get_or_init(|| {
        let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("pipeline-corpus");
        let _ = fs::remove_dir_all(&dir);
        let sources: Vec<PathBuf> = PROGRAMS.iter().map(|p| root().join(format!("desk/programs/{p}.c"))).collect();
        let specs = [CompileSpec::new(Isa::X86_64, OptLevel::O0), CompileSpec::new(Isa::Armv8, OptLevel::O0)];
        let bundles = root().join("desk/tests");
        let out = dir.join("corpus");
        let req = CorpusRequest { sources: &sources, bundles: Some(&bundles), origin: "desk", specs: &specs, out_dir: &out };
        let built = build_corpus(&req, &base_config()).unwrap();
        assert!(built.compile_failures.is_empty());
        built.manifest_path
    })
}

fn config_in(work: &Path) -> PipelineConfig {
    let mut cfg = base_config();
    cfg.workdir = work.to_path_buf();
    cfg
}

fn outcome_files(work: &Path) -> BTreeMap<PathBuf, String> {
    let mut out = BTreeMap::new();
    for id in PROGRAMS {
        for sub in ["reference", "0"] {
            let p = work.join(id).join(sub).join(OUTCOME_FILE);
            if let Ok(t) = fs::read_to_string(&p) {
                out.insert(p, t);
            }
        }
    }
    out
}

fn states(summary: &gg_core::pipeline::RunSummary) -> BTreeMap<String, TerminalState> {
    summary.programs.iter().map(|p| (p.program_id.clone(), p.state)).collect()
}

#[test]
fn every_manifest_record_gets_one_terminal_state() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_pipeline(&config_in(tmp.path()), manifest()).unwrap();
    let ids: Vec<String> = load_manifest(manifest()).unwrap().into_iter().map(|r| r.id).collect();
    assert_eq!(summary.manifest_size, ids.len());
    assert!(summary.is_complete());
    let mut seen: Vec<&str> = summary.programs.iter().map(|p| p.program_id.as_str()).collect();
    seen.sort();
    assert_eq!(seen, ids.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(summary.counts().values().sum::<usize>(), ids.len());
    assert!(summary.programs.iter().all(|p| p.state == TerminalState::Verified(VerifyStatus::Pass)));
    assert!(!summary.has_failures());
    for f in ["accuracy.txt", "triage.txt", "triage.jsonl", "summary.json"] {
        assert!(tmp.path().join(f).is_file(), "{f} missing");
    }
}

#[test]
fn rerun_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let first = run_pipeline(&cfg, manifest()).unwrap();
    let before = outcome_files(tmp.path());
    assert_eq!(before.len(), PROGRAMS.len() * 2);
    let second = run_pipeline(&cfg, manifest()).unwrap();
    assert_eq!(second.resumed(), PROGRAMS.len());
    assert_eq!(outcome_files(tmp.path()), before);
    assert_eq!(states(&first), states(&second));
    assert_eq!(first.accuracy, second.accuracy);
}

#[test]
fn interrupted_run_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let full = run_pipeline(&cfg, manifest()).unwrap();
    let kept = outcome_files(tmp.path());
    // what a crash between programs leaves behind
    fs::remove_file(tmp.path().join("gcd/0").join(OUTCOME_FILE)).unwrap();
    fs::remove_file(tmp.path().join("summary.json")).unwrap();
    fs::write(tmp.path().join(LOCK_FILE), "").unwrap();
    let resumed = run_pipeline(&cfg, manifest()).unwrap();
    assert_eq!(resumed.resumed(), PROGRAMS.len() - 1);
    assert!(!resumed.programs.iter().find(|p| p.program_id == "gcd").unwrap().resumed);
    assert_eq!(states(&full), states(&resumed));
    assert_eq!(outcome_files(tmp.path()).keys().collect::<Vec<_>>(), kept.keys().collect::<Vec<_>>());
    assert!(tmp.path().join("summary.json").is_file());
}

#[test]
fn held_lock_refuses_a_second_run() {
    let tmp = tempfile::tempdir().unwrap();
    let _held = LockFile::try_acquire(&tmp.path().join(LOCK_FILE)).unwrap();
    let err = run_pipeline(&config_in(tmp.path()), manifest()).unwrap_err();
    assert!(matches!(err, PipelineError::Lock(_)), "{err}");
}

#[test]
fn mutant_run_reports_failures_with_triage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config_in(tmp.path());
    cfg.set("backend", "mutant").unwrap();
    cfg.set("backend.mutation", "register_overwrite").unwrap();
    let summary = run_pipeline(&cfg, manifest()).unwrap();
    assert!(summary.is_complete());
    assert!(summary.has_failures());
    assert!(!summary.triage.is_empty());
    let jsonl = fs::read_to_string(tmp.path().join("triage.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), summary.triage.len());
}

#[test]
fn tiny_context_window_overflows_every_program() {
    let tmp = tempfile::tempdir().unwrap();
    let values = vec!["16".to_string(), "32768".to_string()];
    let table = sweep(&config_in(tmp.path()), manifest(), SweepKnob::ContextWindow, &values).unwrap();
    assert_eq!(table.rows.len(), 2);
    let tiny = &table.rows[0].summary;
    assert_eq!(tiny.count(TerminalState::Verified(VerifyStatus::ContextOverflow)), PROGRAMS.len());
    assert!(tiny.is_complete());
    let roomy = &table.rows[1].summary;
    assert_eq!(roomy.count(TerminalState::Verified(VerifyStatus::Pass)), PROGRAMS.len());
    let rendered = table.render();
    assert!(rendered.lines().count() >= 3, "{rendered}");
}

#[test]
fn single_value_sweep_and_duplicates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let one = sweep(&cfg, manifest(), SweepKnob::BeamWidth, &["1".to_string()]).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert!(one.notes.is_empty());
    let dup = sweep(&cfg, manifest(), SweepKnob::BeamWidth, &["1".to_string(), "1".to_string()]).unwrap();
    assert_eq!(dup.rows.len(), 1);
    assert_eq!(dup.notes.len(), 1);
    assert_eq!(dup.rows[0].summary.resumed(), PROGRAMS.len());
    assert!(matches!(sweep(&cfg, manifest(), SweepKnob::BeamWidth, &[]), Err(PipelineError::EmptySweep)));
}
