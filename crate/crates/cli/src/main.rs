use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use gg_core::analysis::{corpus_histogram, isa_similarity, opcode_shift};
use gg_core::bench::{self, BenchError, BenchMode, BenchSettings, EnergyProbe};
use gg_core::config::PipelineConfig;
use gg_core::corpus::{build_corpus, build_pairs, discover_sources, Corpus, CorpusError, CorpusRequest, UnitStatus};
use gg_core::guesser::{request_guess, GuessError, GuessRequest};
use gg_core::pipeline::{self, PipelineError, SweepKnob};
use gg_core::process::Runner;
use gg_core::tokenlab::{
    default_base_vocab, default_extended_vocab, derive_isa_terms, extend_vocab, fertility_report, load_vocab, parse_term_file,
    render_term_file, SHIPPED_OPCODES,
};
use gg_core::triage::{triage_outcome, triage_report, TriagePatterns};
use gg_core::verify::{verify_text, TestBundle, VerificationOutcome, VerifyContext, VerifyStatus, OUTCOME_FILE};
use gg_core::{CompileSpec, Isa, OptLevel};

const EXIT_USAGE: u8 = 1;
const EXIT_ENV: u8 = 2;
const EXIT_FAILURES: u8 = 3;

/// Build paired-assembly corpora, ask a guesser for translations and check
/// every guess by building and testing it.
#[derive(Parser)]
#[command(name = "gg", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Corpus construction and inspection.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Ask the configured backend for candidates without verifying them.
    Transpile(TranspileArgs),
    /// Build and test candidate files against their programs' bundles.
    Verify(VerifyArgs),
    /// Classify the failed verdicts found in the work directory.
    Triage(TriageArgs),
    /// Surface similarity and opcode statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Tokenizer vocabulary tools.
    #[command(subcommand)]
    Tokenlab(TokenlabCmd),
    /// Time a binary, or compare recorded benchmarks.
    Bench(BenchArgs),
    /// One pipeline run per value of a knob.
    Sweep(SweepArgs),
    /// Check that every configured tool is usable.
    Doctor,
    /// Guess, verify, triage and grade every pair in a manifest.
    Run(ManifestArg),
}

#[derive(Args)]
struct ManifestArg {
    #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Ingest C sources, compile them per ISA and write a manifest.
    Build {
        /// Directory of `.c` files (searched recursively).
        #[arg(long)]
        sources: PathBuf,
        /// Directory with one test-bundle directory per program.
        #[arg(long)]
        bundles: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "local")]
        origin: String,
        #[arg(long, value_delimiter = ',', default_value = "x86_64,armv8,armv5,riscv64")]
        isa: Vec<Isa>,
        #[arg(long, value_delimiter = ',', default_value = "O0,O2")]
        opt: Vec<OptLevel>,
    },
    /// Summarize a manifest.
    Stats(ManifestArg),
}

#[derive(Args)]
struct TranspileArgs {
    #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
    manifest: PathBuf,
    /// Only this program.
    #[arg(long)]
    program: Option<String>,
    /// Send requests the context budget would refuse.
    #[arg(long)]
    override_budget: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
    manifest: PathBuf,
    #[arg(long, requires = "candidate", conflicts_with = "candidates")]
    program: Option<String>,
    /// Assembly file to check.
    #[arg(long, requires = "program")]
    candidate: Option<PathBuf>,
    /// Directory of `<program>.s` files; each one is checked.
    #[arg(long, required_unless_present = "program")]
    candidates: Option<PathBuf>,
    /// Overrides the configured runner for the target ISA.
    #[arg(long)]
    runner: Option<String>,
    /// Per-test limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Scratch directory; defaults to `<workdir>/<program>/manual`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TriageArgs {
    #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
    manifest: PathBuf,
    /// Work directory holding the outcomes; the configured one by default.
    #[arg(long)]
    outcomes: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Mean chrF of other ISAs' assembly against a base ISA.
    Similarity {
        #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
        manifest: PathBuf,
        #[arg(long, default_value = "x86_64")]
        base: Isa,
        #[arg(long, value_delimiter = ',', default_value = "armv8,armv5,riscv64")]
        others: Vec<Isa>,
        #[arg(long, default_value = "O0")]
        opt: OptLevel,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Opcode frequency shift from O0 to O2.
    Opcodes {
        #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
        manifest: PathBuf,
        #[arg(long)]
        isa: Isa,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TokenlabCmd {
    /// Tokens per word of a base and an extended vocabulary.
    Fertility {
        #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "x86_64,armv8,armv5,riscv64")]
        isa: Vec<Isa>,
        #[arg(long)]
        opt: Option<OptLevel>,
        /// Base vocabulary file; the shipped one by default.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Extended vocabulary file; base plus shipped ISA terms by default.
        #[arg(long)]
        extended: Option<PathBuf>,
    },
    /// Derive an ISA term list (registers plus frequent opcodes) from a corpus.
    Terms {
        #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
        manifest: PathBuf,
        #[arg(long)]
        isa: Isa,
        #[arg(long, default_value_t = SHIPPED_OPCODES)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a base vocabulary extended with term files.
    Extend {
        #[arg(long)]
        base: Option<PathBuf>,
        /// Term files to add.
        #[arg(long, required = true)]
        terms: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    #[command(subcommand)]
    compare: Option<BenchCmd>,
    /// Binary to time.
    #[arg(long)]
    binary: Option<PathBuf>,
    #[arg(long)]
    program: Option<String>,
    #[arg(long, default_value = "native")]
    mode: BenchMode,
    /// `native` or `emulate:<command>`.
    #[arg(long, default_value = "native")]
    runner: Runner,
    #[arg(long, default_value_t = 100)]
    runs: u32,
    /// Command answering `start` and `stop` (joules on stdout).
    #[arg(long)]
    energy_probe: Option<String>,
    /// JSONL file the record is appended to.
    #[arg(long, default_value = "bench.jsonl")]
    records: PathBuf,
    #[arg(long, default_value = bench::DEFAULT_LOCK_PATH)]
    lock: PathBuf,
    /// Arguments for the binary.
    #[arg(last = true)]
    args: Vec<String>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Ratio table over recorded benchmarks.
    Compare {
        #[arg(long, default_value = "bench.jsonl")]
        records: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[arg(short, long, visible_aliases = ["corpus", "pairs"])]
    manifest: PathBuf,
    /// beam_width, context_window or backend.
    #[arg(long)]
    knob: SweepKnob,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.apply_env();
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Missing tools and busy work directories are environment failures.
fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        let env = matches!(
            cause.downcast_ref::<PipelineError>(),
            Some(
                PipelineError::Lock(_)
                    | PipelineError::NoToolchain(_)
                    | PipelineError::Backend(GuessError::BackendUnavailable(_))
                    | PipelineError::Corpus(CorpusError::ToolchainUnavailable(_))
            )
        ) || matches!(cause.downcast_ref::<CorpusError>(), Some(CorpusError::ToolchainUnavailable(_)))
            || matches!(cause.downcast_ref::<GuessError>(), Some(GuessError::BackendUnavailable(_)))
            || matches!(cause.downcast_ref::<BenchError>(), Some(BenchError::Lock(_) | BenchError::EnergyProbe(_)));
        if env {
            return EXIT_ENV;
        }
    }
    EXIT_USAGE
}

fn run(cli: &Cli) -> Result<u8> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Cmd::Corpus(CorpusCmd::Build { sources, bundles, out, origin, isa, opt }) => {
            let files = discover_sources(sources).with_context(|| format!("reading {}", sources.display()))?;
            if files.is_empty() {
                bail!("no .c files under {}", sources.display());
            }
            let specs: Vec<CompileSpec> = isa.iter().flat_map(|&i| opt.iter().map(move |&o| CompileSpec::new(i, o))).collect();
            let req = CorpusRequest { sources: &files, bundles: bundles.as_deref(), origin, specs: &specs, out_dir: out };
            let built = build_corpus(&req, &cfg)?;
            let accepted = built.records.iter().filter(|r| r.status == UnitStatus::Accepted).count();
            println!("{} sources, {accepted} accepted, {} compile failures", built.records.len(), built.compile_failures.len());
            for f in &built.compile_failures {
                println!("  {} [{}]: {}", f.program_id, f.spec_key, f.message.lines().next().unwrap_or_default());
            }
            println!("manifest: {}", built.manifest_path.display());
            Ok(0)
        }
        Cmd::Corpus(CorpusCmd::Stats(m)) => {
            let corpus = Corpus::open(&m.manifest)?;
            print!("{}", corpus_stats(&corpus));
            Ok(0)
        }
        Cmd::Transpile(a) => transpile(&cfg, a),
        Cmd::Verify(a) => verify(&cfg, a),
        Cmd::Triage(a) => triage(&cfg, a),
        Cmd::Analyze(AnalyzeCmd::Similarity { manifest, base, others, opt, csv }) => {
            let corpus = Corpus::open(manifest)?;
            let report = isa_similarity(&corpus, *base, others, *opt)?;
            print!("{}", report.render());
            if let Some(p) = csv {
                fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(0)
        }
        Cmd::Analyze(AnalyzeCmd::Opcodes { manifest, isa, top, csv }) => {
            let corpus = Corpus::open(manifest)?;
            let h0 = corpus_histogram(&corpus, *isa, OptLevel::O0)?;
            let h2 = corpus_histogram(&corpus, *isa, OptLevel::O2)?;
            let shift = opcode_shift(&h0, &h2, *top)?;
            print!("{}", shift.render());
            if let Some(p) = csv {
                fs::write(p, shift.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            }
            Ok(0)
        }
        Cmd::Tokenlab(TokenlabCmd::Fertility { manifest, isa, opt, base, extended }) => {
            let corpus = Corpus::open(manifest)?;
            let base = match base {
                Some(p) => load_vocab(p)?,
                None => default_base_vocab(),
            };
            let extended = match extended {
                Some(p) => load_vocab(p)?,
                None => default_extended_vocab(isa),
            };
            let mut texts = Vec::new();
            for &i in isa {
                let docs = corpus.artifacts_for(i, *opt)?.into_iter().map(|a| a.normalized_text).collect();
                texts.push((i, docs));
            }
            print!("{}", fertility_report(&texts, &base, &extended)?.render());
            Ok(0)
        }
        Cmd::Tokenlab(TokenlabCmd::Terms { manifest, isa, top, out }) => {
            let corpus = Corpus::open(manifest)?;
            let mut hist = gg_core::asmtext::OpcodeHistogram::default();
            for a in corpus.artifacts_for(*isa, None)? {
                hist.merge(&a.opcode_histogram);
            }
            let terms = derive_isa_terms(*isa, &hist, *top);
            let provenance = format!("registers plus the {top} most frequent opcodes over {} programs", corpus.records.len());
            let text = render_term_file(*isa, &terms, &provenance);
            match out {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Cmd::Tokenlab(TokenlabCmd::Extend { base, terms, out }) => {
            let base = match base {
                Some(p) => load_vocab(p)?,
                None => default_base_vocab(),
            };
            let mut all = Vec::new();
            for t in terms {
                all.extend(parse_term_file(&fs::read_to_string(t).with_context(|| format!("reading {}", t.display()))?));
            }
            let ext = extend_vocab(&base, &all);
            fs::write(out, ext.to_file_string()).with_context(|| format!("writing {}", out.display()))?;
            println!("{} entries ({} added) -> {}", ext.len(), ext.len() - base.len(), out.display());
            Ok(0)
        }
        Cmd::Bench(a) => bench_cmd(a),
        Cmd::Sweep(a) => {
            let table = pipeline::sweep(&cfg, &a.manifest, a.knob, &a.values)?;
            print!("{}", table.render());
            Ok(0)
        }
        Cmd::Doctor => {
            let report = pipeline::doctor(&cfg);
            print!("{}", report.render());
            Ok(if report.has_failures() { EXIT_ENV } else { 0 })
        }
        Cmd::Run(m) => {
            let summary = pipeline::run_pipeline(&cfg, &m.manifest)?;
            print!("{}", summary.render());
            if summary.resumed() > 0 {
                println!("({} programs taken from an earlier run)", summary.resumed());
            }
            Ok(if summary.has_failures() { EXIT_FAILURES } else { 0 })
        }
    }
}

fn corpus_stats(corpus: &Corpus) -> String {
    let mut by_status: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_spec: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &corpus.records {
        *by_status.entry(r.status.as_str()).or_default() += 1;
        for (key, a) in &r.artifacts {
            let e = by_spec.entry(key.clone()).or_default();
            e.0 += 1;
            e.1 += a.instruction_count;
        }
    }
    let mut s = format!("programs: {}\n", corpus.records.len());
    for (st, n) in by_status {
        s.push_str(&format!("  {st:<20}{n:>6}\n"));
    }
    s.push_str(&format!("{:<16}{:>10}{:>16}\n", "artifact", "count", "mean instrs"));
    for (key, (n, instrs)) in by_spec {
        s.push_str(&format!("{key:<16}{n:>10}{:>16.1}\n", instrs as f64 / n.max(1) as f64));
    }
    s
}

fn pairs_for(cfg: &PipelineConfig, manifest: &Path) -> Result<(Corpus, gg_core::corpus::Pairing)> {
    let corpus = Corpus::open(manifest)?;
    let pairing = build_pairs(&corpus, &CompileSpec::new(cfg.source_isa, cfg.opt), &CompileSpec::new(cfg.target_isa, cfg.opt))?;
    Ok((corpus, pairing))
}

fn transpile(cfg: &PipelineConfig, a: &TranspileArgs) -> Result<u8> {
    let (_, pairing) = pairs_for(cfg, &a.manifest)?;
    let refs: HashMap<String, String> =
        pairing.pairs.iter().map(|p| (p.program_id().to_string(), p.target_reference.normalized_text.clone())).collect();
    let backend = pipeline::build_backend(cfg, refs)?;
    let vocab = match &cfg.vocab {
        Some(p) => load_vocab(p)?,
        None => default_extended_vocab(&[cfg.source_isa, cfg.target_isa]),
    };
    let mut failed = 0;
    for pair in pairing.pairs.iter().filter(|p| a.program.as_deref().is_none_or(|id| id == p.program_id())) {
        let id = pair.program_id();
        let mut req = GuessRequest::new(id, cfg.source_isa, cfg.target_isa, cfg.opt, pair.source.normalized_text.clone());
        req.beam_width = cfg.beam_width;
        req.context_window = u32::try_from(cfg.context_window).unwrap_or(u32::MAX);
        req.max_new_tokens = u32::try_from(cfg.max_new_tokens).unwrap_or(u32::MAX);
        match request_guess(backend.as_ref(), &req, &vocab, cfg.expansion_factor(cfg.target_isa), a.override_budget) {
            Ok(cands) => {
                let dir = cfg.workdir.join(id);
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("candidates.json"), serde_json::to_string_pretty(&cands)?)?;
                println!("{id}: {} candidate(s) -> {}", cands.len(), dir.join("candidates.json").display());
            }
            Err(e) => {
                failed += 1;
                println!("{id}: {e}");
            }
        }
    }
    Ok(if failed > 0 { EXIT_FAILURES } else { 0 })
}

fn verify(cfg: &PipelineConfig, a: &VerifyArgs) -> Result<u8> {
    let corpus = Corpus::open(&a.manifest)?;
    let mut cfg = cfg.clone();
    if let Some(r) = &a.runner {
        cfg.set(&format!("runner.{}", cfg.target_isa), r)?;
    }
    if let Some(t) = a.timeout {
        cfg.set("timeout", &t.to_string())?;
    }
    let spec = CompileSpec::new(cfg.target_isa, cfg.opt);
    let tc = cfg.toolchain(cfg.target_isa).ok_or(PipelineError::NoToolchain(cfg.target_isa))?.clone();
    let mut ctx = VerifyContext::new(spec, tc, cfg.runner(cfg.target_isa), std::time::Duration::from_secs_f64(cfg.timeout_s));
    ctx.runtime_dir = cfg.runtime_dir.as_ref().map(|d| std::path::absolute(d).unwrap_or_else(|_| d.clone()));

    let jobs: Vec<(String, PathBuf)> = match (&a.program, &a.candidate, &a.candidates) {
        (Some(p), Some(c), _) => vec![(p.clone(), c.clone())],
        (_, _, Some(dir)) => {
            let mut v: Vec<(String, PathBuf)> = corpus
                .records
                .iter()
                .map(|r| (r.id.clone(), dir.join(format!("{}.s", r.id))))
                .filter(|(_, p)| p.is_file())
                .collect();
            v.sort();
            if v.is_empty() {
                bail!("no <program>.s files in {} match the manifest", dir.display());
            }
            v
        }
        _ => bail!("give --program with --candidate, or --candidates"),
    };
    let mut failed = 0;
    for (id, path) in &jobs {
        if corpus.record(id).is_none() {
            bail!("program '{id}' is not in {}", a.manifest.display());
        }
        let bundle = TestBundle::load(&corpus.bundle_path(id))?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let scratch = match &a.out {
            Some(o) if jobs.len() == 1 => o.clone(),
            Some(o) => o.join(id),
            None => cfg.workdir.join(id).join("manual"),
        };
        let outcome = verify_text(id, 0, &text, &bundle, &ctx, &scratch)?;
        outcome.save(&scratch.join(OUTCOME_FILE))?;
        println!("{id}: {} ({}/{} tests)", outcome.status, outcome.tests_passed, outcome.tests_total);
        if let Some(d) = outcome.diff_summary.as_deref().filter(|d| !d.is_empty()) {
            println!("{d}");
        }
        info!("artifacts in {}", scratch.display());
        if outcome.status != VerifyStatus::Pass {
            failed += 1;
        }
    }
    if jobs.len() > 1 {
        println!("{} of {} passed", jobs.len() - failed, jobs.len());
    }
    Ok(if failed == 0 { 0 } else { EXIT_FAILURES })
}

fn triage(cfg: &PipelineConfig, a: &TriageArgs) -> Result<u8> {
    let (_, pairing) = pairs_for(cfg, &a.manifest)?;
    let work = a.outcomes.clone().unwrap_or_else(|| cfg.workdir.clone());
    let patterns = TriagePatterns::with_overrides(&cfg.triage_patterns)?;
    let mut records = Vec::new();
    for pair in &pairing.pairs {
        let dir = work.join(pair.program_id());
        let Ok(outcome) = VerificationOutcome::load(&dir.join("0").join(OUTCOME_FILE)) else { continue };
        if outcome.status == VerifyStatus::Pass {
            continue;
        }
        let candidate = fs::read_to_string(dir.join("0").join("candidate.s")).unwrap_or_default();
        let candidate = gg_core::asmtext::normalize(&candidate, cfg.target_isa);
        let rec = triage_outcome(&outcome, &pair.target_reference.normalized_text, &candidate, cfg.target_isa, &patterns);
        let classes: Vec<&str> = rec.classes.iter().map(|c| c.as_str()).collect();
        println!("{}: {} [{}] edit distance {}", rec.program_id, outcome.status, classes.join(", "), rec.edit_distance);
        records.push(rec);
    }
    if records.is_empty() {
        println!("no failed verdicts under {}", work.display());
        return Ok(0);
    }
    let report = triage_report(&records).render();
    println!();
    print!("{report}");
    if let Some(p) = &a.out {
        fs::write(p, &report).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(0)
}

fn bench_cmd(a: &BenchArgs) -> Result<u8> {
    if let Some(BenchCmd::Compare { records }) = &a.compare {
        let recs = bench::load_records(records)?;
        print!("{}", bench::compare(&recs).render());
        return Ok(0);
    }
    let binary = a.binary.as_ref().ok_or_else(|| anyhow!("--binary is required"))?;
    let program = a.program.clone().unwrap_or_else(|| binary.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let settings = BenchSettings {
        n_runs: a.runs,
        energy_probe: a.energy_probe.clone().map(|command| EnergyProbe { command }),
        lock_path: a.lock.clone(),
    };
    let record = bench::benchmark(&program, binary, &a.args, &a.runner, a.mode, &settings)?;
    bench::append_record(&a.records, &record)?;
    println!(
        "{program} [{}]: {} runs, geomean {:.6} s, {:.0} bytes peak RSS{}",
        record.mode,
        record.runs,
        record.geomean_time_s,
        record.geomean_peak_rss_bytes,
        record.energy_j.map(|j| format!(", {j:.3} J/run")).unwrap_or_default()
    );
    Ok(0)
}
