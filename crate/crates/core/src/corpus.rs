//! Paired-assembly corpus construction.
//!
//! Sources are ingested, filtered by line count, deduplicated by a hash of
//! their comment-free, whitespace-collapsed text, and compiled with `-S` for
//! every requested (ISA, optimization level). The result is described by a
//! line-delimited JSON manifest:
//!
//! ```text
//! <root>/manifest.jsonl
//! <root>/programs/<id>/source.c
//! <root>/programs/<id>/bundle/...        unit tests, when provided
//! <root>/asm/<id>/<isa>_<opt>.s          compiler output
//! <root>/asm/<id>/<isa>_<opt>.log        diagnostics of a failed compile
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::asmtext::{self, OpcodeHistogram};
use crate::config::{PipelineConfig, Toolchain};
use crate::isa::CompileSpec;
use crate::process::{render_argv, run_captured, split_command};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("compilation failed:\n{log}")]
    CompileFailed { log: String },
    #[error("toolchain unavailable: {0}")]
    ToolchainUnavailable(String),
    #[error("cannot pair {source_key} with {target_key}: optimization levels differ")]
    InvalidPairing { source_key: String, target_key: String },
    #[error("manifest corrupt at line {line}: {msg}")]
    ManifestCorrupt { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Accepted,
    RejectedShort,
    RejectedLong,
    RejectedDuplicate,
}

impl UnitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UnitStatus::Accepted => "accepted",
            UnitStatus::RejectedShort => "rejected_short",
            UnitStatus::RejectedLong => "rejected_long",
            UnitStatus::RejectedDuplicate => "rejected_duplicate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramUnit {
    pub id: String,
    pub source_text: String,
    pub line_count: usize,
    pub content_hash: String,
    pub origin: String,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub min_lines: usize,
    pub max_lines: usize,
    pub strip_boilerplate: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { min_lines: 10, max_lines: 16000, strip_boilerplate: false }
    }
}

impl From<&PipelineConfig> for FilterConfig {
    fn from(c: &PipelineConfig) -> Self {
        FilterConfig { min_lines: c.min_lines, max_lines: c.max_lines, strip_boilerplate: c.strip_boilerplate }
    }
}

impl FilterConfig {
    pub fn status_for(&self, line_count: usize) -> UnitStatus {
        if line_count < self.min_lines {
            UnitStatus::RejectedShort
        } else if line_count > self.max_lines {
            UnitStatus::RejectedLong
        } else {
            UnitStatus::Accepted
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestFailure {
    pub path: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub units: Vec<ProgramUnit>,
    pub failures: Vec<IngestFailure>,
}

/// Removes the leading run of comment-only lines (license headers and the
/// like) together with the blank lines around it.
pub fn strip_boilerplate(text: &str) -> String {
    let mut rest = text;
    loop {
        let trimmed = rest.trim_start();
        if let Some(after) = trimmed.strip_prefix("//") {
            rest = after.split_once('\n').map(|(_, r)| r).unwrap_or("");
        } else if let Some(after) = trimmed.strip_prefix("/*") {
            match after.find("*/") {
                Some(end) => {
                    let tail = &after[end + 2..];
                    // keep code that shares the closing line
                    match tail.split_once('\n') {
                        Some((same_line, r)) if same_line.trim().is_empty() => rest = r,
                        Some(_) => {
                            rest = tail.trim_start_matches([' ', '\t']);
                            break;
                        }
                        None => {
                            rest = tail.trim_start();
                            break;
                        }
                    }
                }
                None => {
                    rest = "";
                    break;
                }
            }
        } else {
            break;
        }
    }
    // drop blank lines between the header and the code
    let mut out = rest;
    while let Some((first, r)) = out.split_once('\n') {
        if first.trim().is_empty() {
            out = r;
        } else {
            break;
        }
    }
    if out.trim().is_empty() {
        String::new()
    } else {
        out.to_string()
    }
}

/// Comment-free, whitespace-collapsed C source used for duplicate detection.
pub fn normalize_c_source(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut pending_space = false;
    let push = |out: &mut String, c: char, pending: &mut bool| {
        if *pending && !out.is_empty() {
            out.push(' ');
        }
        *pending = false;
        out.push(c);
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            pending_space = true;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i = (i + 2).min(chars.len());
            pending_space = true;
            continue;
        }
        if c == '"' || c == '\'' {
            push(&mut out, c, &mut pending_space);
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                out.push(d);
                i += 1;
                if d == '\\' && i < chars.len() {
                    out.push(chars[i]);
                    i += 1;
                } else if d == c || d == '\n' {
                    break;
                }
            }
            continue;
        }
        if c.is_whitespace() {
            pending_space = true;
        } else {
            push(&mut out, c, &mut pending_space);
        }
        i += 1;
    }
    out
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_c_source(text).as_bytes()))
}

fn unique_id(stem: &str, hash: &str, taken: &mut HashSet<String>) -> String {
    let mut id = stem.to_string();
    if taken.contains(&id) {
        id = format!("{stem}-{}", &hash[..8]);
        let mut n = 2;
        while taken.contains(&id) {
            id = format!("{stem}-{}-{n}", &hash[..8]);
            n += 1;
        }
    }
    taken.insert(id.clone());
    id
}

/// Reads every path into a [`ProgramUnit`]. Unreadable files are recorded
/// as failures and skipped; the rest of the batch still goes through.
pub fn ingest_sources(paths: &[PathBuf], origin: &str, filter: &FilterConfig) -> Ingested {
    let mut out = Ingested::default();
    let mut taken = HashSet::new();
    for path in paths {
        let text = match fs::read(path).map(String::from_utf8) {
            Ok(Ok(t)) => t,
            Ok(Err(e)) => {
                out.failures.push(IngestFailure { path: path.clone(), message: format!("not UTF-8 text: {e}") });
                continue;
            }
            Err(e) => {
                out.failures.push(IngestFailure { path: path.clone(), message: e.to_string() });
                continue;
            }
        };
        let source_text = if filter.strip_boilerplate { strip_boilerplate(&text) } else { text };
        let line_count = source_text.lines().count();
        let hash = content_hash(&source_text);
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "unit".into());
        out.units.push(ProgramUnit {
            id: unique_id(&stem, &hash, &mut taken),
            line_count,
            content_hash: hash,
            origin: origin.to_string(),
            status: filter.status_for(line_count),
            source_text,
        });
    }
    out
}

/// Marks every accepted unit whose hash was already seen as a duplicate.
pub fn dedupe(mut units: Vec<ProgramUnit>) -> Vec<ProgramUnit> {
    let mut seen = HashSet::new();
    for u in units.iter_mut().filter(|u| u.status == UnitStatus::Accepted) {
        if !seen.insert(u.content_hash.clone()) {
            u.status = UnitStatus::RejectedDuplicate;
        }
    }
    units
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyArtifact {
    pub program_id: String,
    pub spec: CompileSpec,
    pub raw_text: String,
    pub normalized_text: String,
    pub instruction_count: usize,
    pub opcode_histogram: OpcodeHistogram,
}

impl AssemblyArtifact {
    pub fn from_raw(program_id: &str, spec: CompileSpec, raw_text: String) -> Self {
        let normalized_text = asmtext::normalize(&raw_text, spec.isa);
        let instructions = asmtext::extract_instructions(&normalized_text);
        AssemblyArtifact {
            program_id: program_id.to_string(),
            spec,
            raw_text,
            instruction_count: instructions.len(),
            opcode_histogram: asmtext::opcode_histogram(&instructions),
            normalized_text,
        }
    }
}

/// Compiles one source file to assembly with the configured toolchain.
///
/// The command line is `<command> -S -<opt> <flags> -o <out.s> <in.c>`.
pub fn compile_unit(
    unit: &ProgramUnit,
    spec: &CompileSpec,
    toolchain: &Toolchain,
    source_path: &Path,
    out_path: &Path,
) -> Result<AssemblyArtifact, CorpusError> {
    let argv = split_command(&toolchain.command);
    let Some((program, lead)) = argv.split_first() else {
        return Err(CorpusError::ToolchainUnavailable(format!("toolchain '{}' has an empty command", spec.toolchain_id)));
    };
    let mut cmd = Command::new(program);
    cmd.args(lead).arg("-S").arg(spec.opt.flag()).args(split_command(&toolchain.flags)).arg("-o").arg(out_path).arg(source_path);
    let rendered = render_argv(&cmd);
    let captured = match run_captured(cmd, None) {
        Ok(c) => c,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(CorpusError::ToolchainUnavailable(format!("{program}: {e}")));
        }
        Err(e) => return Err(e.into()),
    };
    if !captured.success() {
        return Err(CorpusError::CompileFailed { log: format!("$ {rendered}\n{}{}", captured.stdout, captured.stderr) });
    }
    let raw = fs::read_to_string(out_path)?;
    Ok(AssemblyArtifact::from_raw(&unit.id, spec.clone(), raw))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub instruction_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub origin: String,
    pub content_hash: String,
    pub status: UnitStatus,
    /// Keyed by `"isa:opt"`.
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

/// Writes records sorted by id, one JSON object per line.
pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), CorpusError> {
    let mut sorted: Vec<&ManifestRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let mut buf = Vec::new();
    for r in sorted {
        serde_json::to_writer(&mut buf, r).map_err(io::Error::other)?;
        buf.push(b'\n');
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::ManifestCorrupt { line: i + 1, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

fn copy_dir(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for entry in fs::read_dir(src)? {
        let entry = entry?;
        let to = dst.join(entry.file_name());
        if entry.file_type()?.is_dir() {
            copy_dir(&entry.path(), &to)?;
        } else {
            fs::copy(entry.path(), to)?;
        }
    }
    Ok(())
}

/// `*.c` files directly under `dir`, sorted by name.
pub fn discover_sources(dir: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "c"))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileFailure {
    pub program_id: String,
    pub spec_key: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct CorpusBuild {
    pub records: Vec<ManifestRecord>,
    pub ingest_failures: Vec<IngestFailure>,
    pub compile_failures: Vec<CompileFailure>,
    pub manifest_path: PathBuf,
}

pub struct CorpusRequest<'a> {
    pub sources: &'a [PathBuf],
    /// Directory holding one test-bundle subdirectory per program id.
    pub bundles: Option<&'a Path>,
    pub origin: &'a str,
    pub specs: &'a [CompileSpec],
    pub out_dir: &'a Path,
}

fn artifact_stem(spec: &CompileSpec) -> String {
    format!("{}_{}", spec.isa, spec.opt)
}

/// Ingest, dedupe, compile and write the manifest.
pub fn build_corpus(req: &CorpusRequest<'_>, cfg: &PipelineConfig) -> Result<CorpusBuild, CorpusError> {
    let filter = FilterConfig::from(cfg);
    let ingested = ingest_sources(req.sources, req.origin, &filter);
    for f in &ingested.failures {
        warn!("skipping {}: {}", f.path.display(), f.message);
    }
    let units = dedupe(ingested.units);

    fs::create_dir_all(req.out_dir)?;
    for u in units.iter().filter(|u| u.status == UnitStatus::Accepted) {
        let dir = req.out_dir.join("programs").join(&u.id);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("source.c"), &u.source_text)?;
        if let Some(bundles) = req.bundles {
            let src = bundles.join(&u.id);
            if src.is_dir() {
                let dst = dir.join("bundle");
                if dst.exists() {
                    fs::remove_dir_all(&dst)?;
                }
                copy_dir(&src, &dst)?;
            }
        }
        fs::create_dir_all(req.out_dir.join("asm").join(&u.id))?;
    }

    let jobs: Vec<(&ProgramUnit, &CompileSpec)> = units
        .iter()
        .filter(|u| u.status == UnitStatus::Accepted)
        .flat_map(|u| req.specs.iter().map(move |s| (u, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.pool_compile.max(1)).build().map_err(io::Error::other)?;
    let results: Vec<(String, String, Result<ArtifactEntry, CorpusError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|(u, spec)| {
                let rel = format!("asm/{}/{}.s", u.id, artifact_stem(spec));
                let out = req.out_dir.join(&rel);
                let src = req.out_dir.join("programs").join(&u.id).join("source.c");
                let res = match cfg.toolchain(spec.isa) {
                    None => Err(CorpusError::ToolchainUnavailable(format!("no toolchain configured for {}", spec.isa))),
                    Some(tc) => compile_unit(u, spec, tc, &src, &out),
                };
                let res = res.map(|a| ArtifactEntry { path: rel, instruction_count: a.instruction_count });
                (u.id.clone(), spec.key(), res)
            })
            .collect()
    });

    let mut artifacts: HashMap<String, BTreeMap<String, ArtifactEntry>> = HashMap::new();
    let mut compile_failures = Vec::new();
    for (id, key, res) in results {
        match res {
            Ok(entry) => {
                artifacts.entry(id).or_default().insert(key, entry);
            }
            Err(e) => {
                let spec = CompileSpec::parse_key(&key).expect("own key");
                let log_path = req.out_dir.join("asm").join(&id).join(format!("{}.log", artifact_stem(&spec)));
                let _ = fs::write(&log_path, e.to_string());
                warn!("{id} [{key}]: {}", e.to_string().lines().next().unwrap_or_default());
                compile_failures.push(CompileFailure { program_id: id, spec_key: key, message: e.to_string() });
            }
        }
    }

    let records: Vec<ManifestRecord> = units
        .iter()
        .map(|u| ManifestRecord {
            id: u.id.clone(),
            origin: u.origin.clone(),
            content_hash: u.content_hash.clone(),
            status: u.status,
            artifacts: artifacts.remove(&u.id).unwrap_or_default(),
        })
        .collect();
    let manifest_path = req.out_dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &records)?;
    info!("wrote {} records to {}", records.len(), manifest_path.display());
    Ok(CorpusBuild { records, ingest_failures: ingested.failures, compile_failures, manifest_path })
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl Corpus {
    pub fn open(manifest: &Path) -> Result<Self, CorpusError> {
        let records = load_manifest(manifest)?;
        let root = manifest.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(Corpus { root, records })
    }

    pub fn record(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn source_path(&self, id: &str) -> PathBuf {
        self.root.join("programs").join(id).join("source.c")
    }

    pub fn bundle_path(&self, id: &str) -> PathBuf {
        self.root.join("programs").join(id).join("bundle")
    }

    /// Loads and normalizes one artifact; `None` when it was never produced.
    pub fn artifact(&self, id: &str, spec: &CompileSpec) -> Result<Option<AssemblyArtifact>, CorpusError> {
        let Some(entry) = self.record(id).and_then(|r| r.artifacts.get(&spec.key())) else {
            return Ok(None);
        };
        let raw = fs::read_to_string(self.root.join(&entry.path))?;
        Ok(Some(AssemblyArtifact::from_raw(id, spec.clone(), raw)))
    }

    /// Every produced artifact for one ISA (any optimization level when `opt` is `None`).
    pub fn artifacts_for(&self, isa: crate::Isa, opt: Option<crate::OptLevel>) -> Result<Vec<AssemblyArtifact>, CorpusError> {
        let mut out = Vec::new();
        for r in self.records.iter().filter(|r| r.status == UnitStatus::Accepted) {
            for key in r.artifacts.keys() {
                let Ok(spec) = CompileSpec::parse_key(key) else { continue };
                if spec.isa == isa && opt.is_none_or(|o| o == spec.opt) {
                    if let Some(a) = self.artifact(&r.id, &spec)? {
                        out.push(a);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranspilePair {
    pub source: AssemblyArtifact,
    pub target_reference: AssemblyArtifact,
    pub test_bundle_path: PathBuf,
}

impl TranspilePair {
    pub fn program_id(&self) -> &str {
        &self.source.program_id
    }
}

#[derive(Debug, Default)]
pub struct Pairing {
    pub pairs: Vec<TranspilePair>,
    /// Programs left out, with the reason.
    pub excluded: Vec<(String, String)>,
}

/// Pairs source and target artifacts of every accepted program that has both.
pub fn build_pairs(corpus: &Corpus, source_spec: &CompileSpec, target_spec: &CompileSpec) -> Result<Pairing, CorpusError> {
    if source_spec.opt != target_spec.opt {
        return Err(CorpusError::InvalidPairing { source_key: source_spec.key(), target_key: target_spec.key() });
    }
    let mut out = Pairing::default();
    for r in &corpus.records {
        if r.status != UnitStatus::Accepted {
            out.excluded.push((r.id.clone(), format!("unit {}", r.status.as_str())));
            continue;
        }
        let source = corpus.artifact(&r.id, source_spec)?;
        let target = corpus.artifact(&r.id, target_spec)?;
        match (source, target) {
            (Some(source), Some(target_reference)) => out.pairs.push(TranspilePair {
                source,
                target_reference,
                test_bundle_path: corpus.bundle_path(&r.id),
            }),
            (s, _) => {
                let missing = if s.is_none() { source_spec.key() } else { target_spec.key() };
                warn!("{}: no {missing} artifact, excluded from pairing", r.id);
                out.excluded.push((r.id.clone(), format!("missing {missing} artifact")));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{Isa, OptLevel};
    use proptest::prelude::*;

    fn lines(n: usize) -> String {
        (0..n).map(|i| format!("int v{i} = {i};\n")).collect()
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn line_count_filter() {
        let dir = tempfile::tempdir().unwrap();
        let short = write(dir.path(), "short.c", &lines(5));
        let empty = write(dir.path(), "empty.c", "");
        let ok = write(dir.path(), "ok.c", &lines(10));
        let long = write(dir.path(), "long.c", &lines(21));
        let filter = FilterConfig { max_lines: 20, ..FilterConfig::default() };
        let got = ingest_sources(&[short, empty, ok, long], "t", &filter);
        let st: Vec<_> = got.units.iter().map(|u| u.status).collect();
        assert_eq!(st, vec![UnitStatus::RejectedShort, UnitStatus::RejectedShort, UnitStatus::Accepted, UnitStatus::RejectedLong]);
        assert_eq!(got.units[1].line_count, 0);
    }

    #[test]
    fn boilerplate_header_is_stripped_before_counting() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("/* Copyright (c) someone\n * SPDX-License-Identifier: MIT */\n{}", lines(10));
        assert_eq!(body.lines().count(), 12);
        let p = write(dir.path(), "lic.c", &body);
        let on = ingest_sources(std::slice::from_ref(&p), "t", &FilterConfig { strip_boilerplate: true, ..Default::default() });
        assert_eq!(on.units[0].line_count, 10);
        assert_eq!(on.units[0].status, UnitStatus::Accepted);
        let off = ingest_sources(&[p], "t", &FilterConfig::default());
        assert_eq!(off.units[0].line_count, 12);
    }

    #[test]
    fn strip_handles_line_comments_and_trailing_code() {
        assert_eq!(strip_boilerplate("// a\n// b\n\nint x;\n"), "int x;\n");
        assert_eq!(strip_boilerplate("/* a */ int x;\nint y;\n"), "int x;\nint y;\n");
        assert_eq!(strip_boilerplate("int x; // not a header\n"), "int x; // not a header\n");
        assert_eq!(strip_boilerplate("/* only a comment */\n"), "");
    }

    #[test]
    fn unreadable_file_does_not_stop_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(dir.path(), "ok.c", &lines(10));
        let got = ingest_sources(&[dir.path().join("missing.c"), ok], "t", &FilterConfig::default());
        assert_eq!(got.failures.len(), 1);
        assert_eq!(got.units.len(), 1);
    }

    #[test]
    fn dedupe_rules() {
        let dir = tempfile::tempdir().unwrap();
        let base = lines(10);
        let a = write(dir.path(), "a.c", &base);
        let b = write(dir.path(), "b.c", &base);
        let c = write(dir.path(), "c.c", &format!("// a different comment\n{}", base.replace(";\n", "; /* note */\n")));
        let d = write(dir.path(), "d.c", &lines(11));
        let got = dedupe(ingest_sources(&[a, b, c, d], "t", &FilterConfig::default()).units);
        let st: Vec<_> = got.iter().map(|u| u.status).collect();
        assert_eq!(
            st,
            vec![UnitStatus::Accepted, UnitStatus::RejectedDuplicate, UnitStatus::RejectedDuplicate, UnitStatus::Accepted]
        );
    }

    #[test]
    fn comment_normalization_by_hand() {
        assert_eq!(normalize_c_source("int  x; // c\n/* d */ int y;"), "int x; int y;");
        // comment markers inside literals are content
        assert_eq!(normalize_c_source("char *s = \"// no\";"), "char *s = \"// no\";");
        assert_eq!(normalize_c_source("int a = '/'; /* x */"), "int a = '/';");
    }

    #[test]
    fn ids_stay_unique() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = write(d1.path(), "same.c", &lines(10));
        let b = write(d2.path(), "same.c", &lines(12));
        let got = ingest_sources(&[a, b], "t", &FilterConfig::default());
        assert_eq!(got.units[0].id, "same");
        assert_ne!(got.units[1].id, "same");
    }

    #[test]
    fn filter_and_dedupe_are_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let paths = vec![
            write(dir.path(), "a.c", &lines(10)),
            write(dir.path(), "b.c", &lines(10)),
            write(dir.path(), "c.c", &lines(3)),
        ];
        let run = || dedupe(ingest_sources(&paths, "t", &FilterConfig::default()).units);
        let first: Vec<_> = run().into_iter().map(|u| u.status).collect();
        let second: Vec<_> = run().into_iter().map(|u| u.status).collect();
        assert_eq!(first, second);
        let twice: Vec<_> = dedupe(run()).into_iter().map(|u| u.status).collect();
        assert_eq!(first, twice);
    }

    fn record(id: &str) -> ManifestRecord {
        let mut artifacts = BTreeMap::new();
        artifacts.insert("x86_64:O0".into(), ArtifactEntry { path: format!("asm/{id}/x86_64_O0.s"), instruction_count: 3 });
        ManifestRecord { id: id.into(), origin: "t".into(), content_hash: "ab".into(), status: UnitStatus::Accepted, artifacts }
    }

    #[test]
    fn manifest_edge_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        write_manifest(&p, &[]).unwrap();
        assert!(load_manifest(&p).unwrap().is_empty());

        write_manifest(&p, &[record("b"), record("a")]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("{\"id\":\"a\""));
        let truncated = &text[..text.len() - 10];
        fs::write(&p, truncated).unwrap();
        match load_manifest(&p) {
            Err(CorpusError::ManifestCorrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected ManifestCorrupt, got {other:?}"),
        }
    }

    #[test]
    fn manifest_wire_fields() {
        let v: serde_json::Value = serde_json::to_value(record("p")).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, vec!["artifacts", "content_hash", "id", "origin", "status"]);
        assert_eq!(v["artifacts"]["x86_64:O0"]["instruction_count"], 3);
        assert_eq!(v["status"], "accepted");
    }

    #[test]
    fn pairing_rejects_mixed_opt_levels() {
        let corpus = Corpus { root: PathBuf::from("."), records: vec![] };
        let err = build_pairs(&corpus, &CompileSpec::new(Isa::X86_64, OptLevel::O0), &CompileSpec::new(Isa::Armv8, OptLevel::O2));
        assert!(matches!(err, Err(CorpusError::InvalidPairing { .. })));
    }

    #[test]
    fn pairing_only_takes_complete_programs() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let mut recs = Vec::new();
        for (id, with_arm) in [("p1", true), ("p2", false)] {
            fs::create_dir_all(root.join("asm").join(id)).unwrap();
            let mut artifacts = BTreeMap::new();
            fs::write(root.join(format!("asm/{id}/x86_64_O0.s")), "f:\n\tret\n").unwrap();
            artifacts.insert("x86_64:O0".into(), ArtifactEntry { path: format!("asm/{id}/x86_64_O0.s"), instruction_count: 1 });
            if with_arm {
                fs::write(root.join(format!("asm/{id}/armv8_O0.s")), "f:\n\tret\n").unwrap();
                artifacts.insert("armv8:O0".into(), ArtifactEntry { path: format!("asm/{id}/armv8_O0.s"), instruction_count: 1 });
            }
            recs.push(ManifestRecord { id: id.into(), origin: "t".into(), content_hash: id.into(), status: UnitStatus::Accepted, artifacts });
        }
        recs.push(ManifestRecord { status: UnitStatus::RejectedDuplicate, ..record("p3") });
        write_manifest(&root.join(MANIFEST_FILE), &recs).unwrap();
        let corpus = Corpus::open(&root.join(MANIFEST_FILE)).unwrap();
        let pairing =
            build_pairs(&corpus, &CompileSpec::new(Isa::X86_64, OptLevel::O0), &CompileSpec::new(Isa::Armv8, OptLevel::O0)).unwrap();
        assert_eq!(pairing.pairs.len(), 1);
        assert_eq!(pairing.pairs[0].program_id(), "p1");
        assert_eq!(pairing.pairs[0].target_reference.normalized_text, "f:\nret");
        assert_eq!(pairing.excluded.len(), 2);
    }

    fn arb_record() -> impl Strategy<Value = ManifestRecord> {
        let status = prop_oneof![
            Just(UnitStatus::Accepted),
            Just(UnitStatus::RejectedShort),
            Just(UnitStatus::RejectedLong),
            Just(UnitStatus::RejectedDuplicate),
        ];
        let entry = ("[a-z/_.]{1,20}", 0usize..100_000).prop_map(|(path, instruction_count)| ArtifactEntry { path, instruction_count });
        (
            "[a-zA-Z0-9_-]{1,12}",
            "\\PC{0,12}",
            "[0-9a-f]{64}",
            status,
            prop::collection::btree_map("(x86_64|armv8|armv5|riscv64):(O0|O2)", entry, 0..4),
        )
            .prop_map(|(id, origin, content_hash, status, artifacts)| ManifestRecord { id, origin, content_hash, status, artifacts })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn manifest_round_trips(recs in prop::collection::vec(arb_record(), 0..20)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("m.jsonl");
            write_manifest(&p, &recs).unwrap();
            let mut expected = recs.clone();
            expected.sort_by(|a, b| a.id.cmp(&b.id));
            prop_assert_eq!(load_manifest(&p).unwrap(), expected);
        }
    }
}
