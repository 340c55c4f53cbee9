//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment lines start with '#'
//! toolchain.armv8.command = clang --target=aarch64-linux-gnu
//! toolchain.armv8.ldflags = -fuse-ld=lld
//! runner.armv8 = emulate:python3 tools/gg-emu.py
//! beam_width = 8
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::guesser::MutationRule;
use crate::isa::{Isa, OptLevel};
use crate::process::Runner;

pub const WORKDIR_ENV: &str = "GG_WORKDIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {msg}")]
    InvalidValue { key: String, msg: String },
}

/// Compiler command line for one ISA.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Toolchain {
    /// Compiler driver, possibly with leading arguments (`clang --target=...`).
    pub command: String,
    /// Extra flags passed on every compile and assemble step.
    pub flags: String,
    /// Extra flags passed only when linking.
    pub ldflags: String,
}

impl Toolchain {
    pub fn new(command: &str) -> Self {
        Toolchain { command: command.to_string(), flags: String::new(), ldflags: String::new() }
    }

    pub fn default_for(isa: Isa) -> Self {
        match isa {
            Isa::X86_64 => Toolchain::new("gcc"),
            Isa::Armv8 => Toolchain { ldflags: "-fuse-ld=lld".into(), ..Toolchain::new("clang --target=aarch64-linux-gnu") },
            Isa::Armv5 => Toolchain { ldflags: "-fuse-ld=lld".into(), ..Toolchain::new("clang --target=armv5te-linux-gnueabi") },
            Isa::Riscv64 => Toolchain { ldflags: "-fuse-ld=lld".into(), ..Toolchain::new("clang --target=riscv64-linux-gnu") },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Http,
    Command,
    Oracle,
    Mutant,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Command => "command",
            BackendKind::Oracle => "oracle",
            BackendKind::Mutant => "mutant",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "http" => Ok(BackendKind::Http),
            "command" => Ok(BackendKind::Command),
            "oracle" => Ok(BackendKind::Oracle),
            "mutant" => Ok(BackendKind::Mutant),
            other => Err(format!("unknown backend '{other}' (expected http, command, oracle or mutant)")),
        }
    }
}

/// Everything a pipeline run needs to know.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub toolchains: BTreeMap<Isa, Toolchain>,
    pub runners: BTreeMap<Isa, Runner>,
    pub min_lines: usize,
    pub max_lines: usize,
    pub strip_boilerplate: bool,
    pub source_isa: Isa,
    pub target_isa: Isa,
    pub opt: OptLevel,
    /// Label of the benchmark column in accuracy tables.
    pub benchmark: String,
    pub backend: BackendKind,
    pub backend_url: Option<String>,
    pub backend_command: Option<String>,
    /// `native` or `completion` wire format for the HTTP backend.
    pub backend_protocol: String,
    /// Prompt template for completion endpoints; the built-in one when absent.
    pub backend_template: Option<PathBuf>,
    pub mutation: MutationRule,
    pub beam_width: u32,
    pub context_window: u64,
    pub max_new_tokens: u64,
    /// Output/input size ratio per target ISA used for budgeting.
    pub expansion: BTreeMap<Isa, f64>,
    /// Vocabulary used for token estimates; the shipped default when absent.
    pub vocab: Option<PathBuf>,
    pub timeout_s: f64,
    pub pool_compile: usize,
    pub pool_verify: usize,
    pub pool_guess: usize,
    pub workdir: PathBuf,
    /// Support sources linked into every test binary.
    pub runtime_dir: Option<PathBuf>,
    pub coverage: bool,
    pub coverage_cc: String,
    pub coverage_tool: String,
    /// Build-log regex overrides keyed by error-class name.
    pub triage_patterns: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let host_is_x86 = cfg!(target_arch = "x86_64");
        let runners = Isa::ALL
            .iter()
            .map(|&isa| {
                let runner = match isa {
                    Isa::X86_64 if host_is_x86 => Runner::Native,
                    Isa::Armv8 if cfg!(target_arch = "aarch64") => Runner::Native,
                    Isa::X86_64 => Runner::Emulate("qemu-x86_64".into()),
                    Isa::Armv8 => Runner::Emulate("qemu-aarch64".into()),
                    Isa::Armv5 => Runner::Emulate("qemu-arm".into()),
                    Isa::Riscv64 => Runner::Emulate("qemu-riscv64".into()),
                };
                (isa, runner)
            })
            .collect();
        PipelineConfig {
            toolchains: Isa::ALL.iter().map(|&i| (i, Toolchain::default_for(i))).collect(),
            runners,
            min_lines: 10,
            max_lines: 16000,
            strip_boilerplate: false,
            source_isa: Isa::X86_64,
            target_isa: Isa::Armv8,
            opt: OptLevel::O0,
            benchmark: "desk".into(),
            backend: BackendKind::Oracle,
            backend_url: None,
            backend_command: None,
            backend_protocol: "native".into(),
            backend_template: None,
            mutation: MutationRule::ImmediateValue,
            beam_width: 8,
            context_window: 32768,
            max_new_tokens: 16384,
            expansion: BTreeMap::new(),
            vocab: None,
            timeout_s: 10.0,
            pool_compile: 4,
            pool_verify: 4,
            pool_guess: 4,
            workdir: PathBuf::from("gg-work"),
            runtime_dir: None,
            coverage: true,
            coverage_cc: "gcc".into(),
            coverage_tool: "gcov".into(),
            triage_patterns: BTreeMap::new(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue { key: key.to_string(), msg: e.to_string() })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::InvalidValue { key: key.into(), msg: format!("expected a boolean, got '{value}'") }),
    }
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn non_empty(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

impl PipelineConfig {
    pub fn toolchain(&self, isa: Isa) -> Option<&Toolchain> {
        self.toolchains.get(&isa)
    }

    pub fn runner(&self, isa: Isa) -> Runner {
        self.runners.get(&isa).cloned().unwrap_or(Runner::Native)
    }

    pub fn expansion_factor(&self, isa: Isa) -> f64 {
        self.expansion.get(&isa).copied().unwrap_or(1.0)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let parts: Vec<&str> = key.split('.').collect();
        match parts.as_slice() {
            ["toolchain", isa, field] => {
                let isa: Isa = parse_value(key, isa)?;
                let tc = self.toolchains.entry(isa).or_insert_with(|| Toolchain::default_for(isa));
                match *field {
                    "command" => tc.command = value.to_string(),
                    "flags" => tc.flags = value.to_string(),
                    "ldflags" => tc.ldflags = value.to_string(),
                    _ => return Err(ConfigError::UnknownKey(key.into())),
                }
            }
            ["runner", isa] => {
                let isa: Isa = parse_value(key, isa)?;
                self.runners.insert(isa, parse_value(key, value)?);
            }
            ["expansion", isa] => {
                let isa: Isa = parse_value(key, isa)?;
                let f: f64 = parse_value(key, value)?;
                if !(f.is_finite() && f >= 0.0) {
                    return Err(ConfigError::InvalidValue { key: key.into(), msg: "must be a non-negative number".into() });
                }
                self.expansion.insert(isa, f);
            }
            ["triage", "pattern", class] => {
                regex::Regex::new(value).map_err(|e| ConfigError::InvalidValue { key: key.into(), msg: e.to_string() })?;
                self.triage_patterns.insert(class.to_string(), value.to_string());
            }
            ["filter", "min_lines"] => self.min_lines = parse_value(key, value)?,
            ["filter", "max_lines"] => self.max_lines = parse_value(key, value)?,
            ["strip_boilerplate"] => self.strip_boilerplate = parse_bool(key, value)?,
            ["source_isa"] => self.source_isa = parse_value(key, value)?,
            ["target_isa"] => self.target_isa = parse_value(key, value)?,
            ["opt"] => self.opt = parse_value(key, value)?,
            ["benchmark"] => self.benchmark = value.to_string(),
            ["backend"] => self.backend = parse_value(key, value)?,
            ["backend", "url"] => self.backend_url = non_empty(value),
            ["backend", "command"] => self.backend_command = non_empty(value),
            ["backend", "protocol"] => match value {
                "native" | "completion" => self.backend_protocol = value.to_string(),
                _ => return Err(ConfigError::InvalidValue { key: key.into(), msg: "expected native or completion".into() }),
            },
            ["backend", "template"] => self.backend_template = non_empty(value).map(PathBuf::from),
            ["verify", "runtime"] => self.runtime_dir = non_empty(value).map(PathBuf::from),
            ["backend", "mutation"] => self.mutation = parse_value(key, value)?,
            ["beam_width"] => {
                let b: u32 = parse_value(key, value)?;
                if b == 0 {
                    return Err(ConfigError::InvalidValue { key: key.into(), msg: "must be at least 1".into() });
                }
                self.beam_width = b;
            }
            ["context_window"] => {
                let w: u64 = parse_value(key, value)?;
                if w == 0 {
                    return Err(ConfigError::InvalidValue { key: key.into(), msg: "must be positive".into() });
                }
                self.context_window = w;
            }
            ["max_new_tokens"] => self.max_new_tokens = parse_value(key, value)?,
            ["vocab"] => self.vocab = non_empty(value).map(PathBuf::from),
            ["timeout"] => {
                let t: f64 = parse_value(key, value)?;
                if !(t.is_finite() && t > 0.0) {
                    return Err(ConfigError::InvalidValue { key: key.into(), msg: "must be a positive number of seconds".into() });
                }
                self.timeout_s = t;
            }
            ["pool", "compile"] => self.pool_compile = parse_value::<usize>(key, value)?.max(1),
            ["pool", "verify"] => self.pool_verify = parse_value::<usize>(key, value)?.max(1),
            ["pool", "guess"] => self.pool_guess = parse_value::<usize>(key, value)?.max(1),
            ["workdir"] => self.workdir = PathBuf::from(value),
            ["coverage"] => self.coverage = parse_bool(key, value)?,
            ["coverage", "cc"] => self.coverage_cc = value.to_string(),
            ["coverage", "tool"] => self.coverage_tool = value.to_string(),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: format!("expected 'key = value', got '{line}'") })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, msg: "empty key".into() });
            }
            cfg.set(key, value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// `GG_WORKDIR` wins over the configured work directory.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(WORKDIR_ENV) {
            if !dir.is_empty() {
                self.workdir = PathBuf::from(dir);
            }
        }
    }

    /// Serializes every setting; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        for (isa, tc) in &self.toolchains {
            let _ = writeln!(s, "toolchain.{isa}.command = {}", tc.command);
            let _ = writeln!(s, "toolchain.{isa}.flags = {}", tc.flags);
            let _ = writeln!(s, "toolchain.{isa}.ldflags = {}", tc.ldflags);
        }
        for (isa, r) in &self.runners {
            let _ = writeln!(s, "runner.{isa} = {r}");
        }
        for (isa, f) in &self.expansion {
            let _ = writeln!(s, "expansion.{isa} = {f}");
        }
        for (class, pat) in &self.triage_patterns {
            let _ = writeln!(s, "triage.pattern.{class} = {pat}");
        }
        let _ = writeln!(s, "filter.min_lines = {}", self.min_lines);
        let _ = writeln!(s, "filter.max_lines = {}", self.max_lines);
        let _ = writeln!(s, "strip_boilerplate = {}", self.strip_boilerplate);
        let _ = writeln!(s, "source_isa = {}", self.source_isa);
        let _ = writeln!(s, "target_isa = {}", self.target_isa);
        let _ = writeln!(s, "opt = {}", self.opt);
        let _ = writeln!(s, "benchmark = {}", self.benchmark);
        let _ = writeln!(s, "backend = {}", self.backend.as_str());
        let _ = writeln!(s, "backend.url = {}", self.backend_url.as_deref().unwrap_or(""));
        let _ = writeln!(s, "backend.command = {}", self.backend_command.as_deref().unwrap_or(""));
        let _ = writeln!(s, "backend.protocol = {}", self.backend_protocol);
        let _ = writeln!(s, "backend.template = {}", opt_path(&self.backend_template));
        let _ = writeln!(s, "verify.runtime = {}", opt_path(&self.runtime_dir));
        let _ = writeln!(s, "backend.mutation = {}", self.mutation.as_str());
        let _ = writeln!(s, "beam_width = {}", self.beam_width);
        let _ = writeln!(s, "context_window = {}", self.context_window);
        let _ = writeln!(s, "max_new_tokens = {}", self.max_new_tokens);
        let _ = writeln!(s, "vocab = {}", opt_path(&self.vocab));
        let _ = writeln!(s, "timeout = {}", self.timeout_s);
        let _ = writeln!(s, "pool.compile = {}", self.pool_compile);
        let _ = writeln!(s, "pool.verify = {}", self.pool_verify);
        let _ = writeln!(s, "pool.guess = {}", self.pool_guess);
        let _ = writeln!(s, "workdir = {}", self.workdir.display());
        let _ = writeln!(s, "coverage = {}", self.coverage);
        let _ = writeln!(s, "coverage.cc = {}", self.coverage_cc);
        let _ = writeln!(s, "coverage.tool = {}", self.coverage_tool);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.min_lines, 10);
        assert_eq!(c.max_lines, 16000);
        assert!(!c.strip_boilerplate);
        assert_eq!(c.beam_width, 8);
        assert_eq!(c.context_window, 32768);
        assert_eq!(c.timeout_s, 10.0);
        assert_eq!(c.expansion_factor(Isa::Armv8), 1.0);
    }

    #[test]
    fn parses_flat_keys() {
        let c = PipelineConfig::parse(
            "# desk setup\ntoolchain.armv8.command = clang --target=aarch64-linux-gnu\n\
             toolchain.armv8.flags = -g0\nrunner.armv8 = emulate:python3 tools/gg-emu.py\n\
             filter.min_lines = 12\nstrip_boilerplate = true\nbeam_width = 1\nexpansion.armv8 = 1.25\n",
        )
        .unwrap();
        assert_eq!(c.toolchain(Isa::Armv8).unwrap().flags, "-g0");
        assert_eq!(c.runner(Isa::Armv8), Runner::Emulate("python3 tools/gg-emu.py".into()));
        assert_eq!(c.min_lines, 12);
        assert!(c.strip_boilerplate);
        assert_eq!(c.beam_width, 1);
        assert_eq!(c.expansion_factor(Isa::Armv8), 1.25);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(PipelineConfig::parse("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(PipelineConfig::parse("foo = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(PipelineConfig::parse("beam_width = 0"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(PipelineConfig::parse("opt = O3"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(PipelineConfig::parse("toolchain.mips.command = gcc"), Err(ConfigError::InvalidValue { .. })));
    }

    proptest! {
        #[test]
        fn config_round_trip(
            beam in 1u32..64,
            window in 1u64..200_000,
            timeout in 0.01f64..1000.0,
            factor in 0.0f64..8.0,
            min in 0usize..100,
            strip in any::<bool>(),
            cmd in "[a-z][a-z0-9_=/ -]{0,20}[a-z0-9]",
            url in proptest::option::of("http://[a-z]{1,8}:[0-9]{2,5}"),
        ) {
            let mut c = PipelineConfig::default();
            c.beam_width = beam;
            c.context_window = window;
            c.timeout_s = timeout;
            c.expansion.insert(Isa::Riscv64, factor);
            c.min_lines = min;
            c.strip_boilerplate = strip;
            c.toolchains.get_mut(&Isa::Armv5).unwrap().command = cmd;
            c.backend_url = url;
            c.backend = BackendKind::Mutant;
            c.mutation = MutationRule::MemoryOffset;
            c.backend_protocol = "completion".into();
            c.runtime_dir = Some(PathBuf::from("desk/runtime"));
            let back = PipelineConfig::parse(&c.serialize()).unwrap();
            prop_assert_eq!(back, c);
        }
    }
}
