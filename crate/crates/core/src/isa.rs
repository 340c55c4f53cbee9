use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Instruction set architectures the toolkit knows how to compile for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Isa {
    #[serde(rename = "x86_64")]
    X86_64,
    #[serde(rename = "armv8")]
    Armv8,
    #[serde(rename = "armv5")]
    Armv5,
    #[serde(rename = "riscv64")]
    Riscv64,
}

impl Isa {
    pub const ALL: [Isa; 4] = [Isa::X86_64, Isa::Armv8, Isa::Armv5, Isa::Riscv64];

    pub fn as_str(self) -> &'static str {
        match self {
            Isa::X86_64 => "x86_64",
            Isa::Armv8 => "armv8",
            Isa::Armv5 => "armv5",
            Isa::Riscv64 => "riscv64",
        }
    }

    pub fn is_arm(self) -> bool {
        matches!(self, Isa::Armv8 | Isa::Armv5)
    }
}

impl fmt::Display for Isa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Isa {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x86_64" | "x86" | "x86-64" | "amd64" => Ok(Isa::X86_64),
            "armv8" | "aarch64" | "arm64" => Ok(Isa::Armv8),
            "armv5" | "arm" => Ok(Isa::Armv5),
            "riscv64" | "riscv" | "risc-v64" => Ok(Isa::Riscv64),
            other => Err(format!("unknown isa '{other}'")),
        }
    }
}

/// The two optimization levels the corpus is compiled at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptLevel {
    O0,
    O2,
}

impl OptLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            OptLevel::O0 => "O0",
            OptLevel::O2 => "O2",
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            OptLevel::O0 => "-O0",
            OptLevel::O2 => "-O2",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().trim_start_matches('-') {
            "O0" | "o0" => Ok(OptLevel::O0),
            "O2" | "o2" => Ok(OptLevel::O2),
            other => Err(format!("unsupported optimization level '{other}' (expected O0 or O2)")),
        }
    }
}

/// One (ISA, optimization level) compilation target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompileSpec {
    pub isa: Isa,
    pub opt: OptLevel,
    /// Name of the configured toolchain; by convention the ISA name.
    pub toolchain_id: String,
}

impl CompileSpec {
    pub fn new(isa: Isa, opt: OptLevel) -> Self {
        CompileSpec { isa, opt, toolchain_id: isa.as_str().to_string() }
    }

    /// Manifest key, `"isa:opt"`.
    pub fn key(&self) -> String {
        format!("{}:{}", self.isa, self.opt)
    }

    pub fn parse_key(key: &str) -> Result<Self, String> {
        let (isa, opt) = key.split_once(':').ok_or_else(|| format!("malformed artifact key '{key}'"))?;
        Ok(CompileSpec::new(isa.parse()?, opt.parse()?))
    }
}
