//! Toolkit for LLM-driven CISC-to-RISC assembly transpilation.
//!
//! The crate builds paired-assembly corpora from C sources, asks a pluggable
//! guesser backend for candidate translations and then checks each guess the
//! hard way: build it, link it against the program's unit tests, run it,
//! diff its output, measure the test suite's coverage, triage the failures
//! and benchmark the survivors.

pub mod analysis;
pub mod asmtext;
pub mod bench;
pub mod config;
pub mod corpus;
pub mod guesser;
pub mod isa;
pub mod lock;
pub mod pipeline;
pub mod process;
pub mod tokenlab;
pub mod triage;
pub mod verify;

pub use isa::{CompileSpec, Isa, OptLevel};
