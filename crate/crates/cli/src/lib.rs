//! Command-line driver: scenario files in, CSV tables and SVG plots out.

pub mod commands;
pub mod scenario;
pub mod svg;

use std::path::PathBuf;

use thiserror::Error;

pub use scenario::{ParseError, ScenarioFile};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{source}")]
    Parse { path: String, source: ParseError },
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub svg: bool,
}
