//! Experiment harness for the integration benchmarks: configuration,
//! orchestration, persistence, reporting, and synthetic survey pools.

pub mod bench;
pub mod config;
pub mod experiment;
pub mod report;
pub mod synth;

/// Harness-level failures, split by exit-code class: configuration problems
/// exit with 1, runtime failures with 2.
#[derive(Debug)]
pub enum HarnessError {
    Config(String),
    Runtime(String),
}

impl std::fmt::Display for HarnessError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "configuration error: {msg}"),
            HarnessError::Runtime(msg) => write!(f, "runtime failure: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Runtime(_) => 2,
        }
    }
}
