use thiserror::Error;

/// Unified error type for the solver library.
///
/// `Config` covers everything a user can get wrong in a scenario file or a
/// constructor argument; `Solver` and `Degenerate` are runtime failures of an
/// otherwise valid setup and carry enough state to diagnose them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("layout mismatch in {op}: expected {expected:?}, got {got:?}")]
    Layout {
        op: &'static str,
        expected: &'static str,
        got: &'static str,
    },

    #[error("configuration error{}: {message}", fmt_loc(.key, .line))]
    Config {
        key: String,
        line: Option<usize>,
        message: String,
    },

    #[error("iterative solve failed after {iterations} iterations: residual {residual:.3e} > target {target:.3e}")]
    Solver {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("step {step} rejected at t={t:.6e}: {reason}")]
    StepRejected { step: u64, t: f64, reason: String },

    #[error("magnetization degenerate: min |M| = {min_norm:.3e} < eps_renorm = {eps:.3e}")]
    DegenerateMagnetization { min_norm: f64, eps: f64 },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("inequality counterexample for {name}: sample seed {seed} has lhs {lhs:.6e} with vanishing rhs {rhs:.3e}")]
    Counterexample {
        name: String,
        seed: u64,
        lhs: f64,
        rhs: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fmt_loc(key: &str, line: &Option<usize>) -> String {
    match (key.is_empty(), line) {
        (true, None) => String::new(),
        (true, Some(l)) => format!(" at line {l}"),
        (false, None) => format!(" ({key})"),
        (false, Some(l)) => format!(" at line {l} ({key})"),
    }
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            key: String::new(),
            line: None,
            message: message.into(),
        }
    }

    pub fn config_key(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            line: None,
            message: message.into(),
        }
    }

    pub fn config_at(
        key: impl Into<String>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Config {
            key: key.into(),
            line: Some(line),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
