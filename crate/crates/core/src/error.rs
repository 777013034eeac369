use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({}x{} vs {}x{})", .lhs.0, .lhs.1, .rhs.0, .rhs.1)]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: length mismatch (expected {expected}, got {found})")]
    Length {
        op: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("contrastive batch needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("stale or mismatched forward cache: {0}")]
    StaleCache(&'static str),
    #[error("environment episode is over; reset before stepping")]
    EpisodeOver,
    #[error("environment index {index} out of range for {count} environments")]
    EnvIndex { index: usize, count: usize },
    #[error("episode {episode} continues after a terminal transition")]
    OpenEpisodeBoundary { episode: u64 },
    #[error("replay buffer holds {have} transitions in some environment, prefill needs {need}")]
    BelowPrefill { have: usize, need: usize },
    #[error("transition row ({state}, {action}) sums to {sum}, not 1")]
    NotStochastic { state: usize, action: usize, sum: f64 },
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },
    #[error("invalid argument: {0}")]
    Invalid(String),
}
