use thiserror::Error;

#[derive(Debug, Error)]
pub enum GhdoError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// |ρ(σ,η)| fell below the underflow threshold; the caller should skip the sample.
    #[error("degenerate amplitude: |rho| below underflow threshold")]
    DegenerateAmplitude,

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("capacity exceeded: {what} (N = {sites}, limit {limit})")]
    Capacity {
        what: &'static str,
        sites: usize,
        limit: usize,
    },

    #[error("steady state is not unique: {0} eigenvalues within tolerance of zero")]
    NonUniqueSteadyState(usize),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("unsupported checkpoint version {found:?}, expected {expected:?}")]
    CheckpointVersion { found: String, expected: &'static str },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GhdoError>;
