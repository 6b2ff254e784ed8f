use thiserror::Error;

/// Errors surfaced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("network is not strongly connected (irreducibility violated)")]
    IrreducibleViolation,
    #[error("edge {k}: node index {node} out of range for {n} states")]
    NodeOutOfRange { k: usize, node: usize, n: usize },
    #[error("edge {k}: self-loops are not permitted ({node} -> {node})")]
    SelfLoop { k: usize, node: usize },
    #[error("edge {k}: duplicate directed edge {from} -> {to}")]
    DuplicateEdge { k: usize, from: usize, to: usize },
    #[error("edge {k}: rate {rate} must be strictly positive and finite")]
    NonPositiveRate { k: usize, rate: f64 },
    #[error("edge index {k} out of range ({m} edges)")]
    IndexError { k: usize, m: usize },
    #[error("kernel of L is numerically degenerate beyond the single neutral mode")]
    DegenerateKernel,
    #[error("matrix is not diagonalizable within tolerance (eigenvalue cluster near {cluster:?})")]
    DefectiveMatrix { cluster: Vec<f64> },
    #[error("spectral singularity: lambda_i + lambda_j vanishes for stable modes")]
    SpectralSingularity,
    #[error("unstable time step dt={dt}: dt*|lambda_min| must stay below 0.5 (suggested dt <= {suggested})")]
    StabilityError { dt: f64, suggested: f64 },
    #[error("tau={tau} too large: expected per-channel exits per step reach {worst}; suggested tau <= {suggested}")]
    TauTooLarge { tau: f64, worst: f64, suggested: f64 },
    #[error("step h={h} too large: stay probability at node {node} would be negative; suggested h <= {suggested}")]
    StepTooLarge { h: f64, node: usize, suggested: f64 },
    #[error("failed to sample a strongly connected graph after {attempts} attempts")]
    ConnectivityError { attempts: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("invalid input: {context}")]
    InvalidInput { context: String },
    #[error("schema violation: {context}")]
    SchemaError { context: String },
}

pub type Result<T> = std::result::Result<T, Error>;
