use thiserror::Error;

/// Errors raised by the library. Variants name the violated contract.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("period components must be positive, got {0:?}")]
    NonPositivePeriod(Vec<i64>),
    #[error("period dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("divisibility violated at tower step {step}, coordinate {coord} (1-based)")]
    DivisibilityViolation { step: usize, coord: usize },
    #[error("period product overflows the index range")]
    Overflow,
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("coefficients are not realizable as a real potential (imaginary residue {residue:e})")]
    NotRealizable { residue: f64 },
    #[error("stage {stage} out of range (tower has {len} layers)")]
    StageOutOfRange { stage: usize, len: usize },
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("eigensolver did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("eigenvalue {index} is degenerate (gap {gap:e})")]
    DegenerateEigenvalue { index: usize, gap: f64 },
    #[error("resultant is ill-conditioned (|f| = {f:e} below threshold {threshold:e})")]
    IllConditioned { f: f64, threshold: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("certificate failure: {0}")]
    CertificateFailure(String),
    #[error("tracking is ambiguous (margin {margin})")]
    AmbiguousMatch { margin: f64 },
    #[error("no tracking candidate within the energy window")]
    NoCandidate,
    #[error("coset arithmetic inconsistent: {0}")]
    CosetMismatch(String),
    #[error("chain broken: {0}")]
    ChainBroken(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("energy bins do not cover [{lo}, {hi}]")]
    BinRangeError { lo: f64, hi: f64 },
    #[error("missing certificate: {0}")]
    MissingCertificate(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
