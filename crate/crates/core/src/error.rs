use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("gauge condition Q + Q^dag + R^dag R = 0 violated (residual {residual:.3e})")]
    GaugeViolation { residual: f64 },

    #[error("singular matrix in {what} (condition estimate {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("ill-conditioned {what} (condition estimate {condition:.3e})")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error("degenerate transfer spectrum (minimal relative gap {gap:.3e})")]
    DegenerateSpectrum { gap: f64 },

    #[error("transfer matrix is not diagonalizable (eigenvector condition {condition:.3e})")]
    NonDiagonalizable { condition: f64 },

    #[error("spectrum is not closed under complex conjugation: {0}")]
    NotConjugateClosed(String),

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Laplace transform evaluated at a pole (distance {distance:.3e})")]
    AtPole { distance: f64 },

    #[error("correlation tensor is already amputated")]
    AlreadyAmputated,

    #[error("requested {requested} tensor entries, cap is {cap}")]
    ResourceLimit { requested: usize, cap: usize },

    #[error("polynomial root finding failed: {0}")]
    RootFinding(String),

    #[error("Hankel matrix has rank {rank}, below requested order {order}")]
    RankDeficient { rank: usize, order: usize },

    #[error("all-zero Hankel matrix")]
    ZeroSignal,

    #[error("pole sets disagree: unmatched poles {unmatched:?}")]
    PoleMismatch { unmatched: Vec<(f64, f64)> },

    #[error("{count} entries of M have no usable prescription (vanishing denominators)")]
    UnknownMEntries { count: usize },

    #[error("spectrum of M is not of the form conj(r_i) r_j (pairing defect {defect:.3e})")]
    Pairing { defect: f64 },

    #[error("Kronecker-sum defect {defect:.3e} exceeds threshold {threshold:.3e}")]
    KroneckerDefect { defect: f64, threshold: f64 },

    #[error("pole count {order} is not a perfect square; re-estimate the model order")]
    NonSquareOrder { order: usize },

    #[error("gauge fixing did not converge after {iterations} iterations (residual {residual:.3e})")]
    GaugeNotConverged { residual: f64, iterations: usize },

    #[error("sampling interval mismatch: {left} vs {right}")]
    DeltaTauMismatch { left: f64, right: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors caused by reading or parsing input files.
    pub fn is_io(&self) -> bool {
        matches!(self.root(), Error::Io(_) | Error::Json(_) | Error::Format(_))
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
