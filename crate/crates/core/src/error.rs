use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field mismatch: {0}")]
    GridMismatch(String),

    #[error("numeric failure: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// θ + dd^c φ left the positive cone.
    #[error("form is not Kähler at point {index} ({coords:?}): minimum eigenvalue {min_eig:e}")]
    NotKahler {
        index: usize,
        coords: Vec<f64>,
        min_eig: f64,
    },

    #[error("singular base form at point {index} ({coords:?})")]
    SingularBase { index: usize, coords: Vec<f64> },

    #[error("certificate failed: {inequality} at t = {time} (margin {margin:e})")]
    CertificateFailed {
        inequality: String,
        time: f64,
        margin: f64,
    },

    #[error("monotonicity repair at level {level} is {shift:e}, above the limit {limit:e}")]
    RepairTooLarge { level: usize, shift: f64, limit: f64 },

    #[error("Lelong estimate unresolvable: every sample hit the floor {floor}")]
    Unresolvable { floor: f64 },

    #[error("Newton diverged at t = {time} after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("no damping factor keeps the iterate in the cone at t = {time}")]
    ConeExit { time: f64 },

    #[error("monotonicity violated between levels {upper} and {lower} at t = {time}, point {index}: {magnitude:e}")]
    MonotonicityViolated {
        time: f64,
        upper: usize,
        lower: usize,
        index: usize,
        magnitude: f64,
    },

    #[error("horizon too long: C = {defect} exceeds 1/(eT) = {threshold} for T = {horizon}")]
    HorizonTooLong {
        defect: f64,
        horizon: f64,
        threshold: f64,
    },

    #[error("missing snapshot times: {0:?}")]
    MissingTimes(Vec<(f64, f64)>),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
