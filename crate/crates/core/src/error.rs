use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("at phi_dc = {phi_dc}: {source}")]
    AtBias {
        phi_dc: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("Fourier index {index} outside the sideband window [-{cutoff}, {cutoff}]")]
    OutOfWindow { index: i64, cutoff: i64 },

    #[error(
        "1/f spectrum sampled at zero frequency; the low-frequency contribution belongs to \
         the gamma_phi infrared term"
    )]
    InfraredDivergence,

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNotConverged { achieved: f64, requested: f64 },

    #[error("propagator lost unitarity: |U'U - 1| = {deviation:.3e}")]
    NonUnitary { deviation: f64 },

    #[error("monodromy integration not converged: step halving moved quasienergies by {delta:.3e} GHz")]
    StepHalving { delta: f64 },

    #[error("polariton fit did not converge (best rms residual {residual:.3e} GHz)")]
    FitNotConverged {
        residual: f64,
        best: Box<crate::polariton::PolaritonFit>,
    },

    #[error("steady state undefined: all transition rates vanish")]
    UndefinedSteadyState,

    #[error("beat at {beat_ghz:.4} GHz is under-sampled by step {step:.3e} s; need step <= {required_step:.3e} s")]
    Aliasing {
        beat_ghz: f64,
        step: f64,
        required_step: f64,
    },

    #[error("tracking break at path index {index} (overlap {overlap:.3})")]
    TrackingBreak { index: usize, overlap: f64 },

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
