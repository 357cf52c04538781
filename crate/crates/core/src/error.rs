use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DremError {
    #[error("singular coordinate: component {component} of the inverse change vanishes ({detail})")]
    SingularCoordinate { component: usize, detail: &'static str },

    #[error("evaluation failed at {point:?}: {source}")]
    AtPoint { point: Vec<f64>, source: Box<DremError> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("gain too large: sigma = {sigma} <= 0, need gamma < {bound}")]
    GainTooLarge { sigma: f64, bound: f64 },

    #[error("normalization too small: kappa = {kappa} < max(1, sigma) = {required}")]
    KappaTooSmall { kappa: f64, required: f64 },

    #[error("invalid gain: {0}")]
    InvalidGain(String),

    #[error("controller singularity: {0}")]
    ControllerSingular(String),

    #[error("zero division in plant regressor at sample {0}")]
    ZeroDivision(usize),

    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },

    #[error("unknown scenario or change: {0}")]
    Unknown(String),

    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DremError>;
