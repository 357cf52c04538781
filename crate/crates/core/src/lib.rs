//! Dynamic regressor extension and mixing (DREM) for regressions of the form
//! `y = Ω S(θ)` where `S` is nonlinear in the unknown parameters.
//!
//! The crate is organised bottom-up:
//! - [`nlpre`]: maps, parameter changes and monotonicity certificates
//! - [`mixing`]: regressor extension filters and adjugate mixing
//! - [`estimators`]: CT/DT estimators, gain algebra, gradient baseline
//! - [`plants`]: robot arm, solar house, pole-placement plants
//! - [`sim`]: RK4 integration, scenario runners and CSV traces

pub mod error;
pub mod estimators;
pub mod mixing;
pub mod nlpre;
pub mod plants;
pub mod sim;

pub use error::{DremError, Result};
pub use estimators::{
    validate_dt_gains, CtDremEstimator, DtDremEstimator, ExcitationTracker, GainReport,
    GradientBaseline,
};
pub use mixing::{adjugate, determinant, mix, CtExtensionState, DtExtensionState, MixedOutput};
pub use nlpre::{
    change_by_name, eval_good_map, CertificateReport, FactorizedNpre, NonlinearMap,
    ParameterChange, CHANGE_NAMES,
};
pub use sim::{Scenario, Trace};

pub use nalgebra::{DMatrix, DVector};
