//! DREM estimators for the mixed scalar regressions, the discrete-time gain
//! algebra, a normalized-gradient baseline and excitation bookkeeping.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DremError, Result};
use crate::mixing::MixedOutput;
use crate::nlpre::{eval_good_map, FactorizedNpre};

/// Result of the discrete-time gain checks.
#[derive(Clone, Debug, PartialEq)]
pub struct GainReport {
    pub sigma: f64,
    pub kappa_required: f64,
    /// `γ < 2ρ/(ν²λ²max(P))`, the bound that keeps `σ` positive.
    pub gamma_bound: f64,
    /// Whether `ν ≤ ρ/λmax(P)`, which makes the interval below non-empty.
    pub interval_condition: bool,
    /// Gains for which `σ ≥ 1`, so that `κ = σ` is admissible.
    pub gamma_interval: Option<(f64, f64)>,
}

fn lambda_max(p: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(p.clone()).eigenvalues.max()
}

/// Gain report for `(ρ, ν, P, γ)` without rejecting anything.
pub fn dt_gain_report(rho: f64, nu: f64, p: &DMatrix<f64>, gamma: f64) -> GainReport {
    let lm = lambda_max(p);
    let c = nu * nu * lm * lm;
    let sigma = 2.0 * gamma * rho - gamma * gamma * c;
    let interval_condition = nu <= rho / lm;
    let gamma_interval = interval_condition.then(|| {
        let r = (rho * rho - c).max(0.0).sqrt();
        ((rho - r) / c, (rho + r) / c)
    });
    GainReport {
        sigma,
        kappa_required: sigma.max(1.0),
        gamma_bound: 2.0 * rho / c,
        interval_condition,
        gamma_interval,
    }
}

/// Checks `σ = 2γρ − γ²ν²λ²max(P) > 0` and `κ ≥ max(1, σ)`.
pub fn validate_dt_gains(
    rho: f64,
    nu: f64,
    p: &DMatrix<f64>,
    gamma: f64,
    kappa: f64,
) -> Result<GainReport> {
    if !(rho > 0.0 && nu > 0.0) {
        return Err(DremError::InvalidGain("rho and nu must be positive".into()));
    }
    if !(gamma > 0.0) {
        return Err(DremError::InvalidGain(format!("gamma must be positive, got {gamma}")));
    }
    if lambda_max(p) <= 0.0 || SymmetricEigen::new(p.clone()).eigenvalues.min() <= 0.0 {
        return Err(DremError::InvalidGain("P must be positive definite".into()));
    }
    let report = dt_gain_report(rho, nu, p, gamma);
    if report.sigma <= 0.0 {
        return Err(DremError::GainTooLarge { sigma: report.sigma, bound: report.gamma_bound });
    }
    if kappa < report.kappa_required {
        return Err(DremError::KappaTooSmall { kappa, required: report.kappa_required });
    }
    Ok(report)
}

/// `η̂̇ = Γ P Δ (𝒴 − Δ G(η̂))`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtDremEstimator {
    pub eta_hat: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

impl CtDremEstimator {
    pub fn new(eta_hat: DVector<f64>, gamma: DMatrix<f64>, p: DMatrix<f64>) -> Result<Self> {
        let q = eta_hat.len();
        if gamma.shape() != (q, q) || p.shape() != (q, q) {
            return Err(DremError::Dimension(format!("gains must be {q}x{q}")));
        }
        let sym = (&gamma + gamma.transpose()) * 0.5;
        if SymmetricEigen::new(sym).eigenvalues.min() <= 0.0 {
            return Err(DremError::InvalidGain("Gamma must be positive definite".into()));
        }
        Ok(Self { eta_hat, gamma, p })
    }

    pub fn derivative(&self, mixed: &MixedOutput, npre: &FactorizedNpre) -> Result<DVector<f64>> {
        ct_estimator_derivative(&self.gamma, &self.p, &self.eta_hat, mixed, npre)
    }
}

pub fn ct_estimator_derivative(
    gamma: &DMatrix<f64>,
    p: &DMatrix<f64>,
    eta_hat: &DVector<f64>,
    mixed: &MixedOutput,
    npre: &FactorizedNpre,
) -> Result<DVector<f64>> {
    let d = mixed.delta;
    if d == 0.0 {
        return Ok(DVector::zeros(eta_hat.len()));
    }
    let g = eval_good_map(npre, eta_hat)?;
    Ok(gamma * (p * ((&mixed.script_y - g * d) * d)))
}

/// `η̂(k+1) = η̂(k) + γ P Δ/(1+κΔ²) (𝒴 − Δ G(η̂))`.
#[derive(Clone, Debug, PartialEq)]
pub struct DtDremEstimator {
    pub eta_hat: DVector<f64>,
    pub gamma: f64,
    pub kappa: f64,
    pub p: DMatrix<f64>,
    pub sigma: f64,
}

impl DtDremEstimator {
    /// Validates the gains against the change's `ρ`, `ν`.
    pub fn new(eta_hat: DVector<f64>, gamma: f64, kappa: f64, npre: &FactorizedNpre) -> Result<Self> {
        let c = &npre.change;
        let r = validate_dt_gains(c.rho(), c.nu(), c.p_matrix(), gamma, kappa)?;
        Ok(Self { eta_hat, gamma, kappa, p: c.p_matrix().clone(), sigma: r.sigma })
    }

    /// Same update with gains that may violate the normalization condition.
    pub fn new_unchecked(
        eta_hat: DVector<f64>,
        gamma: f64,
        kappa: f64,
        npre: &FactorizedNpre,
    ) -> Self {
        let c = &npre.change;
        let sigma = dt_gain_report(c.rho(), c.nu(), c.p_matrix(), gamma).sigma;
        Self { eta_hat, gamma, kappa, p: c.p_matrix().clone(), sigma }
    }

    pub fn step(&mut self, mixed: &MixedOutput, npre: &FactorizedNpre) -> Result<()> {
        self.eta_hat = dt_estimator_step(self, mixed, npre)?;
        Ok(())
    }
}

pub fn dt_estimator_step(
    est: &DtDremEstimator,
    mixed: &MixedOutput,
    npre: &FactorizedNpre,
) -> Result<DVector<f64>> {
    let d = mixed.delta;
    if d == 0.0 {
        return Ok(est.eta_hat.clone());
    }
    let g = eval_good_map(npre, &est.eta_hat)?;
    let gain = est.gamma * d / (1.0 + est.kappa * d * d);
    Ok(&est.eta_hat + &est.p * ((&mixed.script_y - g * d) * gain))
}

/// Normalized gradient on the overparameterized regression `y = Ω Ŝ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBaseline {
    pub s_hat: DVector<f64>,
    pub gamma: f64,
}

impl GradientBaseline {
    pub fn new(s_hat: DVector<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(DremError::InvalidGain("baseline gamma must be positive".into()));
        }
        Ok(Self { s_hat, gamma })
    }

    /// Scalar-output step; `omega` is the regressor row.
    pub fn step(&mut self, omega: &DVector<f64>, y: f64) {
        self.s_hat = dt_gradient_baseline_step(self, omega, y);
    }

    pub fn residual(&self, omega: &DVector<f64>, y: f64) -> f64 {
        y - omega.dot(&self.s_hat)
    }
}

pub fn dt_gradient_baseline_step(base: &GradientBaseline, omega: &DVector<f64>, y: f64) -> DVector<f64> {
    let innovation = y - omega.dot(&base.s_hat);
    &base.s_hat + omega * (innovation / (base.gamma + omega.norm_squared()))
}

/// Excitation accumulators for the convergence conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationTracker {
    /// `∫Δ²` (CT) or `ΣΔ²` (DT).
    pub integral_delta_sq: f64,
    /// `ΣΔ²/(1+κΔ²)` (DT only).
    pub normalized_sum: f64,
    /// `Π (1+(κ−σ)Δ²)/(1+κΔ²)` (DT only).
    pub product: f64,
    pub last_delta: f64,
}

impl Default for ExcitationTracker {
    fn default() -> Self {
        Self { integral_delta_sq: 0.0, normalized_sum: 0.0, product: 1.0, last_delta: 0.0 }
    }
}

impl ExcitationTracker {
    /// Rectangle rule: `Δ` is the value at the start of the step.
    pub fn track_ct(&mut self, delta: f64, dt: f64) {
        self.integral_delta_sq += delta * delta * dt;
        self.last_delta = delta;
    }

    pub fn track_dt(&mut self, delta: f64, kappa: f64, sigma: f64) {
        let d2 = delta * delta;
        self.integral_delta_sq += d2;
        self.normalized_sum += d2 / (1.0 + kappa * d2);
        self.product *= (1.0 + (kappa - sigma) * d2) / (1.0 + kappa * d2);
        self.last_delta = delta;
    }
}

/// Dispatches on whether a step size is given.
pub fn track_excitation(
    mut tracker: ExcitationTracker,
    delta: f64,
    dt: Option<f64>,
    kappa_sigma: (f64, f64),
) -> ExcitationTracker {
    match dt {
        Some(h) => tracker.track_ct(delta, h),
        None => tracker.track_dt(delta, kappa_sigma.0, kappa_sigma.1),
    }
    tracker
}
