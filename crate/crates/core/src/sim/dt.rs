//! Sample-indexed scenarios. Each sample `k` runs: plant output and
//! regressor, extension with the previous `(Ω, y)`, mixing, estimator
//! update, then the control move for `k`.

use nalgebra::{DMatrix, DVector};

use super::{Scenario, Summary, Trace};
use crate::error::{DremError, Result};
use crate::estimators::{DtDremEstimator, ExcitationTracker, GradientBaseline};
use crate::mixing::{DtExtensionState, MixedOutput};
use crate::nlpre::FactorizedNpre;
use crate::plants::appc::{
    self, appc_indirect_control, appc_indirect_overparam_control, AppcDirect, AppcIndirect,
};
use crate::plants::solar::{self, SolarHouse, SolarInputs};

fn alpha(sc: &Scenario) -> Result<f64> {
    let a = sc.num("alpha");
    if !(a > 0.0 && a < 1.0) {
        return Err(DremError::Config(format!("alpha must lie in (0, 1), got {a}")));
    }
    Ok(a)
}

fn with_p(npre: FactorizedNpre, sc: &Scenario) -> Result<FactorizedNpre> {
    let d = sc.vec("P_diag");
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(DremError::Config("P_diag entries must be positive".into()));
    }
    let change = npre.change.with_p_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))?;
    FactorizedNpre::new(npre.map, change, npre.n)
}

/// Runs with the requested gains, recording a warning when they violate the
/// normalization conditions.
fn estimator(
    sc: &Scenario,
    npre: &FactorizedNpre,
    eta0: DVector<f64>,
    warnings: &mut Vec<String>,
) -> Result<DtDremEstimator> {
    let gamma = sc.positive("gamma")?;
    let kappa = sc.positive("kappa")?;
    match DtDremEstimator::new(eta0.clone(), gamma, kappa, npre) {
        Ok(e) => Ok(e),
        Err(e @ (DremError::KappaTooSmall { .. } | DremError::GainTooLarge { .. })) => {
            warnings.push(format!("gain validation: {e}"));
            Ok(DtDremEstimator::new_unchecked(eta0, gamma, kappa, npre))
        }
        Err(e) => Err(e),
    }
}

fn names(base: &[&str]) -> Vec<String> {
    base.iter().map(|s| s.to_string()).collect()
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Extension, mixing and estimator update for one sample.
struct DremLoop {
    npre: FactorizedNpre,
    ext: DtExtensionState,
    est: DtDremEstimator,
    tracker: ExcitationTracker,
    prev: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl DremLoop {
    /// Returns the mixed output and whether the good map was singular.
    fn update(&mut self, omega: DMatrix<f64>, y: DVector<f64>) -> (MixedOutput, bool) {
        let q = self.npre.q();
        let mut mixed = MixedOutput { script_y: DVector::zeros(q), delta: 0.0 };
        let mut singular = false;
        if let Some((om, yp)) = self.prev.take() {
            self.ext = self.ext.step(&om, &yp);
            mixed = self.ext.mix(&self.npre.change);
            if self.est.step(&mixed, &self.npre).is_err() {
                singular = true;
            }
            self.tracker.track_dt(mixed.delta, self.est.kappa, self.est.sigma);
        }
        self.prev = Some((omega, y));
        (mixed, singular)
    }
}

pub(super) fn run_solar(sc: &Scenario) -> Result<Trace> {
    let n = sc.samples("horizon")?;
    let npre = with_p(solar::npre()?, sc)?;
    let th = sc.vec("theta");
    let theta = [th[0], th[1], th[2], th[3]];
    let eta_true = solar::forward(&theta);
    let offset = sc.num("eta_offset");
    let eta0 = DVector::from_iterator(4, eta_true.iter().map(|e| e - offset));
    let inputs = SolarInputs { peak: sc.num("solar_peak"), decay: sc.num("solar_decay") };
    let mut warnings = Vec::new();
    let est = estimator(sc, &npre, eta0.clone(), &mut warnings)?;
    let mut drem = DremLoop {
        ext: DtExtensionState::zeros(6, alpha(sc)?),
        est,
        tracker: ExcitationTracker::default(),
        prev: None,
        npre,
    };
    let mut baseline = GradientBaseline::new(DVector::zeros(6), sc.positive("baseline_gamma")?)?;
    let s_true = solar::s_map(&theta);
    let mut house = SolarHouse::new(theta);
    let mut held = solar::inverse(eta0.as_slice()).unwrap_or(theta);
    let mut events = 0;

    let mut cols = names(&["k", "y", "u", "I"]);
    cols.extend(indexed("omega", 6));
    cols.extend(names(&["delta", "delta_sq"]));
    cols.extend(indexed("script_y", 4));
    cols.extend(indexed("eta_hat", 4));
    cols.push("eta_tilde_norm".into());
    cols.extend(indexed("theta_hat", 4));
    cols.push("theta_tilde_norm".into());
    cols.extend(indexed("s_hat", 6));
    cols.extend(names(&[
        "s_tilde_norm",
        "baseline_residual",
        "sum_delta_sq",
        "normalized_sum",
        "product",
        "singular",
    ]));
    let mut trace = Trace::new(
        sc.name(),
        cols,
        names(&["eta_tilde_norm", "theta_tilde_norm", "s_tilde_norm"]),
    );

    for k in 0..=n {
        let (u_k, i_k) = (inputs.fan(k as i64), inputs.intensity(k as i64));
        let (y, om) = house.output()?;
        let omv = DVector::from_row_slice(&om);
        let (mixed, mut singular) =
            drem.update(DMatrix::from_row_slice(1, 6, &om), DVector::from_element(1, y));
        baseline.step(&omv, y);
        match solar::inverse(drem.est.eta_hat.as_slice()) {
            Ok(t) => held = t,
            Err(_) => singular = true,
        }
        if singular {
            events += 1;
        }
        let eh = drem.est.eta_hat.as_slice();
        let mut row = vec![k as f64, y, u_k, i_k];
        row.extend(om);
        row.extend([mixed.delta, mixed.delta * mixed.delta]);
        row.extend(mixed.script_y.iter());
        row.extend(eh);
        row.push(dist(eh, &eta_true));
        row.extend(held);
        row.push(dist(&held, &theta));
        row.extend(baseline.s_hat.iter());
        row.push(dist(baseline.s_hat.as_slice(), &s_true));
        row.push(baseline.residual(&omv, y));
        row.extend([
            drem.tracker.integral_delta_sq,
            drem.tracker.normalized_sum,
            drem.tracker.product,
            flag(singular),
        ]);
        trace.push(row);
        house.advance(y, u_k, i_k);
    }

    trace.summary = Summary {
        final_eta_tilde: Some(dist(drem.est.eta_hat.as_slice(), &eta_true)),
        final_tracking_error: None,
        excitation: Some(drem.tracker.integral_delta_sq),
        singular_events: events,
    };
    trace.warnings = warnings;
    Ok(trace)
}

fn reference(sc: &Scenario) -> impl Fn(i64) -> f64 {
    let (a, w) = (sc.num("ref_amplitude"), sc.num("ref_frequency"));
    move |k| if k < 0 { 0.0 } else { a * (w * k as f64).sin() }
}

pub(super) fn run_appc_indirect(sc: &Scenario) -> Result<Trace> {
    let n = sc.samples("horizon")?;
    let switch_at = sc.samples("switch_at")?;
    let (before, after) = (sc.num("theta_before"), sc.num("theta_after"));
    let theta_at = move |k: i64| if k < switch_at as i64 { before } else { after };
    let overparam = match sc.text("estimator") {
        "drem" => false,
        "overparam" => true,
        other => {
            return Err(DremError::Config(format!("estimator must be drem or overparam, got {other}")))
        }
    };
    let r = reference(sc);
    let npre = with_p(appc::indirect_npre()?, sc)?;
    let mut warnings = Vec::new();
    let theta_hat0 = sc.num("theta_hat0");
    let est = estimator(sc, &npre, DVector::from_element(1, theta_hat0), &mut warnings)?;
    let mut drem = DremLoop {
        ext: DtExtensionState::zeros(2, alpha(sc)?),
        est,
        tracker: ExcitationTracker::default(),
        prev: None,
        npre,
    };
    let s0 = sc.vec("S_hat0");
    let mut baseline = GradientBaseline::new(DVector::from_column_slice(s0), sc.positive("baseline_gamma")?)?;
    let mut held_theta = theta_hat0;
    let mut held_s = [s0[0], s0[1]];
    AppcIndirect::new(after)?;
    let mut plant = AppcIndirect::new(before)?;
    let (mut y_prev, mut u1, mut u2) = (0.0, 0.0, 0.0);
    let mut events = 0;

    let mut cols = names(&["k", "theta", "y", "u", "r", "omega1", "omega2", "psi", "delta", "delta_sq"]);
    cols.extend(names(&["script_y", "theta_hat", "theta_tilde", "s_hat1", "s_hat2"]));
    cols.extend(names(&["tracking_error", "sum_delta_sq", "product", "singular"]));
    let mut trace = Trace::new(sc.name(), cols, names(&["theta", "theta_tilde", "tracking_error"]));

    for k in 0..=n as i64 {
        let y = if k >= 1 {
            plant.theta = theta_at(k - 1);
            plant.step(u1)
        } else {
            0.0
        };
        let om = [-y_prev, u2];
        let psi = y - u1;
        let mut singular = false;
        let mut mixed = MixedOutput { script_y: DVector::zeros(1), delta: 0.0 };
        let u = if overparam {
            baseline.step(&DVector::from_row_slice(&om), psi);
            let s = [baseline.s_hat[0], baseline.s_hat[1]];
            match appc_indirect_overparam_control(&s, y, u1, r(k)) {
                Ok(u) => {
                    held_s = s;
                    u
                }
                Err(_) => {
                    singular = true;
                    appc_indirect_overparam_control(&held_s, y, u1, r(k))?
                }
            }
        } else {
            let (m, sing) = drem.update(DMatrix::from_row_slice(1, 2, &om), DVector::from_element(1, psi));
            mixed = m;
            singular |= sing;
            let th = drem.est.eta_hat[0];
            match appc_indirect_control(th, y, u1, r(k)) {
                Ok(u) => {
                    held_theta = th;
                    u
                }
                Err(_) => {
                    singular = true;
                    appc_indirect_control(held_theta, y, u1, r(k))?
                }
            }
        };
        if singular {
            events += 1;
        }
        let th_true = theta_at(k - 1);
        let theta_hat = if overparam { held_s[0] } else { held_theta };
        let e = y - r(k - 1) - th_true.powi(3) * r(k - 2);
        trace.push(vec![
            k as f64,
            th_true,
            y,
            u,
            r(k),
            om[0],
            om[1],
            psi,
            mixed.delta,
            mixed.delta * mixed.delta,
            mixed.script_y[0],
            theta_hat,
            theta_hat - th_true,
            baseline.s_hat[0],
            baseline.s_hat[1],
            e,
            drem.tracker.integral_delta_sq,
            drem.tracker.product,
            flag(singular),
        ]);
        y_prev = y;
        u2 = u1;
        u1 = u;
    }

    let last = trace.rows.last().expect("initial row");
    trace.summary = Summary {
        final_eta_tilde: Some(last[trace.column_index("theta_tilde").unwrap()].abs()),
        final_tracking_error: Some(last[trace.column_index("tracking_error").unwrap()].abs()),
        excitation: (!overparam).then_some(drem.tracker.integral_delta_sq),
        singular_events: events,
    };
    trace.warnings = warnings;
    Ok(trace)
}

pub(super) fn run_appc_direct(sc: &Scenario) -> Result<Trace> {
    let n = sc.samples("horizon")?;
    let pl = sc.vec("plant");
    let mut plant = AppcDirect::new(pl[0], pl[1], pl[2])?;
    let theta = plant.theta();
    let eta_true = appc::direct_forward(&theta);
    let offset = sc.num("eta_offset");
    let eta0 = DVector::from_iterator(4, eta_true.iter().map(|e| e - offset));
    let mut held = appc::direct_inverse(eta0.as_slice())?;
    let r = reference(sc);
    let npre = with_p(appc::direct_npre()?, sc)?;
    let mut warnings = Vec::new();
    let est = estimator(sc, &npre, eta0, &mut warnings)?;
    let mut drem = DremLoop {
        ext: DtExtensionState::zeros(5, alpha(sc)?),
        est,
        tracker: ExcitationTracker::default(),
        prev: None,
        npre,
    };
    let null = plant.regressor_null_vector();
    let mut events = 0;

    let mut cols = names(&["k", "y", "u", "r"]);
    cols.extend(indexed("omega", 5));
    cols.extend(names(&["delta", "delta_sq"]));
    cols.extend(indexed("script_y", 4));
    cols.extend(indexed("eta_hat", 4));
    cols.push("eta_tilde_norm".into());
    cols.extend(indexed("theta_hat", 4));
    cols.extend(names(&["theta_tilde_norm", "tracking_error", "null_residual"]));
    cols.extend(names(&["sum_delta_sq", "product", "singular"]));
    let mut trace = Trace::new(
        sc.name(),
        cols,
        names(&["eta_tilde_norm", "theta_tilde_norm", "tracking_error", "null_residual"]),
    );

    for k in 0..=n as i64 {
        let y = plant.output();
        let om = plant.regressor();
        let (mixed, mut singular) =
            drem.update(DMatrix::from_row_slice(1, 5, &om), DVector::from_element(1, y));
        match appc::direct_inverse(drem.est.eta_hat.as_slice()) {
            Ok(t) => held = t,
            Err(_) => singular = true,
        }
        if singular {
            events += 1;
        }
        let u = r(k) - held[3] * plant.u_hist[0] - held[2] * y;
        let e = y - plant.b1 * r(k - 1) - plant.b2 * r(k - 2);
        let eh = drem.est.eta_hat.as_slice();
        let mut row = vec![k as f64, y, u, r(k)];
        row.extend(om);
        row.extend([mixed.delta, mixed.delta * mixed.delta]);
        row.extend(mixed.script_y.iter());
        row.extend(eh);
        row.push(dist(eh, &eta_true));
        row.extend(held);
        row.push(dist(&held, &theta));
        row.push(e);
        row.push(om.iter().zip(null.iter()).map(|(a, b)| a * b).sum());
        row.extend([drem.tracker.integral_delta_sq, drem.tracker.product, flag(singular)]);
        trace.push(row);
        plant.advance(y, u);
    }

    let last = trace.rows.last().expect("initial row");
    trace.summary = Summary {
        final_eta_tilde: Some(dist(drem.est.eta_hat.as_slice(), &eta_true)),
        final_tracking_error: Some(last[trace.column_index("tracking_error").unwrap()].abs()),
        excitation: Some(drem.tracker.integral_delta_sq),
        singular_events: events,
    };
    trace.warnings = warnings;
    Ok(trace)
}
