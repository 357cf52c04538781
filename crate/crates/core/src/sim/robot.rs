//! Continuous-time two-link arm scenarios on a single RK4 clock.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use super::{rk4_step_checked, Scenario, Summary, Trace};
use crate::error::{DremError, Result};
use crate::estimators::{ct_estimator_derivative, ExcitationTracker};
use crate::mixing::{mix, MixedOutput};
use crate::nlpre::FactorizedNpre;
use crate::plants::robot::{
    self, computed_torque_control, default_reference, slotine_li_control, Matrix2x5,
    RobotRegressorFilters, TrackingGains, TwoDofRobot, Vector5,
};

const Q: usize = 0;
const QD: usize = 2;
const PSI: usize = 4;
const YF: usize = 14;
const EY: usize = 16;
const PHI: usize = 21;
const ETA: usize = 46;
const DREM_WIDTH: usize = 50;

#[derive(Clone, Copy, PartialEq)]
enum Controller {
    SlotineLi,
    ComputedTorque,
}

struct Common {
    h: f64,
    steps: usize,
    record_every: usize,
    g: f64,
    theta: [f64; 4],
    robot: TwoDofRobot,
    gains: TrackingGains,
    q0: Vector2<f64>,
    qd0: Vector2<f64>,
}

fn diag2(v: &[f64]) -> Matrix2<f64> {
    Matrix2::new(v[0], 0.0, 0.0, v[1])
}

fn common(sc: &Scenario) -> Result<Common> {
    let h = sc.positive("h")?;
    let horizon = sc.num("horizon");
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(DremError::Config(format!("horizon must be non-negative, got {horizon}")));
    }
    let steps = (horizon / h).round() as usize;
    let record_every = sc.samples("record_every")?.max(1);
    let g = sc.num("g");
    let th = sc.vec("theta");
    let theta = [th[0], th[1], th[2], th[3]];
    let robot = TwoDofRobot::new(&theta, g)?;
    let gains = TrackingGains { k1: diag2(sc.vec("K1_diag")), k2: diag2(sc.vec("K2_diag")) };
    let q0 = Vector2::from_column_slice(sc.vec("q0"));
    let qd0 = Vector2::from_column_slice(sc.vec("qd0"));
    Ok(Common { h, steps, record_every, g, theta, robot, gains, q0, qd0 })
}

fn positive_diag(sc: &Scenario, key: &str) -> Result<DMatrix<f64>> {
    let d = sc.vec(key);
    if d.iter().any(|&x| !(x > 0.0)) {
        return Err(DremError::Config(format!("{key} entries must be positive")));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
}

struct DremCtx {
    c: Common,
    npre: FactorizedNpre,
    gamma: DMatrix<f64>,
    lambda: f64,
    lambda_reg: f64,
    adapt: bool,
    controller: Controller,
    s_true: Vector5,
}

struct StageOut {
    u: Vector2<f64>,
    theta_hat: [f64; 4],
    mixed: MixedOutput,
    omega: Matrix2x5,
    y: Vector2<f64>,
    singular: bool,
}

fn unpack_mat(x: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, x)
}

impl DremCtx {
    fn stage(&self, t: f64, x: &[f64], held: &[f64; 4]) -> StageOut {
        let q = Vector2::new(x[Q], x[Q + 1]);
        let qd = Vector2::new(x[QD], x[QD + 1]);
        let eta = DVector::from_column_slice(&x[ETA..ETA + 4]);
        let mut singular = false;
        let theta_hat = if self.adapt {
            match robot::inverse(eta.as_slice()) {
                Ok(th) => th,
                Err(_) => {
                    singular = true;
                    *held
                }
            }
        } else {
            self.c.theta
        };
        let s_hat = if self.adapt { robot::s_map(&theta_hat) } else { self.s_true };
        let reference = default_reference(t);
        let u = match self.controller {
            Controller::SlotineLi => {
                slotine_li_control(&s_hat, &q, &qd, &reference, &self.c.gains, self.c.g).u
            }
            Controller::ComputedTorque => {
                computed_torque_control(&s_hat, &q, &qd, &reference, &self.c.gains, self.c.g)
            }
        };
        let mut filters = RobotRegressorFilters::zeros(self.lambda_reg, self.c.g);
        filters.psi = Matrix2x5::from_column_slice(&x[PSI..PSI + 10]);
        filters.y = Vector2::new(x[YF], x[YF + 1]);
        let omega = filters.omega(&q, &qd);
        let ey = DVector::from_column_slice(&x[EY..EY + 5]);
        let phi = unpack_mat(&x[PHI..PHI + 25], 5, 5);
        let mixed = mix(&ey, &phi, &self.npre.change);
        StageOut { u, theta_hat, mixed, omega, y: filters.y, singular }
    }

    fn rhs(&self, t: f64, x: &[f64], dx: &mut [f64], held: &[f64; 4], flag: &mut bool) {
        let out = self.stage(t, x, held);
        *flag |= out.singular;
        let q = Vector2::new(x[Q], x[Q + 1]);
        let qd = Vector2::new(x[QD], x[QD + 1]);
        let qdd = self.c.robot.dynamics(&q, &qd, &out.u);
        dx[Q..Q + 2].copy_from_slice(qd.as_slice());
        dx[QD..QD + 2].copy_from_slice(qdd.as_slice());

        let mut filters = RobotRegressorFilters::zeros(self.lambda_reg, self.c.g);
        filters.psi = Matrix2x5::from_column_slice(&x[PSI..PSI + 10]);
        filters.y = out.y;
        let (dpsi, dyf) = filters.derivative(&q, &qd, &out.u);
        dx[PSI..PSI + 10].copy_from_slice(dpsi.as_slice());
        dx[YF..YF + 2].copy_from_slice(dyf.as_slice());

        let om = DMatrix::from_column_slice(2, 5, out.omega.as_slice());
        let yv = DVector::from_column_slice(out.y.as_slice());
        let ey = DVector::from_column_slice(&x[EY..EY + 5]);
        let phi = unpack_mat(&x[PHI..PHI + 25], 5, 5);
        let dey = -self.lambda * &ey + om.tr_mul(&yv);
        let dphi = -self.lambda * &phi + om.tr_mul(&om);
        dx[EY..EY + 5].copy_from_slice(dey.as_slice());
        dx[PHI..PHI + 25].copy_from_slice(dphi.as_slice());

        let eta = DVector::from_column_slice(&x[ETA..ETA + 4]);
        let deta = if self.adapt {
            let p = self.npre.change.p_matrix();
            match ct_estimator_derivative(&self.gamma, p, &eta, &out.mixed, &self.npre) {
                Ok(d) => d,
                Err(_) => {
                    *flag = true;
                    DVector::zeros(4)
                }
            }
        } else {
            DVector::zeros(4)
        };
        dx[ETA..ETA + 4].copy_from_slice(deta.as_slice());
    }
}

fn drem_columns() -> Vec<String> {
    let mut c: Vec<String> = ["t", "q1", "q2", "qd1", "qd2", "q_err1", "q_err2", "u1", "u2", "y1", "y2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for r in 1..=2 {
        for k in 1..=5 {
            c.push(format!("omega_{r}_{k}"));
        }
    }
    c.extend(["delta", "delta_sq"].map(String::from));
    c.extend((1..=4).map(|i| format!("script_y{i}")));
    c.extend((1..=4).map(|i| format!("eta_hat{i}")));
    c.push("eta_tilde_norm".into());
    c.extend((1..=4).map(|i| format!("theta_hat{i}")));
    c.extend(["theta_tilde_norm", "tracking_error", "s_energy", "int_delta_sq", "singular"].map(String::from));
    c
}

fn s_energy(robot: &TwoDofRobot, gains: &TrackingGains, t: f64, q: &Vector2<f64>, qd: &Vector2<f64>) -> f64 {
    let r = default_reference(t);
    let s = (qd - r.qd) + gains.k2 * (q - r.q);
    0.5 * s.dot(&(robot.inertia(q) * s))
}

pub(super) fn run_drem(sc: &Scenario) -> Result<Trace> {
    let c = common(sc)?;
    let p_diag = sc.vec("P_diag");
    if p_diag.iter().any(|&x| !(x > 0.0)) {
        return Err(DremError::Config("P_diag entries must be positive".into()));
    }
    let base = robot::npre(1.0)?;
    let change = base
        .change
        .clone()
        .with_p_matrix(DMatrix::from_diagonal(&DVector::from_column_slice(p_diag)))?;
    let npre = FactorizedNpre::new(base.map, change, 2)?;
    let controller = match sc.text("controller") {
        "slotine-li" => Controller::SlotineLi,
        "computed-torque" => Controller::ComputedTorque,
        other => {
            return Err(DremError::Config(format!(
                "controller must be slotine-li or computed-torque, got {other}"
            )))
        }
    };
    let ctx = DremCtx {
        s_true: robot::s_map(&c.theta),
        gamma: positive_diag(sc, "Gamma_diag")?,
        lambda: sc.positive("lambda")?,
        lambda_reg: sc.positive("lambda_regressor")?,
        adapt: sc.num("adapt") != 0.0,
        controller,
        npre,
        c,
    };
    let th0 = sc.vec("theta_hat0");
    let eta_true = robot::forward(&ctx.c.theta);
    let eta0 = robot::forward(th0);
    robot::inverse(&eta0)?;

    let mut x = vec![0.0; DREM_WIDTH];
    x[Q..Q + 2].copy_from_slice(ctx.c.q0.as_slice());
    x[QD..QD + 2].copy_from_slice(ctx.c.qd0.as_slice());
    x[ETA..ETA + 4].copy_from_slice(&eta0);
    let mut held = [th0[0], th0[1], th0[2], th0[3]];
    let mut tracker = ExcitationTracker::default();
    let mut events = 0usize;
    let mut trace = Trace::new(
        sc.name(),
        drem_columns(),
        vec!["eta_tilde_norm".into(), "theta_tilde_norm".into()],
    );

    let record = |trace: &mut Trace, t: f64, x: &[f64], held: &[f64; 4], int_d2: f64, flag: bool| {
        let out = ctx.stage(t, x, held);
        let q = Vector2::new(x[Q], x[Q + 1]);
        let qd = Vector2::new(x[QD], x[QD + 1]);
        let r = default_reference(t);
        let qe = q - r.q;
        let mut row = vec![t, q[0], q[1], qd[0], qd[1], qe[0], qe[1], out.u[0], out.u[1], out.y[0], out.y[1]];
        for i in 0..2 {
            for k in 0..5 {
                row.push(out.omega[(i, k)]);
            }
        }
        row.push(out.mixed.delta);
        row.push(out.mixed.delta * out.mixed.delta);
        row.extend(out.mixed.script_y.iter());
        row.extend(&x[ETA..ETA + 4]);
        let et: f64 = (0..4).map(|i| (x[ETA + i] - eta_true[i]).powi(2)).sum::<f64>().sqrt();
        row.push(et);
        row.extend(out.theta_hat);
        let tt: f64 = (0..4).map(|i| (out.theta_hat[i] - ctx.c.theta[i]).powi(2)).sum::<f64>().sqrt();
        row.push(tt);
        row.push(qe.norm());
        row.push(s_energy(&ctx.c.robot, &ctx.c.gains, t, &q, &qd));
        row.push(int_d2);
        row.push(if flag { 1.0 } else { 0.0 });
        trace.push(row);
    };

    record(&mut trace, 0.0, &x, &held, 0.0, false);
    for step in 0..ctx.c.steps {
        let t = step as f64 * ctx.c.h;
        let delta0 = ctx.stage(t, &x, &held).mixed.delta;
        let mut flag = false;
        x = rk4_step_checked(|tt, s, d| ctx.rhs(tt, s, d, &held, &mut flag), &x, t, ctx.c.h, step + 1)?;
        tracker.track_ct(delta0, ctx.c.h);
        if ctx.adapt {
            match robot::inverse(&x[ETA..ETA + 4]) {
                Ok(th) => held = th,
                Err(_) => flag = true,
            }
        }
        if flag {
            events += 1;
        }
        let t1 = (step + 1) as f64 * ctx.c.h;
        if (step + 1) % ctx.c.record_every == 0 || step + 1 == ctx.c.steps {
            record(&mut trace, t1, &x, &held, tracker.integral_delta_sq, flag);
        }
    }

    let last = trace.rows.last().expect("initial row");
    trace.summary = Summary {
        final_eta_tilde: Some(last[trace.column_index("eta_tilde_norm").unwrap()]),
        final_tracking_error: Some(last[trace.column_index("tracking_error").unwrap()]),
        excitation: Some(tracker.integral_delta_sq),
        singular_events: events,
    };
    Ok(trace)
}

pub(super) fn run_overparam(sc: &Scenario) -> Result<Trace> {
    let c = common(sc)?;
    let gamma = positive_diag(sc, "Gamma_diag")?;
    let s_true = robot::s_map(&c.theta);
    let mut x = vec![0.0; 9];
    x[0..2].copy_from_slice(c.q0.as_slice());
    x[2..4].copy_from_slice(c.qd0.as_slice());
    x[4..9].copy_from_slice(sc.vec("S_hat0"));

    let law = |t: f64, x: &[f64]| {
        let q = Vector2::new(x[0], x[1]);
        let qd = Vector2::new(x[2], x[3]);
        let s_hat = Vector5::from_column_slice(&x[4..9]);
        slotine_li_control(&s_hat, &q, &qd, &default_reference(t), &c.gains, c.g)
    };
    let rhs = |t: f64, x: &[f64], dx: &mut [f64]| {
        let q = Vector2::new(x[0], x[1]);
        let qd = Vector2::new(x[2], x[3]);
        let out = law(t, x);
        let qdd = c.robot.dynamics(&q, &qd, &out.u);
        dx[0..2].copy_from_slice(qd.as_slice());
        dx[2..4].copy_from_slice(qdd.as_slice());
        let w = DMatrix::from_column_slice(2, 5, out.regressor.as_slice());
        let sv = DVector::from_column_slice(out.s.as_slice());
        let ds = -(&gamma * w.tr_mul(&sv));
        dx[4..9].copy_from_slice(ds.as_slice());
    };

    let mut columns: Vec<String> =
        ["t", "q1", "q2", "qd1", "qd2", "q_err1", "q_err2", "u1", "u2"].iter().map(|s| s.to_string()).collect();
    columns.extend((1..=5).map(|i| format!("s_hat{i}")));
    columns.extend(["s_tilde_norm", "tracking_error", "s_energy", "singular"].map(String::from));
    let mut trace = Trace::new(sc.name(), columns, vec!["s_tilde_norm".into()]);
    let record = |trace: &mut Trace, t: f64, x: &[f64]| {
        let q = Vector2::new(x[0], x[1]);
        let qd = Vector2::new(x[2], x[3]);
        let r = default_reference(t);
        let qe = q - r.q;
        let out = law(t, x);
        let mut row = vec![t, q[0], q[1], qd[0], qd[1], qe[0], qe[1], out.u[0], out.u[1]];
        row.extend(&x[4..9]);
        let st: f64 = (0..5).map(|i| (x[4 + i] - s_true[i]).powi(2)).sum::<f64>().sqrt();
        row.extend([st, qe.norm(), s_energy(&c.robot, &c.gains, t, &q, &qd), 0.0]);
        trace.push(row);
    };

    record(&mut trace, 0.0, &x);
    for step in 0..c.steps {
        let t = step as f64 * c.h;
        x = rk4_step_checked(rhs, &x, t, c.h, step + 1)?;
        if (step + 1) % c.record_every == 0 || step + 1 == c.steps {
            record(&mut trace, (step + 1) as f64 * c.h, &x);
        }
    }
    let last = trace.rows.last().expect("initial row");
    trace.summary = Summary {
        final_eta_tilde: None,
        final_tracking_error: Some(last[trace.column_index("tracking_error").unwrap()]),
        excitation: None,
        singular_events: 0,
    };
    Ok(trace)
}
