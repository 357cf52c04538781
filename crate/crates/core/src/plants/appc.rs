//! Adaptive pole placement with a deadbeat target `A_m = 1`.
//!
//! Indirect: plant `y(k+1) + θy(k) = u(k) + θ³u(k−1)` written as
//! `y(k) − u(k−1) = (−y(k−1), u(k−2))·(θ, θ³)`.
//!
//! Direct: plant `A = 1 + a₁q⁻¹`, `B = b₁q⁻¹ + b₂q⁻²`, controller
//! `(1 + l₁q⁻¹)u + p₀y = r`, estimated through `θ = (b₁, b₂, p₀, l₁)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{DremError, Result};
use crate::nlpre::{FactorizedNpre, NonlinearMap, ParameterChange};

/// `G(θ) = θ` taken from the first component of `(θ, θ³)`.
pub fn indirect_npre() -> Result<FactorizedNpre> {
    let map = NonlinearMap::new(
        1,
        2,
        Arc::new(|t: &DVector<f64>| DVector::from_vec(vec![t[0], t[0].powi(3)])),
        Arc::new(|t: &DVector<f64>| DMatrix::from_column_slice(2, 1, &[1.0, 3.0 * t[0] * t[0]])),
        vec![(-0.99, 0.99)],
    )?;
    let change = ParameterChange::new(
        Arc::new(|t: &DVector<f64>| t.clone()),
        Arc::new(|e: &DVector<f64>| Ok(e.clone())),
        Arc::new(|_: &DVector<f64>| Ok(DMatrix::identity(1, 1))),
        vec![0, 1],
        vec![0],
        DMatrix::identity(1, 1),
        2.0,
        1.0,
    )?;
    FactorizedNpre::new(map, change, 1)
}

/// Controller polynomials `(l₁, p₀)` solving the Bezout identity for `θ`.
pub fn indirect_bezout(theta: f64) -> Result<(f64, f64)> {
    let det = theta.powi(3) - theta;
    if det.abs() < 1e-12 {
        return Err(DremError::ControllerSingular(format!(
            "Sylvester matrix singular at theta = {theta}"
        )));
    }
    let l1 = theta.powi(3) / (1.0 - theta * theta);
    Ok((l1, -theta - l1))
}

/// `u = −(θ̂y − θ̂³u(k−1))/(θ̂² − 1) + r`; finite at `θ̂ = 0`.
pub fn appc_indirect_control(theta_hat: f64, y: f64, u_prev: f64, r: f64) -> Result<f64> {
    let den = theta_hat * theta_hat - 1.0;
    if den.abs() < 1e-9 {
        return Err(DremError::ControllerSingular(format!("theta_hat = {theta_hat}")));
    }
    Ok(-(theta_hat * y - theta_hat.powi(3) * u_prev) / den + r)
}

/// Certainty-equivalent law on the overparameterized estimate `Ŝ ≈ (θ, θ³)`.
pub fn appc_indirect_overparam_control(s_hat: &[f64; 2], y: f64, u_prev: f64, r: f64) -> Result<f64> {
    let den = s_hat[1] - s_hat[0];
    if den.abs() < 1e-9 {
        return Err(DremError::ControllerSingular(format!("S1 = S2 = {}", s_hat[0])));
    }
    Ok(-(s_hat[0] * s_hat[0] * y - s_hat[0] * s_hat[1] * u_prev) / den + r)
}

/// Indirect plant with switching parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AppcIndirect {
    pub theta: f64,
    pub y: f64,
    pub u_prev: f64,
}

impl AppcIndirect {
    pub fn new(theta: f64) -> Result<Self> {
        if (theta.abs() - 1.0).abs() < 1e-12 {
            return Err(DremError::Config("theta = ±1 loses coprimeness".into()));
        }
        Ok(Self { theta, y: 0.0, u_prev: 0.0 })
    }

    /// `y(k+1) = −θy(k) + u(k) + θ³u(k−1)`.
    pub fn step(&mut self, u: f64) -> f64 {
        self.y = -self.theta * self.y + u + self.theta.powi(3) * self.u_prev;
        self.u_prev = u;
        self.y
    }
}

pub fn direct_s_map(th: &[f64]) -> [f64; 5] {
    [th[0] * th[2], th[1] * th[2], th[0], th[0] * th[3] + th[1], th[1] * th[3]]
}

fn direct_s_jacobian(th: &[f64]) -> DMatrix<f64> {
    let (t1, t2, t3, t4) = (th[0], th[1], th[2], th[3]);
    DMatrix::from_row_slice(
        5,
        4,
        &[
            t3, 0.0, t1, 0.0,
            0.0, t3, t2, 0.0,
            1.0, 0.0, 0.0, 0.0,
            t4, 1.0, 0.0, t1,
            0.0, t4, 0.0, t2,
        ],
    )
}

/// `η = (θ₁, θ₂θ₃, θ₁θ₃, θ₂θ₄)`.
pub fn direct_forward(th: &[f64]) -> [f64; 4] {
    [th[0], th[1] * th[2], th[0] * th[2], th[1] * th[3]]
}

pub fn direct_inverse(e: &[f64]) -> Result<[f64; 4]> {
    for (i, detail) in [(0, "eta1 = 0"), (1, "eta2 = 0"), (2, "eta3 = 0")] {
        if e[i] == 0.0 {
            return Err(DremError::SingularCoordinate { component: i + 1, detail });
        }
    }
    Ok([e[0], e[1] * e[0] / e[2], e[2] / e[0], e[2] * e[3] / (e[1] * e[0])])
}

fn direct_inverse_jacobian(e: &[f64]) -> Result<DMatrix<f64>> {
    direct_inverse(e)?;
    let (e1, e2, e3, e4) = (e[0], e[1], e[2], e[3]);
    let d = e1 * e2;
    Ok(DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0,
            e2 / e3, e1 / e3, -e1 * e2 / (e3 * e3), 0.0,
            -e3 / (e1 * e1), 0.0, 1.0 / e1, 0.0,
            -e3 * e4 / (e1 * d), -e3 * e4 / (e2 * d), e4 / d, e3 / d,
        ],
    ))
}

/// `T·W = (W₃, W₂, W₁, W₅, W₄)`, `G(η) = η`, `P = I₄`, `ρ = 2`, `ν = 1`.
pub fn direct_npre() -> Result<FactorizedNpre> {
    let map = NonlinearMap::new(
        4,
        5,
        Arc::new(|t: &DVector<f64>| DVector::from_row_slice(&direct_s_map(t.as_slice()))),
        Arc::new(|t: &DVector<f64>| direct_s_jacobian(t.as_slice())),
        vec![(0.1, 1.5); 4],
    )?;
    let change = ParameterChange::new(
        Arc::new(|t: &DVector<f64>| DVector::from_row_slice(&direct_forward(t.as_slice()))),
        Arc::new(|e: &DVector<f64>| Ok(DVector::from_row_slice(&direct_inverse(e.as_slice())?))),
        Arc::new(|e: &DVector<f64>| direct_inverse_jacobian(e.as_slice())),
        vec![2, 1, 0, 4, 3],
        vec![0, 1, 2, 3],
        DMatrix::identity(4, 4),
        2.0,
        1.0,
    )?;
    FactorizedNpre::new(map, change, 1)
}

/// Plant `y(k) = −a₁y(k−1) + b₁u(k−1) + b₂u(k−2)` with its signal history.
#[derive(Clone, Debug, PartialEq)]
pub struct AppcDirect {
    pub a1: f64,
    pub b1: f64,
    pub b2: f64,
    /// `y(k−1), y(k−2)`.
    pub y_hist: [f64; 2],
    /// `u(k−1), u(k−2), u(k−3)`.
    pub u_hist: [f64; 3],
}

impl AppcDirect {
    pub fn new(a1: f64, b1: f64, b2: f64) -> Result<Self> {
        if b1 == 0.0 && b2 == 0.0 {
            return Err(DremError::Config("B polynomial is zero".into()));
        }
        if (b2 - a1 * b1).abs() < 1e-12 {
            return Err(DremError::Config("A and B are not coprime".into()));
        }
        Ok(Self { a1, b1, b2, y_hist: [0.0; 2], u_hist: [0.0; 3] })
    }

    /// Deadbeat controller `(p₀, l₁)`, with `p₁ = 0`.
    pub fn bezout(&self) -> (f64, f64) {
        let den = self.b2 - self.a1 * self.b1;
        (self.a1 * self.a1 / den, -self.a1 * self.b2 / den)
    }

    /// `θ = (b₁, b₂, p₀, l₁)`.
    pub fn theta(&self) -> [f64; 4] {
        let (p0, l1) = self.bezout();
        [self.b1, self.b2, p0, l1]
    }

    /// Output `y(k)` from the stored history.
    pub fn output(&self) -> f64 {
        -self.a1 * self.y_hist[0] + self.b1 * self.u_hist[0] + self.b2 * self.u_hist[1]
    }

    /// `Ω(k) = (y(k−1), y(k−2), u(k−1), u(k−2), u(k−3))`.
    pub fn regressor(&self) -> [f64; 5] {
        [self.y_hist[0], self.y_hist[1], self.u_hist[0], self.u_hist[1], self.u_hist[2]]
    }

    /// The plant equation one step back makes `Ω(k)·v = 0` for this `v`.
    pub fn regressor_null_vector(&self) -> [f64; 5] {
        [1.0, self.a1, 0.0, -self.b1, -self.b2]
    }

    pub fn advance(&mut self, y: f64, u: f64) {
        self.y_hist = [y, self.y_hist[0]];
        self.u_hist = [u, self.u_hist[0], self.u_hist[1]];
    }
}

/// `u = r − l̂₁u(k−1) − p̂₀y(k)` with `(p̂₀, l̂₁)` from `Dᴵ(η̂)`.
pub fn appc_direct_control(eta_hat: &[f64], y: f64, u_prev: f64, r: f64) -> Result<f64> {
    let th = direct_inverse(eta_hat)?;
    Ok(r - th[3] * u_prev - th[2] * y)
}

/// Regressor builder, parameter change and controller for a given plant.
pub fn appc_direct_build(plant: &AppcDirect) -> Result<(FactorizedNpre, [f64; 4])> {
    Ok((direct_npre()?, direct_forward(&plant.theta())))
}
