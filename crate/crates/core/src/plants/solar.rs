//! Storage temperature of a solar-heated house, sampled every 10 minutes.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{DremError, Result};
use crate::nlpre::{FactorizedNpre, NonlinearMap, ParameterChange};

pub const SAMPLE_PERIOD_MIN: f64 = 10.0;

pub fn s_map(th: &[f64]) -> [f64; 6] {
    let (t1, t2, t3, t4) = (th[0], th[1], th[2], th[3]);
    [1.0 - t2, 1.0 - t4, (t4 - 1.0) * (1.0 + t2), t1 * t3, -t1, t1 * (1.0 + t2)]
}

fn s_jacobian(th: &[f64]) -> DMatrix<f64> {
    let (t1, t2, t3, t4) = (th[0], th[1], th[2], th[3]);
    DMatrix::from_row_slice(
        6,
        4,
        &[
            0.0, -1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, -1.0,
            0.0, t4 - 1.0, 0.0, 1.0 + t2,
            t3, 0.0, t1, 0.0,
            -1.0, 0.0, 0.0, 0.0,
            1.0 + t2, t1, 0.0, 0.0,
        ],
    )
}

/// `η = (−θ₁, 1−θ₂, θ₁θ₃, 1−θ₄)`.
pub fn forward(th: &[f64]) -> [f64; 4] {
    [-th[0], 1.0 - th[1], th[0] * th[2], 1.0 - th[3]]
}

pub fn inverse(e: &[f64]) -> Result<[f64; 4]> {
    if e[0] == 0.0 {
        return Err(DremError::SingularCoordinate { component: 1, detail: "eta1 = 0" });
    }
    Ok([-e[0], 1.0 - e[1], -e[2] / e[0], 1.0 - e[3]])
}

fn inverse_jacobian(e: &[f64]) -> Result<DMatrix<f64>> {
    inverse(e)?;
    Ok(DMatrix::from_row_slice(
        4,
        4,
        &[
            -1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
            e[2] / (e[0] * e[0]), 0.0, -1.0 / e[0], 0.0,
            0.0, 0.0, 0.0, -1.0,
        ],
    ))
}

/// `G(η) = (W₅, W₁, W₄, W₂) = η`, `P = I₄`, `ρ = 2`, `ν = 1`.
pub fn npre() -> Result<FactorizedNpre> {
    let map = NonlinearMap::new(
        4,
        6,
        Arc::new(|t: &DVector<f64>| DVector::from_row_slice(&s_map(t.as_slice()))),
        Arc::new(|t: &DVector<f64>| s_jacobian(t.as_slice())),
        vec![(0.1, 1.0); 4],
    )?;
    let change = ParameterChange::new(
        Arc::new(|t: &DVector<f64>| DVector::from_row_slice(&forward(t.as_slice()))),
        Arc::new(|e: &DVector<f64>| Ok(DVector::from_row_slice(&inverse(e.as_slice())?))),
        Arc::new(|e: &DVector<f64>| inverse_jacobian(e.as_slice())),
        vec![4, 0, 3, 1, 5, 2],
        vec![0, 1, 2, 3],
        DMatrix::identity(4, 4),
        2.0,
        1.0,
    )?;
    FactorizedNpre::new(map, change, 1)
}

/// `Ω(k)` from `y(k−1), y(k−2), u(k−1), u(k−2), I(k−2)`.
pub fn regressor(y1: f64, y2: f64, u1: f64, u2: f64, i2: f64, k: usize) -> Result<[f64; 6]> {
    if u2 == 0.0 {
        return Err(DremError::ZeroDivision(k));
    }
    let r = u1 / u2;
    Ok([y1, y1 * r, y2 * r, u1 * i2, u1 * y1, u1 * y2])
}

/// Synthetic day profile: `I(k) = peak·e^{−decay·k}·|sin(πk/24)|` and a fan
/// pulse train alternating between 1.0 and 0.5 every 12 samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolarInputs {
    pub peak: f64,
    pub decay: f64,
}

impl Default for SolarInputs {
    fn default() -> Self {
        Self { peak: 25.0, decay: 0.01 }
    }
}

impl SolarInputs {
    pub fn intensity(&self, k: i64) -> f64 {
        if k < 0 {
            return 0.0;
        }
        let k = k as f64;
        self.peak * (-self.decay * k).exp() * (PI * k / 24.0).sin().abs()
    }

    pub fn fan(&self, k: i64) -> f64 {
        if k < 0 || (k / 12) % 2 == 0 {
            1.0
        } else {
            0.5
        }
    }
}

/// Difference-equation plant with its own signal history.
#[derive(Clone, Debug, PartialEq)]
pub struct SolarHouse {
    pub theta: [f64; 4],
    s: [f64; 6],
    /// `y(k−1), y(k−2)`.
    pub y_hist: [f64; 2],
    /// `u(k−1), u(k−2)`.
    pub u_hist: [f64; 2],
    /// `I(k−1), I(k−2)`.
    pub i_hist: [f64; 2],
    k: usize,
}

impl SolarHouse {
    /// Zero temperature and intensity history, fan history at 1.0.
    pub fn new(theta: [f64; 4]) -> Self {
        Self { theta, s: s_map(&theta), y_hist: [0.0; 2], u_hist: [1.0; 2], i_hist: [0.0; 2], k: 0 }
    }

    pub fn sample(&self) -> usize {
        self.k
    }

    pub fn regressor(&self) -> Result<[f64; 6]> {
        regressor(self.y_hist[0], self.y_hist[1], self.u_hist[0], self.u_hist[1], self.i_hist[1], self.k)
    }

    /// Output `y(k)` for the current history; `Ω(k)` is returned alongside.
    pub fn output(&self) -> Result<(f64, [f64; 6])> {
        let om = self.regressor()?;
        let y = om.iter().zip(self.s.iter()).map(|(a, b)| a * b).sum();
        Ok((y, om))
    }

    /// Records `y(k)`, `u(k)`, `I(k)` and moves to `k+1`.
    pub fn advance(&mut self, y: f64, u: f64, i: f64) {
        self.y_hist = [y, self.y_hist[0]];
        self.u_hist = [u, self.u_hist[0]];
        self.i_hist = [i, self.i_hist[0]];
        self.k += 1;
    }
}

/// One step of the difference equation from explicit history values.
pub fn solar_step(theta: &[f64; 4], y: [f64; 2], u: [f64; 2], i2: f64) -> Result<f64> {
    let om = regressor(y[0], y[1], u[0], u[1], i2, 0)?;
    let s = s_map(theta);
    Ok(om.iter().zip(s.iter()).map(|(a, b)| a * b).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlpre::eval_good_map;

    #[test]
    fn s_at_half() {
        let s = s_map(&[0.5; 4]);
        assert_eq!(s, [0.5, 0.5, -0.75, 0.25, -0.5, 0.75]);
    }

    #[test]
    fn eta_at_half_and_initial_estimate() {
        let eta = forward(&[0.5; 4]);
        assert_eq!(eta, [-0.5, 0.5, 0.25, 0.5]);
        let init: Vec<f64> = eta.iter().map(|e| e - 0.5).collect();
        assert_eq!(init, vec![-1.0, 0.0, -0.25, 0.0]);
    }

    #[test]
    fn good_map_is_identity() {
        let npre = npre().unwrap();
        let eta = DVector::from_vec(vec![-0.3, 1.7, 0.2, -4.0]);
        assert_eq!(eval_good_map(&npre, &eta).unwrap(), eta);
    }

    #[test]
    fn difference_equation_matches_written_form() {
        let th = [0.3, 0.6, 0.9, 0.2];
        let (y1, y2, u1, u2, i2) = (1.5, -0.7, 0.5, 1.0, 3.0);
        let direct = (1.0 - th[1]) * y1 + (1.0 - th[3]) * y1 * u1 / u2
            + (th[3] - 1.0) * (1.0 + th[1]) * y2 * u1 / u2
            + th[0] * th[2] * u1 * i2
            - th[0] * u1 * y1
            + th[0] * (1.0 + th[1]) * u1 * y2;
        let y = solar_step(&th, [y1, y2], [u1, u2], i2).unwrap();
        assert!((y - direct).abs() < 1e-14);
        assert_eq!(solar_step(&th, [0.0; 2], [1.0; 2], 0.0).unwrap(), 0.0);
        assert!(matches!(solar_step(&th, [1.0; 2], [1.0, 0.0], 1.0), Err(DremError::ZeroDivision(_))));
    }

    #[test]
    fn inputs_are_nonzero_pulses() {
        let inp = SolarInputs::default();
        for k in -2..200 {
            let u = inp.fan(k);
            assert!(u == 1.0 || u == 0.5);
            assert!(inp.intensity(k) >= 0.0);
        }
        assert_eq!(inp.fan(11), 1.0);
        assert_eq!(inp.fan(12), 0.5);
        assert_eq!(inp.fan(24), 1.0);
    }
}
