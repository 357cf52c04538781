//! Regressor extension (CT and DT first-order filters) and adjugate mixing.

use nalgebra::{DMatrix, DVector};

use crate::nlpre::ParameterChange;

/// Continuous-time extension `Ẏ = −λY + Ωᵀy`, `Φ̇ = −λΦ + ΩᵀΩ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CtExtensionState {
    pub y: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub lambda: f64,
}

impl CtExtensionState {
    pub fn zeros(p: usize, lambda: f64) -> Self {
        Self { y: DVector::zeros(p), phi: DMatrix::zeros(p, p), lambda }
    }

    pub fn derivative(
        &self,
        omega: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        ct_extension_derivative(self, omega, y)
    }

    pub fn mix(&self, change: &ParameterChange) -> MixedOutput {
        mix(&self.y, &self.phi, change)
    }
}

pub fn ct_extension_derivative(
    state: &CtExtensionState,
    omega: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let dy = -state.lambda * &state.y + omega.tr_mul(y);
    let dphi = -state.lambda * &state.phi + omega.tr_mul(omega);
    (dy, dphi)
}

/// Discrete-time extension `Y(k) = −αY(k−1) + Ωᵀ(k−1)y(k−1)`, same for `Φ`.
/// The pole sits at `−α`, so transients alternate in sign.
#[derive(Clone, Debug, PartialEq)]
pub struct DtExtensionState {
    pub y: DVector<f64>,
    pub phi: DMatrix<f64>,
    pub alpha: f64,
}

impl DtExtensionState {
    pub fn zeros(p: usize, alpha: f64) -> Self {
        Self { y: DVector::zeros(p), phi: DMatrix::zeros(p, p), alpha }
    }

    pub fn step(&self, omega_prev: &DMatrix<f64>, y_prev: &DVector<f64>) -> Self {
        dt_extension_step(self, omega_prev, y_prev)
    }

    pub fn mix(&self, change: &ParameterChange) -> MixedOutput {
        mix(&self.y, &self.phi, change)
    }
}

pub fn dt_extension_step(
    state: &DtExtensionState,
    omega_prev: &DMatrix<f64>,
    y_prev: &DVector<f64>,
) -> DtExtensionState {
    DtExtensionState {
        y: -state.alpha * &state.y + omega_prev.tr_mul(y_prev),
        phi: -state.alpha * &state.phi + omega_prev.tr_mul(omega_prev),
        alpha: state.alpha,
    }
}

/// The `q` scalar regressions `𝒴 = Δ·G(η)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedOutput {
    pub script_y: DVector<f64>,
    pub delta: f64,
}

/// `𝒴 = C·adj(Φ)·Y`, `Δ = det Φ`.
pub fn mix(y: &DVector<f64>, phi: &DMatrix<f64>, change: &ParameterChange) -> MixedOutput {
    let (adj, delta) = adjugate_and_det(phi);
    MixedOutput { script_y: change.select(&(adj * y)), delta }
}

fn minor(a: &DMatrix<f64>, row: usize, col: usize) -> DMatrix<f64> {
    a.clone().remove_row(row).remove_column(col)
}

/// Laplace expansion along the first row.
pub fn cofactor_determinant(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    match n {
        0 => 1.0,
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        _ => (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * cofactor_determinant(&minor(a, 0, j))
            })
            .sum(),
    }
}

/// Transposed cofactor matrix, computed minor by minor.
pub fn cofactor_adjugate(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * cofactor_determinant(&minor(a, j, i))
    })
}

fn inf_norm(a: &DMatrix<f64>) -> f64 {
    a.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn adjugate_and_det(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    assert!(a.is_square(), "adjugate of a non-square matrix");
    let n = a.nrows();
    if n <= 4 {
        return (cofactor_adjugate(a), cofactor_determinant(a));
    }
    let lu = a.clone().lu();
    let det = lu.determinant();
    if det.abs() < 1e-12 * inf_norm(a).powi(n as i32) {
        return (cofactor_adjugate(a), cofactor_determinant(a));
    }
    match lu.try_inverse() {
        Some(inv) => (inv * det, det),
        None => (cofactor_adjugate(a), cofactor_determinant(a)),
    }
}

/// Classical adjugate, valid for singular matrices too.
pub fn adjugate(a: &DMatrix<f64>) -> DMatrix<f64> {
    adjugate_and_det(a).0
}

/// Cofactor expansion up to 4×4, LU beyond.
pub fn determinant(a: &DMatrix<f64>) -> f64 {
    assert!(a.is_square(), "determinant of a non-square matrix");
    if a.nrows() <= 4 {
        cofactor_determinant(a)
    } else {
        a.clone().lu().determinant()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn select_first(p: usize, q: usize) -> ParameterChange {
        ParameterChange::new(
            Arc::new(|t: &DVector<f64>| t.clone()),
            Arc::new(|e: &DVector<f64>| Ok(e.clone())),
            Arc::new(move |_: &DVector<f64>| Ok(DMatrix::identity(q, q))),
            (0..p).collect(),
            (0..q).collect(),
            DMatrix::identity(q, q),
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn ct_derivative_examples() {
        let p = 3;
        let s = CtExtensionState::zeros(p, 1.0);
        let v = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let (dy, dphi) = s.derivative(&DMatrix::identity(p, p), &v);
        assert_eq!(dy, v);
        assert_eq!(dphi, DMatrix::identity(p, p));

        let mut s = CtExtensionState::zeros(p, 2.0);
        s.y[0] = 1.0;
        s.phi[(1, 2)] = 4.0;
        let (dy, dphi) = s.derivative(&DMatrix::zeros(1, p), &DVector::zeros(1));
        assert_eq!(dy, DVector::from_vec(vec![-2.0, 0.0, 0.0]));
        assert_eq!(dphi[(1, 2)], -8.0);
    }

    #[test]
    fn dt_step_examples() {
        let p = 2;
        let v = DVector::from_vec(vec![5.0, 7.0]);
        let s = DtExtensionState::zeros(p, 0.9).step(&DMatrix::identity(p, p), &v);
        assert_eq!(s.y, v);
        assert_eq!(s.phi, DMatrix::identity(p, p));

        let mut s = DtExtensionState::zeros(p, 0.9);
        s.y.fill(1.0);
        let s = s.step(&DMatrix::zeros(1, p), &DVector::zeros(1));
        assert_eq!(s.y, DVector::from_element(p, -0.9));

        let row = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let two = DVector::from_element(1, 2.0);
        let s = DtExtensionState::zeros(p, 0.9).step(&row, &two).step(&row, &two);
        assert!((s.y[0] - 0.2).abs() < 1e-15 && (s.y[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn adjugate_small_cases() {
        assert_eq!(adjugate(&DMatrix::<f64>::identity(5, 5)), DMatrix::identity(5, 5));
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let adj = adjugate(&a);
        assert_eq!(adj, DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 1.0]));
        assert_eq!(&adj * &a, DMatrix::zeros(2, 2));
        let g = DMatrix::from_row_slice(2, 2, &[3.0, -1.5, 0.25, 8.0]);
        assert_eq!(adjugate(&g), DMatrix::from_row_slice(2, 2, &[8.0, 1.5, -0.25, 3.0]));
        assert_eq!(adjugate(&DMatrix::from_element(1, 1, 7.0))[(0, 0)], 1.0);
    }

    #[test]
    fn singular_large_matrix_uses_cofactors() {
        let mut a = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.5 * i as f64);
        let r0 = a.row(0).clone_owned();
        a.set_row(4, &(r0 * 2.0));
        let adj = adjugate(&a);
        assert!((&adj * &a).amax() < 1e-9);
        assert!(determinant(&a).abs() < 1e-9);
    }

    #[test]
    fn mix_examples() {
        let c = select_first(3, 2);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = mix(&y, &DMatrix::identity(3, 3), &c);
        assert_eq!(m.delta, 1.0);
        assert_eq!(m.script_y, DVector::from_vec(vec![1.0, 2.0]));

        let c = select_first(2, 1);
        let phi = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let w = DVector::from_vec(vec![1.0, 2.0]);
        let m = mix(&(&phi * &w), &phi, &c);
        assert_eq!(m.delta, 6.0);
        assert_eq!(m.script_y[0], 6.0);

        let phi = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let m = mix(&(&phi * &w), &phi, &c);
        assert_eq!(m.delta, 0.0);
        assert_eq!(m.script_y[0], 0.0);
    }
}
