//! Planar two-link arm with point masses at the link tips.
//!
//! Physical parameters `θ = (l₁, l₂, m₁, m₂)` enter the dynamics through
//! `S(θ) = (l₂²m₂ + l₁²(m₁+m₂), l₁l₂m₂, l₂²m₂, l₂m₂, l₁(m₁+m₂))`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, SVector, Vector2};

use crate::error::{DremError, Result};
use crate::nlpre::{FactorizedNpre, NonlinearMap, ParameterChange};

pub type Vector5 = SVector<f64, 5>;
pub type Matrix2x5 = SMatrix<f64, 2, 5>;

pub const DEFAULT_G: f64 = 9.81;

/// Box on which `P = diag(a, a, 1, 1)` with `a = 1` is certified.
pub const CERTIFIED_BOX: [(f64, f64); 4] = [(0.05, 0.8), (0.7, 0.9), (1.0, 2.0), (0.5, 0.7)];
/// Smallest Demidovich eigenvalue on [`CERTIFIED_BOX`] for `a = 1`, rounded down.
pub const CERTIFIED_RHO: f64 = 0.1;
pub const CERTIFIED_NU: f64 = 2.0;

pub fn s_map(th: &[f64]) -> Vector5 {
    let (l1, l2, m1, m2) = (th[0], th[1], th[2], th[3]);
    Vector5::new(l2 * l2 * m2 + l1 * l1 * (m1 + m2), l1 * l2 * m2, l2 * l2 * m2, l2 * m2, l1 * (m1 + m2))
}

pub fn s_jacobian(th: &[f64]) -> DMatrix<f64> {
    let (t1, t2, t3, t4) = (th[0], th[1], th[2], th[3]);
    DMatrix::from_row_slice(
        5,
        4,
        &[
            2.0 * t1 * (t3 + t4), 2.0 * t2 * t4, t1 * t1, t2 * t2 + t1 * t1,
            t2 * t4, t1 * t4, 0.0, t1 * t2,
            0.0, 2.0 * t2 * t4, 0.0, t2 * t2,
            0.0, t4, 0.0, t2,
            t3 + t4, 0.0, t1, t1,
        ],
    )
}

/// `η = (θ₁, θ₂, θ₂θ₄, θ₁(θ₃+θ₄))`.
pub fn forward(th: &[f64]) -> [f64; 4] {
    [th[0], th[1], th[1] * th[3], th[0] * (th[2] + th[3])]
}

pub fn inverse(e: &[f64]) -> Result<[f64; 4]> {
    if e[0] == 0.0 {
        return Err(DremError::SingularCoordinate { component: 1, detail: "eta1 = 0" });
    }
    if e[1] == 0.0 {
        return Err(DremError::SingularCoordinate { component: 2, detail: "eta2 = 0" });
    }
    Ok([e[0], e[1], e[3] / e[0] - e[2] / e[1], e[2] / e[1]])
}

fn inverse_jacobian(e: &[f64]) -> Result<DMatrix<f64>> {
    inverse(e)?;
    let (e1, e2, e3, e4) = (e[0], e[1], e[2], e[3]);
    Ok(DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            -e4 / (e1 * e1), e3 / (e2 * e2), -1.0 / e2, 1.0 / e1,
            0.0, -e3 / (e2 * e2), 1.0 / e2, 0.0,
        ],
    ))
}

/// Regression with `n = 2`, change `D` above, `C` keeping `W₂..W₅` so that
/// `G(η) = (η₁η₃, η₂η₃, η₃, η₄)`, and `P = diag(a, a, 1, 1)`.
pub fn npre(a: f64) -> Result<FactorizedNpre> {
    let map = NonlinearMap::new(
        4,
        5,
        Arc::new(|t: &DVector<f64>| DVector::from_column_slice(s_map(t.as_slice()).as_slice())),
        Arc::new(|t: &DVector<f64>| s_jacobian(t.as_slice())),
        CERTIFIED_BOX.to_vec(),
    )?;
    let change = ParameterChange::new(
        Arc::new(|t: &DVector<f64>| DVector::from_row_slice(&forward(t.as_slice()))),
        Arc::new(|e: &DVector<f64>| Ok(DVector::from_row_slice(&inverse(e.as_slice())?))),
        Arc::new(|e: &DVector<f64>| inverse_jacobian(e.as_slice())),
        vec![1, 2, 3, 4, 0],
        vec![0, 1, 2, 3],
        DMatrix::from_diagonal(&DVector::from_vec(vec![a, a, 1.0, 1.0])),
        CERTIFIED_RHO,
        CERTIFIED_NU,
    )?;
    FactorizedNpre::new(map, change, 2)
}

/// Inertia basis: `M(q) = S₁m₁ + S₂m₂(q) + S₃m₃`.
pub fn inertia_basis(q: &Vector2<f64>) -> [Matrix2<f64>; 3] {
    let c2 = q[1].cos();
    [
        Matrix2::new(1.0, 0.0, 0.0, 0.0),
        Matrix2::new(2.0 * c2, c2, c2, 0.0),
        Matrix2::new(0.0, 1.0, 1.0, 1.0),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoDofRobot {
    pub s: Vector5,
    pub g: f64,
}

impl TwoDofRobot {
    pub fn new(theta: &[f64; 4], g: f64) -> Result<Self> {
        if theta.iter().any(|&x| !(x > 0.0)) {
            return Err(DremError::Config("robot lengths and masses must be positive".into()));
        }
        Ok(Self { s: s_map(theta), g })
    }

    pub fn from_s(s: Vector5, g: f64) -> Self {
        Self { s, g }
    }

    pub fn inertia(&self, q: &Vector2<f64>) -> Matrix2<f64> {
        inertia(&self.s, q)
    }

    pub fn coriolis(&self, q: &Vector2<f64>, qd: &Vector2<f64>) -> Matrix2<f64> {
        coriolis(&self.s, q, qd)
    }

    pub fn gravity(&self, q: &Vector2<f64>) -> Vector2<f64> {
        gravity(&self.s, q, self.g)
    }

    pub fn potential(&self, q: &Vector2<f64>) -> f64 {
        self.g * (self.s[4] * q[0].sin() + self.s[3] * (q[0] + q[1]).sin())
    }

    pub fn energy(&self, q: &Vector2<f64>, qd: &Vector2<f64>) -> f64 {
        0.5 * qd.dot(&(self.inertia(q) * qd)) + self.potential(q)
    }

    /// `q̈ = M⁻¹(u − C q̇ − ∇U)`.
    pub fn dynamics(&self, q: &Vector2<f64>, qd: &Vector2<f64>, u: &Vector2<f64>) -> Vector2<f64> {
        let m = self.inertia(q);
        let rhs = u - self.coriolis(q, qd) * qd - self.gravity(q);
        m.lu().solve(&rhs).expect("inertia matrix is positive definite")
    }
}

pub fn inertia(s: &Vector5, q: &Vector2<f64>) -> Matrix2<f64> {
    let b = inertia_basis(q);
    b[0] * s[0] + b[1] * s[1] + b[2] * s[2]
}

/// Christoffel form, so that `Ṁ − 2C` is skew-symmetric.
pub fn coriolis(s: &Vector5, q: &Vector2<f64>, qd: &Vector2<f64>) -> Matrix2<f64> {
    let h = s[1] * q[1].sin();
    Matrix2::new(-h * qd[1], -h * (qd[0] + qd[1]), h * qd[0], 0.0)
}

pub fn gravity(s: &Vector5, q: &Vector2<f64>, g: f64) -> Vector2<f64> {
    let c12 = (q[0] + q[1]).cos();
    Vector2::new(g * (s[3] * c12 + s[4] * q[0].cos()), g * s[3] * c12)
}

/// `Ṁ(q, q̇)`.
pub fn inertia_rate(s: &Vector5, q: &Vector2<f64>, qd: &Vector2<f64>) -> Matrix2<f64> {
    let d = -s[1] * q[1].sin() * qd[1];
    Matrix2::new(2.0 * d, d, d, 0.0)
}

/// Filtered regressor: `y = H[u]`, `Ω = H[pmᵢq̇ − ½∇(q̇ᵀmᵢq̇) | gravity columns]`
/// with `H = 1/(p+λ)`. The derivative part is realized as
/// `mᵢq̇ + H[−λmᵢq̇ − ½∇(q̇ᵀmᵢq̇)]`, so only `Ψ` and `y` are integrated.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotRegressorFilters {
    pub psi: Matrix2x5,
    pub y: Vector2<f64>,
    pub lambda: f64,
    pub g: f64,
}

impl RobotRegressorFilters {
    pub fn zeros(lambda: f64, g: f64) -> Self {
        Self { psi: Matrix2x5::zeros(), y: Vector2::zeros(), lambda, g }
    }

    /// Filter input for `Ψ`.
    pub fn psi_input(&self, q: &Vector2<f64>, qd: &Vector2<f64>) -> Matrix2x5 {
        let b = inertia_basis(q);
        let mut n = Matrix2x5::zeros();
        for i in 0..3 {
            n.set_column(i, &(-self.lambda * (b[i] * qd)));
        }
        // ½∇_q(q̇ᵀm₂q̇); only m₂ depends on q.
        let half_grad = Vector2::new(0.0, -q[1].sin() * (qd[0] * qd[0] + qd[0] * qd[1]));
        let c1 = n.column(1) - half_grad;
        n.set_column(1, &c1);
        let c12 = (q[0] + q[1]).cos();
        n.set_column(3, &Vector2::new(self.g * c12, self.g * c12));
        n.set_column(4, &Vector2::new(self.g * q[0].cos(), 0.0));
        n
    }

    pub fn derivative(
        &self,
        q: &Vector2<f64>,
        qd: &Vector2<f64>,
        u: &Vector2<f64>,
    ) -> (Matrix2x5, Vector2<f64>) {
        (-self.lambda * self.psi + self.psi_input(q, qd), -self.lambda * self.y + u)
    }

    pub fn omega(&self, q: &Vector2<f64>, qd: &Vector2<f64>) -> Matrix2x5 {
        let b = inertia_basis(q);
        let mut om = self.psi;
        for i in 0..3 {
            let c = om.column(i) + b[i] * qd;
            om.set_column(i, &c);
        }
        om
    }
}

/// Desired joint trajectory with its first two derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointReference {
    pub q: Vector2<f64>,
    pub qd: Vector2<f64>,
    pub qdd: Vector2<f64>,
}

/// `q⋆(t) = (0.4π sin 2t + 0.2π, 0.3π cos t + 0.3π)`.
pub fn default_reference(t: f64) -> JointReference {
    let (a, b) = (0.4 * PI, 0.3 * PI);
    JointReference {
        q: Vector2::new(a * (2.0 * t).sin() + 0.2 * PI, b * t.cos() + 0.3 * PI),
        qd: Vector2::new(2.0 * a * (2.0 * t).cos(), -b * t.sin()),
        qdd: Vector2::new(-4.0 * a * (2.0 * t).sin(), -b * t.cos()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackingGains {
    pub k1: Matrix2<f64>,
    pub k2: Matrix2<f64>,
}

impl Default for TrackingGains {
    fn default() -> Self {
        Self { k1: Matrix2::identity() * 3.0, k2: Matrix2::identity() }
    }
}

/// `Y(q, q̇, q̇ᵣ, q̈ᵣ)` with `Y·S = M q̈ᵣ + C q̇ᵣ + g`.
pub fn slotine_li_regressor(
    q: &Vector2<f64>,
    qd: &Vector2<f64>,
    qrd: &Vector2<f64>,
    qrdd: &Vector2<f64>,
    g: f64,
) -> Matrix2x5 {
    let b = inertia_basis(q);
    let unit = Vector5::new(0.0, 1.0, 0.0, 0.0, 0.0);
    let c2 = coriolis(&unit, q, qd);
    let c12 = (q[0] + q[1]).cos();
    let mut w = Matrix2x5::zeros();
    w.set_column(0, &(b[0] * qrdd));
    w.set_column(1, &(b[1] * qrdd + c2 * qrd));
    w.set_column(2, &(b[2] * qrdd));
    w.set_column(3, &Vector2::new(g * c12, g * c12));
    w.set_column(4, &Vector2::new(g * q[0].cos(), 0.0));
    w
}

/// Output of the Slotine–Li law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotineLiOutput {
    pub u: Vector2<f64>,
    pub s: Vector2<f64>,
    pub regressor: Matrix2x5,
}

/// `u = Y(q, q̇, q̇ᵣ, q̈ᵣ)·Ŝ − K₁s`, `q̇ᵣ = q̇⋆ − K₂q̃`, `s = q̃̇ + K₂q̃`.
pub fn slotine_li_control(
    s_hat: &Vector5,
    q: &Vector2<f64>,
    qd: &Vector2<f64>,
    reference: &JointReference,
    gains: &TrackingGains,
    g: f64,
) -> SlotineLiOutput {
    let qt = q - reference.q;
    let qtd = qd - reference.qd;
    let qrd = reference.qd - gains.k2 * qt;
    let qrdd = reference.qdd - gains.k2 * qtd;
    let s = qtd + gains.k2 * qt;
    let regressor = slotine_li_regressor(q, qd, &qrd, &qrdd, g);
    SlotineLiOutput { u: regressor * s_hat - gains.k1 * s, s, regressor }
}

/// `u = M̂(q̈⋆ − K₁q̃̇ − K₂q̃) + Ĉq̇ + ĝ`.
pub fn computed_torque_control(
    s_hat: &Vector5,
    q: &Vector2<f64>,
    qd: &Vector2<f64>,
    reference: &JointReference,
    gains: &TrackingGains,
    g: f64,
) -> Vector2<f64> {
    let qt = q - reference.q;
    let qtd = qd - reference.qd;
    let v = reference.qdd - gains.k1 * qtd - gains.k2 * qt;
    inertia(s_hat, q) * v + coriolis(s_hat, q, qd) * qd + gravity(s_hat, q, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nlpre::{central_difference, check_demidovich, eval_good_map};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const THETA: [f64; 4] = [0.7, 0.8, 1.5, 0.5];

    #[test]
    fn s_at_nominal_parameters() {
        let s = s_map(&THETA);
        let expected = [1.30, 0.28, 0.32, 0.40, 1.40];
        for i in 0..5 {
            assert!((s[i] - expected[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn good_map_matches_hand_formula() {
        let npre = npre(1.0).unwrap();
        let eta = DVector::from_vec(vec![0.7, 0.8, 0.4, 1.4]);
        let g = eval_good_map(&npre, &eta).unwrap();
        let expected = [0.28, 0.32, 0.4, 1.4];
        for i in 0..4 {
            assert!((g[i] - expected[i]).abs() < 1e-14);
        }
        let s = s_map(&THETA);
        for i in 0..4 {
            assert!((g[i] - s[i + 1]).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_rejects_zero_components() {
        assert!(matches!(
            inverse(&[0.0, 1.0, 1.0, 1.0]),
            Err(DremError::SingularCoordinate { component: 1, .. })
        ));
        assert!(matches!(
            inverse(&[1.0, 0.0, 1.0, 1.0]),
            Err(DremError::SingularCoordinate { component: 2, .. })
        ));
    }

    #[test]
    fn certificate_near_nominal_point() {
        let mut npre = npre(1.0).unwrap();
        npre.map = npre
            .map
            .clone()
            .with_domain(vec![(0.68, 0.72), (0.78, 0.82), (1.45, 1.55), (0.48, 0.52)])
            .unwrap();
        let r = check_demidovich(&npre, 200, 5).unwrap();
        assert!(r.passed, "{r:?}");
        // Schur complement of the Demidovich matrix at the nominal point.
        let eta: [f64; 4] = [0.7, 0.8, 0.4, 1.4];
        assert!(1.0 < 4.0 * eta[2] / (eta[0] * eta[0] + eta[1] * eta[1]));
        assert!(((eta[0] * eta[0] + eta[1] * eta[1]) / (4.0 * eta[2]) - 0.70625).abs() < 1e-12);
    }

    #[test]
    fn skew_symmetry() {
        let s = s_map(&THETA);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q = Vector2::new(rng.gen_range(-PI..PI), rng.gen_range(-PI..PI));
            let qd = Vector2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let z = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = inertia_rate(&s, &q, &qd) - 2.0 * coriolis(&s, &q, &qd);
            assert!(z.dot(&(n * z)).abs() < 1e-10);
        }
    }

    #[test]
    fn inertia_rate_matches_finite_difference() {
        let s = s_map(&THETA);
        let q = Vector2::new(0.3, -1.1);
        let qd = Vector2::new(0.7, 2.0);
        let h = 1e-6;
        let fd = (inertia(&s, &(q + qd * h)) - inertia(&s, &(q - qd * h))) / (2.0 * h);
        assert!((fd - inertia_rate(&s, &q, &qd)).amax() < 1e-8);
    }

    #[test]
    fn static_equilibrium() {
        let r = TwoDofRobot::new(&THETA, DEFAULT_G).unwrap();
        let q = Vector2::new(0.4, 1.2);
        let qdd = r.dynamics(&q, &Vector2::zeros(), &r.gravity(&q));
        assert!(qdd.amax() < 1e-14);
    }

    #[test]
    fn gravity_is_potential_gradient() {
        let r = TwoDofRobot::new(&THETA, DEFAULT_G).unwrap();
        let q = DVector::from_vec(vec![0.4, -0.9]);
        let fd = central_difference(
            |x| DVector::from_element(1, r.potential(&Vector2::new(x[0], x[1]))),
            &q,
        );
        let g = r.gravity(&Vector2::new(q[0], q[1]));
        assert!((fd[(0, 0)] - g[0]).abs() < 1e-7 && (fd[(0, 1)] - g[1]).abs() < 1e-7);
    }

    #[test]
    fn inertia_positive_on_grid() {
        let r = TwoDofRobot::new(&THETA, DEFAULT_G).unwrap();
        for i in 0..64 {
            let q2 = -PI + 2.0 * PI * i as f64 / 64.0;
            let m = r.inertia(&Vector2::new(0.0, q2));
            assert!(m[(0, 0)] > 0.0 && m.determinant() > 0.0);
        }
    }

    #[test]
    fn regressor_reproduces_inverse_dynamics() {
        let s = s_map(&THETA);
        let q = Vector2::new(0.2, 0.9);
        let qd = Vector2::new(-0.4, 1.3);
        let a = Vector2::new(0.8, -2.0);
        let b = Vector2::new(1.5, 0.1);
        let w = slotine_li_regressor(&q, &qd, &a, &b, DEFAULT_G);
        let direct = inertia(&s, &q) * b + coriolis(&s, &q, &qd) * a + gravity(&s, &q, DEFAULT_G);
        assert!((w * s - direct).amax() < 1e-13);
        let c12 = (q[0] + q[1]).cos();
        assert!((w[(0, 3)] - DEFAULT_G * c12).abs() < 1e-15);
        assert!((w[(1, 3)] - DEFAULT_G * c12).abs() < 1e-15);
    }

    #[test]
    fn on_reference_controls_are_feedforward() {
        let s = s_map(&THETA);
        let r = default_reference(0.7);
        let gains = TrackingGains::default();
        let sl = slotine_li_control(&s, &r.q, &r.qd, &r, &gains, DEFAULT_G);
        let ff = inertia(&s, &r.q) * r.qdd + coriolis(&s, &r.q, &r.qd) * r.qd + gravity(&s, &r.q, DEFAULT_G);
        assert!(sl.s.amax() == 0.0);
        assert!((sl.u - ff).amax() < 1e-12);
        let ct = computed_torque_control(&s, &r.q, &r.qd, &r, &gains, DEFAULT_G);
        assert!((ct - ff).amax() < 1e-12);

        let q = Vector2::new(0.3, 0.2);
        let still = JointReference { q, qd: Vector2::zeros(), qdd: Vector2::zeros() };
        let u = computed_torque_control(&s, &q, &Vector2::zeros(), &still, &gains, DEFAULT_G);
        assert!((u - gravity(&s, &q, DEFAULT_G)).amax() < 1e-14);
    }

    #[test]
    fn static_regressor_columns() {
        let f = RobotRegressorFilters::zeros(1.0, DEFAULT_G);
        let q = Vector2::new(0.5, 0.25);
        let n = f.psi_input(&q, &Vector2::zeros());
        for i in 0..3 {
            assert_eq!(n.column(i).amax(), 0.0);
        }
        // Steady state of Ψ̇ = −λΨ + N is N/λ.
        let c12 = (0.75f64).cos();
        assert!((n[(0, 3)] - DEFAULT_G * c12).abs() < 1e-14);
        assert!((n[(0, 4)] - DEFAULT_G * 0.5f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn inverse_jacobian_matches_fd() {
        let e = DVector::from_vec(vec![0.7, 0.8, 0.4, 1.4]);
        let fd = central_difference(|x| DVector::from_row_slice(&inverse(x.as_slice()).unwrap()), &e);
        assert!((fd - inverse_jacobian(e.as_slice()).unwrap()).amax() < 1e-7);
    }
}
