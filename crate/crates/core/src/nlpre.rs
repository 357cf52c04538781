//! Factorizable regressions `y = Ω S(θ)` and the parameter changes that make
//! part of the transformed map `W(η) = S(Dᴵ(η))` strongly P-monotone.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DremError, Result};
use crate::plants;

pub type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type TryVecFn = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
pub type TryMatFn = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;

/// Range used for sampling axes whose domain bound is infinite.
pub const DEFAULT_UNBOUNDED_RANGE: (f64, f64) = (-10.0, 10.0);

/// Names under which the built-in parameter changes are registered.
pub const CHANGE_NAMES: [&str; 4] = ["robot2dof", "solar", "appc-indirect", "appc-direct"];

/// The map `S: ℝ^q → ℝ^p` with its analytic Jacobian.
#[derive(Clone)]
pub struct NonlinearMap {
    q: usize,
    p: usize,
    eval: VecFn,
    jacobian: MatFn,
    domain: Vec<(f64, f64)>,
}

impl NonlinearMap {
    pub fn new(
        q: usize,
        p: usize,
        eval: VecFn,
        jacobian: MatFn,
        domain: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if p <= q {
            return Err(DremError::Dimension(format!("need p > q, got p={p}, q={q}")));
        }
        if domain.len() != q {
            return Err(DremError::Dimension(format!(
                "domain box has {} axes, expected {q}",
                domain.len()
            )));
        }
        Ok(Self { q, p, eval, jacobian, domain })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn with_domain(mut self, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != self.q {
            return Err(DremError::Dimension("domain box length".into()));
        }
        self.domain = domain;
        Ok(self)
    }

    pub fn eval(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.eval)(theta)
    }

    pub fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian)(theta)
    }

    /// Largest relative mismatch between the analytic Jacobian and central
    /// differences over `samples` random points of the domain box.
    pub fn jacobian_fd_error(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        for _ in 0..samples {
            let th = sample_box(&self.domain, DEFAULT_UNBOUNDED_RANGE, &mut rng);
            let fd = central_difference(|x| self.eval(x), &th);
            let an = self.jacobian(&th);
            worst = worst.max(relative_gap(&an, &fd));
        }
        worst
    }
}

impl fmt::Debug for NonlinearMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearMap")
            .field("q", &self.q)
            .field("p", &self.p)
            .field("domain", &self.domain)
            .finish_non_exhaustive()
    }
}

/// Bijection `η = D(θ)` together with the permutation, selector and
/// monotonicity constants that certify the good map `G = C·W`.
#[derive(Clone)]
pub struct ParameterChange {
    forward: VecFn,
    inverse: TryVecFn,
    inverse_jacobian: TryMatFn,
    permutation: Vec<usize>,
    selector_rows: Vec<usize>,
    p_matrix: DMatrix<f64>,
    rho: f64,
    nu: f64,
}

impl ParameterChange {
    /// `permutation[i]` is the index of `W` that lands in row `i` of `T·W`;
    /// `selector_rows` are the rows of `T·W` kept by `C`. Indices are 0-based.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        forward: VecFn,
        inverse: TryVecFn,
        inverse_jacobian: TryMatFn,
        permutation: Vec<usize>,
        selector_rows: Vec<usize>,
        p_matrix: DMatrix<f64>,
        rho: f64,
        nu: f64,
    ) -> Result<Self> {
        let p = permutation.len();
        let mut seen = vec![false; p];
        for &i in &permutation {
            if i >= p || seen[i] {
                return Err(DremError::Dimension("permutation is not a bijection".into()));
            }
            seen[i] = true;
        }
        let q = selector_rows.len();
        if selector_rows.iter().any(|&r| r >= p) {
            return Err(DremError::Dimension("selector row out of range".into()));
        }
        if p_matrix.nrows() != q || p_matrix.ncols() != q {
            return Err(DremError::Dimension(format!("P must be {q}x{q}")));
        }
        if !(rho > 0.0 && nu > 0.0) {
            return Err(DremError::InvalidGain("rho and nu must be positive".into()));
        }
        if (&p_matrix - p_matrix.transpose()).amax() > 1e-12 {
            return Err(DremError::InvalidGain("P must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(p_matrix.clone()).eigenvalues;
        if eig.iter().any(|&e| e <= 0.0) {
            return Err(DremError::InvalidGain("P must be positive definite".into()));
        }
        Ok(Self {
            forward,
            inverse,
            inverse_jacobian,
            permutation,
            selector_rows,
            p_matrix,
            rho,
            nu,
        })
    }

    pub fn forward(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.forward)(theta)
    }

    pub fn inverse(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        (self.inverse)(eta)
    }

    pub fn inverse_jacobian(&self, eta: &DVector<f64>) -> Result<DMatrix<f64>> {
        (self.inverse_jacobian)(eta)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn selector_rows(&self) -> &[usize] {
        &self.selector_rows
    }

    pub fn p_matrix(&self) -> &DMatrix<f64> {
        &self.p_matrix
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn q(&self) -> usize {
        self.selector_rows.len()
    }

    pub fn p(&self) -> usize {
        self.permutation.len()
    }

    /// Largest eigenvalue of `P`.
    pub fn p_lambda_max(&self) -> f64 {
        SymmetricEigen::new(self.p_matrix.clone()).eigenvalues.max()
    }

    /// Indices of `W` picked out by `C = [I | 0]·T` (composition of the two).
    pub fn selected_w_indices(&self) -> Vec<usize> {
        self.selector_rows.iter().map(|&r| self.permutation[r]).collect()
    }

    /// Rows of `C` applied to a `p`-vector.
    pub fn select(&self, v: &DVector<f64>) -> DVector<f64> {
        let permuted = DVector::from_iterator(v.len(), self.permutation.iter().map(|&i| v[i]));
        DVector::from_iterator(self.q(), self.selector_rows.iter().map(|&r| permuted[r]))
    }

    /// Rows of `C` applied to a matrix with `p` rows.
    pub fn select_rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let idx = self.selected_w_indices();
        m.select_rows(idx.iter())
    }

    pub fn with_p_matrix(mut self, p_matrix: DMatrix<f64>) -> Result<Self> {
        self.p_matrix = p_matrix;
        Self::new(
            self.forward,
            self.inverse,
            self.inverse_jacobian,
            self.permutation,
            self.selector_rows,
            self.p_matrix,
            self.rho,
            self.nu,
        )
    }

    pub fn with_constants(mut self, rho: f64, nu: f64) -> Result<Self> {
        if !(rho > 0.0 && nu > 0.0) {
            return Err(DremError::InvalidGain("rho and nu must be positive".into()));
        }
        self.rho = rho;
        self.nu = nu;
        Ok(self)
    }
}

impl fmt::Debug for ParameterChange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterChange")
            .field("permutation", &self.permutation)
            .field("selector_rows", &self.selector_rows)
            .field("P", &self.p_matrix)
            .field("rho", &self.rho)
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

/// `y = Ω S(θ)` with `Ω ∈ ℝ^{n×p}` and a certified parameter change.
#[derive(Clone, Debug)]
pub struct FactorizedNpre {
    pub map: NonlinearMap,
    pub change: ParameterChange,
    pub n: usize,
    pub unbounded_range: (f64, f64),
}

impl FactorizedNpre {
    pub fn new(map: NonlinearMap, change: ParameterChange, n: usize) -> Result<Self> {
        if change.p() != map.p() || change.q() != map.q() {
            return Err(DremError::Dimension(format!(
                "change is ({}, {}), map is ({}, {})",
                change.p(),
                change.q(),
                map.p(),
                map.q()
            )));
        }
        if n == 0 {
            return Err(DremError::Dimension("n must be positive".into()));
        }
        Ok(Self { map, change, n, unbounded_range: DEFAULT_UNBOUNDED_RANGE })
    }

    pub fn q(&self) -> usize {
        self.map.q()
    }

    pub fn p(&self) -> usize {
        self.map.p()
    }

    /// `W(η) = S(Dᴵ(η))`.
    pub fn transformed_map(&self, eta: &DVector<f64>) -> Result<DVector<f64>> {
        let theta = self.change.inverse(eta)?;
        Ok(self.map.eval(&theta))
    }

    /// Standard Jacobian `∂Gᵢ/∂ηⱼ` via the chain rule through `Dᴵ`.
    pub fn good_map_jacobian(&self, eta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let theta = self.change.inverse(eta)?;
        let js = self.map.jacobian(&theta);
        let jd = self.change.inverse_jacobian(eta)?;
        Ok(self.change.select_rows(&(js * jd)))
    }

    /// `P·J + Jᵀ·P` at `η`.
    pub fn demidovich_matrix(&self, eta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.good_map_jacobian(eta)?;
        let pj = self.change.p_matrix() * &j;
        Ok(&pj + pj.transpose())
    }

    /// Draws `θ` from the domain box and maps it through `D`.
    pub fn sample_eta(&self, rng: &mut impl Rng) -> DVector<f64> {
        let theta = sample_box(self.map.domain(), self.unbounded_range, rng);
        self.change.forward(&theta)
    }
}

/// `G(η) = C·S(Dᴵ(η))`.
pub fn eval_good_map(npre: &FactorizedNpre, eta: &DVector<f64>) -> Result<DVector<f64>> {
    let w = npre.transformed_map(eta)?;
    Ok(npre.change.select(&w))
}

/// Outcome of a sampling certificate. `value` is the smallest eigenvalue
/// (Demidovich), the smallest ratio (monotonicity) or the largest ratio
/// (Lipschitz) seen; `bound` is the constant it was compared with.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub value: f64,
    pub bound: f64,
    pub worst_point: DVector<f64>,
    pub samples_checked: usize,
    pub passed: bool,
}

/// Relative slack for rounding in the chain-rule Jacobian.
pub const CERT_SLACK: f64 = 1e-12;

fn at_point(eta: &DVector<f64>, e: DremError) -> DremError {
    DremError::AtPoint { point: eta.iter().copied().collect(), source: Box::new(e) }
}

/// Smallest eigenvalue of `P·J + Jᵀ·P` over `sample_count` points drawn from
/// the image of the domain box, compared with `ρ`.
pub fn check_demidovich(
    npre: &FactorizedNpre,
    sample_count: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if sample_count == 0 {
        return Err(DremError::Config("sample_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_eig = f64::INFINITY;
    let mut worst = DVector::zeros(npre.q());
    for _ in 0..sample_count {
        let eta = npre.sample_eta(&mut rng);
        let m = npre.demidovich_matrix(&eta).map_err(|e| at_point(&eta, e))?;
        let e = SymmetricEigen::new(m).eigenvalues.min();
        if e < min_eig {
            min_eig = e;
            worst = eta;
        }
    }
    let rho = npre.change.rho();
    Ok(CertificateReport {
        value: min_eig,
        bound: rho,
        worst_point: worst,
        samples_checked: sample_count,
        passed: min_eig >= rho * (1.0 - CERT_SLACK),
    })
}

fn sample_pair(npre: &FactorizedNpre, rng: &mut ChaCha8Rng) -> (DVector<f64>, DVector<f64>) {
    loop {
        let a = npre.sample_eta(rng);
        let b = npre.sample_eta(rng);
        if (&a - &b).norm() > 0.0 {
            return (a, b);
        }
    }
}

/// Smallest `(a−b)ᵀP(G(a)−G(b)) / |a−b|²` over random pairs, compared with `ρ`.
pub fn check_strong_monotonicity(
    npre: &FactorizedNpre,
    pair_count: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if pair_count == 0 {
        return Err(DremError::Config("pair_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = npre.change.p_matrix();
    let mut min_ratio = f64::INFINITY;
    let mut worst = DVector::zeros(npre.q());
    for _ in 0..pair_count {
        let (a, b) = sample_pair(npre, &mut rng);
        let ga = eval_good_map(npre, &a).map_err(|e| at_point(&a, e))?;
        let gb = eval_good_map(npre, &b).map_err(|e| at_point(&b, e))?;
        let d = &a - &b;
        let ratio = d.dot(&(p * (ga - gb))) / d.norm_squared();
        if ratio < min_ratio {
            min_ratio = ratio;
            worst = a;
        }
    }
    let rho = npre.change.rho();
    Ok(CertificateReport {
        value: min_ratio,
        bound: rho,
        worst_point: worst,
        samples_checked: pair_count,
        passed: min_ratio >= rho * (1.0 - CERT_SLACK),
    })
}

/// Largest `|G(a)−G(b)| / |a−b|` over random pairs, compared with `ν`.
pub fn check_lipschitz(
    npre: &FactorizedNpre,
    pair_count: usize,
    seed: u64,
) -> Result<CertificateReport> {
    if pair_count == 0 {
        return Err(DremError::Config("pair_count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0_f64;
    let mut worst = DVector::zeros(npre.q());
    for _ in 0..pair_count {
        let (a, b) = sample_pair(npre, &mut rng);
        let ga = eval_good_map(npre, &a).map_err(|e| at_point(&a, e))?;
        let gb = eval_good_map(npre, &b).map_err(|e| at_point(&b, e))?;
        let ratio = (ga - gb).norm() / (&a - &b).norm();
        if ratio > max_ratio {
            max_ratio = ratio;
            worst = a;
        }
    }
    let nu = npre.change.nu();
    Ok(CertificateReport {
        value: max_ratio,
        bound: nu,
        worst_point: worst,
        samples_checked: pair_count,
        passed: max_ratio <= nu * (1.0 + CERT_SLACK),
    })
}

/// Built-in regression and change registered under `name`.
pub fn change_by_name(name: &str) -> Result<FactorizedNpre> {
    match name {
        "robot2dof" => plants::robot::npre(1.0),
        "solar" => plants::solar::npre(),
        "appc-indirect" => plants::appc::indirect_npre(),
        "appc-direct" => plants::appc::direct_npre(),
        other => Err(DremError::Unknown(format!(
            "{other} (registered: {})",
            CHANGE_NAMES.join(", ")
        ))),
    }
}

pub(crate) fn sample_box(
    domain: &[(f64, f64)],
    fallback: (f64, f64),
    rng: &mut impl Rng,
) -> DVector<f64> {
    DVector::from_iterator(
        domain.len(),
        domain.iter().map(|&(lo, hi)| {
            let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => (lo, hi),
                (false, false) => fallback,
                (true, false) => (lo, fallback.1.max(lo)),
                (false, true) => (fallback.0.min(hi), hi),
            };
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        }),
    )
}

/// Central-difference Jacobian with a per-coordinate relative step.
pub fn central_difference(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
) -> DMatrix<f64> {
    let f0 = f(x);
    let mut j = DMatrix::zeros(f0.len(), x.len());
    for k in 0..x.len() {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

pub(crate) fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + a.amax().max(b.amax()))
}
