//! Filter realization turning `ẋ = F(x,u) + R(x)S(θ)` into `y = Ω S(θ) + ε`
//! with `ε` decaying like `e^{−λt}`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantFilterState {
    pub z: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub lambda: f64,
}

impl PlantFilterState {
    pub fn zeros(n: usize, p: usize, lambda: f64) -> Self {
        Self { z: DVector::zeros(n), omega: DMatrix::zeros(n, p), lambda }
    }

    /// `y = z + x`.
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.z + x
    }
}

/// `ż = −λ(z+x) − F(x,u)`, `Ω̇ = −λΩ + R(x)`, given `F(x,u)` and `R(x)`.
pub fn general_plant_filter_derivative(
    state: &PlantFilterState,
    x: &DVector<f64>,
    f_xu: &DVector<f64>,
    r_x: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let dz = -state.lambda * (&state.z + x) - f_xu;
    let domega = -state.lambda * &state.omega + r_x;
    (dz, domega)
}
