//! Implicit finite-volume step for the potential operator
//! `∂_v[(μ − v)p] − (σ²/2)∂²_v p` with Chang–Cooper (exponentially fitted)
//! face fluxes, zero flux at `v_min` and an absorbing threshold.
//!
//! Face flux between cells `i` and `i+1`, with `w = (μ − v_face)Δv/D`:
//!
//! ```text
//! J = (D/Δv)·[B(−w)·p_i − B(w)·p_{i+1}],   B(x) = x / (eˣ − 1)
//! ```
//!
//! The threshold face uses the same fitting over the half cell with the face
//! value pinned to zero, so `J_th = (2D/Δv)·B(−w_th)·p_last`. For vanishing
//! drift this is the one-sided diffusive flux `−D ∂p/∂v` at the threshold.
//!
//! The system matrix is an M-matrix whose column sums are 1 except in the
//! last column, which also loses `dt·J_th/Δv`: the step conserves mass up to
//! exactly the absorbed flux and maps nonnegative data to nonnegative data.

use crate::grid::PotentialGrid;

/// Bernoulli function `x / (eˣ − 1)`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-10 {
        1.0 - 0.5 * x
    } else {
        x / x.exp_m1()
    }
}

/// Factorized `(I + dt·A)` for one drift value and time step.
#[derive(Debug, Clone)]
pub struct ImplicitStep {
    sub: Vec<f64>,
    sup_prime: Vec<f64>,
    pivot_inv: Vec<f64>,
    threshold_coeff: f64,
}

impl ImplicitStep {
    pub fn new(grid: &PotentialGrid, diffusion: f64, mu: f64, dt: f64) -> Self {
        let n = grid.len();
        let dv = grid.dv();
        let kappa = diffusion / dv;
        let lambda = dt / dv;

        let mut diag = vec![1.0; n];
        let mut sub = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n - 1 {
            let w = (mu - grid.face(i + 1)) * dv / diffusion;
            let out = lambda * kappa * bernoulli(-w);
            let back = lambda * kappa * bernoulli(w);
            diag[i] += out;
            sub[i + 1] = -out;
            diag[i + 1] += back;
            sup[i] = -back;
        }
        let w_th = (mu - grid.v_th()) * 0.5 * dv / diffusion;
        let threshold_coeff = 2.0 * kappa * bernoulli(-w_th);
        diag[n - 1] += lambda * threshold_coeff;

        let mut sup_prime = vec![0.0; n];
        let mut pivot_inv = vec![0.0; n];
        pivot_inv[0] = 1.0 / diag[0];
        sup_prime[0] = sup[0] * pivot_inv[0];
        for i in 1..n {
            pivot_inv[i] = 1.0 / (diag[i] - sub[i] * sup_prime[i - 1]);
            sup_prime[i] = sup[i] * pivot_inv[i];
        }
        Self {
            sub,
            sup_prime,
            pivot_inv,
            threshold_coeff,
        }
    }

    /// Overwrite `values` with `(I + dt·A)⁻¹ values`.
    pub fn solve_in_place(&self, values: &mut [f64]) {
        let n = values.len();
        debug_assert_eq!(n, self.pivot_inv.len());
        values[0] *= self.pivot_inv[0];
        for i in 1..n {
            values[i] = (values[i] - self.sub[i] * values[i - 1]) * self.pivot_inv[i];
        }
        for i in (0..n - 1).rev() {
            values[i] -= self.sup_prime[i] * values[i + 1];
        }
    }

    /// Probability flux through the threshold face.
    pub fn threshold_flux(&self, values: &[f64]) -> f64 {
        self.threshold_coeff * values[values.len() - 1]
    }
}
