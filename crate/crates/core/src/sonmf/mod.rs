//! Semi-orthogonal NMF: `X ≈ F Gᵀ` with `FᵀF = I` and `G ≥ 0`.
//!
//! F moves along the Stiefel manifold by Cayley-transform steps. The p×p
//! inverse of the Cayley transform is reduced to a 2k×2k one through the
//! Sherman-Morrison-Woodbury identity: with `U = [R, F]`, `V = [F, −R]` and
//! R the Euclidean gradient,
//!
//! ```text
//! Y(τ) = F − τ U (I + τ/2 VᵀU)⁻¹ Vᵀ F
//! ```
//!
//! which keeps `YᵀY = I` for every τ.

pub mod binary;
pub mod continuous;

use ndarray::{concatenate, Axis};

use crate::error::{Error, Result};
use crate::linalg::{invert_small, orthogonality_residual, Matrix};

pub use binary::{
    binary_cost, factorize_binary, factorize_binary_observed, gradient_f_binary, newton_update_g, sigmoid,
    sigmoid_matrix, BinaryOptions,
};
pub use continuous::{
    factorize_continuous, factorize_continuous_observed, frobenius_objective, gradient_f, line_search_f, update_g,
    ContinuousOptions,
};

/// Largest step the doubling schedule may carry into the next iteration.
pub const TAU_MAX: f64 = 1e6;
/// Tolerance on `‖FᵀF − I‖²_F` for inputs that must be orthonormal.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-8;

pub(crate) fn check_orthonormal(f: &Matrix) -> Result<()> {
    let residual = orthogonality_residual(f);
    if residual.is_finite() && residual < ORTHONORMAL_TOLERANCE {
        Ok(())
    } else {
        Err(Error::NotOrthonormal { residual })
    }
}

/// The Cayley curve `τ ↦ Y(τ)` through F along a fixed gradient. The
/// τ-independent products are formed once so each line-search probe only
/// costs a 2k×2k inverse and a p×2k×k product.
pub(crate) struct CayleyCurve<'a> {
    f: &'a Matrix,
    u: Matrix,
    vtu: Matrix,
    vtf: Matrix,
}

impl<'a> CayleyCurve<'a> {
    pub(crate) fn new(f: &'a Matrix, grad: &Matrix) -> Self {
        let u = concatenate![Axis(1), *grad, *f];
        let v = concatenate![Axis(1), *f, grad.mapv(|x| -x)];
        let vtu = v.t().dot(&u);
        let vtf = v.t().dot(f);
        CayleyCurve { f, u, vtu, vtf }
    }

    pub(crate) fn at(&self, tau: f64) -> Result<Matrix> {
        let mut inner = &self.vtu * (0.5 * tau);
        inner.diag_mut().mapv_inplace(|d| d + 1.0);
        let inv = invert_small(&inner)?;
        let step = self.u.dot(&inv.dot(&self.vtf));
        Ok(self.f - &(step * tau))
    }
}

/// One Cayley step `F − τ U (I + τ/2 VᵀU)⁻¹ Vᵀ F` along `grad`.
///
/// Fails when the 2k×2k inner matrix is numerically singular, which signals
/// a step that is too large.
pub fn cayley_step(f: &Matrix, grad: &Matrix, tau: f64) -> Result<Matrix> {
    if f.dim() != grad.dim() {
        return Err(Error::Shape(format!("F is {:?} but the gradient is {:?}", f.dim(), grad.dim())));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    check_orthonormal(f)?;
    CayleyCurve::new(f, grad).at(tau)
}

/// Result of a backtracking search along the Cayley curve.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    /// Accepted point, or the input F when the search stalled.
    pub f: Matrix,
    /// Step to start from next time: doubled on acceptance (capped at
    /// [`TAU_MAX`]), the last halved value otherwise.
    pub tau: f64,
    pub accepted: bool,
    pub halvings: usize,
    /// Objective at the returned F.
    pub objective: f64,
}

/// Halves τ until the objective strictly decreases, for at most
/// `max_halvings` halvings.
pub(crate) fn cayley_line_search(
    f: &Matrix,
    grad: &Matrix,
    tau_in: f64,
    max_halvings: usize,
    objective_at_f: f64,
    mut objective: impl FnMut(&Matrix) -> f64,
) -> LineSearchStep {
    let curve = CayleyCurve::new(f, grad);
    let mut tau = tau_in;
    for halvings in 0..=max_halvings {
        if let Ok(y) = curve.at(tau) {
            let value = objective(&y);
            if objective_at_f - value > 0.0 {
                return LineSearchStep {
                    f: y,
                    tau: (2.0 * tau).min(TAU_MAX),
                    accepted: true,
                    halvings,
                    objective: value,
                };
            }
        }
        if halvings < max_halvings {
            tau *= 0.5;
        }
    }
    LineSearchStep { f: f.clone(), tau, accepted: false, halvings: max_halvings, objective: objective_at_f }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_matrix, RandomLaw};

    #[test]
    fn zero_gradient_leaves_f_unchanged() {
        let f = random_matrix(10, 3, RandomLaw::Orthonormal, 1).unwrap();
        let y = cayley_step(&f, &Matrix::zeros((10, 3)), 0.7).unwrap();
        assert_eq!(y, f);
    }

    #[test]
    fn cayley_step_stays_on_manifold() {
        for seed in 0..10 {
            let f = random_matrix(15, 4, RandomLaw::Orthonormal, seed).unwrap();
            let g = random_matrix(15, 4, RandomLaw::Normal { mean: 0.0, sd: 3.0 }, seed + 100).unwrap();
            for tau in [1e-3, 0.5, 10.0] {
                let y = cayley_step(&f, &g, tau).unwrap();
                assert!(orthogonality_residual(&y) < 1e-10, "seed {seed} tau {tau}");
            }
        }
    }

    #[test]
    fn cayley_step_validates_inputs() {
        let f = random_matrix(6, 2, RandomLaw::Orthonormal, 1).unwrap();
        assert!(matches!(cayley_step(&f, &Matrix::zeros((6, 3)), 1.0), Err(Error::Shape(_))));
        assert!(matches!(cayley_step(&f, &Matrix::zeros((6, 2)), 0.0), Err(Error::InvalidParameter(_))));
        let not_orthonormal = Matrix::from_elem((6, 2), 1.0);
        assert!(matches!(
            cayley_step(&not_orthonormal, &Matrix::zeros((6, 2)), 1.0),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn line_search_stalls_without_descent() {
        let f = random_matrix(8, 2, RandomLaw::Orthonormal, 2).unwrap();
        let step = cayley_line_search(&f, &Matrix::zeros((8, 2)), 0.5, 40, 1.0, |_| 1.0);
        assert!(!step.accepted);
        assert_eq!(step.f, f);
        assert_eq!(step.halvings, 40);
        assert_eq!(step.tau, 0.5 / 2f64.powi(40));
    }
}
