//! SONMF for real-valued X: minimise `‖X − FGᵀ‖²_F` over orthonormal F and
//! nonnegative G.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{cayley_line_search, check_orthonormal, LineSearchStep};
use crate::error::{Error, Result};
use crate::init::{init_f, Init};
use crate::linalg::{ensure_finite, orthogonality_residual, Matrix};
use crate::result::{reached_threshold, FactorizationResult, IterationObserver, Method, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuousOptions {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the per-entry objective decrease falls in `[0, epsilon]`.
    pub epsilon: f64,
    pub tau_init: f64,
    pub max_halvings: usize,
    /// Used by the k-means and random initialisations.
    pub seed: u64,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        ContinuousOptions { k: 1, max_iters: 500, epsilon: 1e-4, tau_init: 0.5, max_halvings: 40, seed: 0 }
    }
}

impl ContinuousOptions {
    pub fn with_rank(k: usize) -> Self {
        ContinuousOptions { k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(self.tau_init > 0.0 && self.tau_init.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau_init must be positive, got {}", self.tau_init)));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

pub(crate) fn check_conformable(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<()> {
    let (p, n) = x.dim();
    if f.nrows() != p || g.nrows() != n || f.ncols() != g.ncols() {
        return Err(Error::Shape(format!("X is {p}x{n}, F is {:?}, G is {:?}", f.dim(), g.dim())));
    }
    Ok(())
}

/// `‖X − FGᵀ‖²_F`.
pub fn frobenius_objective(x: &Matrix, f: &Matrix, g: &Matrix) -> f64 {
    let mut r = f.dot(&g.t());
    r.zip_mut_with(x, |a, &b| *a = b - *a);
    r.iter().map(|v| v * v).sum()
}

/// Closed-form G for orthonormal F: `[XᵀF]₊`.
pub fn update_g(x: &Matrix, f: &Matrix) -> Result<Matrix> {
    if x.nrows() != f.nrows() {
        return Err(Error::Shape(format!("X has {} rows, F has {}", x.nrows(), f.nrows())));
    }
    check_orthonormal(f)?;
    Ok(positive_projection(x, f))
}

fn positive_projection(x: &Matrix, f: &Matrix) -> Matrix {
    let mut g = x.t().dot(f);
    g.mapv_inplace(|v| v.max(0.0));
    g
}

/// Euclidean gradient `2FGᵀG − 2XG` of the Frobenius objective in F.
pub fn gradient_f(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<Matrix> {
    check_conformable(x, f, g)?;
    Ok(gradient_unchecked(x, f, g))
}

fn gradient_unchecked(x: &Matrix, f: &Matrix, g: &Matrix) -> Matrix {
    let gtg = g.t().dot(g);
    let mut grad = f.dot(&gtg);
    grad -= &x.dot(g);
    grad *= 2.0;
    grad
}

/// Backtracking Cayley search on F with G fixed.
pub fn line_search_f(x: &Matrix, f: &Matrix, g: &Matrix, tau_in: f64, max_halvings: usize) -> Result<LineSearchStep> {
    check_conformable(x, f, g)?;
    check_orthonormal(f)?;
    if !(tau_in > 0.0 && tau_in.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau_in}")));
    }
    let grad = gradient_unchecked(x, f, g);
    let current = frobenius_objective(x, f, g);
    Ok(cayley_line_search(f, &grad, tau_in, max_halvings, current, |y| frobenius_objective(x, y, g)))
}

pub fn factorize_continuous(x: &Matrix, opts: &ContinuousOptions, init: Init) -> Result<FactorizationResult> {
    factorize_continuous_observed(x, opts, init, &mut |_, _, _| {})
}

/// Alternates the closed-form G update with a Cayley line search on F.
pub fn factorize_continuous_observed(
    x: &Matrix,
    opts: &ContinuousOptions,
    init: Init,
    observer: &mut IterationObserver<'_>,
) -> Result<FactorizationResult> {
    opts.validate()?;
    ensure_finite(x)?;
    let start = Instant::now();
    let f0 = init_f(x, opts.k, init, opts.seed)?;
    Ok(run_from(x, f0, opts, start, observer))
}

pub(crate) fn run_from(
    x: &Matrix,
    mut f: Matrix,
    opts: &ContinuousOptions,
    start: Instant,
    observer: &mut IterationObserver<'_>,
) -> FactorizationResult {
    let mut g = positive_projection(x, &f);
    let mut trace = vec![frobenius_objective(x, &f, &g)];
    let mut orthogonality = vec![orthogonality_residual(&f)];
    observer(0, &f, &g);

    let mut tau = opts.tau_init;
    let mut accepted_steps = 0;
    let mut termination = Termination::MaxIters;
    for iter in 1..=opts.max_iters {
        g = positive_projection(x, &f);
        let grad = gradient_unchecked(x, &f, &g);
        let current = frobenius_objective(x, &f, &g);
        let step = cayley_line_search(&f, &grad, tau, opts.max_halvings, current, |y| frobenius_objective(x, y, &g));
        tau = step.tau;
        f = step.f;
        trace.push(step.objective);
        orthogonality.push(orthogonality_residual(&f));
        observer(iter, &f, &g);
        if !step.accepted {
            // G depends only on F, so a rejected F step leaves a fixed point.
            termination = Termination::Stalled;
            break;
        }
        accepted_steps += 1;
        if reached_threshold(trace[iter - 1], trace[iter], x.len(), opts.epsilon) {
            termination = Termination::Threshold;
            break;
        }
    }

    FactorizationResult {
        method: Method::Sonmf,
        iterations: trace.len() - 1,
        f,
        g,
        objective_trace: trace,
        orthogonality_trace: orthogonality,
        termination,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        accepted_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{random_matrix, RandomLaw};
    use ndarray::array;

    #[test]
    fn update_g_identity_basis() {
        let x = array![[1.0, -2.0], [3.0, 4.0]];
        let g = update_g(&x, &Matrix::eye(2)).unwrap();
        assert_eq!(g, array![[1.0, 3.0], [0.0, 4.0]]);
    }

    #[test]
    fn update_g_recovers_exact_coefficients() {
        let f = random_matrix(12, 3, RandomLaw::Orthonormal, 5).unwrap();
        let g_true = random_matrix(9, 3, RandomLaw::Uniform { low: 0.0, high: 2.0 }, 6).unwrap();
        let x = f.dot(&g_true.t());
        let g = update_g(&x, &f).unwrap();
        assert!((&g - &g_true).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn update_g_rejects_non_orthonormal() {
        let x = Matrix::eye(3);
        assert!(matches!(update_g(&x, &Matrix::from_elem((3, 2), 1.0)), Err(Error::NotOrthonormal { .. })));
        assert!(matches!(update_g(&x, &Matrix::eye(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn gradient_vanishes_at_exact_fit_and_zero_g() {
        let f = random_matrix(7, 2, RandomLaw::Orthonormal, 1).unwrap();
        let g = random_matrix(5, 2, RandomLaw::Uniform { low: 0.0, high: 1.0 }, 2).unwrap();
        let x = f.dot(&g.t());
        assert!(gradient_f(&x, &f, &g).unwrap().iter().all(|v| v.abs() < 1e-12));
        assert!(gradient_f(&x, &f, &Matrix::zeros((5, 2))).unwrap().iter().all(|&v| v == 0.0));
        assert!(gradient_f(&x, &f, &Matrix::zeros((4, 2))).is_err());
    }

    #[test]
    fn line_search_stalls_at_minimiser() {
        let f = random_matrix(6, 2, RandomLaw::Orthonormal, 3).unwrap();
        let g = Matrix::zeros((4, 2));
        let x = random_matrix(6, 4, RandomLaw::Normal { mean: 0.0, sd: 1.0 }, 4).unwrap();
        let step = line_search_f(&x, &f, &g, 0.5, 40).unwrap();
        assert!(!step.accepted);
        assert_eq!(step.f, f);
        assert_eq!(step.halvings, 40);
    }

    #[test]
    fn huge_tau_backtracks_then_descends() {
        let x = random_matrix(15, 12, RandomLaw::Uniform { low: 0.0, high: 1.0 }, 8).unwrap();
        let f = random_matrix(15, 3, RandomLaw::Orthonormal, 9).unwrap();
        let g = positive_projection(&x, &f);
        let step = line_search_f(&x, &f, &g, 1e6, 40).unwrap();
        assert!(step.accepted);
        assert!(step.halvings >= 1);
        assert!(step.objective < frobenius_objective(&x, &f, &g));
        assert!(orthogonality_residual(&step.f) < 1e-10);
    }

    #[test]
    fn noiseless_recovery() {
        let f = random_matrix(40, 3, RandomLaw::Orthonormal, 21).unwrap();
        let g = random_matrix(30, 3, RandomLaw::Uniform { low: 0.5, high: 2.0 }, 22).unwrap();
        let x = f.dot(&g.t());
        let opts = ContinuousOptions { epsilon: 0.0, ..ContinuousOptions::with_rank(3) };
        let res = factorize_continuous(&x, &opts, Init::Svd).unwrap();
        let avg = res.final_objective() / (40.0 * 30.0);
        assert!(avg < 1e-6, "average residual {avg}");
        assert!(res.orthogonality_trace.iter().all(|&r| r < 1e-8));
    }

    #[test]
    fn options_validation() {
        let x = Matrix::eye(4);
        let bad_tau = ContinuousOptions { tau_init: 0.0, ..ContinuousOptions::with_rank(2) };
        assert!(factorize_continuous(&x, &bad_tau, Init::Svd).is_err());
        assert!(factorize_continuous(&x, &ContinuousOptions::with_rank(0), Init::Svd).is_err());
        assert!(factorize_continuous(&x, &ContinuousOptions::with_rank(5), Init::Svd).is_err());
    }
}
