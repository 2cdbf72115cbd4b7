//! SONMF for binary X under a Bernoulli likelihood with logistic link.
//!
//! The cost is the negative log-likelihood `Σ log(1 + e^θ) − X∘θ` with
//! `θ = FGᵀ`. G takes damped diagonal Newton steps, F takes Cayley steps
//! along `(σ(θ) − X)G`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::continuous::check_conformable;
use super::{cayley_line_search, check_orthonormal};
use crate::error::{Error, Result};
use crate::init::{init_f, Init};
use crate::linalg::{ensure_finite, orthogonality_residual, Matrix};
use crate::result::{reached_threshold, FactorizationResult, IterationObserver, Method, Termination};

/// Floor on the Newton curvature where the sigmoid saturates.
pub const HESSIAN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinaryOptions {
    pub k: usize,
    pub max_iters: usize,
    pub epsilon: f64,
    /// Newton step size for G. Zero freezes G.
    pub eta: f64,
    pub tau_init: f64,
    pub max_halvings: usize,
    pub seed: u64,
}

impl Default for BinaryOptions {
    fn default() -> Self {
        BinaryOptions { k: 1, max_iters: 500, epsilon: 1e-4, eta: 0.05, tau_init: 2.0, max_halvings: 40, seed: 0 }
    }
}

impl BinaryOptions {
    pub fn with_rank(k: usize) -> Self {
        BinaryOptions { k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {}", self.eta)));
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

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_matrix(m: &Matrix) -> Matrix {
    m.mapv(sigmoid)
}

/// `log(1 + e^θ)` without overflow.
fn softplus(theta: f64) -> f64 {
    theta.max(0.0) + (-theta.abs()).exp().ln_1p()
}

pub(crate) fn check_binary(x: &Matrix) -> Result<()> {
    for ((row, col), &value) in x.indexed_iter() {
        if value != 0.0 && value != 1.0 {
            return Err(Error::NotBinary { row, col, value });
        }
    }
    Ok(())
}

/// Total and per-entry negative log-likelihood of X under `σ(FGᵀ)`.
pub fn binary_cost(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<(f64, f64)> {
    check_conformable(x, f, g)?;
    check_binary(x)?;
    let total = cost_unchecked(x, f, g);
    Ok((total, total / x.len() as f64))
}

pub(crate) fn cost_unchecked(x: &Matrix, f: &Matrix, g: &Matrix) -> f64 {
    let theta = f.dot(&g.t());
    theta.iter().zip(x.iter()).map(|(&t, &xv)| softplus(t) - xv * t).sum()
}

/// `σ(FGᵀ) − X`.
fn residual(x: &Matrix, f: &Matrix, g: &Matrix) -> Matrix {
    let mut r = f.dot(&g.t());
    r.zip_mut_with(x, |t, &xv| *t = sigmoid(*t) - xv);
    r
}

/// `(σ(FGᵀ) − X)G`, the gradient of the cost in F.
pub fn gradient_f_binary(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<Matrix> {
    check_conformable(x, f, g)?;
    Ok(residual(x, f, g).dot(g))
}

/// One damped Newton step `[G − η D₁ ⊘ D₂]₊` with `D₁ = (σ − X)ᵀF` and
/// `D₂ = (σ(1 − σ))ᵀ(F∘F)` floored at [`HESSIAN_FLOOR`].
pub fn newton_update_g(x: &Matrix, f: &Matrix, g: &Matrix, eta: f64) -> Result<Matrix> {
    check_conformable(x, f, g)?;
    check_orthonormal(f)?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0, 1], got {eta}")));
    }
    Ok(newton_unchecked(x, f, g, eta))
}

fn newton_unchecked(x: &Matrix, f: &Matrix, g: &Matrix, eta: f64) -> Matrix {
    let theta = f.dot(&g.t());
    let sig = theta.mapv(sigmoid);
    let curvature = sig.mapv(|s| s * (1.0 - s));
    let d1 = (&sig - x).t().dot(f);
    let d2 = curvature.t().dot(&f.mapv(|v| v * v));
    let mut out = g.clone();
    ndarray::Zip::from(&mut out).and(&d1).and(&d2).for_each(|gv, &a, &b| {
        *gv = (*gv - eta * a / b.max(HESSIAN_FLOOR)).max(0.0);
    });
    out
}

pub fn factorize_binary(x: &Matrix, opts: &BinaryOptions, init: Init) -> Result<FactorizationResult> {
    factorize_binary_observed(x, opts, init, &mut |_, _, _| {})
}

/// Alternates a Newton step on G with a Cayley line search on F.
pub fn factorize_binary_observed(
    x: &Matrix,
    opts: &BinaryOptions,
    init: Init,
    observer: &mut IterationObserver<'_>,
) -> Result<FactorizationResult> {
    opts.validate()?;
    ensure_finite(x)?;
    check_binary(x)?;
    let start = Instant::now();
    let mut f = init_f(x, opts.k, init, opts.seed)?;
    let mut g = x.t().dot(&f);
    g.mapv_inplace(|v| v.max(0.0));

    let mut trace = vec![cost_unchecked(x, &f, &g)];
    let mut orthogonality = vec![orthogonality_residual(&f)];
    observer(0, &f, &g);

    let mut tau = opts.tau_init;
    let mut accepted_steps = 0;
    let mut termination = Termination::MaxIters;
    for iter in 1..=opts.max_iters {
        let g_next = newton_unchecked(x, &f, &g, opts.eta);
        let g_moved = g_next != g;
        g = g_next;
        let grad = residual(x, &f, &g).dot(&g);
        let current = cost_unchecked(x, &f, &g);
        let step = cayley_line_search(&f, &grad, tau, opts.max_halvings, current, |y| cost_unchecked(x, y, &g));
        tau = step.tau;
        f = step.f;
        trace.push(step.objective);
        orthogonality.push(orthogonality_residual(&f));
        observer(iter, &f, &g);
        if step.accepted {
            accepted_steps += 1;
        } else if !g_moved {
            termination = Termination::Stalled;
            break;
        }
        if reached_threshold(trace[iter - 1], trace[iter], x.len(), opts.epsilon) {
            termination = Termination::Threshold;
            break;
        }
    }

    Ok(FactorizationResult {
        method: Method::SonmfBinary,
        iterations: trace.len() - 1,
        f,
        g,
        objective_trace: trace,
        orthogonality_trace: orthogonality,
        termination,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        accepted_steps,
    })
}
