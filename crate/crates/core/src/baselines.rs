//! Comparison factorizers: multiplicative-update NMF, orthogonal NMF,
//! Semi-NMF and logistic NMF.
//!
//! Multiplicative states are floored at a small δ so an entry that reaches
//! zero can still grow again.

use std::time::Instant;

use ndarray::{Array1, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::kmeans_columns;
use crate::linalg::{
    ensure_finite, gauss_jordan, invert_small, orthogonality_residual, random_matrix_from, truncated_svd, Matrix,
    RandomLaw,
};
use crate::result::{reached_threshold, FactorizationResult, IterationObserver, Method, Termination};
use crate::sonmf::binary::{check_binary, cost_unchecked};
use crate::sonmf::continuous::check_conformable;
use crate::sonmf::{frobenius_objective, sigmoid};

pub const DELTA_FLOOR: f64 = 1e-10;
/// Ridge added to `GᵀG` when Semi-NMF's normal equations are singular.
pub const SEMI_RIDGE: f64 = 1e-10;
/// Offset added to the k-means indicator matrix when seeding Semi-NMF.
pub const SEMI_INDICATOR_OFFSET: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineOptions {
    pub method: Method,
    pub k: usize,
    pub max_iters: usize,
    pub epsilon: f64,
    pub delta_floor: f64,
    /// Gradient step for logistic NMF.
    pub lognmf_step: f64,
    pub seed: u64,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions {
            method: Method::Nmf,
            k: 1,
            max_iters: 500,
            epsilon: 1e-4,
            delta_floor: DELTA_FLOOR,
            lognmf_step: 0.001,
            seed: 0,
        }
    }
}

impl BaselineOptions {
    pub fn new(method: Method, k: usize) -> Self {
        BaselineOptions { method, k, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.is_orthonormal() {
            return Err(Error::InvalidParameter(format!("{} is not a baseline method", self.method)));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        if self.delta_floor.is_nan() || self.delta_floor <= 0.0 {
            return Err(Error::InvalidParameter(format!("delta_floor must be positive, got {}", self.delta_floor)));
        }
        if !(self.lognmf_step > 0.0 && self.lognmf_step.is_finite()) {
            return Err(Error::InvalidParameter(format!("lognmf_step must be positive, got {}", self.lognmf_step)));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        Ok(())
    }
}

fn check_nonnegative(m: &Matrix) -> Result<()> {
    match m.indexed_iter().find(|(_, &v)| v.is_nan() || v < 0.0) {
        Some(((row, col), &value)) => Err(Error::Negative { row, col, value }),
        None => Ok(()),
    }
}

/// `m ← max(m ∘ num ⊘ max(den, δ), δ)`.
fn multiplicative(m: &mut Matrix, num: &Matrix, den: &Matrix, delta: f64) {
    Zip::from(m).and(num).and(den).for_each(|v, &a, &b| {
        *v = (*v * a / b.max(delta)).max(delta);
    });
}

fn nmf_f(x: &Matrix, f: &mut Matrix, g: &Matrix, delta: f64) {
    let num = x.dot(g);
    let den = f.dot(&g.t().dot(g));
    multiplicative(f, &num, &den, delta);
}

fn nmf_g(x: &Matrix, f: &Matrix, g: &mut Matrix, delta: f64) {
    let num = x.t().dot(f);
    let den = g.dot(&f.t().dot(f));
    multiplicative(g, &num, &den, delta);
}

/// Lee-Seung step: `F ← F∘XG ⊘ FGᵀG`, then `G ← G∘XᵀF ⊘ GFᵀF`.
pub fn nmf_mu_step(x: &Matrix, f: &Matrix, g: &Matrix, delta: f64) -> Result<(Matrix, Matrix)> {
    check_conformable(x, f, g)?;
    check_nonnegative(f)?;
    check_nonnegative(g)?;
    let (mut f, mut g) = (f.clone(), g.clone());
    nmf_f(x, &mut f, &g, delta);
    nmf_g(x, &f, &mut g, delta);
    Ok((f, g))
}

/// Column-wise F sweep of HALS orthogonal NMF. Each column
/// takes its unconstrained HALS target, drops the component along the sum of
/// the other columns, is floored at δ and rescaled to unit norm.
fn onmf_f(x: &Matrix, f: &mut Matrix, g: &Matrix, delta: f64) {
    let xg = x.dot(g);
    let gtg = g.t().dot(g);
    let k = f.ncols();
    let mut total: Array1<f64> = f.sum_axis(Axis(1));
    for j in 0..k {
        let mut a = &xg.column(j) - &f.dot(&gtg.column(j)) + &(&f.column(j) * gtg[[j, j]]);
        let others = &total - &f.column(j);
        let norm_sq = others.dot(&others);
        if norm_sq > 0.0 {
            let along = others.dot(&a) / norm_sq;
            a.scaled_add(-along, &others);
        }
        a.mapv_inplace(|v| v.max(delta));
        let norm = a.dot(&a).sqrt();
        a.mapv_inplace(|v| v / norm);
        total = others + &a;
        f.column_mut(j).assign(&a);
    }
}

/// HALS G sweep: `g_j ← [((XᵀF)_j − G(FᵀF)_j + g_j(FᵀF)_jj) / (FᵀF)_jj]_δ`.
fn hals_g(x: &Matrix, f: &Matrix, g: &mut Matrix, delta: f64) {
    let xtf = x.t().dot(f);
    let ftf = f.t().dot(f);
    for j in 0..f.ncols() {
        let d = ftf[[j, j]].max(delta);
        let mut col = &xtf.column(j) - &g.dot(&ftf.column(j)) + &(&g.column(j) * ftf[[j, j]]);
        col.mapv_inplace(|v| (v / d).max(delta));
        g.column_mut(j).assign(&col);
    }
}

/// Orthogonal NMF by hierarchical ALS: an F sweep that keeps
/// columns unit-norm and pushes them toward disjoint supports, then a plain
/// HALS G sweep.
pub fn onmf_step(x: &Matrix, f: &Matrix, g: &Matrix, delta: f64) -> Result<(Matrix, Matrix)> {
    check_conformable(x, f, g)?;
    check_nonnegative(f)?;
    check_nonnegative(g)?;
    let (mut f, mut g) = (f.clone(), g.clone());
    onmf_f(x, &mut f, &g, delta);
    hals_g(x, &f, &mut g, delta);
    Ok((f, g))
}

fn semi_f(x: &Matrix, g: &Matrix) -> Matrix {
    let gtg = g.t().dot(g);
    let inv = invert_small(&gtg).unwrap_or_else(|_| {
        log::debug!("GᵀG near-singular, adding ridge {SEMI_RIDGE}");
        let mut ridged = gtg.clone();
        ridged.diag_mut().mapv_inplace(|d| d + SEMI_RIDGE);
        gauss_jordan(&ridged).unwrap_or_else(|_| Matrix::zeros(gtg.dim()))
    });
    x.dot(&g.dot(&inv))
}

fn semi_g(x: &Matrix, f: &Matrix, g: &mut Matrix, delta: f64) {
    let xtf = x.t().dot(f);
    let ftf = f.t().dot(f);
    let pos = |v: &f64| v.max(0.0);
    let neg = |v: &f64| (-v).max(0.0);
    let num = xtf.mapv(|v| pos(&v)) + g.dot(&ftf.mapv(|v| neg(&v)));
    let den = xtf.mapv(|v| neg(&v)) + g.dot(&ftf.mapv(|v| pos(&v)));
    Zip::from(g).and(&num).and(&den).for_each(|v, &a, &b| {
        *v = (*v * (a / b.max(delta)).sqrt()).max(delta);
    });
}

/// Semi-NMF: least-squares F, then
/// `G ← G∘sqrt(((XᵀF)⁺ + G(FᵀF)⁻) ⊘ ((XᵀF)⁻ + G(FᵀF)⁺))`.
pub fn semi_nmf_step(x: &Matrix, f: &Matrix, g: &Matrix, delta: f64) -> Result<(Matrix, Matrix)> {
    check_conformable(x, f, g)?;
    check_nonnegative(g)?;
    let f = semi_f(x, g);
    let mut g = g.clone();
    semi_g(x, &f, &mut g, delta);
    Ok((f, g))
}

/// Gradients of the binary cost in F and G: `((σ − X)G, (σ − X)ᵀF)`.
pub fn lognmf_gradients(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<(Matrix, Matrix)> {
    check_conformable(x, f, g)?;
    Ok(lognmf_gradients_unchecked(x, f, g))
}

fn lognmf_gradients_unchecked(x: &Matrix, f: &Matrix, g: &Matrix) -> (Matrix, Matrix) {
    let mut r = f.dot(&g.t());
    r.zip_mut_with(x, |t, &xv| *t = sigmoid(*t) - xv);
    (r.dot(g), r.t().dot(f))
}

/// Logistic NMF: a simultaneous gradient step on the
/// log-likelihood, projecting F back onto the nonnegative orthant. G is
/// unconstrained.
pub fn lognmf_step(x: &Matrix, f: &Matrix, g: &Matrix, step: f64) -> Result<(Matrix, Matrix)> {
    check_conformable(x, f, g)?;
    check_binary(x)?;
    Ok(lognmf_unchecked(x, f, g, step))
}

fn lognmf_unchecked(x: &Matrix, f: &Matrix, g: &Matrix, step: f64) -> (Matrix, Matrix) {
    let (gf, gg) = lognmf_gradients_unchecked(x, f, g);
    let mut f_next = f - &(gf * step);
    f_next.mapv_inplace(|v| v.max(0.0));
    (f_next, g - &(gg * step))
}

/// `[U]_δ` from the truncated SVD and `[XᵀF₀]_δ`.
fn floored_svd_init(x: &Matrix, k: usize, delta: f64) -> Result<(Matrix, Matrix)> {
    let f = truncated_svd(x, k)?.u.mapv(|v| v.max(delta));
    let g = x.t().dot(&f).mapv(|v| v.max(delta));
    Ok((f, g))
}

/// K-means centroids and the cluster indicator offset by 0.2.
fn semi_init(x: &Matrix, k: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    let (p, n) = x.dim();
    if k > p.min(n) {
        return Err(Error::RankOutOfRange { k, rows: p, cols: n });
    }
    let clusters = kmeans_columns(x, k, seed)?;
    let mut g = Matrix::from_elem((n, k), SEMI_INDICATOR_OFFSET);
    for (j, &c) in clusters.assignments.iter().enumerate() {
        g[[j, c]] += 1.0;
    }
    Ok((clusters.centroids, g))
}

fn lognmf_init(x: &Matrix, k: usize, seed: u64) -> Result<(Matrix, Matrix)> {
    let (p, n) = x.dim();
    if k > p.min(n) {
        return Err(Error::RankOutOfRange { k, rows: p, cols: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = random_matrix_from(&mut rng, p, k, RandomLaw::Uniform { low: 0.0, high: 1.0 })?;
    let g = random_matrix_from(&mut rng, n, k, RandomLaw::Normal { mean: 0.0, sd: 1.0 })?;
    Ok((f, g))
}

pub fn factorize_baseline(x: &Matrix, opts: &BaselineOptions) -> Result<FactorizationResult> {
    factorize_baseline_observed(x, opts, &mut |_, _, _| {})
}

/// Runs one baseline from its customary starting point until the per-entry
/// objective decrease falls in `[0, epsilon]` or `max_iters` is reached.
pub fn factorize_baseline_observed(
    x: &Matrix,
    opts: &BaselineOptions,
    observer: &mut IterationObserver<'_>,
) -> Result<FactorizationResult> {
    opts.validate()?;
    ensure_finite(x)?;
    let start = Instant::now();
    let delta = opts.delta_floor;
    let (mut f, mut g) = match opts.method {
        Method::Nmf | Method::Onmf => {
            if x.iter().any(|&v| v < 0.0) {
                log::debug!("{} on mixed-sign data; states stay floored at {delta}", opts.method);
            }
            floored_svd_init(x, opts.k, delta)?
        }
        Method::Semi => semi_init(x, opts.k, opts.seed)?,
        Method::Lognmf => {
            check_binary(x)?;
            lognmf_init(x, opts.k, opts.seed)?
        }
        Method::Sonmf | Method::SonmfBinary => unreachable!("rejected by validate"),
    };
    let objective = |f: &Matrix, g: &Matrix| match opts.method {
        Method::Lognmf => cost_unchecked(x, f, g),
        _ => frobenius_objective(x, f, g),
    };

    let mut trace = vec![objective(&f, &g)];
    let mut orthogonality = vec![orthogonality_residual(&f)];
    observer(0, &f, &g);
    let mut termination = Termination::MaxIters;
    for iter in 1..=opts.max_iters {
        match opts.method {
            Method::Nmf => {
                nmf_f(x, &mut f, &g, delta);
                nmf_g(x, &f, &mut g, delta);
            }
            Method::Onmf => {
                onmf_f(x, &mut f, &g, delta);
                hals_g(x, &f, &mut g, delta);
            }
            Method::Semi => {
                f = semi_f(x, &g);
                semi_g(x, &f, &mut g, delta);
            }
            Method::Lognmf => (f, g) = lognmf_unchecked(x, &f, &g, opts.lognmf_step),
            Method::Sonmf | Method::SonmfBinary => unreachable!(),
        }
        trace.push(objective(&f, &g));
        orthogonality.push(orthogonality_residual(&f));
        observer(iter, &f, &g);
        if reached_threshold(trace[iter - 1], trace[iter], x.len(), opts.epsilon) {
            termination = Termination::Threshold;
            break;
        }
    }

    Ok(FactorizationResult {
        method: opts.method,
        iterations: trace.len() - 1,
        f,
        g,
        objective_trace: trace,
        orthogonality_trace: orthogonality,
        termination,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        accepted_steps: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_matrix;

    fn uniform(rows: usize, cols: usize, high: f64, seed: u64) -> Matrix {
        random_matrix(rows, cols, RandomLaw::Uniform { low: 0.0, high }, seed).unwrap()
    }

    #[test]
    fn nmf_exact_fit_is_fixed_point() {
        let f = uniform(8, 3, 1.0, 1) + 0.1;
        let g = uniform(6, 3, 1.0, 2) + 0.1;
        let x = f.dot(&g.t());
        let (f2, g2) = nmf_mu_step(&x, &f, &g, DELTA_FLOOR).unwrap();
        assert!((&f2 - &f).iter().all(|v| v.abs() < 1e-12));
        assert!((&g2 - &g).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn multiplicative_steps_reject_negative_state() {
        let x = uniform(4, 4, 1.0, 3);
        let mut f = uniform(4, 2, 1.0, 4);
        f[[1, 1]] = -0.5;
        let g = uniform(4, 2, 1.0, 5);
        assert_eq!(nmf_mu_step(&x, &f, &g, DELTA_FLOOR).unwrap_err(), Error::Negative { row: 1, col: 1, value: -0.5 });
        assert!(onmf_step(&x, &f, &g, DELTA_FLOOR).is_err());
        assert!(semi_nmf_step(&x, &f, &g, DELTA_FLOOR).is_ok());
    }

    #[test]
    fn onmf_orthonormal_exact_fit_is_stationary() {
        // Disjoint supports make F both nonnegative and orthonormal.
        let mut f = Matrix::zeros((6, 2));
        for i in 0..3 {
            f[[i, 0]] = 1.0 / 3f64.sqrt();
            f[[i + 3, 1]] = 1.0 / 3f64.sqrt();
        }
        let g = uniform(5, 2, 2.0, 7) + 0.1;
        let x = f.dot(&g.t());
        let before = frobenius_objective(&x, &f, &g);
        let (f2, g2) = onmf_step(&x, &f, &g, DELTA_FLOOR).unwrap();
        assert!((frobenius_objective(&x, &f2, &g2) - before).abs() < 1e-8);
    }

    #[test]
    fn semi_exact_fit_is_fixed_point() {
        let f = random_matrix(8, 2, RandomLaw::Normal { mean: 0.0, sd: 1.0 }, 1).unwrap();
        let g = uniform(7, 2, 1.0, 2) + 0.1;
        let x = f.dot(&g.t());
        let (f2, g2) = semi_nmf_step(&x, &f, &g, DELTA_FLOOR).unwrap();
        assert!((&f2 - &f).iter().all(|v| v.abs() < 1e-10));
        assert!((&g2 - &g).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn semi_survives_singular_gram() {
        let x = uniform(5, 4, 1.0, 1);
        let g = Matrix::from_elem((4, 2), 1.0);
        let (f, g) = semi_nmf_step(&x, &Matrix::zeros((5, 2)), &g, DELTA_FLOOR).unwrap();
        assert!(f.iter().chain(g.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn lognmf_zero_gradient_is_unchanged() {
        // θ = 0 with X = ½ would be stationary, so use a one-entry saturated case.
        let x = Matrix::from_elem((1, 1), 1.0);
        let f = Matrix::from_elem((1, 1), 1.0);
        let g = Matrix::from_elem((1, 1), 800.0);
        let (f2, g2) = lognmf_step(&x, &f, &g, 0.001).unwrap();
        assert_eq!((f2, g2), (f, g));
    }

    #[test]
    fn lognmf_keeps_f_nonnegative_and_rejects_real_data() {
        let x = uniform(6, 5, 1.0, 9).mapv(f64::round);
        let f = uniform(6, 2, 0.01, 10);
        let g = random_matrix(5, 2, RandomLaw::Normal { mean: 0.0, sd: 1.0 }, 11).unwrap();
        let (f2, _) = lognmf_step(&x, &f, &g, 1.0).unwrap();
        assert!(f2.iter().all(|&v| v >= 0.0));
        assert!(matches!(lognmf_step(&(x + 0.5), &f, &g, 0.1), Err(Error::NotBinary { .. })));
    }

    #[test]
    fn sonmf_is_not_a_baseline() {
        let x = uniform(5, 5, 1.0, 1);
        assert!(factorize_baseline(&x, &BaselineOptions::new(Method::Sonmf, 2)).is_err());
    }

    #[test]
    fn small_noiseless_instances() {
        let f = uniform(30, 3, 1.0, 31);
        let g = uniform(30, 3, 2.0, 32);
        let x = f.dot(&g.t());
        for method in [Method::Nmf, Method::Onmf, Method::Semi] {
            let opts = BaselineOptions { max_iters: 2000, epsilon: 0.0, ..BaselineOptions::new(method, 3) };
            let res = factorize_baseline(&x, &opts).unwrap();
            let avg = res.final_objective() / 900.0;
            assert!(res.g.iter().all(|&v| v >= 0.0));
            // Multiplicative updates converge sublinearly, and ONMF's
            // orthogonality pull keeps it off an exact fit of non-orthogonal F.
            let bound = match method {
                Method::Semi => 1e-3,
                Method::Nmf => 1e-2,
                _ => 0.1,
            };
            assert!(avg < bound, "{method}: {avg}");
        }
    }

    #[test]
    fn lognmf_reduces_cost() {
        let x = uniform(20, 15, 1.0, 4).mapv(f64::round);
        let opts = BaselineOptions { max_iters: 200, epsilon: 0.0, ..BaselineOptions::new(Method::Lognmf, 2) };
        let res = factorize_baseline(&x, &opts).unwrap();
        assert!(res.final_objective() < res.objective_trace[0]);
        assert!(res.f.iter().all(|&v| v >= 0.0));
    }
}
