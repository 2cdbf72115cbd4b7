//! Cross-checks of the factorizers' building blocks against independent
//! reference computations (dense nalgebra linear algebra, finite
//! differences, literal column-by-column updates).

use nalgebra::DMatrix;
use proptest::prelude::*;
use sonmf_core::baselines::{lognmf_gradients, nmf_mu_step, DELTA_FLOOR};
use sonmf_core::linalg::{invert_small, qr_orthonormalize, random_matrix, truncated_svd, Matrix, RandomLaw};
use sonmf_core::sonmf::{
    binary_cost, cayley_step, factorize_continuous_observed, frobenius_objective, gradient_f, gradient_f_binary,
    update_g, ContinuousOptions,
};
use sonmf_core::Init;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn max_abs_diff_na(a: &Matrix, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.dim(), b.shape());
    a.indexed_iter().map(|((i, j), v)| (v - b[(i, j)]).abs()).fold(0.0, f64::max)
}

fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn normal(rows: usize, cols: usize, seed: u64) -> Matrix {
    random_matrix(rows, cols, RandomLaw::Normal { mean: 0.0, sd: 1.0 }, seed).unwrap()
}

fn uniform(rows: usize, cols: usize, high: f64, seed: u64) -> Matrix {
    random_matrix(rows, cols, RandomLaw::Uniform { low: 0.0, high }, seed).unwrap()
}

fn orthonormal(rows: usize, cols: usize, seed: u64) -> Matrix {
    random_matrix(rows, cols, RandomLaw::Orthonormal, seed).unwrap()
}

/// Small instance dimensions drawn from the seed: p in 3..=20, k ≤ min(p, 5).
fn dims(seed: u64) -> (usize, usize, usize) {
    let p = 3 + (seed * 7 % 18) as usize;
    let n = 2 + (seed * 5 % 15) as usize;
    let k = 1 + (seed % 5) as usize;
    (p, n, k.min(p).min(n))
}

#[test]
fn smw_cayley_matches_direct_inverse() {
    for seed in 0..20u64 {
        let (p, _, k) = dims(seed);
        let f = orthonormal(p, k, seed);
        let grad = normal(p, k, seed + 100);
        let tau = 0.05 + 0.1 * (seed % 4) as f64;

        let (fa, ga) = (to_na(&f), to_na(&grad));
        let s = &ga * fa.transpose() - &fa * ga.transpose();
        let id = DMatrix::<f64>::identity(p, p);
        let q = (&id + &s * (tau / 2.0)).try_inverse().expect("I + τS/2 is invertible for skew S")
            * (&id - &s * (tau / 2.0));
        let direct = q * &fa;

        let smw = cayley_step(&f, &grad, tau).unwrap();
        let diff = max_abs_diff_na(&smw, &direct);
        assert!(diff < 1e-10, "seed {seed} p={p} k={k}: {diff:e}");
    }
}

#[test]
fn matrix_g_update_equals_columnwise_hals() {
    for seed in 0..20u64 {
        let (p, n, k) = dims(seed);
        let x = normal(p, n, seed);
        let f = orthonormal(p, k, seed + 1);
        // Literal HALS sweep from an arbitrary nonnegative start.
        let mut g = uniform(n, k, 3.0, seed + 2);
        let xtf = x.t().dot(&f);
        let ftf = f.t().dot(&f);
        for j in 0..k {
            let mut col = &xtf.column(j) - &g.dot(&ftf.column(j)) + &(&g.column(j) * ftf[[j, j]]);
            col.mapv_inplace(|v| v.max(0.0));
            g.column_mut(j).assign(&col);
        }
        let diff = max_abs_diff(&update_g(&x, &f).unwrap(), &g);
        assert!(diff < 1e-12, "seed {seed}: {diff:e}");
    }
}

fn central_difference(m: &Matrix, i: usize, j: usize, h: f64, cost: impl Fn(&Matrix) -> f64) -> f64 {
    let mut plus = m.clone();
    plus[[i, j]] += h;
    let mut minus = m.clone();
    minus[[i, j]] -= h;
    (cost(&plus) - cost(&minus)) / (2.0 * h)
}

fn relative_gap(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

#[test]
fn binary_gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let (p, n, k) = dims(seed);
        let x = uniform(p, n, 1.0, seed).mapv(|v| if v < 0.4 { 1.0 } else { 0.0 });
        let f = normal(p, k, seed + 1);
        let g = uniform(n, k, 1.0, seed + 2);
        let total = |f: &Matrix, g: &Matrix| binary_cost(&x, f, g).unwrap().0;

        let df = gradient_f_binary(&x, &f, &g).unwrap();
        let (df_alt, dg) = lognmf_gradients(&x, &f, &g).unwrap();
        assert!(max_abs_diff(&df, &df_alt) < 1e-12);
        for ((i, j), &a) in df.indexed_iter() {
            let num = central_difference(&f, i, j, 1e-5, |m| total(m, &g));
            assert!(relative_gap(a, num) < 1e-5, "seed {seed} dF[{i},{j}] {a} vs {num}");
        }
        for ((i, j), &a) in dg.indexed_iter() {
            let num = central_difference(&g, i, j, 1e-5, |m| total(&f, m));
            assert!(relative_gap(a, num) < 1e-5, "seed {seed} dG[{i},{j}] {a} vs {num}");
        }
    }
}

#[test]
fn frobenius_gradient_matches_finite_differences() {
    for seed in 0..10u64 {
        let (p, n, k) = dims(seed);
        let x = normal(p, n, seed);
        let f = normal(p, k, seed + 1);
        let g = uniform(n, k, 2.0, seed + 2);
        let grad = gradient_f(&x, &f, &g).unwrap();
        for ((i, j), &a) in grad.indexed_iter() {
            // The objective is quadratic in F, so the central difference is exact
            // up to rounding.
            let num = central_difference(&f, i, j, 1e-3, |m| frobenius_objective(&x, m, &g));
            assert!(relative_gap(a, num) < 1e-6, "seed {seed} [{i},{j}] {a} vs {num}");
        }
    }
}

#[test]
fn lee_seung_steps_never_increase_residual() {
    let x = uniform(25, 20, 2.0, 1);
    let mut f = uniform(25, 4, 1.0, 2) + DELTA_FLOOR;
    let mut g = uniform(20, 4, 1.0, 3) + DELTA_FLOOR;
    let mut previous = frobenius_objective(&x, &f, &g);
    for step in 0..100 {
        (f, g) = nmf_mu_step(&x, &f, &g, DELTA_FLOOR).unwrap();
        let current = frobenius_objective(&x, &f, &g);
        assert!(current <= previous * (1.0 + 1e-12), "step {step}: {previous} -> {current}");
        previous = current;
    }
}

#[test]
fn lee_seung_monotone_from_random_states() {
    for seed in 0..100u64 {
        let (p, n, k) = dims(seed);
        let x = uniform(p, n, 2.0, seed);
        let f = uniform(p, k, 1.0, seed + 1) + DELTA_FLOOR;
        let g = uniform(n, k, 1.0, seed + 2) + DELTA_FLOOR;
        let before = frobenius_objective(&x, &f, &g);
        let (f2, g2) = nmf_mu_step(&x, &f, &g, DELTA_FLOOR).unwrap();
        let after = frobenius_objective(&x, &f2, &g2);
        assert!(after <= before * (1.0 + 1e-12), "seed {seed}: {before} -> {after}");
    }
}

fn singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_na(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[test]
fn svd_matches_dense_reference() {
    // Both the dense path and the block power path.
    for (seed, (p, n, k)) in [(1u64, (12, 9, 3)), (2, (30, 30, 5)), (3, (90, 70, 4)), (4, (70, 100, 6))] {
        let x = normal(p, n, seed);
        let svd = truncated_svd(&x, k).unwrap();
        let reference = singular_values(&x);
        for (i, d) in svd.d.iter().enumerate() {
            assert!((d - reference[i]).abs() < 1e-8 * reference[0], "seed {seed} σ{i}: {d} vs {}", reference[i]);
        }
        // Eckart-Young: the rank-k error is the tail energy of the spectrum.
        let tail: f64 = reference[k..].iter().map(|s| s * s).sum();
        let err = (&x - &svd.reconstruct()).mapv(|v| v * v).sum();
        assert!((err - tail).abs() < 1e-6 * tail.max(1.0), "seed {seed}: {err} vs {tail}");
    }
}

#[test]
fn qr_projection_matches_normal_equations() {
    for seed in 0..10u64 {
        let (p, _, k) = dims(seed);
        let a = normal(p, k, seed);
        let q = qr_orthonormalize(&a).unwrap();
        let an = to_na(&a);
        let hat = &an * (an.transpose() * &an).try_inverse().unwrap() * an.transpose();
        let diff = max_abs_diff_na(&q.dot(&q.t()), &hat);
        assert!(diff < 1e-10, "seed {seed}: {diff:e}");
    }
}

fn small_case() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (4usize..12, 4usize..12, 1usize..4, any::<u64>()).prop_map(|(p, n, k, s)| (p, n, k.min(p).min(n), s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_residual_is_small(n in 1usize..8, seed in any::<u64>()) {
        let m = normal(n, n, seed) + Matrix::eye(n) * (n as f64);
        let inv = invert_small(&m).unwrap();
        let residual = max_abs_diff(&m.dot(&inv), &Matrix::eye(n));
        prop_assert!(residual < 1e-10);
    }

    #[test]
    fn sonmf_descends_on_the_manifold((p, n, k, seed) in small_case()) {
        let x = uniform(p, n, 2.0, seed);
        let opts = ContinuousOptions { max_iters: 30, epsilon: 0.0, ..ContinuousOptions::with_rank(k) };
        let mut worst = 0.0f64;
        let fit = factorize_continuous_observed(&x, &opts, Init::Svd, &mut |_, f, _| {
            let d = f.t().dot(f) - Matrix::eye(f.ncols());
            worst = worst.max(d.mapv(|v| v * v).sum());
        }).unwrap();
        prop_assert!(worst < 1e-20);
        for w in fit.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        let again = factorize_continuous_observed(&x, &opts, Init::Svd, &mut |_, _, _| {}).unwrap();
        prop_assert_eq!(&fit.objective_trace, &again.objective_trace);
        prop_assert_eq!(&fit.f, &again.f);
    }

    #[test]
    fn projected_g_is_optimal_for_fixed_f((p, n, k, seed) in small_case(), scale in 1e-3f64..0.5) {
        let x = normal(p, n, seed);
        let f = orthonormal(p, k, seed ^ 1);
        let g = update_g(&x, &f).unwrap();
        let best = frobenius_objective(&x, &f, &g);
        let mut perturbed = &g + &(normal(n, k, seed ^ 2) * scale);
        perturbed.mapv_inplace(|v| v.max(0.0));
        prop_assert!(frobenius_objective(&x, &f, &perturbed) >= best - 1e-9 * best.max(1.0));
    }
}
