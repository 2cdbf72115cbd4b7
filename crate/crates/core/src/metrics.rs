//! Evaluation quantities for fitted factorizations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, gauss_jordan, orthogonality_residual, qr_orthonormalize, Matrix};
use crate::result::{FactorizationResult, Method};
use crate::sonmf::binary::{binary_cost, sigmoid};
use crate::sonmf::continuous::check_conformable;
use crate::sonmf::frobenius_objective;

/// Entries at or below this magnitude count as zero.
pub const SPARSITY_THRESHOLD: f64 = 1e-10;
/// Relative ridge used when a subspace basis is rank deficient.
pub const SUBSPACE_RIDGE: f64 = 1e-12;
/// Decrease threshold on the per-entry trace used to count iterations.
pub const ITERATION_THRESHOLD: f64 = 1e-4;

/// `‖X − FGᵀ‖²_F / (n·p)`.
pub fn average_residual(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<f64> {
    check_conformable(x, f, g)?;
    Ok(frobenius_objective(x, f, g) / x.len() as f64)
}

/// `‖FᵀF − I‖²_F`.
pub fn orthogonal_residual(f: &Matrix) -> f64 {
    orthogonality_residual(f)
}

/// Mean negative log-likelihood of binary X under `σ(FGᵀ)`.
pub fn mean_cost(x: &Matrix, f: &Matrix, g: &Matrix) -> Result<f64> {
    Ok(binary_cost(x, f, g)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceError {
    pub value: f64,
    /// A basis was rank deficient and the projector was ridge-regularised.
    pub regularized: bool,
}

/// Squared distance `‖H₁ − H₂‖²_F` between the projectors onto the column
/// spaces of `a` and `b`. The column counts may differ.
pub fn subspace_error(a: &Matrix, b: &Matrix) -> Result<SubspaceError> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!("bases have {} and {} rows", a.nrows(), b.nrows())));
    }
    if let (Ok(qa), Ok(qb)) = (qr_orthonormalize(a), qr_orthonormalize(b)) {
        let cross = frobenius_sq(&qa.t().dot(&qb));
        let value = (qa.ncols() + qb.ncols()) as f64 - 2.0 * cross;
        return Ok(SubspaceError { value: value.max(0.0), regularized: false });
    }
    // H = A (AᵀA + λI)⁻¹ Aᵀ, so every trace reduces to k×k products.
    let (ma, mb) = (ridged_inverse(a)?, ridged_inverse(b)?);
    let ata = a.t().dot(a);
    let btb = b.t().dot(b);
    let atb = a.t().dot(b);
    // tr(H_a H_b) = tr(Ma AᵀB Mb BᵀA).
    let left = ma.dot(&atb);
    let right = mb.dot(&atb.t());
    let cross = trace_product(&left, &right);
    // tr(H²) = tr((M AᵀA)²) for a regularised projector.
    let sq_a = trace_product(&ma.dot(&ata), &ma.dot(&ata));
    let sq_b = trace_product(&mb.dot(&btb), &mb.dot(&btb));
    Ok(SubspaceError { value: (sq_a + sq_b - 2.0 * cross).max(0.0), regularized: true })
}

fn ridged_inverse(a: &Matrix) -> Result<Matrix> {
    let mut gram = a.t().dot(a);
    let mean_diag = gram.diag().sum() / gram.nrows() as f64;
    let lambda = SUBSPACE_RIDGE * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    gram.diag_mut().mapv_inplace(|d| d + lambda);
    gauss_jordan(&gram)
}

/// `tr(A B)` for square A, B.
fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    a.outer_iter().enumerate().map(|(i, row)| row.dot(&b.column(i))).sum()
}

/// Percentage of entries with magnitude at most [`SPARSITY_THRESHOLD`].
pub fn sparsity_pct(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let zeros = m.iter().filter(|v| v.abs() <= SPARSITY_THRESHOLD).count();
    100.0 * zeros as f64 / m.len() as f64
}

/// `‖P − σ(FGᵀ)‖²_F`.
pub fn probability_error(p_true: &Matrix, f: &Matrix, g: &Matrix) -> Result<f64> {
    check_conformable(p_true, f, g)?;
    if let Some(((row, col), &value)) = p_true.indexed_iter().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!("probability ({row}, {col}) = {value} outside [0, 1]")));
    }
    let theta = f.dot(&g.t());
    Ok(theta.iter().zip(p_true.iter()).map(|(&t, &p)| (p - sigmoid(t)).powi(2)).sum())
}

/// First iteration `i ≥ 1` with `0 ≤ trace[i−1] − trace[i] ≤ threshold`.
pub fn iterations_to_threshold(trace: &[f64], threshold: f64) -> Option<usize> {
    trace.windows(2).position(|w| (0.0..=threshold).contains(&(w[0] - w[1]))).map(|i| i + 1)
}

/// First iteration whose value is at or below `level`.
pub fn iterations_to_level(trace: &[f64], level: f64) -> Option<usize> {
    trace.iter().position(|&v| v <= level)
}

/// Ground truth a fit can be scored against.
#[derive(Debug, Clone, Copy, Default)]
pub struct Truth<'a> {
    pub f: Option<&'a Matrix>,
    pub g: Option<&'a Matrix>,
    pub p: Option<&'a Matrix>,
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub average_residual: Option<f64>,
    pub mean_cost: Option<f64>,
    pub orthogonal_residual: f64,
    pub eps_f: Option<f64>,
    pub eps_g: Option<f64>,
    pub eps_p: Option<f64>,
    pub subspace_regularized: bool,
    pub sparsity_f_pct: f64,
    pub sparsity_g_pct: f64,
    pub iterations: usize,
    pub iterations_to_threshold: Option<usize>,
    pub elapsed_seconds: f64,
}

impl MetricsRecord {
    pub fn evaluate(x: &Matrix, fit: &FactorizationResult, truth: Truth<'_>) -> Result<Self> {
        let (f, g) = (&fit.f, &fit.g);
        let (average_residual, mean_cost) = if fit.method.is_binary() {
            (None, Some(mean_cost(x, f, g)?))
        } else {
            (Some(average_residual(x, f, g)?), None)
        };
        let mut regularized = false;
        let mut subspace = |t: Option<&Matrix>, est: &Matrix| -> Result<Option<f64>> {
            t.map(|t| {
                let e = subspace_error(t, est)?;
                regularized |= e.regularized;
                Ok(e.value)
            })
            .transpose()
        };
        let eps_f = subspace(truth.f, f)?;
        let eps_g = subspace(truth.g, g)?;
        let eps_p = truth.p.map(|p| probability_error(p, f, g)).transpose()?;
        Ok(MetricsRecord {
            method: fit.method,
            average_residual,
            mean_cost,
            orthogonal_residual: orthogonal_residual(f),
            eps_f,
            eps_g,
            eps_p,
            subspace_regularized: regularized,
            sparsity_f_pct: sparsity_pct(f),
            sparsity_g_pct: sparsity_pct(g),
            iterations: fit.iterations,
            iterations_to_threshold: iterations_to_threshold(&fit.mean_trace(), ITERATION_THRESHOLD),
            elapsed_seconds: fit.elapsed_seconds,
        })
    }

    /// Average residual for continuous fits, mean cost for binary ones.
    pub fn fit_value(&self) -> f64 {
        self.average_residual.or(self.mean_cost).unwrap_or(f64::NAN)
    }
}

/// Flat CSV with a header row, one line per record. Missing values are
/// empty fields.
pub fn records_to_csv(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}
