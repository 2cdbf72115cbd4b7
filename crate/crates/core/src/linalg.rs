//! Dense matrix primitives shared by every factorizer.
//!
//! Matrices are plain `ndarray::Array2<f64>` values. The routines here cover
//! what the solvers need and nothing more: a truncated SVD (one-sided Jacobi
//! for small problems, block subspace iteration with Rayleigh-Ritz extraction
//! otherwise), Householder QR for orthonormal bases, a pivoted Gauss-Jordan
//! inverse for the small inner systems, and seeded random generators.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` matrix.
pub type Matrix = Array2<f64>;

/// Problems whose smaller side is at most this size use the dense Jacobi SVD.
pub const DENSE_SVD_CUTOFF: usize = 64;
/// Stopping tolerance on the change of the top-k singular values, relative to the largest.
pub const SVD_TOLERANCE: f64 = 1e-9;
pub const SVD_MAX_SWEEPS: usize = 1000;
/// Condition estimates above this make [`invert_small`] fail.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative pivot threshold for declaring a QR input rank deficient.
pub const QR_RANK_TOLERANCE: f64 = 1e-12;

const SUBSPACE_SEED: u64 = 0x5eed_5bd0;
const JACOBI_MAX_SWEEPS: usize = 80;

/// Top-k singular triplets `X ≈ U diag(d) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdTruncation {
    /// p×k, orthonormal columns.
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub d: Array1<f64>,
    /// n×k, orthonormal columns.
    pub v: Matrix,
}

impl SvdTruncation {
    pub fn reconstruct(&self) -> Matrix {
        let scaled = &self.u * &self.d.view().insert_axis(Axis(0));
        scaled.dot(&self.v.t())
    }
}

/// Distribution used by [`random_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RandomLaw {
    Uniform {
        low: f64,
        high: f64,
    },
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Orthonormal columns from the QR factor of a standard normal draw.
    Orthonormal,
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for ((row, col), v) in m.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

pub fn frobenius_sq(m: &Matrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// `‖FᵀF − I‖²_F`.
pub fn orthogonality_residual(f: &Matrix) -> f64 {
    let gram = f.t().dot(f);
    gram.indexed_iter()
        .map(|((i, j), &v)| {
            let d = if i == j { v - 1.0 } else { v };
            d * d
        })
        .sum()
}

/// Entrywise `max(x, floor)`.
pub fn clamp_below(m: &mut Matrix, floor: f64) {
    m.mapv_inplace(|v| if v > floor { v } else { floor });
}

/// Truncated SVD returning the `k` leading singular triplets.
///
/// Each left singular vector is sign-normalised so that its largest-magnitude
/// entry is positive.
pub fn truncated_svd(x: &Matrix, k: usize) -> Result<SvdTruncation> {
    let (p, n) = x.dim();
    if k == 0 || k > p.min(n) {
        return Err(Error::RankOutOfRange { k, rows: p, cols: n });
    }
    ensure_finite(x)?;
    let mut svd = if p.min(n) <= DENSE_SVD_CUTOFF { dense_svd(x, k) } else { subspace_svd(x, k) };
    normalize_signs(&mut svd);
    Ok(svd)
}

fn dense_svd(x: &Matrix, k: usize) -> SvdTruncation {
    let (p, n) = x.dim();
    if p <= n {
        // X = Jᵀ S D
        let rs = jacobi_rows(x.clone());
        let u = select_columns(&rs.rotation.t().to_owned(), &rs.order[..k]);
        let v = completed_directions(&rs, k);
        SvdTruncation { u, d: rs.values_for(k), v }
    } else {
        // Xᵀ = Jᵀ S D, so X = Dᵀ S J
        let rs = jacobi_rows(x.t().as_standard_layout().into_owned());
        let u = completed_directions(&rs, k);
        let v = select_columns(&rs.rotation.t().to_owned(), &rs.order[..k]);
        SvdTruncation { u, d: rs.values_for(k), v }
    }
}

fn subspace_svd(x: &Matrix, k: usize) -> SvdTruncation {
    let (_, n) = x.dim();
    let width = (k + k.max(10)).min(x.nrows().min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(SUBSPACE_SEED);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let omega = Matrix::from_shape_simple_fn((n, width), || normal.sample(&mut rng));
    let mut q = householder_qr(&x.dot(&omega)).q;

    let mut previous: Option<Array1<f64>> = None;
    let mut sweep = 0;
    loop {
        let qz = householder_qr(&x.t().dot(&q)).q;
        q = householder_qr(&x.dot(&qz)).q;
        let b = q.t().dot(x);
        let rs = jacobi_rows(b);
        let values = rs.values_for(k);
        sweep += 1;
        let converged = previous.as_ref().is_some_and(|prev| {
            let scale = values[0].max(f64::MIN_POSITIVE);
            prev.iter().zip(values.iter()).all(|(a, b)| (a - b).abs() <= SVD_TOLERANCE * scale)
        });
        if converged || sweep >= SVD_MAX_SWEEPS {
            if !converged {
                log::warn!("truncated_svd: subspace iteration hit {SVD_MAX_SWEEPS} sweeps");
            }
            let left = select_columns(&rs.rotation.t().to_owned(), &rs.order[..k]);
            let u = q.dot(&left);
            let v = completed_directions(&rs, k);
            return SvdTruncation { u, d: values, v };
        }
        previous = Some(values);
    }
}

fn normalize_signs(svd: &mut SvdTruncation) {
    for j in 0..svd.u.ncols() {
        let mut col_u = svd.u.column_mut(j);
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &v in col_u.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col_u.mapv_inplace(|v| -v);
            svd.v.column_mut(j).mapv_inplace(|v| -v);
        }
    }
}

/// Output of the one-sided Jacobi sweep over the rows of `W`:
/// `W = rotationᵀ · diag(norms) · directions`.
struct RowSvd {
    rotation: Matrix,
    norms: Vec<f64>,
    directions: Matrix,
    /// Row indices sorted by decreasing norm.
    order: Vec<usize>,
}

impl RowSvd {
    fn values_for(&self, k: usize) -> Array1<f64> {
        self.order[..k].iter().map(|&i| self.norms[i]).collect()
    }
}

/// One-sided (Hestenes) Jacobi orthogonalisation of the rows of `w`.
fn jacobi_rows(mut w: Matrix) -> RowSvd {
    let r = w.nrows();
    let mut rotation = Matrix::eye(r);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..r {
            for j in (i + 1)..r {
                let (alpha, beta, gamma) = {
                    let wi = w.row(i);
                    let wj = w.row(j);
                    (wi.dot(&wi), wj.dot(&wj), wi.dot(&wj))
                };
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, i, j, c, s);
                rotate_rows(&mut rotation, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w.rows().into_iter().map(|row| row.dot(&row).sqrt()).collect();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let mut directions = w;
    for (i, mut row) in directions.rows_mut().into_iter().enumerate() {
        if norms[i] > 0.0 {
            row /= norms[i];
        }
    }
    RowSvd { rotation, norms, directions, order }
}

fn rotate_rows(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    let (mut a, mut b) = m.multi_slice_mut((ndarray::s![i, ..], ndarray::s![j, ..]));
    ndarray::Zip::from(&mut a).and(&mut b).for_each(|x, y| {
        let (xa, yb) = (*x, *y);
        *x = c * xa - s * yb;
        *y = s * xa + c * yb;
    });
}

fn select_columns(m: &Matrix, idx: &[usize]) -> Matrix {
    m.select(Axis(1), idx)
}

/// Leading `k` normalised directions as columns, with zero-norm directions
/// replaced by an orthonormal completion.
fn completed_directions(rs: &RowSvd, k: usize) -> Matrix {
    let dim = rs.directions.ncols();
    let scale = rs.norms.iter().cloned().fold(0.0, f64::max);
    let mut out = Matrix::zeros((dim, k));
    let mut filled: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut pending = Vec::new();
    for (slot, &i) in rs.order[..k].iter().enumerate() {
        if rs.norms[i] > scale * 1e-14 && rs.norms[i] > 0.0 {
            let v = rs.directions.row(i).to_owned();
            out.column_mut(slot).assign(&v);
            filled.push(v);
        } else {
            pending.push(slot);
        }
    }
    let mut candidate = 0;
    for slot in pending {
        while candidate < dim {
            let mut e = Array1::<f64>::zeros(dim);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for f in &filled {
                    let proj = f.dot(&e);
                    e.scaled_add(-proj, f);
                }
            }
            let norm = e.dot(&e).sqrt();
            if norm > 0.5 {
                e /= norm;
                out.column_mut(slot).assign(&e);
                filled.push(e);
                break;
            }
        }
    }
    out
}

pub(crate) struct HouseholderQr {
    /// Thin Q with columns signed so the diagonal of R is nonnegative.
    pub q: Matrix,
    pub r_diag: Vec<f64>,
}

/// Householder QR of an m×n matrix with m ≥ n. Always returns orthonormal
/// columns, even for rank-deficient input.
pub(crate) fn householder_qr(a: &Matrix) -> HouseholderQr {
    let (m, n) = a.dim();
    debug_assert!(m >= n, "householder_qr needs rows >= cols");
    // Work on columns stored as contiguous rows.
    let mut at = a.t().as_standard_layout().into_owned();
    let mut reflectors: Vec<Option<Array1<f64>>> = Vec::with_capacity(n);
    let mut r_diag = vec![0.0; n];
    for j in 0..n {
        let x = at.slice(ndarray::s![j, j..]).to_owned();
        let norm = x.dot(&x).sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] > 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.dot(&v).sqrt();
        if vnorm == 0.0 {
            r_diag[j] = alpha;
            reflectors.push(None);
            continue;
        }
        v /= vnorm;
        for c in j..n {
            let mut col = at.slice_mut(ndarray::s![c, j..]);
            let proj = 2.0 * v.dot(&col);
            col.scaled_add(-proj, &v);
        }
        r_diag[j] = at[[j, j]];
        reflectors.push(Some(v));
    }
    let mut qt = Matrix::zeros((n, m));
    for c in 0..n {
        qt[[c, c]] = 1.0;
    }
    for j in (0..n).rev() {
        if let Some(v) = &reflectors[j] {
            for c in 0..n {
                let mut col = qt.slice_mut(ndarray::s![c, j..]);
                let proj = 2.0 * v.dot(&col);
                col.scaled_add(-proj, v);
            }
        }
    }
    for (j, d) in r_diag.iter_mut().enumerate() {
        if *d < 0.0 {
            *d = -*d;
            qt.row_mut(j).mapv_inplace(|v| -v);
        }
    }
    HouseholderQr { q: qt.t().as_standard_layout().into_owned(), r_diag }
}

/// Orthonormal basis of the column space of a full-column-rank `a`.
pub fn qr_orthonormalize(a: &Matrix) -> Result<Matrix> {
    let (m, n) = a.dim();
    if n == 0 || m == 0 {
        return Err(Error::Empty("qr_orthonormalize input".into()));
    }
    if n > m {
        return Err(Error::Shape(format!("qr_orthonormalize needs cols <= rows, got {m}x{n}")));
    }
    ensure_finite(a)?;
    let largest = a.columns().into_iter().map(|c| c.dot(&c).sqrt()).fold(0.0, f64::max);
    let qr = householder_qr(a);
    let threshold = QR_RANK_TOLERANCE * largest;
    if let Some(&pivot) = qr.r_diag.iter().find(|d| d.abs() <= threshold) {
        return Err(Error::RankDeficient { pivot, threshold });
    }
    Ok(qr.q)
}

/// Inverse of a small square matrix by Gauss-Jordan elimination with partial
/// pivoting. Fails when the 1-norm condition estimate exceeds [`MAX_CONDITION`].
pub fn invert_small(m: &Matrix) -> Result<Matrix> {
    let inv = gauss_jordan(m)?;
    let condition = norm_one(m) * norm_one(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::Singular { condition });
    }
    Ok(inv)
}

/// Gauss-Jordan inverse without the conditioning guard.
pub(crate) fn gauss_jordan(m: &Matrix) -> Result<Matrix> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Shape(format!("cannot invert a {r}x{c} matrix")));
    }
    if r == 0 {
        return Err(Error::Empty("invert_small input".into()));
    }
    let mut a = m.clone();
    let mut inv = Matrix::eye(r);
    for col in 0..r {
        let mut pivot_row = col;
        let mut best = a[[col, col]].abs();
        for row in (col + 1)..r {
            if a[[row, col]].abs() > best {
                best = a[[row, col]].abs();
                pivot_row = row;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return Err(Error::Singular { condition: f64::INFINITY });
        }
        if pivot_row != col {
            for k in 0..r {
                a.swap([col, k], [pivot_row, k]);
                inv.swap([col, k], [pivot_row, k]);
            }
        }
        let p = a[[col, col]];
        a.row_mut(col).mapv_inplace(|v| v / p);
        inv.row_mut(col).mapv_inplace(|v| v / p);
        for row in 0..r {
            if row == col {
                continue;
            }
            let factor = a[[row, col]];
            if factor == 0.0 {
                continue;
            }
            for k in 0..r {
                a[[row, k]] -= factor * a[[col, k]];
                inv[[row, k]] -= factor * inv[[col, k]];
            }
        }
    }
    Ok(inv)
}

fn norm_one(m: &Matrix) -> f64 {
    m.columns().into_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Seeded random matrix. The same `(rows, cols, law, seed)` always yields the
/// same matrix.
pub fn random_matrix(rows: usize, cols: usize, law: RandomLaw, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_matrix_from(&mut rng, rows, cols, law)
}

/// Like [`random_matrix`] but draws from a caller-owned generator, filling
/// entries in row-major order.
pub fn random_matrix_from<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, law: RandomLaw) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!("dimensions must be positive, got {rows}x{cols}")));
    }
    match law {
        RandomLaw::Uniform { low, high } => {
            if !(low.is_finite() && high.is_finite() && low < high) {
                return Err(Error::InvalidParameter(format!("uniform({low}, {high})")));
            }
            let dist = Uniform::new(low, high).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng)))
        }
        RandomLaw::Normal { mean, sd } => {
            if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) {
                return Err(Error::InvalidParameter(format!("normal({mean}, {sd})")));
            }
            let dist = Normal::new(mean, sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(Matrix::from_shape_simple_fn((rows, cols), || dist.sample(rng)))
        }
        RandomLaw::Orthonormal => {
            if cols > rows {
                return Err(Error::InvalidParameter(format!("orthonormal law needs cols <= rows, got {rows}x{cols}")));
            }
            let draw = random_matrix_from(rng, rows, cols, RandomLaw::Normal { mean: 0.0, sd: 1.0 })?;
            Ok(householder_qr(&draw).q)
        }
    }
}
