//! Dense decompositions and subspace geometry.
//!
//! Everything here is pure Rust on top of `ndarray`'s matrix products. The
//! decompositions are Jacobi methods: a one-sided Jacobi SVD (high relative
//! accuracy, no LAPACK linkage) and a cyclic two-sided Jacobi eigensolver
//! for symmetric, possibly indefinite matrices. Problem sizes in this
//! library are small (matrices up to a few hundred rows on the short side),
//! where Jacobi is plenty fast and bit-deterministic.

pub mod special;

pub use special::{chi2_cdf, chi2_quantile, gaussian_cdf, gaussian_quantile};

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2};

/// Pairwise-orthogonality threshold for one-sided Jacobi sweeps.
const SVD_TOL: f64 = 1e-14;
const SVD_MAX_SWEEPS: usize = 64;
/// Off-diagonal reduction target for the symmetric eigensolver.
const EIG_TOL: f64 = 1e-14;
const EIG_MAX_SWEEPS: usize = 48;

/// Rank-`r` truncated singular value decomposition `m ~ U diag(sigma) V^T`.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// Left singular vectors, `rows x r`, orthonormal columns.
    pub u: Array2<f64>,
    /// Leading singular values, non-increasing.
    pub sigma: Array1<f64>,
    /// Right singular vectors, `cols x r`, orthonormal columns.
    pub v: Array2<f64>,
}

/// One-sided Jacobi SVD of a matrix with `rows >= cols`. Returns
/// `(u, sigma, v)` with `u` `rows x cols`, `sigma` descending, `v` square.
/// Columns whose singular value underflows to zero get an orthonormal
/// completion in `u` so the basis stays usable.
fn one_sided_jacobi(mut b: Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (rows, cols) = b.dim();
    debug_assert!(rows >= cols);
    let mut v = Array2::<f64>::eye(cols);
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in (i + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0f64, 0.0f64, 0.0f64);
                for r in 0..rows {
                    let (x, y) = (b[[r, i]], b[[r, j]]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma.abs() <= SVD_TOL * (alpha * beta).sqrt() || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..rows {
                    let (x, y) = (b[[r, i]], b[[r, j]]);
                    b[[r, i]] = c * x - s * y;
                    b[[r, j]] = s * x + c * y;
                }
                for r in 0..cols {
                    let (x, y) = (v[[r, i]], v[[r, j]]);
                    v[[r, i]] = c * x - s * y;
                    v[[r, j]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols)
        .map(|c| b.column(c).dot(&b.column(c)).sqrt())
        .collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut sigma = Array1::<f64>::zeros(cols);
    let mut vs = Array2::<f64>::zeros((cols, cols));
    let mut zero_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sigma[dst] = norms[src];
        vs.column_mut(dst).assign(&v.column(src));
        if norms[src] > 0.0 {
            let scaled = b.column(src).mapv(|x| x / norms[src]);
            u.column_mut(dst).assign(&scaled);
        } else {
            zero_cols.push(dst);
        }
    }
    // Orthonormal completion for exactly-zero singular values.
    for dst in zero_cols {
        'candidate: for e in 0..rows {
            let mut cand = Array1::<f64>::zeros(rows);
            cand[e] = 1.0;
            for c in 0..cols {
                if c == dst {
                    continue;
                }
                let proj = u.column(c).dot(&cand);
                let col = u.column(c).to_owned();
                cand.scaled_add(-proj, &col);
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 0.5 {
                u.column_mut(dst).assign(&cand.mapv(|x| x / norm));
                break 'candidate;
            }
        }
    }
    (u, sigma, vs)
}

/// Economy SVD with all `min(rows, cols)` triplets, singular values
/// descending. Wide matrices are handled by factoring the transpose.
pub(crate) fn svd_full(m: &ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (rows, cols) = m.dim();
    if rows >= cols {
        one_sided_jacobi(m.to_owned())
    } else {
        let (v, sigma, u) = one_sided_jacobi(m.t().to_owned());
        (u, sigma, v)
    }
}

/// All singular values of `m`, non-increasing.
pub fn singular_values(m: &Array2<f64>) -> Vec<f64> {
    svd_full(&m.view()).1.to_vec()
}

/// Leading-`r` truncated SVD. Errors if `r` is out of range or the matrix
/// has rank below `r` (a zero singular value inside the truncation).
pub fn truncated_svd(m: &ArrayView2<f64>, r: usize) -> Result<TruncatedSvd> {
    let (rows, cols) = m.dim();
    let max_r = rows.min(cols);
    if r == 0 || r > max_r {
        return Err(Error::InvalidArgument(format!(
            "truncation rank {r} out of range 1..={max_r} for a {rows}x{cols} matrix"
        )));
    }
    let (u, sigma, v) = svd_full(m);
    if sigma[r - 1] <= 0.0 {
        return Err(Error::Degenerate(format!(
            "matrix rank is below the requested truncation rank {r}"
        )));
    }
    Ok(TruncatedSvd {
        u: u.slice(ndarray::s![.., ..r]).to_owned(),
        sigma: sigma.slice(ndarray::s![..r]).to_owned(),
        v: v.slice(ndarray::s![.., ..r]).to_owned(),
    })
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns `(values, vectors)` with eigenvalues sorted by algebraic value,
/// largest first, and eigenvectors in the matching columns. The input may
/// be indefinite.
pub(crate) fn jacobi_eigh(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let fro = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = EIG_TOL * fro.max(f64::MIN_POSITIVE);

    for _ in 0..EIG_MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= stop / (n as f64) {
                    continue;
                }
                let tau = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..n {
                    let (x, y) = (m[[r, p]], m[[r, q]]);
                    m[[r, p]] = c * x - s * y;
                    m[[r, q]] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (m[[p, r]], m[[q, r]]);
                    m[[p, r]] = c * x - s * y;
                    m[[q, r]] = s * x + c * y;
                }
                for r in 0..n {
                    let (x, y) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = c * x - s * y;
                    v[[r, q]] = s * x + c * y;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).expect("finite eigenvalues"));
    let mut vals = Array1::<f64>::zeros(n);
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = diag[src];
        vecs.column_mut(dst).assign(&v.column(src));
    }
    (vals, vecs)
}

/// Matrix sign `sgn(m) = U V^T` from the SVD `m = U diag(sigma) V^T`: the
/// nearest orthogonal matrix. Errors on singular input, where the sign is
/// not unique.
pub fn matrix_sign(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::Shape(format!(
            "matrix sign needs a square matrix, got {rows}x{cols}"
        )));
    }
    let (u, sigma, v) = svd_full(&m.view());
    let smax = sigma[0];
    let smin = sigma[sigma.len() - 1];
    if smax <= 0.0 || smin <= (rows as f64) * f64::EPSILON * smax {
        return Err(Error::Degenerate(
            "matrix sign of a (numerically) singular matrix".into(),
        ));
    }
    Ok(u.dot(&v.t()))
}

/// Largest principal angle sine between the column spans of two orthonormal
/// bases of equal shape. Equal to `sqrt(1 - sigma_min(u1^T u2)^2)`, but
/// computed as the spectral norm of the projection residual
/// `(I - u1 u1^T) u2`, which stays accurate for nearly-aligned subspaces
/// where the direct formula loses half the significant digits.
pub fn sin_theta(u1: &Array2<f64>, u2: &Array2<f64>) -> Result<f64> {
    if u1.dim() != u2.dim() {
        return Err(Error::Shape(format!(
            "sin-theta distance needs equal shapes, got {:?} and {:?}",
            u1.dim(),
            u2.dim()
        )));
    }
    if u1.nrows() < u1.ncols() {
        return Err(Error::Shape(format!(
            "basis is {}x{}; needs at least as many rows as columns",
            u1.nrows(),
            u1.ncols()
        )));
    }
    let resid = u2 - &u1.dot(&u1.t().dot(u2));
    let sigma = svd_full(&resid.view()).1;
    Ok(sigma[0].min(1.0))
}

/// Orthogonal Procrustes alignment: the rotation `W = sgn(u^T uhat)`
/// minimizing `||uhat - u W||_F` over orthogonal `W`. `uhat` is the
/// estimated basis, `u` the reference. Errors when the bases are too far
/// apart for the alignment to be unique (singular cross-Gram).
pub fn align(uhat: &Array2<f64>, u: &Array2<f64>) -> Result<Array2<f64>> {
    if uhat.dim() != u.dim() {
        return Err(Error::Shape(format!(
            "alignment needs equal shapes, got {:?} and {:?}",
            uhat.dim(),
            u.dim()
        )));
    }
    matrix_sign(&u.t().dot(uhat))
}

/// Inverse of a symmetric positive-definite matrix through its
/// eigendecomposition. Eigenvalues at or below `rel_floor * lambda_max` make
/// the matrix numerically singular and raise a degeneracy error.
pub(crate) fn floored_spd_inverse(a: &Array2<f64>, rel_floor: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = jacobi_eigh(a);
    let lmax = vals[0];
    if lmax <= 0.0 {
        return Err(Error::Degenerate(
            "covariance matrix has no positive eigenvalues".into(),
        ));
    }
    let floor = rel_floor * lmax;
    let n = vals.len();
    if vals[n - 1] <= floor {
        return Err(Error::Degenerate(format!(
            "covariance matrix is numerically singular (eigenvalue {:.3e} <= floor {:.3e})",
            vals[n - 1],
            floor
        )));
    }
    let mut inv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        let col = vecs.column(c);
        let w = 1.0 / vals[c];
        for i in 0..n {
            for j in 0..n {
                inv[[i, j]] += w * col[i] * col[j];
            }
        }
    }
    Ok(inv)
}

/// Inverse square root of a symmetric positive-definite matrix, with the
/// same eigenvalue floor policy as [`floored_spd_inverse`].
pub(crate) fn floored_spd_inverse_sqrt(a: &Array2<f64>, rel_floor: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = jacobi_eigh(a);
    let lmax = vals[0];
    if lmax <= 0.0 {
        return Err(Error::Degenerate(
            "covariance matrix has no positive eigenvalues".into(),
        ));
    }
    let floor = rel_floor * lmax;
    let n = vals.len();
    if vals[n - 1] <= floor {
        return Err(Error::Degenerate(format!(
            "covariance matrix is numerically singular (eigenvalue {:.3e} <= floor {:.3e})",
            vals[n - 1],
            floor
        )));
    }
    let mut inv = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        let col = vecs.column(c);
        let w = 1.0 / vals[c].sqrt();
        for i in 0..n {
            for j in 0..n {
                inv[[i, j]] += w * col[i] * col[j];
            }
        }
    }
    Ok(inv)
}

/// Orthonormalize the columns of `m` in place by modified Gram-Schmidt with
/// one reorthogonalization pass. Errors if a column collapses (rank
/// deficiency).
pub(crate) fn orthonormalize_columns(m: &mut Array2<f64>) -> Result<()> {
    let (_, cols) = m.dim();
    for c in 0..cols {
        for _pass in 0..2 {
            for prev in 0..c {
                let proj = m.column(c).dot(&m.column(prev));
                let prev_col = m.column(prev).to_owned();
                m.column_mut(c).scaled_add(-proj, &prev_col);
            }
        }
        let norm = m.column(c).dot(&m.column(c)).sqrt();
        if norm <= 1e-300 {
            return Err(Error::Degenerate(
                "rank-deficient matrix in orthonormalization".into(),
            ));
        }
        m.column_mut(c).mapv_inplace(|x| x / norm);
    }
    Ok(())
}

/// Max-abs deviation of `u^T u` from the identity; 0 for orthonormal columns.
pub(crate) fn orthonormality_defect(u: &ArrayView2<f64>) -> f64 {
    let g = u.t().dot(u);
    let r = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..r {
        for j in 0..r {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[[i, j]] - target).abs());
        }
    }
    worst
}
