//! Dense order-3 tensors, matricization, mode products, and Tucker algebra.
//!
//! A tensor is an `ndarray::Array3<f64>` in standard C (row-major) layout:
//! for index (i, j, k) the last index k varies fastest. All indices and
//! modes are 0-based throughout the library; the CLI and file formats
//! translate from 1-based exactly once at the boundary.
//!
//! Matricization unfolds a tensor into a matrix one mode at a time. The
//! column ordering is fixed cyclically: unfolding along mode m puts entry
//! (i0, i1, i2) into row `idx[m]` and column `idx[m+1] * dim[m+2] + idx[m+2]`
//! (mode arithmetic mod 3). Under this convention mode-0 matricization of a
//! C-layout tensor is a plain reshape, and
//! `matricize(mode_product chain) = A_m * matricize(t) * kron(A_{m+1}, A_{m+2})^T`.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

/// Dense order-3 tensor in canonical C layout.
pub type Tensor3 = Array3<f64>;

/// Cyclic successor of a mode: 0 -> 1 -> 2 -> 0.
#[inline]
pub(crate) fn next_mode(mode: usize) -> usize {
    (mode + 1) % 3
}

fn check_mode(mode: usize) -> Result<()> {
    if mode > 2 {
        return Err(Error::InvalidArgument(format!(
            "mode must be 0, 1, or 2, got {mode}"
        )));
    }
    Ok(())
}

/// Unfold `t` along `mode` into a `dim[mode] x (product of other dims)`
/// matrix with the cyclic column convention described in the module docs.
pub fn matricize(t: &Tensor3, mode: usize) -> Result<Array2<f64>> {
    check_mode(mode)?;
    let d = t.dim();
    let dims = [d.0, d.1, d.2];
    let (m1, m2) = (next_mode(mode), next_mode(mode + 1));
    let rows = dims[mode];
    let cols = dims[m1] * dims[m2];
    let mut out = Array2::<f64>::zeros((rows, cols));
    for ((i, j, k), &v) in t.indexed_iter() {
        let idx = [i, j, k];
        out[[idx[mode], idx[m1] * dims[m2] + idx[m2]]] = v;
    }
    Ok(out)
}

/// Inverse of [`matricize`]: fold a matrix back into a tensor with the given
/// dimensions. `m` must be `dims[mode] x (dims[m+1] * dims[m+2])`.
pub fn dematricize(m: &Array2<f64>, mode: usize, dims: [usize; 3]) -> Result<Tensor3> {
    check_mode(mode)?;
    let (m1, m2) = (next_mode(mode), next_mode(mode + 1));
    let expect = (dims[mode], dims[m1] * dims[m2]);
    if m.dim() != expect {
        return Err(Error::Shape(format!(
            "dematricize mode {mode} expects {expect:?} for dims {dims:?}, got {:?}",
            m.dim()
        )));
    }
    let mut out = Tensor3::zeros((dims[0], dims[1], dims[2]));
    for ((i, j, k), v) in out.indexed_iter_mut() {
        let idx = [i, j, k];
        *v = m[[idx[mode], idx[m1] * dims[m2] + idx[m2]]];
    }
    Ok(out)
}

/// Multiply `t` along `mode` by the matrix `a`: contracts `a`'s columns
/// against that mode, so the output has `a.nrows()` in place of `dims[mode]`.
pub fn mode_product(t: &Tensor3, a: &ArrayView2<f64>, mode: usize) -> Result<Tensor3> {
    check_mode(mode)?;
    let d = t.dim();
    let mut dims = [d.0, d.1, d.2];
    if a.ncols() != dims[mode] {
        return Err(Error::Shape(format!(
            "mode-{mode} product: matrix has {} columns, tensor dimension is {}",
            a.ncols(),
            dims[mode]
        )));
    }
    let unfolded = matricize(t, mode)?;
    let product = a.dot(&unfolded);
    dims[mode] = a.nrows();
    dematricize(&product, mode, dims)
}

/// Flatten in canonical order (lexicographic in (i, j, k), k fastest).
/// Identical to the rows of the mode-0 matricization laid end to end.
pub fn vectorize(t: &Tensor3) -> Array1<f64> {
    Array1::from_iter(t.iter().copied())
}

/// Orthonormal Tucker factorization: a small core plus one factor with
/// orthonormal columns per mode. `factors[m]` has shape
/// `(outer dim m, core dim m)`.
#[derive(Debug, Clone)]
pub struct TuckerFactors {
    pub core: Tensor3,
    pub factors: [Array2<f64>; 3],
}

/// Max-abs deviation of `u^T u` from the identity.
fn orthonormality_defect(u: &Array2<f64>) -> f64 {
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

impl TuckerFactors {
    /// Validating constructor: shapes must agree and every factor must have
    /// orthonormal columns to within 1e-10 max-abs.
    pub fn new(core: Tensor3, factors: [Array2<f64>; 3]) -> Result<Self> {
        let d = core.dim();
        let core_dims = [d.0, d.1, d.2];
        for (m, u) in factors.iter().enumerate() {
            if u.ncols() != core_dims[m] {
                return Err(Error::Shape(format!(
                    "factor {m} has {} columns but core dimension {m} is {}",
                    u.ncols(),
                    core_dims[m]
                )));
            }
            if u.nrows() < u.ncols() {
                return Err(Error::Shape(format!(
                    "factor {m} is {}x{}; needs at least as many rows as columns",
                    u.nrows(),
                    u.ncols()
                )));
            }
            let defect = orthonormality_defect(u);
            if defect > 1e-10 {
                return Err(Error::InvalidArgument(format!(
                    "factor {m} columns are not orthonormal (defect {defect:.3e})"
                )));
            }
        }
        Ok(Self { core, factors })
    }

    /// Outer dimensions (p0, p1, p2) of the composed tensor.
    pub fn outer_dims(&self) -> [usize; 3] {
        [
            self.factors[0].nrows(),
            self.factors[1].nrows(),
            self.factors[2].nrows(),
        ]
    }

    /// Core dimensions, i.e. the multilinear rank of the composition.
    pub fn ranks(&self) -> [usize; 3] {
        [
            self.factors[0].ncols(),
            self.factors[1].ncols(),
            self.factors[2].ncols(),
        ]
    }
}

/// Expand a Tucker factorization to the dense tensor
/// `core x_0 U_0 x_1 U_1 x_2 U_2`.
pub fn tucker_compose(f: &TuckerFactors) -> Result<Tensor3> {
    let mut t = f.core.clone();
    for m in 0..3 {
        t = mode_product(&t, &f.factors[m].view(), m)?;
    }
    Ok(t)
}

/// Incoherence of an orthonormal column basis: `sqrt(p/r) * max row norm`.
/// Equals 1 for perfectly spread bases and `sqrt(p/r)` for axis-aligned
/// ones. Rejects non-orthonormal input (tolerance 1e-8).
pub fn incoherence(u: &Array2<f64>) -> Result<f64> {
    let (p, r) = u.dim();
    if r == 0 || p < r {
        return Err(Error::Shape(format!("incoherence of a {p}x{r} basis")));
    }
    let defect = orthonormality_defect(u);
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "incoherence requires orthonormal columns (defect {defect:.3e})"
        )));
    }
    let max_row = u
        .axis_iter(Axis(0))
        .map(|row| row.dot(&row).sqrt())
        .fold(0.0f64, f64::max);
    Ok((p as f64 / r as f64).sqrt() * max_row)
}

/// Extremes of the matricization spectra at a given multilinear rank.
#[derive(Debug, Clone, Copy)]
pub struct SpectralSummary {
    /// min over modes of the `ranks[m]`-th singular value of the unfolding.
    pub lambda_min: f64,
    /// max over modes of the leading singular value.
    pub lambda_max: f64,
    /// max over modes of (leading / `ranks[m]`-th) singular value.
    pub kappa: f64,
}

/// Compute the signal-strength summary (lambda_min, lambda_max, kappa) of
/// `t` at multilinear rank `ranks`. Errors if any requested rank exceeds a
/// matricization's dimensions or if the `ranks[m]`-th singular value is 0
/// (kappa undefined).
pub fn spectral_summary(t: &Tensor3, ranks: [usize; 3]) -> Result<SpectralSummary> {
    let d = t.dim();
    let dims = [d.0, d.1, d.2];
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = 0.0f64;
    let mut kappa = 0.0f64;
    for m in 0..3 {
        let r = ranks[m];
        let max_rank = dims[m].min(dims[next_mode(m)] * dims[next_mode(m + 1)]);
        if r == 0 || r > max_rank {
            return Err(Error::InvalidArgument(format!(
                "rank {r} out of range for mode {m} (max {max_rank})"
            )));
        }
        let unfolded = matricize(t, m)?;
        let sv = crate::linalg::singular_values(&unfolded);
        let head = sv[0];
        let tail = sv[r - 1];
        if tail <= 0.0 {
            return Err(Error::Degenerate(format!(
                "mode-{m} unfolding has rank below {r}; condition number undefined"
            )));
        }
        lambda_min = lambda_min.min(tail);
        lambda_max = lambda_max.max(head);
        kappa = kappa.max(head / tail);
    }
    Ok(SpectralSummary {
        lambda_min,
        lambda_max,
        kappa,
    })
}

// ---------------------------------------------------------------------------
// Internal fast paths. The simulation harness runs the full pipeline hundreds
// of times per configuration, so the hot contractions below avoid the
// element-by-element matricization copies of the generic operations. Each is
// unit-tested against the generic path.
// ---------------------------------------------------------------------------

/// Mode-0 unfolding as a zero-copy reshape (valid because tensors are
/// C-layout and the mode-0 column order coincides with memory order).
pub(crate) fn mode0_view(t: &Tensor3) -> ndarray::ArrayView2<'_, f64> {
    let (p0, p1, p2) = t.dim();
    t.view()
        .into_shape_with_order((p0, p1 * p2))
        .expect("tensor is standard layout")
}

/// Gram matrix of the mode-`mode` unfolding, `M M^T`, accumulated slice by
/// slice so no permuted copy of the tensor is made.
pub(crate) fn unfolding_gram(t: &Tensor3, mode: usize) -> Array2<f64> {
    use ndarray::linalg::general_mat_mul;
    let (p0, p1, p2) = t.dim();
    match mode {
        0 => {
            let m0 = mode0_view(t);
            m0.dot(&m0.t())
        }
        1 => {
            let mut g = Array2::<f64>::zeros((p1, p1));
            for i in 0..p0 {
                let s = t.index_axis(Axis(0), i);
                general_mat_mul(1.0, &s, &s.t(), 1.0, &mut g);
            }
            g
        }
        2 => {
            let mut g = Array2::<f64>::zeros((p2, p2));
            for i in 0..p0 {
                let s = t.index_axis(Axis(0), i);
                general_mat_mul(1.0, &s.t(), &s, 1.0, &mut g);
            }
            g
        }
        _ => unreachable!("mode checked by callers"),
    }
}

/// `M_mode(t x_{mode+1} a^T x_{mode+2} b^T)`: the unfolding of the tensor
/// contracted along both other modes. `a` has shape `(dims[mode+1], ra)` and
/// `b` has shape `(dims[mode+2], rb)`; the result is `dims[mode] x (ra*rb)`.
pub(crate) fn projected_unfolding(
    t: &Tensor3,
    a: &Array2<f64>,
    b: &Array2<f64>,
    mode: usize,
) -> Array2<f64> {
    let (p0, p1, p2) = t.dim();
    let (ra, rb) = (a.ncols(), b.ncols());
    match mode {
        0 => {
            debug_assert_eq!((a.nrows(), b.nrows()), (p1, p2));
            let mut out = Array2::<f64>::zeros((p0, ra * rb));
            for i in 0..p0 {
                let s = t.index_axis(Axis(0), i);
                let small = a.t().dot(&s).dot(b);
                let mut row = out.row_mut(i);
                for c1 in 0..ra {
                    for c2 in 0..rb {
                        row[c1 * rb + c2] = small[[c1, c2]];
                    }
                }
            }
            out
        }
        1 => {
            // Contract mode 0 first (cheap reshape product), then mode 2.
            debug_assert_eq!((a.nrows(), b.nrows()), (p2, p0));
            let contracted = b.t().dot(&mode0_view(t)); // rb x (p1*p2)
            let mut out = Array2::<f64>::zeros((p1, ra * rb));
            for s in 0..rb {
                let block = contracted
                    .row(s)
                    .into_shape_with_order((p1, p2))
                    .expect("contiguous row");
                let jk = block.dot(a); // p1 x ra
                for j in 0..p1 {
                    for c in 0..ra {
                        out[[j, c * rb + s]] = jk[[j, c]];
                    }
                }
            }
            out
        }
        2 => {
            debug_assert_eq!((a.nrows(), b.nrows()), (p0, p1));
            let contracted = a.t().dot(&mode0_view(t)); // ra x (p1*p2)
            let mut out = Array2::<f64>::zeros((p2, ra * rb));
            for s in 0..ra {
                let block = contracted
                    .row(s)
                    .into_shape_with_order((p1, p2))
                    .expect("contiguous row");
                let kj = b.t().dot(&block); // rb x p2
                for c in 0..rb {
                    for k in 0..p2 {
                        out[[k, s * rb + c]] = kj[[c, k]];
                    }
                }
            }
            out
        }
        _ => unreachable!("mode checked by callers"),
    }
}

/// Compose `core x_0 u0 x_1 u1 x_2 u2` without intermediate matricization
/// copies. Shapes: core `(r0, r1, r2)`, `u_m` is `(p_m, r_m)`.
pub(crate) fn fast_compose(core: &Tensor3, u: [&Array2<f64>; 3]) -> Tensor3 {
    let (r0, r1, r2) = core.dim();
    let (p0, p1, p2) = (u[0].nrows(), u[1].nrows(), u[2].nrows());
    debug_assert_eq!((u[0].ncols(), u[1].ncols(), u[2].ncols()), (r0, r1, r2));
    // Expand modes 1 and 2 slice by slice (small), then mode 0 as one gemm.
    let mut mid = Array3::<f64>::zeros((r0, p1, p2));
    for s in 0..r0 {
        let slice = core.index_axis(Axis(0), s);
        let expanded = u[1].dot(&slice).dot(&u[2].t());
        mid.index_axis_mut(Axis(0), s).assign(&expanded);
    }
    let flat = u[0].dot(&mode0_view(&mid)); // p0 x (p1*p2)
    flat.into_shape_with_order((p0, p1, p2))
        .expect("contiguous product")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    /// 2x2x2 tensor with entries 1..8 in canonical order:
    /// t[i,j,k] = 4i + 2j + k + 1.
    fn counting_tensor() -> Tensor3 {
        Array3::from_shape_fn((2, 2, 2), |(i, j, k)| (4 * i + 2 * j + k + 1) as f64)
    }

    fn tensor_from_fn(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> f64) -> Tensor3 {
        Array3::from_shape_fn((dims[0], dims[1], dims[2]), |(i, j, k)| f(i, j, k))
    }

    #[test]
    fn matricize_counting_tensor_all_modes() {
        let t = counting_tensor();
        let m0 = matricize(&t, 0).unwrap();
        assert_eq!(m0, array![[1., 2., 3., 4.], [5., 6., 7., 8.]]);
        let m1 = matricize(&t, 1).unwrap();
        assert_eq!(m1, array![[1., 5., 2., 6.], [3., 7., 4., 8.]]);
        let m2 = matricize(&t, 2).unwrap();
        assert_eq!(m2, array![[1., 3., 5., 7.], [2., 4., 6., 8.]]);
    }

    #[test]
    fn matricize_mode0_matches_layout_reshape() {
        let t = tensor_from_fn([3, 4, 5], |i, j, k| (i * 100 + j * 10 + k) as f64);
        let m0 = matricize(&t, 0).unwrap();
        let flat = vectorize(&t);
        for i in 0..3 {
            for c in 0..20 {
                assert_eq!(m0[[i, c]], flat[i * 20 + c]);
            }
        }
    }

    #[test]
    fn matricize_rejects_bad_mode() {
        let t = counting_tensor();
        assert!(matches!(
            matricize(&t, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn dematricize_round_trips_exhaustive_small_shapes() {
        for p0 in 1..=4 {
            for p1 in 1..=4 {
                for p2 in 1..=4 {
                    let t = tensor_from_fn([p0, p1, p2], |i, j, k| {
                        (i * 97 + j * 13 + k * 7) as f64 + 0.5
                    });
                    for mode in 0..3 {
                        let m = matricize(&t, mode).unwrap();
                        let back = dematricize(&m, mode, [p0, p1, p2]).unwrap();
                        assert_eq!(back, t, "mode {mode} dims {p0}x{p1}x{p2}");
                    }
                }
            }
        }
    }

    #[test]
    fn dematricize_rejects_wrong_shape() {
        let m = Array2::<f64>::zeros((2, 5));
        assert!(matches!(
            dematricize(&m, 0, [2, 2, 2]),
            Err(Error::Shape(_))
        ));
    }

    /// Brute-force mode product by the defining triple sum.
    fn mode_product_oracle(t: &Tensor3, a: &Array2<f64>, mode: usize) -> Tensor3 {
        let d = t.dim();
        let in_dims = [d.0, d.1, d.2];
        let mut dims = in_dims;
        dims[mode] = a.nrows();
        Array3::from_shape_fn((dims[0], dims[1], dims[2]), |(i, j, k)| {
            let out_idx = [i, j, k];
            (0..in_dims[mode])
                .map(|s| {
                    let mut src = out_idx;
                    src[mode] = s;
                    a[[out_idx[mode], s]] * t[[src[0], src[1], src[2]]]
                })
                .sum()
        })
    }

    #[test]
    fn mode_product_identity_is_noop() {
        let t = tensor_from_fn([2, 3, 4], |i, j, k| (i + 2 * j + 3 * k) as f64);
        let d = t.dim();
        let dims = [d.0, d.1, d.2];
        for mode in 0..3 {
            let eye = Array2::<f64>::eye(dims[mode]);
            let out = mode_product(&t, &eye.view(), mode).unwrap();
            assert_eq!(out, t);
        }
    }

    #[test]
    fn mode_product_matches_triple_sum_oracle() {
        let t = tensor_from_fn([2, 3, 4], |i, j, k| ((i * j) as f64) - (k as f64) * 0.25 + 1.0);
        let d = t.dim();
        let dims = [d.0, d.1, d.2];
        for mode in 0..3 {
            let n = dims[mode];
            let a = Array2::from_shape_fn((5, n), |(r, c)| ((r * 7 + c * 3) % 11) as f64 - 4.0);
            let fast = mode_product(&t, &a.view(), mode).unwrap();
            let slow = mode_product_oracle(&t, &a, mode);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn mode_product_composes_as_matrix_product() {
        let t = tensor_from_fn([3, 2, 2], |i, j, k| (i + j + k) as f64 + 0.125);
        let a = Array2::from_shape_fn((4, 3), |(r, c)| (r as f64) - (c as f64) * 0.5);
        let b = Array2::from_shape_fn((2, 4), |(r, c)| ((r + c) % 3) as f64);
        let step = mode_product(&mode_product(&t, &a.view(), 0).unwrap(), &b.view(), 0).unwrap();
        let combined = mode_product(&t, &b.dot(&a).view(), 0).unwrap();
        assert_abs_diff_eq!(step, combined, epsilon = 1e-12);
    }

    #[test]
    fn mode_product_rejects_mismatched_columns() {
        let t = counting_tensor();
        let a = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            mode_product(&t, &a.view(), 0),
            Err(Error::Shape(_))
        ));
    }

    /// Explicit Kronecker product, used only as a test oracle.
    fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        Array2::from_shape_fn((ar * br, ac * bc), |(r, c)| {
            a[[r / br, c / bc]] * b[[r % br, c % bc]]
        })
    }

    #[test]
    fn matricize_of_multilinear_product_is_kronecker_identity() {
        let t = tensor_from_fn([2, 3, 4], |i, j, k| ((i * 5 + j * 2 + k) % 7) as f64 - 3.0);
        let a0 = Array2::from_shape_fn((3, 2), |(r, c)| (r + 2 * c) as f64 * 0.3 - 0.4);
        let a1 = Array2::from_shape_fn((2, 3), |(r, c)| ((r * c) as f64) - 0.7);
        let a2 = Array2::from_shape_fn((5, 4), |(r, c)| ((r + c * 3) % 5) as f64 * 0.2);
        let mats = [&a0, &a1, &a2];
        let mut prod = t.clone();
        for m in 0..3 {
            prod = mode_product(&prod, &mats[m].view(), m).unwrap();
        }
        for mode in 0..3 {
            let lhs = matricize(&prod, mode).unwrap();
            let k = kron(mats[next_mode(mode)], mats[next_mode(mode + 1)]);
            let rhs = mats[mode].dot(&matricize(&t, mode).unwrap()).dot(&k.t());
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-11);
        }
    }

    #[test]
    fn vectorize_counting_tensor() {
        let t = counting_tensor();
        let v = vectorize(&t);
        assert_eq!(v, Array1::from_iter((1..=8).map(|x| x as f64)));
    }

    #[test]
    fn tucker_compose_diagonal_core() {
        // Identity factors with a diagonal core reproduce the core layout.
        let mut core = Tensor3::zeros((2, 2, 2));
        core[[0, 0, 0]] = 3.0;
        core[[1, 1, 1]] = -2.0;
        let eye = Array2::<f64>::eye(2);
        let f = TuckerFactors::new(core.clone(), [eye.clone(), eye.clone(), eye]).unwrap();
        let t = tucker_compose(&f).unwrap();
        assert_eq!(t, core);
    }

    /// Quadruple-sum oracle for the Tucker composition.
    fn compose_oracle(f: &TuckerFactors) -> Tensor3 {
        let [p0, p1, p2] = f.outer_dims();
        let [r0, r1, r2] = f.ranks();
        Array3::from_shape_fn((p0, p1, p2), |(i, j, k)| {
            let mut acc = 0.0;
            for a in 0..r0 {
                for b in 0..r1 {
                    for c in 0..r2 {
                        acc += f.core[[a, b, c]]
                            * f.factors[0][[i, a]]
                            * f.factors[1][[j, b]]
                            * f.factors[2][[k, c]];
                    }
                }
            }
            acc
        })
    }

    fn orthonormal_from_seeded(p: usize, r: usize, seed: u64) -> Array2<f64> {
        // Deterministic full-rank matrix, orthonormalized by Gram-Schmidt.
        let mut m = Array2::from_shape_fn((p, r), |(i, j)| {
            let x = seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(((i * r + j) as u64).wrapping_mul(1442695040888963407));
            let x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            let x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        });
        for c in 0..r {
            for _pass in 0..2 {
                for prev in 0..c {
                    let proj = m.column(c).dot(&m.column(prev));
                    let prev_col = m.column(prev).to_owned();
                    m.column_mut(c).scaled_add(-proj, &prev_col);
                }
            }
            let norm = m.column(c).dot(&m.column(c)).sqrt();
            m.column_mut(c).mapv_inplace(|x| x / norm);
        }
        m
    }

    #[test]
    fn tucker_compose_matches_quadruple_sum_oracle() {
        let core = tensor_from_fn([2, 3, 2], |a, b, c| (a as f64) - (b as f64) * 0.5 + (c as f64));
        let f = TuckerFactors::new(
            core,
            [
                orthonormal_from_seeded(4, 2, 1),
                orthonormal_from_seeded(5, 3, 2),
                orthonormal_from_seeded(6, 2, 3),
            ],
        )
        .unwrap();
        let fast = tucker_compose(&f).unwrap();
        let slow = compose_oracle(&f);
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
    }

    #[test]
    fn tucker_compose_preserves_frobenius_norm() {
        // Orthonormal factors make composition an isometry of the core.
        let core = tensor_from_fn([2, 2, 3], |a, b, c| ((a * 3 + b * 5 + c) % 7) as f64 - 2.0);
        let f = TuckerFactors::new(
            core.clone(),
            [
                orthonormal_from_seeded(7, 2, 4),
                orthonormal_from_seeded(6, 2, 5),
                orthonormal_from_seeded(8, 3, 6),
            ],
        )
        .unwrap();
        let t = tucker_compose(&f).unwrap();
        let nt = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nc = core.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(nt, nc, epsilon = 1e-10);
    }

    #[test]
    fn tucker_factors_reject_non_orthonormal() {
        let core = Tensor3::zeros((2, 2, 2));
        let mut bad = Array2::<f64>::eye(2);
        bad[[0, 0]] = 2.0;
        let eye3 = orthonormal_from_seeded(3, 2, 7);
        let err = TuckerFactors::new(core, [bad, eye3.clone(), eye3]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn incoherence_extremes() {
        // Axis-aligned basis: the worst case sqrt(p/r).
        let mut spiky = Array2::<f64>::zeros((8, 2));
        spiky[[0, 0]] = 1.0;
        spiky[[1, 1]] = 1.0;
        assert_abs_diff_eq!(incoherence(&spiky).unwrap(), 2.0, epsilon = 1e-12);

        // Maximally spread single column: all entries 1/sqrt(p).
        let flat = Array2::from_elem((9, 1), 1.0 / 3.0);
        assert_abs_diff_eq!(incoherence(&flat).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn incoherence_rejects_non_orthonormal() {
        let m = Array2::from_elem((4, 2), 0.5);
        assert!(matches!(incoherence(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn spectral_summary_superdiagonal() {
        // Core diag(2, 1) embedded in a 4x4x4 tensor: every unfolding has
        // singular values {2, 1}, so lambda_min = 1, lambda_max = 2, kappa = 2.
        let mut t = Tensor3::zeros((4, 4, 4));
        t[[0, 0, 0]] = 2.0;
        t[[1, 1, 1]] = 1.0;
        let s = spectral_summary(&t, [2, 2, 2]).unwrap();
        assert_abs_diff_eq!(s.lambda_min, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.lambda_max, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(s.kappa, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_summary_rank_one() {
        // lambda * u o v o w has a single singular value lambda per mode.
        let u = [0.6, 0.8];
        let v = [1.0 / 2.0f64.sqrt(), -1.0 / 2.0f64.sqrt()];
        let w = [0.0, 1.0];
        let lambda = 3.5;
        let t = Array3::from_shape_fn((2, 2, 2), |(i, j, k)| lambda * u[i] * v[j] * w[k]);
        let s = spectral_summary(&t, [1, 1, 1]).unwrap();
        assert_abs_diff_eq!(s.lambda_min, lambda, epsilon = 1e-10);
        assert_abs_diff_eq!(s.kappa, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn spectral_summary_scales_homogeneously() {
        let t = tensor_from_fn([3, 3, 3], |i, j, k| ((i + 2 * j + 4 * k) % 5) as f64 - 1.0);
        let s1 = spectral_summary(&t, [2, 2, 2]).unwrap();
        let s2 = spectral_summary(&t.mapv(|x| 2.5 * x), [2, 2, 2]).unwrap();
        assert_abs_diff_eq!(s2.lambda_min, 2.5 * s1.lambda_min, epsilon = 1e-9);
        assert_abs_diff_eq!(s2.lambda_max, 2.5 * s1.lambda_max, epsilon = 1e-9);
        assert_abs_diff_eq!(s2.kappa, s1.kappa, epsilon = 1e-9);
    }

    #[test]
    fn mode0_view_matches_matricize() {
        let t = tensor_from_fn([3, 4, 2], |i, j, k| (i * 19 + j * 5 + k) as f64 - 7.0);
        assert_eq!(mode0_view(&t).to_owned(), matricize(&t, 0).unwrap());
    }

    #[test]
    fn unfolding_gram_matches_generic_path() {
        let t = tensor_from_fn([4, 3, 5], |i, j, k| ((i * 11 + j * 3 + k * 7) % 13) as f64 - 6.0);
        for mode in 0..3 {
            let m = matricize(&t, mode).unwrap();
            let slow = m.dot(&m.t());
            let fast = unfolding_gram(&t, mode);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-11);
        }
    }

    #[test]
    fn projected_unfolding_matches_generic_path() {
        let t = tensor_from_fn([4, 3, 5], |i, j, k| ((i + j * 2 + k * 3) % 7) as f64 * 0.5 - 1.0);
        let dims = [4usize, 3, 5];
        for mode in 0..3 {
            let (m1, m2) = (next_mode(mode), next_mode(mode + 1));
            let a = Array2::from_shape_fn((dims[m1], 2), |(r, c)| ((r * 3 + c) % 5) as f64 - 2.0);
            let b = Array2::from_shape_fn((dims[m2], 2), |(r, c)| ((r + c * 2) % 4) as f64 - 1.5);
            let proj =
                mode_product(&mode_product(&t, &a.t(), m1).unwrap(), &b.t(), m2).unwrap();
            let slow = matricize(&proj, mode).unwrap();
            let fast = projected_unfolding(&t, &a, &b, mode);
            assert_abs_diff_eq!(fast, slow, epsilon = 1e-11);
        }
    }

    #[test]
    fn fast_compose_matches_tucker_compose() {
        let core = tensor_from_fn([2, 3, 2], |a, b, c| (a * 4 + b * 2 + c) as f64 * 0.25 - 1.0);
        let u0 = orthonormal_from_seeded(5, 2, 11);
        let u1 = orthonormal_from_seeded(4, 3, 12);
        let u2 = orthonormal_from_seeded(6, 2, 13);
        let f = TuckerFactors::new(core.clone(), [u0.clone(), u1.clone(), u2.clone()]).unwrap();
        let slow = tucker_compose(&f).unwrap();
        let fast = fast_compose(&core, [&u0, &u1, &u2]);
        assert_abs_diff_eq!(fast, slow, epsilon = 1e-12);
    }

    #[test]
    fn spectral_summary_rank_deficient_errors() {
        let mut t = Tensor3::zeros((3, 3, 3));
        t[[0, 0, 0]] = 1.0;
        assert!(matches!(
            spectral_summary(&t, [2, 2, 2]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            spectral_summary(&t, [4, 1, 1]),
            Err(Error::InvalidArgument(_))
        ));
    }
}
