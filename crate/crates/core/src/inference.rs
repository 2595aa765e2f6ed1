//! Entrywise and rowwise uncertainty quantification for a fitted model.
//!
//! Everything here is a plug-in construction: the fitted factors play the
//! role of the unknown true factors, and the residual tensor supplies a
//! heteroskedastic variance estimate. The central objects are, per mode `k`,
//! the right singular structure `(V_k, Lambda_k)` of the observation's
//! mode-`k` unfolding after projecting the two other modes onto their fitted
//! factors. Sandwiching the residual second moments between `V_k` and
//! `Lambda_k^-1` yields covariance estimates for factor rows; combining the
//! same ingredients across modes yields variances for denoised entries.
//!
//! All indices are 0-based. Significance levels `alpha` are the nominal
//! non-coverage probabilities, e.g. `alpha = 0.05` for 95% regions.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::hooi::TuckerFit;
use crate::linalg::special::{chi2_quantile, chi2_survival, gaussian_quantile};
use crate::linalg::{self, floored_spd_inverse, jacobi_eigh, svd_full};
use crate::tensor::{next_mode, projected_unfolding, Tensor3};

/// Relative eigenvalue floor used when inverting estimated covariances.
const COV_INVERSE_FLOOR: f64 = 1e-14;

/// Relative spectral-gap threshold below which a projected unfolding is
/// treated as rank-deficient.
const SPECTRUM_COLLAPSE_TOL: f64 = 1e-13;

/// A fitted model together with the per-mode singular structure needed for
/// inference.
///
/// `right_factors[k]` has shape `(p_{k+1} * p_{k+2}, r_k)` with orthonormal
/// columns; its row indexed by `x * p_{k+2} + y` corresponds to the column of
/// the mode-`k` unfolding with index `x` in mode `k+1` and `y` in mode `k+2`.
/// `singular_values[k]` holds the matching leading singular values, strictly
/// positive and non-increasing.
#[derive(Debug, Clone)]
pub struct InferenceContext {
    /// The fit the context was built from.
    pub fit: TuckerFit,
    /// The raw observation.
    pub observed: Tensor3,
    /// `observed - fit.denoised`.
    pub residual: Tensor3,
    /// Per-mode right singular vectors of the projected unfolding, mapped
    /// back to the ambient column space.
    pub right_factors: [Array2<f64>; 3],
    /// Per-mode leading singular values of the projected unfolding.
    pub singular_values: [Array1<f64>; 3],
}

/// A two-sided confidence interval for a scalar.
#[derive(Debug, Clone, Copy)]
pub struct ConfidenceInterval {
    /// Point estimate at the center of the interval.
    pub estimate: f64,
    /// Plug-in standard error.
    pub std_err: f64,
    pub lower: f64,
    pub upper: f64,
    /// Nominal coverage, `1 - alpha`.
    pub level: f64,
}

/// An ellipsoidal confidence region `{x : (x-c)^T S^-1 (x-c) <= radius_sq}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: Array1<f64>,
    /// Symmetric positive-definite shape matrix `S`.
    pub shape: Array2<f64>,
    /// Squared radius in the metric of `S^-1`; a chi-square quantile.
    pub radius_sq: f64,
    /// Nominal coverage, `1 - alpha`.
    pub level: f64,
}

/// Outcome of a chi-square hypothesis test.
#[derive(Debug, Clone, Copy)]
pub struct TestResult {
    /// Quadratic-form test statistic.
    pub statistic: f64,
    /// Reference chi-square degrees of freedom.
    pub df: usize,
    pub p_value: f64,
    /// Significance level the decision was taken at.
    pub alpha: f64,
    /// True when `p_value < alpha`.
    pub reject: bool,
}

/// Which quadratic form to use for the variance of a difference of two
/// denoised entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairVarianceForm {
    /// `Var(a) + Var(b) - 2 Cov(a, b)`: the variance of the difference.
    #[default]
    DifferenceQuadratic,
    /// `Var(a) + Var(b) - Cov(a, b)`: subtracts the covariance only once,
    /// giving a wider interval whenever the covariance is positive. Kept for
    /// comparison studies.
    SingleCovariance,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

fn check_mode(mode: usize) -> Result<()> {
    if mode > 2 {
        return Err(Error::InvalidArgument(format!(
            "mode must be 0, 1, or 2, got {mode}"
        )));
    }
    Ok(())
}

fn dims_of(t: &Tensor3) -> [usize; 3] {
    let (p0, p1, p2) = t.dim();
    [p0, p1, p2]
}

fn check_triple(dims: [usize; 3], idx: [usize; 3]) -> Result<()> {
    for m in 0..3 {
        if idx[m] >= dims[m] {
            return Err(Error::InvalidArgument(format!(
                "entry index ({}, {}, {}) out of bounds for a {}x{}x{} tensor",
                idx[0], idx[1], idx[2], dims[0], dims[1], dims[2]
            )));
        }
    }
    Ok(())
}

/// `kron(a, b) * w` computed one column at a time, so the `pa*pb x pa*pb`
/// Kronecker product is never materialized. Row `x * pb + y` of the result
/// pairs column `x` of `a` with column `y` of `b`, matching the unfolding
/// column order.
fn kron_times(a: &Array2<f64>, b: &Array2<f64>, w: &ArrayView2<f64>) -> Array2<f64> {
    let (pa, ra) = a.dim();
    let (pb, rb) = b.dim();
    debug_assert_eq!(w.nrows(), ra * rb);
    let r = w.ncols();
    let mut out = Array2::<f64>::zeros((pa * pb, r));
    for c in 0..r {
        let wc = w
            .column(c)
            .to_owned()
            .into_shape_with_order((ra, rb))
            .expect("column is contiguous");
        let block = a.dot(&wc).dot(&b.t());
        let mut col = out.column_mut(c);
        for x in 0..pa {
            for y in 0..pb {
                col[x * pb + y] = block[[x, y]];
            }
        }
    }
    out
}

/// Row `row` of the mode-`mode` unfolding of `t`, gathered without building
/// the unfolding.
fn unfolding_row(t: &Tensor3, mode: usize, row: usize) -> Array1<f64> {
    let (p0, p1, p2) = t.dim();
    match mode {
        0 => t.index_axis(Axis(0), row).iter().copied().collect(),
        1 => {
            let mut out = Array1::<f64>::zeros(p2 * p0);
            for k in 0..p2 {
                for i in 0..p0 {
                    out[k * p0 + i] = t[[i, row, k]];
                }
            }
            out
        }
        2 => {
            let mut out = Array1::<f64>::zeros(p0 * p1);
            for i in 0..p0 {
                for j in 0..p1 {
                    out[i * p1 + j] = t[[i, j, row]];
                }
            }
            out
        }
        _ => unreachable!("mode checked by callers"),
    }
}

/// Column of the mode-`mode` unfolding addressed by the full entry index.
fn unfolding_col(dims: [usize; 3], idx: [usize; 3], mode: usize) -> usize {
    idx[next_mode(mode)] * dims[next_mode(next_mode(mode))] + idx[next_mode(next_mode(mode))]
}

/// Build an [`InferenceContext`] from an observation and its fit.
///
/// Recomputes, per mode, the SVD of the observation's unfolding with the two
/// other modes compressed onto their fitted factors, and maps the right
/// singular vectors back to ambient coordinates. Errors with
/// [`Error::Degenerate`] when the fit is flagged degenerate or any projected
/// spectrum collapses at the requested rank.
pub fn build_context(observed: &Tensor3, fit: TuckerFit) -> Result<InferenceContext> {
    if observed.dim() != fit.denoised.dim() {
        return Err(Error::Shape(format!(
            "observation shape {:?} does not match fit shape {:?}",
            observed.dim(),
            fit.denoised.dim()
        )));
    }
    if fit.degenerate {
        return Err(Error::Degenerate(
            "fit is flagged degenerate; refusing to build inference context".into(),
        ));
    }
    let ranks = fit.factors.ranks();
    let residual = observed - &fit.denoised;
    let mut right_factors: Vec<Array2<f64>> = Vec::with_capacity(3);
    let mut singular_values: Vec<Array1<f64>> = Vec::with_capacity(3);
    for m in 0..3 {
        let a = &fit.factors.factors[next_mode(m)];
        let b = &fit.factors.factors[next_mode(next_mode(m))];
        let projected = projected_unfolding(observed, a, b, m);
        let (_, sigma, v) = svd_full(&projected.view());
        let r = ranks[m];
        if r > sigma.len() || sigma[0] <= 0.0 || sigma[r - 1] <= SPECTRUM_COLLAPSE_TOL * sigma[0] {
            return Err(Error::Degenerate(format!(
                "projected mode-{m} spectrum collapses at rank {r}"
            )));
        }
        let w = v.slice(ndarray::s![.., ..r]);
        let vhat = kron_times(a, b, &w);
        debug_assert!(linalg::orthonormality_defect(&vhat.view()) < 1e-8);
        right_factors.push(vhat);
        singular_values.push(sigma.slice(ndarray::s![..r]).to_owned());
    }
    let singular_values: [Array1<f64>; 3] = singular_values.try_into().expect("three modes");
    let right_factors: [Array2<f64>; 3] = right_factors.try_into().expect("three modes");
    Ok(InferenceContext {
        fit,
        observed: observed.clone(),
        residual,
        right_factors,
        singular_values,
    })
}

/// Squared residuals along one row of a mode unfolding; errors when the row
/// is identically zero, since every downstream covariance would be singular.
fn squared_residual_row(ctx: &InferenceContext, mode: usize, row: usize) -> Result<Array1<f64>> {
    let mut sq = unfolding_row(&ctx.residual, mode, row);
    sq.mapv_inplace(|z| z * z);
    if sq.iter().all(|&s| s == 0.0) {
        return Err(Error::Degenerate(format!(
            "mode-{mode} residual row {row} is identically zero"
        )));
    }
    Ok(sq)
}

/// Plug-in covariance of the estimated mode-`mode` factor row `row`:
/// `Lambda^-1 V^T diag(sq) V Lambda^-1` with `sq` the squared residuals along
/// that row of the unfolding.
pub fn loading_covariance(
    ctx: &InferenceContext,
    mode: usize,
    row: usize,
) -> Result<Array2<f64>> {
    check_mode(mode)?;
    let dims = dims_of(&ctx.observed);
    if row >= dims[mode] {
        return Err(Error::InvalidArgument(format!(
            "row {row} out of bounds for mode {mode} of extent {}",
            dims[mode]
        )));
    }
    let sq = squared_residual_row(ctx, mode, row)?;
    let vhat = &ctx.right_factors[mode];
    let lam = &ctx.singular_values[mode];
    let r = vhat.ncols();
    // B = V^T diag(sq) V, accumulated without an n x r scaled copy.
    let mut b = Array2::<f64>::zeros((r, r));
    for (a, vrow) in vhat.rows().into_iter().enumerate() {
        let wa = sq[a];
        if wa == 0.0 {
            continue;
        }
        for s in 0..r {
            let vs = wa * vrow[s];
            for t in s..r {
                b[[s, t]] += vs * vrow[t];
            }
        }
    }
    let mut gamma = Array2::<f64>::zeros((r, r));
    for s in 0..r {
        for t in s..r {
            let g = b[[s, t]] / (lam[s] * lam[t]);
            gamma[[s, t]] = g;
            gamma[[t, s]] = g;
        }
    }
    Ok(gamma)
}

/// Elliptical confidence region for a true factor row, centered at the
/// estimated row with shape [`loading_covariance`] and squared radius the
/// `1 - alpha` chi-square quantile at the mode's rank.
pub fn loading_region(
    ctx: &InferenceContext,
    mode: usize,
    row: usize,
    alpha: f64,
) -> Result<Ellipsoid> {
    check_alpha(alpha)?;
    let gamma = loading_covariance(ctx, mode, row)?;
    let r = gamma.nrows();
    let (vals, _) = jacobi_eigh(&gamma);
    if vals[r - 1] <= 0.0 {
        return Err(Error::Degenerate(format!(
            "estimated covariance for mode-{mode} row {row} is not positive definite"
        )));
    }
    Ok(Ellipsoid {
        center: ctx.fit.factors.factors[mode].row(row).to_owned(),
        shape: gamma,
        radius_sq: chi2_quantile(r, 1.0 - alpha)?,
        level: 1.0 - alpha,
    })
}

/// Membership check: is `point` inside the region (boundary inclusive)?
pub fn region_contains(region: &Ellipsoid, point: &Array1<f64>) -> Result<bool> {
    if point.len() != region.center.len() {
        return Err(Error::Shape(format!(
            "point dimension {} does not match region dimension {}",
            point.len(),
            region.center.len()
        )));
    }
    let inv = floored_spd_inverse(&region.shape, COV_INVERSE_FLOOR)?;
    let d = point - &region.center;
    let q = d.dot(&inv.dot(&d));
    Ok(q <= region.radius_sq)
}

/// Plug-in variance of one denoised entry: the sum over modes of the squared
/// residuals along the entry's unfolding row, weighted by the squared
/// projection weights `V V^T` onto the entry's unfolding column.
pub fn entry_variance(ctx: &InferenceContext, idx: [usize; 3]) -> Result<f64> {
    let dims = dims_of(&ctx.observed);
    check_triple(dims, idx)?;
    let mut var = 0.0;
    for m in 0..3 {
        let sq = squared_residual_row(ctx, m, idx[m])?;
        let vhat = &ctx.right_factors[m];
        let col = unfolding_col(dims, idx, m);
        let w = vhat.dot(&vhat.row(col));
        var += sq
            .iter()
            .zip(w.iter())
            .map(|(&s, &wi)| s * wi * wi)
            .sum::<f64>();
    }
    Ok(var)
}

/// Two-sided Gaussian confidence interval for a single denoised entry.
pub fn entry_ci(ctx: &InferenceContext, idx: [usize; 3], alpha: f64) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let var = entry_variance(ctx, idx)?;
    if var <= 0.0 {
        return Err(Error::Degenerate(format!(
            "entry ({}, {}, {}) has zero estimated variance",
            idx[0], idx[1], idx[2]
        )));
    }
    let std_err = var.sqrt();
    let estimate = ctx.fit.denoised[idx];
    let z = gaussian_quantile(1.0 - alpha / 2.0)?;
    Ok(ConfidenceInterval {
        estimate,
        std_err,
        lower: estimate - z * std_err,
        upper: estimate + z * std_err,
        level: 1.0 - alpha,
    })
}

/// Joint plug-in covariance of a set of denoised entries.
///
/// The `(s, t)` element sums one term per mode in which the two entries share
/// their index; each term weights the shared row's squared residuals by the
/// product of the two entries' projection weights in that mode. Diagonal
/// elements therefore reduce to [`entry_variance`]; entries sharing no index
/// have zero estimated covariance. Duplicate index triples are rejected.
pub fn joint_covariance(ctx: &InferenceContext, indices: &[[usize; 3]]) -> Result<Array2<f64>> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument(
            "joint covariance needs at least one entry".into(),
        ));
    }
    let dims = dims_of(&ctx.observed);
    for (s, idx) in indices.iter().enumerate() {
        check_triple(dims, *idx)?;
        for prev in &indices[..s] {
            if prev == idx {
                return Err(Error::InvalidArgument(format!(
                    "duplicate entry ({}, {}, {}) in joint index set",
                    idx[0], idx[1], idx[2]
                )));
            }
        }
    }
    let n = indices.len();
    // Projection weights per (entry, mode) and squared residual rows per
    // (mode, row), both reused across the pair loop.
    let mut weights: Vec<[Array1<f64>; 3]> = Vec::with_capacity(n);
    for idx in indices {
        let per_mode: Vec<Array1<f64>> = (0..3)
            .map(|m| {
                let vhat = &ctx.right_factors[m];
                vhat.dot(&vhat.row(unfolding_col(dims, *idx, m)))
            })
            .collect();
        weights.push(per_mode.try_into().expect("three modes"));
    }
    let mut rows: std::collections::HashMap<(usize, usize), Array1<f64>> =
        std::collections::HashMap::new();
    for idx in indices {
        for m in 0..3 {
            if let std::collections::hash_map::Entry::Vacant(e) = rows.entry((m, idx[m])) {
                e.insert(squared_residual_row(ctx, m, idx[m])?);
            }
        }
    }
    let mut cov = Array2::<f64>::zeros((n, n));
    for s in 0..n {
        for t in s..n {
            let mut c = 0.0;
            for m in 0..3 {
                if indices[s][m] != indices[t][m] {
                    continue;
                }
                let sq = &rows[&(m, indices[s][m])];
                let (ws, wt) = (&weights[s][m], &weights[t][m]);
                c += sq
                    .iter()
                    .zip(ws.iter().zip(wt.iter()))
                    .map(|(&q, (&a, &b))| q * a * b)
                    .sum::<f64>();
            }
            cov[[s, t]] = c;
            cov[[t, s]] = c;
        }
    }
    Ok(cov)
}

/// Joint elliptical confidence region for a set of denoised entries, with
/// squared radius the `1 - alpha` chi-square quantile at `indices.len()`
/// degrees of freedom.
pub fn joint_region(
    ctx: &InferenceContext,
    indices: &[[usize; 3]],
    alpha: f64,
) -> Result<Ellipsoid> {
    check_alpha(alpha)?;
    let cov = joint_covariance(ctx, indices)?;
    let n = cov.nrows();
    let (vals, _) = jacobi_eigh(&cov);
    if vals[n - 1] <= 0.0 {
        return Err(Error::Degenerate(
            "joint covariance of the requested entries is not positive definite".into(),
        ));
    }
    let center = indices.iter().map(|&idx| ctx.fit.denoised[idx]).collect();
    Ok(Ellipsoid {
        center,
        shape: cov,
        radius_sq: chi2_quantile(n, 1.0 - alpha)?,
        level: 1.0 - alpha,
    })
}

/// Plug-in variance for the difference of two denoised entries, under the
/// chosen quadratic form.
pub fn pair_difference_variance(
    ctx: &InferenceContext,
    a: [usize; 3],
    b: [usize; 3],
    form: PairVarianceForm,
) -> Result<f64> {
    if a == b {
        return Err(Error::InvalidArgument(
            "pair difference needs two distinct entries".into(),
        ));
    }
    let cov = joint_covariance(ctx, &[a, b])?;
    let var = match form {
        PairVarianceForm::DifferenceQuadratic => cov[[0, 0]] + cov[[1, 1]] - 2.0 * cov[[0, 1]],
        PairVarianceForm::SingleCovariance => cov[[0, 0]] + cov[[1, 1]] - cov[[0, 1]],
    };
    Ok(var)
}

/// Two-sided Gaussian confidence interval for the difference of two denoised
/// entries.
pub fn pair_difference_ci(
    ctx: &InferenceContext,
    a: [usize; 3],
    b: [usize; 3],
    alpha: f64,
    form: PairVarianceForm,
) -> Result<ConfidenceInterval> {
    check_alpha(alpha)?;
    let var = pair_difference_variance(ctx, a, b, form)?;
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "pair difference has non-positive estimated variance".into(),
        ));
    }
    let std_err = var.sqrt();
    let estimate = ctx.fit.denoised[a] - ctx.fit.denoised[b];
    let z = gaussian_quantile(1.0 - alpha / 2.0)?;
    Ok(ConfidenceInterval {
        estimate,
        std_err,
        lower: estimate - z * std_err,
        upper: estimate + z * std_err,
        level: 1.0 - alpha,
    })
}

/// Two-sided test of equality of two denoised entries; the squared
/// standardized difference is referred to a chi-square with one degree of
/// freedom.
pub fn equality_test(
    ctx: &InferenceContext,
    a: [usize; 3],
    b: [usize; 3],
    alpha: f64,
    form: PairVarianceForm,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    let var = pair_difference_variance(ctx, a, b, form)?;
    if var <= 0.0 {
        return Err(Error::Degenerate(
            "pair difference has non-positive estimated variance".into(),
        ));
    }
    let diff = ctx.fit.denoised[a] - ctx.fit.denoised[b];
    let statistic = diff * diff / var;
    let p_value = chi2_survival(1, statistic);
    Ok(TestResult {
        statistic,
        df: 1,
        p_value,
        alpha,
        reject: p_value < alpha,
    })
}

/// Test whether two rows of a mode's factor coincide, i.e. whether the two
/// corresponding slices carry the same loading profile. The standardized
/// squared distance between the estimated rows, in the metric of the summed
/// row covariances, is referred to a chi-square at the mode's rank.
pub fn membership_test(
    ctx: &InferenceContext,
    mode: usize,
    row_a: usize,
    row_b: usize,
    alpha: f64,
) -> Result<TestResult> {
    check_alpha(alpha)?;
    check_mode(mode)?;
    if row_a == row_b {
        return Err(Error::InvalidArgument(
            "membership test needs two distinct rows".into(),
        ));
    }
    let gamma_a = loading_covariance(ctx, mode, row_a)?;
    let gamma_b = loading_covariance(ctx, mode, row_b)?;
    let sum = &gamma_a + &gamma_b;
    let inv = floored_spd_inverse(&sum, COV_INVERSE_FLOOR)?;
    let u = &ctx.fit.factors.factors[mode];
    let d = &u.row(row_a) - &u.row(row_b);
    let statistic = d.dot(&inv.dot(&d));
    let df = u.ncols();
    let p_value = chi2_survival(df, statistic);
    Ok(TestResult {
        statistic,
        df,
        p_value,
        alpha,
        reject: p_value < alpha,
    })
}
