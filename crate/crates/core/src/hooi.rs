//! Low multilinear-rank denoising by higher-order orthogonal iteration.
//!
//! Given a noisy tensor, HOOI alternately refreshes each mode's orthonormal
//! factor with the leading left singular vectors of the unfolding after the
//! other two modes have been projected onto their current factors. Each
//! refresh cannot decrease the projected energy `||t x_0 P_0 x_1 P_1 x_2
//! P_2||_F` (block coordinate ascent), and the iteration stops when factors
//! stabilize in the sin-theta metric or a sweep cap is hit.
//!
//! The starting point matters under heteroskedastic noise: the diagonal of
//! an unfolding's Gram matrix collects the squared noise of every entry in
//! a row, which biases the leading eigenvectors toward high-variance rows.
//! Deleting the diagonal (the "hollowing" operator) removes exactly the
//! entrywise-variance contamination while keeping most of the signal's
//! second-moment structure, so the initializer eigendecomposes hollowed
//! Grams for modes 1 and 2. Mode 0 needs no initializer; the first sweep
//! produces it from the other two.

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{projected_unfolding, unfolding_gram, Tensor3, TuckerFactors};
use ndarray::{s, Array1, Array2};

/// Iteration controls for [`hooi`].
#[derive(Debug, Clone)]
pub struct HooiConfig {
    /// Target multilinear rank per mode.
    pub ranks: [usize; 3],
    /// Sweep cap.
    pub max_iters: usize,
    /// Convergence threshold on the largest per-mode sin-theta change
    /// between consecutive sweeps.
    pub tol: f64,
}

impl HooiConfig {
    pub fn new(ranks: [usize; 3]) -> Self {
        Self {
            ranks,
            max_iters: 50,
            tol: 1e-8,
        }
    }
}

/// A fitted Tucker model plus diagnostics.
#[derive(Debug, Clone)]
pub struct TuckerFit {
    /// Orthonormal factors and core at convergence.
    pub factors: TuckerFactors,
    /// The denoised tensor: the observation projected onto the fitted
    /// factors along every mode.
    pub denoised: Tensor3,
    /// Completed sweeps.
    pub iterations_run: usize,
    /// Leading singular values of each mode's unfolding after projecting
    /// the other two modes onto the final factors.
    pub mode_singular_values: [Array1<f64>; 3],
    /// Projected Frobenius energy after each sweep; non-decreasing.
    pub objective_trace: Vec<f64>,
    /// Set when any truncation hit a zero singular value and the basis had
    /// to be completed arbitrarily; downstream inference should not trust
    /// the fit.
    pub degenerate: bool,
}

/// Zero out the diagonal of a square matrix (the hollowing operator).
pub fn hollow(m: &Array2<f64>) -> Result<Array2<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Shape(format!(
            "hollowing requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut out = m.to_owned();
    for i in 0..out.nrows() {
        out[[i, i]] = 0.0;
    }
    Ok(out)
}

/// Spectral initializer factors for modes 1 and 2.
#[derive(Debug, Clone)]
pub struct InitFactors {
    /// `factors[0]` is the mode-1 basis, `factors[1]` the mode-2 basis.
    pub factors: [Array2<f64>; 2],
    /// True when a hollowed Gram was identically zero and the basis is an
    /// arbitrary orthonormal completion.
    pub degenerate: bool,
}

fn validate_ranks(dims: [usize; 3], ranks: [usize; 3]) -> Result<()> {
    for m in 0..3 {
        let cap = dims[m].min(dims[(m + 1) % 3] * dims[(m + 2) % 3]);
        if ranks[m] == 0 || ranks[m] > cap {
            return Err(Error::InvalidArgument(format!(
                "rank {} out of range 1..={} for mode {} of a {}x{}x{} tensor",
                ranks[m], cap, m, dims[0], dims[1], dims[2]
            )));
        }
    }
    for m in 0..3 {
        // Any matricization's rank is bounded by the product of the other
        // two, so triples violating this are not multilinear ranks of any
        // tensor (and the projected unfoldings would be too narrow).
        let cross = ranks[(m + 1) % 3] * ranks[(m + 2) % 3];
        if ranks[m] > cross {
            return Err(Error::InvalidArgument(format!(
                "({}, {}, {}) is not a multilinear rank: mode {} exceeds the product of the other two",
                ranks[0], ranks[1], ranks[2], m
            )));
        }
    }
    Ok(())
}

/// Diagonal-deleted spectral initialization: for modes 1 and 2, the leading
/// `ranks[m]` eigenvectors (by algebraic value) of the hollowed Gram matrix
/// of the mode-`m` unfolding.
pub fn diagonal_deletion_init(t: &Tensor3, ranks: [usize; 3]) -> Result<InitFactors> {
    let d = t.dim();
    validate_ranks([d.0, d.1, d.2], ranks)?;
    let mut factors = Vec::with_capacity(2);
    let mut degenerate = false;
    for mode in JUST_INIT_MODES {
        let mut gram = unfolding_gram(t, mode);
        for i in 0..gram.nrows() {
            gram[[i, i]] = 0.0;
        }
        if gram.iter().all(|&x| x == 0.0) {
            degenerate = true;
        }
        let (_, vecs) = linalg::jacobi_eigh(&gram);
        factors.push(vecs.slice(s![.., ..ranks[mode]]).to_owned());
    }
    let f1 = factors.pop().expect("two factors");
    let f0 = factors.pop().expect("two factors");
    Ok(InitFactors {
        factors: [f0, f1],
        degenerate,
    })
}

const JUST_INIT_MODES: [usize; 2] = [1, 2];

/// Leading left singular vectors of a projected unfolding, with orthonormal
/// completion (and a degeneracy signal) when the spectrum collapses.
fn truncated_basis(m: &Array2<f64>, r: usize) -> (Array2<f64>, Array1<f64>, bool) {
    let (u, sigma, _) = crate::linalg::svd_full(&m.view());
    // Relative threshold: a truncation spanning the numerical null space is
    // an arbitrary basis choice, not an estimate.
    let degenerate = sigma[r - 1] <= 1e-13 * sigma[0];
    (
        u.slice(s![.., ..r]).to_owned(),
        sigma.slice(s![..r]).to_owned(),
        degenerate,
    )
}

/// Fit by HOOI, seeding modes 1 and 2 with [`diagonal_deletion_init`].
pub fn hooi(t: &Tensor3, cfg: &HooiConfig) -> Result<TuckerFit> {
    let init = diagonal_deletion_init(t, cfg.ranks)?;
    let mut fit = hooi_with_init(t, cfg, init.factors)?;
    fit.degenerate |= init.degenerate;
    Ok(fit)
}

/// Fit by HOOI from caller-supplied starting factors for modes 1 and 2
/// (each orthonormal, shaped `p_m x ranks[m]`).
pub fn hooi_with_init(
    t: &Tensor3,
    cfg: &HooiConfig,
    init: [Array2<f64>; 2],
) -> Result<TuckerFit> {
    let d = t.dim();
    let dims = [d.0, d.1, d.2];
    validate_ranks(dims, cfg.ranks)?;
    if cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be non-negative, got {}",
            cfg.tol
        )));
    }
    for (which, u) in init.iter().enumerate() {
        let mode = which + 1;
        if u.dim() != (dims[mode], cfg.ranks[mode]) {
            return Err(Error::Shape(format!(
                "init factor for mode {mode} must be {}x{}, got {:?}",
                dims[mode],
                cfg.ranks[mode],
                u.dim()
            )));
        }
        if crate::linalg::orthonormality_defect(&u.view()) > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "init factor for mode {mode} does not have orthonormal columns"
            )));
        }
    }

    let [init1, init2] = init;
    // Mode 0 has no initializer; the first sweep derives it from the others.
    let mut u: [Array2<f64>; 3] = [Array2::zeros((dims[0], cfg.ranks[0])), init1, init2];
    let mut prev: Option<[Array2<f64>; 3]> = None;
    let mut degenerate = false;
    let mut objective_trace = Vec::new();
    let mut iterations_run = 0;

    for _sweep in 0..cfg.max_iters {
        for mode in 0..3 {
            let a = &u[(mode + 1) % 3];
            let b = &u[(mode + 2) % 3];
            let m = projected_unfolding(t, a, b, mode);
            let (basis, _sigma, degen) = truncated_basis(&m, cfg.ranks[mode]);
            degenerate |= degen;
            u[mode] = basis;
        }
        iterations_run += 1;

        // Projected energy with the sweep's factors: the norm of the core.
        let m0 = projected_unfolding(t, &u[1], &u[2], 0);
        let core_flat = u[0].t().dot(&m0);
        objective_trace.push(core_flat.iter().map(|x| x * x).sum::<f64>().sqrt());

        let delta = match &prev {
            None => f64::INFINITY,
            Some(p) => {
                let mut worst = 0.0f64;
                for mode in 0..3 {
                    worst = worst.max(linalg::sin_theta(&u[mode], &p[mode])?);
                }
                worst
            }
        };
        prev = Some(u.clone());
        if delta <= cfg.tol {
            break;
        }
    }

    // Final per-mode spectra from the converged factors (the sweep-time
    // values lag one mode update behind).
    let mut mode_singular_values = [
        Array1::zeros(cfg.ranks[0]),
        Array1::zeros(cfg.ranks[1]),
        Array1::zeros(cfg.ranks[2]),
    ];
    for mode in 0..3 {
        let m = projected_unfolding(t, &u[(mode + 1) % 3], &u[(mode + 2) % 3], mode);
        let (_, sigma, _) = crate::linalg::svd_full(&m.view());
        mode_singular_values[mode] = sigma.slice(s![..cfg.ranks[mode]]).to_owned();
    }

    let m0 = projected_unfolding(t, &u[1], &u[2], 0);
    let core_flat = u[0].t().dot(&m0);
    let core = core_flat
        .into_shape_with_order((cfg.ranks[0], cfg.ranks[1], cfg.ranks[2]))
        .expect("contiguous core");
    let denoised = crate::tensor::fast_compose(&core, [&u[0], &u[1], &u[2]]);
    let [u0, u1, u2] = u;
    let factors = TuckerFactors::new(core, [u0, u1, u2])?;

    Ok(TuckerFit {
        factors,
        denoised,
        iterations_run,
        mode_singular_values,
        objective_trace,
        degenerate,
    })
}

/// Eigenvalues (descending, algebraic) of the hollowed Gram matrix of the
/// mode-`mode` unfolding. A visible gap after index r-1 suggests rank r.
pub fn scree(t: &Tensor3, mode: usize) -> Result<Array1<f64>> {
    if mode > 2 {
        return Err(Error::InvalidArgument(format!(
            "mode must be 0, 1, or 2, got {mode}"
        )));
    }
    let mut gram = unfolding_gram(t, mode);
    for i in 0..gram.nrows() {
        gram[[i, i]] = 0.0;
    }
    let (vals, _) = linalg::jacobi_eigh(&gram);
    Ok(vals)
}
