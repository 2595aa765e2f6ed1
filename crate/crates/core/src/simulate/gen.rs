//! Data generators for the Monte-Carlo experiments: mixed-membership block
//! tensors with known exact factorizations, heteroskedastic Gaussian noise,
//! and Bernoulli observations.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize_columns, singular_values, svd_full};
use crate::simulate::rng::{stream, tag, Sampler};
use crate::tensor::{fast_compose, matricize, mode_product, Tensor3, TuckerFactors};

/// How the `r x r x r` block-mean tensor is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoreKind {
    /// i.i.d. standard normal entries; the composed tensor is rescaled so
    /// its smallest mode-wise singular value is exactly 1.
    Gaussian,
    /// Entries recycled from `{.2, .3, .4, .5, .6, .8, .9}` in canonical
    /// index order, scaled by `rho`; no rescaling, so all composed entries
    /// stay in `[0, 1]` and can serve as Bernoulli means.
    Recycled { rho: f64 },
}

/// Options controlling the membership matrices.
#[derive(Debug, Clone)]
pub struct SignalOptions {
    /// Plant an identity block in each membership matrix so every component
    /// has a pure row. In mode 0 the block sits directly below any
    /// overridden rows; in the other modes it occupies the first `r` rows.
    pub pure_nodes: bool,
    /// Replace leading rows of the mode-0 membership matrix with explicit
    /// probability rows; entry `m` of the list replaces row `m`.
    pub mode0_overrides: Vec<Vec<f64>>,
    pub core: CoreKind,
}

impl Default for SignalOptions {
    fn default() -> Self {
        SignalOptions {
            pure_nodes: false,
            mode0_overrides: Vec::new(),
            core: CoreKind::Gaussian,
        }
    }
}

/// A generated mean tensor with its exact factorization and the membership
/// matrices that produced it.
#[derive(Debug, Clone)]
pub struct Signal {
    pub tensor: Tensor3,
    /// Exact orthonormal-factor decomposition of `tensor`; the factors are
    /// the leading singular vectors of each unfolding.
    pub truth: TuckerFactors,
    /// Row-stochastic membership matrices, one per mode.
    pub memberships: [Array2<f64>; 3],
}

const RECYCLED_VALUES: [f64; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 0.9];
const MAX_REDRAWS: u64 = 16;

fn tensor_from(dims: (usize, usize, usize), mut f: impl FnMut() -> f64) -> Tensor3 {
    // Canonical (row-major) fill order, independent of iterator internals.
    let n = dims.0 * dims.1 * dims.2;
    let data: Vec<f64> = (0..n).map(|_| f()).collect();
    Array3::from_shape_vec(dims, data).expect("length matches shape")
}

fn draw_core(r: usize, kind: CoreKind, s: &mut Sampler) -> Tensor3 {
    match kind {
        CoreKind::Gaussian => tensor_from((r, r, r), || s.standard_normal()),
        CoreKind::Recycled { rho } => {
            let mut next = 0usize;
            tensor_from((r, r, r), || {
                let v = rho * RECYCLED_VALUES[next % RECYCLED_VALUES.len()];
                next += 1;
                v
            })
        }
    }
}

fn check_options(p: usize, r: usize, opts: &SignalOptions) -> Result<()> {
    if r == 0 || r > p {
        return Err(Error::InvalidArgument(format!(
            "rank must satisfy 1 <= r <= p, got r = {r}, p = {p}"
        )));
    }
    if let CoreKind::Recycled { rho } = opts.core {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Bernoulli scale must lie in (0, 1], got {rho}"
            )));
        }
    }
    for (m, row) in opts.mode0_overrides.iter().enumerate() {
        if row.len() != r {
            return Err(Error::InvalidArgument(format!(
                "override for row {m} has {} entries, expected {r}",
                row.len()
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "override for row {m} is not a probability vector"
            )));
        }
    }
    let reserved = opts.mode0_overrides.len() + if opts.pure_nodes { r } else { 0 };
    if reserved > p {
        return Err(Error::InvalidArgument(format!(
            "{} overridden plus pure rows do not fit in p = {p}",
            reserved
        )));
    }
    Ok(())
}

fn draw_memberships(p: usize, r: usize, opts: &SignalOptions, s: &mut Sampler) -> [Array2<f64>; 3] {
    let mut pis: Vec<Array2<f64>> = Vec::with_capacity(3);
    for mode in 0..3 {
        let mut pi = Array2::<f64>::zeros((p, r));
        for i in 0..p {
            for (c, v) in s.dirichlet_row(r).into_iter().enumerate() {
                pi[[i, c]] = v;
            }
        }
        if opts.pure_nodes {
            let shift = if mode == 0 { opts.mode0_overrides.len() } else { 0 };
            for c in 0..r {
                let mut row = pi.row_mut(shift + c);
                row.fill(0.0);
                row[c] = 1.0;
            }
        }
        if mode == 0 {
            for (i, vals) in opts.mode0_overrides.iter().enumerate() {
                for (c, &v) in vals.iter().enumerate() {
                    pi[[i, c]] = v;
                }
            }
        }
        pis.push(pi);
    }
    pis.try_into().expect("three modes")
}

/// Draw a mixed-membership Tucker signal `core x_k Pi_k` together with its
/// exact orthonormal factorization.
///
/// The factorization is computed without touching `p^2`-sized objects: thin
/// QR of each membership matrix reduces every unfolding's singular structure
/// to an `r x r^2` problem. A draw whose smallest mode-wise singular value
/// vanishes is retried with an incremented seed, a bounded number of times.
pub fn gen_signal(p: usize, r: usize, seed: u64, opts: &SignalOptions) -> Result<Signal> {
    check_options(p, r, opts)?;
    for attempt in 0..MAX_REDRAWS {
        let mut s = stream(seed.wrapping_add(attempt), &[tag::SIGNAL]);
        let mut core = draw_core(r, opts.core, &mut s);
        let memberships = draw_memberships(p, r, opts, &mut s);

        // Thin QR per mode; a rank-deficient membership draw means retry.
        let mut qs: Vec<Array2<f64>> = Vec::with_capacity(3);
        let mut rs: Vec<Array2<f64>> = Vec::with_capacity(3);
        let mut ok = true;
        for pi in &memberships {
            let mut q = pi.clone();
            if orthonormalize_columns(&mut q).is_err() {
                ok = false;
                break;
            }
            rs.push(q.t().dot(pi));
            qs.push(q);
        }
        if !ok {
            continue;
        }

        // Projected core: R_0 x R_1 x R_2 applied to the block means. Its
        // unfoldings carry the exact singular values of the full tensor.
        let project = |c: &Tensor3| -> Tensor3 {
            let mut t = c.clone();
            for m in 0..3 {
                t = mode_product(&t, &rs[m].view(), m).expect("square factors");
            }
            t
        };
        let projected = project(&core);
        let spectra: Vec<Vec<f64>> = (0..3)
            .map(|m| singular_values(&matricize(&projected, m).unwrap()))
            .collect();
        let lambda_min = spectra
            .iter()
            .map(|sv| sv[r - 1])
            .fold(f64::INFINITY, f64::min);
        let lambda_max = spectra.iter().map(|sv| sv[0]).fold(0.0, f64::max);
        if !(lambda_min > 1e-12 * lambda_max.max(1e-300)) {
            continue;
        }

        if matches!(opts.core, CoreKind::Gaussian) {
            core.mapv_inplace(|x| x / lambda_min);
        }
        let projected = project(&core);
        let tensor = fast_compose(&core, [&memberships[0], &memberships[1], &memberships[2]]);

        // Truth factors: left singular vectors of each unfolding, assembled
        // from the small projected problem. The exact Tucker core follows by
        // contracting the block means with (u_small^T R_k).
        let mut factors: Vec<Array2<f64>> = Vec::with_capacity(3);
        let mut truth_core = core.clone();
        for m in 0..3 {
            let a = matricize(&projected, m).unwrap();
            let (u_small, _, _) = svd_full(&a.view());
            factors.push(qs[m].dot(&u_small));
            let contraction = u_small.t().dot(&rs[m]);
            truth_core = mode_product(&truth_core, &contraction.view(), m)?;
        }
        let truth = TuckerFactors::new(
            truth_core,
            factors.try_into().expect("three modes"),
        )?;
        return Ok(Signal {
            tensor,
            truth,
            memberships,
        });
    }
    Err(Error::Degenerate(format!(
        "no non-degenerate signal draw in {MAX_REDRAWS} attempts"
    )))
}

/// Heteroskedastic Gaussian noise: per-entry standard deviations drawn once
/// from `U(0, sigma)` under a config-level stream, the noise itself from a
/// replicate-level stream. Returns `(noise, std_devs)`.
pub fn gen_noise_gaussian(
    dims: [usize; 3],
    sigma: f64,
    seed: u64,
    replicate: u64,
) -> Result<(Tensor3, Tensor3)> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise scale must be positive, got {sigma}"
        )));
    }
    let shape = (dims[0], dims[1], dims[2]);
    let mut scale_stream = stream(seed, &[tag::NOISE_SCALE]);
    let stds = tensor_from(shape, || sigma * scale_stream.uniform01());
    let mut noise_stream = stream(seed, &[tag::REPLICATE, replicate]);
    let mut std_iter = stds.iter();
    let noise = tensor_from(shape, || std_iter.next().unwrap() * noise_stream.standard_normal());
    Ok((noise, stds))
}

/// Observe each entry of a mean tensor in `[0, 1]` as an independent
/// Bernoulli draw, replicate-seeded.
pub fn gen_bernoulli_observation(t: &Tensor3, seed: u64, replicate: u64) -> Result<Tensor3> {
    if t.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::InvalidArgument(
            "Bernoulli means must lie in [0, 1]".into(),
        ));
    }
    let mut s = stream(seed, &[tag::REPLICATE, replicate]);
    let mut means = t.iter();
    Ok(tensor_from(t.dim(), || {
        let m = *means.next().unwrap();
        if s.uniform01() < m {
            1.0
        } else {
            0.0
        }
    }))
}
