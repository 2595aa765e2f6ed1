//! Monte-Carlo harness measuring empirical coverage and power of the
//! denoise-then-infer pipeline.
//!
//! One experiment = one mean tensor (drawn once per config) observed under
//! fresh replicate noise. Each replicate refits the model, rebuilds the
//! inference context, and records a single boolean: did the configured
//! region or interval cover its target, or did the configured test reject.
//! Replicates run in parallel; every random draw comes from a stream keyed
//! by `(seed, purpose, replicate)`, so reports are bit-identical regardless
//! of worker count.

pub mod gen;
pub(crate) mod rng;

use std::io::Write;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hooi::{hooi, HooiConfig};
use crate::inference::{
    build_context, entry_ci, joint_region, loading_region, membership_test, pair_difference_ci,
    region_contains, PairVarianceForm,
};
use crate::linalg::{align, floored_spd_inverse_sqrt};
use crate::simulate::gen::{
    gen_bernoulli_observation, gen_noise_gaussian, gen_signal, CoreKind, Signal, SignalOptions,
};

/// Which statistic a run measures.
///
/// Serialized externally tagged, so unit variants are plain strings
/// (`"entry_coverage"`) and parameterized ones are single-key objects
/// (`{"membership_power": {"epsilons": [0.0, 0.05]}}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Confidence-region coverage for the first row of the mode-0 factor,
    /// after sign alignment against the true factor.
    LoadingCoverage,
    /// Confidence-interval coverage for the (1,1,1) entry.
    EntryCoverage,
    /// Confidence-interval coverage for the difference of entries (1,1,1)
    /// and (1,2,2).
    PairCoverage,
    /// Rejection rate of the membership test between mode-0 rows 1 and 2,
    /// whose true membership profiles differ by `epsilon`; `epsilon = 0`
    /// measures size, positive values measure power.
    MembershipPower { epsilons: Vec<f64> },
    /// Joint-region coverage over an explicit set of entries (1-based),
    /// also emitting each replicate's standardized estimate.
    JointCoverage { indices: Vec<[usize; 3]> },
}

/// Observation models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Additive Gaussian noise with per-entry standard deviations drawn
    /// uniformly from `(0, p^-gamma)`.
    GaussianHetero,
    /// Entrywise Bernoulli observations of a mean tensor in `[0, 1]`,
    /// built from block means scaled by `rho`.
    Bernoulli,
}

/// Full description of one experiment, deserializable from JSON with these
/// exact field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Extent of every mode.
    pub p: usize,
    /// Multilinear rank of every mode.
    pub r: usize,
    /// Signal-to-noise exponent for Gaussian noise: `lambda/sigma = p^gamma`
    /// with `lambda = 1` enforced by the generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Bernoulli mean scale in `(0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    pub replicates: usize,
    /// Nominal non-coverage / test level.
    pub alpha: f64,
    pub seed: u64,
    pub experiment: Experiment,
    pub noise: NoiseKind,
    /// Variance form for pair experiments; defaults to the variance of the
    /// difference (covariance subtracted twice).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_form: Option<PairVarianceForm>,
}

/// One table cell: a single (config, epsilon) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub p: usize,
    /// `gamma` for Gaussian runs, `rho` for Bernoulli runs.
    pub gamma_or_rho: f64,
    /// Membership separation; absent for coverage experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Mean of the replicate booleans over non-degenerate replicates;
    /// absent when every replicate was degenerate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    /// Binomial standard error `sqrt(mean (1-mean) / n_effective)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub replicates: usize,
    pub degenerate_count: usize,
}

/// Experiment output: one cell per epsilon (or a single cell), plus the
/// standardized joint points when the experiment produces them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema: u32,
    pub cells: Vec<SimCell>,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardized_points: Option<Vec<Vec<f64>>>,
}

impl SimConfig {
    /// Reject configurations the protocol cannot run.
    pub fn validate(&self) -> Result<()> {
        if self.r == 0 || self.r > self.p {
            return Err(Error::InvalidArgument(format!(
                "rank must satisfy 1 <= r <= p, got r = {}, p = {}",
                self.r, self.p
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        match self.noise {
            NoiseKind::GaussianHetero => {
                if self.rho.is_some() {
                    return Err(Error::InvalidArgument(
                        "rho is a Bernoulli parameter; Gaussian runs take gamma".into(),
                    ));
                }
                match self.gamma {
                    Some(g) if g > 0.0 => {}
                    _ => {
                        return Err(Error::InvalidArgument(
                            "Gaussian noise needs gamma > 0".into(),
                        ))
                    }
                }
            }
            NoiseKind::Bernoulli => {
                if self.gamma.is_some() {
                    return Err(Error::InvalidArgument(
                        "gamma is a Gaussian parameter; Bernoulli runs take rho".into(),
                    ));
                }
                match self.rho {
                    Some(rho) if rho > 0.0 && rho <= 1.0 => {}
                    _ => {
                        return Err(Error::InvalidArgument(
                            "Bernoulli noise needs rho in (0, 1]".into(),
                        ))
                    }
                }
            }
        }
        match &self.experiment {
            Experiment::MembershipPower { epsilons } => {
                if self.r != 3 {
                    return Err(Error::InvalidArgument(
                        "the membership experiment's override rows are 3-vectors; r must be 3"
                            .into(),
                    ));
                }
                if self.p < self.r + 2 {
                    return Err(Error::InvalidArgument(
                        "membership experiment needs p >= r + 2 for overrides plus pure rows"
                            .into(),
                    ));
                }
                if epsilons.is_empty() {
                    return Err(Error::InvalidArgument(
                        "membership experiment needs at least one epsilon".into(),
                    ));
                }
                for &eps in epsilons {
                    if !(0.0..=1.2).contains(&eps) {
                        return Err(Error::InvalidArgument(format!(
                            "epsilon must lie in [0, 1.2] to keep override rows probabilities, got {eps}"
                        )));
                    }
                }
            }
            Experiment::JointCoverage { indices } => {
                if indices.is_empty() {
                    return Err(Error::InvalidArgument(
                        "joint experiment needs at least one entry".into(),
                    ));
                }
                for idx in indices {
                    if idx.iter().any(|&i| i == 0 || i > self.p) {
                        return Err(Error::InvalidArgument(format!(
                            "joint index ({}, {}, {}) is out of the 1-based range 1..={}",
                            idx[0], idx[1], idx[2], self.p
                        )));
                    }
                }
                for (s, idx) in indices.iter().enumerate() {
                    if indices[..s].contains(idx) {
                        return Err(Error::InvalidArgument(format!(
                            "duplicate joint index ({}, {}, {})",
                            idx[0], idx[1], idx[2]
                        )));
                    }
                }
            }
            Experiment::PairCoverage if self.p < 2 => {
                return Err(Error::InvalidArgument(
                    "pair experiment needs p >= 2".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    fn gamma_or_rho(&self) -> f64 {
        match self.noise {
            NoiseKind::GaussianHetero => self.gamma.expect("validated"),
            NoiseKind::Bernoulli => self.rho.expect("validated"),
        }
    }

    fn core_kind(&self) -> CoreKind {
        match self.noise {
            NoiseKind::GaussianHetero => CoreKind::Gaussian,
            NoiseKind::Bernoulli => CoreKind::Recycled {
                rho: self.rho.expect("validated"),
            },
        }
    }
}

/// What one cell measures, with indices already 0-based.
enum CellSpec {
    Loading,
    Entry,
    Pair,
    Membership { epsilon: f64 },
    Joint { indices: Vec<[usize; 3]> },
}

fn membership_overrides(epsilon: f64) -> Vec<Vec<f64>> {
    vec![
        vec![0.2, 0.6, 0.2],
        vec![0.2, 0.6 - epsilon / 2.0, 0.2 + epsilon / 2.0],
    ]
}

/// One replicate's account: `event` is `None` when the replicate hit a
/// numerical degeneracy and must be excluded (but counted).
struct Outcome {
    event: Option<bool>,
    point: Option<Vec<f64>>,
}

/// Map degeneracies to a recordable non-event; propagate real errors.
fn soften<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e) if e.is_degeneracy() => Ok(None),
        Err(e) => Err(e),
    }
}

fn one_replicate(
    cfg: &SimConfig,
    spec: &CellSpec,
    signal: &Signal,
    rep: u64,
) -> Result<Outcome> {
    let degenerate = Outcome {
        event: None,
        point: None,
    };
    let dims = {
        let d = signal.tensor.dim();
        [d.0, d.1, d.2]
    };
    let observed = match cfg.noise {
        NoiseKind::GaussianHetero => {
            let sigma = (cfg.p as f64).powf(-cfg.gamma.expect("validated"));
            let (noise, _) = gen_noise_gaussian(dims, sigma, cfg.seed, rep)?;
            &signal.tensor + &noise
        }
        NoiseKind::Bernoulli => gen_bernoulli_observation(&signal.tensor, cfg.seed, rep)?,
    };
    let ranks = [cfg.r; 3];
    let fit = match soften(hooi(&observed, &HooiConfig::new(ranks)))? {
        Some(f) => f,
        None => return Ok(degenerate),
    };
    let ctx = match soften(build_context(&observed, fit))? {
        Some(c) => c,
        None => return Ok(degenerate),
    };
    let evaluated: Result<(bool, Option<Vec<f64>>)> = (|| match spec {
        CellSpec::Loading => {
            let region = loading_region(&ctx, 0, 0, cfg.alpha)?;
            let w = align(&ctx.fit.factors.factors[0], &signal.truth.factors[0])?;
            let aligned = signal.truth.factors[0].dot(&w);
            let covered = region_contains(&region, &aligned.row(0).to_owned())?;
            Ok((covered, None))
        }
        CellSpec::Entry => {
            let truth = signal.tensor[[0, 0, 0]];
            let ci = entry_ci(&ctx, [0, 0, 0], cfg.alpha)?;
            Ok((ci.lower <= truth && truth <= ci.upper, None))
        }
        CellSpec::Pair => {
            let truth = signal.tensor[[0, 0, 0]] - signal.tensor[[0, 1, 1]];
            let form = cfg.pair_form.unwrap_or_default();
            let ci = pair_difference_ci(&ctx, [0, 0, 0], [0, 1, 1], cfg.alpha, form)?;
            Ok((ci.lower <= truth && truth <= ci.upper, None))
        }
        CellSpec::Membership { .. } => {
            let test = membership_test(&ctx, 0, 0, 1, cfg.alpha)?;
            Ok((test.reject, None))
        }
        CellSpec::Joint { indices } => {
            let region = joint_region(&ctx, indices, cfg.alpha)?;
            let truth: Array1<f64> = indices.iter().map(|&idx| signal.tensor[idx]).collect();
            let covered = region_contains(&region, &truth)?;
            let whiten = floored_spd_inverse_sqrt(&region.shape, 1e-14)?;
            let standardized = whiten.dot(&(&region.center - &truth));
            Ok((covered, Some(standardized.to_vec())))
        }
    })();
    match soften(evaluated)? {
        Some((event, point)) => Ok(Outcome {
            event: Some(event),
            point,
        }),
        None => Ok(degenerate),
    }
}

fn run_cell(
    cfg: &SimConfig,
    pool: &rayon::ThreadPool,
    spec: &CellSpec,
) -> Result<(SimCell, Vec<Vec<f64>>)> {
    let opts = SignalOptions {
        pure_nodes: matches!(spec, CellSpec::Membership { .. }),
        mode0_overrides: match spec {
            CellSpec::Membership { epsilon } => membership_overrides(*epsilon),
            _ => Vec::new(),
        },
        core: cfg.core_kind(),
    };
    let signal = gen_signal(cfg.p, cfg.r, cfg.seed, &opts)?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|rep| one_replicate(cfg, spec, &signal, rep))
            .collect::<Result<Vec<_>>>()
    })?;
    let degenerate_count = outcomes.iter().filter(|o| o.event.is_none()).count();
    let effective = cfg.replicates - degenerate_count;
    let (mean, std) = if effective > 0 {
        let hits = outcomes
            .iter()
            .filter(|o| o.event == Some(true))
            .count();
        let m = hits as f64 / effective as f64;
        (Some(m), Some((m * (1.0 - m) / effective as f64).sqrt()))
    } else {
        (None, None)
    };
    let points: Vec<Vec<f64>> = outcomes.into_iter().filter_map(|o| o.point).collect();
    Ok((
        SimCell {
            p: cfg.p,
            gamma_or_rho: cfg.gamma_or_rho(),
            epsilon: match spec {
                CellSpec::Membership { epsilon } => Some(*epsilon),
                _ => None,
            },
            mean,
            std,
            replicates: cfg.replicates,
            degenerate_count,
        },
        points,
    ))
}

/// Run every cell of an experiment on `threads` workers and aggregate.
pub fn run_experiment(cfg: &SimConfig, threads: usize) -> Result<SimReport> {
    cfg.validate()?;
    if threads == 0 {
        return Err(Error::InvalidArgument("thread count must be at least 1".into()));
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let mut cells = Vec::new();
    let mut standardized_points = None;
    match &cfg.experiment {
        Experiment::MembershipPower { epsilons } => {
            for &epsilon in epsilons {
                let (cell, _) = run_cell(cfg, &pool, &CellSpec::Membership { epsilon })?;
                cells.push(cell);
            }
        }
        Experiment::LoadingCoverage => {
            cells.push(run_cell(cfg, &pool, &CellSpec::Loading)?.0);
        }
        Experiment::EntryCoverage => {
            cells.push(run_cell(cfg, &pool, &CellSpec::Entry)?.0);
        }
        Experiment::PairCoverage => {
            cells.push(run_cell(cfg, &pool, &CellSpec::Pair)?.0);
        }
        Experiment::JointCoverage { indices } => {
            let zero_based: Vec<[usize; 3]> = indices
                .iter()
                .map(|idx| [idx[0] - 1, idx[1] - 1, idx[2] - 1])
                .collect();
            let (cell, points) = run_cell(
                cfg,
                &pool,
                &CellSpec::Joint {
                    indices: zero_based,
                },
            )?;
            cells.push(cell);
            standardized_points = Some(points);
        }
    }
    Ok(SimReport {
        schema: 1,
        cells,
        wall_time_secs: started.elapsed().as_secs_f64(),
        standardized_points,
    })
}

/// Tabular report: one row per cell. The `epsilon` column is empty for
/// coverage cells; an all-degenerate cell prints `NA` statistics.
pub fn write_report_csv(mut writer: impl Write, report: &SimReport) -> Result<()> {
    writeln!(
        writer,
        "p,gamma_or_rho,epsilon,mean,std,replicates,degenerate_count"
    )?;
    for c in &report.cells {
        writeln!(
            writer,
            "{},{},{},{},{},{},{}",
            c.p,
            c.gamma_or_rho,
            c.epsilon.map(|e| e.to_string()).unwrap_or_default(),
            c.mean.map(|m| m.to_string()).unwrap_or_else(|| "NA".into()),
            c.std.map(|s| s.to_string()).unwrap_or_else(|| "NA".into()),
            c.replicates,
            c.degenerate_count
        )?;
    }
    Ok(())
}

/// Standardized joint sample points, one replicate per row.
pub fn write_points_csv(mut writer: impl Write, points: &[Vec<f64>]) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=dim).map(|d| format!("x{d}")).collect();
    writeln!(writer, "{}", header.join(","))?;
    for point in points {
        let row: Vec<String> = point.iter().map(|v| v.to_string()).collect();
        writeln!(writer, "{}", row.join(","))?;
    }
    Ok(())
}
