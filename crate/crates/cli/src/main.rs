//! Command-line front end: decompose tensors, run inference on fitted
//! models, drive simulation experiments, and dump scree diagnostics.
//!
//! Thin adapter over the library: every command reads inputs, calls the
//! corresponding library entry points, and serializes results. Indices on
//! the command line and in JSON configs are 1-based; the library is
//! 0-based, and the translation happens exactly once, here.
//!
//! Exit codes: 0 success, 2 user error (bad flags, unreadable input,
//! invalid config), 3 numerical degeneracy.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::{Array1, Array2};

use tensor_infer::hooi::{hooi, scree, HooiConfig};
use tensor_infer::inference::{
    build_context, entry_ci, entry_variance, joint_covariance, joint_region, loading_covariance,
    loading_region, membership_test, pair_difference_ci, pair_difference_variance,
    ConfidenceInterval, Ellipsoid, InferenceContext, PairVarianceForm,
};
use tensor_infer::io::{read_tensor, write_matrix_csv, write_tensor_binary};
use tensor_infer::simulate::{run_experiment, write_points_csv, write_report_csv, SimConfig};
use tensor_infer::tensor::Tensor3;
use tensor_infer::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tensor-infer",
    version,
    about = "Low-rank tensor denoising with entrywise uncertainty quantification"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a Tucker model and write factors, the denoised tensor, and fit
    /// metadata.
    Decompose {
        /// Input tensor (CSV `i,j,k,value` or binary `.t3d`).
        tensor: PathBuf,
        /// Multilinear rank as `r1,r2,r3`.
        #[arg(long)]
        ranks: String,
        /// Sweep cap (default 50).
        #[arg(long)]
        max_iters: Option<usize>,
        /// Convergence threshold on per-mode subspace change (default 1e-8).
        #[arg(long)]
        tol: Option<f64>,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Fit a Tucker model and report a confidence statement for one target.
    Infer {
        /// Input tensor (CSV `i,j,k,value` or binary `.t3d`).
        tensor: PathBuf,
        /// Multilinear rank as `r1,r2,r3`.
        #[arg(long)]
        ranks: String,
        /// Non-coverage level of the interval, region, or test.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        target: Target,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte-Carlo experiment described by a JSON config.
    Simulate {
        /// Experiment description (see `SimConfig`).
        config: PathBuf,
        /// Worker threads for the replicate loop; falls back to the
        /// TENSOR_INFER_THREADS environment variable, then to 1.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory for report.json, report.csv, and points.csv.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Eigenvalues of the hollowed Gram matrix of one unfolding, largest
    /// first, for rank selection by elbow.
    Scree {
        /// Input tensor (CSV `i,j,k,value` or binary `.t3d`).
        tensor: PathBuf,
        /// Mode to unfold (1, 2, or 3).
        #[arg(long)]
        mode: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Exactly one inference target per invocation. All indices 1-based.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct Target {
    /// Confidence interval for one entry, as `i,j,k`.
    #[arg(long)]
    entry: Option<String>,
    /// Confidence region for one factor row, as `mode,row`.
    #[arg(long)]
    loading: Option<String>,
    /// Joint confidence ellipsoid for several entries, as `i,j,k;i,j,k;...`.
    #[arg(long)]
    joint: Option<String>,
    /// Confidence interval for the difference of two entries, as
    /// `i,j,k;i,j,k`.
    #[arg(long)]
    pair: Option<String>,
    /// Test for equal membership profiles of two rows, as `mode,row,row`.
    #[arg(long)]
    membership: Option<String>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        let code = if e.is_degeneracy() { 3 } else { 2 };
        let label = if code == 3 { "degenerate" } else { "invalid_input" };
        eprintln!(
            "{}",
            serde_json::json!({
                "schema": 1,
                "error": { "code": label, "message": e.to_string() }
            })
        );
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Decompose {
            tensor,
            ranks,
            max_iters,
            tol,
            out,
        } => cmd_decompose(&tensor, &ranks, max_iters, tol, &out),
        Cmd::Infer {
            tensor,
            ranks,
            alpha,
            target,
            out,
        } => cmd_infer(&tensor, &ranks, alpha, &target, out.as_deref()),
        Cmd::Simulate {
            config,
            threads,
            out,
        } => cmd_simulate(&config, threads, &out),
        Cmd::Scree { tensor, mode, out } => cmd_scree(&tensor, mode, out.as_deref()),
    }
}

/// Parse a comma-separated list of exactly `N` positive integers.
fn parse_fixed<const N: usize>(text: &str, what: &str) -> Result<[usize; N]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != N {
        return Err(Error::InvalidArgument(format!(
            "{what} needs {N} comma-separated values, got {:?}",
            text
        )));
    }
    let mut out = [0usize; N];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("{what}: cannot parse {:?} as a positive integer", part))
        })?;
    }
    Ok(out)
}

/// 1-based `i,j,k` to a 0-based index triple.
fn parse_triple(text: &str, what: &str) -> Result<[usize; 3]> {
    let raw: [usize; 3] = parse_fixed(text, what)?;
    to_zero_based(&raw, what).map(|v| [v[0], v[1], v[2]])
}

/// Semicolon-separated list of 1-based triples.
fn parse_triples(text: &str, what: &str) -> Result<Vec<[usize; 3]>> {
    text.split(';')
        .map(|chunk| parse_triple(chunk, what))
        .collect()
}

fn to_zero_based(raw: &[usize], what: &str) -> Result<Vec<usize>> {
    raw.iter()
        .map(|&v| {
            v.checked_sub(1).ok_or_else(|| {
                Error::InvalidArgument(format!("{what}: indices are 1-based, got 0"))
            })
        })
        .collect()
}

fn check_mode_flag(mode: usize) -> Result<usize> {
    if (1..=3).contains(&mode) {
        Ok(mode - 1)
    } else {
        Err(Error::InvalidArgument(format!(
            "mode must be 1, 2, or 3, got {mode}"
        )))
    }
}

fn fit_tensor(path: &Path, ranks_text: &str, cfg_edit: impl FnOnce(&mut HooiConfig)) -> Result<(Tensor3, InferenceContext)> {
    let t = read_tensor(path)?;
    let ranks: [usize; 3] = parse_fixed(ranks_text, "--ranks")?;
    let mut cfg = HooiConfig::new(ranks);
    cfg_edit(&mut cfg);
    let fit = hooi(&t, &cfg)?;
    let ctx = build_context(&t, fit)?;
    Ok((t, ctx))
}

fn cmd_decompose(
    tensor: &Path,
    ranks_text: &str,
    max_iters: Option<usize>,
    tol: Option<f64>,
    out: &Path,
) -> Result<()> {
    let t = read_tensor(tensor)?;
    let ranks: [usize; 3] = parse_fixed(ranks_text, "--ranks")?;
    let mut cfg = HooiConfig::new(ranks);
    if let Some(n) = max_iters {
        cfg.max_iters = n;
    }
    if let Some(eps) = tol {
        cfg.tol = eps;
    }
    let fit = hooi(&t, &cfg)?;
    if fit.degenerate {
        return Err(Error::Degenerate(
            "the fit hit a zero singular value; factors are not identified at this rank".into(),
        ));
    }
    std::fs::create_dir_all(out)?;
    let mut factor_files = Vec::new();
    for (k, factor) in fit.factors.factors.iter().enumerate() {
        let name = format!("factor_{}.csv", k + 1);
        let file = File::create(out.join(&name))?;
        write_matrix_csv(BufWriter::new(file), &factor.view())?;
        factor_files.push(name);
    }
    let denoised_name = "denoised.t3d";
    write_tensor_binary(
        BufWriter::new(File::create(out.join(denoised_name))?),
        &fit.denoised,
    )?;
    let dims = t.dim();
    let metadata = serde_json::json!({
        "schema": 1,
        "dims": [dims.0, dims.1, dims.2],
        "ranks": ranks,
        "iterations_run": fit.iterations_run,
        "mode_singular_values": fit.mode_singular_values.iter().map(json_vec1).collect::<Vec<_>>(),
        "objective_trace": fit.objective_trace,
        "outputs": { "factors": factor_files, "denoised": denoised_name },
    });
    write_json(&out.join("decompose.json"), &metadata)
}

fn json_vec1(a: &Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

fn json_vec2(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|row| row.to_vec()).collect()
}

fn json_interval(ci: &ConfidenceInterval) -> serde_json::Value {
    serde_json::json!({
        "lower": ci.lower,
        "upper": ci.upper,
        "level": ci.level,
    })
}

fn json_ellipsoid(region: &Ellipsoid) -> serde_json::Value {
    serde_json::json!({
        "center": json_vec1(&region.center),
        "shape": json_vec2(&region.shape),
        "radius_sq": region.radius_sq,
        "level": region.level,
    })
}

fn cmd_infer(
    tensor: &Path,
    ranks_text: &str,
    alpha: f64,
    target: &Target,
    out: Option<&Path>,
) -> Result<()> {
    let (_, ctx) = fit_tensor(tensor, ranks_text, |_| {})?;
    let report = if let Some(text) = &target.entry {
        let idx = parse_triple(text, "--entry")?;
        let ci = entry_ci(&ctx, idx, alpha)?;
        serde_json::json!({
            "schema": 1,
            "target": "entry",
            "index": [idx[0] + 1, idx[1] + 1, idx[2] + 1],
            "estimate": ci.estimate,
            "variance": entry_variance(&ctx, idx)?,
            "std_err": ci.std_err,
            "interval": json_interval(&ci),
        })
    } else if let Some(text) = &target.loading {
        let raw: [usize; 2] = parse_fixed(text, "--loading")?;
        let mode = check_mode_flag(raw[0])?;
        let row = to_zero_based(&raw[1..], "--loading")?[0];
        let region = loading_region(&ctx, mode, row, alpha)?;
        serde_json::json!({
            "schema": 1,
            "target": "loading",
            "mode": mode + 1,
            "row": row + 1,
            "estimate": json_vec1(&region.center),
            "covariance": json_vec2(&loading_covariance(&ctx, mode, row)?),
            "ellipsoid": json_ellipsoid(&region),
        })
    } else if let Some(text) = &target.joint {
        let indices = parse_triples(text, "--joint")?;
        let region = joint_region(&ctx, &indices, alpha)?;
        serde_json::json!({
            "schema": 1,
            "target": "joint",
            "indices": indices.iter().map(|i| [i[0] + 1, i[1] + 1, i[2] + 1]).collect::<Vec<_>>(),
            "estimate": json_vec1(&region.center),
            "covariance": json_vec2(&joint_covariance(&ctx, &indices)?),
            "ellipsoid": json_ellipsoid(&region),
        })
    } else if let Some(text) = &target.pair {
        let indices = parse_triples(text, "--pair")?;
        if indices.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "--pair needs exactly two triples, got {}",
                indices.len()
            )));
        }
        let form = PairVarianceForm::default();
        let ci = pair_difference_ci(&ctx, indices[0], indices[1], alpha, form)?;
        serde_json::json!({
            "schema": 1,
            "target": "pair",
            "indices": indices.iter().map(|i| [i[0] + 1, i[1] + 1, i[2] + 1]).collect::<Vec<_>>(),
            "estimate": ci.estimate,
            "variance": pair_difference_variance(&ctx, indices[0], indices[1], form)?,
            "std_err": ci.std_err,
            "interval": json_interval(&ci),
        })
    } else if let Some(text) = &target.membership {
        let raw: [usize; 3] = parse_fixed(text, "--membership")?;
        let mode = check_mode_flag(raw[0])?;
        let rows = to_zero_based(&raw[1..], "--membership")?;
        let test = membership_test(&ctx, mode, rows[0], rows[1], alpha)?;
        serde_json::json!({
            "schema": 1,
            "target": "membership",
            "mode": mode + 1,
            "rows": [rows[0] + 1, rows[1] + 1],
            "statistic": test.statistic,
            "df": test.df,
            "p_value": test.p_value,
            "alpha": test.alpha,
            "reject": test.reject,
        })
    } else {
        unreachable!("clap enforces exactly one target");
    };
    match out {
        Some(path) => write_json(path, &report),
        None => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(json_error)?
            );
            Ok(())
        }
    }
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Parse(format!("report serialization failed: {e}"))
}

fn cmd_simulate(config: &Path, threads: Option<usize>, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config)?;
    let cfg: SimConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("config {}: {e}", config.display())))?;
    let threads = match threads {
        Some(n) => n,
        None => match std::env::var("TENSOR_INFER_THREADS") {
            Ok(value) => value.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "TENSOR_INFER_THREADS must be a positive integer, got {value:?}"
                ))
            })?,
            Err(_) => 1,
        },
    };
    let report = run_experiment(&cfg, threads)?;
    std::fs::create_dir_all(out)?;
    let report_value = serde_json::to_value(&report).map_err(json_error)?;
    write_json(&out.join("report.json"), &report_value)?;
    let csv = File::create(out.join("report.csv"))?;
    write_report_csv(BufWriter::new(csv), &report)?;
    if let Some(points) = &report.standardized_points {
        let file = File::create(out.join("points.csv"))?;
        write_points_csv(BufWriter::new(file), points)?;
    }
    Ok(())
}

fn cmd_scree(tensor: &Path, mode: usize, out: Option<&Path>) -> Result<()> {
    let t = read_tensor(tensor)?;
    let mode = check_mode_flag(mode)?;
    let vals = scree(&t, mode)?;
    let mut body = String::from("index,eigenvalue\n");
    for (i, v) in vals.iter().enumerate() {
        body.push_str(&format!("{},{}\n", i + 1, v));
    }
    match out {
        Some(path) => {
            std::fs::write(path, body)?;
            Ok(())
        }
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    let text = serde_json::to_string_pretty(value).map_err(json_error)?;
    writeln!(file, "{text}")?;
    Ok(())
}
