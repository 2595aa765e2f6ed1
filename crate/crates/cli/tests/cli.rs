//! End-to-end tests of the binary: every command is exercised through a
//! real process, and results are checked against direct library calls on
//! the same inputs.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::process::{Command, Output};

use ndarray::{Array1, Array2};
use tensor_infer::hooi::{hooi, HooiConfig};
use tensor_infer::io::{read_tensor, write_tensor_binary, write_tensor_csv};
use tensor_infer::tensor::Tensor3;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensor-infer"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("no signal")
}

/// Deterministic full-rank-(2,2,2) tensor: two separable terms from fixed
/// smooth profiles, optionally with a small deterministic perturbation.
fn two_term_tensor(p: usize, wobble: f64) -> Tensor3 {
    let profile = |scale: f64, shift: f64| -> Vec<f64> {
        (0..p)
            .map(|i| (scale * (i as f64) + shift).sin() + 0.1)
            .collect()
    };
    let (u1, v1, w1) = (profile(0.7, 0.3), profile(1.1, 0.9), profile(0.4, 1.7));
    let (u2, v2, w2) = (profile(1.9, 1.1), profile(0.2, 0.5), profile(1.3, 0.2));
    Tensor3::from_shape_fn((p, p, p), |(i, j, k)| {
        2.0 * u1[i] * v1[j] * w1[k]
            + 2.0 * u2[i] * v2[j] * w2[k]
            + wobble * ((3.0 * i as f64 + 5.0 * j as f64 + 7.0 * k as f64).sin())
    })
}

fn write_csv(path: &Path, t: &Tensor3) {
    write_tensor_csv(BufWriter::new(File::create(path).unwrap()), t).unwrap();
}

fn parse_json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
fn decompose_matches_direct_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let t = two_term_tensor(9, 0.0);
    let input = dir.path().join("t.t3d");
    write_tensor_binary(BufWriter::new(File::create(&input).unwrap()), &t).unwrap();

    let out_dir = dir.path().join("fit");
    run_ok(
        bin()
            .args(["decompose"])
            .arg(&input)
            .args(["--ranks", "2,2,2", "--out"])
            .arg(&out_dir),
    );

    let denoised = read_tensor(out_dir.join("denoised.t3d")).unwrap();
    let fit = hooi(&t, &HooiConfig::new([2, 2, 2])).unwrap();
    assert_eq!(
        denoised.as_slice().unwrap(),
        fit.denoised.as_slice().unwrap(),
        "the command must be a thin adapter over the library"
    );

    let meta = parse_json(&std::fs::read(out_dir.join("decompose.json")).unwrap());
    assert_eq!(meta["schema"], 1);
    assert_eq!(meta["iterations_run"], fit.iterations_run);
    assert_eq!(meta["dims"], serde_json::json!([9, 9, 9]));
    assert_eq!(meta["objective_trace"].as_array().unwrap().len(), fit.objective_trace.len());

    for k in 1..=3 {
        let text = std::fs::read_to_string(out_dir.join(format!("factor_{k}.csv"))).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 9);
        assert_eq!(rows[0].split(',').count(), 2);
    }

    let rel = {
        let num = (&denoised - &t).mapv(|x| x * x).sum().sqrt();
        num / t.mapv(|x| x * x).sum().sqrt()
    };
    assert!(rel <= 1e-10, "noiseless input is recovered exactly, got {rel}");
}

#[test]
fn decompose_usage_and_degeneracy_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&path, &two_term_tensor(6, 0.0));

    let mut missing_ranks = bin();
    missing_ranks.arg("decompose").arg(&path);
    assert_eq!(exit_code(&mut missing_ranks), 2);

    let mut bad_ranks = bin();
    bad_ranks
        .arg("decompose")
        .arg(&path)
        .args(["--ranks", "2,x,2"]);
    assert_eq!(exit_code(&mut bad_ranks), 2);

    let mut missing_file = bin();
    missing_file
        .arg("decompose")
        .arg(dir.path().join("absent.csv"))
        .args(["--ranks", "2,2,2"]);
    assert_eq!(exit_code(&mut missing_file), 2);

    let zeros = dir.path().join("zeros.csv");
    write_csv(&zeros, &Tensor3::zeros((5, 5, 5)));
    let mut degenerate = bin();
    degenerate
        .arg("decompose")
        .arg(&zeros)
        .args(["--ranks", "2,2,2", "--out"])
        .arg(dir.path().join("z"));
    let out = degenerate.output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let err = parse_json(&out.stderr);
    assert_eq!(err["error"]["code"], "degenerate");
}

#[test]
fn infer_entry_interval_brackets_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&path, &two_term_tensor(10, 1e-3));

    let out = run_ok(
        bin()
            .arg("infer")
            .arg(&path)
            .args(["--ranks", "2,2,2", "--entry", "1,1,1"]),
    );
    let report = parse_json(&out.stdout);
    assert_eq!(report["schema"], 1);
    assert_eq!(report["target"], "entry");
    let estimate = report["estimate"].as_f64().unwrap();
    let lower = report["interval"]["lower"].as_f64().unwrap();
    let upper = report["interval"]["upper"].as_f64().unwrap();
    assert!(lower < estimate && estimate < upper);
    assert!(report["variance"].as_f64().unwrap() > 0.0);
    assert_eq!(report["interval"]["level"], 0.95);
}

#[test]
fn infer_rejects_bad_targets() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&path, &two_term_tensor(8, 1e-3));

    let mut duplicate_pair = bin();
    duplicate_pair
        .arg("infer")
        .arg(&path)
        .args(["--ranks", "2,2,2", "--pair", "1,1,1;1,1,1"]);
    assert_eq!(exit_code(&mut duplicate_pair), 2);

    let mut no_target = bin();
    no_target.arg("infer").arg(&path).args(["--ranks", "2,2,2"]);
    assert_eq!(exit_code(&mut no_target), 2);

    let mut two_targets = bin();
    two_targets.arg("infer").arg(&path).args([
        "--ranks",
        "2,2,2",
        "--entry",
        "1,1,1",
        "--pair",
        "1,1,1;1,2,2",
    ]);
    assert_eq!(exit_code(&mut two_targets), 2);

    let mut zero_index = bin();
    zero_index
        .arg("infer")
        .arg(&path)
        .args(["--ranks", "2,2,2", "--entry", "0,1,1"]);
    assert_eq!(exit_code(&mut zero_index), 2);

    let mut out_of_range = bin();
    out_of_range
        .arg("infer")
        .arg(&path)
        .args(["--ranks", "2,2,2", "--entry", "9,1,1"]);
    assert_eq!(exit_code(&mut out_of_range), 2);
}

#[test]
fn infer_membership_and_joint_report_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    write_csv(&path, &two_term_tensor(10, 1e-3));

    let out = run_ok(bin().arg("infer").arg(&path).args([
        "--ranks",
        "2,2,2",
        "--membership",
        "1,1,2",
    ]));
    let report = parse_json(&out.stdout);
    assert_eq!(report["target"], "membership");
    assert_eq!(report["df"], 2);
    let p_value = report["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p_value));
    assert_eq!(
        report["reject"].as_bool().unwrap(),
        p_value <= report["alpha"].as_f64().unwrap()
    );

    let out = run_ok(bin().arg("infer").arg(&path).args([
        "--ranks",
        "2,2,2",
        "--joint",
        "1,1,1;2,2,2;1,2,2",
        "--alpha",
        "0.1",
    ]));
    let report = parse_json(&out.stdout);
    assert_eq!(report["target"], "joint");
    assert_eq!(report["estimate"].as_array().unwrap().len(), 3);
    let shape = report["covariance"].as_array().unwrap();
    assert_eq!(shape.len(), 3);
    assert_eq!(shape[0].as_array().unwrap().len(), 3);
    assert_eq!(report["ellipsoid"]["level"], 0.9);
    assert!(report["ellipsoid"]["radius_sq"].as_f64().unwrap() > 0.0);
}

#[test]
fn infer_loading_matches_library_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let t = two_term_tensor(9, 1e-3);
    let path = dir.path().join("t.csv");
    write_csv(&path, &t);

    let out = run_ok(bin().arg("infer").arg(&path).args([
        "--ranks",
        "2,2,2",
        "--loading",
        "2,3",
    ]));
    let report = parse_json(&out.stdout);
    assert_eq!(report["target"], "loading");
    assert_eq!(report["mode"], 2);
    assert_eq!(report["row"], 3);

    let fit = hooi(&t, &HooiConfig::new([2, 2, 2])).unwrap();
    let ctx = tensor_infer::inference::build_context(&t, fit).unwrap();
    let gamma = tensor_infer::inference::loading_covariance(&ctx, 1, 2).unwrap();
    let reported: Vec<Vec<f64>> = report["covariance"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect())
        .collect();
    let reported = Array2::from_shape_vec(
        (2, 2),
        reported.into_iter().flatten().collect::<Vec<f64>>(),
    )
    .unwrap();
    assert_eq!(
        gamma.as_slice().unwrap(),
        reported.as_slice().unwrap(),
        "JSON must carry the library's numbers exactly"
    );

    let center: Array1<f64> = report["estimate"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(
        center.as_slice().unwrap(),
        ctx.fit.factors.factors[1].row(2).to_owned().as_slice().unwrap()
    );
}

#[test]
fn simulate_is_deterministic_and_validates_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{"p": 8, "r": 2, "gamma": 0.9, "replicates": 6, "alpha": 0.05,
            "seed": 41, "experiment": "entry_coverage", "noise": "gaussian_hetero"}"#,
    )
    .unwrap();

    let one = dir.path().join("one");
    let four = dir.path().join("four");
    run_ok(bin().arg("simulate").arg(&config).args(["--threads", "1", "--out"]).arg(&one));
    run_ok(bin().arg("simulate").arg(&config).args(["--threads", "4", "--out"]).arg(&four));
    let csv_one = std::fs::read(one.join("report.csv")).unwrap();
    let csv_four = std::fs::read(four.join("report.csv")).unwrap();
    assert_eq!(csv_one, csv_four, "worker count must not change the CSV");

    let env_dir = dir.path().join("env");
    run_ok(
        bin()
            .arg("simulate")
            .arg(&config)
            .arg("--out")
            .arg(&env_dir)
            .env("TENSOR_INFER_THREADS", "3"),
    );
    assert_eq!(csv_one, std::fs::read(env_dir.join("report.csv")).unwrap());

    let report = parse_json(&std::fs::read(one.join("report.json")).unwrap());
    assert_eq!(report["schema"], 1);
    assert_eq!(report["cells"].as_array().unwrap().len(), 1);
    assert_eq!(report["cells"][0]["replicates"], 6);

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"p": 8, "r": 2, "gamma": 0.9, "replicates": 0, "alpha": 0.05,
            "seed": 41, "experiment": "entry_coverage", "noise": "gaussian_hetero"}"#,
    )
    .unwrap();
    let mut invalid = bin();
    invalid.arg("simulate").arg(&bad);
    assert_eq!(exit_code(&mut invalid), 2);

    let unknown = dir.path().join("unknown.json");
    std::fs::write(
        &unknown,
        r#"{"p": 8, "r": 2, "gamma": 0.9, "replicates": 2, "alpha": 0.05,
            "seed": 41, "experiment": "entry_coverage", "noise": "gaussian_hetero",
            "extra_field": 1}"#,
    )
    .unwrap();
    let mut rejected = bin();
    rejected.arg("simulate").arg(&unknown);
    assert_eq!(exit_code(&mut rejected), 2);
}

#[test]
fn simulate_joint_writes_points_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sim.json");
    std::fs::write(
        &config,
        r#"{"p": 7, "r": 2, "gamma": 0.9, "replicates": 4, "alpha": 0.05,
            "seed": 2, "noise": "gaussian_hetero",
            "experiment": {"joint_coverage": {"indices": [[1,1,1],[2,3,4]]}}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    run_ok(bin().arg("simulate").arg(&config).arg("--out").arg(&out_dir));
    let points = std::fs::read_to_string(out_dir.join("points.csv")).unwrap();
    assert!(points.starts_with("x1,x2\n"));
    assert!(points.lines().count() >= 2);
}

#[test]
fn scree_prints_eigenvalues_with_leading_gap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    // Hollowing perturbs the trailing spectrum by about (total energy)/p,
    // so the elbow only stands out once p is well above the rank.
    let p = 24;
    write_csv(&path, &two_term_tensor(p, 1e-3));

    let out = run_ok(bin().arg("scree").arg(&path).args(["--mode", "1"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("index,eigenvalue"));
    let vals: Vec<f64> = lines
        .map(|line| line.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(vals.len(), p);
    assert!(vals[0] > 0.0 && vals[1] > 0.0);
    assert!(
        vals[2].abs() < 0.2 * vals[1],
        "two-term signal has a sharp elbow after the second eigenvalue, got {:?}",
        &vals[..4]
    );

    let mut bad_mode = bin();
    bad_mode.arg("scree").arg(&path).args(["--mode", "4"]);
    assert_eq!(exit_code(&mut bad_mode), 2);

    let file_out = dir.path().join("scree.csv");
    run_ok(
        bin()
            .arg("scree")
            .arg(&path)
            .args(["--mode", "3", "--out"])
            .arg(&file_out),
    );
    assert!(std::fs::read_to_string(&file_out).unwrap().starts_with("index,eigenvalue\n"));
}
