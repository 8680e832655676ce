//! End-to-end tests of the command-line interface: workflows, file
//! artifacts, exit codes, and the identities the commands must satisfy.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logitmc"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin()
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn logitmc")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn simulate(dir: &Path, n: usize, sparsity: f64, seed: u64) {
    let out = run(
        &[
            "simulate",
            "--n",
            &n.to_string(),
            "--beta",
            "0.6,-0.4",
            "--sparsity",
            &sparsity.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            "data",
        ],
        dir,
    );
    assert_success(&out);
}

fn summary_stats(path: &Path) -> Vec<(String, f64, f64)> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            (
                fields[0].to_string(),
                fields[1].parse::<f64>().unwrap(),
                fields[2].parse::<f64>().unwrap(),
            )
        })
        .collect()
}

#[test]
fn fit_produces_the_expected_number_of_kept_draws() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 200, 0.3, 5);
    let out = run(
        &[
            "fit",
            "--method",
            "mh",
            "--data",
            "data.csv",
            "--schema",
            "data.schema.toml",
            "--iterations",
            "2000",
            "--burnin",
            "100",
            "--thin",
            "20",
            "--seed",
            "9",
            "--scale",
            "0.05",
            "--out",
            "mh",
        ],
        dir.path(),
    );
    assert_success(&out);
    let draws = fs::read_to_string(dir.path().join("mh.draws.csv")).unwrap();
    // Header plus floor((2000 - 100)/20) = 95 kept draws.
    assert_eq!(draws.lines().count(), 96);
    assert!(dir.path().join("mh.meta.txt").exists());
    assert!(dir.path().join("mh.summary.csv").exists());
}

#[test]
fn refitting_the_same_manifest_reproduces_the_draws_file_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 500, 0.2, 6);
    fs::write(
        dir.path().join("run.toml"),
        "version = 1\n\
         method = \"two-stage\"\n\
         output = \"ts\"\n\
         workers = 1\n\
         [data]\n\
         file = \"data.csv\"\n\
         schema = \"data.schema.toml\"\n\
         [chain]\n\
         iterations = 3000\n\
         burnin = 200\n\
         thinning = 4\n\
         seed = 11\n\
         scale = 0.01\n\
         [params]\n\
         a_frac = 0.25\n",
    )
    .unwrap();
    let out = run(&["fit", "--manifest", "run.toml"], dir.path());
    assert_success(&out);
    let first = fs::read(dir.path().join("ts.draws.csv")).unwrap();
    // Re-fit with more workers: the manifest and seed pin the draws.
    let out = run(&["fit", "--manifest", "run.toml", "--workers", "4"], dir.path());
    assert_success(&out);
    let second = fs::read(dir.path().join("ts.draws.csv")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn exhaustive_subsample_two_stage_never_rejects_stage_two() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 300, 0.25, 7);
    // a = n0 via fraction 1.0.
    let out = run(
        &[
            "fit",
            "--method",
            "two-stage",
            "--data",
            "data.csv",
            "--schema",
            "data.schema.toml",
            "--iterations",
            "2000",
            "--burnin",
            "100",
            "--thin",
            "10",
            "--seed",
            "3",
            "--scale",
            "0.02",
            "--a-frac",
            "1.0",
            "--out",
            "full",
        ],
        dir.path(),
    );
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("stage-2 acceptance 1.0000"),
        "expected sure stage-2 acceptance, got:\n{stdout}"
    );
    let meta = fs::read_to_string(dir.path().join("full.meta.txt")).unwrap();
    let field = |key: &str| -> u64 {
        meta.lines()
            .find(|l| l.starts_with(key))
            .and_then(|l| l.split('=').nth(1))
            .unwrap()
            .trim()
            .parse()
            .unwrap()
    };
    assert_eq!(field("stage2_accepts"), field("stage1_promotions"));
}

#[test]
fn single_partition_consensus_matches_plain_mh_summary() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 400, 0.3, 8);
    let common = [
        "--data",
        "data.csv",
        "--schema",
        "data.schema.toml",
        "--iterations",
        "3000",
        "--burnin",
        "200",
        "--thin",
        "5",
        "--seed",
        "21",
        "--scale",
        "0.02",
    ];
    let mut args = vec!["fit", "--method", "mh", "--out", "mh"];
    args.extend_from_slice(&common);
    assert_success(&run(&args, dir.path()));
    let mut args = vec!["fit", "--method", "consensus", "--p", "1", "--out", "cons"];
    args.extend_from_slice(&common);
    assert_success(&run(&args, dir.path()));

    let mh = fs::read_to_string(dir.path().join("mh.summary.csv")).unwrap();
    let cons = fs::read_to_string(dir.path().join("cons.summary.csv")).unwrap();
    assert_eq!(mh, cons, "consensus p=1 summary differs from plain mh");
    // Combined draws equal the single chain's draws bitwise.
    let chain = fs::read(dir.path().join("mh.draws.csv")).unwrap();
    let combined = fs::read(dir.path().join("cons.combined.draws.csv")).unwrap();
    assert_eq!(chain, combined);
    assert!(dir.path().join("cons.plan.csv").exists());
    assert!(dir.path().join("cons.ensemble.txt").exists());
    assert!(dir.path().join("cons.weights.csv").exists());
}

#[test]
fn self_comparison_reports_zero_differences_and_zero_ks() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 200, 0.3, 9);
    let out = run(
        &[
            "fit",
            "--method",
            "mh",
            "--data",
            "data.csv",
            "--schema",
            "data.schema.toml",
            "--iterations",
            "1500",
            "--burnin",
            "100",
            "--thin",
            "5",
            "--seed",
            "2",
            "--scale",
            "0.05",
            "--out",
            "mh",
        ],
        dir.path(),
    );
    assert_success(&out);
    let out = run(
        &[
            "compare",
            "--draws",
            "mh.draws.csv",
            "--draws",
            "mh.draws.csv",
            "--out",
            "self",
        ],
        dir.path(),
    );
    assert_success(&out);
    let table = fs::read_to_string(dir.path().join("self.compare.csv")).unwrap();
    for line in table.lines().filter(|l| l.contains(",mh,") && l.contains("e")) {
        let _ = line;
    }
    let ks_lines: Vec<&str> = table
        .lines()
        .skip_while(|l| !l.starts_with("coefficient,run_a"))
        .skip(1)
        .collect();
    assert!(!ks_lines.is_empty());
    for line in ks_lines {
        let ks: f64 = line.split(',').next_back().unwrap().parse().unwrap();
        assert_eq!(ks, 0.0);
    }
    assert!(dir.path().join("self.density.csv").exists());
}

#[test]
fn noisy_subsampling_widens_reported_intervals() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 10_000, 0.046, 1);
    let common = [
        "--data",
        "data.csv",
        "--schema",
        "data.schema.toml",
        "--iterations",
        "8000",
        "--burnin",
        "1000",
        "--thin",
        "5",
        "--scale",
        "0.005",
        "--init",
        "-3.4,0.6,-0.4",
    ];
    let mut args = vec!["fit", "--method", "mh", "--seed", "31", "--out", "mh"];
    args.extend_from_slice(&common);
    assert_success(&run(&args, dir.path()));
    let mut args = vec![
        "fit",
        "--method",
        "subsample",
        "--seed",
        "32",
        "--a-frac",
        "0.002",
        "--refresh",
        "1",
        "--out",
        "sub",
    ];
    args.extend_from_slice(&common);
    assert_success(&run(&args, dir.path()));

    let mh = summary_stats(&dir.path().join("mh.summary.csv"));
    let sub = summary_stats(&dir.path().join("sub.summary.csv"));
    for ((name, _, sd_mh), (_, _, sd_sub)) in mh.iter().zip(&sub) {
        let ratio = sd_sub / sd_mh;
        assert!(
            ratio >= 1.0,
            "coefficient {name}: subsampling sd ratio {ratio:.3} below 1"
        );
    }
}

#[test]
fn bench_of_identical_manifests_reports_a_noise_bounded_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = "version = 1\n\
         method = \"parallel-mh\"\n\
         workers = 2\n\
         [data.synthetic]\n\
         n = 60000\n\
         beta = [0.5, -0.5]\n\
         sparsity = 0.1\n\
         seed = 1\n\
         [chain]\n\
         iterations = 400\n\
         burnin = 50\n\
         thinning = 1\n\
         seed = 5\n\
         scale = 0.0001\n\
         adapt = false\n";
    fs::write(dir.path().join("m1.toml"), manifest).unwrap();
    fs::write(dir.path().join("m2.toml"), manifest).unwrap();
    let out = run(
        &[
            "bench",
            "--manifest",
            "m1.toml",
            "--manifest",
            "m2.toml",
            "--repeat",
            "3",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert_success(&out);
    let table = fs::read_to_string(dir.path().join("b.bench.csv")).unwrap();
    let ratio_line = table
        .lines()
        .last()
        .expect("bench csv has a second method row");
    let ratio: f64 = ratio_line.split(',').next_back().unwrap().parse().unwrap();
    assert!(
        (0.8..1.25).contains(&ratio),
        "self-vs-self speed ratio {ratio} outside (0.8, 1.25)"
    );
}

#[test]
fn bench_rejects_runs_below_the_timer_floor() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("tiny.toml"),
        "version = 1\n\
         method = \"mh\"\n\
         [data.synthetic]\n\
         n = 50\n\
         beta = [0.5]\n\
         sparsity = 0.3\n\
         seed = 3\n\
         [chain]\n\
         iterations = 10\n\
         burnin = 1\n\
         thinning = 1\n\
         seed = 5\n\
         scale = 0.01\n",
    )
    .unwrap();
    let out = run(
        &["bench", "--manifest", "tiny.toml", "--repeat", "3", "--out", "b"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("kind=benchmark"), "stderr: {stderr}");
}

#[test]
fn exit_codes_distinguish_usage_data_and_numerical_errors() {
    let dir = tempfile::tempdir().unwrap();
    // Usage: no such method.
    let out = run(&["fit", "--method", "gibbs", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    // Usage:두-stage without a.
    simulate(dir.path(), 100, 0.3, 2);
    let out = run(
        &[
            "fit",
            "--method",
            "two-stage",
            "--data",
            "data.csv",
            "--schema",
            "data.schema.toml",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    // Data: missing file.
    let out = run(
        &[
            "fit",
            "--method",
            "mh",
            "--data",
            "missing.csv",
            "--schema",
            "data.schema.toml",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("kind=data"), "stderr: {stderr}");
    // Data: degenerate outcomes for a subsampling method.
    fs::write(
        dir.path().join("onecls.csv"),
        "y,x1\n0,0.5\n0,-0.2\n0,0.1\n0,0.9\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("onecls.schema.toml"),
        "version = 1\nintercept = true\nnumeric = [\"x1\"]\n\n[response]\ncolumn = \"y\"\npositive = \"1\"\n",
    )
    .unwrap();
    let out = run(
        &[
            "fit",
            "--method",
            "subsample",
            "--a",
            "2",
            "--data",
            "onecls.csv",
            "--schema",
            "onecls.schema.toml",
            "--iterations",
            "100",
            "--burnin",
            "10",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_and_version_exit_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["--version"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
