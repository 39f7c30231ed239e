//! End-to-end tests of the binary: exit codes, file outputs,
//! reproducibility, and the config-file contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potts-oca"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstderr: {}",
        out.status.code(),
        stderr(out)
    );
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("read {name}: {e}"))
}

/// Data rows of a headered CSV, split into fields.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|f| f.to_string()).collect())
        .collect()
}

#[test]
fn simulate_is_byte_reproducible_and_writes_a_manifest() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--rows", "9", "--cols", "7", "--k", "3", "--beta", "0.45", "--seed", "21",
        "--out", "z.csv",
    ];
    let ra = run_in(a.path(), &args);
    let rb = run_in(b.path(), &args);
    assert_ok(&ra);
    assert_ok(&rb);
    assert!(stdout(&ra).starts_with("S(z) = "));
    assert_eq!(stdout(&ra), stdout(&rb));
    assert_eq!(read(a.path(), "z.csv"), read(b.path(), "z.csv"));
    assert_eq!(
        read(a.path(), "z.csv.manifest.json"),
        read(b.path(), "z.csv.manifest.json")
    );
    let manifest = read(a.path(), "z.csv.manifest.json");
    assert!(manifest.contains("\"seed\": 21"));
    assert!(manifest.contains("config_sha256"));
    let grid = read(a.path(), "z.csv");
    assert_eq!(grid.lines().count(), 9);
    assert!(grid.lines().all(|l| l.split(',').count() == 7));

    let rc = run_in(
        a.path(),
        &[
            "simulate", "--rows", "9", "--cols", "7", "--k", "3", "--beta", "0.45", "--seed",
            "22", "--out", "z2.csv",
        ],
    );
    assert_ok(&rc);
    assert_ne!(read(a.path(), "z.csv"), read(a.path(), "z2.csv"));
}

#[test]
fn simulate_emits_observations_from_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "simulate", "--rows", "6", "--cols", "6", "--k", "2", "--beta", "0.3", "--seed", "4",
        "--out", "z.csv", "--mu", "1,2", "--sigma", "0.25,0.25", "--obs-out", "y.csv",
    ];
    assert_ok(&run_in(dir.path(), &args));
    let y = read(dir.path(), "y.csv");
    assert_eq!(y.lines().count(), 6);
    let first: f64 = y.lines().next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(first.is_finite());

    // noise flags without a destination are an input error
    let bad = run_in(
        dir.path(),
        &[
            "simulate", "--rows", "6", "--cols", "6", "--k", "2", "--beta", "0.3", "--seed",
            "4", "--out", "z3.csv", "--mu", "1,2", "--sigma", "0.25,0.25",
        ],
    );
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn loglik_curve_matches_the_independence_value_at_beta_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "6", "--cols", "6", "--k", "2", "--beta", "0.5", "--seed",
            "3", "--out", "z.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "loglik-curve", "--input", "z.csv", "--k", "2", "--betas", "0", "--out", "curve.csv",
        ],
    );
    assert_ok(&out);
    let curve = read(dir.path(), "curve.csv");
    assert_eq!(curve.lines().next().unwrap(), "beta,loglik");
    let fields = rows(&curve);
    assert_eq!(fields.len(), 1);
    let loglik: f64 = fields[0][1].parse().unwrap();
    let want = 36.0 * (0.5f64).ln();
    assert!((loglik - want).abs() < 1e-9, "got {loglik}, want {want}");
}

#[test]
fn loglik_curve_full_windows_reproduce_the_enumeration_column() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "3", "--cols", "3", "--k", "2", "--beta", "0.4", "--seed",
            "8", "--out", "z.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "loglik-curve", "--input", "z.csv", "--k", "2", "--betas", "0:0.8:0.2",
            "--m-future", "9", "--m-past", "9", "--with-exact",
        ],
    );
    assert_ok(&out);
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "beta,loglik,exact");
    let fields = rows(&text);
    assert_eq!(fields.len(), 5);
    for row in fields {
        let loglik: f64 = row[1].parse().unwrap();
        let exact: f64 = row[2].parse().unwrap();
        assert!(
            (loglik - exact).abs() < 1e-10,
            "beta {}: {loglik} vs {exact}",
            row[0]
        );
    }
}

#[test]
fn fit_flags_a_boundary_estimate_on_a_constant_field() {
    let dir = tempfile::tempdir().unwrap();
    let constant = vec!["1,1,1,1,1"; 5].join("\n") + "\n";
    fs::write(dir.path().join("flat.csv"), constant).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "fit", "--input", "flat.csv", "--k", "2", "--objective", "oca", "--beta-max", "2",
        ],
    );
    assert_ok(&out);
    assert!(stderr(&out).contains("boundary"));
    let fields = rows(&stdout(&out));
    assert_eq!(fields[0][0], "oca");
    assert_eq!(fields[0][3], "true");
}

#[test]
fn fit_reports_a_numerical_failure_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "5", "--cols", "5", "--k", "2", "--beta", "0.4", "--seed",
            "1", "--out", "z.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "fit", "--input", "z.csv", "--k", "2", "--objective", "oca", "--beta-max", "1e308",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("non-finite"));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "command=simulate\nrows=5\ncols=4\nk=2\nbeta=0.3\nseed=6\nout=from_cfg.csv\n";
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    assert_ok(&run_in(dir.path(), &["simulate", "--config", "run.cfg"]));
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "5", "--cols", "4", "--k", "2", "--beta", "0.3", "--seed",
            "6", "--out", "from_flags.csv",
        ],
    ));
    assert_eq!(
        read(dir.path(), "from_cfg.csv"),
        read(dir.path(), "from_flags.csv")
    );

    // a flag override must change the effective run
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--config", "run.cfg", "--seed", "7", "--out", "override.csv",
        ],
    ));
    assert_ne!(
        read(dir.path(), "from_cfg.csv"),
        read(dir.path(), "override.csv")
    );

    // the config names its command; invoking another one is an error
    let clash = run_in(dir.path(), &["fit", "--config", "run.cfg"]);
    assert_eq!(clash.status.code(), Some(2));
}

#[test]
fn gibbs_accepts_minimal_run_lengths_and_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "6", "--cols", "5", "--k", "2", "--beta", "0.4", "--seed",
            "2", "--out", "z.csv", "--mu", "1,2", "--sigma", "0.3,0.3", "--obs-out", "y.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "gibbs", "--obs", "y.csv", "--k", "2", "--iterations", "2", "--burn-in", "1",
            "--seed", "3", "--hpp-out", "hpp.csv", "--probs-out", "probs", "--trace-out",
            "trace.csv", "--predict-sites", "0,7", "--draws-per-site", "2", "--samples-out",
            "draws.csv",
        ],
    );
    assert_ok(&out);
    assert!(stdout(&out).contains("retained 1 of 2 iterations"));

    let hpp = read(dir.path(), "hpp.csv");
    assert_eq!(hpp.lines().count(), 6);
    for line in hpp.lines() {
        for tok in line.split(',') {
            let v: usize = tok.parse().unwrap();
            assert!(v == 1 || v == 2);
        }
    }

    let trace = read(dir.path(), "trace.csv");
    assert_eq!(
        trace.lines().next().unwrap(),
        "iter,beta,mu_1,mu_2,sigma_1,sigma_2"
    );
    assert_eq!(trace.lines().count(), 3);

    let p1 = read(dir.path(), "probs.class1.csv");
    let p2 = read(dir.path(), "probs.class2.csv");
    for (l1, l2) in p1.lines().zip(p2.lines()) {
        for (a, b) in l1.split(',').zip(l2.split(',')) {
            let total: f64 = a.parse::<f64>().unwrap() + b.parse::<f64>().unwrap();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    let draws = read(dir.path(), "draws.csv");
    assert_eq!(draws.lines().next().unwrap(), "site,draw,value");
    // 2 sites x 1 retained iteration x 2 draws
    assert_eq!(draws.lines().count(), 5);

    assert!(dir.path().join("hpp.csv.manifest.json").exists());
}

#[test]
fn gibbs_runs_the_mixture_baseline() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "5", "--cols", "5", "--k", "2", "--beta", "0.3", "--seed",
            "9", "--out", "z.csv", "--mu", "0,3", "--sigma", "0.4,0.4", "--obs-out", "y.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "gibbs", "--obs", "y.csv", "--k", "2", "--model", "gmm", "--iterations", "4",
            "--burn-in", "2", "--seed", "1", "--hpp-out", "hpp.csv", "--trace-out", "trace.csv",
        ],
    );
    assert_ok(&out);
    let trace = read(dir.path(), "trace.csv");
    assert_eq!(
        trace.lines().next().unwrap(),
        "iter,pi_1,pi_2,mu_1,mu_2,sigma_1,sigma_2"
    );
    assert_eq!(trace.lines().count(), 5);
}

#[test]
fn gibbs_reads_pgm_images() {
    let dir = tempfile::tempdir().unwrap();
    // 4x4 two-level image with a comment line
    let pgm = "P2\n# test image\n4 4\n255\n10 10 200 200\n10 10 200 200\n10 10 200 200\n10 10 200 200\n";
    fs::write(dir.path().join("img.pgm"), pgm).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "gibbs", "--pgm", "img.pgm", "--k", "2", "--iterations", "3", "--burn-in", "1",
            "--seed", "2", "--prior-means", "10,200", "--prior-sd0", "20", "--prior-alpha",
            "2", "--prior-eta", "50", "--hpp-out", "hpp.csv",
        ],
    );
    assert_ok(&out);
    let hpp = read(dir.path(), "hpp.csv");
    assert_eq!(hpp.lines().count(), 4);
    // the two gray levels separate cleanly
    assert!(hpp.lines().all(|l| l == "1,1,2,2"));
}

#[test]
fn predict_heldout_validates_the_fraction() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "6", "--cols", "6", "--k", "2", "--beta", "0.3", "--seed",
            "5", "--out", "z.csv", "--mu", "1,2", "--sigma", "0.3,0.3", "--obs-out", "y.csv",
        ],
    ));
    for bad in ["1.5", "0", "1", "-0.2"] {
        let out = run_in(
            dir.path(),
            &[
                "predict-heldout", "--obs", "y.csv", "--k", "2", "--fraction", bad,
                "--iterations", "4", "--burn-in", "2",
            ],
        );
        assert_eq!(out.status.code(), Some(2), "fraction {bad}");
    }

    // a fraction that selects zero sites yields an empty report
    let out = run_in(
        dir.path(),
        &[
            "predict-heldout", "--obs", "y.csv", "--k", "2", "--fraction", "0.01",
            "--iterations", "4", "--burn-in", "2", "--out", "report.csv",
        ],
    );
    assert_ok(&out);
    let report = read(dir.path(), "report.csv");
    assert_eq!(report, "rep,seed,stream,method,mean_crps\n");
}

#[test]
fn predict_heldout_scores_both_methods_per_repetition() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &[
            "simulate", "--rows", "7", "--cols", "7", "--k", "2", "--beta", "0.4", "--seed",
            "13", "--out", "z.csv", "--mu", "1,2", "--sigma", "0.3,0.3", "--obs-out", "y.csv",
        ],
    ));
    let out = run_in(
        dir.path(),
        &[
            "predict-heldout", "--obs", "y.csv", "--k", "2", "--fraction", "0.1", "--reps",
            "2", "--iterations", "10", "--burn-in", "5", "--seed", "17", "--draws-per-site",
            "3", "--out", "report.csv", "--samples-out", "draws.csv",
        ],
    );
    assert_ok(&out);
    assert!(stdout(&out).contains("oca mean CRPS"));
    let fields = rows(&read(dir.path(), "report.csv"));
    assert_eq!(fields.len(), 4);
    for (i, row) in fields.iter().enumerate() {
        assert_eq!(row[0], (i / 2).to_string());
        assert_eq!(row[1], "17");
        assert_eq!(row[2], (i / 2).to_string());
        assert_eq!(row[3], if i % 2 == 0 { "oca" } else { "gmm" });
        let crps: f64 = row[4].parse().unwrap();
        assert!(crps.is_finite() && crps >= 0.0);
    }
    // 4 held sites x 5 retained x 3 draws per site, plus the header
    assert_eq!(read(dir.path(), "draws.csv").lines().count(), 61);
}

#[test]
fn unknown_names_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "simulate", "--rows", "4", "--cols", "4", "--k", "2", "--beta", "0.3",
            "--sampler", "metropolis", "--out", "z.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let missing = run_in(dir.path(), &["fit", "--input", "nope.csv", "--k", "2"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn benchmark_emits_one_row_per_ladder_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "benchmark", "--sizes", "8,12", "--m-futures", "2", "--thread-counts", "1,2",
            "--repeats", "2", "--out", "bench.csv",
        ],
    );
    assert_ok(&out);
    let text = read(dir.path(), "bench.csv");
    assert_eq!(text.lines().next().unwrap(), "n,m_f,threads,seconds");
    let fields = rows(&text);
    assert_eq!(fields.len(), 4);
    assert_eq!(fields[0][0], "64");
    assert_eq!(fields[2][0], "144");
    for row in &fields {
        let secs: f64 = row[3].parse().unwrap();
        assert!(secs >= 0.0);
    }
    assert!(stdout(&out).contains("speedup"));
}
