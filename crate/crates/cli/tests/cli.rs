use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cli(dir: &Path, args: &[&str]) -> Output {
    cli_env(dir, args, &[])
}

fn cli_env(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_horizon-limit"));
    cmd.current_dir(dir)
        .args(args)
        .env_remove("HORIZON_LIMIT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_lq1_passes_every_applicable_check() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &["verify", "--problem", "LQ1", "--b", "1.0", "--out", "out"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(dir.path().join("out/report.json"));
    assert_eq!(report["lambda_star"], 1.0);
    for c in report["checks"].as_array().unwrap() {
        assert!(
            matches!(c["status"].as_str().unwrap(), "pass" | "not-applicable"),
            "{c}"
        );
    }
    let trace = std::fs::read_to_string(dir.path().join("out/hamiltonian.csv")).unwrap();
    assert!(trace.starts_with("T,H_direct,H_michel\n"));
    assert!(dir.path().join("out/horizons.csv").exists());
    assert!(dir.path().join("out/limiting.json").exists());
}

#[test]
fn verify_abn1_reports_the_abnormal_limit() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["verify", "--problem", "ABN1", "--out", "out"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = json(dir.path().join("out/report.json"));
    assert_eq!(report["lambda_star"], 0.0);
    let abnormal = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["id"] == "abnormal")
        .unwrap();
    assert_eq!(abnormal["status"], "pass");
}

#[test]
fn shoot_finds_the_riccati_costate() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &[
            "shoot",
            "--problem",
            "LQ1",
            "--b",
            "1.0",
            "--bracket=-3,0",
            "--out",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let res = json(dir.path().join("out/shoot.json"));
    assert!(
        (res["psi0"].as_f64().unwrap() + 1.2360680).abs() < 1e-6,
        "{res}"
    );
    let hist = std::fs::read_to_string(dir.path().join("out/bracket.csv")).unwrap();
    assert!(hist.starts_with("iter,psi_lo,psi_hi,psi_mid,residual\n"));
}

#[test]
fn shoot_without_sign_change_exits_2_with_the_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &[
            "shoot",
            "--problem",
            "LQ1",
            "--bracket=-1,0",
            "--out",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    let res = json(dir.path().join("out/shoot.json"));
    assert!(
        res["error"].as_str().unwrap().contains("no sign change"),
        "{res}"
    );
}

#[test]
fn oracle_writes_the_transcription() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &[
            "oracle",
            "--problem",
            "LQ1",
            "--horizon",
            "2",
            "--steps",
            "40",
            "--out",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/transcription.csv")).unwrap();
    assert!(csv.starts_with("k,t_k,u_1,x_1,p_1\n"));
    assert_eq!(csv.lines().count(), 42);
    assert!(csv.lines().last().unwrap().starts_with("40,2.0,,"));
}

#[test]
fn unconverged_limit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        dir.path(),
        &[
            "costate",
            "--problem",
            "LQ1",
            "--tau",
            "0.5,1,2",
            "--out",
            "out",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        json(dir.path().join("out/limiting.json"))["converged"],
        false
    );
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "problem = \"LQ1\"\n[tolerances]\node = -1\n",
    )
    .unwrap();
    let o = cli(dir.path(), &["costate", "--config", "bad.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tolerances positive"));

    std::fs::write(
        dir.path().join("typo.toml"),
        "problem = \"LQ1\"\n[horizons]\ncuont = 3\n",
    )
    .unwrap();
    let o = cli(dir.path(), &["costate", "--config", "typo.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cuont"));

    let o = cli(dir.path(), &["verify"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("usage"));

    let o = cli(dir.path(), &["costate", "--problem", "NOPE"]);
    assert_eq!(o.status.code(), Some(1));

    let o = cli(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        "problem = \"LQ1\"\n[params]\nb = 2.0\n[horizons]\ntau0 = 4.0\ncount = 5\n[output]\ndir = \"from-file\"\ncsv = false\n",
    )
    .unwrap();
    let o = cli(
        dir.path(),
        &["costate", "--config", "run.toml", "--b", "0.5"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lim = json(dir.path().join("from-file/limiting.json"));
    assert!((lim["psi0_star"][0].as_f64().unwrap() + 0.5 * (5f64.sqrt() - 1.0)).abs() < 1e-6);
    assert_eq!(lim["config"]["horizons"].as_array().unwrap().len(), 5);
    assert!(!dir.path().join("from-file/horizons.csv").exists());
}

#[test]
fn problem_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("lq.toml"),
        "id = \"LQ1\"\n[params]\nr = 0.5\n",
    )
    .unwrap();
    let o = cli(
        dir.path(),
        &["costate", "--problem", "lq.toml", "--out", "out"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lim = json(dir.path().join("out/limiting.json"));
    // p solves p^2 + r p - 1 = 0
    let p = 0.5 * (-0.5 + (0.25f64 + 4.0).sqrt());
    assert!((lim["psi0_star"][0].as_f64().unwrap() + 2.0 * p).abs() < 1e-6);
}

#[test]
fn artifacts_are_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["verify", "--problem", "LQ0", "--out", "out"];
    let read = |name: &str| std::fs::read(dir.path().join("out").join(name)).unwrap();
    assert_eq!(cli(dir.path(), &args).status.code(), Some(0));
    let first: Vec<_> = [
        "report.json",
        "horizons.csv",
        "hamiltonian.csv",
        "limiting.json",
    ]
    .map(read)
    .into();
    assert_eq!(
        cli_env(dir.path(), &args, &[("HORIZON_LIMIT_THREADS", "3")])
            .status
            .code(),
        Some(0)
    );
    let second: Vec<_> = [
        "report.json",
        "horizons.csv",
        "hamiltonian.csv",
        "limiting.json",
    ]
    .map(read)
    .into();
    assert_eq!(first, second);
}

#[test]
fn invalid_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli_env(
        dir.path(),
        &["costate", "--problem", "LQ1"],
        &[("HORIZON_LIMIT_THREADS", "many")],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn catalog_lists_the_built_in_problems() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(dir.path(), &["catalog"]);
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8(o.stdout).unwrap();
    for id in ["LQ1", "LQ1F", "LQ0", "ABN1", "CONST1"] {
        assert!(out.lines().any(|l| l.starts_with(id)), "{out}");
    }
}
