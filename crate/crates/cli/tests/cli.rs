use std::process::Command;

fn yauyau() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yauyau"))
}

#[test]
fn sample_prints_points() {
    let out = yauyau().args(["sample", "--kind", "halton", "--n", "4", "--r", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "u1,u2");
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[2], "0.25,0.6666666666666666");
}

#[test]
fn unknown_sequence_is_config_error() {
    let out = yauyau().args(["sample", "--kind", "nope", "--n", "4", "--r", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_one() {
    assert_eq!(yauyau().args(["compare", "--bogus"]).output().unwrap().status.code(), Some(1));
    assert_eq!(yauyau().arg("--help").output().unwrap().status.code(), Some(0));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "experiment = \"double_well\"\n[yauyau]\nradius = 2.0\n").unwrap();
    let out = yauyau().args(["compare", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
}

#[test]
fn missing_input_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = yauyau()
        .args(["filter", "--truth"])
        .arg(dir.path().join("none.csv"))
        .arg("--obs")
        .arg(dir.path().join("none.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_writes_reproducible_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "experiment = \"double_well\"\ntrials = 2\n[simulation]\nhorizon = 0.5\nsteps = 50\n[yauyau]\nn = 60\n[pf]\nparticles = 60\n",
    )
    .unwrap();
    let mut results = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = yauyau()
            .args(["--threads", "2", "compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains("yauyau") && stdout.contains("ekf"));
        for file in ["summary.csv", "timings.csv", "config.toml", "summary.json"] {
            assert!(out_dir.join(file).exists(), "{file}");
        }
        results.push(std::fs::read(out_dir.join("results.csv")).unwrap());
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn simulate_then_filter_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "experiment = \"small_cubic\"\n[simulation]\nhorizon = 1.0\nsteps = 100\n[yauyau]\nn = 50\n").unwrap();
    let sim = yauyau()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(sim.status.success(), "{}", String::from_utf8_lossy(&sim.stderr));
    let run_dir = dir.path().join("run");
    let filt = yauyau()
        .args(["filter", "--config"])
        .arg(&cfg)
        .arg("--truth")
        .arg(dir.path().join("truth.csv"))
        .arg("--obs")
        .arg(dir.path().join("obs.csv"))
        .arg("--out")
        .arg(&run_dir)
        .output()
        .unwrap();
    assert!(filt.status.success(), "{}", String::from_utf8_lossy(&filt.stderr));
    let direct = yauyau()
        .args(["filter", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    // Reading the CSVs back reproduces the in-memory run exactly.
    let first = |s: &[u8]| String::from_utf8_lossy(s).split_whitespace().nth(1).unwrap().to_string();
    assert_eq!(first(&filt.stdout), first(&direct.stdout));
    let json = std::fs::read_to_string(run_dir.join("result.json")).unwrap();
    assert!(json.contains("\"method\": \"yauyau\""));
    assert_eq!(std::fs::read_to_string(run_dir.join("estimates.csv")).unwrap().lines().count(), 101);
}

#[test]
fn sweep_and_discrepancy_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, "experiment = \"large_scale\"\ntrials = 1\n[simulation]\nhorizon = 0.1\nsteps = 10\n").unwrap();
    let out = yauyau()
        .args(["sweep-dim", "--config"])
        .arg(&cfg)
        .args(["--dims", "2,4", "--samples", "20,30", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().contains("slope"));
    assert!(dir.path().join("sweep.csv").exists());
    let out = yauyau().args(["discrepancy", "--n", "16", "--seeds", "3"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("halton D*"));
}
