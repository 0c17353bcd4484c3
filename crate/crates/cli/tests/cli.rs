use std::path::Path;
use std::process::Command;

use perturbed_bayes::experiment::{preset, ExperimentConfig, PRESETS};

fn pbi() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pbi"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn pbi");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn presets_listed_and_round_trip() {
    let list = run_ok(pbi().arg("presets"));
    for p in PRESETS {
        assert!(list.contains(p), "{list}");
        let text = run_ok(pbi().args(["presets", p]));
        let parsed: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed, preset(p).unwrap());
        assert_eq!(toml::from_str::<ExperimentConfig>(&toml::to_string(&parsed).unwrap()).unwrap(), parsed);
    }
}

#[test]
fn unknown_preset_fails() {
    let out = pbi().args(["run", "--preset", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut traces = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("t{i}.csv"));
        run_ok(
            pbi()
                .env("PBI_THREADS", threads)
                .args(["run", "--preset", "nl1", "--horizon", "3000", "--n", "2048", "--seed", "7", "-o"])
                .arg(&out),
        );
        traces.push(std::fs::read(&out).unwrap());
    }
    assert!(traces[0].len() > 200);
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
}

#[test]
fn gmm_demo_perturbation_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gmm.csv");
    let summary = run_ok(pbi().args(["run", "--preset", "gmm-demo", "--seed", "1", "-o"]).arg(&out));
    let rows = std::fs::read_to_string(&out).unwrap().lines().count() - 1;
    assert!((47..=49).contains(&rows), "{rows} perturbation rows");
    assert!(summary.contains("error:"));
    assert!(header(&out).contains(",error,"));
}

#[test]
fn csv_data_without_truth_has_no_error_column() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv");
    let mut body = String::from("z\n");
    for i in 0..200 {
        body.push_str(&format!("{}\n", ((i * 37) % 11) as f64 / 10.0 - 0.5));
    }
    std::fs::write(&data, body).unwrap();
    let out = dir.path().join("trace.csv");
    let summary = run_ok(
        pbi().args(["run", "--preset", "gmm-demo", "--horizon", "1000", "--data"]).arg(&data).arg("-o").arg(&out),
    );
    assert!(summary.contains("stream ended before the horizon"));
    assert!(!summary.contains("error:"));
    let h = header(&out);
    assert!(!h.contains("error") && h.contains("partition") && h.ends_with("theta_1"));
}

#[test]
fn dimension_mismatch_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("obs.csv");
    std::fs::write(&data, "z,x1\n1,2\n").unwrap();
    let out = pbi().args(["run", "--preset", "gmm-demo", "--data"]).arg(&data).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "[run]\nseed = 3\nhorizon = 500\n\n[model]\nkind = \"gaussian\"\nd = 2\n\n[algo]\nn = 16\nn_aux = 10\nkappa = 0.8\n",
    )
    .unwrap();
    let emitted = dir.path().join("resolved.toml");
    run_ok(pbi().arg("run").arg("-c").arg(&cfg).args(["--horizon", "700", "--set", "algo.t1=4", "--emit-config"]).arg(&emitted));
    let resolved: ExperimentConfig = toml::from_str(&std::fs::read_to_string(&emitted).unwrap()).unwrap();
    assert_eq!((resolved.run.seed, resolved.run.horizon), (3, 700));
    assert_eq!((resolved.algo.n, resolved.algo.t1, resolved.algo.kappa), (16, 4, 0.8));
    assert_eq!(resolved.algo.delta, 0.95);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nkind = \"gaussian\"\nd = 2\n\n[algo]\nkapa = 0.8\n").unwrap();
    assert!(!pbi().arg("run").arg("-c").arg(&bad).output().unwrap().status.success());
}

#[test]
fn slope_of_a_written_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nl1.csv");
    run_ok(pbi().args(["run", "--preset", "nl1", "--horizon", "20000", "--n", "1024", "-o"]).arg(&out));
    let s = run_ok(pbi().args(["slope", "--window", "2"]).arg(&out));
    let slope: f64 = s.lines().next().unwrap().trim_start_matches("slope: ").parse().unwrap();
    assert!(slope.is_finite());
}

#[test]
fn predict_zero_regressions() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    std::fs::write(&input, "x1,x2,x3\n1,0.5,-2\n1,3,4\n").unwrap();
    let s = run_ok(
        pbi().arg("predict").arg(&input).args(["--components", "2", "--dx", "3", "--theta", "-0.3,0,0,0,0,0,0"]),
    );
    let vals: Vec<f64> = s.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(vals, vec![0.5, 0.5]);
    let out = pbi().arg("predict").arg(&input).args(["--components", "2", "--dx", "2", "--theta", "0,0,0,0,0"]).output().unwrap();
    assert!(!out.status.success());
}
