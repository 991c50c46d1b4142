//! End-to-end checks of the command-line binary: the full demo workflow
//! chained through real files, plus the failure modes users hit first.

use std::path::Path;
use std::process::{Command, Output};

use odflow::network::{load_network, LinkId};
use odflow::neural::NNModel;
use odflow::odgen::{build_zero_mask, load_od_matrices, load_observations};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odflow"))
        .args(args)
        .output()
        .expect("failed to launch binary")
}

fn run_ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn run_err(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        !out.status.success(),
        "command {:?} unexpectedly succeeded\nstdout: {}",
        args,
        String::from_utf8_lossy(&out.stdout)
    );
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(!stderr.is_empty(), "command {:?} failed silently", args);
    stderr
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn demo_workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_owned();

    let (net_f, obs_f, truth_f, od_f, flows_f) = (
        s("net.json"),
        s("obs.txt"),
        s("truth.txt"),
        s("od.txt"),
        s("flows.txt"),
    );
    let (dataset_f, model_f, report_f, loop_f, scen_f) = (
        s("dataset.txt"),
        s("model.json"),
        s("report.txt"),
        s("loop.txt"),
        s("scen.json"),
    );

    run_ok(&["gen-network", "--kind", "demo", "--out", &net_f]);
    let net = load_network(Path::new(&net_f)).unwrap();
    assert_eq!(net.zone_count(), 7);
    assert_eq!(net.links().len(), 12);

    run_ok(&[
        "gen-obs",
        "--network",
        &net_f,
        "--out",
        &obs_f,
        "--truth-out",
        &truth_f,
        "--days",
        "1",
        "--seed",
        "3",
    ]);
    let observations = load_observations(Path::new(&obs_f), net.zones()).unwrap();
    assert_eq!(observations.len(), 24);
    assert!(p("truth.txt").exists());

    run_ok(&["gen-od", "--network", &net_f, "--obs", &obs_f, "--out", &od_f]);
    let mask = build_zero_mask(net.zones());
    let matrices = load_od_matrices(Path::new(&od_f), &mask).unwrap();
    assert_eq!(matrices.len(), 24);
    assert!(matrices.iter().all(|m| m.total_demand() > 0.0));

    run_ok(&["run-dta", "--network", &net_f, "--od", &od_f, "--out", &flows_f]);
    assert!(read(p("flows.txt").as_path()).starts_with("# sensor-flows"));

    run_ok(&[
        "build-dataset",
        "--network",
        &net_f,
        "--obs",
        &obs_f,
        "--out",
        &dataset_f,
    ]);
    let dataset_text = read(p("dataset.txt").as_path());
    assert!(dataset_text.starts_with("# flow-demand-dataset"));

    run_ok(&[
        "train",
        "--dataset",
        &dataset_f,
        "--out",
        &model_f,
        "--epochs",
        "2",
        "--hidden-size",
        "8",
        "--seed",
        "1",
    ]);
    let model = NNModel::load(Path::new(&model_f)).unwrap();
    assert_eq!(model.input_size(), net.sensors().len());
    assert_eq!(model.output_size(), mask.free_count());

    run_ok(&[
        "eval-nn",
        "--model",
        &model_f,
        "--dataset",
        &dataset_f,
        "--out",
        &report_f,
    ]);
    let report = read(p("report.txt").as_path());
    assert!(report.contains("mean_of_hours") && report.contains("pooled"));

    run_ok(&[
        "eval-loop",
        "--network",
        &net_f,
        "--dataset",
        &dataset_f,
        "--predictor",
        "zero",
        "--out",
        &loop_f,
    ]);
    let loop_report = read(p("loop.txt").as_path());
    assert!(loop_report.starts_with("# closed-loop-report predictor=zero-baseline"));
    assert!(loop_report.contains("pooled") && loop_report.contains("level_"));

    run_ok(&[
        "scenario",
        "--network",
        &net_f,
        "--capacity",
        "0=0.5",
        "--add-cost",
        "3=2.0",
        "--out",
        &scen_f,
    ]);
    let transformed = load_network(Path::new(&scen_f)).unwrap();
    let original_cap = net.link(LinkId(0)).unwrap().capacity;
    assert_eq!(transformed.link(LinkId(0)).unwrap().capacity, original_cap * 0.5);
    let original_cost = net.link(LinkId(3)).unwrap().financial_cost;
    assert_eq!(
        transformed.link(LinkId(3)).unwrap().financial_cost,
        original_cost + 2.0
    );
}

#[test]
fn config_file_sets_observation_profile() {
    let dir = tempfile::tempdir().unwrap();
    let net_f = dir.path().join("net.json");
    let cfg_f = dir.path().join("settings.toml");
    let obs_f = dir.path().join("obs.txt");
    run_ok(&["gen-network", "--out", net_f.to_str().unwrap()]);
    std::fs::write(&cfg_f, "[profile]\ndays = 2\nseed = 9\n").unwrap();
    run_ok(&[
        "--config",
        cfg_f.to_str().unwrap(),
        "gen-obs",
        "--network",
        net_f.to_str().unwrap(),
        "--out",
        obs_f.to_str().unwrap(),
    ]);
    let net = load_network(&net_f).unwrap();
    let observations = load_observations(&obs_f, net.zones()).unwrap();
    assert_eq!(observations.len(), 48);
}

#[test]
fn helpful_errors_on_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let net_f = dir.path().join("net.json");
    run_ok(&["gen-network", "--out", net_f.to_str().unwrap()]);
    let net_s = net_f.to_str().unwrap();

    // Unknown subcommand is a usage error.
    run_err(&["frobnicate"]);

    // Missing input file names the file.
    let stderr = run_err(&["gen-od", "--network", net_s, "--obs", "/nonexistent/obs.txt", "--out", "/tmp/x"]);
    assert!(stderr.contains("obs.txt"), "stderr was: {stderr}");

    // Scenario validation: factor above 1 is rejected.
    let stderr = run_err(&["scenario", "--network", net_s, "--capacity", "0=1.5", "--out", "/tmp/x"]);
    assert!(stderr.contains("capacity factor"), "stderr was: {stderr}");

    // Scenario with no changes is refused rather than copying the file.
    let stderr = run_err(&["scenario", "--network", net_s, "--out", "/tmp/x"]);
    assert!(stderr.contains("nothing to do"), "stderr was: {stderr}");

    // Malformed LINK=VALUE pair is a usage error.
    run_err(&["scenario", "--network", net_s, "--capacity", "abc", "--out", "/tmp/x"]);

    // The nn predictor needs a checkpoint.
    let stderr = run_err(&[
        "eval-loop",
        "--network",
        net_s,
        "--dataset",
        "/nonexistent/d.txt",
        "--predictor",
        "nn",
    ]);
    assert!(!stderr.is_empty());
}
