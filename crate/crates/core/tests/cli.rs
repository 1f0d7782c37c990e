use std::fs;
use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_ma-fd-power");

const TINY: &str = r#"
[system]
si_loss_db = -110.0

[swarm]
particles = 3
iterations = 2

[experiment]
region_sizes_wavelengths = [3.0]
weight_step = 0.5
si_loss_db = [-120.0, -100.0]
"#;

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad_weights = write(dir.path(), "w.toml", "[system]\nweights = [0.7, 0.7]\n");
    let unknown_key = write(dir.path(), "k.toml", "[system]\nnot_a_key = 1\n");
    let malformed = write(dir.path(), "m.toml", "[system\n");
    for cfg in [&bad_weights, &unknown_key, &malformed, &"missing.toml".to_string()] {
        let (code, err) = run(&["single", "--config", cfg, "--seeds", "1", "--out", out]);
        assert_eq!(code, 2, "{cfg}: {err}");
    }
    let tiny = write(dir.path(), "tiny.toml", TINY);
    let (code, _) = run(&["single", "--config", &tiny, "--seeds", "3-1", "--out", out]);
    assert_eq!(code, 2);
}

#[test]
fn all_infeasible_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TINY}\n[inner]\ntol = 1e-8\n").replace(
        "si_loss_db = -110.0",
        "si_loss_db = -110.0\nul_rate_threshold = 60.0\ndl_rate_threshold = 60.0",
    );
    let cfg = write(dir.path(), "hard.toml", &cfg);
    let out = dir.path().join("out");
    let (code, err) = run(&["single", "--config", &cfg, "--seeds", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn single_run_writes_outputs_and_audits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let (code, err) = run(&["single", "--config", &cfg, "--seeds", "2", "--out", out.to_str().unwrap(), "--audit"]);
    assert_eq!(code, 0, "{err}");
    let trace = fs::read_to_string(out.join("traces/trace_seed2.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("iteration,gbest_fitness,gbest_penalty"));
    assert_eq!(lines.count(), 3);
    let scen = fs::read_to_string(out.join("scenarios/scenario_seed2.toml")).unwrap();
    assert!(scen.starts_with("# ma-fd-power scenario v1\n"));
    assert!(out.join("single.csv").exists());
    assert!(out.join("single_audit.csv").exists());
}

#[test]
fn scenario_subcommand_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    let (code, err) = run(&["scenario", "--seed", "5", "--out", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let s = mafd_core::scenario::Scenario::load(&path).unwrap();
    let inst = mafd_core::experiments::instance(&mafd_core::config::RunConfig::desk(), 5).unwrap();
    assert_eq!(s, inst.scenario);
}
