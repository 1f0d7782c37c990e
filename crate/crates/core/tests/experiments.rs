use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mafd_core::channel::ChannelSet;
use mafd_core::config::RunConfig;
use mafd_core::experiments::{self, ExperimentKind, ExperimentSpec, Scheme};
use mafd_core::plot;
use mafd_core::pso::SwarmConfig;

/// Desk system with a swarm small enough for a test.
fn quick() -> RunConfig {
    let mut cfg = RunConfig::desk();
    cfg.swarm = SwarmConfig { particles: 3, iterations: 2, ..SwarmConfig::desk() };
    cfg.experiment.region_sizes_wavelengths = vec![3.0];
    cfg
}

fn spec(kind: ExperimentKind, config: RunConfig, seeds: Vec<u64>, out: &Path, audit: bool) -> ExperimentSpec {
    ExperimentSpec { kind, config, seeds, out_dir: out.to_path_buf(), audit }
}

fn csv_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn quarter_step_gives_five_weights_per_scheme() {
    let mut cfg = quick();
    cfg.experiment.weight_step = 0.25;
    let dir = tempfile::tempdir().unwrap();
    let out = experiments::run_experiment(&spec(ExperimentKind::Tradeoff, cfg, vec![1], dir.path(), false)).unwrap();
    for scheme in [Scheme::Ma, Scheme::Fpa] {
        let mut w: Vec<f64> = out.rows.iter().filter(|r| r.scheme == scheme).map(|r| r.weights[0]).collect();
        w.sort_by(f64::total_cmp);
        assert_eq!(w, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }
    assert!(dir.path().join("tradeoff_mean.csv").exists());
    assert!(dir.path().join("tradeoff.svg").exists());
}

#[test]
fn zero_iterations_give_single_row_traces() {
    let mut cfg = quick();
    cfg.swarm.iterations = 0;
    let dir = tempfile::tempdir().unwrap();
    experiments::run_experiment(&spec(ExperimentKind::Convergence, cfg, vec![1, 2], dir.path(), false)).unwrap();
    for seed in [1, 2] {
        let text = std::fs::read_to_string(dir.path().join(format!("traces/trace_A3_seed{seed}.csv"))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2, "{text}");
        assert_eq!(lines[0], "iteration,gbest_fitness,gbest_penalty");
        assert!(lines[1].starts_with("0,"));
    }
}

#[test]
fn perfect_cancellation_puts_ul_power_on_the_noise_floor() {
    let mut cfg = quick();
    cfg.system.num_ul_uts = 1;
    cfg.system.broadcast_per_ut();
    for seed in [1, 2] {
        let inst = experiments::instance(&cfg, seed).unwrap();
        // UL alone in the objective, so its total is at the level
        let s = inst.scenario.with_si_loss(0.0).with_weights([1.0, 0.0]);
        let ma = experiments::run_ma(&cfg, &inst, &s, 9).row;
        let fpa = experiments::run_fpa(&cfg, &inst, &s, 8);
        for row in [ma, fpa] {
            assert!(row.is_optimal(), "{}", row.status);
            let layout = row.layout.as_ref().unwrap();
            let l = &ChannelSet::assemble(layout, &s).ul[0];
            let gamma = 2f64.powf(s.config.ul_rate_thresholds[0]) - 1.0;
            let floor = gamma * s.config.ul_noise / l.norm_squared();
            // the level is T_1 - 1 W, so the solver resolves T_1 in absolute terms
            assert!((row.total_ul_w - floor).abs() <= 1e-8 + 1e-6 * floor, "{:?}: {} vs {floor}", row.scheme, row.total_ul_w);
        }
    }
}

#[test]
fn reruns_are_byte_identical_and_audit_clean() {
    let cfg = quick();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let oa = experiments::run_experiment(&spec(ExperimentKind::Single, cfg.clone(), vec![3, 4], a.path(), true)).unwrap();
    experiments::run_experiment(&spec(ExperimentKind::Single, cfg, vec![3, 4], b.path(), true)).unwrap();
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    assert!(fa.len() >= 4);
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{} differs", k.display());
    }
    let audit = oa.audit.unwrap();
    assert!(audit.checked >= 1);
    assert_eq!(audit.failures, 0, "max deviation {}", audit.max_deviation);
}

#[test]
fn tradeoff_plot_matches_golden_file() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tradeoff.svg");
    plot::plot_tradeoff(&data.join("tradeoff_mean.csv"), &out).unwrap();
    assert!(std::fs::read(&out).unwrap() == std::fs::read(data.join("tradeoff_mean.svg")).unwrap());
}

#[test]
fn empty_sweep_csv_is_an_error_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tradeoff_mean.csv");
    std::fs::write(&p, "scheme,antennas,lambda1,runs,feasible_fraction,mean_total_ul_w,mean_total_dl_w\n").unwrap();
    let out = dir.path().join("tradeoff.svg");
    assert!(plot::plot_tradeoff(&p, &out).is_err());
    assert!(!out.exists());
}
