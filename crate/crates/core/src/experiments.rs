//! Experiment drivers: convergence traces, UL/DL trade-off sweeps, SI-loss
//! sweeps and single runs. Each writes CSV files plus an SVG figure.
//!
//! Every result row carries the root seed, the derived scenario and swarm
//! seeds and the exact antenna layout, so `--audit` can rebuild the instance
//! and re-solve it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{AntennaLayout, Point};
use crate::config::{weight_grid, ReferenceMode, RunConfig};
use crate::error::{Error, Result};
use crate::plot;
use crate::pso::{self, MaFitness, SwarmConfig, SwarmTrace};
use crate::robust::{calibrate_references, solve_inner, InnerProblemData, InnerSolution};
use crate::scenario::{Scenario, SystemConfig};
use crate::units::db_to_linear;

/// Trace tolerance for "iterations to stability".
pub const STABILITY_TOL: f64 = 1e-6;

/// Audit tolerance on re-solved total powers (watts, relative above 1 W).
pub const AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Convergence,
    Tradeoff,
    SiSweep,
    Single,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Tradeoff => "tradeoff",
            ExperimentKind::SiSweep => "si_sweep",
            ExperimentKind::Single => "single",
        }
    }

    fn stream(self) -> u64 {
        match self {
            ExperimentKind::Convergence => 1,
            ExperimentKind::Tradeoff => 2,
            ExperimentKind::SiSweep => 3,
            ExperimentKind::Single => 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub audit: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seed list contains duplicates".into()));
        }
        self.config.validate()
    }
}

/// Parses `1,2,5-8` style seed lists.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |part: &str| Error::Config(format!("bad seed list entry `{part}`"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().parse().map_err(|_| bad(part))?;
                if a > b {
                    return Err(bad(part));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty seed list".into()));
    }
    Ok(out)
}

/// Seed for one experiment cell, derived from the root seed.
///
/// Stream 0 is reserved for scenario generation.
pub fn cell_seed(root: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream((stream << 32) | index);
    rng.next_u64()
}

/// Centred uniform planar array with `pitch` spacing for both regions.
pub fn upa_layout(m: usize, n: usize, pitch: f64) -> AntennaLayout {
    AntennaLayout::new(upa_points(m, pitch), upa_points(n, pitch))
}

/// `count` points on a centred grid of `floor(sqrt(count))` rows.
pub fn upa_points(count: usize, pitch: f64) -> Vec<Point> {
    if count == 0 {
        return Vec::new();
    }
    let rows = ((count as f64).sqrt().floor() as usize).max(1);
    let cols = count.div_ceil(rows);
    let x0 = (cols - 1) as f64 / 2.0;
    let y0 = (rows - 1) as f64 / 2.0;
    (0..count)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            [(c as f64 - x0) * pitch, (r as f64 - y0) * pitch]
        })
        .collect()
}

/// Fixed-position baseline: a half-wavelength UPA with `antennas` transmit and
/// `antennas` receive elements, centred in each region.
#[derive(Debug, Clone, PartialEq)]
pub struct FpaBaseline {
    pub antennas: usize,
    pub layout: AntennaLayout,
    /// False when the grid is larger than the region; the region is then waived.
    pub contained: bool,
}

impl FpaBaseline {
    pub fn new(antennas: usize, sys: &SystemConfig) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::Config("FPA baseline needs at least one antenna".into()));
        }
        let layout = upa_layout(antennas, antennas, sys.wavelength / 2.0);
        let contained = layout.within_regions(sys.region_size_tx, sys.region_size_rx);
        if !contained {
            info!("FPA grid with {antennas} antennas exceeds the region; region constraint waived for the baseline");
        }
        Ok(FpaBaseline { antennas, layout, contained })
    }
}

/// Shortest round-trip representation, used for every float written to CSV.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scheme {
    Ma,
    Fpa,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Ma => "ma",
            Scheme::Fpa => "fpa",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ma" => Some(Scheme::Ma),
            "fpa" => Some(Scheme::Fpa),
            _ => None,
        }
    }
}

/// One solved (or failed) experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRow {
    pub seed: u64,
    pub scenario_seed: u64,
    pub swarm_seed: Option<u64>,
    pub scheme: Scheme,
    /// Transmit (= receive) antenna count of the scheme.
    pub antennas: usize,
    pub region_wavelengths: f64,
    pub rho_db: f64,
    pub rho: f64,
    pub weights: [f64; 2],
    pub references: [f64; 2],
    pub status: String,
    pub total_ul_w: f64,
    pub total_dl_w: f64,
    pub tau: f64,
    /// Gbest fitness (MA only).
    pub fitness: f64,
    pub penalty: Option<usize>,
    pub stable_iteration: Option<usize>,
    pub min_rank_ratio: f64,
    pub layout: Option<AntennaLayout>,
}

pub const ROW_COLUMNS: [&str; 22] = [
    "seed",
    "scenario_seed",
    "swarm_seed",
    "scheme",
    "antennas",
    "region_wavelengths",
    "rho_db",
    "rho",
    "lambda1",
    "lambda2",
    "ref_ul_w",
    "ref_dl_w",
    "status",
    "total_ul_w",
    "total_dl_w",
    "tau",
    "fitness",
    "penalty",
    "stable_iteration",
    "min_rank_ratio",
    "layout_tx",
    "layout_rx",
];

fn fmt_points(points: &[Point]) -> String {
    points.iter().flat_map(|p| [fmt_f64(p[0]), fmt_f64(p[1])]).collect::<Vec<_>>().join(" ")
}

fn parse_points(s: &str) -> Option<Vec<Point>> {
    let v: Option<Vec<f64>> = s.split_whitespace().map(parse_f64).collect();
    let v = v?;
    (v.len() % 2 == 0).then(|| v.chunks(2).map(|c| [c[0], c[1]]).collect())
}

impl CellRow {
    fn blank(inst: &Instance, scenario: &Scenario, scheme: Scheme, antennas: usize) -> Self {
        let c = &scenario.config;
        CellRow {
            seed: inst.seed,
            scenario_seed: inst.scenario_seed,
            swarm_seed: None,
            scheme,
            antennas,
            region_wavelengths: c.region_size_tx / c.wavelength,
            rho_db: 10.0 * c.si_loss.log10(),
            rho: c.si_loss,
            weights: c.weights,
            references: c.references,
            status: String::new(),
            total_ul_w: f64::NAN,
            total_dl_w: f64::NAN,
            tau: f64::NAN,
            fitness: f64::NAN,
            penalty: None,
            stable_iteration: None,
            min_rank_ratio: f64::NAN,
            layout: None,
        }
    }

    fn fill(&mut self, sol: &InnerSolution) {
        self.status = sol.status.to_string();
        if sol.is_optimal() {
            self.total_ul_w = sol.total_ul;
            self.total_dl_w = sol.total_dl;
            self.tau = sol.tau;
            self.min_rank_ratio = sol.rank_ratio.iter().copied().fold(f64::INFINITY, f64::min);
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == "optimal"
    }

    /// Optimal and, for MA, free of spacing violations.
    pub fn is_feasible(&self) -> bool {
        self.is_optimal() && self.penalty.unwrap_or(0) == 0
    }

    pub fn totals(&self) -> [f64; 2] {
        [self.total_ul_w, self.total_dl_w]
    }

    pub fn to_record(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.seed.to_string(),
            self.scenario_seed.to_string(),
            opt(self.swarm_seed),
            self.scheme.name().to_string(),
            self.antennas.to_string(),
            fmt_f64(self.region_wavelengths),
            fmt_f64(self.rho_db),
            fmt_f64(self.rho),
            fmt_f64(self.weights[0]),
            fmt_f64(self.weights[1]),
            fmt_f64(self.references[0]),
            fmt_f64(self.references[1]),
            self.status.clone(),
            fmt_f64(self.total_ul_w),
            fmt_f64(self.total_dl_w),
            fmt_f64(self.tau),
            fmt_f64(self.fitness),
            opt(self.penalty.map(|p| p as u64)),
            opt(self.stable_iteration.map(|p| p as u64)),
            fmt_f64(self.min_rank_ratio),
            self.layout.as_ref().map(|l| fmt_points(&l.tx)).unwrap_or_default(),
            self.layout.as_ref().map(|l| fmt_points(&l.rx)).unwrap_or_default(),
        ]
    }

    pub fn from_record(rec: &[String], path: &Path, line: usize) -> Result<Self> {
        let bad = |col: &str| Error::Schema { path: path.to_path_buf(), message: format!("row {line}: bad `{col}`") };
        if rec.len() != ROW_COLUMNS.len() {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                message: format!("row {line}: expected {} fields, found {}", ROW_COLUMNS.len(), rec.len()),
            });
        }
        let get = |i: usize| rec[i].as_str();
        let num = |i: usize| parse_f64(get(i)).ok_or_else(|| bad(ROW_COLUMNS[i]));
        let int = |i: usize| get(i).parse::<u64>().map_err(|_| bad(ROW_COLUMNS[i]));
        let opt = |i: usize| -> Result<Option<u64>> { if get(i).is_empty() { Ok(None) } else { int(i).map(Some) } };
        let layout = if get(20).is_empty() && get(21).is_empty() {
            None
        } else {
            let tx = parse_points(get(20)).ok_or_else(|| bad("layout_tx"))?;
            let rx = parse_points(get(21)).ok_or_else(|| bad("layout_rx"))?;
            Some(AntennaLayout::new(tx, rx))
        };
        Ok(CellRow {
            seed: int(0)?,
            scenario_seed: int(1)?,
            swarm_seed: opt(2)?,
            scheme: Scheme::parse(get(3)).ok_or_else(|| bad("scheme"))?,
            antennas: int(4)? as usize,
            region_wavelengths: num(5)?,
            rho_db: num(6)?,
            rho: num(7)?,
            weights: [num(8)?, num(9)?],
            references: [num(10)?, num(11)?],
            status: get(12).to_string(),
            total_ul_w: num(13)?,
            total_dl_w: num(14)?,
            tau: num(15)?,
            fitness: num(16)?,
            penalty: opt(17)?.map(|p| p as usize),
            stable_iteration: opt(18)?.map(|p| p as usize),
            min_rank_ratio: num(19)?,
            layout,
        })
    }
}

fn write_csv(path: &Path, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rows(path: &Path, rows: &[CellRow]) -> Result<()> {
    write_csv(path, &ROW_COLUMNS, rows.iter().map(CellRow::to_record))
}

pub fn read_rows(path: &Path) -> Result<Vec<CellRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ROW_COLUMNS {
        return Err(Error::Schema { path: path.to_path_buf(), message: "unexpected header".into() });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec: Vec<String> = rec?.iter().map(str::to_string).collect();
        out.push(CellRow::from_record(&rec, path, i + 2)?);
    }
    Ok(out)
}

/// Scenario drawn for one root seed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub scenario_seed: u64,
    pub scenario: Scenario,
}

pub fn instance(cfg: &RunConfig, seed: u64) -> Result<Instance> {
    let scenario_seed = cell_seed(seed, 0, 0);
    let sys = SystemConfig { rng_seed: scenario_seed, ..cfg.system.clone() };
    Ok(Instance { seed, scenario_seed, scenario: Scenario::generate(&sys)? })
}

/// Reference powers for `scenario`: the configured constants, or the
/// single-objective optima at the M x N half-wavelength FPA layout.
/// `None` when calibration fails.
pub fn references_for(cfg: &RunConfig, scenario: &Scenario) -> Option<[f64; 2]> {
    match cfg.reference_mode {
        ReferenceMode::Fixed => Some(scenario.config.references),
        ReferenceMode::Calibrated => {
            let c = &scenario.config;
            let layout = upa_layout(c.num_tx_antennas, c.num_rx_antennas, c.wavelength / 2.0);
            let result = InnerProblemData::new(scenario, &layout)
                .and_then(|data| calibrate_references(&data, &cfg.inner_options()));
            match result {
                Ok(Some(r)) => Some(r),
                Ok(None) => {
                    warn!("reference calibration infeasible for scenario seed {}", c.rng_seed);
                    None
                }
                Err(e) => {
                    warn!("reference calibration failed for scenario seed {}: {e}", c.rng_seed);
                    None
                }
            }
        }
    }
}

/// Result of one MA cell.
#[derive(Debug, Clone)]
pub struct MaRun {
    pub row: CellRow,
    pub trace: SwarmTrace,
}

/// Full two-loop optimisation of `scenario` with the given swarm seed.
pub fn run_ma(cfg: &RunConfig, inst: &Instance, scenario: &Scenario, swarm_seed: u64) -> MaRun {
    let c = &scenario.config;
    let mut row = CellRow::blank(inst, scenario, Scheme::Ma, c.num_tx_antennas);
    row.swarm_seed = Some(swarm_seed);
    let swarm_cfg = SwarmConfig { rng_seed: swarm_seed, ..cfg.swarm.clone() };
    let fitness = MaFitness::new(scenario, &swarm_cfg, cfg.inner_options());
    let (swarm, trace) = match pso::run(&swarm_cfg, c, &fitness) {
        Ok(v) => v,
        Err(e) => {
            warn!("seed {}: swarm failed: {e}", inst.seed);
            row.status = "error".into();
            return MaRun { row, trace: SwarmTrace::default() };
        }
    };
    row.fitness = swarm.gbest.fitness;
    row.stable_iteration = Some(trace.iterations_to_stability(STABILITY_TOL));
    if !swarm.gbest.fitness.is_finite() {
        row.status = "no-feasible-layout".into();
        return MaRun { row, trace };
    }
    row.penalty = Some(swarm.gbest.penalty);
    let layout = AntennaLayout::from_stacked(&swarm.gbest_u, c.num_tx_antennas, c.num_rx_antennas);
    match fitness.solve(&swarm.gbest_u, &cfg.inner_options()) {
        Ok(sol) => row.fill(&sol),
        Err(e) => {
            warn!("seed {}: final solve failed: {e}", inst.seed);
            row.status = "error".into();
        }
    }
    row.layout = Some(layout);
    MaRun { row, trace }
}

/// Inner problem only, at the half-wavelength FPA layout with `antennas` elements.
pub fn run_fpa(cfg: &RunConfig, inst: &Instance, scenario: &Scenario, antennas: usize) -> CellRow {
    let mut row = CellRow::blank(inst, scenario, Scheme::Fpa, antennas);
    let fpa = match FpaBaseline::new(antennas, &scenario.config) {
        Ok(f) => f,
        Err(e) => {
            warn!("seed {}: {e}", inst.seed);
            row.status = "error".into();
            return row;
        }
    };
    match InnerProblemData::new(scenario, &fpa.layout).and_then(|d| solve_inner(&d, &cfg.inner_options())) {
        Ok(sol) => row.fill(&sol),
        Err(e) => {
            warn!("seed {}: FPA solve with {antennas} antennas failed: {e}", inst.seed);
            row.status = "error".into();
        }
    }
    row.layout = Some(fpa.layout);
    row
}

fn calibration_failed(inst: &Instance, scenario: &Scenario, scheme: Scheme, antennas: usize) -> CellRow {
    let mut row = CellRow::blank(inst, scenario, scheme, antennas);
    row.status = "calibration-failed".into();
    row
}

/// Audit summary of one CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub checked: usize,
    pub failures: usize,
    pub max_deviation: f64,
}

/// Re-solves every optimal row of `csv` at its recorded layout and compares
/// total powers. Writes `<stem>_audit.csv` next to it.
pub fn audit_csv(cfg: &RunConfig, csv: &Path) -> Result<AuditReport> {
    let rows = read_rows(csv)?;
    let checks: Vec<Option<f64>> = rows
        .par_iter()
        .map(|row| {
            let layout = row.layout.as_ref().filter(|_| row.is_optimal())?;
            let mut sys = SystemConfig { rng_seed: row.scenario_seed, ..cfg.system.clone() };
            sys.si_loss = row.rho;
            sys.weights = row.weights;
            sys.references = row.references;
            let resolved = Scenario::generate(&sys)
                .and_then(|s| InnerProblemData::new(&s, layout))
                .and_then(|d| solve_inner(&d, &cfg.inner_options()));
            let dev = match resolved {
                Ok(sol) if sol.is_optimal() => {
                    let d = |a: f64, b: f64| (a - b).abs() / a.abs().max(1.0);
                    d(sol.total_ul, row.total_ul_w).max(d(sol.total_dl, row.total_dl_w))
                }
                _ => f64::INFINITY,
            };
            Some(dev)
        })
        .collect();
    let mut report = AuditReport::default();
    let mut records = Vec::new();
    for (i, c) in checks.iter().enumerate() {
        if let Some(dev) = *c {
            let ok = dev <= AUDIT_TOL;
            report.checked += 1;
            report.max_deviation = report.max_deviation.max(dev);
            if !ok {
                report.failures += 1;
                warn!("audit: {} row {} deviates by {dev:.3e}", csv.display(), i + 2);
            }
            records.push(vec![(i + 2).to_string(), fmt_f64(dev), if ok { "pass" } else { "fail" }.to_string()]);
        }
    }
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("rows");
    write_csv(&csv.with_file_name(format!("{stem}_audit.csv")), &["line", "max_deviation", "result"], records)?;
    Ok(report)
}

/// Files written by one experiment plus its rows.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub rows: Vec<CellRow>,
    pub files: Vec<PathBuf>,
    pub audit: Option<AuditReport>,
}

impl ExperimentOutcome {
    /// True when at least one cell produced an optimal solution.
    pub fn any_optimal(&self) -> bool {
        self.rows.iter().any(CellRow::is_optimal)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir).map_err(|e| Error::io(&spec.out_dir, e))?;
    let mut out = match spec.kind {
        ExperimentKind::Convergence => run_convergence(spec)?,
        ExperimentKind::Tradeoff => run_tradeoff(spec)?,
        ExperimentKind::SiSweep => run_si_sweep(spec)?,
        ExperimentKind::Single => run_single(spec)?,
    };
    if spec.audit {
        let csv = spec.out_dir.join(format!("{}.csv", spec.kind.name()));
        let report = audit_csv(&spec.config, &csv)?;
        out.files.push(spec.out_dir.join(format!("{}_audit.csv", spec.kind.name())));
        out.audit = Some(report);
    }
    Ok(out)
}

fn instances(spec: &ExperimentSpec) -> Result<Vec<Instance>> {
    spec.seeds.par_iter().map(|&s| instance(&spec.config, s)).collect()
}

fn label(a: f64) -> String {
    format!("{a}").replace('-', "m")
}

fn mean(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n, if n == 0 { f64::NAN } else { s / n as f64 })
}

/// Per-iteration mean over seeds, ignoring non-finite entries.
pub fn mean_trace(traces: &[&SwarmTrace]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.len()).max().unwrap_or(0);
    (0..len)
        .map(|q| {
            let (n, m) = mean(traces.iter().filter_map(|t| t.fitness.get(q).copied()).filter(|v| v.is_finite()));
            if n == 0 { f64::INFINITY } else { m }
        })
        .collect()
}

fn write_trace(path: &Path, trace: &SwarmTrace) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, trace.to_csv()).map_err(|e| Error::io(path, e))
}

fn with_region(scenario: &Scenario, wavelengths: f64) -> Scenario {
    let mut s = scenario.clone();
    s.config.region_size_tx = wavelengths * s.config.wavelength;
    s.config.region_size_rx = wavelengths * s.config.wavelength;
    s
}

/// PSO traces per region size and seed.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let cfg = &spec.config;
    let insts = instances(spec)?;
    let refs: Vec<Option<[f64; 2]>> = insts.par_iter().map(|i| references_for(cfg, &i.scenario)).collect();
    let sizes = &cfg.experiment.region_sizes_wavelengths;
    let cells: Vec<(usize, usize)> = (0..sizes.len()).flat_map(|a| (0..insts.len()).map(move |s| (a, s))).collect();
    let runs: Vec<MaRun> = cells
        .par_iter()
        .map(|&(a, s)| {
            let inst = &insts[s];
            let base = with_region(&inst.scenario, sizes[a]);
            match refs[s] {
                Some(r) => run_ma(cfg, inst, &base.with_references(r), cell_seed(inst.seed, spec.kind.stream(), a as u64)),
                None => MaRun {
                    row: calibration_failed(inst, &base, Scheme::Ma, base.config.num_tx_antennas),
                    trace: SwarmTrace::default(),
                },
            }
        })
        .collect();

    let dir = &spec.out_dir;
    let mut files = Vec::new();
    for (&(a, s), run) in cells.iter().zip(&runs) {
        let p = dir.join("traces").join(format!("trace_A{}_seed{}.csv", label(sizes[a]), insts[s].seed));
        write_trace(&p, &run.trace)?;
        files.push(p);
    }
    let rows: Vec<CellRow> = runs.iter().map(|r| r.row.clone()).collect();
    let main = dir.join("convergence.csv");
    write_rows(&main, &rows)?;
    files.push(main);

    let mut mean_records = Vec::new();
    let mut plot_inputs = Vec::new();
    for (a, &size) in sizes.iter().enumerate() {
        let group: Vec<&MaRun> = cells.iter().zip(&runs).filter(|(c, _)| c.0 == a).map(|(_, r)| r).collect();
        let n = group.len();
        let feasible: Vec<&&MaRun> = group.iter().filter(|r| r.row.is_feasible()).collect();
        let zero_penalty = group.iter().filter(|r| r.row.penalty == Some(0)).count();
        let (_, fit) = mean(group.iter().map(|r| r.row.fitness).filter(|f| f.is_finite()));
        let (_, stable) = mean(group.iter().filter_map(|r| r.row.stable_iteration).map(|v| v as f64));
        mean_records.push(vec![
            fmt_f64(size),
            n.to_string(),
            fmt_f64(feasible.len() as f64 / n as f64),
            fmt_f64(zero_penalty as f64 / n as f64),
            fmt_f64(fit),
            fmt_f64(stable),
        ]);
        let traces: Vec<&SwarmTrace> = group.iter().map(|r| &r.trace).collect();
        let m = mean_trace(&traces);
        let mut csv = String::from("iteration,gbest_fitness,gbest_penalty\n");
        for (q, v) in m.iter().enumerate() {
            csv.push_str(&format!("{q},{},\n", fmt_f64(*v)));
        }
        let p = dir.join("traces").join(format!("trace_mean_A{}.csv", label(size)));
        std::fs::write(&p, csv).map_err(|e| Error::io(&p, e))?;
        plot_inputs.push((format!("A = {size} wavelengths"), p.clone()));
        files.push(p);
    }
    let mean_path = dir.join("convergence_mean.csv");
    write_csv(
        &mean_path,
        &[
            "region_wavelengths",
            "runs",
            "feasible_fraction",
            "zero_penalty_fraction",
            "mean_final_fitness",
            "mean_iterations_to_stability",
        ],
        mean_records,
    )?;
    files.push(mean_path);
    if plot_inputs.iter().all(|(_, p)| std::fs::metadata(p).map(|m| m.len() > 0).unwrap_or(false)) {
        let svg = dir.join("convergence.svg");
        match plot::plot_convergence(&plot_inputs, &svg) {
            Ok(()) => files.push(svg),
            Err(e) => warn!("convergence plot skipped: {e}"),
        }
    }
    Ok(ExperimentOutcome { rows, files, audit: None })
}

/// Which scheme a task runs, and with how many antennas.
#[derive(Debug, Clone, Copy)]
enum Task {
    Ma { swarm_seed: u64 },
    Fpa { antennas: usize },
}

fn run_task(cfg: &RunConfig, inst: &Instance, scenario: &Scenario, refs: Option<[f64; 2]>, task: Task) -> MaRun {
    let Some(r) = refs else {
        let (scheme, n) = match task {
            Task::Ma { .. } => (Scheme::Ma, scenario.config.num_tx_antennas),
            Task::Fpa { antennas } => (Scheme::Fpa, antennas),
        };
        return MaRun { row: calibration_failed(inst, scenario, scheme, n), trace: SwarmTrace::default() };
    };
    let scenario = scenario.with_references(r);
    match task {
        Task::Ma { swarm_seed } => run_ma(cfg, inst, &scenario, swarm_seed),
        Task::Fpa { antennas } => MaRun { row: run_fpa(cfg, inst, &scenario, antennas), trace: SwarmTrace::default() },
    }
}

fn tasks_for(cfg: &RunConfig, root: u64, stream: u64, index: u64) -> Vec<Task> {
    let mut t = vec![Task::Ma { swarm_seed: cell_seed(root, stream, index) }];
    t.extend(cfg.fpa_sizes().into_iter().map(|antennas| Task::Fpa { antennas }));
    t
}

/// Means over feasible rows keyed by `key`.
fn group_means<K: Ord + Clone>(rows: &[CellRow], key: impl Fn(&CellRow) -> K) -> BTreeMap<K, (usize, f64, [f64; 2])> {
    let mut groups: BTreeMap<K, Vec<&CellRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, g)| {
            let feasible: Vec<&&CellRow> = g.iter().filter(|r| r.is_feasible()).collect();
            let (_, ul) = mean(feasible.iter().map(|r| r.total_ul_w));
            let (_, dl) = mean(feasible.iter().map(|r| r.total_dl_w));
            (k, (g.len(), feasible.len() as f64 / g.len() as f64, [ul, dl]))
        })
        .collect()
}

/// Weight sweep for MA and every FPA size.
pub fn run_tradeoff(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let cfg = &spec.config;
    let grid = weight_grid(cfg.experiment.weight_step)?;
    let insts = instances(spec)?;
    let refs: Vec<Option<[f64; 2]>> = insts.par_iter().map(|i| references_for(cfg, &i.scenario)).collect();
    let mut cells = Vec::new();
    for (s, inst) in insts.iter().enumerate() {
        for (w, _) in grid.iter().enumerate() {
            for task in tasks_for(cfg, inst.seed, spec.kind.stream(), w as u64) {
                cells.push((s, w, task));
            }
        }
    }
    let rows: Vec<CellRow> = cells
        .par_iter()
        .map(|&(s, w, task)| {
            let inst = &insts[s];
            let scenario = inst.scenario.with_weights([grid[w], 1.0 - grid[w]]);
            run_task(cfg, inst, &scenario, refs[s], task).row
        })
        .collect();

    let dir = &spec.out_dir;
    let main = dir.join("tradeoff.csv");
    write_rows(&main, &rows)?;
    let means = group_means(&rows, |r| (r.scheme, r.antennas, (r.weights[0] * 1e9).round() as i64));
    let mean_records: Vec<Vec<String>> = means
        .iter()
        .map(|(&(scheme, n, l), &(runs, frac, [ul, dl]))| {
            vec![
                scheme.name().to_string(),
                n.to_string(),
                fmt_f64(l as f64 / 1e9),
                runs.to_string(),
                fmt_f64(frac),
                fmt_f64(ul),
                fmt_f64(dl),
            ]
        })
        .collect();
    let mean_path = dir.join("tradeoff_mean.csv");
    write_csv(
        &mean_path,
        &["scheme", "antennas", "lambda1", "runs", "feasible_fraction", "mean_total_ul_w", "mean_total_dl_w"],
        mean_records,
    )?;
    let mut files = vec![main, mean_path.clone()];
    let svg = dir.join("tradeoff.svg");
    match plot::plot_tradeoff(&mean_path, &svg) {
        Ok(()) => files.push(svg),
        Err(e) => warn!("trade-off plot skipped: {e}"),
    }
    Ok(ExperimentOutcome { rows, files, audit: None })
}

/// SI-loss sweep over the dB grid for MA and every FPA size.
pub fn run_si_sweep(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let cfg = &spec.config;
    let grid = &cfg.experiment.si_loss_db;
    let insts = instances(spec)?;
    let variants: Vec<(usize, usize)> = (0..insts.len()).flat_map(|s| (0..grid.len()).map(move |g| (s, g))).collect();
    let scenarios: Vec<Scenario> =
        variants.iter().map(|&(s, g)| insts[s].scenario.with_si_loss(db_to_linear(grid[g]))).collect();
    let refs: Vec<Option<[f64; 2]>> = scenarios.par_iter().map(|sc| references_for(cfg, sc)).collect();
    let mut cells = Vec::new();
    for (v, &(s, g)) in variants.iter().enumerate() {
        for task in tasks_for(cfg, insts[s].seed, spec.kind.stream(), g as u64) {
            cells.push((v, task));
        }
    }
    let rows: Vec<CellRow> = cells
        .par_iter()
        .map(|&(v, task)| run_task(cfg, &insts[variants[v].0], &scenarios[v], refs[v], task).row)
        .collect();

    let dir = &spec.out_dir;
    let main = dir.join("si_sweep.csv");
    write_rows(&main, &rows)?;
    let means = group_means(&rows, |r| ((r.rho_db * 1e9).round() as i64, r.scheme, r.antennas));
    let mean_records: Vec<Vec<String>> = means
        .iter()
        .map(|(&(rho, scheme, n), &(runs, frac, [ul, dl]))| {
            vec![
                fmt_f64(rho as f64 / 1e9),
                scheme.name().to_string(),
                n.to_string(),
                runs.to_string(),
                fmt_f64(frac),
                fmt_f64(ul),
                fmt_f64(dl),
            ]
        })
        .collect();
    let mean_path = dir.join("si_sweep_mean.csv");
    write_csv(
        &mean_path,
        &["rho_db", "scheme", "fpa_antennas", "runs", "feasible_fraction", "mean_total_ul_w", "mean_total_dl_w"],
        mean_records,
    )?;
    let mut files = vec![main, mean_path.clone()];
    let svg = dir.join("si_sweep.svg");
    match plot::plot_si_sweep(&mean_path, &svg) {
        Ok(()) => files.push(svg),
        Err(e) => warn!("SI sweep plot skipped: {e}"),
    }
    Ok(ExperimentOutcome { rows, files, audit: None })
}

/// One MA run plus FPA baselines per seed at the configured weights.
pub fn run_single(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let cfg = &spec.config;
    let insts = instances(spec)?;
    let refs: Vec<Option<[f64; 2]>> = insts.par_iter().map(|i| references_for(cfg, &i.scenario)).collect();
    let mut cells = Vec::new();
    for (s, inst) in insts.iter().enumerate() {
        for task in tasks_for(cfg, inst.seed, spec.kind.stream(), 0) {
            cells.push((s, task));
        }
    }
    let runs: Vec<(usize, Task, MaRun)> = cells
        .par_iter()
        .map(|&(s, task)| (s, task, run_task(cfg, &insts[s], &insts[s].scenario, refs[s], task)))
        .collect();

    let dir = &spec.out_dir;
    let mut files = Vec::new();
    for inst in &insts {
        let p = dir.join("scenarios").join(format!("scenario_seed{}.toml", inst.seed));
        std::fs::create_dir_all(p.parent().expect("has parent")).map_err(|e| Error::io(dir, e))?;
        inst.scenario.save(&p)?;
        files.push(p);
    }
    for (s, task, run) in &runs {
        if matches!(task, Task::Ma { .. }) {
            let p = dir.join("traces").join(format!("trace_seed{}.csv", insts[*s].seed));
            write_trace(&p, &run.trace)?;
            files.push(p);
        }
    }
    let rows: Vec<CellRow> = runs.into_iter().map(|(_, _, r)| r.row).collect();
    let main = dir.join("single.csv");
    write_rows(&main, &rows)?;
    files.push(main);
    Ok(ExperimentOutcome { rows, files, audit: None })
}
