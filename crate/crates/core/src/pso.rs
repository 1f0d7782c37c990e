//! Particle-swarm search over antenna positions.
//!
//! Positions are the stacked vector `u = [t_1, ..., t_M, r_1, ..., r_N]`
//! (x and y per antenna, metres). Region bounds are enforced by clamping after
//! every move; minimum spacing is enforced only at initialisation and through
//! the penalty term afterwards.

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{AntennaLayout, Point};
use crate::error::{Error, Result};
use crate::robust::{solve_inner, InnerOptions, InnerProblemData, InnerSolution};
use crate::scenario::{Scenario, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    /// Antennas involved in at least one violating pair.
    #[default]
    Antennas,
    /// Violating pairs.
    Pairs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia_min: f64,
    pub inertia_max: f64,
    pub cognitive: f64,
    pub social: f64,
    pub penalty: f64,
    pub penalty_mode: PenaltyMode,
    pub rng_seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            particles: 30,
            iterations: 100,
            inertia_min: 0.4,
            inertia_max: 0.9,
            cognitive: 1.4,
            social: 1.4,
            penalty: 1.0,
            penalty_mode: PenaltyMode::Antennas,
            rng_seed: 1,
        }
    }
}

impl SwarmConfig {
    /// Smaller swarm used for desk-scale experiments.
    pub fn desk() -> Self {
        SwarmConfig { particles: 20, iterations: 60, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.particles < 1 {
            return fail("swarm needs at least one particle");
        }
        if !(0.0 <= self.inertia_min && self.inertia_min <= self.inertia_max) {
            return fail("inertia bounds must satisfy 0 <= min <= max");
        }
        if !(self.cognitive >= 0.0 && self.social >= 0.0) {
            return fail("learning factors must be nonnegative");
        }
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return fail("penalty factor must be positive");
        }
        Ok(())
    }

    /// Inertia weight at iteration `q` of `Q`.
    pub fn inertia(&self, q: usize) -> f64 {
        if self.iterations == 0 {
            return self.inertia_max;
        }
        self.inertia_max - (self.inertia_max - self.inertia_min) * q as f64 / self.iterations as f64
    }
}

/// Per-coordinate half-widths for a stacked position vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub half: Vec<f64>,
    pub num_tx: usize,
    pub num_rx: usize,
}

impl Bounds {
    pub fn new(num_tx: usize, num_rx: usize, size_tx: f64, size_rx: f64) -> Self {
        let half = std::iter::repeat_n(size_tx / 2.0, 2 * num_tx)
            .chain(std::iter::repeat_n(size_rx / 2.0, 2 * num_rx))
            .collect();
        Bounds { half, num_tx, num_rx }
    }

    pub fn for_system(sys: &SystemConfig) -> Self {
        Self::new(sys.num_tx_antennas, sys.num_rx_antennas, sys.region_size_tx, sys.region_size_rx)
    }

    pub fn dim(&self) -> usize {
        self.half.len()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim() && u.iter().zip(&self.half).all(|(x, h)| x.abs() <= *h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// tau + beta * xi, or +inf when the inner problem has no optimal solution.
    pub fitness: f64,
    pub penalty: usize,
}

impl Evaluation {
    pub const INFEASIBLE: Evaluation = Evaluation { fitness: f64::INFINITY, penalty: usize::MAX };
}

/// Anything that scores a stacked position vector.
pub trait Fitness: Sync {
    fn evaluate(&self, u: &[f64]) -> Evaluation;
}

impl<F: Fn(&[f64]) -> Evaluation + Sync> Fitness for F {
    fn evaluate(&self, u: &[f64]) -> Evaluation {
        self(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pbest_u: Vec<f64>,
    pub pbest: Evaluation,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SwarmTrace {
    pub fitness: Vec<f64>,
    pub penalty: Vec<usize>,
    pub positions: Vec<Vec<f64>>,
}

impl SwarmTrace {
    /// Appends the current gbest. Panics if the gbest fitness increased.
    pub fn push(&mut self, best: Evaluation, u: &[f64]) {
        if let Some(&last) = self.fitness.last() {
            assert!(
                !(best.fitness > last),
                "gbest fitness increased from {last} to {}",
                best.fitness
            );
        }
        self.fitness.push(best.fitness);
        self.penalty.push(best.penalty);
        self.positions.push(u.to_vec());
    }

    pub fn len(&self) -> usize {
        self.fitness.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitness.is_empty()
    }

    /// First iteration after which gbest changes by less than `tol`.
    pub fn iterations_to_stability(&self, tol: f64) -> usize {
        let last = match self.fitness.last() {
            Some(v) => *v,
            None => return 0,
        };
        let mut idx = self.fitness.len() - 1;
        while idx > 0 {
            let prev = self.fitness[idx - 1];
            let same = if last.is_finite() { (prev - last).abs() < tol } else { prev == last };
            if !same {
                break;
            }
            idx -= 1;
        }
        idx
    }

    /// CSV with columns iteration, gbest_fitness, gbest_penalty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,gbest_fitness,gbest_penalty\n");
        for (q, (f, p)) in self.fitness.iter().zip(&self.penalty).enumerate() {
            let p = if *p == usize::MAX { "inf".to_string() } else { p.to_string() };
            out.push_str(&format!("{q},{},{p}\n", crate::experiments::fmt_f64(*f)));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub gbest_u: Vec<f64>,
    pub gbest: Evaluation,
    pub bounds: Bounds,
    rng: ChaCha8Rng,
}

/// Number of antennas (or pairs) closer than `min_spacing` within one region.
pub fn region_penalty(points: &[Point], min_spacing: f64, mode: PenaltyMode) -> usize {
    let mut flagged = vec![false; points.len()];
    let mut pairs = 0;
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let d = (points[a][0] - points[b][0]).hypot(points[a][1] - points[b][1]);
            if d < min_spacing {
                flagged[a] = true;
                flagged[b] = true;
                pairs += 1;
            }
        }
    }
    match mode {
        PenaltyMode::Antennas => flagged.iter().filter(|&&f| f).count(),
        PenaltyMode::Pairs => pairs,
    }
}

/// Spacing violations summed over both regions.
pub fn penalty_count(layout: &AntennaLayout, min_spacing: f64, mode: PenaltyMode) -> usize {
    region_penalty(&layout.tx, min_spacing, mode) + region_penalty(&layout.rx, min_spacing, mode)
}

/// Whether `count` antennas fit on a square grid of pitch `min_spacing` in a region of side `size`.
pub fn packing_feasible(count: usize, size: f64, min_spacing: f64) -> bool {
    let side = (count as f64).sqrt().ceil();
    (side - 1.0).max(0.0) * min_spacing <= size
}

fn sample_region(rng: &mut ChaCha8Rng, count: usize, size: f64, min_spacing: f64) -> Result<Vec<Point>> {
    const RESTARTS: usize = 1000;
    const ATTEMPTS: usize = 10_000;
    let half = size / 2.0;
    let draw = |rng: &mut ChaCha8Rng| -> Point {
        if half > 0.0 {
            [rng.random_range(-half..=half), rng.random_range(-half..=half)]
        } else {
            [0.0, 0.0]
        }
    };
    for _ in 0..RESTARTS {
        let mut pts: Vec<Point> = Vec::with_capacity(count);
        let mut ok = true;
        while pts.len() < count {
            let mut placed = false;
            for _ in 0..ATTEMPTS {
                let p = draw(rng);
                if pts.iter().all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) >= min_spacing) {
                    pts.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(pts);
        }
    }
    Err(Error::Config(format!(
        "could not place {count} antennas with spacing {min_spacing} in a region of side {size}"
    )))
}

fn evaluate_all<F: Fitness + ?Sized>(fitness: &F, positions: &[Vec<f64>]) -> Vec<Evaluation> {
    positions
        .par_iter()
        .map(|u| {
            let e = fitness.evaluate(u);
            if e.fitness.is_nan() {
                Evaluation::INFEASIBLE
            } else {
                e
            }
        })
        .collect()
}

fn fold_best(swarm_best: &mut (Vec<f64>, Evaluation), candidates: &[Particle]) {
    for p in candidates {
        if p.pbest.fitness < swarm_best.1.fitness {
            *swarm_best = (p.pbest_u.clone(), p.pbest);
        }
    }
}

/// Random initial swarm with every layout respecting bounds and spacing.
pub fn init_swarm<F: Fitness + ?Sized>(cfg: &SwarmConfig, sys: &SystemConfig, fitness: &F) -> Result<Swarm> {
    cfg.validate()?;
    let (m, n, d) = (sys.num_tx_antennas, sys.num_rx_antennas, sys.min_spacing);
    if !packing_feasible(m, sys.region_size_tx, d) || !packing_feasible(n, sys.region_size_rx, d) {
        return Err(Error::Config("antennas cannot be packed at the minimum spacing".into()));
    }
    let bounds = Bounds::for_system(sys);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut positions = Vec::with_capacity(cfg.particles);
    let mut velocities = Vec::with_capacity(cfg.particles);
    for _ in 0..cfg.particles {
        let layout = AntennaLayout::new(
            sample_region(&mut rng, m, sys.region_size_tx, d)?,
            sample_region(&mut rng, n, sys.region_size_rx, d)?,
        );
        positions.push(layout.to_stacked());
        velocities.push(
            bounds
                .half
                .iter()
                .map(|h| if *h > 0.0 { rng.random_range(-h / 2.0..=h / 2.0) } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
    }
    let evals = evaluate_all(fitness, &positions);
    let particles: Vec<Particle> = positions
        .into_iter()
        .zip(velocities)
        .zip(evals)
        .map(|((u, v), e)| Particle { pbest_u: u.clone(), u, v, pbest: e })
        .collect();
    let mut best = (particles[0].pbest_u.clone(), particles[0].pbest);
    fold_best(&mut best, &particles[1..]);
    Ok(Swarm { particles, gbest_u: best.0, gbest: best.1, bounds, rng })
}

/// New velocity for one particle; `e1`, `e2` are drawn from `rng`.
pub fn update_velocity(
    particle: &Particle,
    gbest_u: &[f64],
    q: usize,
    cfg: &SwarmConfig,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let w = cfg.inertia(q);
    (0..particle.u.len())
        .map(|i| {
            let e1: f64 = rng.random();
            let e2: f64 = rng.random();
            w * particle.v[i]
                + cfg.cognitive * e1 * (particle.pbest_u[i] - particle.u[i])
                + cfg.social * e2 * (gbest_u[i] - particle.u[i])
        })
        .collect()
}

/// `u + v` clamped into the regions.
pub fn update_position(u: &[f64], v: &[f64], bounds: &Bounds) -> Vec<f64> {
    u.iter()
        .zip(v)
        .zip(&bounds.half)
        .map(|((x, dx), h)| (x + dx).clamp(-h, *h))
        .collect()
}

impl Swarm {
    /// One synchronous iteration (`q` in 1..=Q).
    pub fn step<F: Fitness + ?Sized>(&mut self, q: usize, cfg: &SwarmConfig, fitness: &F) {
        for i in 0..self.particles.len() {
            let v = update_velocity(&self.particles[i], &self.gbest_u, q, cfg, &mut self.rng);
            let u = update_position(&self.particles[i].u, &v, &self.bounds);
            debug_assert!(self.bounds.contains(&u));
            let p = &mut self.particles[i];
            p.v = v;
            p.u = u;
        }
        let positions: Vec<Vec<f64>> = self.particles.iter().map(|p| p.u.clone()).collect();
        let evals = evaluate_all(fitness, &positions);
        for (p, e) in self.particles.iter_mut().zip(evals) {
            if e.fitness < p.pbest.fitness {
                p.pbest = e;
                p.pbest_u = p.u.clone();
            }
        }
        let mut best = (self.gbest_u.clone(), self.gbest);
        fold_best(&mut best, &self.particles);
        self.gbest_u = best.0;
        self.gbest = best.1;
    }
}

/// Runs the swarm and returns the final swarm with its trace (Q+1 rows).
pub fn run<F: Fitness + ?Sized>(cfg: &SwarmConfig, sys: &SystemConfig, fitness: &F) -> Result<(Swarm, SwarmTrace)> {
    let mut swarm = init_swarm(cfg, sys, fitness)?;
    let mut trace = SwarmTrace::default();
    trace.push(swarm.gbest, &swarm.gbest_u);
    for q in 1..=cfg.iterations {
        swarm.step(q, cfg, fitness);
        trace.push(swarm.gbest, &swarm.gbest_u);
        debug!("iteration {q}: gbest {:.6e} (penalty {})", swarm.gbest.fitness, swarm.gbest.penalty);
    }
    Ok((swarm, trace))
}

/// Inner-problem fitness `tau + beta * xi` for one scenario.
pub struct MaFitness<'a> {
    pub scenario: &'a Scenario,
    pub options: InnerOptions,
    pub penalty: f64,
    pub mode: PenaltyMode,
}

impl<'a> MaFitness<'a> {
    pub fn new(scenario: &'a Scenario, cfg: &SwarmConfig, options: InnerOptions) -> Self {
        MaFitness { scenario, options, penalty: cfg.penalty, mode: cfg.penalty_mode }
    }

    fn layout(&self, u: &[f64]) -> AntennaLayout {
        let c = &self.scenario.config;
        AntennaLayout::from_stacked(u, c.num_tx_antennas, c.num_rx_antennas)
    }

    /// Inner solution at `u` with the given options.
    pub fn solve(&self, u: &[f64], options: &InnerOptions) -> Result<InnerSolution> {
        let data = InnerProblemData::new(self.scenario, &self.layout(u))?;
        solve_inner(&data, options)
    }
}

impl Fitness for MaFitness<'_> {
    fn evaluate(&self, u: &[f64]) -> Evaluation {
        let penalty = penalty_count(&self.layout(u), self.scenario.config.min_spacing, self.mode);
        match self.solve(u, &self.options) {
            Ok(sol) if sol.is_optimal() => Evaluation { fitness: sol.tau + self.penalty * penalty as f64, penalty },
            Ok(_) => Evaluation { fitness: f64::INFINITY, penalty },
            Err(e) => {
                warn!("fitness evaluation failed: {e}");
                Evaluation { fitness: f64::INFINITY, penalty }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct PsoResult {
    pub layout: AntennaLayout,
    pub penalty: usize,
    pub fitness: f64,
    pub solution: InnerSolution,
    pub trace: SwarmTrace,
}

/// Full two-loop optimisation.
pub fn optimize_layout(scenario: &Scenario, cfg: &SwarmConfig, options: &InnerOptions) -> Result<PsoResult> {
    let fitness = MaFitness::new(scenario, cfg, options.clone());
    let (swarm, trace) = run(cfg, &scenario.config, &fitness)?;
    if !swarm.gbest.fitness.is_finite() {
        return Err(Error::NoFeasibleLayout { iterations: cfg.iterations });
    }
    let solution = fitness.solve(&swarm.gbest_u, options)?;
    Ok(PsoResult {
        layout: fitness.layout(&swarm.gbest_u),
        penalty: swarm.gbest.penalty,
        fitness: swarm.gbest.fitness,
        solution,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(u: &[f64]) -> Evaluation {
        Evaluation { fitness: u.iter().map(|x| (x - 0.01) * (x - 0.01)).sum(), penalty: 0 }
    }

    fn small_sys() -> SystemConfig {
        let mut s = SystemConfig::desk();
        s.num_tx_antennas = 2;
        s.num_rx_antennas = 2;
        s
    }

    #[test]
    fn inertia_schedule_endpoints() {
        let cfg = SwarmConfig::default();
        assert_eq!(cfg.inertia(0), 0.9);
        assert!((cfg.inertia(cfg.iterations) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn velocity_fixed_point_and_pure_inertia() {
        let cfg = SwarmConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let u = vec![0.1, -0.2, 0.3];
        let p = Particle { u: u.clone(), v: vec![0.0; 3], pbest_u: u.clone(), pbest: Evaluation { fitness: 0.0, penalty: 0 } };
        assert_eq!(update_velocity(&p, &u, 5, &cfg, &mut rng), vec![0.0; 3]);

        let frozen = SwarmConfig { cognitive: 0.0, social: 0.0, ..cfg.clone() };
        let p = Particle { v: vec![1.0, -2.0, 0.5], pbest_u: vec![9.0; 3], ..p };
        let v = update_velocity(&p, &[7.0; 3], 30, &frozen, &mut rng);
        let w = frozen.inertia(30);
        assert_eq!(v, vec![w, -2.0 * w, 0.5 * w]);
    }

    #[test]
    fn position_clamp() {
        let b = Bounds::new(1, 1, 2.0, 4.0);
        assert_eq!(update_position(&[0.0, 0.1, 0.2, 0.3], &[0.5, 0.1, -0.2, 0.3], &b), vec![0.5, 0.2, 0.0, 0.6]);
        assert_eq!(update_position(&[1.0, 0.0, 0.0, 0.0], &[0.3, 0.0, 0.0, 0.0], &b)[0], 1.0);
        assert_eq!(update_position(&[0.0; 4], &[40.0; 4], &b), vec![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn penalty_examples() {
        let d = 0.5;
        let spaced = AntennaLayout::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0.0, 0.0], [0.6, 0.0]]);
        assert_eq!(penalty_count(&spaced, d, PenaltyMode::Antennas), 0);
        let two = AntennaLayout::new(vec![[0.2, 0.2], [0.2, 0.2], [1.0, 1.0]], spaced.rx.clone());
        assert_eq!(penalty_count(&two, d, PenaltyMode::Antennas), 2);
        let three = AntennaLayout::new(vec![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]], spaced.rx.clone());
        assert_eq!(penalty_count(&three, d, PenaltyMode::Antennas), 3);
        assert_eq!(penalty_count(&three, d, PenaltyMode::Pairs), 3);
        let chain = AntennaLayout::new(vec![[0.0, 0.0], [0.4, 0.0], [0.8, 0.0]], vec![]);
        assert_eq!(penalty_count(&chain, d, PenaltyMode::Antennas), 3);
        assert_eq!(penalty_count(&chain, d, PenaltyMode::Pairs), 2);
    }

    #[test]
    fn packing_check() {
        assert!(packing_feasible(16, 1.5, 0.5));
        assert!(!packing_feasible(16, 1.4, 0.5));
        let mut sys = small_sys();
        sys.num_tx_antennas = 100;
        assert!(matches!(init_swarm(&SwarmConfig::desk(), &sys, &sphere), Err(Error::Config(_))));
    }

    #[test]
    fn single_particle_is_gbest() {
        let cfg = SwarmConfig { particles: 1, ..SwarmConfig::desk() };
        let swarm = init_swarm(&cfg, &small_sys(), &sphere).unwrap();
        assert_eq!(swarm.gbest_u, swarm.particles[0].u);
    }

    #[test]
    fn deterministic_and_monotone() {
        let cfg = SwarmConfig { iterations: 40, ..SwarmConfig::desk() };
        let (a, ta) = run(&cfg, &small_sys(), &sphere).unwrap();
        let (b, tb) = run(&cfg, &small_sys(), &sphere).unwrap();
        assert_eq!(ta, tb);
        assert_eq!(a.gbest_u, b.gbest_u);
        assert_eq!(ta.len(), 41);
        assert!(ta.fitness.windows(2).all(|w| w[1] <= w[0]));
        assert!(ta.fitness[40] < ta.fitness[0]);
        for p in &a.particles {
            assert!(a.bounds.contains(&p.u));
        }
    }

    #[test]
    fn zero_iterations_keep_initial_best() {
        let cfg = SwarmConfig { iterations: 0, ..SwarmConfig::desk() };
        let init = init_swarm(&cfg, &small_sys(), &sphere).unwrap();
        let (swarm, trace) = run(&cfg, &small_sys(), &sphere).unwrap();
        assert_eq!(trace.len(), 1);
        assert_eq!(swarm.gbest_u, init.gbest_u);
    }

    #[test]
    fn stability_index() {
        let t = SwarmTrace { fitness: vec![5.0, 3.0, 2.0, 2.0, 2.0], penalty: vec![0; 5], positions: vec![vec![]; 5] };
        assert_eq!(t.iterations_to_stability(1e-6), 2);
        assert_eq!(t.to_csv().lines().next(), Some("iteration,gbest_fitness,gbest_penalty"));
    }

    #[test]
    #[should_panic(expected = "increased")]
    fn trace_rejects_increase() {
        let mut t = SwarmTrace::default();
        t.push(Evaluation { fitness: 1.0, penalty: 0 }, &[]);
        t.push(Evaluation { fitness: 2.0, penalty: 0 }, &[]);
    }
}
