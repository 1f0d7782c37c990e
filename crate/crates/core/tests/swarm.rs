use mafd_core::channel::{AntennaLayout, Point};
use mafd_core::experiments::upa_layout;
use mafd_core::pso::{self, Evaluation, Fitness, MaFitness, PenaltyMode, SwarmConfig};
use mafd_core::robust::{solve_inner, InnerOptions, InnerProblemData};
use mafd_core::scenario::{Scenario, SystemConfig};
use proptest::prelude::*;

fn bowl(u: &[f64]) -> Evaluation {
    Evaluation { fitness: u.iter().map(|x| (x - 0.003).powi(2)).sum(), penalty: 0 }
}

#[test]
fn full_scale_initialisations_respect_spacing() {
    let sys = SystemConfig::full_scale();
    assert_eq!((sys.num_tx_antennas, sys.num_rx_antennas), (16, 16));
    assert!((sys.region_size_tx - 5.0 * sys.wavelength).abs() < 1e-15);
    let d = sys.min_spacing;
    for seed in 0..1000 {
        let cfg = SwarmConfig { particles: 1, rng_seed: seed, ..SwarmConfig::default() };
        let swarm = pso::init_swarm(&cfg, &sys, &bowl).unwrap();
        for p in &swarm.particles {
            let layout = AntennaLayout::from_stacked(&p.u, 16, 16);
            assert!(layout.min_tx_spacing() >= d && layout.min_rx_spacing() >= d, "seed {seed}");
            assert!(swarm.bounds.contains(&p.u));
            for (v, h) in p.v.iter().zip(&swarm.bounds.half) {
                assert!(v.abs() <= h / 2.0);
            }
        }
    }
}

#[test]
fn positions_stay_in_regions_every_iteration() {
    let sys = SystemConfig::desk();
    // an aggressive swarm that keeps hitting the walls
    let cfg = SwarmConfig { particles: 12, iterations: 30, cognitive: 3.0, social: 3.0, ..SwarmConfig::desk() };
    let far = |u: &[f64]| Evaluation { fitness: -u.iter().map(|x| x.abs()).sum::<f64>(), penalty: 0 };
    let mut swarm = pso::init_swarm(&cfg, &sys, &far).unwrap();
    for q in 1..=cfg.iterations {
        swarm.step(q, &cfg, &far);
        for p in &swarm.particles {
            assert!(swarm.bounds.contains(&p.u), "iteration {q}");
        }
    }
}

#[test]
fn frozen_single_particle_keeps_its_position() {
    let sys = SystemConfig::desk();
    let cfg = SwarmConfig { particles: 1, iterations: 5, cognitive: 0.0, social: 0.0, ..SwarmConfig::desk() };
    let mut swarm = pso::init_swarm(&cfg, &sys, &bowl).unwrap();
    let start = swarm.particles[0].u.clone();
    swarm.particles[0].v.iter_mut().for_each(|v| *v = 0.0);
    for q in 1..=cfg.iterations {
        swarm.step(q, &cfg, &bowl);
    }
    assert_eq!(swarm.particles[0].u, start);
    assert_eq!(swarm.gbest_u, start);
    assert_eq!(swarm.gbest, bowl(&start));
}

/// Antennas closer than `d` to some other antenna of the same region.
fn violators(points: &[Point], d: f64) -> usize {
    (0..points.len())
        .filter(|&a| (0..points.len()).any(|b| b != a && (points[a][0] - points[b][0]).hypot(points[a][1] - points[b][1]) < d))
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn penalty_matches_pair_audit(
        tx in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 1..10),
        rx in proptest::collection::vec((-0.05f64..0.05, -0.05f64..0.05), 1..10),
    ) {
        let d = 0.01875;
        let layout = AntennaLayout::new(
            tx.iter().map(|&(x, y)| [x, y]).collect(),
            rx.iter().map(|&(x, y)| [x, y]).collect(),
        );
        let want = violators(&layout.tx, d) + violators(&layout.rx, d);
        prop_assert_eq!(pso::penalty_count(&layout, d, PenaltyMode::Antennas), want);
    }

    #[test]
    fn clamped_step_is_within_bounds(u0 in proptest::collection::vec(-1.0f64..1.0, 8), v in proptest::collection::vec(-5.0f64..5.0, 8)) {
        let b = pso::Bounds::new(2, 2, 1.0, 0.5);
        let u: Vec<f64> = u0.iter().zip(&b.half).map(|(x, h)| x * h).collect();
        let next = pso::update_position(&u, &v, &b);
        prop_assert!(b.contains(&next));
        for i in 0..8 {
            let free = u[i] + v[i];
            if free.abs() <= b.half[i] {
                prop_assert_eq!(next[i], free);
            }
        }
    }
}

#[test]
fn fitness_is_tau_plus_penalty() {
    let s = Scenario::generate(&SystemConfig::desk()).unwrap();
    let c = &s.config;
    let cfg = SwarmConfig { penalty: 1.0, ..SwarmConfig::desk() };
    let fit = MaFitness::new(&s, &cfg, InnerOptions::default());
    let spaced = upa_layout(c.num_tx_antennas, c.num_rx_antennas, c.wavelength / 2.0);
    let e = fit.evaluate(&spaced.to_stacked());
    let sol = solve_inner(&InnerProblemData::new(&s, &spaced).unwrap(), &InnerOptions::default()).unwrap();
    assert_eq!(e.penalty, 0);
    assert_eq!(e.fitness, sol.tau);

    let mut crowded = spaced.clone();
    crowded.tx[1] = [crowded.tx[0][0] + 1e-3, crowded.tx[0][1]];
    let heavy = MaFitness::new(&s, &SwarmConfig { penalty: 1e3, ..cfg }, InnerOptions::default());
    let ec = heavy.evaluate(&crowded.to_stacked());
    assert_eq!(ec.penalty, 2);
    assert!(ec.fitness > e.fitness);
    // tau never exceeds 0 at these power levels with 1 W references, so 1e3 dominates
    assert!(ec.fitness >= 2e3 - 1.0);
}
