use rand::SeedableRng;

use super::*;
use crate::lottery::exact_distribution;
use crate::valuations::{CoveragePoint, Matroid, RankTerm};
use crate::verify::{random_instance, GeneratorConfig};

fn coverage(m: usize, weights: &[f64], sets: Vec<Vec<usize>>) -> MrsValuation {
    let points = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| CoveragePoint {
            id: format!("p{i}"),
            weight: w,
        })
        .collect();
    MrsValuation::coverage(m, points, sets).unwrap()
}

fn unit(m: usize, j: usize) -> MrsValuation {
    let sets = (0..m).map(|p| if p == j { vec![0] } else { vec![] }).collect();
    coverage(m, &[1.0], sets)
}

#[test]
fn instance_validation() {
    assert!(Instance::new(1, vec![]).is_err());
    assert!(Instance::new(0, vec![unit(2, 0)]).is_err());
    assert!(Instance::new(3, vec![unit(2, 0)]).is_err());
    assert!(Instance::new(1, vec![unit(2, 0), unit(3, 0)]).is_err());
    let inst = Instance::new(2, vec![unit(2, 0), unit(2, 1)]).unwrap();
    assert_eq!((inst.n(), inst.m(), inst.k()), (2, 2, 2));
    assert_eq!(inst.grand_welfare(), 2.0);
    assert_eq!(inst.welfare_without(0, &ProjectSet::all(2)).unwrap(), 1.0);
    let zeroed = inst.without_player(1).unwrap();
    assert_eq!(zeroed.n(), 2);
    assert_eq!(zeroed.grand_welfare(), 1.0);
}

#[test]
fn single_project_single_player() {
    let inst = Instance::new(1, vec![unit(1, 0)]).unwrap();
    for rounding in [Rounding::Rk, Rounding::RkPlus] {
        let out = run_midr(&inst, &MechanismConfig::new(rounding, 1e-6), 7).unwrap();
        assert_eq!(out.x_star.x(), &[1.0]);
        if rounding == Rounding::Rk {
            assert_eq!(out.chosen, ProjectSet::singleton(0));
        }
        assert_eq!(out.payments, vec![0.0]);
        assert_eq!(out.expected_payments, vec![0.0]);
    }
}

#[test]
fn shared_favourite_project_is_chosen() {
    let inst = Instance::new(1, vec![unit(2, 1), unit(2, 1)]).unwrap();
    let out = run_midr(&inst, &MechanismConfig::default(), 1).unwrap();
    assert_eq!(out.x_star.x(), &[0.0, 1.0]);
    assert_eq!(out.chosen, ProjectSet::singleton(1));
    assert!((out.expected_welfare - 2.0).abs() < 1e-15);
    // removing either player leaves x = (0, 1): no externality
    assert_eq!(out.expected_payments, vec![0.0, 0.0]);
}

#[test]
fn identical_players_on_one_project_pay_nothing() {
    let inst = Instance::new(1, vec![unit(1, 0), unit(1, 0)]).unwrap();
    let (realized, expected) = compute_payments(&inst, &MechanismConfig::default(), 3).unwrap();
    assert_eq!(expected, vec![0.0, 0.0]);
    assert_eq!(realized, vec![0.0, 0.0]);
}

#[test]
fn pivotal_player_pays_the_externality() {
    // k = 1: player 1 wants project 1 (value 3), player 2 project 2 (value 1)
    let inst = Instance::new(
        1,
        vec![
            coverage(2, &[3.0], vec![vec![0], vec![]]),
            coverage(2, &[1.0], vec![vec![], vec![0]]),
        ],
    )
    .unwrap();
    let out = run_midr(&inst, &MechanismConfig::default(), 9).unwrap();
    assert_eq!(out.x_star.x(), &[1.0, 0.0]);
    assert!((out.expected_payments[0] - 1.0).abs() < 1e-12);
    assert_eq!(out.expected_payments[1], 0.0);
    assert!((out.payments[0] - 1.0).abs() < 1e-12);
}

#[test]
fn outcomes_are_deterministic_given_the_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let inst = random_instance(&mut rng, &GeneratorConfig::default());
    let cfg = MechanismConfig::new(Rounding::RkPlus, 1e-7);
    let a = run_midr(&inst, &cfg, 11).unwrap();
    let b = run_midr(&inst, &cfg, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert!(a.chosen.len() <= inst.k());
    // the chosen set is a function of the recorded draws and x*
    let trace = a.rng_trace.rounding.as_ref().unwrap();
    let boundaries = a.x_star.boundaries();
    let replay = ProjectSet::new(trace.draws.iter().filter_map(|&p| locate(&boundaries, p)));
    match &trace.cancellation {
        Some(c) if c.cancelled => {}
        _ => assert_eq!(replay, a.chosen),
    }
}

#[test]
fn scaling_all_valuations_keeps_the_allocation() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let gen = GeneratorConfig {
        max_n: 1,
        min_m: 3,
        max_m: 3,
        min_k: 2,
        max_k: 3,
    };
    for _ in 0..5 {
        let inst = random_instance(&mut rng, &gen);
        let tol = 1e-12;
        let cfg = MechanismConfig::new(Rounding::RkPlus, tol);
        let base = solve_allocation(&inst, &cfg).unwrap();
        let program = ConvexProgram::new(inst.clone(), Rounding::RkPlus);
        let lambda = program.curvature().unwrap();
        let delta = (2.0 * tol * inst.grand_welfare() / lambda).sqrt();
        for c in [8.0, 3.0, 0.37] {
            let scaled = solve_allocation(&inst.scaled(c).unwrap(), &cfg).unwrap();
            let dist = base
                .x_star
                .x()
                .iter()
                .zip(scaled.x_star.x())
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            assert!(dist <= 2.0 * delta, "scale {c}: {dist} vs {delta}");
        }
    }
}

#[test]
fn composition_takes_both_branches() {
    // n = m = 1: the exact branch has probability e/4
    let inst = Instance::new(1, vec![unit(1, 0)]).unwrap();
    let mut exact = 0;
    for seed in 0..200 {
        let out = run_composed(&inst, &SolverConfig::default(), 24, seed).unwrap();
        let c = out.rng_trace.composition.as_ref().unwrap();
        assert_eq!(c.exponent, 2);
        if c.exact_branch {
            exact += 1;
            assert_eq!(out.chosen, ProjectSet::singleton(0));
            assert_eq!(out.expected_payments, vec![0.0]);
        }
    }
    let rate = exact as f64 / 200.0;
    assert!((rate - std::f64::consts::E / 4.0).abs() < 0.12, "{rate}");

    let two = Instance::new(
        1,
        vec![
            coverage(2, &[3.0], vec![vec![0], vec![]]),
            coverage(2, &[1.0], vec![vec![], vec![0]]),
        ],
    )
    .unwrap();
    let p = std::f64::consts::E * 2f64.powi(-(cancellation_exponent(2, 4) as i32));
    assert!((p - 4.15e-5).abs() < 1e-7);
    let out = (0..400)
        .map(|seed| run_composed(&two, &SolverConfig::default(), 24, seed).unwrap())
        .find(|o| o.rng_trace.composition.as_ref().unwrap().exact_branch)
        .expect("e/16 branch shows up in 400 seeds");
    assert_eq!(out.chosen, ProjectSet::singleton(0));
    assert_eq!(out.expected_payments, vec![1.0, 0.0]);
}

#[test]
fn adaptive_sampler_requires_curvature() {
    let inst = Instance::new(1, vec![unit(2, 0)]).unwrap();
    let program = ConvexProgram::new(inst.clone(), Rounding::Rk);
    assert!(matches!(
        AdaptiveSampler::new(&program, &SolverConfig::default()),
        Err(Error::Contract(_))
    ));
    assert!(sample_adaptive(&inst, &SolverConfig::default(), 1).is_err());
}

#[test]
fn adaptive_sampler_matches_exact_distribution() {
    let inst = Instance::new(
        2,
        vec![coverage(3, &[1.0, 1.0, 0.5], vec![vec![0], vec![0, 1], vec![2]])],
    )
    .unwrap();
    let program = ConvexProgram::new(inst.clone(), Rounding::RkPlus);
    let cfg = SolverConfig::default().with_tol(1e-14);
    let x_star = solve(&program, &cfg).unwrap().x_star;
    let exact = exact_distribution(&x_star, 20).unwrap();
    let mut sampler = AdaptiveSampler::new(&program, &cfg).unwrap();
    let mut rng = stream_rng(5, 0);
    let samples: Vec<AdaptiveSample> = (0..20_000).map(|_| sampler.sample(&mut rng).unwrap()).collect();
    let sets: Vec<ProjectSet> = samples.iter().map(|s| s.chosen.clone()).collect();
    let tv = exact
        .tv_distance(&crate::lottery::ExactDistribution::empirical(3, &sets).unwrap())
        .unwrap();
    assert!(tv < 0.02, "tv {tv}");
    let mean_rounds = samples.iter().map(|s| s.rounds as f64).sum::<f64>() / samples.len() as f64;
    assert!(mean_rounds <= 2.0, "{mean_rounds}");
    for s in &samples {
        assert!(s.chosen.len() <= 2);
        assert_eq!(s.delta, sampler.delta(s.rounds));
    }
    assert_eq!(sample_adaptive(&inst, &cfg, 8).unwrap(), sample_adaptive(&inst, &cfg, 8).unwrap());
}

#[test]
fn matroid_terms_run_through_the_mechanism() {
    let v = MrsValuation::from_terms(
        4,
        vec![RankTerm {
            weight: 1.0,
            matroid: Matroid::graphic(vec![(0, 1), (1, 2), (2, 0), (2, 3)]),
        }],
    )
    .unwrap();
    let inst = Instance::new(3, vec![v.clone(), v]).unwrap();
    let out = run_midr(&inst, &MechanismConfig::default(), 2).unwrap();
    assert!(out.chosen.len() <= 3);
    assert!(out.solve_report.converged);
    for (v, p) in out.expected_values.iter().zip(&out.expected_payments) {
        assert!(*p >= -1e-9 && v - p >= -1e-9);
    }
}
