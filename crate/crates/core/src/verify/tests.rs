use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::lottery::Rounding;
use crate::mechanism::MechanismConfig;
use crate::valuations::{CoveragePoint, Matroid, RankTerm};

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

fn additive(weights: &[f64]) -> MrsValuation {
    let m = weights.len();
    coverage(m, weights, (0..m).map(|j| vec![j]).collect())
}

fn uniform(m: usize, r: usize, w: f64) -> MrsValuation {
    MrsValuation::from_terms(
        m,
        vec![RankTerm {
            weight: w,
            matroid: Matroid::uniform(m, r).unwrap(),
        }],
    )
    .unwrap()
}

fn catalog() -> Vec<MrsValuation> {
    vec![
        additive(&[3.0, 1.0, 2.0, 0.5]),
        uniform(4, 2, 1.5),
        coverage(4, &[1.0, 2.0, 0.5], vec![vec![0, 1], vec![1], vec![1, 2], vec![2]]),
        MrsValuation::from_terms(
            4,
            vec![
                RankTerm {
                    weight: 0.7,
                    matroid: Matroid::graphic(vec![(0, 1), (1, 2), (2, 0), (2, 3)]),
                },
                RankTerm {
                    weight: 2.0,
                    matroid: Matroid::partition(4, vec![vec![0, 3], vec![1, 2]], vec![1, 1]).unwrap(),
                },
            ],
        )
        .unwrap(),
        MrsValuation::zero(4),
    ]
}

#[test]
fn brute_force_additive() {
    let inst = Instance::new(2, vec![additive(&[3.0, 1.0, 2.0])]).unwrap();
    let (set, w) = brute_force_opt(&inst, DEFAULT_BF_CAP).unwrap();
    assert_eq!(set, ProjectSet::new([0, 2]));
    assert_eq!(w, 5.0);

    let full = inst.with_k(3).unwrap();
    assert_eq!(brute_force_opt(&full, DEFAULT_BF_CAP).unwrap(), (ProjectSet::all(3), 6.0));
    assert!(matches!(brute_force_opt(&inst, 2), Err(Error::Capacity(_))));
}

#[test]
fn brute_force_ties_go_to_the_smallest_list() {
    let zero = Instance::new(2, vec![MrsValuation::zero(3)]).unwrap();
    assert_eq!(brute_force_opt(&zero, DEFAULT_BF_CAP).unwrap(), (ProjectSet::empty(), 0.0));
    let flat = Instance::new(1, vec![uniform(3, 1, 1.0)]).unwrap();
    assert_eq!(brute_force_opt(&flat, DEFAULT_BF_CAP).unwrap().0, ProjectSet::singleton(0));
}

#[test]
fn discrete_hessian_examples() {
    let modular = discrete_hessian(&additive(&[1.0, 2.0, 3.0]), &ProjectSet::empty()).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let expected = if i == j { -(i as f64 + 1.0) } else { 0.0 };
            assert_eq!(modular.matrix[(i, j)], expected);
        }
    }

    let h = discrete_hessian(&uniform(2, 1, 1.0), &ProjectSet::empty()).unwrap();
    assert!(h.matrix.iter().all(|&e| e == -1.0));
    assert_eq!(h.max_eigenvalue(), 0.0);

    // rows and columns indexed by the base set vanish
    let v = &catalog()[3];
    let base = ProjectSet::new([1, 3]);
    let h = discrete_hessian(v, &base).unwrap();
    for j in base.iter() {
        for i in 0..4 {
            assert_eq!(h.matrix[(i, j)], 0.0);
            assert_eq!(h.matrix[(j, i)], 0.0);
        }
    }
    assert!(discrete_hessian(v, &ProjectSet::singleton(4)).is_err());
}

#[test]
fn discrete_hessians_of_catalog_are_nsd() {
    for v in catalog() {
        for mask in 0..16u64 {
            let h = discrete_hessian(&v, &ProjectSet::from_mask(mask)).unwrap();
            let lambda = h.max_eigenvalue();
            assert!(lambda <= 1e-12 * spectral_norm(&h.matrix).max(1.0), "{mask}: {lambda}");
            assert!(h.matrix.iter().all(|&e| e <= 1e-12));
        }
    }
}

#[test]
fn diagonal_is_minus_the_marginal() {
    let v = &catalog()[2];
    let base = ProjectSet::singleton(1);
    let h = discrete_hessian(v, &base).unwrap();
    for j in 0..4 {
        let expected = v.value(&base).unwrap() - v.value(&base.with(j)).unwrap();
        assert!((h.matrix[(j, j)] - expected).abs() < 1e-12);
    }
}

#[test]
fn hessian_decomposition_on_coverage() {
    let v = coverage(
        5,
        &[1.0, 0.5, 2.0, 1.5],
        vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![0, 3], vec![1]],
    );
    let x = FractionalSolution::new(vec![0.6, 0.7, 0.4, 0.8, 0.3], 3).unwrap();
    let check = check_hessian_decomposition(&v, &x, 20).unwrap();
    assert!(!check.point_mass);
    assert!(check.entries_agree(1e-4), "{check:?}");
    assert!(check.negative_semidefinite(1e-6), "{check:?}");

    let x2 = FractionalSolution::new(vec![0.6, 0.2, 0.4, 0.1, 0.3], 2).unwrap();
    let check = check_hessian_decomposition(&v, &x2, 20).unwrap();
    assert!(check.point_mass);
    assert!(check.entries_agree(1e-4), "{check:?}");

    let k1 = FractionalSolution::new(vec![0.2; 5], 1).unwrap();
    assert!(lottery_hessian(&v, &k1, 20).is_err());
}

#[test]
fn welfare_hessian_sums_players() {
    let inst = Instance::new(2, vec![catalog()[1].clone(), catalog()[3].clone()]).unwrap();
    let x = FractionalSolution::new(vec![0.5, 0.3, 0.6, 0.2], 2).unwrap();
    let check = check_welfare_hessian(&inst, &x, 20).unwrap();
    assert!(check.entries_agree(1e-4), "{check:?}");
    assert!(check.negative_semidefinite(1e-6), "{check:?}");
}

#[test]
fn numerical_hessian_of_a_quadratic() {
    let f = |y: &[f64]| Ok(-y[0] * y[0] + 3.0 * y[0] * y[1] - 2.0 * y[1] * y[1]);
    let h = numerical_hessian(f, &[0.3, -0.2], 1e-3).unwrap();
    let expected = [[-2.0, 3.0], [3.0, -4.0]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((h[(i, j)] - expected[i][j]).abs() < 1e-6);
        }
    }
    assert!((max_eigenvalue(&h) - (-3.0 + 10f64.sqrt())).abs() < 1e-6);
}

#[test]
fn composition_surplus_is_symbolic() {
    for (n, m) in [(1, 1), (1, 2), (2, 4), (5, 30)] {
        let c = composition_bound(n, m);
        assert!(c.symbolic);
        assert!(c.passed());
        assert_eq!(c.exponent, 2 * (n * m) as u64);
        assert!((c.log2_surplus - (std::f64::consts::E.log2() - 4.0 * (n * m) as f64)).abs() < 1e-12);
    }
    // m = n = 1: surplus e/16 is visible in double precision
    let c = composition_bound(1, 1);
    let target = 1.0 - 1.0 / std::f64::consts::E + std::f64::consts::E / 16.0;
    assert!((c.bound - target).abs() < 1e-12);
}

#[test]
fn truthful_report_has_zero_margin() {
    let inst = Instance::new(2, vec![catalog()[0].clone(), catalog()[2].clone()]).unwrap();
    let cfg = MechanismConfig::new(Rounding::Rk, 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let same = misreport(inst.valuation(0), MisreportKind::Truth, &mut rng).unwrap();
    assert_eq!(&same, inst.valuation(0));
    let audit = audit_truthfulness(&inst, &cfg, 4, 3).unwrap();
    assert_eq!(audit.trials.len(), 8);
    assert!(audit.passed(1e-4), "{audit:?}");
}

#[test]
fn participation_and_identity() {
    let inst = Instance::new(2, vec![catalog()[1].clone(), catalog()[2].clone()]).unwrap();
    let cfg = MechanismConfig::new(Rounding::RkPlus, 1e-9);
    assert!(audit_participation(&inst, &cfg).unwrap().passed(1e-6));
    let x = FractionalSolution::new(vec![0.5, 0.3, 0.6, 0.2], 2).unwrap();
    let id = audit_welfare_identity(&inst, &x).unwrap();
    assert!(id.difference() < 1e-12, "{id:?}");
}

#[test]
fn smoke_audit_has_no_failures() {
    let inst = Instance::new(2, vec![catalog()[0].clone(), catalog()[3].clone()]).unwrap();
    let cfg = AuditConfig {
        mc_samples: 20_000,
        misreports_per_player: 4,
        ..AuditConfig::default()
    };
    let report = audit_instance(&inst, &cfg, 5).unwrap();
    assert_eq!(report.failures().count(), 0, "{}", report.to_table());
    assert!(!report.checks.is_empty());
}

fn permute(v: &MrsValuation, perm: &[usize]) -> MrsValuation {
    // project j of the new instance is project perm[j] of the old one
    let m = v.ground();
    match v.representation() {
        crate::valuations::Representation::Coverage(c) => {
            let sets = (0..m).map(|j| c.set(perm[j]).to_vec()).collect();
            MrsValuation::coverage(m, c.points().to_vec(), sets).unwrap()
        }
        crate::valuations::Representation::Terms(_) => unreachable!(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn brute_force_is_permutation_invariant(
        weights in prop::collection::vec(0.0f64..3.0, 3),
        sets in prop::collection::vec(prop::collection::vec(0usize..3, 0..3), 4),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        k in 1usize..=4,
    ) {
        let v = coverage(4, &weights, sets);
        let w = permute(&v, &perm);
        let a = brute_force_opt(&Instance::new(k, vec![v]).unwrap(), 24).unwrap().1;
        let b = brute_force_opt(&Instance::new(k, vec![w]).unwrap(), 24).unwrap().1;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn random_points_lie_in_the_polytope(seed in any::<u64>(), m in 1usize..9, k in 1usize..9) {
        let k = k.min(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_point(&mut rng, m, k);
        prop_assert!(FractionalSolution::new(x, k).is_ok());
    }
}

#[test]
fn smoke_suite_is_well_formed() {
    let suite = smoke_suite();
    assert_eq!(suite.len(), 6);
    assert!(suite.iter().all(|i| i.m() <= 6 && i.k() <= i.m()));
}
