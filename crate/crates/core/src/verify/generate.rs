//! Random desk-scale instances and misreport menus.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mechanism::Instance;
use crate::valuations::{
    CoveragePoint, Matroid, MatroidKind, MrsValuation, RankTerm, Representation,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub max_n: usize,
    pub min_m: usize,
    pub max_m: usize,
    pub min_k: usize,
    pub max_k: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_n: 3,
            min_m: 2,
            max_m: 8,
            min_k: 1,
            max_k: 4,
        }
    }
}

fn weight<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(0.1..2.0)
}

pub fn random_matroid<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Matroid {
    match rng.gen_range(0..3) {
        0 => Matroid::uniform(m, rng.gen_range(1..=m)).expect("rank within ground"),
        1 => {
            let nblocks = rng.gen_range(1..=3.min(m));
            let mut blocks = vec![Vec::new(); nblocks];
            for j in 0..m {
                blocks[rng.gen_range(0..nblocks)].push(j);
            }
            let caps = (0..nblocks).map(|_| rng.gen_range(0..=2)).collect();
            Matroid::partition(m, blocks, caps).expect("blocks partition the ground set")
        }
        _ => {
            let vertices = rng.gen_range(2..=m.max(2) + 1);
            let edges = (0..m)
                .map(|_| (rng.gen_range(0..vertices), rng.gen_range(0..vertices)))
                .collect();
            Matroid::graphic(edges)
        }
    }
}

/// A coverage valuation (half the time) or a sum of one to three catalog rank functions.
pub fn random_valuation<R: Rng + ?Sized>(rng: &mut R, m: usize) -> MrsValuation {
    if rng.gen_bool(0.5) {
        let npoints = rng.gen_range(2..=5);
        let points = (0..npoints)
            .map(|p| CoveragePoint {
                id: format!("p{}", p + 1),
                weight: weight(rng),
            })
            .collect();
        let sets = (0..m)
            .map(|_| (0..npoints).filter(|_| rng.gen_bool(0.4)).collect())
            .collect();
        MrsValuation::coverage(m, points, sets).expect("generated coverage is well formed")
    } else {
        let nterms = rng.gen_range(1..=3);
        let terms = (0..nterms)
            .map(|_| RankTerm {
                weight: weight(rng),
                matroid: random_matroid(rng, m),
            })
            .collect();
        MrsValuation::from_terms(m, terms).expect("generated terms are well formed")
    }
}

pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, config: &GeneratorConfig) -> Instance {
    let n = rng.gen_range(1..=config.max_n);
    let m = rng.gen_range(config.min_m..=config.max_m);
    let k = rng.gen_range(config.min_k.min(m)..=config.max_k.min(m));
    let valuations = (0..n).map(|_| random_valuation(rng, m)).collect();
    Instance::new(k, valuations).expect("generated instance is well formed")
}

/// A random point of `P_k`: uniform in the cube, shrunk by a random factor
/// whenever it overshoots `Σx ≤ k`. Not uniform on `P_k`.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, m: usize, k: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    let total: f64 = x.iter().sum();
    if total > k as f64 {
        let scale = k as f64 / total * rng.gen::<f64>();
        x.iter_mut().for_each(|v| *v *= scale);
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisreportKind {
    Truth,
    WeightJitter,
    TermDeletion,
    RankPerturbation,
    Zero,
}

/// The fixed menu cycled through by the truthfulness audit.
pub const MISREPORT_MENU: [MisreportKind; 4] = [
    MisreportKind::WeightJitter,
    MisreportKind::TermDeletion,
    MisreportKind::RankPerturbation,
    MisreportKind::Zero,
];

/// A lie of the given kind about `v`.
pub fn misreport<R: Rng + ?Sized>(
    v: &MrsValuation,
    kind: MisreportKind,
    rng: &mut R,
) -> Result<MrsValuation> {
    let m = v.ground();
    let cap = v.enum_cap();
    let lie = match (kind, v.representation()) {
        (MisreportKind::Truth, _) => v.clone(),
        (MisreportKind::Zero, _) => MrsValuation::zero(m),
        (MisreportKind::WeightJitter, Representation::Terms(terms)) => {
            let terms = terms
                .iter()
                .map(|t| RankTerm {
                    weight: t.weight * rng.gen_range(0.5..1.5),
                    matroid: t.matroid.clone(),
                })
                .collect();
            MrsValuation::from_terms(m, terms)?
        }
        (MisreportKind::WeightJitter, Representation::Coverage(cov)) => {
            let points = cov
                .points()
                .iter()
                .map(|p| CoveragePoint {
                    id: p.id.clone(),
                    weight: p.weight * rng.gen_range(0.5..1.5),
                })
                .collect();
            MrsValuation::coverage(m, points, coverage_sets(cov, m))?
        }
        (MisreportKind::TermDeletion, Representation::Terms(terms)) => {
            let mut terms = terms.clone();
            if !terms.is_empty() {
                terms.remove(rng.gen_range(0..terms.len()));
            }
            MrsValuation::from_terms(m, terms)?
        }
        (MisreportKind::TermDeletion, Representation::Coverage(cov)) => {
            let npoints = cov.points().len();
            if npoints == 0 {
                v.clone()
            } else {
                let drop = rng.gen_range(0..npoints);
                let keep: Vec<usize> = (0..npoints).filter(|&p| p != drop).collect();
                let points = keep.iter().map(|&p| cov.points()[p].clone()).collect();
                let sets = (0..m)
                    .map(|j| {
                        cov.set(j)
                            .iter()
                            .filter_map(|p| keep.iter().position(|q| q == p))
                            .collect()
                    })
                    .collect();
                MrsValuation::coverage(m, points, sets)?
            }
        }
        (MisreportKind::RankPerturbation, Representation::Terms(terms)) => {
            let mut terms = terms.clone();
            if !terms.is_empty() {
                let t = rng.gen_range(0..terms.len());
                terms[t].matroid = perturb_matroid(&terms[t].matroid, rng)?;
            }
            MrsValuation::from_terms(m, terms)?
        }
        (MisreportKind::RankPerturbation, Representation::Coverage(cov)) => {
            let mut sets = coverage_sets(cov, m);
            let npoints = cov.points().len();
            if npoints > 0 {
                let (j, p) = (rng.gen_range(0..m), rng.gen_range(0..npoints));
                match sets[j].iter().position(|&q| q == p) {
                    Some(pos) => {
                        sets[j].remove(pos);
                    }
                    None => sets[j].push(p),
                }
            }
            MrsValuation::coverage(m, cov.points().to_vec(), sets)?
        }
    };
    Ok(lie.with_enum_cap(cap))
}

fn coverage_sets(cov: &crate::valuations::Coverage, m: usize) -> Vec<Vec<usize>> {
    (0..m).map(|j| cov.set(j).to_vec()).collect()
}

fn perturb_matroid<R: Rng + ?Sized>(matroid: &Matroid, rng: &mut R) -> Result<Matroid> {
    let m = matroid.ground();
    let step = |r: usize, rng: &mut R, max: usize| {
        if rng.gen_bool(0.5) {
            (r + 1).min(max)
        } else {
            r.saturating_sub(1)
        }
    };
    match matroid.kind() {
        MatroidKind::Uniform { rank } => Matroid::uniform(m, step(*rank, rng, m)),
        MatroidKind::Partition { blocks, caps } => {
            let mut caps = caps.clone();
            let b = rng.gen_range(0..caps.len());
            caps[b] = step(caps[b], rng, blocks[b].len());
            Matroid::partition(m, blocks.clone(), caps)
        }
        MatroidKind::Graphic { edges } => {
            let mut edges = edges.clone();
            if let Some(e) = edges.choose_mut(rng) {
                let top = e.0.max(e.1) + 2;
                e.1 = rng.gen_range(0..top);
            }
            Ok(Matroid::graphic(edges))
        }
    }
}

fn points(weights: &[f64]) -> Vec<CoveragePoint> {
    weights
        .iter()
        .enumerate()
        .map(|(i, &w)| CoveragePoint {
            id: format!("u{}", i + 1),
            weight: w,
        })
        .collect()
}

/// Small fixed instances covering each valuation family, used as a release gate.
pub fn smoke_suite() -> Vec<Instance> {
    let term = |weight: f64, matroid: Matroid| RankTerm { weight, matroid };
    let cov = |m: usize, w: &[f64], sets: Vec<Vec<usize>>| {
        MrsValuation::coverage(m, points(w), sets).expect("smoke coverage is well formed")
    };
    let mrs = |m: usize, terms: Vec<RankTerm>| {
        MrsValuation::from_terms(m, terms).expect("smoke terms are well formed")
    };
    let suite = vec![
        Instance::new(1, vec![cov(1, &[1.0], vec![vec![0]])]),
        Instance::new(
            1,
            vec![cov(2, &[1.0], vec![vec![], vec![0]]), cov(2, &[1.0], vec![vec![], vec![0]])],
        ),
        Instance::new(2, vec![cov(3, &[3.0, 1.0, 2.0], vec![vec![0], vec![1], vec![2]])]),
        Instance::new(
            2,
            vec![
                cov(4, &[1.0, 2.0, 0.5], vec![vec![0, 1], vec![1], vec![1, 2], vec![2]]),
                cov(4, &[1.5, 1.0], vec![vec![], vec![0], vec![1], vec![0, 1]]),
            ],
        ),
        Instance::new(
            3,
            vec![
                mrs(
                    5,
                    vec![
                        term(1.5, Matroid::uniform(5, 2).expect("rank within ground")),
                        term(0.7, Matroid::graphic(vec![(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)])),
                    ],
                ),
                mrs(
                    5,
                    vec![term(
                        2.0,
                        Matroid::partition(5, vec![vec![0, 3], vec![1, 2, 4]], vec![1, 1])
                            .expect("blocks partition the ground set"),
                    )],
                ),
            ],
        ),
        Instance::new(
            3,
            vec![
                cov(6, &[1.0, 1.0, 1.0], vec![vec![0], vec![1], vec![2], vec![0, 1], vec![1, 2], vec![]]),
                mrs(6, vec![term(1.0, Matroid::uniform(6, 1).expect("rank within ground"))]),
                cov(6, &[2.0], vec![vec![], vec![], vec![], vec![], vec![], vec![0]]),
            ],
        ),
    ];
    suite
        .into_iter()
        .map(|i| i.expect("smoke instances are well formed"))
        .collect()
}
