//! Matroid-rank-sum valuations and their value and bounded-lottery-value oracles.
//!
//! A valuation is either an explicit nonnegative combination of matroid rank
//! functions or a weighted coverage function. Both answer exact lottery queries:
//! coverage through a per-point closed form, general rank sums by enumerating
//! the distribution of the drawn set over all `2^m` subsets.

mod matroid;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use matroid::{Matroid, MatroidKind};

use crate::error::{Error, Result};
use crate::sets::{iter_bits, ProjectSet};

/// Default largest `m` for which the general enumeration oracle runs.
pub const DEFAULT_ENUM_CAP: usize = 20;

/// Slack accepted on `Σx ≤ 1` and `x ≥ 0` before rejecting a lottery.
pub const MARGINAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RankTerm {
    pub weight: f64,
    pub matroid: Matroid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoveragePoint {
    pub id: String,
    pub weight: f64,
}

/// Weighted coverage: `v(S)` is the total weight of points covered by `∪_{j∈S} A_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    points: Vec<CoveragePoint>,
    /// `A_j` as point indices, per project.
    sets: Vec<Vec<usize>>,
    /// `T_p = {j : p ∈ A_j}`, per point.
    covering: Vec<Vec<usize>>,
}

impl Coverage {
    pub fn points(&self) -> &[CoveragePoint] {
        &self.points
    }

    /// Point indices covered by project `j`.
    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    /// Projects covering point `p`.
    pub fn covering(&self, p: usize) -> &[usize] {
        &self.covering[p]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Representation {
    Terms(Vec<RankTerm>),
    Coverage(Coverage),
}

/// Nonnegative weighted sum of matroid rank functions over `m` projects.
#[derive(Debug)]
pub struct MrsValuation {
    ground: usize,
    repr: Representation,
    enum_cap: usize,
    table: OnceLock<Vec<f64>>,
}

impl Clone for MrsValuation {
    fn clone(&self) -> Self {
        MrsValuation {
            ground: self.ground,
            repr: self.repr.clone(),
            enum_cap: self.enum_cap,
            table: self.table.clone(),
        }
    }
}

impl PartialEq for MrsValuation {
    fn eq(&self, other: &Self) -> bool {
        self.ground == other.ground && self.repr == other.repr
    }
}

fn check_weight(weight: f64, what: &str) -> Result<()> {
    if !weight.is_finite() || weight < 0.0 {
        return Err(Error::input(format!(
            "{what} weight must be finite and nonnegative, got {weight}"
        )));
    }
    Ok(())
}

impl MrsValuation {
    pub fn from_terms(ground: usize, terms: Vec<RankTerm>) -> Result<Self> {
        for (t, term) in terms.iter().enumerate() {
            check_weight(term.weight, &format!("term {}", t + 1))?;
            if term.matroid.ground() != ground {
                return Err(Error::input(format!(
                    "term {} has a matroid on {} elements but there are {ground} projects",
                    t + 1,
                    term.matroid.ground()
                )));
            }
        }
        Ok(Self::build(ground, Representation::Terms(terms)))
    }

    /// `sets[j]` lists the point indices covered by project `j`.
    pub fn coverage(
        ground: usize,
        points: Vec<CoveragePoint>,
        sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if sets.len() != ground {
            return Err(Error::input(format!(
                "coverage valuation lists {} project sets for {ground} projects",
                sets.len()
            )));
        }
        for p in &points {
            check_weight(p.weight, &format!("point {:?}", p.id))?;
        }
        let mut covering = vec![Vec::new(); points.len()];
        let mut clean_sets = Vec::with_capacity(ground);
        for (j, set) in sets.into_iter().enumerate() {
            let mut set = set;
            set.sort_unstable();
            set.dedup();
            for &p in &set {
                if p >= points.len() {
                    return Err(Error::input(format!(
                        "project {} covers unknown point index {p}",
                        j + 1
                    )));
                }
                covering[p].push(j);
            }
            clean_sets.push(set);
        }
        Ok(Self::build(
            ground,
            Representation::Coverage(Coverage {
                points,
                sets: clean_sets,
                covering,
            }),
        ))
    }

    /// The valuation that is zero on every bundle (an empty term list).
    pub fn zero(ground: usize) -> Self {
        Self::build(ground, Representation::Terms(Vec::new()))
    }

    fn build(ground: usize, repr: Representation) -> Self {
        MrsValuation {
            ground,
            repr,
            enum_cap: DEFAULT_ENUM_CAP,
            table: OnceLock::new(),
        }
    }

    pub fn with_enum_cap(mut self, cap: usize) -> Self {
        self.enum_cap = cap;
        self
    }

    pub fn enum_cap(&self) -> usize {
        self.enum_cap
    }

    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn is_coverage(&self) -> bool {
        matches!(self.repr, Representation::Coverage(_))
    }

    /// Same function written as an explicit rank sum. Each coverage point `p`
    /// becomes a partition matroid with block `T_p` of capacity 1.
    pub fn to_rank_sum(&self) -> MrsValuation {
        match &self.repr {
            Representation::Terms(_) => self.clone(),
            Representation::Coverage(cov) => {
                let m = self.ground;
                let terms = cov
                    .points
                    .iter()
                    .zip(&cov.covering)
                    .filter(|(_, t)| !t.is_empty())
                    .map(|(p, t)| {
                        let rest: Vec<usize> = (0..m).filter(|j| !t.contains(j)).collect();
                        let (blocks, caps) = if rest.is_empty() {
                            (vec![t.clone()], vec![1])
                        } else {
                            (vec![t.clone(), rest], vec![1, 0])
                        };
                        RankTerm {
                            weight: p.weight,
                            matroid: Matroid::partition(m, blocks, caps)
                                .expect("blocks partition the ground set"),
                        }
                    })
                    .collect();
                Self::build(m, Representation::Terms(terms)).with_enum_cap(self.enum_cap)
            }
        }
    }

    /// Scales every weight by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Result<MrsValuation> {
        check_weight(factor, "scale")?;
        let repr = match &self.repr {
            Representation::Terms(terms) => Representation::Terms(
                terms
                    .iter()
                    .map(|t| RankTerm {
                        weight: t.weight * factor,
                        matroid: t.matroid.clone(),
                    })
                    .collect(),
            ),
            Representation::Coverage(cov) => {
                let mut cov = cov.clone();
                for p in &mut cov.points {
                    p.weight *= factor;
                }
                Representation::Coverage(cov)
            }
        };
        Ok(Self::build(self.ground, repr).with_enum_cap(self.enum_cap))
    }

    pub fn value(&self, set: &ProjectSet) -> Result<f64> {
        set.check(self.ground)?;
        Ok(self.value_of(set.indices()))
    }

    /// Value of a duplicate-free list of in-range projects.
    pub(crate) fn value_of(&self, projects: &[usize]) -> f64 {
        match &self.repr {
            Representation::Terms(terms) => terms
                .iter()
                .map(|t| t.weight * t.matroid.rank_of(projects) as f64)
                .sum(),
            Representation::Coverage(cov) => {
                let mut hit = vec![false; cov.points.len()];
                let mut total = 0.0;
                for &j in projects {
                    for &p in &cov.sets[j] {
                        if !hit[p] {
                            hit[p] = true;
                            total += cov.points[p].weight;
                        }
                    }
                }
                total
            }
        }
    }

    pub(crate) fn value_mask(&self, mask: u64) -> f64 {
        let projects: Vec<usize> = iter_bits(mask).collect();
        self.value_of(&projects)
    }

    /// `v([m])`.
    pub fn grand_value(&self) -> f64 {
        let all: Vec<usize> = (0..self.ground).collect();
        self.value_of(&all)
    }

    /// `v({j})` for each project.
    pub fn singleton_values(&self) -> Vec<f64> {
        (0..self.ground).map(|j| self.value_of(&[j])).collect()
    }

    /// All `2^m` values indexed by bitmask, built once and cached.
    pub fn value_table(&self) -> Result<&[f64]> {
        self.check_enum_cap()?;
        Ok(self.table.get_or_init(|| {
            (0..1u64 << self.ground)
                .map(|mask| self.value_mask(mask))
                .collect()
        }))
    }

    fn check_enum_cap(&self) -> Result<()> {
        if self.ground > self.enum_cap || self.ground >= 63 {
            return Err(Error::capacity(format!(
                "exact lottery enumeration over 2^{} subsets exceeds the cap m <= {}; \
                 use the coverage representation or the Monte Carlo estimator",
                self.ground, self.enum_cap
            )));
        }
        Ok(())
    }

    /// Exact `E_{S∼D^R_k(x)}[v(S)]`.
    pub fn lottery_value(&self, spec: &LotterySpec) -> Result<f64> {
        self.check_spec(spec)?;
        self.expected_over_draws(&spec.marginals, spec.draws, &spec.promise)
    }

    fn check_spec(&self, spec: &LotterySpec) -> Result<()> {
        if spec.marginals.len() != self.ground {
            return Err(Error::input(format!(
                "lottery has {} marginals for {} projects",
                spec.marginals.len(),
                self.ground
            )));
        }
        spec.promise.check(self.ground)
    }

    /// Lottery expectation without validating the marginals. Both exact paths
    /// are polynomials in `x`, so this also evaluates their natural extension
    /// slightly outside the simplex (used by finite differences).
    pub(crate) fn expected_over_draws(
        &self,
        marginals: &[f64],
        draws: usize,
        promise: &ProjectSet,
    ) -> Result<f64> {
        match &self.repr {
            Representation::Coverage(cov) => Ok(cov
                .points
                .iter()
                .zip(&cov.covering)
                .map(|(p, cover)| {
                    if cover.iter().any(|&j| promise.contains(j)) {
                        p.weight
                    } else {
                        let y: f64 = cover.iter().map(|&j| marginals[j]).sum();
                        p.weight * hit_probability(y, draws)
                    }
                })
                .sum()),
            Representation::Terms(terms) => {
                if terms.is_empty() {
                    return Ok(0.0);
                }
                let table = self.value_table()?;
                let probs = draw_set_probabilities(marginals, draws);
                let r = promise.to_mask();
                Ok(probs
                    .iter()
                    .enumerate()
                    .map(|(s, p)| p * table[s | r as usize])
                    .sum())
            }
        }
    }

    /// For each project `j`, the difference between the expected value of the
    /// `draws`-bounded lottery with marginals `x` and promise `{j}`, and the same
    /// lottery without promise. Equivalent to `2m` oracle queries sharing one
    /// distribution.
    pub fn promise_gains(&self, marginals: &[f64], draws: usize) -> Result<Vec<f64>> {
        if marginals.len() != self.ground {
            return Err(Error::input(format!(
                "lottery has {} marginals for {} projects",
                marginals.len(),
                self.ground
            )));
        }
        let m = self.ground;
        match &self.repr {
            Representation::Coverage(cov) => {
                let mut gains = vec![0.0; m];
                for (p, cover) in cov.points.iter().zip(&cov.covering) {
                    let y: f64 = cover.iter().map(|&j| marginals[j]).sum();
                    let miss = 1.0 - hit_probability(y, draws);
                    for &j in cover {
                        gains[j] += p.weight * miss;
                    }
                }
                Ok(gains)
            }
            Representation::Terms(terms) => {
                if terms.is_empty() {
                    return Ok(vec![0.0; m]);
                }
                let table = self.value_table()?;
                let probs = draw_set_probabilities(marginals, draws);
                Ok((0..m)
                    .map(|j| {
                        let bit = 1usize << j;
                        probs
                            .iter()
                            .enumerate()
                            .filter(|(s, _)| s & bit == 0)
                            .map(|(s, p)| p * (table[s | bit] - table[s]))
                            .sum()
                    })
                    .collect())
            }
        }
    }

    /// Monte Carlo estimate of the lottery value with its standard error.
    /// Deterministic given `seed`; never used by the mechanism itself.
    pub fn lottery_value_mc(&self, spec: &LotterySpec, samples: usize, seed: u64) -> Result<(f64, f64)> {
        self.check_spec(spec)?;
        if samples == 0 {
            return Err(Error::input("Monte Carlo needs at least one sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cumulative: Vec<f64> = spec
            .marginals
            .iter()
            .scan(0.0, |acc, &x| {
                *acc += x;
                Some(*acc)
            })
            .collect();
        let mut chosen = vec![false; self.ground];
        let mut projects = Vec::with_capacity(self.ground);
        // Welford
        let (mut mean, mut m2) = (0.0f64, 0.0f64);
        for t in 0..samples {
            chosen.iter_mut().for_each(|c| *c = false);
            for j in spec.promise.iter() {
                chosen[j] = true;
            }
            for _ in 0..spec.draws {
                let u: f64 = rng.gen();
                let j = cumulative.partition_point(|&c| c <= u);
                if j < self.ground {
                    chosen[j] = true;
                }
            }
            projects.clear();
            projects.extend((0..self.ground).filter(|&j| chosen[j]));
            let value = self.value_of(&projects);
            let delta = value - mean;
            mean += delta / (t + 1) as f64;
            m2 += delta * (value - mean);
        }
        let stderr = if samples > 1 {
            (m2.max(0.0) / (samples - 1) as f64 / samples as f64).sqrt()
        } else {
            0.0
        };
        Ok((mean, stderr))
    }
}

/// `1 − (1 − y)^draws`: probability that `draws` independent picks hit a region of mass `y`.
pub(crate) fn hit_probability(y: f64, draws: usize) -> f64 {
    if draws == 0 {
        0.0
    } else if (0.0..1.0).contains(&y) {
        -(draws as f64 * (-y).ln_1p()).exp_m1()
    } else {
        1.0 - (1.0 - y).powi(draws as i32)
    }
}

/// `Pr[drawn set = S]` for every bitmask `S`, where the drawn set collects
/// `draws` independent picks from `marginals` (remaining mass picks nothing).
/// Uses `Pr[D ⊆ A] = (1 − x_{Ā})^draws` followed by a Möbius transform over subsets.
pub(crate) fn draw_set_probabilities(marginals: &[f64], draws: usize) -> Vec<f64> {
    let m = marginals.len();
    let size = 1usize << m;
    let total: f64 = marginals.iter().sum();
    let mut mass = vec![0.0f64; size];
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        mass[mask] = mass[mask & (mask - 1)] + marginals[low];
    }
    let mut probs: Vec<f64> = mass
        .iter()
        .map(|&inside| (1.0 - (total - inside)).powi(draws as i32))
        .collect();
    for j in 0..m {
        let bit = 1usize << j;
        for mask in 0..size {
            if mask & bit != 0 {
                probs[mask] -= probs[mask ^ bit];
            }
        }
    }
    probs
}

/// A `k`-bounded lottery: `draws` independent picks from `marginals` (plus the
/// null outcome with the leftover mass), united with the promised set.
#[derive(Debug, Clone, PartialEq)]
pub struct LotterySpec {
    marginals: Vec<f64>,
    draws: usize,
    promise: ProjectSet,
}

impl LotterySpec {
    /// Validates `x ≥ 0` and `Σx ≤ 1`. Violations up to [`MARGINAL_SLACK`] are
    /// clamped: small negatives become zero and a slightly-too-large total is rescaled to 1.
    pub fn new(marginals: Vec<f64>, draws: usize, promise: ProjectSet) -> Result<Self> {
        let mut marginals = marginals;
        for (j, x) in marginals.iter_mut().enumerate() {
            if !x.is_finite() || *x < -MARGINAL_SLACK {
                return Err(Error::input(format!(
                    "marginal of project {} is {x}; marginals must be nonnegative",
                    j + 1
                )));
            }
            *x = x.max(0.0);
        }
        let total: f64 = marginals.iter().sum();
        if total > 1.0 + MARGINAL_SLACK {
            return Err(Error::input(format!(
                "lottery marginals sum to {total}, which exceeds 1"
            )));
        }
        if total > 1.0 {
            marginals.iter_mut().for_each(|x| *x /= total);
        }
        Ok(LotterySpec {
            marginals,
            draws,
            promise,
        })
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn promise(&self) -> &ProjectSet {
        &self.promise
    }
}
