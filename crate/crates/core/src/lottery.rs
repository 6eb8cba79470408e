//! The k-bounded-lottery rounding scheme `r_k`, its cancelling variant `r_k^+`,
//! and their exact output distributions.
//!
//! `r_k(x)` lays the projects out on `[0,1]` as consecutive intervals of length
//! `x_j/k` in ascending index order, throws `k` uniform points, and keeps every
//! project whose interval is hit. Equivalently it is the k-bounded lottery with
//! per-draw marginals `x/k` and no promise.

use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::{KahanSum, ProjectSet};
use crate::valuations::hit_probability;

/// Slack accepted on the polytope constraints before rejecting a point.
pub const POLYTOPE_SLACK: f64 = 1e-9;

/// Inclusion-exclusion round-off tolerated (and clamped to zero) on a probability.
pub const NEGATIVE_PROBABILITY_GUARD: f64 = 1e-12;

/// A point of `P_k = {x : Σx ≤ k, 0 ≤ x ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalSolution {
    x: Vec<f64>,
    k: usize,
}

impl FractionalSolution {
    /// Checks membership in `P_k`, clamping coordinates within [`POLYTOPE_SLACK`]
    /// of `[0,1]` and rescaling a total within slack of `k`.
    pub fn new(x: Vec<f64>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::input("cardinality bound k must be at least 1"));
        }
        let mut x = x;
        for (j, xj) in x.iter_mut().enumerate() {
            if !xj.is_finite() || *xj < -POLYTOPE_SLACK || *xj > 1.0 + POLYTOPE_SLACK {
                return Err(Error::input(format!(
                    "x[{}] = {xj} lies outside [0, 1]",
                    j + 1
                )));
            }
            *xj = xj.clamp(0.0, 1.0);
        }
        let total: f64 = x.iter().sum();
        if total > k as f64 + POLYTOPE_SLACK {
            return Err(Error::input(format!(
                "coordinates sum to {total}, above the bound k = {k}"
            )));
        }
        if total > k as f64 {
            let scale = k as f64 / total;
            x.iter_mut().for_each(|xj| *xj *= scale);
        }
        Ok(FractionalSolution { x, k })
    }

    /// The integer point `1_S`.
    pub fn indicator(set: &ProjectSet, ground: usize, k: usize) -> Result<Self> {
        set.check(ground)?;
        let mut x = vec![0.0; ground];
        for j in set.iter() {
            x[j] = 1.0;
        }
        Self::new(x, k)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn ground(&self) -> usize {
        self.x.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    /// Per-draw marginals `x/k` of the equivalent lottery.
    pub fn draw_marginals(&self) -> Vec<f64> {
        let k = self.k as f64;
        self.x.iter().map(|xj| xj / k).collect()
    }

    /// Right endpoints `Σ_{j' ≤ j} x_{j'}/k` of the intervals `I_j`.
    pub fn boundaries(&self) -> Vec<f64> {
        interval_boundaries(&self.x, self.k)
    }
}

pub(crate) fn interval_boundaries(x: &[f64], k: usize) -> Vec<f64> {
    let k = k as f64;
    x.iter()
        .scan(0.0, |acc, xj| {
            *acc += xj;
            Some(*acc / k)
        })
        .collect()
}

/// Smallest `j` with `boundaries[j] > p`, i.e. the interval containing `p`, if any.
pub(crate) fn locate(boundaries: &[f64], p: f64) -> Option<usize> {
    let j = boundaries.partition_point(|&b| b <= p);
    (j < boundaries.len()).then_some(j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CancellationTrace {
    /// `q_1` at double precision; the branch itself is decided bit-exactly.
    pub q1: f64,
    pub cancelled: bool,
    pub q2: Option<f64>,
    pub j_star: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingTrace {
    /// The `k` uniform points `p_1..p_k`.
    pub draws: Vec<f64>,
    /// Present for `r_k^+` only.
    pub cancellation: Option<CancellationTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundingOutcome {
    pub chosen: ProjectSet,
    pub trace: RoundingTrace,
}

/// Samples `r_k(x)`.
pub fn round_k<R: Rng + ?Sized>(x: &FractionalSolution, rng: &mut R) -> RoundingOutcome {
    let boundaries = x.boundaries();
    let draws: Vec<f64> = (0..x.k).map(|_| rng.gen::<f64>()).collect();
    let chosen = ProjectSet::new(draws.iter().filter_map(|&p| locate(&boundaries, p)));
    RoundingOutcome {
        chosen,
        trace: RoundingTrace {
            draws,
            cancellation: None,
        },
    }
}

/// Samples `r_k^+(x)` for an instance with `players` players: run `r_k`; with
/// probability `μ = 2^{-2nm}` discard the result and, with probability
/// `β = |S|/m`, replace it by a uniformly random singleton.
pub fn round_k_plus<R: Rng + ?Sized>(
    x: &FractionalSolution,
    players: usize,
    rng: &mut R,
) -> Result<RoundingOutcome> {
    if players == 0 {
        return Err(Error::input("r_k^+ needs at least one player"));
    }
    let m = x.ground();
    let mut outcome = round_k(x, rng);
    let beta = outcome.chosen.len() as f64 / m as f64;
    let exponent = cancellation_exponent(players, m);
    let (cancelled, q1) = uniform_below_pow2(rng, exponent, 1.0);
    let mut trace = CancellationTrace {
        q1,
        cancelled,
        q2: None,
        j_star: None,
    };
    if cancelled {
        outcome.chosen = ProjectSet::empty();
        let q2: f64 = rng.gen();
        trace.q2 = Some(q2);
        if q2 <= beta {
            let j = rng.gen_range(0..m);
            trace.j_star = Some(j);
            outcome.chosen = ProjectSet::singleton(j);
        }
    }
    outcome.trace.cancellation = Some(trace);
    Ok(outcome)
}

/// `2nm`, so that the cancellation probability is `μ = 2^{-exponent}`.
pub fn cancellation_exponent(players: usize, ground: usize) -> u64 {
    2 * players as u64 * ground as u64
}

/// `μ = 2^{-2nm}` as a double; flushes to zero once it leaves the subnormal range.
pub fn cancellation_probability(players: usize, ground: usize) -> f64 {
    let e = cancellation_exponent(players, ground);
    if e > 1074 {
        0.0
    } else {
        (-(e as f64)).exp2()
    }
}

/// Draws `q ∼ U[0,1)` and decides `q < scale · 2^{-exponent}` exactly, for
/// `scale ∈ [1, 4)`, however small the threshold. The leading bits of `q` are
/// read lazily, so thresholds far below double precision keep their exact
/// probability. Returns the decision and `q` rounded to a double.
pub fn uniform_below_pow2<R: RngCore + ?Sized>(rng: &mut R, exponent: u64, scale: f64) -> (bool, f64) {
    assert!((1.0..4.0).contains(&scale), "scale {scale} outside [1, 4)");
    let headroom = if scale > 2.0 {
        2
    } else if scale > 1.0 {
        1
    } else {
        0
    };
    if exponent < headroom {
        let threshold = scale * (-(exponent as f64)).exp2();
        let q = next_unit(rng);
        return (q < threshold, q);
    }
    // q < scale·2^{-e} iff its first (e - headroom) bits are zero and the
    // remainder, itself uniform, falls below scale / 2^headroom.
    let prefix = exponent - headroom;
    let mut zeros = 0u64;
    while zeros < prefix {
        let take = (prefix - zeros).min(64);
        let word = rng.next_u64() >> (64 - take);
        if word != 0 {
            let lead = word.leading_zeros() as u64 - (64 - take);
            let lz = zeros + lead;
            // first one bit at position lz + 1; the rest of q is uniform
            let q = (1.0 + next_unit(rng)) * exp2_neg(lz + 1);
            return (false, q);
        }
        zeros += take;
    }
    let rest = next_unit(rng);
    let below = rest < scale / (headroom as f64).exp2();
    (below, rest * exp2_neg(prefix))
}

fn next_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (-53f64).exp2()
}

fn exp2_neg(e: u64) -> f64 {
    if e > 1074 {
        0.0
    } else {
        (-(e as f64)).exp2()
    }
}

/// Which rounding scheme the allocation rule uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    #[default]
    Rk,
    RkPlus,
}

impl Rounding {
    pub fn sample<R: Rng + ?Sized>(
        self,
        x: &FractionalSolution,
        players: usize,
        rng: &mut R,
    ) -> Result<RoundingOutcome> {
        match self {
            Rounding::Rk => Ok(round_k(x, rng)),
            Rounding::RkPlus => round_k_plus(x, players, rng),
        }
    }

    pub fn exact_distribution(
        self,
        x: &FractionalSolution,
        players: usize,
        cap: usize,
    ) -> Result<ExactDistribution> {
        match self {
            Rounding::Rk => exact_distribution(x, cap),
            Rounding::RkPlus => exact_distribution_plus(x, players, cap),
        }
    }
}

impl std::fmt::Display for Rounding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Rounding::Rk => "rk",
            Rounding::RkPlus => "rkplus",
        })
    }
}

impl std::str::FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk" => Ok(Rounding::Rk),
            "rkplus" | "rk+" => Ok(Rounding::RkPlus),
            other => Err(Error::input(format!("unknown rounding scheme {other:?}"))),
        }
    }
}

/// `Pr[r_k(x) contains j] = 1 − (1 − x_j/k)^k`.
pub fn inclusion_probability(x: &FractionalSolution, j: usize) -> f64 {
    hit_probability(x.x[j] / x.k as f64, x.k)
}

/// A distribution over project subsets, stored densely by bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    ground: usize,
    probs: Vec<f64>,
}

impl ExactDistribution {
    pub fn ground(&self) -> usize {
        self.ground
    }

    pub fn prob(&self, set: &ProjectSet) -> f64 {
        if set.check(self.ground).is_err() {
            return 0.0;
        }
        self.probs[set.to_mask() as usize]
    }

    /// Sets with positive probability, in bitmask order.
    pub fn support(&self) -> impl Iterator<Item = (ProjectSet, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(mask, &p)| (ProjectSet::from_mask(mask as u64), p))
    }

    pub fn total(&self) -> f64 {
        let mut acc = KahanSum::default();
        self.probs.iter().for_each(|&p| acc.add(p));
        acc.total()
    }

    /// `Pr[j ∈ S]`.
    pub fn marginal(&self, j: usize) -> f64 {
        let bit = 1usize << j;
        let mut acc = KahanSum::default();
        for (mask, &p) in self.probs.iter().enumerate() {
            if mask & bit != 0 {
                acc.add(p);
            }
        }
        acc.total()
    }

    /// `E[f(S)]`, with `f` given on bitmasks.
    pub fn expectation(&self, mut f: impl FnMut(u64) -> f64) -> f64 {
        let mut acc = KahanSum::default();
        for (mask, &p) in self.probs.iter().enumerate() {
            if p != 0.0 {
                acc.add(p * f(mask as u64));
            }
        }
        acc.total()
    }

    pub fn tv_distance(&self, other: &ExactDistribution) -> Result<f64> {
        if self.ground != other.ground {
            return Err(Error::input("distributions live on different ground sets"));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(p, q)| (p - q).abs())
                .sum::<f64>())
    }

    /// Empirical frequencies of a sample.
    pub fn empirical<'a>(
        ground: usize,
        samples: impl IntoIterator<Item = &'a ProjectSet>,
    ) -> Result<Self> {
        if ground >= 32 {
            return Err(Error::capacity(format!(
                "dense distributions need m < 32, got {ground}"
            )));
        }
        let mut counts = vec![0u64; 1 << ground];
        let mut total = 0u64;
        for s in samples {
            s.check(ground)?;
            counts[s.to_mask() as usize] += 1;
            total += 1;
        }
        let probs = counts
            .into_iter()
            .map(|c| c as f64 / total.max(1) as f64)
            .collect();
        Ok(ExactDistribution { ground, probs })
    }

    /// Support keyed by sorted 1-based index strings, e.g. `"1,3,4"` (`""` is the empty set).
    pub fn to_key_map(&self) -> BTreeMap<String, f64> {
        self.support().map(|(s, p)| (s.key(), p)).collect()
    }
}

/// Law of the set hit by `draws` independent picks from `marginals` (leftover
/// mass picks nothing), by direct inclusion-exclusion:
/// `Pr[S] = Σ_{R⊆S} (−1)^{|S|−|R|} (1 − x_{R̄})^draws`, each sum compensated.
pub fn draw_distribution(marginals: &[f64], draws: usize, cap: usize) -> Result<ExactDistribution> {
    let m = marginals.len();
    if m > cap || m >= 32 {
        return Err(Error::capacity(format!(
            "exact distribution over 2^{m} subsets exceeds the cap m <= {cap}"
        )));
    }
    let size = 1usize << m;
    let total: f64 = marginals.iter().sum();
    let mut inside = vec![0.0f64; size];
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        inside[mask] = inside[mask & (mask - 1)] + marginals[low];
    }
    let contained: Vec<f64> = inside
        .iter()
        .map(|&xr| (1.0 - (total - xr)).powi(draws as i32))
        .collect();
    let mut probs = vec![0.0f64; size];
    for s in 0..size {
        let size_s = s.count_ones() as usize;
        if size_s > draws {
            continue;
        }
        let mut acc = KahanSum::default();
        // all submasks r of s, including 0
        let mut r = s;
        loop {
            let sign = if (size_s - r.count_ones() as usize) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            acc.add(sign * contained[r]);
            if r == 0 {
                break;
            }
            r = (r - 1) & s;
        }
        let p = acc.total();
        if p < -NEGATIVE_PROBABILITY_GUARD {
            return Err(Error::numeric(format!(
                "inclusion-exclusion produced probability {p} for {}",
                ProjectSet::from_mask(s as u64)
            )));
        }
        probs[s] = p.max(0.0);
    }
    Ok(ExactDistribution { ground: m, probs })
}

/// Exact law of `r_k(x)`.
pub fn exact_distribution(x: &FractionalSolution, cap: usize) -> Result<ExactDistribution> {
    draw_distribution(&x.draw_marginals(), x.k, cap)
}

/// Exact law of `r_k^+(x)` with `players` players, assembled from the law of `r_k(x)`.
pub fn exact_distribution_plus(
    x: &FractionalSolution,
    players: usize,
    cap: usize,
) -> Result<ExactDistribution> {
    let base = exact_distribution(x, cap)?;
    let m = x.ground();
    let mu = cancellation_probability(players, m);
    let mut probs: Vec<f64> = base.probs.iter().map(|p| (1.0 - mu) * p).collect();
    let expected_beta = base.expectation(|mask| mask.count_ones() as f64) / m as f64;
    probs[0] += mu * (1.0 - expected_beta);
    for j in 0..m {
        probs[1 << j] += mu * expected_beta / m as f64;
    }
    Ok(ExactDistribution { ground: m, probs })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn fs(x: &[f64], k: usize) -> FractionalSolution {
        FractionalSolution::new(x.to_vec(), k).unwrap()
    }

    /// Law of r_k by enumerating which interval (or none) each of the k points
    /// lands in: a discrete stand-in for the k uniform draws.
    fn brute_rounding(x: &[f64], k: usize) -> BTreeMap<ProjectSet, f64> {
        let m = x.len();
        let per_draw: Vec<f64> = x.iter().map(|v| v / k as f64).collect();
        let null = 1.0 - per_draw.iter().sum::<f64>();
        let mut out = BTreeMap::new();
        for code in 0..(m + 1).pow(k as u32) {
            let (mut c, mut prob, mut picks) = (code, 1.0, Vec::new());
            for _ in 0..k {
                let pick = c % (m + 1);
                c /= m + 1;
                if pick == m {
                    prob *= null;
                } else {
                    prob *= per_draw[pick];
                    picks.push(pick);
                }
            }
            *out.entry(ProjectSet::new(picks)).or_insert(0.0) += prob;
        }
        out
    }

    #[test]
    fn polytope_membership_is_checked() {
        assert!(FractionalSolution::new(vec![1.0, 1.0], 1).is_err());
        assert!(FractionalSolution::new(vec![1.2], 2).is_err());
        assert!(FractionalSolution::new(vec![-0.1], 1).is_err());
        assert!(FractionalSolution::new(vec![0.5], 0).is_err());
        let nudged = fs(&[1.0 + 1e-12, 5e-10], 1);
        assert!(nudged.x().iter().sum::<f64>() <= 1.0);
    }

    #[test]
    fn unit_mass_on_first_project_always_selects_it() {
        let x = fs(&[1.0, 0.0], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            assert_eq!(round_k(&x, &mut rng).chosen, ProjectSet::singleton(0));
        }
    }

    #[test]
    fn two_projects_two_draws_distribution() {
        let d = exact_distribution(&fs(&[1.0, 1.0], 2), 20).unwrap();
        assert!((d.prob(&ProjectSet::new([0, 1])) - 0.5).abs() < 1e-15);
        assert!((d.prob(&ProjectSet::new([0])) - 0.25).abs() < 1e-15);
        assert!((d.prob(&ProjectSet::new([1])) - 0.25).abs() < 1e-15);
        assert_eq!(d.prob(&ProjectSet::empty()), 0.0);

        let brute = brute_rounding(&[1.0, 1.0], 2);
        assert!((brute[&ProjectSet::new([0, 1])] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_project_distribution() {
        let d = exact_distribution(&fs(&[0.3], 1), 20).unwrap();
        assert!((d.prob(&ProjectSet::singleton(0)) - 0.3).abs() < 1e-15);
        assert!((d.prob(&ProjectSet::empty()) - 0.7).abs() < 1e-15);
        let keys = d.to_key_map();
        assert_eq!(keys.keys().collect::<Vec<_>>(), vec!["", "1"]);
    }

    #[test]
    fn inclusion_probability_examples() {
        assert_eq!(inclusion_probability(&fs(&[0.0, 1.0], 2), 0), 0.0);
        assert_eq!(inclusion_probability(&fs(&[1.0], 1), 0), 1.0);
        assert!((inclusion_probability(&fs(&[1.0, 0.5], 2), 0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn indicator_point_includes_each_member_with_the_lottery_rate() {
        for k in 1..=4 {
            let set = ProjectSet::new(0..k);
            let x = FractionalSolution::indicator(&set, 5, k).unwrap();
            let d = exact_distribution(&x, 20).unwrap();
            let expect = 1.0 - (1.0 - 1.0 / k as f64).powi(k as i32);
            for j in 0..k {
                assert!((d.marginal(j) - expect).abs() < 1e-12);
                assert!(expect >= 1.0 - (-1.0f64).exp());
            }
        }
    }

    #[test]
    fn exact_matches_interval_enumeration() {
        let x = [0.3, 0.9, 0.0, 0.55, 0.25];
        for k in 2..=4 {
            let d = exact_distribution(&fs(&x, k), 20).unwrap();
            let brute = brute_rounding(&x, k);
            for (s, p) in &brute {
                assert!((d.prob(s) - p).abs() < 1e-13, "k={k} set={s}");
            }
            assert!((d.total() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn support_respects_the_bound() {
        let d = exact_distribution(&fs(&[0.5, 0.5, 0.5, 0.5], 2), 20).unwrap();
        assert!(d.support().all(|(s, _)| s.len() <= 2));
    }

    #[test]
    fn capacity_is_enforced() {
        let x = fs(&[0.1; 8], 2);
        assert!(matches!(exact_distribution(&x, 7), Err(Error::Capacity(_))));
    }

    #[test]
    fn sampler_is_deterministic_given_seed() {
        let x = fs(&[0.4, 0.7, 0.2], 2);
        let a = round_k(&x, &mut ChaCha8Rng::seed_from_u64(9));
        let b = round_k(&x, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.trace.draws.len(), 2);
    }

    #[test]
    fn sampler_matches_exact_law() {
        let x = fs(&[0.4, 0.7, 0.2, 0.6], 3);
        let exact = exact_distribution(&x, 20).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<ProjectSet> = (0..200_000).map(|_| round_k(&x, &mut rng).chosen).collect();
        let emp = ExactDistribution::empirical(4, &samples).unwrap();
        assert!(exact.tv_distance(&emp).unwrap() < 0.01);
    }

    #[test]
    fn pow2_coin_has_the_right_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (exponent, scale) in [(0u64, 1.0), (1, 1.0), (3, 1.0), (2, std::f64::consts::E), (5, std::f64::consts::E), (1, 1.5)] {
            let trials = 400_000;
            let hits = (0..trials)
                .filter(|_| uniform_below_pow2(&mut rng, exponent, scale).0)
                .count();
            let p = (scale * (-(exponent as f64)).exp2()).min(1.0);
            let se = (p * (1.0 - p) / trials as f64).sqrt();
            let rate = hits as f64 / trials as f64;
            assert!((rate - p).abs() <= 5.0 * se + 1e-12, "e={exponent} s={scale} rate={rate} p={p}");
        }
    }

    #[test]
    fn pow2_coin_reports_consistent_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10_000 {
            let (below, q) = uniform_below_pow2(&mut rng, 4, 1.0);
            assert!((0.0..1.0).contains(&q));
            assert_eq!(below, q < 1.0 / 16.0);
        }
        // astronomically small thresholds never fire but still yield a valid q
        let (below, q) = uniform_below_pow2(&mut rng, 5000, std::f64::consts::E);
        assert!(!below);
        assert!((0.0..1.0).contains(&q));
    }

    #[test]
    fn plus_sampler_matches_exact_law_when_mu_is_visible() {
        // n = 1, m = 2 gives mu = 1/16
        let x = fs(&[0.8, 0.9], 2);
        let exact = exact_distribution_plus(&x, 1, 20).unwrap();
        assert!((exact.total() - 1.0).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let samples: Vec<ProjectSet> = (0..300_000)
            .map(|_| round_k_plus(&x, 1, &mut rng).unwrap().chosen)
            .collect();
        let emp = ExactDistribution::empirical(2, &samples).unwrap();
        assert!(exact.tv_distance(&emp).unwrap() < 0.005);
    }

    #[test]
    fn plus_branches_follow_the_trace() {
        let x = fs(&[0.5, 0.5, 0.5], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (mut cancelled, mut kept) = (0, 0);
        for _ in 0..20_000 {
            let out = round_k_plus(&x, 1, &mut rng).unwrap();
            let trace = out.trace.cancellation.clone().unwrap();
            if !trace.cancelled {
                kept += 1;
                let boundaries = x.boundaries();
                let plain = ProjectSet::new(out.trace.draws.iter().filter_map(|&p| locate(&boundaries, p)));
                assert_eq!(out.chosen, plain);
            } else {
                cancelled += 1;
                let q2 = trace.q2.unwrap();
                match trace.j_star {
                    Some(j) => assert_eq!(out.chosen, ProjectSet::singleton(j)),
                    None => {
                        assert!(out.chosen.is_empty());
                        assert!(q2 > 0.0);
                    }
                }
            }
        }
        // mu = 2^-6 for n = 1, m = 3
        assert!(cancelled > 0 && kept > cancelled);
    }
}
