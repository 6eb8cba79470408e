//! The maximal-in-distributional-range allocation rule with VCG payments,
//! adaptive-precision sampling, and the composition with an exact branch.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lottery::{
    cancellation_exponent, interval_boundaries, locate, uniform_below_pow2, FractionalSolution,
    Rounding, RoundingOutcome, RoundingTrace,
};
use crate::sets::ProjectSet;
use crate::solver::{
    refine_estimate, solve, ConcaveObjective, ConvexProgram, Estimate, FrankWolfe, SolveReport,
    SolverConfig,
};
use crate::valuations::MrsValuation;
use crate::verify::brute_force_opt;

/// Hard cap on refinement rounds in [`AdaptiveSampler::sample`].
pub const MAX_REFINEMENT_ROUNDS: usize = 60;

/// `n` players with valuations on `m` projects, at most `k` of which may be built.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    m: usize,
    k: usize,
    valuations: Vec<Arc<MrsValuation>>,
}

impl Instance {
    pub fn new(k: usize, valuations: Vec<MrsValuation>) -> Result<Self> {
        Self::from_shared(k, valuations.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(k: usize, valuations: Vec<Arc<MrsValuation>>) -> Result<Self> {
        let Some(first) = valuations.first() else {
            return Err(Error::input("an instance needs at least one player"));
        };
        let m = first.ground();
        if let Some(i) = valuations.iter().position(|v| v.ground() != m) {
            return Err(Error::input(format!(
                "player {} values {} projects, player 1 values {m}",
                i + 1,
                valuations[i].ground()
            )));
        }
        if k == 0 || k > m {
            return Err(Error::input(format!("k = {k} must satisfy 1 <= k <= m = {m}")));
        }
        Ok(Instance { m, k, valuations })
    }

    pub fn n(&self) -> usize {
        self.valuations.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn valuations(&self) -> &[Arc<MrsValuation>] {
        &self.valuations
    }

    pub fn valuation(&self, i: usize) -> &MrsValuation {
        &self.valuations[i]
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::from_shared(k, self.valuations.clone())
    }

    /// Player `i` reports `v` instead.
    pub fn with_valuation(&self, i: usize, v: MrsValuation) -> Result<Self> {
        if i >= self.n() {
            return Err(Error::input(format!("no player {}", i + 1)));
        }
        let mut valuations = self.valuations.clone();
        valuations[i] = Arc::new(v);
        Self::from_shared(self.k, valuations)
    }

    /// Player `i` replaced by the zero valuation; `n` is unchanged so the
    /// range of `r_k^+` stays the same.
    pub fn without_player(&self, i: usize) -> Result<Self> {
        self.with_valuation(i, MrsValuation::zero(self.m))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let valuations = self
            .valuations
            .iter()
            .map(|v| v.scaled(factor))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.k, valuations)
    }

    pub fn with_enum_cap(&self, cap: usize) -> Self {
        Instance {
            m: self.m,
            k: self.k,
            valuations: self
                .valuations
                .iter()
                .map(|v| Arc::new(v.as_ref().clone().with_enum_cap(cap)))
                .collect(),
        }
    }

    /// `Σ_i v_i(S)`.
    pub fn welfare(&self, set: &ProjectSet) -> Result<f64> {
        set.check(self.m)?;
        Ok(self.valuations.iter().map(|v| v.value_of(set.indices())).sum())
    }

    /// `Σ_{i' ≠ i} v_{i'}(S)`.
    pub fn welfare_without(&self, i: usize, set: &ProjectSet) -> Result<f64> {
        set.check(self.m)?;
        Ok(self
            .valuations
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != i)
            .map(|(_, v)| v.value_of(set.indices()))
            .sum())
    }

    /// `Σ_i v_i([m])`, the normalizer for relative tolerances.
    pub fn grand_welfare(&self) -> f64 {
        self.valuations.iter().map(|v| v.grand_value()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub rounding: Rounding,
    pub solver: SolverConfig,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        MechanismConfig {
            rounding: Rounding::Rk,
            solver: SolverConfig::default(),
        }
    }
}

impl MechanismConfig {
    pub fn new(rounding: Rounding, tol: f64) -> Self {
        MechanismConfig {
            rounding,
            solver: SolverConfig::default().with_tol(tol),
        }
    }
}

/// One RNG per purpose, all derived from the master seed: stream 0 rounds the
/// allocation, stream `1 + i` samples player `i`'s pivot allocation, stream
/// `n + 1` flips the composition coin.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionTrace {
    /// The exact branch has probability `e · 2^{-exponent}`.
    pub exponent: u64,
    pub exact_branch: bool,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngTrace {
    pub seed: u64,
    pub rounding: Option<RoundingTrace>,
    /// Sets drawn at each player's pivot allocation for the realized payments.
    pub pivot_samples: Vec<ProjectSet>,
    pub composition: Option<CompositionTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub rounding: Rounding,
    pub chosen: ProjectSet,
    /// Single-sample payments, unbiased for `expected_payments`.
    pub payments: Vec<f64>,
    pub expected_payments: Vec<f64>,
    /// Exact expected value of each player at the allocation.
    pub expected_values: Vec<f64>,
    pub expected_welfare: f64,
    pub x_star: FractionalSolution,
    pub solve_report: SolveReport,
    /// Frank-Wolfe gaps of the pivot solves.
    pub pivot_gaps: Vec<f64>,
    pub rng_trace: RngTrace,
}

/// Solves the allocation program; its maximizer defines the distribution `r(x*)`.
pub fn solve_allocation(instance: &Instance, config: &MechanismConfig) -> Result<SolveReport> {
    let program = ConvexProgram::new(instance.clone(), config.rounding);
    solve(&program, &config.solver)
}

/// `E_{r(pivot)}[Σ_{i'≠i} v_{i'}] − E_{r(x)}[Σ_{i'≠i} v_{i'}]`, with both
/// expectations exact.
pub fn vcg_payment(
    instance: &Instance,
    rounding: Rounding,
    player: usize,
    allocation: &FractionalSolution,
    pivot: &FractionalSolution,
) -> Result<f64> {
    let program = ConvexProgram::new(instance.clone(), rounding);
    let others = |x: &FractionalSolution| -> Result<f64> {
        let values = program.player_values(x)?;
        Ok(values
            .iter()
            .enumerate()
            .filter(|(p, _)| *p != player)
            .map(|(_, v)| v)
            .sum())
    };
    Ok(others(pivot)? - others(allocation)?)
}

/// Everything needed to charge VCG payments for one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentPlan {
    pub rounding: Rounding,
    pub x_star: FractionalSolution,
    /// `x*` of the instance with player `i` zeroed out.
    pub pivots: Vec<FractionalSolution>,
    pub pivot_gaps: Vec<f64>,
    pub expected: Vec<f64>,
}

impl PaymentPlan {
    /// Runs the `n` pivot solves (concurrently) for an allocation `x_star`.
    pub fn build(
        instance: &Instance,
        config: &MechanismConfig,
        x_star: &FractionalSolution,
    ) -> Result<Self> {
        let pivots: Vec<SolveReport> = (0..instance.n())
            .into_par_iter()
            .map(|i| solve_allocation(&instance.without_player(i)?, config))
            .collect::<Result<_>>()?;
        let expected = pivots
            .iter()
            .enumerate()
            .map(|(i, r)| vcg_payment(instance, config.rounding, i, x_star, &r.x_star))
            .collect::<Result<Vec<_>>>()?;
        Ok(PaymentPlan {
            rounding: config.rounding,
            x_star: x_star.clone(),
            pivot_gaps: pivots.iter().map(|r| r.duality_gap).collect(),
            pivots: pivots.into_iter().map(|r| r.x_star).collect(),
            expected,
        })
    }

    /// Realized payments given the chosen set and one draw `T_i ∼ r(pivot_i)` per
    /// player: `Σ_{i'≠i} v_{i'}(T_i) − Σ_{i'≠i} v_{i'}(S)`.
    pub fn realize(
        &self,
        instance: &Instance,
        chosen: &ProjectSet,
        pivot_samples: &[ProjectSet],
    ) -> Result<Vec<f64>> {
        (0..instance.n())
            .map(|i| {
                Ok(instance.welfare_without(i, &pivot_samples[i])?
                    - instance.welfare_without(i, chosen)?)
            })
            .collect()
    }

    /// Draws `T_i ∼ r(pivot_i)` for every player.
    pub fn sample_pivots<R: Rng>(
        &self,
        players: usize,
        rngs: &mut [R],
    ) -> Result<Vec<ProjectSet>> {
        self.pivots
            .iter()
            .zip(rngs.iter_mut())
            .map(|(x, rng)| Ok(self.rounding.sample(x, players, rng)?.chosen))
            .collect()
    }

    /// A fresh realized-payment vector: samples `S ∼ r(x*)` and each `T_i`.
    pub fn sample_realized<R: Rng + ?Sized>(&self, instance: &Instance, rng: &mut R) -> Result<Vec<f64>> {
        let n = instance.n();
        let chosen = self.rounding.sample(&self.x_star, n, rng)?.chosen;
        let samples = self
            .pivots
            .iter()
            .map(|x| Ok(self.rounding.sample(x, n, rng)?.chosen))
            .collect::<Result<Vec<_>>>()?;
        self.realize(instance, &chosen, &samples)
    }
}

/// Solve, round, and charge VCG payments.
pub fn run_midr(instance: &Instance, config: &MechanismConfig, seed: u64) -> Result<MechanismOutcome> {
    let n = instance.n();
    let report = solve_allocation(instance, config)?;
    let program = ConvexProgram::new(instance.clone(), config.rounding);
    let expected_values = program.player_values(&report.x_star)?;
    let expected_welfare = program.objective(&report.x_star)?;

    let RoundingOutcome { chosen, trace } =
        config
            .rounding
            .sample(&report.x_star, n, &mut stream_rng(seed, 0))?;
    let plan = PaymentPlan::build(instance, config, &report.x_star)?;
    let mut pivot_rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream_rng(seed, 1 + i as u64)).collect();
    let pivot_samples = plan.sample_pivots(n, &mut pivot_rngs)?;
    let payments = plan.realize(instance, &chosen, &pivot_samples)?;

    Ok(MechanismOutcome {
        rounding: config.rounding,
        chosen,
        payments,
        expected_payments: plan.expected,
        expected_values,
        expected_welfare,
        x_star: report.x_star.clone(),
        solve_report: report,
        pivot_gaps: plan.pivot_gaps,
        rng_trace: RngTrace {
            seed,
            rounding: Some(trace),
            pivot_samples,
            composition: None,
        },
    })
}

/// Realized and exact expected VCG payments.
pub fn compute_payments(
    instance: &Instance,
    config: &MechanismConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let outcome = run_midr(instance, config, seed)?;
    Ok((outcome.payments, outcome.expected_payments))
}

/// With probability `e · 2^{-2nm}` (decided exactly) pick the welfare-maximizing
/// set by brute force and charge exact VCG payments; otherwise run the
/// allocation rule under `r_k^+`.
pub fn run_composed(
    instance: &Instance,
    solver: &SolverConfig,
    bf_cap: usize,
    seed: u64,
) -> Result<MechanismOutcome> {
    let n = instance.n();
    let exponent = cancellation_exponent(n, instance.m());
    let mut coin = stream_rng(seed, n as u64 + 1);
    let (exact_branch, q) = uniform_below_pow2(&mut coin, exponent, std::f64::consts::E);
    let composition = Some(CompositionTrace {
        exponent,
        exact_branch,
        q,
    });
    if !exact_branch {
        let config = MechanismConfig {
            rounding: Rounding::RkPlus,
            solver: *solver,
        };
        let mut outcome = run_midr(instance, &config, seed)?;
        outcome.rng_trace.composition = composition;
        return Ok(outcome);
    }

    let (best, welfare) = brute_force_opt(instance, bf_cap)?;
    let expected_values = instance
        .valuations()
        .iter()
        .map(|v| v.value_of(best.indices()))
        .collect();
    let mut payments = Vec::with_capacity(n);
    for i in 0..n {
        let (_, pivot_welfare) = brute_force_opt(&instance.without_player(i)?, bf_cap)?;
        payments.push(pivot_welfare - instance.welfare_without(i, &best)?);
    }
    let x_star = FractionalSolution::indicator(&best, instance.m(), instance.k())?;
    Ok(MechanismOutcome {
        rounding: Rounding::RkPlus,
        chosen: best,
        expected_payments: payments.clone(),
        payments,
        expected_values,
        expected_welfare: welfare,
        solve_report: SolveReport {
            x_star: x_star.clone(),
            objective_value: welfare,
            duality_gap: 0.0,
            iterations: 0,
            tolerance_achieved: 0.0,
            upper_bound: instance.grand_welfare(),
            converged: true,
            trace: Vec::new(),
        },
        x_star,
        pivot_gaps: vec![0.0; n],
        rng_trace: RngTrace {
            seed,
            rounding: None,
            pivot_samples: Vec::new(),
            composition,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSample {
    pub chosen: ProjectSet,
    /// Number of estimates consulted.
    pub rounds: usize,
    /// Radius of the estimate that resolved every draw.
    pub delta: f64,
    pub draws: Vec<f64>,
}

/// Samples `r_k(x*)` for the `r_k^+` program without knowing `x*` exactly.
///
/// Round `t ≥ 1` uses a `δ_t`-estimate `x̃` with `δ_t = 2^{-t}/(2m²)`; a draw
/// farther than `δ_t·m/k` from every prefix boundary of `x̃` lies in the same
/// interval under `x*`. Estimates are computed once and shared by all samples.
pub struct AdaptiveSampler<'a> {
    solver: FrankWolfe<'a, ConvexProgram>,
    estimates: Vec<Estimate>,
    m: usize,
    k: usize,
}

impl<'a> AdaptiveSampler<'a> {
    pub fn new(program: &'a ConvexProgram, config: &SolverConfig) -> Result<Self> {
        if program.curvature().is_none() {
            return Err(Error::Contract(
                "adaptive sampling needs the r_k^+ objective with k >= 2".into(),
            ));
        }
        Ok(AdaptiveSampler {
            solver: FrankWolfe::new(program, *config)?,
            estimates: Vec::new(),
            m: program.instance().m(),
            k: program.instance().k(),
        })
    }

    pub fn delta(&self, round: usize) -> f64 {
        let m = self.m as f64;
        (-(round as f64)).exp2() / (2.0 * m * m)
    }

    /// The estimate used in round `round` (1-based).
    pub fn estimate(&mut self, round: usize) -> Result<&Estimate> {
        while self.estimates.len() < round {
            let delta = self.delta(self.estimates.len() + 1);
            let e = refine_estimate(&mut self.solver, delta)?;
            self.estimates.push(e);
        }
        Ok(&self.estimates[round - 1])
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<AdaptiveSample> {
        let draws: Vec<f64> = (0..self.k).map(|_| rng.gen::<f64>()).collect();
        let (m, k) = (self.m as f64, self.k);
        for round in 1..=MAX_REFINEMENT_ROUNDS {
            let delta = self.delta(round);
            let estimate = self.estimate(round)?;
            let boundaries = interval_boundaries(estimate.x.x(), k);
            let zone = delta * m / k as f64;
            let clear = draws
                .iter()
                .all(|&p| boundaries.iter().all(|&b| (p - b).abs() > zone));
            if clear {
                let chosen =
                    ProjectSet::new(draws.iter().filter_map(|&p| locate(&boundaries, p)));
                return Ok(AdaptiveSample {
                    chosen,
                    rounds: round,
                    delta,
                    draws,
                });
            }
        }
        Err(Error::numeric(format!(
            "draws {draws:?} still unresolved after {MAX_REFINEMENT_ROUNDS} refinement rounds"
        )))
    }
}

/// One adaptive-precision sample of `r_k(x*)` for the `r_k^+` program of `instance`.
pub fn sample_adaptive(instance: &Instance, config: &SolverConfig, seed: u64) -> Result<AdaptiveSample> {
    let program = ConvexProgram::new(instance.clone(), Rounding::RkPlus);
    let mut sampler = AdaptiveSampler::new(&program, config)?;
    sampler.sample(&mut stream_rng(seed, 0))
}

#[cfg(test)]
mod tests;
