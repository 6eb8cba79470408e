//! Audits: each returns the measured margin alongside a pass flag, and
//! [`audit_suite`] collects them into an [`AuditReport`].

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{misreport, random_point, MisreportKind, MISREPORT_MENU};
use super::{brute_force_opt, check_welfare_hessian, DEFAULT_BF_CAP};
use crate::error::{Error, Result};
use crate::io::fingerprint;
use crate::lottery::{
    cancellation_exponent, cancellation_probability, exact_distribution, inclusion_probability,
    round_k, ExactDistribution, FractionalSolution, Rounding,
};
use crate::mechanism::{
    solve_allocation, stream_rng, vcg_payment, Instance, MechanismConfig, PaymentPlan,
};
use crate::sets::ProjectSet;
use crate::solver::{ConcaveObjective, ConvexProgram, SolverConfig};
use crate::valuations::DEFAULT_ENUM_CAP;

const ONE_MINUS_INV_E: f64 = 1.0 - 0.367_879_441_171_442_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    /// Index into [`AuditReport::instances`], if the check is about one instance.
    pub instance: Option<usize>,
    pub passed: bool,
    /// Measured value minus its threshold; negative means failure.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub fingerprint: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
}

impl InstanceSummary {
    pub fn of(instance: &Instance) -> Self {
        InstanceSummary {
            fingerprint: fingerprint(instance),
            n: instance.n(),
            m: instance.m(),
            k: instance.k(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: Option<u64>,
    pub instances: Vec<InstanceSummary>,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl AuditReport {
    pub fn new(seed: Option<u64>) -> Self {
        AuditReport {
            seed,
            passed: true,
            ..Default::default()
        }
    }

    pub fn push(&mut self, instance: Option<usize>, name: &str, margin: f64, detail: String) {
        let passed = margin >= 0.0;
        self.passed &= passed;
        self.checks.push(CheckResult {
            name: name.to_string(),
            instance,
            passed,
            margin,
            detail,
        });
    }

    /// A check that could not run (capacity, conditioning); recorded, not failed.
    pub fn note(&mut self, instance: Option<usize>, name: &str, detail: String) {
        self.checks.push(CheckResult {
            name: name.to_string(),
            instance,
            passed: true,
            margin: f64::INFINITY,
            detail: format!("skipped: {detail}"),
        });
    }

    /// Appends `other`, renumbering its instance indices.
    pub fn merge(&mut self, other: AuditReport) {
        let offset = self.instances.len();
        self.instances.extend(other.instances);
        self.passed &= other.passed;
        self.checks.extend(other.checks.into_iter().map(|mut c| {
            c.instance = c.instance.map(|i| i + offset);
            c
        }));
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Worst margin per check name, in first-seen order.
    pub fn summary(&self) -> Vec<(String, usize, usize, f64)> {
        let mut rows: Vec<(String, usize, usize, f64)> = Vec::new();
        for c in &self.checks {
            let row = match rows.iter_mut().find(|r| r.0 == c.name) {
                Some(row) => row,
                None => {
                    rows.push((c.name.clone(), 0, 0, f64::INFINITY));
                    rows.last_mut().unwrap()
                }
            };
            row.1 += 1;
            row.2 += c.passed as usize;
            row.3 = row.3.min(c.margin);
        }
        rows
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>7} {:>7} {:>14}", "check", "runs", "passed", "worst margin");
        for (name, runs, passed, worst) in self.summary() {
            let worst = if worst.is_infinite() {
                "-".to_string()
            } else {
                format!("{worst:.6e}")
            };
            let _ = writeln!(out, "{name:<28} {runs:>7} {passed:>7} {worst:>14}");
        }
        for c in self.failures() {
            let at = c
                .instance
                .map(|i| format!(" [{}]", self.instances[i].fingerprint))
                .unwrap_or_default();
            let _ = writeln!(out, "FAIL {}{at}: {}", c.name, c.detail);
        }
        let _ = writeln!(
            out,
            "{} instances, {} checks: {}",
            self.instances.len(),
            self.checks.len(),
            if self.passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

/// `‖∇f − ∇_h f‖∞ / ‖∇f‖∞` between the production gradient and central differences.
pub fn gradient_relative_error(program: &ConvexProgram, x: &FractionalSolution, h: f64) -> Result<f64> {
    let exact = program.gradient(x)?;
    let fd = program.gradient_fd(x, h)?;
    let diff = exact
        .iter()
        .zip(&fd)
        .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    let scale = exact.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
    Ok(if diff == 0.0 { 0.0 } else { diff / scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximationAudit {
    pub welfare: f64,
    pub opt: f64,
    pub opt_set: ProjectSet,
    pub ratio: f64,
    /// `1 − 1/e` less the slack for the solver gap and, under `r_k^+`, `μ`.
    pub threshold: f64,
    pub gap: f64,
}

impl ApproximationAudit {
    pub fn passed(&self) -> bool {
        self.ratio >= self.threshold
    }
}

/// Exact expected welfare at the computed optimum against the brute-force optimum.
pub fn audit_approximation(
    instance: &Instance,
    config: &MechanismConfig,
    bf_cap: usize,
) -> Result<ApproximationAudit> {
    let (opt_set, opt) = brute_force_opt(instance, bf_cap)?;
    let report = solve_allocation(instance, config)?;
    let program = ConvexProgram::new(instance.clone(), config.rounding);
    let welfare = program.objective(&report.x_star)?;
    let (ratio, slack) = if opt > 0.0 {
        (welfare / opt, report.duality_gap.max(0.0) / opt + program.mu())
    } else {
        (1.0, 0.0)
    };
    Ok(ApproximationAudit {
        welfare,
        opt,
        opt_set,
        ratio,
        threshold: ONE_MINUS_INV_E - slack,
        gap: report.duality_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisreportTrial {
    pub player: usize,
    pub kind: MisreportKind,
    /// Exact expected utility of truth minus that of the lie.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthfulnessAudit {
    pub trials: Vec<MisreportTrial>,
    pub upper_bound: f64,
    pub min_margin: f64,
}

impl TruthfulnessAudit {
    /// Every margin at least `-rel · Σ_i v_i([m])`.
    pub fn passed(&self, rel: f64) -> bool {
        self.min_margin >= -rel * self.upper_bound
    }
}

/// Exact expected utility (true value at the allocation minus exact VCG
/// payment) of truthful reporting against `per_player` misreports per player.
pub fn audit_truthfulness(
    instance: &Instance,
    config: &MechanismConfig,
    per_player: usize,
    seed: u64,
) -> Result<TruthfulnessAudit> {
    let n = instance.n();
    let truth = solve_allocation(instance, config)?;
    let program = ConvexProgram::new(instance.clone(), config.rounding);
    let plan = PaymentPlan::build(instance, config, &truth.x_star)?;
    let values = program.player_values(&truth.x_star)?;

    let jobs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..per_player).map(move |t| (i, t)))
        .collect();
    let trials = jobs
        .into_par_iter()
        .map(|(i, t)| {
            let mut rng: ChaCha8Rng = stream_rng(seed, ((i as u64) << 32) | t as u64);
            let kind = MISREPORT_MENU[t % MISREPORT_MENU.len()];
            let lie = misreport(instance.valuation(i), kind, &mut rng)?;
            let lied = instance.with_valuation(i, lie)?;
            let x = solve_allocation(&lied, config)?.x_star;
            let value = program.player_values(&x)?[i];
            let pay = vcg_payment(&lied, config.rounding, i, &x, &plan.pivots[i])?;
            Ok(MisreportTrial {
                player: i,
                kind,
                margin: (values[i] - plan.expected[i]) - (value - pay),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_margin = trials.iter().map(|t| t.margin).fold(f64::INFINITY, f64::min);
    Ok(TruthfulnessAudit {
        trials,
        upper_bound: instance.grand_welfare(),
        min_margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipationAudit {
    /// `min_i E[v_i] − E[p_i]`.
    pub min_utility: f64,
    pub min_payment: f64,
    pub upper_bound: f64,
}

impl ParticipationAudit {
    pub fn passed(&self, rel: f64) -> bool {
        let floor = -rel * self.upper_bound;
        self.min_utility >= floor && self.min_payment >= floor
    }
}

/// Individual rationality and nonnegative payments, both in expectation.
pub fn audit_participation(instance: &Instance, config: &MechanismConfig) -> Result<ParticipationAudit> {
    let report = solve_allocation(instance, config)?;
    let program = ConvexProgram::new(instance.clone(), config.rounding);
    let values = program.player_values(&report.x_star)?;
    let plan = PaymentPlan::build(instance, config, &report.x_star)?;
    Ok(ParticipationAudit {
        min_utility: values
            .iter()
            .zip(&plan.expected)
            .map(|(v, p)| v - p)
            .fold(f64::INFINITY, f64::min),
        min_payment: plan.expected.iter().copied().fold(f64::INFINITY, f64::min),
        upper_bound: instance.grand_welfare(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessAudit {
    pub expected: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `max_i |mean_i − expected_i| / stderr_i` (zero where both sides are exact).
    pub max_z: f64,
}

/// Mean of `draws` independent realized payment vectors against the exact expectation.
pub fn audit_payment_estimator(
    instance: &Instance,
    config: &MechanismConfig,
    draws: usize,
    seed: u64,
) -> Result<UnbiasednessAudit> {
    let report = solve_allocation(instance, config)?;
    let plan = PaymentPlan::build(instance, config, &report.x_star)?;
    let n = instance.n();
    let mut rng = stream_rng(seed, 0);
    let (mut mean, mut m2) = (vec![0.0; n], vec![0.0; n]);
    for t in 0..draws {
        let realized = plan.sample_realized(instance, &mut rng)?;
        for i in 0..n {
            let d = realized[i] - mean[i];
            mean[i] += d / (t + 1) as f64;
            m2[i] += d * (realized[i] - mean[i]);
        }
    }
    let stderr: Vec<f64> = m2
        .iter()
        .map(|s| (s / (draws.max(2) - 1) as f64 / draws as f64).sqrt())
        .collect();
    let max_z = (0..n)
        .map(|i| {
            let err = (mean[i] - plan.expected[i]).abs();
            if err <= 1e-12 * instance.grand_welfare().max(1.0) {
                0.0
            } else {
                err / stderr[i]
            }
        })
        .fold(0.0, f64::max);
    Ok(UnbiasednessAudit {
        expected: plan.expected,
        mean,
        stderr,
        max_z,
    })
}

/// Expected welfare under `r_k^+` by enumerating every sequence of `k` draws
/// (each landing in some interval or in none) and then the cancellation branch.
pub fn rk_plus_welfare_by_enumeration(instance: &Instance, x: &FractionalSolution) -> Result<f64> {
    let (m, k, n) = (instance.m(), instance.k(), instance.n());
    let per_draw = x.draw_marginals();
    let null = 1.0 - per_draw.iter().sum::<f64>();
    let mu = cancellation_probability(n, m);
    let outcomes = m + 1;
    let singles: f64 = (0..m)
        .map(|j| instance.welfare(&ProjectSet::singleton(j)))
        .sum::<Result<f64>>()?;
    let mut total = 0.0;
    let mut picks = Vec::with_capacity(k);
    for code in 0..outcomes.pow(k as u32) {
        let (mut c, mut prob) = (code, 1.0);
        picks.clear();
        for _ in 0..k {
            let pick = c % outcomes;
            c /= outcomes;
            if pick == m {
                prob *= null;
            } else {
                prob *= per_draw[pick];
                picks.push(pick);
            }
        }
        if prob == 0.0 {
            continue;
        }
        let set = ProjectSet::new(picks.iter().copied());
        let beta = set.len() as f64 / m as f64;
        total += prob * ((1.0 - mu) * instance.welfare(&set)? + mu * beta * singles / m as f64);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityAudit {
    pub formula: f64,
    pub enumerated: f64,
    pub mu: f64,
}

impl IdentityAudit {
    pub fn difference(&self) -> f64 {
        (self.formula - self.enumerated).abs()
    }
}

/// `(1−μ)·E_{r_k}[welfare] + (μ/m²)(Σ_{j,i} v_i({j}))(Σ_j inclusion_j)` against enumeration.
pub fn audit_welfare_identity(instance: &Instance, x: &FractionalSolution) -> Result<IdentityAudit> {
    let program = ConvexProgram::new(instance.clone(), Rounding::RkPlus);
    Ok(IdentityAudit {
        formula: program.objective(x)?,
        enumerated: rk_plus_welfare_by_enumeration(instance, x)?,
        mu: program.mu(),
    })
}

/// Laurent polynomials in `e` with integer coefficients, `Σ c_t e^t`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct LaurentE(std::collections::BTreeMap<i32, i64>);

impl LaurentE {
    fn term(coef: i64, power: i32) -> Self {
        let mut p = LaurentE::default();
        p.add_term(coef, power);
        p
    }

    fn add_term(&mut self, coef: i64, power: i32) {
        let c = self.0.entry(power).or_insert(0);
        *c += coef;
        if *c == 0 {
            self.0.remove(&power);
        }
    }

    fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&p, &c) in &other.0 {
            out.add_term(c, p);
        }
        out
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = LaurentE::default();
        for (&p, &c) in &self.0 {
            for (&q, &d) in &other.0 {
                out.add_term(c * d, p + q);
            }
        }
        out
    }

    fn neg(&self) -> Self {
        LaurentE(self.0.iter().map(|(&p, &c)| (p, -c)).collect())
    }

    fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// A single monomial `c·e^t` with `c > 0` is positive.
    fn is_positive_monomial(&self) -> bool {
        self.0.len() == 1 && self.0.values().all(|&c| c > 0)
    }
}

/// Polynomials in `μ` with coefficients in `Z[e, 1/e]`.
type PolyMu = Vec<LaurentE>;

fn poly_add(a: &PolyMu, b: &PolyMu) -> PolyMu {
    (0..a.len().max(b.len()))
        .map(|i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x.add(y),
            (Some(x), None) | (None, Some(x)) => x.clone(),
            (None, None) => LaurentE::default(),
        })
        .collect()
}

fn poly_mul(a: &PolyMu, b: &PolyMu) -> PolyMu {
    let mut out = vec![LaurentE::default(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] = out[i + j].add(&x.mul(y));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionBound {
    pub n: usize,
    pub m: usize,
    /// `μ = 2^{-exponent}`; the exact branch has probability `e·μ`.
    pub exponent: u64,
    /// The bound `(1 − eμ)(1 − 1/e − μ) + eμ` in double precision (rounds to
    /// `1 − 1/e` once `μ` is tiny).
    pub bound: f64,
    /// `log2` of `bound − (1 − 1/e)`.
    pub log2_surplus: f64,
    /// Symbolic expansion of the surplus is exactly `e·μ²`.
    pub symbolic: bool,
}

/// The composed mechanism's approximation guarantee minus `1 − 1/e`,
/// expanded symbolically in `μ` and `e`: the constant and linear terms cancel
/// and the quadratic coefficient is `e`, so the surplus is `e·μ² > 0` for
/// every `n, m`.
pub fn composition_bound(n: usize, m: usize) -> CompositionBound {
    let one = LaurentE::term(1, 0);
    let e = LaurentE::term(1, 1);
    let inv_e = LaurentE::term(1, -1);
    // (1 − eμ)(1 − 1/e − μ) + eμ − (1 − 1/e)
    let a: PolyMu = vec![one.clone(), e.neg()];
    let b: PolyMu = vec![one.add(&inv_e.neg()), one.neg()];
    let c: PolyMu = vec![LaurentE::default(), e.clone()];
    let d: PolyMu = vec![one.add(&inv_e.neg()).neg()];
    let surplus = poly_add(&poly_add(&poly_mul(&a, &b), &c), &d);
    let symbolic = surplus.len() == 3
        && surplus[0].is_zero()
        && surplus[1].is_zero()
        && surplus[2] == e
        && surplus[2].is_positive_monomial();

    let exponent = cancellation_exponent(n, m);
    let mu = cancellation_probability(n, m);
    let ee = std::f64::consts::E;
    let bound = (1.0 - ee * mu) * (ONE_MINUS_INV_E - mu) + ee * mu;
    CompositionBound {
        n,
        m,
        exponent,
        bound,
        log2_surplus: ee.log2() - 2.0 * exponent as f64,
        symbolic,
    }
}

impl CompositionBound {
    /// Holds symbolically, and numerically wherever the surplus is representable.
    pub fn passed(&self) -> bool {
        // below ~2^-40 the surplus is lost in the rounding of `bound`
        let numeric = self.log2_surplus < -40.0 || self.bound >= ONE_MINUS_INV_E;
        self.symbolic && numeric
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionAudit {
    pub tv: f64,
    pub samples: usize,
    /// `max_j |Pr[j ∈ S] − (1 − (1 − x_j/k)^k)|`.
    pub marginal_error: f64,
    pub total: f64,
}

/// Exact law of `r_k(x)` against `samples` seeded draws of the sampler.
pub fn audit_distribution(
    x: &FractionalSolution,
    samples: usize,
    seed: u64,
    cap: usize,
) -> Result<DistributionAudit> {
    let exact = exact_distribution(x, cap)?;
    let mut rng = stream_rng(seed, 0);
    let draws: Vec<ProjectSet> = (0..samples).map(|_| round_k(x, &mut rng).chosen).collect();
    let empirical = ExactDistribution::empirical(x.ground(), &draws)?;
    let marginal_error = (0..x.ground())
        .map(|j| (exact.marginal(j) - inclusion_probability(x, j)).abs())
        .fold(0.0, f64::max);
    Ok(DistributionAudit {
        tv: exact.tv_distance(&empirical)?,
        samples,
        marginal_error,
        total: exact.total(),
    })
}

/// Smallest `f(tx + (1−t)y) − t f(x) − (1−t) f(y)` over random segments.
pub fn concavity_slack<R: Rng + ?Sized>(
    program: &ConvexProgram,
    segments: usize,
    rng: &mut R,
) -> Result<f64> {
    let (m, k) = (program.dim(), program.budget());
    let mut worst = f64::INFINITY;
    for _ in 0..segments {
        let x = random_point(rng, m, k);
        let y = random_point(rng, m, k);
        let t: f64 = rng.gen();
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let slack = program.value(&z)? - t * program.value(&x)? - (1.0 - t) * program.value(&y)?;
        worst = worst.min(slack);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub mechanism: MechanismConfig,
    pub misreports_per_player: usize,
    pub gradient_points: usize,
    pub hessian_points: usize,
    pub mc_samples: usize,
    pub enum_cap: usize,
    pub bf_cap: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            mechanism: MechanismConfig {
                rounding: Rounding::Rk,
                solver: SolverConfig::default().with_tol(1e-8),
            },
            misreports_per_player: 8,
            gradient_points: 3,
            hessian_points: 2,
            mc_samples: 200_000,
            enum_cap: DEFAULT_ENUM_CAP,
            bf_cap: DEFAULT_BF_CAP,
        }
    }
}

/// Tolerances used by the audit suite.
pub mod thresholds {
    pub const APPROXIMATION_SLACK: f64 = 1e-3;
    pub const GRADIENT_REL: f64 = 1e-6;
    pub const GRADIENT_STEP: f64 = 1e-5;
    pub const HESSIAN_ENTRY_REL: f64 = 1e-4;
    pub const HESSIAN_EIGEN_REL: f64 = 1e-6;
    pub const TRUTHFULNESS_REL: f64 = 1e-4;
    pub const PARTICIPATION_REL: f64 = 1e-6;
    pub const IDENTITY_ABS: f64 = 1e-9;
    pub const CONCAVITY_ABS: f64 = 1e-9;
    /// Two-sided TV allowance for the sampler check, scaled by `1/sqrt(samples)`.
    pub const TV_PER_ROOT_SAMPLE: f64 = 5.0;
}

/// Every applicable check on one instance. Checks whose caps are exceeded are noted and skipped.
pub fn audit_instance(instance: &Instance, config: &AuditConfig, seed: u64) -> Result<AuditReport> {
    use thresholds::*;
    let instance = instance.with_enum_cap(config.enum_cap);
    let mut report = AuditReport::new(Some(seed));
    report.instances.push(InstanceSummary::of(&instance));
    let at = Some(0);
    let (n, m, k) = (instance.n(), instance.m(), instance.k());
    let upper = instance.grand_welfare();
    let mech = config.mechanism;
    let mut rng = stream_rng(seed, u64::MAX);

    match audit_approximation(&instance, &mech, config.bf_cap) {
        Ok(a) => report.push(
            at,
            "approximation",
            a.ratio - (a.threshold - APPROXIMATION_SLACK),
            format!("welfare {:.9} / opt {:.9} = {:.6}", a.welfare, a.opt, a.ratio),
        ),
        Err(Error::Capacity(msg)) => report.note(at, "approximation", msg),
        Err(e) => return Err(e),
    }

    let program = ConvexProgram::new(instance.clone(), Rounding::Rk);
    for p in 0..config.gradient_points {
        let x = FractionalSolution::new(random_point(&mut rng, m, k), k)?;
        let err = gradient_relative_error(&program, &x, GRADIENT_STEP)?;
        report.push(at, "gradient", GRADIENT_REL - err, format!("point {p}: relative error {err:.3e}"));
    }

    let slack = concavity_slack(&program, 20, &mut rng)?;
    report.push(at, "concavity", slack + CONCAVITY_ABS * upper.max(1.0), format!("worst slack {slack:.3e}"));

    if k < 2 {
        report.note(at, "hessian", "k = 1: the objective is linear".into());
    } else if m > 10 {
        report.note(at, "hessian", format!("m = {m} above 10"));
    } else {
        for p in 0..config.hessian_points {
            let x = FractionalSolution::new(random_point(&mut rng, m, k), k)?;
            let h = check_welfare_hessian(&instance, &x, config.enum_cap)?;
            let entry_margin = HESSIAN_ENTRY_REL * h.scale - h.max_entry_diff;
            let eigen_margin = (HESSIAN_EIGEN_REL * h.numerical_norm - h.numerical_max_eigenvalue)
                .min(HESSIAN_EIGEN_REL * h.decomposed_norm - h.decomposed_max_eigenvalue);
            let note = if h.point_mass { " (k = 2: point mass on the empty set)" } else { "" };
            report.push(at, "hessian_decomposition", entry_margin, format!("point {p}: max entry diff {:.3e}{note}", h.max_entry_diff));
            report.push(at, "hessian_nsd", eigen_margin, format!("point {p}: max eigenvalues {:.3e} / {:.3e}", h.numerical_max_eigenvalue, h.decomposed_max_eigenvalue));
        }
    }

    if m <= 6 {
        let x = FractionalSolution::new(random_point(&mut rng, m, k), k)?;
        let d = audit_distribution(&x, config.mc_samples, seed, config.enum_cap)?;
        let tv_allowed = TV_PER_ROOT_SAMPLE / (config.mc_samples as f64).sqrt();
        report.push(at, "distribution_tv", tv_allowed - d.tv, format!("tv {:.5} with {} samples", d.tv, d.samples));
        report.push(at, "inclusion_probability", 1e-9 - d.marginal_error, format!("max error {:.3e}", d.marginal_error));
    } else {
        report.note(at, "distribution_tv", format!("m = {m} above 6"));
    }

    if n * m <= 8 {
        let x = FractionalSolution::new(random_point(&mut rng, m, k), k)?;
        let w = audit_welfare_identity(&instance, &x)?;
        report.push(at, "rk_plus_identity", IDENTITY_ABS * upper.max(1.0) - w.difference(), format!("difference {:.3e}", w.difference()));
    }

    let c = composition_bound(n, m);
    report.push(at, "composition_bound", if c.passed() { 0.0 } else { -1.0 }, format!("surplus 2^{:.1}", c.log2_surplus));

    let t = audit_truthfulness(&instance, &mech, config.misreports_per_player, seed)?;
    report.push(at, "truthfulness", t.min_margin + TRUTHFULNESS_REL * t.upper_bound, format!("{} trials, min margin {:.3e}", t.trials.len(), t.min_margin));

    let ir = audit_participation(&instance, &mech)?;
    let floor = PARTICIPATION_REL * ir.upper_bound;
    report.push(at, "individual_rationality", ir.min_utility + floor, format!("min utility {:.3e}", ir.min_utility));
    report.push(at, "nonnegative_payments", ir.min_payment + floor, format!("min payment {:.3e}", ir.min_payment));

    Ok(report)
}

/// Audits instances concurrently; the merged report keeps input order.
pub fn audit_suite(instances: &[Instance], config: &AuditConfig, seed: u64) -> Result<AuditReport> {
    let parts = instances
        .par_iter()
        .enumerate()
        .map(|(idx, inst)| audit_instance(inst, config, seed.wrapping_add(idx as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = AuditReport::new(Some(seed));
    for part in parts {
        report.merge(part);
    }
    Ok(report)
}
