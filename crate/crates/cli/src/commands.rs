use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use cpp_mechanism::io::{from_json_str, read_instance};
use cpp_mechanism::lottery::RoundingOutcome;
use cpp_mechanism::mechanism::{run_composed, run_midr, solve_allocation, stream_rng, PaymentPlan, RngTrace};
use cpp_mechanism::solver::solve as solve_program;
use cpp_mechanism::verify::{
    audit_suite, brute_force_opt, random_instance, smoke_suite, AuditConfig, GeneratorConfig,
    InstanceSummary,
};
use cpp_mechanism::{
    ConvexProgram, Error, FractionalSolution, Instance, MechanismConfig, MechanismOutcome,
    ProjectSet, Rounding, SolveReport, SolverConfig,
};

use crate::{Format, RunArgs, Suite};

const DEFAULT_TOL: f64 = 1e-6;
const AUDIT_TOL: f64 = 1e-8;
const DEFAULT_MAX_ITERS: usize = 5000;

/// 2 input, 3 capacity, 4 numeric, 1 anything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Input(_) => 2,
                Error::Capacity(_) => 3,
                Error::Numeric(_) => 4,
                Error::Contract(_) => 1,
            };
        }
    }
    1
}

fn input(msg: impl Into<String>) -> anyhow::Error {
    Error::Input(msg.into()).into()
}

fn solver_config(run: &RunArgs, default_tol: f64) -> Result<SolverConfig> {
    let mut cfg = SolverConfig {
        tol: default_tol,
        max_iters: DEFAULT_MAX_ITERS,
        ..SolverConfig::default()
    };
    if let Some(path) = &run.solver_config {
        let text = read_text(path)?;
        cfg = from_json_str(&text).with_context(|| format!("{}", path.display()))?;
    }
    if let Some(tol) = run.tol {
        cfg.tol = tol;
    }
    if let Some(iters) = run.max_iters {
        cfg.max_iters = iters;
    }
    cfg.check()?;
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_instance(run: &RunArgs) -> Result<Instance> {
    let path = run
        .instance
        .as_ref()
        .ok_or_else(|| input("--instance is required"))?;
    let mut instance = read_instance(path).with_context(|| format!("{}", path.display()))?;
    if let Some(k) = run.k {
        instance = instance.with_k(k)?;
    }
    Ok(instance.with_enum_cap(run.enum_cap))
}

fn seed(run: &RunArgs) -> u64 {
    run.seed.unwrap_or_else(|| {
        let seed = rand::random();
        eprintln!("seed: {seed} (system entropy; pass --seed {seed} to reproduce)");
        seed
    })
}

fn emit(run: &RunArgs, artifact: &impl Serialize, table: String) -> Result<()> {
    let mut json = serde_json::to_string_pretty(artifact)?;
    json.push('\n');
    if let Some(path) = &run.out {
        std::fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?;
    }
    match run.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{table}"),
    }
    Ok(())
}

fn header(out: &mut String, summary: &InstanceSummary) {
    let _ = writeln!(
        out,
        "instance  n={} m={} k={}  fingerprint {}",
        summary.n, summary.m, summary.k, summary.fingerprint
    );
}

fn fmt_x(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn solver_line(out: &mut String, report: &SolveReport) {
    let _ = writeln!(
        out,
        "solver    {} iterations, gap {:.3e}, {}",
        report.iterations,
        report.duality_gap,
        if report.converged { "converged" } else { "NOT converged" }
    );
}

#[derive(Serialize)]
struct SolveArtifact {
    instance: InstanceSummary,
    rounding: Rounding,
    solver: SolverConfig,
    report: SolveReport,
}

pub fn solve(run: &RunArgs) -> Result<bool> {
    let instance = load_instance(run)?;
    let cfg = solver_config(run, DEFAULT_TOL)?;
    let program = ConvexProgram::new(instance.clone(), run.rounding);
    let report = solve_program(&program, &cfg)?;
    if !report.converged {
        eprintln!("warning: gap {:.3e} above tolerance after {} iterations", report.duality_gap, report.iterations);
    }
    let artifact = SolveArtifact {
        instance: InstanceSummary::of(&instance),
        rounding: run.rounding,
        solver: cfg,
        report,
    };
    let mut t = String::new();
    header(&mut t, &artifact.instance);
    let _ = writeln!(t, "rounding  {}", artifact.rounding);
    let _ = writeln!(t, "x*        {}", fmt_x(artifact.report.x_star.x()));
    let _ = writeln!(t, "value     {:.9}", artifact.report.objective_value);
    let _ = writeln!(t, "upper     {:.9}", artifact.report.upper_bound);
    solver_line(&mut t, &artifact.report);
    emit(run, &artifact, t)?;
    Ok(true)
}

#[derive(Serialize)]
struct BruteForce {
    set: ProjectSet,
    welfare: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct AllocateArtifact {
    instance: InstanceSummary,
    seed: u64,
    composed: bool,
    config: MechanismConfig,
    outcome: MechanismOutcome,
    /// Absent when m exceeds the brute-force cap.
    brute_force: Option<BruteForce>,
}

fn player_table(out: &mut String, o: &MechanismOutcome) {
    let _ = writeln!(
        out,
        "{:<7} {:>14} {:>14} {:>14} {:>14}",
        "player", "E[value]", "E[payment]", "payment", "E[utility]"
    );
    for i in 0..o.payments.len() {
        let _ = writeln!(
            out,
            "{:<7} {:>14.9} {:>14.9} {:>14.9} {:>14.9}",
            i + 1,
            o.expected_values[i],
            o.expected_payments[i],
            o.payments[i],
            o.expected_values[i] - o.expected_payments[i]
        );
    }
}

pub fn allocate(run: &RunArgs, composed: bool) -> Result<bool> {
    let instance = load_instance(run)?;
    let config = MechanismConfig {
        rounding: if composed { Rounding::RkPlus } else { run.rounding },
        solver: solver_config(run, DEFAULT_TOL)?,
    };
    let seed = seed(run);
    let outcome = if composed {
        run_composed(&instance, &config.solver, run.bf_cap, seed)?
    } else {
        run_midr(&instance, &config, seed)?
    };
    let brute_force = if instance.m() <= run.bf_cap {
        let (set, welfare) = brute_force_opt(&instance, run.bf_cap)?;
        let ratio = if welfare > 0.0 { outcome.expected_welfare / welfare } else { 1.0 };
        Some(BruteForce { set, welfare, ratio })
    } else {
        None
    };
    let artifact = AllocateArtifact {
        instance: InstanceSummary::of(&instance),
        seed,
        composed,
        config,
        outcome,
        brute_force,
    };

    let o = &artifact.outcome;
    let mut t = String::new();
    header(&mut t, &artifact.instance);
    let _ = writeln!(t, "rounding  {}{}  seed {seed}", o.rounding, if composed { " (composed)" } else { "" });
    if let Some(c) = &o.rng_trace.composition {
        let branch = if c.exact_branch { "exact brute force" } else { "relaxation" };
        let _ = writeln!(t, "branch    {branch} (probability e*2^-{})", c.exponent);
    }
    let _ = writeln!(t, "chosen    {}", o.chosen);
    let _ = writeln!(t, "x*        {}", fmt_x(o.x_star.x()));
    let _ = writeln!(t, "E[welfare] {:.9}", o.expected_welfare);
    match &artifact.brute_force {
        Some(bf) => {
            let _ = writeln!(t, "OPT       {:.9} at {}, ratio {:.6}", bf.welfare, bf.set, bf.ratio);
        }
        None => {
            let _ = writeln!(t, "OPT       skipped: m = {} above --bf-cap {}", instance.m(), run.bf_cap);
        }
    }
    solver_line(&mut t, &o.solve_report);
    player_table(&mut t, o);
    emit(run, &artifact, t)?;
    Ok(true)
}

#[derive(Serialize)]
struct PaymentsArtifact {
    instance: InstanceSummary,
    seed: u64,
    config: MechanismConfig,
    x_star: FractionalSolution,
    chosen: ProjectSet,
    expected_values: Vec<f64>,
    expected_payments: Vec<f64>,
    payments: Vec<f64>,
    pivot_gaps: Vec<f64>,
    rng_trace: RngTrace,
}

pub fn payments(run: &RunArgs) -> Result<bool> {
    let instance = load_instance(run)?;
    let config = MechanismConfig {
        rounding: run.rounding,
        solver: solver_config(run, DEFAULT_TOL)?,
    };
    let seed = seed(run);
    let o = run_midr(&instance, &config, seed)?;
    let mut t = String::new();
    header(&mut t, &InstanceSummary::of(&instance));
    let _ = writeln!(t, "rounding  {}  seed {seed}", o.rounding);
    let _ = writeln!(t, "chosen    {}", o.chosen);
    player_table(&mut t, &o);
    let artifact = PaymentsArtifact {
        instance: InstanceSummary::of(&instance),
        seed,
        config,
        x_star: o.x_star,
        chosen: o.chosen,
        expected_values: o.expected_values,
        expected_payments: o.expected_payments,
        payments: o.payments,
        pivot_gaps: o.pivot_gaps,
        rng_trace: o.rng_trace,
    };
    emit(run, &artifact, t)?;
    Ok(true)
}

pub fn audit(run: &RunArgs, suite: Option<Suite>, count: usize, misreports: usize, mc_samples: usize) -> Result<bool> {
    if suite.is_some() && run.instance.is_some() {
        return Err(input("--suite and --instance are mutually exclusive"));
    }
    let seed = seed(run);
    let instances = match (suite, &run.instance) {
        (_, Some(_)) => vec![load_instance(run)?],
        (Some(Suite::Random), None) => {
            let mut rng = stream_rng(seed, 0);
            (0..count)
                .map(|_| random_instance(&mut rng, &GeneratorConfig::default()))
                .collect()
        }
        (Some(Suite::Smoke) | None, None) => smoke_suite(),
    };
    let config = AuditConfig {
        mechanism: MechanismConfig {
            rounding: run.rounding,
            solver: solver_config(run, AUDIT_TOL)?,
        },
        misreports_per_player: misreports,
        mc_samples,
        enum_cap: run.enum_cap,
        bf_cap: run.bf_cap,
        ..AuditConfig::default()
    };
    let report = audit_suite(&instances, &config, seed)?;
    let table = report.to_table();
    emit(run, &report, table)?;
    Ok(report.passed)
}

#[derive(Serialize)]
struct SupportRow {
    set: ProjectSet,
    probability: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<f64>,
}

#[derive(Serialize)]
struct DistributionArtifact {
    x: FractionalSolution,
    rounding: Rounding,
    players: usize,
    support: Vec<SupportRow>,
    total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tv: Option<f64>,
}

/// `x_star` from a solve, allocate or payments artifact.
fn x_from_artifact(path: &Path) -> Result<FractionalSolution> {
    let text = read_text(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let found = [&value["x_star"], &value["report"]["x_star"], &value["outcome"]["x_star"]]
        .into_iter()
        .find(|v| !v.is_null())
        .ok_or_else(|| input(format!("{}: no x_star field", path.display())))?;
    let x: FractionalSolution = serde_json::from_value(found.clone())
        .map_err(|e| input(format!("{}: x_star: {e}", path.display())))?;
    Ok(FractionalSolution::new(x.x().to_vec(), x.k())?)
}

pub fn distribution(
    run: &RunArgs,
    x: Option<Vec<f64>>,
    from: Option<PathBuf>,
    players: Option<usize>,
    mc: Option<usize>,
) -> Result<bool> {
    let instance = run.instance.as_ref().map(|_| load_instance(run)).transpose()?;
    let x = match (x, &from) {
        (Some(x), None) => {
            let k = run
                .k
                .or(instance.as_ref().map(Instance::k))
                .ok_or_else(|| input("--x needs --k (or --instance)"))?;
            FractionalSolution::new(x, k)?
        }
        (None, Some(path)) => x_from_artifact(path)?,
        (Some(_), Some(_)) => return Err(input("--x and --from are mutually exclusive")),
        (None, None) => return Err(input("supply the point with --x or --from")),
    };
    let players = match (players, &instance, run.rounding) {
        (Some(n), _, _) => n,
        (None, Some(inst), _) => inst.n(),
        (None, None, Rounding::Rk) => 1,
        (None, None, Rounding::RkPlus) => {
            return Err(input("rkplus needs the number of players: pass --players or --instance"))
        }
    };
    if players == 0 {
        return Err(input("--players must be positive"));
    }
    let exact = run.rounding.exact_distribution(&x, players, run.enum_cap)?;
    let mut support: Vec<(ProjectSet, f64)> = exact.support().collect();
    support.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));

    let (seed, counts) = match mc {
        Some(samples) => {
            let seed = seed(run);
            let mut rng = stream_rng(seed, 0);
            let mut counts = std::collections::BTreeMap::<ProjectSet, usize>::new();
            for _ in 0..samples {
                let RoundingOutcome { chosen, .. } = run.rounding.sample(&x, players, &mut rng)?;
                *counts.entry(chosen).or_default() += 1;
            }
            (Some(seed), Some(counts))
        }
        None => (None, None),
    };
    let freq = |s: &ProjectSet| {
        counts
            .as_ref()
            .map(|c| c.get(s).copied().unwrap_or(0) as f64 / mc.unwrap_or(1) as f64)
    };
    let tv = counts.as_ref().map(|c| {
        let mut tv: f64 = support.iter().map(|(s, p)| (p - freq(s).unwrap_or(0.0)).abs()).sum();
        tv += c
            .iter()
            .filter(|(s, _)| exact.prob(s) == 0.0)
            .map(|(_, &n)| n as f64 / mc.unwrap_or(1) as f64)
            .sum::<f64>();
        tv / 2.0
    });
    let rows: Vec<SupportRow> = support
        .iter()
        .map(|(s, p)| SupportRow {
            set: s.clone(),
            probability: *p,
            monte_carlo: freq(s),
        })
        .collect();
    let total = exact.total();

    let mut t = String::new();
    let _ = writeln!(t, "x = {}  k = {}  rounding {}", fmt_x(x.x()), x.k(), run.rounding);
    match mc {
        Some(samples) => {
            let _ = writeln!(t, "{:<16} {:>13} {:>13}", "set", "probability", format!("mc ({samples})"));
        }
        None => {
            let _ = writeln!(t, "{:<16} {:>13}", "set", "probability");
        }
    }
    for row in &rows {
        let _ = write!(t, "{:<16} {:>13.9}", row.set.to_string(), row.probability);
        if let Some(f) = row.monte_carlo {
            let _ = write!(t, " {f:>13.9}");
        }
        t.push('\n');
    }
    let _ = writeln!(t, "{:<16} {:>13.9}", "sum", total);
    if let Some(tv) = tv {
        let _ = writeln!(t, "total variation {tv:.6}");
    }
    let artifact = DistributionArtifact {
        x,
        rounding: run.rounding,
        players,
        support: rows,
        total,
        mc_samples: mc,
        seed,
        tv,
    };
    emit(run, &artifact, t)?;
    Ok(true)
}

#[derive(Serialize)]
struct BenchRow {
    m: usize,
    instances: usize,
    mean_solve_ms: f64,
    mean_payments_ms: f64,
    mean_iterations: f64,
    max_relative_gap: f64,
}

#[derive(Serialize)]
struct BenchArtifact {
    seed: u64,
    rounding: Rounding,
    solver: SolverConfig,
    /// Wall-clock columns vary between runs; the instances do not.
    rows: Vec<BenchRow>,
}

pub fn bench(run: &RunArgs, count: usize, max_m: usize) -> Result<bool> {
    if count == 0 || max_m < 2 {
        return Err(input("bench needs --count >= 1 and --max-m >= 2"));
    }
    let seed = seed(run);
    let config = MechanismConfig {
        rounding: run.rounding,
        solver: solver_config(run, DEFAULT_TOL)?,
    };
    let mut rng = stream_rng(seed, 0);
    let mut rows = Vec::new();
    for m in (2..=max_m).step_by(2) {
        let gen = GeneratorConfig {
            min_m: m,
            max_m: m,
            ..GeneratorConfig::default()
        };
        let (mut solve_ms, mut pay_ms, mut iters, mut gap) = (0.0, 0.0, 0.0, 0.0f64);
        for _ in 0..count {
            let instance = random_instance(&mut rng, &gen).with_enum_cap(run.enum_cap);
            let start = Instant::now();
            let report = solve_allocation(&instance, &config)?;
            solve_ms += start.elapsed().as_secs_f64() * 1e3;
            let start = Instant::now();
            PaymentPlan::build(&instance, &config, &report.x_star)?;
            pay_ms += start.elapsed().as_secs_f64() * 1e3;
            iters += report.iterations as f64;
            gap = gap.max(report.duality_gap / report.upper_bound.max(f64::MIN_POSITIVE));
        }
        let c = count as f64;
        rows.push(BenchRow {
            m,
            instances: count,
            mean_solve_ms: solve_ms / c,
            mean_payments_ms: pay_ms / c,
            mean_iterations: iters / c,
            max_relative_gap: gap,
        });
    }
    let mut t = String::new();
    let _ = writeln!(t, "rounding {}  tol {:e}  seed {seed}", config.rounding, config.solver.tol);
    let _ = writeln!(
        t,
        "{:>4} {:>6} {:>12} {:>14} {:>12} {:>12}",
        "m", "count", "solve ms", "payments ms", "iterations", "max gap"
    );
    for r in &rows {
        let _ = writeln!(
            t,
            "{:>4} {:>6} {:>12.3} {:>14.3} {:>12.1} {:>12.2e}",
            r.m, r.instances, r.mean_solve_ms, r.mean_payments_ms, r.mean_iterations, r.max_relative_gap
        );
    }
    let artifact = BenchArtifact {
        seed,
        rounding: config.rounding,
        solver: config.solver,
        rows,
    };
    emit(run, &artifact, t)?;
    Ok(true)
}
