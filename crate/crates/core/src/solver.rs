//! Maximizing the expected welfare of a rounding scheme over
//! `P_k = {x ∈ [0,1]^m : Σx ≤ k}`.
//!
//! The method is Frank-Wolfe with away steps. Linear maximization over `P_k`
//! is a top-k selection, the Frank-Wolfe gap `max_s ⟨∇f(x), s − x⟩` certifies
//! `f(x*) − f(x) ≤ gap` for concave `f`, and every iterate is kept as an
//! explicit convex combination of vertices so that away steps can drop weight
//! from bad vertices. After every step a Newton correction on the weights of
//! the active vertices handles faces along which `f` is nearly flat, where
//! plain Frank-Wolfe zig-zags.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lottery::{cancellation_probability, FractionalSolution, Rounding};
use crate::mechanism::Instance;
use crate::sets::ProjectSet;
use crate::valuations::hit_probability;

/// Step for the directional second differences in the face Newton step.
const NEWTON_FD_STEP: f64 = 1e-5;

/// A concave function on `P_k` with value and gradient oracles.
///
/// `value` and `gradient` take raw coordinates and may be called slightly
/// outside the polytope (finite differences at its boundary).
pub trait ConcaveObjective {
    fn dim(&self) -> usize;

    /// The `k` of `P_k`.
    fn budget(&self) -> usize;

    fn value(&self, x: &[f64]) -> Result<f64>;

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// An upper bound on `max_{P_k} f`, used to scale tolerances.
    fn upper_bound(&self) -> f64;

    /// `λ > 0` with `f(y) ≤ f(x) + ⟨∇f(x), y − x⟩ − (λ/2)‖y − x‖²` on `P_k`, if known.
    fn curvature(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the gap is at most `tol · upper_bound`.
    pub tol: f64,
    pub max_iters: usize,
    /// Backtracking factor.
    pub shrink: f64,
    /// Armijo constant.
    pub sufficient_increase: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_iters: 5000,
            shrink: 0.5,
            sufficient_increase: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(self, tol: f64) -> Self {
        SolverConfig { tol, ..self }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::input(format!("tolerance must be positive, got {}", self.tol)));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::input("line-search shrink factor must lie in (0, 1)"));
        }
        if !(self.sufficient_increase > 0.0 && self.sufficient_increase < 0.5) {
            return Err(Error::input("sufficient-increase constant must lie in (0, 1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_star: FractionalSolution,
    pub objective_value: f64,
    /// Frank-Wolfe gap at `x_star`.
    pub duality_gap: f64,
    pub iterations: usize,
    /// `duality_gap / upper_bound`.
    pub tolerance_achieved: f64,
    pub upper_bound: f64,
    pub converged: bool,
    /// Objective after each iteration (not serialized).
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Frank-Wolfe state that can be resumed at a tighter tolerance.
pub struct FrankWolfe<'a, O: ConcaveObjective + ?Sized> {
    objective: &'a O,
    config: SolverConfig,
    /// Active vertices (sorted index lists) with their convex weights.
    active: Vec<(Vec<usize>, f64)>,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    iterations: usize,
    trace: Vec<f64>,
    stalled: bool,
}

struct Probe {
    gamma: f64,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

impl<'a, O: ConcaveObjective + ?Sized> FrankWolfe<'a, O> {
    /// Starts at `x = 0`, the vertex for the empty set.
    pub fn new(objective: &'a O, config: SolverConfig) -> Result<Self> {
        config.check()?;
        let m = objective.dim();
        if objective.budget() == 0 {
            return Err(Error::input("cardinality bound k must be at least 1"));
        }
        let x = vec![0.0; m];
        let f = checked_value(objective, &x)?;
        let g = checked_gradient(objective, &x)?;
        Ok(FrankWolfe {
            objective,
            config,
            active: vec![(Vec::new(), 1.0)],
            x,
            f,
            g,
            iterations: 0,
            trace: vec![f],
            stalled: false,
        })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Top-`min(k, m)` coordinates with positive gradient, lowest index first on ties.
    fn linear_oracle(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.x.len()).collect();
        order.sort_by(|&a, &b| self.g[b].total_cmp(&self.g[a]).then(a.cmp(&b)));
        let mut s: Vec<usize> = order
            .into_iter()
            .take(self.objective.budget())
            .filter(|&j| self.g[j] > 0.0)
            .collect();
        s.sort_unstable();
        s
    }

    fn vertex_dot(&self, v: &[usize]) -> f64 {
        v.iter().map(|&j| self.g[j]).sum()
    }

    fn gap(&self) -> f64 {
        let s = self.linear_oracle();
        self.vertex_dot(&s) - dot(&self.g, &self.x)
    }

    /// Iterates until the gap is at most `tol · upper_bound` or the iteration budget runs out.
    pub fn run(&mut self, tol: f64) -> Result<SolveReport> {
        if !(tol > 0.0) {
            return Err(Error::input(format!("tolerance must be positive, got {tol}")));
        }
        let upper = self.objective.upper_bound();
        let threshold = tol * upper;
        let start = self.iterations;
        let mut gap = self.gap();
        while gap > threshold && self.iterations - start < self.config.max_iters && !self.stalled {
            self.step()?;
            self.iterations += 1;
            self.trace.push(self.f);
            gap = self.gap();
        }
        Ok(SolveReport {
            x_star: FractionalSolution::new(self.x.clone(), self.objective.budget())?,
            objective_value: self.f,
            duality_gap: gap,
            iterations: self.iterations,
            tolerance_achieved: if upper > 0.0 { gap / upper } else { 0.0 },
            upper_bound: upper,
            converged: gap <= threshold,
            trace: self.trace.clone(),
        })
    }

    fn step(&mut self) -> Result<()> {
        let s = self.linear_oracle();
        let gx = dot(&self.g, &self.x);
        let fw_gap = self.vertex_dot(&s) - gx;
        let away = if self.active.len() > 1 {
            self.active
                .iter()
                .enumerate()
                .map(|(idx, (v, _))| (idx, self.vertex_dot(v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
        } else {
            None
        };
        let away_gap = away.map_or(f64::NEG_INFINITY, |(_, val)| gx - val);

        let moved = if away_gap > fw_gap {
            self.away_step(away.unwrap().0, away_gap)? || self.fw_step(&s, fw_gap)?
        } else {
            self.fw_step(&s, fw_gap)?
                || match away {
                    Some((idx, _)) => self.away_step(idx, away_gap)?,
                    None => false,
                }
        };
        if !moved {
            self.stalled = true;
            return Ok(());
        }
        self.face_newton()
    }

    /// Newton step on the weights of the active vertices: maximizes the
    /// quadratic model of `f` on their affine hull, cut back to keep every
    /// weight nonnegative, then line-searched. The reduced Hessian comes from
    /// central differences of the gradient along vertex differences.
    fn face_newton(&mut self) -> Result<()> {
        let s = self.active.len();
        if s < 2 {
            return Ok(());
        }
        let m = self.x.len();
        let last = s - 1;
        let dirs: Vec<Vec<f64>> = (0..last)
            .map(|i| {
                let mut d = vec![0.0; m];
                for &j in &self.active[i].0 {
                    d[j] += 1.0;
                }
                for &j in &self.active[last].0 {
                    d[j] -= 1.0;
                }
                d
            })
            .collect();
        let h = NEWTON_FD_STEP;
        let mut hd = Vec::with_capacity(last);
        for d in &dirs {
            let up: Vec<f64> = self.x.iter().zip(d).map(|(x, t)| x + h * t).collect();
            let down: Vec<f64> = self.x.iter().zip(d).map(|(x, t)| x - h * t).collect();
            let gu = checked_gradient(self.objective, &up)?;
            let gd = checked_gradient(self.objective, &down)?;
            hd.push(gu.iter().zip(&gd).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<f64>>());
        }
        let neg_q = DMatrix::from_fn(last, last, |i, j| -0.5 * (dot(&dirs[i], &hd[j]) + dot(&dirs[j], &hd[i])));
        let r: Vec<f64> = dirs.iter().map(|d| dot(&self.g, d)).collect();
        let eig = SymmetricEigen::new(neg_q);
        let top = eig.eigenvalues.iter().fold(0.0f64, |a, &e| a.max(e));
        let floor = (1e-12 * top).max(f64::MIN_POSITIVE);
        let mut beta = vec![0.0; last];
        for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
            let u = eig.eigenvectors.column(idx);
            let coef = u.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / lam.max(floor);
            for (b, ui) in beta.iter_mut().zip(u.iter()) {
                *b += coef * ui;
            }
        }
        let mut dalpha = beta.clone();
        dalpha.push(-beta.iter().sum::<f64>());
        let mut dx = vec![0.0; m];
        for (b, d) in beta.iter().zip(&dirs) {
            for (t, dj) in dx.iter_mut().zip(d) {
                *t += b * dj;
            }
        }
        let slope = dot(&self.g, &dx);
        if !(slope > 0.0) || !slope.is_finite() {
            return Ok(());
        }
        let (mut gamma_max, mut blocking) = (f64::INFINITY, None);
        for (i, &da) in dalpha.iter().enumerate() {
            if da < 0.0 {
                let t = self.active[i].1 / -da;
                if t < gamma_max {
                    gamma_max = t;
                    blocking = Some(i);
                }
            }
        }
        if !gamma_max.is_finite() || gamma_max <= 0.0 {
            return Ok(());
        }
        let Some(gamma) = self.line_search(&dx, slope, gamma_max)? else {
            return Ok(());
        };
        for (i, da) in dalpha.iter().enumerate() {
            self.active[i].1 = (self.active[i].1 + gamma * da).max(0.0);
        }
        if gamma >= gamma_max {
            if let Some(i) = blocking {
                self.active[i].1 = 0.0;
            }
        }
        self.rebuild_x()
    }

    fn fw_step(&mut self, s: &[usize], slope: f64) -> Result<bool> {
        if !(slope > 0.0) {
            return Ok(false);
        }
        let mut d: Vec<f64> = self.x.iter().map(|xj| -xj).collect();
        for &j in s {
            d[j] += 1.0;
        }
        let Some(gamma) = self.line_search(&d, slope, 1.0)? else {
            return Ok(false);
        };
        if gamma >= 1.0 {
            self.active = vec![(s.to_vec(), 1.0)];
        } else {
            for (_, w) in self.active.iter_mut() {
                *w *= 1.0 - gamma;
            }
            match self.active.iter_mut().find(|(v, _)| v.as_slice() == s) {
                Some((_, w)) => *w += gamma,
                None => self.active.push((s.to_vec(), gamma)),
            }
        }
        self.rebuild_x()?;
        Ok(true)
    }

    fn away_step(&mut self, idx: usize, slope: f64) -> Result<bool> {
        if !(slope > 0.0) {
            return Ok(false);
        }
        let (a, alpha) = self.active[idx].clone();
        if alpha >= 1.0 {
            return Ok(false);
        }
        let gamma_max = alpha / (1.0 - alpha);
        let mut d = self.x.clone();
        for &j in &a {
            d[j] -= 1.0;
        }
        let Some(gamma) = self.line_search(&d, slope, gamma_max)? else {
            return Ok(false);
        };
        for (_, w) in self.active.iter_mut() {
            *w *= 1.0 + gamma;
        }
        if gamma >= gamma_max {
            self.active.remove(idx);
        } else {
            self.active[idx].1 -= gamma;
        }
        self.rebuild_x()?;
        Ok(true)
    }

    /// Steps along `d` for `γ ∈ (0, γ_max]`: brackets the root of the
    /// directional derivative (concavity makes it decreasing), then enforces
    /// sufficient increase by backtracking. Returns `None` when no step helps.
    fn line_search(&mut self, d: &[f64], slope0: f64, gamma_max: f64) -> Result<Option<f64>> {
        let f0 = self.f;
        let mut best = self.probe(d, gamma_max)?;
        if best.slope < 0.0 {
            let (mut lo, mut s_lo) = (0.0, slope0);
            let (mut hi, mut s_hi) = (gamma_max, best.slope);
            let mut lo_probe: Option<Probe> = None;
            let mut hi_probe = best;
            let mut side = 0i8;
            for _ in 0..80 {
                let width = hi - lo;
                if width <= 1e-15 * gamma_max {
                    break;
                }
                let mut t = lo + width * (s_lo / (s_lo - s_hi));
                if !(t > lo && t < hi) {
                    t = lo + 0.5 * width;
                }
                let p = self.probe(d, t)?;
                if p.slope.abs() <= 1e-14 * slope0 {
                    lo_probe = Some(p);
                    break;
                }
                if p.slope > 0.0 {
                    lo = t;
                    s_lo = p.slope;
                    lo_probe = Some(p);
                    // Illinois: damp the stale endpoint after two same-side updates
                    if side == 1 {
                        s_hi *= 0.5;
                    }
                    side = 1;
                } else {
                    hi = t;
                    s_hi = p.slope;
                    hi_probe = p;
                    if side == -1 {
                        s_lo *= 0.5;
                    }
                    side = -1;
                }
            }
            best = match lo_probe {
                Some(p) if p.f >= hi_probe.f => p,
                _ => hi_probe,
            };
        }

        let c = self.config.sufficient_increase;
        let noise = 8.0 * f64::EPSILON * f0.abs().max(1.0);
        let mut candidate = best;
        for _ in 0..60 {
            let gamma = candidate.gamma;
            if gamma <= 0.0 {
                break;
            }
            let armijo = candidate.f >= f0 + c * gamma * slope0;
            // below resolution of f the derivative still certifies an ascent step
            let flat = candidate.slope >= 0.0 && candidate.f >= f0 - noise;
            if armijo || flat {
                self.f = candidate.f;
                self.g = candidate.g;
                return Ok(Some(gamma));
            }
            candidate = self.probe(d, gamma * self.config.shrink)?;
        }
        Ok(None)
    }

    fn probe(&self, d: &[f64], gamma: f64) -> Result<Probe> {
        let y: Vec<f64> = self
            .x
            .iter()
            .zip(d)
            .map(|(xj, dj)| (xj + gamma * dj).clamp(0.0, 1.0))
            .collect();
        let f = checked_value(self.objective, &y)?;
        let g = checked_gradient(self.objective, &y)?;
        let slope = dot(&g, d);
        Ok(Probe { gamma, f, g, slope })
    }

    /// Recomputes `x` from the active set (renormalizing the weights) and refreshes `f`, `∇f`.
    fn rebuild_x(&mut self) -> Result<()> {
        self.active.retain(|(_, w)| *w > 0.0);
        let total: f64 = self.active.iter().map(|(_, w)| w).sum();
        let mut x = vec![0.0; self.x.len()];
        for (v, w) in self.active.iter_mut() {
            *w /= total;
            for &j in v.iter() {
                x[j] += *w;
            }
        }
        x.iter_mut().for_each(|xj| *xj = xj.clamp(0.0, 1.0));
        self.x = x;
        self.f = checked_value(self.objective, &self.x)?;
        self.g = checked_gradient(self.objective, &self.x)?;
        Ok(())
    }
}

fn checked_value<O: ConcaveObjective + ?Sized>(objective: &O, x: &[f64]) -> Result<f64> {
    let f = objective.value(x)?;
    if !f.is_finite() {
        return Err(Error::numeric(format!("objective is {f} at x = {x:?}")));
    }
    Ok(f)
}

fn checked_gradient<O: ConcaveObjective + ?Sized>(objective: &O, x: &[f64]) -> Result<Vec<f64>> {
    let g = objective.gradient(x)?;
    if let Some(j) = g.iter().position(|gj| !gj.is_finite()) {
        return Err(Error::numeric(format!(
            "gradient coordinate {} is {} at x = {x:?}",
            j + 1,
            g[j]
        )));
    }
    Ok(g)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs Frank-Wolfe from `x = 0` until the gap is at most `config.tol · upper_bound`.
pub fn solve<O: ConcaveObjective + ?Sized>(objective: &O, config: &SolverConfig) -> Result<SolveReport> {
    FrankWolfe::new(objective, *config)?.run(config.tol)
}

/// Central differences of `value` with step `h`.
pub fn finite_difference_gradient<O: ConcaveObjective + ?Sized>(
    objective: &O,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|j| {
            y[j] = x[j] + h;
            let up = objective.value(&y)?;
            y[j] = x[j] - h;
            let down = objective.value(&y)?;
            y[j] = x[j];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditioningParams {
    pub lambda: f64,
    pub delta: f64,
    /// Relative objective tolerance `δ²λ / (2·upper_bound)`.
    pub epsilon: f64,
}

impl ConditioningParams {
    pub fn new(lambda: f64, delta: f64, upper_bound: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Contract(format!(
                "curvature bound must be positive, got {lambda}; use the r_k^+ objective"
            )));
        }
        if !(delta > 0.0) {
            return Err(Error::input(format!("estimate radius must be positive, got {delta}")));
        }
        if !(upper_bound > 0.0) {
            return Err(Error::Contract("objective upper bound must be positive".into()));
        }
        Ok(ConditioningParams {
            lambda,
            delta,
            epsilon: delta * delta * lambda / (2.0 * upper_bound),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x: FractionalSolution,
    pub params: ConditioningParams,
    /// `sqrt(2·gap/λ)`, a bound on `‖x − x*‖₂` and hence on the ∞-norm.
    pub certified_radius: f64,
    pub report: SolveReport,
}

/// Continues `solver` until `sqrt(2·gap/λ) ≤ δ`.
pub fn refine_estimate<O: ConcaveObjective + ?Sized>(
    solver: &mut FrankWolfe<'_, O>,
    delta: f64,
) -> Result<Estimate> {
    let lambda = solver.objective.curvature().ok_or_else(|| {
        Error::Contract("no curvature bound for this objective; use the r_k^+ objective".into())
    })?;
    let params = ConditioningParams::new(lambda, delta, solver.objective.upper_bound())?;
    let report = solver.run(params.epsilon)?;
    let certified_radius = (2.0 * report.duality_gap.max(0.0) / lambda).sqrt();
    if certified_radius > delta {
        return Err(Error::numeric(format!(
            "could not certify a {delta:e}-estimate: gap {:e} after {} iterations gives radius {certified_radius:e}",
            report.duality_gap, report.iterations
        )));
    }
    Ok(Estimate {
        x: report.x_star.clone(),
        params,
        certified_radius,
        report,
    })
}

/// A point within `delta` of the maximizer, certified through the curvature bound:
/// `f(x*) − f(x) ≥ (λ/2)‖x − x*‖²`.
pub fn estimate_solution<O: ConcaveObjective + ?Sized>(
    objective: &O,
    delta: f64,
    config: &SolverConfig,
) -> Result<Estimate> {
    let mut solver = FrankWolfe::new(objective, *config)?;
    refine_estimate(&mut solver, delta)
}

/// `f(x) = offset − ‖x − c‖²`, with `λ = 2`; a test objective with a known maximizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    center: Vec<f64>,
    k: usize,
    offset: f64,
}

impl QuadraticObjective {
    /// `offset = m` keeps `f ≥ 0` on the unit cube.
    pub fn new(center: Vec<f64>, k: usize) -> Self {
        let offset = center.len() as f64;
        QuadraticObjective { center, k, offset }
    }
}

impl ConcaveObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn budget(&self) -> usize {
        self.k
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.offset - x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>())
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(x.iter().zip(&self.center).map(|(a, c)| -2.0 * (a - c)).collect())
    }

    fn upper_bound(&self) -> f64 {
        self.offset
    }

    fn curvature(&self) -> Option<f64> {
        Some(2.0)
    }
}

/// The expected-welfare program of an instance under `r_k` or `r_k^+`.
#[derive(Debug, Clone)]
pub struct ConvexProgram {
    instance: Instance,
    rounding: Rounding,
    upper: f64,
    /// `Σ_j Σ_i v_i({j})`.
    singles: f64,
    mu: f64,
}

impl ConvexProgram {
    pub fn new(instance: Instance, rounding: Rounding) -> Self {
        let upper = instance.grand_welfare();
        let singles = instance
            .valuations()
            .iter()
            .map(|v| v.singleton_values().iter().sum::<f64>())
            .sum();
        let mu = match rounding {
            Rounding::Rk => 0.0,
            Rounding::RkPlus => cancellation_probability(instance.n(), instance.m()),
        };
        ConvexProgram {
            instance,
            rounding,
            upper,
            singles,
            mu,
        }
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    /// The cancellation probability `μ` (zero for `r_k`).
    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn check(&self, x: &FractionalSolution) -> Result<()> {
        if x.ground() != self.instance.m() || x.k() != self.instance.k() {
            return Err(Error::input(format!(
                "point has m = {}, k = {}; instance has m = {}, k = {}",
                x.ground(),
                x.k(),
                self.instance.m(),
                self.instance.k()
            )));
        }
        Ok(())
    }

    /// Expected welfare of the rounding at `x`.
    pub fn objective(&self, x: &FractionalSolution) -> Result<f64> {
        self.check(x)?;
        self.value(x.x())
    }

    /// Production gradient: paired promise/no-promise lottery queries.
    pub fn gradient(&self, x: &FractionalSolution) -> Result<Vec<f64>> {
        self.check(x)?;
        ConcaveObjective::gradient(self, x.x())
    }

    /// Central-difference gradient of [`ConvexProgram::objective`].
    pub fn gradient_fd(&self, x: &FractionalSolution, h: f64) -> Result<Vec<f64>> {
        self.check(x)?;
        finite_difference_gradient(self, x.x(), h)
    }

    /// Each player's exact expected value for the rounding at `x`.
    pub fn player_values(&self, x: &FractionalSolution) -> Result<Vec<f64>> {
        self.check(x)?;
        let k = self.instance.k();
        let marginals = x.draw_marginals();
        let hits: f64 = marginals.iter().map(|&y| hit_probability(y, k)).sum();
        let m = self.instance.m() as f64;
        self.instance
            .valuations()
            .iter()
            .map(|v| {
                let base = v.expected_over_draws(&marginals, k, &ProjectSet::empty())?;
                Ok(match self.rounding {
                    Rounding::Rk => base,
                    Rounding::RkPlus => {
                        let own: f64 = v.singleton_values().iter().sum();
                        (1.0 - self.mu) * base + self.mu / (m * m) * own * hits
                    }
                })
            })
            .collect()
    }

    /// Expected welfare of `r_k` at `x` (no cancellation term).
    fn base_value(&self, x: &[f64]) -> Result<f64> {
        let k = self.instance.k();
        let marginals: Vec<f64> = x.iter().map(|xj| xj / k as f64).collect();
        let empty = ProjectSet::empty();
        self.instance
            .valuations()
            .iter()
            .map(|v| v.expected_over_draws(&marginals, k, &empty))
            .sum()
    }

    fn base_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, k) = (self.instance.m(), self.instance.k());
        let mut grad = vec![0.0; m];
        if k == 1 {
            // the (k−1)-lottery is empty: the gain of promising j is v({j})
            for v in self.instance.valuations() {
                for (g, s) in grad.iter_mut().zip(v.singleton_values()) {
                    *g += s;
                }
            }
            return Ok(grad);
        }
        let marginals: Vec<f64> = x.iter().map(|xj| xj / k as f64).collect();
        for v in self.instance.valuations() {
            for (g, gain) in grad.iter_mut().zip(v.promise_gains(&marginals, k - 1)?) {
                *g += gain;
            }
        }
        Ok(grad)
    }
}

impl ConcaveObjective for ConvexProgram {
    fn dim(&self) -> usize {
        self.instance.m()
    }

    fn budget(&self) -> usize {
        self.instance.k()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let base = self.base_value(x)?;
        Ok(match self.rounding {
            Rounding::Rk => base,
            Rounding::RkPlus => {
                let k = self.instance.k();
                let m = self.instance.m() as f64;
                let hits: f64 = x.iter().map(|xj| hit_probability(xj / k as f64, k)).sum();
                (1.0 - self.mu) * base + self.mu / (m * m) * self.singles * hits
            }
        })
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut grad = self.base_gradient(x)?;
        if self.rounding == Rounding::RkPlus {
            let k = self.instance.k();
            let m = self.instance.m() as f64;
            let scale = self.mu / (m * m) * self.singles;
            for (g, xj) in grad.iter_mut().zip(x) {
                *g = (1.0 - self.mu) * *g + scale * (1.0 - xj / k as f64).powi(k as i32 - 1);
            }
        }
        Ok(grad)
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// `(μ/m²)·Σ_i v_i([m])/e` under `r_k^+` with `k ≥ 2`; the cancellation
    /// term is linear when `k = 1`, so no bound exists there.
    fn curvature(&self) -> Option<f64> {
        let k = self.instance.k();
        if self.rounding != Rounding::RkPlus || k < 2 || self.mu == 0.0 {
            return None;
        }
        let m = self.instance.m() as f64;
        let lambda = self.mu / (m * m) * self.upper * (-1.0f64).exp();
        (lambda > 0.0).then_some(lambda)
    }
}
