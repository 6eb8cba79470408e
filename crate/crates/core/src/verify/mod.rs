//! Independent checks of the mechanism's guarantees on small instances:
//! brute-force optima, discrete and numerical Hessians, and the audits built
//! on them.

use std::collections::HashMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lottery::{draw_distribution, FractionalSolution};
use crate::mechanism::Instance;
use crate::sets::{iter_bits, ProjectSet};
use crate::valuations::MrsValuation;

mod audit;
mod generate;

pub use audit::*;
pub use generate::*;

/// Default cap on `m` for exhaustive search.
pub const DEFAULT_BF_CAP: usize = 24;

/// Best set of size at most `k`; among equal welfare the lexicographically
/// smallest sorted index list wins.
pub fn brute_force_opt(instance: &Instance, cap: usize) -> Result<(ProjectSet, f64)> {
    let (m, k) = (instance.m(), instance.k());
    if m > cap || m >= 63 {
        return Err(Error::capacity(format!(
            "brute force over 2^{m} subsets exceeds the cap m <= {cap}"
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut projects = Vec::with_capacity(k);
    for mask in 0..1u64 << m {
        if mask.count_ones() as usize > k {
            continue;
        }
        projects.clear();
        projects.extend(iter_bits(mask));
        let welfare: f64 = instance
            .valuations()
            .iter()
            .map(|v| v.value_of(&projects))
            .sum();
        let better = match &best {
            None => true,
            Some((set, w)) => welfare > *w || (welfare == *w && projects < *set),
        };
        if better {
            best = Some((projects.clone(), welfare));
        }
    }
    let (set, welfare) = best.expect("the empty set is always feasible");
    Ok((ProjectSet::new(set), welfare))
}

/// `H(i,j) = v(S∪{i,j}) − v(S∪{i}) − v(S∪{j}) + v(S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHessian {
    pub base: ProjectSet,
    pub matrix: DMatrix<f64>,
}

impl DiscreteHessian {
    pub fn max_eigenvalue(&self) -> f64 {
        max_eigenvalue(&self.matrix)
    }
}

pub fn discrete_hessian(v: &MrsValuation, base: &ProjectSet) -> Result<DiscreteHessian> {
    let m = v.ground();
    base.check(m)?;
    let mut memo: HashMap<ProjectSet, f64> = HashMap::new();
    let mut value = |s: ProjectSet| *memo.entry(s).or_insert_with_key(|s| v.value_of(s.indices()));
    let v_s = value(base.clone());
    let singles: Vec<f64> = (0..m).map(|j| value(base.with(j))).collect();
    let mut matrix = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let h = value(base.with(i).with(j)) - singles[i] - singles[j] + v_s;
            matrix[(i, j)] = h;
            matrix[(j, i)] = h;
        }
    }
    Ok(DiscreteHessian {
        base: base.clone(),
        matrix,
    })
}

/// Largest eigenvalue of a symmetric matrix (`0` for the empty matrix).
pub fn max_eigenvalue(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(matrix.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(matrix: &DMatrix<f64>) -> f64 {
    if matrix.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(matrix.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |acc, e| acc.max(e.abs()))
}

/// Central second differences `[f(x+hᵢ+hⱼ) − f(x+hᵢ−hⱼ) − f(x−hᵢ+hⱼ) + f(x−hᵢ−hⱼ)] / 4h²`.
pub fn numerical_hessian(
    f: impl Fn(&[f64]) -> Result<f64>,
    x: &[f64],
    h: f64,
) -> Result<DMatrix<f64>> {
    let m = x.len();
    let mut y = x.to_vec();
    let mut at = |di: (usize, f64), dj: (usize, f64)| -> Result<f64> {
        y.copy_from_slice(x);
        y[di.0] += di.1;
        y[dj.0] += dj.1;
        f(&y)
    };
    let mut matrix = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let value = (at((i, h), (j, h))? - at((i, h), (j, -h))? - at((i, -h), (j, h))?
                + at((i, -h), (j, -h))?)
                / (4.0 * h * h);
            matrix[(i, j)] = value;
            matrix[(j, i)] = value;
        }
    }
    Ok(matrix)
}

/// `(k−1)/k · Σ_S Pr[D_{k−2}(x/k) = S] · H_S`, the Hessian of
/// `x ↦ E_{S∼r_k(x)}[v(S)]` assembled from discrete Hessians. The second value
/// flags `k = 2`, where the `(k−2)`-draw lottery is the point mass on `∅`.
pub fn lottery_hessian(
    v: &MrsValuation,
    x: &FractionalSolution,
    cap: usize,
) -> Result<(DMatrix<f64>, bool)> {
    let (m, k) = (x.ground(), x.k());
    if k < 2 {
        return Err(Error::input("the Hessian decomposition needs k >= 2"));
    }
    let dist = draw_distribution(&x.draw_marginals(), k - 2, cap)?;
    let mut total = DMatrix::zeros(m, m);
    for (s, p) in dist.support() {
        total += discrete_hessian(v, &s)?.matrix * p;
    }
    total *= (k - 1) as f64 / k as f64;
    Ok((total, k == 2))
}

/// Numerical versus decomposed Hessian at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianCheck {
    pub max_entry_diff: f64,
    pub scale: f64,
    pub numerical_max_eigenvalue: f64,
    pub numerical_norm: f64,
    pub decomposed_max_eigenvalue: f64,
    pub decomposed_norm: f64,
    /// `k = 2`: the decomposition used the point mass on `∅`.
    pub point_mass: bool,
}

impl HessianCheck {
    pub fn entries_agree(&self, rel: f64) -> bool {
        self.max_entry_diff <= rel * self.scale
    }

    /// Max eigenvalue of both matrices at most `rel` times their spectral norm.
    pub fn negative_semidefinite(&self, rel: f64) -> bool {
        self.numerical_max_eigenvalue <= rel * self.numerical_norm
            && self.decomposed_max_eigenvalue <= rel * self.decomposed_norm
    }
}

/// Step for the numerical Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

fn compare_hessians(numerical: DMatrix<f64>, decomposed: DMatrix<f64>, scale: f64, point_mass: bool) -> HessianCheck {
    HessianCheck {
        max_entry_diff: (&numerical - &decomposed).abs().max(),
        scale,
        numerical_max_eigenvalue: max_eigenvalue(&numerical),
        numerical_norm: spectral_norm(&numerical),
        decomposed_max_eigenvalue: max_eigenvalue(&decomposed),
        decomposed_norm: spectral_norm(&decomposed),
        point_mass,
    }
}

/// Hessian of `G(x) = E_{S∼r_k(x)}[v(S)]` two ways: second differences of the
/// lottery-value oracle, and the discrete-Hessian decomposition.
pub fn check_hessian_decomposition(
    v: &MrsValuation,
    x: &FractionalSolution,
    cap: usize,
) -> Result<HessianCheck> {
    let k = x.k();
    let empty = ProjectSet::empty();
    let g = |y: &[f64]| {
        let marginals: Vec<f64> = y.iter().map(|t| t / k as f64).collect();
        v.expected_over_draws(&marginals, k, &empty)
    };
    let numerical = numerical_hessian(g, x.x(), HESSIAN_STEP)?;
    let (decomposed, point_mass) = lottery_hessian(v, x, cap)?;
    Ok(compare_hessians(numerical, decomposed, v.grand_value(), point_mass))
}

/// The same comparison for the welfare objective `Σ_i G^{v_i}`.
pub fn check_welfare_hessian(
    instance: &Instance,
    x: &FractionalSolution,
    cap: usize,
) -> Result<HessianCheck> {
    use crate::solver::{ConcaveObjective, ConvexProgram};
    let program = ConvexProgram::new(instance.clone(), crate::lottery::Rounding::Rk);
    let numerical = numerical_hessian(|y| program.value(y), x.x(), HESSIAN_STEP)?;
    let m = instance.m();
    let mut decomposed = DMatrix::zeros(m, m);
    let mut point_mass = false;
    for v in instance.valuations() {
        let (h, pm) = lottery_hessian(v, x, cap)?;
        decomposed += h;
        point_mass = pm;
    }
    Ok(compare_hessians(numerical, decomposed, instance.grand_welfare(), point_mass))
}

#[cfg(test)]
mod tests;
