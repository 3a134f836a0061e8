//! Strict dissipation inequalities along equilibrium pairs.
//!
//! With supply rate `s(x, u) = ℓ(x, u) − ℓ(x_s, u_s)` (population cost) and
//! storage `Λ`, a step `(x_k, u_k) → x_{k+1}` satisfies the inequality with
//! margin `α(r) = c·r²` when
//!
//! ```text
//!     Λ(x_{k+1}) − Λ(x_k) ≤ s(x_k, u_k) − c‖(x_k − x_s, u_k − u_s)‖².
//! ```
//!
//! Only certified equilibrium pairs are checked, never arbitrary feasible
//! trajectories.

use alloc::vec::Vec;

use libm::sqrt;

use crate::game::LqGame;
use crate::gnep::{solve_gne, GnePair, SolverOptions};
use crate::linalg::{min_sym_eigenvalue, Matrix, Vector};
use crate::qp::{solve_qp, QpProblem, QpStatus, ToleranceSet};
use crate::steady::SteadyStateGne;
use crate::{Error, Result};

/// Deviations below this norm are treated as sitting on the steady state.
const ZERO_DEVIATION: f64 = 1e-9;
const SLACK_TOL: f64 = 1e-9;

/// `Λ(x) = pᵀx + ½(x − x_c)ᵀS(x − x_c) + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct StorageCandidate {
    pub linear: Vector,
    pub quadratic: Option<Matrix>,
    pub center: Vector,
    pub offset: f64,
}

impl StorageCandidate {
    pub fn linear(p: Vector) -> Self {
        let n = p.len();
        Self {
            linear: p,
            quadratic: None,
            center: Vector::zeros(n),
            offset: 0.0,
        }
    }

    /// Linear storage with gradient `−Σᵥ λ_sᵛ`.
    pub fn seeded(ss: &SteadyStateGne) -> Self {
        Self {
            center: ss.x_s.clone(),
            ..Self::linear(-ss.lambda_sum())
        }
    }

    /// Adds a quadratic term centred at the steady state.
    pub fn with_quadratic(mut self, s: Matrix, center: Vector) -> Self {
        self.quadratic = Some(s);
        self.center = center;
        self
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let mut v = self.linear.dot(x) + self.offset;
        if let Some(s) = &self.quadratic {
            let d = x - &self.center;
            v += 0.5 * d.dot(&(s * &d));
        }
        v
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match &self.quadratic {
            Some(s) => &self.linear + 0.5 * (s + s.transpose()) * (x - &self.center),
            None => self.linear.clone(),
        }
    }

    /// Whether Λ is bounded below on the state set cut out by the game's
    /// state-only shared rows.
    pub fn bounded_below(&self, game: &LqGame) -> Result<bool> {
        let n = game.n_x();
        if self.linear.len() != n || self.center.len() != n {
            return Err(Error::DimensionMismatch(
                "storage does not match the state dimension".into(),
            ));
        }
        if let Some(s) = &self.quadratic {
            if s.shape() != (n, n) || (s - s.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "quadratic storage term must be symmetric".into(),
                ));
            }
        }
        let rows: Vec<usize> = (0..game.shared_rows()).filter(|&j| game.is_state_only_row(j)).collect();
        let cx = game.c_x();
        let mut f_mat = Matrix::zeros(rows.len(), n);
        let mut f_vec = Vector::zeros(rows.len());
        for (i, &j) in rows.iter().enumerate() {
            f_mat.row_mut(i).copy_from(&cx.row(j));
            f_vec[i] = game.d_shared[j];
        }
        let lp = |h: Matrix, q: Vector| {
            let p = QpProblem {
                h,
                q,
                e_mat: Matrix::zeros(0, n),
                e_vec: Vector::zeros(0),
                f_mat: f_mat.clone(),
                f_vec: f_vec.clone(),
            };
            solve_qp(&p, &ToleranceSet::default()).map(|s| s.status)
        };
        // A bounded state set makes every continuous Λ bounded below.
        let mut bounded_set = true;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut q = Vector::zeros(n);
                q[i] = sign;
                if lp(Matrix::zeros(n, n), q)? != QpStatus::Optimal {
                    bounded_set = false;
                }
            }
        }
        if bounded_set {
            return Ok(true);
        }
        let s = self.quadratic.clone().unwrap_or_else(|| Matrix::zeros(n, n));
        if min_sym_eigenvalue(&s) < -1e-12 {
            return Ok(false);
        }
        let q = &self.linear - &s * &self.center;
        Ok(lp(s, q)? == QpStatus::Optimal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Verdict {
    StrictlyDissipative(f64),
    DissipativeOnly,
    Violated,
}

/// Worst point of a check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstPoint {
    pub pair: usize,
    pub k: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub alpha_coeff: f64,
    /// Minimum of `s − c r² − ΔΛ` over all points, with `c = alpha_coeff`.
    pub min_slack: f64,
    /// Minimum of `s − ΔΛ`, the margin-free inequality.
    pub min_plain_slack: f64,
    pub worst: Option<WorstPoint>,
    /// Per pair, `Σ_k [−s(x_k, u_k) + c r_k²]` over the whole horizon.
    pub available_storage_partial: Vec<f64>,
    pub verdict: Verdict,
}

fn deviation_sq(ss: &SteadyStateGne, x: &Vector, u: &Vector) -> f64 {
    (x - &ss.x_s).norm_squared() + (u - &ss.u_s).norm_squared()
}

/// Supply rate `ℓ(x, u) − ℓ(x_s, u_s)`.
pub fn supply_rate(game: &LqGame, ss: &SteadyStateGne, x: &Vector, u: &Vector) -> f64 {
    game.population_cost(x, u) - ss.population_cost(game)
}

/// `s − ΔΛ` at every stage of `pair`.
fn plain_slacks(game: &LqGame, ss: &SteadyStateGne, storage: &StorageCandidate, pair: &GnePair) -> Vec<(f64, f64)> {
    pair.traj
        .u
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let x = &pair.traj.x[k];
            let next = game.step(x, u);
            let slack = supply_rate(game, ss, x, u) - storage.value(&next) + storage.value(x);
            (slack, deviation_sq(ss, x, u))
        })
        .collect()
}

/// Pointwise check of the strict dissipation inequality along `pairs`.
pub fn check_sdi(
    game: &LqGame,
    ss: &SteadyStateGne,
    storage: &StorageCandidate,
    pairs: &[GnePair],
) -> DissipativityReport {
    let per_pair: Vec<Vec<(f64, f64)>> = pairs.iter().map(|p| plain_slacks(game, ss, storage, p)).collect();
    let mut ratio = f64::INFINITY;
    let mut min_plain = f64::INFINITY;
    for points in &per_pair {
        for &(slack, r2) in points {
            min_plain = min_plain.min(slack);
            if sqrt(r2) > ZERO_DEVIATION {
                ratio = ratio.min(slack / r2);
            }
        }
    }
    let alpha_coeff = if ratio.is_finite() { ratio.max(0.0) } else { 0.0 };
    let mut min_slack = f64::INFINITY;
    let mut worst = None;
    let mut partial = Vec::with_capacity(pairs.len());
    for (i, points) in per_pair.iter().enumerate() {
        let mut sum = 0.0;
        for (k, &(slack, r2)) in points.iter().enumerate() {
            let s = slack - alpha_coeff * r2;
            if s < min_slack {
                min_slack = s;
                worst = Some(WorstPoint { pair: i, k, slack: s });
            }
            let x = &pairs[i].traj.x[k];
            let u = &pairs[i].traj.u[k];
            sum += -supply_rate(game, ss, x, u) + alpha_coeff * r2;
        }
        partial.push(sum);
    }
    if !min_slack.is_finite() {
        min_slack = 0.0;
        min_plain = 0.0;
    }
    let verdict = if alpha_coeff > 0.0 && min_slack >= -SLACK_TOL {
        Verdict::StrictlyDissipative(alpha_coeff)
    } else if min_plain >= -SLACK_TOL {
        Verdict::DissipativeOnly
    } else {
        Verdict::Violated
    };
    DissipativityReport {
        alpha_coeff,
        min_slack,
        min_plain_slack: min_plain,
        worst,
        available_storage_partial: partial,
        verdict,
    }
}

/// Difference between the summed per-step slacks and the telescoped form
/// `J_N − N·ℓ(x_s, u_s) + Λ(x_0) − Λ(x_N)`, where `J_N` is the running
/// population cost.
pub fn telescoping_residual(game: &LqGame, ss: &SteadyStateGne, storage: &StorageCandidate, pair: &GnePair) -> f64 {
    let summed: f64 = plain_slacks(game, ss, storage, pair).iter().map(|(s, _)| s).sum();
    let horizon = pair.traj.horizon();
    let telescoped = pair.traj.population_cost_sum(game) - horizon as f64 * ss.population_cost(game)
        + storage.value(&pair.traj.x[0])
        - storage.value(&pair.traj.x[horizon]);
    (summed - telescoped).abs()
}

/// Quadratic storages `S = σ·I` centred at `x_s` on a grid of σ; returns the
/// candidate whose report has the largest margin (ties: first in the grid),
/// ranked by verdict and then by `min_plain_slack`.
pub fn fit_quadratic_storage(
    game: &LqGame,
    ss: &SteadyStateGne,
    base: &StorageCandidate,
    grid: &[f64],
    pairs: &[GnePair],
) -> Option<(StorageCandidate, DissipativityReport)> {
    let n = game.n_x();
    let score = |r: &DissipativityReport| match r.verdict {
        Verdict::StrictlyDissipative(c) => (2, c),
        Verdict::DissipativeOnly => (1, r.min_plain_slack),
        Verdict::Violated => (0, r.min_plain_slack),
    };
    let mut best: Option<(StorageCandidate, DissipativityReport)> = None;
    for &sigma in grid {
        let cand = base
            .clone()
            .with_quadratic(Matrix::identity(n, n) * sigma, ss.x_s.clone());
        let report = check_sdi(game, ss, &cand, pairs);
        let better = best.as_ref().is_none_or(|(_, b)| {
            let (a, b) = (score(&report), score(b));
            a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
        });
        if better {
            best = Some((cand, report));
        }
    }
    best
}

/// Available-storage estimate for one initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailableStorage {
    pub x0: Vector,
    pub horizons: Vec<usize>,
    /// `Σ_{k<N} [−s(x_k, u_k) + c r_k²]` per horizon.
    pub partial_sums: Vec<f64>,
    pub running_max: Vec<f64>,
    pub estimate: f64,
    /// The running maximum stopped growing before the largest horizon.
    pub bounded: bool,
}

pub fn available_storage(
    game: &LqGame,
    ss: &SteadyStateGne,
    alpha_coeff: f64,
    horizons: &[usize],
    x0s: &[Vector],
    opts: &SolverOptions,
) -> Result<Vec<AvailableStorage>> {
    let mut out = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        let mut sums = Vec::with_capacity(horizons.len());
        for &n in horizons {
            let pair = solve_gne(&game.with_start(n, x0.clone()), opts)?;
            let sum: f64 = pair
                .traj
                .u
                .iter()
                .enumerate()
                .map(|(k, u)| {
                    let x = &pair.traj.x[k];
                    -supply_rate(game, ss, x, u) + alpha_coeff * deviation_sq(ss, x, u)
                })
                .sum();
            sums.push(sum);
        }
        let running_max: Vec<f64> = sums
            .iter()
            .scan(f64::NEG_INFINITY, |m, &s| {
                *m = m.max(s);
                Some(*m)
            })
            .collect();
        let estimate = running_max.last().copied().unwrap_or(f64::NEG_INFINITY);
        let bounded =
            running_max.len() >= 2 && running_max[running_max.len() - 1] <= running_max[running_max.len() - 2] + 1e-9;
        out.push(AvailableStorage {
            x0: x0.clone(),
            horizons: horizons.to_vec(),
            partial_sums: sums,
            running_max,
            estimate,
            bounded,
        });
    }
    Ok(out)
}

/// Average-cost gaps for one initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalOperation {
    pub x0: Vector,
    pub horizons: Vec<usize>,
    /// `Σ_{k<N} ℓ(x_k, u_k)/N − ℓ(x_s, u_s)`.
    pub gaps: Vec<f64>,
    pub pass: bool,
}

/// Gap tolerance of the optimal-operation verdict.
pub const GAP_TOL: f64 = 1e-6;

pub fn check_optimal_operation(
    game: &LqGame,
    ss: &SteadyStateGne,
    horizons: &[usize],
    x0s: &[Vector],
    opts: &SolverOptions,
) -> Result<Vec<OptimalOperation>> {
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("horizons must be increasing".into()));
    }
    let cost_s = ss.population_cost(game);
    let mut out = Vec::with_capacity(x0s.len());
    for x0 in x0s {
        let mut gaps = Vec::with_capacity(horizons.len());
        for &n in horizons {
            let pair = solve_gne(&game.with_start(n, x0.clone()), opts)?;
            gaps.push(pair.traj.population_cost_sum(game) / n as f64 - cost_s);
        }
        let nonnegative = gaps.iter().all(|&g| g >= -GAP_TOL);
        let decreasing = gaps.windows(2).all(|w| w[1] <= w[0] + GAP_TOL * 1e-3);
        out.push(OptimalOperation {
            x0: x0.clone(),
            horizons: horizons.to_vec(),
            pass: nonnegative && decreasing,
            gaps,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady::solve_steady_state;
    use crate::Trajectory;
    use alloc::vec;

    fn constant_pair(ss: &SteadyStateGne, n: usize) -> GnePair {
        GnePair {
            traj: Trajectory::constant(&ss.x_s, &ss.u_s, n),
            duals: vec![],
            epsilon: 0.0,
            residual: Default::default(),
            solver_meta: Default::default(),
        }
    }

    #[test]
    fn steady_pair_has_zero_slack_and_no_margin_effect() {
        let g = LqGame::example_eq26(10, 1.0);
        let ss = solve_steady_state(&g).unwrap();
        let pair = constant_pair(&ss, 10);
        let r = check_sdi(&g, &ss, &StorageCandidate::seeded(&ss), &[pair]);
        assert!(r.min_slack.abs() < 1e-12);
        assert_eq!(r.alpha_coeff, 0.0);
    }

    #[test]
    fn seeded_storage_is_bounded_below_on_state_box() {
        let g = LqGame::example_eq26(10, 1.0);
        let ss = solve_steady_state(&g).unwrap();
        assert!(StorageCandidate::seeded(&ss).bounded_below(&g).unwrap());
        // Λ decreases in x, so only the upper bound x ≤ 1 matters.
        let mut no_lower = g.clone();
        no_lower.c_shared.row_mut(1).fill(0.0);
        assert!(StorageCandidate::seeded(&ss).bounded_below(&no_lower).unwrap());
        let mut no_upper = g.clone();
        no_upper.c_shared.row_mut(0).fill(0.0);
        assert!(!StorageCandidate::seeded(&ss).bounded_below(&no_upper).unwrap());
    }

    #[test]
    fn telescoping_is_exact_for_arbitrary_storage() {
        let g = LqGame::example_eq26(12, 1.0);
        let ss = solve_steady_state(&g).unwrap();
        let pair = solve_gne(&g, &SolverOptions::default()).unwrap();
        let st = StorageCandidate::linear(Vector::from_element(1, 0.7))
            .with_quadratic(Matrix::from_element(1, 1, 3.0), ss.x_s.clone());
        assert!(telescoping_residual(&g, &ss, &st, &pair) < 1e-10);
    }
}
