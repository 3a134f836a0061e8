//! Measure-turnpike statistics of equilibrium trajectories.

use alloc::vec::Vec;

use crate::game::{LqGame, Trajectory};
use crate::gnep::{solve_gne, GnePair, SolverOptions};
use crate::linalg::Vector;
use crate::steady::SteadyStateGne;
use crate::{Error, Result};

/// Default ball radii for sweeps.
pub const DEFAULT_EPS_GRID: [f64; 4] = [0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct TurnpikeReport {
    pub epsilon: f64,
    pub horizon: usize,
    /// Number of `k < N` with `‖x_k − x_s‖ ≤ ε`.
    pub q_eps: usize,
    pub outside_count: usize,
    /// First `k ≤ N` inside the ball.
    pub entry_index: Option<usize>,
    /// Last `k` inside the ball before the first exit after entry, `N` if the
    /// trajectory never leaves.
    pub leaving_index: Option<usize>,
    /// `‖x_k − x_s‖` for `k = 0..=N`.
    pub state_deviation: Vec<f64>,
    /// `‖u_k − u_s‖` for `k = 0..N`.
    pub input_deviation: Vec<f64>,
}

impl TurnpikeReport {
    /// `max_{k ≥ entry} ‖x_k − x_s‖`, or the overall maximum when the ball
    /// is never reached.
    pub fn deviation_after_entry(&self) -> f64 {
        let start = self.entry_index.unwrap_or(0);
        self.state_deviation[start..].iter().copied().fold(0.0, f64::max)
    }
}

pub fn measure_turnpike(traj: &Trajectory, ss: &SteadyStateGne, eps: f64) -> Result<TurnpikeReport> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let horizon = traj.horizon();
    let state_deviation: Vec<f64> = traj.x.iter().map(|x| (x - &ss.x_s).norm()).collect();
    let input_deviation = traj.u.iter().map(|u| (u - &ss.u_s).norm()).collect();
    let q_eps = state_deviation[..horizon].iter().filter(|&&d| d <= eps).count();
    let entry_index = state_deviation.iter().position(|&d| d <= eps);
    let leaving_index = entry_index.map(|entry| {
        state_deviation[entry..]
            .iter()
            .position(|&d| d > eps)
            .map_or(horizon, |off| entry + off - 1)
    });
    Ok(TurnpikeReport {
        epsilon: eps,
        horizon,
        q_eps,
        outside_count: horizon - q_eps,
        entry_index,
        leaving_index,
        state_deviation,
        input_deviation,
    })
}

/// One `(N, x0)` cell of a sweep. Solver failures are recorded, not raised.
#[derive(Debug)]
pub struct SweepEntry {
    pub horizon: usize,
    pub x0: Vector,
    pub outcome: core::result::Result<(GnePair, TurnpikeReport), Error>,
}

/// Solves the game for every `(N, x0)` pair and measures the turnpike.
pub fn horizon_sweep(
    game: &LqGame,
    ss: &SteadyStateGne,
    horizons: &[usize],
    x0s: &[Vector],
    eps: f64,
    opts: &SolverOptions,
) -> Result<Vec<SweepEntry>> {
    if horizons.contains(&0) {
        return Err(Error::InvalidArgument("horizons must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(horizons.len() * x0s.len());
    for x0 in x0s {
        for &horizon in horizons {
            let g = game.with_start(horizon, x0.clone());
            let outcome = solve_gne(&g, opts).and_then(|pair| {
                let report = measure_turnpike(&pair.traj, ss, eps)?;
                Ok((pair, report))
            });
            if let Err(e) = &outcome {
                log::info!("sweep: N = {horizon}, x0 = {:?}: {e}", x0.as_slice());
            }
            out.push(SweepEntry {
                horizon,
                x0: x0.clone(),
                outcome,
            });
        }
    }
    Ok(out)
}

/// Empirical constant of the turnpike bound with α(r) = c·r²:
/// `sup outside_count · c · ε²` over the reports.
pub fn turnpike_constant(reports: &[&TurnpikeReport], alpha_coeff: f64) -> f64 {
    reports
        .iter()
        .map(|r| r.outside_count as f64 * alpha_coeff * r.epsilon * r.epsilon)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum LocalMinimizerFit {
    /// Largest admissible `c`; `f64::INFINITY` when no point deviates.
    Coefficient(f64),
    /// A point of `candidates[pair]` at stage `k` has cost below the
    /// steady-state cost.
    Failure { pair: usize, k: usize, excess: f64 },
}

/// Fits `c ≥ 0` with `c‖(x − x_s, u − u_s)‖² ≤ ℓ(x, u) − ℓ(x_s, u_s)` on all
/// candidate points inside the ρ-ball.
pub fn check_local_minimizer(
    game: &LqGame,
    ss: &SteadyStateGne,
    rho: f64,
    candidates: &[GnePair],
) -> LocalMinimizerFit {
    let cost_s = ss.population_cost(game);
    let mut c = f64::INFINITY;
    for (i, pair) in candidates.iter().enumerate() {
        for (k, u) in pair.traj.u.iter().enumerate() {
            let x = &pair.traj.x[k];
            let r2 = (x - &ss.x_s).norm_squared() + (u - &ss.u_s).norm_squared();
            if r2 > rho * rho {
                continue;
            }
            let gap = game.population_cost(x, u) - cost_s;
            if gap < -1e-12 {
                return LocalMinimizerFit::Failure {
                    pair: i,
                    k,
                    excess: gap,
                };
            }
            if r2 > 1e-18 {
                c = c.min(gap.max(0.0) / r2);
            }
        }
    }
    LocalMinimizerFit::Coefficient(c)
}
