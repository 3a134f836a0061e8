//! Value-function and storage sensitivities.
//!
//! The finite-difference gradient of the game value `V_N(x0) = Σᵥ J_Nᵛ`
//! along the variational equilibrium is compared with `Σᵥ λᵛ_0`. Without
//! active inequalities the two agree whenever no agent's cost reacts to the
//! other agents' responses to `x0` (in particular for a single agent); in
//! coupled games the co-states miss those cross terms and the report shows
//! the gap. The storage check compares `Σᵥ λ_sᵛ` with `−∇Λ(x_s)`.

use alloc::vec::Vec;

use crate::dissipativity::StorageCandidate;
use crate::game::LqGame;
use crate::gnep::{solve_gne, GnePair, SolverOptions};
use crate::kkt::stage_rows;
use crate::linalg::{Matrix, Vector};
use crate::steady::SteadyStateGne;
use crate::{Error, Result};

/// Slack below which an inequality counts as active.
const ACTIVE_TOL: f64 = 1e-7;
/// Steady shared multipliers above this are treated as nonzero.
const MU_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub v_n: f64,
    pub fd_gradient: Vector,
    pub dual_sum: Vector,
    /// `‖fd − dual_sum‖ / max(1, ‖dual_sum‖)`.
    pub rel_error: f64,
    /// Some inequality is active at the nominal or a perturbed solve, so the
    /// identity is not asserted.
    pub constraints_active: bool,
}

impl SensitivityReport {
    pub fn identity_holds(&self, tol: f64) -> Option<bool> {
        (!self.constraints_active).then_some(self.rel_error <= tol)
    }
}

/// Game value: the sum of all agents' costs, terminal terms included.
pub fn game_value(game: &LqGame, pair: &GnePair) -> f64 {
    (0..game.agents()).map(|v| game.agent_cost(v, &pair.traj)).sum()
}

/// Whether any shared or own inequality of `game` is active along `pair`.
pub fn has_active_constraints(game: &LqGame, pair: &GnePair) -> bool {
    let horizon = game.horizon;
    let cx = game.c_x();
    for k in 0..=horizon {
        let rows = stage_rows(game, k);
        if rows.is_empty() {
            continue;
        }
        let slack = if k < horizon {
            game.shared_slack(&pair.traj.x[k], &pair.traj.u[k])
        } else {
            &game.d_shared - &cx * &pair.traj.x[k]
        };
        if rows.iter().any(|&j| slack[j] <= ACTIVE_TOL) {
            return true;
        }
    }
    pair.traj.u.iter().any(|u| {
        (0..game.agents()).any(|v| {
            let s = &game.h[v] - &game.g[v] * game.agent_input(u, v);
            s.iter().any(|&s| s <= ACTIVE_TOL)
        })
    })
}

/// Central finite differences of `V_N` at `game.x0` with step
/// `h·max(1, |x0ᵢ|)` per coordinate, compared with `Σᵥ λᵛ_0`.
pub fn value_gradient_check(game: &LqGame, h: f64, opts: &SolverOptions) -> Result<SensitivityReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let pair = solve_gne(game, opts)?;
    let n = game.n_x();
    let mut active = has_active_constraints(game, &pair);
    let mut fd = Vector::zeros(n);
    for i in 0..n {
        let step = h * game.x0[i].abs().max(1.0);
        let mut values = [0.0; 2];
        for (slot, sign) in [(0usize, 1i8), (1, -1)] {
            let mut x0 = game.x0.clone();
            x0[i] += f64::from(sign) * step;
            let perturbed = game.with_start(game.horizon, x0);
            let p = solve_gne(&perturbed, opts).map_err(|e| match e {
                Error::Infeasible(_) => Error::PerturbationInfeasible { coordinate: i, sign },
                other => other,
            })?;
            active |= has_active_constraints(&perturbed, &p);
            values[slot] = game_value(&perturbed, &p);
        }
        fd[i] = (values[0] - values[1]) / (2.0 * step);
    }
    let dual_sum = pair.lambda_sum(0);
    let rel_error = (&fd - &dual_sum).norm() / dual_sum.norm().max(1.0);
    Ok(SensitivityReport {
        v_n: game_value(game, &pair),
        fd_gradient: fd,
        dual_sum,
        rel_error,
        constraints_active: active,
    })
}

/// `‖Σᵥ λ_sᵛ + ∇Λ(x_s)‖`. When the steady shared multipliers are nonzero the
/// identity's hypothesis fails; the error then carries the residual of the
/// extended identity with the pseudoinverse correction
/// `Σᵥ (Aᵀ − I)† C_xᵀ μ_sᵛ`.
pub fn storage_gradient_check(game: &LqGame, ss: &SteadyStateGne, storage: &StorageCandidate) -> Result<f64> {
    let n = game.n_x();
    if storage.linear.len() != n || ss.x_s.len() != n {
        return Err(Error::DimensionMismatch(
            "storage does not match the state dimension".into(),
        ));
    }
    let base = ss.lambda_sum() + storage.gradient(&ss.x_s);
    if ss.mu_s.iter().all(|mu| mu.iter().all(|m| m.abs() <= MU_TOL)) {
        return Ok(base.norm());
    }
    let at_minus_i: Matrix = game.a.transpose() - Matrix::identity(n, n);
    let pinv = at_minus_i
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(e.into()))?;
    let cx = game.c_x();
    let correction = ss
        .mu_s
        .iter()
        .fold(Vector::zeros(n), |acc, mu| acc + &pinv * (cx.transpose() * mu));
    Err(Error::HypothesisViolated {
        extended_residual: (base + correction).norm(),
    })
}

/// Per-agent `‖λᵛ_0 − λ_sᵛ‖`.
pub fn initial_dual_gap(pair: &GnePair, ss: &SteadyStateGne) -> Vec<f64> {
    pair.duals
        .iter()
        .zip(&ss.lambda_s)
        .map(|(d, l)| (&d.lambda[0] - l).norm())
        .collect()
}

/// Largest spread `max_k λᵛ_k − min_k λᵛ_k` (per component) over the middle
/// third of the horizon, over all agents.
pub fn middle_third_dual_spread(pair: &GnePair) -> f64 {
    let horizon = pair.traj.horizon();
    let (lo, hi) = (horizon / 3, (2 * horizon).div_ceil(3));
    let mut spread = 0.0_f64;
    for d in &pair.duals {
        let n = d.lambda[0].len();
        for c in 0..n {
            let vals = d.lambda[lo..=hi].iter().map(|l| l[c]);
            let (mn, mx) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            spread = spread.max(mx - mn);
        }
    }
    spread
}
