//! Terminal ingredients that suppress the leaving arc: linear penalties,
//! rotated stage costs, point-wise terminal constraints and the adaptive
//! penalty learning loop.

use alloc::format;
use alloc::vec::Vec;

use crate::game::{LqGame, Terminal};
use crate::gnep::{solve_gne, GnePair, SolverOptions};
use crate::linalg::Vector;
use crate::steady::{solve_steady_state, SteadyStateGne};
use crate::turnpike::measure_turnpike;
use crate::{Error, Result};

fn check_per_agent(game: &LqGame, vectors: &[Vector], what: &str) -> Result<()> {
    if vectors.len() != game.agents() || vectors.iter().any(|p| p.len() != game.n_x()) {
        return Err(Error::DimensionMismatch(format!(
            "{what}: expected {} vectors of length {}",
            game.agents(),
            game.n_x()
        )));
    }
    Ok(())
}

/// `V_fᵛ(x) = xᵀpᵛ` for every agent.
pub fn apply_linear_penalty(game: &LqGame, p: &[Vector]) -> Result<LqGame> {
    check_per_agent(game, p, "penalty")?;
    Ok(LqGame {
        terminal: Terminal::LinearPenalty(p.to_vec()),
        ..game.clone()
    })
}

/// Rotates every agent's stage cost by `λᵛᵀ(f(x, u) − x)`. For linear
/// dynamics this only adds linear terms, so the game stays LQ.
pub fn apply_rotation(game: &LqGame, lambda: &[Vector]) -> Result<LqGame> {
    check_per_agent(game, lambda, "rotation")?;
    let mut out = game.clone();
    let n = game.n_x();
    let shift_x = game.a.transpose() - crate::linalg::Matrix::identity(n, n);
    for (v, l) in lambda.iter().enumerate() {
        out.linear_x[v] += &shift_x * l;
        for j in 0..game.agents() {
            let mut block = out.linear_u[v].rows_mut(game.input_offset(j), game.n_u(j));
            block += game.b[j].transpose() * l;
        }
    }
    Ok(out)
}

/// Adds the point-wise terminal constraint `x_N = target`.
pub fn apply_terminal_constraint(game: &LqGame, target: &Vector) -> Result<LqGame> {
    if target.len() != game.n_x() {
        return Err(Error::DimensionMismatch(
            "terminal target does not match the state dimension".into(),
        ));
    }
    Ok(LqGame {
        terminal: Terminal::TerminalConstraint(target.clone()),
        ..game.clone()
    })
}

/// Per-agent penalty `λ_sᵛ` of the steady-state equilibrium. Warns when a
/// steady shared multiplier is nonzero, where the penalty is no longer
/// guaranteed to remove the leaving arc.
pub fn steady_state_penalty(ss: &SteadyStateGne) -> Vec<Vector> {
    if ss.mu_s.iter().any(|mu| mu.iter().any(|m| m.abs() > 1e-10)) {
        log::warn!("steady shared multipliers are nonzero; using λ_s as penalty anyway");
    }
    ss.lambda_s.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOptions {
    pub i_max: usize,
    pub eps_stop: f64,
    /// Ball radius used to detect turnpike entry for the leaving-arc metric.
    pub entry_eps: f64,
    /// Initial penalty; zero when `None`.
    pub p_init: Option<Vec<Vector>>,
    pub solver: SolverOptions,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            i_max: 1,
            eps_stop: 1e-6,
            entry_eps: 0.01,
            p_init: None,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnRecord {
    pub iteration: usize,
    pub p: Vec<Vector>,
    /// `Σᵥ‖pᵛ_i − pᵛ_{i−1}‖`; infinite for the initial penalty.
    pub delta: f64,
    /// `max_{k ≥ entry} ‖x_k − x_s‖` of the solve with penalty `p`.
    pub leaving_deviation: f64,
}

#[derive(Debug)]
pub struct PenaltyLearnState {
    pub iteration: usize,
    pub p: Vec<Vector>,
    pub delta: f64,
    pub history: Vec<LearnRecord>,
    /// Solver failure that ended the loop early, if any.
    pub aborted: Option<Error>,
}

fn leaving_deviation(pair: &GnePair, ss: &SteadyStateGne, entry_eps: f64) -> Result<f64> {
    Ok(measure_turnpike(&pair.traj, ss, entry_eps)?.deviation_after_entry())
}

/// Adaptive penalty learning: solve with `V_fᵛ(x) = xᵀpᵛ_i`, set `pᵛ_{i+1}`
/// to the midpoint co-state `λᵛ_{N/2}`, stop after `i_max` updates or once
/// the update size drops to `eps_stop`. Each history entry records the solve
/// made with its own penalty.
pub fn learn_penalty(game: &LqGame, opts: &LearnOptions) -> Result<PenaltyLearnState> {
    if game.horizon == 0 || !game.horizon.is_multiple_of(2) {
        return Err(Error::InvalidArgument("learning needs an even horizon".into()));
    }
    let ss = solve_steady_state(game)?;
    let mid = game.horizon / 2;
    let mut p = match &opts.p_init {
        Some(p) => {
            check_per_agent(game, p, "initial penalty")?;
            p.clone()
        }
        None => (0..game.agents()).map(|_| Vector::zeros(game.n_x())).collect(),
    };
    let mut state = PenaltyLearnState {
        iteration: 0,
        p: p.clone(),
        delta: f64::INFINITY,
        history: Vec::new(),
        aborted: None,
    };
    let mut pair = solve_gne(&apply_linear_penalty(game, &p)?, &opts.solver)?;
    state.history.push(LearnRecord {
        iteration: 0,
        p: p.clone(),
        delta: f64::INFINITY,
        leaving_deviation: leaving_deviation(&pair, &ss, opts.entry_eps)?,
    });
    while state.iteration < opts.i_max && state.delta > opts.eps_stop {
        let next: Vec<Vector> = pair.duals.iter().map(|d| d.lambda[mid].clone()).collect();
        let delta: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).norm()).sum();
        p = next;
        state.iteration += 1;
        state.p = p.clone();
        state.delta = delta;
        match apply_linear_penalty(game, &p).and_then(|g| solve_gne(&g, &opts.solver)) {
            Ok(solved) => pair = solved,
            Err(e) => {
                log::warn!("learning: solve {} failed: {e}", state.iteration);
                state.aborted = Some(e);
                break;
            }
        }
        state.history.push(LearnRecord {
            iteration: state.iteration,
            p: p.clone(),
            delta,
            leaving_deviation: leaving_deviation(&pair, &ss, opts.entry_eps)?,
        });
        log::info!("learning: iteration {}, delta {:e}", state.iteration, delta);
    }
    Ok(state)
}
