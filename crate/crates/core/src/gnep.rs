//! Open-loop generalized Nash equilibria of the finite-horizon game.
//!
//! [`solve_gne`] computes the variational equilibrium (all agents share the
//! shared-constraint multipliers) by solving the stacked KKT system as a
//! mixed complementarity problem with explicit states, so co-states come out
//! directly. [`certify_epsilon`] re-solves every agent's best-response QP
//! from scratch and reports the largest unilateral improvement.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::game::{LqGame, Terminal, Trajectory};
use crate::kkt::{
    assemble_agent_kkt, check_initial_state, extract_joint, joint_dynamic_system, kkt_residual, stage_rows,
    AgentSolution, DualTrajectory, KktResidual,
};
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::mlcp::MlcpStatus;
use crate::qp::{solve_qp, QpProblem, QpStatus, ToleranceSet};
use crate::{Error, Result};

/// Certificates between these bounds are clipped to zero silently.
const EPS_CLIP: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_iter: usize,
    /// Run the best-response certificate after solving.
    pub certify: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            max_iter: 500,
            certify: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverMeta {
    pub iterations: usize,
    /// Filled in by callers that have a clock; the core is clock-free.
    pub wall_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnePair {
    pub traj: Trajectory,
    /// One entry per agent.
    pub duals: Vec<DualTrajectory>,
    /// Certified ε; NaN when certification was skipped.
    pub epsilon: f64,
    pub residual: KktResidual,
    pub solver_meta: SolverMeta,
}

impl GnePair {
    /// Stacked joint inputs `u_0..u_{N-1}`.
    pub fn inputs(&self) -> &[Vector] {
        &self.traj.u
    }

    /// Σᵥ λᵛ_k.
    pub fn lambda_sum(&self, k: usize) -> Vector {
        self.duals
            .iter()
            .fold(Vector::zeros(self.traj.x[0].len()), |acc, d| acc + &d.lambda[k])
    }
}

/// Dynamic feasible set as a strongly convex probe QP over `(x, u)`.
fn feasibility_probe(game: &LqGame) -> QpProblem {
    let n = game.n_x();
    let m = game.total_inputs();
    let horizon = game.horizon;
    let nv = (horizon + 1) * n + horizon * m;
    let xi = |k: usize| k * n;
    let ui = |k: usize| (horizon + 1) * n + k * m;
    let target = match &game.terminal {
        Terminal::TerminalConstraint(t) => Some(t),
        _ => None,
    };
    let n_eq = (horizon + 1 + usize::from(target.is_some())) * n;
    let mut e_mat = Matrix::zeros(n_eq, nv);
    let mut e_vec = Vector::zeros(n_eq);
    e_mat.view_mut((0, 0), (n, n)).fill_with_identity();
    e_vec.rows_mut(0, n).copy_from(&game.x0);
    for k in 0..horizon {
        let row = (k + 1) * n;
        e_mat.view_mut((row, xi(k + 1)), (n, n)).fill_with_identity();
        e_mat.view_mut((row, xi(k)), (n, n)).copy_from(&(-&game.a));
        for v in 0..game.agents() {
            e_mat
                .view_mut((row, ui(k) + game.input_offset(v)), (n, game.n_u(v)))
                .copy_from(&(-&game.b[v]));
        }
    }
    if let Some(t) = target {
        let row = (horizon + 1) * n;
        e_mat.view_mut((row, xi(horizon)), (n, n)).fill_with_identity();
        e_vec.rows_mut(row, n).copy_from(t);
    }
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let cx = game.c_x();
    for k in 0..=horizon {
        for j in stage_rows(game, k) {
            let mut coeffs: Vec<(usize, f64)> = (0..n).map(|c| (xi(k) + c, cx[(j, c)])).collect();
            if k < horizon {
                coeffs.extend((0..m).map(|c| (ui(k) + c, game.c_shared[(j, n + c)])));
            }
            rows.push((coeffs, game.d_shared[j]));
        }
        if k < horizon {
            for v in 0..game.agents() {
                for j in 0..game.h[v].len() {
                    let coeffs = (0..game.n_u(v))
                        .map(|c| (ui(k) + game.input_offset(v) + c, game.g[v][(j, c)]))
                        .collect();
                    rows.push((coeffs, game.h[v][j]));
                }
            }
        }
    }
    let mut f_mat = Matrix::zeros(rows.len(), nv);
    let mut f_vec = Vector::zeros(rows.len());
    for (i, (coeffs, rhs)) in rows.into_iter().enumerate() {
        for (c, val) in coeffs {
            f_mat[(i, c)] = val;
        }
        f_vec[i] = rhs;
    }
    QpProblem {
        h: Matrix::identity(nv, nv),
        q: Vector::zeros(nv),
        e_mat,
        e_vec,
        f_mat,
        f_vec,
    }
}

/// True when no trajectory from `game.x0` satisfies all constraints.
pub fn is_infeasible(game: &LqGame) -> Result<bool> {
    game.check()?;
    if check_initial_state(game, 1e-9).is_err() {
        return Ok(true);
    }
    Ok(feasibility_probe(game).certified_infeasible(&ToleranceSet::default()))
}

/// Variational GNE of the finite-horizon game.
pub fn solve_gne(game: &LqGame, opts: &SolverOptions) -> Result<GnePair> {
    game.check()?;
    check_initial_state(game, 1e-9)?;
    let (system, layout) = joint_dynamic_system(game);
    let sol = system.solve(0.1 * opts.kkt_tol, opts.max_iter);
    let (traj, duals) = extract_joint(game, &layout, &sol.z);
    let residual = kkt_residual(game, &traj, &duals)?;
    let mut pair = GnePair {
        traj,
        duals,
        epsilon: f64::NAN,
        residual,
        solver_meta: SolverMeta {
            iterations: sol.iterations,
            wall_time_s: None,
        },
    };
    if sol.status != MlcpStatus::Solved || residual.max() > opts.kkt_tol {
        if feasibility_probe(game).certified_infeasible(&ToleranceSet::default()) {
            return Err(Error::Infeasible(format!(
                "no admissible trajectory from x0 over horizon {}",
                game.horizon
            )));
        }
        log::warn!("gne: residual {:e} above tolerance {:e}", residual.max(), opts.kkt_tol);
        return Err(Error::NoConvergence {
            residual: residual.max(),
            best: Some(Box::new(pair)),
        });
    }
    log::debug!(
        "gne: N = {}, {} iterations, residual {:e}",
        game.horizon,
        sol.iterations,
        residual.max()
    );
    if opts.certify {
        pair.epsilon = certify_epsilon(game, &pair)?;
    }
    Ok(pair)
}

/// Agent `v`'s best response to the opponents' inputs in `u_joint`.
pub fn best_response(game: &LqGame, v: usize, u_joint: &[Vector]) -> Result<AgentSolution> {
    let agent = assemble_agent_kkt(game, v, u_joint)?;
    let sol = solve_qp(&agent.qp, &ToleranceSet::default())?;
    match sol.status {
        QpStatus::Optimal => Ok(agent.extract(game, &sol)),
        QpStatus::Infeasible => Err(Error::Infeasible(format!(
            "agent {v} has no feasible response to the fixed opponents"
        ))),
        QpStatus::Unbounded => Err(Error::Unbounded),
        QpStatus::MaxIter => Err(Error::MaxIter),
    }
}

fn with_agent_inputs(game: &LqGame, u_joint: &[Vector], v: usize, u_v: &[Vector]) -> Vec<Vector> {
    let off = game.input_offset(v);
    let m_v = game.n_u(v);
    u_joint
        .iter()
        .zip(u_v)
        .map(|(u, uv)| {
            let mut u = u.clone();
            u.rows_mut(off, m_v).copy_from(uv);
            u
        })
        .collect()
}

/// Per-agent improvements `J_Nᵛ(pair) − J_Nᵛ(best response)`, unclipped.
pub fn agent_gaps(game: &LqGame, pair: &GnePair) -> Result<Vec<f64>> {
    (0..game.agents())
        .map(|v| {
            let br = best_response(game, v, &pair.traj.u)?;
            let deviated = Trajectory {
                x: br.x,
                u: with_agent_inputs(game, &pair.traj.u, v, &br.u),
            };
            Ok(game.agent_cost(v, &pair.traj) - game.agent_cost(v, &deviated))
        })
        .collect()
}

/// ε-certificate: the largest unilateral improvement over all agents.
/// Negative values above −1e−6 are numerical noise and clipped to zero.
pub fn certify_epsilon(game: &LqGame, pair: &GnePair) -> Result<f64> {
    let gaps = agent_gaps(game, pair)?;
    let eps = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if eps < EPS_CLIP {
        log::warn!("certificate: best response worse than candidate by {:e}", -eps);
    }
    Ok(eps.max(0.0))
}

/// One Gauss–Seidel sweep: agents replace their inputs by best responses in
/// turn. Returns the updated joint inputs.
pub fn gauss_seidel_sweep(game: &LqGame, u_joint: &[Vector]) -> Result<Vec<Vector>> {
    let mut u = u_joint.to_vec();
    for v in 0..game.agents() {
        let br = best_response(game, v, &u)?;
        u = with_agent_inputs(game, &u, v, &br.u);
    }
    Ok(u)
}

/// Largest joint-input change produced by one Gauss–Seidel sweep.
pub fn gauss_seidel_change(game: &LqGame, u_joint: &[Vector]) -> Result<f64> {
    let next = gauss_seidel_sweep(game, u_joint)?;
    Ok(next
        .iter()
        .zip(u_joint)
        .map(|(a, b)| inf_norm(&(a - b)))
        .fold(0.0, f64::max))
}

/// Diagnostic best-response iteration; stops when a sweep moves the inputs
/// by at most `tol`. Returns the inputs and the number of sweeps.
pub fn gauss_seidel(game: &LqGame, u_init: &[Vector], max_sweeps: usize, tol: f64) -> Result<(Vec<Vector>, usize)> {
    let mut u = u_init.to_vec();
    for sweep in 1..=max_sweeps {
        let next = gauss_seidel_sweep(game, &u)?;
        let change = next.iter().zip(&u).map(|(a, b)| inf_norm(&(a - b))).fold(0.0, f64::max);
        u = next;
        if change <= tol {
            return Ok((u, sweep));
        }
    }
    Err(Error::MaxIter)
}
