//! Steady-state equilibria.
//!
//! The steady-state game asks every agent to minimise its own stage cost over
//! steady pairs `f(x̄, ū) − x̄ = 0` satisfying the shared and own constraints.
//! Its variational equilibrium is computed from the stacked KKT conditions
//! with one shared μ, exactly like the dynamic game. The central steady state
//! minimises the population cost over the same set.

use alloc::vec::Vec;

use crate::kkt::{joint_steady_system, steady_state_kkt_residual, CompRow, KktResidual};
use crate::linalg::{Matrix, Vector};
use crate::qp::{solve_qp, QpProblem, QpStatus, ToleranceSet};
use crate::{Error, LqGame, Result};

const SOLVE_TOL: f64 = 1e-10;
const ACCEPT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateGne {
    pub x_s: Vector,
    pub u_s: Vector,
    /// Per-agent multipliers of the steady-state dynamics constraint.
    pub lambda_s: Vec<Vector>,
    /// Shared-constraint multipliers, one copy per agent (identical).
    pub mu_s: Vec<Vector>,
    pub eta_s: Vec<Vector>,
    pub residual: KktResidual,
}

impl SteadyStateGne {
    /// Sum of the agents' co-states.
    pub fn lambda_sum(&self) -> Vector {
        self.lambda_s
            .iter()
            .fold(Vector::zeros(self.x_s.len()), |acc, l| acc + l)
    }

    pub fn population_cost(&self, game: &LqGame) -> f64 {
        game.population_cost(&self.x_s, &self.u_s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralSteadyState {
    pub x_d: Vector,
    pub u_d: Vector,
    pub cost: f64,
}

/// Equality and inequality data of the steady-state set over `(x̄, ū)`.
fn steady_set(game: &LqGame) -> (Matrix, Vector, Matrix, Vector) {
    let n = game.n_x();
    let m = game.total_inputs();
    let mut e_mat = Matrix::zeros(n, n + m);
    e_mat
        .view_mut((0, 0), (n, n))
        .copy_from(&(&game.a - Matrix::identity(n, n)));
    for v in 0..game.agents() {
        e_mat
            .view_mut((0, n + game.input_offset(v)), (n, game.n_u(v)))
            .copy_from(&game.b[v]);
    }
    let own_rows: usize = game.h.iter().map(|h| h.len()).sum();
    let rows = game.shared_rows() + own_rows;
    let mut f_mat = Matrix::zeros(rows, n + m);
    let mut f_vec = Vector::zeros(rows);
    f_mat
        .view_mut((0, 0), (game.shared_rows(), n + m))
        .copy_from(&game.c_shared);
    f_vec.rows_mut(0, game.shared_rows()).copy_from(&game.d_shared);
    let mut row = game.shared_rows();
    for v in 0..game.agents() {
        let len = game.h[v].len();
        f_mat
            .view_mut((row, n + game.input_offset(v)), (len, game.n_u(v)))
            .copy_from(&game.g[v]);
        f_vec.rows_mut(row, len).copy_from(&game.h[v]);
        row += len;
    }
    (e_mat, Vector::zeros(n), f_mat, f_vec)
}

fn steady_set_is_empty(game: &LqGame) -> bool {
    let (e_mat, e_vec, f_mat, f_vec) = steady_set(game);
    let nv = e_mat.ncols();
    let probe = QpProblem {
        h: Matrix::identity(nv, nv),
        q: Vector::zeros(nv),
        e_mat,
        e_vec,
        f_mat,
        f_vec,
    };
    probe.certified_infeasible(&ToleranceSet::default())
}

/// Variational steady-state GNE with certified KKT residuals.
pub fn solve_steady_state(game: &LqGame) -> Result<SteadyStateGne> {
    game.check()?;
    let n = game.n_x();
    let m = game.total_inputs();
    let (system, layout) = joint_steady_system(game);
    let sol = system.solve(SOLVE_TOL, 500);
    let z = &sol.z;
    let na = layout.n_free();
    let agents = game.agents();
    let mut mu = Vector::zeros(game.shared_rows());
    let mut eta: Vec<Vector> = game.h.iter().map(|h| Vector::zeros(h.len())).collect();
    for (i, comp) in layout.comps.iter().enumerate() {
        match *comp {
            CompRow::Shared { j, .. } => mu[j] = z[na + i],
            CompRow::Own { v, j, .. } => eta[v][j] = z[na + i],
        }
    }
    let mut ss = SteadyStateGne {
        x_s: z.rows(0, n).into_owned(),
        u_s: z.rows(n, m).into_owned(),
        lambda_s: (0..agents).map(|v| z.rows(layout.lambda(v), n).into_owned()).collect(),
        mu_s: (0..agents).map(|_| mu.clone()).collect(),
        eta_s: eta,
        residual: KktResidual::default(),
    };
    ss.residual = steady_state_kkt_residual(game, &ss)?;
    if ss.residual.max() <= ACCEPT_TOL {
        return Ok(ss);
    }
    if steady_set_is_empty(game) {
        return Err(Error::Infeasible("no admissible steady state".into()));
    }
    log::warn!("steady state: residual {:e} above tolerance", ss.residual.max());
    Err(Error::NoConvergence {
        residual: ss.residual.max(),
        best: None,
    })
}

/// Agent `v`'s steady-state best response with the other agents' steady
/// inputs fixed; returns `(x̄, ūᵛ, cost)`.
pub fn steady_best_response(game: &LqGame, v: usize, u_joint: &Vector) -> Result<(Vector, Vector, f64)> {
    game.check()?;
    let n = game.n_x();
    let m_v = game.n_u(v);
    let off = game.input_offset(v);
    let (e_full, _, f_full, f_vec_full) = steady_set(game);
    let mut fixed = u_joint.clone();
    fixed.rows_mut(off, m_v).fill(0.0);
    let mut z_fixed = Vector::zeros(n + game.total_inputs());
    z_fixed.rows_mut(n, game.total_inputs()).copy_from(&fixed);
    let select = |mat: &Matrix| {
        let mut out = Matrix::zeros(mat.nrows(), n + m_v);
        out.view_mut((0, 0), (mat.nrows(), n)).copy_from(&mat.columns(0, n));
        out.view_mut((0, n), (mat.nrows(), m_v))
            .copy_from(&mat.columns(n + off, m_v));
        out
    };
    let q_sym = &game.q[v] + game.q[v].transpose();
    let mut h = Matrix::zeros(n + m_v, n + m_v);
    h.view_mut((0, 0), (n, n)).copy_from(&q_sym);
    h.view_mut((n, n), (m_v, m_v))
        .copy_from(&(&game.r[v][v] + game.r[v][v].transpose()));
    let mut q = Vector::zeros(n + m_v);
    q.rows_mut(0, n).copy_from(&(-&q_sym * &game.x_ref + &game.linear_x[v]));
    let mut lin_u = game.linear_u[v].rows(off, m_v).into_owned();
    for j in (0..game.agents()).filter(|&j| j != v) {
        lin_u += &game.r[v][j] * game.agent_input(u_joint, j);
    }
    q.rows_mut(n, m_v).copy_from(&lin_u);
    let p = QpProblem {
        h,
        q,
        e_mat: select(&e_full),
        e_vec: -(&e_full * &z_fixed),
        f_mat: select(&f_full),
        f_vec: f_vec_full - &f_full * &z_fixed,
    };
    let sol = solve_qp(&p, &ToleranceSet::default())?.into_result()?;
    let x = sol.z_star.rows(0, n).into_owned();
    let mut u = u_joint.clone();
    u.rows_mut(off, m_v).copy_from(&sol.z_star.rows(n, m_v));
    let cost = game.stage_cost(v, &x, &u);
    Ok((x, sol.z_star.rows(n, m_v).into_owned(), cost))
}

/// Largest improvement any agent obtains by a unilateral steady-state
/// deviation from `ss`.
pub fn steady_epsilon(game: &LqGame, ss: &SteadyStateGne) -> Result<f64> {
    let mut eps = 0.0_f64;
    for v in 0..game.agents() {
        let (_, _, best) = steady_best_response(game, v, &ss.u_s)?;
        eps = eps.max(game.stage_cost(v, &ss.x_s, &ss.u_s) - best);
    }
    Ok(eps)
}

/// Minimiser of the population cost over the steady-state set.
pub fn solve_central_steady_state(game: &LqGame) -> Result<CentralSteadyState> {
    game.check()?;
    let n = game.n_x();
    let m = game.total_inputs();
    let (e_mat, e_vec, f_mat, f_vec) = steady_set(game);
    let mut h = Matrix::zeros(n + m, n + m);
    let mut q = Vector::zeros(n + m);
    let mut r_full = Matrix::zeros(m, m);
    for v in 0..game.agents() {
        let q_sym = &game.q[v] + game.q[v].transpose();
        let mut hx = h.view_mut((0, 0), (n, n));
        hx += &q_sym;
        let mut qx = q.rows_mut(0, n);
        qx += -&q_sym * &game.x_ref + &game.linear_x[v];
        let mut qu = q.rows_mut(n, m);
        qu += &game.linear_u[v];
        for j in 0..game.agents() {
            r_full
                .view_mut((game.input_offset(v), game.input_offset(j)), (game.n_u(v), game.n_u(j)))
                .copy_from(&game.r[v][j]);
        }
    }
    h.view_mut((n, n), (m, m)).copy_from(&(&r_full + r_full.transpose()));
    let p = QpProblem {
        h,
        q,
        e_mat,
        e_vec,
        f_mat,
        f_vec,
    };
    let sol = solve_qp(&p, &ToleranceSet::default())?;
    match sol.status {
        QpStatus::Optimal => {}
        QpStatus::Infeasible => return Err(Error::Infeasible("no admissible steady state".into())),
        QpStatus::Unbounded => return Err(Error::Unbounded),
        QpStatus::MaxIter => return Err(Error::MaxIter),
    }
    let x_d = sol.z_star.rows(0, n).into_owned();
    let u_d = sol.z_star.rows(n, m).into_owned();
    let cost = game.population_cost(&x_d, &u_d);
    Ok(CentralSteadyState { x_d, u_d, cost })
}
