//! KKT systems of the finite-horizon game and of its steady-state
//! counterpart.
//!
//! Per agent `v` the dynamic conditions read
//!
//! ```text
//!     x_{k+1} = A x_k + Σⱼ Bʲ uʲ_k,                    x_0 = x̂
//!     λᵛ_k = ℓᵛ_x + C_xᵀ μᵛ_k + Aᵀ λᵛ_{k+1}             k < N
//!     0    = ℓᵛ_u + C_uᵛᵀ μᵛ_k + Bᵛᵀ λᵛ_{k+1} + Gᵛᵀ ηᵛ_k   k < N
//!     λᵛ_N = ∇V_fᵛ(x_N) + C_xᵀ μᵛ_N (+ σ for a terminal constraint)
//! ```
//!
//! with the usual sign and complementarity conditions on μ and η. Shared rows
//! that involve the state only are imposed at every `k ≤ N`; rows with input
//! coefficients only for `k < N`. State-only rows at `k = 0` are decided by
//! the initial condition alone and are checked, not solved for, so their
//! multipliers are zero in every solution this crate produces.
//!
//! Two independent routes are provided: [`assemble_agent_kkt`] builds agent
//! `v`'s QP over `(x, uᵛ)` with the opponents fixed (used for best responses
//! and certificates), and the joint variational system used by the solver
//! stacks all agents' conditions with a single shared μ per stage.
//! [`kkt_residual`] evaluates the conditions directly from the game data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::game::{LqGame, Terminal, Trajectory};
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::mlcp::Mlcp;
use crate::qp::{QpProblem, QpSolution};
use crate::steady::SteadyStateGne;
use crate::{Error, Result};

/// Multipliers of one agent along the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTrajectory {
    /// Co-states `λ_0..λ_N`.
    pub lambda: Vec<Vector>,
    /// Shared-constraint multipliers `μ_0..μ_N`, one entry per shared row.
    pub mu: Vec<Vector>,
    /// Own input-constraint multipliers `η_0..η_{N-1}`.
    pub eta: Vec<Vector>,
    /// Multiplier of the terminal constraint `x_N = target`, if present.
    pub sigma: Option<Vector>,
}

impl DualTrajectory {
    pub fn zeros(game: &LqGame, v: usize) -> Self {
        let n = game.n_x();
        let horizon = game.horizon;
        Self {
            lambda: vec![Vector::zeros(n); horizon + 1],
            mu: vec![Vector::zeros(game.shared_rows()); horizon + 1],
            eta: vec![Vector::zeros(game.h[v].len()); horizon],
            sigma: matches!(game.terminal, Terminal::TerminalConstraint(_)).then(|| Vector::zeros(n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity_x: f64,
    pub stationarity_u: f64,
    pub boundary: f64,
    pub complementarity: f64,
    pub primal_feas: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity_x
            .max(self.stationarity_u)
            .max(self.boundary)
            .max(self.complementarity)
            .max(self.primal_feas)
    }

    /// Largest residual excluding the boundary conditions.
    pub fn interior_max(&self) -> f64 {
        self.stationarity_x
            .max(self.stationarity_u)
            .max(self.complementarity)
            .max(self.primal_feas)
    }
}

/// Shared rows imposed at stage `k`.
pub(crate) fn stage_rows(game: &LqGame, k: usize) -> Vec<usize> {
    let horizon = game.horizon;
    (0..game.shared_rows())
        .filter(|&j| {
            let state_only = game.is_state_only_row(j);
            if k == 0 {
                !state_only
            } else if k == horizon {
                state_only
            } else {
                true
            }
        })
        .collect()
}

/// The initial condition must satisfy the state-only shared rows.
pub(crate) fn check_initial_state(game: &LqGame, tol: f64) -> Result<()> {
    let cx = game.c_x();
    for j in (0..game.shared_rows()).filter(|&j| game.is_state_only_row(j)) {
        let slack = game.d_shared[j] - cx.row(j).dot(&game.x0.transpose());
        if slack < -tol {
            return Err(Error::Infeasible(format!(
                "initial state violates shared state constraint row {j} by {:e}",
                -slack
            )));
        }
    }
    Ok(())
}

fn check_joint_inputs(game: &LqGame, u_joint: &[Vector]) -> Result<()> {
    if u_joint.len() != game.horizon || u_joint.iter().any(|u| u.len() != game.total_inputs()) {
        return Err(Error::DimensionMismatch(format!(
            "expected {} joint inputs of length {}",
            game.horizon,
            game.total_inputs()
        )));
    }
    Ok(())
}

/// Row of agent `v`'s QP inequality system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AgentRow {
    Shared { k: usize, j: usize },
    Own { k: usize, j: usize },
}

/// Agent `v`'s best-response QP over `z = (x_0..x_N, uᵛ_0..uᵛ_{N-1})`.
#[derive(Debug, Clone)]
pub struct AgentQp {
    pub qp: QpProblem,
    pub agent: usize,
    horizon: usize,
    n_x: usize,
    n_u: usize,
    terminal_row: Option<usize>,
    rows: Vec<AgentRow>,
}

/// Result of a best-response solve, mapped back to trajectories.
#[derive(Debug, Clone)]
pub struct AgentSolution {
    pub x: Vec<Vector>,
    /// Agent `v`'s inputs `uᵛ_0..uᵛ_{N-1}`.
    pub u: Vec<Vector>,
    pub duals: DualTrajectory,
}

impl AgentQp {
    pub fn state_index(&self, k: usize) -> usize {
        k * self.n_x
    }

    pub fn input_index(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n_x + k * self.n_u
    }

    pub fn extract(&self, game: &LqGame, sol: &QpSolution) -> AgentSolution {
        let (n, m_v) = (self.n_x, self.n_u);
        let z = &sol.z_star;
        let x = (0..=self.horizon)
            .map(|k| z.rows(self.state_index(k), n).into_owned())
            .collect();
        let u = (0..self.horizon)
            .map(|k| z.rows(self.input_index(k), m_v).into_owned())
            .collect();
        let mut duals = DualTrajectory::zeros(game, self.agent);
        // Equality row k·n..(k+1)·n defines x_k (row block 0 is x_0 = x̂).
        for k in 0..=self.horizon {
            duals.lambda[k] = -sol.lam_eq.rows(k * n, n).into_owned();
        }
        if let Some(t) = self.terminal_row {
            duals.sigma = Some(sol.lam_eq.rows(t, n).into_owned());
        }
        for (i, row) in self.rows.iter().enumerate() {
            match *row {
                AgentRow::Shared { k, j } => duals.mu[k][j] = sol.lam_ineq[i],
                AgentRow::Own { k, j } => duals.eta[k][j] = sol.lam_ineq[i],
            }
        }
        AgentSolution { x, u, duals }
    }
}

/// Builds agent `v`'s QP with all other agents' inputs fixed to the
/// corresponding blocks of `u_joint` (agent `v`'s own block is ignored).
pub fn assemble_agent_kkt(game: &LqGame, v: usize, u_joint: &[Vector]) -> Result<AgentQp> {
    game.check()?;
    if v >= game.agents() {
        return Err(Error::DimensionMismatch(format!("agent {v} out of range")));
    }
    check_joint_inputs(game, u_joint)?;
    let n = game.n_x();
    let horizon = game.horizon;
    let m_v = game.n_u(v);
    let off = game.input_offset(v);
    let n_vars = (horizon + 1) * n + horizon * m_v;
    let xi = |k: usize| k * n;
    let ui = |k: usize| (horizon + 1) * n + k * m_v;

    let mut h = Matrix::zeros(n_vars, n_vars);
    let mut q = Vector::zeros(n_vars);
    let q_sym = &game.q[v] + game.q[v].transpose();
    let r_sym = &game.r[v][v] + game.r[v][v].transpose();
    let q_lin = -&q_sym * &game.x_ref + &game.linear_x[v];
    for k in 0..horizon {
        h.view_mut((xi(k), xi(k)), (n, n)).copy_from(&q_sym);
        q.rows_mut(xi(k), n).copy_from(&q_lin);
        h.view_mut((ui(k), ui(k)), (m_v, m_v)).copy_from(&r_sym);
        let mut lin = game.linear_u[v].rows(off, m_v).into_owned();
        for j in (0..game.agents()).filter(|&j| j != v) {
            lin += &game.r[v][j] * game.agent_input(&u_joint[k], j);
        }
        q.rows_mut(ui(k), m_v).copy_from(&lin);
    }
    if let Terminal::LinearPenalty(p) = &game.terminal {
        q.rows_mut(xi(horizon), n).copy_from(&p[v]);
    }

    let tc = match &game.terminal {
        Terminal::TerminalConstraint(t) => Some(t),
        _ => None,
    };
    let n_eq = (horizon + 1) * n + if tc.is_some() { n } else { 0 };
    let mut e_mat = Matrix::zeros(n_eq, n_vars);
    let mut e_vec = Vector::zeros(n_eq);
    e_mat.view_mut((0, 0), (n, n)).fill_with_identity();
    e_vec.rows_mut(0, n).copy_from(&game.x0);
    for k in 0..horizon {
        let row = (k + 1) * n;
        e_mat.view_mut((row, xi(k + 1)), (n, n)).fill_with_identity();
        e_mat.view_mut((row, xi(k)), (n, n)).copy_from(&(-&game.a));
        e_mat.view_mut((row, ui(k)), (n, m_v)).copy_from(&(-&game.b[v]));
        let mut others = Vector::zeros(n);
        for j in (0..game.agents()).filter(|&j| j != v) {
            others += &game.b[j] * game.agent_input(&u_joint[k], j);
        }
        e_vec.rows_mut(row, n).copy_from(&others);
    }
    let terminal_row = tc.map(|t| {
        let row = (horizon + 1) * n;
        e_mat.view_mut((row, xi(horizon)), (n, n)).fill_with_identity();
        e_vec.rows_mut(row, n).copy_from(t);
        row
    });

    let cx = game.c_x();
    let cu_v = game.c_u(v);
    let mut rows = Vec::new();
    for k in 0..=horizon {
        for j in stage_rows(game, k) {
            rows.push(AgentRow::Shared { k, j });
        }
    }
    for k in 0..horizon {
        for j in 0..game.h[v].len() {
            rows.push(AgentRow::Own { k, j });
        }
    }
    let mut f_mat = Matrix::zeros(rows.len(), n_vars);
    let mut f_vec = Vector::zeros(rows.len());
    for (i, row) in rows.iter().enumerate() {
        match *row {
            AgentRow::Shared { k, j } => {
                f_mat.view_mut((i, xi(k)), (1, n)).copy_from(&cx.row(j));
                let mut rhs = game.d_shared[j];
                if k < horizon {
                    f_mat.view_mut((i, ui(k)), (1, m_v)).copy_from(&cu_v.row(j));
                    for o in (0..game.agents()).filter(|&o| o != v) {
                        rhs -= game.c_u(o).row(j).dot(&game.agent_input(&u_joint[k], o).transpose());
                    }
                }
                f_vec[i] = rhs;
            }
            AgentRow::Own { k, j } => {
                f_mat.view_mut((i, ui(k)), (1, m_v)).copy_from(&game.g[v].row(j));
                f_vec[i] = game.h[v][j];
            }
        }
    }

    Ok(AgentQp {
        qp: QpProblem {
            h,
            q,
            e_mat,
            e_vec,
            f_mat,
            f_vec,
        },
        agent: v,
        horizon,
        n_x: n,
        n_u: m_v,
        terminal_row,
        rows,
    })
}

/// Complementarity row of a joint system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CompRow {
    Shared { k: usize, j: usize },
    Own { v: usize, k: usize, j: usize },
}

/// Variable layout of the joint variational system.
#[derive(Debug, Clone)]
pub(crate) struct JointLayout {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub agents: usize,
    pub has_sigma: bool,
    /// Per-agent terminal multiplier is `σᵛ = σ_offset[v] + s` with one shared `s`.
    pub sigma_offset: Vec<Vector>,
    pub comps: Vec<CompRow>,
}

impl JointLayout {
    pub fn x(&self, k: usize) -> usize {
        k * self.n_x
    }
    pub fn u(&self, k: usize) -> usize {
        (self.horizon + 1) * self.n_x + k * self.n_u
    }
    pub fn lambda(&self, v: usize, k: usize) -> usize {
        (self.horizon + 1) * self.n_x + self.horizon * self.n_u + (v * (self.horizon + 1) + k) * self.n_x
    }
    pub fn sigma(&self) -> usize {
        self.lambda(self.agents, 0)
    }
    pub fn n_free(&self) -> usize {
        self.sigma() + if self.has_sigma { self.n_x } else { 0 }
    }
}

/// Steady-state co-states of the free-end game, zero when it has none.
/// Anchoring the terminal multipliers there keeps the constant steady
/// trajectory a solution and keeps the co-states bounded over long horizons.
fn terminal_sigma_offsets(game: &LqGame) -> Vec<Vector> {
    let free = LqGame {
        terminal: Terminal::None,
        ..game.clone()
    };
    match crate::steady::solve_steady_state(&free) {
        Ok(ss) => ss.lambda_s,
        Err(_) => vec![Vector::zeros(game.n_x()); game.agents()],
    }
}

/// Assembles the stacked KKT conditions of all agents with one shared μ per
/// stage (variational selection) as a mixed complementarity problem.
pub(crate) fn joint_dynamic_system(game: &LqGame) -> (Mlcp, JointLayout) {
    let n = game.n_x();
    let horizon = game.horizon;
    let agents = game.agents();
    let m = game.total_inputs();
    let tc = match &game.terminal {
        Terminal::TerminalConstraint(t) => Some(t.clone()),
        _ => None,
    };
    let mut comps = Vec::new();
    for k in 0..=horizon {
        for j in stage_rows(game, k) {
            comps.push(CompRow::Shared { k, j });
        }
    }
    for k in 0..horizon {
        for v in 0..agents {
            for j in 0..game.h[v].len() {
                comps.push(CompRow::Own { v, k, j });
            }
        }
    }
    let layout = JointLayout {
        horizon,
        n_x: n,
        n_u: m,
        agents,
        has_sigma: tc.is_some(),
        sigma_offset: if tc.is_some() {
            terminal_sigma_offsets(game)
        } else {
            Vec::new()
        },
        comps,
    };
    let na = layout.n_free();
    let dim = na + layout.comps.len();
    let mut mat = Matrix::zeros(dim, dim);
    let mut r = Vector::zeros(dim);
    let cx = game.c_x();
    let cu: Vec<Matrix> = (0..agents).map(|v| game.c_u(v)).collect();

    let mut row = 0;
    // x_0 = x̂
    mat.view_mut((row, layout.x(0)), (n, n)).fill_with_identity();
    r.rows_mut(row, n).copy_from(&(-&game.x0));
    row += n;
    // dynamics
    for k in 0..horizon {
        mat.view_mut((row, layout.x(k + 1)), (n, n)).fill_with_identity();
        mat.view_mut((row, layout.x(k)), (n, n)).copy_from(&(-&game.a));
        for j in 0..agents {
            let col = layout.u(k) + game.input_offset(j);
            mat.view_mut((row, col), (n, game.n_u(j))).copy_from(&(-&game.b[j]));
        }
        row += n;
    }
    // co-state recursions; rows recorded for the μ columns below
    let mut costate_rows = vec![vec![0usize; horizon + 1]; agents];
    for v in 0..agents {
        let q_sym = &game.q[v] + game.q[v].transpose();
        let constant = &q_sym * &game.x_ref - &game.linear_x[v];
        for k in 0..horizon {
            costate_rows[v][k] = row;
            mat.view_mut((row, layout.lambda(v, k)), (n, n)).fill_with_identity();
            mat.view_mut((row, layout.x(k)), (n, n)).copy_from(&(-&q_sym));
            mat.view_mut((row, layout.lambda(v, k + 1)), (n, n))
                .copy_from(&(-game.a.transpose()));
            r.rows_mut(row, n).copy_from(&constant);
            row += n;
        }
        costate_rows[v][horizon] = row;
        mat.view_mut((row, layout.lambda(v, horizon)), (n, n))
            .fill_with_identity();
        if tc.is_some() {
            mat.view_mut((row, layout.sigma()), (n, n)).fill_with_identity();
            mat.view_mut((row, layout.sigma()), (n, n)).neg_mut();
            r.rows_mut(row, n).copy_from(&(-&layout.sigma_offset[v]));
        }
        if let Terminal::LinearPenalty(p) = &game.terminal {
            r.rows_mut(row, n).copy_from(&(-&p[v]));
        }
        row += n;
    }
    // input stationarity
    let mut ustat_rows = vec![vec![0usize; horizon]; agents];
    for k in 0..horizon {
        for v in 0..agents {
            let m_v = game.n_u(v);
            let off = game.input_offset(v);
            ustat_rows[v][k] = row;
            for j in 0..agents {
                let block = if j == v {
                    &game.r[v][v] + game.r[v][v].transpose()
                } else {
                    game.r[v][j].clone()
                };
                mat.view_mut((row, layout.u(k) + game.input_offset(j)), (m_v, game.n_u(j)))
                    .copy_from(&block);
            }
            mat.view_mut((row, layout.lambda(v, k + 1)), (m_v, n))
                .copy_from(&game.b[v].transpose());
            r.rows_mut(row, m_v).copy_from(&game.linear_u[v].rows(off, m_v));
            row += m_v;
        }
    }
    if let Some(t) = &tc {
        mat.view_mut((row, layout.x(horizon)), (n, n)).fill_with_identity();
        r.rows_mut(row, n).copy_from(&(-t));
        row += n;
    }
    debug_assert_eq!(row, na);

    for (i, comp) in layout.comps.iter().enumerate() {
        let col = na + i;
        let srow = na + i;
        match *comp {
            CompRow::Shared { k, j } => {
                for v in 0..agents {
                    for c in 0..n {
                        mat[(costate_rows[v][k] + c, col)] = -cx[(j, c)];
                    }
                    if k < horizon {
                        for c in 0..game.n_u(v) {
                            mat[(ustat_rows[v][k] + c, col)] = cu[v][(j, c)];
                        }
                    }
                }
                for c in 0..n {
                    mat[(srow, layout.x(k) + c)] = -cx[(j, c)];
                }
                if k < horizon {
                    for v in 0..agents {
                        let base = layout.u(k) + game.input_offset(v);
                        for c in 0..game.n_u(v) {
                            mat[(srow, base + c)] = -cu[v][(j, c)];
                        }
                    }
                }
                r[srow] = game.d_shared[j];
            }
            CompRow::Own { v, k, j } => {
                for c in 0..game.n_u(v) {
                    mat[(ustat_rows[v][k] + c, col)] = game.g[v][(j, c)];
                    mat[(srow, layout.u(k) + game.input_offset(v) + c)] = -game.g[v][(j, c)];
                }
                r[srow] = game.h[v][j];
            }
        }
    }
    (Mlcp { n_free: na, m: mat, r }, layout)
}

/// Maps a solution vector of the joint system back to the trajectory and the
/// per-agent duals (μ copied to every agent).
pub(crate) fn extract_joint(game: &LqGame, layout: &JointLayout, z: &Vector) -> (Trajectory, Vec<DualTrajectory>) {
    let n = layout.n_x;
    let horizon = layout.horizon;
    let x = (0..=horizon).map(|k| z.rows(layout.x(k), n).into_owned()).collect();
    let u = (0..horizon)
        .map(|k| z.rows(layout.u(k), layout.n_u).into_owned())
        .collect();
    let mut duals: Vec<DualTrajectory> = (0..layout.agents).map(|v| DualTrajectory::zeros(game, v)).collect();
    let na = layout.n_free();
    for (v, d) in duals.iter_mut().enumerate() {
        for k in 0..=horizon {
            d.lambda[k] = z.rows(layout.lambda(v, k), n).into_owned();
        }
        if layout.has_sigma {
            d.sigma = Some(z.rows(layout.sigma(), n) + &layout.sigma_offset[v]);
        }
    }
    for (i, comp) in layout.comps.iter().enumerate() {
        match *comp {
            CompRow::Shared { k, j } => {
                for d in duals.iter_mut() {
                    d.mu[k][j] = z[na + i];
                }
            }
            CompRow::Own { v, k, j } => duals[v].eta[k][j] = z[na + i],
        }
    }
    (Trajectory { x, u }, duals)
}

/// Layout of the steady-state system: `x̄ (n) | ū (m) | λ̄ᵛ (n each)`.
pub(crate) struct SteadyLayout {
    pub n_x: usize,
    pub n_u: usize,
    pub agents: usize,
    pub comps: Vec<CompRow>,
}

impl SteadyLayout {
    pub fn lambda(&self, v: usize) -> usize {
        self.n_x + self.n_u + v * self.n_x
    }
    pub fn n_free(&self) -> usize {
        self.lambda(self.agents)
    }
}

/// Steady-state KKT conditions of all agents with shared μ, as a mixed
/// complementarity problem. The fixed-point constraint is written
/// `f(x̄, ū) − x̄ = 0`.
pub(crate) fn joint_steady_system(game: &LqGame) -> (Mlcp, SteadyLayout) {
    let n = game.n_x();
    let agents = game.agents();
    let m = game.total_inputs();
    let mut comps: Vec<CompRow> = (0..game.shared_rows()).map(|j| CompRow::Shared { k: 0, j }).collect();
    for v in 0..agents {
        for j in 0..game.h[v].len() {
            comps.push(CompRow::Own { v, k: 0, j });
        }
    }
    let layout = SteadyLayout {
        n_x: n,
        n_u: m,
        agents,
        comps,
    };
    let na = layout.n_free();
    let dim = na + layout.comps.len();
    let mut mat = Matrix::zeros(dim, dim);
    let mut r = Vector::zeros(dim);
    let cx = game.c_x();
    let a_minus_i = &game.a - Matrix::identity(n, n);

    let mut row = 0;
    mat.view_mut((row, 0), (n, n)).copy_from(&a_minus_i);
    for j in 0..agents {
        mat.view_mut((row, n + game.input_offset(j)), (n, game.n_u(j)))
            .copy_from(&game.b[j]);
    }
    row += n;
    let mut costate_rows = vec![0usize; agents];
    for v in 0..agents {
        let q_sym = &game.q[v] + game.q[v].transpose();
        costate_rows[v] = row;
        // λ − Aᵀλ − ℓ_x − C_xᵀμ = 0
        mat.view_mut((row, layout.lambda(v)), (n, n))
            .copy_from(&(-a_minus_i.transpose()));
        mat.view_mut((row, 0), (n, n)).copy_from(&(-&q_sym));
        r.rows_mut(row, n)
            .copy_from(&(&q_sym * &game.x_ref - &game.linear_x[v]));
        row += n;
    }
    let mut ustat_rows = vec![0usize; agents];
    for v in 0..agents {
        let m_v = game.n_u(v);
        let off = game.input_offset(v);
        ustat_rows[v] = row;
        for j in 0..agents {
            let block = if j == v {
                &game.r[v][v] + game.r[v][v].transpose()
            } else {
                game.r[v][j].clone()
            };
            mat.view_mut((row, n + game.input_offset(j)), (m_v, game.n_u(j)))
                .copy_from(&block);
        }
        mat.view_mut((row, layout.lambda(v)), (m_v, n))
            .copy_from(&game.b[v].transpose());
        r.rows_mut(row, m_v).copy_from(&game.linear_u[v].rows(off, m_v));
        row += m_v;
    }
    debug_assert_eq!(row, na);

    for (i, comp) in layout.comps.iter().enumerate() {
        let col = na + i;
        let srow = na + i;
        match *comp {
            CompRow::Shared { j, .. } => {
                for v in 0..agents {
                    for c in 0..n {
                        mat[(costate_rows[v] + c, col)] = -cx[(j, c)];
                    }
                    let cu = game.c_u(v);
                    for c in 0..game.n_u(v) {
                        mat[(ustat_rows[v] + c, col)] = cu[(j, c)];
                    }
                }
                for c in 0..(n + m) {
                    mat[(srow, c)] = -game.c_shared[(j, c)];
                }
                r[srow] = game.d_shared[j];
            }
            CompRow::Own { v, j, .. } => {
                for c in 0..game.n_u(v) {
                    mat[(ustat_rows[v] + c, col)] = game.g[v][(j, c)];
                    mat[(srow, n + game.input_offset(v) + c)] = -game.g[v][(j, c)];
                }
                r[srow] = game.h[v][j];
            }
        }
    }
    (Mlcp { n_free: na, m: mat, r }, layout)
}

fn comp_update(res: &mut KktResidual, mult: f64, slack: f64) {
    res.complementarity = res.complementarity.max((mult * slack).abs()).max(-mult);
}

/// Residuals of the dynamic KKT system for a candidate primal-dual pair,
/// evaluated from the raw game data. Dual infeasibility (negative μ or η)
/// counts towards `complementarity`.
pub fn kkt_residual(game: &LqGame, traj: &Trajectory, duals: &[DualTrajectory]) -> Result<KktResidual> {
    let horizon = game.horizon;
    if traj.x.len() != horizon + 1
        || traj.horizon() != horizon
        || duals.len() != game.agents()
        || duals
            .iter()
            .any(|d| d.lambda.len() != horizon + 1 || d.mu.len() != horizon + 1 || d.eta.len() != horizon)
    {
        return Err(Error::DimensionMismatch("pair does not match the game horizon".into()));
    }
    let cx = game.c_x();
    let mut res = KktResidual {
        primal_feas: traj.dynamics_residual(game),
        boundary: inf_norm(&(&traj.x[0] - &game.x0)),
        ..Default::default()
    };
    if let Terminal::TerminalConstraint(t) = &game.terminal {
        res.boundary = res.boundary.max(inf_norm(&(&traj.x[horizon] - t)));
    }
    for k in 0..=horizon {
        let slack = if k < horizon {
            game.shared_slack(&traj.x[k], &traj.u[k])
        } else {
            &game.d_shared - &cx * &traj.x[k]
        };
        for j in 0..game.shared_rows() {
            let applies = k < horizon || game.is_state_only_row(j);
            if applies {
                res.primal_feas = res.primal_feas.max(-slack[j]);
            }
            for d in duals {
                if applies {
                    comp_update(&mut res, d.mu[k][j], slack[j]);
                } else {
                    res.complementarity = res.complementarity.max(d.mu[k][j].abs());
                }
            }
        }
    }
    for (v, d) in duals.iter().enumerate() {
        let cu = game.c_u(v);
        for k in 0..horizon {
            let own_slack = &game.h[v] - &game.g[v] * game.agent_input(&traj.u[k], v);
            for j in 0..own_slack.len() {
                res.primal_feas = res.primal_feas.max(-own_slack[j]);
                comp_update(&mut res, d.eta[k][j], own_slack[j]);
            }
            let sx = &d.lambda[k]
                - game.stage_grad_x(v, &traj.x[k])
                - cx.transpose() * &d.mu[k]
                - game.a.transpose() * &d.lambda[k + 1];
            res.stationarity_x = res.stationarity_x.max(inf_norm(&sx));
            let su = game.stage_grad_own_input(v, &traj.u[k])
                + cu.transpose() * &d.mu[k]
                + game.b[v].transpose() * &d.lambda[k + 1]
                + game.g[v].transpose() * &d.eta[k];
            res.stationarity_u = res.stationarity_u.max(inf_norm(&su));
        }
        let mut terminal = &d.lambda[horizon] - cx.transpose() * &d.mu[horizon];
        if let Terminal::LinearPenalty(p) = &game.terminal {
            terminal -= &p[v];
        }
        if let Some(s) = &d.sigma {
            terminal -= s;
        }
        res.boundary = res.boundary.max(inf_norm(&terminal));
    }
    Ok(res)
}

/// Residuals of the steady-state KKT system. `boundary` is always zero.
pub fn steady_state_kkt_residual(game: &LqGame, ss: &SteadyStateGne) -> Result<KktResidual> {
    let n = game.n_x();
    let agents = game.agents();
    if ss.x_s.len() != n
        || ss.u_s.len() != game.total_inputs()
        || ss.lambda_s.len() != agents
        || ss.mu_s.len() != agents
        || ss.eta_s.len() != agents
    {
        return Err(Error::DimensionMismatch(
            "steady-state tuple does not match the game".into(),
        ));
    }
    let cx = game.c_x();
    let mut res = KktResidual {
        primal_feas: inf_norm(&(game.step(&ss.x_s, &ss.u_s) - &ss.x_s)),
        ..KktResidual::default()
    };
    let slack = game.shared_slack(&ss.x_s, &ss.u_s);
    for j in 0..slack.len() {
        res.primal_feas = res.primal_feas.max(-slack[j]);
        for v in 0..agents {
            comp_update(&mut res, ss.mu_s[v][j], slack[j]);
        }
    }
    for v in 0..agents {
        let own_slack = &game.h[v] - &game.g[v] * game.agent_input(&ss.u_s, v);
        for j in 0..own_slack.len() {
            res.primal_feas = res.primal_feas.max(-own_slack[j]);
            comp_update(&mut res, ss.eta_s[v][j], own_slack[j]);
        }
        let lam = &ss.lambda_s[v];
        let sx = lam - game.stage_grad_x(v, &ss.x_s) - cx.transpose() * &ss.mu_s[v] - game.a.transpose() * lam;
        res.stationarity_x = res.stationarity_x.max(inf_norm(&sx));
        let su = game.stage_grad_own_input(v, &ss.u_s)
            + game.c_u(v).transpose() * &ss.mu_s[v]
            + game.b[v].transpose() * lam
            + game.g[v].transpose() * &ss.eta_s[v];
        res.stationarity_u = res.stationarity_u.max(inf_norm(&su));
    }
    Ok(res)
}
