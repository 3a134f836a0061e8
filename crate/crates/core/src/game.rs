//! Linear-quadratic-polytopic dynamic games.
//!
//! Agent `v` minimises
//!
//! ```text
//!     Σ_{k<N} ℓᵛ(x_k, u_k) + V_fᵛ(x_N)
//!     ℓᵛ(x, u) = (uᵛ)ᵀ Σⱼ R^{v,j} uʲ + (x − x_ref)ᵀ Qᵛ (x − x_ref) + cₓᵛ·x + c_uᵛ·u
//! ```
//!
//! subject to the shared dynamics `x_{k+1} = A x_k + Σⱼ Bʲ uʲ_k`, the shared
//! polytope `C [x; u] ≤ d` and its own input polytope `Gᵛ uᵛ ≤ hᵛ`. The
//! linear terms `cₓᵛ, c_uᵛ` are zero for plain games and carry stage-cost
//! rotations.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{is_symmetric, min_sym_eigenvalue, Matrix, Vector};
use crate::{Error, Result};

const EIG_TOL: f64 = 1e-10;
const SYM_TOL: f64 = 1e-12;

/// Terminal ingredient appended to every agent's problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Terminal {
    None,
    /// `V_fᵛ(x) = xᵀ pᵛ`, one vector per agent.
    LinearPenalty(Vec<Vector>),
    /// Point-wise constraint `x_N = target`, shared by all agents.
    TerminalConstraint(Vector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqGame {
    pub a: Matrix,
    /// Per-agent input matrices `Bᵛ` (n_x × n_uᵛ).
    pub b: Vec<Matrix>,
    /// Per-agent state weights `Qᵛ`.
    pub q: Vec<Matrix>,
    pub x_ref: Vector,
    /// Input coupling blocks, `r[v][j]` is `R^{v,j}` (n_uᵛ × n_uʲ).
    pub r: Vec<Vec<Matrix>>,
    /// Shared constraint `c_shared · [x; u] ≤ d_shared`, u stacked over agents.
    pub c_shared: Matrix,
    pub d_shared: Vector,
    /// Per-agent input constraints `g[v] · uᵛ ≤ h[v]`.
    pub g: Vec<Matrix>,
    pub h: Vec<Vector>,
    pub horizon: usize,
    pub x0: Vector,
    pub terminal: Terminal,
    /// Linear stage-cost term in the state, per agent.
    pub linear_x: Vec<Vector>,
    /// Linear stage-cost term in the joint input, per agent.
    pub linear_u: Vec<Vector>,
}

impl LqGame {
    /// Two-agent scalar game used throughout the tests and bundled with the
    /// CLI: unstable scalar dynamics, coupled input costs, box constraints on
    /// the state, on each input and on the sum of inputs.
    pub fn example_eq26(horizon: usize, x0: f64) -> Self {
        let s = |v: f64| Matrix::from_element(1, 1, v);
        let c_shared = Matrix::from_row_slice(
            4,
            3,
            &[
                1.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, //
                0.0, 1.0, 1.0, //
                0.0, -1.0, -1.0,
            ],
        );
        let box_g = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let box_h = Vector::from_vec(vec![2.0, 2.0]);
        Self {
            a: s(1.5),
            b: vec![s(1.0), s(2.0)],
            q: vec![s(1.0), s(2.0)],
            x_ref: Vector::from_element(1, 0.3),
            r: vec![vec![s(4.0), s(4.0)], vec![s(5.0), s(5.0)]],
            c_shared,
            d_shared: Vector::from_vec(vec![1.0, 1.0, 2.0, 2.0]),
            g: vec![box_g.clone(), box_g],
            h: vec![box_h.clone(), box_h],
            horizon,
            x0: Vector::from_element(1, x0),
            terminal: Terminal::None,
            linear_x: vec![Vector::zeros(1); 2],
            linear_u: vec![Vector::zeros(2); 2],
        }
    }

    /// Same game with another horizon and initial state.
    pub fn with_start(&self, horizon: usize, x0: Vector) -> Self {
        Self {
            horizon,
            x0,
            ..self.clone()
        }
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn agents(&self) -> usize {
        self.b.len()
    }

    pub fn n_u(&self, v: usize) -> usize {
        self.b[v].ncols()
    }

    pub fn total_inputs(&self) -> usize {
        self.b.iter().map(|b| b.ncols()).sum()
    }

    /// Offset of agent `v`'s block in the stacked input.
    pub fn input_offset(&self, v: usize) -> usize {
        self.b[..v].iter().map(|b| b.ncols()).sum()
    }

    pub fn shared_rows(&self) -> usize {
        self.c_shared.nrows()
    }

    /// Whether shared row `j` involves the state only. Such rows also apply
    /// to the terminal state `x_N`.
    pub fn is_state_only_row(&self, j: usize) -> bool {
        let n = self.n_x();
        (0..self.total_inputs()).all(|c| self.c_shared[(j, n + c)] == 0.0)
    }

    /// `Σⱼ Bʲ uʲ` for a stacked joint input.
    pub fn input_effect(&self, u: &Vector) -> Vector {
        let mut out = Vector::zeros(self.n_x());
        for v in 0..self.agents() {
            out += &self.b[v] * self.agent_input(u, v);
        }
        out
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + self.input_effect(u)
    }

    pub fn agent_input(&self, u: &Vector, v: usize) -> Vector {
        u.rows(self.input_offset(v), self.n_u(v)).into_owned()
    }

    /// Stage cost ℓᵛ(x, u) for a stacked joint input `u`.
    pub fn stage_cost(&self, v: usize, x: &Vector, u: &Vector) -> f64 {
        let uv = self.agent_input(u, v);
        let mut coupled = Vector::zeros(self.n_u(v));
        for j in 0..self.agents() {
            coupled += &self.r[v][j] * self.agent_input(u, j);
        }
        let dx = x - &self.x_ref;
        uv.dot(&coupled) + dx.dot(&(&self.q[v] * &dx)) + self.linear_x[v].dot(x) + self.linear_u[v].dot(u)
    }

    /// Population cost ℓ(x, u) = Σᵥ ℓᵛ(x, u).
    pub fn population_cost(&self, x: &Vector, u: &Vector) -> f64 {
        (0..self.agents()).map(|v| self.stage_cost(v, x, u)).sum()
    }

    /// Terminal cost V_fᵛ(x_N); zero unless a linear penalty is attached.
    pub fn terminal_cost(&self, v: usize, x_n: &Vector) -> f64 {
        match &self.terminal {
            Terminal::LinearPenalty(p) => p[v].dot(x_n),
            _ => 0.0,
        }
    }

    /// Per-agent game cost J_Nᵛ along a trajectory, terminal term included.
    pub fn agent_cost(&self, v: usize, traj: &Trajectory) -> f64 {
        let running: f64 = traj
            .u
            .iter()
            .enumerate()
            .map(|(k, u)| self.stage_cost(v, &traj.x[k], u))
            .sum();
        running + self.terminal_cost(v, &traj.x[traj.horizon()])
    }

    /// Gradient of ℓᵛ with respect to the state.
    pub fn stage_grad_x(&self, v: usize, x: &Vector) -> Vector {
        let q_sym = &self.q[v] + self.q[v].transpose();
        q_sym * (x - &self.x_ref) + &self.linear_x[v]
    }

    /// Gradient of ℓᵛ with respect to agent `v`'s own input.
    pub fn stage_grad_own_input(&self, v: usize, u: &Vector) -> Vector {
        let off = self.input_offset(v);
        let m_v = self.n_u(v);
        let mut grad = (&self.r[v][v] + self.r[v][v].transpose()) * self.agent_input(u, v);
        for j in 0..self.agents() {
            if j != v {
                grad += &self.r[v][j] * self.agent_input(u, j);
            }
        }
        grad + self.linear_u[v].rows(off, m_v)
    }

    /// Shared-constraint columns acting on the state.
    pub fn c_x(&self) -> Matrix {
        self.c_shared.columns(0, self.n_x()).into_owned()
    }

    /// Shared-constraint columns acting on agent `v`'s input.
    pub fn c_u(&self, v: usize) -> Matrix {
        self.c_shared
            .columns(self.n_x() + self.input_offset(v), self.n_u(v))
            .into_owned()
    }

    /// Slack `d − C [x; u]` of the shared constraint.
    pub fn shared_slack(&self, x: &Vector, u: &Vector) -> Vector {
        let n = self.n_x();
        let cu = self.c_shared.columns(n, self.total_inputs());
        &self.d_shared - self.c_x() * x - cu * u
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let dims = self.check_dimensions();
        let dims_ok = dims.is_ok();
        report.push("dimensions", dims.err());
        if !dims_ok {
            return report;
        }
        let finite = self.a.iter().all(|v| v.is_finite())
            && self
                .b
                .iter()
                .chain(self.q.iter())
                .all(|m| m.iter().all(|v| v.is_finite()))
            && self.c_shared.iter().all(|v| v.is_finite())
            && self.x0.iter().all(|v| v.is_finite());
        report.push(
            "finite entries",
            (!finite).then(|| Error::InvalidArgument("non-finite matrix entry".into())),
        );
        for v in 0..self.agents() {
            let q = &self.q[v];
            let q_fail = if !is_symmetric(q, SYM_TOL) {
                Some(Error::NotConvex(format!("Q[{v}] is not symmetric")))
            } else if min_sym_eigenvalue(q) < -EIG_TOL {
                Some(Error::NotConvex(format!("Q[{v}] is not positive semidefinite")))
            } else {
                None
            };
            report.push("Q symmetric PSD", q_fail);
            let r = &self.r[v][v];
            let r_fail = if !is_symmetric(r, SYM_TOL) {
                Some(Error::NotConvex(format!("R[{v}][{v}] is not symmetric")))
            } else if min_sym_eigenvalue(r) <= EIG_TOL {
                Some(Error::NotConvex(format!("R[{v}][{v}] is not positive definite")))
            } else {
                None
            };
            report.push("R diagonal block symmetric PD", r_fail);
        }
        report
    }

    /// Validation as a `Result`, failing on the first violated invariant.
    pub fn check(&self) -> Result<()> {
        self.validate().into_result()
    }

    fn check_dimensions(&self) -> Result<()> {
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        let n = self.a.nrows();
        let m_agents = self.b.len();
        if n == 0 || !self.a.is_square() {
            return mismatch(format!(
                "A is {}x{}, expected square with n_x >= 1",
                self.a.nrows(),
                self.a.ncols()
            ));
        }
        if m_agents == 0 {
            return mismatch("at least one agent is required".into());
        }
        if self.horizon == 0 {
            return mismatch("horizon N must be >= 1".into());
        }
        for (name, len) in [
            ("Q", self.q.len()),
            ("R", self.r.len()),
            ("G", self.g.len()),
            ("h", self.h.len()),
            ("linear_x", self.linear_x.len()),
            ("linear_u", self.linear_u.len()),
        ] {
            if len != m_agents {
                return mismatch(format!("{name} has {len} agent entries, expected {m_agents}"));
            }
        }
        let m_total = self.total_inputs();
        for v in 0..m_agents {
            let m_v = self.b[v].ncols();
            if self.b[v].nrows() != n || m_v == 0 {
                return mismatch(format!(
                    "B[{v}] is {}x{}, expected {n}x(n_u >= 1)",
                    self.b[v].nrows(),
                    m_v
                ));
            }
            if self.q[v].shape() != (n, n) {
                return mismatch(format!("Q[{v}] must be {n}x{n}"));
            }
            if self.r[v].len() != m_agents {
                return mismatch(format!("R[{v}] has {} blocks, expected {m_agents}", self.r[v].len()));
            }
            for j in 0..m_agents {
                if self.r[v][j].shape() != (m_v, self.b[j].ncols()) {
                    return mismatch(format!("R[{v}][{j}] must be {m_v}x{}", self.b[j].ncols()));
                }
            }
            if self.g[v].ncols() != m_v || self.g[v].nrows() != self.h[v].len() {
                return mismatch(format!("G[{v}]/h[{v}] must have {m_v} columns and matching rows"));
            }
            if self.linear_x[v].len() != n || self.linear_u[v].len() != m_total {
                return mismatch(format!("linear stage terms of agent {v} have wrong length"));
            }
        }
        if self.x_ref.len() != n || self.x0.len() != n {
            return mismatch(format!("x_ref and x0 must have length {n}"));
        }
        if self.c_shared.ncols() != n + m_total || self.c_shared.nrows() != self.d_shared.len() {
            return mismatch(format!(
                "C_shared is {}x{} with {} bounds, expected {} columns",
                self.c_shared.nrows(),
                self.c_shared.ncols(),
                self.d_shared.len(),
                n + m_total
            ));
        }
        match &self.terminal {
            Terminal::None => {}
            Terminal::LinearPenalty(p) => {
                if p.len() != m_agents || p.iter().any(|p| p.len() != n) {
                    return mismatch("terminal penalty needs one n_x vector per agent".into());
                }
            }
            Terminal::TerminalConstraint(t) => {
                if t.len() != n {
                    return mismatch("terminal target must have length n_x".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub checks: Vec<(&'static str, Option<Error>)>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, failure: Option<Error>) {
        self.checks.push((name, failure));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, f)| f.is_none())
    }

    pub fn into_result(self) -> Result<()> {
        match self.checks.into_iter().find_map(|(_, f)| f) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// States `x_0..x_N` and stacked joint inputs `u_0..u_{N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vector>,
    pub u: Vec<Vector>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    /// The N-step trajectory sitting at `(x, u)`.
    pub fn constant(x: &Vector, u: &Vector, horizon: usize) -> Self {
        Self {
            x: vec![x.clone(); horizon + 1],
            u: vec![u.clone(); horizon],
        }
    }

    /// max_k ‖x_{k+1} − A x_k − Σⱼ Bʲ uʲ_k‖∞
    pub fn dynamics_residual(&self, game: &LqGame) -> f64 {
        self.u
            .iter()
            .enumerate()
            .map(|(k, u)| crate::linalg::inf_norm(&(&self.x[k + 1] - game.step(&self.x[k], u))))
            .fold(0.0, f64::max)
    }

    /// Population cost summed over the running stages.
    pub fn population_cost_sum(&self, game: &LqGame) -> f64 {
        self.u
            .iter()
            .enumerate()
            .map(|(k, u)| game.population_cost(&self.x[k], u))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn joint(u1: f64, u2: f64) -> Vector {
        Vector::from_vec(vec![u1, u2])
    }

    /// Scalar brute-force evaluation of the two-agent cost, written out term
    /// by term from the game parameters.
    fn scalar_oracle(v: usize, x: f64, u: [f64; 2]) -> f64 {
        let r = [[4.0, 4.0], [5.0, 5.0]];
        let q = [1.0, 2.0];
        u[v] * (r[v][0] * u[0] + r[v][1] * u[1]) + q[v] * (x - 0.3) * (x - 0.3)
    }

    #[test]
    fn eq26_validates() {
        assert!(LqGame::example_eq26(30, 1.0).validate().passed());
    }

    #[test]
    fn zero_diagonal_input_weight_is_not_convex() {
        let mut g = LqGame::example_eq26(30, 1.0);
        g.r[0][0] = Matrix::zeros(1, 1);
        assert!(matches!(g.check(), Err(Error::NotConvex(_))));
    }

    #[test]
    fn resized_input_matrix_is_dimension_mismatch() {
        let mut g = LqGame::example_eq26(30, 1.0);
        g.b[1] = Matrix::from_element(2, 1, 2.0);
        assert!(matches!(g.check(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn zero_horizon_rejected() {
        let g = LqGame::example_eq26(0, 1.0);
        assert!(matches!(g.check(), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn stage_cost_values() {
        let g = LqGame::example_eq26(30, 1.0);
        let x = |v: f64| Vector::from_element(1, v);
        assert_abs_diff_eq!(g.stage_cost(0, &x(0.3), &joint(0.0, 0.0)), 0.0);
        assert_abs_diff_eq!(g.stage_cost(0, &x(1.0), &joint(1.0, 1.0)), 8.49, epsilon = 1e-12);
        assert_abs_diff_eq!(g.population_cost(&x(1.0), &joint(1.0, 1.0)), 19.47, epsilon = 1e-12);
        for (xv, u) in [(1.0, [1.0, 1.0]), (-0.4, [0.3, -1.7]), (0.9, [2.0, -2.0])] {
            for v in 0..2 {
                assert_abs_diff_eq!(
                    g.stage_cost(v, &x(xv), &joint(u[0], u[1])),
                    scalar_oracle(v, xv, u),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = LqGame::example_eq26(5, 1.0);
        let x = Vector::from_element(1, 0.7);
        let u = joint(0.4, -0.9);
        let h = 1e-6;
        for v in 0..2 {
            let fd_x = (g.stage_cost(v, &(&x + Vector::from_element(1, h)), &u)
                - g.stage_cost(v, &(&x - Vector::from_element(1, h)), &u))
                / (2.0 * h);
            assert_abs_diff_eq!(g.stage_grad_x(v, &x)[0], fd_x, epsilon = 1e-6);
            let mut up = u.clone();
            let mut um = u.clone();
            up[v] += h;
            um[v] -= h;
            let fd_u = (g.stage_cost(v, &x, &up) - g.stage_cost(v, &x, &um)) / (2.0 * h);
            assert_abs_diff_eq!(g.stage_grad_own_input(v, &u)[0], fd_u, epsilon = 1e-6);
        }
    }

    #[test]
    fn state_only_rows() {
        let g = LqGame::example_eq26(5, 1.0);
        assert!(g.is_state_only_row(0) && g.is_state_only_row(1));
        assert!(!g.is_state_only_row(2) && !g.is_state_only_row(3));
    }
}
