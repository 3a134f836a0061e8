//! Independent oracles shared by the integration tests. Nothing here touches
//! the library's KKT assembly or complementarity solver: agent problems are
//! condensed by probing the cost and the dynamics, and solved by ADMM with an
//! equality-constrained polish.

#![allow(dead_code)]

use gnep_core::{LqGame, Matrix, Trajectory, Vector};

/// Simulates the dynamics from `game.x0` under the joint inputs.
pub fn simulate(game: &LqGame, u: &[Vector]) -> Trajectory {
    let mut x = vec![game.x0.clone()];
    for uk in u {
        let next = game.step(x.last().unwrap(), uk);
        x.push(next);
    }
    Trajectory { x, u: u.to_vec() }
}

/// Joint inputs with agent `v`'s stacked inputs replaced by `w`.
pub fn with_own(game: &LqGame, u: &[Vector], v: usize, w: &Vector) -> Vec<Vector> {
    let (off, m) = (game.input_offset(v), game.n_u(v));
    let mut out = u.to_vec();
    for (k, uk) in out.iter_mut().enumerate() {
        uk.rows_mut(off, m).copy_from(&w.rows(k * m, m));
    }
    out
}

pub fn own_stack(game: &LqGame, u: &[Vector], v: usize) -> Vector {
    let (off, m) = (game.input_offset(v), game.n_u(v));
    let mut w = Vector::zeros(u.len() * m);
    for (k, uk) in u.iter().enumerate() {
        w.rows_mut(k * m, m).copy_from(&uk.rows(off, m));
    }
    w
}

/// Agent `v`'s problem over its own stacked inputs `w`:
/// `min ½ wᵀPw + qᵀw + c` s.t. `Fw ≤ f`.
pub struct CondensedQp {
    pub p: Matrix,
    pub q: Vector,
    pub c: f64,
    pub f_mat: Matrix,
    pub f_vec: Vector,
}

impl CondensedQp {
    pub fn objective(&self, w: &Vector) -> f64 {
        0.5 * w.dot(&(&self.p * w)) + self.q.dot(w) + self.c
    }
}

/// Stage-wise sensitivities `∂x_k/∂w` of the states to agent `v`'s stacked
/// inputs, by the recursion `S_{k+1} = A S_k + Bᵛ E_k`.
fn state_sensitivities(game: &LqGame, v: usize, horizon: usize) -> (Vec<Matrix>, Vec<Matrix>) {
    let (n, m) = (game.n_x(), game.n_u(v));
    let dim = horizon * m;
    let select = |k: usize| {
        let mut e = Matrix::zeros(m, dim);
        e.view_mut((0, k * m), (m, m)).fill_with_identity();
        e
    };
    let mut s = vec![Matrix::zeros(n, dim)];
    let mut e = Vec::with_capacity(horizon);
    for k in 0..horizon {
        e.push(select(k));
        let next = &game.a * &s[k] + &game.b[v] * &e[k];
        s.push(next);
    }
    (s, e)
}

/// Agent `v`'s condensed problem in the deviation `w` of its stacked inputs
/// from those in `u`, the opponents' inputs held fixed. Only running costs
/// and linear terminal penalties are supported.
pub fn condense(game: &LqGame, v: usize, u: &[Vector]) -> CondensedQp {
    let horizon = u.len();
    let (n, m) = (game.n_x(), game.n_u(v));
    let off = game.input_offset(v);
    let dim = horizon * m;
    let u0 = u.to_vec();
    let base = simulate(game, &u0);
    let (s, e) = state_sensitivities(game, v, horizon);
    let q_sym = &game.q[v] + game.q[v].transpose();
    let r_sym = &game.r[v][v] + game.r[v][v].transpose();
    let mut p = Matrix::zeros(dim, dim);
    let mut q = Vector::zeros(dim);
    for k in 0..horizon {
        p += s[k].transpose() * &q_sym * &s[k] + e[k].transpose() * &r_sym * &e[k];
        let gx = &q_sym * (&base.x[k] - &game.x_ref) + &game.linear_x[v];
        let mut gu = game.linear_u[v].rows(off, m) + &r_sym * game.agent_input(&u0[k], v);
        for j in (0..game.agents()).filter(|&j| j != v) {
            gu += &game.r[v][j] * game.agent_input(&u0[k], j);
        }
        q += s[k].transpose() * gx + e[k].transpose() * gu;
    }
    match &game.terminal {
        gnep_core::Terminal::None => {}
        gnep_core::Terminal::LinearPenalty(pen) => q += s[horizon].transpose() * &pen[v],
        gnep_core::Terminal::TerminalConstraint(_) => panic!("oracle does not handle terminal constraints"),
    }
    let c = game.agent_cost(v, &base);

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut push = |coeff: Vec<f64>, slack: f64| {
        if coeff.iter().any(|c| c.abs() > 1e-14) {
            rows.push((coeff, slack));
        }
    };
    let cu = game.c_shared.columns(n + off, m).into_owned();
    for k in 0..=horizon {
        for j in 0..game.d_shared.len() {
            let row = game.c_shared.row(j);
            let state_only = row.columns(n, game.total_inputs()).iter().all(|&c| c == 0.0);
            if k == horizon && !state_only {
                continue;
            }
            let cx = row.columns(0, n).into_owned();
            let mut value = (&cx * &base.x[k])[0] - game.d_shared[j];
            let mut coeff = &cx * &s[k];
            if k < horizon {
                value += row.columns(n, game.total_inputs()).dot(&u0[k].transpose());
                coeff += cu.row(j) * &e[k];
            }
            push(coeff.iter().copied().collect(), -value);
        }
        if k < horizon {
            for (j, h) in game.h[v].iter().enumerate() {
                push((game.g[v].row(j) * &e[k]).iter().copied().collect(), *h);
            }
        }
    }
    let f_mat = Matrix::from_fn(rows.len(), dim, |r, c| rows[r].0[c]);
    let f_vec = Vector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    CondensedQp { p, q, c, f_mat, f_vec }
}

/// ADMM on `min ½wᵀPw + qᵀw s.t. Fw ≤ f`, followed by an exact solve on the
/// detected active set.
pub fn admm_solve(qp: &CondensedQp) -> Vector {
    let (n, m) = (qp.p.nrows(), qp.f_mat.nrows());
    let (rho, sigma) = (1.0, 1e-8);
    let k = &qp.p + Matrix::identity(n, n) * sigma + qp.f_mat.transpose() * &qp.f_mat * rho;
    let chol = k.cholesky().expect("ADMM system is positive definite");
    let mut w = Vector::zeros(n);
    let mut z = Vector::zeros(m);
    let mut y = Vector::zeros(m);
    for _ in 0..200_000 {
        let rhs = &w * sigma - &qp.q + qp.f_mat.transpose() * (&z * rho - &y);
        w = chol.solve(&rhs);
        let fw = &qp.f_mat * &w;
        let z_prev = z.clone();
        z = (&fw + &y / rho).zip_map(&qp.f_vec, |a, b| a.min(b));
        y += (&fw - &z) * rho;
        let primal = (&fw - &z).amax();
        let dual = (qp.f_mat.transpose() * (&z - &z_prev) * rho).amax();
        if primal < 1e-12 && dual < 1e-12 {
            break;
        }
    }
    polish(qp, &w, &y).unwrap_or(w)
}

fn polish(qp: &CondensedQp, w: &Vector, y: &Vector) -> Option<Vector> {
    let n = qp.p.nrows();
    let slack = &qp.f_vec - &qp.f_mat * w;
    let active: Vec<usize> = (0..qp.f_mat.nrows())
        .filter(|&i| y[i] > 1e-9 || slack[i] < 1e-9)
        .collect();
    let na = active.len();
    let mut kkt = Matrix::zeros(n + na, n + na);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
    let mut rhs = Vector::zeros(n + na);
    rhs.rows_mut(0, n).copy_from(&(-&qp.q));
    for (r, &i) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = qp.f_mat[(i, c)];
            kkt[(c, n + r)] = qp.f_mat[(i, c)];
        }
        rhs[n + r] = qp.f_vec[i];
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
    let cand = sol.rows(0, n).into_owned();
    let feasible = (&qp.f_mat * &cand - &qp.f_vec).max() <= 1e-9;
    let dual_ok = sol.rows(n, na).iter().all(|&m| m >= -1e-7);
    (feasible && dual_ok && qp.objective(&cand) <= qp.objective(w) + 1e-9).then_some(cand)
}

/// Largest unilateral improvement `J_v(u) − min_w J_v(w, u^{-v})` over all
/// agents, computed by the condensed ADMM oracle.
pub fn oracle_epsilon(game: &LqGame, u: &[Vector]) -> f64 {
    (0..game.agents())
        .map(|v| {
            let qp = condense(game, v, u);
            qp.c - qp.objective(&admm_solve(&qp))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
/// The example game with every bound widened tenfold, so no inequality is
/// active for moderate initial states.
pub fn widened(horizon: usize, x0: f64) -> LqGame {
    let mut g = LqGame::example_eq26(horizon, x0);
    g.d_shared *= 10.0;
    g.h = g.h.iter().map(|h| h * 10.0).collect();
    g
}
