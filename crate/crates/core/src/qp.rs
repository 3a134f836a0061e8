//! Dense convex QP: minimise `½ zᵀHz + qᵀz` subject to `E z = e`, `F z ≤ f`.
//!
//! Multipliers follow the Lagrangian `½zᵀHz + qᵀz + yᵀ(Ez − e) + wᵀ(Fz − f)`,
//! so stationarity reads `Hz + q + Eᵀy + Fᵀw = 0` with `w ≥ 0`.

use alloc::format;
use alloc::vec::Vec;

use crate::linalg::{inf_norm, mat_inf_norm, min_sym_eigenvalue, null_space, Matrix, Vector};
use crate::mlcp::{Mlcp, MlcpStatus};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Matrix,
    pub q: Vector,
    pub e_mat: Matrix,
    pub e_vec: Vector,
    pub f_mat: Matrix,
    pub f_vec: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSet {
    pub kkt_tol: f64,
    pub feas_tol: f64,
    pub comp_tol: f64,
    pub max_iter: usize,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            feas_tol: 1e-8,
            comp_tol: 1e-8,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z_star: Vector,
    pub lam_eq: Vector,
    pub lam_ineq: Vector,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    /// Converts a non-optimal status into the matching error.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            QpStatus::Optimal => Ok(self),
            QpStatus::Infeasible => Err(Error::Infeasible("QP feasible set is empty".into())),
            QpStatus::Unbounded => Err(Error::Unbounded),
            QpStatus::MaxIter => Err(Error::MaxIter),
        }
    }
}

/// Residuals of a candidate KKT point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl QpProblem {
    pub fn unconstrained(h: Matrix, q: Vector) -> Self {
        let n = q.len();
        Self {
            h,
            q,
            e_mat: Matrix::zeros(0, n),
            e_vec: Vector::zeros(0),
            f_mat: Matrix::zeros(0, n),
            f_vec: Vector::zeros(0),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.q.len()
    }

    pub fn objective(&self, z: &Vector) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.q.dot(z)
    }

    /// Dimension and symmetry checks, plus convexity of the objective on the
    /// null space of the equality constraints.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.h.shape() != (n, n)
            || self.e_mat.ncols() != n
            || self.f_mat.ncols() != n
            || self.e_mat.nrows() != self.e_vec.len()
            || self.f_mat.nrows() != self.f_vec.len()
        {
            return Err(Error::DimensionMismatch(format!(
                "QP with {n} variables: H {:?}, E {:?}/{}, F {:?}/{}",
                self.h.shape(),
                self.e_mat.shape(),
                self.e_vec.len(),
                self.f_mat.shape(),
                self.f_vec.len()
            )));
        }
        if mat_inf_norm(&(&self.h - self.h.transpose())) > 1e-12 * (1.0 + mat_inf_norm(&self.h)) {
            return Err(Error::NotConvex("H is not symmetric".into()));
        }
        let basis = null_space(&self.e_mat, n);
        if basis.ncols() > 0 {
            let reduced = basis.transpose() * &self.h * &basis;
            let floor = -1e-9 * (1.0 + mat_inf_norm(&self.h));
            if min_sym_eigenvalue(&reduced) < floor {
                return Err(Error::NotConvex("H is indefinite on the equality null space".into()));
            }
        }
        Ok(())
    }

    pub fn residuals(&self, z: &Vector, lam_eq: &Vector, lam_ineq: &Vector) -> QpResiduals {
        let stat = &self.h * z + &self.q + self.e_mat.transpose() * lam_eq + self.f_mat.transpose() * lam_ineq;
        let eq = &self.e_mat * z - &self.e_vec;
        let slack = &self.f_vec - &self.f_mat * z;
        let ineq_viol = slack.iter().fold(0.0_f64, |a, s| a.max(-s));
        let mut comp = 0.0_f64;
        for i in 0..slack.len() {
            comp = comp.max((lam_ineq[i] * slack[i]).abs()).max(-lam_ineq[i]);
        }
        QpResiduals {
            stationarity: inf_norm(&stat),
            primal: inf_norm(&eq).max(ineq_viol),
            complementarity: comp,
        }
    }

    fn kkt_mlcp(&self) -> Mlcp {
        let n = self.n_vars();
        let me = self.e_mat.nrows();
        let mi = self.f_mat.nrows();
        let dim = n + me + mi;
        let mut m = Matrix::zeros(dim, dim);
        let mut r = Vector::zeros(dim);
        m.view_mut((0, 0), (n, n)).copy_from(&self.h);
        m.view_mut((0, n), (n, me)).copy_from(&self.e_mat.transpose());
        m.view_mut((0, n + me), (n, mi)).copy_from(&self.f_mat.transpose());
        m.view_mut((n, 0), (me, n)).copy_from(&self.e_mat);
        m.view_mut((n + me, 0), (mi, n)).copy_from(&(-&self.f_mat));
        r.rows_mut(0, n).copy_from(&self.q);
        r.rows_mut(n, me).copy_from(&(-&self.e_vec));
        r.rows_mut(n + me, mi).copy_from(&self.f_vec);
        Mlcp { n_free: n + me, m, r }
    }

    /// Elastic phase-1 problem. Always feasible; its optimal elastic mass is
    /// (up to the tiny proximal term) the ℓ1 constraint violation of the
    /// closest point.
    fn elastic_infeasibility(&self, tol: &ToleranceSet) -> Option<f64> {
        let n = self.n_vars();
        let me = self.e_mat.nrows();
        let mi = self.f_mat.nrows();
        // variables: z (n), p (me), m (me), t (mi); all elastic vars >= 0
        let nv = n + 2 * me + mi;
        let delta = 1e-9;
        let h = Matrix::identity(nv, nv) * delta;
        let mut q = Vector::zeros(nv);
        for i in n..nv {
            q[i] = 1.0;
        }
        let mut e_mat = Matrix::zeros(me, nv);
        e_mat.view_mut((0, 0), (me, n)).copy_from(&self.e_mat);
        for i in 0..me {
            e_mat[(i, n + i)] = -1.0;
            e_mat[(i, n + me + i)] = 1.0;
        }
        let mut f_mat = Matrix::zeros(mi + 2 * me + mi, nv);
        let mut f_vec = Vector::zeros(mi + 2 * me + mi);
        f_mat.view_mut((0, 0), (mi, n)).copy_from(&self.f_mat);
        for i in 0..mi {
            f_mat[(i, n + 2 * me + i)] = -1.0;
            f_vec[i] = self.f_vec[i];
        }
        for i in 0..(2 * me + mi) {
            f_mat[(mi + i, n + i)] = -1.0;
        }
        let phase1 = QpProblem {
            h,
            q,
            e_mat,
            e_vec: self.e_vec.clone(),
            f_mat,
            f_vec,
        };
        let sol = phase1.kkt_mlcp().solve(tol.kkt_tol, tol.max_iter);
        if sol.status != MlcpStatus::Solved {
            return None;
        }
        Some(sol.z.rows(n, nv - n).iter().map(|v| v.max(0.0)).sum())
    }

    /// True when the elastic phase-1 problem certifies an empty feasible set.
    pub(crate) fn certified_infeasible(&self, tol: &ToleranceSet) -> bool {
        matches!(self.elastic_infeasibility(tol), Some(v) if v > self.infeasibility_threshold())
    }

    fn infeasibility_threshold(&self) -> f64 {
        1e-6 * (1.0 + inf_norm(&self.e_vec) + inf_norm(&self.f_vec))
    }

    /// Looks for a recession direction along the null space of `[H; E]` that
    /// keeps every inequality and decreases the linear term.
    fn has_descent_ray(&self) -> bool {
        let n = self.n_vars();
        let mut stacked = Matrix::zeros(n + self.e_mat.nrows(), n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&self.h);
        stacked.view_mut((n, 0), (self.e_mat.nrows(), n)).copy_from(&self.e_mat);
        let basis = null_space(&stacked, n);
        (0..basis.ncols()).any(|c| {
            let d = basis.column(c).into_owned();
            [1.0, -1.0].iter().any(|&s| {
                let ds = &d * s;
                self.q.dot(&ds) < -1e-10 && (&self.f_mat * &ds).iter().all(|v| *v <= 1e-12)
            })
        })
    }
}

/// Solves a convex QP. `status = Optimal` guarantees the stationarity,
/// feasibility and complementarity residuals are within `tol`.
pub fn solve_qp(p: &QpProblem, tol: &ToleranceSet) -> Result<QpSolution> {
    p.validate()?;
    let n = p.n_vars();
    let me = p.e_mat.nrows();
    let mi = p.f_mat.nrows();
    let mlcp = p.kkt_mlcp();
    let sol = mlcp.solve(tol.kkt_tol.min(tol.feas_tol).min(tol.comp_tol), tol.max_iter);
    let z_star = sol.z.rows(0, n).into_owned();
    let lam_eq = sol.z.rows(n, me).into_owned();
    let lam_ineq = sol.z.rows(n + me, mi).into_owned();
    let mut status = QpStatus::Optimal;
    if sol.status != MlcpStatus::Solved {
        status = match p.elastic_infeasibility(tol) {
            Some(v) if v > p.infeasibility_threshold() => QpStatus::Infeasible,
            Some(_) if p.has_descent_ray() => QpStatus::Unbounded,
            _ => QpStatus::MaxIter,
        };
        log::debug!(
            "qp: complementarity solve failed (residual {:e}), status {status:?}",
            sol.residual
        );
    } else {
        let res = p.residuals(&z_star, &lam_eq, &lam_ineq);
        if res.stationarity > tol.kkt_tol || res.primal > tol.feas_tol || res.complementarity > tol.comp_tol {
            status = QpStatus::MaxIter;
        }
    }
    Ok(QpSolution {
        z_star,
        lam_eq,
        lam_ineq,
        status,
        iterations: sol.iterations,
    })
}

/// Indices of inequalities whose slack is below `tol`.
pub fn active_set(p: &QpProblem, z: &Vector, tol: f64) -> Vec<usize> {
    let slack = &p.f_vec - &p.f_mat * z;
    (0..slack.len()).filter(|&i| slack[i] <= tol).collect()
}
