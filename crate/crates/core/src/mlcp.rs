//! Mixed linear complementarity problems.
//!
//! Find `z = [a; b]` with `a` free and `b ≥ 0` such that
//!
//! ```text
//!     w = M z + r
//!     w_i = 0                    for the first `n_free` rows
//!     b ≥ 0,  w_b ≥ 0,  bᵀ w_b = 0   for the remaining rows
//! ```
//!
//! Both the QP KKT system and the variational-GNE KKT system of a game have
//! this shape. The solver runs a primal-dual active-set iteration (Newton on
//! the min-function), falls back to single-exchange active-set steps when the
//! full exchange cycles, and to a Fischer-Burmeister semismooth Newton method
//! as a last resort. All choices are deterministic; ties pick the lowest index.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::linalg::{inf_norm, mat_inf_norm, solve_dense, Matrix, Vector};

/// Full-exchange steps allowed without improving the best residual.
const FULL_EXCHANGE_STALL: usize = 25;

#[derive(Debug, Clone)]
pub(crate) struct Mlcp {
    pub n_free: usize,
    pub m: Matrix,
    pub r: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MlcpStatus {
    Solved,
    Failed,
}

#[derive(Debug, Clone)]
pub(crate) struct MlcpSolution {
    pub z: Vector,
    pub status: MlcpStatus,
    pub iterations: usize,
    /// Natural residual: max of equation residual, sign violations and
    /// complementarity products.
    pub residual: f64,
}

impl Mlcp {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn n_comp(&self) -> usize {
        self.dim() - self.n_free
    }

    fn residual(&self, z: &Vector) -> f64 {
        let w = &self.m * z + &self.r;
        let mut res = 0.0_f64;
        for i in 0..self.n_free {
            res = res.max(w[i].abs());
        }
        for i in self.n_free..self.dim() {
            res = res.max((-z[i]).max(0.0)).max((-w[i]).max(0.0)).max((z[i] * w[i]).abs());
        }
        res
    }

    fn scale(&self) -> f64 {
        1.0 + mat_inf_norm(&self.m) + inf_norm(&self.r)
    }

    /// Solves the equality system obtained by fixing the active set: `w_i = 0`
    /// for active rows, `b_i = 0` for inactive ones.
    fn solve_active(&self, active: &[bool]) -> Option<Vector> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&i| i < self.n_free || active[i - self.n_free])
            .collect();
        let k = idx.len();
        let mut sys = Matrix::zeros(k, k);
        let mut rhs = Vector::zeros(k);
        for (ri, &i) in idx.iter().enumerate() {
            for (ci, &j) in idx.iter().enumerate() {
                sys[(ri, ci)] = self.m[(i, j)];
            }
            rhs[ri] = -self.r[i];
        }
        let sol = solve_dense(&sys, &rhs)?;
        let mut z = Vector::zeros(self.dim());
        for (ci, &j) in idx.iter().enumerate() {
            z[j] = sol[ci];
        }
        Some(z)
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> MlcpSolution {
        let nc = self.n_comp();
        let scale = self.scale();
        let flip_tol = 1e-13 * scale;
        let accept = |z: &Vector, it: usize| -> Option<MlcpSolution> {
            let res = self.residual(z);
            (res <= tol).then(|| MlcpSolution {
                z: z.clone(),
                status: MlcpStatus::Solved,
                iterations: it,
                residual: res,
            })
        };

        let mut iterations = 0;
        let mut best: Option<(f64, Vector)> = None;
        let keep_best = |z: &Vector, best: &mut Option<(f64, Vector)>| {
            let res = self.residual(z);
            if best.as_ref().is_none_or(|(r, _)| res < *r) {
                *best = Some((res, z.clone()));
            }
        };

        // Full-exchange primal-dual active set.
        let mut active = vec![false; nc];
        let mut stalled = 0;
        let mut good: Option<(Vec<bool>, Vector)> = None;
        let mut visited: Vec<Vec<bool>> = Vec::new();
        while iterations < max_iter {
            iterations += 1;
            let Some(z) = self.solve_active(&active) else { break };
            let before = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            keep_best(&z, &mut best);
            if let Some(sol) = accept(&z, iterations) {
                return sol;
            }
            stalled = if best.as_ref().is_some_and(|b| b.0 < before) {
                0
            } else {
                stalled + 1
            };
            if stalled >= FULL_EXCHANGE_STALL {
                good = Some((active.clone(), z));
                break;
            }
            let w = &self.m * &z + &self.r;
            let next: Vec<bool> = (0..nc)
                .map(|i| {
                    let j = self.n_free + i;
                    if active[i] {
                        z[j] > flip_tol
                    } else {
                        w[j] < -flip_tol
                    }
                })
                .collect();
            good = Some((active.clone(), z));
            if next == active || visited.contains(&next) {
                break;
            }
            visited.push(core::mem::replace(&mut active, next));
        }
        log::debug!("mlcp: full-exchange active set stopped after {iterations} iterations");

        // Single exchanges from the last solvable active set. Flips are tried
        // in order of decreasing violation; unsolvable or visited sets are skipped.
        let single_limit = iterations + 10 * nc + 100;
        if let Some((mut active, mut z)) = good.clone() {
            let mut visited = vec![active.clone()];
            'outer: while iterations < single_limit {
                let w = &self.m * &z + &self.r;
                let mut candidates: Vec<(usize, f64)> = (0..nc)
                    .filter_map(|i| {
                        let j = self.n_free + i;
                        let violation = if active[i] { -z[j] } else { -w[j] };
                        (violation > flip_tol).then_some((i, violation))
                    })
                    .collect();
                candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                for (i, _) in candidates {
                    let mut trial = active.clone();
                    trial[i] = !trial[i];
                    if visited.contains(&trial) {
                        continue;
                    }
                    iterations += 1;
                    visited.push(trial.clone());
                    let Some(zt) = self.solve_active(&trial) else { continue };
                    keep_best(&zt, &mut best);
                    if let Some(sol) = accept(&zt, iterations) {
                        return sol;
                    }
                    active = trial;
                    z = zt;
                    good = Some((active.clone(), z.clone()));
                    continue 'outer;
                }
                break;
            }
        }
        log::debug!("mlcp: single-exchange active set stopped after {iterations} iterations");
        let last_z = good.map(|(_, z)| z);

        // Fischer-Burmeister semismooth Newton, then one active-set polish.
        let start = last_z.unwrap_or_else(|| Vector::zeros(self.dim()));
        let (z, fb_iters) = self.fischer_burmeister(start, tol, max_iter);
        iterations += fb_iters;
        keep_best(&z, &mut best);
        if let Some(sol) = accept(&z, iterations) {
            return sol;
        }
        let w = &self.m * &z + &self.r;
        let active: Vec<bool> = (0..nc).map(|i| z[self.n_free + i] > w[self.n_free + i]).collect();
        if let Some(zp) = self.solve_active(&active) {
            iterations += 1;
            keep_best(&zp, &mut best);
            if let Some(sol) = accept(&zp, iterations) {
                return sol;
            }
        }

        let (residual, z) = best.unwrap_or_else(|| (f64::INFINITY, Vector::zeros(self.dim())));
        MlcpSolution {
            z,
            status: MlcpStatus::Failed,
            iterations,
            residual,
        }
    }

    fn fb_value(&self, z: &Vector) -> Vector {
        let w = &self.m * z + &self.r;
        let mut phi = w.clone();
        for i in self.n_free..self.dim() {
            phi[i] = sqrt(z[i] * z[i] + w[i] * w[i]) - z[i] - w[i];
        }
        phi
    }

    fn fischer_burmeister(&self, mut z: Vector, tol: f64, max_iter: usize) -> (Vector, usize) {
        let n = self.dim();
        let mut phi = self.fb_value(&z);
        let mut merit = 0.5 * phi.norm_squared();
        for it in 0..max_iter {
            if inf_norm(&phi) <= 0.1 * tol {
                return (z, it);
            }
            let w = &self.m * &z + &self.r;
            let mut jac = self.m.clone();
            for i in self.n_free..n {
                let rho = sqrt(z[i] * z[i] + w[i] * w[i]);
                let (da, db) = if rho > 1e-14 {
                    (z[i] / rho - 1.0, w[i] / rho - 1.0)
                } else {
                    (
                        core::f64::consts::FRAC_1_SQRT_2 - 1.0,
                        core::f64::consts::FRAC_1_SQRT_2 - 1.0,
                    )
                };
                for j in 0..n {
                    jac[(i, j)] *= db;
                }
                jac[(i, i)] += da;
            }
            let grad = jac.transpose() * &phi;
            let newton = solve_dense(&jac, &(-&phi));
            let dir = match newton {
                Some(d) if grad.dot(&d) <= -1e-12 * d.norm_squared() => d,
                _ => -&grad,
            };
            let slope = grad.dot(&dir);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let trial = &z + &dir * t;
                let trial_phi = self.fb_value(&trial);
                let trial_merit = 0.5 * trial_phi.norm_squared();
                if trial_merit <= merit + 1e-4 * t * slope {
                    z = trial;
                    phi = trial_phi;
                    merit = trial_merit;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return (z, it + 1);
            }
        }
        (z, max_iter)
    }
}
