//! Acceptance suite on the two-agent scalar example game. Each test prints one
//! `criterion N: PASS|FAIL` line; run with `--nocapture` to see all of them.

mod common;

use std::time::Instant;

use gnep_core::dissipativity::{available_storage, check_sdi, telescoping_residual, StorageCandidate, Verdict};
use gnep_core::gnep::{solve_gne, GnePair, SolverOptions};
use gnep_core::kkt::kkt_residual;
use gnep_core::sensitivity::{initial_dual_gap, storage_gradient_check, value_gradient_check};
use gnep_core::steady::{solve_central_steady_state, solve_steady_state, steady_epsilon, SteadyStateGne};
use gnep_core::terminal::{apply_linear_penalty, learn_penalty, steady_state_penalty, LearnOptions};
use gnep_core::turnpike::measure_turnpike;
use gnep_core::{LqGame, Matrix, Vector};

const HORIZONS: [usize; 4] = [10, 20, 40, 60];
const STARTS: [f64; 3] = [-1.0, 0.0, 1.0];

fn report(id: u32, ok: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

fn steady() -> SteadyStateGne {
    solve_steady_state(&LqGame::example_eq26(10, 1.0)).expect("steady state")
}

fn sweep_pairs() -> Vec<(usize, f64, GnePair)> {
    let opts = SolverOptions::default();
    let mut out = Vec::new();
    for &x0 in &STARTS {
        for &n in &HORIZONS {
            let pair = solve_gne(&LqGame::example_eq26(n, x0), &opts).expect("sweep solve");
            out.push((n, x0, pair));
        }
    }
    out
}

fn list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", items.join(", "))
}

fn scalar(x: f64) -> Vector {
    Vector::from_element(1, x)
}

#[test]
fn criterion_01_gne_certification() {
    let game = LqGame::example_eq26(30, 1.0);
    let start = Instant::now();
    let pair = solve_gne(&game, &SolverOptions::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let oracle = common::oracle_epsilon(&game, &pair.traj.u);
    let kkt = kkt_residual(&game, &pair.traj, &pair.duals).unwrap().max();
    let ok = oracle <= 1e-6 && pair.epsilon <= 1e-6 && kkt <= 1e-8 && elapsed < 10.0;
    report(
        1,
        ok,
        format!(
            "oracle eps {oracle:.3e}, certified eps {:.3e}, kkt {kkt:.3e}, {elapsed:.3}s",
            pair.epsilon
        ),
    );
}

#[test]
fn criterion_02_turnpike_boundedness() {
    let ss = steady();
    let pairs = sweep_pairs();
    let mut ok = true;
    let mut notes = Vec::new();
    for &x0 in &STARTS {
        let count = |n: usize| {
            let (_, _, p) = pairs.iter().find(|(m, s, _)| *m == n && *s == x0).unwrap();
            measure_turnpike(&p.traj, &ss, 0.05).unwrap().outside_count
        };
        let (c40, c60) = (count(40), count(60));
        ok &= c40 == c60;
        notes.push(format!("x0={x0}: {c40}/{c60}"));
    }
    let mut worst_mid = 0.0_f64;
    for (n, _, p) in pairs.iter().filter(|(n, _, _)| *n >= 20) {
        for k in n / 3..=(2 * n).div_ceil(3) {
            worst_mid = worst_mid.max((&p.traj.x[k] - &ss.x_s).norm());
        }
    }
    ok &= worst_mid <= 0.05;
    report(
        2,
        ok,
        format!(
            "outside counts N=40/60 [{}], middle-third max dev {worst_mid:.3e}",
            notes.join(", ")
        ),
    );
}

#[test]
fn criterion_03_strict_dissipativity() {
    let game = LqGame::example_eq26(10, 1.0);
    let ss = steady();
    let storage = StorageCandidate::seeded(&ss);
    let pairs: Vec<GnePair> = sweep_pairs().into_iter().map(|(_, _, p)| p).collect();
    let r = check_sdi(&game, &ss, &storage, &pairs);
    let tele = pairs
        .iter()
        .map(|p| telescoping_residual(&game, &ss, &storage, p))
        .fold(0.0, f64::max);
    let strict = matches!(r.verdict, Verdict::StrictlyDissipative(c) if c > 0.0);
    let ok = strict && r.min_slack >= -1e-9 && tele <= 1e-10;
    report(
        3,
        ok,
        format!(
            "verdict {:?}, c {:.3e}, min slack {:.3e} at {:?}, telescoping {tele:.3e}",
            r.verdict, r.alpha_coeff, r.min_slack, r.worst
        ),
    );
}

#[test]
fn criterion_04_available_storage_bounded() {
    let game = LqGame::example_eq26(10, 1.0);
    let ss = steady();
    let pairs: Vec<GnePair> = sweep_pairs().into_iter().map(|(_, _, p)| p).collect();
    let alpha = check_sdi(&game, &ss, &StorageCandidate::seeded(&ss), &pairs).alpha_coeff;
    let x0s: Vec<Vector> = STARTS.iter().map(|&x| scalar(x)).collect();
    let est = available_storage(&game, &ss, alpha, &HORIZONS, &x0s, &SolverOptions::default()).unwrap();
    let gaps: Vec<f64> = est
        .iter()
        .map(|e| (e.partial_sums[3] - e.partial_sums[2]).abs())
        .collect();
    let ok = gaps.iter().all(|&g| g <= 1e-6);
    report(
        4,
        ok,
        format!("alpha {alpha:.3e}, |S_60 − S_40| per x0 {}", list(&gaps)),
    );
}

#[test]
fn criterion_05_optimal_operation() {
    let ss = steady();
    let opts = SolverOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for &x0 in &STARTS {
        let gaps: Vec<f64> = HORIZONS
            .iter()
            .map(|&n| {
                let g = LqGame::example_eq26(n, x0);
                let pair = solve_gne(&g, &opts).unwrap();
                pair.traj.population_cost_sum(&g) / n as f64 - ss.population_cost(&g)
            })
            .collect();
        ok &= gaps.iter().all(|&g| g >= -1e-6);
        if x0 == 1.0 {
            ok &= gaps[1] > gaps[2] && gaps[2] > gaps[3];
        }
        notes.push(format!("x0={x0}: {}", list(&gaps)));
    }
    report(5, ok, notes.join("; "));
}

#[test]
fn criterion_06_value_gradient_identity() {
    let game = common::widened(30, 0.5);
    let r = value_gradient_check(&game, 1e-5, &SolverOptions::default()).unwrap();
    let ok = !r.constraints_active && r.rel_error <= 1e-4;
    report(
        6,
        ok,
        format!(
            "fd {:.6} vs dual sum {:.6}, rel error {:.3e}, constraints active {}",
            r.fd_gradient[0], r.dual_sum[0], r.rel_error, r.constraints_active
        ),
    );
}

#[test]
fn criterion_07_storage_and_dual_identities() {
    let ss = steady();
    let game = LqGame::example_eq26(60, ss.x_s[0]);
    let residual = storage_gradient_check(&game, &ss, &StorageCandidate::seeded(&ss)).unwrap();
    let pair = solve_gne(&game, &SolverOptions::default()).unwrap();
    let gaps = initial_dual_gap(&pair, &ss);
    let ok = residual == 0.0 && gaps.iter().all(|&g| g <= 0.01);
    report(
        7,
        ok,
        format!("storage residual {residual:e}, ‖λ_0 − λ_s‖ per agent {}", list(&gaps)),
    );
}

#[test]
fn criterion_08_leaving_arc_suppression() {
    let ss = steady();
    let p = steady_state_penalty(&ss);
    let opts = SolverOptions::default();
    let mut ok = true;
    let mut notes = Vec::new();
    for n in [1, 5, 30] {
        let g = apply_linear_penalty(&LqGame::example_eq26(n, ss.x_s[0]), &p).unwrap();
        let pair = solve_gne(&g, &opts).unwrap();
        let dev = (0..=n)
            .map(|k| (&pair.traj.x[k] - &ss.x_s).amax())
            .chain((0..n).map(|k| (&pair.traj.u[k] - &ss.u_s).amax()))
            .fold(0.0, f64::max);
        ok &= dev <= 1e-8 && pair.epsilon <= 1e-6;
        notes.push(format!("N={n}: dev {dev:.1e}, eps {:.1e}", pair.epsilon));
    }
    let g = apply_linear_penalty(&LqGame::example_eq26(60, 1.0), &p).unwrap();
    let pair = solve_gne(&g, &opts).unwrap();
    let tp = measure_turnpike(&pair.traj, &ss, 0.05).unwrap();
    let after = tp.deviation_after_entry();
    ok &= tp.entry_index.is_some() && after <= 0.05;
    notes.push(format!(
        "x0=1 N=60: entry {:?}, max dev after entry {after:.3e}",
        tp.entry_index
    ));
    report(8, ok, notes.join("; "));
}

#[test]
fn criterion_09_penalty_learning() {
    let game = LqGame::example_eq26(60, 1.0);
    let opts = LearnOptions {
        i_max: 2,
        eps_stop: 0.0,
        ..LearnOptions::default()
    };
    let state = learn_penalty(&game, &opts).unwrap();
    assert!(state.aborted.is_none(), "{:?}", state.aborted);
    let h = &state.history;
    let reduction = 1.0 - h[1].leaving_deviation / h[0].leaving_deviation;
    let ok = h.len() == 3 && reduction >= 0.9 && h[2].delta <= h[1].delta;
    report(
        9,
        ok,
        format!(
            "leaving deviation {:.3e} -> {:.3e} ({:.1}% reduction), delta_1 {:.3e}, delta_2 {:.3e}",
            h[0].leaving_deviation,
            h[1].leaving_deviation,
            100.0 * reduction,
            h[1].delta,
            h[2].delta
        ),
    );
}

/// Stationarity, co-state and dynamics equations of the unconstrained game
/// written out by hand for scalar state and inputs; unknowns are
/// `x_0..x_N`, `u¹_k, u²_k`, `λ¹_0..λ¹_N`, `λ²_0..λ²_N`.
fn dense_unconstrained_gne(n: usize, x0: f64) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (a, b, q, xr) = (1.5, [1.0, 2.0], [1.0, 2.0], 0.3);
    let r = [[4.0, 4.0], [5.0, 5.0]];
    let nx = n + 1;
    let iu = |k: usize, v: usize| nx + 2 * k + v;
    let il = |v: usize, k: usize| nx + 2 * n + v * nx + k;
    let dim = nx + 2 * n + 2 * nx;
    let mut m = Matrix::zeros(dim, dim);
    let mut rhs = Vector::zeros(dim);
    let mut row = 0;
    m[(row, 0)] = 1.0;
    rhs[row] = x0;
    row += 1;
    for k in 0..n {
        m[(row, k + 1)] = 1.0;
        m[(row, k)] = -a;
        m[(row, iu(k, 0))] = -b[0];
        m[(row, iu(k, 1))] = -b[1];
        row += 1;
    }
    for v in 0..2 {
        let w = 1 - v;
        for k in 0..n {
            // λ_k = 2q(x_k − x_ref) + a λ_{k+1}
            m[(row, il(v, k))] = 1.0;
            m[(row, k)] = -2.0 * q[v];
            m[(row, il(v, k + 1))] = -a;
            rhs[row] = -2.0 * q[v] * xr;
            row += 1;
            // 2 r_vv uᵛ + r_vw uʷ + bᵥ λ_{k+1} = 0
            m[(row, iu(k, v))] = 2.0 * r[v][v];
            m[(row, iu(k, w))] = r[v][w];
            m[(row, il(v, k + 1))] = b[v];
            row += 1;
        }
        m[(row, il(v, n))] = 1.0;
        row += 1;
    }
    assert_eq!(row, dim);
    let z = m.lu().solve(&rhs).expect("dense system is regular");
    let xs = (0..nx).map(|k| z[k]).collect();
    let us = (0..n).map(|k| [z[iu(k, 0)], z[iu(k, 1)]]).collect();
    (xs, us)
}

#[test]
fn criterion_10_dense_oracle_equivalence() {
    let game = common::widened(3, 0.5);
    let pair = solve_gne(&game, &SolverOptions::default()).unwrap();
    let (xs, us) = dense_unconstrained_gne(3, 0.5);
    let dx = pair.traj.x.iter().zip(&xs).map(|(x, o)| (x[0] - o).abs());
    let du = pair
        .traj
        .u
        .iter()
        .zip(&us)
        .flat_map(|(u, o)| (0..2).map(move |v| (u[v] - o[v]).abs()));
    let diff = dx.chain(du).fold(0.0_f64, f64::max);
    report(10, diff <= 1e-8, format!("max primal difference {diff:.3e}"));
}

#[test]
fn criterion_11_efficiency_gap() {
    let game = LqGame::example_eq26(10, 1.0);
    let ss = solve_steady_state(&game).unwrap();
    let central = solve_central_steady_state(&game).unwrap();
    let eps = steady_epsilon(&game, &ss).unwrap();
    let steady_kkt = ss.residual.max();
    let central_step = (game.step(&central.x_d, &central.u_d) - &central.x_d).amax();
    let central_feas = game.shared_slack(&central.x_d, &central.u_d).min();
    // Brute force over steady inputs: x = (b·u)/(1 − a) with a = 1.5.
    let mut brute = f64::INFINITY;
    let steps = 2000;
    for i in 0..=steps {
        for j in 0..=steps {
            let u = Vector::from_vec(vec![
                -2.0 + 4.0 * i as f64 / steps as f64,
                -2.0 + 4.0 * j as f64 / steps as f64,
            ]);
            let x = scalar(-2.0 * (u[0] + 2.0 * u[1]));
            if game.shared_slack(&x, &u).min() >= 0.0 {
                brute = brute.min(game.population_cost(&x, &u));
            }
        }
    }
    let gap = ss.population_cost(&game) - central.cost;
    let ok = central.cost <= ss.population_cost(&game) + 1e-9
        && central.cost <= brute + 1e-9
        && eps <= 1e-8
        && steady_kkt <= 1e-8
        && central_step <= 1e-8
        && central_feas >= -1e-9;
    report(
        11,
        ok,
        format!(
            "central {:.6e}, steady GNE {:.6e}, efficiency loss {gap:.3e}, grid min {brute:.6e}, steady eps {eps:.1e}",
            central.cost,
            ss.population_cost(&game)
        ),
    );
}
