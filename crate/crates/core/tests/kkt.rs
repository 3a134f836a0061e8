mod common;

use gnep_core::gnep::{solve_gne, SolverOptions};
use gnep_core::kkt::{assemble_agent_kkt, kkt_residual, steady_state_kkt_residual, DualTrajectory};
use gnep_core::steady::{solve_steady_state, SteadyStateGne};
use gnep_core::terminal::apply_linear_penalty;
use gnep_core::{LqGame, Matrix, Trajectory, Vector};

fn zero_inputs(n: usize) -> Vec<Vector> {
    vec![Vector::zeros(2); n]
}

#[test]
fn two_step_agent_problem_matches_hand_expansion() {
    let game = LqGame::example_eq26(2, 1.0);
    let agent = assemble_agent_kkt(&game, 0, &zero_inputs(2)).unwrap();
    let qp = &agent.qp;
    assert_eq!(qp.h.nrows(), 5);
    // (x_0 − 0.3)² + (x_1 − 0.3)² + 4(u_0)² + 4(u_1)² with u² ≡ 0.
    let cost = |z: &Vector| {
        let (x0, x1) = (z[agent.state_index(0)], z[agent.state_index(1)]);
        let (u0, u1) = (z[agent.input_index(0)], z[agent.input_index(1)]);
        (x0 - 0.3).powi(2) + (x1 - 0.3).powi(2) + 4.0 * (u0 * u0 + u1 * u1)
    };
    let objective = |z: &Vector| 0.5 * z.dot(&(&qp.h * z)) + qp.q.dot(z);
    let zero = Vector::zeros(5);
    for seed in 0..6 {
        let z = Vector::from_fn(5, |i, _| ((seed * 7 + i * 3) % 11) as f64 / 5.0 - 1.0);
        let lhs = objective(&z) - objective(&zero);
        let rhs = cost(&z) - cost(&zero);
        assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
    }
    let inputs = [agent.input_index(0), agent.input_index(1)];
    let hu = Matrix::from_fn(2, 2, |i, j| qp.h[(inputs[i], inputs[j])]);
    assert!(hu.symmetric_eigen().eigenvalues.min() > 0.0);
}

fn single_agent(game: &LqGame) -> LqGame {
    let mut g = game.clone();
    g.b.truncate(1);
    g.q.truncate(1);
    g.r = vec![vec![game.r[0][0].clone()]];
    g.c_shared = game.c_shared.columns(0, 2).into_owned();
    g.g.truncate(1);
    g.h.truncate(1);
    g.linear_x.truncate(1);
    g.linear_u = vec![Vector::zeros(1)];
    g
}

#[test]
fn decoupled_agent_problem_is_the_single_agent_problem() {
    let mut game = LqGame::example_eq26(6, 0.5);
    game.b[1] = Matrix::zeros(1, 1);
    game.r[0][1] = Matrix::zeros(1, 1);
    game.r[1][0] = Matrix::zeros(1, 1);
    game.c_shared = game.c_shared.rows(0, 2).into_owned();
    game.d_shared = game.d_shared.rows(0, 2).into_owned();
    let u_other: Vec<Vector> = (0..6).map(|k| Vector::from_vec(vec![0.0, 0.1 * k as f64])).collect();
    let two = assemble_agent_kkt(&game, 0, &u_other).unwrap().qp;
    let one = assemble_agent_kkt(&single_agent(&game), 0, &vec![Vector::zeros(1); 6])
        .unwrap()
        .qp;
    assert_eq!(two, one);
}

#[test]
fn zero_penalty_gives_the_same_agent_problem() {
    let game = LqGame::example_eq26(5, 1.0);
    let pen = apply_linear_penalty(&game, &[Vector::zeros(1), Vector::zeros(1)]).unwrap();
    for v in 0..2 {
        let a = assemble_agent_kkt(&game, v, &zero_inputs(5)).unwrap().qp;
        let b = assemble_agent_kkt(&pen, v, &zero_inputs(5)).unwrap().qp;
        assert_eq!(a, b);
    }
}

#[test]
fn zero_trajectory_violates_dynamics() {
    let game = LqGame::example_eq26(4, 1.0);
    // x_0 = x̂ = 1, everything else zero: x_1 misses A·x_0 by 1.5.
    let mut traj = Trajectory {
        x: vec![Vector::zeros(1); 5],
        u: zero_inputs(4),
    };
    traj.x[0] = game.x0.clone();
    let duals: Vec<DualTrajectory> = (0..2).map(|v| DualTrajectory::zeros(&game, v)).collect();
    let r = kkt_residual(&game, &traj, &duals).unwrap();
    assert!(r.primal_feas >= 1.5 - 1e-12, "{}", r.primal_feas);
}

#[test]
fn dual_perturbation_enters_linearly() {
    let game = LqGame::example_eq26(30, 1.0);
    let pair = solve_gne(&game, &SolverOptions::default()).unwrap();
    let base = kkt_residual(&game, &pair.traj, &pair.duals).unwrap();
    let with = |delta: f64| {
        let mut duals = pair.duals.clone();
        duals[0].lambda[12][0] += delta;
        kkt_residual(&game, &pair.traj, &duals).unwrap()
    };
    let (one, two) = (with(1e-3), with(2e-3));
    assert!(one.stationarity_x >= 1e-3 - 1e-8);
    // λ_12 enters stage 11 scaled by a = 1.5 and stage 12 unscaled.
    assert!((one.stationarity_x - 1.5e-3).abs() <= 1e-8 + base.stationarity_x);
    assert!((two.stationarity_x - 2.0 * one.stationarity_x).abs() <= 1e-8);
}

fn embedded(game: &LqGame, ss: &SteadyStateGne) -> (Trajectory, Vec<DualTrajectory>) {
    let traj = Trajectory::constant(&ss.x_s, &ss.u_s, game.horizon);
    let duals = (0..game.agents())
        .map(|v| {
            let mut d = DualTrajectory::zeros(game, v);
            d.lambda.iter_mut().for_each(|l| *l = ss.lambda_s[v].clone());
            d.mu.iter_mut().for_each(|m| *m = ss.mu_s[v].clone());
            d.eta.iter_mut().for_each(|e| *e = ss.eta_s[v].clone());
            d
        })
        .collect();
    (traj, duals)
}

#[test]
fn steady_state_embeds_as_constant_trajectory() {
    let ss = solve_steady_state(&LqGame::example_eq26(1, 0.0)).unwrap();
    assert!(
        steady_state_kkt_residual(&LqGame::example_eq26(1, 0.0), &ss)
            .unwrap()
            .max()
            <= 1e-8
    );
    for n in [1, 5, 30] {
        let game = LqGame::example_eq26(n, ss.x_s[0]);
        let (traj, duals) = embedded(&game, &ss);
        let r = kkt_residual(&game, &traj, &duals).unwrap();
        assert!(r.interior_max() <= 1e-8, "N={n}: {r:?}");
    }
}

#[test]
fn origin_is_steady_for_unconstrained_decoupled_game() {
    let mut game = common::widened(5, 0.0);
    game.x_ref = Vector::zeros(1);
    game.r[0][1] = Matrix::zeros(1, 1);
    game.r[1][0] = Matrix::zeros(1, 1);
    let ss = SteadyStateGne {
        x_s: Vector::zeros(1),
        u_s: Vector::zeros(2),
        lambda_s: vec![Vector::zeros(1); 2],
        mu_s: vec![Vector::zeros(4); 2],
        eta_s: vec![Vector::zeros(2); 2],
        residual: Default::default(),
    };
    assert_eq!(steady_state_kkt_residual(&game, &ss).unwrap().max(), 0.0);
    let solved = solve_steady_state(&game).unwrap();
    assert!(solved.x_s.amax() <= 1e-10 && solved.u_s.amax() <= 1e-10);
}

#[test]
fn unit_multipliers_on_inactive_rows_break_complementarity() {
    let game = LqGame::example_eq26(5, 1.0);
    let mut ss = solve_steady_state(&game).unwrap();
    for mu in &mut ss.mu_s {
        mu.fill(1.0);
    }
    let min_slack = game.shared_slack(&ss.x_s, &ss.u_s).min();
    assert!(min_slack > 0.0);
    let r = steady_state_kkt_residual(&game, &ss).unwrap();
    assert!(r.complementarity >= min_slack, "{} < {min_slack}", r.complementarity);
}
