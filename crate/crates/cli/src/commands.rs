use std::time::Instant;

use gnep_core::dissipativity::{
    available_storage, check_optimal_operation, check_sdi, fit_quadratic_storage, supply_rate, telescoping_residual,
    DissipativityReport, StorageCandidate, Verdict,
};
use gnep_core::gnep::{solve_gne, GnePair, SolverOptions};
use gnep_core::sensitivity::{initial_dual_gap, storage_gradient_check, value_gradient_check};
use gnep_core::steady::{solve_steady_state, SteadyStateGne};
use gnep_core::terminal::{
    apply_linear_penalty, apply_terminal_constraint, learn_penalty, steady_state_penalty, LearnOptions,
};
use gnep_core::turnpike::measure_turnpike;
use gnep_core::{Error, LqGame, Vector};
use serde_json::{json, Value};

use crate::error::{CliError, EXIT_NO_CONVERGENCE, EXIT_OK};
use crate::gamefile::{load_penalty, GameFile, EXAMPLE_NAME};
use crate::output::{fmt_f64, num, trajectory_table, unix_time, vec_json, Sink, Table};
use crate::{Common, DissipativityArgs, LearnArgs, PenaltyArgs, SensitivityArgs};

/// Certificate threshold for a successful solve.
const EPS_CERTIFIED: f64 = 1e-6;
const SWEEP_HORIZONS: [usize; 4] = [10, 20, 40, 60];
const DEFAULT_BALL: f64 = 0.05;
const DEFAULT_ENTRY_BALL: f64 = 0.01;

struct Setup {
    source: String,
    file: GameFile,
    game: LqGame,
    opts: SolverOptions,
    sink: Sink,
}

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn setup(c: &Common) -> Result<Setup, CliError> {
    let source = c
        .game
        .clone()
        .or_else(|| c.game_pos.clone())
        .unwrap_or_else(|| EXAMPLE_NAME.into());
    let file = GameFile::load(&source)?;
    let game = file.to_game()?;
    if !(c.kkt_tol > 0.0) {
        return Err(config("--kkt-tol must be positive"));
    }
    if c.eps.iter().any(|&e| !(e > 0.0)) {
        return Err(config("--eps values must be positive"));
    }
    if c.horizons.contains(&0) {
        return Err(config("--N values must be positive"));
    }
    let opts = SolverOptions {
        kkt_tol: c.kkt_tol,
        ..SolverOptions::default()
    };
    Ok(Setup {
        source,
        file,
        game,
        opts,
        sink: Sink::new(c.out.as_deref())?,
    })
}

fn initial_states(c: &Common, s: &Setup) -> Result<Vec<Vector>, CliError> {
    let n = s.game.n_x();
    if c.x0.is_empty() {
        return Ok(s.file.initial_set());
    }
    if !c.x0.len().is_multiple_of(n) {
        return Err(config(format!("--x0 needs a multiple of n_x = {n} values")));
    }
    Ok(c.x0.chunks(n).map(Vector::from_column_slice).collect())
}

/// The game at the single horizon and initial state of a one-shot command.
fn single_run(c: &Common, s: &Setup) -> Result<LqGame, CliError> {
    let horizon = match c.horizons.as_slice() {
        [] => s.game.horizon,
        [n] => *n,
        _ => return Err(config("this command takes a single --N")),
    };
    let x0 = if c.x0.is_empty() {
        s.game.x0.clone()
    } else {
        match initial_states(c, s)?.as_slice() {
            [x] => x.clone(),
            _ => return Err(config("this command takes a single --x0")),
        }
    };
    Ok(s.game.with_start(horizon, x0))
}

fn single_eps(c: &Common, default: f64) -> Result<f64, CliError> {
    match c.eps.as_slice() {
        [] => Ok(default),
        [e] => Ok(*e),
        _ => Err(config("this command takes a single --eps")),
    }
}

fn sweep_horizons(c: &Common) -> Vec<usize> {
    if c.horizons.is_empty() {
        SWEEP_HORIZONS.to_vec()
    } else {
        c.horizons.clone()
    }
}

fn state_label(x: &Vector) -> String {
    x.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";")
}

fn header(command: &str, s: &Setup) -> Value {
    json!({ "command": command, "game": s.source, "generated_at_unix": unix_time() })
}

fn timed_solve(game: &LqGame, opts: &SolverOptions) -> Result<GnePair, CliError> {
    let start = Instant::now();
    let mut pair = solve_gne(game, opts)?;
    pair.solver_meta.wall_time_s = Some(start.elapsed().as_secs_f64());
    Ok(pair)
}

fn pair_json(pair: &GnePair) -> Value {
    let r = &pair.residual;
    json!({
        "epsilon": num(pair.epsilon),
        "certified": pair.epsilon <= EPS_CERTIFIED,
        "residual": {
            "stationarity_x": r.stationarity_x,
            "stationarity_u": r.stationarity_u,
            "boundary": r.boundary,
            "complementarity": r.complementarity,
            "primal_feas": r.primal_feas,
            "max": r.max(),
        },
        "iterations": pair.solver_meta.iterations,
        "wall_time_s": pair.solver_meta.wall_time_s,
    })
}

fn steady_json(ss: &SteadyStateGne, game: &LqGame) -> Value {
    json!({
        "x_s": vec_json(&ss.x_s),
        "u_s": vec_json(&ss.u_s),
        "lambda_s": ss.lambda_s.iter().map(vec_json).collect::<Vec<_>>(),
        "cost": ss.population_cost(game),
        "residual": ss.residual.max(),
    })
}

fn exit_for(certified: bool) -> i32 {
    if certified {
        EXIT_OK
    } else {
        EXIT_NO_CONVERGENCE
    }
}

pub fn solve(c: &Common) -> Result<i32, CliError> {
    let s = setup(c)?;
    let game = single_run(c, &s)?;
    let pair = timed_solve(&game, &s.opts)?;
    s.sink.csv("solve", &trajectory_table(&game, &pair))?;
    let mut summary = header("solve", &s);
    summary["N"] = json!(game.horizon);
    summary["x0"] = vec_json(&game.x0);
    summary["solution"] = pair_json(&pair);
    s.sink.summary("solve", &summary)?;
    Ok(exit_for(pair.epsilon <= EPS_CERTIFIED))
}

pub fn turnpike_sweep(c: &Common) -> Result<i32, CliError> {
    let s = setup(c)?;
    let horizons = sweep_horizons(c);
    let x0s = initial_states(c, &s)?;
    let radii = if c.eps.is_empty() {
        vec![DEFAULT_BALL]
    } else {
        c.eps.clone()
    };
    let ss = solve_steady_state(&s.game)?;
    let mut table = Table::new([
        "N",
        "x0",
        "eps",
        "status",
        "q_eps",
        "outside_count",
        "entry_index",
        "leaving_index",
        "max_dev_after_entry",
    ]);
    let mut profiles = Table::new(["N", "x0", "k", "state_deviation", "input_deviation"]);
    let mut stable = Vec::new();
    let mut failures = 0;
    for x0 in &x0s {
        let mut counts: Vec<(usize, Vec<usize>)> = Vec::new();
        for &n in &horizons {
            let label = state_label(x0);
            match solve_gne(&s.game.with_start(n, x0.clone()), &s.opts) {
                Ok(pair) => {
                    let mut per_eps = Vec::new();
                    for &eps in &radii {
                        let r = measure_turnpike(&pair.traj, &ss, eps)?;
                        per_eps.push(r.outside_count);
                        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
                        table.push(vec![
                            n.to_string(),
                            label.clone(),
                            fmt_f64(eps),
                            "ok".into(),
                            r.q_eps.to_string(),
                            r.outside_count.to_string(),
                            opt(r.entry_index),
                            opt(r.leaving_index),
                            fmt_f64(r.deviation_after_entry()),
                        ]);
                    }
                    counts.push((n, per_eps));
                    let r = measure_turnpike(&pair.traj, &ss, radii[0])?;
                    for k in 0..=n {
                        let du = r.input_deviation.get(k).map(|&d| fmt_f64(d)).unwrap_or_default();
                        profiles.push(vec![
                            n.to_string(),
                            label.clone(),
                            k.to_string(),
                            fmt_f64(r.state_deviation[k]),
                            du,
                        ]);
                    }
                }
                Err(e) => {
                    failures += 1;
                    log::warn!("N = {n}, x0 = {label}: {e}");
                    for &eps in &radii {
                        let mut row = vec![n.to_string(), label.clone(), fmt_f64(eps), status_of(&e).into()];
                        row.extend(std::iter::repeat_n(String::new(), 5));
                        table.push(row);
                    }
                }
            }
        }
        counts.sort_by_key(|(n, _)| *n);
        if let [.., (n1, a), (n2, b)] = counts.as_slice() {
            for (i, &eps) in radii.iter().enumerate() {
                stable.push(json!({
                    "x0": vec_json(x0),
                    "eps": eps,
                    "horizons": [n1, n2],
                    "outside_counts": [a[i], b[i]],
                    "stable": a[i] == b[i],
                }));
            }
        }
    }
    s.sink.csv("turnpike_sweep", &table)?;
    s.sink.csv("turnpike_profiles", &profiles)?;
    let mut summary = header("turnpike-sweep", &s);
    summary["steady_state"] = steady_json(&ss, &s.game);
    summary["rows"] = json!(table.len());
    summary["failed_solves"] = json!(failures);
    summary["verdict"] = json!({
        "outside_count_stable": stable.iter().all(|v| v["stable"] == json!(true)),
        "largest_horizons": stable,
    });
    s.sink.summary("turnpike_sweep", &summary)?;
    Ok(EXIT_OK)
}

fn status_of(e: &Error) -> &'static str {
    match e {
        Error::Infeasible(_) | Error::PerturbationInfeasible { .. } => "infeasible",
        Error::NoConvergence { .. } | Error::MaxIter => "no_convergence",
        _ => "error",
    }
}

fn verdict_json(r: &DissipativityReport) -> Value {
    let (name, c) = match r.verdict {
        Verdict::StrictlyDissipative(c) => ("StrictlyDissipative", c),
        Verdict::DissipativeOnly => ("DissipativeOnly", 0.0),
        Verdict::Violated => ("Violated", 0.0),
    };
    json!({
        "verdict": name,
        "c": c,
        "alpha_coeff": r.alpha_coeff,
        "min_slack": r.min_slack,
        "min_plain_slack": r.min_plain_slack,
        "worst": r.worst.map(|w| json!({ "pair": w.pair, "k": w.k, "slack": w.slack })),
    })
}

pub fn dissipativity(a: &DissipativityArgs) -> Result<i32, CliError> {
    let c = &a.common;
    let s = setup(c)?;
    let mut horizons = sweep_horizons(c);
    horizons.sort_unstable();
    horizons.dedup();
    let x0s = initial_states(c, &s)?;
    let ss = solve_steady_state(&s.game)?;
    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for x0 in &x0s {
        for &n in &horizons {
            pairs.push(solve_gne(&s.game.with_start(n, x0.clone()), &s.opts)?);
            labels.push((n, state_label(x0)));
        }
    }
    let storage = StorageCandidate::seeded(&ss);
    let seeded = check_sdi(&s.game, &ss, &storage, &pairs);
    let telescoping = pairs
        .iter()
        .map(|p| telescoping_residual(&s.game, &ss, &storage, p))
        .fold(0.0, f64::max);
    let fitted = fit_quadratic_storage(&s.game, &ss, &storage, &a.sigma_grid, &pairs);

    let mut slacks = Table::new(["N", "x0", "k", "supply", "storage_change", "slack"]);
    for (pair, (n, label)) in pairs.iter().zip(&labels) {
        for (k, u) in pair.traj.u.iter().enumerate() {
            let x = &pair.traj.x[k];
            let supply = supply_rate(&s.game, &ss, x, u);
            let change = storage.value(&pair.traj.x[k + 1]) - storage.value(x);
            slacks.push(vec![
                n.to_string(),
                label.clone(),
                k.to_string(),
                fmt_f64(supply),
                fmt_f64(change),
                fmt_f64(supply - change),
            ]);
        }
    }
    s.sink.csv("dissipativity", &slacks)?;

    let avail = available_storage(&s.game, &ss, seeded.alpha_coeff, &horizons, &x0s, &s.opts)?;
    let mut avail_table = Table::new(["x0", "N", "partial_sum", "running_max"]);
    for est in &avail {
        for (i, n) in est.horizons.iter().enumerate() {
            avail_table.push(vec![
                state_label(&est.x0),
                n.to_string(),
                fmt_f64(est.partial_sums[i]),
                fmt_f64(est.running_max[i]),
            ]);
        }
    }
    s.sink.csv("available_storage", &avail_table)?;
    let operation = check_optimal_operation(&s.game, &ss, &horizons, &x0s, &s.opts)?;

    let mut summary = header("dissipativity", &s);
    summary["steady_state"] = steady_json(&ss, &s.game);
    summary["horizons"] = json!(horizons);
    summary["verdict"] = json!({
        "seeded_storage": verdict_json(&seeded),
        "telescoping_residual_max": telescoping,
        "quadratic_fit": fitted.as_ref().map(|(cand, r)| json!({
            "sigma": cand.quadratic.as_ref().map_or(0.0, |q| q[(0, 0)]),
            "report": verdict_json(r),
        })),
        "available_storage": avail.iter().map(|e| json!({
            "x0": vec_json(&e.x0),
            "estimate": e.estimate,
            "bounded": e.bounded,
        })).collect::<Vec<_>>(),
        "optimal_operation": operation.iter().map(|o| json!({
            "x0": vec_json(&o.x0),
            "gaps": o.gaps,
            "pass": o.pass,
        })).collect::<Vec<_>>(),
    });
    s.sink.summary("dissipativity", &summary)?;
    Ok(EXIT_OK)
}

pub fn sensitivity(a: &SensitivityArgs) -> Result<i32, CliError> {
    let s = setup(&a.common)?;
    let game = single_run(&a.common, &s)?;
    if !(a.fd_step > 0.0) {
        return Err(config("--fd-step must be positive"));
    }
    let report = value_gradient_check(&game, a.fd_step, &s.opts)?;
    let ss = solve_steady_state(&game)?;
    let pair = solve_gne(&game, &s.opts)?;
    let storage = match storage_gradient_check(&game, &ss, &StorageCandidate::seeded(&ss)) {
        Ok(r) => json!({ "residual": r, "hypothesis": "holds" }),
        Err(Error::HypothesisViolated { extended_residual }) => {
            json!({ "extended_residual": extended_residual, "hypothesis": "violated" })
        }
        Err(e) => return Err(e.into()),
    };
    let mut table = Table::new(["component", "fd_gradient", "dual_sum"]);
    for i in 0..game.n_x() {
        table.push(vec![
            i.to_string(),
            fmt_f64(report.fd_gradient[i]),
            fmt_f64(report.dual_sum[i]),
        ]);
    }
    s.sink.csv("sensitivity", &table)?;
    let mut summary = header("sensitivity", &s);
    summary["N"] = json!(game.horizon);
    summary["x0"] = vec_json(&game.x0);
    summary["fd_step"] = json!(a.fd_step);
    summary["verdict"] = json!({
        "value": report.v_n,
        "fd_gradient": vec_json(&report.fd_gradient),
        "dual_sum": vec_json(&report.dual_sum),
        "rel_error": report.rel_error,
        "constraints_active": report.constraints_active,
        "identity_holds_1e-4": report.identity_holds(1e-4),
        "storage_gradient": storage,
        "initial_dual_gap": initial_dual_gap(&pair, &ss),
    });
    s.sink.summary("sensitivity", &summary)?;
    Ok(EXIT_OK)
}

pub fn penalty(a: &PenaltyArgs) -> Result<i32, CliError> {
    let s = setup(&a.common)?;
    let base = single_run(&a.common, &s)?;
    let eps = single_eps(&a.common, DEFAULT_BALL)?;
    let ss = solve_steady_state(&base)?;
    let mode = a.penalty.as_str();
    let game = match mode {
        "none" => base,
        "lambda_s" => apply_linear_penalty(&base, &steady_state_penalty(&ss))?,
        "terminal" => apply_terminal_constraint(&base, &ss.x_s)?,
        other => match other.strip_prefix("file:") {
            Some(path) => apply_linear_penalty(&base, &load_penalty(path, &base)?)?,
            None => return Err(config(format!("unknown penalty mode {other:?}"))),
        },
    };
    let pair = timed_solve(&game, &s.opts)?;
    let tp = measure_turnpike(&pair.traj, &ss, eps)?;
    let after = tp.deviation_after_entry();
    let no_leaving = tp.entry_index.is_some() && after <= eps;
    s.sink.csv("penalty", &trajectory_table(&game, &pair))?;
    let mut summary = header("penalty", &s);
    summary["penalty"] = json!(mode);
    summary["N"] = json!(game.horizon);
    summary["x0"] = vec_json(&game.x0);
    summary["steady_state"] = steady_json(&ss, &game);
    summary["solution"] = pair_json(&pair);
    summary["verdict"] = json!({
        "no-leaving-arc": no_leaving,
        "eps": eps,
        "entry_index": tp.entry_index,
        "leaving_index": tp.leaving_index,
        "max_dev_after_entry": after,
        "final_deviation": tp.state_deviation[game.horizon],
    });
    s.sink.summary("penalty", &summary)?;
    Ok(exit_for(pair.epsilon <= EPS_CERTIFIED))
}

pub fn learn(a: &LearnArgs) -> Result<i32, CliError> {
    let s = setup(&a.common)?;
    let game = single_run(&a.common, &s)?;
    let opts = LearnOptions {
        i_max: a.imax,
        eps_stop: a.eps_stop,
        entry_eps: single_eps(&a.common, DEFAULT_ENTRY_BALL)?,
        p_init: None,
        solver: s.opts,
    };
    let state = learn_penalty(&game, &opts)?;
    let n = game.n_x();
    let mut cols = vec!["iteration".to_string(), "delta".into(), "leaving_deviation".into()];
    for v in 0..game.agents() {
        cols.extend((0..n).map(|i| format!("p[{}][{i}]", v + 1)));
    }
    let mut table = Table::new(cols);
    for rec in &state.history {
        let mut row = vec![
            rec.iteration.to_string(),
            fmt_f64(rec.delta),
            fmt_f64(rec.leaving_deviation),
        ];
        row.extend(rec.p.iter().flat_map(|p| p.iter().map(|&x| fmt_f64(x))));
        table.push(row);
    }
    s.sink.csv("learn", &table)?;
    let mut summary = header("learn", &s);
    summary["N"] = json!(game.horizon);
    summary["x0"] = vec_json(&game.x0);
    summary["history"] = json!(state
        .history
        .iter()
        .map(|r| json!({
            "iteration": r.iteration,
            "p": r.p.iter().map(vec_json).collect::<Vec<_>>(),
            "delta": num(r.delta),
            "leaving_deviation": r.leaving_deviation,
        }))
        .collect::<Vec<_>>());
    summary["verdict"] = json!({
        "iterations": state.iteration,
        "final_delta": num(state.delta),
        "aborted": state.aborted.as_ref().map(|e| e.to_string()),
    });
    s.sink.summary("learn", &summary)?;
    Ok(match state.aborted {
        Some(e) => CliError::Core(e).exit_code(),
        None => EXIT_OK,
    })
}
