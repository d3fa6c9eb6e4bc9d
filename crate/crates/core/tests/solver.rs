mod common;

use clearance_mpc::dynamics::{ControlInput, VehicleState};
use clearance_mpc::problem::{MpcProblem, ProblemError};
use clearance_mpc::solver::{solve, warm_start_shift, Outcome, SolveError, Solver, SolverConfig};
use clearance_mpc::tube::TubeBounds;
use common::{random_problem, straight_problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn assert_feasible(p: &MpcProblem, v: &clearance_mpc::DecisionVariables) {
    let res = p.evaluate_constraints(v);
    assert!(res.max_dynamics_defect() <= 1e-9, "defect {}", res.max_dynamics_defect());
    for row in res.stages.iter().flatten() {
        assert!(row.value <= 1e-9, "{row:?}");
    }
    assert!(v.slacks.iter().all(|e| *e >= 0.0));
}

#[test]
fn zero_input_is_optimal_on_reference() {
    for alpha in [0.0, 1.0, 50.0] {
        let mut p = straight_problem(30, 0.05, 8.0, 0.8);
        p.weights.alpha = alpha;
        let (sol, status) = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(status.outcome, Outcome::Converged);
        assert!(sol.variables.inputs.iter().all(|c| c.u.abs() < 1e-6));
        assert!(sol.objective < 1e-9, "{}", sol.objective);
        assert!(sol.variables.safety.iter().all(|s| (s - 1.0).abs() < 1e-9));
    }
}

#[test]
fn offset_start_steers_back() {
    let mut p = straight_problem(60, 0.05, 8.0, 0.8);
    p.initial_state.y = 0.5;
    let (sol, status) = solve(&p, &SolverConfig::default(), None).unwrap();
    assert_eq!(status.outcome, Outcome::Converged);
    assert!(status.kkt_residual <= 1e-6);
    assert!(sol.first_input.u < 0.0);
    let e_end = p.lateral_error_at(60, &sol.variables.states[60]);
    assert!(e_end.abs() < 0.1, "{e_end}");
    assert_feasible(&p, &sol.variables);
}

#[test]
fn two_step_problem_matches_grid_search() {
    let mut p = straight_problem(2, 0.1, 5.0, 2.0);
    p.initial_state = VehicleState::new(0.0, 0.2, 0.05, 0.02, 0.03);
    p.weights.q1 = 50.0;
    p.weights.p1 = 80.0;
    p.weights.r_input = 0.5;
    p.limits.u_min = -10.0;
    p.limits.u_max = 10.0;
    let cost = |u0: f64, u1: f64| {
        let v = p.feasible_rollout(&[ControlInput::new(u0), ControlInput::new(u1)], &[]);
        p.evaluate_cost(&v)
    };
    // coarse grid, then two refinements around the best cell
    let (mut c0, mut c1, mut half) = (0.0, 0.0, 4.0);
    let steps = 200;
    for _ in 0..3 {
        let h = 2.0 * half / steps as f64;
        let mut best = (f64::INFINITY, c0, c1);
        for i in 0..=steps {
            for j in 0..=steps {
                let (u0, u1) = (c0 - half + i as f64 * h, c1 - half + j as f64 * h);
                let v = cost(u0, u1);
                if v < best.0 {
                    best = (v, u0, u1);
                }
            }
        }
        (c0, c1) = (best.1, best.2);
        half = 2.0 * h;
    }
    let resolution = half / 2.0;
    let config = SolverConfig {
        kkt_tolerance: 1e-9,
        ..Default::default()
    };
    let (sol, status) = solve(&p, &config, None).unwrap();
    assert_eq!(status.outcome, Outcome::Converged);
    let u = &sol.variables.inputs;
    assert!((u[0].u - c0).abs() <= resolution, "{} vs {c0}", u[0].u);
    assert!((u[1].u - c1).abs() <= resolution, "{} vs {c1}", u[1].u);
    assert!(sol.objective <= cost(c0, c1) + 1e-12);
}

#[test]
fn crossed_tube_is_absorbed_by_slack() {
    let mut p = straight_problem(20, 0.05, 8.0, 0.8);
    let mut tube = TubeBounds::symmetric(0.8, 21);
    tube.lower[10] = 0.3;
    tube.upper[10] = -0.2;
    p.tube = tube;
    assert_eq!(p.tube.crossed_steps(), vec![10]);
    let (sol, status) = solve(&p, &SolverConfig::default(), None).unwrap();
    assert_eq!(status.outcome, Outcome::Converged);
    assert!(sol.variables.slacks[10] >= 0.25 - 1e-12);
    assert!(sol.diagnostics.active_slacks.contains(&10));
    assert_feasible(&p, &sol.variables);
}

#[test]
fn common_weight_scaling_keeps_the_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let config = SolverConfig {
        kkt_tolerance: 1e-10,
        ..Default::default()
    };
    for _ in 0..30 {
        let p = random_problem(&mut rng, 15);
        let (base, _) = solve(&p, &config, None).unwrap();
        for factor in [0.01, 7.5, 300.0] {
            let mut q = p.clone();
            q.weights = p.weights.scaled(factor);
            let (scaled, _) = solve(&q, &config, None).unwrap();
            let d = (scaled.first_input.u - base.first_input.u).abs();
            assert!(d < 1e-8, "factor {factor}: {d}");
        }
    }
}

#[test]
fn solves_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..10 {
        let p = random_problem(&mut rng, 30);
        let (a, sa) = solve(&p, &SolverConfig::default(), None).unwrap();
        let (b, sb) = solve(&p, &SolverConfig::default(), None).unwrap();
        assert_eq!(a.variables, b.variables);
        assert_eq!(a.diagnostics.merit_history, b.diagnostics.merit_history);
        assert_eq!((sa.iterations, sa.kkt_residual), (sb.iterations, sb.kkt_residual));
        let warm = warm_start_shift(&a.variables, a.variables.states[1], &p).unwrap();
        let (c, _) = solve(&p, &SolverConfig::default(), Some(&warm)).unwrap();
        let (d, _) = solve(&p, &SolverConfig::default(), Some(&warm)).unwrap();
        assert_eq!(c.variables, d.variables);
    }
}

#[test]
fn objective_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let p = random_problem(&mut rng, 20);
        let (sol, _) = solve(&p, &SolverConfig::default(), None).unwrap();
        for (before, after) in &sol.diagnostics.merit_history {
            assert!(after <= before, "{after} > {before}");
        }
    }
}

#[test]
fn shifted_solution_of_a_stationary_vehicle_is_optimal() {
    let mut p = straight_problem(40, 0.05, 0.0, 0.8);
    p.initial_state = VehicleState::new(0.0, 0.0, 0.0, 0.08, 0.1);
    let (first, _) = solve(&p, &SolverConfig::default(), None).unwrap();
    let next_initial = first.variables.states[1];
    let warm = warm_start_shift(&first.variables, next_initial, &p).unwrap();
    p.initial_state = next_initial;
    let (second, status) = solve(&p, &SolverConfig::default(), Some(&warm)).unwrap();
    assert_eq!(status.outcome, Outcome::Converged);
    assert!(status.iterations <= 2, "{}", status.iterations);
    assert!(second.objective <= first.objective);
}

#[test]
fn shift_restores_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for n in [1, 2, 20] {
        let p = random_problem(&mut rng, n);
        let (sol, _) = solve(&p, &SolverConfig::default(), None).unwrap();
        let new_initial = sol.variables.states[1];
        let warm = warm_start_shift(&sol.variables, new_initial, &p).unwrap();
        assert_eq!(warm.states.len(), n + 1);
        assert_eq!(warm.inputs.len(), n);
        assert_eq!(warm.states[0], new_initial);
        if n == 1 {
            // the single input is duplicated
            assert_eq!(warm.inputs[0].u, sol.variables.inputs[0].u);
        }
        let mut q = p.clone();
        q.initial_state = new_initial;
        assert_eq!(q.evaluate_constraints(&warm).max_dynamics_defect(), 0.0);
    }
}

#[test]
fn rejects_bad_inputs() {
    let mut p = straight_problem(10, 0.05, 8.0, 0.8);
    p.initial_state.kappa = 1.0;
    assert!(matches!(
        solve(&p, &SolverConfig::default(), None),
        Err(SolveError::InvalidProblem(ProblemError::InitialCurvature { .. }))
    ));
    let p = straight_problem(10, 0.05, 8.0, 0.8);
    let other = straight_problem(12, 0.05, 8.0, 0.8).feasible_rollout(&[], &[]);
    assert!(matches!(
        solve(&p, &SolverConfig::default(), Some(&other)),
        Err(SolveError::WarmStart(ProblemError::Dimension { .. }))
    ));
    let bad = SolverConfig {
        kkt_tolerance: 0.0,
        ..Default::default()
    };
    assert!(matches!(Solver::new(bad), Err(SolveError::Config)));
}

#[test]
fn time_budget_returns_a_feasible_iterate() {
    let mut p = straight_problem(60, 0.05, 8.0, 0.8);
    p.initial_state.y = 0.7;
    let config = SolverConfig {
        time_budget: 1e-9,
        ..Default::default()
    };
    let (sol, status) = solve(&p, &config, None).unwrap();
    assert_eq!(status.outcome, Outcome::TimeBudgetHit);
    assert_eq!(status.iterations, 1);
    assert_feasible(&p, &sol.variables);
}

#[test]
fn thousand_random_problems_stay_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let mut converged = 0;
    for _ in 0..1000 {
        let p = random_problem(&mut rng, 20);
        let (sol, status) = solve(&p, &SolverConfig::default(), None).expect("never infeasible");
        assert_feasible(&p, &sol.variables);
        assert!(sol.objective.is_finite());
        if status.outcome == Outcome::Converged {
            assert!(status.kkt_residual <= 1e-6 || sol.diagnostics.merit_history.is_empty());
            converged += 1;
        }
    }
    assert!(converged >= 990, "{converged} of 1000 converged");
}
