//! Sequential quadratic programming for [`MpcProblem`].
//!
//! Every iterate is a forward rollout of the inputs, so the dynamics hold
//! exactly and the curvature boxes are kept by clipping the inputs. Given
//! the inputs, the best slack is the smallest one the tube admits and the
//! best safety variable is `min(s_target, cap)`; both are filled in after
//! each rollout. Search directions come from a QP over all variables whose
//! Hessian is Gauss-Newton plus the curvature of binding safety caps; steps
//! are accepted by backtracking on the objective.

mod qp;

use crate::dynamics::{ControlInput, VehicleState};
use crate::problem::{DecisionVariables, MpcProblem, ProblemError, RowKind};
use qp::{solve_qp, Mww, Mxw, QpRow, QpSettings, QpStage, Vw, Vx};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_sqp_iterations: usize,
    pub kkt_tolerance: f64,
    pub max_qp_iterations: usize,
    /// Wall-clock budget in seconds; 0 disables it.
    pub time_budget: f64,
    pub warm_start: bool,
    pub regularization_epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_sqp_iterations: 30,
            kkt_tolerance: 1e-6,
            max_qp_iterations: 100,
            time_budget: 0.0,
            warm_start: true,
            regularization_epsilon: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn is_valid(&self) -> bool {
        self.max_sqp_iterations >= 1
            && self.max_qp_iterations >= 1
            && self.kkt_tolerance > 0.0
            && self.time_budget.is_finite()
            && self.time_budget >= 0.0
            && self.regularization_epsilon.is_finite()
            && self.regularization_epsilon >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    MaxIterations,
    TimeBudgetHit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverStatus {
    pub outcome: Outcome,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub qp_iterations: usize,
    /// QPs that stopped at their iteration limit.
    pub qp_failures: usize,
    pub kkt_residual: f64,
    /// Seconds.
    pub solve_time: f64,
    /// Objective before and after each accepted step.
    pub merit_history: Vec<(f64, f64)>,
    /// Steps whose tube slack is positive.
    pub active_slacks: Vec<usize>,
    pub max_slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub variables: DecisionVariables,
    pub objective: f64,
    pub first_input: ControlInput,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    InvalidProblem(#[from] ProblemError),
    #[error("invalid warm start: {0}")]
    WarmStart(ProblemError),
    #[error("invalid solver configuration")]
    Config,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;

/// Shifts `previous` by one stage, repeats its last input and rolls the
/// dynamics forward from `new_initial`.
pub fn warm_start_shift(
    previous: &DecisionVariables,
    new_initial: VehicleState,
    problem: &MpcProblem,
) -> Result<DecisionVariables, ProblemError> {
    problem.check_variables(previous)?;
    let mut inputs: Vec<ControlInput> = previous.inputs.iter().skip(1).copied().collect();
    inputs.push(*previous.inputs.last().expect("horizon >= 1"));
    let mut safety: Vec<f64> = previous.safety.iter().skip(1).copied().collect();
    safety.push(*previous.safety.last().expect("horizon >= 1"));
    Ok(problem.feasible_rollout_from(new_initial, &inputs, &safety))
}

/// Solver instance; holds only its configuration.
#[derive(Debug, Clone, Default)]
pub struct Solver {
    config: SolverConfig,
}

pub fn solve(
    problem: &MpcProblem,
    config: &SolverConfig,
    warm_start: Option<&DecisionVariables>,
) -> Result<(MpcSolution, SolverStatus), SolveError> {
    Solver::new(*config)?.solve(problem, warm_start)
}

struct Step {
    du: Vec<f64>,
    /// `g'd` of the QP step.
    slope: f64,
    kkt: f64,
    qp_iterations: usize,
    qp_converged: bool,
    lambda: Vec<Vec<f64>>,
}

impl Solver {
    pub fn new(config: SolverConfig) -> Result<Self, SolveError> {
        if !config.is_valid() {
            return Err(SolveError::Config);
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn solve(
        &self,
        problem: &MpcProblem,
        warm_start: Option<&DecisionVariables>,
    ) -> Result<(MpcSolution, SolverStatus), SolveError> {
        let start = Instant::now();
        problem.validate()?;
        let cfg = &self.config;
        let guess: Vec<ControlInput> = match warm_start {
            Some(w) if cfg.warm_start => {
                problem.check_variables(w).map_err(SolveError::WarmStart)?;
                w.inputs.clone()
            }
            _ => Vec::new(),
        };
        let mut z = problem.feasible_rollout(&guess, &[]);
        let mut objective = problem.evaluate_cost(&z);
        let scale = weight_scale(problem);

        let mut merit_history = Vec::new();
        let mut qp_iterations = 0;
        let mut qp_failures = 0;
        let mut iterations = 0;
        let mut kkt = f64::INFINITY;
        let mut outcome = Outcome::MaxIterations;
        let mut duals: Option<Vec<Vec<f64>>> = None;
        while iterations < cfg.max_sqp_iterations {
            iterations += 1;
            let step = self.direction(problem, &z, scale, duals.as_deref());
            qp_iterations += step.qp_iterations;
            qp_failures += usize::from(!step.qp_converged);
            kkt = step.kkt;
            duals = step.qp_converged.then(|| step.lambda.clone());

            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_BACKTRACKS {
                let inputs: Vec<ControlInput> = z
                    .inputs
                    .iter()
                    .zip(&step.du)
                    .map(|(c, d)| ControlInput::new(c.u + alpha * d))
                    .collect();
                let trial = problem.feasible_rollout(&inputs, &[]);
                let value = problem.evaluate_cost(&trial);
                if value <= objective + ARMIJO * alpha * step.slope.min(0.0) {
                    accepted = Some((trial, value));
                    break;
                }
                alpha *= 0.5;
            }
            let stepped = accepted.is_some();
            if let Some((trial, value)) = accepted {
                merit_history.push((objective, value));
                z = trial;
                objective = value;
            }

            if kkt <= cfg.kkt_tolerance {
                outcome = Outcome::Converged;
                break;
            }
            if !stepped {
                // no decrease even for tiny steps: stationary up to rounding
                if step.slope.abs() <= 1e-12 * (1.0 + objective.abs()) {
                    outcome = Outcome::Converged;
                }
                break;
            }
            if cfg.time_budget > 0.0 && start.elapsed().as_secs_f64() >= cfg.time_budget {
                outcome = Outcome::TimeBudgetHit;
                break;
            }
        }

        let wall_time = start.elapsed().as_secs_f64();
        let active_slacks: Vec<usize> = (0..z.slacks.len()).filter(|&k| z.slacks[k] > 0.0).collect();
        let max_slack = z.slacks.iter().copied().fold(0.0, f64::max);
        let first_input = z.inputs[0];
        let solution = MpcSolution {
            variables: z,
            objective,
            first_input,
            diagnostics: SolveDiagnostics {
                iterations,
                qp_iterations,
                qp_failures,
                kkt_residual: kkt,
                solve_time: wall_time,
                merit_history,
                active_slacks,
                max_slack,
            },
        };
        let status = SolverStatus {
            outcome,
            kkt_residual: kkt,
            iterations,
            wall_time,
        };
        Ok((solution, status))
    }

    /// Builds and solves the QP at `z`.
    fn direction(&self, problem: &MpcProblem, z: &DecisionVariables, scale: f64, duals: Option<&[Vec<f64>]>) -> Step {
        let lin = problem.linearize(z);
        let n = problem.n_steps();
        let biasing = problem.biasing_active();
        let mut stages = Vec::with_capacity(n + 1);
        // per QP row: (value at z) for the complementarity measure
        let mut row_values: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        for (k, st) in lin.stages.iter().enumerate() {
            let mut b = Mxw::zeros();
            b.set_column(0, &st.b);
            let h_w = Mww::from_diagonal(&Vw::new(
                if k < n { st.hess_u } else { 1.0 },
                if biasing { st.hess_s } else { 1.0 },
                st.hess_eps,
            ));
            let g_w = Vw::new(st.grad_u, if biasing { st.grad_s } else { 0.0 }, st.grad_eps);
            let mut rows = Vec::with_capacity(st.rows.len());
            let mut values = Vec::with_capacity(st.rows.len());
            for r in &st.rows {
                let safety_row = matches!(r.kind, RowKind::SafetyMin | RowKind::SafetyLeft | RowKind::SafetyRight);
                if (k == 0 && r.kind.is_state_only()) || (safety_row && !biasing) {
                    continue;
                }
                rows.push(QpRow {
                    dx: Vx::from_iterator(r.dx.iter().copied()),
                    dw: Vw::new(r.du, r.ds, r.deps),
                    rhs: -r.value,
                });
                values.push(r.value);
            }
            stages.push(QpStage {
                a: st.a,
                b,
                c: Vx::from_iterator(st.defect.iter().copied()),
                h_x: st.hess_x,
                h_w,
                g_x: st.grad_x,
                g_w,
                rows,
            });
            row_values.push(values);
        }
        let sol = solve_qp(
            &stages,
            &QpSettings {
                tolerance: (self.config.kkt_tolerance * 1e-6).max(1e-14),
                residual_tolerance: 1e-9,
                max_iterations: self.config.max_qp_iterations,
                regularization: self.config.regularization_epsilon,
            },
            duals,
        );

        let mut slope = 0.0;
        let mut stationarity: f64 = 0.0;
        let mut complementarity: f64 = 0.0;
        for (k, st) in stages.iter().enumerate() {
            slope += st.g_x.dot(&sol.x[k]) + st.g_w.dot(&sol.w[k]);
            stationarity = stationarity
                .max((st.h_x * sol.x[k]).amax())
                .max((st.h_w * sol.w[k]).amax());
            for (l, v) in sol.lambda[k].iter().zip(&row_values[k]) {
                complementarity = complementarity.max((l * v).abs());
            }
        }
        Step {
            du: sol.w[..n].iter().map(|w| w[0]).collect(),
            slope,
            kkt: stationarity.max(complementarity) / scale,
            qp_iterations: sol.iterations,
            qp_converged: sol.converged,
            lambda: sol.lambda,
        }
    }
}

/// Magnitude of the cost weights; makes the stationarity measure
/// invariant to a common rescaling of the weights.
fn weight_scale(problem: &MpcProblem) -> f64 {
    let w = &problem.weights;
    [
        w.q1,
        w.q2,
        w.q3,
        w.p1,
        w.p2,
        w.p3,
        w.r_input,
        w.alpha,
        w.slack_linear,
        w.slack_quadratic,
    ]
    .into_iter()
    .fold(0.0, f64::max)
    .max(f64::MIN_POSITIVE)
}
