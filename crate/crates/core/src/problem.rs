//! Finite-horizon nonlinear program of the steering controller.
//!
//! Decision variables per stage `k = 0..=N` are the state `x_k`, the tube
//! slack `eps_k` and the safety variable `s_k`; inputs `u_k` exist for
//! `k < N`. The cost is
//!
//! ```text
//! sum_{k<N} [q1 e_k^2 + q2 dtheta_k^2 + q3 dkappa_k^2 + R u_k^2]
//!   + [p1 e_N^2 + p2 dtheta_N^2 + p3 dkappa_N^2]
//!   + alpha sum_k (s_k - s_target)^2
//!   + sum_k (lambda eps_k + mu eps_k^2)
//! ```
//!
//! subject to RK4 dynamics, input/curvature boxes, the softened tube
//! `lower_k - eps_k <= e_k <= upper_k + eps_k` and, per side with an
//! active object, `s_k <= f_s(d_side,k(e_k)) + s_lon,k`.

use crate::clearance::{f_s_derivative, f_s_second_derivative, side_distance, ClearanceInputs, SideClearance};
use crate::dynamics::{
    idx, rk4_step, rk4_step_with_jacobians, wrap_angle, ControlInput, HorizonConfig,
    ModelParams, StateMatrix, StateVector, VehicleState, STATE_DIM,
};
use crate::reference::{lateral_error, ReferencePoint, ReferenceTrajectory};
use crate::tube::{Side, TubeBounds};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub r_input: f64,
    pub alpha: f64,
    pub slack_linear: f64,
    pub slack_quadratic: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q1: 5.0,
            q2: 10.0,
            q3: 1.0,
            p1: 10.0,
            p2: 20.0,
            p3: 2.0,
            r_input: 10.0,
            alpha: 1.0,
            slack_linear: 100.0,
            slack_quadratic: 1000.0,
        }
    }
}

impl CostWeights {
    /// All weights multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            q1: self.q1 * factor,
            q2: self.q2 * factor,
            q3: self.q3 * factor,
            p1: self.p1 * factor,
            p2: self.p2 * factor,
            p3: self.p3 * factor,
            r_input: self.r_input * factor,
            alpha: self.alpha * factor,
            slack_linear: self.slack_linear * factor,
            slack_quadratic: self.slack_quadratic * factor,
        }
    }

    fn is_valid(&self) -> bool {
        let all = [
            self.q1,
            self.q2,
            self.q3,
            self.p1,
            self.p2,
            self.p3,
            self.r_input,
            self.alpha,
            self.slack_linear,
            self.slack_quadratic,
        ];
        all.iter().all(|w| w.is_finite() && *w >= 0.0)
            && self.r_input > 0.0
            && (self.slack_linear > 0.0 || self.slack_quadratic > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub u_min: f64,
    pub u_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub s_min: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            u_min: -0.3,
            u_max: 0.3,
            kappa_min: -0.25,
            kappa_max: 0.25,
            s_min: 0.0,
        }
    }
}

impl Limits {
    pub fn kappa_ok(&self, kappa: f64) -> bool {
        kappa >= self.kappa_min && kappa <= self.kappa_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVariables {
    pub states: Vec<VehicleState>,
    pub inputs: Vec<ControlInput>,
    pub slacks: Vec<f64>,
    pub safety: Vec<f64>,
}

impl DecisionVariables {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid horizon (need n_steps >= 1, ts > 0)")]
    Horizon,
    #[error("invalid model parameters (need wheelbase > 0, tau > 0)")]
    Model,
    #[error("sampling time {ts} s exceeds twice the actuation time constant {tau} s")]
    StiffActuation { ts: f64, tau: f64 },
    #[error("invalid cost weights")]
    Weights,
    #[error("invalid limits: {0}")]
    Limits(&'static str),
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("initial state is not finite")]
    NonFiniteState,
    #[error("initial {which} = {value} outside [{min}, {max}]")]
    InitialCurvature {
        which: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid target safety {0}")]
    SafetyTarget(f64),
}

/// Sizes of the optimization problem as handed to the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ProblemDimensions {
    pub n_steps: usize,
    pub variables: usize,
    pub safety_variables: usize,
    pub equality_constraints: usize,
    pub inequality_constraints: usize,
    pub safety_constraints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub horizon: HorizonConfig,
    pub model: ModelParams,
    pub weights: CostWeights,
    pub limits: Limits,
    pub reference: ReferenceTrajectory,
    pub tube: TubeBounds,
    pub clearance: ClearanceInputs,
    pub s_target: f64,
    pub initial_state: VehicleState,
}

/// Inequality kinds; each is expressed as `g(z) <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowKind {
    InputUpper,
    InputLower,
    KappaUpper,
    KappaLower,
    KappaDesUpper,
    KappaDesLower,
    TubeUpper,
    TubeLower,
    SlackNonNegative,
    SafetyMin,
    SafetyLeft,
    SafetyRight,
}

impl RowKind {
    /// Hard rows are simple bounds the solver keeps satisfied at every
    /// iterate; the rest are handled through the merit function.
    pub fn is_hard(&self) -> bool {
        !matches!(
            self,
            RowKind::TubeUpper | RowKind::TubeLower | RowKind::SafetyLeft | RowKind::SafetyRight
        )
    }

    pub fn is_state_only(&self) -> bool {
        matches!(
            self,
            RowKind::KappaUpper | RowKind::KappaLower | RowKind::KappaDesUpper | RowKind::KappaDesLower
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inequality {
    pub kind: RowKind,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintResiduals {
    /// `x_0 - x_init`.
    pub initial: StateVector,
    /// `x_{k+1} - rk4(x_k, u_k)` for `k < N`, heading component wrapped.
    pub dynamics: Vec<StateVector>,
    /// Inequalities per stage.
    pub stages: Vec<Vec<Inequality>>,
}

impl ConstraintResiduals {
    pub fn max_dynamics_defect(&self) -> f64 {
        self.dynamics
            .iter()
            .chain(std::iter::once(&self.initial))
            .map(|d| d.amax())
            .fold(0.0, f64::max)
    }

    fn max_violation_where(&self, pred: impl Fn(RowKind) -> bool) -> f64 {
        self.stages
            .iter()
            .flatten()
            .filter(|r| pred(r.kind))
            .map(|r| r.value)
            .fold(0.0, f64::max)
    }

    pub fn max_violation(&self) -> f64 {
        self.max_violation_where(|_| true).max(self.max_dynamics_defect())
    }
}

/// Linearized inequality: `value + dx.dx_k + du du_k + ds ds_k + deps deps_k <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearRow {
    pub kind: RowKind,
    pub value: f64,
    pub dx: StateVector,
    pub du: f64,
    pub ds: f64,
    pub deps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageLinearization {
    /// Dynamics sensitivities towards the next stage (zero at `k = N`).
    pub a: StateMatrix,
    pub b: StateVector,
    /// `rk4(x_k, u_k) - x_{k+1}`, heading wrapped.
    pub defect: StateVector,
    pub grad_x: StateVector,
    pub grad_u: f64,
    pub grad_s: f64,
    pub grad_eps: f64,
    /// Gauss-Newton Hessian blocks.
    pub hess_x: StateMatrix,
    pub hess_u: f64,
    pub hess_s: f64,
    pub hess_eps: f64,
    pub rows: Vec<LinearRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub stages: Vec<StageLinearization>,
}

impl Linearization {
    /// Row kinds per stage; fixed for a given problem.
    pub fn sparsity_pattern(&self) -> Vec<Vec<RowKind>> {
        self.stages
            .iter()
            .map(|s| s.rows.iter().map(|r| r.kind).collect())
            .collect()
    }
}

/// Gradient of the lateral error with respect to the state.
fn lateral_gradient(r: &ReferencePoint) -> StateVector {
    let (nx, ny) = r.normal();
    let mut g = StateVector::zeros();
    g[idx::X] = nx;
    g[idx::Y] = ny;
    g
}

impl MpcProblem {
    pub fn n_steps(&self) -> usize {
        self.horizon.n_steps
    }

    pub fn biasing_active(&self) -> bool {
        self.weights.alpha > 0.0
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !self.horizon.is_valid() {
            return Err(ProblemError::Horizon);
        }
        if !self.model.is_valid() {
            return Err(ProblemError::Model);
        }
        if self.horizon.ts > 2.0 * self.model.tau {
            return Err(ProblemError::StiffActuation {
                ts: self.horizon.ts,
                tau: self.model.tau,
            });
        }
        if !self.weights.is_valid() {
            return Err(ProblemError::Weights);
        }
        let l = &self.limits;
        if !(l.u_min < l.u_max) {
            return Err(ProblemError::Limits("u_min must be below u_max"));
        }
        if !(l.kappa_min < l.kappa_max) {
            return Err(ProblemError::Limits("kappa_min must be below kappa_max"));
        }
        if !(l.s_min.is_finite() && l.s_min <= 0.0) {
            return Err(ProblemError::Limits("s_min must be finite and <= 0"));
        }
        if !(self.s_target.is_finite() && self.s_target > 0.0) {
            return Err(ProblemError::SafetyTarget(self.s_target));
        }
        let n1 = self.n_steps() + 1;
        for (what, got) in [
            ("reference", self.reference.len()),
            ("tube lower bounds", self.tube.lower.len()),
            ("tube upper bounds", self.tube.upper.len()),
            ("left clearance", self.clearance.left.len()),
            ("right clearance", self.clearance.right.len()),
        ] {
            if got != n1 {
                return Err(ProblemError::Dimension {
                    what,
                    expected: n1,
                    got,
                });
            }
        }
        let x0 = &self.initial_state;
        if !x0.is_finite() {
            return Err(ProblemError::NonFiniteState);
        }
        for (which, value) in [("kappa", x0.kappa), ("kappa_des", x0.kappa_des)] {
            if !l.kappa_ok(value) {
                return Err(ProblemError::InitialCurvature {
                    which,
                    value,
                    min: l.kappa_min,
                    max: l.kappa_max,
                });
            }
        }
        Ok(())
    }

    pub fn check_variables(&self, v: &DecisionVariables) -> Result<(), ProblemError> {
        let n = self.n_steps();
        for (what, expected, got) in [
            ("states", n + 1, v.states.len()),
            ("inputs", n, v.inputs.len()),
            ("slacks", n + 1, v.slacks.len()),
            ("safety", n + 1, v.safety.len()),
        ] {
            if got != expected {
                return Err(ProblemError::Dimension {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }

    pub fn dimensions(&self) -> ProblemDimensions {
        let n = self.n_steps();
        let safety_variables = if self.biasing_active() { n + 1 } else { 0 };
        let safety_sides = (0..=n)
            .map(|k| {
                self.clearance.left[k].is_some() as usize + self.clearance.right[k].is_some() as usize
            })
            .sum::<usize>();
        let safety_constraints = if self.biasing_active() {
            safety_sides + n + 1
        } else {
            0
        };
        // input box, kappa and kappa_des boxes, two tube rows, slack sign
        let base = 2 * n + 4 * n + 3 * (n + 1);
        ProblemDimensions {
            n_steps: n,
            variables: STATE_DIM * (n + 1) + n + (n + 1) + safety_variables,
            safety_variables,
            equality_constraints: STATE_DIM * (n + 1),
            inequality_constraints: base + safety_constraints,
            safety_constraints,
        }
    }

    /// Smallest admissible slack at step `k` for lateral error `e`.
    pub fn required_slack(&self, k: usize, e: f64) -> f64 {
        (self.tube.lower[k] - e).max(e - self.tube.upper[k]).max(0.0)
    }

    /// Tightest safety cap at step `k` for lateral error `e`, if any side
    /// is active.
    pub fn safety_cap(&self, k: usize, e: f64) -> Option<f64> {
        let l = self.clearance.left[k].map(|c| c.cap(Side::Left, e));
        let r = self.clearance.right[k].map(|c| c.cap(Side::Right, e));
        match (l, r) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn lateral_error_at(&self, k: usize, s: &VehicleState) -> f64 {
        lateral_error(s.x, s.y, &self.reference[k])
    }

    fn stage_cost(&self, k: usize, v: &DecisionVariables) -> f64 {
        let w = &self.weights;
        let n = self.n_steps();
        let r = &self.reference[k];
        let x = &v.states[k];
        let e = lateral_error(x.x, x.y, r);
        let dth = wrap_angle(x.theta - r.theta_bar);
        let dk = x.kappa - r.kappa_bar;
        let tracking = if k < n {
            w.q1 * e * e + w.q2 * dth * dth + w.q3 * dk * dk + w.r_input * v.inputs[k].u.powi(2)
        } else {
            w.p1 * e * e + w.p2 * dth * dth + w.p3 * dk * dk
        };
        let bias = w.alpha * (v.safety[k] - self.s_target).powi(2);
        let eps = v.slacks[k];
        tracking + bias + w.slack_linear * eps + w.slack_quadratic * eps * eps
    }

    /// Total cost `J_nom + alpha J_bias + slack penalties`.
    pub fn evaluate_cost(&self, v: &DecisionVariables) -> f64 {
        (0..=self.n_steps()).map(|k| self.stage_cost(k, v)).sum()
    }

    /// The `alpha`-free biasing cost `sum (s_k - s_target)^2`.
    pub fn bias_cost(&self, v: &DecisionVariables) -> f64 {
        v.safety.iter().map(|s| (s - self.s_target).powi(2)).sum()
    }

    fn stage_inequalities(&self, k: usize, v: &DecisionVariables) -> Vec<Inequality> {
        let l = &self.limits;
        let n = self.n_steps();
        let x = &v.states[k];
        let e = lateral_error(x.x, x.y, &self.reference[k]);
        let eps = v.slacks[k];
        let s = v.safety[k];
        let mut rows = Vec::with_capacity(12);
        let mut push = |kind, value| rows.push(Inequality { kind, value });
        if k < n {
            let u = v.inputs[k].u;
            push(RowKind::InputUpper, u - l.u_max);
            push(RowKind::InputLower, l.u_min - u);
        }
        push(RowKind::KappaUpper, x.kappa - l.kappa_max);
        push(RowKind::KappaLower, l.kappa_min - x.kappa);
        push(RowKind::KappaDesUpper, x.kappa_des - l.kappa_max);
        push(RowKind::KappaDesLower, l.kappa_min - x.kappa_des);
        push(RowKind::TubeUpper, e - eps - self.tube.upper[k]);
        push(RowKind::TubeLower, self.tube.lower[k] - eps - e);
        push(RowKind::SlackNonNegative, -eps);
        push(RowKind::SafetyMin, l.s_min - s);
        if let Some(c) = &self.clearance.left[k] {
            push(RowKind::SafetyLeft, s - c.cap(Side::Left, e));
        }
        if let Some(c) = &self.clearance.right[k] {
            push(RowKind::SafetyRight, s - c.cap(Side::Right, e));
        }
        rows
    }

    pub fn evaluate_constraints(&self, v: &DecisionVariables) -> ConstraintResiduals {
        let n = self.n_steps();
        let mut initial = v.states[0].to_vector() - self.initial_state.to_vector();
        initial[idx::THETA] = wrap_angle(initial[idx::THETA]);
        let dynamics = (0..n)
            .map(|k| {
                let pred = rk4_step(
                    &v.states[k],
                    v.inputs[k],
                    self.reference[k].v_k,
                    &self.model,
                    self.horizon.ts,
                );
                let mut d = v.states[k + 1].to_vector() - pred.to_vector();
                d[idx::THETA] = wrap_angle(d[idx::THETA]);
                d
            })
            .collect();
        let stages = (0..=n).map(|k| self.stage_inequalities(k, v)).collect();
        ConstraintResiduals {
            initial,
            dynamics,
            stages,
        }
    }

    /// First-order model of the problem around `v`: dynamics sensitivities,
    /// cost gradient, Gauss-Newton Hessian and constraint rows. Where the
    /// safety variable sits on its cap, the cap's curvature times its
    /// multiplier is added to the state Hessian.
    pub fn linearize(&self, v: &DecisionVariables) -> Linearization {
        let n = self.n_steps();
        let w = &self.weights;
        let stages = (0..=n)
            .map(|k| {
                let r = &self.reference[k];
                let x = &v.states[k];
                let ngrad = lateral_gradient(r);
                let e = lateral_error(x.x, x.y, r);
                let dth = wrap_angle(x.theta - r.theta_bar);
                let dk = x.kappa - r.kappa_bar;
                let (c1, c2, c3) = if k < n { (w.q1, w.q2, w.q3) } else { (w.p1, w.p2, w.p3) };

                let mut grad_x = ngrad * (2.0 * c1 * e);
                grad_x[idx::THETA] += 2.0 * c2 * dth;
                grad_x[idx::KAPPA] += 2.0 * c3 * dk;
                let mut hess_x = ngrad * ngrad.transpose() * (2.0 * c1);
                hess_x[(idx::THETA, idx::THETA)] += 2.0 * c2;
                hess_x[(idx::KAPPA, idx::KAPPA)] += 2.0 * c3;
                // keeps at least half of the tracking curvature along the normal
                let curvature = self.safety_curvature(k, v.safety[k], e).max(-c1);
                if curvature != 0.0 {
                    hess_x += ngrad * ngrad.transpose() * curvature;
                }

                let (a, b, defect, grad_u, hess_u) = if k < n {
                    let sens = rk4_step_with_jacobians(x, v.inputs[k], r.v_k, &self.model, self.horizon.ts);
                    let mut defect = sens.next.to_vector() - v.states[k + 1].to_vector();
                    defect[idx::THETA] = wrap_angle(defect[idx::THETA]);
                    (
                        sens.a,
                        sens.b,
                        defect,
                        2.0 * w.r_input * v.inputs[k].u,
                        2.0 * w.r_input,
                    )
                } else {
                    (StateMatrix::zeros(), StateVector::zeros(), StateVector::zeros(), 0.0, 0.0)
                };

                let rows = self
                    .stage_inequalities(k, v)
                    .into_iter()
                    .map(|ineq| self.row_derivative(k, ineq, &ngrad, e))
                    .collect();

                StageLinearization {
                    a,
                    b,
                    defect,
                    grad_x,
                    grad_u,
                    grad_s: 2.0 * w.alpha * (v.safety[k] - self.s_target),
                    grad_eps: w.slack_linear + 2.0 * w.slack_quadratic * v.slacks[k],
                    hess_x,
                    hess_u,
                    hess_s: 2.0 * w.alpha,
                    hess_eps: 2.0 * w.slack_quadratic,
                    rows,
                }
            })
            .collect();
        Linearization { stages }
    }

    /// Curvature of the binding safety cap weighted by its multiplier.
    /// When `s` sits on the cap, the multiplier equals `2 alpha (s_target - s)`.
    fn safety_curvature(&self, k: usize, s: f64, e: f64) -> f64 {
        let lambda = 2.0 * self.weights.alpha * (self.s_target - s);
        if lambda <= 0.0 {
            return 0.0;
        }
        let mut best: Option<(f64, f64)> = None;
        for (side, c) in [(Side::Left, &self.clearance.left[k]), (Side::Right, &self.clearance.right[k])] {
            if let Some(c) = c {
                let cap = c.cap(side, e);
                if best.is_none_or(|(b, _)| cap < b) {
                    let d = side_distance(side, c.d_ref, e);
                    best = Some((cap, -lambda * f_s_second_derivative(d, &c.params)));
                }
            }
        }
        match best {
            Some((cap, curvature)) if (s - cap).abs() <= 1e-12 * (1.0 + cap.abs()) => curvature,
            _ => 0.0,
        }
    }

    fn row_derivative(&self, k: usize, ineq: Inequality, ngrad: &StateVector, e: f64) -> LinearRow {
        let mut row = LinearRow {
            kind: ineq.kind,
            value: ineq.value,
            dx: StateVector::zeros(),
            du: 0.0,
            ds: 0.0,
            deps: 0.0,
        };
        let safety_slope = |c: &SideClearance, side: Side| {
            f_s_derivative(side_distance(side, c.d_ref, e), &c.params)
        };
        match ineq.kind {
            RowKind::InputUpper => row.du = 1.0,
            RowKind::InputLower => row.du = -1.0,
            RowKind::KappaUpper => row.dx[idx::KAPPA] = 1.0,
            RowKind::KappaLower => row.dx[idx::KAPPA] = -1.0,
            RowKind::KappaDesUpper => row.dx[idx::KAPPA_DES] = 1.0,
            RowKind::KappaDesLower => row.dx[idx::KAPPA_DES] = -1.0,
            RowKind::TubeUpper => {
                row.dx = *ngrad;
                row.deps = -1.0;
            }
            RowKind::TubeLower => {
                row.dx = -*ngrad;
                row.deps = -1.0;
            }
            RowKind::SlackNonNegative => row.deps = -1.0,
            RowKind::SafetyMin => row.ds = -1.0,
            RowKind::SafetyLeft => {
                let c = self.clearance.left[k].as_ref().expect("active left side");
                // d_left = d_ref - e, so -d f_s/d e = +f_s'
                row.dx = *ngrad * safety_slope(c, Side::Left);
                row.ds = 1.0;
            }
            RowKind::SafetyRight => {
                let c = self.clearance.right[k].as_ref().expect("active right side");
                row.dx = -*ngrad * safety_slope(c, Side::Right);
                row.ds = 1.0;
            }
        }
        row
    }

    /// Forward rollout of `inputs` from the initial state. Each input is
    /// clipped so that the input box and the curvature boxes hold at every
    /// stage; slacks are set to the minimum the tube needs and safety
    /// variables are clipped into `[s_min, cap]`.
    pub fn feasible_rollout(&self, inputs: &[ControlInput], safety_guess: &[f64]) -> DecisionVariables {
        self.feasible_rollout_from(self.initial_state, inputs, safety_guess)
    }

    /// As [`feasible_rollout`](Self::feasible_rollout), starting from `initial`.
    pub fn feasible_rollout_from(
        &self,
        initial: VehicleState,
        inputs: &[ControlInput],
        safety_guess: &[f64],
    ) -> DecisionVariables {
        let n = self.n_steps();
        let mut states = Vec::with_capacity(n + 1);
        let mut applied = Vec::with_capacity(n);
        let mut x = initial;
        states.push(x);
        for k in 0..n {
            let v = self.reference[k].v_k;
            let want = inputs.get(k).map_or(0.0, |c| c.u);
            let u = self.admissible_input(&x, want, v);
            applied.push(ControlInput::new(u));
            x = rk4_step(&x, ControlInput::new(u), v, &self.model, self.horizon.ts);
            states.push(x);
        }
        let mut vars = DecisionVariables {
            states,
            inputs: applied,
            slacks: vec![0.0; n + 1],
            safety: (0..=n)
                .map(|k| safety_guess.get(k).copied().unwrap_or(self.s_target))
                .collect(),
        };
        self.repair_soft_variables(&mut vars);
        vars
    }

    /// Input closest to `want` keeping the next curvature pair inside its
    /// box. The curvature subsystem is linear, so the admissible set is an
    /// interval that contains zero whenever the current pair is admissible.
    fn admissible_input(&self, x: &VehicleState, want: f64, v: f64) -> f64 {
        let l = &self.limits;
        let sens = rk4_step_with_jacobians(x, ControlInput::new(0.0), v, &self.model, self.horizon.ts);
        let mut lo = l.u_min;
        let mut hi = l.u_max;
        for i in [idx::KAPPA, idx::KAPPA_DES] {
            let base = sens.next.to_vector()[i];
            let slope = sens.b[i];
            if slope > 0.0 {
                lo = lo.max((l.kappa_min - base) / slope);
                hi = hi.min((l.kappa_max - base) / slope);
            }
        }
        if lo > hi {
            // only reachable from an inadmissible state
            return want.clamp(l.u_min, l.u_max);
        }
        want.clamp(lo, hi)
    }

    /// Raises slacks to the tube requirement and clips safety variables to
    /// their admissible range. Leaves a point that satisfies every soft
    /// inequality exactly.
    pub fn repair_soft_variables(&self, v: &mut DecisionVariables) {
        for k in 0..=self.n_steps() {
            let e = self.lateral_error_at(k, &v.states[k]);
            v.slacks[k] = v.slacks[k].max(self.required_slack(k, e));
            let mut s = v.safety[k];
            if let Some(cap) = self.safety_cap(k, e) {
                s = s.min(cap);
            }
            v.safety[k] = s.max(self.limits.s_min);
        }
    }
}
