//! Kinematic bicycle model with first-order steering actuation.
//!
//! The state is `(x, y, theta, kappa, kappa_des)` measured at the rear axle:
//!
//! ```text
//! x'         = v cos(theta)
//! y'         = v sin(theta)
//! theta'     = v kappa
//! kappa'     = (kappa_des - kappa) / tau
//! kappa_des' = u
//! ```
//!
//! Speed `v` is an exogenous per-step parameter and the input `u` is the
//! desired curvature rate. Both are held constant across an integration step.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const STATE_DIM: usize = 5;

pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;

/// Indices into [`StateVector`].
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const THETA: usize = 2;
    pub const KAPPA: usize = 3;
    pub const KAPPA_DES: usize = 4;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kappa: f64,
    pub kappa_des: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, theta: f64, kappa: f64, kappa_des: f64) -> Self {
        Self {
            x,
            y,
            theta,
            kappa,
            kappa_des,
        }
    }

    pub fn to_vector(&self) -> StateVector {
        StateVector::new(self.x, self.y, self.theta, self.kappa, self.kappa_des)
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|c| c.is_finite())
    }

    /// Same state with the heading wrapped into `(-pi, pi]`.
    pub fn normalized(mut self) -> Self {
        self.theta = wrap_angle(self.theta);
        self
    }
}

/// Desired curvature rate, 1/(m s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub u: f64,
}

impl ControlInput {
    pub fn new(u: f64) -> Self {
        Self { u }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Wheelbase, m.
    pub wheelbase: f64,
    /// Steering actuation time constant, s.
    pub tau: f64,
}

impl ModelParams {
    pub fn new(wheelbase: f64, tau: f64) -> Self {
        Self { wheelbase, tau }
    }

    pub fn is_valid(&self) -> bool {
        self.wheelbase.is_finite() && self.wheelbase > 0.0 && self.tau.is_finite() && self.tau > 0.0
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.6,
            tau: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    /// Number of prediction steps N.
    #[serde(rename = "n")]
    pub n_steps: usize,
    /// Sampling time, s.
    pub ts: f64,
}

impl HorizonConfig {
    pub fn new(n_steps: usize, ts: f64) -> Self {
        Self { n_steps, ts }
    }

    pub fn is_valid(&self) -> bool {
        self.n_steps >= 1 && self.ts.is_finite() && self.ts > 0.0
    }
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self {
            n_steps: 60,
            ts: 0.05,
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

fn derivative_vec(x: &StateVector, u: f64, speed: f64, params: &ModelParams) -> StateVector {
    let theta = x[idx::THETA];
    StateVector::new(
        speed * theta.cos(),
        speed * theta.sin(),
        speed * x[idx::KAPPA],
        (x[idx::KAPPA_DES] - x[idx::KAPPA]) / params.tau,
        u,
    )
}

fn derivative_jacobian(x: &StateVector, speed: f64, params: &ModelParams) -> StateMatrix {
    let theta = x[idx::THETA];
    let mut j = StateMatrix::zeros();
    j[(idx::X, idx::THETA)] = -speed * theta.sin();
    j[(idx::Y, idx::THETA)] = speed * theta.cos();
    j[(idx::THETA, idx::KAPPA)] = speed;
    j[(idx::KAPPA, idx::KAPPA)] = -1.0 / params.tau;
    j[(idx::KAPPA, idx::KAPPA_DES)] = 1.0 / params.tau;
    j
}

/// Continuous-time vector field of the model.
pub fn continuous_derivative(
    state: &VehicleState,
    input: ControlInput,
    speed: f64,
    params: &ModelParams,
) -> StateVector {
    derivative_vec(&state.to_vector(), input.u, speed, params)
}

/// One classical RK4 step with speed and input held over `dt`.
pub fn rk4_step(
    state: &VehicleState,
    input: ControlInput,
    speed: f64,
    params: &ModelParams,
    dt: f64,
) -> VehicleState {
    let x = state.to_vector();
    let u = input.u;
    let k1 = derivative_vec(&x, u, speed, params);
    let k2 = derivative_vec(&(x + k1 * (0.5 * dt)), u, speed, params);
    let k3 = derivative_vec(&(x + k2 * (0.5 * dt)), u, speed, params);
    let k4 = derivative_vec(&(x + k3 * dt), u, speed, params);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    VehicleState::from_vector(&next).normalized()
}

/// Result of [`rk4_step_with_jacobians`].
#[derive(Debug, Clone, Copy)]
pub struct StepSensitivity {
    pub next: VehicleState,
    /// d next / d state.
    pub a: StateMatrix,
    /// d next / d u.
    pub b: StateVector,
}

/// RK4 step together with its exact discrete sensitivities, obtained by
/// propagating the chain rule through the four stages.
pub fn rk4_step_with_jacobians(
    state: &VehicleState,
    input: ControlInput,
    speed: f64,
    params: &ModelParams,
    dt: f64,
) -> StepSensitivity {
    let x = state.to_vector();
    let u = input.u;
    let eye = StateMatrix::identity();
    let mut du_f = StateVector::zeros();
    du_f[idx::KAPPA_DES] = 1.0;

    let x1 = x;
    let k1 = derivative_vec(&x1, u, speed, params);
    let f1 = derivative_jacobian(&x1, speed, params);
    let dk1_dx = f1;
    let dk1_du = du_f;

    let x2 = x + k1 * (0.5 * dt);
    let k2 = derivative_vec(&x2, u, speed, params);
    let f2 = derivative_jacobian(&x2, speed, params);
    let dk2_dx = f2 * (eye + dk1_dx * (0.5 * dt));
    let dk2_du = f2 * (dk1_du * (0.5 * dt)) + du_f;

    let x3 = x + k2 * (0.5 * dt);
    let k3 = derivative_vec(&x3, u, speed, params);
    let f3 = derivative_jacobian(&x3, speed, params);
    let dk3_dx = f3 * (eye + dk2_dx * (0.5 * dt));
    let dk3_du = f3 * (dk2_du * (0.5 * dt)) + du_f;

    let x4 = x + k3 * dt;
    let k4 = derivative_vec(&x4, u, speed, params);
    let f4 = derivative_jacobian(&x4, speed, params);
    let dk4_dx = f4 * (eye + dk3_dx * dt);
    let dk4_du = f4 * (dk3_du * dt) + du_f;

    let w = dt / 6.0;
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * w;
    let a = eye + (dk1_dx + dk2_dx * 2.0 + dk3_dx * 2.0 + dk4_dx) * w;
    let b = (dk1_du + dk2_du * 2.0 + dk3_du * 2.0 + dk4_du) * w;
    StepSensitivity {
        next: VehicleState::from_vector(&next).normalized(),
        a,
        b,
    }
}

/// Front-wheel steering angle for a rear-axle curvature.
pub fn steering_angle(kappa: f64, params: &ModelParams) -> f64 {
    (kappa * params.wheelbase).atan()
}
