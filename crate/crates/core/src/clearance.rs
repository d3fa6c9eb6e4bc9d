//! Clearance-dependent safety functions and most-constraining-object
//! selection.
//!
//! The achievable safety `s` at a step is capped by
//! `f_s(d) + s_lon`, where `d` is the footprint-to-footprint lateral
//! distance to the closest relevant object on a side and `s_lon` an
//! offset growing with the longitudinal gap to it.

use crate::tube::Side;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sigmoid `f_s(d) = s_target / (1 + exp(-a (d - b)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyFunctionParams {
    /// Steepness, 1/m.
    pub a: f64,
    /// Midpoint, m.
    pub b: f64,
    pub s_target: f64,
}

/// Saturating exponential `f_lon(d) = s_target (1 - exp(-c |d|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalSafetyParams {
    /// Decay rate, 1/m.
    pub c: f64,
    pub s_target: f64,
}

fn unit_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn f_s(d: f64, p: &SafetyFunctionParams) -> f64 {
    p.s_target * unit_sigmoid(p.a * (d - p.b))
}

/// `d f_s / d d = s_target a sigma (1 - sigma)`.
pub fn f_s_derivative(d: f64, p: &SafetyFunctionParams) -> f64 {
    let sigma = unit_sigmoid(p.a * (d - p.b));
    p.s_target * p.a * sigma * (1.0 - sigma)
}

pub fn f_s_second_derivative(d: f64, p: &SafetyFunctionParams) -> f64 {
    let sigma = unit_sigmoid(p.a * (d - p.b));
    p.s_target * p.a * p.a * sigma * (1.0 - sigma) * (1.0 - 2.0 * sigma)
}

pub fn f_lon(d_lon: f64, p: &LongitudinalSafetyParams) -> f64 {
    p.s_target * -(-p.c * d_lon.abs()).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Pedestrian,
    Bicycle,
    Car,
    Generic,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 4] = [
        ObjectClass::Pedestrian,
        ObjectClass::Bicycle,
        ObjectClass::Car,
        ObjectClass::Generic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Bicycle => "bicycle",
            ObjectClass::Car => "car",
            ObjectClass::Generic => "generic",
        }
    }
}

/// Shape of the safety functions for one object class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassShape {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ClassShape {
    fn default() -> Self {
        Self {
            a: 2.0,
            b: 1.5,
            c: 0.2,
        }
    }
}

/// Safety parameterization for all classes, sharing one target safety.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafetyConfig {
    pub s_target: f64,
    pub pedestrian: ClassShape,
    pub bicycle: ClassShape,
    pub car: ClassShape,
    pub generic: ClassShape,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            s_target: 1.0,
            pedestrian: ClassShape::default(),
            bicycle: ClassShape::default(),
            car: ClassShape::default(),
            generic: ClassShape::default(),
        }
    }
}

impl SafetyConfig {
    pub fn shape(&self, class: ObjectClass) -> &ClassShape {
        match class {
            ObjectClass::Pedestrian => &self.pedestrian,
            ObjectClass::Bicycle => &self.bicycle,
            ObjectClass::Car => &self.car,
            ObjectClass::Generic => &self.generic,
        }
    }

    pub fn shape_mut(&mut self, class: ObjectClass) -> &mut ClassShape {
        match class {
            ObjectClass::Pedestrian => &mut self.pedestrian,
            ObjectClass::Bicycle => &mut self.bicycle,
            ObjectClass::Car => &mut self.car,
            ObjectClass::Generic => &mut self.generic,
        }
    }

    pub fn lateral(&self, class: ObjectClass) -> SafetyFunctionParams {
        let s = self.shape(class);
        SafetyFunctionParams {
            a: s.a,
            b: s.b,
            s_target: self.s_target,
        }
    }

    pub fn longitudinal(&self, class: ObjectClass) -> LongitudinalSafetyParams {
        LongitudinalSafetyParams {
            c: self.shape(class).c,
            s_target: self.s_target,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.s_target.is_finite()
            && self.s_target > 0.0
            && ObjectClass::ALL.iter().all(|&c| {
                let s = self.shape(c);
                s.a.is_finite() && s.a > 0.0 && s.b.is_finite() && s.b >= 0.0 && s.c.is_finite() && s.c > 0.0
            })
    }
}

/// Predicted relation of one road agent to the reference over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub id: String,
    pub class: ObjectClass,
    pub side: Vec<Side>,
    /// Footprint-adjusted lateral distance from the reference, m, >= 0.
    pub d_ref: Vec<f64>,
    /// Signed footprint-adjusted longitudinal distance, m.
    pub d_lon: Vec<f64>,
}

/// The object binding one side at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideClearance {
    pub d_ref: f64,
    pub s_lon: f64,
    pub params: SafetyFunctionParams,
    /// Index of the selected object in the input list.
    pub object: usize,
}

impl SideClearance {
    /// Safety cap for a given lateral error; `side` decides the sign with
    /// which the lateral error widens the gap.
    pub fn cap(&self, side: Side, e_lat: f64) -> f64 {
        f_s(side_distance(side, self.d_ref, e_lat), &self.params) + self.s_lon
    }
}

/// Actual lateral distance to an object on `side` when displaced by `e_lat`.
pub fn side_distance(side: Side, d_ref: f64, e_lat: f64) -> f64 {
    match side {
        Side::Left => d_ref - e_lat,
        Side::Right => d_ref + e_lat,
    }
}

/// Per-step distance parameters handed to the MPC. `None` marks a side with
/// no relevant object.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClearanceInputs {
    pub left: Vec<Option<SideClearance>>,
    pub right: Vec<Option<SideClearance>>,
}

impl ClearanceInputs {
    pub fn empty(steps: usize) -> Self {
        Self {
            left: vec![None; steps],
            right: vec![None; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn side(&self, side: Side) -> &[Option<SideClearance>] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn any_active(&self) -> bool {
        self.left.iter().chain(&self.right).any(Option::is_some)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClearanceError {
    #[error("object {id}: track has {got} steps, expected {expected}")]
    TrackLength {
        id: String,
        expected: usize,
        got: usize,
    },
}

/// Picks per step and side the object minimizing `f_s(d_ref) + s_lon`
/// under its class parameters. Objects whose score exceeds `s_target` are
/// ignored; ties go to the lowest index.
pub fn select_most_constraining(
    objects: &[ObjectTrack],
    safety: &SafetyConfig,
    steps: usize,
) -> Result<ClearanceInputs, ClearanceError> {
    for o in objects {
        for got in [o.side.len(), o.d_ref.len(), o.d_lon.len()] {
            if got != steps {
                return Err(ClearanceError::TrackLength {
                    id: o.id.clone(),
                    expected: steps,
                    got,
                });
            }
        }
    }
    let mut out = ClearanceInputs::empty(steps);
    for k in 0..steps {
        let mut best: [Option<(f64, SideClearance)>; 2] = [None, None];
        for (i, o) in objects.iter().enumerate() {
            let params = safety.lateral(o.class);
            let s_lon = f_lon(o.d_lon[k], &safety.longitudinal(o.class));
            let d_ref = o.d_ref[k].max(0.0);
            let score = f_s(d_ref, &params) + s_lon;
            if score > safety.s_target {
                continue;
            }
            let slot = match o.side[k] {
                Side::Left => &mut best[0],
                Side::Right => &mut best[1],
            };
            if slot.as_ref().is_none_or(|(b, _)| score < *b) {
                *slot = Some((
                    score,
                    SideClearance {
                        d_ref,
                        s_lon,
                        params,
                        object: i,
                    },
                ));
            }
        }
        out.left[k] = best[0].map(|(_, c)| c);
        out.right[k] = best[1].map(|(_, c)| c);
    }
    Ok(out)
}
