#![allow(dead_code)]

use clearance_mpc::clearance::{ClearanceInputs, ObjectClass, ObjectTrack, SafetyConfig};
use clearance_mpc::dynamics::{HorizonConfig, ModelParams, VehicleState};
use clearance_mpc::problem::{CostWeights, Limits, MpcProblem};
use clearance_mpc::reference::{discretize_reference, Path};
use clearance_mpc::select_most_constraining;
use clearance_mpc::tube::{Side, TubeBounds};
use rand::Rng;

pub fn straight_problem(n: usize, ts: f64, v: f64, half: f64) -> MpcProblem {
    let horizon = HorizonConfig::new(n, ts);
    let path = Path::from_points(&[(0.0, 0.0), (1000.0, 0.0)]).unwrap();
    let reference = discretize_reference(&path, 0.0, &vec![v; n + 1], &horizon).unwrap();
    MpcProblem {
        horizon,
        model: ModelParams::default(),
        weights: CostWeights::default(),
        limits: Limits::default(),
        reference,
        tube: TubeBounds::symmetric(half, n + 1),
        clearance: ClearanceInputs::empty(n + 1),
        s_target: 1.0,
        initial_state: VehicleState::default(),
    }
}

/// Random but well-posed problem: curved reference, perturbed tube (some
/// steps crossed), random objects and an admissible initial state.
pub fn random_problem<R: Rng>(rng: &mut R, n: usize) -> MpcProblem {
    let ts = rng.gen_range(0.02..0.1);
    let horizon = HorizonConfig::new(n, ts);
    let v: f64 = rng.gen_range(0.0..15.0);
    let speeds: Vec<f64> = (0..=n).map(|_| (v + rng.gen_range(-1.0..1.0f64)).max(0.0)).collect();
    let heading0 = rng.gen_range(-3.1..3.1);
    let path = if rng.gen_bool(0.5) {
        let radius: f64 = rng.gen_range(30.0..200.0);
        let sweep = (300.0 / radius).min(6.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        Path::arc((0.0, 0.0), heading0, radius, sweep, 400).unwrap()
    } else {
        Path::from_points(&[(0.0, 0.0), (300.0 * heading0.cos(), 300.0 * heading0.sin())]).unwrap()
    };
    let reference = discretize_reference(&path, 0.0, &speeds, &horizon).unwrap();

    let mut lower = Vec::with_capacity(n + 1);
    let mut upper = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let half = rng.gen_range(0.2..1.5);
        let shift = rng.gen_range(-0.5..0.5);
        let (mut lo, mut hi) = (shift - half, shift + half);
        if rng.gen_bool(0.1) {
            std::mem::swap(&mut lo, &mut hi);
        }
        lower.push(lo);
        upper.push(hi);
    }

    let mut safety = SafetyConfig::default();
    for class in ObjectClass::ALL {
        let s = safety.shape_mut(class);
        s.a = rng.gen_range(0.5..4.0);
        s.b = rng.gen_range(0.3..2.5);
        s.c = rng.gen_range(0.05..0.5);
    }
    let objects: Vec<ObjectTrack> = (0..rng.gen_range(0..6))
        .map(|i| random_track(rng, i, n + 1))
        .collect();
    let clearance = select_most_constraining(&objects, &safety, n + 1).unwrap();

    let limits = Limits::default();
    let r0 = reference[0];
    let (nx, ny) = r0.normal();
    let off = rng.gen_range(-1.0..1.0);
    let initial_state = VehicleState::new(
        r0.x_bar + off * nx,
        r0.y_bar + off * ny,
        r0.theta_bar + rng.gen_range(-0.3..0.3),
        rng.gen_range(limits.kappa_min..=limits.kappa_max),
        rng.gen_range(limits.kappa_min..=limits.kappa_max),
    );
    let mut weights = CostWeights::default();
    weights.alpha = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.1..20.0) };
    MpcProblem {
        horizon,
        model: ModelParams::new(rng.gen_range(2.0..3.5), rng.gen_range(0.1..0.5)),
        weights,
        limits,
        reference,
        tube: TubeBounds { lower, upper },
        clearance,
        s_target: safety.s_target,
        initial_state,
    }
}

pub fn random_track<R: Rng>(rng: &mut R, i: usize, steps: usize) -> ObjectTrack {
    let class = ObjectClass::ALL[rng.gen_range(0..4)];
    let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
    let d0 = rng.gen_range(0.0..3.0);
    let lon0 = rng.gen_range(-20.0..40.0);
    let closing = rng.gen_range(0.0..1.0);
    ObjectTrack {
        id: format!("obj{i}"),
        class,
        side: vec![side; steps],
        d_ref: vec![d0; steps],
        d_lon: (0..steps).map(|k| lon0 - closing * k as f64).collect(),
    }
}

use clearance_mpc::sim::{AgentSpec, InitialSpec, ReferenceSpec, Road, Scenario, SimSpec, VehicleSpec};

pub fn straight_scenario(duration: f64) -> Scenario {
    Scenario {
        name: "straight".into(),
        model: ModelParams::default(),
        limits: Limits::default(),
        weights: CostWeights::default(),
        safety: SafetyConfig::default(),
        horizon: HorizonConfig::new(60, 0.05),
        road: Road {
            half_width: 1.75,
            shrink_zones: vec![],
        },
        reference: ReferenceSpec {
            path: vec![[0.0, 0.0], [600.0, 0.0]],
            segments: vec![],
            speed: 8.0,
            speed_profile: vec![],
        },
        vehicle: VehicleSpec::default(),
        initial: InitialSpec::default(),
        agents: vec![],
        sim: SimSpec {
            duration,
            plant: Default::default(),
        },
        solver: Default::default(),
    }
}

pub fn pedestrian(id: &str, station: f64, offset: f64) -> AgentSpec {
    AgentSpec {
        id: id.into(),
        class: ObjectClass::Pedestrian,
        station,
        offset,
        vx: 0.0,
        vy: 0.0,
        width: None,
        length: None,
    }
}
