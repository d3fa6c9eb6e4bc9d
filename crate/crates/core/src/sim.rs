//! Receding-horizon closed-loop simulation.
//!
//! Each cycle measures the plant, rebuilds the reference window, tube and
//! agent tracks, solves the MPC problem (warm-started from the shifted
//! previous solution) and applies the first input for one sampling period.

use crate::clearance::{select_most_constraining, ClearanceError, ObjectClass, ObjectTrack, SafetyConfig};
use crate::dynamics::{rk4_step, ControlInput, HorizonConfig, ModelParams, VehicleState};
use crate::problem::{CostWeights, DecisionVariables, Limits, MpcProblem, ProblemDimensions};
use crate::reference::{discretize_reference, Path, ReferenceError, ReferencePoint};
use crate::solver::{warm_start_shift, Outcome, SolveError, Solver, SolverConfig};
use crate::tube::{build_tube, ObstacleCut, Side};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub model: ModelParams,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub safety: SafetyConfig,
    pub horizon: HorizonConfig,
    pub road: Road,
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub agents: Vec<AgentSpec>,
    pub sim: SimSpec,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    /// Nominal lane half-width, m.
    pub half_width: f64,
    #[serde(default)]
    pub shrink_zones: Vec<ShrinkZoneSpec>,
}

/// Lane narrowing over a station interval, reached linearly over
/// `taper_length` metres before `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkZoneSpec {
    pub start: f64,
    pub end: f64,
    pub half_width: f64,
    #[serde(default)]
    pub taper_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Polyline vertices `[x, y]`, m.
    #[serde(default)]
    pub path: Vec<[f64; 2]>,
    /// Alternative to `path`: consecutive pieces starting at the origin
    /// with heading 0.
    #[serde(default)]
    pub segments: Vec<PathSegment>,
    /// Constant speed, m/s; used when `speed_profile` is empty.
    pub speed: f64,
    /// Optional `[t, v]` breakpoints, linearly interpolated in time.
    #[serde(default)]
    pub speed_profile: Vec<[f64; 2]>,
}

/// A road piece whose curvature varies linearly from `curvature` to
/// `curvature_end` (defaults to `curvature`) over `length` metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSegment {
    pub length: f64,
    #[serde(default)]
    pub curvature: f64,
    pub curvature_end: Option<f64>,
}

const SEGMENT_SPACING: f64 = 0.5;

impl ReferenceSpec {
    /// Polyline vertices of the reference path.
    pub fn vertices(&self) -> Vec<(f64, f64)> {
        if self.segments.is_empty() {
            return self.path.iter().map(|p| (p[0], p[1])).collect();
        }
        let (mut x, mut y, mut heading) = (0.0, 0.0, 0.0);
        let mut pts = vec![(x, y)];
        for seg in &self.segments {
            let k1 = seg.curvature_end.unwrap_or(seg.curvature);
            let steps = (seg.length / SEGMENT_SPACING).ceil().max(1.0) as usize;
            let ds = seg.length / steps as f64;
            for i in 0..steps {
                // midpoint rule on heading keeps arcs exact to second order
                let f = (i as f64 + 0.5) / steps as f64;
                let kappa = seg.curvature + f * (k1 - seg.curvature);
                let mid = heading + 0.5 * kappa * ds;
                x += ds * mid.cos();
                y += ds * mid.sin();
                heading += kappa * ds;
                pts.push((x, y));
            }
        }
        pts
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let prof = &self.speed_profile;
        match prof.len() {
            0 => self.speed,
            1 => prof[0][1],
            _ => {
                if t <= prof[0][0] {
                    return prof[0][1];
                }
                for w in prof.windows(2) {
                    if t <= w[1][0] {
                        let f = (t - w[0][0]) / (w[1][0] - w[0][0]);
                        return w[0][1] + f * (w[1][1] - w[0][1]);
                    }
                }
                prof[prof.len() - 1][1]
            }
        }
    }

    fn max_speed(&self) -> f64 {
        self.speed_profile
            .iter()
            .map(|p| p[1])
            .fold(if self.speed_profile.is_empty() { self.speed } else { 0.0 }, f64::max)
    }
}

/// Footprint of the vehicle, centred on the middle of the wheelbase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSpec {
    pub width: f64,
    pub length: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self {
            width: 1.8,
            length: 4.5,
        }
    }
}

/// Initial pose relative to the path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub station: f64,
    pub lateral_offset: f64,
    pub heading_offset: f64,
}

/// A scripted agent: placed at `station`/`offset` along the path at `t = 0`
/// and moving with constant world-frame velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: String,
    pub class: ObjectClass,
    pub station: f64,
    pub offset: f64,
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    pub width: Option<f64>,
    pub length: Option<f64>,
}

impl AgentSpec {
    pub fn width(&self) -> f64 {
        self.width.unwrap_or(match self.class {
            ObjectClass::Pedestrian => 0.5,
            ObjectClass::Bicycle => 0.6,
            ObjectClass::Car => 1.8,
            ObjectClass::Generic => 1.0,
        })
    }

    pub fn length(&self) -> f64 {
        self.length.unwrap_or(match self.class {
            ObjectClass::Pedestrian => 0.5,
            ObjectClass::Bicycle => 1.8,
            ObjectClass::Car => 4.5,
            ObjectClass::Generic => 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    /// Simulated time, s.
    pub duration: f64,
    #[serde(default)]
    pub plant: PlantOptions,
}

/// Plant deviations from the controller model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantOptions {
    /// With the lag off the curvature follows its command instantly.
    pub actuation_lag: bool,
    pub tau_scale: f64,
    /// Plant wheelbase over model wheelbase; scales the realized curvature.
    pub wheelbase_scale: f64,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            actuation_lag: true,
            tau_scale: 1.0,
            wheelbase_scale: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("reference: {0}")]
    Reference(#[from] ReferenceError),
    #[error("clearance: {0}")]
    Clearance(#[from] ClearanceError),
    #[error("solver at t = {t:.3} s: {source}")]
    Solve { t: f64, source: SolveError },
}

/// Agent position relative to the vehicle footprint centre, in the
/// vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgentRelative {
    pub lon: f64,
    pub lat: f64,
    /// Lateral footprint-to-footprint distance.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub t: f64,
    pub state: VehicleState,
    pub u: f64,
    pub e_lat: f64,
    pub tube_lower: f64,
    pub tube_upper: f64,
    pub eps_max: f64,
    /// Slack of the measured stage.
    pub eps_now: f64,
    pub safety_now: f64,
    pub iterations: usize,
    pub qp_iterations: usize,
    pub solve_ms: f64,
    pub outcome: Outcome,
    pub kkt_residual: f64,
    /// Distance between the predicted stage-1 state and the next measurement.
    pub prediction_error: f64,
    pub agents: Vec<AgentRelative>,
}

/// Lateral clearance where an agent's longitudinal displacement crosses zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearanceEvent {
    pub agent: String,
    pub t: f64,
    pub clearance: f64,
    pub e_lat: f64,
    /// Side of the vehicle the agent was passed on.
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub name: String,
    pub ts: f64,
    pub agent_ids: Vec<String>,
    pub dimensions: ProblemDimensions,
    pub cycles: Vec<CycleRecord>,
    pub events: Vec<ClearanceEvent>,
}

impl SimTrace {
    pub fn solve_times_ms(&self) -> Vec<f64> {
        self.cycles.iter().map(|c| c.solve_ms).collect()
    }

    pub fn peak_input(&self) -> f64 {
        self.cycles.iter().map(|c| c.u.abs()).fold(0.0, f64::max)
    }

    pub fn min_clearance(&self) -> Option<f64> {
        self.events.iter().map(|e| e.clearance).reduce(f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingStats {
    pub average_ms: f64,
    pub maximum_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
}

/// Nearest-rank percentiles of `samples` (ms).
pub fn timing_stats(samples: &[f64]) -> TimingStats {
    if samples.is_empty() {
        return TimingStats {
            average_ms: 0.0,
            maximum_ms: 0.0,
            p50_ms: 0.0,
            p95_ms: 0.0,
            p99_ms: 0.0,
        };
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
        sorted[rank.clamp(1, sorted.len()) - 1]
    };
    TimingStats {
        average_ms: samples.iter().sum::<f64>() / samples.len() as f64,
        maximum_ms: sorted[sorted.len() - 1],
        p50_ms: pct(50.0),
        p95_ms: pct(95.0),
        p99_ms: pct(99.0),
    }
}

impl Scenario {
    pub fn cycles(&self) -> usize {
        (self.sim.duration / self.horizon.ts).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        if !(self.sim.duration.is_finite() && self.sim.duration > 0.0) {
            return bad("sim.duration must be positive");
        }
        if !self.horizon.is_valid() {
            return bad("horizon needs n >= 1 and ts > 0");
        }
        if self.cycles() == 0 {
            return bad("sim.duration is shorter than one sampling period");
        }
        if !self.model.is_valid() {
            return bad("model needs wheelbase > 0 and tau > 0");
        }
        if !self.safety.is_valid() {
            return bad("safety parameters must be positive and finite");
        }
        if !self.solver.is_valid() {
            return bad("solver settings out of range");
        }
        if !(self.road.half_width.is_finite() && self.road.half_width > 0.0) {
            return bad("road.half_width must be positive");
        }
        for z in &self.road.shrink_zones {
            if !(z.end >= z.start && z.half_width > 0.0 && z.taper_length >= 0.0) {
                return bad("shrink zone needs end >= start, half_width > 0, taper_length >= 0");
            }
        }
        if !(self.vehicle.width > 0.0 && self.vehicle.length > 0.0) {
            return bad("vehicle dimensions must be positive");
        }
        let r = &self.reference;
        if !(r.speed.is_finite() && r.speed >= 0.0) || r.speed_profile.iter().any(|p| !(p[1] >= 0.0 && p[1].is_finite())) {
            return bad("reference speeds must be finite and non-negative");
        }
        if r.path.is_empty() == r.segments.is_empty() {
            return bad("reference needs exactly one of path and segments");
        }
        if r.segments.iter().any(|sg| {
            !(sg.length.is_finite() && sg.length > 0.0 && sg.curvature.is_finite())
                || sg.curvature_end.is_some_and(|k| !k.is_finite())
        }) {
            return bad("segments need finite curvature and positive length");
        }
        if r.speed_profile.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return bad("speed_profile times must be increasing");
        }
        let p = &self.sim.plant;
        if !(p.tau_scale > 0.0 && p.wheelbase_scale > 0.0) {
            return bad("plant scale factors must be positive");
        }
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].iter().any(|b| b.id == a.id) {
                return Err(SimError::Invalid(format!("duplicate agent id {:?}", a.id)));
            }
            if !(a.width() > 0.0 && a.length() > 0.0) {
                return bad("agent dimensions must be positive");
            }
            if ![a.station, a.offset, a.vx, a.vy].iter().all(|v| v.is_finite()) {
                return bad("agent coordinates must be finite");
            }
        }
        let path = self.path()?;
        let needed = self.initial.station
            + r.max_speed() * (self.sim.duration + self.horizon.ts * self.horizon.n_steps as f64)
            + 1.0;
        if needed > path.length() {
            return Err(SimError::Invalid(format!(
                "reference path is {:.1} m long, the run needs {:.1} m",
                path.length(),
                needed
            )));
        }
        Ok(())
    }

    fn path(&self) -> Result<Path, SimError> {
        Ok(Path::from_points(&self.reference.vertices())?)
    }

    /// Lane half-width at arc length `station`.
    pub fn lane_half_width(&self, station: f64) -> f64 {
        let nominal = self.road.half_width;
        self.road
            .shrink_zones
            .iter()
            .filter_map(|z| {
                if station >= z.start && station <= z.end {
                    Some(z.half_width)
                } else if z.taper_length > 0.0 && station < z.start && station >= z.start - z.taper_length {
                    let f = (station - (z.start - z.taper_length)) / z.taper_length;
                    Some(nominal + f * (z.half_width - nominal))
                } else {
                    None
                }
            })
            .fold(nominal, f64::min)
    }
}

/// Scripted agent motion.
struct Agent {
    id: String,
    class: ObjectClass,
    x0: f64,
    y0: f64,
    vx: f64,
    vy: f64,
    half_width: f64,
    half_length: f64,
}

impl Agent {
    fn new(spec: &AgentSpec, path: &Path) -> Self {
        let p = path.sample(spec.station);
        Self {
            id: spec.id.clone(),
            class: spec.class,
            x0: p.x - spec.offset * p.heading.sin(),
            y0: p.y + spec.offset * p.heading.cos(),
            vx: spec.vx,
            vy: spec.vy,
            half_width: 0.5 * spec.width(),
            half_length: 0.5 * spec.length(),
        }
    }

    fn position(&self, t: f64) -> (f64, f64) {
        (self.x0 + self.vx * t, self.y0 + self.vy * t)
    }
}

/// Components of `(px, py) - origin` along `heading` and to its left.
fn frame(px: f64, py: f64, ox: f64, oy: f64, heading: f64) -> (f64, f64) {
    let (s, c) = heading.sin_cos();
    let (dx, dy) = (px - ox, py - oy);
    (dx * c + dy * s, -dx * s + dy * c)
}

struct Context<'a> {
    scenario: &'a Scenario,
    path: Path,
    agents: Vec<Agent>,
}

impl Context<'_> {
    fn build_problem(&self, station: f64, t: f64, x: VehicleState) -> Result<MpcProblem, SimError> {
        let sc = self.scenario;
        let h = sc.horizon;
        let n = h.n_steps;
        let speeds: Vec<f64> = (0..=n).map(|k| sc.reference.speed_at(t + k as f64 * h.ts)).collect();
        let reference = discretize_reference(&self.path, station, &speeds, &h)?;
        let mut stations = Vec::with_capacity(n + 1);
        let mut s = station;
        for k in 0..=n {
            stations.push(s);
            s += speeds[k] * h.ts;
        }
        let lane: Vec<f64> = stations.iter().map(|&s| sc.lane_half_width(s)).collect();
        let veh_half_w = 0.5 * sc.vehicle.width;
        let veh_half_l = 0.5 * sc.vehicle.length;

        let mut cuts = Vec::new();
        let mut tracks = Vec::with_capacity(self.agents.len());
        for a in &self.agents {
            let mut side = Vec::with_capacity(n + 1);
            let mut d_ref = Vec::with_capacity(n + 1);
            let mut d_lon = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let r: &ReferencePoint = &reference[k];
                let (px, py) = a.position(t + k as f64 * h.ts);
                let (lon, lat) = frame(px, py, r.x_bar, r.y_bar, r.theta_bar);
                let sd = if lat > 0.0 { Side::Left } else { Side::Right };
                let inner = lat.abs() - a.half_width;
                side.push(sd);
                d_ref.push((inner - veh_half_w).max(0.0));
                let gap = (lon.abs() - veh_half_l - a.half_length).max(0.0);
                d_lon.push(gap.copysign(lon));
                if gap == 0.0 && inner < lane[k] {
                    cuts.push(ObstacleCut {
                        first: k,
                        last: k,
                        side: sd,
                        intrusion: lane[k] - inner,
                    });
                }
            }
            tracks.push(ObjectTrack {
                id: a.id.clone(),
                class: a.class,
                side,
                d_ref,
                d_lon,
            });
        }
        let tube = build_tube(&lane, veh_half_w, &cuts, &[]);
        let clearance = select_most_constraining(&tracks, &sc.safety, n + 1)?;
        Ok(MpcProblem {
            horizon: h,
            model: sc.model,
            weights: sc.weights,
            limits: sc.limits,
            reference,
            tube,
            clearance,
            s_target: sc.safety.s_target,
            initial_state: x,
        })
    }

    fn relative_agents(&self, t: f64, x: &VehicleState) -> Vec<AgentRelative> {
        let half_w = 0.5 * self.scenario.vehicle.width;
        let mid = 0.5 * self.scenario.model.wheelbase;
        let (cx, cy) = (x.x + mid * x.theta.cos(), x.y + mid * x.theta.sin());
        self.agents
            .iter()
            .map(|a| {
                let (px, py) = a.position(t);
                let (lon, lat) = frame(px, py, cx, cy, x.theta);
                AgentRelative {
                    lon,
                    lat,
                    clearance: lat.abs() - a.half_width - half_w,
                }
            })
            .collect()
    }

    fn plant_step(&self, x: &VehicleState, u: ControlInput, v: f64) -> VehicleState {
        let sc = self.scenario;
        let opts = &sc.sim.plant;
        let params = ModelParams::new(sc.model.wheelbase * opts.wheelbase_scale, sc.model.tau * opts.tau_scale);
        let applied = ControlInput::new(u.u / opts.wheelbase_scale);
        let mut next = rk4_step(x, applied, v, &params, sc.horizon.ts);
        if !opts.actuation_lag {
            next.kappa = next.kappa_des;
        }
        // steering saturation
        let l = &sc.limits;
        next.kappa = next.kappa.clamp(l.kappa_min, l.kappa_max);
        next.kappa_des = next.kappa_des.clamp(l.kappa_min, l.kappa_max);
        next
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<SimTrace, SimError> {
    scenario.validate()?;
    let path = scenario.path()?;
    let agents = scenario.agents.iter().map(|a| Agent::new(a, &path)).collect();
    let ctx = Context {
        scenario,
        path,
        agents,
    };
    let solver = Solver::new(scenario.solver).map_err(|source| SimError::Solve { t: 0.0, source })?;
    let h = scenario.horizon;

    let init = &scenario.initial;
    let p0 = ctx.path.sample(init.station);
    let kappa0 = p0.curvature.clamp(scenario.limits.kappa_min, scenario.limits.kappa_max);
    let mut x = VehicleState::new(
        p0.x - init.lateral_offset * p0.heading.sin(),
        p0.y + init.lateral_offset * p0.heading.cos(),
        p0.heading + init.heading_offset,
        kappa0,
        kappa0,
    )
    .normalized();

    let mut station = init.station;
    let mut previous: Option<DecisionVariables> = None;
    let mut cycles = Vec::with_capacity(scenario.cycles());
    let mut dimensions = None;
    let lookahead = scenario.reference.max_speed() * h.ts * 4.0 + 10.0;
    for i in 0..scenario.cycles() {
        let t = i as f64 * h.ts;
        station = ctx.path.project(x.x, x.y, station - 5.0, station + lookahead).0;
        let problem = ctx.build_problem(station, t, x)?;
        dimensions.get_or_insert_with(|| problem.dimensions());
        let solve_err = |source| SimError::Solve { t, source };

        let clock = Instant::now();
        let warm = match &previous {
            Some(prev) if scenario.solver.warm_start => {
                Some(warm_start_shift(prev, x, &problem).map_err(|e| solve_err(SolveError::WarmStart(e)))?)
            }
            _ => None,
        };
        let (sol, status) = solver.solve(&problem, warm.as_ref()).map_err(solve_err)?;
        let solve_ms = clock.elapsed().as_secs_f64() * 1e3;

        let u = sol.first_input;
        let next = ctx.plant_step(&x, u, problem.reference[0].v_k);
        let predicted = sol.variables.states[1];
        let prediction_error = (predicted.to_vector() - next.to_vector()).amax();

        cycles.push(CycleRecord {
            t,
            state: x,
            u: u.u,
            e_lat: problem.lateral_error_at(0, &x),
            tube_lower: problem.tube.lower[0],
            tube_upper: problem.tube.upper[0],
            eps_max: sol.diagnostics.max_slack,
            eps_now: sol.variables.slacks[0],
            safety_now: sol.variables.safety[0],
            iterations: status.iterations,
            qp_iterations: sol.diagnostics.qp_iterations,
            solve_ms,
            outcome: status.outcome,
            kkt_residual: status.kkt_residual,
            prediction_error,
            agents: ctx.relative_agents(t, &x),
        });
        previous = Some(sol.variables);
        x = next;
    }

    let mut trace = SimTrace {
        name: scenario.name.clone(),
        ts: h.ts,
        agent_ids: scenario.agents.iter().map(|a| a.id.clone()).collect(),
        dimensions: dimensions.expect("at least one cycle"),
        cycles,
        events: Vec::new(),
    };
    trace.events = clearance_events(&trace);
    Ok(trace)
}

/// One event per agent whose longitudinal displacement crosses from ahead
/// of the vehicle centre to level with or behind it; values are linearly
/// interpolated in time between the bracketing cycles.
pub fn clearance_events(trace: &SimTrace) -> Vec<ClearanceEvent> {
    let mut events = Vec::new();
    for (j, id) in trace.agent_ids.iter().enumerate() {
        for w in trace.cycles.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (ra, rb) = (a.agents[j], b.agents[j]);
            if ra.lon > 0.0 && rb.lon <= 0.0 {
                let f = ra.lon / (ra.lon - rb.lon);
                let lerp = |p: f64, q: f64| p + f * (q - p);
                let lat = lerp(ra.lat, rb.lat);
                events.push(ClearanceEvent {
                    agent: id.clone(),
                    t: lerp(a.t, b.t),
                    clearance: lerp(ra.clearance, rb.clearance),
                    e_lat: lerp(a.e_lat, b.e_lat),
                    side: if lat > 0.0 { Side::Left } else { Side::Right },
                });
                break;
            }
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearancePair {
    pub agent: String,
    pub biased: Option<f64>,
    pub unbiased: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasingComparison {
    pub biased: SimTrace,
    pub unbiased: SimTrace,
    pub pairs: Vec<ClearancePair>,
    pub biased_timing: TimingStats,
    pub unbiased_timing: TimingStats,
    /// Largest pointwise distance between the two driven paths, m.
    pub max_path_delta: f64,
}

impl BiasingComparison {
    /// Relative gain of the minimum clearance, `None` without events.
    pub fn improvement(&self) -> Option<f64> {
        let b = self.biased.min_clearance()?;
        let u = self.unbiased.min_clearance()?;
        Some(b / u - 1.0)
    }
}

/// Runs `scenario` as given and with `alpha = 0`.
pub fn compare_biasing(scenario: &Scenario) -> Result<BiasingComparison, SimError> {
    let biased = run_scenario(scenario)?;
    let mut plain = scenario.clone();
    plain.weights.alpha = 0.0;
    let unbiased = run_scenario(&plain)?;
    let pairs = biased
        .agent_ids
        .iter()
        .map(|id| {
            let find = |tr: &SimTrace| tr.events.iter().find(|e| &e.agent == id).map(|e| e.clearance);
            ClearancePair {
                agent: id.clone(),
                biased: find(&biased),
                unbiased: find(&unbiased),
            }
        })
        .collect();
    let max_path_delta = biased
        .cycles
        .iter()
        .zip(&unbiased.cycles)
        .map(|(a, b)| (a.state.x - b.state.x).hypot(a.state.y - b.state.y))
        .fold(0.0, f64::max);
    Ok(BiasingComparison {
        biased_timing: timing_stats(&biased.solve_times_ms()),
        unbiased_timing: timing_stats(&unbiased.solve_times_ms()),
        biased,
        unbiased,
        pairs,
        max_path_delta,
    })
}
