//! Planner reference: sampled polyline paths, their discretization along
//! a speed profile, and the signed lateral error.

use crate::dynamics::{wrap_angle, HorizonConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("path too short: {required:.3} m required, {available:.3} m available")]
    PathTooShort { required: f64, available: f64 },
    #[error("path needs at least two distinct points")]
    DegeneratePath,
    #[error("non-finite or negative speed at step {0}")]
    InvalidSpeed(usize),
    #[error("reference has {got} points, horizon needs {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("reference spacing at step {step} is {actual:.4} m, expected {expected:.4} m")]
    InconsistentSpacing {
        step: usize,
        expected: f64,
        actual: f64,
    },
    #[error("non-finite reference point at step {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub x_bar: f64,
    pub y_bar: f64,
    pub theta_bar: f64,
    pub kappa_bar: f64,
    /// Predicted speed at this step, m/s.
    pub v_k: f64,
}

impl ReferencePoint {
    pub fn tangent(&self) -> (f64, f64) {
        (self.theta_bar.cos(), self.theta_bar.sin())
    }

    /// Unit vector pointing to the left of the reference heading.
    pub fn normal(&self) -> (f64, f64) {
        (-self.theta_bar.sin(), self.theta_bar.cos())
    }
}

/// Signed perpendicular offset of `(x, y)` from the reference point;
/// positive to the left of the reference heading.
pub fn lateral_error(x: f64, y: f64, r: &ReferencePoint) -> f64 {
    -(x - r.x_bar) * r.theta_bar.sin() + (y - r.y_bar) * r.theta_bar.cos()
}

/// N+1 reference points for one prediction window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    points: Vec<ReferencePoint>,
}

impl ReferenceTrajectory {
    /// Validates length and that consecutive points sit roughly `v_k * ts`
    /// apart (10 % relative slack).
    pub fn new(points: Vec<ReferencePoint>, horizon: &HorizonConfig) -> Result<Self, ReferenceError> {
        let expected = horizon.n_steps + 1;
        if points.len() != expected {
            return Err(ReferenceError::WrongLength {
                expected,
                got: points.len(),
            });
        }
        for (k, p) in points.iter().enumerate() {
            let finite = [p.x_bar, p.y_bar, p.theta_bar, p.kappa_bar, p.v_k]
                .iter()
                .all(|c| c.is_finite());
            if !finite {
                return Err(ReferenceError::NonFinite(k));
            }
            if p.v_k < 0.0 {
                return Err(ReferenceError::InvalidSpeed(k));
            }
        }
        for (k, w) in points.windows(2).enumerate() {
            let expected = w[0].v_k * horizon.ts;
            let actual = (w[1].x_bar - w[0].x_bar).hypot(w[1].y_bar - w[0].y_bar);
            if (actual - expected).abs() > 0.1 * expected + 1e-9 {
                return Err(ReferenceError::InconsistentSpacing {
                    step: k,
                    expected,
                    actual,
                });
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ReferencePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl std::ops::Index<usize> for ReferenceTrajectory {
    type Output = ReferencePoint;

    fn index(&self, k: usize) -> &ReferencePoint {
        &self.points[k]
    }
}

/// A planner path sampled as a polyline.
///
/// Position and heading are interpolated linearly between vertices; the
/// curvature at a vertex is the central difference of heading over arc
/// length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    xs: Vec<f64>,
    ys: Vec<f64>,
    stations: Vec<f64>,
    headings: Vec<f64>,
    curvatures: Vec<f64>,
}

/// A sampled point of a [`Path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
}

impl Path {
    /// Builds a path from vertices; consecutive duplicates are dropped.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self, ReferenceError> {
        let mut xs = Vec::with_capacity(points.len());
        let mut ys = Vec::with_capacity(points.len());
        for &(x, y) in points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(ReferenceError::DegeneratePath);
            }
            if let (Some(&px), Some(&py)) = (xs.last(), ys.last()) {
                if ((x - px) as f64).hypot(y - py) < 1e-12 {
                    continue;
                }
            }
            xs.push(x);
            ys.push(y);
        }
        let n = xs.len();
        if n < 2 {
            return Err(ReferenceError::DegeneratePath);
        }
        let mut stations = vec![0.0; n];
        for i in 1..n {
            stations[i] = stations[i - 1] + (xs[i] - xs[i - 1]).hypot(ys[i] - ys[i - 1]);
        }
        let seg_heading = |i: usize| (ys[i + 1] - ys[i]).atan2(xs[i + 1] - xs[i]);
        let mut headings = vec![0.0; n];
        headings[0] = seg_heading(0);
        headings[n - 1] = seg_heading(n - 2);
        for i in 1..n - 1 {
            headings[i] = (ys[i + 1] - ys[i - 1]).atan2(xs[i + 1] - xs[i - 1]);
        }
        // unwrap so that interpolation never crosses the branch cut
        for i in 1..n {
            headings[i] = headings[i - 1] + wrap_angle(headings[i] - headings[i - 1]);
        }
        let mut curvatures = vec![0.0; n];
        if n >= 3 {
            for i in 1..n - 1 {
                curvatures[i] =
                    (headings[i + 1] - headings[i - 1]) / (stations[i + 1] - stations[i - 1]);
            }
            curvatures[0] = curvatures[1];
            curvatures[n - 1] = curvatures[n - 2];
        }
        Ok(Self {
            xs,
            ys,
            stations,
            headings,
            curvatures,
        })
    }

    /// Polyline approximation of a circular arc of `radius` starting at
    /// `start` with initial heading `heading0`, turning left for positive
    /// `sweep`.
    pub fn arc(
        start: (f64, f64),
        heading0: f64,
        radius: f64,
        sweep: f64,
        segments: usize,
    ) -> Result<Self, ReferenceError> {
        let sign = sweep.signum();
        let cx = start.0 - sign * radius * heading0.sin();
        let cy = start.1 + sign * radius * heading0.cos();
        let pts: Vec<(f64, f64)> = (0..=segments)
            .map(|i| {
                let phi = heading0 + sweep * i as f64 / segments as f64;
                (cx + sign * radius * phi.sin(), cy - sign * radius * phi.cos())
            })
            .collect();
        Self::from_points(&pts)
    }

    pub fn length(&self) -> f64 {
        *self.stations.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> (usize, f64) {
        let n = self.stations.len();
        let i = match self
            .stations
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let len = self.stations[i + 1] - self.stations[i];
        let f = ((s - self.stations[i]) / len).clamp(0.0, 1.0);
        (i, f)
    }

    /// Samples the path at arc length `s` (clamped to the path).
    pub fn sample(&self, s: f64) -> PathSample {
        let (i, f) = self.segment_at(s.clamp(0.0, self.length()));
        let lerp = |v: &[f64]| v[i] + f * (v[i + 1] - v[i]);
        PathSample {
            x: lerp(&self.xs),
            y: lerp(&self.ys),
            heading: wrap_angle(lerp(&self.headings)),
            curvature: lerp(&self.curvatures),
        }
    }

    /// Closest point on the polyline to `(x, y)`, searched within the
    /// station window `[s_lo, s_hi]`. Returns `(station, signed lateral
    /// offset)`.
    pub fn project(&self, x: f64, y: f64, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..self.xs.len() - 1 {
            if self.stations[i + 1] < s_lo || self.stations[i] > s_hi {
                continue;
            }
            let (ax, ay) = (self.xs[i], self.ys[i]);
            let (dx, dy) = (self.xs[i + 1] - ax, self.ys[i + 1] - ay);
            let len2 = dx * dx + dy * dy;
            let f = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
            let (px, py) = (ax + f * dx, ay + f * dy);
            let d2 = (x - px).powi(2) + (y - py).powi(2);
            if d2 < best.0 {
                let len = len2.sqrt();
                let lat = (-(x - ax) * dy + (y - ay) * dx) / len;
                best = (d2, self.stations[i] + f * len, lat);
            }
        }
        (best.1, best.2)
    }
}

/// Reference window starting at arc length `start_station`: point `k` lies
/// at `start_station + sum_{j<k} v_j ts`. `speeds` holds `v_0..v_N`.
pub fn discretize_reference(
    path: &Path,
    start_station: f64,
    speeds: &[f64],
    horizon: &HorizonConfig,
) -> Result<ReferenceTrajectory, ReferenceError> {
    let n = horizon.n_steps;
    if speeds.len() != n + 1 {
        return Err(ReferenceError::WrongLength {
            expected: n + 1,
            got: speeds.len(),
        });
    }
    if let Some(k) = speeds.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(ReferenceError::InvalidSpeed(k));
    }
    let travel: f64 = speeds[..n].iter().sum::<f64>() * horizon.ts;
    let required = start_station + travel;
    if required > path.length() + 1e-9 {
        return Err(ReferenceError::PathTooShort {
            required,
            available: path.length(),
        });
    }
    let mut s = start_station;
    let mut points = Vec::with_capacity(n + 1);
    for (k, &v) in speeds.iter().enumerate() {
        let p = path.sample(s);
        points.push(ReferencePoint {
            x_bar: p.x,
            y_bar: p.y,
            theta_bar: p.heading,
            kappa_bar: p.curvature,
            v_k: v,
        });
        if k < n {
            s += v * horizon.ts;
        }
    }
    Ok(ReferenceTrajectory { points })
}
