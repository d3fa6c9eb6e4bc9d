//! Per-step lateral-error bounds around the reference ("tube").

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Lower/upper signed lateral-error bounds for steps `0..=N`.
///
/// Bounds may cross (`lower > upper`); the tube slack absorbs that.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl TubeBounds {
    pub fn symmetric(half: f64, steps: usize) -> Self {
        Self {
            lower: vec![-half; steps],
            upper: vec![half; steps],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Steps whose bounds are crossed.
    pub fn crossed_steps(&self) -> Vec<usize> {
        self.lower
            .iter()
            .zip(&self.upper)
            .enumerate()
            .filter(|(_, (l, u))| l > u)
            .map(|(k, _)| k)
            .collect()
    }
}

/// An obstacle intruding `intrusion` metres into the lane on `side` over
/// the inclusive step range `[first, last]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleCut {
    pub first: usize,
    pub last: usize,
    pub side: Side,
    pub intrusion: f64,
}

/// Lane narrowing to `target_half_width` over `[first, last]`, reached
/// linearly over the `taper_steps` steps preceding `first`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShrinkZone {
    pub first: usize,
    pub last: usize,
    pub target_half_width: f64,
    pub taper_steps: usize,
}

impl ShrinkZone {
    /// Half-width limit imposed at step `k`, if any.
    fn limit(&self, k: usize, nominal: f64) -> Option<f64> {
        if k >= self.first && k <= self.last {
            return Some(self.target_half_width);
        }
        let taper = self.taper_steps.max(1);
        let start = self.first.checked_sub(taper)?;
        if k >= start && k < self.first {
            let f = (k - start) as f64 / taper as f64;
            return Some(nominal + f * (self.target_half_width - nominal));
        }
        None
    }
}

/// Builds the tube from lane half-widths, obstacle cuts and shrink zones.
/// Every contribution restricts; per side the most restrictive one wins.
pub fn build_tube(
    lane_half_widths: &[f64],
    footprint_half_width: f64,
    cuts: &[ObstacleCut],
    zones: &[ShrinkZone],
) -> TubeBounds {
    let n = lane_half_widths.len();
    let mut upper = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    for (k, &nominal) in lane_half_widths.iter().enumerate() {
        let half = zones
            .iter()
            .filter_map(|z| z.limit(k, nominal))
            .fold(nominal, f64::min);
        let mut left = half - footprint_half_width;
        let mut right = half - footprint_half_width;
        for cut in cuts.iter().filter(|c| k >= c.first && k <= c.last) {
            let limited = nominal - footprint_half_width - cut.intrusion.max(0.0);
            match cut.side {
                Side::Left => left = left.min(limited),
                Side::Right => right = right.min(limited),
            }
        }
        upper.push(left);
        lower.push(-right);
    }
    TubeBounds { lower, upper }
}
