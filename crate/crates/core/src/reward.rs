//! Reward functions for the tracking, avoidance and single-agent tasks, and
//! the bearing-interval collision heuristic.
//!
//! The heuristic projects the point cloud onto the horizontal plane, groups
//! returns into angular regions, and scores the current velocity heading:
//! heading into any region yields `-α₁₀·‖v‖`, otherwise the score is the
//! largest angular clearance to a region edge (radians, `[0, π]`).

use std::f64::consts::PI;

use thiserror::Error;

use crate::geom::{angle_diff, Vec3};
use crate::lidar::PointCloud;
use crate::trajectory::TrackingErrors;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("alpha{index} must be positive and finite, got {value}")]
    NonPositiveWeight { index: usize, value: f64 },
}

/// Weights `α₁..α₁₆`, stored 1-based through [`RewardWeights::alpha`].
#[derive(Clone, Debug, PartialEq)]
pub struct RewardWeights {
    alpha: [f64; 16],
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            alpha: [
                2.0, 3.0, 4.0, 10.0, 8.0, 2.0, 3.0, 10.0, 300.0, 9.0, // dual-agent
                2.0, 3.0, 4.0, 2.0, 10.0, 300.0, // single agent
            ],
        }
    }
}

impl RewardWeights {
    pub fn new(alpha: [f64; 16]) -> Result<Self, RewardError> {
        for (i, &a) in alpha.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(RewardError::NonPositiveWeight { index: i + 1, value: a });
            }
        }
        Ok(Self { alpha })
    }

    /// `α_i` for `i` in `1..=16`.
    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i - 1]
    }

    pub fn set(&mut self, i: usize, value: f64) -> Result<(), RewardError> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(RewardError::NonPositiveWeight { index: i, value });
        }
        self.alpha[i - 1] = value;
        Ok(())
    }

    pub fn as_array(&self) -> &[f64; 16] {
        &self.alpha
    }
}

/// Region formation and degenerate-velocity thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionParams {
    /// Returns with horizontal range above this are ignored, m.
    pub r_threat: f64,
    /// Largest bearing gap inside one region, rad. The voxel-downsampled
    /// cloud spaces returns by roughly `voxel / range`, so this has to exceed
    /// that spacing at the collision distance or a near obstacle splits into
    /// slivers with "clear" gaps between them.
    pub gap_max: f64,
    /// Horizontal speed below which the heuristic is neutral, m/s.
    pub v_eps: f64,
    /// Each return widens to the bearings a disc of this radius around it
    /// subtends, m. Zero groups bare bearings.
    pub body_radius: f64,
}

impl Default for RegionParams {
    fn default() -> Self {
        Self {
            r_threat: 4.0,
            gap_max: 15f64.to_radians(),
            v_eps: 1e-3,
            body_radius: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngularRegion {
    pub theta_s: f64,
    pub theta_l: f64,
    pub min_range: f64,
}

impl AngularRegion {
    pub fn contains(&self, bearing: f64) -> bool {
        self.theta_s <= bearing && bearing <= self.theta_l
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeuristicResult {
    pub value: f64,
    pub colliding: bool,
}

impl HeuristicResult {
    const NEUTRAL: HeuristicResult = HeuristicResult {
        value: 0.0,
        colliding: false,
    };
}

/// Groups horizontal bearings of nearby returns into contiguous regions.
///
/// Regions are produced in increasing bearing order over `(-π, π]`; a cluster
/// that straddles the ±π seam comes out as two regions. With a nonzero
/// `body_radius` every return covers `β ± asin(body_radius / ρ)` instead of
/// its bare bearing `β`.
pub fn calculate_regions(cloud: &PointCloud, params: &RegionParams) -> Vec<AngularRegion> {
    let mut spans: Vec<(f64, f64, f64)> = Vec::with_capacity(cloud.points.len());
    for p in &cloud.points {
        let rho = p.horizontal_norm();
        if rho <= 0.0 || rho > params.r_threat {
            continue;
        }
        let bearing = p.y.atan2(p.x);
        let range = p.norm();
        if params.body_radius <= 0.0 {
            spans.push((bearing, bearing, range));
            continue;
        }
        let half = (params.body_radius / rho).min(1.0).asin();
        let (lo, hi) = (bearing - half, bearing + half);
        if lo <= -PI {
            spans.push((lo + 2.0 * PI, PI, range));
            spans.push((-PI + 1e-12, hi, range));
        } else if hi > PI {
            spans.push((lo, PI, range));
            spans.push((-PI + 1e-12, hi - 2.0 * PI, range));
        } else {
            spans.push((lo, hi, range));
        }
    }
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut regions: Vec<AngularRegion> = Vec::new();
    for (lo, hi, range) in spans {
        match regions.last_mut() {
            Some(r) if lo - r.theta_l <= params.gap_max => {
                r.theta_l = r.theta_l.max(hi);
                r.min_range = r.min_range.min(range);
            }
            _ => regions.push(AngularRegion {
                theta_s: lo,
                theta_l: hi,
                min_range: range,
            }),
        }
    }
    regions
}

/// Scores `v` against precomputed regions.
pub fn heuristic_from_regions(
    v: Vec3,
    regions: &[AngularRegion],
    weights: &RewardWeights,
    params: &RegionParams,
) -> HeuristicResult {
    if v.horizontal_norm() < params.v_eps {
        return HeuristicResult::NEUTRAL;
    }
    let theta_v = v.y.atan2(v.x);
    let mut reward = 0.0f64;
    for r in regions {
        if r.contains(theta_v) {
            return HeuristicResult {
                value: -weights.alpha(10) * v.norm(),
                colliding: true,
            };
        }
        let val = angle_diff(theta_v, r.theta_s).min(angle_diff(theta_v, r.theta_l));
        reward = reward.max(val);
    }
    debug_assert!((0.0..=PI).contains(&reward));
    HeuristicResult {
        value: reward,
        colliding: false,
    }
}

pub fn collision_heuristic(
    v: Vec3,
    cloud: &PointCloud,
    weights: &RewardWeights,
    params: &RegionParams,
) -> HeuristicResult {
    if v.horizontal_norm() < params.v_eps {
        return HeuristicResult::NEUTRAL;
    }
    heuristic_from_regions(v, &calculate_regions(cloud, params), weights, params)
}

/// Which branch of the piecewise rewards applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlightStatus {
    /// In bounds, finite, not collided, task condition not met.
    Stable,
    /// Task condition met: within `ε_K` of the reference, or inside the goal region
    /// for the avoidance task.
    Tracking,
    /// Collided or left the stable set.
    ConstraintBroken,
}

/// Tracking-policy reward. There is no constraint branch for this task, so
/// `ConstraintBroken` evaluates the shaped term like `Stable`.
pub fn reward_tracking(errors: &TrackingErrors, status: FlightStatus, w: &RewardWeights) -> f64 {
    match status {
        FlightStatus::Tracking => w.alpha(4),
        FlightStatus::Stable | FlightStatus::ConstraintBroken => {
            -w.alpha(1) * errors.current().norm_squared() - w.alpha(2) * errors.e_g.norm_squared()
                - w.alpha(3) * errors.d
        }
    }
}

/// Avoidance-policy reward; `c(t)` is the heuristic value.
pub fn reward_avoidance(
    e_g: Vec3,
    l_m: f64,
    heuristic: &HeuristicResult,
    status: FlightStatus,
    w: &RewardWeights,
) -> f64 {
    match status {
        FlightStatus::ConstraintBroken => -w.alpha(9),
        FlightStatus::Tracking => w.alpha(8),
        FlightStatus::Stable => -w.alpha(5) * e_g.norm_squared() + w.alpha(6) * l_m + w.alpha(7) * heuristic.value,
    }
}

pub fn reward_single_agent(errors: &TrackingErrors, l_m: f64, status: FlightStatus, w: &RewardWeights) -> f64 {
    match status {
        FlightStatus::ConstraintBroken => -w.alpha(16),
        FlightStatus::Tracking => w.alpha(15),
        FlightStatus::Stable => {
            -w.alpha(11) * errors.current().norm_squared() - w.alpha(12) * errors.e_g.norm_squared()
                - w.alpha(13) * errors.d
                + w.alpha(14) * l_m
        }
    }
}
