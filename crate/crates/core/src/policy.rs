//! Controller abstraction shared by learned and scripted policies.

use std::f64::consts::{PI, TAU};

use crate::geom::Vec3;
use crate::lidar::PointCloud;
use crate::reward::{calculate_regions, AngularRegion, RegionParams};
use crate::scene::COLLISION_DISTANCE;
use crate::trajectory::TrackingErrors;
use crate::vehicle::VehicleLimits;

/// Everything a policy may observe at one control step.
#[derive(Clone, Debug, PartialEq)]
pub struct Sensors {
    pub velocity: Vec3,
    pub errors: TrackingErrors,
    /// Downsampled cloud in the body frame.
    pub cloud: PointCloud,
}

/// Deterministic map from sensors to a velocity increment `Δv` (m/s).
pub trait Controller: Send + Sync {
    fn act(&self, sensors: &Sensors) -> Vec3;
}

impl<C: Controller + ?Sized> Controller for &C {
    fn act(&self, sensors: &Sensors) -> Vec3 {
        (**self).act(sensors)
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn act(&self, sensors: &Sensors) -> Vec3 {
        (**self).act(sensors)
    }
}

/// Always commands zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct Hover;

impl Controller for Hover {
    fn act(&self, _: &Sensors) -> Vec3 {
        Vec3::ZERO
    }
}

/// Feed-forward + proportional tracker on the lookahead errors.
///
/// The reference velocity is recovered from the first two lookahead errors:
/// `e₀ - e₁ = q(t+Δ) - q(t)`.
#[derive(Clone, Copy, Debug)]
pub struct PdTracker {
    pub kp: f64,
    pub dt_ref: f64,
    pub limits: VehicleLimits,
}

impl PdTracker {
    pub fn new(dt_ref: f64, limits: VehicleLimits) -> Self {
        Self { kp: 1.2, dt_ref, limits }
    }
}

impl Controller for PdTracker {
    fn act(&self, s: &Sensors) -> Vec3 {
        let e = &s.errors.e;
        let v_ref = if e.len() > 1 { (e[0] - e[1]) / self.dt_ref } else { Vec3::ZERO };
        let desired = (v_ref - e[0] * self.kp).clamp_norm(self.limits.v_max);
        (desired - s.velocity).clamp_norm(self.limits.max_dv())
    }
}

/// Steers toward the goal, sidestepping past the nearer free edge of any
/// angular region that blocks the goal bearing.
///
/// The sidestep clears each region by `margin` plus the angle a circle of
/// radius `standoff` subtends at the region's nearest return, so close
/// obstacles are given a wide berth.
#[derive(Clone, Copy, Debug)]
pub struct GapAvoider {
    pub cruise: f64,
    pub margin: f64,
    pub standoff: f64,
    pub regions: RegionParams,
    pub limits: VehicleLimits,
}

impl GapAvoider {
    pub fn new(regions: RegionParams, limits: VehicleLimits) -> Self {
        Self {
            cruise: 0.8,
            margin: 5f64.to_radians(),
            standoff: COLLISION_DISTANCE + 0.25,
            regions,
            limits,
        }
    }

    fn pad(&self, r: &AngularRegion) -> f64 {
        self.margin + (self.standoff / r.min_range.max(self.standoff)).asin()
    }

    /// Pushes `start` through consecutive padded regions in direction `dir`.
    fn escape(&self, regions: &[AngularRegion], start: f64, dir: f64) -> f64 {
        let mut h = start;
        for _ in 0..=regions.len() {
            let w = wrap_angle(h);
            match regions
                .iter()
                .find(|r| r.theta_s - self.pad(r) <= w && w <= r.theta_l + self.pad(r))
            {
                Some(r) => {
                    let edge = if dir < 0.0 { r.theta_s - self.pad(r) } else { r.theta_l + self.pad(r) };
                    h += edge - w;
                }
                None => break,
            }
        }
        h
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % TAU;
    if a > PI {
        a -= TAU;
    } else if a <= -PI {
        a += TAU;
    }
    a
}

impl Controller for GapAvoider {
    fn act(&self, s: &Sensors) -> Vec3 {
        let to_goal = -s.errors.e_g;
        let dist = to_goal.norm();
        let goal_bearing = to_goal.y.atan2(to_goal.x);
        let regions = calculate_regions(&s.cloud, &self.regions);
        let cw = self.escape(&regions, goal_bearing, -1.0);
        let ccw = self.escape(&regions, goal_bearing, 1.0);
        let heading = if goal_bearing - cw <= ccw - goal_bearing { cw } else { ccw };
        // slow down when the detour points away from the goal
        let speed = self.cruise.min(dist) * (heading - goal_bearing).cos().max(0.3);
        let climb = (to_goal.z).clamp(-0.5, 0.5);
        let desired = Vec3::new(speed * heading.cos(), speed * heading.sin(), climb).clamp_norm(self.limits.v_max);
        (desired - s.velocity).clamp_norm(self.limits.max_dv())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensors(e0: Vec3, e1: Vec3, v: Vec3) -> Sensors {
        Sensors {
            velocity: v,
            errors: TrackingErrors {
                e: vec![e0, e1],
                e_g: Vec3::ZERO,
                d: 0.0,
            },
            cloud: PointCloud::default(),
        }
    }

    #[test]
    fn tracker_holds_reference_velocity() {
        let t = PdTracker::new(0.2, VehicleLimits::default());
        // on the reference, moving at the reference speed of 1 m/s along x
        let s = sensors(Vec3::ZERO, Vec3::new(-0.2, 0.0, 0.0), Vec3::X);
        assert!(t.act(&s).norm() < 1e-12);
    }

    #[test]
    fn tracker_respects_action_bound() {
        let t = PdTracker::new(0.2, VehicleLimits::default());
        let s = sensors(Vec3::new(5.0, 5.0, 0.0), Vec3::new(5.0, 5.0, 0.0), Vec3::ZERO);
        assert!(t.act(&s).norm() <= 0.08 + 1e-12);
    }

    #[test]
    fn avoider_turns_off_blocked_bearing() {
        let a = GapAvoider::new(RegionParams::default(), VehicleLimits::default());
        let pts = (-8..=8)
            .map(|i| {
                let b = (i as f64).to_radians();
                Vec3::new(2.0 * b.cos(), 2.0 * b.sin(), 0.0)
            })
            .collect();
        let s = Sensors {
            velocity: Vec3::ZERO,
            errors: TrackingErrors {
                e: vec![Vec3::ZERO],
                e_g: Vec3::new(-5.0, 0.0, 0.0),
                d: 0.0,
            },
            cloud: PointCloud::new(pts),
        };
        let dv = a.act(&s);
        let bearing = dv.y.atan2(dv.x).to_degrees().abs();
        assert!(bearing > 8.0, "bearing {bearing}");
    }
}
