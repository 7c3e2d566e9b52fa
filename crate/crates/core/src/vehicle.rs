//! Velocity-level UAV kinematics.
//!
//! The action is a velocity increment `Δv`. It is norm-clamped to `a_max·dt`,
//! added to the current velocity, the result norm-clamped to `v_max`, and the
//! position integrated with the new velocity for one `dt`.

use crate::geom::Vec3;
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub dt: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self {
            v_max: 1.5,
            a_max: 2.0,
            dt: 0.04,
        }
    }
}

impl VehicleLimits {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("v_max", self.v_max), ("a_max", self.a_max), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("vehicle.{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Largest admissible per-step velocity change.
    pub fn max_dv(&self) -> f64 {
        self.a_max * self.dt
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub time: f64,
}

impl UavState {
    pub fn at_rest(position: Vec3) -> Self {
        Self {
            position,
            velocity: Vec3::ZERO,
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.is_finite() && self.velocity.is_finite() && self.time.is_finite()
    }

    /// Inside the scene bounds, finite and clear of the collision radius.
    pub fn is_stable(&self, scene: &Scene) -> bool {
        self.is_finite() && scene.bounds().contains(self.position) && !scene.is_collision(self.position)
    }
}

pub fn clamp_action(dv: Vec3, limits: &VehicleLimits) -> Vec3 {
    dv.clamp_norm(limits.max_dv())
}

pub fn step(state: &UavState, dv: Vec3, limits: &VehicleLimits) -> UavState {
    let velocity = (state.velocity + clamp_action(dv, limits)).clamp_norm(limits.v_max);
    UavState {
        position: state.position + velocity * limits.dt,
        velocity,
        time: state.time + limits.dt,
    }
}
