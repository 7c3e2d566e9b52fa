//! Policy arbitration between the tracking policy (`trt`) and the collision
//! avoidance policy (`cva`).
//!
//! A state is in the collision trigger set when the collision heuristic of
//! the current velocity against the current cloud is negative. The naive rule
//! hands control to `cva` exactly on those states. The hysteretic rule keeps
//! `cva` in control after it acted until a `w`-step rollout of `trt` from the
//! current state stays outside the trigger set at every step.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::Vec3;
use crate::lidar::{Lidar, PointCloud};
use crate::policy::{Controller, Sensors};
use crate::reward::{collision_heuristic, RegionParams, RewardWeights};
use crate::scene::Scene;
use crate::sim::SimConfig;
use crate::trajectory::{ReferenceTrajectory, TrackingErrors};
use crate::vehicle::{step as vehicle_step, UavState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchError {
    #[error("lookahead horizon w = {w} exceeds the configured maximum {max}")]
    RolloutBudget { w: usize, max: usize },
    #[error("lookahead horizon must be at least 1")]
    ZeroHorizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyId {
    Trt,
    Cva,
}

impl PolicyId {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyId::Trt => "trt",
            PolicyId::Cva => "cva",
        }
    }
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SwitchMode {
    Naive,
    Hysteretic,
}

impl FromStr for SwitchMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "naive" => Ok(Self::Naive),
            "hysteretic" => Ok(Self::Hysteretic),
            other => Err(format!("unknown switch mode `{other}` (naive|hysteretic)")),
        }
    }
}

impl SwitchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchMode::Naive => "naive",
            SwitchMode::Hysteretic => "hysteretic",
        }
    }
}

/// Upper bound on the lookahead horizon.
pub const MAX_LOOKAHEAD: usize = 250;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwitchState {
    pub active: PolicyId,
    pub last_action_policy: PolicyId,
    pub w: usize,
}

impl SwitchState {
    pub fn new(w: usize) -> Self {
        Self {
            active: PolicyId::Trt,
            last_action_policy: PolicyId::Trt,
            w,
        }
    }
}

pub fn in_collision_set(v: Vec3, cloud: &PointCloud, weights: &RewardWeights, regions: &RegionParams) -> bool {
    collision_heuristic(v, cloud, weights, regions).value < 0.0
}

pub fn select_naive(v: Vec3, cloud: &PointCloud, weights: &RewardWeights, regions: &RegionParams) -> PolicyId {
    if in_collision_set(v, cloud, weights, regions) {
        PolicyId::Cva
    } else {
        PolicyId::Trt
    }
}

/// Produces the body-frame cloud a simulated state would observe.
pub trait RolloutSensor {
    fn sense(&self, position: Vec3) -> PointCloud;
}

/// Holds the current returns fixed in the world and re-expresses them from
/// each simulated position. Needs no scene geometry.
#[derive(Clone, Debug)]
pub struct FrozenCloud {
    origin: Vec3,
    cloud: PointCloud,
}

impl FrozenCloud {
    pub fn new(origin: Vec3, cloud: PointCloud) -> Self {
        Self { origin, cloud }
    }
}

impl RolloutSensor for FrozenCloud {
    fn sense(&self, position: Vec3) -> PointCloud {
        self.cloud.shifted(position - self.origin)
    }
}

/// Rescans a frozen scene snapshot with the full sensor model.
pub struct SceneRescan<'a> {
    pub scene: &'a Scene,
    pub lidar: &'a Lidar,
    pub cfg: &'a SimConfig,
}

impl RolloutSensor for SceneRescan<'_> {
    fn sense(&self, position: Vec3) -> PointCloud {
        self.cfg.downsample(&self.lidar.scan(self.scene, position))
    }
}

/// Everything needed to propagate the tracking policy forward in imagination.
pub struct RolloutModel<'a> {
    pub cfg: &'a SimConfig,
    pub reference: Option<&'a ReferenceTrajectory>,
    pub goal: Vec3,
    pub sensor: &'a dyn RolloutSensor,
}

impl RolloutModel<'_> {
    fn sensors(&self, state: &UavState, cloud: PointCloud) -> Sensors {
        let errors = match self.reference {
            Some(r) => r.tracking_errors(state.position, state.time, &self.cfg.lookahead, self.goal),
            None => TrackingErrors::goal_only(state.position, self.goal, self.cfg.lookahead.m),
        };
        Sensors {
            velocity: state.velocity,
            errors,
            cloud,
        }
    }
}

/// True when `w` steps of `pi_trt` from `state` never enter the trigger set.
pub fn lookahead_clear(state: &UavState, model: &RolloutModel<'_>, pi_trt: &dyn Controller, w: usize) -> bool {
    let cfg = model.cfg;
    let mut s = *state;
    let mut cloud = model.sensor.sense(s.position);
    for _ in 0..w {
        let action = pi_trt.act(&model.sensors(&s, cloud));
        s = vehicle_step(&s, action, &cfg.limits);
        cloud = model.sensor.sense(s.position);
        if in_collision_set(s.velocity, &cloud, &cfg.weights, &cfg.trigger_regions()) {
            return false;
        }
    }
    true
}

/// Hysteretic arbitration. `cloud` is the current observation of `state`.
pub fn select_hysteretic(
    sw: &SwitchState,
    state: &UavState,
    cloud: &PointCloud,
    model: &RolloutModel<'_>,
    pi_trt: &dyn Controller,
) -> Result<(PolicyId, SwitchState), SwitchError> {
    if sw.w == 0 {
        return Err(SwitchError::ZeroHorizon);
    }
    if sw.w > MAX_LOOKAHEAD {
        return Err(SwitchError::RolloutBudget {
            w: sw.w,
            max: MAX_LOOKAHEAD,
        });
    }
    let cfg = model.cfg;
    let choice = if in_collision_set(state.velocity, cloud, &cfg.weights, &cfg.trigger_regions())
        || (sw.last_action_policy == PolicyId::Cva && !lookahead_clear(state, model, pi_trt, sw.w))
    {
        PolicyId::Cva
    } else {
        PolicyId::Trt
    };
    Ok((
        choice,
        SwitchState {
            active: choice,
            last_action_policy: choice,
            w: sw.w,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PdTracker;
    use crate::scene::{default_bounds, Obstacle};

    fn wall_cloud(cfg: &SimConfig, scene: &Scene, pos: Vec3) -> PointCloud {
        let lidar = cfg.build_lidar().unwrap();
        cfg.downsample(&lidar.scan(scene, pos))
    }

    fn setup() -> (SimConfig, Scene, ReferenceTrajectory) {
        let cfg = SimConfig::default();
        let wall = Obstacle::cuboid(Vec3::new(1.0, 0.0, 2.0), Vec3::new(0.1, 3.0, 2.0)).unwrap();
        let scene = Scene::new(default_bounds()).with_obstacles([wall]);
        let reference =
            ReferenceTrajectory::straight_line(Vec3::new(0.0, 0.0, 2.0), Vec3::new(8.0, 0.0, 2.0), 1.0).unwrap();
        (cfg, scene, reference)
    }

    #[test]
    fn empty_scene_lookahead_is_clear() {
        let (cfg, _, reference) = setup();
        let sensor = FrozenCloud::new(Vec3::ZERO, PointCloud::default());
        let model = RolloutModel {
            cfg: &cfg,
            reference: Some(&reference),
            goal: reference.end(),
            sensor: &sensor,
        };
        let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
        let s = UavState::at_rest(Vec3::new(0.0, 0.0, 2.0));
        assert!(lookahead_clear(&s, &model, &trt, 10));
    }

    #[test]
    fn wall_ahead_blocks_lookahead() {
        let (cfg, scene, reference) = setup();
        let pos = Vec3::new(-0.5, 0.0, 2.0);
        let cloud = wall_cloud(&cfg, &scene, pos);
        let lidar = cfg.build_lidar().unwrap();
        for sensor in [
            Box::new(FrozenCloud::new(pos, cloud.clone())) as Box<dyn RolloutSensor>,
            Box::new(SceneRescan {
                scene: &scene,
                lidar: &lidar,
                cfg: &cfg,
            }),
        ] {
            let model = RolloutModel {
                cfg: &cfg,
                reference: Some(&reference),
                goal: reference.end(),
                sensor: sensor.as_ref(),
            };
            let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
            let s = UavState {
                position: pos,
                velocity: Vec3::ZERO,
                time: 1.0,
            };
            assert!(!lookahead_clear(&s, &model, &trt, 10));
        }
    }

    #[test]
    fn w1_equals_successor_membership() {
        let (cfg, scene, reference) = setup();
        let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
        for (x, vx, t) in [(0.3, 0.0, 0.3), (0.2, 0.5, 0.5), (-2.0, -0.5, 0.0), (0.0, 0.0, 0.0)] {
            let s = UavState {
                position: Vec3::new(x, 0.4, 2.0),
                velocity: Vec3::new(vx, 0.0, 0.0),
                time: t,
            };
            let cloud = wall_cloud(&cfg, &scene, s.position);
            let sensor = FrozenCloud::new(s.position, cloud.clone());
            let model = RolloutModel {
                cfg: &cfg,
                reference: Some(&reference),
                goal: reference.end(),
                sensor: &sensor,
            };
            let sensors = model.sensors(&s, cloud);
            let next = vehicle_step(&s, trt.act(&sensors), &cfg.limits);
            let next_cloud = sensor.sense(next.position);
            let member = in_collision_set(next.velocity, &next_cloud, &cfg.weights, &cfg.trigger_regions());
            assert_eq!(lookahead_clear(&s, &model, &trt, 1), !member);
        }
    }

    #[test]
    fn hysteretic_first_disjunct_and_history() {
        let (cfg, scene, reference) = setup();
        let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
        let pos = Vec3::new(-0.5, 0.0, 2.0);
        let cloud = wall_cloud(&cfg, &scene, pos);
        let sensor = FrozenCloud::new(pos, cloud.clone());
        let model = RolloutModel {
            cfg: &cfg,
            reference: Some(&reference),
            goal: reference.end(),
            sensor: &sensor,
        };
        // heading into the wall: cva regardless of history
        let s = UavState {
            position: pos,
            velocity: Vec3::new(0.5, 0.0, 0.0),
            time: 0.2,
        };
        let (p, next) = select_hysteretic(&SwitchState::new(10), &s, &cloud, &model, &trt).unwrap();
        assert_eq!(p, PolicyId::Cva);
        assert_eq!(next.last_action_policy, PolicyId::Cva);

        // moving away and last policy trt: trt
        let away = UavState {
            velocity: Vec3::new(-0.5, 0.0, 0.0),
            ..s
        };
        assert_eq!(select_hysteretic(&SwitchState::new(10), &away, &cloud, &model, &trt).unwrap().0, PolicyId::Trt);

        // same state after cva acted: trt would turn back into the wall
        let mut sw = SwitchState::new(10);
        sw.last_action_policy = PolicyId::Cva;
        assert_eq!(select_hysteretic(&sw, &away, &cloud, &model, &trt).unwrap().0, PolicyId::Cva);
    }

    #[test]
    fn naive_selection_and_budget() {
        let cfg = SimConfig::default();
        assert_eq!(
            select_naive(Vec3::X, &PointCloud::default(), &cfg.weights, &cfg.regions),
            PolicyId::Trt
        );
        let cloud = PointCloud::new(vec![Vec3::new(2.0, 0.0, 0.0)]);
        assert_eq!(select_naive(Vec3::X, &cloud, &cfg.weights, &cfg.regions), PolicyId::Cva);
        assert_eq!(select_naive(Vec3::ZERO, &cloud, &cfg.weights, &cfg.regions), PolicyId::Trt);

        let sensor = FrozenCloud::new(Vec3::ZERO, PointCloud::default());
        let model = RolloutModel {
            cfg: &cfg,
            reference: None,
            goal: Vec3::ZERO,
            sensor: &sensor,
        };
        let trt = crate::policy::Hover;
        let s = UavState::at_rest(Vec3::ZERO);
        let big = SwitchState::new(MAX_LOOKAHEAD + 1);
        assert!(matches!(
            select_hysteretic(&big, &s, &PointCloud::default(), &model, &trt),
            Err(SwitchError::RolloutBudget { .. })
        ));
    }
}
