//! Episode environment: couples vehicle kinematics, scene motion, sensing and
//! the task rewards into a step function.

use crate::geom::Vec3;
use crate::lidar::{voxel_downsample, Lidar, LidarError, LidarSpec, PointCloud};
use crate::policy::Sensors;
use crate::reward::{
    collision_heuristic, reward_avoidance, reward_single_agent, reward_tracking, FlightStatus, HeuristicResult,
    RegionParams, RewardWeights,
};
use crate::scene::{GoalRegion, Scene};
use crate::trajectory::{is_tracking, Lookahead, ReferenceTrajectory, TrackingErrors};
use crate::vehicle::{clamp_action, step as vehicle_step, UavState, VehicleLimits};

/// Simulation constants shared by every episode.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub limits: VehicleLimits,
    pub lidar: LidarSpec,
    /// Voxel edge for downsampling, m.
    pub voxel: f64,
    /// Maximum downsampled points.
    pub cloud_cap: usize,
    pub regions: RegionParams,
    pub weights: RewardWeights,
    pub lookahead: Lookahead,
    /// Tracking tolerance `ε_K`, m.
    pub eps_k: f64,
    /// Goal-region radius `r_g`, m.
    pub goal_radius: f64,
    /// Body radius the switch's trigger set inflates returns by, m. The
    /// reward heuristic always uses bare bearings.
    pub trigger_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            limits: VehicleLimits::default(),
            lidar: LidarSpec::default(),
            voxel: 0.08,
            cloud_cap: 200,
            regions: RegionParams::default(),
            weights: RewardWeights::default(),
            lookahead: Lookahead::default(),
            eps_k: 0.5,
            goal_radius: 0.3,
            trigger_radius: crate::scene::COLLISION_DISTANCE + 0.25,
        }
    }
}

impl SimConfig {
    pub fn build_lidar(&self) -> Result<Lidar, LidarError> {
        Lidar::new(self.lidar.clone())
    }

    pub fn downsample(&self, raw: &PointCloud) -> PointCloud {
        voxel_downsample(raw, self.voxel, self.cloud_cap)
    }

    /// Region parameters of the switching trigger set.
    pub fn trigger_regions(&self) -> RegionParams {
        RegionParams {
            body_radius: self.trigger_radius,
            ..self.regions
        }
    }
}

/// Reward family and success rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Follow the reference; success once the reference has ended and the UAV
    /// is in the goal region around its final point.
    Tracking,
    /// Reach the goal region without collision.
    Avoidance,
    /// Single policy doing both; tracking success rule, avoidance constraint.
    SingleAgent,
}

#[derive(Clone, Debug)]
pub struct EpisodeSpec {
    pub scene: Scene,
    pub reference: Option<ReferenceTrajectory>,
    pub goal: GoalRegion,
    pub start: UavState,
    pub max_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Running,
    ReachedGoal,
    Collided,
    /// Left the scene bounds or produced a non-finite state.
    Unstable,
    TimeLimit,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        matches!(self, Outcome::ReachedGoal | Outcome::Collided | Outcome::Unstable)
    }

    pub fn is_done(self) -> bool {
        self != Outcome::Running
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub status: FlightStatus,
    pub outcome: Outcome,
    /// Heuristic of the post-step velocity against the post-step cloud.
    pub heuristic: HeuristicResult,
    pub clearance: f64,
}

pub struct Env<'a> {
    cfg: &'a SimConfig,
    lidar: &'a Lidar,
    spec: EpisodeSpec,
    objective: Task,
    scene: Scene,
    state: UavState,
    steps: usize,
    sensors: Sensors,
}

impl<'a> Env<'a> {
    pub fn new(cfg: &'a SimConfig, lidar: &'a Lidar, spec: EpisodeSpec, objective: Task) -> Self {
        let scene = spec.scene.clone();
        let state = spec.start;
        let sensors = sense(cfg, lidar, &scene, &spec, &state);
        Self {
            cfg,
            lidar,
            spec,
            objective,
            scene,
            state,
            steps: 0,
            sensors,
        }
    }

    pub fn config(&self) -> &SimConfig {
        self.cfg
    }

    pub fn lidar(&self) -> &Lidar {
        self.lidar
    }

    pub fn sensors(&self) -> &Sensors {
        &self.sensors
    }

    pub fn state(&self) -> &UavState {
        &self.state
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn objective(&self) -> Task {
        self.objective
    }

    /// Sensors for an arbitrary state against a given (frozen) cloud; used by
    /// lookahead rollouts.
    pub fn sensors_at(&self, state: &UavState, cloud: PointCloud) -> Sensors {
        Sensors {
            velocity: state.velocity,
            errors: errors_for(self.cfg, &self.spec, state),
            cloud,
        }
    }

    /// Applies `dv` for one control period and scores the resulting state
    /// under `reward_task`.
    pub fn step(&mut self, dv: Vec3, reward_task: Task) -> StepResult {
        let cfg = self.cfg;
        let dv = clamp_action(dv, &cfg.limits);
        self.state = vehicle_step(&self.state, dv, &cfg.limits);
        if !self.scene.is_static() {
            self.scene = self.scene.advance(cfg.limits.dt);
        }
        self.steps += 1;
        let finite = self.state.is_finite();
        self.sensors = if finite {
            sense(cfg, self.lidar, &self.scene, &self.spec, &self.state)
        } else {
            Sensors {
                velocity: Vec3::ZERO,
                errors: TrackingErrors::goal_only(Vec3::ZERO, Vec3::ZERO, cfg.lookahead.m),
                cloud: PointCloud::default(),
            }
        };
        let pos = self.state.position;
        let clearance = self.scene.signed_clearance(pos);
        let collided = clearance < crate::scene::COLLISION_DISTANCE;
        let in_bounds = finite && self.scene.bounds().contains(pos);
        let in_goal = self.spec.goal.contains(pos);
        let reference_done = self
            .spec
            .reference
            .as_ref()
            .is_none_or(|r| self.state.time >= r.end_time() - 1e-9);

        let status = if collided || !in_bounds {
            FlightStatus::ConstraintBroken
        } else {
            let task_met = match reward_task {
                Task::Avoidance => in_goal,
                Task::Tracking | Task::SingleAgent => is_tracking(self.sensors.errors.current(), cfg.eps_k),
            };
            if task_met {
                FlightStatus::Tracking
            } else {
                FlightStatus::Stable
            }
        };

        let heuristic = collision_heuristic(self.state.velocity, &self.sensors.cloud, &cfg.weights, &cfg.regions);
        let l_m = self.sensors.cloud.min_range_or(cfg.lidar.max_range);
        let reward = match reward_task {
            Task::Tracking => reward_tracking(&self.sensors.errors, status, &cfg.weights),
            Task::Avoidance => reward_avoidance(self.sensors.errors.e_g, l_m, &heuristic, status, &cfg.weights),
            Task::SingleAgent => reward_single_agent(&self.sensors.errors, l_m, status, &cfg.weights),
        };

        let outcome = if collided {
            Outcome::Collided
        } else if !in_bounds {
            Outcome::Unstable
        } else if in_goal && (self.objective == Task::Avoidance || reference_done) {
            Outcome::ReachedGoal
        } else if self.steps >= self.spec.max_steps {
            Outcome::TimeLimit
        } else {
            Outcome::Running
        };

        StepResult {
            reward,
            status,
            outcome,
            heuristic,
            clearance,
        }
    }
}

fn errors_for(cfg: &SimConfig, spec: &EpisodeSpec, state: &UavState) -> TrackingErrors {
    match &spec.reference {
        Some(r) => r.tracking_errors(state.position, state.time, &cfg.lookahead, spec.goal.center),
        None => TrackingErrors::goal_only(state.position, spec.goal.center, cfg.lookahead.m),
    }
}

fn sense(cfg: &SimConfig, lidar: &Lidar, scene: &Scene, spec: &EpisodeSpec, state: &UavState) -> Sensors {
    let raw = lidar.scan(scene, state.position);
    Sensors {
        velocity: state.velocity,
        errors: errors_for(cfg, spec, state),
        cloud: cfg.downsample(&raw),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_bounds, Obstacle};

    fn straight_spec(scene: Scene) -> EpisodeSpec {
        let a = Vec3::new(0.0, 0.0, 2.0);
        let b = Vec3::new(4.0, 0.0, 2.0);
        EpisodeSpec {
            scene,
            reference: Some(ReferenceTrajectory::straight_line(a, b, 1.0).unwrap()),
            goal: GoalRegion::new(b, 0.3).unwrap(),
            start: UavState::at_rest(a),
            max_steps: 50,
        }
    }

    #[test]
    fn hover_in_empty_world_times_out() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let mut env = Env::new(&cfg, &lidar, straight_spec(Scene::new(default_bounds())), Task::Tracking);
        let mut last = None;
        for _ in 0..50 {
            last = Some(env.step(Vec3::ZERO, Task::Tracking));
        }
        assert_eq!(last.unwrap().outcome, Outcome::TimeLimit);
        assert_eq!(env.state().position, Vec3::new(0.0, 0.0, 2.0));
    }

    #[test]
    fn collision_is_constraint_broken() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let scene = Scene::new(default_bounds()).with_obstacles([Obstacle::cylinder([0.5, 0.0], 0.1, 5.0).unwrap()]);
        let mut spec = straight_spec(scene);
        spec.start.velocity = Vec3::new(1.5, 0.0, 0.0);
        let mut env = Env::new(&cfg, &lidar, spec, Task::Avoidance);
        let r = env.step(Vec3::ZERO, Task::Avoidance);
        assert_eq!(r.outcome, Outcome::Collided);
        assert_eq!(r.status, FlightStatus::ConstraintBroken);
        assert_eq!(r.reward, -300.0);
    }

    #[test]
    fn dynamic_obstacles_move_with_the_clock() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let o = Obstacle::cylinder([3.0, 0.0], 0.2, 5.0)
            .unwrap()
            .with_velocity(Vec3::new(-0.1, 0.0, 0.0))
            .unwrap();
        let mut env = Env::new(&cfg, &lidar, straight_spec(Scene::new(default_bounds()).with_obstacles([o])), Task::Tracking);
        for _ in 0..25 {
            env.step(Vec3::ZERO, Task::Tracking);
        }
        assert!((env.scene().obstacles()[0].position().x - 2.9).abs() < 1e-9);
    }
}
