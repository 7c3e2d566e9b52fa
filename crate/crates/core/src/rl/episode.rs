//! Rolls out a single policy or a switched dual stack and logs every step.

use std::fmt::Write as _;
use std::time::Instant;

use crate::geom::Vec3;
use crate::policy::{Controller, Sensors};
use crate::sim::{Env, Outcome, Task};
use crate::switch::{
    select_hysteretic, select_naive, FrozenCloud, PolicyId, RolloutModel, RolloutSensor, SceneRescan, SwitchError,
    SwitchMode, SwitchState,
};
use crate::trajectory::{Lookahead, ReferenceTrajectory};
use crate::vehicle::UavState;

/// Which policy produced a step's action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Active {
    Single,
    Trt,
    Cva,
}

impl Active {
    pub fn as_str(self) -> &'static str {
        match self {
            Active::Single => "single",
            Active::Trt => "trt",
            Active::Cva => "cva",
        }
    }
}

impl From<PolicyId> for Active {
    fn from(p: PolicyId) -> Self {
        match p {
            PolicyId::Trt => Active::Trt,
            PolicyId::Cva => Active::Cva,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    /// Simulated time after the step.
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub action: Vec3,
    pub reward: f64,
    pub active: Active,
    pub heuristic: f64,
    pub clearance: f64,
    /// Wall time of the switch decision plus policy inference, s.
    pub compute_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeLog {
    pub start: UavState,
    pub records: Vec<StepRecord>,
    pub outcome: Outcome,
}

impl EpisodeLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_reward(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    /// Start position followed by every post-step position.
    pub fn positions(&self) -> Vec<Vec3> {
        std::iter::once(self.start.position)
            .chain(self.records.iter().map(|r| r.position))
            .collect()
    }

    pub fn final_position(&self) -> Vec3 {
        self.records.last().map_or(self.start.position, |r| r.position)
    }

    /// Number of steps whose active policy differs from the previous step's.
    pub fn toggles(&self) -> usize {
        self.records.windows(2).filter(|w| w[0].active != w[1].active).count()
    }

    pub fn cva_to_trt(&self) -> usize {
        self.records
            .windows(2)
            .filter(|w| w[0].active == Active::Cva && w[1].active == Active::Trt)
            .count()
    }

    pub fn mean_compute(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.records.iter().map(|r| r.compute_s).sum::<f64>() / self.records.len() as f64
        }
    }

    /// `t x y z active_policy heuristic clearance`, one line per step.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            writeln!(
                s,
                "{} {} {} {} {} {} {}",
                r.t,
                r.position.x,
                r.position.y,
                r.position.z,
                r.active.as_str(),
                r.heuristic,
                r.clearance
            )
            .unwrap();
        }
        s
    }
}

/// Where the avoidance policy is pointed while the dual stack is tracking a
/// reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvaGoal {
    /// The episode goal.
    Final,
    /// The furthest lookahead sample of the reference.
    Lookahead,
    /// The first reference sample at or past the lookahead horizon that lies
    /// at least `CLEAR_MARGIN` from every sensed return, searched up to
    /// `CLEAR_SEARCH_S` further along the reference. Keeps the goal out of
    /// obstacles the reference passes through.
    Clear,
}

pub const CLEAR_MARGIN: f64 = 0.8;
pub const CLEAR_SEARCH_S: f64 = 8.0;

fn clear_goal(s: &Sensors, reference: &ReferenceTrajectory, state: &UavState, lookahead: &Lookahead) -> Vec3 {
    let t0 = state.time + lookahead.m as f64 * lookahead.dt_ref;
    let steps = (CLEAR_SEARCH_S / lookahead.dt_ref).ceil() as usize;
    let mut last = reference.sample(t0);
    for k in 0..=steps {
        let t = t0 + k as f64 * lookahead.dt_ref;
        let p = reference.sample(t);
        let rel = p - state.position;
        if s.cloud.points.iter().all(|q| q.distance(rel) >= CLEAR_MARGIN) {
            return p;
        }
        last = p;
        if t >= reference.end_time() {
            break;
        }
    }
    last
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutKind {
    /// Shift the current returns (no scene access).
    FrozenCloud,
    /// Rescan the current scene snapshot at every imagined state.
    SceneRescan,
}

pub struct DualStack<'a> {
    pub trt: &'a dyn Controller,
    pub cva: &'a dyn Controller,
    pub mode: SwitchMode,
    pub w: usize,
    pub rollout: RolloutKind,
    pub cva_goal: CvaGoal,
}

pub enum Driver<'a> {
    Single { policy: &'a dyn Controller, task: Task },
    Dual(DualStack<'a>),
}

fn cva_view(
    s: &Sensors,
    goal: CvaGoal,
    reference: Option<&ReferenceTrajectory>,
    state: &UavState,
    lookahead: &Lookahead,
) -> Sensors {
    let mut v = s.clone();
    match (goal, reference) {
        (CvaGoal::Lookahead, Some(_)) => {
            if let Some(e) = s.errors.e.last() {
                v.errors.e_g = *e;
            }
        }
        (CvaGoal::Clear, Some(r)) => v.errors.e_g = state.position - clear_goal(s, r, state, lookahead),
        _ => {}
    }
    v
}

/// Runs until the environment reports a terminal outcome or its step limit.
pub fn run_episode(env: &mut Env<'_>, driver: &Driver<'_>) -> Result<EpisodeLog, SwitchError> {
    let start = *env.state();
    let mut records = Vec::with_capacity(env.spec().max_steps);
    let mut sw = match driver {
        Driver::Dual(d) => Some(SwitchState::new(d.w)),
        Driver::Single { .. } => None,
    };
    loop {
        let clock = Instant::now();
        let (action, active, task) = match driver {
            Driver::Single { policy, task } => (policy.act(env.sensors()), Active::Single, *task),
            Driver::Dual(d) => {
                let state = *env.state();
                let sensors = env.sensors();
                let choice = match d.mode {
                    SwitchMode::Naive => {
                        let cfg = env.config();
                        select_naive(state.velocity, &sensors.cloud, &cfg.weights, &cfg.trigger_regions())
                    }
                    SwitchMode::Hysteretic => {
                        let frozen;
                        let rescan;
                        let sensor: &dyn RolloutSensor = match d.rollout {
                            RolloutKind::FrozenCloud => {
                                frozen = FrozenCloud::new(state.position, sensors.cloud.clone());
                                &frozen
                            }
                            RolloutKind::SceneRescan => {
                                rescan = SceneRescan {
                                    scene: env.scene(),
                                    lidar: env.lidar(),
                                    cfg: env.config(),
                                };
                                &rescan
                            }
                        };
                        let model = RolloutModel {
                            cfg: env.config(),
                            reference: env.spec().reference.as_ref(),
                            goal: env.spec().goal.center,
                            sensor,
                        };
                        let current = sw.as_ref().expect("dual stack has switch state");
                        let (p, next) = select_hysteretic(current, &state, &sensors.cloud, &model, d.trt)?;
                        sw = Some(next);
                        p
                    }
                };
                match choice {
                    PolicyId::Trt => (d.trt.act(sensors), Active::Trt, Task::Tracking),
                    PolicyId::Cva => {
                        let view = cva_view(
                            sensors,
                            d.cva_goal,
                            env.spec().reference.as_ref(),
                            &state,
                            &env.config().lookahead,
                        );
                        (d.cva.act(&view), Active::Cva, Task::Avoidance)
                    }
                }
            }
        };
        let compute_s = clock.elapsed().as_secs_f64();
        let limit = env.config().limits.max_dv();
        assert!(
            action.norm() <= limit * (1.0 + 1e-9) || !action.is_finite(),
            "policy emitted |dv| = {} above the bound {limit}",
            action.norm()
        );
        let res = env.step(action, task);
        let s = env.state();
        records.push(StepRecord {
            t: s.time,
            position: s.position,
            velocity: s.velocity,
            action,
            reward: res.reward,
            active,
            heuristic: res.heuristic.value,
            clearance: res.clearance,
            compute_s,
        });
        if res.outcome.is_done() {
            return Ok(EpisodeLog {
                start,
                records,
                outcome: res.outcome,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{Hover, PdTracker};
    use crate::scene::{default_bounds, GoalRegion, Obstacle, Scene};
    use crate::sim::{EpisodeSpec, SimConfig};
    use crate::trajectory::ReferenceTrajectory;

    fn line_spec(scene: Scene, max_steps: usize) -> EpisodeSpec {
        let a = Vec3::new(0.0, 0.0, 2.0);
        let b = Vec3::new(4.0, 0.0, 2.0);
        EpisodeSpec {
            scene,
            reference: Some(ReferenceTrajectory::straight_line(a, b, 1.0).unwrap()),
            goal: GoalRegion::new(b, 0.3).unwrap(),
            start: UavState::at_rest(a),
            max_steps,
        }
    }

    #[test]
    fn hover_stays_put_until_limit() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let mut env = Env::new(&cfg, &lidar, line_spec(Scene::new(default_bounds()), 40), Task::Tracking);
        let log = run_episode(
            &mut env,
            &Driver::Single {
                policy: &Hover,
                task: Task::Tracking,
            },
        )
        .unwrap();
        assert_eq!(log.len(), 40);
        assert_eq!(log.outcome, Outcome::TimeLimit);
        assert!(log.records.iter().all(|r| r.position == Vec3::new(0.0, 0.0, 2.0)));
    }

    #[test]
    fn tracker_reaches_goal() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let mut env = Env::new(&cfg, &lidar, line_spec(Scene::new(default_bounds()), 300), Task::Tracking);
        let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
        let log = run_episode(
            &mut env,
            &Driver::Single {
                policy: &trt,
                task: Task::Tracking,
            },
        )
        .unwrap();
        assert_eq!(log.outcome, Outcome::ReachedGoal);
        assert!(log.dump().lines().count() == log.len());
    }

    #[test]
    fn collision_ends_episode_with_penalty() {
        let cfg = SimConfig::default();
        let lidar = cfg.build_lidar().unwrap();
        let scene = Scene::new(default_bounds()).with_obstacles([Obstacle::cylinder([1.0, 0.0], 0.2, 5.0).unwrap()]);
        let mut env = Env::new(&cfg, &lidar, line_spec(scene, 300), Task::Avoidance);
        let trt = PdTracker::new(cfg.lookahead.dt_ref, cfg.limits);
        let log = run_episode(
            &mut env,
            &Driver::Single {
                policy: &trt,
                task: Task::Avoidance,
            },
        )
        .unwrap();
        assert_eq!(log.outcome, Outcome::Collided);
        assert_eq!(log.records.last().unwrap().reward, -300.0);
    }
}
