//! Curriculum stages and seeded episode sampling.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Vec3;
use crate::scene::{Aabb, GoalRegion, Obstacle, Scene, SceneError, COLLISION_DISTANCE};
use crate::sim::{EpisodeSpec, Task};
use crate::trajectory::{ReferenceTrajectory, TrajectoryError};
use crate::vehicle::UavState;

pub const P_START: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 2.0 };

#[derive(Debug, thiserror::Error)]
pub enum EnvgenError {
    #[error("stage `{stage}`: no valid episode after {attempts} attempts (seed {seed})")]
    SamplingExhausted { stage: String, seed: u64, attempts: usize },
    #[error("stage `{stage}`: {reason}")]
    InvalidStage { stage: String, reason: String },
    #[error("unknown stage `{0}` (expected trt-1, trt-2, cva-1, cva-2, cva-3, cva-block or single-1)")]
    UnknownStage(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObstacleTemplate {
    Cylinder { radius: f64, height: f64 },
    Cuboid { half_extents: Vec3 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneTemplate {
    pub count: usize,
    pub shape: ObstacleTemplate,
    /// Horizontal footprint for obstacle centres; z is ignored.
    pub region: Aabb,
    /// The first this many obstacles are centred near the start-goal line
    /// instead of in `region`, so the direct path is blocked.
    pub on_line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StartSpec {
    Fixed(Vec3),
    /// Uniform in the box (`C_rdm`).
    Random(Aabb),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReferenceTemplate {
    /// Straight lines from the start to a point on the horizontal circle of
    /// `radius` around it, altitude drawn from the goal box.
    StraightLines { radius: f64, speed: f64 },
    /// Goal-region task with no reference.
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumStage {
    pub id: String,
    pub scene: Option<SceneTemplate>,
    pub goal_box: Aabb,
    pub start: StartSpec,
    pub reference: ReferenceTemplate,
    pub episodes: usize,
    /// Fixed horizon for goal-region tasks; tracking tasks add this as slack
    /// after the reference ends.
    pub max_steps: usize,
    pub success: Task,
    pub bounds: Aabb,
    pub goal_radius: f64,
    pub dt: f64,
    /// Minimum start-to-goal distance for goal-region tasks.
    pub min_goal_distance: f64,
}

fn aabb(lo: [f64; 3], hi: [f64; 3]) -> Aabb {
    Aabb::new(Vec3::from_slice(&lo), Vec3::from_slice(&hi)).expect("valid literal box")
}

/// Empty world, fixed start, random straight lines.
pub fn stage_trt_1() -> CurriculumStage {
    CurriculumStage {
        id: "trt-1".into(),
        scene: None,
        goal_box: aabb([-4.0, -4.0, 1.0], [4.0, 4.0, 3.0]),
        start: StartSpec::Fixed(P_START),
        reference: ReferenceTemplate::StraightLines { radius: 4.0, speed: 1.0 },
        episodes: 10_000,
        max_steps: 50,
        success: Task::Tracking,
        bounds: aabb([-10.0, -10.0, 0.0], [10.0, 10.0, 6.0]),
        goal_radius: 0.3,
        dt: 0.04,
        min_goal_distance: 0.0,
    }
}

/// As stage 1, with the start drawn from `C_rdm`.
pub fn stage_trt_2() -> CurriculumStage {
    CurriculumStage {
        id: "trt-2".into(),
        start: StartSpec::Random(c_rdm()),
        goal_box: aabb([-7.0, -7.0, 1.0], [7.0, 7.0, 3.0]),
        ..stage_trt_1()
    }
}

/// Default random-start box.
pub fn c_rdm() -> Aabb {
    aabb([-3.0, -3.0, 1.0], [3.0, 3.0, 3.0])
}

/// Obstacle stages 1..=3.
pub fn stage_cva(k: u8) -> Result<CurriculumStage, EnvgenError> {
    let (half, count, shape) = match k {
        1 => (1.0, 2, ObstacleTemplate::Cylinder { radius: 0.1, height: 5.0 }),
        2 => (2.0, 2, ObstacleTemplate::Cylinder { radius: 0.25, height: 5.0 }),
        3 => (
            4.0,
            4,
            ObstacleTemplate::Cuboid {
                half_extents: Vec3::new(0.75, 0.5, 2.5),
            },
        ),
        _ => return Err(EnvgenError::UnknownStage(format!("cva-{k}"))),
    };
    let spread = half + 0.5;
    Ok(CurriculumStage {
        id: format!("cva-{k}"),
        scene: Some(SceneTemplate {
            count,
            shape,
            region: aabb([-spread, -spread, 0.0], [spread, spread, 5.0]),
            on_line: 0,
        }),
        goal_box: aabb([-half, -half, 1.0], [half, half, 3.0]),
        start: StartSpec::Fixed(P_START),
        reference: ReferenceTemplate::None,
        episodes: 50_000,
        max_steps: 500,
        success: Task::Avoidance,
        bounds: aabb([-half - 3.0, -half - 3.0, 0.0], [half + 3.0, half + 3.0, 6.0]),
        goal_radius: 0.3,
        dt: 0.04,
        min_goal_distance: 0.6,
    })
}

/// One pole standing on the line from the start to a goal 2.5 m or more
/// away, so the direct path is always blocked.
pub fn stage_cva_block() -> CurriculumStage {
    let half = 3.0;
    CurriculumStage {
        id: "cva-block".into(),
        scene: Some(SceneTemplate {
            count: 1,
            shape: ObstacleTemplate::Cylinder { radius: 0.3, height: 5.0 },
            region: aabb([-half, -half, 0.0], [half, half, 5.0]),
            on_line: 1,
        }),
        goal_box: aabb([-half, -half, 1.0], [half, half, 3.0]),
        bounds: aabb([-half - 3.0, -half - 3.0, 0.0], [half + 3.0, half + 3.0, 6.0]),
        min_goal_distance: 2.5,
        ..stage_cva(1).expect("stage 1 exists")
    }
}

/// Single-agent baseline: random straight lines among two poles that the
/// reference may pass through.
pub fn stage_single() -> CurriculumStage {
    CurriculumStage {
        id: "single-1".into(),
        scene: Some(SceneTemplate {
            count: 2,
            shape: ObstacleTemplate::Cylinder { radius: 0.25, height: 5.0 },
            region: aabb([-3.0, -3.0, 0.0], [3.0, 3.0, 5.0]),
            on_line: 0,
        }),
        success: Task::SingleAgent,
        episodes: 50_000,
        ..stage_trt_1()
    }
}

pub fn stage_by_name(name: &str) -> Result<CurriculumStage, EnvgenError> {
    match name {
        "trt-1" => Ok(stage_trt_1()),
        "trt-2" => Ok(stage_trt_2()),
        "cva-1" => stage_cva(1),
        "cva-2" => stage_cva(2),
        "cva-3" => stage_cva(3),
        "cva-block" => Ok(stage_cva_block()),
        "single-1" => Ok(stage_single()),
        other => Err(EnvgenError::UnknownStage(other.to_string())),
    }
}

impl CurriculumStage {
    pub fn validate(&self) -> Result<(), EnvgenError> {
        let bad = |reason: &str| {
            Err(EnvgenError::InvalidStage {
                stage: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        if !self.bounds.contains_box(&self.goal_box) {
            return bad("goal box is not inside the scene bounds");
        }
        if self.episodes == 0 || self.max_steps == 0 {
            return bad("episode budget and max_steps must be positive");
        }
        if !(self.goal_radius > 0.0 && self.dt > 0.0) {
            return bad("goal radius and dt must be positive");
        }
        if let StartSpec::Random(b) = &self.start {
            if !self.bounds.contains_box(b) {
                return bad("start box is not inside the scene bounds");
            }
        }
        if let ReferenceTemplate::StraightLines { radius, speed } = self.reference {
            if !(radius > 0.0 && speed > 0.0) {
                return bad("reference radius and speed must be positive");
            }
        }
        Ok(())
    }

    /// Deterministic in `(self, seed)`.
    pub fn sample_episode(&self, seed: u64) -> Result<EpisodeSpec, EnvgenError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(self.id.as_bytes()));
        const ATTEMPTS: usize = 1000;
        for _ in 0..ATTEMPTS {
            if let Some(ep) = self.try_sample(&mut rng)? {
                return Ok(ep);
            }
        }
        Err(EnvgenError::SamplingExhausted {
            stage: self.id.clone(),
            seed,
            attempts: ATTEMPTS,
        })
    }

    fn try_sample(&self, rng: &mut ChaCha8Rng) -> Result<Option<EpisodeSpec>, EnvgenError> {
        let start = match &self.start {
            StartSpec::Fixed(p) => *p,
            StartSpec::Random(b) => uniform_in(b, rng),
        };
        let (goal, reference, max_steps) = match self.reference {
            ReferenceTemplate::StraightLines { radius, speed } => {
                let phi = rng.random_range(-PI..PI);
                let z = rng.random_range(self.goal_box.min.z..=self.goal_box.max.z);
                let end = Vec3::new(start.x + radius * phi.cos(), start.y + radius * phi.sin(), z);
                if !self.goal_box.contains(end) {
                    return Ok(None);
                }
                let r = ReferenceTrajectory::straight_line(start, end, speed)?;
                let steps = (r.duration() / self.dt).ceil() as usize + self.max_steps;
                (end, Some(r), steps)
            }
            ReferenceTemplate::None => {
                let g = uniform_in(&self.goal_box, rng);
                if g.distance(start) < self.min_goal_distance {
                    return Ok(None);
                }
                (g, None, self.max_steps)
            }
        };

        let mut scene = Scene::new(self.bounds);
        if let Some(t) = &self.scene {
            for i in 0..t.count {
                let (x, y) = if i < t.on_line {
                    let f = rng.random_range(0.35..=0.65);
                    let jitter = rng.random_range(-0.2..=0.2);
                    let d = goal - start;
                    let side = Vec3::new(-d.y, d.x, 0.0).normalized().unwrap_or(Vec3::ZERO);
                    let c = start + d * f + side * jitter;
                    (c.x, c.y)
                } else {
                    (
                        rng.random_range(t.region.min.x..=t.region.max.x),
                        rng.random_range(t.region.min.y..=t.region.max.y),
                    )
                };
                let o = match t.shape {
                    ObstacleTemplate::Cylinder { radius, height } => Obstacle::cylinder([x, y], radius, height)?,
                    ObstacleTemplate::Cuboid { half_extents } => {
                        Obstacle::cuboid(Vec3::new(x, y, half_extents.z), half_extents)?
                    }
                };
                if !self.bounds.contains_box(&o.shape().aabb()) {
                    return Ok(None);
                }
                scene.push(o);
            }
        }
        // the goal must be enterable, not merely outside the collision shell
        if scene.signed_clearance(start) < COLLISION_DISTANCE
            || scene.signed_clearance(goal) < COLLISION_DISTANCE + self.goal_radius
        {
            return Ok(None);
        }
        if let Some(r) = &reference {
            // tracking references in obstacle stages must stay flyable; the
            // single-agent stage keeps blocked lines on purpose
            if self.success != Task::SingleAgent
                && !scene.obstacles().is_empty()
                && samples_along(r).any(|p| scene.signed_clearance(p) < COLLISION_DISTANCE)
            {
                return Ok(None);
            }
        }
        Ok(Some(EpisodeSpec {
            scene,
            reference,
            goal: GoalRegion::new(goal, self.goal_radius)?,
            start: UavState::at_rest(start),
            max_steps,
        }))
    }
}

/// Points along `r` no more than about 5 cm apart.
fn samples_along(r: &ReferenceTrajectory) -> impl Iterator<Item = Vec3> + '_ {
    let length: f64 = r.dense_polyline(20).windows(2).map(|w| w[0].distance(w[1])).sum();
    let n = (length / 0.05).ceil().max(1.0) as usize;
    (0..=n).map(move |k| r.sample(r.start_time() + r.duration() * k as f64 / n as f64))
}

fn uniform_in<R: Rng>(b: &Aabb, rng: &mut R) -> Vec3 {
    let pick = |lo: f64, hi: f64, rng: &mut R| if lo < hi { rng.random_range(lo..=hi) } else { lo };
    Vec3::new(
        pick(b.min.x, b.max.x, rng),
        pick(b.min.y, b.max.y, rng),
        pick(b.min.z, b.max.z, rng),
    )
}

/// Stage ids feed the seed mix; FNV keeps it platform independent.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
