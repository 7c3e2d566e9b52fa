//! Scenario library, benchmark metrics and report rows.
//!
//! Built-in scenarios are reconstructions: the scene and reference files
//! under `scenarios/` are versioned so results are reproducible here, but
//! they are not the original evaluation worlds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::point_polyline_distance;
use crate::lidar::Lidar;
use crate::policy::{Controller, PdTracker};
use crate::rl::{ActorPolicy, CvaGoal, Driver, DualStack, EpisodeLog, ObsConfig, ObsMode, RolloutKind, Td3, Td3Config, Td3Error};
use crate::scene::{GoalRegion, Scene, SceneError};
use crate::sim::{Env, EpisodeSpec, Outcome, SimConfig, Task};
use crate::switch::{SwitchError, SwitchMode};
use crate::trajectory::{ReferenceTrajectory, TrajectoryError};
use crate::vehicle::UavState;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario `{name}`: {source}")]
    Scene { name: String, source: SceneError },
    #[error("scenario `{name}`: {source}")]
    Trajectory { name: String, source: TrajectoryError },
    #[error("scenario `{0}` has no goal record")]
    NoGoal(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("unknown policy stack `{0}` (expected single, dual-naive, dual-hyst or scripted)")]
    UnknownStack(String),
    #[error("stack `{stack}` needs a {role} policy")]
    MissingPolicy { stack: &'static str, role: &'static str },
    #[error("missing checkpoint {}", .0.display())]
    MissingCheckpoint(PathBuf),
    #[error("checkpoint {}: {source}", path.display())]
    Checkpoint { path: PathBuf, source: Td3Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Switch(#[from] SwitchError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub l_traj: f64,
    pub t_exec: f64,
    pub m_dev: f64,
    pub success: bool,
    pub collided: bool,
    pub mean_step_compute: f64,
}

/// Segments per reference span when densifying a spline for deviation checks.
const DEV_SAMPLES: usize = 50;

/// Metrics of one rollout against its reference. `dt` is the control period.
pub fn compute_metrics(log: &EpisodeLog, reference: &ReferenceTrajectory, dt: f64) -> Metrics {
    let pos = log.positions();
    let l_traj = pos.windows(2).map(|w| w[0].distance(w[1])).sum();
    let poly = reference.dense_polyline(DEV_SAMPLES);
    let m_dev = pos.iter().map(|p| point_polyline_distance(*p, &poly)).fold(0.0, f64::max);
    Metrics {
        l_traj,
        t_exec: log.len() as f64 * dt,
        m_dev,
        success: log.outcome == Outcome::ReachedGoal,
        collided: log.outcome == Outcome::Collided,
        mean_step_compute: log.mean_compute(),
    }
}

/// Which controllers fly a benchmark episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stack {
    /// One learned policy for tracking and avoidance.
    Single,
    DualNaive,
    DualHyst,
    /// The scripted tracker alone, blind to obstacles.
    Scripted,
}

impl Stack {
    pub const ALL: [Stack; 4] = [Stack::Single, Stack::DualNaive, Stack::DualHyst, Stack::Scripted];

    pub fn as_str(self) -> &'static str {
        match self {
            Stack::Single => "single",
            Stack::DualNaive => "dual-naive",
            Stack::DualHyst => "dual-hyst",
            Stack::Scripted => "scripted",
        }
    }

    /// Learned roles this stack needs.
    pub fn roles(self) -> &'static [ObsMode] {
        match self {
            Stack::Single => &[ObsMode::SingleAgent],
            Stack::DualNaive | Stack::DualHyst => &[ObsMode::Tracking, ObsMode::Avoidance],
            Stack::Scripted => &[],
        }
    }
}

impl FromStr for Stack {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stack::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BenchError::UnknownStack(s.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub name: String,
    pub scene: Scene,
    pub reference: ReferenceTrajectory,
    pub goal: GoalRegion,
    /// Steps allowed beyond the reference duration.
    pub slack_steps: usize,
}

impl ScenarioSpec {
    /// Parses a scene file (which must carry a `goal` record) and a reference
    /// file.
    pub fn parse(name: &str, scene_text: &str, reference_text: &str) -> Result<Self, BenchError> {
        let scene = Scene::load(scene_text).map_err(|source| BenchError::Scene {
            name: name.to_string(),
            source,
        })?;
        let reference = ReferenceTrajectory::load(reference_text).map_err(|source| BenchError::Trajectory {
            name: name.to_string(),
            source,
        })?;
        let goal = *scene.goal().ok_or_else(|| BenchError::NoGoal(name.to_string()))?;
        Ok(Self {
            name: name.to_string(),
            scene,
            reference,
            goal,
            slack_steps: 250,
        })
    }

    /// Loads `<dir>/<name>.scene` and `<dir>/<name>.traj`.
    pub fn load(dir: &Path, name: &str) -> Result<Self, BenchError> {
        let read = |ext: &str| {
            let path = dir.join(format!("{name}.{ext}"));
            fs::read_to_string(&path).map_err(|source| BenchError::Io { path, source })
        };
        Self::parse(name, &read("scene")?, &read("traj")?)
    }

    pub fn max_steps(&self, dt: f64) -> usize {
        (self.reference.duration() / dt).ceil() as usize + self.slack_steps
    }

    /// The episode for `seed`: seed 0 starts on the reference, other seeds
    /// jitter the start horizontally by up to 0.1 m.
    pub fn episode(&self, seed: u64, dt: f64) -> EpisodeSpec {
        let mut start = self.reference.start();
        if seed != 0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            start.x += rng.random_range(-0.1..=0.1);
            start.y += rng.random_range(-0.1..=0.1);
        }
        EpisodeSpec {
            scene: self.scene.clone(),
            reference: Some(self.reference.clone()),
            goal: self.goal,
            start: UavState::at_rest(start),
            max_steps: self.max_steps(dt),
        }
    }
}

const BUILTIN: [(&str, &str, &str); 6] = [
    ("5obs", include_str!("../scenarios/5obs.scene"), include_str!("../scenarios/5obs.traj")),
    ("9obs", include_str!("../scenarios/9obs.scene"), include_str!("../scenarios/9obs.traj")),
    (
        "random22",
        include_str!("../scenarios/random22.scene"),
        include_str!("../scenarios/random22.traj"),
    ),
    (
        "warehouse",
        include_str!("../scenarios/warehouse.scene"),
        include_str!("../scenarios/warehouse.traj"),
    ),
    ("hoops", include_str!("../scenarios/hoops.scene"), include_str!("../scenarios/hoops.traj")),
    (
        "dynamic",
        include_str!("../scenarios/dynamic.scene"),
        include_str!("../scenarios/dynamic.traj"),
    ),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|b| b.0)
}

pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    BUILTIN
        .iter()
        .map(|(n, s, t)| ScenarioSpec::parse(n, s, t).expect("shipped scenario files parse"))
        .collect()
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioSpec, BenchError> {
    BUILTIN
        .iter()
        .find(|b| b.0 == name)
        .map(|(n, s, t)| ScenarioSpec::parse(n, s, t).expect("shipped scenario files parse"))
        .ok_or_else(|| BenchError::UnknownScenario(name.to_string()))
}

/// Controllers available to a benchmark run. Unused roles may be `None`.
#[derive(Default)]
pub struct PolicySet {
    pub trt: Option<Box<dyn Controller>>,
    pub cva: Option<Box<dyn Controller>>,
    pub single: Option<Box<dyn Controller>>,
}

impl PolicySet {
    fn get(&self, stack: Stack, mode: ObsMode) -> Result<&dyn Controller, BenchError> {
        let (slot, role) = match mode {
            ObsMode::Tracking => (&self.trt, "trt"),
            ObsMode::Avoidance => (&self.cva, "cva"),
            ObsMode::SingleAgent => (&self.single, "single"),
        };
        slot.as_deref().ok_or(BenchError::MissingPolicy {
            stack: stack.as_str(),
            role,
        })
    }
}

/// Reads a learner checkpoint and returns its greedy policy. The network
/// shapes and observation layout come from `td3`/`obs`; a checkpoint written
/// under a different layout fails with a hash mismatch.
pub fn load_policy(
    path: &Path,
    mode: ObsMode,
    td3: &Td3Config,
    obs: &ObsConfig,
    sim: &SimConfig,
) -> Result<ActorPolicy, BenchError> {
    if !path.exists() {
        return Err(BenchError::MissingCheckpoint(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let wrap = |source| BenchError::Checkpoint {
        path: path.to_path_buf(),
        source,
    };
    let mut learner = Td3::new(td3.clone(), mode, obs.clone(), sim.limits.max_dv()).map_err(wrap)?;
    learner.load_checkpoint(&text).map_err(wrap)?;
    Ok(learner.policy())
}

/// The scripted tracker for `sim`.
pub fn scripted_tracker(sim: &SimConfig) -> PdTracker {
    PdTracker::new(sim.lookahead.dt_ref, sim.limits)
}

#[derive(Clone, Copy, Debug)]
pub struct BenchOptions {
    pub w: usize,
    pub rollout: RolloutKind,
    pub cva_goal: CvaGoal,
    /// Report zero compute time so rows are byte-stable.
    pub deterministic: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            w: 10,
            rollout: RolloutKind::FrozenCloud,
            cva_goal: CvaGoal::Clear,
            deterministic: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub scenario: String,
    pub policy: Stack,
    pub seed: u64,
    pub metrics: Metrics,
}

pub const BENCH_HEADER: &str = "scenario,policy,seed,L_traj,T_exec,M_dev,success,collided,mean_step_compute";

impl BenchRow {
    pub fn csv_line(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{:.4},{:.2},{:.4},{},{},{:.3e}",
            self.scenario,
            self.policy.as_str(),
            self.seed,
            m.l_traj,
            m.t_exec,
            m.m_dev,
            m.success,
            m.collided,
            m.mean_step_compute
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_line());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub log: EpisodeLog,
    pub metrics: Metrics,
    pub row: BenchRow,
}

impl BenchResult {
    /// File name for the trajectory dump of this run.
    pub fn dump_name(&self) -> String {
        format!("traj_{}_{}_{}.txt", self.row.scenario, self.row.policy.as_str(), self.row.seed)
    }
}

/// Flies one scenario with one stack.
pub fn run_scenario(
    spec: &ScenarioSpec,
    stack: Stack,
    policies: &PolicySet,
    seed: u64,
    sim: &SimConfig,
    lidar: &Lidar,
    opts: &BenchOptions,
) -> Result<BenchResult, BenchError> {
    let scripted = scripted_tracker(sim);
    let dual = |mode| -> Result<Driver<'_>, BenchError> {
        Ok(Driver::Dual(DualStack {
            trt: policies.get(stack, ObsMode::Tracking)?,
            cva: policies.get(stack, ObsMode::Avoidance)?,
            mode,
            w: opts.w,
            rollout: opts.rollout,
            cva_goal: opts.cva_goal,
        }))
    };
    let driver = match stack {
        Stack::Single => Driver::Single {
            policy: policies.get(stack, ObsMode::SingleAgent)?,
            task: Task::SingleAgent,
        },
        Stack::Scripted => Driver::Single {
            policy: &scripted,
            task: Task::Tracking,
        },
        Stack::DualNaive => dual(SwitchMode::Naive)?,
        Stack::DualHyst => dual(SwitchMode::Hysteretic)?,
    };
    let mut env = Env::new(sim, lidar, spec.episode(seed, sim.limits.dt), Task::Tracking);
    let log = crate::rl::run_episode(&mut env, &driver)?;
    let mut metrics = compute_metrics(&log, &spec.reference, sim.limits.dt);
    if opts.deterministic {
        metrics.mean_step_compute = 0.0;
    }
    let row = BenchRow {
        scenario: spec.name.clone(),
        policy: stack,
        seed,
        metrics,
    };
    Ok(BenchResult { log, metrics, row })
}

/// Published comparison figures, carried for side-by-side reports only.
/// `None` marks a run that did not produce a trajectory.
pub struct ExternalRow {
    pub scenario: &'static str,
    pub algorithm: &'static str,
    pub l_traj: Option<f64>,
    pub t_exec: Option<f64>,
    pub m_dev: Option<f64>,
}

pub const EXTERNAL_ROWS: [ExternalRow; 12] = {
    const fn row(scenario: &'static str, algorithm: &'static str, l: f64, t: f64, m: f64) -> ExternalRow {
        ExternalRow {
            scenario,
            algorithm,
            l_traj: Some(l),
            t_exec: Some(t),
            m_dev: Some(m),
        }
    }
    [
        row("5obs", "dual-agent", 17.55, 30.0, 1.68),
        row("5obs", "optimization-planner", 24.78, 63.0, 4.21),
        row("9obs", "dual-agent", 24.53, 35.0, 1.61),
        row("9obs", "optimization-planner", 27.24, 78.0, 4.81),
        row("random22", "dual-agent", 48.39, 78.0, 2.87),
        row("random22", "optimization-planner", 57.88, 90.0, 4.93),
        row("warehouse", "dual-agent", 20.94, 32.0, 2.22),
        ExternalRow {
            scenario: "warehouse",
            algorithm: "optimization-planner",
            l_traj: None,
            t_exec: None,
            m_dev: None,
        },
        row("hoops", "dual-agent", 59.60, 95.0, 8.94),
        row("hoops", "optimization-planner", 79.01, 109.0, 16.23),
        row("dynamic", "dual-agent", 2.53, 9.8, 0.79),
        row("dynamic", "optimization-planner", 4.39, 15.0, 1.5),
    ]
};

/// The published figures as CSV, every row tagged `external`.
pub fn external_csv() -> String {
    let mut s = String::from("source,scenario,algorithm,L_traj,T_exec,M_dev\n");
    let f = |v: Option<f64>| v.map_or("-".to_string(), |v| v.to_string());
    for r in &EXTERNAL_ROWS {
        writeln!(
            s,
            "external,{},{},{},{},{}",
            r.scenario,
            r.algorithm,
            f(r.l_traj),
            f(r.t_exec),
            f(r.m_dev)
        )
        .unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::rl::{Active, StepRecord};
    use crate::scene::{default_bounds, Shape, COLLISION_DISTANCE};

    fn record(p: Vec3) -> StepRecord {
        StepRecord {
            t: 0.0,
            position: p,
            velocity: Vec3::ZERO,
            action: Vec3::ZERO,
            reward: 0.0,
            active: Active::Single,
            heuristic: 0.0,
            clearance: 0.0,
            compute_s: 0.0,
        }
    }

    fn log_of(points: &[Vec3]) -> EpisodeLog {
        EpisodeLog {
            start: UavState::at_rest(points[0]),
            records: points[1..].iter().map(|p| record(*p)).collect(),
            outcome: Outcome::TimeLimit,
        }
    }

    #[test]
    fn three_four_five() {
        let log = log_of(&[Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0)]);
        let r = ReferenceTrajectory::straight_line(Vec3::ZERO, Vec3::new(3.0, 4.0, 0.0), 1.0).unwrap();
        let m = compute_metrics(&log, &r, 0.04);
        assert!((m.l_traj - 5.0).abs() < 1e-12);
        assert_eq!(m.m_dev, 0.0);
        assert!((m.t_exec - 0.04).abs() < 1e-15);
    }

    #[test]
    fn glued_to_reference_has_zero_deviation() {
        let r = ReferenceTrajectory::polyline(vec![
            (0.0, Vec3::ZERO),
            (1.0, Vec3::new(1.0, 0.0, 0.0)),
            (2.0, Vec3::new(1.0, 1.0, 0.0)),
        ])
        .unwrap();
        let pts: Vec<Vec3> = (0..=20).map(|i| r.sample(i as f64 * 0.1)).collect();
        let m = compute_metrics(&log_of(&pts), &r, 0.04);
        assert!(m.m_dev < 1e-12);
    }

    #[test]
    fn builtin_counts_and_shapes() {
        let all = builtin_scenarios();
        assert_eq!(all.len(), 6);
        let by = |n: &str| all.iter().find(|s| s.name == n).unwrap();
        assert_eq!(by("5obs").scene.obstacles().len(), 5);
        assert_eq!(by("9obs").scene.obstacles().len(), 9);
        assert_eq!(by("random22").scene.obstacles().len(), 22);
        let moving: Vec<_> = by("dynamic").scene.obstacles().iter().filter(|o| !o.is_static()).collect();
        assert_eq!(moving.len(), 1);
        assert!((moving[0].velocity().norm() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn starts_and_goals_are_clear() {
        for s in builtin_scenarios() {
            let start = s.reference.start();
            assert!(s.scene.signed_clearance(start) > COLLISION_DISTANCE, "{} start", s.name);
            assert!(
                s.scene.signed_clearance(s.goal.center) > COLLISION_DISTANCE + s.goal.radius,
                "{} goal",
                s.name
            );
            assert!(s.scene.bounds().contains(start) && s.scene.bounds().contains(s.goal.center));
            assert!(s.goal.center.distance(s.reference.end()) < 1e-12, "{} goal off reference end", s.name);
        }
    }

    #[test]
    fn warehouse_reference_is_acyclic() {
        let s = builtin_scenario("warehouse").unwrap();
        let pts = s.reference.points();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                assert!(pts[i].distance(pts[j]) > 1e-6);
            }
        }
    }

    #[test]
    fn hoop_reference_threads_every_ring() {
        let s = builtin_scenario("hoops").unwrap();
        let boxes: Vec<Vec3> = s
            .scene
            .obstacles()
            .iter()
            .map(|o| match o.shape() {
                Shape::Cuboid { center, .. } => *center,
                Shape::Cylinder { .. } => panic!("hoops are built from boxes"),
            })
            .collect();
        assert_eq!(boxes.len() % 16, 0);
        for ring in boxes.chunks(16) {
            let c = ring.iter().fold(Vec3::ZERO, |a, b| a + *b) / 16.0;
            assert!(ring.iter().all(|b| (b.x - c.x).abs() < 1e-9));
            let poly = s.reference.dense_polyline(400);
            let d = point_polyline_distance(c, &poly);
            assert!(d < 1e-3, "ring at x = {} misses by {d}", c.x);
        }
    }

    #[test]
    fn scripted_tracker_in_empty_world() {
        let sim = SimConfig::default();
        let lidar = sim.build_lidar().unwrap();
        let a = Vec3::new(0.0, 0.0, 2.0);
        let b = Vec3::new(6.0, 0.0, 2.0);
        let spec = ScenarioSpec {
            name: "empty".into(),
            scene: Scene::new(default_bounds()),
            reference: ReferenceTrajectory::straight_line(a, b, 0.5).unwrap(),
            goal: GoalRegion::new(b, 0.3).unwrap(),
            slack_steps: 250,
        };
        let opts = BenchOptions {
            deterministic: true,
            ..BenchOptions::default()
        };
        let r = run_scenario(&spec, Stack::Scripted, &PolicySet::default(), 0, &sim, &lidar, &opts).unwrap();
        assert!(r.metrics.success);
        assert!(r.metrics.m_dev <= sim.eps_k);
        assert!(spec.goal.contains(r.log.final_position()));
        assert!(r.metrics.l_traj >= a.distance(r.log.final_position()));
    }

    #[test]
    fn missing_role_is_reported() {
        let sim = SimConfig::default();
        let lidar = sim.build_lidar().unwrap();
        let s = builtin_scenario("dynamic").unwrap();
        let e = run_scenario(&s, Stack::DualHyst, &PolicySet::default(), 0, &sim, &lidar, &BenchOptions::default())
            .unwrap_err();
        assert!(matches!(e, BenchError::MissingPolicy { role: "trt", .. }));
    }

    #[test]
    fn missing_checkpoint_names_the_file() {
        let sim = SimConfig::default();
        let p = Path::new("/nonexistent/trt.ckpt");
        let e = load_policy(p, ObsMode::Tracking, &Td3Config::smoke(), &ObsConfig::default(), &sim).unwrap_err();
        assert!(e.to_string().contains("trt.ckpt"));
    }

    #[test]
    fn csv_row_schema() {
        let row = BenchRow {
            scenario: "5obs".into(),
            policy: Stack::DualHyst,
            seed: 3,
            metrics: Metrics {
                l_traj: 17.5,
                t_exec: 30.0,
                m_dev: 1.25,
                success: true,
                collided: false,
                mean_step_compute: 0.0,
            },
        };
        assert_eq!(
            bench_csv(&[row]),
            "scenario,policy,seed,L_traj,T_exec,M_dev,success,collided,mean_step_compute\n\
             5obs,dual-hyst,3,17.5000,30.00,1.2500,true,false,0.000e0\n"
        );
    }
}
