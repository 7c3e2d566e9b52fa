//! Curriculum training loop with warm-started stages.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::episode::{run_episode, Driver, EpisodeLog};
use super::obs::{ObsConfig, ObsMode};
use super::replay::{ReplayBuffer, Transition};
use super::td3::{Td3, Td3Config, Td3Error};
use crate::envgen::{CurriculumStage, EnvgenError};
use crate::lidar::Lidar;
use crate::reward::RewardWeights;
use crate::policy::{Controller, GapAvoider, PdTracker};
use crate::sim::{Env, Outcome, SimConfig, Task};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Learner(#[from] Td3Error),
    #[error(transparent)]
    Envgen(#[from] EnvgenError),
    #[error("stage `{stage}` uses the {task:?} task, which does not match the {mode} policy")]
    TaskMismatch { stage: String, task: Task, mode: ObsMode },
    #[error("lidar: {0}")]
    Lidar(#[from] crate::lidar::LidarError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Switch(#[from] crate::switch::SwitchError),
}

pub fn task_for(mode: ObsMode) -> Task {
    match mode {
        ObsMode::Tracking => Task::Tracking,
        ObsMode::Avoidance => Task::Avoidance,
        ObsMode::SingleAgent => Task::SingleAgent,
    }
}

#[derive(Clone, Debug)]
pub struct StagePlan {
    pub stage: CurriculumStage,
    pub episodes: usize,
}

impl StagePlan {
    /// Uses the stage's own budget.
    pub fn full(stage: CurriculumStage) -> Self {
        let episodes = stage.episodes;
        Self { stage, episodes }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub mode: ObsMode,
    pub td3: Td3Config,
    pub obs: ObsConfig,
    /// Greedy evaluation every this many episodes (0 disables).
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Goal arrivals are stored as absorbing: reward `r/(1-γ)`, terminal.
    pub absorbing_goal: bool,
    /// Collisions in the avoidance and single-agent tasks are stored the
    /// same way, so a crash costs as much as staying at the penalty forever.
    /// Off by default: the large targets slowed cva learning.
    pub absorbing_collision: bool,
    /// At the end of each stage, restore the actor that scored best in the
    /// periodic evaluations of that stage.
    pub keep_best: bool,
    pub warmup: WarmupPolicy,
}

/// Behaviour policy for the first `warmup_steps` environment steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarmupPolicy {
    /// Uniform draws from the action ball.
    Random,
    /// The scripted controller for the task plus exploration noise.
    Scripted,
}

impl std::str::FromStr for WarmupPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(WarmupPolicy::Random),
            "scripted" => Ok(WarmupPolicy::Scripted),
            other => Err(format!("unknown warmup policy `{other}` (expected random or scripted)")),
        }
    }
}

impl WarmupPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            WarmupPolicy::Random => "random",
            WarmupPolicy::Scripted => "scripted",
        }
    }
}

impl TrainConfig {
    pub fn new(mode: ObsMode, td3: Td3Config, obs: ObsConfig) -> Self {
        Self {
            mode,
            td3,
            obs,
            eval_every: 0,
            eval_episodes: 10,
            absorbing_goal: true,
            absorbing_collision: false,
            keep_best: false,
            warmup: WarmupPolicy::Random,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub episode: u64,
    pub ret: f64,
    pub success: bool,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub episode: u64,
    pub stage: String,
    pub success_rate: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageBoundary {
    pub stage: String,
    pub start_hash: String,
    pub end_hash: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub curve: Vec<CurveRow>,
    pub evals: Vec<EvalRow>,
    pub boundaries: Vec<StageBoundary>,
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("episode,return,success,len\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.episode, r.ret, u8::from(r.success), r.len).unwrap();
    }
    s
}

pub fn eval_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("episode,stage,success_rate,mean_return\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.episode, r.stage, r.success_rate, r.mean_return).unwrap();
    }
    s
}

/// Least upper bound of the per-step reward outside the goal. An absorbing
/// goal paying at least this rate can never be out-earned by loitering nearby.
pub fn stable_reward_sup(task: Task, w: &RewardWeights, max_range: f64) -> f64 {
    match task {
        Task::Tracking => 0.0,
        Task::Avoidance => w.alpha(6) * max_range + w.alpha(7) * std::f64::consts::PI,
        Task::SingleAgent => w.alpha(14) * max_range,
    }
}

/// Held-out test seeds; disjoint from training and validation seeds.
pub fn eval_seed(i: u64) -> u64 {
    (1u64 << 40) + i
}

/// Seeds used by the periodic evaluations during training.
pub fn validation_seed(i: u64) -> u64 {
    (1u64 << 41) + i
}

fn episode_seed(base: u64, episode: u64) -> u64 {
    base.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ episode
}

/// Owns the learner, replay buffer and exploration RNG across stages.
pub struct Trainer<'a> {
    pub sim: &'a SimConfig,
    lidar: Lidar,
    pub cfg: TrainConfig,
    pub learner: Td3,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    total_steps: u64,
    /// Episodes completed so far, across stages and resumptions.
    pub episode: u64,
    out: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(sim: &'a SimConfig, cfg: TrainConfig) -> Result<Self, TrainError> {
        let learner = Td3::new(cfg.td3.clone(), cfg.mode, cfg.obs.clone(), sim.limits.max_dv())?;
        let buffer = ReplayBuffer::new(cfg.td3.buffer_capacity, learner.obs_dim());
        let rng = ChaCha8Rng::seed_from_u64(cfg.td3.seed.wrapping_add(1));
        Ok(Self {
            sim,
            lidar: sim.build_lidar()?,
            learner,
            buffer,
            rng,
            total_steps: 0,
            episode: 0,
            out: None,
            cfg,
        })
    }

    /// Writes curves, evaluations and checkpoints under `dir`.
    pub fn with_output(mut self, dir: &Path) -> Result<Self, TrainError> {
        fs::create_dir_all(dir).map_err(|source| TrainError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        self.out = Some(dir.to_path_buf());
        Ok(self)
    }

    /// Restores parameters and the episode counter from a checkpoint.
    pub fn resume_from(&mut self, checkpoint: &str) -> Result<u64, TrainError> {
        self.episode = self.learner.load_checkpoint(checkpoint)?;
        Ok(self.episode)
    }

    pub fn checkpoint_name(&self) -> String {
        format!("{}.ckpt", self.cfg.mode)
    }

    fn check_stage(&self, stage: &CurriculumStage) -> Result<(), TrainError> {
        stage.validate()?;
        if stage.success != task_for(self.cfg.mode) {
            return Err(TrainError::TaskMismatch {
                stage: stage.id.clone(),
                task: stage.success,
                mode: self.cfg.mode,
            });
        }
        Ok(())
    }

    /// Trains through `plans` in order. Episodes already counted by a resumed
    /// checkpoint are skipped from the front of the plan.
    pub fn run(&mut self, plans: &[StagePlan]) -> Result<TrainReport, TrainError> {
        for p in plans {
            self.check_stage(&p.stage)?;
        }
        let mut report = TrainReport::default();
        let mut skip = self.episode;
        let mut curve_file = String::new();
        let mut eval_file = String::new();
        for plan in plans {
            let start_hash = self.learner.param_hash();
            let mut ran = 0usize;
            let mut best: Option<((f64, f64), super::td3::Actor)> = None;
            for _ in 0..plan.episodes {
                if skip > 0 {
                    skip -= 1;
                    continue;
                }
                let row = self.train_episode(&plan.stage)?;
                writeln!(curve_file, "{},{},{},{}", row.episode, row.ret, u8::from(row.success), row.len).unwrap();
                report.curve.push(row);
                ran += 1;
                if self.cfg.eval_every > 0 && self.episode.is_multiple_of(self.cfg.eval_every as u64) {
                    let logs = evaluate_on(
                        self.sim,
                        &self.lidar,
                        &self.learner,
                        &plan.stage,
                        (0..self.cfg.eval_episodes as u64).map(validation_seed),
                    )?;
                    let n = logs.len().max(1) as f64;
                    let row = EvalRow {
                        episode: self.episode,
                        stage: plan.stage.id.clone(),
                        success_rate: logs.iter().filter(|l| l.outcome == Outcome::ReachedGoal).count() as f64 / n,
                        mean_return: logs.iter().map(EpisodeLog::total_reward).sum::<f64>() / n,
                    };
                    writeln!(
                        eval_file,
                        "{},{},{},{}",
                        row.episode, row.stage, row.success_rate, row.mean_return
                    )
                    .unwrap();
                    let score = (row.success_rate, row.mean_return);
                    if best.as_ref().is_none_or(|(b, _)| score > *b) {
                        best = Some((score, self.learner.actor.clone()));
                    }
                    report.evals.push(row);
                }
            }
            if let (true, Some((_, actor))) = (self.cfg.keep_best, best) {
                self.learner.actor_target = actor.clone();
                self.learner.actor = actor;
            }
            let end_hash = self.learner.param_hash();
            if ran > 0 {
                self.write(&format!("{}_{}.ckpt", self.cfg.mode, plan.stage.id), &self.learner.save_checkpoint(self.episode))?;
            }
            report.boundaries.push(StageBoundary {
                stage: plan.stage.id.clone(),
                start_hash,
                end_hash,
            });
        }
        if let Some(dir) = &self.out {
            append(&dir.join("curve.csv"), "episode,return,success,len\n", &curve_file)?;
            append(&dir.join("eval.csv"), "episode,stage,success_rate,mean_return\n", &eval_file)?;
            let mut b = String::from("stage,start_hash,end_hash\n");
            for s in &report.boundaries {
                writeln!(b, "{},{},{}", s.stage, s.start_hash, s.end_hash).unwrap();
            }
            self.write("stages.csv", &b)?;
            self.write(&self.checkpoint_name(), &self.learner.save_checkpoint(self.episode))?;
        }
        Ok(report)
    }

    fn write(&self, name: &str, text: &str) -> Result<(), TrainError> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| TrainError::Io { path, source })?;
        }
        Ok(())
    }

    fn train_episode(&mut self, stage: &CurriculumStage) -> Result<CurveRow, TrainError> {
        let spec = stage.sample_episode(episode_seed(self.cfg.td3.seed, self.episode))?;
        let task = task_for(self.cfg.mode);
        let mut env = Env::new(self.sim, &self.lidar, spec, task);
        let obs_cfg = &self.cfg.obs;
        let mode = self.cfg.mode;
        let max_action = self.learner.max_action();
        let scale = self.cfg.td3.reward_scale;
        let gamma = self.cfg.td3.gamma;
        let warmup = self.cfg.td3.warmup_steps as u64;
        let learning_starts = self.cfg.td3.learning_starts as u64;
        let goal_floor = stable_reward_sup(task, &self.sim.weights, self.sim.lidar.max_range);
        let batch_size = self.cfg.td3.batch_size;

        let scripted: Box<dyn Controller> = match mode {
            ObsMode::Avoidance => Box::new(GapAvoider::new(self.sim.regions, self.sim.limits)),
            ObsMode::Tracking | ObsMode::SingleAgent => {
                Box::new(PdTracker::new(self.sim.lookahead.dt_ref, self.sim.limits))
            }
        };
        let mut obs = obs_cfg.encode(mode, env.sensors());
        let mut ret = 0.0;
        let mut len = 0;
        loop {
            // `action` lives in the observation frame, which is what the
            // learner sees and what the buffer stores
            let action = if self.total_steps < warmup {
                match self.cfg.warmup {
                    WarmupPolicy::Random => self.learner.random_action(&mut self.rng),
                    WarmupPolicy::Scripted => {
                        let a = obs_cfg.to_frame(mode, env.sensors(), scripted.act(env.sensors()));
                        self.learner.perturb(a, &mut self.rng)
                    }
                }
            } else {
                self.learner.explore(&obs, &mut self.rng)
            };
            assert!(action.norm() <= max_action * (1.0 + 1e-12), "action bound violated");
            let world = obs_cfg.to_world(mode, env.sensors(), action);
            let res = env.step(world, task);
            self.total_steps += 1;
            len += 1;
            ret += res.reward;
            let next_obs = obs_cfg.encode(mode, env.sensors());
            let (stored, done) = match res.outcome {
                Outcome::ReachedGoal if self.cfg.absorbing_goal => (res.reward.max(goal_floor) / (1.0 - gamma), true),
                // tracking has no penalty branch, so leaving the workspace must
                // not be cheaper than staying in it
                Outcome::Collided | Outcome::Unstable if task == Task::Tracking => (res.reward / (1.0 - gamma), true),
                Outcome::Collided | Outcome::Unstable if self.cfg.absorbing_collision => (res.reward / (1.0 - gamma), true),
                o => (res.reward, o.is_terminal()),
            };
            self.buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: stored * scale,
                next_obs: next_obs.clone(),
                done,
            });
            if self.total_steps >= learning_starts && self.buffer.len() >= batch_size {
                let batch = self.buffer.sample(batch_size, &mut self.rng);
                self.learner.update(&batch)?;
            }
            obs = next_obs;
            if res.outcome.is_done() {
                self.episode += 1;
                return Ok(CurveRow {
                    episode: self.episode,
                    ret,
                    success: res.outcome == Outcome::ReachedGoal,
                    len,
                });
            }
        }
    }

    /// Greedy rollouts on held-out seeds.
    pub fn evaluate(&self, stage: &CurriculumStage, episodes: usize) -> Result<Vec<EpisodeLog>, TrainError> {
        evaluate(self.sim, &self.lidar, &self.learner, stage, episodes)
    }
}

/// Greedy rollouts of `learner` on `episodes` held-out seeds of `stage`.
pub fn evaluate(
    sim: &SimConfig,
    lidar: &Lidar,
    learner: &Td3,
    stage: &CurriculumStage,
    episodes: usize,
) -> Result<Vec<EpisodeLog>, TrainError> {
    evaluate_on(sim, lidar, learner, stage, (0..episodes as u64).map(eval_seed))
}

pub fn evaluate_on(
    sim: &SimConfig,
    lidar: &Lidar,
    learner: &Td3,
    stage: &CurriculumStage,
    seeds: impl Iterator<Item = u64>,
) -> Result<Vec<EpisodeLog>, TrainError> {
    let policy = learner.policy();
    let task = task_for(learner.obs_mode);
    seeds
        .map(|seed| {
            let spec = stage.sample_episode(seed)?;
            let mut env = Env::new(sim, lidar, spec, task);
            Ok(run_episode(&mut env, &Driver::Single { policy: &policy, task })?)
        })
        .collect()
}

fn append(path: &Path, header: &str, body: &str) -> Result<(), TrainError> {
    use std::io::Write;
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let exists = path.exists();
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    if !exists {
        f.write_all(header.as_bytes()).map_err(io)?;
    }
    f.write_all(body.as_bytes()).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envgen::{stage_cva, stage_trt_1};
    use crate::rl::obs::CloudEncoding;

    fn quick(mode: ObsMode) -> TrainConfig {
        let td3 = Td3Config {
            actor_hidden: vec![16],
            critic_hidden: vec![16],
            batch_size: 16,
            warmup_steps: 50,
            learning_starts: 50,
            seed: 3,
            ..Td3Config::smoke()
        };
        let obs = ObsConfig {
            cloud: CloudEncoding::Sectors(8),
            ..ObsConfig::default()
        };
        TrainConfig::new(mode, td3, obs)
    }

    fn short(stage: CurriculumStage, episodes: usize) -> StagePlan {
        let mut stage = stage;
        stage.max_steps = 10;
        StagePlan { stage, episodes }
    }

    #[test]
    fn curve_has_one_row_per_episode_and_replays() {
        let sim = SimConfig::default();
        let run = || {
            let mut t = Trainer::new(&sim, quick(ObsMode::Tracking)).unwrap();
            t.run(&[short(stage_trt_1(), 10)]).unwrap()
        };
        let a = run();
        assert_eq!(a.curve.len(), 10);
        assert_eq!(a.curve.last().unwrap().episode, 10);
        assert_eq!(a, run());
    }

    #[test]
    fn stages_warm_start() {
        let sim = SimConfig::default();
        let mut t = Trainer::new(&sim, quick(ObsMode::Avoidance)).unwrap();
        let mut s1 = stage_cva(1).unwrap();
        s1.max_steps = 20;
        let mut s2 = stage_cva(2).unwrap();
        s2.max_steps = 20;
        let r = t
            .run(&[StagePlan { stage: s1, episodes: 4 }, StagePlan { stage: s2, episodes: 3 }])
            .unwrap();
        assert_eq!(r.boundaries[1].start_hash, r.boundaries[0].end_hash);
        assert_ne!(r.boundaries[0].start_hash, r.boundaries[0].end_hash);
    }

    #[test]
    fn mismatched_stage_fails_before_training() {
        let sim = SimConfig::default();
        let mut t = Trainer::new(&sim, quick(ObsMode::Tracking)).unwrap();
        let before = t.learner.param_hash();
        let err = t.run(&[short(stage_trt_1(), 2), short(stage_cva(1).unwrap(), 2)]);
        assert!(matches!(err, Err(TrainError::TaskMismatch { .. })));
        assert_eq!(t.learner.param_hash(), before);
        assert_eq!(t.episode, 0);
    }

    #[test]
    fn resume_continues_counter() {
        let sim = SimConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::new(&sim, quick(ObsMode::Tracking)).unwrap().with_output(dir.path()).unwrap();
        t.run(&[short(stage_trt_1(), 3)]).unwrap();
        let ckpt = fs::read_to_string(dir.path().join("trt.ckpt")).unwrap();
        let mut t2 = Trainer::new(&sim, quick(ObsMode::Tracking)).unwrap().with_output(dir.path()).unwrap();
        assert_eq!(t2.resume_from(&ckpt).unwrap(), 3);
        let r = t2.run(&[short(stage_trt_1(), 5)]).unwrap();
        assert_eq!(r.curve.iter().map(|c| c.episode).collect::<Vec<_>>(), vec![4, 5]);
        let curve = fs::read_to_string(dir.path().join("curve.csv")).unwrap();
        assert_eq!(curve.lines().count(), 1 + 5);
    }
}
