//! Run configuration: a flat, line-oriented `key = value` file.
//!
//! Every key has a default, so an empty file is a valid config. Unknown keys
//! and malformed values are rejected with the line and key name. The
//! resolved config can be written back out with [`RunConfig::to_text`] and
//! reproduces the run exactly.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::bench::Stack;
use crate::envgen::{stage_by_name, CurriculumStage, EnvgenError};
use crate::rl::{CloudEncoding, CvaGoal, ObsConfig, ObsMode, RolloutKind, StagePlan, Td3Config, TrainConfig, WarmupPolicy};
use crate::sim::SimConfig;
use crate::switch::SwitchMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    /// `line` is 0 for assignments that did not come from a file.
    #[error("{}unknown key `{key}`", line_prefix(*.line))]
    UnknownKey { line: usize, key: String },
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

/// Where a dual-stack role comes from at benchmark time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicySource {
    Checkpoint,
    Scripted,
}

impl FromStr for PolicySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "checkpoint" => Ok(PolicySource::Checkpoint),
            "scripted" => Ok(PolicySource::Scripted),
            other => Err(format!("expected checkpoint or scripted, found `{other}`")),
        }
    }
}

impl PolicySource {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicySource::Checkpoint => "checkpoint",
            PolicySource::Scripted => "scripted",
        }
    }
}

/// Warmup behaviour, `auto` picking scripted for the avoidance and
/// single-agent learners and random actions for tracking.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WarmupChoice {
    Auto,
    Fixed(WarmupPolicy),
}

impl WarmupChoice {
    pub fn resolve(self, mode: ObsMode) -> WarmupPolicy {
        match self {
            WarmupChoice::Fixed(w) => w,
            WarmupChoice::Auto => match mode {
                ObsMode::Tracking => WarmupPolicy::Random,
                ObsMode::Avoidance | ObsMode::SingleAgent => WarmupPolicy::Scripted,
            },
        }
    }
}

/// One entry of `train.stages`: a stage id with an optional episode budget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageEntry {
    pub id: String,
    pub episodes: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub switch_mode: SwitchMode,
    pub switch_w: usize,
    pub rollout: RolloutKind,
    pub cva_goal: CvaGoal,
    pub td3: Td3Config,
    pub obs_trt: ObsConfig,
    pub obs_cva: ObsConfig,
    pub obs_single: ObsConfig,
    pub train_mode: ObsMode,
    pub stages: Vec<StageEntry>,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub keep_best: bool,
    pub absorbing_goal: bool,
    pub absorbing_collision: bool,
    pub warmup: WarmupChoice,
    /// Held-out episodes for the `eval` command.
    pub test_episodes: usize,
    pub scenarios: Vec<String>,
    pub stacks: Vec<Stack>,
    pub bench_trt: PolicySource,
    pub bench_cva: PolicySource,
    /// Directory holding `trt.ckpt`, `cva.ckpt` and `single.ckpt`; the output
    /// directory when unset.
    pub checkpoints: Option<PathBuf>,
    pub seed: u64,
    pub seeds: usize,
    pub out: PathBuf,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sectors = ObsConfig {
            cloud: CloudEncoding::Sectors(16),
            ..ObsConfig::default()
        };
        Self {
            sim: SimConfig::default(),
            switch_mode: SwitchMode::Hysteretic,
            switch_w: 10,
            rollout: RolloutKind::FrozenCloud,
            cva_goal: CvaGoal::Clear,
            td3: Td3Config {
                expl_noise: 0.3,
                ..Td3Config::smoke()
            },
            obs_trt: ObsConfig::default(),
            obs_cva: ObsConfig {
                length_scale: 1.0,
                goal_frame: true,
                ..sectors.clone()
            },
            obs_single: sectors,
            train_mode: ObsMode::Tracking,
            stages: vec![StageEntry {
                id: "trt-1".into(),
                episodes: Some(1500),
            }],
            eval_every: 50,
            eval_episodes: 20,
            keep_best: true,
            absorbing_goal: true,
            absorbing_collision: false,
            warmup: WarmupChoice::Auto,
            test_episodes: 10,
            scenarios: crate::bench::builtin_names().map(str::to_string).collect(),
            stacks: Stack::ALL.to_vec(),
            bench_trt: PolicySource::Checkpoint,
            bench_cva: PolicySource::Checkpoint,
            checkpoints: None,
            seed: 0,
            seeds: 1,
            out: PathBuf::from("out"),
            deterministic: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| invalid(key, format!("not a valid number: `{v}`")))
}

fn positive(key: &str, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = parse_num(key, v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn count(key: &str, v: &str) -> Result<usize, ConfigError> {
    let n: usize = parse_num(key, v)?;
    if n == 0 {
        return Err(invalid(key, "must be at least 1"));
    }
    Ok(n)
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(invalid(key, format!("expected true or false, found `{v}`"))),
    }
}

fn parse_with<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e: T::Err| invalid(key, e.to_string()))
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",")
}

fn rollout_str(r: RolloutKind) -> &'static str {
    match r {
        RolloutKind::FrozenCloud => "frozen",
        RolloutKind::SceneRescan => "rescan",
    }
}

fn cva_goal_str(g: CvaGoal) -> &'static str {
    match g {
        CvaGoal::Final => "final",
        CvaGoal::Lookahead => "lookahead",
        CvaGoal::Clear => "clear",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("expected `key = value`, found `{line}`"),
                });
            };
            cfg.set(k.trim(), v.trim()).map_err(|e| match e {
                ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: i + 1, key },
                ConfigError::Invalid { key, message } => ConfigError::Syntax {
                    line: i + 1,
                    message: format!("{key}: {message}"),
                },
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        if let Some(i) = key.strip_prefix("reward.alpha") {
            let i: usize = i.parse().map_err(|_| ConfigError::UnknownKey {
                line: 0,
                key: key.to_string(),
            })?;
            if !(1..=16).contains(&i) {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                });
            }
            let x: f64 = parse_num(key, v)?;
            return self.sim.weights.set(i, x).map_err(|e| invalid(key, e.to_string()));
        }
        if let Some(rest) = key.strip_prefix("obs.") {
            if let Some((mode, field)) = rest.split_once('.') {
                if let Ok(mode) = mode.parse::<ObsMode>() {
                    return self.set_obs(mode, field, key, v);
                }
            }
        }
        let s = &mut self.sim;
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "seeds" => self.seeds = count(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "deterministic" => self.deterministic = parse_bool(key, v)?,
            "vehicle.v_max" => s.limits.v_max = positive(key, v)?,
            "vehicle.a_max" => s.limits.a_max = positive(key, v)?,
            "vehicle.dt" => s.limits.dt = positive(key, v)?,
            "lidar.min_range" => s.lidar.min_range = parse_num(key, v)?,
            "lidar.max_range" => s.lidar.max_range = positive(key, v)?,
            "lidar.h_resolution" => s.lidar.h_resolution = positive(key, v)?,
            "lidar.v_min" => s.lidar.v_span[0] = parse_num(key, v)?,
            "lidar.v_max" => s.lidar.v_span[1] = parse_num(key, v)?,
            "lidar.v_rings" => s.lidar.v_rings = count(key, v)?,
            "lidar.voxel" => s.voxel = positive(key, v)?,
            "lidar.cloud_cap" => s.cloud_cap = count(key, v)?,
            "regions.r_threat" => s.regions.r_threat = positive(key, v)?,
            "regions.gap_max" => s.regions.gap_max = positive(key, v)?,
            "regions.v_eps" => s.regions.v_eps = positive(key, v)?,
            "track.eps_k" => s.eps_k = positive(key, v)?,
            "track.goal_radius" => s.goal_radius = positive(key, v)?,
            "track.lookahead_m" => s.lookahead.m = parse_num(key, v)?,
            "track.dt_ref" => s.lookahead.dt_ref = positive(key, v)?,
            "switch.mode" => self.switch_mode = parse_with(key, v)?,
            "switch.w" => self.switch_w = count(key, v)?,
            "switch.body_radius" => {
                let r: f64 = parse_num(key, v)?;
                if !(r >= 0.0) {
                    return Err(invalid(key, format!("must be non-negative, found `{v}`")));
                }
                s.trigger_radius = r;
            }
            "switch.rollout" => {
                self.rollout = match v {
                    "frozen" => RolloutKind::FrozenCloud,
                    "rescan" => RolloutKind::SceneRescan,
                    _ => return Err(invalid(key, format!("expected frozen or rescan, found `{v}`"))),
                }
            }
            "switch.cva_goal" => {
                self.cva_goal = match v {
                    "final" => CvaGoal::Final,
                    "lookahead" => CvaGoal::Lookahead,
                    "clear" => CvaGoal::Clear,
                    _ => return Err(invalid(key, format!("expected final, lookahead or clear, found `{v}`"))),
                }
            }
            "td3.actor_hidden" | "td3.critic_hidden" => {
                let sizes = list(v).map(|x| count(key, x)).collect::<Result<Vec<_>, _>>()?;
                if sizes.is_empty() {
                    return Err(invalid(key, "needs at least one layer"));
                }
                if key == "td3.actor_hidden" {
                    self.td3.actor_hidden = sizes;
                } else {
                    self.td3.critic_hidden = sizes;
                }
            }
            "td3.actor_lr" => self.td3.actor_lr = positive(key, v)?,
            "td3.critic_lr" => self.td3.critic_lr = positive(key, v)?,
            "td3.gamma" => self.td3.gamma = parse_num(key, v)?,
            "td3.tau" => self.td3.tau = parse_num(key, v)?,
            "td3.policy_noise" => self.td3.policy_noise = parse_num(key, v)?,
            "td3.noise_clip" => self.td3.noise_clip = parse_num(key, v)?,
            "td3.policy_delay" => self.td3.policy_delay = count(key, v)?,
            "td3.batch_size" => self.td3.batch_size = count(key, v)?,
            "td3.buffer_capacity" => self.td3.buffer_capacity = count(key, v)?,
            "td3.expl_noise" => self.td3.expl_noise = parse_num(key, v)?,
            "td3.warmup_steps" => self.td3.warmup_steps = parse_num(key, v)?,
            "td3.learning_starts" => self.td3.learning_starts = parse_num(key, v)?,
            "td3.reward_scale" => self.td3.reward_scale = positive(key, v)?,
            "train.mode" => self.train_mode = parse_with(key, v)?,
            "train.stages" => {
                self.stages = list(v)
                    .map(|item| {
                        let (id, n) = match item.split_once(':') {
                            Some((id, n)) => (id.trim(), Some(count(key, n.trim())?)),
                            None => (item, None),
                        };
                        stage_by_name(id).map_err(|e| invalid(key, e.to_string()))?;
                        Ok(StageEntry {
                            id: id.to_string(),
                            episodes: n,
                        })
                    })
                    .collect::<Result<Vec<_>, ConfigError>>()?;
            }
            "train.eval_every" => self.eval_every = parse_num(key, v)?,
            "train.eval_episodes" => self.eval_episodes = count(key, v)?,
            "train.keep_best" => self.keep_best = parse_bool(key, v)?,
            "train.absorbing_goal" => self.absorbing_goal = parse_bool(key, v)?,
            "train.absorbing_collision" => self.absorbing_collision = parse_bool(key, v)?,
            "train.warmup" => {
                self.warmup = match v {
                    "auto" => WarmupChoice::Auto,
                    other => WarmupChoice::Fixed(parse_with(key, other)?),
                }
            }
            "eval.episodes" => self.test_episodes = count(key, v)?,
            "bench.scenarios" => self.scenarios = list(v).map(str::to_string).collect(),
            "bench.stacks" => {
                self.stacks = list(v)
                    .map(|s| s.parse::<Stack>().map_err(|e| invalid(key, e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "bench.trt" => self.bench_trt = parse_with(key, v)?,
            "bench.cva" => self.bench_cva = parse_with(key, v)?,
            "bench.checkpoints" => self.checkpoints = (!v.is_empty()).then(|| PathBuf::from(v)),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    fn set_obs(&mut self, mode: ObsMode, field: &str, key: &str, v: &str) -> Result<(), ConfigError> {
        let o = match mode {
            ObsMode::Tracking => &mut self.obs_trt,
            ObsMode::Avoidance => &mut self.obs_cva,
            ObsMode::SingleAgent => &mut self.obs_single,
        };
        match field {
            "cloud" => o.cloud = parse_with(key, v)?,
            "length_scale" => o.length_scale = positive(key, v)?,
            "speed_scale" => o.speed_scale = positive(key, v)?,
            "goal_clip" => o.goal_clip = positive(key, v)?,
            "velocity" => o.trt_velocity = parse_bool(key, v)?,
            "goal_frame" => o.goal_frame = parse_bool(key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    line: 0,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Cross-field checks, run after every parse.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.limits.validate().map_err(|m| invalid("vehicle", m))?;
        self.sim.lidar.validate().map_err(|e| invalid("lidar", e.to_string()))?;
        self.td3.validate().map_err(|e| invalid("td3", e.to_string()))?;
        if self.stages.is_empty() {
            return Err(invalid("train.stages", "needs at least one stage"));
        }
        let task = crate::rl::train::task_for(self.train_mode);
        for s in &self.stages {
            let stage = stage_by_name(&s.id).map_err(|e| invalid("train.stages", e.to_string()))?;
            if stage.success != task {
                return Err(invalid(
                    "train.stages",
                    format!("stage `{}` does not train the `{}` policy", s.id, self.train_mode),
                ));
            }
        }
        if self.switch_w > crate::switch::MAX_LOOKAHEAD {
            return Err(invalid(
                "switch.w",
                format!("at most {} steps", crate::switch::MAX_LOOKAHEAD),
            ));
        }
        for name in &self.scenarios {
            crate::bench::builtin_scenario(name).map_err(|e| invalid("bench.scenarios", e.to_string()))?;
        }
        Ok(())
    }

    /// Observation layout of `mode`, with the fields that follow from the
    /// sensor and lookahead settings filled in.
    pub fn obs(&self, mode: ObsMode) -> ObsConfig {
        let base = match mode {
            ObsMode::Tracking => &self.obs_trt,
            ObsMode::Avoidance => &self.obs_cva,
            ObsMode::SingleAgent => &self.obs_single,
        };
        ObsConfig {
            cloud_cap: self.sim.cloud_cap,
            lookahead_m: self.sim.lookahead.m,
            max_range: self.sim.lidar.max_range,
            r_threat: self.sim.regions.r_threat,
            ..base.clone()
        }
    }

    pub fn td3_config(&self) -> Td3Config {
        Td3Config {
            seed: self.seed,
            ..self.td3.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = TrainConfig::new(self.train_mode, self.td3_config(), self.obs(self.train_mode));
        t.eval_every = self.eval_every;
        t.eval_episodes = self.eval_episodes;
        t.keep_best = self.keep_best;
        t.absorbing_goal = self.absorbing_goal;
        t.absorbing_collision = self.absorbing_collision;
        t.warmup = self.warmup.resolve(self.train_mode);
        t
    }

    pub fn stage_plans(&self) -> Result<Vec<StagePlan>, EnvgenError> {
        self.stages
            .iter()
            .map(|s| {
                let stage: CurriculumStage = stage_by_name(&s.id)?;
                Ok(StagePlan {
                    episodes: s.episodes.unwrap_or(stage.episodes),
                    stage,
                })
            })
            .collect()
    }

    /// Every key with its resolved value; parsing the result yields `self`.
    pub fn to_text(&self) -> String {
        let s = &self.sim;
        let mut out = String::from("# resolved run configuration\n");
        let mut kv = |k: &str, v: String| {
            writeln!(out, "{k} = {v}").unwrap();
        };
        kv("seed", self.seed.to_string());
        kv("seeds", self.seeds.to_string());
        kv("out", self.out.display().to_string());
        kv("deterministic", self.deterministic.to_string());
        kv("vehicle.v_max", s.limits.v_max.to_string());
        kv("vehicle.a_max", s.limits.a_max.to_string());
        kv("vehicle.dt", s.limits.dt.to_string());
        kv("lidar.min_range", s.lidar.min_range.to_string());
        kv("lidar.max_range", s.lidar.max_range.to_string());
        kv("lidar.h_resolution", s.lidar.h_resolution.to_string());
        kv("lidar.v_min", s.lidar.v_span[0].to_string());
        kv("lidar.v_max", s.lidar.v_span[1].to_string());
        kv("lidar.v_rings", s.lidar.v_rings.to_string());
        kv("lidar.voxel", s.voxel.to_string());
        kv("lidar.cloud_cap", s.cloud_cap.to_string());
        for (i, a) in s.weights.as_array().iter().enumerate() {
            kv(&format!("reward.alpha{}", i + 1), a.to_string());
        }
        kv("regions.r_threat", s.regions.r_threat.to_string());
        kv("regions.gap_max", s.regions.gap_max.to_string());
        kv("regions.v_eps", s.regions.v_eps.to_string());
        kv("track.eps_k", s.eps_k.to_string());
        kv("track.goal_radius", s.goal_radius.to_string());
        kv("track.lookahead_m", s.lookahead.m.to_string());
        kv("track.dt_ref", s.lookahead.dt_ref.to_string());
        kv("switch.mode", self.switch_mode.as_str().to_string());
        kv("switch.w", self.switch_w.to_string());
        kv("switch.body_radius", s.trigger_radius.to_string());
        kv("switch.rollout", rollout_str(self.rollout).to_string());
        kv("switch.cva_goal", cva_goal_str(self.cva_goal).to_string());
        let t = &self.td3;
        kv("td3.actor_hidden", join(&t.actor_hidden));
        kv("td3.critic_hidden", join(&t.critic_hidden));
        kv("td3.actor_lr", t.actor_lr.to_string());
        kv("td3.critic_lr", t.critic_lr.to_string());
        kv("td3.gamma", t.gamma.to_string());
        kv("td3.tau", t.tau.to_string());
        kv("td3.policy_noise", t.policy_noise.to_string());
        kv("td3.noise_clip", t.noise_clip.to_string());
        kv("td3.policy_delay", t.policy_delay.to_string());
        kv("td3.batch_size", t.batch_size.to_string());
        kv("td3.buffer_capacity", t.buffer_capacity.to_string());
        kv("td3.expl_noise", t.expl_noise.to_string());
        kv("td3.warmup_steps", t.warmup_steps.to_string());
        kv("td3.learning_starts", t.learning_starts.to_string());
        kv("td3.reward_scale", t.reward_scale.to_string());
        for (mode, o) in [
            (ObsMode::Tracking, &self.obs_trt),
            (ObsMode::Avoidance, &self.obs_cva),
            (ObsMode::SingleAgent, &self.obs_single),
        ] {
            kv(&format!("obs.{mode}.cloud"), o.cloud.to_string());
            kv(&format!("obs.{mode}.length_scale"), o.length_scale.to_string());
            kv(&format!("obs.{mode}.speed_scale"), o.speed_scale.to_string());
            kv(&format!("obs.{mode}.goal_clip"), o.goal_clip.to_string());
            kv(&format!("obs.{mode}.velocity"), o.trt_velocity.to_string());
            if mode == ObsMode::Avoidance {
                kv(&format!("obs.{mode}.goal_frame"), o.goal_frame.to_string());
            }
        }
        kv("train.mode", self.train_mode.to_string());
        kv(
            "train.stages",
            join(self.stages.iter().map(|s| match s.episodes {
                Some(n) => format!("{}:{n}", s.id),
                None => s.id.clone(),
            })),
        );
        kv("train.eval_every", self.eval_every.to_string());
        kv("train.eval_episodes", self.eval_episodes.to_string());
        kv("train.keep_best", self.keep_best.to_string());
        kv("train.absorbing_goal", self.absorbing_goal.to_string());
        kv("train.absorbing_collision", self.absorbing_collision.to_string());
        kv(
            "train.warmup",
            match self.warmup {
                WarmupChoice::Auto => "auto".into(),
                WarmupChoice::Fixed(w) => w.as_str().into(),
            },
        );
        kv("eval.episodes", self.test_episodes.to_string());
        kv("bench.scenarios", self.scenarios.join(","));
        kv("bench.stacks", join(self.stacks.iter().map(|s| s.as_str())));
        kv("bench.trt", self.bench_trt.as_str().into());
        kv("bench.cva", self.bench_cva.as_str().into());
        kv(
            "bench.checkpoints",
            self.checkpoints.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        out
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoints.clone().unwrap_or_else(|| self.out.clone())
    }
}
