//! Command-line front end: `train`, `bench`, `inspect` and `eval`.
//!
//! Every command reads a [`RunConfig`], applies flag overrides, writes the
//! resolved config next to its outputs and touches nothing outside the
//! output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::bench::{
    bench_csv, builtin_scenario, compute_metrics, external_csv, load_policy, run_scenario, scripted_tracker,
    BenchOptions, BenchResult, PolicySet, ScenarioSpec, Stack,
};
use crate::config::{PolicySource, RunConfig};
use crate::envgen::stage_by_name;
use crate::geom::Vec3;
use crate::lidar::Lidar;
use crate::policy::{Controller, GapAvoider};
use crate::reward::{calculate_regions, collision_heuristic};
use crate::rl::{evaluate, ObsMode, Td3, Trainer};
use crate::scene::Scene;
use crate::sim::Outcome;

#[derive(Parser, Debug)]
#[command(name = "dualtrack", version, about = "Dual-policy UAV tracking: training, benchmarks and scene inspection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Run configuration file (`key = value` lines).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a single config key, e.g. `--set td3.batch_size=32`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Strictly sequential execution and byte-stable outputs.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the policy selected by `train.mode` through `train.stages`.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from `<out>/<mode>.ckpt`.
        #[arg(long)]
        resume: bool,
    },
    /// Run benchmark scenarios and write `bench.csv` plus trajectory dumps.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Seeds per scenario and stack, counting up from `--seed`.
        #[arg(long)]
        seeds: Option<usize>,
        /// Scenario name; repeatable. Defaults to `bench.scenarios`.
        #[arg(long)]
        scenario: Vec<String>,
        /// Policy stack; repeatable. Defaults to `bench.stacks`.
        #[arg(long, value_parser = ["single", "dual-naive", "dual-hyst", "scripted"])]
        stack: Vec<String>,
    },
    /// Scan a scene from one position and report cloud, regions and heuristic.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Scene file to load.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["scenario", "stage"])]
        scene: Option<PathBuf>,
        /// Built-in scenario whose scene to load.
        #[arg(long, conflicts_with = "stage")]
        scenario: Option<String>,
        /// Curriculum stage to sample (with `--seed`) and export.
        #[arg(long)]
        stage: Option<String>,
        /// Sensor position `x,y,z`.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        pos: Option<Vec3>,
        /// Velocity for the heuristic `x,y,z`.
        #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
        vel: Option<Vec3>,
    },
    /// Greedy evaluation of a trained checkpoint on held-out episodes.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Stage to evaluate on; defaults to the last of `train.stages`.
        #[arg(long)]
        stage: Option<String>,
    },
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [x, y, z] => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected x,y,z, found `{s}`")),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            1
        }
    }
}

/// The error chain, dropping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !out.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
    }
    out
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { common, resume } => cmd_train(&load_config(&common)?, resume),
        Command::Bench {
            common,
            seeds,
            scenario,
            stack,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = seeds {
                cfg.set("seeds", &n.to_string())?;
            }
            if !scenario.is_empty() {
                cfg.set("bench.scenarios", &scenario.join(","))?;
            }
            if !stack.is_empty() {
                cfg.set("bench.stacks", &stack.join(","))?;
            }
            cfg.validate()?;
            cmd_bench(&cfg)
        }
        Command::Inspect {
            common,
            scene,
            scenario,
            stage,
            pos,
            vel,
        } => {
            let cfg = load_config(&common)?;
            let source = match (scene, scenario, stage) {
                (Some(p), _, _) => SceneSource::File(p),
                (_, Some(n), _) => SceneSource::Scenario(n),
                (_, _, Some(s)) => SceneSource::Stage(s),
                _ => bail!("inspect needs one of --scene, --scenario or --stage"),
            };
            cmd_inspect(&cfg, &source, pos, vel.unwrap_or(Vec3::ZERO))
        }
        Command::Eval { common, stage } => cmd_eval(&load_config(&common)?, stage.as_deref()),
    }
}

/// Config file, then `--set` overrides, then the dedicated flags.
pub fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, found `{kv}`"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.deterministic |= c.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write(&cfg.out.join("config.resolved"), &cfg.to_text())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<()> {
    prepare_out(cfg)?;
    let plans = cfg.stage_plans()?;
    let mut trainer = Trainer::new(&cfg.sim, cfg.train_config())?;
    let ckpt = cfg.out.join(trainer.checkpoint_name());
    if resume {
        let text = fs::read_to_string(&ckpt).with_context(|| format!("resume: reading {}", ckpt.display()))?;
        let ep = trainer.resume_from(&text)?;
        println!("resuming {} after episode {ep}", cfg.train_mode);
    } else {
        for f in ["curve.csv", "eval.csv", "stages.csv"] {
            let p = cfg.out.join(f);
            if p.exists() {
                fs::remove_file(&p).with_context(|| format!("removing stale {}", p.display()))?;
            }
        }
    }
    let mut trainer = trainer.with_output(&cfg.out)?;
    let report = trainer.run(&plans)?;
    let n = report.curve.len();
    let tail = &report.curve[n.saturating_sub(100)..];
    let mean = tail.iter().map(|r| r.ret).sum::<f64>() / tail.len().max(1) as f64;
    let wins = tail.iter().filter(|r| r.success).count();
    println!(
        "trained {} for {n} episodes (total {}); last {} episodes: mean return {mean:.1}, {wins} successes",
        cfg.train_mode,
        trainer.episode,
        tail.len()
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

fn learned(cfg: &RunConfig, mode: ObsMode) -> Result<Box<dyn Controller>> {
    let path = cfg.checkpoint_dir().join(format!("{mode}.ckpt"));
    Ok(Box::new(load_policy(&path, mode, &cfg.td3_config(), &cfg.obs(mode), &cfg.sim)?))
}

/// Controllers needed by the configured stacks.
pub fn policies_for(cfg: &RunConfig) -> Result<PolicySet> {
    let need = |m: ObsMode| cfg.stacks.iter().any(|s| s.roles().contains(&m));
    let mut set = PolicySet::default();
    if need(ObsMode::Tracking) {
        set.trt = Some(match cfg.bench_trt {
            PolicySource::Checkpoint => learned(cfg, ObsMode::Tracking)?,
            PolicySource::Scripted => Box::new(scripted_tracker(&cfg.sim)),
        });
    }
    if need(ObsMode::Avoidance) {
        set.cva = Some(match cfg.bench_cva {
            PolicySource::Checkpoint => learned(cfg, ObsMode::Avoidance)?,
            PolicySource::Scripted => Box::new(GapAvoider::new(cfg.sim.regions, cfg.sim.limits)),
        });
    }
    if need(ObsMode::SingleAgent) {
        set.single = Some(learned(cfg, ObsMode::SingleAgent)?);
    }
    Ok(set)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<()> {
    // checkpoints are resolved before anything is written
    let policies = policies_for(cfg)?;
    prepare_out(cfg)?;
    let scenarios = cfg
        .scenarios
        .iter()
        .map(|n| builtin_scenario(n))
        .collect::<Result<Vec<ScenarioSpec>, _>>()?;
    let opts = BenchOptions {
        w: cfg.switch_w,
        rollout: cfg.rollout,
        cva_goal: cfg.cva_goal,
        deterministic: cfg.deterministic,
    };
    let lidar = cfg.sim.build_lidar()?;
    let mut jobs = Vec::new();
    for s in &scenarios {
        for &stack in &cfg.stacks {
            for seed in cfg.seed..cfg.seed + cfg.seeds as u64 {
                jobs.push((s, stack, seed));
            }
        }
    }
    let job = |&(s, stack, seed): &(&ScenarioSpec, Stack, u64)| {
        run_scenario(s, stack, &policies, seed, &cfg.sim, &lidar, &opts)
    };
    let results: Vec<BenchResult> = if cfg.deterministic {
        jobs.iter().map(job).collect::<Result<_, _>>()?
    } else {
        jobs.par_iter().map(job).collect::<Result<_, _>>()?
    };
    for r in &results {
        write(&cfg.out.join(r.dump_name()), &r.log.dump())?;
    }
    let rows: Vec<_> = results.iter().map(|r| r.row.clone()).collect();
    let csv = bench_csv(&rows);
    write(&cfg.out.join("bench.csv"), &csv)?;
    write(&cfg.out.join("reference_external.csv"), &external_csv())?;
    print!("{csv}");
    Ok(())
}

pub enum SceneSource {
    File(PathBuf),
    Scenario(String),
    Stage(String),
}

pub fn cmd_inspect(cfg: &RunConfig, source: &SceneSource, pos: Option<Vec3>, vel: Vec3) -> Result<()> {
    let mut exports = Vec::new();
    let (scene, default_pos) = match source {
        SceneSource::File(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let scene = Scene::load(&text).with_context(|| format!("in {}", p.display()))?;
            (scene, Vec3::new(0.0, 0.0, 2.0))
        }
        SceneSource::Scenario(n) => {
            let s = builtin_scenario(n)?;
            exports.push((format!("{n}.scene"), s.scene.save()));
            exports.push((format!("{n}.traj"), s.reference.save()));
            (s.scene, s.reference.start())
        }
        SceneSource::Stage(id) => {
            let ep = stage_by_name(id)?.sample_episode(cfg.seed)?;
            let scene = ep.scene.clone().with_goal(ep.goal);
            exports.push((format!("{id}_seed{}.scene", cfg.seed), scene.save()));
            if let Some(r) = &ep.reference {
                exports.push((format!("{id}_seed{}.traj", cfg.seed), r.save()));
            }
            (scene, ep.start.position)
        }
    };
    let pos = pos.unwrap_or(default_pos);
    let lidar = Lidar::new(cfg.sim.lidar.clone())?;
    let raw = lidar.scan(&scene, pos);
    let cloud = cfg.sim.downsample(&raw);
    let regions = calculate_regions(&cloud, &cfg.sim.regions);
    let h = collision_heuristic(vel, &cloud, &cfg.sim.weights, &cfg.sim.regions);

    let mut report = String::new();
    writeln!(report, "obstacles {}", scene.obstacles().len())?;
    writeln!(report, "position {pos}")?;
    writeln!(report, "clearance {:.4}", scene.signed_clearance(pos).min(f64::MAX))?;
    writeln!(report, "raw returns {}", raw.len())?;
    writeln!(report, "downsampled points {}", cloud.len())?;
    writeln!(report, "nearest return {:.4}", cloud.min_range_or(cfg.sim.lidar.max_range))?;
    writeln!(report, "{} regions", regions.len())?;
    for r in &regions {
        writeln!(
            report,
            "  [{:.2}°, {:.2}°] min range {:.3}",
            r.theta_s.to_degrees(),
            r.theta_l.to_degrees(),
            r.min_range
        )?;
    }
    writeln!(report, "velocity {vel}")?;
    writeln!(report, "heuristic {} (colliding: {})", h.value, h.colliding)?;
    print!("{report}");

    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    write(&cfg.out.join("cloud.txt"), &cloud.dump())?;
    for (name, text) in exports {
        write(&cfg.out.join(name), &text)?;
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, stage: Option<&str>) -> Result<()> {
    let mode = cfg.train_mode;
    let stage_id = match stage {
        Some(s) => s.to_string(),
        None => cfg.stages.last().expect("validated non-empty").id.clone(),
    };
    let stage = stage_by_name(&stage_id)?;
    let path = cfg.checkpoint_dir().join(format!("{mode}.ckpt"));
    if !path.exists() {
        bail!("missing checkpoint {}", path.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut learner = Td3::new(cfg.td3_config(), mode, cfg.obs(mode), cfg.sim.limits.max_dv())?;
    learner
        .load_checkpoint(&text)
        .with_context(|| format!("loading {}", path.display()))?;
    prepare_out(cfg)?;
    let lidar = cfg.sim.build_lidar()?;
    let logs = evaluate(&cfg.sim, &lidar, &learner, &stage, cfg.test_episodes)?;
    let mut csv = String::from("episode,seed,outcome,return,len,goal_dist,M_dev\n");
    let mut wins = 0;
    for (i, log) in logs.iter().enumerate() {
        let seed = crate::rl::train::eval_seed(i as u64);
        let spec = stage.sample_episode(seed)?;
        let dist = log.final_position().distance(spec.goal.center);
        let m_dev = spec
            .reference
            .as_ref()
            .map(|r| format!("{:.4}", compute_metrics(log, r, cfg.sim.limits.dt).m_dev))
            .unwrap_or_default();
        wins += usize::from(log.outcome == Outcome::ReachedGoal);
        writeln!(
            csv,
            "{i},{seed},{},{:.4},{},{dist:.4},{m_dev}",
            outcome_str(log.outcome),
            log.total_reward(),
            log.len()
        )?;
    }
    write(&cfg.out.join(format!("eval_{mode}.csv")), &csv)?;
    print!("{csv}");
    println!("{wins}/{} reached the goal on {stage_id}", logs.len());
    Ok(())
}

pub fn outcome_str(o: Outcome) -> &'static str {
    match o {
        Outcome::Running => "running",
        Outcome::ReachedGoal => "goal",
        Outcome::Collided => "collided",
        Outcome::Unstable => "unstable",
        Outcome::TimeLimit => "timeout",
    }
}
