//! Run every built-in scenario with the scripted stacks and print the bench
//! CSV. Pass a checkpoint directory holding `trt.ckpt` and `cva.ckpt` to
//! benchmark trained policies instead.
//!
//! ```text
//! cargo run --release --example benchmark [checkpoint_dir]
//! ```

use std::path::Path;

use dualtrack::bench::{bench_csv, builtin_scenarios, load_policy, run_scenario, BenchOptions, PolicySet, Stack};
use dualtrack::config::RunConfig;
use dualtrack::policy::{Controller, GapAvoider, PdTracker};
use dualtrack::rl::ObsMode;

fn main() {
    let cfg = RunConfig::default();
    let sim = &cfg.sim;
    let lidar = sim.build_lidar().unwrap();
    let policies = match std::env::args().nth(1) {
        Some(dir) => {
            let load = |mode: ObsMode| -> Box<dyn Controller> {
                let path = Path::new(&dir).join(format!("{}.ckpt", mode.as_str()));
                Box::new(load_policy(&path, mode, &cfg.td3_config(), &cfg.obs(mode), sim).unwrap())
            };
            PolicySet {
                trt: Some(load(ObsMode::Tracking)),
                cva: Some(load(ObsMode::Avoidance)),
                single: None,
            }
        }
        None => PolicySet {
            trt: Some(Box::new(PdTracker::new(sim.lookahead.dt_ref, sim.limits))),
            cva: Some(Box::new(GapAvoider::new(sim.regions, sim.limits))),
            single: None,
        },
    };
    let opts = BenchOptions {
        w: cfg.switch_w,
        rollout: cfg.rollout,
        cva_goal: cfg.cva_goal,
        deterministic: true,
    };
    let mut rows = Vec::new();
    for spec in builtin_scenarios() {
        for stack in [Stack::Scripted, Stack::DualNaive, Stack::DualHyst] {
            let res = run_scenario(&spec, stack, &policies, 0, sim, &lidar, &opts).unwrap();
            rows.push(res.row);
        }
    }
    print!("{}", bench_csv(&rows));
}
