//! Train the avoidance policy through a list of stages and report held-out
//! goal arrivals on each.
//!
//! ```text
//! cargo run --release --example train_avoider [stage:episodes]...
//! cargo run --release --example train_avoider cva-1:600 cva-block:2000
//! ```

use std::time::Instant;

use dualtrack::config::RunConfig;
use dualtrack::envgen::stage_by_name;
use dualtrack::rl::{StagePlan, Trainer};
use dualtrack::sim::Outcome;

fn main() {
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() {
        args.push("cva-1:600".into());
    }

    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("train.mode", "cva"),
        ("td3.warmup_steps", "5000"),
        ("td3.learning_starts", "1000"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let plans: Vec<StagePlan> = args
        .iter()
        .map(|a| {
            let (id, n) = a.split_once(':').expect("arguments look like cva-1:600");
            StagePlan {
                stage: stage_by_name(id).unwrap(),
                episodes: n.parse().expect("episode count"),
            }
        })
        .collect();

    let mut trainer = Trainer::new(&cfg.sim, cfg.train_config()).unwrap();
    let t0 = Instant::now();
    let report = trainer.run(&plans).unwrap();
    println!("{} episodes in {:.0} s", report.curve.len(), t0.elapsed().as_secs_f64());
    for e in &report.evals {
        println!("  after episode {:>5} on {}: validation success {:.2}", e.episode, e.stage, e.success_rate);
    }
    for plan in &plans {
        let logs = trainer.evaluate(&plan.stage, 10).unwrap();
        let wins = logs.iter().filter(|l| l.outcome == Outcome::ReachedGoal).count();
        println!("{}: {wins}/10 held-out episodes reached the goal", plan.stage.id);
    }
}
