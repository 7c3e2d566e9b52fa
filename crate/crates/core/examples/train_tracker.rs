//! Train the tracking policy on stage trt-1 with the default run
//! configuration and evaluate it greedily on held-out straight lines.
//!
//! ```text
//! cargo run --release --example train_tracker [episodes] [seed]
//! ```

use std::time::Instant;

use dualtrack::config::RunConfig;
use dualtrack::envgen::stage_trt_1;
use dualtrack::geom::point_polyline_distance;
use dualtrack::rl::train::eval_seed;
use dualtrack::rl::{StagePlan, Trainer};

fn main() {
    let mut args = std::env::args().skip(1);
    let episodes: usize = args.next().map_or(1500, |s| s.parse().unwrap());
    let seed: u64 = args.next().map_or(2, |s| s.parse().unwrap());

    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    let mut trainer = Trainer::new(&cfg.sim, cfg.train_config()).unwrap();
    let stage = stage_trt_1();
    let t0 = Instant::now();
    let report = trainer.run(&[StagePlan { stage: stage.clone(), episodes }]).unwrap();
    println!("{episodes} episodes in {:.0} s", t0.elapsed().as_secs_f64());

    for chunk in report.curve.chunks(report.curve.len().div_ceil(6).max(1)) {
        let mean = chunk.iter().map(|c| c.ret).sum::<f64>() / chunk.len() as f64;
        let wins = chunk.iter().filter(|c| c.success).count();
        println!("  episodes {:>5}..: mean return {mean:8.1}, {wins}/{} successes", chunk[0].episode, chunk.len());
    }

    let logs = trainer.evaluate(&stage, 10).unwrap();
    for (i, log) in logs.iter().enumerate() {
        let spec = stage.sample_episode(eval_seed(i as u64)).unwrap();
        let line = spec.reference.unwrap();
        let dev = log
            .positions()
            .iter()
            .map(|p| point_polyline_distance(*p, line.points()))
            .fold(0.0, f64::max);
        println!("held-out line {i}: {:?}, max deviation {dev:.3} m", log.outcome);
    }
}
