//! Sample every curriculum stage and write one episode of each as scene and
//! reference files that `dualtrack inspect --scene` can read.
//!
//! ```text
//! cargo run --release --example curriculum [seed] [out_dir]
//! ```

use std::fs;
use std::path::PathBuf;

use dualtrack::envgen::stage_by_name;

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "out/curriculum".into()));
    fs::create_dir_all(&out).unwrap();

    for id in ["trt-1", "trt-2", "cva-1", "cva-2", "cva-3", "cva-block", "single-1"] {
        let stage = stage_by_name(id).unwrap();
        let ep = stage.sample_episode(seed).unwrap();
        let goal_dist = ep.start.position.distance(ep.goal.center);
        println!(
            "{id:<9} {} obstacles, start {:?}, goal {:?} ({goal_dist:.2} m away), {}",
            ep.scene.obstacles().len(),
            ep.start.position.to_array(),
            ep.goal.center.to_array(),
            match &ep.reference {
                Some(r) => format!("{} reference over {:.1} s", r.kind().as_str(), r.duration()),
                None => "goal only".into(),
            }
        );
        let scene = ep.scene.clone().with_goal(ep.goal);
        fs::write(out.join(format!("{id}_seed{seed}.scene")), scene.save()).unwrap();
        if let Some(r) = &ep.reference {
            fs::write(out.join(format!("{id}_seed{seed}.traj")), r.save()).unwrap();
        }
    }
    println!("wrote {}", out.display());
}
