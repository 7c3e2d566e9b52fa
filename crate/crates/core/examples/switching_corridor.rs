//! Naive versus hysteretic arbitration in a corridor whose reference runs
//! straight through a pole.
//!
//! The scripted PD tracker and gap avoider stand in for trained policies so
//! the example needs no checkpoints.
//!
//! ```text
//! cargo run --release --example switching_corridor [w]
//! ```

use dualtrack::geom::Vec3;
use dualtrack::policy::{GapAvoider, PdTracker};
use dualtrack::rl::{run_episode, Active, CvaGoal, Driver, DualStack, EpisodeLog, RolloutKind};
use dualtrack::scene::{GoalRegion, Obstacle, Scene};
use dualtrack::sim::{Env, EpisodeSpec, SimConfig, Task};
use dualtrack::switch::SwitchMode;
use dualtrack::trajectory::ReferenceTrajectory;
use dualtrack::vehicle::UavState;

fn corridor() -> EpisodeSpec {
    let bounds = dualtrack::scene::Aabb::new(Vec3::new(-2.0, -4.0, 0.0), Vec3::new(12.0, 4.0, 5.0)).unwrap();
    let scene = Scene::new(bounds).with_obstacles([
        Obstacle::cuboid(Vec3::new(5.0, 2.0, 2.5), Vec3::new(6.0, 0.1, 2.5)).unwrap(),
        Obstacle::cuboid(Vec3::new(5.0, -2.0, 2.5), Vec3::new(6.0, 0.1, 2.5)).unwrap(),
        Obstacle::cylinder([4.0, 0.0], 0.3, 5.0).unwrap(),
    ]);
    let start = Vec3::new(0.0, 0.0, 2.0);
    let end = Vec3::new(9.0, 0.0, 2.0);
    EpisodeSpec {
        scene,
        reference: Some(ReferenceTrajectory::straight_line(start, end, 0.5).unwrap()),
        goal: GoalRegion::new(end, 0.3).unwrap(),
        start: UavState::at_rest(start),
        max_steps: 700,
    }
}

fn run(mode: SwitchMode, w: usize, sim: &SimConfig) -> EpisodeLog {
    let lidar = sim.build_lidar().unwrap();
    let trt = PdTracker::new(sim.lookahead.dt_ref, sim.limits);
    let cva = GapAvoider::new(sim.regions, sim.limits);
    let driver = Driver::Dual(DualStack {
        trt: &trt,
        cva: &cva,
        mode,
        w,
        rollout: RolloutKind::FrozenCloud,
        cva_goal: CvaGoal::Clear,
    });
    let mut env = Env::new(sim, &lidar, corridor(), Task::Tracking);
    run_episode(&mut env, &driver).unwrap()
}

fn main() {
    let w: usize = std::env::args().nth(1).map_or(10, |s| s.parse().expect("w must be an integer"));
    let sim = SimConfig::default();
    for mode in [SwitchMode::Naive, SwitchMode::Hysteretic] {
        let log = run(mode, w, &sim);
        let cva_steps = log.records.iter().filter(|r| r.active == Active::Cva).count();
        let min_clear = log.records.iter().map(|r| r.clearance).fold(f64::INFINITY, f64::min);
        println!(
            "{:<10} outcome {:?}  steps {}  cva steps {}  toggles {}  cva->trt {}  min clearance {:.3} m",
            mode.as_str(),
            log.outcome,
            log.len(),
            cva_steps,
            log.toggles(),
            log.cva_to_trt(),
            min_clear
        );
    }
}
