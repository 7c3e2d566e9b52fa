//! Fly the scripted PD tracker along a spline reference in an empty world and
//! report the benchmark metrics of the executed path.
//!
//! ```text
//! cargo run --release --example track_reference
//! ```

use dualtrack::bench::{compute_metrics, scripted_tracker};
use dualtrack::geom::Vec3;
use dualtrack::rl::{run_episode, Driver};
use dualtrack::scene::{default_bounds, GoalRegion, Scene};
use dualtrack::sim::{Env, EpisodeSpec, SimConfig, Task};
use dualtrack::trajectory::{ReferenceTrajectory, TrajectoryKind};
use dualtrack::vehicle::UavState;

fn main() {
    let sim = SimConfig::default();
    let waypoints = vec![
        (0.0, Vec3::new(-4.0, -2.0, 2.0)),
        (6.0, Vec3::new(-1.0, 1.0, 2.5)),
        (12.0, Vec3::new(2.0, -1.0, 2.0)),
        (18.0, Vec3::new(4.0, 2.0, 1.5)),
    ];
    let reference = ReferenceTrajectory::new(waypoints, TrajectoryKind::Spline).unwrap();
    println!(
        "{} reference, {:.1} s, {:?} -> {:?}",
        reference.kind().as_str(),
        reference.duration(),
        reference.start().to_array(),
        reference.end().to_array()
    );

    let spec = EpisodeSpec {
        scene: Scene::new(default_bounds()),
        goal: GoalRegion::new(reference.end(), sim.goal_radius).unwrap(),
        start: UavState::at_rest(reference.start()),
        max_steps: (reference.duration() / sim.limits.dt) as usize + 250,
        reference: Some(reference.clone()),
    };
    let lidar = sim.build_lidar().unwrap();
    let tracker = scripted_tracker(&sim);
    let mut env = Env::new(&sim, &lidar, spec, Task::Tracking);
    let log = run_episode(
        &mut env,
        &Driver::Single {
            policy: &tracker,
            task: Task::Tracking,
        },
    )
    .unwrap();

    let m = compute_metrics(&log, &reference, sim.limits.dt);
    println!("outcome {:?} after {} steps", log.outcome, log.len());
    println!("L_traj {:.3} m  T_exec {:.2} s  M_dev {:.4} m (eps_K {})", m.l_traj, m.t_exec, m.m_dev, sim.eps_k);
}
