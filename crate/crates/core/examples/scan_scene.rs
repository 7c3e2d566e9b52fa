//! Scan a built-in scenario from one position: raw returns, the voxelized
//! cloud, obstacle regions and the collision heuristic for a few headings.
//!
//! ```text
//! cargo run --release --example scan_scene [scenario] [x y z]
//! ```

use std::time::Instant;

use dualtrack::bench::builtin_scenario;
use dualtrack::geom::Vec3;
use dualtrack::reward::{calculate_regions, collision_heuristic};
use dualtrack::sim::SimConfig;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("5obs", String::as_str);
    let spec = builtin_scenario(name).expect("unknown scenario");
    let pos = match &args[1.min(args.len())..] {
        [x, y, z] => Vec3::new(x.parse().unwrap(), y.parse().unwrap(), z.parse().unwrap()),
        _ => spec.reference.start(),
    };

    let sim = SimConfig::default();
    let lidar = sim.build_lidar().unwrap();
    let t0 = Instant::now();
    let raw = lidar.scan(&spec.scene, pos);
    let scan_ms = t0.elapsed().as_secs_f64() * 1e3;
    let cloud = sim.downsample(&raw);
    println!("{name}: {} obstacles, sensor at {:?}", spec.scene.obstacles().len(), pos.to_array());
    println!("{} rays -> {} returns in {scan_ms:.2} ms, {} after voxel downsampling", lidar.directions().len(), raw.len(), cloud.len());
    println!("clearance {:.3} m, nearest return {:.3} m", spec.scene.signed_clearance(pos), cloud.min_range_or(f64::NAN));

    let regions = calculate_regions(&cloud, &sim.regions);
    println!("{} regions", regions.len());
    for r in &regions {
        println!("  [{:7.2}°, {:7.2}°] nearest {:.2} m", r.theta_s.to_degrees(), r.theta_l.to_degrees(), r.min_range);
    }
    for deg in [0.0f64, 45.0, 90.0, 180.0, -90.0] {
        let v = Vec3::new(deg.to_radians().cos(), deg.to_radians().sin(), 0.0) * 0.5;
        let h = collision_heuristic(v, &cloud, &sim.weights, &sim.regions);
        println!("heading {deg:6.1}°: heuristic {:+.3}{}", h.value, if h.colliding { " (colliding)" } else { "" });
    }
}
