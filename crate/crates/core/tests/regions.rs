//! Obstacle regions from real scans, and the deviation metric against a
//! brute-force distance.

use std::f64::consts::PI;

use dualtrack::bench::compute_metrics;
use dualtrack::geom::Vec3;
use dualtrack::lidar::PointCloud;
use dualtrack::reward::{calculate_regions, RegionParams};
use dualtrack::rl::{Active, EpisodeLog, StepRecord};
use dualtrack::scene::Scene;
use dualtrack::sim::{Outcome, SimConfig};
use dualtrack::trajectory::ReferenceTrajectory;
use dualtrack::vehicle::UavState;
use proptest::prelude::*;

#[test]
fn near_pole_stays_one_region() {
    let sim = SimConfig::default();
    let lidar = sim.build_lidar().unwrap();
    let scene = Scene::load("scene v1\ncylinder 0 0 0.3 5\n").unwrap();
    // from well out to just past the collision distance
    for d in [3.0, 2.0, 1.2, 0.8, 0.6, 0.45] {
        let cloud = sim.downsample(&lidar.scan(&scene, Vec3::new(-d - 0.3, 0.0, 2.0)));
        let regions = calculate_regions(&cloud, &sim.regions);
        assert_eq!(regions.len(), 1, "surface distance {d}: {regions:?}");
        assert!(regions[0].contains(0.0), "surface distance {d}: {regions:?}");
    }
}

fn arb_cloud() -> impl Strategy<Value = PointCloud> {
    proptest::collection::vec((-PI..PI, 0.2f64..5.0), 0..60).prop_map(|v| {
        PointCloud::new(v.into_iter().map(|(b, r)| Vec3::new(r * b.cos(), r * b.sin(), 0.0)).collect())
    })
}

/// Minimum over `s ∈ [0,1]` of `|p - (a + s(b-a))|` by ternary search.
fn segment_oracle(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let f = |s: f64| p.distance(a + (b - a) * s);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi)).min(f(0.0)).min(f(1.0))
}

fn arb_vec(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn inflated_regions_cover_bare_ones(cloud in arb_cloud(), r in 0.0f64..0.8) {
        let bare = RegionParams::default();
        let fat = RegionParams { body_radius: r, ..bare };
        let a = calculate_regions(&cloud, &bare);
        let b = calculate_regions(&cloud, &fat);
        // regions do not wrap, so a span across ±π may add one piece
        prop_assert!(b.len() <= a.len() + 1);
        for q in &cloud.points {
            if q.horizontal_norm() > bare.r_threat {
                continue;
            }
            let beta = q.y.atan2(q.x);
            prop_assert_eq!(b.iter().filter(|g| g.contains(beta)).count(), 1);
        }
    }

    #[test]
    fn zero_radius_matches_default(cloud in arb_cloud()) {
        let p = RegionParams { body_radius: 0.0, ..RegionParams::default() };
        prop_assert_eq!(calculate_regions(&cloud, &p), calculate_regions(&cloud, &RegionParams::default()));
    }

    #[test]
    fn max_deviation_matches_brute_force(
        knots in proptest::collection::vec(arb_vec(5.0), 2..6),
        path in proptest::collection::vec(arb_vec(6.0), 2..30),
    ) {
        let waypoints: Vec<(f64, Vec3)> = knots.iter().enumerate().map(|(i, p)| (i as f64, *p)).collect();
        let reference = ReferenceTrajectory::polyline(waypoints).unwrap();
        let log = EpisodeLog {
            start: UavState::at_rest(path[0]),
            records: path[1..]
                .iter()
                .map(|p| StepRecord {
                    t: 0.0,
                    position: *p,
                    velocity: Vec3::ZERO,
                    action: Vec3::ZERO,
                    reward: 0.0,
                    active: Active::Single,
                    heuristic: 0.0,
                    clearance: 0.0,
                    compute_s: 0.0,
                })
                .collect(),
            outcome: Outcome::TimeLimit,
        };
        let m = compute_metrics(&log, &reference, 0.1);
        let oracle = path
            .iter()
            .map(|p| knots.windows(2).map(|w| segment_oracle(*p, w[0], w[1])).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        prop_assert!((m.m_dev - oracle).abs() < 1e-9, "{} vs {}", m.m_dev, oracle);
        let length: f64 = path.windows(2).map(|w| w[0].distance(w[1])).sum();
        prop_assert!((m.l_traj - length).abs() < 1e-9);
    }
}
