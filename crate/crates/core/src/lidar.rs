//! Analytic LiDAR raycaster over scene primitives and voxel-grid downsampling.
//!
//! The sensor is yaw-aligned with the world frame, so body-frame returns are
//! the world hit points minus the sensor origin.

use std::collections::BTreeMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Vec3;
use crate::scene::{Obstacle, Scene};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LidarError {
    #[error("invalid lidar spec: {0}")]
    Spec(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LidarSpec {
    pub min_range: f64,
    pub max_range: f64,
    /// Horizontal step in degrees; must divide 360.
    pub h_resolution: f64,
    /// Elevation of the lowest and highest ring, degrees.
    pub v_span: [f64; 2],
    pub v_rings: usize,
}

impl Default for LidarSpec {
    /// 0.12–4 m, 1° horizontal, 60 rings over [-30°, 29°]: 21,600 rays.
    fn default() -> Self {
        Self {
            min_range: 0.12,
            max_range: 4.0,
            h_resolution: 1.0,
            v_span: [-30.0, 29.0],
            v_rings: 60,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<(), LidarError> {
        if !(self.min_range > 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err(LidarError::Spec(format!(
                "need 0 < min_range < max_range, got {} and {}",
                self.min_range, self.max_range
            )));
        }
        let steps = 360.0 / self.h_resolution;
        if !(self.h_resolution > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(LidarError::Spec(format!(
                "h_resolution {} does not divide 360",
                self.h_resolution
            )));
        }
        if self.v_rings == 0 {
            return Err(LidarError::Spec("v_rings must be at least 1".into()));
        }
        if self.v_rings > 1 && !(self.v_span[1] > self.v_span[0]) {
            return Err(LidarError::Spec("v_span must be increasing".into()));
        }
        if self.v_span[0] < -90.0 || self.v_span[1] > 90.0 {
            return Err(LidarError::Spec("v_span must lie within [-90, 90]".into()));
        }
        Ok(())
    }

    pub fn horizontal_steps(&self) -> usize {
        (360.0 / self.h_resolution).round() as usize
    }

    pub fn ray_count(&self) -> usize {
        self.horizontal_steps() * self.v_rings
    }

    /// Unit ray directions, ring-major: index = ring · horizontal_steps + azimuth step.
    pub fn directions(&self) -> Vec<Vec3> {
        let nh = self.horizontal_steps();
        let mut dirs = Vec::with_capacity(self.ray_count());
        for ring in 0..self.v_rings {
            let elev = if self.v_rings == 1 {
                self.v_span[0]
            } else {
                self.v_span[0] + (self.v_span[1] - self.v_span[0]) * ring as f64 / (self.v_rings - 1) as f64
            }
            .to_radians();
            let (se, ce) = elev.sin_cos();
            for k in 0..nh {
                let az = (k as f64 * self.h_resolution).to_radians();
                let (sa, ca) = az.sin_cos();
                dirs.push(Vec3::new(ce * ca, ce * sa, se));
            }
        }
        dirs
    }
}

/// LiDAR returns in the UAV body frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest return range, or `default` when empty.
    pub fn min_range_or(&self, default: f64) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(default, f64::min)
    }

    /// Re-expresses the cloud relative to an origin displaced by `offset`.
    pub fn shifted(&self, offset: Vec3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| *p - offset).collect(),
        }
    }

    /// One `x y z` line per point.
    pub fn dump(&self) -> String {
        let mut s = String::with_capacity(self.points.len() * 24);
        for p in &self.points {
            s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
        s
    }
}

/// Range to the first obstacle surface crossing in `[min_range, max_range]`.
pub fn cast_ray(
    obstacles: &[Obstacle],
    origin: Vec3,
    dir: Vec3,
    min_range: f64,
    max_range: f64,
) -> Option<f64> {
    debug_assert!((dir.norm() - 1.0).abs() <= 1e-9, "ray direction must be unit length");
    let mut best = f64::INFINITY;
    for o in obstacles {
        if let Some((t0, t1)) = o.shape().ray_interval(origin, dir) {
            if t0 >= min_range {
                best = best.min(t0);
            } else if t1 >= min_range {
                best = best.min(t1);
            }
        }
    }
    (best <= max_range).then_some(best)
}

/// Sensor with precomputed ray directions.
#[derive(Clone, Debug)]
pub struct Lidar {
    spec: LidarSpec,
    dirs: Vec<Vec3>,
    parallel: bool,
}

impl Lidar {
    pub fn new(spec: LidarSpec) -> Result<Self, LidarError> {
        spec.validate()?;
        let dirs = spec.directions();
        Ok(Self {
            spec,
            dirs,
            parallel: false,
        })
    }

    /// Evaluate rays on the rayon pool. Output order is unchanged.
    pub fn parallel(mut self, on: bool) -> Self {
        self.parallel = on;
        self
    }

    pub fn spec(&self) -> &LidarSpec {
        &self.spec
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.dirs
    }

    /// Raw sparse scan: one point per ray that hits, in ray-index order.
    pub fn scan(&self, scene: &Scene, origin: Vec3) -> PointCloud {
        let reach = self.spec.max_range;
        // Obstacles that cannot be reached by any ray are culled up front.
        let near: Vec<Obstacle> = scene
            .obstacles()
            .iter()
            .filter(|o| o.shape().aabb().distance(origin) <= reach)
            .copied()
            .collect();
        if near.is_empty() {
            return PointCloud::default();
        }
        let (lo, hi) = (self.spec.min_range, self.spec.max_range);
        let ray = |d: &Vec3| cast_ray(&near, origin, *d, lo, hi).map(|t| *d * t);
        let points = if self.parallel {
            self.dirs.par_iter().filter_map(ray).collect()
        } else {
            self.dirs.iter().filter_map(ray).collect()
        };
        PointCloud { points }
    }
}

/// Convenience wrapper that builds the ray table on every call.
pub fn scan(scene: &Scene, uav_pos: Vec3, spec: &LidarSpec) -> Result<PointCloud, LidarError> {
    Ok(Lidar::new(spec.clone())?.scan(scene, uav_pos))
}

pub fn voxel_key(p: Vec3, voxel: f64) -> [i64; 3] {
    [
        (p.x / voxel).floor() as i64,
        (p.y / voxel).floor() as i64,
        (p.z / voxel).floor() as i64,
    ]
}

/// One centroid per occupied voxel, ordered by voxel index. When more than
/// `cap` voxels are occupied the `cap` representatives nearest the origin are
/// kept (ties broken by voxel index).
pub fn voxel_downsample(cloud: &PointCloud, voxel: f64, cap: usize) -> PointCloud {
    assert!(voxel > 0.0, "voxel size must be positive");
    struct Cell {
        sum: Vec3,
        count: usize,
        lo: Vec3,
    }
    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for p in &cloud.points {
        let cell = cells.entry(voxel_key(*p, voxel)).or_insert(Cell {
            sum: Vec3::ZERO,
            count: 0,
            lo: *p,
        });
        cell.sum += *p;
        cell.count += 1;
        cell.lo = cell.lo.component_min(*p);
    }
    let mut reps: Vec<([i64; 3], Vec3)> = cells
        .into_iter()
        .map(|(key, cell)| {
            let mut c = cell.sum / cell.count as f64;
            // Rounding can push a centroid across a cell face; pull it back.
            let ck = voxel_key(c, voxel);
            if ck[0] != key[0] {
                c.x = cell.lo.x;
            }
            if ck[1] != key[1] {
                c.y = cell.lo.y;
            }
            if ck[2] != key[2] {
                c.z = cell.lo.z;
            }
            (key, c)
        })
        .collect();
    if reps.len() > cap {
        let mut by_range: Vec<usize> = (0..reps.len()).collect();
        by_range.sort_by(|&a, &b| {
            reps[a]
                .1
                .norm()
                .total_cmp(&reps[b].1.norm())
                .then_with(|| reps[a].0.cmp(&reps[b].0))
        });
        let mut keep = vec![false; reps.len()];
        for &i in &by_range[..cap] {
            keep[i] = true;
        }
        let mut i = 0;
        reps.retain(|_| {
            let k = keep[i];
            i += 1;
            k
        });
    }
    PointCloud {
        points: reps.into_iter().map(|(_, c)| c).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_bounds, Aabb, Obstacle};

    fn scene_with(obstacles: Vec<Obstacle>) -> Scene {
        Scene::new(default_bounds()).with_obstacles(obstacles)
    }

    #[test]
    fn default_spec_emits_21600_rays() {
        let spec = LidarSpec::default();
        spec.validate().unwrap();
        assert_eq!(spec.ray_count(), 21_600);
        let dirs = spec.directions();
        assert!(dirs.iter().all(|d| (d.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn spec_validation() {
        let bad = LidarSpec {
            h_resolution: 7.0,
            ..LidarSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = LidarSpec {
            min_range: 5.0,
            ..LidarSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cast_ray_hits_cylinder() {
        let s = scene_with(vec![Obstacle::cylinder([2.0, 0.0], 0.5, 5.0).unwrap()]);
        let t = cast_ray(s.obstacles(), Vec3::new(0.0, 0.0, 2.0), Vec3::X, 0.12, 4.0).unwrap();
        assert!((t - 1.5).abs() < 1e-12);
    }

    #[test]
    fn cast_ray_empty_scene() {
        let s = scene_with(vec![]);
        assert_eq!(cast_ray(s.obstacles(), Vec3::ZERO, Vec3::X, 0.12, 4.0), None);
    }

    #[test]
    fn cast_ray_inside_obstacle_clips_below_min_range() {
        // exit surface 0.05 m away, below the 0.12 m minimum
        let s = scene_with(vec![Obstacle::cylinder([0.0, 0.0], 0.5, 5.0).unwrap()]);
        let origin = Vec3::new(0.45, 0.0, 2.0);
        assert_eq!(cast_ray(s.obstacles(), origin, Vec3::X, 0.12, 4.0), None);
    }

    #[test]
    fn cast_ray_beyond_max_range() {
        let s = scene_with(vec![Obstacle::cylinder([6.0, 0.0], 0.5, 5.0).unwrap()]);
        assert_eq!(cast_ray(s.obstacles(), Vec3::new(0.0, 0.0, 2.0), Vec3::X, 0.12, 4.0), None);
    }

    #[test]
    fn scan_empty_scene_is_empty() {
        let cloud = scan(&scene_with(vec![]), Vec3::new(0.0, 0.0, 2.0), &LidarSpec::default()).unwrap();
        assert!(cloud.is_empty());
    }

    #[test]
    fn scan_pole_due_east_has_narrow_bearing() {
        let s = scene_with(vec![Obstacle::cylinder([2.0, 0.0], 0.1, 5.0).unwrap()]);
        let cloud = scan(&s, Vec3::new(0.0, 0.0, 2.0), &LidarSpec::default()).unwrap();
        assert!(!cloud.is_empty());
        let half_width = (0.1f64 / 2.0).asin();
        for p in &cloud.points {
            assert!(p.y.atan2(p.x).abs() <= half_width + 1e-12);
        }
    }

    #[test]
    fn scan_inside_enclosure_returns_every_ray() {
        // walls 1.5 m away on every side, floor and ceiling within range
        let mut s = Scene::new(Aabb::new(Vec3::new(-5.0, -5.0, 0.0), Vec3::new(5.0, 5.0, 5.0)).unwrap());
        let walls = [
            (Vec3::new(1.6, 0.0, 2.0), Vec3::new(0.1, 2.0, 2.0)),
            (Vec3::new(-1.6, 0.0, 2.0), Vec3::new(0.1, 2.0, 2.0)),
            (Vec3::new(0.0, 1.6, 2.0), Vec3::new(2.0, 0.1, 2.0)),
            (Vec3::new(0.0, -1.6, 2.0), Vec3::new(2.0, 0.1, 2.0)),
            (Vec3::new(0.0, 0.0, 0.0), Vec3::new(2.0, 2.0, 0.1)),
            (Vec3::new(0.0, 0.0, 4.0), Vec3::new(2.0, 2.0, 0.1)),
        ];
        for (c, h) in walls {
            s.push(Obstacle::cuboid(c, h).unwrap());
        }
        let spec = LidarSpec::default();
        let cloud = scan(&s, Vec3::new(0.0, 0.0, 2.0), &spec).unwrap();
        assert_eq!(cloud.len(), 21_600);
        for p in &cloud.points {
            let r = p.norm();
            assert!(r >= spec.min_range && r <= spec.max_range);
        }
    }

    #[test]
    fn parallel_scan_is_bit_identical() {
        let s = scene_with(vec![
            Obstacle::cylinder([1.0, 1.0], 0.3, 5.0).unwrap(),
            Obstacle::cuboid(Vec3::new(-2.0, 0.5, 1.0), Vec3::new(0.5, 0.5, 1.0)).unwrap(),
        ]);
        let lidar = Lidar::new(LidarSpec::default()).unwrap();
        let a = lidar.scan(&s, Vec3::new(0.0, 0.0, 1.5));
        let b = lidar.clone().parallel(true).scan(&s, Vec3::new(0.0, 0.0, 1.5));
        assert_eq!(a, b);
    }

    #[test]
    fn downsample_single_voxel_collapses_to_centroid() {
        let mut pts = Vec::new();
        for i in 0..50 {
            let f = i as f64 / 50.0;
            pts.push(Vec3::new(0.97 + 0.05 * f, 0.97 + 0.03 * f, 0.97 + 0.01 * f));
        }
        let cloud = PointCloud::new(pts.clone());
        let ds = voxel_downsample(&cloud, 0.08, 200);
        assert_eq!(ds.len(), 1);
        let centroid = pts.iter().fold(Vec3::ZERO, |a, p| a + *p) / 50.0;
        assert!(ds.points[0].distance(centroid) < 1e-12);
    }

    #[test]
    fn downsample_empty() {
        assert!(voxel_downsample(&PointCloud::default(), 0.08, 200).is_empty());
    }

    #[test]
    fn downsample_cap_keeps_nearest() {
        // 300 points, each in its own voxel, at distinct ranges
        let pts: Vec<Vec3> = (0..300)
            .map(|i| {
                let a = i as f64 * 0.37;
                let r = 0.5 + 0.01 * ((i * 7919) % 300) as f64;
                Vec3::new(r * a.cos(), r * a.sin(), 0.3 * (i % 5) as f64)
            })
            .collect();
        let cloud = PointCloud::new(pts);
        let full = voxel_downsample(&cloud, 0.02, usize::MAX);
        assert_eq!(full.len(), 300);
        let ds = voxel_downsample(&cloud, 0.02, 200);
        assert_eq!(ds.len(), 200);
        let kept_max = ds.points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        // oracle: sort all ranges, every dropped one is at least the kept max
        let mut ranges: Vec<f64> = full.points.iter().map(|p| p.norm()).collect();
        ranges.sort_by(f64::total_cmp);
        assert!(ranges[200..].iter().all(|r| *r >= kept_max));
        // still in voxel order
        let keys: Vec<_> = ds.points.iter().map(|p| voxel_key(*p, 0.02)).collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
