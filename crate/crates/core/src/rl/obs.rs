//! Fixed-length observation vectors for the tracking, avoidance and
//! single-agent policies.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::geom::Vec3;
use crate::lidar::PointCloud;
use crate::policy::Sensors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObsMode {
    Tracking,
    Avoidance,
    SingleAgent,
}

impl ObsMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ObsMode::Tracking => "trt",
            ObsMode::Avoidance => "cva",
            ObsMode::SingleAgent => "single",
        }
    }
}

impl fmt::Display for ObsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObsMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trt" => Ok(ObsMode::Tracking),
            "cva" => Ok(ObsMode::Avoidance),
            "single" => Ok(ObsMode::SingleAgent),
            other => Err(format!("unknown observation mode `{other}` (expected trt, cva or single)")),
        }
    }
}

/// How the point cloud enters the observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CloudEncoding {
    /// Flattened `x y z` triples, zero-padded to the cloud cap.
    Points,
    /// Per horizontal sector, proximity `1 - r/max_range` of the nearest
    /// return within the threat radius; 0 when the sector is empty.
    Sectors(usize),
}

impl fmt::Display for CloudEncoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CloudEncoding::Points => f.write_str("points"),
            CloudEncoding::Sectors(n) => write!(f, "sectors{n}"),
        }
    }
}

impl FromStr for CloudEncoding {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "points" {
            return Ok(CloudEncoding::Points);
        }
        if let Some(n) = s.strip_prefix("sectors") {
            if let Ok(n) = n.parse::<usize>() {
                if n > 0 {
                    return Ok(CloudEncoding::Sectors(n));
                }
            }
        }
        Err(format!("unknown cloud encoding `{s}` (expected points or sectorsN)"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObsConfig {
    pub cloud: CloudEncoding,
    /// Points slots when `cloud` is `Points`.
    pub cloud_cap: usize,
    /// Number of lookahead errors beyond the current one.
    pub lookahead_m: usize,
    /// Append the velocity to the tracking observation.
    pub trt_velocity: bool,
    /// Goal offsets are clipped to this norm before scaling.
    pub goal_clip: f64,
    /// Lengths are divided by this.
    pub length_scale: f64,
    /// Velocities are divided by this.
    pub speed_scale: f64,
    /// Sensor reach, for the sector encoding.
    pub max_range: f64,
    /// Horizontal radius of returns considered by the sector encoding.
    pub r_threat: f64,
    /// Avoidance only: express cloud, goal, velocity and action in a frame
    /// yawed so the goal lies on +x. A blocked goal then looks the same
    /// whatever its world bearing.
    pub goal_frame: bool,
}

impl Default for ObsConfig {
    fn default() -> Self {
        Self {
            cloud: CloudEncoding::Points,
            cloud_cap: 200,
            lookahead_m: 5,
            trt_velocity: true,
            goal_clip: 3.0,
            length_scale: 2.0,
            speed_scale: 1.5,
            max_range: 4.0,
            r_threat: 4.0,
            goal_frame: false,
        }
    }
}

impl ObsConfig {
    pub fn cloud_dim(&self) -> usize {
        match self.cloud {
            CloudEncoding::Points => 3 * self.cloud_cap,
            CloudEncoding::Sectors(n) => n,
        }
    }

    fn errors_dim(&self) -> usize {
        3 * (self.lookahead_m + 1)
    }

    pub fn dim(&self, mode: ObsMode) -> usize {
        let v = if self.trt_velocity { 3 } else { 0 };
        match mode {
            ObsMode::Tracking => self.errors_dim() + v,
            ObsMode::Avoidance => self.cloud_dim() + 6,
            ObsMode::SingleAgent => self.cloud_dim() + self.errors_dim() + v,
        }
    }

    /// Stable text identifying the layout; part of checkpoint hashes. Only
    /// fields that reach the observation of `mode` are included.
    pub fn layout_tag(&self, mode: ObsMode) -> String {
        let errors = format!("m={} trt_v={} ls={}", self.lookahead_m, self.trt_velocity, self.length_scale);
        let cloud = format!(
            "cloud={} cap={} range={} threat={}",
            self.cloud, self.cloud_cap, self.max_range, self.r_threat
        );
        let body = match mode {
            ObsMode::Tracking => errors,
            ObsMode::Avoidance => format!(
                "{cloud} clip={} ls={} frame={}",
                self.goal_clip,
                self.length_scale,
                if self.goal_frame { "goal" } else { "world" }
            ),
            ObsMode::SingleAgent => format!("{cloud} {errors}"),
        };
        format!("mode={mode} {body} vs={} dim={}", self.speed_scale, self.dim(mode))
    }

    /// Yaw of the observation frame: the goal bearing when `goal_frame`
    /// applies to `mode`, else 0.
    pub fn frame_yaw(&self, mode: ObsMode, s: &Sensors) -> f64 {
        let g = s.errors.e_g;
        if mode == ObsMode::Avoidance && self.goal_frame && g.horizontal_norm() > 1e-9 {
            g.y.atan2(g.x)
        } else {
            0.0
        }
    }

    /// Maps an action from the observation frame to the world.
    pub fn to_world(&self, mode: ObsMode, s: &Sensors, a: Vec3) -> Vec3 {
        yaw_rotate(a, self.frame_yaw(mode, s))
    }

    /// Maps a world action into the observation frame.
    pub fn to_frame(&self, mode: ObsMode, s: &Sensors, a: Vec3) -> Vec3 {
        yaw_rotate(a, -self.frame_yaw(mode, s))
    }

    pub fn encode(&self, mode: ObsMode, s: &Sensors) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim(mode));
        self.encode_into(mode, s, &mut out);
        out
    }

    pub fn encode_into(&self, mode: ObsMode, s: &Sensors, out: &mut Vec<f64>) {
        out.clear();
        match mode {
            ObsMode::Tracking => {
                self.push_errors(s, out);
                if self.trt_velocity {
                    self.push_speed(s.velocity, out);
                }
            }
            ObsMode::Avoidance => {
                let yaw = self.frame_yaw(mode, s);
                self.push_cloud(&s.cloud, -yaw, out);
                let g = s.errors.e_g.clamp_norm(self.goal_clip);
                self.push_length(yaw_rotate(g, -yaw), out);
                self.push_speed(yaw_rotate(s.velocity, -yaw), out);
            }
            ObsMode::SingleAgent => {
                self.push_cloud(&s.cloud, 0.0, out);
                self.push_errors(s, out);
                if self.trt_velocity {
                    self.push_speed(s.velocity, out);
                }
            }
        }
        debug_assert_eq!(out.len(), self.dim(mode));
    }

    fn push_length(&self, v: Vec3, out: &mut Vec<f64>) {
        out.extend((v / self.length_scale).to_array());
    }

    fn push_speed(&self, v: Vec3, out: &mut Vec<f64>) {
        out.extend((v / self.speed_scale).to_array());
    }

    fn push_errors(&self, s: &Sensors, out: &mut Vec<f64>) {
        for k in 0..=self.lookahead_m {
            // shorter error lists repeat their last entry
            let e = s.errors.e.get(k).or(s.errors.e.last()).copied().unwrap_or(Vec3::ZERO);
            self.push_length(e, out);
        }
    }

    fn push_cloud(&self, cloud: &PointCloud, yaw: f64, out: &mut Vec<f64>) {
        match self.cloud {
            CloudEncoding::Points => {
                let start = out.len();
                for p in cloud.points.iter().take(self.cloud_cap) {
                    out.extend((yaw_rotate(*p, yaw) / self.max_range).to_array());
                }
                out.resize(start + 3 * self.cloud_cap, 0.0);
            }
            CloudEncoding::Sectors(n) => {
                let start = out.len();
                out.resize(start + n, 0.0);
                let width = 2.0 * PI / n as f64;
                for p in &cloud.points {
                    let rho = p.horizontal_norm();
                    if rho <= 0.0 || rho > self.r_threat {
                        continue;
                    }
                    let bearing = (p.y.atan2(p.x) + yaw + PI).rem_euclid(2.0 * PI);
                    let k = ((bearing / width) as usize).min(n - 1);
                    let prox = (1.0 - p.norm() / self.max_range).max(0.0);
                    let slot = &mut out[start + k];
                    *slot = slot.max(prox);
                }
            }
        }
    }
}

/// Rotates `v` by `yaw` about +z.
fn yaw_rotate(v: Vec3, yaw: f64) -> Vec3 {
    if yaw == 0.0 {
        return v;
    }
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::TrackingErrors;

    fn sensors(e: Vec<Vec3>, e_g: Vec3, v: Vec3, cloud: Vec<Vec3>) -> Sensors {
        Sensors {
            velocity: v,
            errors: TrackingErrors { e, e_g, d: 0.0 },
            cloud: PointCloud::new(cloud),
        }
    }

    #[test]
    fn on_trajectory_tracking_obs_is_zero() {
        let cfg = ObsConfig {
            trt_velocity: false,
            ..ObsConfig::default()
        };
        let s = sensors(vec![Vec3::ZERO; 6], Vec3::new(3.0, 0.0, 0.0), Vec3::ZERO, vec![]);
        let o = cfg.encode(ObsMode::Tracking, &s);
        assert_eq!(o.len(), 18);
        assert!(o.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_cloud_pads_with_zeros() {
        let cfg = ObsConfig::default();
        let s = sensors(vec![Vec3::ZERO; 6], Vec3::new(-1.0, 2.0, 0.5), Vec3::new(0.75, 0.0, 0.0), vec![]);
        let o = cfg.encode(ObsMode::Avoidance, &s);
        assert_eq!(o.len(), 606);
        assert!(o[..600].iter().all(|v| *v == 0.0));
        assert_eq!(&o[600..603], &[-0.5, 1.0, 0.25]);
        assert_eq!(&o[603..606], &[0.5, 0.0, 0.0]);
    }

    #[test]
    fn full_cloud_has_no_padding() {
        let cfg = ObsConfig::default();
        let pts: Vec<Vec3> = (0..200).map(|i| Vec3::new(1.0 + i as f64 * 0.01, 0.5, 0.25)).collect();
        let s = sensors(vec![Vec3::ZERO; 6], Vec3::ZERO, Vec3::ZERO, pts);
        let o = cfg.encode(ObsMode::Avoidance, &s);
        assert!(o[..600].chunks(3).all(|c| c[1] == 0.125));
    }

    #[test]
    fn sectors_take_nearest_return() {
        let cfg = ObsConfig {
            cloud: CloudEncoding::Sectors(4),
            ..ObsConfig::default()
        };
        // bearing 45° sits in the sector covering [0°, 90°)
        let s = sensors(
            vec![Vec3::ZERO; 6],
            Vec3::ZERO,
            Vec3::ZERO,
            vec![Vec3::new(1.0, 1.0, 0.0), Vec3::new(2.0, 2.0, 0.0), Vec3::new(9.0, 0.0, 0.0)],
        );
        let o = cfg.encode(ObsMode::Avoidance, &s);
        assert_eq!(o.len(), 10);
        assert!((o[2] - (1.0 - 2f64.sqrt() / 4.0)).abs() < 1e-12);
        assert_eq!(o[0], 0.0);
        assert_eq!(o[1], 0.0);
        assert_eq!(o[3], 0.0);
    }

    #[test]
    fn goal_offset_is_clipped() {
        let cfg = ObsConfig::default();
        let s = sensors(vec![Vec3::ZERO; 6], Vec3::new(30.0, 0.0, 0.0), Vec3::ZERO, vec![]);
        let o = cfg.encode(ObsMode::Avoidance, &s);
        assert!((o[600] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn tracking_tag_ignores_cloud_settings() {
        let a = ObsConfig::default();
        let b = ObsConfig {
            cloud: CloudEncoding::Sectors(8),
            ..a.clone()
        };
        assert_eq!(a.layout_tag(ObsMode::Tracking), b.layout_tag(ObsMode::Tracking));
        assert_ne!(a.layout_tag(ObsMode::Avoidance), b.layout_tag(ObsMode::Avoidance));
    }

    #[test]
    fn goal_frame_puts_goal_on_x() {
        let cfg = ObsConfig {
            cloud: CloudEncoding::Sectors(4),
            goal_frame: true,
            ..ObsConfig::default()
        };
        // goal due north, a return just east of it
        let s = sensors(
            vec![Vec3::ZERO; 6],
            Vec3::new(0.0, 2.0, 0.0),
            Vec3::new(0.0, 1.5, 0.0),
            vec![Vec3::new(0.1, 1.0, 0.0)],
        );
        let o = cfg.encode(ObsMode::Avoidance, &s);
        assert!((o[4] - 1.0).abs() < 1e-12 && o[5].abs() < 1e-12);
        assert!((o[7] - 1.0).abs() < 1e-12 && o[8].abs() < 1e-12);
        // the return now sits just right of +x, in the sector below 0°
        assert!(o[1] > 0.0 && o[2] == 0.0);
        let a = Vec3::new(0.3, -0.1, 0.05);
        let back = cfg.to_frame(ObsMode::Avoidance, &s, cfg.to_world(ObsMode::Avoidance, &s, a));
        assert!((back - a).norm() < 1e-12);
        assert!((cfg.to_world(ObsMode::Avoidance, &s, Vec3::X) - Vec3::Y).norm() < 1e-12);
        assert_eq!(cfg.frame_yaw(ObsMode::Tracking, &s), 0.0);
    }

    #[test]
    fn parse_round_trip() {
        for c in [CloudEncoding::Points, CloudEncoding::Sectors(16)] {
            assert_eq!(c.to_string().parse::<CloudEncoding>().unwrap(), c);
        }
        assert!("sectors0".parse::<CloudEncoding>().is_err());
        for m in [ObsMode::Tracking, ObsMode::Avoidance, ObsMode::SingleAgent] {
            assert_eq!(m.as_str().parse::<ObsMode>().unwrap(), m);
        }
    }
}
