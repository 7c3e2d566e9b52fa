//! Geometric world model: obstacle primitives, dynamic obstacle motion and the
//! line-oriented scene file format.
//!
//! Cylinders are vertical and grounded: they occupy `z ∈ [0, height]` around
//! their `(cx, cy)` axis. Cuboids are axis-aligned boxes given by center and
//! half extents.
//!
//! ```text
//! scene v1
//! bounds -10 10 -10 10 0 6
//! cylinder 2 0 0.1 5
//! cuboid 4 1 2.5 0.75 0.5 2.5 -0.1 0 0
//! goal 8 0 2 0.3
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::Vec3;

/// Clearance below which the UAV center counts as collided.
pub const COLLISION_DISTANCE: f64 = 0.35;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid {field}: {value} ({reason})")]
    Invalid {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn invalid(field: &'static str, value: f64, reason: &'static str) -> SceneError {
    SceneError::Invalid { field, value, reason }
}

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, SceneError> {
        for (field, lo, hi) in [
            ("bounds.x", min.x, max.x),
            ("bounds.y", min.y, max.y),
            ("bounds.z", min.z, max.z),
        ] {
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(invalid(field, hi - lo, "must be finite"));
            }
            if hi <= lo {
                return Err(invalid(field, hi - lo, "extent must be positive"));
            }
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn half_extents(&self) -> Vec3 {
        (self.max - self.min) * 0.5
    }

    /// Euclidean distance from `p` to the box (zero inside).
    pub fn distance(&self, p: Vec3) -> f64 {
        let d = (self.min - p).component_max(p - self.max).component_max(Vec3::ZERO);
        d.norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    /// Vertical cylinder standing on `z = 0`.
    Cylinder {
        center_xy: [f64; 2],
        radius: f64,
        height: f64,
    },
    Cuboid { center: Vec3, half_extents: Vec3 },
}

impl Shape {
    /// Exact signed Euclidean distance from `p` to the shape surface.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        match *self {
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            } => {
                let rho = (p.x - center_xy[0]).hypot(p.y - center_xy[1]);
                let half = 0.5 * height;
                let dr = rho - radius;
                let dz = (p.z - half).abs() - half;
                let outside = dr.max(0.0).hypot(dz.max(0.0));
                outside + dr.max(dz).min(0.0)
            }
            Shape::Cuboid {
                center,
                half_extents,
            } => {
                let q = (p - center).abs() - half_extents;
                q.component_max(Vec3::ZERO).norm() + q.max_elem().min(0.0)
            }
        }
    }

    /// Parameter interval `[t_in, t_out]` over which the ray `origin + t·dir`
    /// lies inside the shape, or `None` if the line misses it.
    pub fn ray_interval(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        match *self {
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            } => {
                let ox = origin.x - center_xy[0];
                let oy = origin.y - center_xy[1];
                let a = dir.x * dir.x + dir.y * dir.y;
                let c = ox * ox + oy * oy - radius * radius;
                let (mut t0, mut t1) = if a < 1e-300 {
                    if c > 0.0 {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    let b = ox * dir.x + oy * dir.y;
                    let disc = b * b - a * c;
                    if disc < 0.0 {
                        return None;
                    }
                    let s = disc.sqrt();
                    // Numerically stable pair of roots.
                    let q = if b >= 0.0 { -(b + s) } else { -b + s };
                    let (r0, r1) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
                    (r0.min(r1), r0.max(r1))
                };
                let (z0, z1) = slab(origin.z, dir.z, 0.0, height)?;
                t0 = t0.max(z0);
                t1 = t1.min(z1);
                (t0 <= t1).then_some((t0, t1))
            }
            Shape::Cuboid {
                center,
                half_extents,
            } => {
                let lo = center - half_extents;
                let hi = center + half_extents;
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for axis in 0..3 {
                    let (a, b) = slab(origin[axis], dir[axis], lo[axis], hi[axis])?;
                    t0 = t0.max(a);
                    t1 = t1.min(b);
                }
                (t0 <= t1).then_some((t0, t1))
            }
        }
    }

    pub fn aabb(&self) -> Aabb {
        match *self {
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            } => Aabb {
                min: Vec3::new(center_xy[0] - radius, center_xy[1] - radius, 0.0),
                max: Vec3::new(center_xy[0] + radius, center_xy[1] + radius, height),
            },
            Shape::Cuboid {
                center,
                half_extents,
            } => Aabb {
                min: center - half_extents,
                max: center + half_extents,
            },
        }
    }

    fn translated(&self, d: Vec3) -> Shape {
        match *self {
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            } => Shape::Cylinder {
                center_xy: [center_xy[0] + d.x, center_xy[1] + d.y],
                radius,
                height,
            },
            Shape::Cuboid {
                center,
                half_extents,
            } => Shape::Cuboid {
                center: center + d,
                half_extents,
            },
        }
    }
}

fn slab(o: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64)> {
    if d == 0.0 {
        return (lo..=hi).contains(&o).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let inv = 1.0 / d;
    let a = (lo - o) * inv;
    let b = (hi - o) * inv;
    Some((a.min(b), a.max(b)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstacle {
    shape: Shape,
    velocity: Vec3,
}

impl Obstacle {
    pub fn cylinder(center_xy: [f64; 2], radius: f64, height: f64) -> Result<Self, SceneError> {
        Self::new(
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            },
            Vec3::ZERO,
        )
    }

    pub fn cuboid(center: Vec3, half_extents: Vec3) -> Result<Self, SceneError> {
        Self::new(
            Shape::Cuboid {
                center,
                half_extents,
            },
            Vec3::ZERO,
        )
    }

    pub fn new(shape: Shape, velocity: Vec3) -> Result<Self, SceneError> {
        match shape {
            Shape::Cylinder {
                center_xy,
                radius,
                height,
            } => {
                if !(center_xy[0].is_finite() && center_xy[1].is_finite()) {
                    return Err(invalid("center", f64::NAN, "must be finite"));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(invalid("radius", radius, "must be positive"));
                }
                if !(height > 0.0 && height.is_finite()) {
                    return Err(invalid("height", height, "must be positive"));
                }
                if velocity.z != 0.0 {
                    return Err(invalid("vz", velocity.z, "cylinders are grounded"));
                }
            }
            Shape::Cuboid {
                center,
                half_extents,
            } => {
                if !center.is_finite() {
                    return Err(invalid("center", f64::NAN, "must be finite"));
                }
                for (field, h) in [
                    ("hx", half_extents.x),
                    ("hy", half_extents.y),
                    ("hz", half_extents.z),
                ] {
                    if !(h > 0.0 && h.is_finite()) {
                        return Err(invalid(field, h, "must be positive"));
                    }
                }
            }
        }
        if !velocity.is_finite() {
            return Err(invalid("velocity", f64::NAN, "must be finite"));
        }
        Ok(Self { shape, velocity })
    }

    pub fn with_velocity(self, velocity: Vec3) -> Result<Self, SceneError> {
        Self::new(self.shape, velocity)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn velocity(&self) -> Vec3 {
        self.velocity
    }

    pub fn is_static(&self) -> bool {
        self.velocity == Vec3::ZERO
    }

    /// Reference position: cylinder base center or cuboid center.
    pub fn position(&self) -> Vec3 {
        match self.shape {
            Shape::Cylinder { center_xy, .. } => Vec3::new(center_xy[0], center_xy[1], 0.0),
            Shape::Cuboid { center, .. } => center,
        }
    }

    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.shape.signed_distance(p)
    }
}

/// Spherical goal region around `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalRegion {
    pub center: Vec3,
    pub radius: f64,
}

impl GoalRegion {
    pub fn new(center: Vec3, radius: f64) -> Result<Self, SceneError> {
        if !center.is_finite() {
            return Err(invalid("goal", f64::NAN, "must be finite"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("rg", radius, "must be positive"));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.distance(self.center) <= self.radius
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    obstacles: Vec<Obstacle>,
    bounds: Aabb,
    time: f64,
    goal: Option<GoalRegion>,
}

impl Scene {
    pub fn new(bounds: Aabb) -> Self {
        Self {
            obstacles: Vec::new(),
            bounds,
            time: 0.0,
            goal: None,
        }
    }

    pub fn with_obstacles(mut self, obstacles: impl IntoIterator<Item = Obstacle>) -> Self {
        self.obstacles.extend(obstacles);
        self
    }

    pub fn with_goal(mut self, goal: GoalRegion) -> Self {
        self.goal = Some(goal);
        self
    }

    pub fn push(&mut self, o: Obstacle) {
        self.obstacles.push(o);
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn goal(&self) -> Option<&GoalRegion> {
        self.goal.as_ref()
    }

    pub fn is_static(&self) -> bool {
        self.obstacles.iter().all(Obstacle::is_static)
    }

    /// Moves every obstacle by `velocity·dt` and advances the scene clock.
    pub fn advance(&self, dt: f64) -> Scene {
        debug_assert!(dt >= 0.0, "advance with negative dt");
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| {
                if o.is_static() {
                    *o
                } else {
                    Obstacle {
                        shape: o.shape.translated(o.velocity * dt),
                        velocity: o.velocity,
                    }
                }
            })
            .collect();
        Scene {
            obstacles,
            bounds: self.bounds,
            time: self.time + dt,
            goal: self.goal,
        }
    }

    /// Minimum signed distance from `p` to any obstacle surface; negative
    /// inside an obstacle, `f64::MAX` for an empty scene.
    pub fn signed_clearance(&self, p: Vec3) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.signed_distance(p))
            .fold(f64::MAX, f64::min)
    }

    pub fn is_collision(&self, p: Vec3) -> bool {
        self.signed_clearance(p) < COLLISION_DISTANCE
    }

    pub fn save(&self) -> String {
        let mut out = String::from("scene v1\n");
        let b = &self.bounds;
        let _ = writeln!(
            out,
            "bounds {} {} {} {} {} {}",
            b.min.x, b.max.x, b.min.y, b.max.y, b.min.z, b.max.z
        );
        for o in &self.obstacles {
            match o.shape {
                Shape::Cylinder {
                    center_xy,
                    radius,
                    height,
                } => {
                    let _ = write!(out, "cylinder {} {} {} {}", center_xy[0], center_xy[1], radius, height);
                }
                Shape::Cuboid {
                    center,
                    half_extents: h,
                } => {
                    let _ = write!(
                        out,
                        "cuboid {} {} {} {} {} {}",
                        center.x, center.y, center.z, h.x, h.y, h.z
                    );
                }
            }
            if !o.is_static() {
                let v = o.velocity;
                let _ = write!(out, " {} {} {}", v.x, v.y, v.z);
            }
            out.push('\n');
        }
        if let Some(g) = &self.goal {
            let _ = writeln!(out, "goal {} {} {} {}", g.center.x, g.center.y, g.center.z, g.radius);
        }
        out
    }

    /// Parses a `scene v1` file. Missing `bounds` defaults to
    /// `[-20, 20] × [-20, 20] × [0, 10]`.
    pub fn load(text: &str) -> Result<Scene, SceneError> {
        let mut header_seen = false;
        let mut bounds = None;
        let mut goal = None;
        let mut obstacles = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| SceneError::Parse {
                line: line_no,
                message,
            };
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().unwrap_or_default();
            let args: Vec<&str> = tokens.collect();
            if !header_seen {
                if keyword == "scene" && args == ["v1"] {
                    header_seen = true;
                    continue;
                }
                return Err(perr(format!("expected header `scene v1`, found `{line}`")));
            }
            let nums = |names: &[&str]| -> Result<Vec<f64>, SceneError> {
                names
                    .iter()
                    .zip(args.iter())
                    .map(|(name, tok)| {
                        tok.parse::<f64>()
                            .map_err(|_| perr(format!("{keyword}: field `{name}` is not a number: `{tok}`")))
                    })
                    .collect()
            };
            let arity = |allowed: &[usize]| -> Result<(), SceneError> {
                if allowed.contains(&args.len()) {
                    Ok(())
                } else {
                    Err(perr(format!(
                        "{keyword}: expected {} fields, found {}",
                        allowed.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" or "),
                        args.len()
                    )))
                }
            };
            let at_line = |e: SceneError| match e {
                SceneError::Invalid { field, value, reason } => perr(format!(
                    "{keyword}: invalid {field} = {value} ({reason})"
                )),
                other => other,
            };
            match keyword {
                "cylinder" => {
                    arity(&[4, 7])?;
                    let v = nums(&["cx", "cy", "radius", "height", "vx", "vy", "vz"])?;
                    let vel = if v.len() == 7 { Vec3::new(v[4], v[5], v[6]) } else { Vec3::ZERO };
                    let shape = Shape::Cylinder {
                        center_xy: [v[0], v[1]],
                        radius: v[2],
                        height: v[3],
                    };
                    obstacles.push(Obstacle::new(shape, vel).map_err(at_line)?);
                }
                "cuboid" => {
                    arity(&[6, 9])?;
                    let v = nums(&["cx", "cy", "cz", "hx", "hy", "hz", "vx", "vy", "vz"])?;
                    let vel = if v.len() == 9 { Vec3::new(v[6], v[7], v[8]) } else { Vec3::ZERO };
                    let shape = Shape::Cuboid {
                        center: Vec3::new(v[0], v[1], v[2]),
                        half_extents: Vec3::new(v[3], v[4], v[5]),
                    };
                    obstacles.push(Obstacle::new(shape, vel).map_err(at_line)?);
                }
                "bounds" => {
                    arity(&[6])?;
                    if bounds.is_some() {
                        return Err(perr("duplicate bounds record".into()));
                    }
                    let v = nums(&["xmin", "xmax", "ymin", "ymax", "zmin", "zmax"])?;
                    bounds = Some(
                        Aabb::new(Vec3::new(v[0], v[2], v[4]), Vec3::new(v[1], v[3], v[5])).map_err(at_line)?,
                    );
                }
                "goal" => {
                    arity(&[4])?;
                    if goal.is_some() {
                        return Err(perr("duplicate goal record".into()));
                    }
                    let v = nums(&["gx", "gy", "gz", "rg"])?;
                    goal = Some(GoalRegion::new(Vec3::new(v[0], v[1], v[2]), v[3]).map_err(at_line)?);
                }
                other => return Err(perr(format!("unknown record `{other}`"))),
            }
        }
        if !header_seen {
            return Err(SceneError::Parse {
                line: 0,
                message: "empty file, expected header `scene v1`".into(),
            });
        }
        let bounds = match bounds {
            Some(b) => b,
            None => default_bounds(),
        };
        Ok(Scene {
            obstacles,
            bounds,
            time: 0.0,
            goal,
        })
    }
}

pub fn default_bounds() -> Aabb {
    Aabb {
        min: Vec3::new(-20.0, -20.0, 0.0),
        max: Vec3::new(20.0, 20.0, 10.0),
    }
}
