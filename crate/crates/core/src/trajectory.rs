//! Time-indexed reference trajectories and tracking errors.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{point_polyline_distance, Vec3};
use crate::scene::GoalRegion;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory needs at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint times must be strictly increasing (index {0})")]
    NonIncreasingTime(usize),
    #[error("non-finite waypoint at index {0}")]
    NonFinite(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    Polyline,
    /// Natural cubic spline through the waypoints, parametrised by time.
    Spline,
}

impl FromStr for TrajectoryKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "polyline" => Ok(Self::Polyline),
            "spline" => Ok(Self::Spline),
            other => Err(format!("unknown trajectory kind `{other}`")),
        }
    }
}

impl TrajectoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Polyline => "polyline",
            Self::Spline => "spline",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTrajectory {
    times: Vec<f64>,
    points: Vec<Vec3>,
    kind: TrajectoryKind,
    /// Second derivatives at the knots (spline kind only).
    second: Vec<Vec3>,
}

impl ReferenceTrajectory {
    pub fn new(waypoints: Vec<(f64, Vec3)>, kind: TrajectoryKind) -> Result<Self, TrajectoryError> {
        if waypoints.len() < 2 {
            return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
        }
        for (i, (t, p)) in waypoints.iter().enumerate() {
            if !t.is_finite() || !p.is_finite() {
                return Err(TrajectoryError::NonFinite(i));
            }
            if i > 0 && *t <= waypoints[i - 1].0 {
                return Err(TrajectoryError::NonIncreasingTime(i));
            }
        }
        let (times, points): (Vec<f64>, Vec<Vec3>) = waypoints.into_iter().unzip();
        let second = match kind {
            TrajectoryKind::Polyline => Vec::new(),
            TrajectoryKind::Spline => natural_spline_second_derivatives(&times, &points),
        };
        Ok(Self {
            times,
            points,
            kind,
            second,
        })
    }

    pub fn polyline(waypoints: Vec<(f64, Vec3)>) -> Result<Self, TrajectoryError> {
        Self::new(waypoints, TrajectoryKind::Polyline)
    }

    /// Straight segment from `a` to `b` traversed at constant `speed`.
    pub fn straight_line(a: Vec3, b: Vec3, speed: f64) -> Result<Self, TrajectoryError> {
        let duration = (b.distance(a) / speed).max(1e-6);
        Self::polyline(vec![(0.0, a), (duration, b)])
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn waypoints(&self) -> impl Iterator<Item = (f64, Vec3)> + '_ {
        self.times.iter().copied().zip(self.points.iter().copied())
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn start(&self) -> Vec3 {
        self.points[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.points.last().unwrap()
    }

    /// Position at time `t`, clamped to the first/last waypoint outside the time span.
    pub fn sample(&self, t: f64) -> Vec3 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.points[0];
        }
        if t >= self.times[n - 1] {
            return self.points[n - 1];
        }
        // index of the segment containing t
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let a = (t1 - t) / h;
        let b = (t - t0) / h;
        let linear = self.points[i] * a + self.points[i + 1] * b;
        match self.kind {
            TrajectoryKind::Polyline => linear,
            TrajectoryKind::Spline => {
                let m0 = self.second[i];
                let m1 = self.second[i + 1];
                linear + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0)
            }
        }
    }

    /// Dense polyline approximation: waypoints for a polyline, `per_segment`
    /// samples per knot interval for a spline.
    pub fn dense_polyline(&self, per_segment: usize) -> Vec<Vec3> {
        match self.kind {
            TrajectoryKind::Polyline => self.points.clone(),
            TrajectoryKind::Spline => {
                let mut out = Vec::with_capacity((self.times.len() - 1) * per_segment + 1);
                for w in self.times.windows(2) {
                    for k in 0..per_segment {
                        out.push(self.sample(w[0] + (w[1] - w[0]) * k as f64 / per_segment as f64));
                    }
                }
                out.push(self.end());
                out
            }
        }
    }

    /// Tracking errors at time `t` for a UAV at `q_u`.
    pub fn tracking_errors(&self, q_u: Vec3, t: f64, lookahead: &Lookahead, goal: Vec3) -> TrackingErrors {
        let samples: Vec<Vec3> = (0..=lookahead.m)
            .map(|k| self.sample(t + k as f64 * lookahead.dt_ref))
            .collect();
        let e: Vec<Vec3> = samples.iter().map(|q| q_u - *q).collect();
        TrackingErrors {
            e,
            e_g: q_u - goal,
            d: point_polyline_distance(q_u, &samples),
        }
    }

    pub fn save(&self) -> String {
        let mut out = String::from("trajectory v1\n");
        let _ = writeln!(out, "kind {}", self.kind.as_str());
        for (t, p) in self.waypoints() {
            let _ = writeln!(out, "{} {} {} {}", t, p.x, p.y, p.z);
        }
        out
    }

    pub fn load(text: &str) -> Result<Self, TrajectoryError> {
        let mut header = false;
        let mut kind = None;
        let mut waypoints = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| TrajectoryError::Parse {
                line: line_no,
                message,
            };
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if !header {
                if tokens == ["trajectory", "v1"] {
                    header = true;
                    continue;
                }
                return Err(perr(format!("expected header `trajectory v1`, found `{line}`")));
            }
            if tokens[0] == "kind" {
                if tokens.len() != 2 {
                    return Err(perr("kind: expected `kind polyline|spline`".into()));
                }
                kind = Some(tokens[1].parse::<TrajectoryKind>().map_err(perr)?);
                continue;
            }
            if tokens.len() != 4 {
                return Err(perr(format!("expected `t x y z`, found {} fields", tokens.len())));
            }
            let mut v = [0.0; 4];
            for (slot, (name, tok)) in v.iter_mut().zip(["t", "x", "y", "z"].iter().zip(&tokens)) {
                *slot = tok
                    .parse()
                    .map_err(|_| perr(format!("field `{name}` is not a number: `{tok}`")))?;
            }
            waypoints.push((v[0], Vec3::new(v[1], v[2], v[3])));
        }
        if !header {
            return Err(TrajectoryError::Parse {
                line: 0,
                message: "empty file, expected header `trajectory v1`".into(),
            });
        }
        Self::new(waypoints, kind.unwrap_or(TrajectoryKind::Polyline))
    }
}

/// Natural cubic spline second derivatives, one tridiagonal solve per axis.
fn natural_spline_second_derivatives(t: &[f64], p: &[Vec3]) -> Vec<Vec3> {
    let n = t.len();
    let mut m = vec![Vec3::ZERO; n];
    if n < 3 {
        return m;
    }
    // Interior unknowns 1..n-1 (Thomas algorithm).
    let k = n - 2;
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![Vec3::ZERO; k];
    for j in 0..k {
        let i = j + 1;
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        diag[j] = 2.0 * (h0 + h1);
        upper[j] = h1;
        rhs[j] = ((p[i + 1] - p[i]) / h1 - (p[i] - p[i - 1]) / h0) * 6.0;
    }
    for j in 1..k {
        let lower = t[j + 1] - t[j];
        let w = lower / diag[j - 1];
        diag[j] -= w * upper[j - 1];
        let prev = rhs[j - 1];
        rhs[j] -= prev * w;
    }
    let mut x = vec![Vec3::ZERO; k];
    x[k - 1] = rhs[k - 1] / diag[k - 1];
    for j in (0..k - 1).rev() {
        x[j] = (rhs[j] - x[j + 1] * upper[j]) / diag[j];
    }
    m[1..n - 1].copy_from_slice(&x);
    m
}

/// Lookahead horizon of the tracking state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookahead {
    /// Number of future reference points beyond the current one.
    pub m: usize,
    /// Time between successive reference points, s.
    pub dt_ref: f64,
}

impl Default for Lookahead {
    fn default() -> Self {
        Self { m: 5, dt_ref: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingErrors {
    /// `e[k] = q_u - q(t + k·dt_ref)` for `k = 0..=m`.
    pub e: Vec<Vec3>,
    pub e_g: Vec3,
    /// Distance from the UAV to the chord polyline of the lookahead samples.
    pub d: f64,
}

impl TrackingErrors {
    pub fn current(&self) -> Vec3 {
        self.e[0]
    }

    /// Errors with no reference attached (pure goal-reaching tasks).
    pub fn goal_only(q_u: Vec3, goal: Vec3, m: usize) -> Self {
        Self {
            e: vec![Vec3::ZERO; m + 1],
            e_g: q_u - goal,
            d: 0.0,
        }
    }
}

/// `‖e0‖ ≤ eps_k`, boundary inclusive. The norm is not squared so `eps_k` is a length.
pub fn is_tracking(e0: Vec3, eps_k: f64) -> bool {
    e0.norm() <= eps_k
}

pub fn in_goal(q_u: Vec3, goal: &GoalRegion) -> bool {
    goal.contains(q_u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line() -> ReferenceTrajectory {
        ReferenceTrajectory::polyline(vec![(0.0, Vec3::ZERO), (10.0, Vec3::new(10.0, 0.0, 0.0))]).unwrap()
    }

    #[test]
    fn sample_polyline_midpoint_and_clamp() {
        let r = line();
        assert_eq!(r.sample(5.0), Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(r.sample(42.0), Vec3::new(10.0, 0.0, 0.0));
        assert_eq!(r.sample(-1.0), Vec3::ZERO);
    }

    #[test]
    fn spline_through_collinear_points_matches_polyline() {
        // Uniform speed along a line: the natural spline degenerates to linear.
        let wps: Vec<(f64, Vec3)> = (0..6).map(|i| (i as f64, Vec3::new(2.0 * i as f64, -i as f64, 0.5))).collect();
        let s = ReferenceTrajectory::new(wps.clone(), TrajectoryKind::Spline).unwrap();
        let p = ReferenceTrajectory::polyline(wps).unwrap();
        for k in 0..=500 {
            let t = k as f64 * 0.01;
            assert!(s.sample(t).distance(p.sample(t)) < 1e-9);
        }
    }

    #[test]
    fn spline_matches_closed_form_natural_spline() {
        // Three knots y = 0, 1, 0 at t = 0, 1, 2: interior second derivative is -3
        // so y(0.5) = 0.5 + (-3)(0.125 - 0.5)/6 = 0.6875.
        let wps = vec![(0.0, Vec3::ZERO), (1.0, Vec3::Y), (2.0, Vec3::ZERO)];
        let s = ReferenceTrajectory::new(wps, TrajectoryKind::Spline).unwrap();
        assert!((s.sample(0.5).y - 0.6875).abs() < 1e-12);
        assert!((s.sample(1.5).y - 0.6875).abs() < 1e-12);
    }

    #[test]
    fn construction_errors() {
        assert_eq!(
            ReferenceTrajectory::polyline(vec![(0.0, Vec3::ZERO)]).unwrap_err(),
            TrajectoryError::TooFewWaypoints(1)
        );
        assert_eq!(
            ReferenceTrajectory::polyline(vec![(0.0, Vec3::ZERO), (0.0, Vec3::X)]).unwrap_err(),
            TrajectoryError::NonIncreasingTime(1)
        );
    }

    #[test]
    fn errors_on_trajectory_are_zero() {
        let r = line();
        let te = r.tracking_errors(Vec3::new(3.0, 0.0, 0.0), 3.0, &Lookahead::default(), r.end());
        assert_eq!(te.e[0], Vec3::ZERO);
        assert_eq!(te.d, 0.0);
        assert_eq!(te.e.len(), 6);
        assert_eq!(te.e_g, Vec3::new(-7.0, 0.0, 0.0));
    }

    #[test]
    fn perpendicular_deviation() {
        let r = ReferenceTrajectory::polyline(vec![(0.0, Vec3::ZERO), (1.0, Vec3::X)]).unwrap();
        let la = Lookahead { m: 5, dt_ref: 0.2 };
        let te = r.tracking_errors(Vec3::new(0.0, 1.0, 0.0), 0.0, &la, r.end());
        assert!((te.d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lagging_uav_errors_closed_form() {
        let v_ref = 1.0;
        let r = line();
        let la = Lookahead::default();
        let t = 2.0;
        let te = r.tracking_errors(Vec3::new(2.0 - 0.3, 0.0, 0.0), t, &la, r.end());
        for (k, e) in te.e.iter().enumerate() {
            let expect = -0.3 - k as f64 * la.dt_ref * v_ref;
            assert!((e.x - expect).abs() < 1e-12 && e.y == 0.0 && e.z == 0.0);
        }
    }

    #[test]
    fn tracking_and_goal_predicates() {
        assert!(is_tracking(Vec3::ZERO, 0.5));
        assert!(is_tracking(Vec3::new(0.3, 0.4, 0.0), 0.5));
        assert!(!is_tracking(Vec3::new(0.6, 0.8, 0.0), 0.5));
        let g = GoalRegion::new(Vec3::new(1.0, 1.0, 1.0), 0.5).unwrap();
        assert!(in_goal(Vec3::new(1.0, 1.0, 1.0), &g));
        assert!(in_goal(Vec3::new(1.5, 1.0, 1.0), &g));
        assert!(!in_goal(Vec3::new(2.0, 1.0, 1.0), &g));
    }

    #[test]
    fn file_round_trip_and_errors() {
        let text = "trajectory v1\nkind spline\n0 0 0 2\n1 1 0.5 2\n# mid\n2.5 3 1 2.5\n";
        let r = ReferenceTrajectory::load(text).unwrap();
        assert_eq!(r.kind(), TrajectoryKind::Spline);
        assert_eq!(ReferenceTrajectory::load(&r.save()).unwrap(), r);
        let e = ReferenceTrajectory::load("trajectory v1\n0 0 0\n").unwrap_err();
        assert!(matches!(e, TrajectoryError::Parse { line: 2, .. }));
        assert!(ReferenceTrajectory::load("trajectory v1\nkind bezier\n").is_err());
    }

    fn arb_waypoints() -> impl Strategy<Value = Vec<(f64, Vec3)>> {
        proptest::collection::vec((0.1f64..2.0, -5.0f64..5.0, -5.0f64..5.0, 0.0f64..4.0), 2..8).prop_map(|v| {
            let mut t = 0.0;
            v.into_iter()
                .map(|(dt, x, y, z)| {
                    t += dt;
                    (t, Vec3::new(x, y, z))
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn spline_interpolates_waypoints(wps in arb_waypoints()) {
            let s = ReferenceTrajectory::new(wps.clone(), TrajectoryKind::Spline).unwrap();
            for (t, p) in &wps {
                prop_assert!(s.sample(*t).distance(*p) < 1e-9);
            }
        }

        #[test]
        fn sample_is_continuous(wps in arb_waypoints(), u in 0.0f64..1.0, spline in any::<bool>()) {
            let kind = if spline { TrajectoryKind::Spline } else { TrajectoryKind::Polyline };
            let r = ReferenceTrajectory::new(wps, kind).unwrap();
            let t = r.start_time() + u * r.duration();
            let h = 1e-6;
            // slopes are bounded well below 1e4 m/s for these inputs
            prop_assert!(r.sample(t).distance(r.sample(t + h)) < 1e4 * h);
        }

        #[test]
        fn deviation_is_translation_invariant(
            wps in arb_waypoints(),
            q in (-5.0f64..5.0, -5.0f64..5.0, 0.0f64..4.0),
            shift in (-10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
            u in 0.0f64..1.0,
        ) {
            let r = ReferenceTrajectory::polyline(wps.clone()).unwrap();
            let d = Vec3::new(shift.0, shift.1, shift.2);
            let moved = ReferenceTrajectory::polyline(wps.iter().map(|(t, p)| (*t, *p + d)).collect()).unwrap();
            let qu = Vec3::new(q.0, q.1, q.2);
            let t = r.start_time() + u * r.duration();
            let la = Lookahead::default();
            let a = r.tracking_errors(qu, t, &la, r.end());
            let b = moved.tracking_errors(qu + d, t, &la, moved.end());
            prop_assert!((a.d - b.d).abs() < 1e-9);
            // on the sampled sub-polyline the deviation vanishes
            let on = r.sample(t + la.dt_ref);
            prop_assert!(r.tracking_errors(on, t, &la, r.end()).d < 1e-9);
        }
    }
}
