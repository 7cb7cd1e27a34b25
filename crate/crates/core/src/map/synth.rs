//! Synthetic test track: a stadium-shaped loop with one vertical clothoid hill,
//! lane boundaries and roadside landmarks.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Landmark, LaneRole, Map, Polyline};

pub const CENTER_ID: u32 = 1;
pub const LEFT_ID: u32 = 2;
pub const RIGHT_ID: u32 = 3;

/// A vertical profile made of pieces with linearly varying curvature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothoidProfile {
    pieces: Vec<Piece>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Piece {
    start: f64,
    length: f64,
    z0: f64,
    slope0: f64,
    c_start: f64,
    rate: f64,
}

/// Height, slope, curvature and curvature rate at one arc length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Elevation {
    pub z: f64,
    pub slope: f64,
    pub c0: f64,
    pub c1: f64,
}

impl ClothoidProfile {
    /// Builds a profile from `(length, curvature at end)` pieces starting at
    /// `start` with zero height, slope and curvature.
    pub fn new(start: f64, pieces: &[(f64, f64)]) -> Self {
        let mut out = Vec::with_capacity(pieces.len());
        let (mut s, mut z, mut slope, mut c) = (start, 0.0, 0.0, 0.0);
        for &(length, c_end) in pieces {
            let rate = (c_end - c) / length;
            out.push(Piece {
                start: s,
                length,
                z0: z,
                slope0: slope,
                c_start: c,
                rate,
            });
            z += slope * length + c * length * length / 2.0 + rate * length.powi(3) / 6.0;
            slope += c * length + rate * length * length / 2.0;
            c = c_end;
            s += length;
        }
        Self { pieces: out }
    }

    pub fn end(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.start + p.length)
    }

    pub fn at(&self, s: f64) -> Elevation {
        let Some(p) = self.pieces.iter().find(|p| s >= p.start && s < p.start + p.length) else {
            return Elevation::default();
        };
        let t = s - p.start;
        Elevation {
            z: p.z0 + p.slope0 * t + p.c_start * t * t / 2.0 + p.rate * t.powi(3) / 6.0,
            slope: p.slope0 + p.c_start * t + p.rate * t * t / 2.0,
            c0: p.c_start + p.rate * t,
            c1: p.rate,
        }
    }
}

/// Symmetric hill parameters: peak vertical curvature, length of each
/// curvature ramp and length of each constant-grade section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hill {
    pub start: f64,
    pub curvature: f64,
    pub ramp: f64,
    pub grade_length: f64,
}

impl Default for Hill {
    fn default() -> Self {
        Self {
            start: 150.0,
            curvature: 0.02,
            ramp: 5.0,
            grade_length: 60.0,
        }
    }
}

impl Hill {
    pub fn profile(&self) -> ClothoidProfile {
        let (c, r, g) = (self.curvature, self.ramp, self.grade_length);
        ClothoidProfile::new(
            self.start,
            &[
                (r, c),
                (r, 0.0),
                (g, 0.0),
                (r, -c),
                (r, -c),
                (r, 0.0),
                (g, 0.0),
                (r, c),
                (r, 0.0),
            ],
        )
    }
}

/// Stadium loop: a straight along +x from the origin, a left semicircle,
/// the return straight and a second semicircle, driven counter-clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoadLoop {
    pub straight: f64,
    pub radius: f64,
    pub lane_half_width: f64,
    pub center_spacing: f64,
    pub boundary_spacing: f64,
    pub landmark_spacing: f64,
    pub landmark_offset: f64,
    pub hill: Option<Hill>,
}

impl Default for RoadLoop {
    fn default() -> Self {
        Self {
            straight: 500.0,
            radius: 500.0 / PI,
            lane_half_width: 1.75,
            center_spacing: 1.0,
            boundary_spacing: 5.0,
            landmark_spacing: 30.0,
            landmark_offset: 5.0,
            hill: Some(Hill::default()),
        }
    }
}

impl RoadLoop {
    pub fn length(&self) -> f64 {
        2.0 * self.straight + 2.0 * PI * self.radius
    }

    fn arc(&self) -> f64 {
        PI * self.radius
    }

    /// Horizontal center-line position and heading at arc length `s`.
    pub fn centerline(&self, s: f64) -> (Vector2<f64>, f64) {
        let s = s.rem_euclid(self.length());
        let (l, r, a) = (self.straight, self.radius, self.arc());
        if s < l {
            (Vector2::new(s, 0.0), 0.0)
        } else if s < l + a {
            let th = (s - l) / r;
            (Vector2::new(l + r * th.sin(), r - r * th.cos()), th)
        } else if s < 2.0 * l + a {
            (Vector2::new(l - (s - l - a), 2.0 * r), PI)
        } else {
            let th = (s - 2.0 * l - a) / r;
            (Vector2::new(-r * th.sin(), r + r * th.cos()), PI + th)
        }
    }

    pub fn elevation(&self, s: f64) -> Elevation {
        let s = s.rem_euclid(self.length());
        self.hill.map(|h| h.profile().at(s)).unwrap_or_default()
    }

    /// A point `lateral` meters left of the center line, `height` above the road.
    pub fn point(&self, s: f64, lateral: f64, height: f64) -> Vector3<f64> {
        let (p, h) = self.centerline(s);
        let left = Vector2::new(-h.sin(), h.cos());
        let q = p + left * lateral;
        Vector3::new(q.x, q.y, self.elevation(s).z + height)
    }

    fn polyline(&self, id: u32, role: LaneRole, lateral: f64, spacing: f64) -> Polyline {
        let n = (self.length() / spacing).round() as usize;
        let ds = self.length() / n as f64;
        Polyline {
            id,
            role,
            closed: true,
            points: (0..n).map(|k| self.point(k as f64 * ds, lateral, 0.0)).collect(),
        }
    }

    /// Landmarks alternate sides every half spacing, at heights between 1 and 4 m.
    pub fn landmarks(&self) -> Vec<Landmark> {
        let step = self.landmark_spacing / 2.0;
        let n = (self.length() / step).floor() as usize;
        (0..n)
            .map(|k| {
                let side = if k % 2 == 0 { 1.0 } else { -1.0 };
                let height = 1.0 + 0.75 * (k % 5) as f64;
                Landmark {
                    id: k as u32 + 1,
                    position: self.point(k as f64 * step, side * self.landmark_offset, height),
                }
            })
            .collect()
    }

    pub fn build_map(&self) -> Map {
        Map {
            landmarks: self.landmarks(),
            polylines: vec![
                self.polyline(CENTER_ID, LaneRole::Center, 0.0, self.center_spacing),
                self.polyline(
                    LEFT_ID,
                    LaneRole::LeftBoundary,
                    self.lane_half_width,
                    self.boundary_spacing,
                ),
                self.polyline(
                    RIGHT_ID,
                    LaneRole::RightBoundary,
                    -self.lane_half_width,
                    self.boundary_spacing,
                ),
            ],
        }
    }

    /// Time to drive from arc length `a` to `b` at constant speed `v` along the road surface.
    pub fn travel_time(&self, a: f64, b: f64, v: f64) -> f64 {
        let n = ((b - a) / 0.05).ceil().max(2.0) as usize;
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        // Simpson over ds / (v cos α)
        let f = |s: f64| (1.0 + self.elevation(s).slope.powi(2)).sqrt() / v;
        let mut sum = f(a) + f(b);
        for k in 1..n {
            sum += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        sum * h / 3.0
    }

    /// Piecewise-constant `(t, speed, steering)` controls for one lap at
    /// speed `v`, and the lap duration.
    pub fn lap_controls(&self, v: f64, wheelbase: f64) -> (Vec<(f64, f64, f64)>, f64) {
        let steer = (wheelbase / self.radius).atan();
        let l = self.straight;
        let a = self.arc();
        let t1 = self.travel_time(0.0, l, v);
        let t2 = t1 + self.travel_time(l, l + a, v);
        let t3 = t2 + self.travel_time(l + a, 2.0 * l + a, v);
        let t4 = t3 + self.travel_time(2.0 * l + a, self.length(), v);
        (vec![(0.0, v, 0.0), (t1, v, steer), (t2, v, 0.0), (t3, v, steer)], t4)
    }
}
