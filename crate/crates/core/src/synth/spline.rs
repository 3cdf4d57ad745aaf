//! Centripetal Catmull-Rom interpolation with an arc-length parameterization.

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Sub-intervals per segment in the arc-length table.
const ARC_SUBDIVISIONS: usize = 32;

// 5-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

/// One cubic piece `c0 + c1 u + c2 u^2 + c3 u^3`, `u` in [0, 1].
#[derive(Debug, Clone, Copy)]
struct Cubic {
    c: [Point3; 4],
}

impl Cubic {
    fn eval(&self, u: f64) -> Point3 {
        self.c[0] + (self.c[1] + (self.c[2] + self.c[3] * u) * u) * u
    }

    fn deriv(&self, u: f64) -> Point3 {
        self.c[1] + (self.c[2] * 2.0 + self.c[3] * (3.0 * u)) * u
    }

    fn speed_integral(&self, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GL_NODES
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(x, w)| w * self.deriv(mid + half * x).norm())
            .sum::<f64>()
            * half
    }
}

/// Interpolating curve through an ordered list of distinct points.
#[derive(Debug, Clone)]
pub struct CatmullRom {
    knots: Vec<Point3>,
    pieces: Vec<Cubic>,
    /// Cumulative arc-length at every table node; node `j` sits at piece
    /// `j / ARC_SUBDIVISIONS`, local parameter `(j % ARC_SUBDIVISIONS) / ARC_SUBDIVISIONS`.
    arc: Vec<f64>,
}

impl CatmullRom {
    pub fn new(points: &[Point3]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateSkeleton(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::DegenerateSkeleton(format!(
                "points {} and {} coincide",
                i,
                i + 1
            )));
        }
        let n = points.len();
        let at = |i: isize| -> Point3 {
            if i < 0 {
                points[0] * 2.0 - points[1]
            } else if i as usize >= n {
                points[n - 1] * 2.0 - points[n - 2]
            } else {
                points[i as usize]
            }
        };
        let pieces = (0..n - 1)
            .map(|i| {
                let i = i as isize;
                centripetal_piece(at(i - 1), at(i), at(i + 1), at(i + 2))
            })
            .collect::<Vec<_>>();

        let mut arc = Vec::with_capacity(pieces.len() * ARC_SUBDIVISIONS + 1);
        arc.push(0.0);
        let step = 1.0 / ARC_SUBDIVISIONS as f64;
        for piece in &pieces {
            for k in 0..ARC_SUBDIVISIONS {
                let a = k as f64 * step;
                let last = *arc.last().unwrap();
                arc.push(last + piece.speed_integral(a, a + step));
            }
        }
        Ok(Self {
            knots: points.to_vec(),
            pieces,
            arc,
        })
    }

    pub fn knots(&self) -> &[Point3] {
        &self.knots
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    fn split(&self, t: f64) -> (usize, f64) {
        let m = self.pieces.len();
        let x = t.clamp(0.0, 1.0) * m as f64;
        let i = (x.floor() as usize).min(m - 1);
        (i, x - i as f64)
    }

    /// Position at global parameter `t` in [0, 1]; knot `i` sits at `i / (n - 1)`.
    pub fn eval(&self, t: f64) -> Point3 {
        let (i, u) = self.split(t);
        self.pieces[i].eval(u)
    }

    /// Derivative with respect to the global parameter `t`.
    pub fn derivative(&self, t: f64) -> Point3 {
        let (i, u) = self.split(t);
        self.pieces[i].deriv(u) * self.pieces.len() as f64
    }

    /// Arc-length from the start to global parameter `t`.
    pub fn arc_at(&self, t: f64) -> f64 {
        let (i, u) = self.split(t);
        let sub = ((u * ARC_SUBDIVISIONS as f64).floor() as usize).min(ARC_SUBDIVISIONS - 1);
        let node = i * ARC_SUBDIVISIONS + sub;
        let u0 = sub as f64 / ARC_SUBDIVISIONS as f64;
        self.arc[node] + self.pieces[i].speed_integral(u0, u)
    }

    /// Global parameter at arc-length `s` (clamped to the curve).
    pub fn param_at_arc(&self, s: f64) -> f64 {
        let (i, u) = self.locate(s);
        (i as f64 + u) / self.pieces.len() as f64
    }

    /// Piece index and local parameter at arc-length `s`.
    fn locate(&self, s: f64) -> (usize, f64) {
        let total = self.length();
        let s = s.clamp(0.0, total);
        // last node with arc <= s
        let node = match self.arc.partition_point(|&a| a <= s) {
            0 => 0,
            p => (p - 1).min(self.arc.len() - 2),
        };
        let piece_idx = node / ARC_SUBDIVISIONS;
        let sub = node % ARC_SUBDIVISIONS;
        let piece = &self.pieces[piece_idx];
        let step = 1.0 / ARC_SUBDIVISIONS as f64;
        let start = sub as f64 * step;
        let (mut lo, mut hi) = (start, start + step);
        let base = self.arc[node];
        let target = s - base;
        let span = self.arc[node + 1] - base;
        let mut u = start
            + step
                * if span > 0.0 {
                    (target / span).clamp(0.0, 1.0)
                } else {
                    0.0
                };
        for _ in 0..50 {
            let f = piece.speed_integral(start, u) - target;
            if f.abs() <= 1e-15 * total.max(1.0) {
                break;
            }
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let speed = piece.deriv(u).norm();
            let newton = u - f / speed;
            u = if speed > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo < 1e-16 {
                break;
            }
        }
        (piece_idx, u)
    }

    pub fn point_at_arc(&self, s: f64) -> Point3 {
        let (i, u) = self.locate(s);
        self.pieces[i].eval(u)
    }

    /// Position and unit tangent at arc-length `s`.
    pub fn point_and_tangent(&self, s: f64) -> (Point3, Point3) {
        let (i, u) = self.locate(s);
        (self.pieces[i].eval(u), self.pieces[i].deriv(u).normalize())
    }

    /// Unit tangent at arc-length `s`.
    pub fn tangent_at_arc(&self, s: f64) -> Point3 {
        let (i, u) = self.locate(s);
        self.pieces[i].deriv(u).normalize()
    }

    /// Arc-length of every table node, base to tip.
    pub(crate) fn arc_nodes(&self) -> &[f64] {
        &self.arc
    }
}

fn centripetal_piece(a: Point3, b: Point3, c: Point3, d: Point3) -> Cubic {
    let dt0 = (b - a).norm().sqrt();
    let dt1 = (c - b).norm().sqrt();
    let dt2 = (d - c).norm().sqrt();
    let m1 = ((b - a) / dt0 - (c - a) / (dt0 + dt1) + (c - b) / dt1) * dt1;
    let m2 = ((c - b) / dt1 - (d - b) / (dt1 + dt2) + (d - c) / dt2) * dt1;
    Cubic {
        c: [
            b,
            m1,
            b * -3.0 - m1 * 2.0 + c * 3.0 - m2,
            b * 2.0 + m1 - c * 2.0 + m2,
        ],
    }
}
