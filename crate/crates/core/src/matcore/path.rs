use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Piecewise-linear path in the complex plane, the concrete carrier of a
/// homotopy class for parallel transport. Vertices must be pairwise distinct
/// consecutively; callers are responsible for keeping the track away from
/// poles.
#[derive(Clone, Debug, PartialEq)]
pub struct PolylinePath {
    vertices: Vec<C64>,
}

impl PolylinePath {
    pub fn new(vertices: Vec<C64>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Invalid("path needs at least 2 vertices".into()));
        }
        for w in vertices.windows(2) {
            if (w[0] - w[1]).norm() == 0.0 {
                return Err(Error::Invalid("consecutive path vertices coincide".into()));
            }
        }
        if vertices.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Invalid("non-finite path vertex".into()));
        }
        Ok(PolylinePath { vertices })
    }

    pub fn segment(from: C64, to: C64) -> Result<Self> {
        Self::new(vec![from, to])
    }

    /// Polyline approximation of the arc around `center` at `radius` from
    /// angle `theta0` to `theta1` (angles are real lifts; the arc may wind).
    pub fn arc(center: C64, radius: f64, theta0: f64, theta1: f64, max_step: f64) -> Result<Self> {
        let sweep = theta1 - theta0;
        let steps = ((sweep.abs() / max_step).ceil() as usize).max(1);
        let mut vertices = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let th = theta0 + sweep * (k as f64) / (steps as f64);
            vertices.push(center + C64::from_polar(radius, th));
        }
        Self::new(vertices)
    }

    /// Full positively-oriented circle starting and ending at angle `theta0`.
    pub fn circle(center: C64, radius: f64, theta0: f64) -> Result<Self> {
        Self::arc(center, radius, theta0, theta0 + 2.0 * std::f64::consts::PI, 0.2)
    }

    pub fn vertices(&self) -> &[C64] {
        &self.vertices
    }

    pub fn start(&self) -> C64 {
        self.vertices[0]
    }

    pub fn end(&self) -> C64 {
        *self.vertices.last().unwrap()
    }

    pub fn reversed(&self) -> PolylinePath {
        let mut v = self.vertices.clone();
        v.reverse();
        PolylinePath { vertices: v }
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }

    /// Concatenate with another path starting where this one ends.
    pub fn join(&self, other: &PolylinePath) -> Result<PolylinePath> {
        if (self.end() - other.start()).norm() > 1e-12 * (1.0 + self.end().norm()) {
            return Err(Error::Invalid("joined paths do not meet".into()));
        }
        let mut v = self.vertices.clone();
        v.extend_from_slice(&other.vertices[1..]);
        Ok(PolylinePath { vertices: v })
    }

    /// Minimal distance from the track to a point.
    pub fn distance_to(&self, p: C64) -> f64 {
        let mut best = f64::INFINITY;
        for w in self.vertices.windows(2) {
            best = best.min(segment_distance(w[0], w[1], p));
        }
        best
    }
}

fn segment_distance(a: C64, b: C64, p: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    // projection parameter clamped to the segment
    let t = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}
