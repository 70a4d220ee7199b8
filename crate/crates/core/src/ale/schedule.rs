use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Piecewise-linear function of time given by breakpoints `(t, value)`.
/// Constant extrapolation outside the breakpoint span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSpec("a time table needs at least one breakpoint".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::InvalidSpec("time table contains non-finite values".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidSpec("breakpoint times must be strictly increasing".into()));
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn constant(v: f64) -> Self {
        PiecewiseLinear {
            points: vec![(0.0, v)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn start(&self) -> f64 {
        self.points[0].0
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].0
    }

    /// Segment index `i` with `t_i <= t < t_{i+1}`; `None` outside the span.
    fn segment(&self, t: f64) -> Option<usize> {
        if self.points.len() < 2 || t < self.start() || t >= self.end() {
            return None;
        }
        let i = self.points.partition_point(|p| p.0 <= t);
        Some(i - 1)
    }

    pub fn value(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0].0 {
            return p[0].1;
        }
        if t >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let i = self.segment(t).expect("t inside span");
        let (t0, v0) = p[i];
        let (t1, v1) = p[i + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    /// Right-limit slope at `t`; zero outside the span.
    pub fn slope(&self, t: f64) -> f64 {
        match self.segment(t) {
            Some(i) => {
                let (t0, v0) = self.points[i];
                let (t1, v1) = self.points[i + 1];
                (v1 - v0) / (t1 - t0)
            }
            None => 0.0,
        }
    }

    /// Exact integral over `[a, b]`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integral(b, a);
        }
        let mut knots = vec![a];
        knots.extend(self.points.iter().map(|p| p.0).filter(|&t| t > a && t < b));
        knots.push(b);
        knots
            .windows(2)
            .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
            .sum()
    }
}

/// Time history of the spatially uniform guiding velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidingSchedule {
    /// Speed [m/s] versus time [s].
    pub speed: PiecewiseLinear,
    /// Unit direction of the material flow through the mesh.
    pub direction: Vector3<f64>,
}

impl GuidingSchedule {
    pub fn new(speed: PiecewiseLinear, direction: Vector3<f64>) -> Result<Self> {
        let n = direction.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidSpec("guiding direction must be a nonzero vector".into()));
        }
        Ok(GuidingSchedule {
            speed,
            direction: direction / n,
        })
    }

    /// No guiding velocity: the frame stays put.
    pub fn stationary() -> Self {
        GuidingSchedule {
            speed: PiecewiseLinear::constant(0.0),
            direction: Vector3::x(),
        }
    }

    /// `(w, ẇ)` at time `t`; ẇ takes the right limit at breakpoints.
    pub fn eval(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        (
            self.direction * self.speed.value(t),
            self.direction * self.speed.slope(t),
        )
    }

    /// Frame displacement `∫ w dt` over `[a, b]`.
    pub fn shift(&self, a: f64, b: f64) -> Vector3<f64> {
        self.direction * self.speed.integral(a, b)
    }

    /// Distance travelled by the frame from the schedule start to `t`.
    pub fn travel(&self, t: f64) -> f64 {
        self.speed.integral(self.speed.start().min(t), t)
    }

    pub fn is_stationary(&self) -> bool {
        self.speed.points().iter().all(|p| p.1 == 0.0)
    }
}

/// Triangular modulation of a load amplitude, `1 + a · tri(f (t − t0))` on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriangularWave {
    pub start: f64,
    pub end: f64,
    pub frequency: f64,
    pub relative_amplitude: f64,
}

impl TriangularWave {
    pub fn factor(&self, t: f64) -> f64 {
        if t < self.start || t > self.end {
            return 1.0;
        }
        let phase = ((t - self.start) * self.frequency).rem_euclid(1.0);
        // 0 → +1 → 0 → −1 → 0 over one period
        let tri = if phase < 0.25 {
            4.0 * phase
        } else if phase < 0.75 {
            2.0 - 4.0 * phase
        } else {
            4.0 * phase - 4.0
        };
        1.0 + self.relative_amplitude * tri
    }
}

/// Load amplitude: piecewise-linear base history with optional modulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Amplitude {
    pub base: PiecewiseLinear,
    pub modulation: Option<TriangularWave>,
}

impl Amplitude {
    pub fn value(&self, t: f64) -> f64 {
        self.base.value(t) * self.modulation.map_or(1.0, |m| m.factor(t))
    }
}
