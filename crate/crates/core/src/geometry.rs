//! Analytic training and test interfaces with exact curvature.

use crate::field::{LevelSet, Point};
use alloc::vec;
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(&'static str),
}

/// Circle with a quadratic (non-distance) level set `|x - c|^2 - r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleShape {
    pub center: Point,
    pub radius: f64,
}

impl CircleShape {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::InvalidShape(
                "circle radius must be positive",
            ));
        }
        Ok(Self { center, radius })
    }

    pub fn phi(&self, x: Point) -> f64 {
        let dx = x[0] - self.center[0];
        let dy = x[1] - self.center[1];
        dx * dx + dy * dy - self.radius * self.radius
    }

    /// Exact curvature, `1 / r` everywhere on the circle.
    pub fn curvature(&self) -> f64 {
        1.0 / self.radius
    }
}

impl LevelSet for CircleShape {
    fn value(&self, x: Point) -> f64 {
        self.phi(x)
    }

    fn distance_estimate(&self, x: Point) -> f64 {
        ((x[0] - self.center[0]).hypot(x[1] - self.center[1]) - self.radius).abs()
    }
}

/// The wave `y = A sin(w t)` placed in the world by a rotation `tilt` followed
/// by a translation `shift`. Its level set is the signed distance, negative
/// above the wave in its own frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineShape {
    pub amplitude: f64,
    pub frequency: f64,
    pub shift: Point,
    pub tilt: f64,
}

const NEWTON_STEPS: usize = 20;
const NEWTON_TOL: f64 = 1e-12;

impl SineShape {
    pub fn new(
        amplitude: f64,
        frequency: f64,
        shift: Point,
        tilt: f64,
    ) -> Result<Self, GeometryError> {
        if !(amplitude > 0.0) || !(frequency > 0.0) {
            return Err(GeometryError::InvalidShape(
                "sine amplitude and frequency must be positive",
            ));
        }
        if !(-core::f64::consts::FRAC_PI_2..core::f64::consts::FRAC_PI_2).contains(&tilt) {
            return Err(GeometryError::InvalidShape(
                "sine tilt must lie in [-pi/2, pi/2)",
            ));
        }
        Ok(Self {
            amplitude,
            frequency,
            shift,
            tilt,
        })
    }

    /// Same wave in its own canonical frame.
    pub fn canonical(&self) -> Self {
        Self {
            shift: [0.0, 0.0],
            tilt: 0.0,
            ..*self
        }
    }

    pub fn wave(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t).sin()
    }

    fn wave_d(&self, t: f64) -> f64 {
        self.amplitude * self.frequency * (self.frequency * t).cos()
    }

    fn wave_dd(&self, t: f64) -> f64 {
        -self.amplitude * self.frequency * self.frequency * (self.frequency * t).sin()
    }

    /// World point expressed in the wave frame: `R^T(tilt) (x - shift)`.
    pub fn to_canonical(&self, x: Point) -> Point {
        let (s, c) = self.tilt.sin_cos();
        let dx = x[0] - self.shift[0];
        let dy = x[1] - self.shift[1];
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn from_canonical(&self, p: Point) -> Point {
        let (s, c) = self.tilt.sin_cos();
        [
            c * p[0] - s * p[1] + self.shift[0],
            s * p[0] + c * p[1] + self.shift[1],
        ]
    }

    fn sq_distance(&self, p: Point, t: f64) -> f64 {
        let dx = t - p[0];
        let dy = self.wave(t) - p[1];
        dx * dx + dy * dy
    }

    /// Half the derivative of the squared distance; zero at the nearest point.
    fn stationarity(&self, p: Point, t: f64) -> f64 {
        (t - p[0]) + (self.wave(t) - p[1]) * self.wave_d(t)
    }

    fn stationarity_d(&self, p: Point, t: f64) -> f64 {
        let fd = self.wave_d(t);
        1.0 + fd * fd + (self.wave(t) - p[1]) * self.wave_dd(t)
    }

    /// Parameter of the point on the wave nearest to `p` (canonical frame).
    ///
    /// The nearest parameter lies within the vertical distance `v` of `p.x`.
    /// Since `f'^2 = w^2 (A^2 - f^2)`, the derivative of the stationarity
    /// condition is `1 + w^2 (A^2 - 2 f^2 + y f)`, a quadratic in `f` alone.
    /// Its sign changes where `f` crosses the two roots of that quadratic,
    /// which splits `[p.x - v, p.x + v]` into pieces where the condition is
    /// monotone. Each piece holds at most one root; a minimum is a change
    /// from negative to positive, found by bisection and Newton.
    pub fn nearest_parameter(&self, p: Point) -> f64 {
        let v = (p[1] - self.wave(p[0])).abs();
        if v == 0.0 {
            return p[0];
        }
        let (lo, hi) = (p[0] - v, p[0] + v);
        let (a, w) = (self.amplitude, self.frequency);
        let disc = (p[1] * p[1] + 8.0 * (a * a + 1.0 / (w * w))).sqrt();
        let mut cuts = vec![lo, hi];
        for level in [(p[1] + disc) / 4.0, (p[1] - disc) / 4.0] {
            if level.abs() >= a {
                continue;
            }
            let base = (level / a).asin();
            for phase in [base, core::f64::consts::PI - base] {
                let period = 2.0 * core::f64::consts::PI;
                let first = ((w * lo - phase) / period).ceil();
                let last = ((w * hi - phase) / period).floor();
                let mut k = first;
                while k <= last {
                    cuts.push((phase + k * period) / w);
                    k += 1.0;
                }
            }
        }
        cuts.sort_by(f64::total_cmp);

        let mut best = (p[0], v * v);
        let mut ga = self.stationarity(p, cuts[0]);
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let gb = self.stationarity(p, b);
            if ga < 0.0 && gb >= 0.0 {
                let t = self
                    .refine_root(p, a, b)
                    .unwrap_or_else(|| self.scan_minimum(p, a, b));
                let d = self.sq_distance(p, t);
                if d < best.1 {
                    best = (t, d);
                }
            }
            ga = gb;
        }
        best.0
    }

    fn refine_root(&self, p: Point, mut a: f64, mut b: f64) -> Option<f64> {
        for _ in 0..12 {
            let m = 0.5 * (a + b);
            if self.stationarity(p, m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let mut t = 0.5 * (a + b);
        for _ in 0..NEWTON_STEPS {
            let dg = self.stationarity_d(p, t);
            if dg == 0.0 {
                return None;
            }
            let next = t - self.stationarity(p, t) / dg;
            if !next.is_finite() || next < a - (b - a) || next > b + (b - a) {
                return None;
            }
            if (next - t).abs() <= NEWTON_TOL * t.abs().max(1.0) {
                return Some(next);
            }
            t = next;
        }
        None
    }

    /// Brute-force fallback: dense scan then bisection on the stationarity sign.
    fn scan_minimum(&self, p: Point, a: f64, b: f64) -> f64 {
        let n = 4096;
        let dt = (b - a) / n as f64;
        let (mut best_t, mut best_d) = (a, self.sq_distance(p, a));
        for k in 1..=n {
            let t = a + k as f64 * dt;
            let d = self.sq_distance(p, t);
            if d < best_d {
                best_d = d;
                best_t = t;
            }
        }
        let (mut lo, mut hi) = ((best_t - dt).max(a), (best_t + dt).min(b));
        if self.stationarity(p, lo) < 0.0 && self.stationarity(p, hi) >= 0.0 {
            for _ in 0..60 {
                let m = 0.5 * (lo + hi);
                if self.stationarity(p, m) < 0.0 {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            best_t = 0.5 * (lo + hi);
        }
        best_t
    }

    /// Signed distance with the wave-frame sign convention.
    pub fn phi(&self, x: Point) -> f64 {
        let p = self.to_canonical(x);
        let fx = self.wave(p[0]);
        if p[1] == fx {
            return 0.0;
        }
        let t = self.nearest_parameter(p);
        let d = self.sq_distance(p, t).sqrt();
        if p[1] > fx {
            -d
        } else {
            d
        }
    }

    /// Curvature of the wave at parameter `t`, sign consistent with `phi`.
    pub fn curvature_at(&self, t: f64) -> f64 {
        let aw = self.amplitude * self.frequency;
        let c = (self.frequency * t).cos();
        -self.amplitude * self.frequency * self.frequency * (self.frequency * t).sin()
            / (1.0 + aw * aw * c * c).powf(1.5)
    }

    /// Exact curvature at the wave point nearest to `x`.
    pub fn target_curvature(&self, x: Point) -> f64 {
        self.curvature_at(self.nearest_parameter(self.to_canonical(x)))
    }
}

impl LevelSet for SineShape {
    fn value(&self, x: Point) -> f64 {
        self.phi(x)
    }

    /// Vertical offset scaled by the local slope; accurate near the wave.
    fn distance_estimate(&self, x: Point) -> f64 {
        let p = self.to_canonical(x);
        let fd = self.wave_d(p[0]);
        (p[1] - self.wave(p[0])).abs() / (1.0 + fd * fd).sqrt()
    }
}

/// Polar rose `r = a cos(p theta) + b` with the level set `|x| - a cos(p theta) - b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoseShape {
    pub a: f64,
    pub b: f64,
    pub petals: u32,
}

impl RoseShape {
    pub fn new(a: f64, b: f64, petals: u32) -> Result<Self, GeometryError> {
        if !(a >= 0.0) || !(b > a) {
            return Err(GeometryError::InvalidShape("rose needs b > a >= 0"));
        }
        if petals % 2 == 0 {
            return Err(GeometryError::InvalidShape("rose petal count must be odd"));
        }
        Ok(Self { a, b, petals })
    }

    pub fn radius_at(&self, theta: f64) -> f64 {
        self.a * (self.petals as f64 * theta).cos() + self.b
    }

    fn radius_d(&self, theta: f64) -> f64 {
        let p = self.petals as f64;
        -self.a * p * (p * theta).sin()
    }

    fn radius_dd(&self, theta: f64) -> f64 {
        let p = self.petals as f64;
        -self.a * p * p * (p * theta).cos()
    }

    /// `|x| - gamma(theta)`; the origin maps to `-(a + b)` by taking `theta = 0`.
    pub fn phi(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return -(self.a + self.b);
        }
        r - self.radius_at(x[1].atan2(x[0]))
    }

    pub fn curvature_at_angle(&self, theta: f64) -> f64 {
        let g = self.radius_at(theta);
        let gd = self.radius_d(theta);
        let gdd = self.radius_dd(theta);
        (g * g + 2.0 * gd * gd - g * gdd) / (g * g + gd * gd).powf(1.5)
    }

    /// Exact curvature at the polar angle of `x`.
    pub fn target_curvature(&self, x: Point) -> f64 {
        self.curvature_at_angle(x[1].atan2(x[0]))
    }
}

impl LevelSet for RoseShape {
    fn value(&self, x: Point) -> f64 {
        self.phi(x)
    }

    fn distance_estimate(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return self.a + self.b;
        }
        let gd = self.radius_d(x[1].atan2(x[0]));
        self.phi(x).abs() / (1.0 + (gd / r) * (gd / r)).sqrt()
    }
}
