//! Error summaries and linear fits between predictions and targets.

#[allow(unused_imports)]
use num_traits::Float;

/// Mean, maximum and root-mean-square absolute error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorStats {
    pub mae: f64,
    pub maxae: f64,
    pub rmse: f64,
    pub n: usize,
}

impl ErrorStats {
    pub fn new(predicted: &[f64], target: &[f64]) -> Self {
        assert_eq!(predicted.len(), target.len());
        let n = predicted.len();
        if n == 0 {
            return Self::default();
        }
        let (mut sum, mut sq, mut max) = (0.0, 0.0, 0.0f64);
        for (p, t) in predicted.iter().zip(target) {
            let e = (p - t).abs();
            sum += e;
            sq += e * e;
            max = max.max(e);
        }
        Self {
            mae: sum / n as f64,
            maxae: max,
            rmse: (sq / n as f64).sqrt(),
            n,
        }
    }
}

/// Least-squares line `y = slope * x + intercept` with Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regression {
    pub slope: f64,
    pub intercept: f64,
    pub rho: f64,
}

impl Regression {
    /// Fits `y` against `x`; `None` for fewer than two points or constant `x`.
    pub fn fit(x: &[f64], y: &[f64]) -> Option<Self> {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        if n < 2 {
            return None;
        }
        let mx = x.iter().sum::<f64>() / n as f64;
        let my = y.iter().sum::<f64>() / n as f64;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (a, b) in x.iter().zip(y) {
            let (dx, dy) = (a - mx, b - my);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        if sxx == 0.0 {
            return None;
        }
        let slope = sxy / sxx;
        let rho = if syy == 0.0 {
            0.0
        } else {
            sxy / (sxx * syy).sqrt()
        };
        Some(Self {
            slope,
            intercept: my - slope * mx,
            rho,
        })
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    Regression::fit(x, y).map(|r| r.rho)
}
