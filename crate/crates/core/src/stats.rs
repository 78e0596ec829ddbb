//! Replica statistics and least-squares fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Point estimate with standard error; `upper` is the one-sided bound
/// point + z·stderr at the stated confidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub point: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub confidence: f64,
    pub upper: f64,
}

/// Two-sided normal quantile for confidence level `c`.
pub fn z_value(confidence: f64) -> f64 {
    Normal::standard().inverse_cdf(0.5 + 0.5 * confidence)
}

impl MomentEstimate {
    pub fn exact(value: f64) -> Self {
        MomentEstimate { point: value, stderr: 0.0, replicas: 0, confidence: 1.0, upper: value }
    }

    /// Mean and standard error of `samples`, reduced in index order.
    pub fn from_samples(samples: &[f64], confidence: f64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        MomentEstimate {
            point: mean,
            stderr,
            replicas: n,
            confidence,
            upper: mean + z_value(confidence) * stderr,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

impl LinearFit {
    /// Half-width of the two-sided t interval for the slope.
    pub fn slope_half_width(&self, confidence: f64) -> f64 {
        if self.n <= 2 {
            return f64::INFINITY;
        }
        let t = StudentsT::new(0.0, 1.0, (self.n - 2) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.5 + 0.5 * confidence);
        t * self.slope_stderr
    }
}

/// Unweighted least squares y = intercept + slope·x; requires two distinct x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2) as f64 / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    Some(LinearFit { slope, intercept, slope_stderr, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn z_at_99_percent() {
        assert!((z_value(0.99) - 2.5758293).abs() < 1e-6);
    }

    #[test]
    fn estimate_of_constant_samples() {
        let e = MomentEstimate::from_samples(&[2.0; 10], 0.99);
        assert_eq!(e.point, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.upper, 2.0);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 2.0 * v).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 1.5).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
