//! IID disorder laws, their log-moment generating functions, and the tilted
//! measures used in the change-of-measure bound.

use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Centered, unit-variance environments with closed-form log M.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    #[default]
    Gaussian,
    Rademacher,
}

/// log cosh t without overflow.
fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Tilt of the first `n` variables by e^{−λω}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltSpec {
    pub n: usize,
    pub lambda: f64,
}

impl DisorderKind {
    /// log M(β) = log E e^{βω}.
    pub fn log_mgf(self, beta: f64) -> f64 {
        match self {
            DisorderKind::Gaussian => 0.5 * beta * beta,
            DisorderKind::Rademacher => log_cosh(beta),
        }
    }

    pub fn d_log_mgf(self, t: f64) -> f64 {
        match self {
            DisorderKind::Gaussian => t,
            DisorderKind::Rademacher => t.tanh(),
        }
    }

    pub fn d2_log_mgf(self, t: f64) -> f64 {
        match self {
            DisorderKind::Gaussian => 1.0,
            DisorderKind::Rademacher => 1.0 / t.cosh().powi(2),
        }
    }

    pub fn h_c_ann(self, beta: f64) -> f64 {
        -self.log_mgf(beta)
    }

    /// E[z^γ] = e^{γh} M(γβ).
    pub fn fractional_weight_moment(self, beta: f64, h: f64, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        Ok((gamma * h + self.log_mgf(gamma * beta)).exp())
    }

    /// h + log M(β−λ) − log M(−λ): under P_{N,λ}, E Z_{N,ω} = Z_N(h_eff).
    pub fn tilted_effective_h(self, beta: f64, h: f64, lambda: f64) -> f64 {
        h + self.log_mgf(beta - lambda) - self.log_mgf(-lambda)
    }

    /// min of (log M)'' over [−β₀, β₀] on a 1e-3 grid (endpoints included).
    pub fn c3(self, beta0: f64) -> f64 {
        grid_extremum(|t| self.d2_log_mgf(t), beta0, f64::min)
    }

    /// c with 0 ≤ log M(x) ≤ c x² on |x| ≤ 1: the max of ½(log M)'' on [−1, 1].
    pub fn quadratic_constant(self) -> f64 {
        0.5 * grid_extremum(|t| self.d2_log_mgf(t), 1.0, f64::max)
    }

    /// e^{−C₃βλ} − M(β−λ)/(M(β)M(−λ)), which is ≥ 0 for 0 < λ ≤ β ≤ β₀.
    pub fn mm_exponential_bound_check(self, beta: f64, lambda: f64, beta0: f64) -> Result<f64> {
        if !(0.0 < lambda && lambda <= beta && beta <= beta0) {
            return Err(Error::Precondition(format!(
                "need 0 < lambda <= beta <= beta0, got lambda={lambda}, beta={beta}, beta0={beta0}"
            )));
        }
        let lhs = (-self.c3(beta0) * beta * lambda).exp();
        let rhs = (self.log_mgf(beta - lambda) - self.log_mgf(beta) - self.log_mgf(-lambda)).exp();
        let margin = lhs - rhs;
        if margin < -1e-12 * lhs {
            return Err(Error::Invariant(format!(
                "exponential moment bound violated: margin {margin:e} at beta={beta}, lambda={lambda}"
            )));
        }
        Ok(margin)
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            DisorderKind::Gaussian => rng.sample(StandardNormal),
            DisorderKind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// A draw from the law tilted by e^{−λω}/M(−λ).
    pub fn sample_tilted<R: Rng + ?Sized>(self, lambda: f64, rng: &mut R) -> f64 {
        if lambda == 0.0 {
            return self.sample(rng);
        }
        match self {
            DisorderKind::Gaussian => rng.sample::<f64, _>(StandardNormal) - lambda,
            DisorderKind::Rademacher => {
                let p_plus = 1.0 / (1.0 + (2.0 * lambda).exp());
                if rng.random::<f64>() < p_plus {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// ω_1..ω_n.
    pub fn sample_env<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }

    /// ω_1..ω_n with the first `spec.n` coordinates tilted.
    pub fn sample_env_tilted<R: Rng + ?Sized>(self, spec: TiltSpec, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n)
            .map(|i| if i < spec.n { self.sample_tilted(spec.lambda, rng) } else { self.sample(rng) })
            .collect()
    }
}

fn grid_extremum(f: impl Fn(f64) -> f64, half_width: f64, pick: fn(f64, f64) -> f64) -> f64 {
    let steps = (2.0 * half_width / 1e-3).ceil() as usize;
    let mut best = f(-half_width);
    for i in 1..=steps {
        let t = (-half_width + i as f64 * 1e-3).min(half_width);
        best = pick(best, f(t));
    }
    pick(best, f(half_width))
}
