//! Certified brackets for tails of L(x)^s x^{-p}-type series.
//!
//! Slowly varying factors are handled as `ln(1+x)^b`, with `b = 0` the
//! constant case. Integrals are bracketed on geometric blocks where the
//! log factor is monotone, and the far remainder uses a Potter envelope.

use crate::Bracket;
use std::sync::OnceLock;

/// Relative variation of the log factor allowed across one block.
const BLOCK_VARIATION: f64 = 2e-5;
/// Block length factor where the curvature sign is known; the bracket width
/// per block is then second order in the block length.
const CURVATURE_STEP: f64 = 4e-5;
/// Stop marching once the Potter remainder is this small relative to the sum.
const REMAINDER_REL: f64 = 1e-7;
const MAX_BLOCKS: usize = 5_000_000;
/// Outward slack for accumulated floating-point rounding.
const ROUNDING_SLACK: f64 = 1e-12;
/// Outward slack on Gauss-Legendre block integrals.
const QUADRATURE_SLACK: f64 = 1e-10;

/// Neumaier compensated summation.
#[derive(Default, Clone, Copy)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// ln(1+e^t), stable for large t.
fn log1p_exp(t: f64) -> f64 {
    if t > 35.0 {
        t + (-t).exp()
    } else {
        t.exp().ln_1p()
    }
}

/// ln of ln(1+x)^b at x = e^t.
fn ln_lfactor(b: f64, t: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        b * log1p_exp(t).ln()
    }
}

/// Once t ≥ 2 and this returns `Some`, the curvature of φ(t) = ln(1+e^t)^b
/// keeps that sign for all larger t: φ'' = b g^{b-2} ψ with
/// ψ = (b-1)σ² + gσ(1-σ), and ψ is decreasing on t ≥ 2. `true` means convex.
fn settled_curvature(b: f64, t: f64) -> Option<bool> {
    if t < 2.0 {
        return None;
    }
    if b >= 1.0 {
        return Some(true);
    }
    let sig = 1.0 / (1.0 + (-t).exp());
    let psi = (b - 1.0) * sig * sig + log1p_exp(t) * sig * (1.0 - sig);
    (psi < 0.0).then_some(b < 0.0)
}

/// ∫_0^Δ e^{-κs} ds and ∫_0^Δ s e^{-κs} ds.
fn weight_moments(kappa: f64, dt: f64) -> (f64, f64) {
    let x = kappa * dt;
    let i0 = -(-x).exp_m1() / kappa;
    let m1 = if x < 1e-3 {
        x * x * (0.5 - x / 3.0 + x * x / 8.0)
    } else {
        -(-x).exp_m1() - x * (-x).exp()
    };
    (i0, m1 / (kappa * kappa))
}

/// Bracket of ∫_{x0}^∞ ln(1+x)^b x^{-p} dx for p > 1, x0 ≥ 1.
pub(crate) fn integral(b: f64, p: f64, x0: f64) -> Bracket {
    assert!(p > 1.0 && x0 >= 1.0, "integral needs p > 1, x0 >= 1");
    let t0 = x0.ln();
    let kappa = p - 1.0;
    if b == 0.0 {
        return Bracket::point((-kappa * t0).exp() / kappa).widen(ROUNDING_SLACK);
    }
    let delta = 0.1f64.min(kappa / 2.0);
    let mut lo = Neumaier::default();
    let mut hi = Neumaier::default();
    let mut t = t0;
    let mut blocks = 0usize;
    let mut convex = None;
    loop {
        let g = log1p_exp(t);
        if b.abs() / g <= delta {
            // Potter: L(x) ≤ L(X)(x/X)^δ (b > 0) or L(x) ≥ L(X)(x/X)^{-δ} (b < 0).
            let base = (ln_lfactor(b, t) - kappa * t).exp();
            let (rlo, rhi) = if b > 0.0 {
                (base / kappa, base / (kappa - delta))
            } else {
                (base / (kappa + delta), base / kappa)
            };
            if rhi <= REMAINDER_REL * lo.value() || blocks >= MAX_BLOCKS {
                lo.add(rlo);
                hi.add(rhi);
                return Bracket::new(lo.value(), hi.value()).widen(ROUNDING_SLACK);
            }
        }
        if convex.is_none() {
            convex = settled_curvature(b, t);
        }
        let phi_a = ln_lfactor(b, t).exp();
        let scale = (-kappa * t).exp();
        match convex {
            Some(is_convex) => {
                // Tangent at the left end and the chord bracket φ on the block.
                let dt = (CURVATURE_STEP * t / (b * (b - 1.0)).abs().sqrt().max(1e-3)).clamp(1e-6, 0.25);
                let (i0, i1) = weight_moments(kappa, dt);
                let phi_c = ln_lfactor(b, t + dt).exp();
                let sig = 1.0 / (1.0 + (-t).exp());
                let slope_a = b * phi_a / g * sig;
                let chord = (phi_c - phi_a) / dt;
                let tangent = scale * (phi_a * i0 + slope_a * i1);
                let secant = scale * (phi_a * i0 + chord * i1);
                let (l, u) = if is_convex { (tangent, secant) } else { (secant, tangent) };
                lo.add(l.min(u));
                hi.add(u.max(l));
                t += dt;
            }
            None => {
                let dt = (BLOCK_VARIATION * g / b.abs()).clamp(1e-7, 0.05);
                let (i0, _) = weight_moments(kappa, dt);
                let phi_c = ln_lfactor(b, t + dt).exp();
                lo.add(scale * i0 * phi_a.min(phi_c));
                hi.add(scale * i0 * phi_a.max(phi_c));
                t += dt;
            }
        }
        blocks += 1;
    }
}

/// f(x) = ln(1+x)^b x^{-p}.
fn power_log(b: f64, p: f64, x: f64) -> f64 {
    (ln_lfactor(b, x.ln()) - p * x.ln()).exp()
}

/// Bracket of Σ_{n > c} ln(1+n)^b n^{-p}, with c ≥ 1.
///
/// Uses the trapezoid/midpoint bracket when the summand is provably convex
/// beyond `c`, otherwise the monotone bracket [∫_{c+1}, ∫_c].
/// Convexity of x ↦ ln(1+x)^b x^{-p} on [x, ∞), from bounds on x L'/L and x² L''/L.
fn convex_beyond(b: f64, p: f64, x: f64) -> bool {
    let g = x.ln_1p();
    let l1 = b.abs() / g;
    let l2 = (b * b + b.abs()) / (g * g) + b.abs() / g;
    p * (p + 1.0) - 2.0 * p * l1 - l2 > 0.0
}

pub(crate) fn sum_beyond(b: f64, p: f64, c: u64) -> Option<Bracket> {
    let x = c as f64;
    let g = x.ln_1p();
    // d ln f / d ln x ≤ b/ln(1+x) - p when b > 0.
    if b > 0.0 && b / g >= p {
        return None;
    }
    if convex_beyond(b, p, x) {
        let lo = integral(b, p, x).lo - 0.5 * power_log(b, p, x) * (1.0 + 1e-14);
        let hi = integral(b, p, x + 0.5).hi;
        Some(Bracket::new(lo.max(0.0), hi))
    } else {
        Some(Bracket::new(integral(b, p, x + 1.0).lo, integral(b, p, x).hi))
    }
}

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = 16usize;
        let mut out = Vec::with_capacity(n);
        for i in 1..=n {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

/// ∫_{x0}^∞ ln(1+x)^b x^{-1-α} (1 - e^{-F x}) dx.
fn laplace_integral(b: f64, alpha: f64, rate: f64, x0: f64) -> Bracket {
    let nodes = gauss_legendre();
    let mut quad = Neumaier::default();
    let mut t = x0.ln();
    let step = std::f64::consts::LN_2;
    while rate * t.exp() < 50.0 {
        let half = 0.5 * step;
        let centre = t + half;
        let mut acc = 0.0;
        for &(node, w) in nodes {
            let s = centre + half * node;
            let x = s.exp();
            acc += w * (ln_lfactor(b, s) - alpha * s).exp() * (-(-rate * x).exp_m1());
        }
        quad.add(acc * half);
        t += step;
    }
    let x_end = t.exp();
    let rest = integral(b, 1.0 + alpha, x_end);
    let damp = -(-rate * x_end).exp_m1();
    let q = quad.value();
    Bracket::new(
        q * (1.0 - QUADRATURE_SLACK) + rest.lo * damp,
        q * (1.0 + QUADRATURE_SLACK) + rest.hi,
    )
}

/// ∫_{x0}^∞ ln(1+x)^b x^{-1-α} e^{-F x} dx.
fn damped_integral(b: f64, alpha: f64, rate: f64, x0: f64) -> Bracket {
    let nodes = gauss_legendre();
    let mut quad = Neumaier::default();
    let mut t = x0.ln();
    let step = std::f64::consts::LN_2;
    while rate * t.exp() < 50.0 {
        let half = 0.5 * step;
        let centre = t + half;
        let mut acc = 0.0;
        for &(node, w) in nodes {
            let s = centre + half * node;
            acc += w * (ln_lfactor(b, s) - alpha * s - rate * s.exp()).exp();
        }
        quad.add(acc * half);
        t += step;
    }
    let x_end = t.exp();
    let rest = integral(b, 1.0 + alpha, x_end).hi * (-rate * x_end).exp();
    let q = quad.value();
    Bracket::new(q * (1.0 - QUADRATURE_SLACK), q * (1.0 + QUADRATURE_SLACK) + rest)
}

/// Bracket of Σ_{n > c} ln(1+n)^b n^{-1-α} (1 - e^{-F n}).
pub(crate) fn laplace_sum_beyond(b: f64, alpha: f64, rate: f64, c: u64) -> Option<Bracket> {
    let x = c as f64;
    // Summand is decreasing once b/ln(1+x) < α.
    if b > 0.0 && b / x.ln_1p() >= alpha {
        return None;
    }
    let p = 1.0 + alpha;
    if convex_beyond(b, p, x) {
        // Split into Σ f − Σ f e^{-Fn}; both summands are convex and decreasing,
        // so each takes the trapezoid/midpoint bracket.
        let plain = sum_beyond(b, p, c)?;
        let f_damped = power_log(b, p, x) * (-rate * x).exp();
        let d_lo = (damped_integral(b, alpha, rate, x).lo - 0.5 * f_damped * (1.0 + 1e-14)).max(0.0);
        let d_hi = damped_integral(b, alpha, rate, x + 0.5).hi;
        let lo = (plain.lo - d_hi).max(0.0);
        let hi = plain.hi - d_lo;
        return Some(Bracket::new(lo, hi));
    }
    let lo = laplace_integral(b, alpha, rate, x + 1.0).lo;
    let hi = laplace_integral(b, alpha, rate, x).hi;
    Some(Bracket::new(lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_power_integral() {
        let br = integral(0.0, 2.0, 10.0);
        assert!(br.contains(0.1));
        assert!(br.width() < 1e-12);
    }

    #[test]
    fn log_power_integral_matches_quadrature() {
        // Reference: composite Simpson on ln-scale up to a far cutoff.
        let (b, p, x0) = (-2.0, 1.5, 1.0e3);
        let br = integral(b, p, x0);
        let mut acc = 0.0;
        let (t0, t1, m) = (x0.ln(), 400.0f64, 400_000);
        let h = (t1 - t0) / m as f64;
        for i in 0..=m {
            let t = t0 + i as f64 * h;
            let w = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * (ln_lfactor(b, t) + (1.0 - p) * t).exp();
        }
        acc *= h / 3.0;
        assert!(br.contains(acc), "{br:?} vs {acc}");
        assert!(br.width() / br.mid() < 1e-4);
    }

    #[test]
    fn sum_beyond_brackets_direct_summation() {
        for &(b, p) in &[(0.0, 2.0), (-2.0, 1.5), (1.5, 1.8), (0.0, 1.05)] {
            let c = 1000u64;
            let br = sum_beyond(b, p, c).unwrap();
            // Partial sum to 10^6 is a strict lower bound; 10^6 onward by integral.
            let mut part = Neumaier::default();
            for n in (c + 1)..=1_000_000 {
                part.add(power_log(b, p, n as f64));
            }
            let rest = sum_beyond(b, p, 1_000_000).unwrap();
            let total_lo = part.value() + rest.lo;
            let total_hi = part.value() + rest.hi;
            assert!(br.lo <= total_hi && total_lo <= br.hi, "b={b} p={p}: {br:?} vs [{total_lo}, {total_hi}]");
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let nodes = gauss_legendre();
        let wsum: f64 = nodes.iter().map(|n| n.1).sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        let x30: f64 = nodes.iter().map(|&(x, w)| w * x.powi(30)).sum();
        assert!((x30 - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn laplace_tail_matches_direct_sum() {
        let (b, alpha, rate, c) = (0.0, 0.5, 1e-3, 100u64);
        let br = laplace_sum_beyond(b, alpha, rate, c).unwrap();
        let mut direct = Neumaier::default();
        for n in (c + 1)..=2_000_000u64 {
            let x = n as f64;
            direct.add(x.powf(-1.5) * (-(-rate * x).exp_m1()));
        }
        let rest = sum_beyond(0.0, 1.5, 2_000_000).unwrap();
        let lo = direct.value() + rest.lo * (-(-rate * 2e6f64).exp_m1());
        let hi = direct.value() + rest.hi;
        assert!(br.lo <= hi && lo <= br.hi, "{br:?} vs [{lo}, {hi}]");
    }
}
