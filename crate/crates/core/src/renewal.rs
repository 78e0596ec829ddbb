//! Mass renewal functions, renewal sampling and the renewal-theoretic
//! asymptotics used by the certificate arguments.

use crate::dp::{dot, ReversedKernel};
use crate::kernels::{GammaTails, InterArrivalLaw};
use crate::rng::Stream;
use crate::stats::{MomentEstimate, DEFAULT_CONFIDENCE};
use crate::tails::{self, Neumaier};
use crate::{Bracket, Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;

/// u_n = P(n ∈ τ) for n = 0..=N.
#[derive(Clone, Debug, Serialize)]
pub struct MassRenewalTable {
    pub u: Vec<f64>,
}

impl MassRenewalTable {
    pub fn horizon(&self) -> usize {
        self.u.len() - 1
    }

    /// max_n |u_n − Σ_m K(m) u_{n−m}| / u_n, recomputed by plain summation.
    pub fn renewal_residual(&self, law: &InterArrivalLaw) -> f64 {
        let mut worst: f64 = 0.0;
        for n in 1..self.u.len() {
            let s: f64 = (1..=n).map(|m| law.k(m as u64) * self.u[n - m]).sum();
            worst = worst.max((self.u[n] - s).abs() / self.u[n]);
        }
        worst
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n", "u_n"])?;
        for (n, u) in self.u.iter().enumerate() {
            out.write_record([n.to_string(), format!("{u:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// u_0..u_N by direct convolution.
pub fn mass_renewal(law: &InterArrivalLaw, n: usize) -> MassRenewalTable {
    let kernel = ReversedKernel::new(law, n);
    MassRenewalTable { u: renewal_fill(|m| kernel.window(m), n) }
}

fn renewal_fill<'a>(window: impl Fn(usize) -> &'a [f64], n: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(n + 1);
    u.push(1.0);
    for m in 1..=n {
        let v = dot(&u[..m], window(m));
        u.push(v);
    }
    u
}

fn alpha_in_unit(law: &InterArrivalLaw) -> Result<f64> {
    let a = law.alpha();
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(Error::Domain(format!("asymptotic requires alpha in (0,1), got {a}")))
    }
}

/// α sin(πα)/π.
pub fn doney_constant(alpha: f64) -> f64 {
    alpha * (PI * alpha).sin() / PI
}

/// u_N L(N) N^{1−α} π/(α sin πα), with L the slowly varying part of K.
pub fn doney_ratio(law: &InterArrivalLaw, n: usize) -> Result<f64> {
    alpha_in_unit(law)?;
    if n < 100 {
        return Err(Error::Domain(format!("doney_ratio needs N >= 100, got {n}")));
    }
    let table = mass_renewal(law, n);
    doney_ratio_from(law, &table, n)
}

/// Same as [`doney_ratio`] reading u_N off an existing table.
pub fn doney_ratio_from(law: &InterArrivalLaw, table: &MassRenewalTable, n: usize) -> Result<f64> {
    let alpha = alpha_in_unit(law)?;
    let x = n as f64;
    Ok(table.u[n] * law.l_kernel(x) * x.powf(1.0 - alpha) / doney_constant(alpha))
}

/// A sub-probability inter-arrival law supported on {k, k+1, ...}.
#[derive(Clone, Debug)]
pub struct TerminatingLaw {
    /// Q(n) at index n for n below the table horizon.
    q: Vec<f64>,
    start: usize,
    /// Total mass Σ_n Q(n), including mass beyond the table.
    mass: f64,
}

impl TerminatingLaw {
    pub fn new(q: Vec<f64>, mass: f64) -> Result<Self> {
        let start = q.iter().position(|&v| v > 0.0).unwrap_or(q.len());
        if start == 0 {
            return Err(Error::Domain("Q(0) must vanish".into()));
        }
        if q.iter().any(|&v| v < 0.0) {
            return Err(Error::Domain("Q must be non-negative".into()));
        }
        let tabled: f64 = q.iter().sum();
        if tabled > mass * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("stated mass {mass} below tabulated mass {tabled}")));
        }
        Ok(TerminatingLaw { q, start, mass })
    }

    /// Q_k(n) = weight · Σ_{j<k} K(n−j)^γ A_j for n ≥ k, zero below k.
    pub fn from_certificate_kernel(
        law: &InterArrivalLaw,
        k: usize,
        gamma: f64,
        a: &[f64],
        weight: f64,
        horizon: usize,
    ) -> Result<Self> {
        if a.len() != k || k == 0 {
            return Err(Error::Domain(format!("need A_0..A_{{k-1}} with k >= 1, got {}", a.len())));
        }
        let tails = GammaTails::new(law, gamma, k)?;
        let mut q = vec![0.0; horizon + 1];
        for (n, slot) in q.iter_mut().enumerate().skip(k) {
            *slot = weight * (0..k).map(|j| law.k((n - j) as u64).powf(gamma) * a[j]).sum::<f64>();
        }
        let mut mass = 0.0;
        for j in 0..k {
            mass += a[j] * tails.get(k - j)?.mid();
        }
        TerminatingLaw::new(q, weight * mass)
    }

    pub fn q(&self, n: usize) -> f64 {
        self.q.get(n).copied().unwrap_or(0.0)
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn defect(&self) -> f64 {
        1.0 - self.mass
    }

    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }
}

/// u_0..=u_N for a terminating law, N within the Q table.
pub fn terminating_mass_renewal(q: &TerminatingLaw, n: usize) -> Result<Vec<f64>> {
    if q.defect() <= 0.0 {
        return Err(Error::Domain(format!("not terminating: defect {} <= 0", q.defect())));
    }
    if n > q.horizon() {
        return Err(Error::Domain(format!("horizon {n} beyond Q table {}", q.horizon())));
    }
    let rev: Vec<f64> = (0..n).map(|i| q.q(n - i)).collect();
    Ok(renewal_fill(|m| &rev[n - m..], n))
}

/// u_N (1−ρ)² / Q(N) with ρ the total mass.
pub fn terminating_asymptotic_ratio(q: &TerminatingLaw, n: usize) -> Result<f64> {
    let u = terminating_mass_renewal(q, n)?;
    let qn = q.q(n);
    if qn <= 0.0 {
        return Err(Error::Domain(format!("Q({n}) = 0")));
    }
    Ok(u[n] * q.defect().powi(2) / qn)
}

/// One inter-arrival draw: inverse CDF on the table, Pareto tail beyond.
fn draw_gap<R: Rng + ?Sized>(law: &InterArrivalLaw, rng: &mut R) -> u64 {
    let cdf = law.cdf();
    let n_max = law.n_max();
    let u: f64 = rng.random();
    if u < cdf[n_max] {
        let idx = cdf[1..].partition_point(|&c| c <= u);
        (idx + 1) as u64
    } else {
        let v = 1.0 - rng.random::<f64>();
        let x = (n_max as f64 + 0.5) * v.powf(-1.0 / law.alpha());
        if x > 1e18 {
            1_000_000_000_000_000_000
        } else {
            x.round() as u64
        }
    }
}

/// Contact set τ ∩ [0, N], starting at 0.
pub fn sample_renewal<R: Rng + ?Sized>(law: &InterArrivalLaw, n: u64, rng: &mut R) -> Vec<u64> {
    let mut pts = vec![0u64];
    let mut pos = 0u64;
    loop {
        pos = pos.saturating_add(draw_gap(law, rng));
        if pos > n {
            return pts;
        }
        pts.push(pos);
    }
}

/// Whitespace-separated contact indices, one trajectory per line.
pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Vec<u64>]) -> Result<()> {
    for t in trajectories {
        let line: Vec<String> = t.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Σ_n n K(n), finite for α > 1.
pub fn mean_inter_arrival(law: &InterArrivalLaw) -> Result<Bracket> {
    if law.alpha() <= 1.0 {
        return Err(Error::Divergence(format!("E(tau_1) is infinite for alpha = {}", law.alpha())));
    }
    let n_max = law.n_max() as u64;
    let mut acc = Neumaier::default();
    for n in (1..=n_max).rev() {
        acc.add(n as f64 * law.k(n));
    }
    let b = law.slowly_varying().exponent();
    let far = tails::sum_beyond(b, law.alpha(), n_max)
        .ok_or_else(|| Error::Precondition("n K(n) not monotone beyond the table".into()))?;
    Ok(Bracket::point(acc.value()).widen(1e-13).scale(law.amplitude_slack()) + far.scale(law.c_k_bracket()))
}

#[derive(Clone, Debug, Serialize)]
pub struct ContactFraction {
    pub estimate: MomentEstimate,
    /// 1/E(τ₁) when α > 1.
    pub target: Option<f64>,
    /// Exact E|τ ∩ {1..N}|/N = Σ_{n≤N} u_n / N, when N is within the table.
    pub finite_n_mean: Option<f64>,
    pub warning: Option<String>,
}

/// Replica mean of |τ ∩ {1..N}|/N.
pub fn contact_fraction_lln(law: &InterArrivalLaw, n: u64, replicas: usize, seed: u64) -> Result<ContactFraction> {
    if replicas < 2 {
        return Err(Error::Domain("need at least two replicas".into()));
    }
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut s = Stream::new(seed, r as u64);
            (sample_renewal(law, n, &mut s).len() - 1) as f64 / n as f64
        })
        .collect();
    let estimate = MomentEstimate::from_samples(&samples, DEFAULT_CONFIDENCE);
    let (target, warning) = if law.alpha() > 1.0 {
        (Some(1.0 / mean_inter_arrival(law)?.mid()), None)
    } else {
        (None, Some("alpha <= 1: infinite mean, the contact fraction tends to 0".to_string()))
    };
    let finite_n_mean = ((n as usize) <= law.n_max()).then(|| {
        let u = mass_renewal(law, n as usize).u;
        u[1..].iter().sum::<f64>() / n as f64
    });
    Ok(ContactFraction { estimate, target, warning, finite_n_mean })
}

/// E exp(−(c/N)|τ ∩ {1..N}|) for each c, using common trajectories.
pub fn laplace_contact_functional(
    law: &InterArrivalLaw,
    n: u64,
    cs: &[f64],
    replicas: usize,
    seed: u64,
) -> Vec<MomentEstimate> {
    let counts: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut s = Stream::new(seed, r as u64);
            (sample_renewal(law, n, &mut s).len() - 1) as f64
        })
        .collect();
    cs.iter()
        .map(|&c| {
            let v: Vec<f64> = counts.iter().map(|m| (-c * m / n as f64).exp()).collect();
            MomentEstimate::from_samples(&v, DEFAULT_CONFIDENCE)
        })
        .collect()
}

/// Bracket of 1 − E e^{−λτ₁} = Σ_n K(n)(1 − e^{−λn}).
pub fn laplace_defect(law: &InterArrivalLaw, lambda: f64) -> Result<Bracket> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let n_max = law.n_max() as u64;
    let mut acc = Neumaier::default();
    for n in (1..=n_max).rev() {
        acc.add(law.k(n) * -(-lambda * n as f64).exp_m1());
    }
    let b = law.slowly_varying().exponent();
    let far = tails::laplace_sum_beyond(b, law.alpha(), lambda, n_max)
        .ok_or_else(|| Error::Precondition("Laplace summand not monotone beyond the table".into()))?;
    Ok(Bracket::point(acc.value()).widen(1e-13).scale(law.amplitude_slack()) + far.scale(law.c_k_bracket()))
}

/// Γ(1−α)/α.
pub fn c_alpha(alpha: f64) -> f64 {
    statrs::function::gamma::gamma(1.0 - alpha) / alpha
}

/// (−log E e^{−λτ₁}) / (c_α λ^α L(1/λ)).
pub fn laplace_exponent_ratio(law: &InterArrivalLaw, lambda: f64) -> Result<f64> {
    let alpha = alpha_in_unit(law)?;
    let g = laplace_defect(law, lambda)?.mid();
    let exponent = -(-g).ln_1p();
    Ok(exponent / (c_alpha(alpha) * lambda.powf(alpha) * law.l_kernel(1.0 / lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_law, SlowlyVarying};
    use approx::assert_relative_eq;

    fn law(alpha: f64) -> InterArrivalLaw {
        build_law(alpha, SlowlyVarying::CONSTANT, 20_000, 1e-8).unwrap()
    }

    #[test]
    fn first_values() {
        let l = law(0.5);
        let t = mass_renewal(&l, 10);
        assert_eq!(t.u[0], 1.0);
        assert_eq!(t.u[1], l.k(1));
        assert_relative_eq!(t.u[2], l.k(2) + l.k(1).powi(2), max_relative = 1e-15);
        assert!(t.renewal_residual(&l) < 1e-12);
    }

    #[test]
    fn doney_targets() {
        assert_relative_eq!(doney_constant(0.5), 1.0 / (2.0 * PI), max_relative = 1e-15);
        let l = law(0.75);
        let table = mass_renewal(&l, 10_000);
        let r4 = doney_ratio_from(&l, &table, 10_000).unwrap();
        let r2 = doney_ratio_from(&l, &table, 100).unwrap();
        assert!((0.85..=1.15).contains(&r4), "{r4}");
        assert!((r4 - 1.0).abs() < (r2 - 1.0).abs());
        assert!(doney_ratio(&law(1.5), 1000).is_err());
    }

    #[test]
    fn terminating_renewal_geometric_identity() {
        // Finite support: Σ_n u_n converges geometrically to 1/defect.
        let q = TerminatingLaw::new(vec![0.0, 0.0, 0.3, 0.2, 0.1], 0.6).unwrap();
        assert_eq!(q.start(), 2);
        let mut padded = vec![0.0; 401];
        padded[..5].copy_from_slice(&[0.0, 0.0, 0.3, 0.2, 0.1]);
        let q = TerminatingLaw::new(padded, 0.6).unwrap();
        let u = terminating_mass_renewal(&q, 400).unwrap();
        assert_eq!(u[0], 1.0);
        assert_eq!(u[1], 0.0);
        let total: f64 = u.iter().sum();
        assert_relative_eq!(total, 1.0 / q.defect(), max_relative = 1e-12);
        assert!(u.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn terminating_rejects_full_mass() {
        let q = TerminatingLaw::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!(terminating_mass_renewal(&q, 1).is_err());
    }

    #[test]
    fn certificate_kernel_below_k_vanishes() {
        let l = law(0.5);
        let k = 10;
        let tails = GammaTails::new(&l, 0.9, k).unwrap();
        let raw: f64 = (0..k).map(|j| tails.get(k - j).unwrap().mid()).sum();
        let q = TerminatingLaw::from_certificate_kernel(&l, k, 0.9, &vec![1.0; k], 0.5 / raw, 2000).unwrap();
        assert_relative_eq!(q.mass(), 0.5, max_relative = 1e-12);
        let u = terminating_mass_renewal(&q, 2000).unwrap();
        assert!(u[1..k].iter().all(|&v| v == 0.0));
        assert!(u[k] > 0.0);
    }

    #[test]
    fn sampling_matches_table() {
        let l = law(0.5);
        let reps = 100_000;
        let mut hits1 = 0usize;
        let mut hits20 = 0usize;
        for r in 0..reps {
            let mut s = Stream::new(99, r);
            let t = sample_renewal(&l, 20, &mut s);
            assert_eq!(t[0], 0);
            assert!(t.windows(2).all(|w| w[0] < w[1]));
            hits1 += t.contains(&1) as usize;
            hits20 += t.contains(&20) as usize;
        }
        let u = mass_renewal(&l, 20).u;
        for (hits, target) in [(hits1, u[1]), (hits20, u[20])] {
            let p = hits as f64 / reps as f64;
            let se = (target * (1.0 - target) / reps as f64).sqrt();
            assert!((p - target).abs() <= 3.0 * se, "p={p} target={target}");
        }
    }

    #[test]
    fn contact_fraction_infinite_mean_vanishes() {
        let cf = contact_fraction_lln(&law(0.5), 10_000, 200, 5).unwrap();
        assert!(cf.estimate.point < 0.05);
        assert!(cf.warning.is_some() && cf.target.is_none());
    }

    #[test]
    fn contact_fraction_finite_mean() {
        let l = law(1.5);
        let cf = contact_fraction_lln(&l, 10_000, 1000, 11).unwrap();
        // The estimator is unbiased for the finite-N mean; the limit 1/E(τ₁)
        // differs from it by O(N^{1-α}).
        let exact = cf.finite_n_mean.unwrap();
        assert!((cf.estimate.point - exact).abs() <= 3.0 * cf.estimate.stderr, "{cf:?}");
        let target = cf.target.unwrap();
        assert!((exact / target - 1.0).abs() < 0.03);
    }

    #[test]
    fn laplace_functional_decreasing_in_c() {
        let v = laplace_contact_functional(&law(1.5), 1000, &[0.1, 0.5, 1.0, 2.0], 300, 3);
        assert!(v.windows(2).all(|w| w[1].point <= w[0].point));
    }

    #[test]
    fn laplace_exponent() {
        assert_relative_eq!(c_alpha(0.5), 2.0 * PI.sqrt(), max_relative = 1e-12);
        let l = law(0.5);
        let r = laplace_exponent_ratio(&l, 1e-4).unwrap();
        assert!((0.9..=1.1).contains(&r), "{r}");
        for lam in [1e-3, 1e-2, 0.1] {
            assert!(laplace_exponent_ratio(&l, lam).unwrap() > 0.0);
        }
    }

    #[test]
    fn mean_inter_arrival_bracket() {
        // α = 2, constant L: E τ = ζ(2)/ζ(3).
        let l = build_law(2.0, SlowlyVarying::CONSTANT, 10_000, 1e-9).unwrap();
        let zeta3 = 1.202_056_903_159_594_3;
        let target = PI * PI / 6.0 / zeta3;
        let br = mean_inter_arrival(&l).unwrap();
        assert!((br.mid() / target - 1.0).abs() < 1e-8, "{br:?} {target}");
    }

    #[test]
    fn csv_export() {
        let t = mass_renewal(&law(0.5), 3);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("n,u_n\n0,1e0\n"));
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &[vec![0, 3, 7]]).unwrap();
        assert_eq!(buf, b"0 3 7\n");
    }
}
