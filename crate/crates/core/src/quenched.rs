//! Quenched partition functions Z_{a,b,ω}, replica estimators of the free
//! energy and of the fractional moments A_j, and exhaustive oracles for
//! Rademacher environments.

use crate::disorder::{DisorderKind, TiltSpec};
use crate::dp::{log_partition_series, ReversedKernel};
use crate::homogeneous::pure_partition;
use crate::kernels::InterArrivalLaw;
use crate::rng::Stream;
use crate::stats::{MomentEstimate, DEFAULT_CONFIDENCE};
use crate::tails::Neumaier;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Largest j handled by exhaustive enumeration (2^j environments).
pub const J_MAX: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvProvenance {
    pub seed: u64,
    pub stream: u64,
    pub tilt: Option<TiltSpec>,
}

/// ω_{a+1}..ω_b.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSlice {
    pub start: usize,
    pub omega: Vec<f64>,
    pub provenance: Option<EnvProvenance>,
}

impl EnvSlice {
    pub fn from_values(start: usize, omega: Vec<f64>) -> Self {
        EnvSlice { start, omega, provenance: None }
    }

    /// Draws ω_1..ω_n from stream `stream` of `seed`; rebuilding from the
    /// stored provenance gives the same values.
    pub fn sample(d: DisorderKind, n: usize, seed: u64, stream: u64, tilt: Option<TiltSpec>) -> Self {
        let mut rng = Stream::new(seed, stream);
        let omega = match tilt {
            Some(t) => d.sample_env_tilted(t, n, &mut rng),
            None => d.sample_env(n, &mut rng),
        };
        EnvSlice { start: 0, omega, provenance: Some(EnvProvenance { seed, stream, tilt }) }
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn end(&self) -> usize {
        self.start + self.omega.len()
    }
}

/// Reusable kernel for windows up to a fixed length.
pub struct QuenchedSolver {
    kernel: ReversedKernel,
}

impl QuenchedSolver {
    pub fn new(law: &InterArrivalLaw, max_len: usize) -> Result<Self> {
        if max_len > law.n_max() {
            return Err(Error::Precondition(format!(
                "window length {max_len} exceeds the tabulated range n_max = {}",
                law.n_max()
            )));
        }
        Ok(QuenchedSolver { kernel: ReversedKernel::new(law, max_len) })
    }

    pub fn max_len(&self) -> usize {
        self.kernel.len()
    }

    /// log Z_{a,a+m,ω} for every m = 0..=len.
    pub fn log_partition_series(&self, omega: &[f64], beta: f64, h: f64) -> Result<Vec<f64>> {
        if omega.len() > self.kernel.len() {
            return Err(Error::Precondition(format!(
                "window length {} exceeds solver length {}",
                omega.len(),
                self.kernel.len()
            )));
        }
        Ok(log_partition_series(&self.kernel, omega.len(), |m| h + beta * omega[m - 1]))
    }

    pub fn log_partition(&self, omega: &[f64], beta: f64, h: f64) -> Result<f64> {
        Ok(*self.log_partition_series(omega, beta, h)?.last().unwrap())
    }
}

/// log Z_{a,b,ω} with zero boundary conditions at both ends.
pub fn quenched_log_partition(law: &InterArrivalLaw, env: &EnvSlice, beta: f64, h: f64) -> Result<f64> {
    if env.is_empty() {
        return Ok(0.0);
    }
    QuenchedSolver::new(law, env.len())?.log_partition(&env.omega, beta, h)
}

fn check_replicas(replicas: usize) -> Result<()> {
    if replicas < 2 {
        return Err(Error::Domain(format!("need at least two replicas, got {replicas}")));
    }
    Ok(())
}

/// Replica mean of log Z_{N,ω}/N. Replica r uses stream r of `seed`.
pub fn free_energy_mc(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if n < 1 {
        return Err(Error::Domain("N must be at least 1".into()));
    }
    check_replicas(replicas)?;
    let solver = QuenchedSolver::new(law, n)?;
    if beta == 0.0 {
        let v = pure_partition(law, h, n)[n] / n as f64;
        return Ok(MomentEstimate { replicas, confidence: DEFAULT_CONFIDENCE, ..MomentEstimate::exact(v) });
    }
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = EnvSlice::sample(d, n, seed, r as u64, None);
            solver.log_partition(&env.omega, beta, h).map(|v| v / n as f64)
        })
        .collect::<Result<_>>()?;
    Ok(MomentEstimate::from_samples(&samples, DEFAULT_CONFIDENCE))
}

/// (1/N) log E Z_{N,ω} = (1/N) log Z_N(h + log M(β)).
pub fn annealed_free_energy_finite(law: &InterArrivalLaw, d: DisorderKind, beta: f64, h: f64, n: usize) -> f64 {
    pure_partition(law, h + d.log_mgf(beta), n)[n] / n as f64
}

/// A_0..A_{k−1} with A_0 = 1 exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FractionalMomentSeries {
    pub gamma: f64,
    pub a: Vec<MomentEstimate>,
}

impl FractionalMomentSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["j", "point", "stderr", "upper", "replicas"])?;
        for (j, e) in self.a.iter().enumerate() {
            out.write_record([
                j.to_string(),
                format!("{:e}", e.point),
                format!("{:e}", e.stderr),
                format!("{:e}", e.upper),
                e.replicas.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(())
}

/// E[Z_{j,ω}^γ] for j = 0..k−1 from one DP per replica (prefixes of one environment).
pub fn fractional_moment_series_mc(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    k: usize,
    replicas: usize,
    seed: u64,
) -> Result<FractionalMomentSeries> {
    check_gamma(gamma)?;
    check_replicas(replicas)?;
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let len = k - 1;
    if beta == 0.0 {
        let lz = pure_partition(law, h, len);
        let a = lz
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let v = if j == 0 { 1.0 } else { (gamma * l).exp() };
                MomentEstimate { replicas, confidence: DEFAULT_CONFIDENCE, ..MomentEstimate::exact(v) }
            })
            .collect();
        return Ok(FractionalMomentSeries { gamma, a });
    }
    let solver = QuenchedSolver::new(law, len.max(1))?;
    let rows: Vec<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = EnvSlice::sample(d, len, seed, r as u64, None);
            solver
                .log_partition_series(&env.omega, beta, h)
                .map(|lz| lz.iter().map(|l| (gamma * l).exp()).collect())
        })
        .collect::<Result<_>>()?;
    let mut a = Vec::with_capacity(k);
    a.push(MomentEstimate { replicas, confidence: DEFAULT_CONFIDENCE, ..MomentEstimate::exact(1.0) });
    let mut column = vec![0.0; replicas];
    for j in 1..k {
        for (c, row) in column.iter_mut().zip(&rows) {
            *c = row[j];
        }
        a.push(MomentEstimate::from_samples(&column, DEFAULT_CONFIDENCE));
    }
    Ok(FractionalMomentSeries { gamma, a })
}

/// MC estimate of A_j = E[Z_{j,ω}^γ].
#[allow(clippy::too_many_arguments)]
pub fn fractional_moment_mc(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    j: usize,
    replicas: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    let s = fractional_moment_series_mc(law, d, beta, h, gamma, j + 1, replicas, seed)?;
    Ok(s.a[j])
}

/// Exact E[Z_{j,ω}^p] for j = 0..=j_max over all 2^j Rademacher prefixes.
/// Any p > 0 is allowed (p = 1 gives E Z_{j,ω}).
pub fn rademacher_moment_series(law: &InterArrivalLaw, beta: f64, h: f64, p: f64, j_max: usize) -> Result<Vec<f64>> {
    if j_max > J_MAX {
        return Err(Error::ResourceCap {
            what: "exhaustive enumeration length".into(),
            required: j_max as f64,
            cap: J_MAX as f64,
        });
    }
    if j_max == 0 {
        return Ok(vec![1.0]);
    }
    let kernel = ReversedKernel::new(law, j_max);
    let zs = [(h + beta).exp(), (h - beta).exp()];
    let mut acc: Vec<Neumaier> = (0..=j_max).map(|_| Neumaier::default()).collect();
    let mut w = vec![0.0; j_max + 1];
    w[0] = 1.0;
    // Depth-first walk of the prefix tree: node at depth m fixes ω_1..ω_m.
    #[allow(clippy::too_many_arguments)]
    fn walk(m: usize, j_max: usize, weight: f64, w: &mut [f64], kernel: &ReversedKernel, zs: &[f64; 2], p: f64, acc: &mut [Neumaier]) {
        let conv = crate::dp::dot(&w[..m], kernel.window(m));
        for z in zs {
            let v = conv * z;
            w[m] = v;
            acc[m].add(weight * v.powf(p));
            if m < j_max {
                walk(m + 1, j_max, 0.5 * weight, w, kernel, zs, p, acc);
            }
        }
    }
    walk(1, j_max, 0.5, &mut w, &kernel, &zs, p, &mut acc);
    let mut out: Vec<f64> = acc.iter().map(|a| a.value()).collect();
    out[0] = 1.0;
    Ok(out)
}

/// Exact A_j = 2^{−j} Σ_ω Z_{j,ω}^γ for Rademacher disorder.
pub fn fractional_moment_exact(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    j: usize,
) -> Result<f64> {
    require_rademacher(d)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    Ok(rademacher_moment_series(law, beta, h, gamma, j)?[j])
}

fn require_rademacher(d: DisorderKind) -> Result<()> {
    if d != DisorderKind::Rademacher {
        return Err(Error::Precondition("exhaustive enumeration needs Rademacher disorder".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct AnnealedCheck {
    /// Z_N(h + log M(β)).
    pub target: f64,
    pub estimate: MomentEstimate,
    /// 3·stderr − |estimate − target| (MC), or the relative error (exact).
    pub margin: f64,
    pub exact: bool,
    pub pass: bool,
}

/// Exhaustive for Rademacher N ≤ 16, otherwise a replica mean of Z_{N,ω}.
pub fn annealed_identity_check(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<AnnealedCheck> {
    let target = pure_partition(law, h + d.log_mgf(beta), n)[n].exp();
    if beta == 0.0 || (d == DisorderKind::Rademacher && n <= 16) {
        let v = if beta == 0.0 {
            pure_partition(law, h, n)[n].exp()
        } else {
            rademacher_moment_series(law, beta, h, 1.0, n)?[n]
        };
        let rel = (v - target).abs() / target;
        return Ok(AnnealedCheck {
            target,
            estimate: MomentEstimate::exact(v),
            margin: rel,
            exact: true,
            pass: rel <= 1e-10,
        });
    }
    check_replicas(replicas)?;
    let solver = QuenchedSolver::new(law, n)?;
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let env = EnvSlice::sample(d, n, seed, r as u64, None);
            solver.log_partition(&env.omega, beta, h).map(f64::exp)
        })
        .collect::<Result<_>>()?;
    let estimate = MomentEstimate::from_samples(&samples, DEFAULT_CONFIDENCE);
    let margin = 3.0 * estimate.stderr - (estimate.point - target).abs();
    Ok(AnnealedCheck { target, estimate, margin, exact: false, pass: margin >= 0.0 })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Rec3Check {
    pub lhs: f64,
    pub rhs: f64,
    /// rhs − lhs.
    pub margin: f64,
}

/// A_N ≤ E[z^γ] Σ_{n=k}^N A_{N−n} Σ_{j<k} K(n−j)^γ A_j with exact Rademacher moments.
pub fn rec3_inequality_check(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    k: usize,
    n: usize,
) -> Result<Rec3Check> {
    require_rademacher(d)?;
    if !(k >= 1 && n >= k) {
        return Err(Error::Domain(format!("need N >= k >= 1, got k = {k}, N = {n}")));
    }
    let a = rademacher_moment_series(law, beta, h, gamma, n)?;
    let ez = d.fractional_weight_moment(beta, h, gamma)?;
    let mut rhs = Neumaier::default();
    for m in k..=n {
        let inner: f64 = (0..k).map(|j| law.k((m - j) as u64).powf(gamma) * a[j]).sum();
        rhs.add(a[n - m] * inner);
    }
    let rhs = ez * rhs.value();
    let lhs = a[n];
    if lhs > rhs * (1.0 + 1e-12) {
        return Err(Error::Invariant(format!("fractional recursion violated: A_N = {lhs} > {rhs}")));
    }
    Ok(Rec3Check { lhs, rhs, margin: rhs - lhs })
}
