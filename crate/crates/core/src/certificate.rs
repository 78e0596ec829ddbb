//! The fractional-moment delocalization certificate ρ̄ ≤ 1, deterministic
//! change-of-measure bounds on A_N, and the parameter constructions for the
//! three regimes of α.

use crate::disorder::DisorderKind;
use crate::homogeneous::{correlation_length, pure_partition};
use crate::kernels::{GammaTails, InterArrivalLaw, LKind, LawConfig};
use crate::quenched::{fractional_moment_series_mc, rademacher_moment_series, J_MAX};
use crate::stats::{linear_fit, DEFAULT_CONFIDENCE};
use crate::tails::Neumaier;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Default resource cap on k (the A-bound DPs cost O(k²)).
pub const DEFAULT_K_CAP: usize = 20_000;

/// λ values are rounded down onto the grid 2^{i/16} so that one pure DP
/// serves every j in a group.
const LAMBDA_GRID_PER_OCTAVE: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AProvenance {
    Exact,
    HolderDeterministic,
    McUpperCi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ABound {
    pub value: f64,
    pub provenance: AProvenance,
    /// Tilt actually used (0 for Jensen or non-Hölder bounds).
    pub lambda: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Zero,
    /// 1/√j.
    InvSqrt,
    /// (j log j)^{−1/2}.
    InvSqrtJLogJ,
}

/// What to do at j where the rule exceeds min(1, (1−γ)/γ).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipMode {
    #[default]
    Error,
    /// Fall back to λ = 0 there.
    Jensen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaSchedule {
    Rule { rule: LambdaRule, clip: ClipMode },
    /// λ_j for j = 0..k−1.
    Explicit { lambdas: Vec<f64>, clip: ClipMode },
}

impl LambdaSchedule {
    pub fn rule(rule: LambdaRule) -> Self {
        LambdaSchedule::Rule { rule, clip: ClipMode::Error }
    }

    pub fn clipped(rule: LambdaRule) -> Self {
        LambdaSchedule::Rule { rule, clip: ClipMode::Jensen }
    }

    fn raw(&self, j: usize) -> f64 {
        let x = j as f64;
        match self {
            LambdaSchedule::Rule { rule, .. } => match rule {
                LambdaRule::Zero => 0.0,
                LambdaRule::InvSqrt => 1.0 / x.sqrt(),
                LambdaRule::InvSqrtJLogJ => {
                    if j < 2 {
                        f64::INFINITY
                    } else {
                        1.0 / (x * x.ln()).sqrt()
                    }
                }
            },
            LambdaSchedule::Explicit { lambdas, .. } => lambdas.get(j).copied().unwrap_or(0.0),
        }
    }

    fn clip(&self) -> ClipMode {
        match self {
            LambdaSchedule::Rule { clip, .. } | LambdaSchedule::Explicit { clip, .. } => *clip,
        }
    }

    /// Admissible λ_j for 1 ≤ j < k, enforcing the range min(1, (1−γ)/γ).
    pub fn resolve(&self, gamma: f64, k: usize) -> Result<Vec<f64>> {
        if let LambdaSchedule::Explicit { lambdas, .. } = self {
            if lambdas.len() < k {
                return Err(Error::Domain(format!("explicit schedule has {} entries, need {k}", lambdas.len())));
            }
        }
        let cap = lambda_cap(gamma);
        let mut out = vec![0.0; k];
        for (j, slot) in out.iter_mut().enumerate().skip(1) {
            let l = self.raw(j);
            if l.abs() <= cap {
                *slot = l;
            } else if self.clip() == ClipMode::Error {
                return Err(Error::Precondition(format!(
                    "lambda_{j} = {l} is outside the admissible range |lambda| <= min(1, (1-gamma)/gamma) = {cap}"
                )));
            }
        }
        Ok(out)
    }
}

pub fn lambda_cap(gamma: f64) -> f64 {
    1f64.min((1.0 - gamma) / gamma)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub k: usize,
    pub gamma: f64,
    /// Bounds on A_0..A_{k−1}.
    pub a_bounds: Vec<ABound>,
    pub lambda_schedule: Option<LambdaSchedule>,
}

impl CertificateParams {
    pub fn validate(&self, law: &InterArrivalLaw) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Domain("k must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        let p = (1.0 + law.alpha()) * self.gamma;
        if p <= 1.0 {
            return Err(Error::Divergence(format!("(1+alpha)*gamma = {p} <= 1: the certificate sum diverges")));
        }
        if self.a_bounds.len() != self.k {
            return Err(Error::Domain(format!(
                "missing A bounds: have {}, need {} (j = 0..k-1)",
                self.a_bounds.len(),
                self.k
            )));
        }
        if self.a_bounds[0].value != 1.0 {
            return Err(Error::Domain("A_0 must be exactly 1".into()));
        }
        if let Some(j) = self.a_bounds.iter().position(|b| !(b.value > 0.0 && b.value.is_finite())) {
            return Err(Error::Domain(format!("A bound at j = {j} is not a positive finite number")));
        }
        Ok(())
    }

    /// Jensen-free parameters with exact A_j supplied by the caller.
    pub fn with_values(k: usize, gamma: f64, values: &[f64], provenance: AProvenance) -> Self {
        let a_bounds = values.iter().map(|&value| ABound { value, provenance, lambda: 0.0 }).collect();
        CertificateParams { k, gamma, a_bounds, lambda_schedule: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    CertifiedDelocalized,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Confidence {
    Exact,
    Statistical { level: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateResult {
    pub rho_upper: f64,
    pub status: CertificateStatus,
    pub confidence: Confidence,
    /// E[z^γ] A_j Σ_{m ≥ k−j} K(m)^γ (upper), j = 0..k−1.
    pub per_j: Vec<f64>,
}

impl CertificateResult {
    pub fn certified(&self) -> bool {
        self.status == CertificateStatus::CertifiedDelocalized
    }
}

/// ρ̄ = E[z^γ] Σ_{j<k} A_j Σ_{m ≥ k−j} K(m)^γ, with upper tail brackets.
pub fn rho_upper(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    params: &CertificateParams,
) -> Result<CertificateResult> {
    params.validate(law)?;
    let (k, gamma) = (params.k, params.gamma);
    let tails = GammaTails::new(law, gamma, k)?;
    let weight = d.fractional_weight_moment(beta, h, gamma)?;
    // Each product carries a few roundings; inflate by a few ulps so the total stays an upper bound.
    let inflate = 1.0 + 8.0 * f64::EPSILON;
    let per_j: Vec<f64> = (0..k)
        .map(|j| weight * params.a_bounds[j].value * tails.upper(k - j) * inflate)
        .collect();
    let mut acc = Neumaier::default();
    for &c in &per_j {
        acc.add(c);
    }
    let rho = acc.value() * (1.0 + 4.0 * f64::EPSILON);
    let statistical = params.a_bounds.iter().any(|b| b.provenance == AProvenance::McUpperCi);
    Ok(CertificateResult {
        rho_upper: rho,
        status: if rho <= 1.0 { CertificateStatus::CertifiedDelocalized } else { CertificateStatus::Inconclusive },
        confidence: if statistical {
            Confidence::Statistical { level: DEFAULT_CONFIDENCE }
        } else {
            Confidence::Exact
        },
        per_j,
    })
}

/// ρ̄ for every k = 1..=a_bounds.len(), sharing one tail table; entry k−1
/// equals `rho_upper` with the first k bounds.
pub fn rho_upper_by_k(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    a_bounds: &[ABound],
) -> Result<Vec<f64>> {
    let k_max = a_bounds.len();
    CertificateParams { k: k_max, gamma, a_bounds: a_bounds.to_vec(), lambda_schedule: None }.validate(law)?;
    let tails = GammaTails::new(law, gamma, k_max)?;
    let weight = d.fractional_weight_moment(beta, h, gamma)?;
    let inflate = 1.0 + 8.0 * f64::EPSILON;
    Ok((1..=k_max)
        .map(|k| {
            let mut acc = Neumaier::default();
            for (j, b) in a_bounds[..k].iter().enumerate() {
                acc.add(weight * b.value * tails.upper(k - j) * inflate);
            }
            acc.value() * (1.0 + 4.0 * f64::EPSILON)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HolderBound {
    /// Z_N(h_eff)^γ (M(−λ)^γ M(λγ/(1−γ))^{1−γ})^N.
    pub bound: f64,
    /// Z_N(h_eff)^γ e^{cγλ²N/(1−γ)}.
    pub relaxed: f64,
    pub log_product: f64,
    pub log_relaxed_product: f64,
}

fn check_lambda(gamma: f64, lambda: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let cap = lambda_cap(gamma);
    if lambda.abs() > cap {
        return Err(Error::Precondition(format!(
            "|lambda| = {} exceeds min(1, (1-gamma)/gamma) = {cap}",
            lambda.abs()
        )));
    }
    Ok(())
}

/// log of M(−λ)^γ M(λγ/(1−γ))^{1−γ}, the per-site change-of-measure cost.
fn log_tilt_cost(d: DisorderKind, gamma: f64, lambda: f64) -> f64 {
    gamma * d.log_mgf(-lambda) + (1.0 - gamma) * d.log_mgf(lambda * gamma / (1.0 - gamma))
}

/// Hölder bound on A_N under the environment tilted on {1..N}.
pub fn holder_tilt_bound(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    lambda: f64,
    n: usize,
) -> Result<HolderBound> {
    check_lambda(gamma, lambda)?;
    let h_eff = d.tilted_effective_h(beta, h, lambda);
    let lz = if n == 0 { 0.0 } else { pure_partition(law, h_eff, n)[n] };
    let nf = n as f64;
    let log_product = nf * log_tilt_cost(d, gamma, lambda);
    let log_relaxed_product = nf * d.quadratic_constant() * gamma * lambda * lambda / (1.0 - gamma);
    Ok(HolderBound {
        bound: (gamma * lz + log_product).exp(),
        relaxed: (gamma * lz + log_relaxed_product).exp(),
        log_product,
        log_relaxed_product,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// β = 0 (any disorder) or Rademacher with k − 1 ≤ 20.
    Exact,
    Holder,
    Mc { replicas: usize, seed: u64 },
}

impl Backend {
    pub fn label(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Holder => "holder",
            Backend::Mc { .. } => "mc",
        }
    }
}

/// Multiplicative allowance for the stored amplitude and DP rounding on a
/// bound computed from Z_j: each of the ≤ j jumps carries at most the
/// amplitude slack, and the positive-term DP loses at most ~j²ε relative.
fn pure_bound_allowance(law: &InterArrivalLaw, j: usize, gamma: f64) -> f64 {
    let s = law.amplitude_slack().hi.max(1.0);
    let jf = j as f64;
    (gamma * (jf * s.ln() + (jf * jf + 4.0) * f64::EPSILON)).exp()
}

fn quantize_down(lambda: f64) -> (i64, f64) {
    let i = (lambda.log2() * LAMBDA_GRID_PER_OCTAVE).floor() as i64;
    let q = (i as f64 / LAMBDA_GRID_PER_OCTAVE).exp2();
    // Guard the rare case where exp2 rounds above the input.
    if q > lambda {
        (i - 1, ((i - 1) as f64 / LAMBDA_GRID_PER_OCTAVE).exp2())
    } else {
        (i, q)
    }
}

/// Upper bounds on A_0..A_{k−1}.
#[allow(clippy::too_many_arguments)]
pub fn build_a_bounds(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    k: usize,
    backend: Backend,
    schedule: Option<&LambdaSchedule>,
) -> Result<Vec<ABound>> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if k < 1 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let len = k - 1;
    let one = ABound { value: 1.0, provenance: AProvenance::Exact, lambda: 0.0 };
    match backend {
        Backend::Exact => {
            let values: Vec<f64> = if beta == 0.0 {
                let lz = pure_partition(law, h, len);
                (0..k).map(|j| (gamma * lz[j]).exp() * pure_bound_allowance(law, j, gamma)).collect()
            } else if d == DisorderKind::Rademacher {
                if len > J_MAX {
                    return Err(Error::ResourceCap {
                        what: "exact backend needs k - 1 <= 20".into(),
                        required: len as f64,
                        cap: J_MAX as f64,
                    });
                }
                let a = rademacher_moment_series(law, beta, h, gamma, len)?;
                (0..k).map(|j| a[j] * pure_bound_allowance(law, j, gamma)).collect()
            } else {
                return Err(Error::Precondition("exact backend needs beta = 0 or Rademacher disorder".into()));
            };
            let mut out: Vec<ABound> =
                values.into_iter().map(|value| ABound { value, provenance: AProvenance::Exact, lambda: 0.0 }).collect();
            out[0] = one;
            Ok(out)
        }
        Backend::Mc { replicas, seed } => {
            let s = fractional_moment_series_mc(law, d, beta, h, gamma, k, replicas, seed)?;
            let mut out: Vec<ABound> = s
                .a
                .iter()
                .map(|e| ABound { value: e.upper, provenance: AProvenance::McUpperCi, lambda: 0.0 })
                .collect();
            out[0] = one;
            Ok(out)
        }
        Backend::Holder => {
            let zero = LambdaSchedule::rule(LambdaRule::Zero);
            let lambdas = schedule.unwrap_or(&zero).resolve(gamma, k)?;
            // Group j by quantized λ; each group needs one DP up to its largest j.
            let mut groups: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            let mut key = vec![None; k];
            for j in 1..k {
                if lambdas[j] > 0.0 {
                    let (i, q) = quantize_down(lambdas[j]);
                    let e = groups.entry(i).or_insert((q, 0));
                    e.1 = e.1.max(j);
                    key[j] = Some(i);
                }
            }
            let jensen = pure_partition(law, h + d.log_mgf(beta), len);
            let tables: BTreeMap<i64, Vec<f64>> = groups
                .par_iter()
                .map(|(&i, &(q, jmax))| {
                    let lz = pure_partition(law, d.tilted_effective_h(beta, h, q), jmax);
                    (i, lz)
                })
                .collect();
            let mut out = Vec::with_capacity(k);
            out.push(one);
            for j in 1..k {
                let allowance = pure_bound_allowance(law, j, gamma);
                let mut value = (gamma * jensen[j]).exp() * allowance;
                let mut lambda = 0.0;
                if let Some(i) = key[j] {
                    let q = groups[&i].0;
                    let log_b = gamma * tables[&i][j] + j as f64 * log_tilt_cost(d, gamma, q);
                    let b = log_b.exp() * allowance;
                    if b < value {
                        value = b;
                        lambda = q;
                    }
                }
                out.push(ABound { value, provenance: AProvenance::HolderDeterministic, lambda });
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayCheck {
    pub n: Vec<usize>,
    /// A_N / K(N)^γ.
    pub ratios: Vec<f64>,
    /// max ratio, the fitted C.
    pub c_fit: f64,
    /// OLS slope of log ratio against log N, with standard error.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Upward trend significant at the 99% one-sided level.
    pub flagged: bool,
}

/// A_N ≤ C K(N)^γ along `n_range` for a certified point.
#[allow(clippy::too_many_arguments)]
pub fn moment_decay_check(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    gamma: f64,
    certified: &CertificateResult,
    n_range: &[usize],
    backend: Backend,
) -> Result<DecayCheck> {
    if !certified.certified() {
        return Err(Error::Precondition("decay check needs a certified point (rho_upper <= 1)".into()));
    }
    let n_max = *n_range.iter().max().ok_or_else(|| Error::Domain("empty N range".into()))?;
    if n_range.len() < 3 || n_range.contains(&0) {
        return Err(Error::Domain("need at least three positive N values".into()));
    }
    let a: Vec<f64> = match backend {
        Backend::Exact | Backend::Holder if beta == 0.0 => {
            let lz = pure_partition(law, h, n_max);
            lz.iter().map(|l| (gamma * l).exp()).collect()
        }
        Backend::Exact => rademacher_moment_series(law, beta, h, gamma, n_max)?,
        Backend::Holder => {
            let b = build_a_bounds(law, d, beta, h, gamma, n_max + 1, backend, None)?;
            b.iter().map(|x| x.value).collect()
        }
        Backend::Mc { replicas, seed } => fractional_moment_series_mc(law, d, beta, h, gamma, n_max + 1, replicas, seed)?
            .a
            .iter()
            .map(|e| e.point)
            .collect(),
    };
    let ratios: Vec<f64> = n_range.iter().map(|&n| a[n] / law.k(n as u64).powf(gamma)).collect();
    let x: Vec<f64> = n_range.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = ratios.iter().map(|r| r.ln()).collect();
    let fit = linear_fit(&x, &y).ok_or_else(|| Error::Domain("degenerate N range".into()))?;
    let half = fit.slope_half_width(0.98);
    Ok(DecayCheck {
        n: n_range.to_vec(),
        c_fit: ratios.iter().cloned().fold(0.0, f64::max),
        ratios,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        flagged: fit.slope - half > 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftParams {
    pub a: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub eta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructOptions {
    pub beta0: f64,
    pub k_cap: usize,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        ConstructOptions { beta0: 1.0, k_cap: DEFAULT_K_CAP }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Construction {
    pub h: f64,
    pub shift: ShiftParams,
    pub params: CertificateParams,
}

/// The parameters a construction would use before the A bounds are built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub h: f64,
    pub shift: ShiftParams,
    pub k: usize,
    pub gamma: f64,
    pub schedule: LambdaSchedule,
}

fn ceil_int(x: f64) -> f64 {
    (x - 1e-9).ceil()
}

fn check_beta(beta: f64, opts: &ConstructOptions) -> Result<()> {
    if !(beta > 0.0 && beta <= opts.beta0) {
        return Err(Error::Domain(format!("beta must lie in (0, beta0 = {}], got {beta}", opts.beta0)));
    }
    Ok(())
}

fn check_k(k: f64, opts: &ConstructOptions, hint: &str) -> Result<usize> {
    if !k.is_finite() || k > opts.k_cap as f64 {
        return Err(Error::ResourceCap { what: format!("correlation length k; {hint}"), required: k, cap: opts.k_cap as f64 });
    }
    Ok((k as usize).max(1))
}

/// γ = smallest multiple of `step` with (1+α)γ ≥ 2 + margin.
fn gamma_alpha_gt1(alpha: f64) -> Result<f64> {
    let g = (ceil_int(2.05 / (1.0 + alpha) / 0.01) * 0.01 * 100.0).round() / 100.0;
    if g >= 1.0 {
        return Err(Error::Precondition(format!(
            "no gamma < 1 with (1+alpha)*gamma >= 2.05 at alpha = {alpha}"
        )));
    }
    Ok(g)
}

pub fn plan_alpha_gt1(d: DisorderKind, law: &InterArrivalLaw, beta: f64, a: f64, opts: &ConstructOptions) -> Result<Plan> {
    let alpha = law.alpha();
    if alpha <= 1.0 {
        return Err(Error::Domain(format!("construction needs alpha > 1, got {alpha}")));
    }
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    check_beta(beta, opts)?;
    let delta = a * beta * beta;
    let k = check_k(ceil_int(1.0 / delta), opts, "increase a")?;
    Ok(Plan {
        h: d.h_c_ann(beta) + delta,
        shift: ShiftParams { a, delta, epsilon: None, eta: None },
        k,
        gamma: gamma_alpha_gt1(alpha)?,
        schedule: LambdaSchedule::clipped(LambdaRule::InvSqrt),
    })
}

/// The two constraint left sides divided by their right sides at γ = 1;
/// γ must exceed both returned thresholds.
pub fn gamma_thresholds_half_one(alpha: f64, epsilon: f64) -> (f64, f64) {
    let e2 = 1.0 - epsilon * epsilon;
    let g1 = 2.0 / ((1.0 + alpha) + e2 * (1.0 - alpha + 0.5 * epsilon * (alpha - 0.5)));
    let g2 = (2.0 - epsilon * epsilon) / ((1.0 + alpha) + e2 * (1.0 - alpha));
    (g1, g2)
}

/// Smallest γ on the 0.01 grid clearing both thresholds by 0.05 in the
/// constraint left sides; otherwise the smallest 0.001 grid value clearing them.
pub fn gamma_half_one(alpha: f64, epsilon: f64) -> Result<f64> {
    let (g1, g2) = gamma_thresholds_half_one(alpha, epsilon);
    let lhs1 = |g: f64| -> f64 { 2.0 * g / g1 };
    let lhs2 = |g: f64| -> f64 { (2.0 - epsilon * epsilon) * g / g2 };
    for i in 1..100 {
        let g = i as f64 * 0.01;
        if lhs1(g) > 2.05 && lhs2(g) > 2.0 - epsilon * epsilon + 0.05 {
            return Ok(g);
        }
    }
    for i in 1..1000 {
        let g = i as f64 * 0.001;
        if g > g1 && g > g2 {
            return Ok(g);
        }
    }
    Err(Error::Precondition(format!(
        "no gamma < 1 satisfies both constraints: thresholds {g1:.6} and {g2:.6} at alpha = {alpha}, epsilon = {epsilon}"
    )))
}

pub fn plan_alpha_half_one(
    d: DisorderKind,
    law: &InterArrivalLaw,
    beta: f64,
    a: f64,
    epsilon: f64,
    opts: &ConstructOptions,
) -> Result<Plan> {
    let alpha = law.alpha();
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::Domain(format!("construction needs alpha in (1/2, 1), got {alpha}")));
    }
    if !(a > 0.0 && epsilon > 0.0) {
        return Err(Error::Domain(format!("need a > 0 and epsilon > 0, got a = {a}, epsilon = {epsilon}")));
    }
    check_beta(beta, opts)?;
    let gamma = gamma_half_one(alpha, epsilon)?;
    let delta = a * beta.powf(shift_exponent_half_one(alpha, epsilon));
    let k = check_k(ceil_int(correlation_length(law, delta)?), opts, "increase a")?;
    Ok(Plan {
        h: d.h_c_ann(beta) + delta,
        shift: ShiftParams { a, delta, epsilon: Some(epsilon), eta: None },
        k,
        gamma,
        schedule: LambdaSchedule::clipped(LambdaRule::InvSqrt),
    })
}

/// 2α/(2α−1)·(1+ε).
pub fn shift_exponent_half_one(alpha: f64, epsilon: f64) -> f64 {
    2.0 * alpha / (2.0 * alpha - 1.0) * (1.0 + epsilon)
}

/// Returned by the α = 1/2 plan when Δ is so large that k ≤ e³.
pub(crate) const SMALL_K_MSG: &str = "k too small for gamma = 1 - 1/log k to be useful";

/// γ(k) = 1 − 1/log k.
pub fn gamma_of_k(k: usize) -> f64 {
    1.0 - 1.0 / (k as f64).ln()
}

/// Checks the law shape for the α = 1/2 construction: L(x) = log(1+x)^{−η}.
pub fn check_half_law(cfg: &LawConfig, epsilon: f64, eta: f64) -> Result<()> {
    if cfg.alpha != 0.5 {
        return Err(Error::Domain(format!("construction needs alpha = 1/2, got {}", cfg.alpha)));
    }
    if cfg.l_kind != LKind::LogPower || cfg.b != -eta {
        return Err(Error::Precondition(format!(
            "construction needs L(x) = log(1+x)^(-eta) with eta = {eta}; law has kind {:?}, b = {}",
            cfg.l_kind, cfg.b
        )));
    }
    if !(epsilon > 0.0 && epsilon < eta - 0.5) {
        return Err(Error::Precondition(format!(
            "epsilon = {epsilon} is outside the window 0 < epsilon < eta - 1/2 = {}",
            eta - 0.5
        )));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn plan_alpha_half(
    d: DisorderKind,
    law: &InterArrivalLaw,
    beta: f64,
    a: f64,
    epsilon: f64,
    eta: f64,
    opts: &ConstructOptions,
) -> Result<Plan> {
    check_half_law(law.config(), epsilon, eta)?;
    if !(a > 0.0) {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    check_beta(beta, opts)?;
    let delta = a * (-beta.powf(-1.0 / (eta - 0.5 - epsilon))).exp();
    let kf = if delta > 0.0 { ceil_int(correlation_length(law, delta)?) } else { f64::INFINITY };
    let k = check_k(kf, opts, "k grows like the exponential of a power of 1/beta")?;
    if (k as f64) <= std::f64::consts::E.powi(3) {
        return Err(Error::Precondition(format!("{SMALL_K_MSG}: k = {k}")));
    }
    Ok(Plan {
        h: d.h_c_ann(beta) + delta,
        shift: ShiftParams { a, delta, epsilon: Some(epsilon), eta: Some(eta) },
        k,
        gamma: gamma_of_k(k),
        schedule: LambdaSchedule::clipped(LambdaRule::InvSqrtJLogJ),
    })
}

/// Builds the Hölder A bounds for a plan.
pub fn realize(law: &InterArrivalLaw, d: DisorderKind, beta: f64, plan: Plan) -> Result<Construction> {
    let a_bounds = build_a_bounds(law, d, beta, plan.h, plan.gamma, plan.k, Backend::Holder, Some(&plan.schedule))?;
    Ok(Construction {
        h: plan.h,
        shift: plan.shift,
        params: CertificateParams { k: plan.k, gamma: plan.gamma, a_bounds, lambda_schedule: Some(plan.schedule) },
    })
}

/// h = h_c_ann + aβ², k = ⌈1/(aβ²)⌉, λ_j = 1/√j.
pub fn construct_alpha_gt1(d: DisorderKind, law: &InterArrivalLaw, beta: f64, a: f64, opts: &ConstructOptions) -> Result<Construction> {
    realize(law, d, beta, plan_alpha_gt1(d, law, beta, a, opts)?)
}

/// h = h_c_ann + aβ^{2α/(2α−1)(1+ε)}, k = ⌈1/F(0,Δ)⌉, λ_j = 1/√j.
pub fn construct_alpha_half_one(
    d: DisorderKind,
    law: &InterArrivalLaw,
    beta: f64,
    a: f64,
    epsilon: f64,
    opts: &ConstructOptions,
) -> Result<Construction> {
    realize(law, d, beta, plan_alpha_half_one(d, law, beta, a, epsilon, opts)?)
}

/// h = h_c_ann + a exp(−β^{−1/(η−1/2−ε)}), γ = 1 − 1/log k, λ_j = (j log j)^{−1/2}.
#[allow(clippy::too_many_arguments)]
pub fn construct_alpha_half(
    d: DisorderKind,
    law: &InterArrivalLaw,
    beta: f64,
    a: f64,
    epsilon: f64,
    eta: f64,
    opts: &ConstructOptions,
) -> Result<Construction> {
    realize(law, d, beta, plan_alpha_half(d, law, beta, a, epsilon, eta, opts)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSplits {
    /// Far-boundary block j < k − R₁.
    pub r1: usize,
    /// Block j < k/R₂.
    pub r2: f64,
    /// Block j ≤ k^{1−ε²}.
    pub epsilon: f64,
}

impl Default for ProfileSplits {
    fn default() -> Self {
        ProfileSplits { r1: 10, r2: 10.0, epsilon: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSum {
    pub label: String,
    /// First j of the upper block.
    pub at: usize,
    pub below: f64,
    pub above: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RhoProfile {
    pub result: CertificateResult,
    pub splits: Vec<SplitSum>,
}

pub fn rho_profile(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h: f64,
    params: &CertificateParams,
    splits: ProfileSplits,
) -> Result<RhoProfile> {
    let result = rho_upper(law, d, beta, h, params)?;
    let k = params.k;
    let split = |label: &str, at: usize| {
        let at = at.min(k);
        SplitSum {
            label: label.to_string(),
            at,
            below: result.per_j[..at].iter().sum(),
            above: result.per_j[at..].iter().sum(),
        }
    };
    let kf = k as f64;
    let splits = vec![
        split("k-R1", k.saturating_sub(splits.r1)),
        split("k^(1-eps^2)", (kf.powf(1.0 - splits.epsilon * splits.epsilon).floor() as usize) + 1),
        split("k/R2", (kf / splits.r2).floor() as usize),
    ];
    Ok(RhoProfile { result, splits })
}

/// Persisted certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub law: LawConfig,
    pub disorder: DisorderKind,
    pub beta: f64,
    pub h: f64,
    pub k: usize,
    pub gamma: f64,
    pub backend: String,
    pub bounds_digest: String,
    pub rho_upper: f64,
    pub status: CertificateStatus,
    pub confidence: Confidence,
    pub seed: Option<u64>,
}

/// sha256 over the bit patterns of the bound values.
pub fn bounds_digest(bounds: &[ABound]) -> String {
    let mut h = Sha256::new();
    for b in bounds {
        h.update(b.value.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl CertificateRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        law: &InterArrivalLaw,
        d: DisorderKind,
        beta: f64,
        h: f64,
        params: &CertificateParams,
        backend: Backend,
        result: &CertificateResult,
    ) -> Self {
        CertificateRecord {
            law: law.config().clone(),
            disorder: d,
            beta,
            h,
            k: params.k,
            gamma: params.gamma,
            backend: backend.label().to_string(),
            bounds_digest: bounds_digest(&params.a_bounds),
            rho_upper: result.rho_upper,
            status: result.status,
            confidence: result.confidence,
            seed: match backend {
                Backend::Mc { seed, .. } => Some(seed),
                _ => None,
            },
        }
    }
}
