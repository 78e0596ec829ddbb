//! Drivers: certified critical-shift lower bounds over a β grid, exponent
//! fits, and quenched/annealed free-energy profiles.

use crate::certificate::{
    SMALL_K_MSG,
    plan_alpha_gt1, plan_alpha_half, plan_alpha_half_one, realize, rho_profile, rho_upper, Confidence,
    ConstructOptions, Construction, Plan, ProfileSplits, SplitSum,
};
use crate::disorder::DisorderKind;
use crate::homogeneous::pure_free_energy;
use crate::kernels::InterArrivalLaw;
use crate::quenched::{annealed_free_energy_finite, free_energy_mc};
use crate::stats::{linear_fit, MomentEstimate};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum AlphaCase {
    /// α > 1: Δ = aβ².
    GtOne,
    /// α ∈ (1/2, 1): Δ = aβ^{2α/(2α−1)(1+ε)}.
    HalfToOne { epsilon: f64 },
    /// α = 1/2, L = log^{−η}: Δ = a exp(−β^{−1/(η−1/2−ε)}).
    Half { epsilon: f64, eta: f64 },
}

impl AlphaCase {
    pub fn plan(&self, d: DisorderKind, law: &InterArrivalLaw, beta: f64, a: f64, opts: &ConstructOptions) -> Result<Plan> {
        match *self {
            AlphaCase::GtOne => plan_alpha_gt1(d, law, beta, a, opts),
            AlphaCase::HalfToOne { epsilon } => plan_alpha_half_one(d, law, beta, a, epsilon, opts),
            AlphaCase::Half { epsilon, eta } => plan_alpha_half(d, law, beta, a, epsilon, eta, opts),
        }
    }

    /// Exponent predicted for the fit.
    pub fn target_slope(&self, alpha: f64) -> f64 {
        match *self {
            AlphaCase::GtOne => 2.0,
            AlphaCase::HalfToOne { epsilon } => crate::certificate::shift_exponent_half_one(alpha, epsilon),
            AlphaCase::Half { epsilon, eta } => 1.0 / (eta - 0.5 - epsilon),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanBudget {
    pub k_cap: usize,
    /// Largest a tried; the search halves down from here.
    pub a_max: f64,
    pub max_halvings: usize,
    /// Log-scale bisection steps between the first firing a and the one above it.
    pub bisection_iters: usize,
    pub beta0: f64,
}

impl Default for ScanBudget {
    fn default() -> Self {
        ScanBudget { k_cap: crate::certificate::DEFAULT_K_CAP, a_max: 1.0, max_halvings: 40, bisection_iters: 8, beta0: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftScanRecord {
    pub beta: f64,
    pub h_c_ann: f64,
    #[serde(rename = "Delta_certified")]
    pub delta_certified: f64,
    /// The a whose construction fired (None if none did).
    pub a: Option<f64>,
    pub k: Option<usize>,
    pub gamma: Option<f64>,
    pub backend: String,
    pub confidence: Confidence,
    pub rho_upper: Option<f64>,
    /// Smallest k the next a would have needed when the cap stopped the search.
    pub required_k: Option<f64>,
    pub diagnostic: Option<String>,
    pub profile: Option<Vec<SplitSum>>,
    /// Wall time; not serialized so that records stay reproducible.
    #[serde(skip)]
    pub runtime_secs: f64,
}

enum Attempt {
    Fired(Construction, f64),
    Missed(Construction, f64),
    Capped(f64, String),
    /// a so large that the plan is degenerate; smaller a may still work.
    Coarse,
}

fn attempt(case: &AlphaCase, d: DisorderKind, law: &InterArrivalLaw, beta: f64, a: f64, opts: &ConstructOptions) -> Result<Attempt> {
    let plan = match case.plan(d, law, beta, a, opts) {
        Ok(p) => p,
        Err(Error::ResourceCap { required, what, .. }) => return Ok(Attempt::Capped(required, what)),
        Err(Error::Precondition(m)) if m.starts_with(SMALL_K_MSG) => return Ok(Attempt::Coarse),
        Err(e) => return Err(e),
    };
    let c = realize(law, d, beta, plan)?;
    let r = rho_upper(law, d, beta, c.h, &c.params)?;
    Ok(if r.certified() { Attempt::Fired(c, r.rho_upper) } else { Attempt::Missed(c, r.rho_upper) })
}

/// Largest firing a per β, by halving from a_max then bisecting in log a.
pub fn shift_scan(
    case: AlphaCase,
    d: DisorderKind,
    law: &InterArrivalLaw,
    beta_grid: &[f64],
    budget: &ScanBudget,
) -> Result<Vec<ShiftScanRecord>> {
    if let Some(&b) = beta_grid.iter().find(|&&b| !(b > 0.0 && b <= budget.beta0)) {
        return Err(Error::Domain(format!("beta grid must lie in (0, beta0 = {}], got {b}", budget.beta0)));
    }
    beta_grid.par_iter().map(|&beta| scan_one(case, d, law, beta, budget)).collect()
}

fn scan_one(case: AlphaCase, d: DisorderKind, law: &InterArrivalLaw, beta: f64, budget: &ScanBudget) -> Result<ShiftScanRecord> {
    let start = Instant::now();
    let opts = ConstructOptions { beta0: budget.beta0, k_cap: budget.k_cap };
    let mut record = ShiftScanRecord {
        beta,
        h_c_ann: d.h_c_ann(beta),
        delta_certified: 0.0,
        a: None,
        k: None,
        gamma: None,
        backend: "holder".into(),
        confidence: Confidence::Exact,
        rho_upper: None,
        required_k: None,
        diagnostic: None,
        profile: None,
        runtime_secs: 0.0,
    };
    let mut a = budget.a_max;
    let mut above: Option<f64> = None;
    let mut last_miss: Option<(Construction, f64)> = None;
    let mut found = None;
    for _ in 0..=budget.max_halvings {
        match attempt(&case, d, law, beta, a, &opts)? {
            Attempt::Fired(c, rho) => {
                found = Some((a, c, rho));
                break;
            }
            Attempt::Missed(c, rho) => {
                last_miss = Some((c, rho));
                above = Some(a);
                a *= 0.5;
            }
            Attempt::Coarse => {
                above = Some(a);
                a *= 0.5;
            }
            Attempt::Capped(required, what) => {
                record.required_k = Some(required);
                record.diagnostic = Some(format!(
                    "infeasible within k cap {}: a = {a:e} needs k = {required:.4e} ({what})",
                    budget.k_cap
                ));
                break;
            }
        }
    }
    let Some((mut lo, mut best, mut best_rho)) = found else {
        if let Some((c, rho)) = last_miss {
            let splits = ProfileSplits { epsilon: case_epsilon(&case), ..Default::default() };
            record.profile = Some(rho_profile(law, d, beta, c.h, &c.params, splits)?.splits);
            record.rho_upper = Some(rho);
            record.k = Some(c.params.k);
            record.gamma = Some(c.params.gamma);
            if record.diagnostic.is_none() {
                record.diagnostic = Some(format!("no firing a down to {:e}", last_a(budget)));
            }
        }
        record.runtime_secs = start.elapsed().as_secs_f64();
        return Ok(record);
    };
    if let Some(mut hi) = above {
        for _ in 0..budget.bisection_iters {
            let mid = (lo * hi).sqrt();
            match attempt(&case, d, law, beta, mid, &opts)? {
                Attempt::Fired(c, rho) => {
                    lo = mid;
                    best = c;
                    best_rho = rho;
                }
                _ => hi = mid,
            }
        }
    }
    record.delta_certified = best.shift.delta;
    record.a = Some(lo);
    record.k = Some(best.params.k);
    record.gamma = Some(best.params.gamma);
    record.rho_upper = Some(best_rho);
    record.runtime_secs = start.elapsed().as_secs_f64();
    Ok(record)
}

fn case_epsilon(case: &AlphaCase) -> f64 {
    match *case {
        AlphaCase::GtOne => 0.1,
        AlphaCase::HalfToOne { epsilon } | AlphaCase::Half { epsilon, .. } => epsilon,
    }
}

fn last_a(budget: &ScanBudget) -> f64 {
    budget.a_max * 0.5f64.powi(budget.max_halvings as i32)
}

/// Recomputes ρ̄ for a record's stored β and a.
pub fn replay_record(case: AlphaCase, d: DisorderKind, law: &InterArrivalLaw, record: &ShiftScanRecord, budget: &ScanBudget) -> Result<f64> {
    let a = record.a.ok_or_else(|| Error::Domain("record has no firing a to replay".into()))?;
    let opts = ConstructOptions { beta0: budget.beta0, k_cap: budget.k_cap };
    let c = realize(law, d, record.beta, case.plan(d, law, record.beta, a, &opts)?)?;
    Ok(rho_upper(law, d, record.beta, c.h, &c.params)?.rho_upper)
}

pub fn write_scan_csv<W: Write>(w: W, records: &[ShiftScanRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["beta", "h_c_ann", "Delta_certified", "k", "gamma", "backend", "confidence"])?;
    for r in records {
        let conf = match r.confidence {
            Confidence::Exact => "exact".to_string(),
            Confidence::Statistical { level } => format!("statistical({level})"),
        };
        out.write_record([
            format!("{}", r.beta),
            format!("{:e}", r.h_c_ann),
            format!("{:e}", r.delta_certified),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.gamma.map(|g| g.to_string()).unwrap_or_default(),
            r.backend.clone(),
            conf,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// "log β  log Δ" rows for certified records.
pub fn write_scan_dat<W: Write>(mut w: W, records: &[ShiftScanRecord]) -> Result<()> {
    writeln!(w, "# log_beta log_Delta_certified")?;
    for r in records.iter().filter(|r| r.delta_certified > 0.0) {
        writeln!(w, "{:.12e} {:.12e}", r.beta.ln(), r.delta_certified.ln())?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Two-sided 95% t interval half-width.
    pub half_width: f64,
    pub target: f64,
    pub records_used: usize,
}

pub const DEFAULT_MIN_RECORDS: usize = 4;

/// Slope of log Δ against log β; for α = 1/2, of log log(1/Δ) against log(1/β).
pub fn exponent_fit(records: &[ShiftScanRecord], case: AlphaCase, alpha: f64, min_records: usize) -> Result<ExponentFit> {
    let used: Vec<&ShiftScanRecord> = records.iter().filter(|r| r.delta_certified > 0.0).collect();
    if used.len() < min_records.max(2) {
        return Err(Error::Domain(format!(
            "exponent fit needs at least {} certified records, have {}",
            min_records.max(2),
            used.len()
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = match case {
        AlphaCase::Half { .. } => {
            if used.iter().any(|r| r.delta_certified >= 1.0) {
                return Err(Error::Domain("log log(1/Delta) needs Delta < 1".into()));
            }
            used.iter().map(|r| ((1.0 / r.beta).ln(), (1.0 / r.delta_certified).ln().ln())).unzip()
        }
        _ => used.iter().map(|r| (r.beta.ln(), r.delta_certified.ln())).unzip(),
    };
    let fit = linear_fit(&x, &y).ok_or_else(|| Error::Domain("degenerate beta grid".into()))?;
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        slope_stderr: fit.slope_stderr,
        half_width: fit.slope_half_width(0.95),
        target: case.target_slope(alpha),
        records_used: used.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeRow {
    pub h: f64,
    pub quenched: MomentEstimate,
    /// (1/N) log Z_N(h + log M(β)).
    pub annealed_finite: f64,
    /// F(0, h + log M(β)).
    pub annealed_exact: f64,
    /// annealed_finite − quenched.point.
    pub gap: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn fe_profile(
    law: &InterArrivalLaw,
    d: DisorderKind,
    beta: f64,
    h_grid: &[f64],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<FeRow>> {
    h_grid
        .iter()
        .map(|&h| {
            let quenched = free_energy_mc(law, d, beta, h, n, replicas, seed)?;
            let annealed_finite = annealed_free_energy_finite(law, d, beta, h, n);
            let annealed_exact = pure_free_energy(law, h + d.log_mgf(beta))?.f;
            Ok(FeRow { h, quenched, annealed_finite, annealed_exact, gap: annealed_finite - quenched.point })
        })
        .collect()
}

pub fn write_fe_csv<W: Write>(w: W, rows: &[FeRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["h", "quenched", "stderr", "annealed_finite", "annealed_exact", "gap"])?;
    for r in rows {
        out.write_record([
            format!("{}", r.h),
            format!("{:e}", r.quenched.point),
            format!("{:e}", r.quenched.stderr),
            format!("{:e}", r.annealed_finite),
            format!("{:e}", r.annealed_exact),
            format!("{:e}", r.gap),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{build_law, SlowlyVarying};

    fn synthetic(betas: &[f64], f: impl Fn(f64) -> f64) -> Vec<ShiftScanRecord> {
        betas
            .iter()
            .map(|&beta| ShiftScanRecord {
                beta,
                h_c_ann: -0.5 * beta * beta,
                delta_certified: f(beta),
                a: Some(1.0),
                k: Some(1),
                gamma: Some(0.9),
                backend: "holder".into(),
                confidence: Confidence::Exact,
                rho_upper: Some(0.5),
                required_k: None,
                diagnostic: None,
                profile: None,
                runtime_secs: 0.0,
            })
            .collect()
    }

    #[test]
    fn fitter_self_test() {
        let r = synthetic(&[0.4, 0.6, 0.8, 1.0], |b| b * b);
        let f = exponent_fit(&r, AlphaCase::GtOne, 1.5, 4).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert_eq!(f.target, 2.0);
        let r = synthetic(&[0.4, 0.6, 0.8, 1.0], |b| 0.1 * (-1.0 / b).exp());
        let f = exponent_fit(&r, AlphaCase::Half { epsilon: 0.5, eta: 2.0 }, 0.5, 4).unwrap();
        assert_eq!(f.target, 1.0);
        // log log(1/Δ) = log(1/β − log 0.1) is not exactly linear; it approaches slope 1 for small β.
        assert!(f.slope > 0.0 && f.slope < 1.0);
        assert!(exponent_fit(&r[..3], AlphaCase::GtOne, 1.5, 4).is_err());
        let same = synthetic(&[0.5, 0.5, 0.5, 0.5], |b| b);
        assert!(exponent_fit(&same, AlphaCase::GtOne, 1.5, 4).is_err());
    }

    #[test]
    fn scan_alpha_gt1_small_grid() {
        let l = build_law(1.5, SlowlyVarying::CONSTANT, 10_000, 1e-8).unwrap();
        let d = DisorderKind::Gaussian;
        let budget = ScanBudget { bisection_iters: 3, ..Default::default() };
        let recs = shift_scan(AlphaCase::GtOne, d, &l, &[0.6, 1.0], &budget).unwrap();
        for r in &recs {
            assert!(r.delta_certified > 0.0, "{r:?}");
            assert!(r.delta_certified <= -r.h_c_ann);
            assert_eq!(replay_record(AlphaCase::GtOne, d, &l, r, &budget).unwrap().to_bits(), r.rho_upper.unwrap().to_bits());
        }
        let tight = ScanBudget { k_cap: 50, ..budget };
        let capped = shift_scan(AlphaCase::GtOne, d, &l, &[0.6], &tight).unwrap();
        assert!(capped[0].delta_certified <= recs[0].delta_certified);
        assert!(capped[0].required_k.is_some());
        let mut csv = Vec::new();
        write_scan_csv(&mut csv, &recs).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 3);
        let json = serde_json::to_string(&recs[0]).unwrap();
        assert!(!json.contains("runtime"));
    }

    #[test]
    fn fe_profile_jensen_and_crossing() {
        let l = build_law(1.5, SlowlyVarying::CONSTANT, 2000, 1e-8).unwrap();
        let d = DisorderKind::Gaussian;
        let hs: Vec<f64> = (0..9).map(|i| -0.9 + 0.1 * i as f64).collect();
        let rows = fe_profile(&l, d, 1.0, &hs, 1000, 16, 5).unwrap();
        for r in &rows {
            assert!(r.gap >= -3.0 * r.quenched.stderr);
        }
        // F(0, h + β²/2) vanishes exactly for h ≤ −1/2.
        for r in &rows {
            assert_eq!(r.annealed_exact == 0.0, r.h <= -0.5 + 1e-12, "{}", r.h);
        }
    }
}
