//! The pure (β = 0) model: partition functions, free energy via the
//! implicit Laplace equation, correlation length and appendix estimates.

use crate::dp::{pure_log_partition, ReversedKernel};
use crate::kernels::{InterArrivalLaw, SlowlyVarying};
use crate::renewal::laplace_defect;
use crate::{Bracket, Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const DEFAULT_REL_TOL: f64 = 1e-7;

/// log Z_0(h)..log Z_N(h).
pub fn pure_partition(law: &InterArrivalLaw, h: f64, n: usize) -> Vec<f64> {
    let kernel = ReversedKernel::new(law, n);
    pure_log_partition(&kernel, h, n)
}

pub fn write_log_partition_csv<W: Write>(w: W, log_z: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "log_z"])?;
    for (n, v) in log_z.iter().enumerate() {
        out.write_record([n.to_string(), format!("{v:e}")])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureSolution {
    pub h: f64,
    #[serde(rename = "F")]
    pub f: f64,
    /// Interval certain to contain the root.
    pub bracket: Bracket,
    /// Bound on |Σ K(n) e^{−Fn} − e^{−h}| at the returned F.
    pub residual: f64,
}

#[derive(PartialEq)]
enum Side {
    Below,
    Above,
    Ambiguous,
}

/// F(0,h): zero for h ≤ 0, otherwise the root of Σ K(n)e^{−Fn} = e^{−h}.
pub fn pure_free_energy(law: &InterArrivalLaw, h: f64) -> Result<PureSolution> {
    pure_free_energy_tol(law, h, DEFAULT_REL_TOL)
}

pub fn pure_free_energy_tol(law: &InterArrivalLaw, h: f64, rel_tol: f64) -> Result<PureSolution> {
    if h <= 0.0 {
        return Ok(PureSolution { h, f: 0.0, bracket: Bracket::point(0.0), residual: 0.0 });
    }
    // Equivalent form G(F) := Σ K(n)(1 − e^{−Fn}) = 1 − e^{−h}, free of cancellation.
    let target = -(-h).exp_m1();
    let side = |f: f64| -> Result<Side> {
        let g = laplace_defect(law, f)?;
        Ok(if g.hi < target {
            Side::Below
        } else if g.lo > target {
            Side::Above
        } else {
            Side::Ambiguous
        })
    };
    // G(F) ≥ 1 − e^{−F}, so the root lies in (0, h]. Halve down to a point below it.
    let mut hi = h;
    let mut lo = h;
    let mut ambiguous = None;
    for _ in 0..2000 {
        lo *= 0.5;
        match side(lo)? {
            Side::Below => break,
            Side::Above => hi = lo,
            Side::Ambiguous => {
                ambiguous = Some(lo);
                break;
            }
        }
        if lo < 1e-300 {
            return Err(Error::Invariant(format!("no sign change found for h = {h}")));
        }
    }
    let (mut lo, mut hi) = match ambiguous {
        None => (lo, hi),
        Some(m) => {
            let down = refine(&side, 0.5 * m, m, true)?;
            let up = refine(&side, m, hi, false)?;
            (down, up)
        }
    };
    for _ in 0..200 {
        if hi - lo <= rel_tol * 0.25 * (lo + hi) {
            break;
        }
        let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        match side(mid)? {
            Side::Below => lo = mid,
            Side::Above => hi = mid,
            Side::Ambiguous => {
                let a = refine(&side, lo, mid, true)?;
                let b = refine(&side, mid, hi, false)?;
                lo = a;
                hi = b;
                break;
            }
        }
    }
    let f = 0.5 * (lo + hi);
    if hi - lo > rel_tol * f {
        return Err(Error::Tolerance { achieved: (hi - lo) / f, requested: rel_tol });
    }
    let g = laplace_defect(law, f)?;
    let residual = (target - g.lo).abs().max((target - g.hi).abs());
    Ok(PureSolution { h, f, bracket: Bracket::new(lo, hi), residual })
}

/// Pushes one end of an ambiguous region: with `lower`, the largest point
/// still certified Below in [a, b]; otherwise the smallest point certified Above.
fn refine(side: &impl Fn(f64) -> Result<Side>, mut a: f64, mut b: f64, lower: bool) -> Result<f64> {
    for _ in 0..100 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let s = side(mid)?;
        let certified = if lower { s == Side::Below } else { s == Side::Above };
        if lower == certified {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(if lower { a } else { b })
}

/// (log Z_N − log Z_{N/2})/(N/2) against F; returns (slope, F, relative error).
pub fn dp_slope_check(law: &InterArrivalLaw, h: f64, n: usize) -> Result<(f64, f64, f64)> {
    let sol = pure_free_energy(law, h)?;
    let lz = pure_partition(law, h, n);
    let half = n / 2;
    let slope = (lz[n] - lz[n - half]) / half as f64;
    Ok((slope, sol.f, (slope / sol.f - 1.0).abs()))
}

/// k = 1/F(0,Δ); infinite when Δ ≤ 0 (F vanishes there).
pub fn correlation_length(law: &InterArrivalLaw, delta: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(1.0 / pure_free_energy(law, delta)?.f)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PinnedBound {
    /// max_{j ≤ J} Z_j(h) j^{1−α} L(j), the empirical C₄.
    pub max: f64,
    pub argmax: usize,
    /// J = min(⌊1/F(0,h)⌋, horizon).
    pub j_limit: usize,
}

pub fn pinned_partition_bound_check(law: &InterArrivalLaw, h: f64, horizon: usize) -> Result<PinnedBound> {
    let alpha = law.alpha();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("needs alpha in (0,1), got {alpha}")));
    }
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::Domain(format!("needs 0 < h < 1, got {h}")));
    }
    let f = pure_free_energy(law, h)?.f;
    let j_limit = ((1.0 / f).floor() as usize).clamp(1, horizon);
    let lz = pure_partition(law, h, j_limit);
    let (mut max, mut argmax) = (0.0, 0);
    for (j, &l) in lz.iter().enumerate().skip(1) {
        let x = j as f64;
        let v = l.exp() * x.powf(1.0 - alpha) * law.l_kernel(x);
        if v > max {
            max = v;
            argmax = j;
        }
    }
    Ok(PinnedBound { max, argmax, j_limit })
}

/// Divergent sequence r(N) for the negative-drift estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RSpec {
    Log,
    Power { p: f64 },
    Constant { c: f64 },
}

impl RSpec {
    fn eval(&self, n: f64) -> f64 {
        match *self {
            RSpec::Log => n.ln(),
            RSpec::Power { p } => n.powf(p),
            RSpec::Constant { c } => c,
        }
    }
}

/// Z_N(−N^{−α}L(N)r(N)) · L(N) r(N)² N^{1−α}.
pub fn negative_drift_asymptotic_ratio(law: &InterArrivalLaw, n: usize, r: RSpec) -> Result<f64> {
    let alpha = law.alpha();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("needs alpha in (0,1), got {alpha}")));
    }
    match r {
        RSpec::Constant { .. } => {
            return Err(Error::Precondition("r(N) must diverge; a constant sequence does not".into()))
        }
        RSpec::Power { p } if p <= 0.0 => {
            return Err(Error::Precondition(format!("r(N) = N^{p} does not diverge")))
        }
        _ => {}
    }
    let x = n as f64;
    let rn = r.eval(x);
    let l = law.l_kernel(x);
    let condr = rn * l / x.powf(alpha);
    if condr > 0.1 {
        return Err(Error::Precondition(format!(
            "r(N)L(N)/N^alpha = {condr:.3} at N = {n} is not small"
        )));
    }
    let h = -x.powf(-alpha) * l * rn;
    let lz = pure_partition(law, h, n);
    Ok(lz[n].exp() * l * rn * rn * x.powf(1.0 - alpha))
}

/// Tabulated inverse R_α of b ↦ b^α L(1/b).
#[derive(Clone, Debug, Serialize)]
pub struct RAlphaTable {
    /// (y, b) pairs sorted by increasing y.
    pub points: Vec<(f64, f64)>,
}

impl RAlphaTable {
    /// Log-log interpolation inside the table.
    pub fn eval(&self, y: f64) -> Option<f64> {
        let i = self.points.partition_point(|p| p.0 < y);
        if i < self.points.len() && self.points[i].0 == y {
            return Some(self.points[i].1);
        }
        if i == 0 || i == self.points.len() {
            return None;
        }
        let (y0, b0) = self.points[i - 1];
        let (y1, b1) = self.points[i];
        let t = (y.ln() - y0.ln()) / (y1.ln() - y0.ln());
        Some((b0.ln() + t * (b1.ln() - b0.ln())).exp())
    }
}

pub fn r_alpha_inverse(alpha: f64, l: SlowlyVarying, b_grid: &[f64]) -> Result<RAlphaTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("needs alpha in (0,1), got {alpha}")));
    }
    let mut grid: Vec<f64> = b_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(grid.len());
    for &b in &grid {
        if !(b > 0.0) {
            return Err(Error::Domain(format!("grid points must be positive, got {b}")));
        }
        let y = b.powf(alpha) * l.eval(1.0 / b);
        if let Some(&(py, pb)) = points.last() {
            if y <= py {
                return Err(Error::Precondition(format!(
                    "b -> b^alpha L(1/b) is not increasing between b = {pb} and b = {b}"
                )));
            }
        }
        points.push((y, b));
    }
    Ok(RAlphaTable { points })
}
