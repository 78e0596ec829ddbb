//! Slowly varying functions and heavy-tailed inter-arrival laws
//! K(n) = c_K L(n) n^{-(1+α)} with certified normalization.

use crate::tails::{self, Neumaier};
use crate::{Bracket, Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

pub const DEFAULT_CUTOFF: u64 = 1_000_000;
const CACHE_MAGIC: &[u8; 8] = b"PINLABK1";
/// Relative rounding slack on long compensated sums.
const SUM_SLACK: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LKind {
    Constant,
    LogPower,
}

/// L(x) ≡ 1 or L(x) = (log(1+x))^b.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowlyVarying {
    pub kind: LKind,
    pub b: f64,
}

impl SlowlyVarying {
    pub const CONSTANT: SlowlyVarying = SlowlyVarying { kind: LKind::Constant, b: 0.0 };

    pub fn log_power(b: f64) -> Self {
        SlowlyVarying { kind: LKind::LogPower, b }
    }

    /// Exponent of log(1+x); zero for the constant family.
    pub fn exponent(&self) -> f64 {
        match self.kind {
            LKind::Constant => 0.0,
            LKind::LogPower => self.b,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            LKind::Constant => 1.0,
            LKind::LogPower => x.ln_1p().powf(self.b),
        }
    }

    pub fn ln_eval(&self, x: f64) -> f64 {
        match self.kind {
            LKind::Constant => 0.0,
            LKind::LogPower => self.b * x.ln_1p().ln(),
        }
    }
}

fn default_cutoff() -> u64 {
    DEFAULT_CUTOFF
}

/// Serializable law specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawConfig {
    pub alpha: f64,
    pub l_kind: LKind,
    #[serde(default)]
    pub b: f64,
    pub n_max: usize,
    pub tol: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: u64,
}

impl LawConfig {
    pub fn new(alpha: f64, l: SlowlyVarying, n_max: usize, tol: f64) -> Self {
        LawConfig { alpha, l_kind: l.kind, b: l.exponent(), n_max, tol, cutoff: DEFAULT_CUTOFF }
    }

    pub fn slowly_varying(&self) -> SlowlyVarying {
        match self.l_kind {
            LKind::Constant => SlowlyVarying::CONSTANT,
            LKind::LogPower => SlowlyVarying::log_power(self.b),
        }
    }

    /// Hex SHA-256 of the canonical JSON form (field order is fixed by the struct).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("law config serializes");
        hex::encode(Sha256::digest(&canon))
    }
}

/// A recurrent inter-arrival law with its cached table.
#[derive(Clone, Debug)]
pub struct InterArrivalLaw {
    config: LawConfig,
    l: SlowlyVarying,
    c_k: f64,
    c_k_bracket: Bracket,
    norm_bracket: Bracket,
    /// K(n) at index n; index 0 holds 0.
    table: Vec<f64>,
    /// Cumulative Σ_{m ≤ n} K(m) at index n.
    cdf: Vec<f64>,
}

pub fn build_law(alpha: f64, l: SlowlyVarying, n_max: usize, tol: f64) -> Result<InterArrivalLaw> {
    InterArrivalLaw::from_config(&LawConfig::new(alpha, l, n_max, tol))
}

impl InterArrivalLaw {
    pub fn from_config(cfg: &LawConfig) -> Result<Self> {
        if !(cfg.alpha > 0.0 && cfg.alpha.is_finite()) {
            return Err(Error::Domain(format!("alpha must be positive, got {}", cfg.alpha)));
        }
        if cfg.n_max < 1000 {
            return Err(Error::Domain(format!("n_max must be at least 1000, got {}", cfg.n_max)));
        }
        if !(cfg.tol > 0.0) {
            return Err(Error::Domain(format!("tol must be positive, got {}", cfg.tol)));
        }
        if (cfg.cutoff as usize) < cfg.n_max {
            return Err(Error::Domain(format!(
                "cutoff {} below n_max {}",
                cfg.cutoff, cfg.n_max
            )));
        }
        let l = cfg.slowly_varying();
        let p = 1.0 + cfg.alpha;
        let mut raw = vec![0.0; cfg.n_max + 1];
        let mut partial = Neumaier::default();
        // Smallest terms first.
        for n in (1..=cfg.cutoff).rev() {
            let x = n as f64;
            let v = l.eval(x) * x.powf(-p);
            if (n as usize) <= cfg.n_max {
                raw[n as usize] = v;
            }
            partial.add(v);
        }
        let tail = tails::sum_beyond(l.exponent(), p, cfg.cutoff).ok_or_else(|| {
            Error::Precondition(format!(
                "summand not monotone beyond cutoff {} (b = {}, alpha = {})",
                cfg.cutoff, cfg.b, cfg.alpha
            ))
        })?;
        let s = Bracket::point(partial.value()).widen(SUM_SLACK) + tail;
        let c_k = 1.0 / s.mid();
        let c_k_bracket = Bracket::new(1.0 / s.hi, 1.0 / s.lo);
        let norm_bracket = Bracket::new(c_k * s.lo, c_k * s.hi).widen(1e-15);
        if norm_bracket.width() > cfg.tol {
            return Err(Error::Tolerance { achieved: norm_bracket.width(), requested: cfg.tol });
        }
        let table: Vec<f64> = raw.iter().map(|v| c_k * v).collect();
        let mut cdf = vec![0.0; cfg.n_max + 1];
        let mut acc = Neumaier::default();
        for n in 1..=cfg.n_max {
            acc.add(table[n]);
            cdf[n] = acc.value();
        }
        Ok(InterArrivalLaw { config: cfg.clone(), l, c_k, c_k_bracket, norm_bracket, table, cdf })
    }

    pub fn config(&self) -> &LawConfig {
        &self.config
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn slowly_varying(&self) -> SlowlyVarying {
        self.l
    }

    pub fn c_k(&self) -> f64 {
        self.c_k
    }

    /// Interval certain to contain the exact normalising amplitude.
    pub fn c_k_bracket(&self) -> Bracket {
        self.c_k_bracket
    }

    pub fn norm_bracket(&self) -> Bracket {
        self.norm_bracket
    }

    pub fn n_max(&self) -> usize {
        self.config.n_max
    }

    pub fn cutoff(&self) -> u64 {
        self.config.cutoff
    }

    /// K(1..=n_max), index 0 is zero.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub(crate) fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// The slowly varying part of K in the form K(n) = L_K(n)/n^{1+α},
    /// i.e. c_K L(n).
    pub fn l_kernel(&self, x: f64) -> f64 {
        self.c_k * self.l.eval(x)
    }

    pub fn k_at(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("K(n) is defined for n >= 1".into()));
        }
        Ok(self.k(n))
    }

    pub fn log_k_at(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::Domain("K(n) is defined for n >= 1".into()));
        }
        Ok(self.log_k(n))
    }

    pub(crate) fn k(&self, n: u64) -> f64 {
        if (n as usize) <= self.config.n_max {
            self.table[n as usize]
        } else {
            self.log_k(n).exp()
        }
    }

    pub(crate) fn log_k(&self, n: u64) -> f64 {
        if (n as usize) <= self.config.n_max {
            self.table[n as usize].ln()
        } else {
            let x = n as f64;
            self.c_k.ln() + self.l.ln_eval(x) - (1.0 + self.config.alpha) * x.ln()
        }
    }

    /// Ratio bracket [c_lo/c_K, c_hi/c_K] of the true amplitude to the stored one.
    pub(crate) fn amplitude_slack(&self) -> Bracket {
        Bracket::new(self.c_k_bracket.lo / self.c_k, self.c_k_bracket.hi / self.c_k)
    }

    /// Bracket of Σ_{n≥m} K(n)^γ.
    pub fn tail_sum_gamma(&self, m: u64, gamma: f64) -> Result<Bracket> {
        if m == 0 {
            return Err(Error::Domain("tail index m must be >= 1".into()));
        }
        GammaTails::new(self, gamma, m as usize)?.get(m as usize)
    }

    pub fn write_table_cache(&self, dir: &Path) -> Result<PathBuf> {
        let key = &self.config.hash()[..16];
        let path = dir.join(format!("ktable-{key}.bin"));
        let header = serde_json::to_vec(&CacheHeader {
            config: self.config.clone(),
            c_k: self.c_k,
            norm_bracket: self.norm_bracket,
            len: self.table.len() - 1,
        })?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        f.write_all(CACHE_MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        for v in &self.table[1..] {
            f.write_all(&v.to_bits().to_le_bytes())?;
        }
        f.flush()?;
        Ok(path)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    config: LawConfig,
    c_k: f64,
    norm_bracket: Bracket,
    len: usize,
}

/// Reads a table written by [`InterArrivalLaw::write_table_cache`]; returns
/// the config, c_K and K(1..=n_max).
pub fn read_table_cache(path: &Path) -> Result<(LawConfig, f64, Vec<f64>)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Serialization("not a K-table cache file".into()));
    }
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
    f.read_exact(&mut header)?;
    let header: CacheHeader = serde_json::from_slice(&header)?;
    let mut values = Vec::with_capacity(header.len);
    let mut buf = [0u8; 8];
    for _ in 0..header.len {
        f.read_exact(&mut buf)?;
        values.push(f64::from_bits(u64::from_le_bytes(buf)));
    }
    Ok((header.config, header.c_k, values))
}

/// Suffix sums Σ_{n≥m} K(n)^γ for m ≤ m_max, with a certified remainder.
#[derive(Clone, Debug)]
pub struct GammaTails {
    gamma: f64,
    /// suffix[m] = Σ_{m ≤ n ≤ cut} K(n)^γ using the stored amplitude.
    suffix: Vec<f64>,
    cut: u64,
    /// Σ_{n > cut} K(n)^γ, over the full amplitude bracket.
    beyond: Bracket,
    slack: Bracket,
}

impl GammaTails {
    pub fn new(law: &InterArrivalLaw, gamma: f64, m_max: usize) -> Result<Self> {
        let alpha = law.alpha();
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        let p = (1.0 + alpha) * gamma;
        if p <= 1.0 {
            return Err(Error::Divergence(format!(
                "(1+alpha)*gamma = {p} <= 1: sum of K(n)^gamma diverges"
            )));
        }
        let cut = law.cutoff().max(m_max as u64);
        let mut suffix = vec![0.0; m_max + 1];
        let mut acc = Neumaier::default();
        let n_max = law.n_max() as u64;
        let (ln_c, l) = (law.c_k().ln(), law.slowly_varying());
        for n in (1..=cut).rev() {
            let v = if n <= n_max {
                law.table[n as usize].powf(gamma)
            } else {
                let x = n as f64;
                (gamma * (ln_c + l.ln_eval(x)) - p * x.ln()).exp()
            };
            acc.add(v);
            if (n as usize) <= m_max {
                suffix[n as usize] = acc.value();
            }
        }
        let b = gamma * l.exponent();
        let far = tails::sum_beyond(b, p, cut).ok_or_else(|| {
            Error::Precondition(format!("gamma-power summand not monotone beyond {cut}"))
        })?;
        let cb = law.c_k_bracket();
        let beyond = far.scale(Bracket::new(cb.lo.powf(gamma), cb.hi.powf(gamma)));
        let s = law.amplitude_slack();
        let slack = Bracket::new(s.lo.powf(gamma), s.hi.powf(gamma));
        Ok(GammaTails { gamma, suffix, cut, beyond, slack })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn m_max(&self) -> usize {
        self.suffix.len() - 1
    }

    pub fn get(&self, m: usize) -> Result<Bracket> {
        if m == 0 || m > self.m_max() {
            return Err(Error::Domain(format!("tail index {m} outside 1..={}", self.m_max())));
        }
        let exact = Bracket::point(self.suffix[m]).widen(SUM_SLACK);
        debug_assert!((m as u64) <= self.cut);
        Ok(exact.scale(self.slack) + self.beyond)
    }

    /// Upper bound only; the value used in ρ̄.
    pub fn upper(&self, m: usize) -> f64 {
        self.get(m).expect("index in range").hi
    }
}
