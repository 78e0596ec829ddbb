//! Run configuration: TOML schema, per-mode parameters, validation with
//! line references, and the canonical hash naming the run directory.

use clap::{Args, ValueEnum};
use pinlab_core::certificate::{gamma_half_one, lambda_cap, ClipMode, LambdaRule, LambdaSchedule};
use pinlab_core::disorder::DisorderKind;
use pinlab_core::kernels::{LKind, LawConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::PathBuf;

pub const DEFAULT_REPLICAS: usize = 100;

fn default_replicas() -> usize {
    DEFAULT_REPLICAS
}
fn default_k_cap() -> usize {
    pinlab_core::certificate::DEFAULT_K_CAP
}
fn default_beta0() -> f64 {
    1.0
}
fn default_a_max() -> f64 {
    1.0
}
fn default_iters() -> usize {
    8
}
fn default_min_records() -> usize {
    pinlab_core::scan::DEFAULT_MIN_RECORDS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum BackendKind {
    Exact,
    #[default]
    Holder,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ScheduleKind {
    Zero,
    #[default]
    InvSqrt,
    InvSqrtJLogJ,
}

impl ScheduleKind {
    pub fn rule(self) -> LambdaRule {
        match self {
            ScheduleKind::Zero => LambdaRule::Zero,
            ScheduleKind::InvSqrt => LambdaRule::InvSqrt,
            ScheduleKind::InvSqrtJLogJ => LambdaRule::InvSqrtJLogJ,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ClipKind {
    /// Use λ = 0 where the schedule leaves the admissible range.
    #[default]
    Jensen,
    /// Reject the schedule instead.
    Error,
}

impl ClipKind {
    pub fn mode(self) -> ClipMode {
        match self {
            ClipKind::Jensen => ClipMode::Jensen,
            ClipKind::Error => ClipMode::Error,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum CaseKind {
    /// α > 1.
    GtOne,
    /// 1/2 < α < 1.
    HalfToOne,
    /// α = 1/2 with L = log^{−η}.
    Half,
}

impl CaseKind {
    pub fn label(self) -> &'static str {
        match self {
            CaseKind::GtOne => "gt_one",
            CaseKind::HalfToOne => "half_to_one",
            CaseKind::Half => "half",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct LawInfoParams {
    /// Also write the binary kernel table cache.
    #[arg(long)]
    #[serde(default)]
    pub write_table: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct PureSolveParams {
    #[arg(long, allow_hyphen_values = true)]
    pub h: f64,
    /// Cross-check F against the DP slope at this N.
    #[arg(long)]
    #[serde(default)]
    pub n_check: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub rel_tol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RenewalCheckParams {
    #[arg(long)]
    pub n: usize,
    /// Also run the contact-fraction Monte Carlo (needs a seed).
    #[arg(long)]
    #[serde(default)]
    pub lln: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct QuenchedFeParams {
    #[arg(long)]
    pub beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub h: f64,
    #[arg(long)]
    pub n: usize,
    /// With `k`, also estimate A_0..A_{k−1}.
    #[arg(long)]
    #[serde(default)]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CertifyParams {
    #[arg(long)]
    pub beta: f64,
    /// Explicit point; omit when `construct` is given.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default)]
    pub h: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub backend: BackendKind,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[arg(long, value_enum, default_value_t)]
    #[serde(default)]
    pub clip: ClipKind,
    /// Derive (h, k, γ, λ) from a regime construction with shift amplitude `a`.
    #[arg(long, value_enum)]
    #[serde(default)]
    pub construct: Option<CaseKind>,
    #[arg(long)]
    #[serde(default)]
    pub a: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = default_k_cap())]
    #[serde(default = "default_k_cap")]
    pub k_cap: usize,
    #[arg(long, default_value_t = default_beta0())]
    #[serde(default = "default_beta0")]
    pub beta0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ScanShiftParams {
    #[arg(long, value_enum)]
    pub case: CaseKind,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub betas: Vec<f64>,
    #[arg(long)]
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = default_k_cap())]
    #[serde(default = "default_k_cap")]
    pub k_cap: usize,
    #[arg(long, default_value_t = default_a_max())]
    #[serde(default = "default_a_max")]
    pub a_max: f64,
    #[arg(long, default_value_t = default_iters())]
    #[serde(default = "default_iters")]
    pub bisection_iters: usize,
    #[arg(long, default_value_t = default_beta0())]
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    /// Fit the exponent when at least this many records are certified.
    #[arg(long, default_value_t = default_min_records())]
    #[serde(default = "default_min_records")]
    pub min_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct FitExponentParams {
    /// records.json from a scan-shift run.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, value_enum)]
    pub case: CaseKind,
    #[arg(long)]
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = default_min_records())]
    #[serde(default = "default_min_records")]
    pub min_records: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct FeProfileParams {
    #[arg(long)]
    pub beta: f64,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_hyphen_values = true)]
    pub h_grid: Vec<f64>,
    #[arg(long)]
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Mode {
    LawInfo(LawInfoParams),
    PureSolve(PureSolveParams),
    RenewalCheck(RenewalCheckParams),
    QuenchedFe(QuenchedFeParams),
    Certify(CertifyParams),
    ScanShift(ScanShiftParams),
    FitExponent(FitExponentParams),
    FeProfile(FeProfileParams),
}

pub const MODES: [&str; 8] =
    ["law-info", "pure-solve", "renewal-check", "quenched-fe", "certify", "scan-shift", "fit-exponent", "fe-profile"];

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::LawInfo(_) => "law-info",
            Mode::PureSolve(_) => "pure-solve",
            Mode::RenewalCheck(_) => "renewal-check",
            Mode::QuenchedFe(_) => "quenched-fe",
            Mode::Certify(_) => "certify",
            Mode::ScanShift(_) => "scan-shift",
            Mode::FitExponent(_) => "fit-exponent",
            Mode::FeProfile(_) => "fe-profile",
        }
    }

    /// Modes whose output depends on random draws.
    pub fn stochastic(&self) -> bool {
        match self {
            Mode::RenewalCheck(p) => p.lln,
            Mode::QuenchedFe(_) | Mode::FeProfile(_) => true,
            Mode::Certify(p) => p.backend == BackendKind::Mc,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub law: LawConfig,
    pub disorder: DisorderKind,
    pub mode: Mode,
    pub seed: Option<u64>,
    pub replicas: usize,
    /// Performance knob only; excluded from the hash.
    pub workers: Option<usize>,
    /// Excluded from the hash.
    pub output_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
struct ModeProbe {
    mode: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig<P> {
    #[allow(dead_code)]
    mode: String,
    law: LawConfig,
    #[serde(default)]
    disorder: DisorderKind,
    params: P,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfigOptionalParams<P: Default> {
    #[allow(dead_code)]
    mode: String,
    law: LawConfig,
    #[serde(default)]
    disorder: DisorderKind,
    #[serde(default)]
    params: P,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "default_replicas")]
    replicas: usize,
    #[serde(default)]
    workers: Option<usize>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

/// A configuration problem, with the 1-based source line when known.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[table]` (or at top level), falling back to the table header.
pub fn locate(src: &str, path: &str) -> Option<usize> {
    let (table, key) = match path.split_once('.') {
        Some((t, k)) => (Some(t), k),
        None => (None, path),
    };
    let mut current: Option<String> = None;
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            let name = line.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if Some(name.as_str()) == table {
                header = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() == table {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn parse_error(src: &str, e: toml::de::Error) -> Violation {
    Violation {
        key: "config".into(),
        line: e.span().map(|s| line_of_offset(src, s.start)),
        message: e.message().to_string(),
    }
}

macro_rules! parse_mode {
    ($src:expr, $ty:ty, $variant:ident, required) => {{
        let c: FileConfig<$ty> = toml::from_str($src).map_err(|e| parse_error($src, e))?;
        RunConfig {
            law: c.law,
            disorder: c.disorder,
            mode: Mode::$variant(c.params),
            seed: c.seed,
            replicas: c.replicas,
            workers: c.workers,
            output_dir: c.output_dir,
        }
    }};
    ($src:expr, $ty:ty, $variant:ident, optional) => {{
        let c: FileConfigOptionalParams<$ty> = toml::from_str($src).map_err(|e| parse_error($src, e))?;
        RunConfig {
            law: c.law,
            disorder: c.disorder,
            mode: Mode::$variant(c.params),
            seed: c.seed,
            replicas: c.replicas,
            workers: c.workers,
            output_dir: c.output_dir,
        }
    }};
}

/// Parses a TOML config; structural errors come back with line numbers.
pub fn parse(src: &str) -> Result<RunConfig, Violation> {
    let probe: ModeProbe = toml::from_str(src).map_err(|e| parse_error(src, e))?;
    let mode = probe.mode.ok_or_else(|| Violation {
        key: "mode".into(),
        line: None,
        message: format!("missing mode; expected one of {}", MODES.join(", ")),
    })?;
    Ok(match mode.as_str() {
        "law-info" => parse_mode!(src, LawInfoParams, LawInfo, optional),
        "pure-solve" => parse_mode!(src, PureSolveParams, PureSolve, required),
        "renewal-check" => parse_mode!(src, RenewalCheckParams, RenewalCheck, required),
        "quenched-fe" => parse_mode!(src, QuenchedFeParams, QuenchedFe, required),
        "certify" => parse_mode!(src, CertifyParams, Certify, required),
        "scan-shift" => parse_mode!(src, ScanShiftParams, ScanShift, required),
        "fit-exponent" => parse_mode!(src, FitExponentParams, FitExponent, required),
        "fe-profile" => parse_mode!(src, FeProfileParams, FeProfile, required),
        other => {
            return Err(Violation {
                key: "mode".into(),
                line: locate(src, "mode"),
                message: format!("unknown mode `{other}`; expected one of {}", MODES.join(", ")),
            })
        }
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Canonical {
    law: LawConfig,
    disorder: DisorderKind,
    mode: String,
    params: serde_json::Value,
    seed: Option<u64>,
    replicas: usize,
}

/// Inverse of [`RunConfig::canonical_json`]; workers and output_dir come back unset.
pub fn from_canonical(text: &str) -> Result<RunConfig, Violation> {
    let bad = |e: serde_json::Error| Violation { key: "config.json".into(), line: Some(e.line()), message: e.to_string() };
    let c: Canonical = serde_json::from_str(text).map_err(bad)?;
    let p = c.params;
    let mode = match c.mode.as_str() {
        "law-info" => Mode::LawInfo(serde_json::from_value(p).map_err(bad)?),
        "pure-solve" => Mode::PureSolve(serde_json::from_value(p).map_err(bad)?),
        "renewal-check" => Mode::RenewalCheck(serde_json::from_value(p).map_err(bad)?),
        "quenched-fe" => Mode::QuenchedFe(serde_json::from_value(p).map_err(bad)?),
        "certify" => Mode::Certify(serde_json::from_value(p).map_err(bad)?),
        "scan-shift" => Mode::ScanShift(serde_json::from_value(p).map_err(bad)?),
        "fit-exponent" => Mode::FitExponent(serde_json::from_value(p).map_err(bad)?),
        "fe-profile" => Mode::FeProfile(serde_json::from_value(p).map_err(bad)?),
        other => return Err(Violation { key: "mode".into(), line: None, message: format!("unknown mode `{other}`") }),
    };
    Ok(RunConfig { law: c.law, disorder: c.disorder, mode, seed: c.seed, replicas: c.replicas, workers: None, output_dir: None })
}

impl RunConfig {
    /// Canonical JSON of everything that affects results (sorted keys).
    pub fn canonical_json(&self) -> String {
        let v = serde_json::json!({
            "law": self.law,
            "disorder": self.disorder,
            "mode": self.mode.name(),
            "params": self.mode,
            "seed": self.seed,
            "replicas": self.replicas,
        });
        serde_json::to_string(&v).expect("config serializes")
    }

    /// First 16 hex digits of sha256(canonical JSON).
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.canonical_json().as_bytes());
        hex::encode(d)[..16].to_string()
    }

    pub fn run_dir_name(&self) -> String {
        format!("{}-{}", self.mode.name(), self.hash())
    }
}

struct Checker<'a> {
    src: Option<&'a str>,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn fail(&mut self, key: &str, message: impl Into<String>) {
        let line = self.src.and_then(|s| locate(s, key));
        self.out.push(Violation { key: key.to_string(), line, message: message.into() });
    }

    fn check(&mut self, ok: bool, key: &str, message: impl Into<String>) {
        if !ok {
            self.fail(key, message);
        }
    }
}

fn check_case(c: &mut Checker, cfg: &RunConfig, case: CaseKind, epsilon: Option<f64>, eta: Option<f64>) {
    let alpha = cfg.law.alpha;
    match case {
        CaseKind::GtOne => {
            c.check(alpha > 1.0, "law.alpha", format!("case gt_one needs alpha > 1, got {alpha}"));
            if alpha > 1.0 && 2.05 / (1.0 + alpha) >= 0.99 {
                c.fail("law.alpha", format!("no gamma < 1 with (1+alpha)*gamma >= 2.05 at alpha = {alpha}"));
            }
        }
        CaseKind::HalfToOne => {
            c.check(alpha > 0.5 && alpha < 1.0, "law.alpha", format!("case half_to_one needs 1/2 < alpha < 1, got {alpha}"));
            match epsilon {
                None => c.fail("params.epsilon", "case half_to_one needs epsilon"),
                Some(e) if !(e > 0.0) => c.fail("params.epsilon", format!("epsilon must be positive, got {e}")),
                Some(e) if alpha > 0.5 && alpha < 1.0 => {
                    if let Err(err) = gamma_half_one(alpha, e) {
                        c.fail("params.epsilon", err.to_string());
                    }
                }
                _ => {}
            }
        }
        CaseKind::Half => {
            c.check(alpha == 0.5, "law.alpha", format!("case half needs alpha = 1/2, got {alpha}"));
            match (epsilon, eta) {
                (Some(e), Some(n)) => {
                    c.check(
                        cfg.law.l_kind == LKind::LogPower && cfg.law.b == -n,
                        "law.b",
                        format!("case half needs l_kind = \"log_power\" with b = -eta = {}", -n),
                    );
                    c.check(
                        e > 0.0 && e < n - 0.5,
                        "params.epsilon",
                        format!("epsilon = {e} violates the window 0 < epsilon < eta - 1/2 = {}", n - 0.5),
                    );
                }
                _ => c.fail("params.eta", "case half needs both epsilon and eta"),
            }
        }
    }
}

fn check_certificate_gamma(c: &mut Checker, alpha: f64, gamma: f64) {
    if !(gamma > 0.0 && gamma < 1.0) {
        c.fail("params.gamma", format!("gamma must lie in (0, 1), got {gamma}"));
    } else if (1.0 + alpha) * gamma <= 1.0 {
        c.fail(
            "params.gamma",
            format!(
                "certificate summability: (1+alpha)*gamma = {} must exceed 1 for the sum of K(n)^gamma to converge",
                (1.0 + alpha) * gamma
            ),
        );
    }
}

/// Every violation found; empty iff the config is runnable.
pub fn validate(cfg: &RunConfig, src: Option<&str>) -> Vec<Violation> {
    let mut c = Checker { src, out: Vec::new() };
    let law = &cfg.law;
    c.check(law.alpha > 0.0 && law.alpha.is_finite(), "law.alpha", format!("alpha must be positive, got {}", law.alpha));
    c.check(law.n_max >= 1000, "law.n_max", format!("n_max must be at least 1000, got {}", law.n_max));
    c.check(law.tol > 0.0, "law.tol", format!("tol must be positive, got {}", law.tol));
    c.check(law.cutoff >= law.n_max as u64, "law.cutoff", "cutoff must be at least n_max");
    if cfg.mode.stochastic() {
        c.check(cfg.seed.is_some(), "seed", format!("mode {} draws random numbers and needs a seed", cfg.mode.name()));
        c.check(cfg.replicas >= 2, "replicas", format!("need at least 2 replicas, got {}", cfg.replicas));
    }
    if cfg.workers == Some(0) {
        c.fail("workers", "workers must be at least 1");
    }
    let n_max = law.n_max;
    match &cfg.mode {
        Mode::LawInfo(_) => {}
        Mode::PureSolve(p) => {
            c.check(p.h.is_finite(), "params.h", "h must be finite");
            if let Some(t) = p.rel_tol {
                c.check(t > 0.0, "params.rel_tol", "rel_tol must be positive");
            }
            if let Some(n) = p.n_check {
                c.check(n >= 2, "params.n_check", "n_check must be at least 2");
            }
        }
        Mode::RenewalCheck(p) => {
            c.check(p.n >= 1 && p.n <= n_max, "params.n", format!("n must lie in 1..={n_max}"));
        }
        Mode::QuenchedFe(p) => {
            c.check(p.n >= 1 && p.n <= n_max, "params.n", format!("n must lie in 1..={n_max} (windows never exceed the table)"));
            match (p.gamma, p.k) {
                (Some(g), Some(k)) => {
                    c.check(g > 0.0 && g < 1.0, "params.gamma", format!("gamma must lie in (0, 1), got {g}"));
                    c.check(k >= 1 && k <= n_max + 1, "params.k", "k must lie in 1..=n_max+1");
                }
                (None, None) => {}
                _ => c.fail("params.gamma", "fractional moments need both gamma and k"),
            }
        }
        Mode::Certify(p) => {
            c.check(p.beta >= 0.0, "params.beta", "beta must be non-negative");
            if let Some(case) = p.construct {
                c.check(p.a.is_some_and(|a| a > 0.0), "params.a", "a construction needs a > 0");
                c.check(p.beta > 0.0 && p.beta <= p.beta0, "params.beta", format!("beta must lie in (0, beta0 = {}]", p.beta0));
                c.check(p.backend == BackendKind::Holder, "params.backend", "constructions use the holder backend");
                check_case(&mut c, cfg, case, p.epsilon, p.eta);
            } else {
                match (p.h, p.k, p.gamma) {
                    (Some(_), Some(k), Some(g)) => {
                        c.check(k >= 1, "params.k", "k must be at least 1");
                        check_certificate_gamma(&mut c, law.alpha, g);
                        if p.backend == BackendKind::Holder && p.clip == ClipKind::Error && g > 0.0 && g < 1.0 {
                            let s = LambdaSchedule::Rule { rule: p.schedule.rule(), clip: ClipMode::Error };
                            if let Err(e) = s.resolve(g, k) {
                                c.fail("params.schedule", format!("{e} (cap {})", lambda_cap(g)));
                            }
                        }
                        if p.backend == BackendKind::Exact {
                            let ok = p.beta == 0.0 || (cfg.disorder == DisorderKind::Rademacher && k <= 21);
                            c.check(ok, "params.backend", "exact backend needs beta = 0, or Rademacher disorder with k <= 21");
                        }
                    }
                    _ => c.fail("params.h", "give h, k and gamma, or a construction"),
                }
            }
        }
        Mode::ScanShift(p) => {
            c.check(!p.betas.is_empty(), "params.betas", "beta grid is empty");
            if let Some(b) = p.betas.iter().find(|&&b| !(b > 0.0 && b <= p.beta0)) {
                c.fail("params.betas", format!("beta grid must lie in (0, beta0 = {}], got {b}", p.beta0));
            }
            let mut sorted = p.betas.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            c.check(sorted.len() == p.betas.len(), "params.betas", "beta grid has repeated values");
            c.check(p.a_max > 0.0, "params.a_max", "a_max must be positive");
            c.check(p.k_cap >= 1, "params.k_cap", "k_cap must be at least 1");
            c.check(p.min_records >= 2, "params.min_records", "min_records must be at least 2");
            check_case(&mut c, cfg, p.case, p.epsilon, p.eta);
        }
        Mode::FitExponent(p) => {
            c.check(p.records.exists(), "params.records", format!("records file {} not found", p.records.display()));
            c.check(p.min_records >= 2, "params.min_records", "min_records must be at least 2");
            if p.case == CaseKind::Half {
                c.check(p.epsilon.is_some() && p.eta.is_some(), "params.eta", "case half needs epsilon and eta");
            }
            if p.case == CaseKind::HalfToOne {
                c.check(p.epsilon.is_some(), "params.epsilon", "case half_to_one needs epsilon");
            }
        }
        Mode::FeProfile(p) => {
            c.check(!p.h_grid.is_empty(), "params.h_grid", "h grid is empty");
            c.check(p.h_grid.iter().all(|h| h.is_finite()), "params.h_grid", "h grid values must be finite");
            c.check(p.n >= 1 && p.n <= n_max, "params.n", format!("n must lie in 1..={n_max}"));
            c.check(p.beta >= 0.0, "params.beta", "beta must be non-negative");
        }
    }
    c.out
}

#[cfg(test)]
mod tests {
    use super::*;

    const PURE: &str = r#"
mode = "pure-solve"

[law]
alpha = 1.5
l_kind = "constant"
n_max = 10000
tol = 1e-8

[params]
h = 1e-3
"#;

    #[test]
    fn parses_and_hashes() {
        let c = parse(PURE).unwrap();
        assert_eq!(c.mode.name(), "pure-solve");
        assert!(validate(&c, Some(PURE)).is_empty());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn hash_ignores_key_order_workers_and_output() {
        let permuted = r#"
workers = 7
output_dir = "elsewhere"
mode = "pure-solve"
[params]
h = 0.001
[law]
tol = 1e-8
n_max = 10000
l_kind = "constant"
alpha = 1.5
"#;
        assert_eq!(parse(PURE).unwrap().hash(), parse(permuted).unwrap().hash());
        let changed = PURE.replace("h = 1e-3", "h = 2e-3");
        assert_ne!(parse(PURE).unwrap().hash(), parse(&changed).unwrap().hash());
    }

    #[test]
    fn unknown_keys_and_modes_report_lines() {
        let bad = PURE.replace("h = 1e-3", "h = 1e-3\nhh = 2");
        let v = parse(&bad).unwrap_err();
        assert_eq!(v.line, Some(12), "{v}");
        assert!(v.message.contains("hh"));
        let v = parse(&PURE.replace("pure-solve", "bogus")).unwrap_err();
        assert!(v.message.contains("unknown mode"));
        assert_eq!(v.line, Some(2));
        assert!(parse("[law]\nalpha = 1\n").unwrap_err().message.contains("missing mode"));
    }

    #[test]
    fn certificate_violations() {
        let src = r#"
mode = "certify"
[law]
alpha = 0.5
l_kind = "constant"
n_max = 10000
tol = 1e-8
[params]
beta = 0.0
h = -0.1
k = 10
gamma = 0.6
"#;
        let c = parse(src).unwrap();
        let v = validate(&c, Some(src));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].line, Some(12));
        assert!(v[0].message.contains("summability"));
    }

    #[test]
    fn half_window_violation() {
        let src = r#"
mode = "scan-shift"
[law]
alpha = 0.5
l_kind = "log_power"
b = -2.0
n_max = 10000
tol = 1e-8
[params]
case = "half"
betas = [1.0]
epsilon = 1.5
eta = 2.0
"#;
        let v = validate(&parse(src).unwrap(), Some(src));
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].message.contains("0 < epsilon < eta - 1/2"));
        assert_eq!(v[0].line, Some(12));
        let ok = src.replace("epsilon = 1.5", "epsilon = 0.5");
        assert!(validate(&parse(&ok).unwrap(), Some(&ok)).is_empty());
    }

    #[test]
    fn stochastic_modes_need_seed() {
        let src = r#"
mode = "quenched-fe"
replicas = 10
[law]
alpha = 1.5
l_kind = "constant"
n_max = 10000
tol = 1e-8
[params]
beta = 1.0
h = 0.0
n = 100
"#;
        let v = validate(&parse(src).unwrap(), Some(src));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "seed");
        let seeded = format!("seed = 4\n{src}");
        assert!(validate(&parse(&seeded).unwrap(), None).is_empty());
    }
}
