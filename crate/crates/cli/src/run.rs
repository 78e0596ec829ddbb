//! Mode dispatch, run directories, manifests and replay.

use crate::config::{
    self, BackendKind, CaseKind, CertifyParams, FeProfileParams, FitExponentParams, Mode, QuenchedFeParams,
    RenewalCheckParams, RunConfig, ScanShiftParams, Violation,
};
use pinlab_core::certificate::{
    build_a_bounds, realize, rho_profile, Backend, CertificateParams, CertificateRecord, ConstructOptions,
    LambdaSchedule, ProfileSplits,
};
use pinlab_core::homogeneous::{dp_slope_check, pure_free_energy_tol, pure_partition, write_log_partition_csv, DEFAULT_REL_TOL};
use pinlab_core::kernels::InterArrivalLaw;
use pinlab_core::quenched::{annealed_free_energy_finite, fractional_moment_series_mc, free_energy_mc};
use pinlab_core::renewal::{contact_fraction_lln, doney_ratio_from, mass_renewal, mean_inter_arrival};
use pinlab_core::scan::{exponent_fit, fe_profile, shift_scan, write_fe_csv, write_scan_csv, write_scan_dat, AlphaCase, ScanBudget, ShiftScanRecord};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

pub const OUTPUT_ROOT_ENV: &str = "PINLAB_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RESOURCE_CAP: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug)]
pub enum Failure {
    Validation(Vec<Violation>),
    Core(pinlab_core::Error),
    Other(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        use pinlab_core::Error as E;
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Core(E::Domain(_) | E::Precondition(_) | E::Divergence(_)) => EXIT_VALIDATION,
            Failure::Core(E::ResourceCap { .. }) => EXIT_RESOURCE_CAP,
            Failure::Core(E::Invariant(_)) => EXIT_INVARIANT,
            Failure::Core(_) | Failure::Other(_) => EXIT_OTHER,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(v) => {
                writeln!(f, "invalid configuration:")?;
                for x in v {
                    writeln!(f, "  {x}")?;
                }
                Ok(())
            }
            Failure::Core(e) => write!(f, "{e}"),
            Failure::Other(s) => write!(f, "{s}"),
        }
    }
}

impl From<pinlab_core::Error> for Failure {
    fn from(e: pinlab_core::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Other(format!("json: {e}"))
    }
}

type Res<T> = std::result::Result<T, Failure>;

/// Files produced by a mode, keyed by name inside the run directory.
#[derive(Default)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    fn put(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Res<()> {
        let mut b = serde_json::to_vec_pretty(v)?;
        b.push(b'\n');
        self.put(name, b);
        Ok(())
    }

    fn with<F>(&mut self, name: &str, f: F) -> Res<()>
    where
        F: FnOnce(&mut Vec<u8>) -> pinlab_core::Result<()>,
    {
        let mut b = Vec::new();
        f(&mut b)?;
        self.put(name, b);
        Ok(())
    }

    /// A gnuplot stub for a two-column .dat file.
    fn plot(&mut self, dat: &str, xlabel: &str, ylabel: &str) {
        let stem = dat.trim_end_matches(".dat");
        let script = format!(
            "# gnuplot -persist {stem}.gp\nset xlabel \"{xlabel}\"\nset ylabel \"{ylabel}\"\nset grid\nplot \"{dat}\" using 1:2 with linespoints title \"{stem}\"\n"
        );
        self.put(&format!("{stem}.gp"), script.into_bytes());
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(|v| v.as_slice())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn output_root(cfg: &RunConfig) -> PathBuf {
    if let Some(d) = &cfg.output_dir {
        return d.clone();
    }
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Parses and validates TOML source.
pub fn load(src: &str) -> Res<RunConfig> {
    let cfg = config::parse(src).map_err(|v| Failure::Validation(vec![v]))?;
    let v = config::validate(&cfg, Some(src));
    if !v.is_empty() {
        return Err(Failure::Validation(v));
    }
    Ok(cfg)
}

/// Computes every artifact for `cfg` without touching the filesystem
/// (except reading inputs such as a records file).
pub fn execute(cfg: &RunConfig) -> Res<Artifacts> {
    let v = config::validate(cfg, None);
    if !v.is_empty() {
        return Err(Failure::Validation(v));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Failure::Other(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cfg))
}

fn dispatch(cfg: &RunConfig) -> Res<Artifacts> {
    let mut out = Artifacts::default();
    let canon: Value = serde_json::from_str(&cfg.canonical_json())?;
    out.json("config.json", &canon)?;
    let law = InterArrivalLaw::from_config(&cfg.law)?;
    let seed = cfg.seed.unwrap_or(0);
    match &cfg.mode {
        Mode::LawInfo(p) => law_info(&mut out, &law, p.write_table)?,
        Mode::PureSolve(p) => {
            let sol = pure_free_energy_tol(&law, p.h, p.rel_tol.unwrap_or(DEFAULT_REL_TOL))?;
            let check = match p.n_check {
                Some(n) => {
                    let (slope, f, relerr) = dp_slope_check(&law, p.h, n)?;
                    let lz = pure_partition(&law, p.h, n);
                    out.with("log_partition.csv", |w| write_log_partition_csv(w, &lz))?;
                    let mut dat = String::from("# N log_Z_N\n");
                    for (i, l) in lz.iter().enumerate().skip(1) {
                        dat.push_str(&format!("{i} {l:.12e}\n"));
                    }
                    out.put("log_partition.dat", dat.into_bytes());
                    out.plot("log_partition.dat", "N", "log Z_N");
                    Some(json!({ "n": n, "dp_slope": slope, "F": f, "relerr": relerr }))
                }
                None => None,
            };
            out.json("result.json", &json!({ "solution": sol, "dp_check": check }))?;
        }
        Mode::RenewalCheck(p) => renewal_check(&mut out, &law, p, cfg.replicas, seed)?,
        Mode::QuenchedFe(p) => quenched_fe(&mut out, &law, cfg, p, seed)?,
        Mode::Certify(p) => certify(&mut out, &law, cfg, p, seed)?,
        Mode::ScanShift(p) => scan(&mut out, &law, cfg, p)?,
        Mode::FitExponent(p) => fit(&mut out, cfg, p)?,
        Mode::FeProfile(p) => profile(&mut out, &law, cfg, p, seed)?,
    }
    Ok(out)
}

fn law_info(out: &mut Artifacts, law: &InterArrivalLaw, write_table: bool) -> Res<()> {
    let n_show = law.n_max().min(1000);
    let table = law.table();
    let mut csv = String::from("n,K\n");
    let mut dat = String::from("# log_n log_K\n");
    for (n, k) in table.iter().enumerate().take(n_show + 1).skip(1) {
        csv.push_str(&format!("{n},{k:e}\n"));
        dat.push_str(&format!("{:.12e} {:.12e}\n", (n as f64).ln(), k.ln()));
    }
    out.put("kernel.csv", csv.into_bytes());
    out.put("kernel.dat", dat.into_bytes());
    out.plot("kernel.dat", "log n", "log K(n)");
    if write_table {
        let tmp = scratch_dir("table")?;
        let path = law.write_table_cache(&tmp)?;
        let bytes = fs::read(&path)?;
        let _ = fs::remove_dir_all(&tmp);
        out.put("kernel_table.bin", bytes);
    }
    out.json(
        "result.json",
        &json!({
            "law": law.config(),
            "law_hash": law.config().hash(),
            "c_K": law.c_k(),
            "c_K_bracket": law.c_k_bracket(),
            "norm_bracket": law.norm_bracket(),
            "mean_inter_arrival": mean_inter_arrival(law).ok(),
        }),
    )
}

fn scratch_dir(tag: &str) -> Res<PathBuf> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let p = std::env::temp_dir().join(format!(
        "pinlab-{tag}-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&p)?;
    Ok(p)
}

fn renewal_check(out: &mut Artifacts, law: &InterArrivalLaw, p: &RenewalCheckParams, replicas: usize, seed: u64) -> Res<()> {
    let table = mass_renewal(law, p.n);
    out.with("renewal.csv", |w| table.write_csv(w))?;
    let mut dat = String::from("# log_n log_u_n\n");
    for (n, u) in table.u.iter().enumerate().skip(1) {
        if *u > 0.0 {
            dat.push_str(&format!("{:.12e} {:.12e}\n", (n as f64).ln(), u.ln()));
        }
    }
    out.put("renewal.dat", dat.into_bytes());
    out.plot("renewal.dat", "log n", "log u_n");
    let lln = if p.lln { Some(contact_fraction_lln(law, p.n as u64, replicas, seed)?) } else { None };
    out.json(
        "result.json",
        &json!({
            "n": p.n,
            "u_n": table.u[p.n],
            "renewal_residual": table.renewal_residual(law),
            "doney_ratio": if p.n >= 100 { doney_ratio_from(law, &table, p.n).ok() } else { None },
            "mean_inter_arrival": mean_inter_arrival(law).ok(),
            "lln": lln,
        }),
    )
}

fn quenched_fe(out: &mut Artifacts, law: &InterArrivalLaw, cfg: &RunConfig, p: &QuenchedFeParams, seed: u64) -> Res<()> {
    let d = cfg.disorder;
    let est = free_energy_mc(law, d, p.beta, p.h, p.n, cfg.replicas, seed)?;
    let annealed = annealed_free_energy_finite(law, d, p.beta, p.h, p.n);
    let moments = match (p.gamma, p.k) {
        (Some(g), Some(k)) => {
            let s = fractional_moment_series_mc(law, d, p.beta, p.h, g, k, cfg.replicas, seed)?;
            out.with("fractional_moments.csv", |w| s.write_csv(w))?;
            let mut dat = String::from("# j log_A_j\n");
            for (j, e) in s.a.iter().enumerate() {
                dat.push_str(&format!("{j} {:.12e}\n", e.point.ln()));
            }
            out.put("fractional_moments.dat", dat.into_bytes());
            out.plot("fractional_moments.dat", "j", "log A_j");
            Some(s)
        }
        _ => None,
    };
    out.json(
        "result.json",
        &json!({
            "free_energy": est,
            "annealed_finite": annealed,
            "fractional_moments": moments,
        }),
    )
}

fn alpha_case(case: CaseKind, epsilon: Option<f64>, eta: Option<f64>) -> AlphaCase {
    match case {
        CaseKind::GtOne => AlphaCase::GtOne,
        CaseKind::HalfToOne => AlphaCase::HalfToOne { epsilon: epsilon.unwrap_or(0.0) },
        CaseKind::Half => AlphaCase::Half { epsilon: epsilon.unwrap_or(0.0), eta: eta.unwrap_or(0.0) },
    }
}

fn certify(out: &mut Artifacts, law: &InterArrivalLaw, cfg: &RunConfig, p: &CertifyParams, seed: u64) -> Res<()> {
    let d = cfg.disorder;
    let backend = match p.backend {
        BackendKind::Exact => Backend::Exact,
        BackendKind::Holder => Backend::Holder,
        BackendKind::Mc => Backend::Mc { replicas: cfg.replicas, seed },
    };
    let (h, params, shift, epsilon) = match p.construct {
        Some(case) => {
            let opts = ConstructOptions { beta0: p.beta0, k_cap: p.k_cap };
            let ac = alpha_case(case, p.epsilon, p.eta);
            let plan = ac.plan(d, law, p.beta, p.a.unwrap_or(0.0), &opts)?;
            let c = realize(law, d, p.beta, plan)?;
            (c.h, c.params, Some(c.shift), p.epsilon.unwrap_or(0.1))
        }
        None => {
            let (h, k, gamma) = (p.h.unwrap_or(0.0), p.k.unwrap_or(1), p.gamma.unwrap_or(0.5));
            let schedule = LambdaSchedule::Rule { rule: p.schedule.rule(), clip: p.clip.mode() };
            let sched = (p.backend == BackendKind::Holder).then_some(&schedule);
            let a_bounds = build_a_bounds(law, d, p.beta, h, gamma, k, backend, sched)?;
            let params = CertificateParams { k, gamma, a_bounds, lambda_schedule: sched.cloned() };
            (h, params, None, 0.1)
        }
    };
    let prof = rho_profile(law, d, p.beta, h, &params, ProfileSplits { epsilon, ..Default::default() })?;
    let record = CertificateRecord::new(law, d, p.beta, h, &params, backend, &prof.result);
    let mut csv = String::from("j,A_upper,provenance,lambda,rho_term\n");
    let mut dat = String::from("# j log_A_upper\n");
    for (j, b) in params.a_bounds.iter().enumerate() {
        let prov = serde_json::to_value(b.provenance)?;
        csv.push_str(&format!("{j},{:e},{},{},{:e}\n", b.value, prov.as_str().unwrap_or(""), b.lambda, prof.result.per_j[j]));
        dat.push_str(&format!("{j} {:.12e}\n", b.value.ln()));
    }
    out.put("a_bounds.csv", csv.into_bytes());
    out.put("a_bounds.dat", dat.into_bytes());
    out.plot("a_bounds.dat", "j", "log A_j (upper)");
    out.json(
        "result.json",
        &json!({
            "record": record,
            "shift": shift,
            "certified": prof.result.certified(),
            "splits": prof.splits,
            "lambda_schedule": params.lambda_schedule,
        }),
    )
}

fn scan(out: &mut Artifacts, law: &InterArrivalLaw, cfg: &RunConfig, p: &ScanShiftParams) -> Res<()> {
    let case = alpha_case(p.case, p.epsilon, p.eta);
    let budget = ScanBudget {
        k_cap: p.k_cap,
        a_max: p.a_max,
        bisection_iters: p.bisection_iters,
        beta0: p.beta0,
        ..Default::default()
    };
    let records = shift_scan(case, cfg.disorder, law, &p.betas, &budget)?;
    out.json("records.json", &records)?;
    out.with("scan.csv", |w| write_scan_csv(w, &records))?;
    out.with("scan.dat", |w| write_scan_dat(w, &records))?;
    out.plot("scan.dat", "log beta", "log Delta_certified");
    let fit = exponent_fit(&records, case, law.alpha(), p.min_records);
    let infeasible: Vec<&ShiftScanRecord> = records.iter().filter(|r| r.required_k.is_some()).collect();
    out.json(
        "result.json",
        &json!({
            "case": case,
            "certified": records.iter().filter(|r| r.delta_certified > 0.0).count(),
            "records": records.len(),
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
            "infeasible": infeasible,
        }),
    )
}

fn fit(out: &mut Artifacts, cfg: &RunConfig, p: &FitExponentParams) -> Res<()> {
    let text = fs::read_to_string(&p.records)?;
    let records: Vec<ShiftScanRecord> = serde_json::from_str(&text)?;
    let case = alpha_case(p.case, p.epsilon, p.eta);
    let f = exponent_fit(&records, case, cfg.law.alpha, p.min_records)?;
    out.json(
        "result.json",
        &json!({
            "records_sha256": sha256_hex(text.as_bytes()),
            "fit": f,
            "within_95": (f.slope - f.target).abs() <= f.half_width,
        }),
    )
}

fn profile(out: &mut Artifacts, law: &InterArrivalLaw, cfg: &RunConfig, p: &FeProfileParams, seed: u64) -> Res<()> {
    let rows = fe_profile(law, cfg.disorder, p.beta, &p.h_grid, p.n, cfg.replicas, seed)?;
    out.with("fe.csv", |w| write_fe_csv(w, &rows))?;
    let mut dat = String::from("# h quenched annealed_exact\n");
    for r in &rows {
        dat.push_str(&format!("{:.12e} {:.12e} {:.12e}\n", r.h, r.quenched.point, r.annealed_exact));
    }
    out.put("fe.dat", dat.into_bytes());
    out.plot("fe.dat", "h", "F");
    out.json("result.json", &json!({ "rows": rows, "h_c_ann": cfg.disorder.h_c_ann(p.beta) }))
}

#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub mode: String,
    pub config_hash: String,
    /// File name to sha256.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn of(cfg: &RunConfig, a: &Artifacts) -> Self {
        Manifest {
            mode: cfg.mode.name().to_string(),
            config_hash: cfg.hash(),
            files: a.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect(),
        }
    }
}

pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Validates, executes and writes `<root>/<mode>-<hash>/` with a manifest.
pub fn run(cfg: &RunConfig) -> Res<RunOutcome> {
    let artifacts = execute(cfg)?;
    let dir = output_root(cfg).join(cfg.run_dir_name());
    fs::create_dir_all(&dir)?;
    for (name, bytes) in &artifacts.files {
        fs::write(dir.join(name), bytes)?;
    }
    let manifest = Manifest::of(cfg, &artifacts);
    let mut b = serde_json::to_vec_pretty(&manifest)?;
    b.push(b'\n');
    fs::write(dir.join("manifest.json"), b)?;
    Ok(RunOutcome { dir, manifest })
}

/// Rebuilds a config from a run directory's config.json.
pub fn config_from_run_dir(dir: &Path) -> Res<RunConfig> {
    let text = fs::read_to_string(dir.join("config.json"))?;
    config::from_canonical(&text).map_err(|v| Failure::Validation(vec![v]))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplayReport {
    pub matched: Vec<String>,
    /// Files whose checksum differs, or which only one side has.
    pub mismatched: Vec<String>,
}

impl ReplayReport {
    pub fn ok(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-executes the run stored in `dir` and compares checksums with its manifest.
pub fn replay(dir: &Path, workers: Option<usize>) -> Res<ReplayReport> {
    let mut cfg = config_from_run_dir(dir)?;
    cfg.workers = workers;
    let stored: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let fresh = Manifest::of(&cfg, &execute(&cfg)?);
    let mut matched = Vec::new();
    let mut mismatched = Vec::new();
    let names: std::collections::BTreeSet<&String> = stored.files.keys().chain(fresh.files.keys()).collect();
    for n in names {
        if stored.files.get(n) == fresh.files.get(n) {
            matched.push(n.clone());
        } else {
            mismatched.push(n.clone());
        }
    }
    Ok(ReplayReport { matched, mismatched })
}
