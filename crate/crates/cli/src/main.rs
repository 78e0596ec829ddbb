use clap::{Args, Parser, Subcommand};
use pinlab::config::{
    self, CertifyParams, FeProfileParams, FitExponentParams, LawInfoParams, Mode, PureSolveParams, QuenchedFeParams,
    RenewalCheckParams, RunConfig, ScanShiftParams, DEFAULT_REPLICAS,
};
use pinlab::run::{self, Failure, EXIT_OK, EXIT_OTHER, EXIT_VALIDATION};
use pinlab_core::disorder::DisorderKind;
use pinlab_core::kernels::{LKind, LawConfig, DEFAULT_CUTOFF};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pinlab", version, about = "Disordered pinning model laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_dir and the environment root.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a TOML config and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-execute a stored run and compare its checksums with the manifest.
    Replay {
        run_dir: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Normalizing constant and kernel table.
    LawInfo(ModeArgs<LawInfoParams>),
    /// Pure free energy F(0, h).
    PureSolve(ModeArgs<PureSolveParams>),
    /// Renewal mass function and Doney ratio.
    RenewalCheck(ModeArgs<RenewalCheckParams>),
    /// Quenched free energy and fractional moments by Monte Carlo.
    QuenchedFe(ModeArgs<QuenchedFeParams>),
    /// Fractional-moment delocalization certificate at one point.
    Certify(ModeArgs<CertifyParams>),
    /// Certified critical-shift lower bounds over a beta grid.
    ScanShift(ModeArgs<ScanShiftParams>),
    /// Log-log exponent fit of stored scan records.
    FitExponent(ModeArgs<FitExponentParams>),
    /// Quenched against annealed free energy over an h grid.
    FeProfile(ModeArgs<FeProfileParams>),
}

#[derive(Args)]
struct ModeArgs<P: Args> {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    params: P,
}

fn parse_lkind(s: &str) -> Result<LKind, String> {
    match s {
        "constant" => Ok(LKind::Constant),
        "log_power" => Ok(LKind::LogPower),
        _ => Err(format!("expected constant or log_power, got {s}")),
    }
}

fn parse_disorder(s: &str) -> Result<DisorderKind, String> {
    match s {
        "gaussian" => Ok(DisorderKind::Gaussian),
        "rademacher" => Ok(DisorderKind::Rademacher),
        _ => Err(format!("expected gaussian or rademacher, got {s}")),
    }
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    alpha: f64,
    #[arg(long, value_parser = parse_lkind, default_value = "constant")]
    l_kind: LKind,
    /// Exponent of log(1+x) for l_kind = log_power.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, default_value_t = 100_000)]
    n_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: u64,
    #[arg(long, value_parser = parse_disorder, default_value = "gaussian")]
    disorder: DisorderKind,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_REPLICAS)]
    replicas: usize,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn into_config(self, mode: Mode) -> RunConfig {
        RunConfig {
            law: LawConfig {
                alpha: self.alpha,
                l_kind: self.l_kind,
                b: self.b,
                n_max: self.n_max,
                tol: self.tol,
                cutoff: self.cutoff,
            },
            disorder: self.disorder,
            mode,
            seed: self.seed,
            replicas: self.replicas,
            workers: self.workers,
            output_dir: self.output_dir,
        }
    }
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Other(format!("cannot read {}: {e}", path.display())))
}

fn execute(cfg: RunConfig) -> Result<i32, Failure> {
    let out = run::run(&cfg)?;
    println!("{}", out.dir.display());
    Ok(EXIT_OK)
}

fn main_inner(cli: Cli) -> Result<i32, Failure> {
    let cfg = match cli.command {
        Command::Run { config, output_dir, workers } => {
            let mut cfg = run::load(&read(&config)?)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            cfg
        }
        Command::Validate { config } => {
            let src = read(&config)?;
            let v = match config::parse(&src) {
                Ok(cfg) => config::validate(&cfg, Some(&src)),
                Err(v) => vec![v],
            };
            for x in &v {
                println!("{x}");
            }
            return Ok(if v.is_empty() {
                println!("ok");
                EXIT_OK
            } else {
                EXIT_VALIDATION
            });
        }
        Command::Replay { run_dir, workers } => {
            let report = run::replay(&run_dir, workers)?;
            for m in &report.matched {
                println!("match     {m}");
            }
            for m in &report.mismatched {
                println!("MISMATCH  {m}");
            }
            return Ok(if report.ok() { EXIT_OK } else { EXIT_OTHER });
        }
        Command::LawInfo(a) => a.common.into_config(Mode::LawInfo(a.params)),
        Command::PureSolve(a) => a.common.into_config(Mode::PureSolve(a.params)),
        Command::RenewalCheck(a) => a.common.into_config(Mode::RenewalCheck(a.params)),
        Command::QuenchedFe(a) => a.common.into_config(Mode::QuenchedFe(a.params)),
        Command::Certify(a) => a.common.into_config(Mode::Certify(a.params)),
        Command::ScanShift(a) => a.common.into_config(Mode::ScanShift(a.params)),
        Command::FitExponent(a) => a.common.into_config(Mode::FitExponent(a.params)),
        Command::FeProfile(a) => a.common.into_config(Mode::FeProfile(a.params)),
    };
    execute(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprint!("error: {e}");
            if !matches!(e, Failure::Validation(_)) {
                eprintln!();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
