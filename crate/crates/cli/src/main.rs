use std::fmt::Display;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use varw_core::experiments::{
    run_concentration, run_kappa_equivalence, run_lln, ConcentrationConfig, Coupling,
    ExperimentError, KappaConfig, LlnConfig,
};
use varw_core::limit::DEFAULT_TOL;
use varw_core::model::load_model;
use varw_core::{
    compute_spectral, single_loop, single_loop_tilde, solve_fixed_point, stabilize, LimitError,
    ModelError, ModelParams, OrderPolicy, SimError, SpectralError, StabilizeOptions, StackError,
    StackSource,
};

const DEFAULT_SEED: u64 = 2024;
const KAPPA_ALPHA: f64 = 0.001;

#[derive(Parser, Debug)]
#[command(
    name = "varw",
    version,
    about = "Village activated random walk toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model document.
    Validate(ModelArg),
    /// Principal eigenvalue and eigenvector of the kernel.
    Spectral(ModelArg),
    /// Solve the continuum fixed point.
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Stabilize one discrete system.
    Simulate {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "order-policy", default_value = "fifo")]
        policy: OrderPolicy,
        /// Exit 3 if the single-loop fixed-point check fails.
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate the single-loop odometer at a given M.
    SingleLoop {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated odometer, one entry per village.
        #[arg(long = "M", value_name = "M")]
        m: String,
        /// Also report the variant with fresh last notices drawn from this seed.
        #[arg(long)]
        aux_seed: Option<u64>,
    },
    /// Law-of-large-numbers sweep; writes CSV rows and a summary.
    Lln {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "n-values", default_value = "1000,10000")]
        n_values: String,
        /// Comma list or half-open range `a..b`.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long = "order-policy", default_value = "fifo")]
        policy: OrderPolicy,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Tail frequencies of the single-loop functionals against their bounds.
    Concentration {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: u32,
        #[arg(long = "M", value_name = "M")]
        m: String,
        #[arg(long)]
        a: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Report file.
        #[arg(long, default_value = "out/concentration.txt")]
        out: PathBuf,
    },
    /// Chi-square comparison of the odometer with its fresh-last-notice variant.
    KappaTest {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n: u32,
        #[arg(long = "M", value_name = "M")]
        m: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate both variants on the same airplane and taxi stacks.
        #[arg(long)]
        shared: bool,
        /// Exit 3 when the p-value is at most 0.001.
        #[arg(long)]
        strict: bool,
        #[arg(long, default_value = "out/kappa.txt")]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Model document (JSON).
    #[arg(long)]
    model: PathBuf,
}

impl ModelArg {
    fn load(&self) -> Result<ModelParams, Failure> {
        Ok(load_model(&self.model)?)
    }
}

/// Error paired with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn check(message: impl Display) -> Self {
        Self {
            code: 3,
            message: message.to_string(),
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::usage(e)
    }
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<LimitError> for Failure {
    fn from(e: LimitError) -> Self {
        let code = match e {
            LimitError::Model(_)
            | LimitError::NegativeInput { .. }
            | LimitError::BadTolerance(_) => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<StackError> for Failure {
    fn from(e: StackError) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::Model(_) => 1,
            SimError::Invariant(_) => 3,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Model(e) => e.into(),
            ExperimentError::Spectral(e) => e.into(),
            ExperimentError::Limit(e) => e.into(),
            ExperimentError::Sim(e) => e.into(),
            ExperimentError::Invariant(_) => Failure::check(e),
            other => Failure::usage(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(format!("i/o failed: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return ExitCode::from(f.code);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("VARW_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            Failure::usage(format!(
                "VARW_THREADS must be a positive integer, got '{value}'"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::usage(format!("cannot size thread pool: {e}")))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate(model) => {
            let params = model.load()?;
            params.validate(true)?;
            println!(
                "ok: {} villages, subcritical, file {}",
                params.num_villages(),
                model.model.display()
            );
        }
        Command::Spectral(model) => {
            let params = model.load()?;
            let spectral = compute_spectral(&params)?;
            println!("mu: {}", spectral.mu);
            println!("eta: {}", join(&spectral.eta));
            println!("eta_min: {}", spectral.eta_min);
            println!("iterations: {}", spectral.iterations);
        }
        Command::Solve { model, tol } => {
            let params = model.load()?;
            params.validate(true)?;
            let spectral = compute_spectral(&params)?;
            let sol = solve_fixed_point(&params, &spectral, tol)?;
            println!("m_star: {}", join(&sol.m_star));
            println!("s_star: {}", join(&sol.s_star));
            println!("mu: {}", spectral.mu);
            println!("certified_eta_error: {}", sol.certified_eta_error);
            println!("iterations: {}", sol.iterations);
        }
        Command::Simulate {
            model,
            n,
            seed,
            policy,
            strict,
        } => {
            let params = model.load()?;
            params.validate(true)?;
            let seed = announce_seed(seed);
            let mut src = StackSource::new(&params, n, seed)?;
            let sim = stabilize(&params, n, &mut src, StabilizeOptions::with_policy(policy))?;
            sim.check_mass_balance(&params)?;
            let check = single_loop(&params, n, &mut src, &sim.m_star)?;
            let fixed = check.phi == sim.m_star
                && check
                    .s
                    .iter()
                    .zip(&sim.s_star)
                    .all(|(&a, &b)| a == b as i64);
            println!("n: {n}");
            println!("order_policy: {policy}");
            println!("M_star: {}", join(&sim.m_star));
            println!("S_star: {}", join(&sim.s_star));
            println!("inflow: {}", join(&sim.inflow));
            println!("airplane_consumed: {}", join(&sim.consumed.airplane));
            println!("taxi_consumed: {}", join(&sim.consumed.taxi));
            println!("landlord_consumed: {}", join(&sim.consumed.landlord));
            println!("mass_balance: ok");
            println!("fixed_point: {}", if fixed { "ok" } else { "FAILED" });
            if strict && !fixed {
                return Err(Failure::check("single-loop fixed-point check failed"));
            }
        }
        Command::SingleLoop {
            model,
            n,
            seed,
            m,
            aux_seed,
        } => {
            let params = model.load()?;
            params.validate(true)?;
            let m = parse_list::<u64>(&m, "M")?;
            let seed = announce_seed(seed);
            let mut src = StackSource::new(&params, n, seed)?;
            let r = single_loop(&params, n, &mut src, &m)?;
            println!("Phi: {}", join(&r.phi));
            println!("S: {}", join(&r.s));
            println!("inflow: {}", join(&r.inflow));
            println!("active: {}", join(&r.active));
            println!("quiet: {}", join(&r.quiet));
            println!("jumped: {}", join(&r.jumped));
            if let Some(aux) = aux_seed {
                let tilde = single_loop_tilde(&params, n, &mut src, &m, aux)?;
                println!("Phi_tilde: {}", join(&tilde));
            }
        }
        Command::Lln {
            model,
            n_values,
            seeds,
            tol,
            policy,
            out,
        } => {
            let params = model.load()?;
            let mut config = LlnConfig::new(
                params,
                parse_list(&n_values, "n-values")?,
                parse_seeds(&seeds)?,
            );
            config.tol = tol;
            config.policy = policy;
            let report = run_lln(&config)?;
            fs::create_dir_all(&out)?;
            let rows_path = out.join("lln.csv");
            let summary_path = out.join("lln_summary.csv");
            report.write_rows(BufWriter::new(File::create(&rows_path)?))?;
            report.write_summary(BufWriter::new(File::create(&summary_path)?))?;
            println!("m_limit: {}", join(&report.limit.m_star));
            println!("s_limit: {}", join(&report.limit.s_star));
            println!("runs: {}", report.runs.len());
            for row in &report.summary {
                println!(
                    "n={} {}: median={} p90={}",
                    row.n, row.metric, row.median, row.p90
                );
            }
            println!("rows: {}", rows_path.display());
            println!("summary: {}", summary_path.display());
        }
        Command::Concentration {
            model,
            n,
            m,
            a,
            trials,
            seed,
            out,
        } => {
            let params = model.load()?;
            let config = ConcentrationConfig {
                params,
                n,
                m: parse_list(&m, "M")?,
                a,
                trials,
                seed: announce_seed(seed),
            };
            let report = run_concentration(&config)?;
            let text = report.to_report_string();
            write_report(&out, &text)?;
            print!("{text}");
            if report.violated() {
                return Err(Failure::check("empirical tail frequency exceeds its bound"));
            }
        }
        Command::KappaTest {
            model,
            n,
            m,
            trials,
            seed,
            shared,
            strict,
            out,
        } => {
            let params = model.load()?;
            let config = KappaConfig {
                params,
                n,
                m: parse_list(&m, "M")?,
                trials,
                seed: announce_seed(seed),
                coupling: if shared {
                    Coupling::Shared
                } else {
                    Coupling::Independent
                },
            };
            let report = run_kappa_equivalence(&config)?;
            let text = report.to_report_string();
            write_report(&out, &text)?;
            print!("{text}");
            if strict && report.min_p_value() <= KAPPA_ALPHA {
                return Err(Failure::check(format!(
                    "p-value {} is at most {KAPPA_ALPHA}",
                    report.min_p_value()
                )));
            }
        }
    }
    Ok(())
}

fn announce_seed(seed: Option<u64>) -> u64 {
    match seed {
        Some(s) => {
            println!("seed: {s}");
            s
        }
        None => {
            println!("seed: {DEFAULT_SEED} (default)");
            DEFAULT_SEED
        }
    }
}

fn write_report(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn join<T: Display>(values: &[T]) -> String {
    values
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Failure> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Failure::usage(format!("--{what}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_seeds(text: &str) -> Result<Vec<u64>, Failure> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: u64 = lo
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("--seeds: bad range '{text}'")))?;
        let hi: u64 = hi
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("--seeds: bad range '{text}'")))?;
        if hi <= lo {
            return Err(Failure::usage(format!("--seeds: empty range '{text}'")));
        }
        return Ok((lo..hi).collect());
    }
    parse_list(text, "seeds")
}
