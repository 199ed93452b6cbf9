//! `fracvol`: command-line front end for the fractional stochastic
//! volatility toolkit. All times are in years and all rates are annualized
//! (the model is non-dimensionalized); prices assume zero interest rate.
//!
//! Every output embeds the fully resolved configuration (and seed, where one
//! is used) so results can be reproduced from the artifact alone.
//!
//! Exit codes: 0 success, 2 usage, 3 input schema, 4 numerical/domain
//! failure, 5 validation-suite failure.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use fracvol_core::{
    d_function, fit_params, generate_surface, kernel_fou, phi_variance, run_calibration_roundtrip,
    run_delta_convergence, run_delta_convergence_slow, run_phi_statistics, run_skew_powerlaw,
    simulate_asset, theta, corrected_price, EuropeanCall, ExperimentReport, FitConfig,
    FouParams, FracvolError, FsvModel, Hurst, PathGrid, VolSurface,
};

const EXIT_SCHEMA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

#[derive(Parser)]
#[command(
    name = "fracvol",
    version,
    about = "Fractional stochastic volatility: kernels, prices, surfaces, calibration, validation",
    long_about = "All times are in years; the model is non-dimensionalized and assumes zero \
                  interest rate. Outputs are CSV or JSON with the resolved configuration and \
                  seed embedded."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the fOU kernel quantities K(t), theta(tau), D(tau), Var(phi)
    Kernel(KernelArgs),
    /// Simulate one joint (Z, sigma, X) scenario path to CSV
    Simulate(SimulateArgs),
    /// First-order corrected European call prices
    Price(PriceArgs),
    /// Generate a first-order implied-volatility surface
    Surface(SurfaceArgs),
    /// Fit group market parameters (sigma_bar, H, delta*rho, a) to a surface
    Calibrate(CalibrateArgs),
    /// Run the Monte Carlo validation suites and emit machine-readable reports
    Validate(ValidateArgs),
}

/// Model parameters shared by the pricing-side commands.
#[derive(Args, Serialize)]
struct ModelArgs {
    /// Hurst exponent, in (0, 1)
    #[arg(long = "H")]
    h: f64,
    /// Mean-reversion rate of the volatility factor (1/years)
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Volatility-of-volatility amplitude
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Leverage correlation between volatility and asset shocks
    #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
    rho: f64,
    /// Baseline volatility level
    #[arg(long = "sigma-bar", default_value_t = 0.2)]
    sigma_bar: f64,
}

impl ModelArgs {
    fn fou(&self) -> Result<FouParams, FracvolError> {
        FouParams::new(Hurst::new(self.h)?, self.a)
    }
    fn model(&self) -> Result<FsvModel, FracvolError> {
        FsvModel::with_default_map(self.sigma_bar, self.delta, self.rho, self.fou()?)
    }
}

#[derive(Args)]
struct KernelArgs {
    /// Hurst exponent, in (0, 1)
    #[arg(long = "H")]
    h: f64,
    /// Mean-reversion rate (1/years)
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Single evaluation time/maturity (years)
    #[arg(long, conflicts_with = "grid_log")]
    tau: Option<f64>,
    /// Log-spaced grid: NAME LO HI N (NAME must be `tau`)
    #[arg(long = "grid-log", num_args = 4, value_names = ["NAME", "LO", "HI", "N"])]
    grid_log: Option<Vec<String>>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time step (years)
    #[arg(long, default_value_t = 1.0 / 256.0)]
    dt: f64,
    /// Number of live steps
    #[arg(long, default_value_t = 256)]
    steps: usize,
    /// History steps conditioning the factor (default: 10 mean-reversion
    /// times; 0 forces a zero past)
    #[arg(long)]
    history: Option<usize>,
    /// Initial asset price
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Strike(s); repeat the flag for a grid
    #[arg(long, required = true)]
    strike: Vec<f64>,
    /// Option maturity (years)
    #[arg(long)]
    maturity: f64,
    /// Spot price
    #[arg(long, default_value_t = 1.0)]
    spot: f64,
    /// Conditional forecast phi_t of the future integrated factor
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurfaceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Spot price
    #[arg(long, default_value_t = 1.0)]
    spot: f64,
    /// Conditional forecast phi_t, applied to every maturity
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
    /// Log-spaced maturity grid: LO HI N
    #[arg(long = "tau-grid", num_args = 3, value_names = ["LO", "HI", "N"],
          default_values = ["0.05", "20", "12"])]
    tau_grid: Vec<String>,
    /// Linear log-moneyness grid: LO HI N
    #[arg(long = "moneyness-grid", num_args = 3, value_names = ["LO", "HI", "N"],
          default_values = ["-0.2", "0.2", "5"], allow_hyphen_values = true)]
    moneyness_grid: Vec<String>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Input surface CSV (as written by `fracvol surface`)
    #[arg(long)]
    input: PathBuf,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Which suite to run
    #[arg(long, default_value = "all",
          value_parser = ["all", "convergence", "slow-factor", "skew", "phi", "calibration"])]
    suite: String,
    /// RNG seed
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Override the per-experiment path budget (defaults are sized for the
    /// acceptance tolerances)
    #[arg(long)]
    paths: Option<usize>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<FracvolError> for Failure {
    fn from(e: FracvolError) -> Self {
        let code = match e {
            FracvolError::Schema(_) => EXIT_SCHEMA,
            _ => EXIT_NUMERICAL,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: EXIT_NUMERICAL, msg: format!("io error: {e}") }
    }
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("FRACVOL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                // ignore the error if a pool already exists (tests)
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("fracvol: FRACVOL_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("fracvol: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

/// Open `--out` or fall back to stdout.
fn writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn parse_grid(parts: &[String], what: &str) -> Result<(f64, f64, usize), Failure> {
    let bad = |m: String| Failure { code: 2, msg: m };
    let lo: f64 =
        parts[0].parse().map_err(|_| bad(format!("{what} grid LO must be a number")))?;
    let hi: f64 =
        parts[1].parse().map_err(|_| bad(format!("{what} grid HI must be a number")))?;
    let n: usize =
        parts[2].parse().map_err(|_| bad(format!("{what} grid N must be an integer")))?;
    if n < 1 {
        return Err(bad(format!("{what} grid needs at least one point")));
    }
    Ok((lo, hi, n))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn lin_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.cmd {
        Cmd::Kernel(args) => cmd_kernel(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Price(args) => cmd_price(args),
        Cmd::Surface(args) => cmd_surface(args),
        Cmd::Calibrate(args) => cmd_calibrate(args),
        Cmd::Validate(args) => cmd_validate(args),
    }
}

fn cmd_kernel(args: KernelArgs) -> Result<u8, Failure> {
    let p = FouParams::new(Hurst::new(args.h)?, args.a)?;
    let taus: Vec<f64> = match (&args.tau, &args.grid_log) {
        (Some(t), None) => vec![*t],
        (None, Some(parts)) => {
            if parts[0] != "tau" {
                return Err(Failure {
                    code: 2,
                    msg: format!("--grid-log supports only `tau`, got {:?}", parts[0]),
                });
            }
            let (lo, hi, n) = parse_grid(&parts[1..], "tau")?;
            log_grid(lo, hi, n)
        }
        _ => {
            return Err(Failure { code: 2, msg: "give exactly one of --tau or --grid-log".into() })
        }
    };
    let mut w = writer(&args.out)?;
    // columns: tau (years), moving-average kernel K(tau), theta (integrated
    // kernel), skew function D, Var(phi) over the horizon
    writeln!(w, "# {}", json!({"H": args.h, "a": args.a, "columns": "tau,K,theta,D,phi_var"}))?;
    writeln!(w, "tau,K,theta,D,phi_var")?;
    for &tau in &taus {
        writeln!(
            w,
            "{tau:.9},{:.9},{:.9},{:.9},{:.9}",
            kernel_fou(tau, &p)?,
            theta(tau, &p)?,
            d_function(tau, &p)?,
            phi_variance(tau, &p)?
        )?;
    }
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8, Failure> {
    let model = args.model.model()?;
    let history =
        args.history.unwrap_or_else(|| PathGrid::required_history(args.dt, args.model.a));
    let grid = PathGrid::new(0.0, args.dt, args.steps, history)?;
    let scenario = simulate_asset(&model, &grid, args.seed, args.x0)?;
    let mut w = writer(&args.out)?;
    scenario.write_csv(&mut w)?;
    Ok(0)
}

fn cmd_price(args: PriceArgs) -> Result<u8, Failure> {
    let model = args.model.model()?;
    let mut w = writer(&args.out)?;
    let cfg = json!({"model": args.model, "maturity": args.maturity, "spot": args.spot,
                     "phi": args.phi});
    writeln!(w, "# {cfg}")?;
    writeln!(w, "K,T,q0,random_term,skew_term,total")?;
    for &k in &args.strike {
        let call = EuropeanCall::new(k, args.maturity)?;
        let b = corrected_price(&model, &call, 0.0, args.spot, args.phi)?;
        writeln!(
            w,
            "{k:.9},{:.9},{:.12e},{:.12e},{:.12e},{:.12e}",
            args.maturity, b.q0, b.random_term, b.skew_term, b.total
        )?;
    }
    Ok(0)
}

fn cmd_surface(args: SurfaceArgs) -> Result<u8, Failure> {
    let model = args.model.model()?;
    let (tlo, thi, tn) = parse_grid(&args.tau_grid, "tau")?;
    let (mlo, mhi, mn) = parse_grid(&args.moneyness_grid, "moneyness")?;
    let taus = log_grid(tlo, thi, tn);
    let lms = lin_grid(mlo, mhi, mn);
    let surface = generate_surface(&model, args.spot, 0.0, |_| args.phi, &taus, &lms)?;
    let echo = json!({"model": args.model, "phi": args.phi,
                      "tau_grid": taus, "log_moneyness_grid": lms});
    let mut w = writer(&args.out)?;
    surface.write_csv(&mut w, &echo)?;
    Ok(0)
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<u8, Failure> {
    let file = File::open(&args.input).map_err(|e| Failure {
        code: EXIT_SCHEMA,
        msg: format!("cannot open {}: {e}", args.input.display()),
    })?;
    let surface = VolSurface::read_csv(BufReader::new(file))?;
    let cfg = FitConfig::default();
    let fit = fit_params(&surface, &cfg)?;
    let out = json!({
        "input": args.input.display().to_string(),
        "fit_config": cfg,
        "params": fit,
    });
    let mut w = writer(&args.out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&out).expect("fit serializes"))?;
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> Result<u8, Failure> {
    let seed = args.seed;
    let mut reports: Vec<ExperimentReport> = Vec::new();
    let all = args.suite == "all";
    let budget = |default: usize| args.paths.unwrap_or(default);
    if all || args.suite == "convergence" {
        reports.push(run_delta_convergence(seed, budget(100_000))?);
    }
    if all || args.suite == "slow-factor" {
        reports.push(run_delta_convergence_slow(0.3, seed, budget(800_000))?);
        reports.push(run_delta_convergence_slow(0.7, seed, budget(1_200_000))?);
    }
    if all || args.suite == "skew" {
        reports.push(run_skew_powerlaw(0.2, 1.0, &[0.01, 0.02, 0.04, 0.1], seed, budget(400_000))?);
        reports.push(run_skew_powerlaw(
            0.8,
            1.0,
            &[10.0, 20.0, 40.0, 100.0],
            seed,
            budget(400_000),
        )?);
    }
    if all || args.suite == "phi" {
        reports.push(run_phi_statistics(1.0, seed, budget(10_000))?);
    }
    if all || args.suite == "calibration" {
        reports.push(run_calibration_roundtrip(seed, 50)?);
    }

    let passed = reports.iter().all(|r| r.passed);
    for r in &mut reports {
        eprintln!(
            "fracvol validate: {} {} in {:.1}s",
            r.experiment,
            if r.passed { "passed" } else { "FAILED" },
            r.runtime_seconds
        );
        // wall-clock is the one non-reproducible field; zero it so reports
        // are byte-identical across runs and thread counts
        r.runtime_seconds = 0.0;
    }
    let doc = json!({"suite": args.suite, "seed": seed, "paths_override": args.paths,
                     "passed": passed, "reports": reports});
    let mut w = writer(&args.out)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&doc).expect("reports serialize"))?;
    Ok(if passed { 0 } else { EXIT_VALIDATION })
}
