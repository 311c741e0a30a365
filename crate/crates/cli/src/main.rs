//! `rotmix`: simulate, fit and analyse two-component rotation mixtures on the
//! circle.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 I/O error, 4 estimation
//! error (including a degenerate weight), 5 inference error (the estimate is
//! still written), 6 calibration or experiment error.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rotmix::bench::{parse_theta, run_all, ExperimentConfig};
use rotmix::circ::sample_mixture;
use rotmix::contrast::{estimate_theta, FitOptions, FitResult, SearchBox};
use rotmix::ident::{classify_on, AngleDomain, CHECK_GRID_POINTS};
use rotmix::npdens::{
    default_max_level, empirical_coeffs, estimate_density_at, l2_error, slope_lambda_window, DensityOptions, Penalty,
    DEFAULT_GRID_POINTS, DEFAULT_PMAX,
};
use rotmix::{ComponentDensity, Error, MixtureParams, Result, Sample};

#[derive(Parser, Debug)]
#[command(name = "rotmix", version, about = "Estimation for mixtures of two rotations of a circular density")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a sample from the mixture and write one angle per line.
    Simulate(SimulateArgs),
    /// Estimate (p, alpha, beta) from a sample file.
    Fit(FitArgs),
    /// Estimate the component density.
    Density(DensityArgs),
    /// Run Monte Carlo experiments from a config file and/or flags.
    Bench(BenchArgs),
    /// Emit the slope-heuristic couples and the calibrated penalty.
    Slope(SlopeArgs),
    /// Classify the identifiability of a parameter and list its aliases.
    Ident(IdentArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Component density, e.g. `vonmises:kappa=5`, `wrappedcauchy:gamma=0.8`.
    #[arg(long)]
    density: String,
    /// `p,alpha,beta` with p < 0.5.
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    /// Read angles in degrees.
    #[arg(long)]
    degrees: bool,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SearchArgs {
    /// Random starts for the simplex search.
    #[arg(long, default_value_t = 10)]
    starts: usize,
    /// Uniform draws screened when choosing the starts.
    #[arg(long)]
    screen: Option<usize>,
    /// Seed for the starting points.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Upper bound on p in the search box and the modulus guard.
    #[arg(long, default_value_t = DEFAULT_PMAX)]
    pmax: f64,
    /// Search box `plo,phi,alo,ahi,blo,bhi`; overrides `--pmax` for the box.
    #[arg(long, name = "box")]
    search_box: Option<String>,
    /// Absolute tolerance on the contrast.
    #[arg(long)]
    tol: Option<f64>,
}

impl SearchArgs {
    fn options(&self, covariance: bool) -> Result<FitOptions> {
        let search_box = match &self.search_box {
            Some(text) => parse_box(text)?,
            None => SearchBox::with_pmax(self.pmax),
        };
        let defaults = FitOptions::default();
        Ok(FitOptions {
            n_starts: self.starts,
            seed: self.seed,
            search_box,
            ftol: self.tol.unwrap_or(defaults.ftol),
            screen_draws: self.screen.unwrap_or(defaults.screen_draws),
            compute_covariance: covariance,
            ..defaults
        })
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Sample file, one angle per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// Sample angles are in degrees.
    #[arg(long)]
    degrees: bool,
    #[command(flatten)]
    search: SearchArgs,
    /// Skip the asymptotic covariance.
    #[arg(long)]
    no_cov: bool,
    /// Record file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a CSV row with header.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LevelArgs {
    /// Largest resolution level; defaults to max(10, n^(1/3)).
    #[arg(long)]
    lmax: Option<usize>,
    /// Use this `p,alpha,beta` instead of fitting.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    degrees: bool,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    levels: LevelArgs,
    /// Penalty constant, or `slope` for the slope heuristic.
    #[arg(long, default_value = "slope")]
    lambda: String,
    /// Fraction of the levels used by the slope regression.
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    /// True density, for the error report and the curve file.
    #[arg(long)]
    truth: Option<String>,
    /// Grid points of the curve file.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    points: usize,
    /// Curve file `x,f_hat[,f_true]`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coefficient file `l,re,im`.
    #[arg(long)]
    coeffs: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Flat `key = value` experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    density: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long)]
    degrees: bool,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    /// Required here or in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    pmax: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated subset of mse, normality, density, slope.
    #[arg(long)]
    experiments: Option<String>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SlopeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    degrees: bool,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    levels: LevelArgs,
    #[arg(long, default_value_t = 0.5)]
    window: f64,
    /// Couples file `level,penalty_shape,energy,in_window`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IdentArgs {
    #[arg(long, allow_hyphen_values = true)]
    theta: String,
    #[arg(long)]
    degrees: bool,
    /// Angular tolerance for the degenerate configurations; loose enough for
    /// angles typed to four decimals.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Let the angles range over the whole circle.
    #[arg(long)]
    full_circle: bool,
    /// Component density; adds the grid residual and the minimum of f' for
    /// every alias.
    #[arg(long)]
    density: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse(_) | Error::Domain(_) => 2,
        Error::Io(_) => 3,
        Error::Estimation(_) | Error::Degeneracy { .. } => 4,
        Error::Inference(_) => 5,
        Error::Calibration(_) | Error::Experiment(_) => 6,
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => fit(args),
        Command::Density(args) => density(args),
        Command::Bench(args) => bench(args),
        Command::Slope(args) => slope(args),
        Command::Ident(args) => ident(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let d = ComponentDensity::from_spec(&args.density)?;
    let theta = model_theta(&args.theta, args.degrees)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let sample = sample_mixture(&theta, &d, args.n, &mut rng)?;
    emit(args.out.as_deref(), &sample.to_text())?;
    Ok(ExitCode::SUCCESS)
}

fn fit(args: FitArgs) -> Result<ExitCode> {
    let sample = read_sample(&args.input, args.degrees)?;
    let result = estimate_theta(&sample, &args.search.options(!args.no_cov)?)?;
    warn_fit(&result);
    emit(args.out.as_deref(), &result.to_record())?;
    if let Some(path) = &args.csv {
        fs::write(path, format!("{}\n{}\n", FitResult::CSV_HEADER, result.to_csv_row()))?;
    }
    Ok(match &result.inference_error {
        Some(_) => ExitCode::from(exit_code(&Error::Inference(String::new()))),
        None => ExitCode::SUCCESS,
    })
}

fn density(args: DensityArgs) -> Result<ExitCode> {
    let sample = read_sample(&args.input, args.degrees)?;
    let theta = resolve_theta(&sample, &args.levels, &args.search, args.degrees)?;
    let penalty = if args.lambda.eq_ignore_ascii_case("slope") {
        Penalty::SlopeHeuristic { window_fraction: args.window }
    } else {
        Penalty::Explicit(parse_number(&args.lambda, "lambda")?)
    };
    let opts = DensityOptions { max_level: args.levels.lmax, penalty, pmax: guard_pmax(&args.search) };
    let est = estimate_density_at(&sample, &theta, &opts)?;
    let truth = args.truth.as_deref().map(ComponentDensity::from_spec).transpose()?;
    println!("theta = {theta}");
    println!("level = {}", est.level);
    println!("lambda = {:.6e}", est.lambda);
    if let Some(d) = &truth {
        println!("l2_error = {:.6e}", l2_error(&est.coeffs, d));
    }
    if let Some(path) = &args.out {
        fs::write(path, est.curve_csv(args.points, truth.as_ref()))?;
    }
    if let Some(path) = &args.coeffs {
        fs::write(path, est.coeffs.to_csv())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn bench(args: BenchArgs) -> Result<ExitCode> {
    let mut text = match &args.config {
        Some(path) => fs::read_to_string(path)?,
        None => String::new(),
    };
    let has_seed = args.seed.is_some() || text.lines().any(|l| l.split('=').next().is_some_and(|k| k.trim() == "seed"));
    if !has_seed {
        return Err(Error::Parse("bench needs an explicit seed: pass --seed or set `seed` in the config".into()));
    }
    // flags override the config: later keys win
    text.push('\n');
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            text.push_str(&format!("{key} = {v}\n"));
        }
    };
    let theta = match &args.theta {
        Some(t) => Some(format_theta(&model_theta(t, args.degrees)?)),
        None => None,
    };
    set("density", args.density.clone());
    set("theta", theta);
    set("n", args.n.clone());
    set("reps", args.reps.map(|v| v.to_string()));
    set("seed", args.seed.map(|v| v.to_string()));
    set("starts", args.starts.map(|v| v.to_string()));
    set("pmax", args.pmax.map(|v| v.to_string()));
    set("tol", args.tol.map(|v| v.to_string()));
    set("experiments", args.experiments.clone());
    set("jobs", args.jobs.map(|v| v.to_string()));
    set("out", args.out.as_ref().map(|p| p.display().to_string()));
    let mut config = ExperimentConfig::parse(&text)?;
    if config.out_dir.is_none() {
        config.out_dir = Some(PathBuf::from("."));
    }
    check_model_theta(&config.theta0)?;
    for path in run_all(&config)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn slope(args: SlopeArgs) -> Result<ExitCode> {
    let sample = read_sample(&args.input, args.degrees)?;
    let theta = resolve_theta(&sample, &args.levels, &args.search, args.degrees)?;
    let max_level = args.levels.lmax.unwrap_or_else(|| default_max_level(sample.len()));
    let coeffs = empirical_coeffs(&sample, &theta, max_level, guard_pmax(&args.search))?;
    let levels: Vec<usize> = (0..=max_level).collect();
    let fit = slope_lambda_window(&coeffs.f_hat, sample.len(), &levels, args.window)?;
    println!("theta = {theta}");
    println!("slope = {:.6e}", fit.slope);
    println!("lambda = {:.6e}", fit.lambda);
    println!("window_start = {}", fit.window_start);
    if fit.lambda <= 0.0 {
        eprintln!("warning: nonpositive slope; the couples are not increasing in the window");
    }
    if let Some(path) = &args.out {
        fs::write(path, fit.to_csv())?;
    }
    Ok(ExitCode::SUCCESS)
}

fn ident(args: IdentArgs) -> Result<ExitCode> {
    let theta = read_theta(&args.theta, args.degrees)?;
    let domain = if args.full_circle { AngleDomain::FullCircle } else { AngleDomain::HalfCircle };
    let class = classify_on(&theta, args.tol, domain);
    let density = args.density.as_deref().map(ComponentDensity::from_spec).transpose()?;
    println!("theta = {theta}");
    println!("tag = {:?}", class.tag);
    for w in &class.witnesses {
        let t = &w.theta_prime;
        let weights: Vec<String> = w.f_prime_weights.iter().map(|(s, c)| format!("{c:.6}*f(x{:+.6})", 0.0 - s)).collect();
        println!(
            "alias {:?}: p' = {:.6}, alpha' = {:.6}, beta' = {:.6}, f' = {}",
            w.kind,
            t.p,
            t.alpha,
            t.beta,
            weights.join(" + ")
        );
        if let Some(d) = &density {
            println!(
                "  residual = {:.3e}, min f' = {:.6e}",
                w.max_residual(&theta, d, CHECK_GRID_POINTS),
                w.min_f_prime(d, CHECK_GRID_POINTS)
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Fits unless `--theta` was given.
fn resolve_theta(sample: &Sample, levels: &LevelArgs, search: &SearchArgs, degrees: bool) -> Result<MixtureParams> {
    match &levels.theta {
        Some(t) => model_theta(t, degrees),
        None => {
            let result = estimate_theta(sample, &search.options(false)?)?;
            warn_fit(&result);
            Ok(result.theta_hat)
        }
    }
}

fn guard_pmax(search: &SearchArgs) -> f64 {
    match &search.search_box {
        Some(text) => parse_box(text).map(|b| b.pmax()).unwrap_or(search.pmax),
        None => search.pmax,
    }
}

fn warn_fit(result: &FitResult) {
    if result.near_degenerate {
        eprintln!(
            "warning: beta_hat - alpha_hat = {:.4} is close to a multiple of 2pi/3; the fit is near a non-identifiable configuration",
            result.theta_hat.beta - result.theta_hat.alpha
        );
    }
    if result.converged_starts() < result.n_starts {
        eprintln!(
            "warning: {} of {} starts did not converge",
            result.n_starts - result.converged_starts(),
            result.n_starts
        );
    }
    if let Some(reason) = &result.inference_error {
        eprintln!("warning: no covariance: {reason}");
    }
}

fn read_theta(text: &str, degrees: bool) -> Result<MixtureParams> {
    let t = parse_theta(text)?;
    Ok(if degrees { MixtureParams { alpha: t.alpha.to_radians(), beta: t.beta.to_radians(), ..t } } else { t })
}

/// A data-generating parameter: `p` must stay below one half.
fn model_theta(text: &str, degrees: bool) -> Result<MixtureParams> {
    let t = read_theta(text, degrees)?;
    check_model_theta(&t)?;
    Ok(t)
}

fn check_model_theta(t: &MixtureParams) -> Result<()> {
    if t.p >= 0.5 {
        return Err(Error::Parse(format!("p must be < 0.5, got {}", t.p)));
    }
    Ok(())
}

fn format_theta(t: &MixtureParams) -> String {
    format!("{:e},{:e},{:e}", t.p, t.alpha, t.beta)
}

fn parse_number(text: &str, what: &str) -> Result<f64> {
    text.trim().parse().map_err(|_| Error::Parse(format!("{what}: not a number: `{text}`")))
}

fn parse_box(text: &str) -> Result<SearchBox> {
    let v = text.split(',').map(|s| parse_number(s, "box")).collect::<Result<Vec<_>>>()?;
    match v.as_slice() {
        [plo, phi, alo, ahi, blo, bhi] => {
            // an upper angle of exactly pi means the half-open range
            let top = |x: f64| if x >= PI { PI - 1e-9 } else { x };
            let b = SearchBox { p: (*plo, *phi), alpha: (*alo, top(*ahi)), beta: (*blo, top(*bhi)) };
            b.validate()?;
            Ok(b)
        }
        _ => Err(Error::Parse(format!("box needs plo,phi,alo,ahi,blo,bhi, got `{text}`"))),
    }
}

fn read_sample(path: &Path, degrees: bool) -> Result<Sample> {
    let sample = Sample::parse(&fs::read_to_string(path)?)?;
    if degrees {
        Sample::new(sample.angles().iter().map(|a| a.to_radians()).collect())
    } else {
        Ok(sample)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
