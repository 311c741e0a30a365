use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::circ::{ComponentDensity, MixtureParams};
use crate::contrast::{FitOptions, SearchBox};
use crate::npdens::{DensityOptions, Penalty};
use crate::{Error, Result};

/// Experiments the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Mse,
    Normality,
    Density,
    Slope,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [Experiment::Mse, Experiment::Normality, Experiment::Density, Experiment::Slope];

    /// Output file name inside the output directory.
    pub fn file_name(self) -> &'static str {
        match self {
            Experiment::Mse => "mse.csv",
            Experiment::Normality => "normality.csv",
            Experiment::Density => "density.csv",
            Experiment::Slope => "slope.csv",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Ok(Experiment::Mse),
            "normality" => Ok(Experiment::Normality),
            "density" => Ok(Experiment::Density),
            "slope" => Ok(Experiment::Slope),
            other => Err(Error::Parse(format!("unknown experiment `{other}`"))),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::Mse => "mse",
            Experiment::Normality => "normality",
            Experiment::Density => "density",
            Experiment::Slope => "slope",
        };
        f.write_str(name)
    }
}

/// Settings of a Monte Carlo study.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub density: ComponentDensity,
    pub theta0: MixtureParams,
    pub n_list: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub fit: FitOptions,
    pub density_opts: DensityOptions,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
    pub experiments: Vec<Experiment>,
}

impl ExperimentConfig {
    pub fn new(density: ComponentDensity, theta0: MixtureParams, n_list: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            density,
            theta0,
            n_list,
            reps,
            seed,
            fit: FitOptions { compute_covariance: false, ..FitOptions::default() },
            density_opts: DensityOptions::default(),
            out_dir: None,
            jobs: None,
            experiments: vec![Experiment::Mse],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::domain("reps must be at least 1"));
        }
        if self.n_list.is_empty() {
            return Err(Error::domain("at least one sample size is required"));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(Error::domain(format!("sample sizes must be at least 2, got {n}")));
        }
        if self.jobs == Some(0) {
            return Err(Error::domain("jobs must be at least 1"));
        }
        self.fit.search_box.validate()
    }

    /// Parses flat `key = value` text. Lines starting with `#` are comments.
    ///
    /// Keys: `density`, `theta` (p,alpha,beta), `n` (comma list), `reps`,
    /// `seed`, `starts`, `screen`, `pmax`, `tol`, `lmax`, `lambda` (number or `slope`),
    /// `window`, `out`, `jobs`, `experiments` (comma list of mse, normality,
    /// density, slope). `density`, `theta`, `n`, `reps` and `seed` are
    /// required.
    pub fn parse(text: &str) -> Result<Self> {
        let mut density = None;
        let mut theta = None;
        let mut n_list = None;
        let mut reps = None;
        let mut seed = None;
        let mut fit = FitOptions { compute_covariance: false, ..FitOptions::default() };
        let mut density_opts = DensityOptions::default();
        let mut out_dir = None;
        let mut jobs = None;
        let mut experiments = vec![Experiment::Mse];
        let mut window = None;
        let mut slope = true;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let ctx = |e: Error| Error::Parse(format!("line {} ({key}): {e}", i + 1));
            match key.as_str() {
                "density" => density = Some(ComponentDensity::from_spec(value).map_err(ctx)?),
                "theta" => theta = Some(parse_theta(value).map_err(ctx)?),
                "n" => n_list = Some(parse_list::<usize>(value).map_err(ctx)?),
                "reps" => reps = Some(parse_num::<usize>(value).map_err(ctx)?),
                "seed" => seed = Some(parse_num::<u64>(value).map_err(ctx)?),
                "starts" => fit.n_starts = parse_num(value).map_err(ctx)?,
                "screen" => fit.screen_draws = parse_num(value).map_err(ctx)?,
                "pmax" => {
                    let pmax: f64 = parse_num(value).map_err(ctx)?;
                    fit.search_box = SearchBox::with_pmax(pmax);
                    density_opts.pmax = pmax;
                }
                "tol" => fit.ftol = parse_num(value).map_err(ctx)?,
                "lmax" => density_opts.max_level = Some(parse_num(value).map_err(ctx)?),
                "lambda" => {
                    if value.eq_ignore_ascii_case("slope") {
                        slope = true;
                    } else {
                        slope = false;
                        density_opts.penalty = Penalty::Explicit(parse_num(value).map_err(ctx)?);
                    }
                }
                "window" => window = Some(parse_num::<f64>(value).map_err(ctx)?),
                "out" => out_dir = Some(PathBuf::from(value)),
                "jobs" => jobs = Some(parse_num(value).map_err(ctx)?),
                "experiments" => {
                    experiments = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<Vec<_>>>()
                        .map_err(ctx)?
                }
                _ => return Err(Error::Parse(format!("line {}: unknown key `{key}`", i + 1))),
            }
        }
        if slope {
            density_opts.penalty = Penalty::SlopeHeuristic { window_fraction: window.unwrap_or(0.5) };
        } else if window.is_some() {
            return Err(Error::Parse("window only applies with lambda = slope".into()));
        }
        let missing = |name: &str| Error::Parse(format!("missing required key `{name}`"));
        let config = Self {
            density: density.ok_or_else(|| missing("density"))?,
            theta0: theta.ok_or_else(|| missing("theta"))?,
            n_list: n_list.ok_or_else(|| missing("n"))?,
            reps: reps.ok_or_else(|| missing("reps"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            fit,
            density_opts,
            out_dir,
            jobs,
            experiments,
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_num<T: FromStr>(value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse(format!("bad number `{value}`")))
}

fn parse_list<T: FromStr>(value: &str) -> Result<Vec<T>> {
    value.split(',').map(parse_num).collect()
}

/// `p,alpha,beta` in radians.
pub fn parse_theta(value: &str) -> Result<MixtureParams> {
    let v: Vec<f64> = parse_list(value)?;
    match v.as_slice() {
        [p, a, b] => MixtureParams::new(*p, *a, *b),
        _ => Err(Error::Parse(format!("theta needs three comma-separated values, got `{value}`"))),
    }
}
