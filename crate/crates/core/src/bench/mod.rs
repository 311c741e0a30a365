//! Monte Carlo experiments: parameter MSE tables, normality diagnostics,
//! density reconstructions and slope-heuristic couples.
//!
//! Replication `r` at the `i`-th sample size draws from a ChaCha stream
//! indexed by `(i, r)` under the root seed, so results do not depend on how
//! replications are scheduled across threads.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{parse_theta, Experiment, ExperimentConfig};

use crate::circ::{angle_diff_mod_pi, mixture_density, sample_mixture, MixtureParams, Sample};
use crate::contrast::{estimate_theta, FitOptions, FitResult};
use crate::npdens::{estimate_density, l2_error, SlopeFit, DEFAULT_GRID_POINTS};
use crate::{Error, Result};

/// Largest tolerated fraction of failed replications.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Standard normal quantile for two-sided 95% intervals.
const Z_95: f64 = 1.959963984540054;

/// Generator for replication `rep` at sample-size index `n_index`.
pub fn replication_rng(root_seed: u64, n_index: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(((n_index as u64) << 32) | rep as u64);
    rng
}

/// Deviation `theta_hat - theta0` with angles compared modulo `pi`.
pub fn deviation(theta_hat: &MixtureParams, theta0: &MixtureParams) -> [f64; 3] {
    [
        theta_hat.p - theta0.p,
        angle_diff_mod_pi(theta_hat.alpha, theta0.alpha),
        angle_diff_mod_pi(theta_hat.beta, theta0.beta),
    ]
}

fn check_failures(what: &str, n: usize, failures: usize, reps: usize) -> Result<()> {
    if failures as f64 > MAX_FAILURE_FRACTION * reps as f64 {
        return Err(Error::Experiment(format!("{what} at n = {n}: {failures} of {reps} replications failed")));
    }
    Ok(())
}

fn run_parallel<T, F>(config: &ExperimentConfig, reps: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Experiment(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..reps).into_par_iter().map(job).collect()))
}

/// Simulates replication `rep` and fits it.
pub fn simulate_and_fit(
    config: &ExperimentConfig,
    n_index: usize,
    rep: usize,
    fit: &FitOptions,
) -> Result<(Sample, FitResult)> {
    let n = config.n_list[n_index];
    let mut rng = replication_rng(config.seed, n_index, rep);
    let fit_seed: u64 = rng.random();
    let sample = sample_mixture(&config.theta0, &config.density, n, &mut rng)?;
    let opts = FitOptions { seed: fit_seed, ..fit.clone() };
    let result = estimate_theta(&sample, &opts)?;
    Ok((sample, result))
}

/// Mean squared errors at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub density: String,
    pub n: usize,
    pub reps: usize,
    /// Replications excluded because the fit failed.
    pub failures: usize,
    pub mse_p: f64,
    /// Squared angular distance modulo `pi`.
    pub mse_alpha: f64,
    pub mse_beta: f64,
}

pub const MSE_HEADER: &str = "density,n,reps,failures,mse_p,mse_alpha_modpi,mse_beta_modpi";

pub fn mse_csv(rows: &[MseRow]) -> String {
    let mut out = format!("{MSE_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.5e},{:.5e},{:.5e}",
            r.density, r.n, r.reps, r.failures, r.mse_p, r.mse_alpha, r.mse_beta
        );
    }
    out
}

/// Parameter MSE for every sample size of the configuration.
pub fn run_mse(config: &ExperimentConfig) -> Result<Vec<MseRow>> {
    config.validate()?;
    let fit = FitOptions { compute_covariance: false, ..config.fit.clone() };
    let mut rows = Vec::with_capacity(config.n_list.len());
    for (n_index, &n) in config.n_list.iter().enumerate() {
        let errors = run_parallel(config, config.reps, |rep| {
            simulate_and_fit(config, n_index, rep, &fit)
                .ok()
                .map(|(_, r)| deviation(&r.theta_hat, &config.theta0).map(|d| d * d))
        })?;
        let ok: Vec<[f64; 3]> = errors.iter().flatten().copied().collect();
        let failures = config.reps - ok.len();
        check_failures("mse", n, failures, config.reps)?;
        let mean = |j: usize| ok.iter().map(|e| e[j]).sum::<f64>() / ok.len() as f64;
        rows.push(MseRow {
            density: config.density.to_string(),
            n,
            reps: config.reps,
            failures,
            mse_p: mean(0),
            mse_alpha: mean(1),
            mse_beta: mean(2),
        });
    }
    Ok(rows)
}

/// Sample moments of one standardized coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSummary {
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
}

impl MomentSummary {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / k;
        let variance = if values.len() > 1 { m2 * k / (k - 1.0) } else { f64::NAN };
        let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
        Self { mean, variance, skewness }
    }
}

/// Per-replication normality record; `None` fields mark excluded
/// replications.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityRow {
    pub rep: usize,
    /// `(theta_hat_j - theta0_j) / se_j`.
    pub standardized: Option<[f64; 3]>,
    /// `sqrt(n) (theta_hat - theta0)`.
    pub raw: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub n: usize,
    pub reps: usize,
    pub failures: usize,
    pub rows: Vec<NormalityRow>,
    pub summary: [MomentSummary; 3],
    /// Fraction of replications whose marginal 95% interval covers `theta0`.
    pub coverage: [f64; 3],
}

pub const NORMALITY_HEADER: &str = "n,rep,status,z_p,z_alpha_modpi,z_beta_modpi,raw_p,raw_alpha_modpi,raw_beta_modpi";

pub fn normality_csv(reports: &[NormalityReport]) -> String {
    let mut out = format!("{NORMALITY_HEADER}\n");
    for r in reports {
        for row in &r.rows {
            match (row.standardized, row.raw) {
                (Some(z), Some(raw)) => {
                    let _ = writeln!(
                        out,
                        "{},{},ok,{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e}",
                        r.n, row.rep, z[0], z[1], z[2], raw[0], raw[1], raw[2]
                    );
                }
                _ => {
                    let _ = writeln!(out, "{},{},excluded,NaN,NaN,NaN,NaN,NaN,NaN", r.n, row.rep);
                }
            }
        }
    }
    out
}

/// Summaries of standardized rows, with coverage of the `z`-intervals.
pub fn summarize_standardized(values: &[[f64; 3]]) -> ([MomentSummary; 3], [f64; 3]) {
    let summary = [0, 1, 2].map(|j| MomentSummary::of(&values.iter().map(|v| v[j]).collect::<Vec<_>>()));
    let coverage = [0, 1, 2].map(|j| values.iter().filter(|v| v[j].abs() <= Z_95).count() as f64 / values.len() as f64);
    (summary, coverage)
}

/// Standardized estimation errors for every sample size; requires at least
/// 50 replications.
pub fn run_normality(config: &ExperimentConfig) -> Result<Vec<NormalityReport>> {
    config.validate()?;
    if config.reps < 50 {
        return Err(Error::domain(format!("normality diagnostics need at least 50 replications, got {}", config.reps)));
    }
    let fit = FitOptions { compute_covariance: true, ..config.fit.clone() };
    let mut reports = Vec::with_capacity(config.n_list.len());
    for (n_index, &n) in config.n_list.iter().enumerate() {
        let rows = run_parallel(config, config.reps, |rep| {
            let record = simulate_and_fit(config, n_index, rep, &fit).ok().and_then(|(_, r)| {
                let cov = r.covariance.as_ref()?;
                let se = cov.std_errors();
                if se.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return None;
                }
                let d = deviation(&r.theta_hat, &config.theta0);
                let root_n = (n as f64).sqrt();
                Some(([0, 1, 2].map(|j| d[j] / se[j]), d.map(|v| v * root_n)))
            });
            NormalityRow { rep, standardized: record.map(|r| r.0), raw: record.map(|r| r.1) }
        })?;
        let values: Vec<[f64; 3]> = rows.iter().filter_map(|r| r.standardized).collect();
        let failures = config.reps - values.len();
        check_failures("normality", n, failures, config.reps)?;
        let (summary, coverage) = summarize_standardized(&values);
        reports.push(NormalityReport { n, reps: config.reps, failures, rows, summary, coverage });
    }
    Ok(reports)
}

/// Reconstruction of `f` and `g` from the first replication at one sample
/// size.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRecon {
    pub n: usize,
    pub theta_hat: MixtureParams,
    pub level: usize,
    pub lambda: f64,
    pub l2_error: f64,
    /// `(x, f(x), f_hat(x), g(x), g_hat(x))` on a uniform grid.
    pub curve: Vec<[f64; 5]>,
}

impl DensityRecon {
    /// Trapezoid mass of `g_hat` over the grid.
    pub fn g_hat_mass(&self) -> f64 {
        self.curve.iter().map(|r| r[4]).sum::<f64>() * std::f64::consts::TAU / self.curve.len() as f64
    }
}

pub const DENSITY_HEADER: &str = "n,x,f_true,f_hat,g_true,g_hat";

pub fn density_csv(recons: &[DensityRecon]) -> String {
    let mut out = format!("{DENSITY_HEADER}\n");
    for r in recons {
        for c in &r.curve {
            let _ = writeln!(out, "{},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e}", r.n, c[0], c[1], c[2], c[3], c[4]);
        }
    }
    out
}

pub fn run_density_recon(config: &ExperimentConfig) -> Result<Vec<DensityRecon>> {
    config.validate()?;
    let fit = FitOptions { compute_covariance: false, ..config.fit.clone() };
    let mut out = Vec::with_capacity(config.n_list.len());
    for (n_index, &n) in config.n_list.iter().enumerate() {
        let (sample, result) = simulate_and_fit(config, n_index, 0, &fit)?;
        let est = estimate_density(&sample, &result, &config.density_opts)?;
        let th = result.theta_hat;
        let curve = (0..DEFAULT_GRID_POINTS)
            .map(|k| {
                let x = std::f64::consts::TAU * k as f64 / DEFAULT_GRID_POINTS as f64;
                let g_hat = th.p * est.eval(x - th.alpha) + (1.0 - th.p) * est.eval(x - th.beta);
                [x, config.density.eval(x), est.eval(x), mixture_density(&config.theta0, &config.density, x), g_hat]
            })
            .collect();
        out.push(DensityRecon {
            n,
            theta_hat: th,
            level: est.level,
            lambda: est.lambda,
            l2_error: l2_error(&est.coeffs, &config.density),
            curve,
        });
    }
    Ok(out)
}

/// Slope-heuristic couples from the first replication at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeReport {
    pub n: usize,
    pub theta_hat: MixtureParams,
    pub fit: SlopeFit,
    pub selected_level: usize,
}

pub const SLOPE_HEADER: &str = "n,level,penalty_shape,energy,in_window,slope,lambda";

pub fn slope_csv(reports: &[SlopeReport]) -> String {
    let mut out = format!("{SLOPE_HEADER}\n");
    for r in reports {
        for &(l, x, y) in &r.fit.couples {
            let _ = writeln!(
                out,
                "{},{},{:.5e},{:.5e},{},{:.5e},{:.5e}",
                r.n,
                l,
                x,
                y,
                l >= r.fit.window_start,
                r.fit.slope,
                r.fit.lambda
            );
        }
    }
    out
}

pub fn run_slope(config: &ExperimentConfig) -> Result<Vec<SlopeReport>> {
    config.validate()?;
    let fit = FitOptions { compute_covariance: false, ..config.fit.clone() };
    let window_fraction = match config.density_opts.penalty {
        crate::npdens::Penalty::SlopeHeuristic { window_fraction } => window_fraction,
        crate::npdens::Penalty::Explicit(_) => 0.5,
    };
    let opts = crate::npdens::DensityOptions {
        penalty: crate::npdens::Penalty::SlopeHeuristic { window_fraction },
        ..config.density_opts
    };
    let mut out = Vec::with_capacity(config.n_list.len());
    for (n_index, &n) in config.n_list.iter().enumerate() {
        let (sample, result) = simulate_and_fit(config, n_index, 0, &fit)?;
        let est = estimate_density(&sample, &result, &opts)?;
        out.push(SlopeReport {
            n,
            theta_hat: result.theta_hat,
            fit: est.slope.expect("slope heuristic requested"),
            selected_level: est.level,
        });
    }
    Ok(out)
}

/// Risk of the selected estimator against the best resolution in hindsight.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRiskRow {
    pub n: usize,
    pub rep: usize,
    pub level: usize,
    pub risk: f64,
    pub oracle_level: usize,
    pub oracle_risk: f64,
}

/// Per-replication risks for every sample size; failed replications are
/// dropped and counted.
pub fn run_density_risk(config: &ExperimentConfig) -> Result<(Vec<DensityRiskRow>, usize)> {
    config.validate()?;
    let fit = FitOptions { compute_covariance: false, ..config.fit.clone() };
    let mut rows = Vec::new();
    let mut total_failures = 0;
    for (n_index, &n) in config.n_list.iter().enumerate() {
        let results = run_parallel(config, config.reps, |rep| -> Option<DensityRiskRow> {
            let (sample, result) = simulate_and_fit(config, n_index, rep, &fit).ok()?;
            let est = estimate_density(&sample, &result, &config.density_opts).ok()?;
            let full = &est.empirical.f_hat;
            let (oracle_level, oracle_risk) = (0..=full.max_level())
                .map(|l| (l, l2_error(&full.truncated(l), &config.density)))
                .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
            Some(DensityRiskRow {
                n,
                rep,
                level: est.level,
                risk: l2_error(&est.coeffs, &config.density),
                oracle_level,
                oracle_risk,
            })
        })?;
        let failures = results.iter().filter(|r| r.is_none()).count();
        check_failures("density risk", n, failures, config.reps)?;
        total_failures += failures;
        rows.extend(results.into_iter().flatten());
    }
    Ok((rows, total_failures))
}

/// Runs every configured experiment and writes its CSV into the output
/// directory. Returns the written paths.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = config.out_dir.clone().ok_or_else(|| Error::domain("an output directory is required"))?;
    fs::create_dir_all(&dir)?;
    let mut written = Vec::new();
    for &exp in &config.experiments {
        let text = match exp {
            Experiment::Mse => mse_csv(&run_mse(config)?),
            Experiment::Normality => normality_csv(&run_normality(config)?),
            Experiment::Density => density_csv(&run_density_recon(config)?),
            Experiment::Slope => slope_csv(&run_slope(config)?),
        };
        let path = dir.join(exp.file_name());
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circ::ComponentDensity;
    use rand_distr::{Distribution, StandardNormal};
    use std::f64::consts::PI;

    fn config(reps: usize) -> ExperimentConfig {
        ExperimentConfig::new(
            ComponentDensity::von_mises(5.0).unwrap(),
            MixtureParams::new(0.25, PI / 8.0, 2.0 * PI / 3.0).unwrap(),
            vec![200],
            reps,
            17,
        )
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: u64 = replication_rng(1, 0, 0).random();
        let b: u64 = replication_rng(1, 0, 1).random();
        let c: u64 = replication_rng(1, 1, 0).random();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, replication_rng(1, 0, 0).random::<u64>());
    }

    #[test]
    fn mse_is_deterministic_across_thread_counts() {
        let mut c = config(6);
        c.jobs = Some(1);
        let serial = mse_csv(&run_mse(&c).unwrap());
        c.jobs = Some(3);
        let parallel = mse_csv(&run_mse(&c).unwrap());
        assert_eq!(serial, parallel);
        assert!(serial.starts_with(MSE_HEADER));
        let row = &run_mse(&c).unwrap()[0];
        assert_eq!(row.failures, 0);
        assert!(row.mse_p >= 0.0 && row.mse_alpha >= 0.0 && row.mse_beta >= 0.0);
    }

    #[test]
    fn failures_over_threshold_are_errors() {
        let mut c = config(5);
        c.fit.max_iter = 1;
        assert!(matches!(run_mse(&c), Err(Error::Experiment(_))));
        assert!(check_failures("x", 10, 1, 10).is_ok());
        assert!(check_failures("x", 10, 2, 10).is_err());
    }

    #[test]
    fn standardization_of_normal_injection() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<[f64; 3]> = (0..4000).map(|_| [0; 3].map(|_| StandardNormal.sample(&mut rng))).collect();
        let (summary, coverage) = summarize_standardized(&values);
        for j in 0..3 {
            assert!(summary[j].mean.abs() < 0.1);
            assert!((summary[j].variance - 1.0).abs() < 0.1);
            assert!(summary[j].skewness.abs() < 0.2);
            assert!((coverage[j] - 0.95).abs() < 0.015);
        }
    }

    #[test]
    fn normality_needs_enough_replications() {
        assert!(run_normality(&config(10)).is_err());
    }

    #[test]
    fn density_and_slope_outputs() {
        let mut c = config(1);
        c.n_list = vec![1000];
        let recon = run_density_recon(&c).unwrap();
        assert_eq!(recon[0].curve.len(), DEFAULT_GRID_POINTS);
        assert!((recon[0].g_hat_mass() - 1.0).abs() < 1e-6);
        let csv = density_csv(&recon);
        assert_eq!(csv.lines().count(), DEFAULT_GRID_POINTS + 1);
        let slope = run_slope(&c).unwrap();
        assert!(slope[0].fit.slope > 0.0);
        assert!(slope_csv(&slope).starts_with(SLOPE_HEADER));
    }

    #[test]
    fn run_all_writes_requested_files() {
        let dir = std::env::temp_dir().join(format!("rotmix-bench-{}", std::process::id()));
        let mut c = config(2);
        c.out_dir = Some(dir.clone());
        c.experiments = vec![Experiment::Mse, Experiment::Slope];
        let paths = run_all(&c).unwrap();
        assert_eq!(paths, vec![dir.join("mse.csv"), dir.join("slope.csv")]);
        assert!(paths.iter().all(|p| p.exists()));
        let _ = fs::remove_dir_all(dir);
    }
}
