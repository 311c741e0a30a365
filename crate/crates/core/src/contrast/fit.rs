use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::inference::{asymptotic_cov, AsymptoticCovariance};
use super::optimizer::NelderMead;
use super::ContrastSample;
use crate::circ::{two_pi_over_three_gap, MixtureParams, Sample};
use crate::{Error, Result};

/// Contrast values closer than this are treated as ties.
const TIE_TOL: f64 = 1e-12;

/// Rectangular search domain for `(p, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub p: (f64, f64),
    pub alpha: (f64, f64),
    pub beta: (f64, f64),
}

impl Default for SearchBox {
    fn default() -> Self {
        let top = PI - 1e-9;
        Self { p: (0.01, 0.49), alpha: (0.0, top), beta: (0.0, top) }
    }
}

impl SearchBox {
    /// Default angle ranges with `p in [0.01, pmax]`.
    pub fn with_pmax(pmax: f64) -> Self {
        Self { p: (0.01_f64.min(pmax), pmax), ..Self::default() }
    }

    /// Upper bound on `p`.
    pub fn pmax(&self) -> f64 {
        self.p.1
    }

    pub fn validate(&self) -> Result<()> {
        let (plo, phi) = self.p;
        if !(plo > 0.0 && plo <= phi && phi < 1.0) {
            return Err(Error::domain(format!("p range must satisfy 0 < lo <= hi < 1, got [{plo}, {phi}]")));
        }
        for (name, (lo, hi)) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(lo >= 0.0 && lo <= hi && hi < PI) {
                return Err(Error::domain(format!("{name} range must satisfy 0 <= lo <= hi < pi, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    fn lower(&self) -> Vec<f64> {
        vec![self.p.0, self.alpha.0, self.beta.0]
    }

    fn upper(&self) -> Vec<f64> {
        vec![self.p.1, self.alpha.1, self.beta.1]
    }

    #[cfg(test)]
    fn contains(&self, x: &[f64; 3]) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(x[0], self.p) && inside(x[1], self.alpha) && inside(x[2], self.beta)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let mut u = |(lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        [u(self.p), u(self.alpha), u(self.beta)]
    }
}

/// Options for [`estimate_theta`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub n_starts: usize,
    /// Seed for the uniformly drawn starting points.
    pub seed: u64,
    pub search_box: SearchBox,
    /// Absolute tolerance on the contrast spread of the simplex.
    pub ftol: f64,
    /// Absolute tolerance on the parameter spread of the simplex.
    pub xtol: f64,
    pub max_iter: usize,
    /// `|beta - alpha|` this close to a multiple of `2pi/3` flags the fit.
    pub near_degenerate_radius: f64,
    pub compute_covariance: bool,
    /// Uniform points scored before the search, split into `n_starts` equal
    /// groups; each simplex starts from the lowest point of its group. Values
    /// below `2 * n_starts` use the raw draws.
    pub screen_draws: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            n_starts: 10,
            seed: 0,
            search_box: SearchBox::default(),
            ftol: 1e-10,
            xtol: 1e-8,
            max_iter: 2000,
            near_degenerate_radius: 0.05,
            compute_covariance: true,
            screen_draws: 300,
        }
    }
}

/// Result of one simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMinimum {
    pub start_index: usize,
    pub start: MixtureParams,
    pub theta: MixtureParams,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: MixtureParams,
    pub contrast_at_min: f64,
    pub n: usize,
    pub n_starts: usize,
    /// One entry per start, in start order.
    pub local_minima: Vec<LocalMinimum>,
    /// Index into `local_minima` of the selected run.
    pub selected: usize,
    pub covariance: Option<AsymptoticCovariance>,
    /// Why `covariance` is missing, when it was requested.
    pub inference_error: Option<String>,
    /// `beta_hat - alpha_hat` lies within the warning radius of a multiple of
    /// `2pi/3`.
    pub near_degenerate: bool,
}

impl FitResult {
    pub fn converged_starts(&self) -> usize {
        self.local_minima.iter().filter(|m| m.converged).count()
    }

    /// Flat `key = value` record.
    pub fn to_record(&self) -> String {
        let t = &self.theta_hat;
        let mut out = String::new();
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(out, "p = {:.12e}", t.p);
        let _ = writeln!(out, "alpha = {:.12e}", t.alpha);
        let _ = writeln!(out, "beta = {:.12e}", t.beta);
        let _ = writeln!(out, "contrast = {:.12e}", self.contrast_at_min);
        let _ = writeln!(out, "starts = {}", self.n_starts);
        let _ = writeln!(out, "converged_starts = {}", self.converged_starts());
        let _ = writeln!(out, "selected_start = {}", self.local_minima[self.selected].start_index);
        let _ = writeln!(out, "near_degenerate = {}", self.near_degenerate);
        match &self.covariance {
            Some(cov) => {
                let se = cov.std_errors();
                let _ = writeln!(out, "se_p = {:.6e}", se[0]);
                let _ = writeln!(out, "se_alpha = {:.6e}", se[1]);
                let _ = writeln!(out, "se_beta = {:.6e}", se[2]);
                let names = ["p", "alpha", "beta"];
                let c = cov.covariance();
                for i in 0..3 {
                    for j in i..3 {
                        let _ = writeln!(out, "cov_{}_{} = {:.6e}", names[i], names[j], c[i][j]);
                    }
                }
            }
            None => {
                if let Some(reason) = &self.inference_error {
                    let _ = writeln!(out, "inference_error = {reason}");
                }
            }
        }
        out
    }

    pub const CSV_HEADER: &'static str = "n,p,alpha,beta,contrast,se_p,se_alpha,se_beta,near_degenerate";

    /// One CSV row matching [`FitResult::CSV_HEADER`]; missing standard
    /// errors are written as `NaN`.
    pub fn to_csv_row(&self) -> String {
        let t = &self.theta_hat;
        let se = self.covariance.as_ref().map(|c| c.std_errors()).unwrap_or([f64::NAN; 3]);
        format!(
            "{},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{:.5e},{}",
            self.n, t.p, t.alpha, t.beta, self.contrast_at_min, se[0], se[1], se[2], self.near_degenerate
        )
    }
}

/// `(p, alpha, beta) -> (1 - p, beta, alpha)` when `p > 1/2`.
fn canonicalize(theta: MixtureParams) -> MixtureParams {
    if theta.p > 0.5 {
        theta.label_switched()
    } else {
        theta
    }
}

/// Minimizes `S_n` over the search box from `n_starts` uniform starting
/// points and keeps the lowest local minimum (first by start index on ties).
pub fn estimate_theta(sample: &Sample, opts: &FitOptions) -> Result<FitResult> {
    if opts.n_starts == 0 {
        return Err(Error::domain("at least one start is required"));
    }
    opts.search_box.validate()?;
    let contrast = ContrastSample::new(sample).map_err(|e| Error::Estimation(e.to_string()))?;
    let bx = &opts.search_box;
    let nm = NelderMead::new(bx.lower(), bx.upper()).with_tolerances(opts.ftol, opts.xtol, opts.max_iter);
    let objective = |x: &[f64]| contrast.value(&MixtureParams { p: x[0], alpha: x[1], beta: x[2] });

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // each start is the best of its own group of uniform draws: the valley
    // around the truth can be narrow, and separate groups keep the starts spread out
    let group = (opts.screen_draws / opts.n_starts).max(1);
    let starts: Vec<[f64; 3]> = (0..opts.n_starts)
        .map(|_| {
            let draws: Vec<[f64; 3]> = (0..group).map(|_| bx.draw(&mut rng)).collect();
            if group == 1 {
                return draws[0];
            }
            draws.into_iter().map(|x| (objective(&x), x)).min_by(|a, b| a.0.total_cmp(&b.0)).expect("nonempty group").1
        })
        .collect();
    let local_minima: Vec<LocalMinimum> = starts
        .iter()
        .enumerate()
        .map(|(start_index, start)| {
            let out = nm.minimize(objective, start);
            LocalMinimum {
                start_index,
                start: MixtureParams::from_array(*start),
                theta: MixtureParams::from_array([out.x[0], out.x[1], out.x[2]]),
                value: out.fx,
                iterations: out.iterations,
                converged: out.converged,
            }
        })
        .collect();

    if !local_minima.iter().any(|m| m.converged) {
        let mut msg = format!("none of the {} starts converged;", opts.n_starts);
        for m in &local_minima {
            let _ = write!(msg, " [start {}: S_n = {:.3e} after {} iterations]", m.start_index, m.value, m.iterations);
        }
        return Err(Error::Estimation(msg));
    }

    let mut selected = 0;
    for (i, m) in local_minima.iter().enumerate().skip(1) {
        if m.value < local_minima[selected].value - TIE_TOL {
            selected = i;
        }
    }
    let best = &local_minima[selected];
    let theta_hat = canonicalize(best.theta);
    let near_degenerate = two_pi_over_three_gap(theta_hat.beta - theta_hat.alpha) < opts.near_degenerate_radius;

    let (covariance, inference_error) = if opts.compute_covariance {
        match asymptotic_cov(sample, &theta_hat) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    Ok(FitResult {
        theta_hat,
        contrast_at_min: best.value,
        n: sample.len(),
        n_starts: opts.n_starts,
        local_minima,
        selected,
        covariance,
        inference_error,
        near_degenerate,
    })
}
