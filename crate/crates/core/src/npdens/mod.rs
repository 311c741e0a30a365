//! Nonparametric estimation of the component density `f` once `theta` is
//! known or estimated.
//!
//! The plug-in coefficients `f_hat^{*l} = g_hat^{*l} / M^l(theta_hat)` feed a
//! projection estimator `f_hat_L(x) = sum_{|l| <= L} f_hat^{*l} e^{ilx}` whose
//! resolution `L` minimizes `-sum_{|l| <= L} |f_hat^{*l}|^2 + lambda (2L + 1) / n`.
//! The constant `lambda` is either supplied or calibrated by the slope
//! heuristic.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::circ::{ComponentDensity, MixtureParams, Sample};
use crate::contrast::{weight, FitResult};
use crate::{Error, Result};

/// Default upper bound on the mixing weight.
pub const DEFAULT_PMAX: f64 = 0.49;

/// Default number of points of the evaluation grid.
pub const DEFAULT_GRID_POINTS: usize = 512;

/// Coefficient magnitude squared below which the tail of a named family is
/// dropped.
const TAIL_CUTOFF: f64 = 1e-16;

/// Default `L_max = max(10, floor(n^{1/3}))`.
pub fn default_max_level(n: usize) -> usize {
    // integer cube root, robust to rounding of cbrt
    let mut r = (n as f64).cbrt().floor() as usize;
    while (r + 1).pow(3) <= n {
        r += 1;
    }
    while r > 0 && r.pow(3) > n {
        r -= 1;
    }
    r.max(10)
}

/// Conjugate-symmetric Fourier coefficients `c_l`, `|l| <= L`, of a real
/// function. Only `l >= 0` is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs {
    nonneg: Vec<Complex64>,
}

impl FourierCoeffs {
    /// `values[l]` is `c_l` for `l = 0..=L`; `c_0` must be real.
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        match values.first() {
            None => Err(Error::domain("at least the zeroth coefficient is required")),
            Some(c0) if c0.im != 0.0 => Err(Error::domain("the zeroth coefficient must be real")),
            Some(_) => Ok(Self { nonneg: values }),
        }
    }

    /// Exact coefficients of `density` up to `max_level`.
    pub fn of_density(density: &ComponentDensity, max_level: usize) -> Self {
        let mut nonneg: Vec<Complex64> = (0..=max_level as i64).map(|l| density.fourier(l)).collect();
        nonneg[0].im = 0.0;
        Self { nonneg }
    }

    pub fn max_level(&self) -> usize {
        self.nonneg.len() - 1
    }

    /// `c_l` for any `l`, zero beyond the stored range.
    pub fn get(&self, l: i64) -> Complex64 {
        match self.nonneg.get(l.unsigned_abs() as usize) {
            None => Complex64::new(0.0, 0.0),
            Some(c) if l < 0 => c.conj(),
            Some(c) => *c,
        }
    }

    /// Coefficients for `l = 0..=L`.
    pub fn nonnegative(&self) -> &[Complex64] {
        &self.nonneg
    }

    pub fn truncated(&self, level: usize) -> Self {
        Self { nonneg: self.nonneg[..=level.min(self.max_level())].to_vec() }
    }

    /// `sum_{|l| <= L} |c_l|^2`.
    pub fn partial_energy(&self, level: usize) -> f64 {
        let top = level.min(self.max_level());
        self.nonneg[0].norm_sqr() + 2.0 * self.nonneg[1..=top].iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `sum_{|l| <= L} c_l e^{ilx}`, real by conjugate symmetry.
    pub fn eval(&self, x: f64) -> f64 {
        let mut total = self.nonneg[0].re;
        for (l, c) in self.nonneg.iter().enumerate().skip(1) {
            let e = Complex64::from_polar(1.0, l as f64 * x);
            total += 2.0 * (c * e).re;
        }
        total
    }

    /// CSV table `l,re,im` for `l = -L..=L`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("l,re,im\n");
        let top = self.max_level() as i64;
        for l in -top..=top {
            let c = self.get(l);
            let _ = writeln!(out, "{l},{:.10e},{:.10e}", c.re, c.im);
        }
        out
    }
}

/// Plug-in estimates of the mixture and component coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCoeffs {
    /// `g_hat^{*l} = (1/2pi n) sum_k e^{-ilX_k}`.
    pub g_hat: FourierCoeffs,
    /// `f_hat^{*l} = g_hat^{*l} / M^l(theta_used)`.
    pub f_hat: FourierCoeffs,
    pub n: usize,
    pub theta_used: MixtureParams,
}

/// Plug-in coefficients for `|l| <= max_level`.
///
/// Fails with [`Error::Degeneracy`] if some `|M^l(theta)|` is below the guard
/// `1 - 2 pmax`.
pub fn empirical_coeffs(
    sample: &Sample,
    theta: &MixtureParams,
    max_level: usize,
    pmax: f64,
) -> Result<EmpiricalCoeffs> {
    if !(pmax > 0.0 && pmax < 0.5) {
        return Err(Error::domain(format!("pmax must lie in (0, 1/2), got {pmax}")));
    }
    let bound = 1.0 - 2.0 * pmax;
    let n = sample.len();
    let norm = 1.0 / (TAU * n as f64);
    let mut g = vec![Complex64::new(1.0 / TAU, 0.0)];
    let mut f = vec![Complex64::new(1.0 / TAU, 0.0)];
    for l in 1..=max_level as i64 {
        let m = weight(theta, l);
        let modulus = m.norm();
        if modulus < bound * (1.0 - 1e-12) {
            return Err(Error::Degeneracy { l, modulus, bound });
        }
        let lf = l as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for &x in sample.angles() {
            let (s, c) = (lf * x).sin_cos();
            re += c;
            im -= s;
        }
        let gl = Complex64::new(re * norm, im * norm);
        g.push(gl);
        f.push(gl / m);
    }
    Ok(EmpiricalCoeffs {
        g_hat: FourierCoeffs { nonneg: g },
        f_hat: FourierCoeffs { nonneg: f },
        n,
        theta_used: *theta,
    })
}

/// Outcome of the penalized resolution choice.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSelection {
    pub level: usize,
    /// `(L, -sum_{|l| <= L} |f_hat^{*l}|^2 + lambda (2L + 1) / n)` for every
    /// candidate, in the order given.
    pub path: Vec<(usize, f64)>,
}

/// Penalized criterion at resolution `level`.
pub fn penalized_criterion(coeffs: &FourierCoeffs, lambda: f64, n: usize, level: usize) -> f64 {
    -coeffs.partial_energy(level) + lambda * (2 * level + 1) as f64 / n as f64
}

/// Smallest minimizer of the penalized criterion over `levels`.
pub fn select_level(coeffs: &FourierCoeffs, lambda: f64, n: usize, levels: &[usize]) -> Result<LevelSelection> {
    if levels.is_empty() {
        return Err(Error::domain("the candidate set of resolutions is empty"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("penalty constant must be positive and finite, got {lambda}")));
    }
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    if let Some(&bad) = levels.iter().find(|&&l| l > coeffs.max_level()) {
        return Err(Error::domain(format!(
            "resolution {bad} exceeds the {} available coefficients",
            coeffs.max_level()
        )));
    }
    let path: Vec<(usize, f64)> = levels.iter().map(|&l| (l, penalized_criterion(coeffs, lambda, n, l))).collect();
    let mut best = path[0];
    for &(l, v) in &path[1..] {
        if v < best.1 || (v == best.1 && l < best.0) {
            best = (l, v);
        }
    }
    Ok(LevelSelection { level: best.0, path })
}

/// Least-squares fit behind the slope heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// `2 * slope`.
    pub lambda: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `(L, (2L + 1) / n, sum_{|l| <= L} |f_hat^{*l}|^2)` for every candidate.
    pub couples: Vec<(usize, f64, f64)>,
    /// Smallest resolution inside the regression window.
    pub window_start: usize,
}

impl SlopeFit {
    /// CSV table of the couples with a flag for the regression window.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,penalty_shape,energy,in_window\n");
        for &(l, x, y) in &self.couples {
            let _ = writeln!(out, "{l},{x:.10e},{y:.10e},{}", l >= self.window_start);
        }
        out
    }
}

/// Slope heuristic with the regression window on the last half of `levels`.
pub fn slope_lambda(coeffs: &FourierCoeffs, n: usize, levels: &[usize]) -> Result<SlopeFit> {
    slope_lambda_window(coeffs, n, levels, 0.5)
}

/// Slope heuristic regressing the energy on `(2L + 1) / n` for
/// `L >= ceil((1 - fraction) L_max)`; the penalty constant is twice the slope.
pub fn slope_lambda_window(coeffs: &FourierCoeffs, n: usize, levels: &[usize], fraction: f64) -> Result<SlopeFit> {
    if levels.len() < 8 {
        return Err(Error::Calibration(format!(
            "the slope heuristic needs at least 8 resolutions, got {}",
            levels.len()
        )));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::domain(format!("window fraction must lie in (0, 1], got {fraction}")));
    }
    if n == 0 {
        return Err(Error::domain("sample size must be positive"));
    }
    if let Some(&bad) = levels.iter().find(|&&l| l > coeffs.max_level()) {
        return Err(Error::domain(format!(
            "resolution {bad} exceeds the {} available coefficients",
            coeffs.max_level()
        )));
    }
    let top = *levels.iter().max().expect("nonempty");
    let window_start = ((1.0 - fraction) * top as f64 - 1e-9).ceil().max(0.0) as usize;
    let couples: Vec<(usize, f64, f64)> =
        levels.iter().map(|&l| (l, (2 * l + 1) as f64 / n as f64, coeffs.partial_energy(l))).collect();
    let window: Vec<(f64, f64)> = couples.iter().filter(|c| c.0 >= window_start).map(|&(_, x, y)| (x, y)).collect();
    if window.len() < 4 {
        return Err(Error::Calibration(format!(
            "only {} points in the regression window, at least 4 are needed",
            window.len()
        )));
    }
    let (slope, intercept) = least_squares(&window);
    Ok(SlopeFit { lambda: 2.0 * slope, slope, intercept, couples, window_start })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Theoretical lower bound `(3/pi^2)(1 + 1/eps)(1 - 2P)^{-2}` on the penalty
/// constant. Reported for comparison only.
pub fn theoretical_penalty_floor(eps: f64, pmax: f64) -> f64 {
    3.0 / (PI * PI) * (1.0 + 1.0 / eps) / (1.0 - 2.0 * pmax).powi(2)
}

/// How the penalty constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Explicit(f64),
    SlopeHeuristic { window_fraction: f64 },
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::SlopeHeuristic { window_fraction: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityOptions {
    /// Largest candidate resolution; `None` uses [`default_max_level`].
    pub max_level: Option<usize>,
    pub penalty: Penalty,
    pub pmax: f64,
}

impl Default for DensityOptions {
    fn default() -> Self {
        Self { max_level: None, penalty: Penalty::default(), pmax: DEFAULT_PMAX }
    }
}

/// The selected projection estimator with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    /// `f_hat^{*l}` for `|l| <= level`.
    pub coeffs: FourierCoeffs,
    pub level: usize,
    pub lambda: f64,
    pub contrast_path: Vec<(usize, f64)>,
    pub slope: Option<SlopeFit>,
    /// All plug-in coefficients up to the largest candidate.
    pub empirical: EmpiricalCoeffs,
}

impl DensityEstimate {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.eval(x)
    }

    /// Values on `points` equispaced nodes `2 pi k / points`.
    pub fn eval_grid(&self, points: usize) -> Vec<(f64, f64)> {
        grid(points).map(|x| (x, self.eval(x))).collect()
    }

    /// Grid values with negative parts set to zero and rescaled to integrate
    /// to one (trapezoid rule on the periodic grid). The raw projection is
    /// left untouched.
    pub fn eval_grid_clipped(&self, points: usize) -> Vec<(f64, f64)> {
        let raw: Vec<(f64, f64)> = self.eval_grid(points).into_iter().map(|(x, v)| (x, v.max(0.0))).collect();
        let mass: f64 = raw.iter().map(|p| p.1).sum::<f64>() * TAU / points as f64;
        if mass > 0.0 {
            raw.into_iter().map(|(x, v)| (x, v / mass)).collect()
        } else {
            raw.into_iter().map(|(x, _)| (x, 1.0 / TAU)).collect()
        }
    }

    /// CSV curve `x,f_hat[,f_true]`.
    pub fn curve_csv(&self, points: usize, truth: Option<&ComponentDensity>) -> String {
        let mut out = String::from(if truth.is_some() { "x,f_hat,f_true\n" } else { "x,f_hat\n" });
        for (x, v) in self.eval_grid(points) {
            match truth {
                Some(d) => {
                    let _ = writeln!(out, "{x:.10e},{v:.10e},{:.10e}", d.eval(x));
                }
                None => {
                    let _ = writeln!(out, "{x:.10e},{v:.10e}");
                }
            }
        }
        out
    }
}

fn grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| TAU * k as f64 / points as f64)
}

/// Plug-in coefficients at the fitted `theta`, penalty calibration, and
/// resolution selection over `{0, ..., L_max}`.
pub fn estimate_density(sample: &Sample, fit: &FitResult, opts: &DensityOptions) -> Result<DensityEstimate> {
    estimate_density_at(sample, &fit.theta_hat, opts)
}

/// As [`estimate_density`] with `theta` given directly.
pub fn estimate_density_at(sample: &Sample, theta: &MixtureParams, opts: &DensityOptions) -> Result<DensityEstimate> {
    let max_level = opts.max_level.unwrap_or_else(|| default_max_level(sample.len()));
    let empirical = empirical_coeffs(sample, theta, max_level, opts.pmax)?;
    let levels: Vec<usize> = (0..=max_level).collect();
    let n = sample.len();
    let (lambda, slope) = match opts.penalty {
        Penalty::Explicit(lambda) => (lambda, None),
        Penalty::SlopeHeuristic { window_fraction } => {
            let fit = slope_lambda_window(&empirical.f_hat, n, &levels, window_fraction)?;
            if !(fit.lambda > 0.0) {
                return Err(Error::Calibration(format!(
                    "the slope heuristic produced a nonpositive penalty constant {:.3e}",
                    fit.lambda
                )));
            }
            (fit.lambda, Some(fit))
        }
    };
    let selection = select_level(&empirical.f_hat, lambda, n, &levels)?;
    Ok(DensityEstimate {
        coeffs: empirical.f_hat.truncated(selection.level),
        level: selection.level,
        lambda,
        contrast_path: selection.path,
        slope,
        empirical,
    })
}

/// Squared `L^2` distance `(1/2pi) int (f_hat - f)^2 = sum_l |f_hat^{*l} - f^{*l}|^2`.
pub fn l2_error(estimate: &FourierCoeffs, density: &ComponentDensity) -> f64 {
    let top = estimate.max_level() as i64;
    let mut head = (estimate.get(0) - density.fourier(0)).norm_sqr();
    let mut kept = density.fourier(0).norm_sqr();
    for l in 1..=top {
        let f = density.fourier(l);
        head += 2.0 * (estimate.get(l) - f).norm_sqr();
        kept += 2.0 * f.norm_sqr();
    }
    let tail = match density.kind() {
        crate::DensityKind::Tabulated(_) => density.norm_sq().map(|total| (total - kept).max(0.0)).unwrap_or(0.0),
        _ => {
            // named families have coefficients decreasing in |l|
            let mut tail = 0.0;
            let mut l = top + 1;
            loop {
                let term = 2.0 * density.fourier(l).norm_sqr();
                if term < TAIL_CUTOFF {
                    break;
                }
                tail += term;
                l += 1;
            }
            tail
        }
    };
    head + tail
}
