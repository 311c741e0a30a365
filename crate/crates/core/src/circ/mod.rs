//! Circular arithmetic, component densities and samplers for the rotation
//! mixture `g(x) = p f(x - alpha) + (1 - p) f(x - beta)`.

mod bessel;
mod density;

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;

pub use bessel::{bessel_i_scaled, bessel_ratio};
pub use density::{ComponentDensity, DensityKind, TabulatedDensity, MIN_TABULATED_NODES};

use crate::{Error, Result};

/// Tolerance for angle comparisons, in radians.
pub const ANGLE_TOL: f64 = 1e-9;

/// Reduces `x` to its representative in `[0, 2pi)`.
///
/// Non-finite input is passed through; use [`Angle::new`] for a checked
/// version.
pub fn normalize_radians(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` reduced to `(-pi, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = normalize_radians(a - b);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Signed difference `a - b` reduced modulo `pi` to `(-pi/2, pi/2]`.
pub fn angle_diff_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > 0.5 * PI {
        d - PI
    } else {
        d
    }
}

/// A point on the circle, stored as its representative in `[0, 2pi)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::domain(format!("angle must be finite, got {radians}")));
        }
        Ok(Angle(normalize_radians(radians)))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> f64 {
        a.0
    }
}

/// Mixture parameters `theta = (p, alpha, beta)`.
///
/// The struct itself only requires finite values with `p` in `[0, 1]`; the
/// narrower estimation domain `p in (0, P]`, `alpha, beta in [0, pi)` is
/// checked by [`MixtureParams::check_estimation_domain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl MixtureParams {
    pub fn new(p: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
            return Err(Error::domain(format!("mixing weight must lie in [0, 1], got {p}")));
        }
        if !(alpha.is_finite() && beta.is_finite()) {
            return Err(Error::domain("angles must be finite"));
        }
        Ok(Self { p, alpha, beta })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p, self.alpha, self.beta]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self { p: v[0], alpha: v[1], beta: v[2] }
    }

    /// `(p, alpha, beta) -> (1 - p, beta, alpha)`, the same mixture.
    pub fn label_switched(&self) -> Self {
        Self { p: 1.0 - self.p, alpha: self.beta, beta: self.alpha }
    }

    /// Checks `p in (0, pmax]` with `pmax < 1/2`, angles in `[0, pi)`, and
    /// `beta - alpha` away from multiples of `2pi/3`.
    pub fn check_estimation_domain(&self, pmax: f64) -> Result<()> {
        if !(pmax > 0.0 && pmax < 0.5) {
            return Err(Error::domain(format!("pmax must lie in (0, 1/2), got {pmax}")));
        }
        if !(self.p > 0.0 && self.p <= pmax) {
            return Err(Error::domain(format!("p must lie in (0, {pmax}], got {}", self.p)));
        }
        for (name, a) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..PI).contains(&a) {
                return Err(Error::domain(format!("{name} must lie in [0, pi), got {a}")));
            }
        }
        if two_pi_over_three_gap(self.beta - self.alpha) < ANGLE_TOL {
            return Err(Error::domain("beta - alpha is a multiple of 2pi/3; the model is not identifiable"));
        }
        Ok(())
    }
}

impl fmt::Display for MixtureParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.p, self.alpha, self.beta)
    }
}

/// Distance from `d` to the nearest multiple of `2pi/3`.
pub fn two_pi_over_three_gap(d: f64) -> f64 {
    let period = TAU / 3.0;
    let r = d.rem_euclid(period);
    r.min(period - r)
}

/// Provenance attached to a sample.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleMeta {
    pub seed: Option<u64>,
    pub true_theta: Option<MixtureParams>,
    pub density: Option<String>,
    /// Latent component labels, `true` for the `alpha` component.
    pub labels: Option<Vec<bool>>,
}

/// An ordered collection of angles in `[0, 2pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    angles: Vec<f64>,
    pub meta: SampleMeta,
}

impl Sample {
    /// Normalizes every angle; rejects empty or non-finite input.
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::domain("a sample needs at least one angle"));
        }
        let angles = angles.into_iter().map(|a| Angle::new(a).map(Angle::value)).collect::<Result<Vec<_>>>()?;
        Ok(Self { angles, meta: SampleMeta::default() })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.meta.seed = Some(seed);
        self
    }

    /// Reads newline-delimited radians; blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut angles = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Parse(format!("line {}: not a number: `{line}`", i + 1)))?;
            angles.push(v);
        }
        Self::new(angles)
    }

    /// One angle per line, 12 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.angles.len() * 20);
        for a in &self.angles {
            out.push_str(&format!("{a:.11e}\n"));
        }
        out
    }
}

/// `n` i.i.d. draws from `density`.
pub fn sample_component<R: Rng + ?Sized>(density: &ComponentDensity, n: usize, rng: &mut R) -> Result<Sample> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let angles = (0..n).map(|_| density.draw(rng)).collect();
    Ok(Sample { angles, meta: SampleMeta { density: Some(density.to_string()), ..Default::default() } })
}

/// `n` draws `X = Y + eps (mod 2pi)` with `Y ~ f` and `eps = alpha` with
/// probability `p`, `beta` otherwise. Latent labels are kept in the metadata.
pub fn sample_mixture<R: Rng + ?Sized>(
    theta: &MixtureParams,
    density: &ComponentDensity,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let mut angles = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let first = rng.random::<f64>() < theta.p;
        let shift = if first { theta.alpha } else { theta.beta };
        angles.push(normalize_radians(density.draw(rng) + shift));
        labels.push(first);
    }
    Ok(Sample {
        angles,
        meta: SampleMeta {
            seed: None,
            true_theta: Some(*theta),
            density: Some(density.to_string()),
            labels: Some(labels),
        },
    })
}

/// `g(x) = p f(x - alpha) + (1 - p) f(x - beta)`.
pub fn mixture_density(theta: &MixtureParams, density: &ComponentDensity, x: f64) -> f64 {
    theta.p * density.eval(x - theta.alpha) + (1.0 - theta.p) * density.eval(x - theta.beta)
}
