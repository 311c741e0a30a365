//! Identifiability of `(p, alpha, beta, f)` from the mixture density.
//!
//! Besides label switching and the joint shift by `pi`, two angle
//! configurations admit further aliases: `beta - alpha = pi`, where any
//! `f' = q f + (1 - q) f_pi` works with a matching weight, and
//! `beta - alpha = +-2pi/3`, where a three-shift combination of `f` produces
//! the same mixture.

use std::f64::consts::{PI, TAU};

use nalgebra::Matrix4;

use crate::circ::{angle_diff, ComponentDensity, MixtureParams, ANGLE_TOL};
use crate::{Error, Result};

/// Points of the grid used for residual and positivity checks.
pub const CHECK_GRID_POINTS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdentTag {
    Identifiable,
    /// `p = 1/2`: the only alias beyond the shift is the label switch, which
    /// now leaves `p` unchanged.
    LabelSwitchOnly,
    /// Identified up to a joint shift of both angles by `pi`; reported only
    /// when angles range over the full circle.
    PiShift,
    Bipolar,
    TwoPiOverThree,
    Collapsed,
    BoundaryP,
}

/// Range of the location parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleDomain {
    /// `[0, pi)`, where the joint `pi` shift leaves the domain.
    #[default]
    HalfCircle,
    FullCircle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AliasKind {
    LabelSwitch,
    PiShift,
    Bipolar {
        q: f64,
    },
    BipolarSwapped {
        q: f64,
    },
    /// `(alpha + pi, beta -+ pi/3)`.
    ThreeShift,
    /// `(alpha, beta +- 2pi/3)`, the previous alias shifted by `pi`.
    ThreeShiftAlternative,
}

/// Parameters `theta'` and a component `f' = sum_j w_j f(. - s_j)` giving the
/// same mixture as the original parameters and `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasRecipe {
    pub kind: AliasKind,
    /// `p'` may exceed any estimation bound.
    pub theta_prime: MixtureParams,
    /// `(shift, weight)` pairs; weights sum to one but may be negative.
    pub f_prime_weights: Vec<(f64, f64)>,
}

impl AliasRecipe {
    /// `f'(x)` for the component `f`.
    pub fn f_prime(&self, density: &ComponentDensity, x: f64) -> f64 {
        self.f_prime_weights.iter().map(|&(s, w)| w * density.eval(x - s)).sum()
    }

    /// `p' f'(x - alpha') + (1 - p') f'(x - beta')`.
    pub fn mixture(&self, density: &ComponentDensity, x: f64) -> f64 {
        let t = &self.theta_prime;
        t.p * self.f_prime(density, x - t.alpha) + (1.0 - t.p) * self.f_prime(density, x - t.beta)
    }

    /// Largest absolute difference from the original mixture over a uniform
    /// grid of `points` nodes.
    pub fn max_residual(&self, theta: &MixtureParams, density: &ComponentDensity, points: usize) -> f64 {
        grid(points)
            .map(|x| (self.mixture(density, x) - crate::circ::mixture_density(theta, density, x)).abs())
            .fold(0.0, f64::max)
    }

    /// Minimum of `f'` over a uniform grid of `points` nodes.
    pub fn min_f_prime(&self, density: &ComponentDensity, points: usize) -> f64 {
        grid(points).map(|x| self.f_prime(density, x)).fold(f64::INFINITY, f64::min)
    }

    /// Whether `f'` is a density on the check grid.
    pub fn f_prime_nonnegative(&self, density: &ComponentDensity) -> bool {
        self.min_f_prime(density, CHECK_GRID_POINTS) >= 0.0
    }

    pub fn weight_sum(&self) -> f64 {
        self.f_prime_weights.iter().map(|w| w.1).sum()
    }
}

fn grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| TAU * k as f64 / points as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentClass {
    pub tag: IdentTag,
    pub witnesses: Vec<AliasRecipe>,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    angle_diff(a, b).abs() <= tol
}

/// Classification on the default half-circle domain.
pub fn classify(theta: &MixtureParams, tol: f64) -> IdentClass {
    classify_on(theta, tol, AngleDomain::HalfCircle)
}

/// Tags `theta` and lists alias witnesses. The label switch and the joint
/// `pi` shift are always listed; degenerate configurations add their own.
pub fn classify_on(theta: &MixtureParams, tol: f64, domain: AngleDomain) -> IdentClass {
    let d = theta.beta - theta.alpha;
    let mut witnesses = vec![label_switch(theta), alias_pi_shift(theta)];
    let tag = if close(d, 0.0, tol) {
        IdentTag::Collapsed
    } else if theta.p <= tol || theta.p >= 1.0 - tol {
        IdentTag::BoundaryP
    } else if close(d, PI, tol) {
        if let Some(q) = bipolar_witness_weight(theta.p) {
            if let Ok(a) = alias_bipolar(theta, q) {
                witnesses.push(a);
            }
            if let Ok(a) = alias_bipolar_swapped(theta, q) {
                witnesses.push(a);
            }
        }
        IdentTag::Bipolar
    } else if close(d, TAU / 3.0, tol) || close(d, -TAU / 3.0, tol) {
        if let Ok(pair) = case4_pair(theta, tol) {
            witnesses.extend(pair);
        }
        IdentTag::TwoPiOverThree
    } else if (theta.p - 0.5).abs() <= tol {
        IdentTag::LabelSwitchOnly
    } else if domain == AngleDomain::FullCircle {
        IdentTag::PiShift
    } else {
        IdentTag::Identifiable
    };
    IdentClass { tag, witnesses }
}

/// A `q` with `p' = p / 2`, when one exists in `(1/2, 1]`.
fn bipolar_witness_weight(p: f64) -> Option<f64> {
    let (small, _) = if p <= 0.5 { (p, false) } else { (1.0 - p, true) };
    let q = (1.0 - 1.5 * small) / (1.0 - small);
    (q > 0.5 && q <= 1.0 && p <= 0.5).then_some(q)
}

fn label_switch(theta: &MixtureParams) -> AliasRecipe {
    AliasRecipe { kind: AliasKind::LabelSwitch, theta_prime: theta.label_switched(), f_prime_weights: vec![(0.0, 1.0)] }
}

/// `(p, alpha + pi, beta + pi)` with `f' = f_pi`.
pub fn alias_pi_shift(theta: &MixtureParams) -> AliasRecipe {
    AliasRecipe {
        kind: AliasKind::PiShift,
        theta_prime: MixtureParams { p: theta.p, alpha: theta.alpha + PI, beta: theta.beta + PI },
        f_prime_weights: vec![(PI, 1.0)],
    }
}

/// Alias for `beta - alpha = +-2pi/3` with `p' = (1 - 2p)/(2 - 3p)` and
/// `f' = (1 - p) f_{pi/3} + (1 - p) f_{-pi/3} + (2p - 1) f_pi`.
pub fn alias_case4(theta: &MixtureParams) -> Result<AliasRecipe> {
    Ok(case4_pair(theta, ANGLE_TOL)?[0].clone())
}

/// Both three-shift aliases; the second is the first shifted by `pi`.
pub fn alias_case4_both(theta: &MixtureParams) -> Result<[AliasRecipe; 2]> {
    case4_pair(theta, ANGLE_TOL)
}

fn case4_pair(theta: &MixtureParams, tol: f64) -> Result<[AliasRecipe; 2]> {
    let d = theta.beta - theta.alpha;
    let sign = if close(d, TAU / 3.0, tol) {
        1.0
    } else if close(d, -TAU / 3.0, tol) {
        -1.0
    } else {
        return Err(Error::domain(format!(
            "beta - alpha must be +-2pi/3, got {}",
            angle_diff(theta.beta, theta.alpha)
        )));
    };
    let p = theta.p;
    if (p - 2.0 / 3.0).abs() < 1e-12 {
        return Err(Error::domain("p = 2/3 has no three-shift alias"));
    }
    let p_prime = (1.0 - 2.0 * p) / (2.0 - 3.0 * p);
    let weights = vec![(PI / 3.0, 1.0 - p), (-PI / 3.0, 1.0 - p), (PI, 2.0 * p - 1.0)];
    let first = AliasRecipe {
        kind: AliasKind::ThreeShift,
        theta_prime: MixtureParams { p: p_prime, alpha: theta.alpha + PI, beta: theta.beta - sign * PI / 3.0 },
        f_prime_weights: weights.clone(),
    };
    let second = AliasRecipe {
        kind: AliasKind::ThreeShiftAlternative,
        theta_prime: MixtureParams { p: p_prime, alpha: theta.alpha, beta: theta.beta + sign * TAU / 3.0 },
        f_prime_weights: weights.into_iter().map(|(s, w)| (s + PI, w)).collect(),
    };
    Ok([first, second])
}

fn bipolar_weight(theta: &MixtureParams, q: f64, tol: f64) -> Result<f64> {
    if !close(theta.beta - theta.alpha, PI, tol) {
        return Err(Error::domain(format!("beta - alpha must be pi, got {}", angle_diff(theta.beta, theta.alpha))));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(format!("q must lie in (0, 1], got {q}")));
    }
    if (q - 0.5).abs() < 1e-12 {
        return Err(Error::domain("q = 1/2 makes f' invariant under the pi shift; no weight matches"));
    }
    let p_prime = (theta.p + q - 1.0) / (2.0 * q - 1.0);
    if !(p_prime > 0.0 && p_prime <= theta.p + 1e-15) {
        return Err(Error::domain(format!("q = {q} gives p' = {p_prime} outside (0, {}]", theta.p)));
    }
    Ok(p_prime.min(theta.p))
}

/// Alias for `beta - alpha = pi` with `f' = q f + (1 - q) f_pi` and
/// `p' = (p + q - 1) / (2q - 1)`.
pub fn alias_bipolar(theta: &MixtureParams, q: f64) -> Result<AliasRecipe> {
    let p_prime = bipolar_weight(theta, q, ANGLE_TOL)?;
    Ok(AliasRecipe {
        kind: AliasKind::Bipolar { q },
        theta_prime: MixtureParams { p: p_prime, ..*theta },
        f_prime_weights: vec![(0.0, q), (PI, 1.0 - q)],
    })
}

/// The bipolar alias with the angles exchanged: `(p', beta, alpha)` and
/// `f' = q f_pi + (1 - q) f`.
pub fn alias_bipolar_swapped(theta: &MixtureParams, q: f64) -> Result<AliasRecipe> {
    let p_prime = bipolar_weight(theta, q, ANGLE_TOL)?;
    Ok(AliasRecipe {
        kind: AliasKind::BipolarSwapped { q },
        theta_prime: MixtureParams { p: p_prime, alpha: theta.beta, beta: theta.alpha },
        f_prime_weights: vec![(PI, q), (0.0, 1.0 - q)],
    })
}

/// Determinant of the 4x4 matrix `(sin(i gamma_j))` and the closed form
/// `64 prod_k sin(gamma_k) prod_{i<j} (cos gamma_i - cos gamma_j)`.
pub fn det_sin_identity(gamma: [f64; 4]) -> (f64, f64) {
    let m = Matrix4::from_fn(|i, j| ((i + 1) as f64 * gamma[j]).sin());
    let lhs = m.determinant();
    let mut rhs = 64.0 * gamma.iter().map(|g| g.sin()).product::<f64>();
    for i in 0..4 {
        for j in i + 1..4 {
            rhs *= gamma[i].cos() - gamma[j].cos();
        }
    }
    (lhs, rhs)
}
