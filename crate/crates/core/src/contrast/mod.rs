//! Minimum-contrast estimation of `theta = (p, alpha, beta)`.
//!
//! The contrast only uses harmonics `1 <= |l| <= 4`. For each of them the
//! rotation weight is `M^l(theta) = p e^{-i alpha l} + (1 - p) e^{-i beta l}`
//! and the per-observation score is `Z_k^l = Im(e^{i l X_k} M^l) / (2 pi)`.
//! The empirical contrast is the U-statistic
//!
//! ```text
//! S_n(theta) = 1 / (n (n - 1)) sum_{l=-4}^{4} sum_{k != j} Z_k^l Z_j^l
//! ```
//!
//! which is unbiased for the population contrast
//! `S(theta) = sum_l Im(g^{*l} conj(M^l(theta)))^2`.

mod fit;
mod inference;
mod optimizer;

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::circ::{ComponentDensity, MixtureParams, Sample};
use crate::{Error, Result};

pub use fit::{estimate_theta, FitOptions, FitResult, LocalMinimum, SearchBox};
pub use inference::{asymptotic_cov, AsymptoticCovariance, RCOND_MIN};
pub use optimizer::{NelderMead, NelderMeadOutcome};

/// Largest harmonic entering the contrast.
pub const MAX_HARMONIC: i64 = 4;

/// `M^l(theta)`.
pub fn weight(theta: &MixtureParams, l: i64) -> Complex64 {
    let lf = l as f64;
    Complex64::from_polar(theta.p, -lf * theta.alpha) + Complex64::from_polar(1.0 - theta.p, -lf * theta.beta)
}

/// Gradient of `M^l` with respect to `(p, alpha, beta)`.
pub fn weight_grad(theta: &MixtureParams, l: i64) -> [Complex64; 3] {
    let lf = l as f64;
    let ea = Complex64::from_polar(1.0, -lf * theta.alpha);
    let eb = Complex64::from_polar(1.0, -lf * theta.beta);
    let minus_il = Complex64::new(0.0, -lf);
    [ea - eb, minus_il * theta.p * ea, minus_il * (1.0 - theta.p) * eb]
}

/// Hessian of `M^l` with respect to `(p, alpha, beta)`.
pub fn weight_hess(theta: &MixtureParams, l: i64) -> [[Complex64; 3]; 3] {
    let lf = l as f64;
    let ea = Complex64::from_polar(1.0, -lf * theta.alpha);
    let eb = Complex64::from_polar(1.0, -lf * theta.beta);
    let il = Complex64::new(0.0, lf);
    let zero = Complex64::new(0.0, 0.0);
    let pa = -il * ea;
    let pb = il * eb;
    [[zero, pa, pb], [pa, -lf * lf * theta.p * ea, zero], [pb, zero, -lf * lf * (1.0 - theta.p) * eb]]
}

/// `Im(e^{ilx} w) / (2 pi)`.
fn im_rotated(x: f64, l: i64, w: Complex64) -> f64 {
    (Complex64::from_polar(1.0, l as f64 * x) * w).im / TAU
}

/// `Z^l(x; theta) = Im(e^{ilx} M^l(theta)) / (2 pi)`.
pub fn score(x: f64, l: i64, theta: &MixtureParams) -> f64 {
    im_rotated(x, l, weight(theta, l))
}

/// Gradient of [`score`] with respect to `theta`.
pub fn score_grad(x: f64, l: i64, theta: &MixtureParams) -> [f64; 3] {
    weight_grad(theta, l).map(|w| im_rotated(x, l, w))
}

/// Hessian of [`score`] with respect to `theta`.
pub fn score_hess(x: f64, l: i64, theta: &MixtureParams) -> [[f64; 3]; 3] {
    weight_hess(theta, l).map(|row| row.map(|w| im_rotated(x, l, w)))
}

/// Contrast value with its analytic gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastValue {
    pub value: f64,
    pub gradient: [f64; 3],
    pub hessian: [[f64; 3]; 3],
}

/// Trigonometric moments `sum_k cos(l X_k)`, `sum_k sin(l X_k)` and their
/// products for one harmonic.
#[derive(Debug, Clone, Copy, Default)]
struct HarmonicMoments {
    c: f64,
    s: f64,
    cc: f64,
    ss: f64,
    cs: f64,
}

impl HarmonicMoments {
    /// `sum_k Im(u_k w)` with `u_k = e^{i l X_k}`.
    fn linear(&self, w: Complex64) -> f64 {
        w.re * self.s + w.im * self.c
    }

    /// `sum_k Im(u_k w1) Im(u_k w2)`.
    fn quadratic(&self, w1: Complex64, w2: Complex64) -> f64 {
        w1.re * w2.re * self.ss + (w1.re * w2.im + w1.im * w2.re) * self.cs + w1.im * w2.im * self.cc
    }

    /// `(2 pi)^{-2} sum_{k != j} Im(u_k w1) Im(u_j w2)`.
    fn off_diagonal(&self, w1: Complex64, w2: Complex64) -> f64 {
        (self.linear(w1) * self.linear(w2) - self.quadratic(w1, w2)) / (TAU * TAU)
    }
}

/// A sample reduced to the sufficient statistics of the contrast.
///
/// Every `Z_k^l` is linear in `(cos l X_k, sin l X_k)`, so the double sum over
/// `k != j` collapses to `(sum_k Z_k)^2 - sum_k Z_k^2`, and both terms are
/// bilinear forms in five trigonometric moments per harmonic. After the O(n)
/// reduction each evaluation of the contrast and its derivatives is O(1).
#[derive(Debug, Clone)]
pub struct ContrastSample {
    n: usize,
    moments: [HarmonicMoments; MAX_HARMONIC as usize],
}

impl ContrastSample {
    pub fn new(sample: &Sample) -> Result<Self> {
        Self::from_angles(sample.angles())
    }

    pub fn from_angles(angles: &[f64]) -> Result<Self> {
        let n = angles.len();
        if n < 2 {
            return Err(Error::domain(format!("the contrast needs at least 2 observations, got {n}")));
        }
        let mut moments = [HarmonicMoments::default(); MAX_HARMONIC as usize];
        for (idx, m) in moments.iter_mut().enumerate() {
            let l = (idx + 1) as f64;
            let mut acc = [Neumaier::default(); 5];
            for &x in angles {
                let (s, c) = (l * x).sin_cos();
                acc[0].add(c);
                acc[1].add(s);
                acc[2].add(c * c);
                acc[3].add(s * s);
                acc[4].add(c * s);
            }
            *m = HarmonicMoments {
                c: acc[0].sum(),
                s: acc[1].sum(),
                cc: acc[2].sum(),
                ss: acc[3].sum(),
                cs: acc[4].sum(),
            };
        }
        Ok(Self { n, moments })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn pair_count(&self) -> f64 {
        let n = self.n as f64;
        n * (n - 1.0)
    }

    /// `S_n(theta)`. Can be slightly negative: the U-statistic is unbiased
    /// for a nonnegative quantity but is not itself constrained.
    pub fn value(&self, theta: &MixtureParams) -> f64 {
        let mut total = 0.0;
        for (idx, m) in self.moments.iter().enumerate() {
            let w = weight(theta, idx as i64 + 1);
            total += m.off_diagonal(w, w);
        }
        // harmonics -l contribute the same as +l; l = 0 contributes nothing
        2.0 * total / self.pair_count()
    }

    /// `S_n(theta)` with gradient and Hessian.
    pub fn evaluate(&self, theta: &MixtureParams) -> ContrastValue {
        let mut value = 0.0;
        let mut gradient = [0.0; 3];
        let mut hessian = [[0.0; 3]; 3];
        for (idx, m) in self.moments.iter().enumerate() {
            let l = idx as i64 + 1;
            let w = weight(theta, l);
            let dw = weight_grad(theta, l);
            let d2w = weight_hess(theta, l);
            value += m.off_diagonal(w, w);
            for i in 0..3 {
                gradient[i] += m.off_diagonal(dw[i], w);
                for j in i..3 {
                    hessian[i][j] += m.off_diagonal(d2w[i][j], w) + m.off_diagonal(dw[i], dw[j]);
                }
            }
        }
        let scale = 2.0 / self.pair_count();
        value *= scale;
        for i in 0..3 {
            gradient[i] *= 2.0 * scale;
            for j in i..3 {
                hessian[i][j] *= 2.0 * scale;
                hessian[j][i] = hessian[i][j];
            }
        }
        ContrastValue { value, gradient, hessian }
    }

    /// `(1/n) sum_k dZ_k^l / dtheta` for `1 <= l <= 4`.
    pub(crate) fn mean_score_grad(&self, theta: &MixtureParams, l: i64) -> [f64; 3] {
        let m = &self.moments[(l - 1) as usize];
        weight_grad(theta, l).map(|w| m.linear(w) / (TAU * self.n as f64))
    }
}

/// Compensated summation.
#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `S_n(theta)` for a sample; see [`ContrastSample`] to amortize the O(n)
/// reduction across many evaluations.
pub fn empirical_contrast(sample: &Sample, theta: &MixtureParams) -> Result<ContrastValue> {
    Ok(ContrastSample::new(sample)?.evaluate(theta))
}

/// Population contrast `S(theta) = 2 sum_{l=1}^{4} Im(g^{*l} conj(M^l(theta)))^2`
/// with `g^{*l} = M^l(theta0) f^{*l}`.
///
/// `f_coeffs[l - 1]` holds `f^{*l}` for `l = 1..=4`; each must be real and
/// nonzero.
pub fn population_contrast(theta: &MixtureParams, theta0: &MixtureParams, f_coeffs: &[Complex64; 4]) -> Result<f64> {
    for (i, c) in f_coeffs.iter().enumerate() {
        if c.im.abs() > 1e-12 * c.norm().max(1e-300) || c.re == 0.0 {
            return Err(Error::domain(format!("f^{{*{}}} must be real and nonzero, got {c}", i + 1)));
        }
    }
    let mut total = 0.0;
    for (idx, f) in f_coeffs.iter().enumerate() {
        let l = idx as i64 + 1;
        let g = weight(theta0, l) * f;
        total += (g * weight(theta, l).conj()).im.powi(2);
    }
    Ok(2.0 * total)
}

/// First four exact Fourier coefficients of a component density.
pub fn low_order_coeffs(density: &ComponentDensity) -> [Complex64; 4] {
    [1, 2, 3, 4].map(|l| density.fourier(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn theta(p: f64, a: f64, b: f64) -> MixtureParams {
        MixtureParams::new(p, a, b).unwrap()
    }

    #[test]
    fn weight_identities() {
        let t = theta(0.3, 0.4, 2.1);
        assert_eq!(weight(&t, 0), Complex64::new(1.0, 0.0));
        for l in 1..=4 {
            assert!((weight(&t, -l) - weight(&t, l).conj()).norm() < 1e-15);
            let modulus_sq =
                t.p.powi(2) + (1.0 - t.p).powi(2) + 2.0 * t.p * (1.0 - t.p) * (l as f64 * (t.beta - t.alpha)).cos();
            assert!((weight(&t, l).norm_sqr() - modulus_sq).abs() < 1e-14);
            assert!(modulus_sq >= (1.0 - 2.0 * t.p).powi(2) - 1e-15);
        }
        let t = theta(0.25, 0.0, 2.0 * PI / 3.0);
        assert!((weight(&t, 1).norm_sqr() - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn weight_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..50 {
            let t = theta(rng.random_range(0.05..0.45), rng.random_range(0.0..PI), rng.random_range(0.0..PI));
            for l in -4..=4 {
                let g = weight_grad(&t, l);
                let hs = weight_hess(&t, l);
                for i in 0..3 {
                    let mut up = t.as_array();
                    let mut dn = t.as_array();
                    up[i] += h;
                    dn[i] -= h;
                    let (up, dn) = (MixtureParams::from_array(up), MixtureParams::from_array(dn));
                    let fd = (weight(&up, l) - weight(&dn, l)) / (2.0 * h);
                    assert!((fd - g[i]).norm() <= 1e-6 * g[i].norm().max(1.0));
                    let dg_up = weight_grad(&up, l);
                    let dg_dn = weight_grad(&dn, l);
                    for j in 0..3 {
                        let fd2 = (dg_up[j] - dg_dn[j]) / (2.0 * h);
                        assert!((fd2 - hs[i][j]).norm() <= 1e-6 * hs[i][j].norm().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn score_identities() {
        let t = theta(0.2, 0.3, 1.9);
        for &x in &[0.0, 1.0, 2.5, 5.9] {
            assert!(score(x, 0, &t).abs() < 1e-18);
            for l in 1..=4 {
                assert!((score(x, -l, &t) + score(x, l, &t)).abs() < 1e-15);
                assert!(score(x, l, &t).abs() <= 1.0 / TAU);
            }
        }
    }

    #[test]
    fn two_equal_points() {
        let x = 1.3;
        let t = theta(0.3, 0.2, 1.7);
        let cs = ContrastSample::from_angles(&[x, x]).unwrap();
        let direct: f64 =
            (-4..=4).map(|l| (Complex64::from_polar(1.0, l as f64 * x) * weight(&t, l)).im.powi(2)).sum::<f64>() * 2.0
                / (4.0 * PI * PI * 2.0);
        assert!(cs.value(&t) >= 0.0);
        assert!((cs.value(&t) - direct).abs() < 1e-14);
        assert!(ContrastSample::from_angles(&[x]).is_err());
    }

    #[test]
    fn population_contrast_vanishes_at_truth() {
        let t0 = theta(0.25, PI / 8.0, 2.0 * PI / 3.0);
        let f = low_order_coeffs(&ComponentDensity::von_mises(5.0).unwrap());
        assert!(population_contrast(&t0, &t0, &f).unwrap() < 1e-30);
        let shifted = theta(0.25, PI / 8.0 + PI, 2.0 * PI / 3.0 + PI);
        assert!(population_contrast(&shifted, &t0, &f).unwrap() < 1e-30);
        assert!(population_contrast(&theta(0.3, 0.5, 2.5), &t0, &f).unwrap() > 1e-4);
        let complex = [Complex64::new(0.1, 0.1); 4];
        assert!(population_contrast(&t0, &t0, &complex).is_err());
    }
}
