use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{score, ContrastSample, MAX_HARMONIC};
use crate::circ::{MixtureParams, Sample};
use crate::{Error, Result};

/// Smallest accepted reciprocal condition number of the contrast Hessian.
pub const RCOND_MIN: f64 = 1e-10;

/// Sandwich estimate `Sigma = A^{-1} V A^{-1}` of the asymptotic covariance
/// of `sqrt(n) (theta_hat - theta0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticCovariance {
    /// `Sigma`, the covariance of the limiting normal law.
    pub sigma: [[f64; 3]; 3],
    /// Hessian of `S_n` at the estimate.
    pub a_hat: [[f64; 3]; 3],
    pub v_hat: [[f64; 3]; 3],
    pub n: usize,
    /// Reciprocal condition number of `a_hat`.
    pub rcond: f64,
}

impl AsymptoticCovariance {
    /// `Sigma / n`, the covariance of `theta_hat` itself.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        let n = self.n as f64;
        self.sigma.map(|row| row.map(|v| v / n))
    }

    /// `sqrt(Sigma_jj / n)` for `p`, `alpha`, `beta`.
    pub fn std_errors(&self) -> [f64; 3] {
        let n = self.n as f64;
        [0, 1, 2].map(|j| (self.sigma[j][j].max(0.0) / n).sqrt())
    }

    /// Marginal intervals `theta_j +- z * se_j`.
    pub fn confidence_intervals(&self, theta: &MixtureParams, z: f64) -> [(f64, f64); 3] {
        let se = self.std_errors();
        let t = theta.as_array();
        [0, 1, 2].map(|j| (t[j] - z * se[j], t[j] + z * se[j]))
    }

    /// `Sigma^{-1/2} sqrt(n) (theta_hat - theta0)`, using the symmetric
    /// inverse square root. `None` when `Sigma` is not positive definite.
    pub fn standardize(&self, deviation: [f64; 3]) -> Option<[f64; 3]> {
        let eig = SymmetricEigen::new(to_matrix(&self.sigma));
        let top = eig.eigenvalues.max();
        if !(top > 0.0) || eig.eigenvalues.min() <= top * 1e-14 {
            return None;
        }
        let inv_sqrt = eig.eigenvalues.map(|v| 1.0 / v.sqrt());
        let root = eig.eigenvectors * Matrix3::from_diagonal(&inv_sqrt) * eig.eigenvectors.transpose();
        let z = root * Vector3::from(deviation) * (self.n as f64).sqrt();
        Some([z[0], z[1], z[2]])
    }
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn to_array(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| m[(i, j)]))
}

/// Sandwich covariance at `theta`.
///
/// `V` is estimated by `(4/n) sum_k U_k U_k^T` with
/// `U_k = sum_{|l| <= 4} Z_k^l (1/n) sum_j dZ_j^l`, which equals the triple
/// sum over `(k, j, j')` after factoring the inner sums.
pub fn asymptotic_cov(sample: &Sample, theta: &MixtureParams) -> Result<AsymptoticCovariance> {
    let contrast = ContrastSample::new(sample).map_err(|e| Error::Inference(e.to_string()))?;
    let n = contrast.len();
    let a = to_matrix(&contrast.evaluate(theta).hessian);

    let eig = SymmetricEigen::new(a);
    let abs = eig.eigenvalues.map(f64::abs);
    let rcond = if abs.max() > 0.0 { abs.min() / abs.max() } else { 0.0 };
    if !(rcond >= RCOND_MIN) {
        return Err(Error::Inference(format!(
            "contrast Hessian is singular at {theta}: reciprocal condition {rcond:.3e} < {RCOND_MIN:.0e}"
        )));
    }
    let a_inv =
        eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v)) * eig.eigenvectors.transpose();

    let drift: Vec<Vector3<f64>> =
        (1..=MAX_HARMONIC).map(|l| Vector3::from(contrast.mean_score_grad(theta, l))).collect();
    let mut v = Matrix3::zeros();
    for &x in sample.angles() {
        // harmonics -l and +l contribute identical terms
        let u: Vector3<f64> = (1..=MAX_HARMONIC).zip(&drift).map(|(l, d)| d * (2.0 * score(x, l, theta))).sum();
        v += u * u.transpose();
    }
    v *= 4.0 / n as f64;
    let v = (v + v.transpose()) * 0.5;

    let sigma = a_inv * v * a_inv;
    let sigma = (sigma + sigma.transpose()) * 0.5;
    Ok(AsymptoticCovariance { sigma: to_array(&sigma), a_hat: to_array(&a), v_hat: to_array(&v), n, rcond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circ::{sample_mixture, ComponentDensity};
    use crate::contrast::score_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn theta0() -> MixtureParams {
        MixtureParams::new(0.25, PI / 8.0, 2.0 * PI / 3.0).unwrap()
    }

    #[test]
    fn matches_triple_sum() {
        let d = ComponentDensity::von_mises(5.0).unwrap();
        let s = sample_mixture(&theta0(), &d, 25, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let th = MixtureParams::new(0.3, 0.5, 2.0).unwrap();
        let xs = s.angles();
        let n = xs.len() as f64;
        let mut want = [[0.0; 3]; 3];
        for &xk in xs {
            for &xj in xs {
                for &xjj in xs {
                    for l in -4i64..=4 {
                        for ll in -4i64..=4 {
                            let zz = score(xk, l, &th) * score(xk, ll, &th);
                            let g1 = score_grad(xj, l, &th);
                            let g2 = score_grad(xjj, ll, &th);
                            for i in 0..3 {
                                for j in 0..3 {
                                    want[i][j] += 4.0 / (n * n * n) * zz * g1[i] * g2[j];
                                }
                            }
                        }
                    }
                }
            }
        }
        let got = asymptotic_cov(&s, &th).unwrap().v_hat;
        let scale = want.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - want[i][j]).abs() <= 1e-10 * scale, "{i}{j}: {} vs {}", got[i][j], want[i][j]);
            }
        }
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let d = ComponentDensity::von_mises(5.0).unwrap();
        let s = sample_mixture(&theta0(), &d, 1000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let cov = asymptotic_cov(&s, &theta0()).unwrap();
        for m in [cov.v_hat, cov.sigma] {
            let mat = to_matrix(&m);
            assert_eq!(mat, mat.transpose());
            assert!(SymmetricEigen::new(mat).eigenvalues.min() >= -1e-12 * mat.norm());
        }
        let se = cov.std_errors();
        assert!(se.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 0.5), "{se:?}");
        let ci = cov.confidence_intervals(&theta0(), 1.96);
        assert!(ci.iter().all(|(lo, hi)| lo < hi));
        let z = cov.standardize([0.0; 3]).unwrap();
        assert_eq!(z, [0.0; 3]);
    }

    #[test]
    fn singular_hessian_is_an_inference_error() {
        // equally spaced points: S_n depends on beta - alpha only, so the
        // Hessian annihilates (0, 1, 1)
        let n = 20;
        let s = Sample::new((0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()).unwrap();
        let degenerate = theta0();
        assert!(matches!(asymptotic_cov(&s, &degenerate), Err(Error::Inference(_))));
    }
}
