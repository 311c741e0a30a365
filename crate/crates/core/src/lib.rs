//! Semiparametric estimation for two-component rotation mixtures on the circle.
//!
//! Observations follow `g(x) = p f(x - alpha) + (1 - p) f(x - beta)` where the
//! component density `f` is unknown. The crate estimates `(p, alpha, beta)` by
//! minimizing a U-statistic contrast built from the first four Fourier
//! coefficients, provides sandwich-type asymptotic covariances, and recovers
//! `f` with a penalized Fourier projection estimator.
//!
//! Modules:
//! - [`circ`]: angles, component densities, exact Fourier coefficients, samplers.
//! - [`contrast`]: the contrast, its derivatives, multi-start fitting, inference.
//! - [`npdens`]: plug-in coefficients, resolution selection, slope heuristic.
//! - [`ident`]: degeneracy classification and alias constructions.
//! - [`bench`]: Monte Carlo experiment harness with CSV output.

pub mod bench;
pub mod circ;
pub mod contrast;
mod error;
pub mod ident;
pub mod npdens;

pub use error::{Error, Result};

pub use circ::{Angle, ComponentDensity, DensityKind, MixtureParams, Sample};
pub use contrast::{FitOptions, FitResult, SearchBox};
pub use npdens::{DensityEstimate, EmpiricalCoeffs, FourierCoeffs};
