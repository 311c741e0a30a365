use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use super::bessel::{bessel_i_scaled, bessel_ratio};
use super::normalize_radians;
use crate::{Error, Result};

/// Minimum number of nodes used when a tabulated density is built from
/// scattered `(angle, value)` rows.
pub const MIN_TABULATED_NODES: usize = 512;

/// Truncation threshold for the wrapped-normal Fourier series.
const WN_TERM_CUTOFF: f64 = 1e-16;

/// Below this, a concentration parameter is treated as the uniform limit when
/// sampling.
const UNIFORM_LIMIT: f64 = 1e-12;

/// Shape of a component density before its location shift.
#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    VonMises {
        kappa: f64,
    },
    WrappedCauchy {
        gamma: f64,
    },
    /// Parameterized by the mean resultant length `rho = exp(-sigma^2 / 2)`.
    WrappedNormal {
        rho: f64,
    },
    Tabulated(TabulatedDensity),
}

/// A circular density `f(x - mu)` with exact Fourier coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentDensity {
    kind: DensityKind,
    mu: f64,
}

impl ComponentDensity {
    pub fn von_mises(kappa: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(Error::domain(format!("von Mises kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self { kind: DensityKind::VonMises { kappa }, mu: 0.0 })
    }

    pub fn wrapped_cauchy(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::domain(format!("wrapped Cauchy gamma must lie in [0, 1), got {gamma}")));
        }
        Ok(Self { kind: DensityKind::WrappedCauchy { gamma }, mu: 0.0 })
    }

    pub fn wrapped_normal(rho: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::domain(format!("wrapped normal rho must lie in [0, 1), got {rho}")));
        }
        Ok(Self { kind: DensityKind::WrappedNormal { rho }, mu: 0.0 })
    }

    /// The uniform density, represented as a von Mises law with `kappa = 0`.
    pub fn uniform() -> Self {
        Self { kind: DensityKind::VonMises { kappa: 0.0 }, mu: 0.0 }
    }

    /// Periodic piecewise-linear density through `values` at the uniform nodes
    /// `2 pi j / N`. Values are rescaled to unit mass.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        Ok(Self { kind: DensityKind::Tabulated(TabulatedDensity::new(values)?), mu: 0.0 })
    }

    /// Loads two-column text (`angle value`, radians) and resamples it onto a
    /// uniform grid of at least [`MIN_TABULATED_NODES`] nodes.
    pub fn load_tabulated(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(Self { kind: DensityKind::Tabulated(TabulatedDensity::from_text(&text)?), mu: 0.0 })
    }

    /// Returns the same shape centred at `mu`.
    pub fn with_location(mut self, mu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain("location must be finite"));
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn location(&self) -> f64 {
        self.mu
    }

    /// True when the density is exactly uniform.
    pub fn is_uniform(&self) -> bool {
        match &self.kind {
            DensityKind::VonMises { kappa } => *kappa == 0.0,
            DensityKind::WrappedCauchy { gamma } => *gamma == 0.0,
            DensityKind::WrappedNormal { rho } => *rho == 0.0,
            DensityKind::Tabulated(t) => t.values.iter().all(|&v| v == t.values[0]),
        }
    }

    /// Density value at `x` (radians, any representative).
    pub fn eval(&self, x: f64) -> f64 {
        let t = x - self.mu;
        match &self.kind {
            DensityKind::VonMises { kappa } => {
                let k = *kappa;
                (k * (t.cos() - 1.0)).exp() / (TAU * bessel_i_scaled(0, k))
            }
            DensityKind::WrappedCauchy { gamma } => {
                let g = *gamma;
                (1.0 - g * g) / (TAU * (1.0 + g * g - 2.0 * g * t.cos()))
            }
            DensityKind::WrappedNormal { rho } => {
                let log_rho = rho.ln();
                let mut sum = 1.0;
                let mut l = 1.0_f64;
                loop {
                    let w = (l * l * log_rho).exp();
                    if w < WN_TERM_CUTOFF {
                        break;
                    }
                    sum += 2.0 * w * (l * t).cos();
                    l += 1.0;
                }
                sum / TAU
            }
            DensityKind::Tabulated(tab) => tab.eval(normalize_radians(t)),
        }
    }

    /// Exact Fourier coefficient `f^{*l} = (1/2pi) int f(x) e^{-ilx} dx`.
    pub fn fourier(&self, l: i64) -> Complex64 {
        let m = l.unsigned_abs();
        let centred = match &self.kind {
            DensityKind::VonMises { kappa } => {
                let order = u32::try_from(m).unwrap_or(u32::MAX);
                bessel_ratio(order, *kappa) / TAU
            }
            DensityKind::WrappedCauchy { gamma } => {
                if m == 0 {
                    1.0 / TAU
                } else if *gamma == 0.0 {
                    0.0
                } else {
                    (m as f64 * gamma.ln()).exp() / TAU
                }
            }
            DensityKind::WrappedNormal { rho } => {
                if m == 0 {
                    1.0 / TAU
                } else if *rho == 0.0 {
                    0.0
                } else {
                    let mf = m as f64;
                    (mf * mf * rho.ln()).exp() / TAU
                }
            }
            DensityKind::Tabulated(tab) => return tab.fourier(l) * phase(l, self.mu),
        };
        Complex64::new(centred, 0.0) * phase(l, self.mu)
    }

    /// `(1/2pi) int f^2`, i.e. `sum_l |f^{*l}|^2`, where a closed form exists.
    pub(crate) fn norm_sq(&self) -> Option<f64> {
        match &self.kind {
            DensityKind::VonMises { kappa } => {
                let k = *kappa;
                // I_0(2k) / (4 pi^2 I_0(k)^2) with the exponential scalings cancelling
                let i0 = bessel_i_scaled(0, k);
                Some(bessel_i_scaled(0, 2.0 * k) / (TAU * TAU * i0 * i0))
            }
            DensityKind::WrappedCauchy { gamma } => {
                let g2 = gamma * gamma;
                Some((1.0 + g2) / (1.0 - g2) / (TAU * TAU))
            }
            DensityKind::WrappedNormal { .. } => None,
            DensityKind::Tabulated(tab) => Some(tab.norm_sq()),
        }
    }

    /// Draws one angle in `[0, 2pi)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let centred = match &self.kind {
            DensityKind::VonMises { kappa } => sample_von_mises(*kappa, rng),
            DensityKind::WrappedCauchy { gamma } => {
                if *gamma < UNIFORM_LIMIT {
                    rng.random::<f64>() * TAU
                } else {
                    // gamma = exp(-scale) for the unwrapped Cauchy
                    Cauchy::new(0.0, -gamma.ln()).expect("positive scale").sample(rng)
                }
            }
            DensityKind::WrappedNormal { rho } => {
                if *rho < UNIFORM_LIMIT {
                    rng.random::<f64>() * TAU
                } else {
                    let sigma = (-2.0 * rho.ln()).sqrt();
                    Normal::new(0.0, sigma).expect("positive sigma").sample(rng)
                }
            }
            DensityKind::Tabulated(tab) => tab.draw(rng),
        };
        normalize_radians(centred + self.mu)
    }

    /// Parses a textual description such as `vonmises:kappa=5`,
    /// `wrappedcauchy gamma=0.8 mu=0.1`, `uniform` or `tabulated:path=f.txt`.
    ///
    /// Tokens may be separated by `:`, `,` or whitespace.
    pub fn from_spec(spec: &str) -> Result<Self> {
        let mut tokens = spec.split(|c: char| c == ':' || c == ',' || c.is_whitespace()).filter(|t| !t.is_empty());
        let kind = tokens.next().ok_or_else(|| Error::Parse("empty density spec".into()))?.to_ascii_lowercase();
        let mut params: Vec<(String, String)> = Vec::new();
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value in density spec, got `{tok}`")))?;
            params.push((k.to_ascii_lowercase(), v.to_string()));
        }
        let take = |name: &str, params: &mut Vec<(String, String)>| -> Option<String> {
            params.iter().position(|(k, _)| k == name).map(|i| params.remove(i).1)
        };
        let number = |name: &str, raw: Option<String>| -> Result<Option<f64>> {
            raw.map(|v| v.parse::<f64>().map_err(|_| Error::Parse(format!("bad value for {name}: `{v}`")))).transpose()
        };
        let mu = number("mu", take("mu", &mut params))?.unwrap_or(0.0);
        let density = match kind.as_str() {
            "vonmises" | "vm" => {
                let kappa = number("kappa", take("kappa", &mut params))?
                    .ok_or_else(|| Error::Parse("vonmises requires kappa".into()))?;
                Self::von_mises(kappa)?
            }
            "wrappedcauchy" | "wc" => {
                let gamma = number("gamma", take("gamma", &mut params))?
                    .or(number("rho", take("rho", &mut params))?)
                    .ok_or_else(|| Error::Parse("wrappedcauchy requires gamma".into()))?;
                Self::wrapped_cauchy(gamma)?
            }
            "wrappednormal" | "wn" => {
                let rho = number("rho", take("rho", &mut params))?
                    .ok_or_else(|| Error::Parse("wrappednormal requires rho".into()))?;
                Self::wrapped_normal(rho)?
            }
            "uniform" => Self::uniform(),
            "tabulated" => {
                let path = take("path", &mut params).ok_or_else(|| Error::Parse("tabulated requires path".into()))?;
                Self::load_tabulated(path)?
            }
            other => return Err(Error::Parse(format!("unknown density kind `{other}`"))),
        };
        if let Some((k, _)) = params.first() {
            return Err(Error::Parse(format!("unknown density parameter `{k}` for {kind}")));
        }
        density.with_location(mu)
    }
}

impl fmt::Display for ComponentDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DensityKind::VonMises { kappa } if *kappa == 0.0 => write!(f, "uniform")?,
            DensityKind::VonMises { kappa } => write!(f, "vonmises:kappa={kappa}")?,
            DensityKind::WrappedCauchy { gamma } => write!(f, "wrappedcauchy:gamma={gamma}")?,
            DensityKind::WrappedNormal { rho } => write!(f, "wrappednormal:rho={rho}")?,
            DensityKind::Tabulated(t) => write!(f, "tabulated:nodes={}", t.values.len())?,
        }
        if self.mu != 0.0 {
            write!(f, ":mu={}", self.mu)?;
        }
        Ok(())
    }
}

fn phase(l: i64, mu: f64) -> Complex64 {
    if mu == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, -(l as f64) * mu)
    }
}

/// Best & Fisher (1979) rejection sampler, centred at zero.
fn sample_von_mises<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa < UNIFORM_LIMIT {
        return rng.random::<f64>() * TAU;
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let angle = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { angle } else { -angle };
        }
    }
}

/// Periodic piecewise-linear density on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    /// Node values at `2 pi j / N`, scaled so that `(2pi/N) sum v_j = 1`.
    values: Vec<f64>,
    /// Cumulative cell masses, last entry 1.
    cumulative: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::domain("tabulated density needs at least 3 nodes"));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("tabulated density has invalid value {v}")));
        }
        let n = values.len();
        let h = TAU / n as f64;
        let total: f64 = values.iter().sum::<f64>() * h;
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain("tabulated density is not normalizable"));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / total).collect();
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(n);
        for j in 0..n {
            acc += 0.5 * h * (values[j] + values[(j + 1) % n]);
            cumulative.push(acc);
        }
        let last = *cumulative.last().unwrap();
        cumulative.iter_mut().for_each(|c| *c /= last);
        Ok(Self { values, cumulative })
    }

    /// Parses `angle value` rows (whitespace or comma separated, `#` comments)
    /// and resamples by periodic linear interpolation.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<(f64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|c| !c.is_empty());
            let mut next = || -> Result<f64> {
                cols.next()
                    .and_then(|c| c.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("line {}: expected `angle value`", lineno + 1)))
            };
            let angle = next()?;
            let value = next()?;
            if !angle.is_finite() {
                return Err(Error::Parse(format!("line {}: non-finite angle", lineno + 1)));
            }
            rows.push((normalize_radians(angle), value));
        }
        if rows.len() < 3 {
            return Err(Error::domain("tabulated density needs at least 3 rows"));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
        let nodes = rows.len().max(MIN_TABULATED_NODES);
        let values = (0..nodes).map(|j| interpolate_periodic(&rows, TAU * j as f64 / nodes as f64)).collect();
        Self::new(values)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.values
    }

    fn spacing(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let pos = x / self.spacing();
        let j = (pos.floor() as usize).min(n - 1);
        let frac = pos - j as f64;
        self.values[j] * (1.0 - frac) + self.values[(j + 1) % n] * frac
    }

    /// Exact coefficient of the interpolant: trapezoidal DFT of the nodes
    /// times the hat-function attenuation `sinc^2(l h / 2)`.
    fn fourier(&self, l: i64) -> Complex64 {
        let n = self.values.len();
        if l == 0 {
            return Complex64::new(1.0 / TAU, 0.0);
        }
        let h = self.spacing();
        let dft: Complex64 =
            self.values.iter().enumerate().map(|(j, &v)| Complex64::from_polar(v, -(l as f64) * h * j as f64)).sum();
        let half = 0.5 * l as f64 * h;
        let sinc = half.sin() / half;
        dft * (sinc * sinc / n as f64)
    }

    /// `(1/2pi) int f^2`, exact for the interpolant.
    fn norm_sq(&self) -> f64 {
        let n = self.values.len();
        let h = self.spacing();
        let mut s = 0.0;
        for j in 0..n {
            let a = self.values[j];
            let b = self.values[(j + 1) % n];
            s += h * (a * a + a * b + b * b) / 3.0;
        }
        s / TAU
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c < u).min(self.values.len() - 1);
        let lower = if j == 0 { 0.0 } else { self.cumulative[j - 1] };
        let cell_mass = self.cumulative[j] - lower;
        let frac = if cell_mass > 0.0 { ((u - lower) / cell_mass).clamp(0.0, 1.0) } else { 0.5 };
        let h = self.spacing();
        let a = self.values[j];
        let b = self.values[(j + 1) % self.values.len()];
        // Solve a t + (b - a) t^2 / (2h) = frac * h (a + b) / 2 for t in [0, h].
        let target = frac * 0.5 * h * (a + b);
        let disc = (a * a + 2.0 * (b - a) * target / h).max(0.0);
        let denom = a + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * target / denom } else { frac * h };
        h * j as f64 + t.clamp(0.0, h)
    }
}

fn interpolate_periodic(rows: &[(f64, f64)], x: f64) -> f64 {
    let idx = rows.partition_point(|r| r.0 <= x);
    let (lo, hi) = if idx == 0 {
        let last = rows[rows.len() - 1];
        ((last.0 - TAU, last.1), rows[0])
    } else if idx == rows.len() {
        let first = rows[0];
        (rows[idx - 1], (first.0 + TAU, first.1))
    } else {
        (rows[idx - 1], rows[idx])
    };
    let w = (x - lo.0) / (hi.0 - lo.0);
    lo.1 * (1.0 - w) + hi.1 * w
}
