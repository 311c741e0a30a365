/// Nelder–Mead simplex search with projection onto a box.
///
/// Every trial point (reflection, expansion, contraction, shrink) is clamped
/// to `[lower, upper]` before evaluation. Converges when the spread of
/// objective values over the simplex is at most `ftol` and every vertex lies
/// within `xtol` (sup norm) of the best one.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ftol: f64,
    pub xtol: f64,
    pub max_iter: usize,
    /// Initial edge length as a fraction of each box width.
    pub initial_step: f64,
    /// Absolute initial edge lengths; overrides `initial_step` when set.
    pub steps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

impl NelderMead {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper, ftol: 1e-10, xtol: 1e-8, max_iter: 2000, initial_step: 0.1, steps: None }
    }

    pub fn with_tolerances(mut self, ftol: f64, xtol: f64, max_iter: usize) -> Self {
        self.ftol = ftol;
        self.xtol = xtol;
        self.max_iter = max_iter;
        self
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn minimize<F>(&self, mut f: F, start: &[f64]) -> NelderMeadOutcome
    where
        F: FnMut(&[f64]) -> f64,
    {
        let dim = start.len();
        assert_eq!(dim, self.lower.len());
        let mut evaluations = 0usize;
        let mut eval = |x: &[f64]| {
            evaluations += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut x0 = start.to_vec();
        self.project(&mut x0);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
        let f0 = eval(&x0);
        simplex.push((x0.clone(), f0));
        for i in 0..dim {
            let mut v = x0.clone();
            let step = match &self.steps {
                Some(steps) => steps[i],
                None => self.initial_step * (self.upper[i] - self.lower[i]),
            };
            v[i] = if v[i] + step <= self.upper[i] { v[i] + step } else { v[i] - step };
            self.project(&mut v);
            let fv = eval(&v);
            simplex.push((v, fv));
        }

        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.max_iter {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = &simplex[0];
            let worst_f = simplex[dim].1;
            let spread_f = worst_f - best.1;
            let spread_x = simplex[1..]
                .iter()
                .flat_map(|(v, _)| v.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if spread_f <= self.ftol && spread_x <= self.xtol {
                converged = true;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; dim];
            for (v, _) in &simplex[..dim] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / dim as f64;
                }
            }
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[dim].0).map(|(c, w)| c + t * (c - w)).collect() };

            let mut reflected = along(REFLECT);
            self.project(&mut reflected);
            let fr = eval(&reflected);
            if fr < simplex[0].1 {
                let mut expanded = along(EXPAND);
                self.project(&mut expanded);
                let fe = eval(&expanded);
                simplex[dim] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
                continue;
            }
            if fr < simplex[dim - 1].1 {
                simplex[dim] = (reflected, fr);
                continue;
            }
            let outside = fr < worst_f;
            let mut contracted = if outside { along(CONTRACT) } else { along(-CONTRACT) };
            self.project(&mut contracted);
            let fc = eval(&contracted);
            if (outside && fc <= fr) || (!outside && fc < worst_f) {
                simplex[dim] = (contracted, fc);
                continue;
            }
            let anchor = simplex[0].0.clone();
            for (v, fv) in simplex.iter_mut().skip(1) {
                for (x, a) in v.iter_mut().zip(&anchor) {
                    *x = a + SHRINK * (*x - a);
                }
                self.project(v);
                *fv = eval(v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        NelderMeadOutcome { x, fx, iterations, evaluations, converged }
    }
}
