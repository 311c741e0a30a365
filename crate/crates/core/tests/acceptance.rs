//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rotmix::bench::{self, Experiment, ExperimentConfig};
use rotmix::circ::{sample_mixture, two_pi_over_three_gap};
use rotmix::contrast::{
    low_order_coeffs, population_contrast, score, score_grad, score_hess, ContrastSample, FitOptions,
};
use rotmix::ident::{
    alias_bipolar, alias_bipolar_swapped, alias_case4_both, alias_pi_shift, det_sin_identity, AliasRecipe,
    CHECK_GRID_POINTS,
};
use rotmix::npdens::{slope_lambda, DensityOptions, FourierCoeffs, Penalty};
use rotmix::{ComponentDensity, MixtureParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn theta0() -> MixtureParams {
    MixtureParams::new(0.25, PI / 8.0, 2.0 * PI / 3.0).unwrap()
}

fn vm(kappa: f64) -> ComponentDensity {
    ComponentDensity::von_mises(kappa).unwrap()
}

fn within_factor(got: f64, want: f64, factor: f64) -> bool {
    got <= want * factor && got >= want / factor
}

fn mse_von_mises() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig::new(vm(5.0), theta0(), vec![100, 1000], 50, 20240101);
    let rows = match bench::run_mse(&config) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (small, big) = (&rows[0], &rows[1]);
    let reference = [1.4632e-4, 0.0017, 4.4861e-4];
    let got = [big.mse_p, big.mse_alpha, big.mse_beta];
    let small_got = [small.mse_p, small.mse_alpha, small.mse_beta];
    let close = (0..3).all(|j| within_factor(got[j], reference[j], 3.0));
    let ratios = [0, 1, 2].map(|j| small_got[j] / got[j]);
    let decay = ratios.iter().all(|r| *r > 3.0);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        close && decay && secs < 120.0,
        format!(
            "n=1000 mse ({:.3e}, {:.3e}, {:.3e}) vs ({:.3e}, {:.3e}, {:.3e}); n=100/n=1000 ratios ({:.1}, {:.1}, {:.1}); failures {}+{}; {secs:.1}s",
            got[0], got[1], got[2], reference[0], reference[1], reference[2], ratios[0], ratios[1], ratios[2],
            small.failures, big.failures
        ),
    )
}

fn mse_wrapped_cauchy() -> Outcome {
    let wc = ComponentDensity::wrapped_cauchy(0.8).unwrap();
    let config = ExperimentConfig::new(wc, theta0(), vec![1000], 50, 20240102);
    match bench::run_mse(&config) {
        Ok(rows) => {
            let r = &rows[0];
            outcome(
                r.mse_p <= 1e-3 && r.mse_alpha <= 5e-3 && r.mse_beta <= 1e-3,
                format!("mse ({:.3e}, {:.3e}, {:.3e}), limits (1e-3, 5e-3, 1e-3)", r.mse_p, r.mse_alpha, r.mse_beta),
            )
        }
        Err(e) => outcome(false, e.to_string()),
    }
}

fn population_contrast_zeros() -> Outcome {
    let t0 = theta0();
    let coeffs = low_order_coeffs(&vm(5.0));
    let at_truth = population_contrast(&t0, &t0, &coeffs).unwrap();
    let shifted = MixtureParams { p: t0.p, alpha: t0.alpha + PI, beta: t0.beta + PI };
    let at_shift = population_contrast(&shifted, &t0, &coeffs).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut smallest = f64::INFINITY;
    let mut checked = 0;
    while checked < 100 {
        let t = MixtureParams {
            p: rng.random_range(0.01..0.49),
            alpha: rng.random_range(0.0..PI),
            beta: rng.random_range(0.0..PI),
        };
        if two_pi_over_three_gap(t.beta - t.alpha) < 0.2 {
            continue;
        }
        let d = bench::deviation(&t, &t0);
        if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= 0.2 {
            continue;
        }
        smallest = smallest.min(population_contrast(&t, &t0, &coeffs).unwrap());
        checked += 1;
    }
    outcome(
        at_truth <= 1e-12 && at_shift <= 1e-12 && smallest > 1e-4,
        format!(
            "S(theta0) = {at_truth:.2e}, S(theta0 + pi) = {at_shift:.2e}, min over 100 distant theta = {smallest:.3e}"
        ),
    )
}

/// Compensated sum, so the pairwise oracle is not limited by rounding.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for x in values {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn derivatives_and_fast_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    let mut worst_fast = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(20..60);
        let d = vm(rng.random_range(0.5..8.0));
        let sample = sample_mixture(&theta0(), &d, n, &mut rng).unwrap();
        let t = MixtureParams {
            p: rng.random_range(0.05..0.45),
            alpha: rng.random_range(0.0..PI),
            beta: rng.random_range(0.0..PI),
        };
        let cs = ContrastSample::new(&sample).unwrap();
        let v = cs.evaluate(&t);
        let h = 1e-5;
        let mut fd_grad = [0.0; 3];
        let mut fd_hess = [[0.0; 3]; 3];
        for i in 0..3 {
            let mut plus = t.as_array();
            let mut minus = t.as_array();
            plus[i] += h;
            minus[i] -= h;
            let (vp, vm) =
                (cs.evaluate(&MixtureParams::from_array(plus)), cs.evaluate(&MixtureParams::from_array(minus)));
            fd_grad[i] = (vp.value - vm.value) / (2.0 * h);
            for j in 0..3 {
                fd_hess[i][j] = (vp.gradient[j] - vm.gradient[j]) / (2.0 * h);
            }
        }
        let norm = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = (0..3).map(|i| fd_grad[i] - v.gradient[i]).collect();
        worst_grad = worst_grad.max(norm(&diff) / norm(&v.gradient));
        let flat_fd: Vec<f64> = fd_hess.iter().flatten().copied().collect();
        let flat: Vec<f64> = v.hessian.iter().flatten().copied().collect();
        let diff: Vec<f64> = flat_fd.iter().zip(&flat).map(|(a, b)| a - b).collect();
        worst_hess = worst_hess.max(norm(&diff) / norm(&flat));

        // pairwise definition
        let xs = sample.angles();
        let mut terms = Vec::with_capacity(n * n * 9);
        for l in -4i64..=4 {
            let z: Vec<f64> = xs.iter().map(|&x| score(x, l, &t)).collect();
            for k in 0..n {
                for j in 0..n {
                    if k != j {
                        terms.push(z[k] * z[j]);
                    }
                }
            }
        }
        let pairwise = neumaier(terms.into_iter()) / (n * (n - 1)) as f64;
        worst_fast = worst_fast.max((pairwise - v.value).abs() / pairwise.abs());
    }
    outcome(
        worst_grad <= 1e-5 && worst_hess <= 1e-5 && worst_fast <= 1e-13,
        format!(
            "max relative error: gradient {worst_grad:.2e}, Hessian {worst_hess:.2e}, O(n) vs O(n^2) {worst_fast:.2e}"
        ),
    )
}

fn bound_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    for _ in 0..10_000 {
        let x = rng.random_range(0.0..TAU);
        let l: i64 = rng.random_range(-4..=4);
        let t = MixtureParams {
            p: rng.random_range(0.0..1.0),
            alpha: rng.random_range(0.0..TAU),
            beta: rng.random_range(0.0..TAU),
        };
        let lf = l.abs() as f64;
        let z = score(x, l, &t).abs();
        let g = score_grad(x, l, &t).iter().map(|v| v * v).sum::<f64>().sqrt();
        let hs = score_hess(x, l, &t).iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if z > 1.0 / TAU || g > (2.0 + lf) / (2f64.sqrt() * PI) || hs > (lf + lf * lf) / PI {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations} violations in 10000 draws"))
}

fn identifiability() -> Outcome {
    let densities = [vm(1.0), vm(5.0), ComponentDensity::wrapped_cauchy(0.8).unwrap()];
    let mut worst: f64 = 0.0;
    for d in &densities {
        let mut recipes: Vec<(MixtureParams, AliasRecipe)> = Vec::new();
        let generic = MixtureParams::new(0.3, 0.4, 2.2).unwrap();
        recipes.push((generic, alias_pi_shift(&generic)));
        let bipolar = MixtureParams::new(0.3, 0.5, 0.5 + PI).unwrap();
        recipes.push((bipolar, alias_bipolar(&bipolar, 0.8).unwrap()));
        recipes.push((bipolar, alias_bipolar_swapped(&bipolar, 0.8).unwrap()));
        for t in
            [MixtureParams::new(0.4, 0.0, TAU / 3.0).unwrap(), MixtureParams::new(0.2, 2.5, 2.5 - TAU / 3.0).unwrap()]
        {
            for r in alias_case4_both(&t).unwrap() {
                recipes.push((t, r));
            }
        }
        for (t, r) in &recipes {
            worst = worst.max(r.max_residual(t, d, CHECK_GRID_POINTS));
        }
    }
    let case4 = |p: f64| alias_case4_both(&MixtureParams::new(p, 0.0, TAU / 3.0).unwrap()).unwrap()[0].clone();
    let min_high = case4(0.4).min_f_prime(&vm(1.0), CHECK_GRID_POINTS);
    let min_low = case4(0.3).min_f_prime(&vm(1.0), CHECK_GRID_POINTS);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_det = 0.0f64;
    for _ in 0..1000 {
        let g = [0; 4].map(|_| rng.random_range(-PI..PI));
        let (lhs, rhs) = det_sin_identity(g);
        worst_det = worst_det.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    outcome(
        worst <= 1e-10 && min_high >= 0.0 && min_low < 0.0 && worst_det <= 1e-8,
        format!(
            "max alias residual {worst:.2e}; min f' at p=0.4 {min_high:.3e}, at p=0.3 {min_low:.3e}; det identity max error {worst_det:.2e}"
        ),
    )
}

fn normality() -> Outcome {
    let mut config = ExperimentConfig::new(vm(5.0), theta0(), vec![1000], 100, 20240107);
    config.fit = FitOptions { compute_covariance: true, ..FitOptions::default() };
    let report = match bench::run_normality(&config) {
        Ok(r) => r.into_iter().next().unwrap(),
        Err(e) => return outcome(false, e.to_string()),
    };
    let means = report.summary.map(|s| s.mean);
    let vars = report.summary.map(|s| s.variance);
    let moments_ok = means.iter().all(|m| m.abs() < 0.4) && vars.iter().all(|v| *v > 0.6 && *v < 1.5);
    config.reps = 200;
    config.seed = 20240108;
    let coverage = match bench::run_normality(&config) {
        Ok(r) => r[0].coverage,
        Err(e) => return outcome(false, e.to_string()),
    };
    let coverage_ok = coverage.iter().all(|c| (0.90..=0.99).contains(c));
    outcome(
        moments_ok && coverage_ok,
        format!(
            "means ({:.3}, {:.3}, {:.3}), variances ({:.3}, {:.3}, {:.3}), coverage ({:.3}, {:.3}, {:.3}), excluded {}",
            means[0],
            means[1],
            means[2],
            vars[0],
            vars[1],
            vars[2],
            coverage[0],
            coverage[1],
            coverage[2],
            report.failures
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn adaptive_density() -> Outcome {
    let sizes = vec![250, 1000, 4000];
    let config = ExperimentConfig::new(vm(5.0), theta0(), sizes.clone(), 100, 20240109);
    let (rows, failures) = match bench::run_density_risk(&config) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut detail = String::new();
    let mut oracle_ok = true;
    let mut medians = Vec::new();
    for &n in &sizes {
        let at_n: Vec<_> = rows.iter().filter(|r| r.n == n).collect();
        let good = at_n.iter().filter(|r| r.risk <= 2.5 * r.oracle_risk + 10.0 / n as f64).count();
        let frac = good as f64 / at_n.len() as f64;
        if n == 1000 {
            oracle_ok = frac >= 0.9;
        }
        let med = median(at_n.iter().map(|r| r.risk).collect());
        medians.push(med);
        detail.push_str(&format!("n={n}: oracle bound holds {:.0}%, median risk {med:.3e}; ", 100.0 * frac));
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);

    let uniform = ExperimentConfig::new(ComponentDensity::uniform(), theta0(), vec![1000], 100, 20240110);
    let (urows, ufail) = match bench::run_density_risk(&uniform) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let zero = urows.iter().filter(|r| r.level == 0).count() as f64 / urows.len() as f64;
    detail.push_str(&format!("uniform selects L=0 in {:.0}% of reps; excluded {}+{}", 100.0 * zero, failures, ufail));
    outcome(oracle_ok && decreasing && zero >= 0.95, detail)
}

fn slope_heuristic() -> Outcome {
    let n = 500;
    let (a, b) = (2.7, 0.15);
    let mut values = vec![Complex64::new((b + a / n as f64).sqrt(), 0.0)];
    for _ in 1..=20 {
        values.push(Complex64::new((a / n as f64).sqrt(), 0.0));
    }
    let coeffs = FourierCoeffs::new(values).unwrap();
    let levels: Vec<usize> = (0..=20).collect();
    let exact = slope_lambda(&coeffs, n, &levels).map(|f| (f.lambda - 2.0 * a).abs()).unwrap_or(f64::INFINITY);

    let mut config =
        ExperimentConfig::new(ComponentDensity::wrapped_cauchy(0.8).unwrap(), theta0(), vec![1000], 1, 20240111);
    config.density_opts =
        DensityOptions { max_level: Some(50), penalty: Penalty::default(), ..DensityOptions::default() };
    let recon = match bench::run_density_recon(&config) {
        Ok(r) => r.into_iter().next().unwrap(),
        Err(e) => return outcome(false, e.to_string()),
    };
    outcome(
        exact <= 1e-10 && recon.l2_error <= 0.05,
        format!(
            "exact-line lambda error {exact:.2e}; WC(0.8) n=1000 L_max=50: L_hat={}, lambda_hat={:.3}, squared L2 error {:.3e}",
            recon.level, recon.lambda, recon.l2_error
        ),
    )
}

fn determinism() -> Outcome {
    let base = std::env::temp_dir().join(format!("rotmix-acceptance-{}", std::process::id()));
    let run = |tag: &str, jobs: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
        let mut config = ExperimentConfig::new(vm(5.0), theta0(), vec![300], 50, 20240112);
        config.experiments = Experiment::ALL.to_vec();
        config.out_dir = Some(base.join(tag));
        config.jobs = Some(jobs);
        let paths = bench::run_all(&config).map_err(|e| e.to_string())?;
        Ok(paths
            .iter()
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
            .collect())
    };
    let runs = [run("a", 1), run("b", 1), run("c", 4)];
    let _ = fs::remove_dir_all(&base);
    match runs {
        [Ok(a), Ok(b), Ok(c)] => {
            let same = a == b && a == c;
            let names: Vec<_> = a.iter().map(|f| f.0.as_str()).collect();
            outcome(
                same && a.len() == 4,
                format!("files {names:?} identical across 2 serial runs and a 4-thread run: {same}"),
            )
        }
        [a, b, c] => {
            let err = [a, b, c].into_iter().find_map(|r| r.err()).unwrap();
            outcome(false, err)
        }
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("parametric MSE, von Mises", mse_von_mises),
        ("parametric MSE, wrapped Cauchy", mse_wrapped_cauchy),
        ("population contrast zeros", population_contrast_zeros),
        ("derivatives and O(n) form", derivatives_and_fast_form),
        ("score bound suite", bound_suite),
        ("identifiability algebra", identifiability),
        ("asymptotic normality and coverage", normality),
        ("adaptive density estimation", adaptive_density),
        ("slope heuristic", slope_heuristic),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict}: {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
