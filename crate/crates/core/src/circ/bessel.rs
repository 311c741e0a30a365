//! Modified Bessel functions of the first kind, integer order.
//!
//! Only what the von Mises family needs: the exponentially scaled value
//! `e^{-x} I_n(x)` for `x >= 0`, and the ratio `I_n(x) / I_0(x)`.

use std::f64::consts::PI;

/// Crossover between the power series and the large-argument expansion.
const SERIES_LIMIT: f64 = 15.0;

/// Highest order evaluated directly by the large-argument expansion.
const ASYMPTOTIC_MAX_ORDER: u32 = 4;

/// `e^{-x} I_n(x)` for `x >= 0`.
///
/// Power series for `x <= 15`, Hankel's large-argument expansion above that
/// for orders up to 4, and Miller's backward recurrence (normalized by `I_0`)
/// for higher orders at large argument.
pub fn bessel_i_scaled(order: u32, x: f64) -> f64 {
    assert!(x >= 0.0 && x.is_finite(), "bessel argument must be finite and >= 0");
    if x == 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    if x <= SERIES_LIMIT {
        return series(order, x) * (-x).exp();
    }
    if order <= ASYMPTOTIC_MAX_ORDER {
        return asymptotic_scaled(order, x);
    }
    asymptotic_scaled(0, x) * backward_ratio(order, x)
}

/// `I_n(x) / I_0(x)` for `x >= 0`.
pub fn bessel_ratio(order: u32, x: f64) -> f64 {
    assert!(x >= 0.0 && x.is_finite(), "bessel argument must be finite and >= 0");
    if order == 0 {
        return 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    if order <= ASYMPTOTIC_MAX_ORDER {
        bessel_i_scaled(order, x) / bessel_i_scaled(0, x)
    } else {
        backward_ratio(order, x)
    }
}

/// `sum_k (x/2)^{2k+n} / (k! (k+n)!)`; all terms positive, so no cancellation.
fn series(order: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=order {
        term *= half / k as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * (k + order as f64));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn asymptotic_scaled(order: u32, x: f64) -> f64 {
    let mu = 4.0 * (order as f64).powi(2);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while k < 60.0 {
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * x);
        if next.abs() >= term.abs() || next == 0.0 {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
        k += 1.0;
    }
    sum / (2.0 * PI * x).sqrt()
}

/// Miller's algorithm: recur `I_{k-1} = (2k/x) I_k + I_{k+1}` downward from a
/// start index well above both `order` and `x`, then normalize by the `k = 0`
/// value.
fn backward_ratio(order: u32, x: f64) -> f64 {
    let top = order.max(x.ceil() as u32);
    let start = top + 40 + (12.0 * (top as f64).sqrt()).ceil() as u32;
    let mut above = 0.0_f64;
    let mut current = 1e-200_f64;
    let mut at_order = 0.0;
    for k in (1..=start).rev() {
        let below = (2.0 * k as f64 / x) * current + above;
        above = current;
        current = below;
        if k - 1 == order {
            at_order = current;
        }
        if current > 1e200 {
            above *= 1e-200;
            current *= 1e-200;
            at_order *= 1e-200;
        }
    }
    at_order / current
}
