//! Shared helpers for the integration suites: a KS machinery and the
//! independent numeric oracles the acceptance checks compare against.

// Each test binary compiles this module separately and uses a subset.
#![allow(dead_code)]

use mtp_power::special::{regularized_incomplete_beta, std_normal_cdf};

/// Two-sided Kolmogorov-Smirnov statistic against `cdf`. Sorts in place.
pub fn ks_statistic(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = draws.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = cdf(x);
        sup = sup.max((f - i as f64 / n).abs());
        sup = sup.max(((i as f64 + 1.0) / n - f).abs());
    }
    sup
}

/// Asymptotic 1% critical value for the two-sided KS statistic.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.62762 / (n as f64).sqrt()
}

/// Marginal CDF of a single off-diagonal entry of a uniformly distributed
/// m x m correlation matrix: Beta(m/2, m/2) rescaled from (0,1) to (-1,1).
pub fn lkj_offdiag_cdf(r: f64, m: usize) -> f64 {
    let half = 0.5 * m as f64;
    regularized_incomplete_beta(half, half, 0.5 * (r + 1.0)).unwrap()
}

/// CDF of the noncentral t distribution with `nu` degrees of freedom and
/// noncentrality `delta`, by Simpson integration over the chi-square
/// denominator: P(T <= x) = E_V[ Phi(x * sqrt(V/nu) - delta) ], V ~ chi2_nu.
///
/// Good to ~1e-8 for the moderate nu used in the tests, which is far below
/// the KS resolution it feeds.
pub fn noncentral_t_cdf(x: f64, nu: f64, delta: f64) -> f64 {
    // Integrate over v in (0, hi); the chi-square density is negligible
    // beyond mean + 12 sd for the nu used here.
    let hi = nu + 12.0 * (2.0 * nu).sqrt() + 30.0;
    let steps = 4000; // even
    let h = hi / steps as f64;
    let ln_norm = -0.5 * nu * std::f64::consts::LN_2 - ln_gamma_local(0.5 * nu);
    let integrand = |v: f64| -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let ln_pdf = ln_norm + (0.5 * nu - 1.0) * v.ln() - 0.5 * v;
        std_normal_cdf(x * (v / nu).sqrt() - delta) * ln_pdf.exp()
    };
    let mut acc = integrand(0.0) + integrand(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(i as f64 * h);
    }
    (acc * h / 3.0).clamp(0.0, 1.0)
}

// Local Stirling ln-gamma so the oracle does not lean on the library code
// it is checking.
fn ln_gamma_local(x: f64) -> f64 {
    let mut shift = 0.0f64;
    let mut z = x;
    while z < 12.0 {
        shift += z.ln();
        z += 1.0;
    }
    let w = 1.0 / (z * z);
    let series = (((-1.0 / 1680.0) * w + 1.0 / 1260.0) * w - 1.0 / 360.0) * w + 1.0 / 12.0;
    (z - 0.5) * z.ln() - z + 0.918_938_533_204_672_7 + series / z - shift
}

/// The m = 1, zero-ratio, infinite-dof, two-sided rejection probability at
/// level alpha, by numeric integration over the prior mean: the statistic
/// is mu + noise with both standard normal, so
/// P(|t| > q) = E_mu[ Phi(-q - mu) + Phi(mu - q) ].
pub fn null_single_test_power_oracle(alpha: f64) -> f64 {
    // Invert the two-sided threshold by bisection on the library-free CDF.
    let q = {
        let target = 1.0 - 0.5 * alpha;
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 0.5 * erfc_local(-mid * std::f64::consts::FRAC_1_SQRT_2) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let steps = 8000; // even
    let (a, b) = (-9.0f64, 9.0f64);
    let h = (b - a) / steps as f64;
    let phi = |u: f64| (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let cdf = |u: f64| 0.5 * erfc_local(-u * std::f64::consts::FRAC_1_SQRT_2);
    let integrand = |u: f64| phi(u) * (cdf(-q - u) + 1.0 - cdf(q - u));
    let mut acc = integrand(a) + integrand(b);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(a + i as f64 * h);
    }
    acc * h / 3.0
}

// Continued-fraction erfc, independent of the library's implementation.
fn erfc_local(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc_local(-x);
    }
    if x < 1.5 {
        // Series for erf.
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x * x / n;
            let delta = term / (2.0 * n + 1.0);
            sum += delta;
            if delta.abs() < 1e-17 {
                break;
            }
        }
        return 1.0 - sum * std::f64::consts::FRAC_2_SQRT_PI;
    }
    let mut c: f64 = 1e300;
    let mut d = x;
    let mut h = 1.0 / x;
    for n in 1..300 {
        let a = 0.5 * n as f64;
        d = x + a / d;
        c = x + a / c;
        let del = c / d;
        h *= del;
        if (del - 1.0).abs() < 1e-17 {
            break;
        }
    }
    h * (-x * x).exp() * (0.5 * std::f64::consts::FRAC_2_SQRT_PI)
}
