//! Log-domain special functions shared by the posteriors.

use statrs::function::gamma::ln_gamma as statrs_ln_gamma;

#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    statrs_ln_gamma(x)
}

#[inline]
pub fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// ln of the multivariate Beta function, `sum lnG(a_i) - lnG(sum a_i)`.
pub fn ln_multi_beta(args: impl IntoIterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    let mut acc = 0.0;
    for a in args {
        acc += ln_gamma(a);
        total += a;
    }
    acc - ln_gamma(total)
}

/// ln Poisson(k; lambda) including the `e^-lambda` factor.
#[inline]
pub fn ln_poisson(k: u64, lambda: f64) -> f64 {
    -lambda + k as f64 * lambda.ln() - ln_factorial(k)
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// `ln(sum exp(x_i))`, stable; `-inf` for an empty input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Sum of `-n ln V` volume terms; empty leaves contribute nothing.
pub fn volume_penalty(counts_volumes: impl IntoIterator<Item = (u64, u64)>) -> f64 {
    counts_volumes
        .into_iter()
        .filter(|&(n, _)| n > 0)
        .map(|(n, v)| -(n as f64) * (v as f64).ln())
        .sum()
}
