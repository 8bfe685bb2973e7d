//! Gelman-Rubin potential scale reduction.

use crate::error::{Error, Result};

/// `R-hat` over whole traces. With `W` the mean within-chain variance and
/// `B = n * var(chain means)`, `var+ = (n-1)/n W + B/n` and
/// `R-hat = sqrt(var+ / W)`. Returns 1 when every value is identical and
/// `+inf` when chains are individually constant but disagree.
pub fn potential_scale_reduction(traces: &[&[f64]]) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument("R-hat needs at least two chains".into()));
    }
    let n = traces[0].len();
    if n < 2 || traces.iter().any(|t| t.len() != n) {
        return Err(Error::InvalidArgument(
            "R-hat needs equal-length traces of at least two values".into(),
        ));
    }
    let nf = n as f64;
    let means: Vec<f64> = traces.iter().map(|t| t.iter().sum::<f64>() / nf).collect();
    let w = traces
        .iter()
        .zip(&means)
        .map(|(t, m)| t.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / traces.len() as f64;
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let b = nf * means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() as f64 - 1.0);
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Ok((var_plus / w).sqrt())
}

/// `R-hat` over the second half of each trace (each at least 10 long).
pub fn gelman_rubin(traces: &[Vec<f64>]) -> Result<f64> {
    if traces.len() < 2 {
        return Err(Error::InvalidArgument("R-hat needs at least two chains".into()));
    }
    let n = traces[0].len();
    if n < 10 || traces.iter().any(|t| t.len() != n) {
        return Err(Error::InvalidArgument(
            "R-hat needs equal-length traces of at least 10 values".into(),
        ));
    }
    let halves: Vec<&[f64]> = traces.iter().map(|t| &t[n / 2..]).collect();
    potential_scale_reduction(&halves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identical_chains() {
        let t: Vec<f64> = (0..40).map(|i| ((i * 7) % 11) as f64).collect();
        let r = potential_scale_reduction(&[&t, &t, &t]).unwrap();
        assert_abs_diff_eq!(r, (39.0f64 / 40.0).sqrt(), epsilon = 1e-12);
        // second half of length 20
        let r = gelman_rubin(&[t.clone(), t]).unwrap();
        assert_abs_diff_eq!(r, (19.0f64 / 20.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        let a = vec![1.0; 20];
        let b = vec![2.0; 20];
        assert_eq!(gelman_rubin(&[a.clone(), a.clone()]).unwrap(), 1.0);
        assert_eq!(gelman_rubin(&[a.clone(), b]).unwrap(), f64::INFINITY);
        assert!(gelman_rubin(&[a.clone()]).is_err());
        assert!(gelman_rubin(&[vec![1.0; 5], vec![1.0; 5]]).is_err());
        assert!(gelman_rubin(&[a, vec![1.0; 21]]).is_err());
    }

    #[test]
    fn separated_chains_are_flagged() {
        let a: Vec<f64> = (0..100).map(|i| (i % 5) as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert!(gelman_rubin(&[a, b]).unwrap() > 2.0);
    }
}
