//! Closed-form error-propagation calculators for reductions over
//! independently compressed data, plus empirical quality metrics.
//!
//! Model: each per-hop compression error is treated as a zero-mean normal
//! with standard deviation sigma, bounded by the error bound e_hat with
//! e_hat ~= 3*sigma. Independence across hops is a modeling assumption,
//! checked empirically, never asserted exactly.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::CodecError;

/// Probability mass of a normal inside +/- 2 standard deviations; the
/// coverage the sum-error interval is stated at.
pub const TWO_SIGMA_COVERAGE: f64 = 0.9544;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Number of contributing nodes.
    pub n: u64,
    /// Per-compression error standard deviation.
    pub sigma: f64,
    /// Compression error bound.
    pub e_hat: f64,
}

/// The e_hat ~= 3*sigma conversion, applied only on request.
pub fn sigma_from_bound(e_hat: f64) -> f64 {
    e_hat / 3.0
}

pub fn bound_from_sigma(sigma: f64) -> f64 {
    3.0 * sigma
}

fn check(n: u64, scale: f64, name: &str) -> Result<(), CodecError> {
    if n == 0 {
        return Err(CodecError::InvalidParam("n must be >= 1".to_string()));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(CodecError::InvalidParam(alloc::format!(
            "{name} must be finite and > 0"
        )));
    }
    Ok(())
}

/// Half-width of the interval holding the aggregated Sum error with
/// probability [`TWO_SIGMA_COVERAGE`]: 2*sqrt(n)*sigma.
pub fn sum_error_interval_sigma(n: u64, sigma: f64) -> Result<f64, CodecError> {
    check(n, sigma, "sigma")?;
    Ok(2.0 * libm::sqrt(n as f64) * sigma)
}

/// Same interval expressed via the error bound: (2/3)*sqrt(n)*e_hat.
pub fn sum_error_interval_bound(n: u64, e_hat: f64) -> Result<f64, CodecError> {
    check(n, e_hat, "e_hat")?;
    Ok(2.0 / 3.0 * libm::sqrt(n as f64) * e_hat)
}

/// Variance of the aggregated Average error: sigma^2 / n.
pub fn avg_error_variance(n: u64, sigma: f64) -> Result<f64, CodecError> {
    check(n, sigma, "sigma")?;
    Ok(sigma * sigma / n as f64)
}

/// Variance of the aggregated Max/Min error: (2 - (n+2)/2^n) * sigma^2.
/// Strictly increasing in n, bounded above by 2*sigma^2.
pub fn maxmin_error_variance(n: u64, sigma: f64) -> Result<f64, CodecError> {
    check(n, sigma, "sigma")?;
    let nf = n as f64;
    Ok((2.0 - (nf + 2.0) / libm::exp2(nf)) * sigma * sigma)
}

/// Mean and variance of a linear combination of independent normals:
/// (sum a_i*mu_i, sum a_i^2*sigma_i^2).
pub fn combine_normals(
    coeffs: &[f64],
    means: &[f64],
    sigmas: &[f64],
) -> Result<(f64, f64), CodecError> {
    if coeffs.len() != means.len() || coeffs.len() != sigmas.len() {
        return Err(CodecError::InvalidParam(
            "coeffs, means, and sigmas must have equal lengths".to_string(),
        ));
    }
    let mean = coeffs.iter().zip(means).map(|(a, m)| a * m).sum();
    let var = coeffs.iter().zip(sigmas).map(|(a, s)| a * a * s * s).sum();
    Ok((mean, var))
}

fn rmse(result: &[f32], reference: &[f32]) -> Result<f64, CodecError> {
    if result.len() != reference.len() || result.is_empty() {
        return Err(CodecError::InvalidParam(
            "result and reference must be nonempty and of equal length".to_string(),
        ));
    }
    let sum_sq: f64 = result
        .iter()
        .zip(reference)
        .map(|(a, b)| {
            let d = *a as f64 - *b as f64;
            d * d
        })
        .sum();
    Ok(libm::sqrt(sum_sq / result.len() as f64))
}

fn reference_range(reference: &[f32]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in reference {
        lo = lo.min(v as f64);
        hi = hi.max(v as f64);
    }
    hi - lo
}

/// RMSE of (result - reference) normalized by the reference value range.
pub fn nrmse(result: &[f32], reference: &[f32]) -> Result<f64, CodecError> {
    let e = rmse(result, reference)?;
    let range = reference_range(reference);
    if range == 0.0 {
        return Ok(if e == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(e / range)
}

/// 20*log10(range/RMSE) in dB; +inf for zero error.
pub fn psnr(result: &[f32], reference: &[f32]) -> Result<f64, CodecError> {
    let e = rmse(result, reference)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    let range = reference_range(reference);
    Ok(20.0 * libm::log10(range / e))
}

/// MLE fit of a normal: sample mean and population standard deviation.
pub fn fit_normal_mle(errors: &[f64]) -> Result<(f64, f64), CodecError> {
    if errors.is_empty() {
        return Err(CodecError::InvalidParam("errors must be nonempty".to_string()));
    }
    let n = errors.len() as f64;
    let mean: f64 = errors.iter().sum::<f64>() / n;
    let var: f64 = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    Ok((mean, libm::sqrt(var)))
}

/// Fraction of errors with |e| <= half_width.
pub fn coverage_fraction(errors: &[f64], half_width: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let inside = errors.iter().filter(|e| e.abs() <= half_width).count();
    inside as f64 / errors.len() as f64
}

/// Empirical quality summary of a result against a reference, with the
/// theoretical interval it was checked against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStatsReport {
    pub nrmse: f64,
    pub psnr_db: f64,
    pub max_abs_err: f64,
    pub sample_mean: f64,
    pub sample_sigma: f64,
    /// Fraction of errors inside +/- interval_sigma.
    pub coverage_sigma: f64,
    /// Fraction of errors inside +/- interval_bound.
    pub coverage_bound: f64,
    /// 2*sqrt(n)*sigma_hat.
    pub interval_sigma: f64,
    /// (2/3)*sqrt(n)*e_hat.
    pub interval_bound: f64,
}

/// Build a full report from per-element errors of a reduction over `n`
/// nodes compressed at bound `e_hat`.
pub fn error_stats_report(
    result: &[f32],
    reference: &[f32],
    n: u64,
    e_hat: f64,
) -> Result<ErrorStatsReport, CodecError> {
    let errors: Vec<f64> = result
        .iter()
        .zip(reference)
        .map(|(a, b)| *a as f64 - *b as f64)
        .collect();
    let (sample_mean, sample_sigma) = fit_normal_mle(&errors)?;
    let interval_sigma = if sample_sigma > 0.0 {
        sum_error_interval_sigma(n, sample_sigma)?
    } else {
        0.0
    };
    let interval_bound = sum_error_interval_bound(n, e_hat)?;
    let max_abs_err = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(ErrorStatsReport {
        nrmse: nrmse(result, reference)?,
        psnr_db: psnr(result, reference)?,
        max_abs_err,
        sample_mean,
        sample_sigma,
        coverage_sigma: coverage_fraction(&errors, interval_sigma),
        coverage_bound: coverage_fraction(&errors, interval_bound),
        interval_sigma,
        interval_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const EPS: f64 = 1e-12;

    #[test]
    fn sum_interval_sigma_pins() {
        assert!((sum_error_interval_sigma(1, 2.0).unwrap() - 4.0).abs() < EPS);
        assert!((sum_error_interval_sigma(100, 0.5).unwrap() - 10.0).abs() < EPS);
    }

    #[test]
    fn sum_interval_bound_pins() {
        // 100 nodes: (20/3) * e_hat
        let v = sum_error_interval_bound(100, 3.0).unwrap();
        assert!((v - 20.0).abs() < EPS);
        assert!((sum_error_interval_bound(9, 1.0).unwrap() - 2.0).abs() < EPS);
        assert!((sum_error_interval_bound(1, 1.0).unwrap() - 2.0 / 3.0).abs() < EPS);
    }

    #[test]
    fn interval_forms_agree_under_three_sigma_conversion() {
        for n in [1u64, 2, 7, 64, 1000] {
            let sigma = 0.37;
            let via_sigma = sum_error_interval_sigma(n, sigma).unwrap();
            let via_bound = sum_error_interval_bound(n, bound_from_sigma(sigma)).unwrap();
            assert!((via_sigma - via_bound).abs() < 1e-9);
        }
    }

    #[test]
    fn avg_variance_pins() {
        assert!((avg_error_variance(1, 2.0).unwrap() - 4.0).abs() < EPS);
        assert!((avg_error_variance(4, 2.0).unwrap() - 1.0).abs() < EPS);
    }

    #[test]
    fn maxmin_variance_pins_and_monotone() {
        let s = 1.5f64;
        assert!((maxmin_error_variance(1, s).unwrap() - 0.5 * s * s).abs() < EPS);
        assert!((maxmin_error_variance(2, s).unwrap() - s * s).abs() < EPS);
        // strictly increasing while (n+2)/2^n increments are above f64 noise
        let mut prev = 0.0;
        for n in 1..=40 {
            let v = maxmin_error_variance(n, s).unwrap();
            assert!(v > prev);
            assert!(v <= 2.0 * s * s);
            prev = v;
        }
        assert!((maxmin_error_variance(60, s).unwrap() - 2.0 * s * s).abs() < 1e-9);
    }

    #[test]
    fn combine_normals_matches_unit_coefficient_aggregate() {
        let (m, v) = combine_normals(&[1.0], &[0.3], &[0.2]).unwrap();
        assert!((m - 0.3).abs() < EPS && (v - 0.04).abs() < EPS);
        let (m, v) = combine_normals(&[1.0, 1.0], &[0.0, 0.0], &[0.6, 0.8]).unwrap();
        assert!(m.abs() < EPS);
        assert!((v - 1.0).abs() < EPS);
        // unit coefficients reproduce (sum mu_i, sum sigma_i^2)
        let sigmas = [0.1, 0.2, 0.3, 0.4];
        let means = [1.0, -1.0, 2.0, 0.5];
        let coeffs = [1.0; 4];
        let (m, v) = combine_normals(&coeffs, &means, &sigmas).unwrap();
        assert!((m - 2.5).abs() < EPS);
        let expect: f64 = sigmas.iter().map(|s| s * s).sum();
        assert!((v - expect).abs() < EPS);
    }

    #[test]
    fn nrmse_and_psnr_basics() {
        let reference = vec![0.0f32, 10.0];
        assert_eq!(nrmse(&reference, &reference).unwrap(), 0.0);
        // constant offset d on range R -> d/R
        let shifted = vec![1.0f32, 11.0];
        assert!((nrmse(&shifted, &reference).unwrap() - 0.1).abs() < 1e-9);
        // RMSE = range/10 -> 20 dB
        assert!((psnr(&shifted, &reference).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&reference, &reference).unwrap(), f64::INFINITY);
        // formula consistency: psnr = -20*log10(nrmse)
        let n = nrmse(&shifted, &reference).unwrap();
        let p = psnr(&shifted, &reference).unwrap();
        assert!((p + 20.0 * libm::log10(n)).abs() < 1e-9);
    }

    #[test]
    fn psnr_inversion_sanity() {
        // RMSE = range / 10^2.455 -> 49.1 dB
        let range = 1.0f64;
        let rmse = range / libm::pow(10.0, 2.455);
        let db = 20.0 * libm::log10(range / rmse);
        assert!((db - 49.1).abs() < 1e-9);
    }

    #[test]
    fn mle_fit_basics() {
        assert_eq!(fit_normal_mle(&[0.0, 0.0, 0.0]).unwrap(), (0.0, 0.0));
        let (m, s) = fit_normal_mle(&[-2.0, 2.0, -2.0, 2.0]).unwrap();
        assert!(m.abs() < EPS);
        assert!((s - 2.0).abs() < EPS);
    }

    #[test]
    fn coverage_basics() {
        let errors = vec![-0.5, 0.1, 0.4, -0.2];
        assert_eq!(coverage_fraction(&errors, 1.0), 1.0);
        assert_eq!(coverage_fraction(&errors, 0.0), 0.0);
        assert_eq!(coverage_fraction(&errors, 0.3), 0.5);
    }

    #[test]
    fn domain_errors() {
        assert!(sum_error_interval_sigma(0, 1.0).is_err());
        assert!(sum_error_interval_bound(4, 0.0).is_err());
        assert!(maxmin_error_variance(4, f64::NAN).is_err());
    }
}
