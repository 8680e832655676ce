//! Summary statistics shared by reports, comparisons, and tests: moments,
//! interpolated quantiles, Monte Carlo standard errors, two-sample
//! Kolmogorov-Smirnov distances, and shared-edge histogram binning.

use crate::error::{Error, Result};
use crate::samplers::effective_sample_size;

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Linear-interpolation quantile on a sorted slice (type-7 convention).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    let w = h - lo as f64;
    sorted[lo] + w * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite draws"));
    quantile_sorted(&sorted, q)
}

/// Monte Carlo standard error `sd / sqrt(ESS)`.
pub fn mcse(values: &[f64]) -> Result<f64> {
    let ess = effective_sample_size(values)?;
    Ok(sample_sd(values) / ess.sqrt())
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientDraws(
            "KS distance needs non-empty samples".into(),
        ));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("finite draws"));
    let (na, nb) = (sa.len() as f64, sb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < sa.len() && j < sb.len() {
        let xa = sa[i];
        let xb = sb[j];
        let x = xa.min(xb);
        while i < sa.len() && sa[i] <= x {
            i += 1;
        }
        while j < sb.len() && sb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Two-sample KS critical value at significance `alpha` in {0.05, 0.01}.
pub fn ks_critical_value(n_a: usize, n_b: usize, alpha: f64) -> f64 {
    // c(alpha) = sqrt(-ln(alpha/2)/2); frozen for the two supported levels.
    let c = if alpha <= 0.0100001 {
        1.6276236115189499
    } else {
        1.3581015157406195
    };
    c * ((n_a + n_b) as f64 / (n_a as f64 * n_b as f64)).sqrt()
}

/// Histogram counts over `bins` equal-width bins spanning `[lo, hi]`.
/// Values outside the span clamp into the boundary bins so that shared
/// edges across runs always account for every draw.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    if bins == 0 || !(hi > lo) {
        return counts;
    }
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let idx = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[idx] += 1;
    }
    counts
}
