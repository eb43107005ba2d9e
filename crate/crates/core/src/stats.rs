//! Small descriptive-statistics helpers shared by preprocessing and the
//! significance tests.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample (n - 1) standard deviation. Returns 0 for fewer than two values.
pub fn sample_std(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mu = mean(x);
    let ss: f64 = x.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Percentile of an already sorted slice, linear interpolation between order
/// statistics (`h = (n - 1) * p / 100`).
pub fn percentile_sorted(sorted: &[f64], pct: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * pct / 100.0;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn percentile(x: &[f64], pct: f64) -> f64 {
    percentile_sorted(&sorted(x), pct)
}

pub fn median(x: &[f64]) -> f64 {
    percentile(x, 50.0)
}
