//! Small shared numeric helpers.

/// Percentile by linear interpolation between order statistics.
///
/// `sorted` must be ascending and non-empty; `p` in [0,100]. The rank is
/// `p/100 * (n-1)`; fractional ranks interpolate between neighbours.
pub fn percentile_linear(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0) * (n - 1) as f64;
    let rank = rank.clamp(0.0, (n - 1) as f64);
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Sorts a copy of `values` and returns the interpolated percentile.
pub fn percentile_of(values: &[f64], p: f64) -> f64 {
    let mut s = values.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    percentile_linear(&s, p)
}

/// Median via the 50th linear-interpolation percentile.
pub fn median(values: &[f64]) -> f64 {
    percentile_of(values, 50.0)
}
