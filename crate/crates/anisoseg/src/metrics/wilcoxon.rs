//! Wilcoxon signed-rank test for paired samples.
//!
//! Zero differences are dropped. With n <= 25 remaining pairs the null
//! distribution is computed exactly by dynamic programming over doubled
//! ranks (average ranks are multiples of 1/2, so doubling makes them
//! integers). Larger n uses the normal approximation with tie and
//! continuity corrections.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// Alternative hypothesis for the signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Alternative {
    /// Two-sided: distributions differ in location.
    TwoSided,
    /// One-sided: the first sample is stochastically greater.
    Greater,
    /// One-sided: the first sample is stochastically less.
    Less,
}

/// Which computation produced the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Exact,
    NormalApprox,
}

/// Outcome of a Wilcoxon signed-rank test.
#[derive(Debug, Clone)]
pub struct WilcoxonResult {
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    /// Sum of ranks of negative differences.
    pub w_minus: f64,
    /// Test statistic min(w_plus, w_minus).
    pub statistic: f64,
    pub p_value: f64,
    /// Number of nonzero differences actually used.
    pub n_used: usize,
    pub method: TestMethod,
}

/// Average ranks of |d| (1-based; ties share the mean of their positions).
fn average_ranks(abs_d: &[f64]) -> Vec<f64> {
    let n = abs_d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| abs_d[i].total_cmp(&abs_d[j]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]] {
            j += 1;
        }
        // positions i+1 ..= j+1 share the average rank
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Exact tail counts of W+ over all 2^n sign assignments.
///
/// `ranks2` are the doubled average ranks (integers). Returns the count
/// vector `c` where `c[s]` is the number of assignments with doubled
/// statistic s. All counts are integers below 2^25 and thus exact in f64.
fn exact_counts(ranks2: &[i64]) -> Vec<f64> {
    let total: i64 = ranks2.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Paired Wilcoxon signed-rank test of `a` against `b`.
pub fn wilcoxon_signed_rank(
    a: &[f64],
    b: &[f64],
    alternative: Alternative,
) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "paired samples of lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::UndefinedTest("non-finite difference".into()));
    }
    let n = diffs.len();
    if n < 5 {
        return Err(Error::UndefinedTest(format!(
            "{n} nonzero differences; at least 5 required"
        )));
    }
    let abs_d: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs_d);
    let w_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| r)
        .sum();
    let rank_total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = rank_total - w_plus;

    let p_value = if n <= 25 {
        let ranks2: Vec<i64> = ranks.iter().map(|r| (2.0 * r).round() as i64).collect();
        let counts = exact_counts(&ranks2);
        let total = (1u64 << n) as f64;
        let w2 = (2.0 * w_plus).round() as usize;
        let p_geq: f64 = counts[w2..].iter().sum::<f64>() / total;
        let p_leq: f64 = counts[..=w2].iter().sum::<f64>() / total;
        match alternative {
            Alternative::Greater => p_geq,
            Alternative::Less => p_leq,
            Alternative::TwoSided => (2.0 * p_geq.min(p_leq)).min(1.0),
        }
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // tie correction: sum over tie groups of (t^3 - t) / 48
        let mut tie_term = 0.0;
        let mut sorted = abs_d.clone();
        sorted.sort_by(f64::total_cmp);
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += (t * t * t - t) / 48.0;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
        let sd = var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        // continuity correction of 1/2 toward the mean
        let p_greater = 1.0 - normal.cdf((w_plus - mean - 0.5) / sd);
        let p_less = normal.cdf((w_plus - mean + 0.5) / sd);
        match alternative {
            Alternative::Greater => p_greater,
            Alternative::Less => p_less,
            Alternative::TwoSided => (2.0 * p_greater.min(p_less)).min(1.0),
        }
    };

    Ok(WilcoxonResult {
        w_plus,
        w_minus,
        statistic: w_plus.min(w_minus),
        p_value,
        n_used: n,
        method: if n <= 25 {
            TestMethod::Exact
        } else {
            TestMethod::NormalApprox
        },
    })
}
