//! Small statistics helpers for the experiment harness.

use std::collections::BTreeMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Linear-interpolation quantile of the sorted order statistics
/// (`q = 0.5` is the usual median). `None` on empty input.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Standard error of a binomial frequency with success probability `p`
/// (clamped to `[0, 1]`) over `trials` draws.
pub fn binomial_sd(p: f64, trials: usize) -> f64 {
    let p = p.clamp(0.0, 1.0);
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareOutcome {
    pub statistic: f64,
    pub dof: usize,
    pub bins: usize,
    pub p_value: f64,
}

/// Two-sample chi-square homogeneity test on integer-valued samples.
///
/// Adjacent values are pooled, in increasing order, until each bin has an
/// expected count of at least `min_expected` under both samples; a short
/// tail is merged into the last bin. With a single bin the samples cannot
/// be told apart and the p-value is 1. Returns `None` when either sample is
/// empty or the combined sample cannot fill one bin.
pub fn chi_square_two_sample(a: &[u64], b: &[u64], min_expected: f64) -> Option<ChiSquareOutcome> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut counts: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_default().0 += 1.0;
    }
    for &x in b {
        counts.entry(x).or_default().1 += 1.0;
    }

    let filled = |ca: f64, cb: f64| {
        let pooled = (ca + cb) / total;
        pooled * na >= min_expected && pooled * nb >= min_expected
    };
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for &(ca, cb) in counts.values() {
        acc.0 += ca;
        acc.1 += cb;
        if filled(acc.0, acc.1) {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 + acc.1 > 0.0 {
        let last = bins.last_mut()?;
        last.0 += acc.0;
        last.1 += acc.1;
    }

    if bins.len() < 2 {
        return Some(ChiSquareOutcome {
            statistic: 0.0,
            dof: 0,
            bins: bins.len(),
            p_value: 1.0,
        });
    }
    let statistic: f64 = bins
        .iter()
        .map(|&(ca, cb)| {
            let pooled = (ca + cb) / total;
            let (ea, eb) = (pooled * na, pooled * nb);
            (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb
        })
        .sum();
    let dof = bins.len() - 1;
    let p_value = ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .sf(statistic);
    Some(ChiSquareOutcome {
        statistic,
        dof,
        bins: bins.len(),
        p_value,
    })
}
