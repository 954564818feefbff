//! Sample summaries, goodness-of-fit and total-variation estimation.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{weighted::WeightedIndex, Distribution};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::simulator::EmpiricalMarginal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl SampleStats {
    pub fn new<I: IntoIterator<Item = f64>>(values: I) -> Self {
        // Welford
        let mut count = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in values {
            count += 1;
            let d = x - mean;
            mean += d / count as f64;
            m2 += d * (x - mean);
        }
        let variance = if count > 1 { m2 / (count - 1) as f64 } else { 0.0 };
        Self { count, mean, variance }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance / self.count as f64).sqrt()
    }
}

/// Raw moment estimate `mean(x^r)` with its standard error.
pub fn moment_stats(values: &[f64], r: f64) -> SampleStats {
    SampleStats::new(values.iter().map(|x| x.powf(r)))
}

/// Standard error of a binomial proportion.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (-mean + k as f64 * mean.ln() - ln_gamma(k as f64 + 1.0)).exp()
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n - F|`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov critical value `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Total variation between two probability vectors indexed by key.
pub fn tv_distance<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, pv) in p {
        sum += (pv - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, qv) in q {
        if !p.contains_key(k) {
            sum += qv.abs();
        }
    }
    0.5 * sum
}

fn normalize<K: Ord + Clone>(counts: &BTreeMap<K, u64>) -> BTreeMap<K, f64> {
    let total: u64 = counts.values().sum();
    counts
        .iter()
        .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TvEstimate {
    pub tv: f64,
    /// Half the width of the central 95% bootstrap interval.
    pub half_width: f64,
}

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_TV_SAMPLE: u64 = 100;

/// Plug-in total variation between two binned samples with a bootstrap
/// half-width. Binning can only merge probability mass, so this is a lower
/// bound on the total variation of the underlying laws (up to noise).
pub fn tv_from_counts<K: Ord + Clone, R: Rng + ?Sized>(
    a: &BTreeMap<K, u64>,
    b: &BTreeMap<K, u64>,
    resamples: usize,
    rng: &mut R,
) -> Result<TvEstimate> {
    let na: u64 = a.values().sum();
    let nb: u64 = b.values().sum();
    if na < MIN_TV_SAMPLE || nb < MIN_TV_SAMPLE {
        return Err(Error::NoData(format!(
            "total variation needs at least {MIN_TV_SAMPLE} samples per side, got {na} and {nb}"
        )));
    }
    let tv = tv_distance(&normalize(a), &normalize(b));
    if resamples == 0 {
        return Ok(TvEstimate { tv, half_width: 0.0 });
    }
    let resample = |counts: &BTreeMap<K, u64>, n: u64, rng: &mut R| -> BTreeMap<usize, u64> {
        let weights: Vec<u64> = counts.values().copied().collect();
        let dist = WeightedIndex::new(&weights).expect("positive total");
        let mut out = BTreeMap::new();
        for _ in 0..n {
            *out.entry(dist.sample(rng)).or_insert(0) += 1;
        }
        out
    };
    // Resampled counts are keyed by position in the union of keys.
    let keys: Vec<K> = {
        let mut ks: Vec<K> = a.keys().chain(b.keys()).cloned().collect();
        ks.sort();
        ks.dedup();
        ks
    };
    let position = |k: &K| keys.binary_search(k).expect("key present");
    let a_pos: Vec<usize> = a.keys().map(position).collect();
    let b_pos: Vec<usize> = b.keys().map(position).collect();
    let mut draws = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let ra: BTreeMap<usize, u64> = resample(a, na, rng)
            .into_iter()
            .map(|(i, c)| (a_pos[i], c))
            .collect();
        let rb: BTreeMap<usize, u64> = resample(b, nb, rng)
            .into_iter()
            .map(|(i, c)| (b_pos[i], c))
            .collect();
        draws.push(tv_distance(&normalize(&ra), &normalize(&rb)));
    }
    draws.sort_by(f64::total_cmp);
    let lo = draws[(0.025 * (resamples - 1) as f64).round() as usize];
    let hi = draws[(0.975 * (resamples - 1) as f64).round() as usize];
    Ok(TvEstimate {
        tv,
        half_width: 0.5 * (hi - lo),
    })
}

/// Binned total-variation estimate between two empirical marginals over the
/// joint `(n, x0-bin)` cells.
pub fn estimate_tv<R: Rng + ?Sized>(
    a: &EmpiricalMarginal,
    b: &EmpiricalMarginal,
    rng: &mut R,
) -> Result<TvEstimate> {
    if a.binning != b.binning {
        return Err(Error::InvalidParameter {
            name: "binning",
            reason: "marginals use different x0 binnings".into(),
        });
    }
    tv_from_counts(&a.joint_counts, &b.joint_counts, BOOTSTRAP_RESAMPLES, rng)
}
