//! Heavy-tail tests for degree sequences.
//!
//! A discrete power law `p(x) = x^{-α} / ζ(α, x_min)` and a discrete
//! exponential `p(x) = (1 - e^{-λ}) e^{-λ (x - x_min)}` are fitted by maximum
//! likelihood on the common tail `x ≥ x_min`, with `x_min` chosen to minimize
//! the Kolmogorov-Smirnov distance of the power-law fit. The two fits are then
//! compared with the normalized log-likelihood ratio.

pub mod zeta;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{BipartiteGraph, Partition};
use zeta::ln_hurwitz_zeta;

pub const DEFAULT_SIGNIFICANCE: f64 = 0.1;
pub const DEFAULT_MIN_TAIL: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no spread to fit: fewer than two distinct values")]
    NoSpread,
    #[error("insufficient tail data: no x_min leaves {min_tail} or more values with spread")]
    InsufficientTail { min_tail: usize },
    #[error("degenerate tail: every tail value equals x_min")]
    DegenerateTail,
    #[error("x_min must be at least 1")]
    InvalidXmin,
}

/// Positive integer observations. Zeros are dropped and counted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeSequence {
    /// Sorted ascending.
    values: Vec<u64>,
    partition: Option<Partition>,
    excluded_zeros: usize,
}

impl DegreeSequence {
    pub fn new<I: IntoIterator<Item = u64>>(values: I) -> Self {
        let mut excluded_zeros = 0;
        let mut kept: Vec<u64> = values
            .into_iter()
            .filter(|&v| {
                excluded_zeros += (v == 0) as usize;
                v > 0
            })
            .collect();
        kept.sort_unstable();
        DegreeSequence {
            values: kept,
            partition: None,
            excluded_zeros,
        }
    }

    pub fn of_partition(g: &BipartiteGraph, partition: Partition) -> Self {
        let mut seq = Self::new(g.degree_sequence(partition).into_iter().map(|d| d as u64));
        seq.partition = Some(partition);
        seq
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn partition(&self) -> Option<Partition> {
        self.partition
    }

    pub fn excluded_zeros(&self) -> usize {
        self.excluded_zeros
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values ≥ `x_min`.
    pub fn tail(&self, x_min: u64) -> &[u64] {
        let start = self.values.partition_point(|&v| v < x_min);
        &self.values[start..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub min_tail: usize,
    pub significance: f64,
    /// Skip the KS scan and fit at this cutoff.
    pub x_min: Option<u64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            min_tail: DEFAULT_MIN_TAIL,
            significance: DEFAULT_SIGNIFICANCE,
            x_min: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub x_min: u64,
    pub alpha: f64,
    pub log_likelihood: f64,
    pub n_tail: usize,
    pub ks_distance: f64,
}

impl PowerLawFit {
    fn ln_norm(&self) -> f64 {
        ln_hurwitz_zeta(self.alpha, self.x_min as f64).0
    }

    pub fn ln_pdf(&self, x: u64) -> f64 {
        -self.alpha * (x as f64).ln() - self.ln_norm()
    }

    pub fn pdf(&self, x: u64) -> f64 {
        if x < self.x_min {
            0.0
        } else {
            self.ln_pdf(x).exp()
        }
    }

    /// P(X ≥ x).
    pub fn ccdf(&self, x: u64) -> f64 {
        if x <= self.x_min {
            1.0
        } else {
            (ln_hurwitz_zeta(self.alpha, x as f64).0 - self.ln_norm()).exp()
        }
    }

    /// P(X < x).
    pub fn cdf(&self, x: u64) -> f64 {
        1.0 - self.ccdf(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub x_min: u64,
    pub lambda: f64,
    pub log_likelihood: f64,
    pub n_tail: usize,
}

impl ExponentialFit {
    pub fn ln_pdf(&self, x: u64) -> f64 {
        (-(-self.lambda).exp_m1()).ln() - self.lambda * (x - self.x_min) as f64
    }

    pub fn pdf(&self, x: u64) -> f64 {
        if x < self.x_min {
            0.0
        } else {
            self.ln_pdf(x).exp()
        }
    }

    /// P(X ≥ x).
    pub fn ccdf(&self, x: u64) -> f64 {
        if x <= self.x_min {
            1.0
        } else {
            (-self.lambda * (x - self.x_min) as f64).exp()
        }
    }

    /// P(X < x).
    pub fn cdf(&self, x: u64) -> f64 {
        1.0 - self.ccdf(x)
    }
}

/// `E[ln X]` under the power law minus the sample mean of `ln x`; decreasing in alpha.
fn score(alpha: f64, x_min: f64, mean_ln: f64) -> f64 {
    -ln_hurwitz_zeta(alpha, x_min).1 - mean_ln
}

/// Maximum-likelihood exponent: the root of the score equation.
fn solve_alpha(x_min: u64, mean_ln: f64) -> f64 {
    let q = x_min as f64;
    let mut lo = 1.0 + 1e-9;
    let mut hi = 2.0;
    while score(hi, q, mean_ln) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e7 {
            return hi;
        }
    }
    if score(lo, q, mean_ln) <= 0.0 {
        return lo;
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if score(mid, q, mean_ln) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn distinct_counts(tail: &[u64]) -> Vec<(u64, usize)> {
    let mut out: Vec<(u64, usize)> = Vec::new();
    for &v in tail {
        match out.last_mut() {
            Some((x, c)) if *x == v => *c += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Largest gap between the empirical and model CDF over all integers ≥ x_min.
fn ks_distance(fit: &PowerLawFit, counts: &[(u64, usize)], n: usize) -> f64 {
    let ln_norm = fit.ln_norm();
    let n = n as f64;
    let mut seen = 0usize;
    let mut worst: f64 = 0.0;
    for (j, &(x, c)) in counts.iter().enumerate() {
        // Model P(X ≤ x) = 1 - P(X ≥ x + 1).
        let below_next = 1.0 - fit.ccdf(x) + (-fit.alpha * (x as f64).ln() - ln_norm).exp();
        seen += c;
        let emp = seen as f64 / n;
        worst = worst.max((emp - below_next).abs());
        // The empirical CDF stays at `emp` up to the next observed value while
        // the model keeps rising; its largest value there is P(X < next).
        if let Some(&(next, _)) = counts.get(j + 1) {
            if next > x + 1 {
                worst = worst.max((emp - fit.cdf(next)).abs());
            }
        }
    }
    worst
}

fn fit_power_law_tail(tail: &[u64], x_min: u64) -> PowerLawFit {
    let n = tail.len();
    let sum_ln: f64 = tail.iter().map(|&x| (x as f64).ln()).sum();
    let alpha = solve_alpha(x_min, sum_ln / n as f64);
    let ln_norm = ln_hurwitz_zeta(alpha, x_min as f64).0;
    let mut fit = PowerLawFit {
        x_min,
        alpha,
        log_likelihood: -alpha * sum_ln - n as f64 * ln_norm,
        n_tail: n,
        ks_distance: 0.0,
    };
    fit.ks_distance = ks_distance(&fit, &distinct_counts(tail), n);
    fit
}

/// Power-law fit at a fixed cutoff.
pub fn fit_power_law_at(seq: &DegreeSequence, x_min: u64) -> Result<PowerLawFit, FitError> {
    if x_min == 0 {
        return Err(FitError::InvalidXmin);
    }
    let tail = seq.tail(x_min);
    match (tail.first(), tail.last()) {
        (Some(a), Some(b)) if a != b => Ok(fit_power_law_tail(tail, x_min)),
        _ => Err(FitError::NoSpread),
    }
}

/// Power-law fit with the cutoff chosen by minimum KS distance.
pub fn fit_power_law(seq: &DegreeSequence, options: &FitOptions) -> Result<PowerLawFit, FitError> {
    if let Some(x_min) = options.x_min {
        return fit_power_law_at(seq, x_min);
    }
    let values = seq.values();
    if values.len() < options.min_tail {
        return Err(FitError::InsufficientTail {
            min_tail: options.min_tail,
        });
    }
    match (values.first(), values.last()) {
        (Some(a), Some(b)) if a != b => {}
        _ => return Err(FitError::NoSpread),
    }
    let max = *values.last().unwrap();
    let mut best: Option<PowerLawFit> = None;
    for (x_min, _) in distinct_counts(values) {
        let tail = seq.tail(x_min);
        if x_min == max || tail.len() < options.min_tail {
            break;
        }
        let fit = fit_power_law_tail(tail, x_min);
        if best.is_none_or(|b| fit.ks_distance < b.ks_distance) {
            best = Some(fit);
        }
    }
    best.ok_or(FitError::InsufficientTail {
        min_tail: options.min_tail,
    })
}

/// Closed-form discrete exponential MLE on `x ≥ x_min`.
pub fn fit_exponential(seq: &DegreeSequence, x_min: u64) -> Result<ExponentialFit, FitError> {
    if x_min == 0 {
        return Err(FitError::InvalidXmin);
    }
    let tail = seq.tail(x_min);
    if tail.is_empty() {
        return Err(FitError::InsufficientTail { min_tail: 1 });
    }
    let n = tail.len() as f64;
    let excess: u64 = tail.iter().map(|&x| x - x_min).sum();
    if excess == 0 {
        return Err(FitError::DegenerateTail);
    }
    let mean_excess = excess as f64 / n;
    let lambda = (1.0 / mean_excess).ln_1p();
    let log_likelihood = n * (-(-lambda).exp_m1()).ln() - lambda * excess as f64;
    Ok(ExponentialFit {
        x_min,
        lambda,
        log_likelihood,
        n_tail: tail.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRatio {
    /// Σ ln p1(x_i) - ln p2(x_i).
    pub r: f64,
    /// Standard deviation of the pointwise terms.
    pub sigma: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Normalized log-likelihood ratio of two models over the same observations.
pub fn compare_log_likelihoods(ln_p1: &[f64], ln_p2: &[f64]) -> LikelihoodRatio {
    assert_eq!(ln_p1.len(), ln_p2.len(), "models must be evaluated on the same points");
    let n = ln_p1.len();
    let terms: Vec<f64> = ln_p1.iter().zip(ln_p2).map(|(a, b)| a - b).collect();
    let r: f64 = terms.iter().sum();
    let mean = r / n as f64;
    let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n as f64;
    let sigma = var.sqrt();
    let p_value = if sigma > 0.0 {
        libm::erfc(r.abs() / (sigma * (2.0 * n as f64).sqrt()))
    } else {
        1.0
    };
    LikelihoodRatio { r, sigma, p_value, n }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    PowerLawPreferred,
    ExponentialPreferred,
    Inconclusive,
}

impl Verdict {
    pub fn decide(r: f64, p_value: f64, significance: f64) -> Self {
        if p_value < significance && r > 0.0 {
            Verdict::PowerLawPreferred
        } else if p_value < significance && r < 0.0 {
            Verdict::ExponentialPreferred
        } else {
            Verdict::Inconclusive
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::PowerLawPreferred => "power-law",
            Verdict::ExponentialPreferred => "exponential",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFitResult {
    pub partition: Option<Partition>,
    pub x_min: u64,
    pub alpha: f64,
    pub lambda: f64,
    pub n_tail: usize,
    pub n_values: usize,
    pub excluded_zeros: usize,
    pub ks_distance: f64,
    pub power_law_log_likelihood: f64,
    pub exponential_log_likelihood: f64,
    /// Power-law minus exponential log-likelihood over the tail.
    pub log_likelihood_ratio: f64,
    pub p_value: f64,
    pub significance: f64,
    pub verdict: Verdict,
}

impl TailFitResult {
    pub fn power_law(&self) -> PowerLawFit {
        PowerLawFit {
            x_min: self.x_min,
            alpha: self.alpha,
            log_likelihood: self.power_law_log_likelihood,
            n_tail: self.n_tail,
            ks_distance: self.ks_distance,
        }
    }

    pub fn exponential(&self) -> ExponentialFit {
        ExponentialFit {
            x_min: self.x_min,
            lambda: self.lambda,
            log_likelihood: self.exponential_log_likelihood,
            n_tail: self.n_tail,
        }
    }
}

/// Pointwise log-likelihoods of both fits over the tail, power law first.
pub fn pointwise_log_likelihoods(seq: &DegreeSequence, pl: &PowerLawFit, exp: &ExponentialFit) -> (Vec<f64>, Vec<f64>) {
    let tail = seq.tail(pl.x_min);
    let ln_norm = pl.ln_norm();
    let ln_pl = tail.iter().map(|&x| -pl.alpha * (x as f64).ln() - ln_norm).collect();
    let ln_exp = tail.iter().map(|&x| exp.ln_pdf(x)).collect();
    (ln_pl, ln_exp)
}

/// Power law against exponential on the power law's tail.
pub fn likelihood_ratio_test(seq: &DegreeSequence, options: &FitOptions) -> Result<TailFitResult, FitError> {
    let pl = fit_power_law(seq, options)?;
    let exp = fit_exponential(seq, pl.x_min)?;
    let (ln_pl, ln_exp) = pointwise_log_likelihoods(seq, &pl, &exp);
    let lr = compare_log_likelihoods(&ln_pl, &ln_exp);
    Ok(TailFitResult {
        partition: seq.partition(),
        x_min: pl.x_min,
        alpha: pl.alpha,
        lambda: exp.lambda,
        n_tail: pl.n_tail,
        n_values: seq.len(),
        excluded_zeros: seq.excluded_zeros(),
        ks_distance: pl.ks_distance,
        power_law_log_likelihood: pl.log_likelihood,
        exponential_log_likelihood: exp.log_likelihood,
        log_likelihood_ratio: lr.r,
        p_value: lr.p_value,
        significance: options.significance,
        verdict: Verdict::decide(lr.r, lr.p_value, options.significance),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub x: u64,
    pub empirical_pdf: f64,
    pub empirical_cdf: f64,
    pub empirical_ccdf: f64,
    pub pl_pdf: f64,
    pub pl_cdf: f64,
    pub pl_ccdf: f64,
    pub exp_pdf: f64,
    pub exp_cdf: f64,
    pub exp_ccdf: f64,
}

/// Empirical and fitted pdf / cdf / ccdf at every integer of the tail range.
/// `cdf(x) = P(X < x)` and `ccdf(x) = P(X ≥ x)`.
pub fn distribution_curves(seq: &DegreeSequence, fit: &TailFitResult) -> Vec<CurveRow> {
    let tail = seq.tail(fit.x_min);
    let Some(&x_max) = tail.last() else {
        return Vec::new();
    };
    let (pl, exp) = (fit.power_law(), fit.exponential());
    let n = tail.len() as f64;
    let counts = distinct_counts(tail);
    let mut next = counts.iter().peekable();
    let mut at_or_above = tail.len();
    let mut rows = Vec::with_capacity((x_max - fit.x_min + 1) as usize);
    for x in fit.x_min..=x_max {
        let count = match next.peek() {
            Some(&&(v, c)) if v == x => {
                next.next();
                c
            }
            _ => 0,
        };
        let ccdf = at_or_above as f64 / n;
        rows.push(CurveRow {
            x,
            empirical_pdf: count as f64 / n,
            empirical_cdf: 1.0 - ccdf,
            empirical_ccdf: ccdf,
            pl_pdf: pl.pdf(x),
            pl_cdf: pl.cdf(x),
            pl_ccdf: pl.ccdf(x),
            exp_pdf: exp.pdf(x),
            exp_cdf: exp.cdf(x),
            exp_ccdf: exp.ccdf(x),
        });
        at_or_above -= count;
    }
    rows
}

pub fn write_curves_csv<W: Write>(rows: &[CurveRow], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
