//! Summary statistics for Monte Carlo records.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Sample mean and unbiased variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    /// Unbiased; zero for a single value.
    pub variance: f64,
}

impl Moments {
    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.is_empty() {
        return Err(Error::EmptyInput("moments"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(Moments {
        count: values.len(),
        mean,
        variance,
    })
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance `sup_t |F̂(t) - Φ(t)|`.
pub fn ks_normal(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("ks_normal"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

/// Interval coverage count with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub hits: usize,
    pub total: usize,
    pub rate: f64,
    /// `√(p(1-p)/N)` at the observed rate.
    pub std_error: f64,
}

pub fn coverage(hits: usize, total: usize) -> Result<Coverage> {
    if total == 0 {
        return Err(Error::EmptyInput("coverage"));
    }
    let rate = hits as f64 / total as f64;
    Ok(Coverage {
        hits,
        total,
        rate,
        std_error: (rate * (1.0 - rate) / total as f64).sqrt(),
    })
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() / 2;
    Ok(if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    })
}
