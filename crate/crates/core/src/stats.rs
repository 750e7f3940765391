//! Rank correlation and kernel density estimation.

use serde::{Deserialize, Serialize};

use crate::error::AnalysisError;

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::InvalidArgument(format!(
            "vectors differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(AnalysisError::InsufficientData {
            needed: 2,
            got: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidArgument("non-finite value".into()));
    }
    if is_constant(x) || is_constant(y) {
        return Err(AnalysisError::UndefinedCorrelation);
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let mean = (x.len() as f64 + 1.0) / 2.0;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        vx += da * da;
        vy += db * db;
    }
    Ok((cov / (vx * vy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub x: f64,
    pub density: f64,
}

/// Linear-interpolation quantile of sorted data (the common "type 7" rule).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// When the IQR is zero but the spread is not, the standard deviation alone
/// is used. Returns 0 for constant data.
pub fn silverman_bandwidth(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

pub const MIN_DENSITY_POINTS: usize = 16;
pub const DEFAULT_DENSITY_POINTS: usize = 128;
const SPIKE_WIDTH: f64 = 1e-3;

fn trapezoid(curve: &[DensityPoint]) -> f64 {
    curve
        .windows(2)
        .map(|w| 0.5 * (w[1].x - w[0].x) * (w[0].density + w[1].density))
        .sum()
}

/// Gaussian KDE sampled at `points` evenly spaced x over `[min - 3h, max + 3h]`.
///
/// Samples are rescaled so their trapezoid integral is exactly 1. Constant
/// input yields a single spike: one non-zero sample at the common value whose
/// neighbours lie `1e-3 * max(1, |v|)` away.
pub fn density_curve(scores: &[f64], points: usize) -> Result<Vec<DensityPoint>, AnalysisError> {
    if scores.len() < 2 {
        return Err(AnalysisError::InsufficientData {
            needed: 2,
            got: scores.len(),
        });
    }
    if points < MIN_DENSITY_POINTS {
        return Err(AnalysisError::InvalidArgument(format!(
            "need at least {MIN_DENSITY_POINTS} density points, got {points}"
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(AnalysisError::InvalidArgument("non-finite score".into()));
    }

    let h = silverman_bandwidth(scores);
    if h <= 0.0 {
        let v = scores[0];
        let step = SPIKE_WIDTH * v.abs().max(1.0);
        let center = points / 2;
        return Ok((0..points)
            .map(|i| DensityPoint {
                x: v + (i as f64 - center as f64) * step,
                density: if i == center { 1.0 / step } else { 0.0 },
            })
            .collect());
    }

    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let norm = 1.0 / (scores.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut curve: Vec<DensityPoint> = (0..points)
        .map(|i| {
            let x = lo + i as f64 * step;
            let sum: f64 = scores
                .iter()
                .map(|s| {
                    let u = (x - s) / h;
                    (-0.5 * u * u).exp()
                })
                .sum();
            DensityPoint {
                x,
                density: norm * sum,
            }
        })
        .collect();
    let area = trapezoid(&curve);
    for p in &mut curve {
        p.density /= area;
    }
    Ok(curve)
}
