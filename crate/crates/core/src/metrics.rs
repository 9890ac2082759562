//! Predictive scoring: per-output RMSE and Gaussian CRPS, and the median
//! multivariate log score.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, Matrix};
use crate::predict::{clip_psd, Prediction};

/// Smallest predictive standard deviation used in CRPS.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Ridge added to each clipped predictive covariance before the log score.
pub const SCORE_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub rmse: Vec<f64>,
    pub crps: Vec<f64>,
    pub mv_score: f64,
    /// One score per test point; `NaN` marks a point whose covariance stayed singular.
    pub per_point_scores: Vec<f64>,
    pub skipped_points: usize,
    pub wall_clock_seconds: f64,
}

fn check_shapes(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "prediction is {:?} but truth is {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Per-output root mean squared error.
pub fn rmse(pred_mean: &Matrix, truth: &Matrix) -> Result<Vec<f64>> {
    check_shapes(pred_mean, truth)?;
    let m = truth.nrows() as f64;
    Ok((0..truth.ncols())
        .map(|q| {
            let sse: f64 = pred_mean
                .column(q)
                .iter()
                .zip(truth.column(q).iter())
                .map(|(p, t)| (p - t).powi(2))
                .sum();
            (sse / m).sqrt()
        })
        .collect())
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Closed-form CRPS of `N(mu, sigma^2)` against `y`; lower is better.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("CRPS needs sigma > 0, got {sigma}")));
    }
    let sigma = sigma.max(SIGMA_FLOOR);
    let z = (y - mu) / sigma;
    let value =
        sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt());
    Ok(value.max(0.0))
}

/// Per-output CRPS averaged over test points. Zero variances are floored.
pub fn crps(pred: &Prediction, truth: &Matrix) -> Result<Vec<f64>> {
    check_shapes(&pred.mean, truth)?;
    let m = truth.nrows() as f64;
    (0..truth.ncols())
        .map(|q| {
            let mut total = 0.0;
            for i in 0..truth.nrows() {
                let sigma = pred.cov[i][(q, q)].max(0.0).sqrt().max(SIGMA_FLOOR);
                total += crps_gaussian(pred.mean[(i, q)], sigma, truth[(i, q)])?;
            }
            Ok(total / m)
        })
        .collect()
}

/// `-log|S| - r^T S^{-1} r` for one point, after PSD clipping and a small ridge.
pub fn point_log_score(mean: &[f64], cov: &Matrix, truth: &[f64]) -> Option<f64> {
    let q = mean.len();
    let regularized = clip_psd(cov.clone()) + Matrix::identity(q, q) * SCORE_RIDGE;
    let factor = spd_factorize(&regularized).ok()?;
    let resid = Matrix::from_fn(q, 1, |a, _| truth[a] - mean[a]);
    let quad = factor.inv_quad_form(&resid).ok()?[(0, 0)];
    let score = -factor.log_det() - quad;
    score.is_finite().then_some(score)
}

/// Exact median (mean of the middle two for even length); `NaN` when empty.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Per-point log scores and their median over the points that could be scored.
pub fn mv_log_score(pred: &Prediction, truth: &Matrix) -> Result<(f64, Vec<f64>, usize)> {
    check_shapes(&pred.mean, truth)?;
    let per_point: Vec<f64> = (0..truth.nrows())
        .map(|i| {
            let mean: Vec<f64> = pred.mean.row(i).iter().copied().collect();
            let y: Vec<f64> = truth.row(i).iter().copied().collect();
            point_log_score(&mean, &pred.cov[i], &y).unwrap_or(f64::NAN)
        })
        .collect();
    let scored: Vec<f64> = per_point.iter().copied().filter(|v| !v.is_nan()).collect();
    let skipped = per_point.len() - scored.len();
    Ok((median(&scored), per_point, skipped))
}

/// All metrics for one prediction against the truth.
pub fn evaluate(pred: &Prediction, truth: &Matrix, wall_clock_seconds: f64) -> Result<MetricReport> {
    let (mv_score, per_point_scores, skipped_points) = mv_log_score(pred, truth)?;
    Ok(MetricReport {
        rmse: rmse(&pred.mean, truth)?,
        crps: crps(pred, truth)?,
        mv_score,
        per_point_scores,
        skipped_points,
        wall_clock_seconds,
    })
}
