use serde::{Deserialize, Serialize};
use web_time::Instant;

use super::{FeatureVector, TreeEnsemble};
use crate::{Error, Result};

/// Accuracy summary of a predictor on a test set.
///
/// `mae_pct` is the mean per-sample relative error, `mean(|err| / |y|) * 100`;
/// rows with `y == 0` are left out of that mean. `r2` is `None` when the test
/// targets have zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub r2: Option<f64>,
    pub rmse: f64,
    pub sdae: f64,
    pub mae_pct: f64,
    pub inference_time_s: f64,
}

/// Metrics for precomputed predictions; `inference_time_s` is set to 0.
pub fn score(y_true: &[f64], y_pred: &[f64]) -> Result<PredictorMetrics> {
    if y_true.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::Invariant("prediction count does not match targets".into()));
    }
    let n = y_true.len() as f64;
    let mean_y = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean_y).powi(2)).sum();
    let abs_err: Vec<f64> = y_true.iter().zip(y_pred).map(|(y, p)| (p - y).abs()).collect();
    let ss_res: f64 = abs_err.iter().map(|e| e * e).sum();
    let mean_abs = abs_err.iter().sum::<f64>() / n;
    let sdae = (abs_err.iter().map(|e| (e - mean_abs).powi(2)).sum::<f64>() / n).sqrt();
    let (rel_sum, rel_n) = y_true
        .iter()
        .zip(&abs_err)
        .filter(|(y, _)| **y != 0.0)
        .fold((0.0, 0usize), |(s, k), (y, e)| (s + e / y.abs(), k + 1));
    Ok(PredictorMetrics {
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        rmse: (ss_res / n).sqrt(),
        sdae,
        mae_pct: if rel_n == 0 {
            f64::NAN
        } else {
            100.0 * rel_sum / rel_n as f64
        },
        inference_time_s: 0.0,
    })
}

/// Predict every row of the test set and score the result; the wall time of
/// the prediction pass is reported as `inference_time_s`.
pub fn evaluate(model: &TreeEnsemble, xs: &[FeatureVector], ys: &[f64]) -> Result<PredictorMetrics> {
    if xs.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    let start = Instant::now();
    let preds: Vec<f64> = xs.iter().map(|x| model.predict(x)).collect();
    let elapsed = start.elapsed().as_secs_f64();
    Ok(PredictorMetrics {
        inference_time_s: elapsed,
        ..score(ys, &preds)?
    })
}
