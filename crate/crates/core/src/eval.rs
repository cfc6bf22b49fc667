//! One-step-ahead metrics.

use crate::error::{Error, Result};

/// Outcome of predicting one target before learning from it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub prediction: f64,
    pub truth: f64,
    pub abs_error: f64,
    /// `None` for point-estimate learners.
    pub log_lik: Option<f64>,
    pub dominant_bit: Option<bool>,
    pub beam_entropy: Option<f64>,
}

impl StepRecord {
    pub fn new(step: usize, prediction: f64, truth: f64) -> Self {
        Self {
            step,
            prediction,
            truth,
            abs_error: (prediction - truth).abs(),
            log_lik: None,
            dominant_bit: None,
            beam_entropy: None,
        }
    }
}

/// Mean cumulative absolute error `(1/t) Σ |ŷᵢ − yᵢ|`.
pub fn mcae(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("MCAE of an empty record set".into()));
    }
    Ok(records.iter().map(|r| r.abs_error).sum::<f64>() / records.len() as f64)
}

/// Time-averaged predictive log-likelihood.
pub fn predictive_ll(records: &[StepRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("predictive log-likelihood of an empty record set".into()));
    }
    let mut total = 0.0;
    for r in records {
        total += r
            .log_lik
            .ok_or_else(|| Error::Contract(format!("record {} has no log-likelihood", r.step)))?;
    }
    Ok(total / records.len() as f64)
}

/// Streaming MCAE and average log-likelihood in O(1) memory.
#[derive(Debug, Clone, Default)]
pub struct RunningMetrics {
    count: usize,
    abs_sum: f64,
    ll_sum: f64,
    ll_count: usize,
}

impl RunningMetrics {
    pub fn push(&mut self, r: &StepRecord) {
        self.count += 1;
        self.abs_sum += r.abs_error;
        if let Some(ll) = r.log_lik {
            self.ll_sum += ll;
            self.ll_count += 1;
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mcae(&self) -> Option<f64> {
        (self.count > 0).then(|| self.abs_sum / self.count as f64)
    }

    /// Defined only when every record carried a log-likelihood.
    pub fn mean_log_lik(&self) -> Option<f64> {
        (self.ll_count > 0 && self.ll_count == self.count).then(|| self.ll_sum / self.ll_count as f64)
    }
}

/// Mean over consecutive segments of length `segment_len` of the
/// within-segment sample standard deviation. A trailing partial segment
/// counts when it has at least two points.
pub fn segmented_std(series: &[f64], segment_len: usize) -> Result<f64> {
    if segment_len < 2 {
        return Err(Error::Contract(format!("segment length must be >= 2, got {segment_len}")));
    }
    if series.len() < segment_len {
        return Err(Error::Contract(format!(
            "series of length {} shorter than one segment ({segment_len})",
            series.len()
        )));
    }
    let stds: Vec<f64> = series
        .chunks(segment_len)
        .filter(|c| c.len() >= 2)
        .map(sample_std)
        .collect();
    Ok(stds.iter().sum::<f64>() / stds.len() as f64)
}

/// Two-pass sample std on values shifted by the first element, so a
/// constant chunk yields exactly zero.
fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let shifted: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let mean = shifted.iter().sum::<f64>() / n;
    (shifted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
