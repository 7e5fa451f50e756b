//! Evaluation: displacement errors, federated validation loss, stopping
//! detection, and round timing.
//!
//! ADE is the mean Euclidean point error over all trajectories and all
//! predicted steps; FDE the mean error at the final step only. The
//! federated validation loss weights each robot's loss by its share of
//! the observed samples. A run "stops" at the first round where the
//! 5-round windowed mean loss changes by less than 1e-4 (absolute).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::netsim::{ticks_to_seconds, Tick};
use crate::RobotId;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("empty input: {context}")]
    Empty { context: String },
    #[error("zero total samples")]
    ZeroSamples,
    #[error("need at least 2 round records, got {0}")]
    TooFewRecords(usize),
}

fn check_sets(
    predicted: &[Vec<(f64, f64)>],
    truth: &[Vec<(f64, f64)>],
) -> Result<(), MetricsError> {
    if predicted.is_empty() {
        return Err(MetricsError::Empty {
            context: "no trajectories".into(),
        });
    }
    if predicted.len() != truth.len() {
        return Err(MetricsError::ShapeMismatch {
            context: format!("{} predictions vs {} truths", predicted.len(), truth.len()),
        });
    }
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() || p.is_empty() {
            return Err(MetricsError::ShapeMismatch {
                context: format!("horizon {} vs {}", p.len(), t.len()),
            });
        }
    }
    Ok(())
}

/// Average displacement error: mean L2 point error over every trajectory
/// and every step of the horizon, in meters.
pub fn ade(
    predicted: &[Vec<(f64, f64)>],
    truth: &[Vec<(f64, f64)>],
) -> Result<f64, MetricsError> {
    check_sets(predicted, truth)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        for (pp, tt) in p.iter().zip(t) {
            sum += (pp.0 - tt.0).hypot(pp.1 - tt.1);
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Final displacement error: mean L2 error at the last step of the
/// horizon, in meters.
pub fn fde(
    predicted: &[Vec<(f64, f64)>],
    truth: &[Vec<(f64, f64)>],
) -> Result<f64, MetricsError> {
    check_sets(predicted, truth)?;
    let sum: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            let (pp, tt) = (p.last().unwrap(), t.last().unwrap());
            (pp.0 - tt.0).hypot(pp.1 - tt.1)
        })
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Sample-weighted mean of per-robot losses: `sum_k (n_k / n) L_k`.
pub fn federated_validation_loss(parts: &[(f64, usize)]) -> Result<f64, MetricsError> {
    let total: usize = parts.iter().map(|&(_, n)| n).sum();
    if total == 0 {
        return Err(MetricsError::ZeroSamples);
    }
    Ok(parts
        .iter()
        .map(|&(loss, n)| loss * n as f64 / total as f64)
        .sum())
}

/// Stopping detection parameters: window length in rounds and the
/// absolute change threshold of the windowed mean.
#[derive(Debug, Clone, Copy)]
pub struct StoppingCriterion {
    pub window: usize,
    pub threshold: f64,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion {
            window: 5,
            threshold: 1e-4,
        }
    }
}

/// First round index (0-based) where the windowed mean loss moves by less
/// than the threshold relative to the window one round earlier. `None`
/// when the curve never settles or is shorter than `window + 1`.
pub fn stopping_round(curve: &[f64], criterion: &StoppingCriterion) -> Option<usize> {
    let w = criterion.window;
    if w == 0 || curve.len() < w + 1 {
        return None;
    }
    let mean = |slice: &[f64]| slice.iter().sum::<f64>() / slice.len() as f64;
    (w..curve.len())
        .find(|&r| (mean(&curve[r + 1 - w..=r]) - mean(&curve[r - w..r])).abs() < criterion.threshold)
}

/// Per-round log entry backing every evaluation metric.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub variant: String,
    pub start_tick: Tick,
    pub end_tick: Tick,
    /// Mean ticks learners spent synchronizing in the entry barrier
    /// beyond the quorum instant; 0 for server variants.
    pub barrier_wait_ticks: u64,
    /// Learner set with each learner's sample count for the round.
    pub learners: BTreeMap<RobotId, usize>,
    pub federated_validation_loss: f64,
}

/// Gaps between consecutive round starts plus barrier-wait statistics.
#[derive(Debug, Clone)]
pub struct TimingReport {
    pub gaps_ticks: Vec<u64>,
    pub gaps_seconds: Vec<f64>,
    pub barrier_wait_mean: f64,
    pub barrier_wait_stdev: f64,
}

/// Inter-round durations and barrier-wait statistics over a run.
pub fn timing_report(records: &[RoundRecord]) -> Result<TimingReport, MetricsError> {
    if records.len() < 2 {
        return Err(MetricsError::TooFewRecords(records.len()));
    }
    let gaps_ticks: Vec<u64> = records
        .windows(2)
        .map(|w| w[1].start_tick.saturating_sub(w[0].start_tick))
        .collect();
    let gaps_seconds = gaps_ticks.iter().map(|&g| ticks_to_seconds(g)).collect();
    let waits: Vec<f64> = records.iter().map(|r| r.barrier_wait_ticks as f64).collect();
    let mean = waits.iter().sum::<f64>() / waits.len() as f64;
    let var = waits.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / waits.len() as f64;
    Ok(TimingReport {
        gaps_ticks,
        gaps_seconds,
        barrier_wait_mean: mean,
        barrier_wait_stdev: var.sqrt(),
    })
}
