//! Error measures for comparing predicted link flows (or demand) against
//! reference values, plus sensor grouping by typical flow level.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predicted series has {predicted} values, actual has {actual}")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("cannot compute errors over an empty series")]
    Empty,
    #[error("non-finite value in {0} series")]
    NonFinite(&'static str),
    #[error("{levels} sensor levels for {sensors} sensor series")]
    LevelsMismatch { levels: usize, sensors: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Squared-error summary of one predicted-vs-actual comparison.
///
/// `rrmse_percent` is the root error as a percentage of the mean actual
/// value; it is undefined (None) when that mean is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowErrors {
    pub mse: f64,
    pub rmse: f64,
    pub rrmse_percent: Option<f64>,
}

pub fn flow_errors(predicted: &[f64], actual: &[f64]) -> Result<FlowErrors, MetricsError> {
    if predicted.len() != actual.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::Empty);
    }
    if predicted.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("predicted"));
    }
    if actual.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("actual"));
    }
    let n = predicted.len() as f64;
    let mse = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n;
    let rmse = mse.sqrt();
    let mean = actual.iter().sum::<f64>() / n;
    let rrmse_percent = if mean == 0.0 { None } else { Some(rmse / mean * 100.0) };
    Ok(FlowErrors {
        mse,
        rmse,
        rrmse_percent,
    })
}

/// Sensors are grouped by the median of their hourly flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FlowLevel {
    Low,
    Medium,
    High,
}

/// Median at or below this is a low-flow sensor.
pub const LOW_MEDIAN_MAX: f64 = 36.0;
/// Median at or below this (and above the low bound) is medium-flow.
pub const MEDIUM_MEDIAN_MAX: f64 = 175.5;

impl FlowLevel {
    pub fn from_median(median: f64) -> FlowLevel {
        if median <= LOW_MEDIAN_MAX {
            FlowLevel::Low
        } else if median <= MEDIUM_MEDIAN_MAX {
            FlowLevel::Medium
        } else {
            FlowLevel::High
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FlowLevel::Low => "low",
            FlowLevel::Medium => "medium",
            FlowLevel::High => "high",
        }
    }
}

/// Median of a series; the even case averages the two central values.
pub fn median(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite("median input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

/// Classifies each sensor by the median of its hourly flow series.
pub fn group_sensors(flows_by_sensor: &[Vec<f64>]) -> Result<Vec<FlowLevel>, MetricsError> {
    flows_by_sensor
        .iter()
        .map(|series| Ok(FlowLevel::from_median(median(series)?)))
        .collect()
}

/// Error summary for one flow-level group; `sensor_count` may be zero, in
/// which case there is nothing to compare and `errors` is None.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelErrors {
    pub level: FlowLevel,
    pub sensor_count: usize,
    pub errors: Option<FlowErrors>,
}

/// Pools every (hour, sensor) entry of each flow-level group into one
/// comparison. `predicted_by_hour` and `actual_by_hour` are hour-major:
/// one row per hour, one column per sensor, aligned with `levels`.
pub fn grouped_errors(
    predicted_by_hour: &[Vec<f64>],
    actual_by_hour: &[Vec<f64>],
    levels: &[FlowLevel],
) -> Result<Vec<LevelErrors>, MetricsError> {
    if predicted_by_hour.len() != actual_by_hour.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted_by_hour.len(),
            actual: actual_by_hour.len(),
        });
    }
    let mut by_level: BTreeMap<FlowLevel, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (pred_row, act_row) in predicted_by_hour.iter().zip(actual_by_hour) {
        if pred_row.len() != levels.len() || act_row.len() != levels.len() {
            return Err(MetricsError::LevelsMismatch {
                levels: levels.len(),
                sensors: pred_row.len().max(act_row.len()),
            });
        }
        for ((p, a), &level) in pred_row.iter().zip(act_row).zip(levels) {
            let bucket = by_level.entry(level).or_default();
            bucket.0.push(*p);
            bucket.1.push(*a);
        }
    }
    let mut out = Vec::new();
    for level in [FlowLevel::Low, FlowLevel::Medium, FlowLevel::High] {
        let sensor_count = levels.iter().filter(|&&l| l == level).count();
        let errors = match by_level.get(&level) {
            Some((p, a)) if !p.is_empty() => Some(flow_errors(p, a)?),
            _ => None,
        };
        out.push(LevelErrors {
            level,
            sensor_count,
            errors,
        });
    }
    Ok(out)
}

/// Hour-by-hour error table with two closing summary rows.
#[derive(Debug, Clone)]
pub struct HourlyErrorReport {
    pub hours: Vec<u32>,
    pub per_hour: Vec<FlowErrors>,
    /// Plain averages of the per-hour columns; the root column is the mean
    /// of hourly roots, not the root of the mean.
    pub mean_of_hours: FlowErrors,
    /// One comparison over every (hour, sensor) entry at once.
    pub pooled: FlowErrors,
}

pub fn build_hourly_report(
    hours: &[u32],
    predicted_by_hour: &[Vec<f64>],
    actual_by_hour: &[Vec<f64>],
) -> Result<HourlyErrorReport, MetricsError> {
    if hours.len() != predicted_by_hour.len() || hours.len() != actual_by_hour.len() {
        return Err(MetricsError::LengthMismatch {
            predicted: predicted_by_hour.len(),
            actual: actual_by_hour.len(),
        });
    }
    if hours.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut per_hour = Vec::with_capacity(hours.len());
    for (p, a) in predicted_by_hour.iter().zip(actual_by_hour) {
        per_hour.push(flow_errors(p, a)?);
    }
    let n = per_hour.len() as f64;
    let mean_mse = per_hour.iter().map(|e| e.mse).sum::<f64>() / n;
    let mean_rmse = per_hour.iter().map(|e| e.rmse).sum::<f64>() / n;
    let defined: Vec<f64> = per_hour.iter().filter_map(|e| e.rrmse_percent).collect();
    let mean_rrmse = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let flat_p: Vec<f64> = predicted_by_hour.iter().flatten().copied().collect();
    let flat_a: Vec<f64> = actual_by_hour.iter().flatten().copied().collect();
    Ok(HourlyErrorReport {
        hours: hours.to_vec(),
        per_hour,
        mean_of_hours: FlowErrors {
            mse: mean_mse,
            rmse: mean_rmse,
            rrmse_percent: mean_rrmse,
        },
        pooled: flow_errors(&flat_p, &flat_a)?,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "na".into(),
    }
}

/// Writes the report as a whitespace-delimited table with one row per hour
/// and labeled summary rows; undefined relative errors print as "na".
pub fn write_report(w: &mut dyn Write, report: &HourlyErrorReport) -> Result<(), MetricsError> {
    writeln!(w, "# flow-error-report hours={}", report.hours.len())?;
    writeln!(w, "hour mse rmse rrmse_percent")?;
    for (hour, e) in report.hours.iter().zip(&report.per_hour) {
        writeln!(
            w,
            "{hour} {:.4} {:.4} {}",
            e.mse,
            e.rmse,
            fmt_opt(e.rrmse_percent)
        )?;
    }
    for (label, e) in [
        ("mean_of_hours", &report.mean_of_hours),
        ("pooled", &report.pooled),
    ] {
        writeln!(
            w,
            "{label} {:.4} {:.4} {}",
            e.mse,
            e.rmse,
            fmt_opt(e.rrmse_percent)
        )?;
    }
    Ok(())
}
