//! Forecast accuracy metrics and report assembly.
//!
//! MAE and RMSE are reported in the units of the series (S$/MWh for
//! price data); MAPE is a percentage. MAPE is the headline metric in
//! emitted reports. All metrics are computed in the original price
//! domain; callers must inverse-transform forecasts first.

use crate::error::{Error, Result};
use crate::forecast::ForecastMatrix;

/// Denominator guard for MAPE when an actual value is zero or near it.
pub const MAPE_EPSILON: f64 = 1e-8;

/// Mean absolute error: (1/N) * sum |y_i - yhat_i|.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    validate_pair(y, y_hat, "mae")?;
    let sum: f64 = y
        .iter()
        .zip(y_hat.iter())
        .map(|(a, f)| (a - f).abs())
        .sum();
    Ok(sum / y.len() as f64)
}

/// Mean absolute percentage error, in percent.
///
/// Each term divides by max(|y_i|, epsilon) so zero actuals produce a
/// finite (if large) contribution instead of a division error. Use
/// [`mape_guarded`] to also learn how many terms hit the guard.
pub fn mape(y: &[f64], y_hat: &[f64], epsilon: f64) -> Result<f64> {
    Ok(mape_guarded(y, y_hat, epsilon)?.0)
}

/// MAPE plus the count of terms whose denominator fell back to epsilon.
pub fn mape_guarded(y: &[f64], y_hat: &[f64], epsilon: f64) -> Result<(f64, usize)> {
    validate_pair(y, y_hat, "mape")?;
    let mut sum = 0.0;
    let mut guarded = 0;
    for (a, f) in y.iter().zip(y_hat.iter()) {
        let denom = if a.abs() > epsilon {
            a.abs()
        } else {
            guarded += 1;
            epsilon
        };
        sum += (a - f).abs() / denom;
    }
    Ok((100.0 * sum / y.len() as f64, guarded))
}

/// Root mean square error: sqrt(sum (y_i - yhat_i)^2 / N).
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    validate_pair(y, y_hat, "rmse")?;
    let sum: f64 = y
        .iter()
        .zip(y_hat.iter())
        .map(|(a, f)| (a - f) * (a - f))
        .sum();
    Ok((sum / y.len() as f64).sqrt())
}

fn validate_pair(y: &[f64], y_hat: &[f64], context: &str) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
            context: context.to_string(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput(context.to_string()));
    }
    Ok(())
}

/// Pooled and per-horizon accuracy for one model's forecasts.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub model: String,
    pub variant: String,
    pub mae: f64,
    pub mape_pct: f64,
    pub rmse: f64,
    /// Total scored points: window count times horizon.
    pub n: usize,
    /// Terms where the MAPE denominator fell back to epsilon.
    pub guarded_terms: usize,
    pub per_horizon: Vec<HorizonMetrics>,
}

#[derive(Debug, Clone)]
pub struct HorizonMetrics {
    pub h: usize,
    pub mae: f64,
    pub mape_pct: f64,
    pub rmse: f64,
}

/// Scores a forecast matrix against actual values.
///
/// `actuals` is indexed in the same coordinate frame as the matrix's
/// window starts: the target for window w at horizon h is
/// `actuals[start_w + h]`. Metrics are pooled over all windows and
/// horizons, with a per-horizon breakdown alongside.
pub fn score_forecasts(forecasts: &ForecastMatrix, actuals: &[f64]) -> Result<MetricReport> {
    let horizon = forecasts.horizon;
    if forecasts.window_starts.is_empty() {
        return Err(Error::EmptyInput("score_forecasts: no windows".to_string()));
    }
    for &start in &forecasts.window_starts {
        if start + horizon > actuals.len() {
            return Err(Error::LengthMismatch {
                left: start + horizon,
                right: actuals.len(),
                context: format!("window starting at {} runs past the actuals", start),
            });
        }
    }

    let n_windows = forecasts.window_starts.len();
    let mut pooled_y = Vec::with_capacity(n_windows * horizon);
    let mut pooled_f = Vec::with_capacity(n_windows * horizon);
    // Column-major staging so per-horizon slices are contiguous.
    let mut by_h: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(Vec::with_capacity(n_windows), Vec::with_capacity(n_windows)); horizon];

    for (w, &start) in forecasts.window_starts.iter().enumerate() {
        let row = &forecasts.rows[w];
        for h in 0..horizon {
            let y = actuals[start + h];
            let f = row[h];
            pooled_y.push(y);
            pooled_f.push(f);
            by_h[h].0.push(y);
            by_h[h].1.push(f);
        }
    }

    let (mape_pct, guarded_terms) = mape_guarded(&pooled_y, &pooled_f, MAPE_EPSILON)?;
    let per_horizon = by_h
        .iter()
        .enumerate()
        .map(|(h, (ys, fs))| {
            Ok(HorizonMetrics {
                h,
                mae: mae(ys, fs)?,
                mape_pct: mape(ys, fs, MAPE_EPSILON)?,
                rmse: rmse(ys, fs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MetricReport {
        model: forecasts.model.clone(),
        variant: forecasts.variant.clone(),
        mae: mae(&pooled_y, &pooled_f)?,
        mape_pct,
        rmse: rmse(&pooled_y, &pooled_f)?,
        n: pooled_y.len(),
        guarded_terms,
        per_horizon,
    })
}

/// Per-model MAPE improvement from regularizing the input data.
#[derive(Debug, Clone)]
pub struct ImprovementReport {
    pub entries: Vec<ImprovementEntry>,
    /// Mean of per-model percent improvements.
    pub average_improvement_pct: f64,
}

#[derive(Debug, Clone)]
pub struct ImprovementEntry {
    pub model: String,
    pub mape_raw: f64,
    pub mape_regularized: f64,
    /// 100 * (raw - regularized) / raw; negative when regularization hurt.
    pub improvement_pct: f64,
}

/// Pairs raw-data and regularized-data reports by model label.
pub fn improvement_report(
    raw_reports: &[MetricReport],
    reg_reports: &[MetricReport],
) -> Result<ImprovementReport> {
    if raw_reports.is_empty() {
        return Err(Error::EmptyInput("improvement_report".to_string()));
    }
    let mut entries = Vec::with_capacity(raw_reports.len());
    for raw in raw_reports {
        let reg = reg_reports
            .iter()
            .find(|r| r.model == raw.model)
            .ok_or_else(|| Error::UnmatchedModel(raw.model.clone()))?;
        let improvement_pct = 100.0 * (raw.mape_pct - reg.mape_pct) / raw.mape_pct;
        entries.push(ImprovementEntry {
            model: raw.model.clone(),
            mape_raw: raw.mape_pct,
            mape_regularized: reg.mape_pct,
            improvement_pct,
        });
    }
    let average_improvement_pct =
        entries.iter().map(|e| e.improvement_pct).sum::<f64>() / entries.len() as f64;
    Ok(ImprovementReport {
        entries,
        average_improvement_pct,
    })
}
