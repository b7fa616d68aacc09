//! Additive Holt-Winters (triple exponential smoothing) baseline.
//!
//! Level:    l_t = alpha * (y_t - s_{t-m}) + (1 - alpha) * (l_{t-1} + b_{t-1})
//! Trend:    b_t = beta * (l_t - l_{t-1}) + (1 - beta) * b_{t-1}
//! Seasonal: s_t = gamma * (y_t - l_t) + (1 - gamma) * s_{t-m}
//! Forecast: y_{t+h} = l_t + h * b_t + s_{t+h-m ...}
//!
//! Smoothing parameters are selected by a coarse grid search over
//! {0.05, 0.20, ..., 0.95} minimizing in-sample one-step squared error;
//! ties keep the first grid point scanned, so fits are deterministic.

use crate::error::{Error, Result};

const PARAM_GRID: [f64; 7] = [0.05, 0.20, 0.35, 0.50, 0.65, 0.80, 0.95];

/// Fitted additive Holt-Winters state.
#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub period: usize,
    pub level: f64,
    pub trend: f64,
    /// Seasonal components indexed by t mod period.
    pub seasonal: Vec<f64>,
    /// Length of the fitted lookback; fixes the forecast phase.
    pub fitted_len: usize,
}

/// Runs the additive recursion once, returning the final state and the
/// one-step sum of squared errors over t >= period.
fn run_recursion(
    values: &[f64],
    period: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> (f64, f64, Vec<f64>, f64) {
    let first_mean: f64 = values[..period].iter().sum::<f64>() / period as f64;
    let second_mean: f64 = values[period..2 * period].iter().sum::<f64>() / period as f64;
    let mut trend = (second_mean - first_mean) / period as f64;
    // Level at the end of the first cycle, not its midpoint, and
    // detrended seasonal offsets: exact for trend-plus-seasonal inputs,
    // so no initialization transient leaks into the recursion.
    let half_span = (period as f64 - 1.0) / 2.0;
    let mut level = first_mean + trend * half_span;
    let mut seasonal: Vec<f64> = values[..period]
        .iter()
        .enumerate()
        .map(|(i, y)| y - (first_mean + (i as f64 - half_span) * trend))
        .collect();

    let mut sse = 0.0;
    for (t, &y) in values.iter().enumerate().skip(period) {
        let s_idx = t % period;
        let forecast = level + trend + seasonal[s_idx];
        let err = y - forecast;
        sse += err * err;
        let prev_level = level;
        level = alpha * (y - seasonal[s_idx]) + (1.0 - alpha) * (level + trend);
        trend = beta * (level - prev_level) + (1.0 - beta) * trend;
        seasonal[s_idx] = gamma * (y - level) + (1.0 - gamma) * seasonal[s_idx];
    }
    (level, trend, seasonal, sse)
}

/// Re-runs the state recursion with fixed smoothing parameters, for
/// reuse of an earlier window's grid selection.
pub fn holt_winters_fit_with(
    lookback: &[f64],
    period: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
) -> Result<HoltWintersModel> {
    check_lookback(lookback, period)?;
    let (level, trend, seasonal, _) = run_recursion(lookback, period, alpha, beta, gamma);
    Ok(HoltWintersModel {
        alpha,
        beta,
        gamma,
        period,
        level,
        trend,
        seasonal,
        fitted_len: lookback.len(),
    })
}

fn check_lookback(lookback: &[f64], period: usize) -> Result<()> {
    if period < 2 {
        return Err(Error::invalid("period", "must be >= 2"));
    }
    if lookback.len() < 2 * period {
        return Err(Error::SeriesTooShort {
            got: lookback.len(),
            needed: 2 * period,
            context: "holt_winters_fit needs two full cycles".to_string(),
        });
    }
    Ok(())
}

/// Fits by grid search over (alpha, beta, gamma).
pub fn holt_winters_fit(lookback: &[f64], period: usize) -> Result<HoltWintersModel> {
    check_lookback(lookback, period)?;
    let mut best: Option<(f64, HoltWintersModel)> = None;
    for &alpha in &PARAM_GRID {
        for &beta in &PARAM_GRID {
            for &gamma in &PARAM_GRID {
                let (level, trend, seasonal, sse) =
                    run_recursion(lookback, period, alpha, beta, gamma);
                let candidate_better = match &best {
                    None => true,
                    Some((best_sse, _)) => sse < *best_sse,
                };
                if candidate_better {
                    best = Some((
                        sse,
                        HoltWintersModel {
                            alpha,
                            beta,
                            gamma,
                            period,
                            level,
                            trend,
                            seasonal,
                            fitted_len: lookback.len(),
                        },
                    ));
                }
            }
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Extends level + h*trend + the matching seasonal component.
pub fn holt_winters_forecast(model: &HoltWintersModel, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|h| {
            let s_idx = (model.fitted_len + h) % model.period;
            model.level + (h as f64 + 1.0) * model.trend + model.seasonal[s_idx]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_forecasts_constant() {
        let data = vec![42.0; 40];
        let model = holt_winters_fit(&data, 4).unwrap();
        let forecast = holt_winters_forecast(&model, 8);
        for f in forecast {
            assert!((f - 42.0).abs() < 1e-9, "forecast {f}");
        }
    }

    #[test]
    fn exact_line_is_continued() {
        // y = 3 + 0.5 t over 12 cycles of period 4: the grid picks fast
        // smoothing and the initialization transient decays to nothing.
        let data: Vec<f64> = (0..48).map(|t| 3.0 + 0.5 * t as f64).collect();
        let model = holt_winters_fit(&data, 4).unwrap();
        let forecast = holt_winters_forecast(&model, 8);
        for (h, f) in forecast.iter().enumerate() {
            let truth = 3.0 + 0.5 * (48 + h) as f64;
            assert!((f - truth).abs() < 1e-6, "h={h}: {f} vs {truth}");
        }
    }

    #[test]
    fn exact_square_wave_repeats() {
        let wave = [10.0, 10.0, -10.0, -10.0];
        let data: Vec<f64> = (0..64).map(|t| 100.0 + wave[t % 4]).collect();
        let model = holt_winters_fit(&data, 4).unwrap();
        let forecast = holt_winters_forecast(&model, 8);
        for (h, f) in forecast.iter().enumerate() {
            let truth = 100.0 + wave[(64 + h) % 4];
            assert!((f - truth).abs() < 1e-6, "h={h}: {f} vs {truth}");
        }
    }

    #[test]
    fn lookback_must_cover_two_cycles() {
        assert!(holt_winters_fit(&[1.0; 7], 4).is_err());
    }
}
