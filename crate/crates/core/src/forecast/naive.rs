//! Seasonal naive baseline: repeat the last observed full cycle.

use crate::error::{Error, Result};

/// forecast[h] = lookback[L - period + (h mod period)].
pub fn seasonal_naive_forecast(lookback: &[f64], period: usize, horizon: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::invalid("period", "must be >= 1"));
    }
    if lookback.len() < period {
        return Err(Error::SeriesTooShort {
            got: lookback.len(),
            needed: period,
            context: "seasonal naive needs one full cycle".to_string(),
        });
    }
    let cycle = &lookback[lookback.len() - period..];
    Ok((0..horizon).map(|h| cycle[h % period]).collect())
}
