//! Adapter for forecasts produced outside the toolkit.
//!
//! Wire format is one CSV row per (window, horizon step) with header
//! `window_start,h,prediction`; `window_start` is the absolute index of
//! horizon 0. The toolkit's own forecast dumps use the same schema, so
//! a dumped matrix reloads identically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::forecast::ForecastMatrix;

/// Loads a dense forecast matrix, requiring every window to carry all
/// `expected_horizon` steps exactly once.
pub fn load_external_predictions(
    path: impl AsRef<Path>,
    expected_horizon: usize,
    model: &str,
    variant: &str,
) -> Result<ForecastMatrix> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_predictions(&text, expected_horizon, model, variant)
}

pub fn parse_predictions(
    text: &str,
    expected_horizon: usize,
    model: &str,
    variant: &str,
) -> Result<ForecastMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::ExternalPredictions("file is empty".to_string()))?
        .trim_end_matches('\r');
    if header != "window_start,h,prediction" {
        return Err(Error::ExternalPredictions(format!(
            "expected header window_start,h,prediction, got {header:?}"
        )));
    }

    let mut windows: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next_field = |name: &str| {
            fields
                .next()
                .ok_or_else(|| Error::ExternalPredictions(format!("row {row}: missing {name}")))
        };
        let window_start: usize = next_field("window_start")?.parse().map_err(|_| {
            Error::ExternalPredictions(format!("row {row}: non-integer window_start"))
        })?;
        let h: usize = next_field("h")?
            .parse()
            .map_err(|_| Error::ExternalPredictions(format!("row {row}: non-integer h")))?;
        let prediction: f64 = next_field("prediction")?.parse().map_err(|_| {
            Error::ExternalPredictions(format!("row {row}: non-numeric prediction"))
        })?;
        if h >= expected_horizon {
            return Err(Error::ExternalPredictions(format!(
                "row {row}: horizon {h} out of range for H = {expected_horizon}"
            )));
        }
        let slots = windows
            .entry(window_start)
            .or_insert_with(|| vec![None; expected_horizon]);
        if slots[h].is_some() {
            return Err(Error::ExternalPredictions(format!(
                "window {window_start} has duplicate horizon {h}"
            )));
        }
        slots[h] = Some(prediction);
    }
    if windows.is_empty() {
        return Err(Error::ExternalPredictions("no prediction rows".to_string()));
    }

    let mut window_starts = Vec::with_capacity(windows.len());
    let mut rows = Vec::with_capacity(windows.len());
    for (start, slots) in windows {
        let mut row = Vec::with_capacity(expected_horizon);
        for (h, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(v) => row.push(v),
                None => {
                    return Err(Error::ExternalPredictions(format!(
                        "window {start} is missing horizon {h}"
                    )))
                }
            }
        }
        window_starts.push(start);
        rows.push(row);
    }

    let matrix = ForecastMatrix {
        model: model.to_string(),
        variant: variant.to_string(),
        horizon: expected_horizon,
        window_starts,
        rows,
    };
    matrix.validate()?;
    Ok(matrix)
}

/// Dumps a matrix in the external-prediction schema.
pub fn write_forecast_csv(path: impl AsRef<Path>, matrix: &ForecastMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_forecast_csv(matrix))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn render_forecast_csv(matrix: &ForecastMatrix) -> String {
    let mut out = String::from("window_start,h,prediction\n");
    for (w, &start) in matrix.window_starts.iter().enumerate() {
        for (h, value) in matrix.rows[w].iter().enumerate() {
            let _ = writeln!(out, "{start},{h},{value}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::seasonal_naive_forecast;

    #[test]
    fn complete_file_loads_densely() {
        let mut body = String::from("window_start,h,prediction\n");
        for start in [100usize, 148] {
            for h in 0..48 {
                body.push_str(&format!("{start},{h},{}\n", (start + h) as f64 * 0.5));
            }
        }
        let matrix = parse_predictions(&body, 48, "ttm", "zs").unwrap();
        assert_eq!(matrix.n_windows(), 2);
        assert_eq!(matrix.window_starts, vec![100, 148]);
        assert_eq!(matrix.rows[0][0], 50.0);
    }

    #[test]
    fn missing_horizon_is_rejected_by_window() {
        let mut body = String::from("window_start,h,prediction\n");
        for h in 0..48 {
            body.push_str(&format!("5,{h},1.0\n"));
        }
        for h in 0..47 {
            body.push_str(&format!("9,{h},1.0\n"));
        }
        let err = parse_predictions(&body, 48, "m", "zs").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("window 9"), "message: {msg}");
        assert!(msg.contains("47"), "message: {msg}");
    }

    #[test]
    fn out_of_range_horizon_rejected() {
        let body = "window_start,h,prediction\n0,48,1.0\n";
        assert!(parse_predictions(body, 48, "m", "zs").is_err());
    }

    #[test]
    fn duplicate_horizon_rejected() {
        let body = "window_start,h,prediction\n0,0,1.0\n0,0,2.0\n0,1,3.0\n";
        assert!(parse_predictions(body, 2, "m", "zs").is_err());
    }

    #[test]
    fn dump_and_reload_round_trips() {
        let lookback: Vec<f64> = (0..96).map(|i| 100.0 + (i % 48) as f64).collect();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|w| seasonal_naive_forecast(&lookback, 48, 48).unwrap().iter().map(|v| v + w as f64).collect())
            .collect();
        let matrix = ForecastMatrix {
            model: "seasonal_naive".to_string(),
            variant: "tfs".to_string(),
            horizon: 48,
            window_starts: vec![96, 97, 98],
            rows,
        };
        let body = render_forecast_csv(&matrix);
        let back = parse_predictions(&body, 48, "seasonal_naive", "tfs").unwrap();
        assert_eq!(back, matrix);
    }
}
