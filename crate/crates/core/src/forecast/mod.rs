//! Statistical baseline forecasters and the external-prediction adapter.
//!
//! Every forecaster maps a lookback slice to an H-step forecast.
//! Forecasts are collected window-by-window into a [`ForecastMatrix`],
//! the unit the metrics module scores. Matrix window starts are the
//! absolute index of the first forecasted step (horizon h = 0).

mod ar;
mod external;
mod holt_winters;
mod naive;

pub use ar::{ar_forecast, difference, fit_auto_ar, fit_auto_ar_detailed, ArCandidate, ArModel, AutoArOptions};
pub use external::{load_external_predictions, write_forecast_csv};
pub use holt_winters::{
    holt_winters_fit, holt_winters_fit_with, holt_winters_forecast, HoltWintersModel,
};
pub use naive::seasonal_naive_forecast;

use crate::error::{Error, Result};

/// Per-window H-step forecasts aligned to their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix {
    pub model: String,
    pub variant: String,
    pub horizon: usize,
    /// Absolute index of horizon 0 for each window, strictly increasing.
    pub window_starts: Vec<usize>,
    /// One row of `horizon` values per window start.
    pub rows: Vec<Vec<f64>>,
}

impl ForecastMatrix {
    pub fn validate(&self) -> Result<()> {
        if self.rows.len() != self.window_starts.len() {
            return Err(Error::LengthMismatch {
                left: self.rows.len(),
                right: self.window_starts.len(),
                context: "forecast rows vs window starts".to_string(),
            });
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.horizon {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: self.horizon,
                    context: format!("forecast row for window {}", self.window_starts[i]),
                });
            }
        }
        for pair in self.window_starts.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::invalid(
                    "window_starts",
                    format!("not strictly increasing at {} -> {}", pair[0], pair[1]),
                ));
            }
        }
        Ok(())
    }

    pub fn n_windows(&self) -> usize {
        self.window_starts.len()
    }
}

/// Which forecaster to run, parsed from a `--model` argument.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    SeasonalNaive,
    AutoAr,
    HoltWinters,
    /// Forecasts produced outside the toolkit, loaded from CSV.
    External { path: String, variant: String },
}

impl ModelSpec {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seasonal_naive" => Ok(ModelSpec::SeasonalNaive),
            "auto_ar" => Ok(ModelSpec::AutoAr),
            "holt_winters" => Ok(ModelSpec::HoltWinters),
            other => {
                if let Some(rest) = other.strip_prefix("external:") {
                    if rest.is_empty() {
                        return Err(Error::invalid("model", "external: requires a path"));
                    }
                    // Optional trailing :variant after the path.
                    let (path, variant) = match rest.rsplit_once(':') {
                        Some((p, v))
                            if !p.is_empty()
                                && matches!(v, "zs" | "lzs" | "uft" | "tfs" | "ltfs" | "mft") =>
                        {
                            (p.to_string(), v.to_string())
                        }
                        _ => (rest.to_string(), "zs".to_string()),
                    };
                    Ok(ModelSpec::External { path, variant })
                } else {
                    Err(Error::invalid(
                        "model",
                        format!(
                            "unknown model {other:?}; expected seasonal_naive, auto_ar, \
                             holt_winters, or external:<path>[:<variant>]"
                        ),
                    ))
                }
            }
        }
    }

    /// Report label for this model.
    pub fn label(&self) -> String {
        match self {
            ModelSpec::SeasonalNaive => "seasonal_naive".to_string(),
            ModelSpec::AutoAr => "auto_ar".to_string(),
            ModelSpec::HoltWinters => "holt_winters".to_string(),
            ModelSpec::External { path, .. } => std::path::Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "external".to_string()),
        }
    }

    pub fn variant(&self) -> &str {
        match self {
            ModelSpec::External { variant, .. } => variant,
            _ => "tfs",
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, ModelSpec::External { .. })
    }
}

/// Runs one baseline forecaster over a lookback slice.
///
/// `period` feeds the seasonal models; external specs are handled by
/// the caller (they load rather than compute).
pub fn run_baseline(
    spec: &ModelSpec,
    lookback: &[f64],
    horizon: usize,
    period: usize,
) -> Result<Vec<f64>> {
    match spec {
        ModelSpec::SeasonalNaive => seasonal_naive_forecast(lookback, period, horizon),
        ModelSpec::AutoAr => {
            let model = fit_auto_ar(lookback, &AutoArOptions::default())?;
            ar_forecast(&model, lookback, horizon)
        }
        ModelSpec::HoltWinters => {
            let model = holt_winters_fit(lookback, period)?;
            Ok(holt_winters_forecast(&model, horizon))
        }
        ModelSpec::External { .. } => Err(Error::invalid(
            "model",
            "external predictions are loaded, not computed",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_parsing() {
        assert_eq!(ModelSpec::parse("seasonal_naive").unwrap(), ModelSpec::SeasonalNaive);
        assert_eq!(ModelSpec::parse("auto_ar").unwrap(), ModelSpec::AutoAr);
        assert_eq!(ModelSpec::parse("holt_winters").unwrap(), ModelSpec::HoltWinters);
        assert_eq!(
            ModelSpec::parse("external:preds/ttm.csv:mft").unwrap(),
            ModelSpec::External {
                path: "preds/ttm.csv".to_string(),
                variant: "mft".to_string()
            }
        );
        assert_eq!(
            ModelSpec::parse("external:preds/ttm.csv").unwrap(),
            ModelSpec::External {
                path: "preds/ttm.csv".to_string(),
                variant: "zs".to_string()
            }
        );
        assert!(ModelSpec::parse("lstm").is_err());
        assert!(ModelSpec::parse("external:").is_err());
    }

    #[test]
    fn external_label_is_file_stem() {
        let spec = ModelSpec::parse("external:out/ttm_moe.csv:uft").unwrap();
        assert_eq!(spec.label(), "ttm_moe");
        assert_eq!(spec.variant(), "uft");
    }

    #[test]
    fn matrix_validation_catches_defects() {
        let good = ForecastMatrix {
            model: "m".to_string(),
            variant: "tfs".to_string(),
            horizon: 2,
            window_starts: vec![0, 5],
            rows: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        assert!(good.validate().is_ok());

        let mut bad = good.clone();
        bad.window_starts = vec![5, 5];
        assert!(bad.validate().is_err());

        let mut short_row = good.clone();
        short_row.rows[1] = vec![3.0];
        assert!(short_row.validate().is_err());
    }
}
