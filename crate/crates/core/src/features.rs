//! Lag features, log transform, min-max scaling, calendar columns,
//! correlation ranking, and model-input frame assembly.
//!
//! The full frame carries the price target plus 14 feature columns:
//! 8 price lags and the 6 exogenous/calendar variables (demand, hour of
//! day, temperature, humidity, heat index, weekend flag). Scalers are
//! fitted on the training slice only and reused downstream — the
//! interface takes just the slice, so leakage cannot happen by
//! construction.

use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};

use crate::error::{Error, Result};
use crate::series::{ExogenousFrame, TimeSeries, STEP_MINUTES};

/// The lag offsets in half-hour steps: short-term structure through one
/// full week.
pub const DEFAULT_LAG_OFFSETS: [usize; 8] = [1, 2, 4, 24, 48, 96, 192, 336];

/// Lagged copies of a series.
#[derive(Debug, Clone)]
pub struct LagSet {
    pub offsets: Vec<usize>,
    /// One column per offset; entries before the offset are NaN.
    pub columns: Vec<Vec<f64>>,
    /// First index at which every lag exists.
    pub valid_from: usize,
}

/// column j at index i = values[i - offsets[j]] for i >= offsets[j].
pub fn make_lags(values: &[f64], offsets: &[usize]) -> Result<LagSet> {
    if offsets.is_empty() {
        return Err(Error::invalid("offsets", "at least one lag required"));
    }
    for pair in offsets.windows(2) {
        if pair[0] >= pair[1] {
            return Err(Error::invalid("offsets", "must be positive, sorted, distinct"));
        }
    }
    if offsets[0] == 0 {
        return Err(Error::invalid("offsets", "lags must be >= 1"));
    }
    let max_offset = *offsets.last().unwrap();
    if max_offset >= values.len() {
        return Err(Error::invalid(
            "offsets",
            format!("offset {max_offset} >= series length {}", values.len()),
        ));
    }
    let columns = offsets
        .iter()
        .map(|&off| {
            let mut col = vec![f64::NAN; values.len()];
            col[off..].copy_from_slice(&values[..values.len() - off]);
            col
        })
        .collect();
    Ok(LagSet {
        offsets: offsets.to_vec(),
        columns,
        valid_from: max_offset,
    })
}

/// Shift policy for the log transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogPolicy {
    /// epsilon = 0 when min > 0, else 1 - min.
    Auto,
    Epsilon(f64),
}

/// ln(x + epsilon) with an exact inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogTransform {
    pub epsilon: f64,
}

impl LogTransform {
    pub fn fit(values: &[f64], policy: LogPolicy) -> Result<LogTransform> {
        if values.is_empty() {
            return Err(Error::EmptyInput("log_transform".to_string()));
        }
        let epsilon = match policy {
            LogPolicy::Epsilon(e) => e,
            LogPolicy::Auto => {
                let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
                if min > 0.0 {
                    0.0
                } else {
                    1.0 - min
                }
            }
        };
        let t = LogTransform { epsilon };
        t.apply(values)?;
        Ok(t)
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(index, &v)| {
                let shifted = v + self.epsilon;
                if shifted <= 0.0 {
                    Err(Error::NonPositiveLog {
                        index,
                        value: v,
                        epsilon: self.epsilon,
                    })
                } else {
                    Ok(shifted.ln())
                }
            })
            .collect()
    }

    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v.exp() - self.epsilon).collect()
    }
}

/// Fitted min-max range for one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScaler {
    pub min: f64,
    pub max: f64,
}

/// x' = (x - min) / (max - min); fit on the training slice only.
pub fn fit_minmax(values: &[f64]) -> Result<ColumnScaler> {
    if values.is_empty() {
        return Err(Error::EmptyInput("fit_minmax".to_string()));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if max.is_nan() || min.is_nan() || max <= min {
        return Err(Error::ConstantColumn(format!("min = max = {min}")));
    }
    Ok(ColumnScaler { min, max })
}

/// Values outside the fitted range map outside [0, 1]; no clipping.
pub fn apply_minmax(values: &[f64], params: &ColumnScaler) -> Vec<f64> {
    let range = params.max - params.min;
    values.iter().map(|v| (v - params.min) / range).collect()
}

pub fn invert_minmax(values: &[f64], params: &ColumnScaler) -> Vec<f64> {
    let range = params.max - params.min;
    values.iter().map(|v| v * range + params.min).collect()
}

/// Named per-column scalers, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalerParams {
    pub columns: Vec<(String, ColumnScaler)>,
}

impl ScalerParams {
    pub fn get(&self, name: &str) -> Option<&ColumnScaler> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn insert(&mut self, name: impl Into<String>, scaler: ColumnScaler) {
        self.columns.push((name.into(), scaler));
    }

    /// Flat `column,min,max` text format for reuse across runs.
    pub fn render(&self) -> String {
        let mut out = String::from("column,min,max\n");
        for (name, s) in &self.columns {
            let _ = writeln!(out, "{name},{},{}", s.min, s.max);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ScalerParams> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut params = ScalerParams::default();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Config(format!("scaler file line {}: need 3 fields", i + 1)));
            }
            let min: f64 = fields[1]
                .parse()
                .map_err(|_| Error::Config(format!("scaler file line {}: bad min", i + 1)))?;
            let max: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Config(format!("scaler file line {}: bad max", i + 1)))?;
            params.insert(fields[0], ColumnScaler { min, max });
        }
        Ok(params)
    }
}

/// Hour-of-day (0-23) and weekend indicator columns.
pub fn calendar_features(start: NaiveDateTime, length: usize) -> (Vec<f64>, Vec<f64>) {
    let mut hour = Vec::with_capacity(length);
    let mut weekend = Vec::with_capacity(length);
    for i in 0..length {
        let t = start + chrono::Duration::minutes(STEP_MINUTES * i as i64);
        hour.push(t.hour() as f64);
        let wd = t.weekday();
        weekend.push(if wd == Weekday::Sat || wd == Weekday::Sun {
            1.0
        } else {
            0.0
        });
    }
    (hour, weekend)
}

/// Pearson correlation ranking of candidate columns against a target.
#[derive(Debug, Clone)]
pub struct CorrelationRanking {
    /// Descending by |r|; ties break alphabetically.
    pub ranked: Vec<(String, f64)>,
    /// Constant columns, excluded rather than erroring.
    pub excluded: Vec<String>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
            context: "pearson".to_string(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("pearson".to_string()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantColumn("zero variance in pearson".to_string()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

pub fn rank_correlations(
    columns: &[(&str, &[f64])],
    target: &[f64],
) -> Result<CorrelationRanking> {
    let mut ranked = Vec::new();
    let mut excluded = Vec::new();
    for (name, values) in columns {
        match pearson(values, target) {
            Ok(r) => ranked.push((name.to_string(), r)),
            Err(Error::ConstantColumn(_)) => excluded.push(name.to_string()),
            Err(e) => return Err(e),
        }
    }
    ranked.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(CorrelationRanking { ranked, excluded })
}

/// How the price column counts toward the feature total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriceCounting {
    /// Price is the target (not a feature) in the full frame, a feature
    /// otherwise — the accounting that makes the full frame 14 wide.
    #[default]
    Auto,
    AlwaysFeature,
    AlwaysTarget,
}

#[derive(Debug, Clone)]
pub struct FeatureOptions {
    pub use_log: bool,
    pub use_lags: bool,
    pub use_exogenous: bool,
    pub lag_offsets: Vec<usize>,
    pub price_counting: PriceCounting,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            use_log: false,
            use_lags: true,
            use_exogenous: true,
            lag_offsets: DEFAULT_LAG_OFFSETS.to_vec(),
            price_counting: PriceCounting::Auto,
        }
    }
}

/// Aligned named columns; the price target is always column 0.
#[derive(Debug, Clone)]
pub struct FeatureFrame {
    pub columns: Vec<(String, Vec<f64>)>,
    /// Rows before this index miss at least one lag and are unusable.
    pub valid_from: usize,
    /// Whether column 0 (price) is the target rather than a feature.
    pub price_is_target: bool,
    /// Log transform applied to price and lag columns, when active.
    pub log_transform: Option<LogTransform>,
}

impl FeatureFrame {
    /// Feature columns only (excludes price when it is the target).
    pub fn feature_count(&self) -> usize {
        if self.price_is_target {
            self.columns.len() - 1
        } else {
            self.columns.len()
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV dump in the fixed column order, rows from valid_from.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("index");
        for (name, _) in &self.columns {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in self.valid_from..self.len() {
            let _ = write!(out, "{i}");
            for (_, col) in &self.columns {
                let _ = write!(out, ",{}", col[i]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render_csv())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Builds the model-input frame in the documented order: price, lags
/// ascending, then demand, hour_of_day, temperature, humidity,
/// heat_index, is_weekend.
pub fn assemble_feature_frame(
    price: &TimeSeries,
    exo: Option<&ExogenousFrame>,
    options: &FeatureOptions,
) -> Result<FeatureFrame> {
    if options.use_exogenous && exo.is_none() {
        return Err(Error::invalid("exogenous", "options require an exogenous frame"));
    }
    if let Some(frame) = exo {
        frame.validate(price.len())?;
    }

    let mut log_transform = None;
    let price_values: Vec<f64> = if options.use_log {
        let t = LogTransform::fit(price.values(), LogPolicy::Auto)?;
        let transformed = t.apply(price.values())?;
        log_transform = Some(t);
        transformed
    } else {
        price.values().to_vec()
    };

    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    columns.push(("price".to_string(), price_values.clone()));

    let mut valid_from = 0;
    if options.use_lags {
        let lags = make_lags(&price_values, &options.lag_offsets)?;
        valid_from = lags.valid_from;
        for (offset, col) in lags.offsets.iter().zip(lags.columns) {
            columns.push((format!("lag_{offset}"), col));
        }
    }

    if options.use_exogenous {
        let frame = exo.unwrap();
        let (hour, weekend) = calendar_features(price.start(), price.len());
        columns.push(("demand".to_string(), frame.demand.clone()));
        columns.push(("hour_of_day".to_string(), hour));
        columns.push(("temperature".to_string(), frame.temperature.clone()));
        columns.push(("humidity".to_string(), frame.humidity.clone()));
        columns.push(("heat_index".to_string(), frame.heat_index.clone()));
        columns.push(("is_weekend".to_string(), weekend));
    }

    let price_is_target = match options.price_counting {
        PriceCounting::Auto => options.use_lags && options.use_exogenous,
        PriceCounting::AlwaysFeature => false,
        PriceCounting::AlwaysTarget => true,
    };

    Ok(FeatureFrame {
        columns,
        valid_from,
        price_is_target,
        log_transform,
    })
}
