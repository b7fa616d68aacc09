//! Config-driven pipeline: ingest, regularize, featurize, split,
//! forecast, score, report. Each stage reads and writes the documented
//! CSV interfaces; the `pipeline` entry point chains the same stage
//! functions the CLI subcommands call, so running stages individually
//! produces byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{
    assemble_feature_frame, fit_minmax, rank_correlations, FeatureOptions, LogPolicy,
    LogTransform, ScalerParams,
};
use crate::forecast::{load_external_predictions, write_forecast_csv, ForecastMatrix, ModelSpec};
use crate::kalman::write_filter_trace_csv;
use crate::metrics::{improvement_report, score_forecasts, MetricReport};
use crate::series::{
    fill_gaps, ingest_csv, write_series_csv, CsvSchema, ExogenousFrame, FillPolicy, GapReport,
    TimeSeries,
};
use crate::spike::{detect_and_regularize, write_spike_report_csv, SpikeDetectorConfig};
use crate::stl::{stl_decompose, write_decomposition_csv, StlParams};
use crate::synth;
use crate::windowing::{chronological_split, segment_windows, SplitSpec};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output-directory fallback when neither config nor flag names one.
pub const OUTPUT_DIR_ENV: &str = "SPIKEGUARD_OUTPUT_DIR";

/// Whether models see raw data, regularized data, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizeMode {
    Off,
    On,
    /// Paired raw + regularized runs plus an improvement report.
    Compare,
}

impl RegularizeMode {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "off" | "false" | "0" => Ok(RegularizeMode::Off),
            "on" | "true" | "1" => Ok(RegularizeMode::On),
            "compare" => Ok(RegularizeMode::Compare),
            other => Err(Error::Config(format!(
                "regularize must be off|on|compare, got {other:?}"
            ))),
        }
    }
}

/// Everything a run needs; validated before any stage executes.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Input CSV; absent means demo mode (synthetic data).
    pub input: Option<PathBuf>,
    pub demo_length: usize,
    pub output_dir: PathBuf,
    pub schema: CsvSchema,
    pub fill_policy: FillPolicy,
    pub max_fill_run: usize,
    pub regularize: RegularizeMode,
    pub lambda: f64,
    pub periods: Vec<usize>,
    pub huber_delta: f64,
    pub use_log: bool,
    pub emit_features: bool,
    pub use_lags: bool,
    pub use_exogenous: bool,
    pub lag_offsets: Vec<usize>,
    pub split: SplitSpec,
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Refit auto-AR / Holt-Winters on every k-th window, reusing the
    /// fitted parameters in between; 1 refits every window.
    pub refit_stride: usize,
    pub warmup_overlap: bool,
    pub models: Vec<ModelSpec>,
    /// Cycle length the seasonal-naive baseline repeats.
    pub naive_period: usize,
    /// Cycle length for Holt-Winters (needs 2 cycles inside the lookback).
    pub hw_period: usize,
    pub ablate_log: bool,
    pub seed: u64,
    /// Worker threads for window evaluation; 0 keeps the global default.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            demo_length: 9600,
            output_dir: PathBuf::from("."),
            schema: CsvSchema::default(),
            fill_policy: FillPolicy::Linear,
            max_fill_run: 48,
            regularize: RegularizeMode::Off,
            lambda: 3.0,
            periods: vec![336, 1440],
            huber_delta: 1.345,
            use_log: false,
            emit_features: false,
            use_lags: true,
            use_exogenous: true,
            lag_offsets: crate::features::DEFAULT_LAG_OFFSETS.to_vec(),
            split: SplitSpec::default(),
            lookback: 512,
            horizon: 48,
            stride: 1,
            refit_stride: 1,
            warmup_overlap: false,
            models: vec![ModelSpec::SeasonalNaive],
            naive_period: 336,
            hw_period: 48,
            ablate_log: false,
            seed: 7,
            threads: 0,
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "input",
    "demo_length",
    "output_dir",
    "fill_policy",
    "max_fill_run",
    "regularize",
    "lambda",
    "periods",
    "huber_delta",
    "log_price",
    "features",
    "use_lags",
    "use_exogenous",
    "lag_offsets",
    "split",
    "lookback",
    "horizon",
    "stride",
    "refit_stride",
    "warmup_overlap",
    "models",
    "naive_period",
    "hw_period",
    "ablate_log",
    "seed",
    "threads",
];

/// Parses the flat key=value config format. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key} must be boolean, got {other:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse element {p:?}")))
        })
        .collect()
}

impl PipelineConfig {
    /// Builds from key=value pairs; unknown keys are rejected. The
    /// output directory falls back to $SPIKEGUARD_OUTPUT_DIR, then ".".
    pub fn from_kv(map: &BTreeMap<String, String>) -> Result<PipelineConfig> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
        }
        let mut config = PipelineConfig::default();
        if let Some(v) = map.get("input") {
            config.input = Some(PathBuf::from(v));
        }
        if let Some(v) = map.get("demo_length") {
            config.demo_length = parse_num("demo_length", v)?;
        }
        match map.get("output_dir") {
            Some(v) => config.output_dir = PathBuf::from(v),
            None => {
                if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
                    if !dir.is_empty() {
                        config.output_dir = PathBuf::from(dir);
                    }
                }
            }
        }
        if let Some(v) = map.get("fill_policy") {
            config.fill_policy = FillPolicy::parse(v)?;
        }
        if let Some(v) = map.get("max_fill_run") {
            config.max_fill_run = parse_num("max_fill_run", v)?;
        }
        if let Some(v) = map.get("regularize") {
            config.regularize = RegularizeMode::parse(v)?;
        }
        if let Some(v) = map.get("lambda") {
            config.lambda = parse_num("lambda", v)?;
        }
        if let Some(v) = map.get("periods") {
            config.periods = parse_list("periods", v)?;
        }
        if let Some(v) = map.get("huber_delta") {
            config.huber_delta = parse_num("huber_delta", v)?;
        }
        if let Some(v) = map.get("log_price") {
            config.use_log = parse_bool("log_price", v)?;
        }
        if let Some(v) = map.get("features") {
            config.emit_features = parse_bool("features", v)?;
        }
        if let Some(v) = map.get("use_lags") {
            config.use_lags = parse_bool("use_lags", v)?;
        }
        if let Some(v) = map.get("use_exogenous") {
            config.use_exogenous = parse_bool("use_exogenous", v)?;
        }
        if let Some(v) = map.get("lag_offsets") {
            config.lag_offsets = parse_list("lag_offsets", v)?;
        }
        if let Some(v) = map.get("split") {
            let fracs: Vec<f64> = parse_list("split", v)?;
            if fracs.len() != 3 {
                return Err(Error::Config("split needs three fractions".to_string()));
            }
            config.split = SplitSpec::new(fracs[0], fracs[1], fracs[2])?;
        }
        if let Some(v) = map.get("lookback") {
            config.lookback = parse_num("lookback", v)?;
        }
        if let Some(v) = map.get("horizon") {
            config.horizon = parse_num("horizon", v)?;
        }
        if let Some(v) = map.get("stride") {
            config.stride = parse_num("stride", v)?;
        }
        if let Some(v) = map.get("refit_stride") {
            config.refit_stride = parse_num("refit_stride", v)?;
        }
        if let Some(v) = map.get("warmup_overlap") {
            config.warmup_overlap = parse_bool("warmup_overlap", v)?;
        }
        if let Some(v) = map.get("models") {
            let names: Vec<String> = parse_list("models", v)?;
            config.models = names
                .iter()
                .map(|n| ModelSpec::parse(n))
                .collect::<Result<Vec<_>>>()?;
        }
        if let Some(v) = map.get("naive_period") {
            config.naive_period = parse_num("naive_period", v)?;
        }
        if let Some(v) = map.get("hw_period") {
            config.hw_period = parse_num("hw_period", v)?;
        }
        if let Some(v) = map.get("ablate_log") {
            config.ablate_log = parse_bool("ablate_log", v)?;
        }
        if let Some(v) = map.get("seed") {
            config.seed = parse_num("seed", v)?;
        }
        if let Some(v) = map.get("threads") {
            config.threads = parse_num("threads", v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        if self.lookback == 0 || self.horizon == 0 || self.stride == 0 || self.refit_stride == 0 {
            return Err(Error::Config(
                "lookback, horizon, stride, and refit_stride must be >= 1".to_string(),
            ));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model required".to_string()));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::Config("lambda must be > 0".to_string()));
        }
        if self.periods.is_empty() {
            return Err(Error::Config("at least one period required".to_string()));
        }
        Ok(())
    }

    /// Canonical key=value rendering; the manifest hashes this.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put(
            "input",
            self.input
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "<demo>".to_string()),
        );
        put("demo_length", self.demo_length.to_string());
        put("fill_policy", format!("{:?}", self.fill_policy).to_lowercase());
        put("max_fill_run", self.max_fill_run.to_string());
        put("regularize", format!("{:?}", self.regularize).to_lowercase());
        put("lambda", self.lambda.to_string());
        put(
            "periods",
            self.periods.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        );
        put("huber_delta", self.huber_delta.to_string());
        put("log_price", self.use_log.to_string());
        put("features", self.emit_features.to_string());
        put("use_lags", self.use_lags.to_string());
        put("use_exogenous", self.use_exogenous.to_string());
        put(
            "lag_offsets",
            self.lag_offsets.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
        );
        put(
            "split",
            format!("{},{},{}", self.split.train_frac, self.split.val_frac, self.split.test_frac),
        );
        put("lookback", self.lookback.to_string());
        put("horizon", self.horizon.to_string());
        put("stride", self.stride.to_string());
        put("refit_stride", self.refit_stride.to_string());
        put("warmup_overlap", self.warmup_overlap.to_string());
        put(
            "models",
            self.models.iter().map(|m| m.label()).collect::<Vec<_>>().join(","),
        );
        put("naive_period", self.naive_period.to_string());
        put("hw_period", self.hw_period.to_string());
        put("ablate_log", self.ablate_log.to_string());
        put("seed", self.seed.to_string());
        out
    }
}

/// FNV-1a, stable across platforms and runs.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Ingests (or demo-generates), repairs gaps, and writes the canonical
/// series plus the gap report. Returns the grid-complete series.
pub fn stage_ingest(
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<(TimeSeries, ExogenousFrame, GapReport)> {
    ensure_dir(out_dir)?;
    let (series, exo, report) = match &config.input {
        Some(path) => ingest_csv(path, &config.schema)?,
        None => {
            let start = NaiveDateTime::parse_from_str("2021-01-01T00:00", "%Y-%m-%dT%H:%M")
                .expect("static timestamp");
            let body = synth::demo_csv(config.demo_length, config.seed, start);
            crate::series::ingest_csv_str(&body, &config.schema)?
        }
    };
    let filled = fill_gaps(&series, &report, config.fill_policy, Some(config.max_fill_run))?;
    let filled_exo = exo.fill_gaps(&report, config.fill_policy)?;
    write_series_csv(out_dir.join("ingested.csv"), &filled, Some(&filled_exo))?;
    write_gap_report(out_dir.join("gap_report.csv"), &report)?;
    Ok((filled, filled_exo, report))
}

fn write_gap_report(path: PathBuf, report: &GapReport) -> Result<()> {
    let mut out = String::from("kind,index,run\n");
    for gap in &report.gaps {
        let _ = writeln!(out, "gap,{},{}", gap.start_index, gap.run);
    }
    for &dup in &report.duplicate_timestamps {
        let _ = writeln!(out, "duplicate,{dup},1");
    }
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Decomposes at each period and writes one CSV per period.
pub fn stage_decompose(
    series: &TimeSeries,
    periods: &[usize],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_dir(out_dir)?;
    let mut written = Vec::new();
    let mut residual = series.values().to_vec();
    for &period in periods {
        let result = stl_decompose(&residual, &StlParams::for_period(period))?;
        for (r, s) in residual.iter_mut().zip(result.seasonal.iter()) {
            *r -= s;
        }
        let path = out_dir.join(format!("decomposition_p{period}.csv"));
        write_decomposition_csv(&path, series.values(), &result)?;
        written.push(path);
    }
    Ok(written)
}

/// Detects and replaces spikes; writes the regularized series (to
/// `series_out` when given, else `<out_dir>/regularized.csv`), the
/// spike report, and the filter trace.
pub fn stage_regularize(
    series: &TimeSeries,
    exo: Option<&ExogenousFrame>,
    config: &PipelineConfig,
    out_dir: &Path,
    series_out: Option<&Path>,
) -> Result<TimeSeries> {
    ensure_dir(out_dir)?;
    let detector = SpikeDetectorConfig {
        lambda: config.lambda,
        periods: config.periods.clone(),
        huber: crate::kalman::HuberConfig {
            delta: config.huber_delta,
            ..Default::default()
        },
        stl: Vec::new(),
    };
    let result = detect_and_regularize(series, &detector)?;
    let out_path = series_out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_dir.join("regularized.csv"));
    write_series_csv(out_path, &result.series, exo)?;
    write_spike_report_csv(out_dir.join("spike_report.csv"), &result.report)?;
    write_filter_trace_csv(out_dir.join("filter_trace.csv"), &result.trace)?;
    Ok(result.series)
}

/// Assembles the feature frame, fits the scaler on the training rows
/// only, and writes features, scaler parameters, and the correlation
/// ranking.
pub fn stage_featurize(
    series: &TimeSeries,
    exo: &ExogenousFrame,
    config: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    ensure_dir(out_dir)?;
    let options = FeatureOptions {
        use_log: config.use_log,
        use_lags: config.use_lags,
        use_exogenous: config.use_exogenous,
        lag_offsets: config.lag_offsets.clone(),
        price_counting: crate::features::PriceCounting::Auto,
    };
    let frame = assemble_feature_frame(series, Some(exo), &options)?;
    frame.write_csv(out_dir.join("features.csv"))?;

    let ranges = chronological_split(series.len(), &config.split)?;
    let train_end = ranges.train.end;
    let mut scaler = ScalerParams::default();
    for (name, col) in &frame.columns {
        let usable = &col[frame.valid_from..train_end.max(frame.valid_from)];
        if usable.is_empty() {
            continue;
        }
        match fit_minmax(usable) {
            Ok(s) => scaler.insert(name.clone(), s),
            Err(Error::ConstantColumn(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    scaler.save(out_dir.join("scaler.csv"))?;

    let (hour, weekend) = crate::features::calendar_features(series.start(), series.len());
    let candidates: Vec<(&str, &[f64])> = vec![
        ("demand", &exo.demand),
        ("hour_of_day", &hour),
        ("temperature", &exo.temperature),
        ("humidity", &exo.humidity),
        ("heat_index", &exo.heat_index),
        ("is_weekend", &weekend),
        ("is_holiday", &exo.is_holiday),
    ];
    let ranking = rank_correlations(&candidates, series.values())?;
    let mut out = String::from("rank,column,pearson_r\n");
    for (i, (name, r)) in ranking.ranked.iter().enumerate() {
        let _ = writeln!(out, "{},{name},{r}", i + 1);
    }
    for name in &ranking.excluded {
        let _ = writeln!(out, "excluded,{name},");
    }
    let path = out_dir.join("correlations.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Writes the split manifest: segment boundaries and window counts.
pub fn stage_split(series_len: usize, config: &PipelineConfig, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    let ranges = chronological_split(series_len, &config.split)?;
    let mut out = String::from("segment,start,end,windows\n");
    for (name, range) in [
        ("train", &ranges.train),
        ("val", &ranges.val),
        ("test", &ranges.test),
    ] {
        let warmup = config.warmup_overlap && name != "train";
        let set = segment_windows(range, config.lookback, config.horizon, config.stride, warmup)?;
        let _ = writeln!(out, "{name},{},{},{}", range.start, range.end, set.len());
    }
    let path = out_dir.join("split_manifest.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Produces one forecast matrix per model over the test-segment
/// windows. `values` is the series the models consume; forecasts are
/// returned in the original price domain.
pub fn forecast_test_windows(
    values: &[f64],
    config: &PipelineConfig,
) -> Result<Vec<ForecastMatrix>> {
    let ranges = chronological_split(values.len(), &config.split)?;
    let windows = segment_windows(
        &ranges.test,
        config.lookback,
        config.horizon,
        config.stride,
        config.warmup_overlap,
    )?;
    if windows.is_empty() {
        return Err(Error::Config(format!(
            "test segment of {} points yields no windows at lookback {} + horizon {}",
            ranges.test.len(),
            config.lookback,
            config.horizon
        )));
    }

    // Optional log transform, fitted on the training slice only.
    let log_transform = if config.use_log {
        Some(LogTransform::fit(&values[ranges.train.clone()], LogPolicy::Auto)?)
    } else {
        None
    };
    let model_input: Vec<f64> = match &log_transform {
        Some(t) => t.apply(values)?,
        None => values.to_vec(),
    };

    let mut matrices = Vec::new();
    for spec in &config.models {
        if let ModelSpec::External { path, variant } = spec {
            let matrix =
                load_external_predictions(path, config.horizon, &spec.label(), variant)?;
            matrices.push(matrix);
            continue;
        }
        let rows = forecast_rows(spec, &model_input, &windows.windows, config)?;
        let rows: Vec<Vec<f64>> = match &log_transform {
            Some(t) => rows.iter().map(|row| t.invert(row)).collect(),
            None => rows,
        };
        let variant = if config.use_log { "ltfs" } else { "tfs" };
        let matrix = ForecastMatrix {
            model: spec.label(),
            variant: variant.to_string(),
            horizon: config.horizon,
            window_starts: windows.windows.iter().map(|w| w.target.start).collect(),
            rows,
        };
        matrix.validate()?;
        matrices.push(matrix);
    }
    Ok(matrices)
}

/// Window-parallel forecasting with optional refit striding: models are
/// fitted on every refit_stride-th window and their parameters reused
/// for the windows in between (each window still forecasts from its own
/// lookback). Outputs are per-slot, so results do not depend on thread
/// count.
fn forecast_rows(
    spec: &ModelSpec,
    model_input: &[f64],
    windows: &[crate::windowing::Window],
    config: &PipelineConfig,
) -> Result<Vec<Vec<f64>>> {
    let horizon = config.horizon;
    let refit = config.refit_stride;
    match spec {
        ModelSpec::SeasonalNaive => windows
            .par_iter()
            .map(|w| {
                crate::forecast::seasonal_naive_forecast(
                    &model_input[w.input.clone()],
                    config.naive_period,
                    horizon,
                )
            })
            .collect(),
        ModelSpec::AutoAr => {
            let options = crate::forecast::AutoArOptions::default();
            let models: Vec<crate::forecast::ArModel> = (0..windows.len())
                .step_by(refit)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&i| {
                    crate::forecast::fit_auto_ar(&model_input[windows[i].input.clone()], &options)
                })
                .collect::<Result<_>>()?;
            windows
                .par_iter()
                .enumerate()
                .map(|(i, w)| {
                    let model = &models[i / refit];
                    crate::forecast::ar_forecast(model, &model_input[w.input.clone()], horizon)
                })
                .collect()
        }
        ModelSpec::HoltWinters => {
            let fitted: Vec<crate::forecast::HoltWintersModel> = (0..windows.len())
                .step_by(refit)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&i| {
                    crate::forecast::holt_winters_fit(
                        &model_input[windows[i].input.clone()],
                        config.hw_period,
                    )
                })
                .collect::<Result<_>>()?;
            windows
                .par_iter()
                .enumerate()
                .map(|(i, w)| {
                    let anchor = &fitted[i / refit];
                    let model = crate::forecast::holt_winters_fit_with(
                        &model_input[w.input.clone()],
                        config.hw_period,
                        anchor.alpha,
                        anchor.beta,
                        anchor.gamma,
                    )?;
                    Ok(crate::forecast::holt_winters_forecast(&model, horizon))
                })
                .collect()
        }
        ModelSpec::External { .. } => Err(Error::invalid(
            "model",
            "external predictions are loaded, not computed",
        )),
    }
}

fn write_metrics_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut out = String::from("model,variant,mae,mape_pct,rmse,n,guarded_terms\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.model, r.variant, r.mae, r.mape_pct, r.rmse, r.n, r.guarded_terms
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_per_horizon_csv(path: &Path, reports: &[MetricReport]) -> Result<()> {
    let mut out = String::from("model,variant,h,mae,mape_pct,rmse\n");
    for r in reports {
        for h in &r.per_horizon {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model, r.variant, h.h, h.mae, h.mape_pct, h.rmse
            );
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Scores every matrix against the actual values and writes the metric
/// CSVs with the given suffix ("" or "_raw"/"_regularized").
pub fn stage_score(
    matrices: &[ForecastMatrix],
    actuals: &[f64],
    out_dir: &Path,
    suffix: &str,
) -> Result<Vec<MetricReport>> {
    ensure_dir(out_dir)?;
    let reports: Vec<MetricReport> = matrices
        .iter()
        .map(|m| score_forecasts(m, actuals))
        .collect::<Result<_>>()?;
    write_metrics_csv(&out_dir.join(format!("metrics{suffix}.csv")), &reports)?;
    write_per_horizon_csv(&out_dir.join(format!("metrics_per_horizon{suffix}.csv")), &reports)?;
    Ok(reports)
}

/// Result of a full pipeline run.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub output_dir: PathBuf,
    pub reports: Vec<MetricReport>,
    pub improvement: Option<crate::metrics::ImprovementReport>,
}

fn run_stages(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    let (series, exo, _report) = stage("ingest", stage_ingest(config, out_dir))?;

    // Which data variants the models will see.
    let mut variants: Vec<(&str, TimeSeries)> = Vec::new();
    match config.regularize {
        RegularizeMode::Off => variants.push(("raw", series.clone())),
        RegularizeMode::On => {
            let reg = stage("regularize", stage_regularize(&series, Some(&exo), config, out_dir, None))?;
            variants.push(("regularized", reg));
        }
        RegularizeMode::Compare => {
            let reg = stage("regularize", stage_regularize(&series, Some(&exo), config, out_dir, None))?;
            variants.push(("raw", series.clone()));
            variants.push(("regularized", reg));
        }
    }

    if config.emit_features {
        let feature_series = &variants.last().expect("at least one variant").1;
        stage("featurize", stage_featurize(feature_series, &exo, config, out_dir))?;
    }

    stage("split", stage_split(series.len(), config, out_dir))?;

    // Metrics are always computed against the ingested (raw) actuals.
    let actuals = series.values();
    let mut all_reports = Vec::new();
    let mut per_variant: Vec<Vec<MetricReport>> = Vec::new();
    let single_variant = variants.len() == 1;
    for (name, variant_series) in &variants {
        let matrices = stage("forecast", forecast_test_windows(variant_series.values(), config))?;
        let suffix = if single_variant { String::new() } else { format!("_{name}") };
        for m in &matrices {
            write_forecast_csv(
                out_dir.join(format!("forecasts_{}{suffix}.csv", m.model)),
                m,
            )?;
        }
        let reports = stage("score", stage_score(&matrices, actuals, out_dir, &suffix))?;
        all_reports.extend(reports.clone());
        per_variant.push(reports);
    }

    let improvement = if config.regularize == RegularizeMode::Compare {
        let report = improvement_report(&per_variant[0], &per_variant[1])?;
        let mut out = String::from("model,mape_raw,mape_regularized,improvement_pct\n");
        for e in &report.entries {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                e.model, e.mape_raw, e.mape_regularized, e.improvement_pct
            );
        }
        let _ = writeln!(out, "average,,,{}", report.average_improvement_pct);
        let path = out_dir.join("improvement.csv");
        std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
        Some(report)
    } else {
        None
    };

    if config.ablate_log {
        stage("ablate", run_log_ablation(config, &variants.last().unwrap().1, actuals, out_dir))?;
    }

    Ok(PipelineOutcome {
        output_dir: out_dir.to_path_buf(),
        reports: all_reports,
        improvement,
    })
}

/// Runs each internal model with the log transform off and on, emitting
/// the comparison table.
fn run_log_ablation(
    config: &PipelineConfig,
    series: &TimeSeries,
    actuals: &[f64],
    out_dir: &Path,
) -> Result<()> {
    let mut out = String::from("model,mape_without_log,mape_with_log,delta_pct\n");
    for spec in &config.models {
        if spec.is_external() {
            continue;
        }
        let mut without = config.clone();
        without.models = vec![spec.clone()];
        without.use_log = false;
        without.ablate_log = false;
        let mut with = without.clone();
        with.use_log = true;

        let m_without = forecast_test_windows(series.values(), &without)?;
        let m_with = forecast_test_windows(series.values(), &with)?;
        let r_without = score_forecasts(&m_without[0], actuals)?;
        let r_with = score_forecasts(&m_with[0], actuals)?;
        let delta_pct =
            100.0 * (r_with.mape_pct - r_without.mape_pct) / r_without.mape_pct;
        let _ = writeln!(
            out,
            "{},{},{},{}",
            spec.label(),
            r_without.mape_pct,
            r_with.mape_pct,
            delta_pct
        );
    }
    let path = out_dir.join("ablation_log.csv");
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Runs the whole pipeline. Deterministic given config + seed: the run
/// manifest is written last with status complete, so its absence (or a
/// failed status) marks partial artifacts as incomplete.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    config.validate()?;
    let out_dir = config.output_dir.clone();
    ensure_dir(&out_dir)?;

    let run = || -> Result<PipelineOutcome> {
        if config.threads > 0 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_stages(config, &out_dir))
        } else {
            run_stages(config, &out_dir)
        }
    };

    match run() {
        Ok(outcome) => {
            write_manifest(config, &out_dir, "complete", None)?;
            Ok(outcome)
        }
        Err(e) => {
            let _ = write_manifest(config, &out_dir, "failed", Some(&e.to_string()));
            Err(e)
        }
    }
}

fn write_manifest(
    config: &PipelineConfig,
    out_dir: &Path,
    status: &str,
    error: Option<&str>,
) -> Result<()> {
    let canonical = config.canonical_text();
    let mut out = String::new();
    let _ = writeln!(out, "toolkit_version = {TOOLKIT_VERSION}");
    let _ = writeln!(out, "config_hash = {:016x}", fnv1a64(canonical.as_bytes()));
    let _ = writeln!(out, "seed = {}", config.seed);
    let _ = writeln!(out, "status = {status}");
    if let Some(e) = error {
        let _ = writeln!(out, "error = {e}");
    }
    out.push_str("\n[config]\n");
    out.push_str(&canonical);
    out.push_str("\n[artifacts]\n");
    let mut names: Vec<String> = std::fs::read_dir(out_dir)
        .map_err(|e| Error::io(out_dir.display().to_string(), e))?
        .filter_map(|entry| entry.ok())
        .filter_map(|entry| entry.file_name().into_string().ok())
        .filter(|name| name.ends_with(".csv"))
        .collect();
    names.sort();
    for name in names {
        let _ = writeln!(out, "artifact = {name}");
    }
    let path = out_dir.join("run_manifest.txt");
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("sg_pipeline_{tag}_{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn smoke_config(out: &Path) -> PipelineConfig {
        // Ten synthetic days; windows scaled down to fit the short
        // test segment.
        PipelineConfig {
            demo_length: 480,
            output_dir: out.to_path_buf(),
            periods: vec![48],
            lookback: 24,
            horizon: 12,
            naive_period: 12,
            hw_period: 12,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let map = parse_config_text("lookback = 24\nbogus_key = 1\n").unwrap();
        match PipelineConfig::from_kv(&map) {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus_key")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn config_text_parses_values_and_comments() {
        let text = "\
# comment line
lookback = 256   # trailing comment
models = seasonal_naive, auto_ar
split = 0.7,0.2,0.1
regularize = compare
";
        let map = parse_config_text(text).unwrap();
        let config = PipelineConfig::from_kv(&map).unwrap();
        assert_eq!(config.lookback, 256);
        assert_eq!(config.models.len(), 2);
        assert_eq!(config.regularize, RegularizeMode::Compare);
    }

    #[test]
    fn env_var_fallback_for_output_dir() {
        let dir = temp_dir("env");
        std::env::set_var(OUTPUT_DIR_ENV, &dir);
        let config = PipelineConfig::from_kv(&BTreeMap::new()).unwrap();
        std::env::remove_var(OUTPUT_DIR_ENV);
        assert_eq!(config.output_dir, dir);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn smoke_run_emits_valid_metrics() {
        let dir = temp_dir("smoke");
        let config = smoke_config(&dir);
        let outcome = run_pipeline(&config).unwrap();
        assert_eq!(outcome.reports.len(), 1);
        assert!(outcome.reports[0].n > 0);

        let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
        let mut lines = metrics.lines();
        assert_eq!(
            lines.next().unwrap(),
            "model,variant,mae,mape_pct,rmse,n,guarded_terms"
        );
        let row = lines.next().unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], "seasonal_naive");
        let n: usize = fields[5].parse().unwrap();
        assert!(n > 0);
        let mape: f64 = fields[3].parse().unwrap();
        assert!(mape.is_finite() && mape >= 0.0);

        let manifest = std::fs::read_to_string(dir.join("run_manifest.txt")).unwrap();
        assert!(manifest.contains("status = complete"));
        assert!(manifest.contains("artifact = metrics.csv"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn identical_configs_produce_identical_bytes() {
        let dir_a = temp_dir("det_a");
        let dir_b = temp_dir("det_b");
        let mut config_a = smoke_config(&dir_a);
        config_a.models = vec![ModelSpec::SeasonalNaive, ModelSpec::AutoAr];
        let mut config_b = config_a.clone();
        config_b.output_dir = dir_b.clone();
        // Different thread counts must not change any byte.
        config_a.threads = 1;
        config_b.threads = 8;
        run_pipeline(&config_a).unwrap();
        run_pipeline(&config_b).unwrap();
        for name in [
            "ingested.csv",
            "metrics.csv",
            "metrics_per_horizon.csv",
            "forecasts_seasonal_naive.csv",
            "forecasts_auto_ar.csv",
            "split_manifest.csv",
        ] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        let _ = std::fs::remove_dir_all(&dir_a);
        let _ = std::fs::remove_dir_all(&dir_b);
    }

    #[test]
    fn compare_mode_emits_improvement_report() {
        let dir = temp_dir("compare");
        // Synthetic data with spikes (demo generator injects them).
        let config = PipelineConfig {
            demo_length: 2400,
            output_dir: dir.clone(),
            periods: vec![48, 336],
            lookback: 96,
            horizon: 48,
            stride: 4,
            naive_period: 48,
            regularize: RegularizeMode::Compare,
            ..PipelineConfig::default()
        };
        let outcome = run_pipeline(&config).unwrap();
        let improvement = outcome.improvement.expect("compare mode must pair runs");
        assert_eq!(improvement.entries.len(), 1);
        assert!(dir.join("improvement.csv").exists());
        assert!(dir.join("metrics_raw.csv").exists());
        assert!(dir.join("metrics_regularized.csv").exists());
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn errors_are_stage_tagged_and_manifest_marked() {
        let dir = temp_dir("fail");
        let config = PipelineConfig {
            input: Some(dir.join("missing.csv")),
            output_dir: dir.clone(),
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&config).unwrap_err();
        match err {
            Error::Stage { stage, .. } => assert_eq!(stage, "ingest"),
            other => panic!("expected stage error, got {other}"),
        }
        let manifest = std::fs::read_to_string(dir.join("run_manifest.txt")).unwrap();
        assert!(manifest.contains("status = failed"));
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn refit_stride_reuses_parameters_between_windows() {
        let dir = temp_dir("refit");
        let mut config = smoke_config(&dir);
        config.models = vec![ModelSpec::AutoAr, ModelSpec::HoltWinters];
        config.refit_stride = 5;
        let outcome = run_pipeline(&config).unwrap();
        assert_eq!(outcome.reports.len(), 2);
        for r in &outcome.reports {
            assert!(r.mape_pct.is_finite());
            assert!(r.n > 0);
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn ablation_table_is_emitted() {
        let dir = temp_dir("ablate");
        let mut config = smoke_config(&dir);
        config.models = vec![ModelSpec::AutoAr];
        config.ablate_log = true;
        run_pipeline(&config).unwrap();
        let table = std::fs::read_to_string(dir.join("ablation_log.csv")).unwrap();
        let mut lines = table.lines();
        assert_eq!(lines.next().unwrap(), "model,mape_without_log,mape_with_log,delta_pct");
        let row = lines.next().unwrap();
        assert!(row.starts_with("auto_ar,"));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
