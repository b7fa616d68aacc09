//! spikeguard: spike regularization and forecast benchmarking for
//! half-hourly electricity price series.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use spikeguard_core::forecast::load_external_predictions;
use spikeguard_core::pipeline::{self, parse_config_text, PipelineConfig};
use spikeguard_core::series::{ingest_csv, CsvSchema};

#[derive(Parser)]
#[command(
    name = "spikeguard",
    version,
    about = "Preprocess, regularize, and benchmark half-hourly electricity price forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every stage; mirrors the config-file keys, and any
/// flag given on the command line wins over the file.
#[derive(Args, Default, Clone)]
struct StageFlags {
    /// Input series CSV (canonical 7-column layout)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory artifacts are written to (falls back to $SPIKEGUARD_OUTPUT_DIR)
    #[arg(long = "output-dir")]
    output_dir: Option<PathBuf>,
    /// Use the synthetic demo dataset instead of an input file
    #[arg(long)]
    demo: bool,
    /// Demo dataset length in half-hour steps
    #[arg(long = "demo-length")]
    demo_length: Option<usize>,
    /// Spike threshold width in predicted standard deviations
    #[arg(long)]
    lambda: Option<f64>,
    /// Seasonal period in steps; repeat for multiple levels
    #[arg(long = "period")]
    periods: Vec<usize>,
    /// Huber threshold for the robust filter update
    #[arg(long)]
    delta: Option<f64>,
    /// Lookback window length in steps
    #[arg(long)]
    lookback: Option<usize>,
    /// Forecast horizon in steps
    #[arg(long)]
    horizon: Option<usize>,
    /// Window stride in steps
    #[arg(long)]
    stride: Option<usize>,
    /// Refit interval in windows for auto-AR and Holt-Winters
    #[arg(long = "refit-stride")]
    refit_stride: Option<usize>,
    /// Train,validation,test fractions
    #[arg(long)]
    split: Option<String>,
    /// Forecaster to run; repeat for several
    /// (seasonal_naive | auto_ar | holt_winters | external:<path>[:<variant>])
    #[arg(long = "model")]
    models: Vec<String>,
    /// Log-transform prices before modeling (fit on the training split)
    #[arg(long = "log-price")]
    log_price: bool,
    /// Emit the feature frame, scaler, and correlation artifacts
    #[arg(long)]
    features: bool,
    /// off | on | compare (compare pairs raw and regularized runs)
    #[arg(long)]
    regularize: Option<String>,
    /// Worker threads for window evaluation (output is identical for any value)
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for synthetic data and any stochastic tie-breaking
    #[arg(long)]
    seed: Option<u64>,
    /// Gap fill policy: linear | previous
    #[arg(long = "fill-policy")]
    fill_policy: Option<String>,
    /// Longest gap run the filler repairs
    #[arg(long = "max-fill-run")]
    max_fill_run: Option<usize>,
    /// Let test-window lookbacks reach into the validation tail
    #[arg(long = "warmup-overlap")]
    warmup_overlap: bool,
    /// Emit the with/without log-transform comparison table
    #[arg(long = "ablate-log")]
    ablate_log: bool,
    /// Cycle length the seasonal-naive baseline repeats
    #[arg(long = "naive-period")]
    naive_period: Option<usize>,
    /// Cycle length for the Holt-Winters baseline
    #[arg(long = "hw-period")]
    hw_period: Option<usize>,
    /// Lag offsets in steps, comma separated
    #[arg(long = "lag-offsets")]
    lag_offsets: Option<String>,
}

impl StageFlags {
    /// Overlays these flags onto a key=value map (flags win).
    fn overlay(&self, map: &mut BTreeMap<String, String>) {
        if let Some(p) = &self.input {
            map.insert("input".to_string(), p.display().to_string());
        }
        if self.demo {
            map.remove("input");
        }
        let mut set = |k: &str, v: String| {
            map.insert(k.to_string(), v);
        };
        if let Some(p) = &self.output_dir {
            set("output_dir", p.display().to_string());
        }
        if let Some(n) = self.demo_length {
            set("demo_length", n.to_string());
        }
        if let Some(v) = self.lambda {
            set("lambda", v.to_string());
        }
        if !self.periods.is_empty() {
            set(
                "periods",
                self.periods.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
            );
        }
        if let Some(v) = self.delta {
            set("huber_delta", v.to_string());
        }
        if let Some(v) = self.lookback {
            set("lookback", v.to_string());
        }
        if let Some(v) = self.horizon {
            set("horizon", v.to_string());
        }
        if let Some(v) = self.stride {
            set("stride", v.to_string());
        }
        if let Some(v) = self.refit_stride {
            set("refit_stride", v.to_string());
        }
        if let Some(v) = &self.split {
            set("split", v.clone());
        }
        if !self.models.is_empty() {
            set("models", self.models.join(","));
        }
        if self.log_price {
            set("log_price", "true".to_string());
        }
        if self.features {
            set("features", "true".to_string());
        }
        if let Some(v) = &self.regularize {
            set("regularize", v.clone());
        }
        if let Some(v) = self.threads {
            set("threads", v.to_string());
        }
        if let Some(v) = self.seed {
            set("seed", v.to_string());
        }
        if let Some(v) = &self.fill_policy {
            set("fill_policy", v.clone());
        }
        if let Some(v) = self.max_fill_run {
            set("max_fill_run", v.to_string());
        }
        if self.warmup_overlap {
            set("warmup_overlap", "true".to_string());
        }
        if self.ablate_log {
            set("ablate_log", "true".to_string());
        }
        if let Some(v) = self.naive_period {
            set("naive_period", v.to_string());
        }
        if let Some(v) = self.hw_period {
            set("hw_period", v.to_string());
        }
        if let Some(v) = &self.lag_offsets {
            set("lag_offsets", v.clone());
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Read a raw CSV, repair gaps, write the canonical series
    Ingest(StageFlags),
    /// Season-trend decomposition at each --period
    Decompose(StageFlags),
    /// Detect and replace extreme spikes
    Regularize {
        #[command(flatten)]
        flags: StageFlags,
        /// Where to write the regularized series (default <output-dir>/regularized.csv)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the feature frame, scaler parameters, and correlation ranking
    Featurize(StageFlags),
    /// Write the chronological split manifest with window counts
    Split(StageFlags),
    /// Run the configured forecasters over the test windows
    Forecast(StageFlags),
    /// Score a predictions CSV against actual values
    Score {
        #[command(flatten)]
        flags: StageFlags,
        /// Predictions CSV (window_start,h,prediction)
        #[arg(long)]
        predictions: PathBuf,
        /// Actuals CSV in the canonical series layout
        #[arg(long)]
        actuals: PathBuf,
        /// Model label for the report (default: predictions file stem,
        /// with any forecasts_ prefix stripped)
        #[arg(long = "model-label")]
        model_label: Option<String>,
        /// Variant label (zs|lzs|uft|tfs|ltfs|mft)
        #[arg(long)]
        variant: Option<String>,
    },
    /// Run every stage end to end
    Pipeline {
        #[command(flatten)]
        flags: StageFlags,
        /// Flat key=value config file; flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn print_report_table(reports: &[spikeguard_core::metrics::MetricReport]) {
    println!(
        "{:<20} {:<8} {:>12} {:>10} {:>12} {:>8} {:>8}",
        "model", "variant", "MAE", "MAPE%", "RMSE", "n", "guarded"
    );
    for r in reports {
        println!(
            "{:<20} {:<8} {:>12.4} {:>10.4} {:>12.4} {:>8} {:>8}",
            r.model, r.variant, r.mae, r.mape_pct, r.rmse, r.n, r.guarded_terms
        );
    }
}

fn build_config(flags: &StageFlags, config_path: Option<&PathBuf>) -> Result<PipelineConfig> {
    let mut map = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_config_text(&text)?
        }
        None => BTreeMap::new(),
    };
    flags.overlay(&mut map);
    Ok(PipelineConfig::from_kv(&map)?)
}

fn load_series(config: &PipelineConfig) -> Result<(spikeguard_core::series::TimeSeries, spikeguard_core::series::ExogenousFrame)> {
    let path = config
        .input
        .as_ref()
        .context("this stage requires --input (or run `pipeline` with --demo)")?;
    let (series, exo, report) = ingest_csv(path, &CsvSchema::default())?;
    let filled = spikeguard_core::series::fill_gaps(
        &series,
        &report,
        config.fill_policy,
        Some(config.max_fill_run),
    )?;
    let filled_exo = exo.fill_gaps(&report, config.fill_policy)?;
    Ok((filled, filled_exo))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(flags) => {
            let config = build_config(&flags, None)?;
            let out_dir = config.output_dir.clone();
            let (series, _, report) = pipeline::stage_ingest(&config, &out_dir)?;
            println!(
                "ingested {} points ({} gaps, {} duplicates) -> {}",
                series.len(),
                report.gaps.len(),
                report.duplicate_timestamps.len(),
                out_dir.join("ingested.csv").display()
            );
        }
        Command::Decompose(flags) => {
            let config = build_config(&flags, None)?;
            let (series, _) = load_series(&config)?;
            let written = pipeline::stage_decompose(&series, &config.periods, &config.output_dir)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        Command::Regularize { flags, out } => {
            let config = build_config(&flags, None)?;
            let (series, exo) = load_series(&config)?;
            let regularized = pipeline::stage_regularize(
                &series,
                Some(&exo),
                &config,
                &config.output_dir,
                out.as_deref(),
            )?;
            let out_path = out.unwrap_or_else(|| config.output_dir.join("regularized.csv"));
            println!(
                "regularized {} points -> {} (report: {})",
                regularized.len(),
                out_path.display(),
                config.output_dir.join("spike_report.csv").display()
            );
        }
        Command::Featurize(flags) => {
            let config = build_config(&flags, None)?;
            let (series, exo) = load_series(&config)?;
            pipeline::stage_featurize(&series, &exo, &config, &config.output_dir)?;
            println!("wrote {}", config.output_dir.join("features.csv").display());
        }
        Command::Split(flags) => {
            let config = build_config(&flags, None)?;
            let (series, _) = load_series(&config)?;
            pipeline::stage_split(series.len(), &config, &config.output_dir)?;
            println!("wrote {}", config.output_dir.join("split_manifest.csv").display());
        }
        Command::Forecast(flags) => {
            let config = build_config(&flags, None)?;
            let (series, _) = load_series(&config)?;
            let matrices = pipeline::forecast_test_windows(series.values(), &config)?;
            for m in &matrices {
                let path = config.output_dir.join(format!("forecasts_{}.csv", m.model));
                spikeguard_core::forecast::write_forecast_csv(&path, m)?;
                println!("wrote {} ({} windows)", path.display(), m.n_windows());
            }
        }
        Command::Score {
            flags,
            predictions,
            actuals,
            model_label,
            variant,
        } => {
            let config = build_config(&flags, None)?;
            let label = model_label.unwrap_or_else(|| {
                let stem = predictions
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "external".to_string());
                stem.strip_prefix("forecasts_").map(str::to_string).unwrap_or(stem)
            });
            let variant = variant.unwrap_or_else(|| "tfs".to_string());
            let matrix =
                load_external_predictions(&predictions, config.horizon, &label, &variant)?;
            let (series, _, _) = ingest_csv(&actuals, &CsvSchema::default())?;
            let reports =
                pipeline::stage_score(&[matrix], series.values(), &config.output_dir, "")?;
            let r = &reports[0];
            println!(
                "{} ({}): MAE {:.4}  MAPE {:.4}%  RMSE {:.4}  (n = {})",
                r.model, r.variant, r.mae, r.mape_pct, r.rmse, r.n
            );
        }
        Command::Pipeline { flags, config } => {
            let config = build_config(&flags, config.as_ref())?;
            let outcome = pipeline::run_pipeline(&config)?;
            print_report_table(&outcome.reports);
            if let Some(improvement) = &outcome.improvement {
                for e in &improvement.entries {
                    println!(
                        "{}: MAPE {:.4}% -> {:.4}% ({:+.2}%)",
                        e.model, e.mape_raw, e.mape_regularized, e.improvement_pct
                    );
                }
                println!(
                    "average MAPE improvement: {:+.2}%",
                    improvement.average_improvement_pct
                );
            }
            println!(
                "artifacts in {} (manifest: run_manifest.txt)",
                outcome.output_dir.display()
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
