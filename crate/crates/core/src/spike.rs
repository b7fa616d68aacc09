//! Extreme-spike detection and regularization.
//!
//! Three stages in one forward pass: seasonal decomposition isolates
//! non-seasonal deviations, a Huber-weighted Kalman filter tracks the
//! deseasonalized level, and an adaptive acceptance interval flags each
//! observation against
//!
//!   UB_k = (x_prior + S_k) + lambda * sqrt(P_prior + R)
//!   LB_k = (x_prior + S_k) - lambda * sqrt(P_prior + R)
//!
//! so the band widens automatically while the filter is uncertain.
//! Flagged points are replaced by the filtered level plus the seasonal
//! component, clamped into the band; everything else passes through
//! untouched. Flagged observations still enter the filter update — the
//! Huber gain has already shrunk their influence, and hard rejection
//! would blind the filter inside spike clusters.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kalman::{filter_series, FilterTrace, HuberConfig, KalmanModel};
use crate::series::TimeSeries;
use crate::stl::{multi_seasonal_decompose_with, StlParams};

/// Default weekly period on the half-hourly grid (7 days x 48).
pub const WEEKLY_PERIOD: usize = 336;
/// Default monthly period on the half-hourly grid (30 days x 48).
pub const MONTHLY_PERIOD: usize = 1440;

/// Detector tuning.
#[derive(Debug, Clone)]
pub struct SpikeDetectorConfig {
    /// Band half-width in predicted standard deviations.
    pub lambda: f64,
    pub periods: Vec<usize>,
    pub huber: HuberConfig,
    /// One decomposition parameter set per period; defaults derive from
    /// `periods` when empty.
    pub stl: Vec<StlParams>,
}

impl Default for SpikeDetectorConfig {
    fn default() -> Self {
        SpikeDetectorConfig {
            lambda: 3.0,
            periods: vec![WEEKLY_PERIOD, MONTHLY_PERIOD],
            huber: HuberConfig::default(),
            stl: Vec::new(),
        }
    }
}

impl SpikeDetectorConfig {
    pub fn with_periods(periods: Vec<usize>) -> Self {
        SpikeDetectorConfig {
            periods,
            ..SpikeDetectorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(Error::invalid("lambda", "must be > 0"));
        }
        if self.periods.is_empty() {
            return Err(Error::invalid("periods", "at least one period required"));
        }
        self.huber.validate()
    }

    fn stl_params(&self) -> Vec<StlParams> {
        if self.stl.is_empty() {
            self.periods.iter().map(|&p| StlParams::for_period(p)).collect()
        } else {
            self.stl.clone()
        }
    }
}

/// One flagged observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeEntry {
    pub index: usize,
    pub observed: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub replacement: f64,
}

/// All flagged points plus summary counts.
#[derive(Debug, Clone, Default)]
pub struct SpikeReport {
    pub entries: Vec<SpikeEntry>,
    pub total_flagged: usize,
    pub fraction_flagged: f64,
}

/// The acceptance interval of the adaptive threshold.
///
/// Centered on predicted trend plus seasonal, with half-width
/// lambda * sqrt(prior_var + r). lambda = 0 degenerates to a width-zero
/// interval at the center.
pub fn adaptive_bounds(
    prior_mean: f64,
    prior_var: f64,
    seasonal: f64,
    r: f64,
    lambda: f64,
) -> Result<(f64, f64)> {
    if lambda < 0.0 {
        return Err(Error::invalid("lambda", "must be >= 0"));
    }
    let total_var = prior_var + r;
    if total_var <= 0.0 {
        return Err(Error::invalid(
            "prior_var + r",
            format!("must be > 0, got {total_var}"),
        ));
    }
    let center = prior_mean + seasonal;
    let half_width = lambda * total_var.sqrt();
    Ok((center - half_width, center + half_width))
}

/// Output of [`detect_and_regularize`].
#[derive(Debug, Clone)]
pub struct Regularized {
    pub series: TimeSeries,
    pub report: SpikeReport,
    pub trace: FilterTrace,
}

/// Runs the full decompose / filter / threshold / replace pipeline.
pub fn detect_and_regularize(
    series: &TimeSeries,
    config: &SpikeDetectorConfig,
) -> Result<Regularized> {
    config.validate()?;
    let stl_params = config.stl_params();
    let max_period = stl_params.iter().map(|p| p.period).max().unwrap();
    if series.len() < 2 * max_period {
        return Err(Error::SeriesTooShort {
            got: series.len(),
            needed: 2 * max_period,
            context: "detect_and_regularize".to_string(),
        });
    }

    // Stage 1: strip the cyclical structure.
    let decomposition = multi_seasonal_decompose_with(series.values(), &stl_params)
        .map_err(|e| Error::Stage { stage: "decompose", source: Box::new(e) })?;

    // Stage 2: robust filtering of the deseasonalized series.
    let (model, init) = KalmanModel::auto_from_series(&decomposition.deseasonalized)?;
    let trace = filter_series(&decomposition.deseasonalized, &model, &config.huber, &init)
        .map_err(|e| Error::Stage { stage: "filter", source: Box::new(e) })?;

    // Stage 3: adaptive thresholding in the price domain.
    let values = series.values();
    let mut regularized = values.to_vec();
    let mut entries = Vec::new();
    for (k, step) in trace.steps.iter().enumerate() {
        let seasonal = decomposition.seasonal_total[k];
        let (lb, ub) = adaptive_bounds(
            step.predicted_obs,
            step.predicted_obs_var,
            seasonal,
            model.r,
            config.lambda,
        )?;
        let z = values[k];
        if z < lb || z > ub {
            let replacement = (step.posterior_mean[0] + seasonal).clamp(lb, ub);
            regularized[k] = replacement;
            entries.push(SpikeEntry {
                index: k,
                observed: z,
                lower_bound: lb,
                upper_bound: ub,
                replacement,
            });
        }
    }

    let total_flagged = entries.len();
    let fraction_flagged = total_flagged as f64 / values.len() as f64;
    Ok(Regularized {
        series: series.with_values(regularized)?,
        report: SpikeReport {
            entries,
            total_flagged,
            fraction_flagged,
        },
        trace,
    })
}

/// Summary of what regularization changed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationSummary {
    pub count_changed: usize,
    pub max_abs_delta: f64,
    /// var(regularized) / var(raw).
    pub variance_ratio: f64,
}

pub fn regularization_delta(
    raw: &TimeSeries,
    regularized: &TimeSeries,
) -> Result<RegularizationSummary> {
    if raw.len() != regularized.len() {
        return Err(Error::LengthMismatch {
            left: raw.len(),
            right: regularized.len(),
            context: "regularization_delta".to_string(),
        });
    }
    let mut count_changed = 0;
    let mut max_abs_delta = 0.0f64;
    for (a, b) in raw.values().iter().zip(regularized.values().iter()) {
        if a != b {
            count_changed += 1;
            max_abs_delta = max_abs_delta.max((a - b).abs());
        }
    }
    let variance = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / v.len() as f64
    };
    let var_raw = variance(raw.values());
    let var_reg = variance(regularized.values());
    let variance_ratio = if var_raw > 0.0 { var_reg / var_raw } else { 1.0 };
    Ok(RegularizationSummary {
        count_changed,
        max_abs_delta,
        variance_ratio,
    })
}

/// Writes `index,observed,lower_bound,upper_bound,replacement` for
/// every flagged point.
pub fn write_spike_report_csv(path: impl AsRef<Path>, report: &SpikeReport) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,observed,lower_bound,upper_bound,replacement\n");
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.index, e.observed, e.lower_bound, e.upper_bound, e.replacement
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use chrono::NaiveDateTime;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ts(values: Vec<f64>) -> TimeSeries {
        let start = NaiveDateTime::parse_from_str("2021-01-01T00:00", "%Y-%m-%dT%H:%M").unwrap();
        TimeSeries::new(start, values, "S$/MWh").unwrap()
    }

    #[test]
    fn bounds_simple_case() {
        let (lb, ub) = adaptive_bounds(100.0, 0.0, 0.0, 4.0, 3.0).unwrap();
        assert_eq!((lb, ub), (94.0, 106.0));
    }

    #[test]
    fn bounds_with_seasonal_and_prior_variance() {
        let (lb, ub) = adaptive_bounds(100.0, 5.0, 20.0, 4.0, 3.0).unwrap();
        assert_eq!((lb, ub), (111.0, 129.0));
    }

    #[test]
    fn zero_lambda_collapses_the_interval() {
        let (lb, ub) = adaptive_bounds(100.0, 5.0, 20.0, 4.0, 0.0).unwrap();
        assert_eq!(lb, ub);
        assert_eq!(lb, 120.0);
    }

    #[test]
    fn nonpositive_variance_rejected() {
        assert!(adaptive_bounds(0.0, 0.0, 0.0, 0.0, 3.0).is_err());
        assert!(adaptive_bounds(0.0, -1.0, 0.0, 0.5, 3.0).is_err());
    }

    #[test]
    fn width_grows_with_lambda_and_nests() {
        let mut rng = StdRng::seed_from_u64(61);
        for _ in 0..200 {
            let prior_mean = rng.gen_range(-100.0..100.0);
            let prior_var = rng.gen_range(0.0..10.0);
            let seasonal = rng.gen_range(-50.0..50.0);
            let r = rng.gen_range(0.01..5.0);
            let lambda = rng.gen_range(0.1..5.0);
            let lambda_bigger = lambda + rng.gen_range(0.1..3.0);
            let (lb1, ub1) = adaptive_bounds(prior_mean, prior_var, seasonal, r, lambda).unwrap();
            let (lb2, ub2) =
                adaptive_bounds(prior_mean, prior_var, seasonal, r, lambda_bigger).unwrap();
            assert!(lb2 <= lb1 && ub1 <= ub2, "interval did not nest");
            // Width formula is exact.
            let width = ub1 - lb1;
            assert!((width - 2.0 * lambda * (prior_var + r).sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn width_grows_with_prior_variance() {
        let (lb1, ub1) = adaptive_bounds(10.0, 1.0, 5.0, 2.0, 3.0).unwrap();
        let (lb2, ub2) = adaptive_bounds(10.0, 4.0, 5.0, 2.0, 3.0).unwrap();
        assert!(ub2 - lb2 > ub1 - lb1);
    }

    #[test]
    fn clean_seasonal_signal_rarely_flags() {
        let fixture = synth::seasonal_fixture(&synth::SeasonalFixtureSpec {
            length: 24 * 96,
            periods: vec![(24, 6.0), (96, 4.0)],
            base: 100.0,
            trend_per_step: 0.001,
            noise_sigma: 1.0,
            seed: 71,
        });
        let config = SpikeDetectorConfig::with_periods(vec![24, 96]);
        let result = detect_and_regularize(&ts(fixture.clean.clone()), &config).unwrap();
        assert!(
            result.report.fraction_flagged < 0.005,
            "flagged {:.3}% of clean data",
            100.0 * result.report.fraction_flagged
        );
    }

    #[test]
    fn injected_spikes_are_recovered() {
        for seed in [1u64, 2, 3] {
            let fixture = synth::spiked_fixture(&synth::SpikeFixtureSpec {
                base: synth::SeasonalFixtureSpec {
                    length: 24 * 96,
                    periods: vec![(24, 6.0), (96, 4.0)],
                    base: 100.0,
                    trend_per_step: 0.0,
                    noise_sigma: 1.0,
                    seed,
                },
                spike_fraction: 0.01,
                spike_sigmas: 8.0,
                seed: seed + 100,
            });
            let config = SpikeDetectorConfig::with_periods(vec![24, 96]);
            let result = detect_and_regularize(&ts(fixture.spiked.clone()), &config).unwrap();
            let flagged: std::collections::HashSet<usize> =
                result.report.entries.iter().map(|e| e.index).collect();
            let hits = fixture
                .spike_indices
                .iter()
                .filter(|i| flagged.contains(i))
                .count();
            let recall = hits as f64 / fixture.spike_indices.len() as f64;
            assert!(recall >= 0.95, "seed {seed}: recall {recall}");
            let clean_points = fixture.spiked.len() - fixture.spike_indices.len();
            let false_flags = flagged.len() - hits;
            let false_rate = false_flags as f64 / clean_points as f64;
            assert!(false_rate <= 0.01, "seed {seed}: false flag rate {false_rate}");
        }
    }

    #[test]
    fn lone_extreme_point_is_replaced_near_the_level() {
        let mut values = vec![100.0; 10 * 24];
        values[50] = 10_000.0;
        let config = SpikeDetectorConfig::with_periods(vec![24]);
        let result = detect_and_regularize(&ts(values), &config).unwrap();
        let entry = result
            .report
            .entries
            .iter()
            .find(|e| e.index == 50)
            .expect("spike at index 50 must be flagged");
        assert!(
            entry.replacement > 90.0 && entry.replacement < 110.0,
            "replacement {}",
            entry.replacement
        );
    }

    #[test]
    fn unflagged_points_are_bit_identical() {
        let fixture = synth::spiked_fixture(&synth::SpikeFixtureSpec {
            base: synth::SeasonalFixtureSpec {
                length: 24 * 96,
                periods: vec![(24, 5.0), (96, 3.0)],
                base: 80.0,
                trend_per_step: 0.002,
                noise_sigma: 1.5,
                seed: 5,
            },
            spike_fraction: 0.02,
            spike_sigmas: 10.0,
            seed: 55,
        });
        let config = SpikeDetectorConfig::with_periods(vec![24, 96]);
        let raw = ts(fixture.spiked.clone());
        let result = detect_and_regularize(&raw, &config).unwrap();
        let flagged: std::collections::HashSet<usize> =
            result.report.entries.iter().map(|e| e.index).collect();
        for i in 0..raw.len() {
            if !flagged.contains(&i) {
                assert_eq!(raw.values()[i], result.series.values()[i], "index {i}");
            }
        }
        // Flagged entries respect their own bounds.
        for e in &result.report.entries {
            assert!(e.observed < e.lower_bound || e.observed > e.upper_bound);
            assert!(e.lower_bound < e.upper_bound);
            assert!(e.replacement >= e.lower_bound && e.replacement <= e.upper_bound);
        }
    }

    #[test]
    fn second_pass_flags_almost_nothing() {
        let fixture = synth::spiked_fixture(&synth::SpikeFixtureSpec {
            base: synth::SeasonalFixtureSpec {
                length: 24 * 96,
                periods: vec![(24, 6.0), (96, 4.0)],
                base: 100.0,
                trend_per_step: 0.0,
                noise_sigma: 1.0,
                seed: 13,
            },
            spike_fraction: 0.01,
            spike_sigmas: 8.0,
            seed: 113,
        });
        let config = SpikeDetectorConfig::with_periods(vec![24, 96]);
        let first = detect_and_regularize(&ts(fixture.spiked.clone()), &config).unwrap();
        let second = detect_and_regularize(&first.series, &config).unwrap();
        assert!(
            second.report.total_flagged as f64 <= 0.1 * first.report.total_flagged as f64,
            "second pass flagged {} of {} first-pass flags",
            second.report.total_flagged,
            first.report.total_flagged
        );
    }

    #[test]
    fn delta_summary_cases() {
        let a = ts(vec![1.0, 2.0, 3.0]);
        let identical = regularization_delta(&a, &a).unwrap();
        assert_eq!(identical.count_changed, 0);
        assert_eq!(identical.max_abs_delta, 0.0);
        assert_eq!(identical.variance_ratio, 1.0);

        let b = ts(vec![1.0, 5.0, 3.0]);
        let one_change = regularization_delta(&b, &a).unwrap();
        assert_eq!(one_change.count_changed, 1);
        assert_eq!(one_change.max_abs_delta, 3.0);

        let short = ts(vec![1.0]);
        assert!(regularization_delta(&a, &short).is_err());
    }

    #[test]
    fn spike_energy_removal_shrinks_variance() {
        let fixture = synth::spiked_fixture(&synth::SpikeFixtureSpec {
            base: synth::SeasonalFixtureSpec {
                length: 24 * 96,
                periods: vec![(24, 2.0)],
                base: 100.0,
                trend_per_step: 0.0,
                noise_sigma: 1.0,
                seed: 17,
            },
            spike_fraction: 0.02,
            spike_sigmas: 20.0,
            seed: 117,
        });
        let config = SpikeDetectorConfig::with_periods(vec![24]);
        let raw = ts(fixture.spiked.clone());
        let result = detect_and_regularize(&raw, &config).unwrap();
        let summary = regularization_delta(&raw, &result.series).unwrap();
        assert!(summary.count_changed > 0);
        assert!(
            summary.variance_ratio < 0.9,
            "variance ratio {}",
            summary.variance_ratio
        );
    }

    #[test]
    fn short_series_rejected() {
        let config = SpikeDetectorConfig::default(); // periods 336/1440
        assert!(detect_and_regularize(&ts(vec![1.0; 100]), &config).is_err());
    }

    #[test]
    fn default_config_matches_documented_values() {
        let config = SpikeDetectorConfig::default();
        assert_eq!(config.lambda, 3.0);
        assert_eq!(config.periods, vec![336, 1440]);
        assert_eq!(config.huber.delta, 1.345);
    }

    #[test]
    fn invalid_lambda_rejected() {
        let mut config = SpikeDetectorConfig::with_periods(vec![24]);
        config.lambda = 0.0;
        assert!(config.validate().is_err());
        config.lambda = -1.0;
        assert!(config.validate().is_err());
    }
}
