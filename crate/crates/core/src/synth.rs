//! Seeded synthetic fixtures: seasonal price-like series, spike
//! injection with ground-truth labels, heavy-tailed prices, and a full
//! demo CSV with exogenous columns. Used by the demo mode and by tests
//! that need known structure.

use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDateTime;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Deterministic seasonal signal plus Gaussian noise.
#[derive(Debug, Clone)]
pub struct SeasonalFixtureSpec {
    pub length: usize,
    /// (period, amplitude) pairs.
    pub periods: Vec<(usize, f64)>,
    pub base: f64,
    pub trend_per_step: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SeasonalFixture {
    /// Deterministic part only.
    pub noiseless: Vec<f64>,
    /// Deterministic part plus noise; no spikes.
    pub clean: Vec<f64>,
}

pub fn seasonal_fixture(spec: &SeasonalFixtureSpec) -> SeasonalFixture {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.noise_sigma).unwrap();
    let mut noiseless = Vec::with_capacity(spec.length);
    let mut clean = Vec::with_capacity(spec.length);
    for i in 0..spec.length {
        let mut v = spec.base + spec.trend_per_step * i as f64;
        for &(period, amplitude) in &spec.periods {
            v += amplitude * (2.0 * std::f64::consts::PI * i as f64 / period as f64).sin();
        }
        noiseless.push(v);
        clean.push(v + if spec.noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 });
    }
    SeasonalFixture { noiseless, clean }
}

/// Spike injection on top of a seasonal fixture.
#[derive(Debug, Clone)]
pub struct SpikeFixtureSpec {
    pub base: SeasonalFixtureSpec,
    /// Fraction of indices that receive a spike.
    pub spike_fraction: f64,
    /// Spike magnitude in units of the base noise sigma.
    pub spike_sigmas: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SpikedFixture {
    pub clean: Vec<f64>,
    pub spiked: Vec<f64>,
    /// Ground-truth injection labels, sorted ascending.
    pub spike_indices: Vec<usize>,
}

pub fn spiked_fixture(spec: &SpikeFixtureSpec) -> SpikedFixture {
    let seasonal = seasonal_fixture(&spec.base);
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let n = spec.base.length;
    let target = ((n as f64) * spec.spike_fraction).round() as usize;
    let mut indices = std::collections::BTreeSet::new();
    while indices.len() < target {
        indices.insert(rng.gen_range(0..n));
    }
    let mut spiked = seasonal.clean.clone();
    let magnitude = spec.spike_sigmas * spec.base.noise_sigma;
    for &i in &indices {
        // Electricity spikes skew upward; keep a downward minority.
        let sign = if rng.gen_bool(0.8) { 1.0 } else { -1.0 };
        spiked[i] += sign * magnitude * rng.gen_range(1.0..1.5);
    }
    SpikedFixture {
        clean: seasonal.clean,
        spiked,
        spike_indices: indices.into_iter().collect(),
    }
}

/// Heavy-tailed price path: the log-price follows a seasonal AR(1)
/// with occasional transient jumps, so levels are lognormal with
/// multiplicative spikes — additive and modest in log space, extreme
/// in the raw price domain.
pub fn heavy_tailed_price_fixture(length: usize, period: usize, seed: u64) -> Vec<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.12).unwrap();
    let mut log_level = 0.0f64;
    let mut out = Vec::with_capacity(length);
    for i in 0..length {
        log_level = 0.95 * log_level + normal.sample(&mut rng);
        let seasonal = 0.30 * (2.0 * std::f64::consts::PI * i as f64 / period as f64).sin();
        let jump = if rng.gen_bool(0.01) {
            rng.gen_range(1.0..2.0) // a 2.7x to 7.4x transient spike
        } else {
            0.0
        };
        out.push(100.0 * (log_level + seasonal + jump).exp());
    }
    out
}

/// Demo dataset: price plus correlated exogenous columns in the
/// canonical CSV layout.
pub fn demo_csv(length: usize, seed: u64, start: NaiveDateTime) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut out = String::with_capacity(length * 64);
    out.push_str("timestamp,usep_price,demand,temperature,humidity,heat_index,is_holiday\n");
    let day = 48.0;
    let week = 336.0;
    for i in 0..length {
        let t = i as f64;
        let daily = (2.0 * std::f64::consts::PI * t / day).sin();
        let weekly = (2.0 * std::f64::consts::PI * t / week).sin();
        let demand = 5400.0 + 700.0 * daily + 250.0 * weekly + 40.0 * noise.sample(&mut rng);
        let temperature = 28.0 + 2.5 * daily + 0.4 * noise.sample(&mut rng);
        let humidity = (78.0 - 2.0 * daily + 1.5 * noise.sample(&mut rng)).clamp(40.0, 100.0);
        let heat_index = temperature + 0.06 * (humidity - 60.0);
        let is_holiday = if (i / 48) % 13 == 0 { 1 } else { 0 };
        let mut price = 40.0 + 0.012 * (demand - 5000.0) + 6.0 * weekly
            + 2.5 * noise.sample(&mut rng);
        // Occasional transient spikes, the thing the detector hunts.
        if rng.gen_bool(0.004) {
            price += rng.gen_range(80.0..300.0);
        }
        let timestamp = start + chrono::Duration::minutes(30 * i as i64);
        let _ = writeln!(
            out,
            "{},{:.4},{:.2},{:.2},{:.2},{:.2},{}",
            timestamp.format("%Y-%m-%dT%H:%M"),
            price,
            demand,
            temperature,
            humidity,
            heat_index,
            is_holiday
        );
    }
    out
}

pub fn write_demo_csv(
    path: impl AsRef<Path>,
    length: usize,
    seed: u64,
    start: NaiveDateTime,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, demo_csv(length, seed, start))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_seed_deterministic() {
        let spec = SeasonalFixtureSpec {
            length: 200,
            periods: vec![(24, 5.0)],
            base: 100.0,
            trend_per_step: 0.01,
            noise_sigma: 1.0,
            seed: 3,
        };
        assert_eq!(seasonal_fixture(&spec).clean, seasonal_fixture(&spec).clean);

        let spiked_spec = SpikeFixtureSpec {
            base: spec,
            spike_fraction: 0.02,
            spike_sigmas: 8.0,
            seed: 4,
        };
        let a = spiked_fixture(&spiked_spec);
        let b = spiked_fixture(&spiked_spec);
        assert_eq!(a.spiked, b.spiked);
        assert_eq!(a.spike_indices, b.spike_indices);
        assert_eq!(a.spike_indices.len(), 4); // 2% of 200
    }

    #[test]
    fn spikes_only_touch_labeled_indices() {
        let fixture = spiked_fixture(&SpikeFixtureSpec {
            base: SeasonalFixtureSpec {
                length: 500,
                periods: vec![(24, 5.0)],
                base: 100.0,
                trend_per_step: 0.0,
                noise_sigma: 1.0,
                seed: 5,
            },
            spike_fraction: 0.01,
            spike_sigmas: 8.0,
            seed: 6,
        });
        let labels: std::collections::HashSet<usize> =
            fixture.spike_indices.iter().copied().collect();
        for i in 0..fixture.clean.len() {
            if labels.contains(&i) {
                assert!((fixture.spiked[i] - fixture.clean[i]).abs() >= 8.0);
            } else {
                assert_eq!(fixture.spiked[i], fixture.clean[i]);
            }
        }
    }

    #[test]
    fn heavy_tailed_prices_stay_positive_and_skewed() {
        let prices = heavy_tailed_price_fixture(5000, 48, 9);
        assert!(prices.iter().all(|p| *p > 0.0));
        let mean = prices.iter().sum::<f64>() / prices.len() as f64;
        let mut sorted = prices.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = sorted[sorted.len() / 2];
        assert!(mean > median, "right skew expected: mean {mean} median {median}");
    }

    #[test]
    fn demo_csv_parses_cleanly() {
        let start =
            NaiveDateTime::parse_from_str("2021-01-01T00:00", "%Y-%m-%dT%H:%M").unwrap();
        let body = demo_csv(480, 11, start);
        let (series, exo, report) =
            crate::series::ingest_csv_str(&body, &crate::series::CsvSchema::default()).unwrap();
        assert_eq!(series.len(), 480);
        assert!(report.is_clean());
        assert!(exo.is_holiday.iter().all(|v| *v == 0.0 || *v == 1.0));
    }
}
