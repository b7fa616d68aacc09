//! LOESS smoothing and additive season-trend decomposition, applied at
//! one or more periods to isolate non-seasonal deviations.
//!
//! The decomposition follows the classic cycle-subseries procedure:
//! detrend, smooth each cycle subseries (extended one position past
//! each end), low-pass the result with a moving-average cascade plus a
//! LOESS polish, subtract to center the seasonal, then re-estimate the
//! trend from the deseasonalized series. Robust iterations reweight all
//! fits by bisquare weights of the remainder.

#![allow(clippy::needless_range_loop)]

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tuning for one decomposition period.
#[derive(Debug, Clone, PartialEq)]
pub struct StlParams {
    /// Cycle length in steps.
    pub period: usize,
    /// LOESS span for cycle-subseries smoothing (odd, >= 7).
    pub seasonal_span: usize,
    /// LOESS span for the trend component (odd, > period).
    pub trend_span: usize,
    pub inner_iterations: usize,
    pub robust_iterations: usize,
    /// Local polynomial degree, 0 or 1.
    pub loess_degree: usize,
}

fn next_odd(x: f64) -> usize {
    let mut v = x.ceil() as usize;
    if v.is_multiple_of(2) {
        v += 1;
    }
    v.max(3)
}

impl StlParams {
    /// Standard defaults for a period: seasonal span 7, trend span from
    /// the usual guideline 1.5 * period / (1 - 1.5/seasonal_span),
    /// two inner iterations, one robustness iteration, locally linear.
    pub fn for_period(period: usize) -> StlParams {
        let seasonal_span = 15usize;
        let trend_span = next_odd(1.5 * period as f64 / (1.0 - 1.5 / seasonal_span as f64));
        StlParams {
            period,
            seasonal_span,
            trend_span,
            inner_iterations: 2,
            robust_iterations: 1,
            loess_degree: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::invalid("period", "must be >= 2"));
        }
        if self.seasonal_span < 7 || self.seasonal_span.is_multiple_of(2) {
            return Err(Error::invalid("seasonal_span", "must be odd and >= 7"));
        }
        if self.trend_span <= self.period || self.trend_span.is_multiple_of(2) {
            return Err(Error::invalid("trend_span", "must be odd and > period"));
        }
        if self.inner_iterations < 1 {
            return Err(Error::invalid("inner_iterations", "must be >= 1"));
        }
        if self.loess_degree > 1 {
            return Err(Error::invalid("loess_degree", "must be 0 or 1"));
        }
        Ok(())
    }
}

/// Additive components; seasonal + trend + remainder reconstructs the
/// input exactly by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub seasonal: Vec<f64>,
    pub trend: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// Local weighted polynomial fit evaluated at an arbitrary position.
///
/// The neighborhood is the `span` indices nearest to `x`, weighted by
/// tricube of distance scaled to the farthest neighbor, multiplied by
/// the per-point robustness weights when given. Positions outside
/// [0, n) extrapolate from the boundary window.
fn loess_fit_at(
    values: &[f64],
    span: usize,
    degree: usize,
    rho: Option<&[f64]>,
    x: f64,
) -> f64 {
    let n = values.len();
    // A span beyond the data uses every point with the bandwidth
    // inflated by span/n, the classical convention: weights stay
    // positive everywhere instead of collapsing to interpolation.
    let window = span.min(n);
    let half = (window - 1) / 2;
    let center = x.round().max(0.0).min((n - 1) as f64) as usize;
    let start = center.saturating_sub(half).min(n - window);
    let end = start + window;
    let mut d_max = (x - start as f64).abs().max((end as f64 - 1.0 - x).abs());
    if span > n {
        d_max *= span as f64 / n as f64;
    }

    let tricube = |j: usize| -> f64 {
        let t = if d_max > 0.0 {
            ((j as f64 - x).abs() / d_max).min(1.0)
        } else {
            0.0
        };
        let u = 1.0 - t * t * t;
        u * u * u
    };
    let weight = |j: usize| -> f64 {
        match rho {
            Some(r) => tricube(j) * r[j],
            None => tricube(j),
        }
    };

    // Fallback when robustness weights zero out the whole neighborhood:
    // the window median keeps the fit defined without re-admitting the
    // very outliers the weights rejected.
    let window_median = || -> f64 {
        let mut w: Vec<f64> = values[start..end].to_vec();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if w.len() % 2 == 1 {
            w[w.len() / 2]
        } else {
            0.5 * (w[w.len() / 2 - 1] + w[w.len() / 2])
        }
    };

    if degree == 0 {
        let mut sw = 0.0;
        let mut swy = 0.0;
        for j in start..end {
            let w = weight(j);
            sw += w;
            swy += w * values[j];
        }
        return if sw > 0.0 { swy / sw } else { window_median() };
    }

    // Degree 1: weighted least squares on centered abscissae.
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for j in start..end {
        let w = weight(j);
        let dx = j as f64 - x;
        sw += w;
        swx += w * dx;
        swy += w * values[j];
        swxx += w * dx * dx;
        swxy += w * dx * values[j];
    }
    if sw <= 0.0 {
        return window_median();
    }
    let denom = sw * swxx - swx * swx;
    if denom.abs() < 1e-12 * sw * sw.max(swxx) {
        // Degenerate spread (all weight at one abscissa): level fit.
        return swy / sw;
    }
    let slope = (sw * swxy - swx * swy) / denom;
    let intercept = (swy - slope * swx) / sw;
    // Evaluated at dx = 0.
    intercept
}

/// Smooths a series by local weighted polynomial regression.
///
/// Output length equals input length; each point is the fit over its
/// `span` nearest neighbors with tricube distance weights, multiplied
/// by `robustness_weights` when supplied. Weights of all ones produce
/// bit-identical output to omitting them.
pub fn loess_smooth(
    values: &[f64],
    span: usize,
    degree: usize,
    robustness_weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = values.len();
    if span > n {
        return Err(Error::invalid(
            "span",
            format!("span {span} exceeds series length {n}"),
        ));
    }
    if span.is_multiple_of(2) {
        return Err(Error::invalid("span", "must be odd"));
    }
    if degree > 1 {
        return Err(Error::invalid("degree", "must be 0 or 1"));
    }
    if let Some(rho) = robustness_weights {
        if rho.len() != n {
            return Err(Error::LengthMismatch {
                left: rho.len(),
                right: n,
                context: "robustness weights".to_string(),
            });
        }
        if let Some(i) = rho.iter().position(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::invalid(
                "robustness_weights",
                format!("weight at index {i} outside [0, 1]"),
            ));
        }
    }
    // Each output point is independent, so parallel evaluation is
    // bit-identical to sequential for any thread count.
    let fit = |i: usize| loess_fit_at(values, span, degree, robustness_weights, i as f64);
    if n * span >= 262_144 {
        Ok((0..n).into_par_iter().map(fit).collect())
    } else {
        Ok((0..n).map(fit).collect())
    }
}

/// Plain running mean of window `w`; output shortens by w - 1.
fn moving_average(values: &[f64], w: usize) -> Vec<f64> {
    let n = values.len();
    debug_assert!(w >= 1 && w <= n);
    let mut out = Vec::with_capacity(n - w + 1);
    let mut acc: f64 = values[..w].iter().sum();
    out.push(acc / w as f64);
    for i in w..n {
        acc += values[i] - values[i - w];
        out.push(acc / w as f64);
    }
    out
}

/// Low-pass filter of the extended cycle-subseries output: two running
/// means of length `period`, one of length 3, then a LOESS polish.
/// Input length n + 2*period shrinks back to n.
fn low_pass(extended: &[f64], period: usize, degree: usize) -> Result<Vec<f64>> {
    let y1 = moving_average(extended, period);
    let y2 = moving_average(&y1, period);
    let y3 = moving_average(&y2, 3);
    let span = {
        let mut s = period;
        if s.is_multiple_of(2) {
            s += 1;
        }
        s.min(if y3.len().is_multiple_of(2) { y3.len() - 1 } else { y3.len() })
    };
    loess_smooth(&y3, span, degree, None)
}

/// Smooths each cycle subseries and extends it one position before the
/// start and one past the end, producing n + 2*period values.
fn cycle_subseries_smooth(
    detrended: &[f64],
    period: usize,
    seasonal_span: usize,
    degree: usize,
    rho: Option<&[f64]>,
) -> Vec<f64> {
    let n = detrended.len();
    let mut extended = vec![0.0; n + 2 * period];
    for phase in 0..period {
        let sub: Vec<f64> = (phase..n).step_by(period).map(|i| detrended[i]).collect();
        let sub_rho: Option<Vec<f64>> =
            rho.map(|r| (phase..n).step_by(period).map(|i| r[i]).collect());
        let m = sub.len();
        let fit = |x: f64| loess_fit_at(&sub, seasonal_span, degree, sub_rho.as_deref(), x);
        // Position k in the extended frame maps to subseries index k - 1,
        // so k = 0 and k = m + 1 extrapolate one cycle past each end.
        for k in 0..m + 2 {
            extended[phase + k * period] = fit(k as f64 - 1.0);
        }
    }
    extended
}

/// Bisquare robustness weights of the remainder, scaled by six times
/// its median absolute value.
fn bisquare_weights(remainder: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = remainder.iter().map(|r| r.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if abs.len() % 2 == 1 {
        abs[abs.len() / 2]
    } else {
        0.5 * (abs[abs.len() / 2 - 1] + abs[abs.len() / 2])
    };
    let h = 6.0 * median;
    if h <= 0.0 {
        return vec![1.0; remainder.len()];
    }
    remainder
        .iter()
        .map(|r| {
            let u = (r.abs() / h).min(1.0);
            let v = 1.0 - u * u;
            v * v
        })
        .collect()
}

/// Season-trend decomposition at a single period.
pub fn stl_decompose(values: &[f64], params: &StlParams) -> Result<DecompositionResult> {
    params.validate()?;
    let n = values.len();
    let period = params.period;
    if n < 2 * period {
        return Err(Error::SeriesTooShort {
            got: n,
            needed: 2 * period,
            context: format!("stl_decompose at period {period}"),
        });
    }

    let mut seasonal = vec![0.0; n];
    let mut trend = vec![0.0; n];
    let mut rho: Option<Vec<f64>> = None;

    for outer in 0..=params.robust_iterations {
        for _ in 0..params.inner_iterations {
            let detrended: Vec<f64> = values.iter().zip(trend.iter()).map(|(y, t)| y - t).collect();
            let extended = cycle_subseries_smooth(
                &detrended,
                period,
                params.seasonal_span,
                params.loess_degree,
                rho.as_deref(),
            );
            let low = low_pass(&extended, period, 1)?;
            for i in 0..n {
                seasonal[i] = extended[i + period] - low[i];
            }
            let deseasonalized: Vec<f64> =
                values.iter().zip(seasonal.iter()).map(|(y, s)| y - s).collect();
            trend = loess_smooth(
                &deseasonalized,
                params.trend_span.min(if n.is_multiple_of(2) { n - 1 } else { n }),
                params.loess_degree,
                rho.as_deref(),
            )?;
        }
        if outer < params.robust_iterations {
            let remainder: Vec<f64> = (0..n)
                .map(|i| values[i] - seasonal[i] - trend[i])
                .collect();
            rho = Some(bisquare_weights(&remainder));
        }
    }

    let remainder: Vec<f64> = (0..n)
        .map(|i| values[i] - seasonal[i] - trend[i])
        .collect();
    Ok(DecompositionResult {
        seasonal,
        trend,
        remainder,
    })
}

/// Sequential multi-period extraction, shortest period first.
#[derive(Debug, Clone)]
pub struct MultiDecomposition {
    /// Sum of the per-period seasonal components.
    pub seasonal_total: Vec<f64>,
    /// input - seasonal_total; what the Kalman filter consumes.
    pub deseasonalized: Vec<f64>,
    pub per_period: Vec<DecompositionResult>,
}

/// Decomposes at each period in ascending order, subtracting each
/// seasonal before estimating the next.
pub fn multi_seasonal_decompose(values: &[f64], periods: &[usize]) -> Result<MultiDecomposition> {
    let params: Vec<StlParams> = periods.iter().map(|&p| StlParams::for_period(p)).collect();
    multi_seasonal_decompose_with(values, &params)
}

pub fn multi_seasonal_decompose_with(
    values: &[f64],
    params: &[StlParams],
) -> Result<MultiDecomposition> {
    if params.is_empty() {
        return Err(Error::invalid("periods", "at least one period required"));
    }
    for pair in params.windows(2) {
        if pair[0].period >= pair[1].period {
            return Err(Error::invalid("periods", "must be sorted ascending and distinct"));
        }
    }
    let n = values.len();
    let max_period = params.last().unwrap().period;
    if n < 2 * max_period {
        return Err(Error::SeriesTooShort {
            got: n,
            needed: 2 * max_period,
            context: "multi_seasonal_decompose".to_string(),
        });
    }

    // First round is the plain sequential pass (each period sees the
    // input minus the shorter seasonals already extracted). A second
    // round re-fits each period with every other seasonal removed,
    // which undoes the cross-period leakage a single pass leaves when
    // the cycles are close in length.
    let rounds = if params.len() > 1 { 2 } else { 1 };
    let mut seasonals: Vec<Vec<f64>> = vec![vec![0.0; n]; params.len()];
    let mut per_period: Vec<Option<DecompositionResult>> = vec![None; params.len()];
    for _ in 0..rounds {
        for (k, p) in params.iter().enumerate() {
            let mut partial = values.to_vec();
            for (j, s) in seasonals.iter().enumerate() {
                if j != k {
                    for (v, si) in partial.iter_mut().zip(s.iter()) {
                        *v -= si;
                    }
                }
            }
            let d = stl_decompose(&partial, p)?;
            seasonals[k] = d.seasonal.clone();
            per_period[k] = Some(d);
        }
    }
    let per_period: Vec<DecompositionResult> =
        per_period.into_iter().map(|d| d.unwrap()).collect();

    let mut seasonal_total = vec![0.0; n];
    for s in &seasonals {
        for (tot, si) in seasonal_total.iter_mut().zip(s.iter()) {
            *tot += si;
        }
    }
    let deseasonalized: Vec<f64> = values
        .iter()
        .zip(seasonal_total.iter())
        .map(|(y, s)| y - s)
        .collect();
    Ok(MultiDecomposition {
        seasonal_total,
        deseasonalized,
        per_period,
    })
}

/// Writes `index,observed,seasonal,trend,remainder` rows.
pub fn write_decomposition_csv(
    path: impl AsRef<Path>,
    observed: &[f64],
    result: &DecompositionResult,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,observed,seasonal,trend,remainder\n");
    for i in 0..observed.len() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            observed[i], result.seasonal[i], result.trend[i], result.remainder[i]
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    /// Direct weighted-least-squares oracle: explicit design matrix per
    /// point, solved with its own closed-form 2x2 algebra.
    fn wls_oracle_point(values: &[f64], span: usize, i: usize) -> f64 {
        let n = values.len();
        let half = (span - 1) / 2;
        let start = i.saturating_sub(half).min(n - span);
        let end = start + span;
        let x = i as f64;
        let d_max = (x - start as f64).abs().max((end as f64 - 1.0 - x).abs());
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut t0 = 0.0;
        let mut t1 = 0.0;
        for j in start..end {
            let u = ((j as f64 - x).abs() / d_max).min(1.0);
            let w = (1.0 - u.powi(3)).powi(3);
            let dx = j as f64 - x;
            s0 += w;
            s1 += w * dx;
            s2 += w * dx * dx;
            t0 += w * values[j];
            t1 += w * dx * values[j];
        }
        let det = s0 * s2 - s1 * s1;
        (s2 * t0 - s1 * t1) / det
    }

    #[test]
    fn constant_series_is_fixed_point() {
        let values = vec![5.0; 5];
        for span in [3, 5] {
            for degree in [0, 1] {
                let smoothed = loess_smooth(&values, span, degree, None).unwrap();
                for v in &smoothed {
                    assert!((v - 5.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degree_one_reproduces_lines() {
        let values: Vec<f64> = (0..20).map(|i| 2.0 * i as f64).collect();
        for span in [3, 7, 13, 19] {
            let smoothed = loess_smooth(&values, span, 1, None).unwrap();
            for (i, v) in smoothed.iter().enumerate() {
                assert!(
                    (v - values[i]).abs() < 1e-9,
                    "span {span} index {i}: {v} vs {}",
                    values[i]
                );
            }
        }
    }

    #[test]
    fn matches_independent_wls_oracle() {
        let mut rng = StdRng::seed_from_u64(21);
        let values: Vec<f64> = (0..21)
            .map(|i| (2.0 * PI * i as f64 / 10.0).sin() + 0.1 * rng.gen_range(-1.0..1.0))
            .collect();
        let smoothed = loess_smooth(&values, 7, 1, None).unwrap();
        for i in 0..values.len() {
            let want = wls_oracle_point(&values, 7, i);
            assert!(
                (smoothed[i] - want).abs() < 1e-10,
                "index {i}: {} vs oracle {want}",
                smoothed[i]
            );
        }
    }

    #[test]
    fn shift_invariance() {
        let mut rng = StdRng::seed_from_u64(22);
        let values: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + 123.456).collect();
        for degree in [0, 1] {
            let a = loess_smooth(&values, 11, degree, None).unwrap();
            let b = loess_smooth(&shifted, 11, degree, None).unwrap();
            for i in 0..values.len() {
                assert!((b[i] - a[i] - 123.456).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_weights_bit_identical_to_none() {
        let mut rng = StdRng::seed_from_u64(23);
        let values: Vec<f64> = (0..40).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let ones = vec![1.0; values.len()];
        for degree in [0, 1] {
            let a = loess_smooth(&values, 9, degree, None).unwrap();
            let b = loess_smooth(&values, 9, degree, Some(&ones)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_spans_rejected() {
        let values = vec![1.0; 10];
        assert!(loess_smooth(&values, 11, 1, None).is_err());
        assert!(loess_smooth(&values, 4, 1, None).is_err());
    }

    #[test]
    fn pure_sinusoid_leaves_tiny_remainder() {
        let period = 24;
        let n = 8 * period;
        let amplitude = 10.0;
        let values: Vec<f64> = (0..n)
            .map(|i| amplitude * (2.0 * PI * i as f64 / period as f64).sin())
            .collect();
        let result = stl_decompose(&values, &StlParams::for_period(period)).unwrap();
        let max_r = result.remainder.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        assert!(
            max_r < 0.01 * amplitude,
            "remainder {max_r} vs amplitude {amplitude}"
        );
    }

    #[test]
    fn constant_series_decomposes_trivially() {
        let values = vec![7.5; 100];
        let result = stl_decompose(&values, &StlParams::for_period(12)).unwrap();
        for i in 0..values.len() {
            assert!(result.seasonal[i].abs() < 1e-6, "seasonal at {i}");
            assert!((result.trend[i] - 7.5).abs() < 1e-6, "trend at {i}");
            assert!(result.remainder[i].abs() < 1e-6, "remainder at {i}");
        }
    }

    #[test]
    fn recovers_linear_trend_under_seasonality() {
        let period = 24;
        let n = 10 * period;
        let values: Vec<f64> = (0..n)
            .map(|i| 0.05 * i as f64 + 3.0 * (2.0 * PI * i as f64 / period as f64).sin())
            .collect();
        let result = stl_decompose(&values, &StlParams::for_period(period)).unwrap();
        // RMS error of the recovered trend on the interior 80%.
        let lo = n / 10;
        let hi = n - n / 10;
        let mut sq = 0.0;
        let mut truth_sq = 0.0;
        for i in lo..hi {
            let truth = 0.05 * i as f64;
            sq += (result.trend[i] - truth) * (result.trend[i] - truth);
            truth_sq += truth * truth;
        }
        let rel_rms = (sq / truth_sq).sqrt();
        assert!(rel_rms < 0.02, "relative trend RMS {rel_rms}");
    }

    #[test]
    fn additive_identity_is_exact() {
        let mut rng = StdRng::seed_from_u64(27);
        let values: Vec<f64> = (0..200)
            .map(|i| 50.0 + (2.0 * PI * i as f64 / 12.0).sin() + rng.gen_range(-1.0..1.0))
            .collect();
        let result = stl_decompose(&values, &StlParams::for_period(12)).unwrap();
        for i in 0..values.len() {
            let rebuilt = result.seasonal[i] + result.trend[i] + result.remainder[i];
            assert!((rebuilt - values[i]).abs() <= 1e-8 * values[i].abs().max(1.0));
        }
    }

    #[test]
    fn two_tone_signal_deseasonalizes() {
        // Shrunken analogue of the weekly/monthly pair: periods 24 and 96.
        let p1 = 24;
        let p2 = 96;
        let n = 6 * p2;
        let a1 = 5.0;
        let a2 = 3.0;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                100.0
                    + a1 * (2.0 * PI * i as f64 / p1 as f64).sin()
                    + a2 * (2.0 * PI * i as f64 / p2 as f64).cos()
            })
            .collect();
        let multi = multi_seasonal_decompose(&values, &[p1, p2]).unwrap();
        let max_dev = multi
            .deseasonalized
            .iter()
            .map(|v| (v - 100.0).abs())
            .fold(0.0f64, f64::max);
        assert!(
            max_dev < 0.02 * (a1 + a2),
            "max deviation {max_dev} vs combined amplitude {}",
            a1 + a2
        );
        // seasonal_total + deseasonalized = input exactly.
        for i in 0..n {
            assert!(
                (multi.seasonal_total[i] + multi.deseasonalized[i] - values[i]).abs()
                    <= 1e-8 * values[i].abs()
            );
        }
    }

    #[test]
    fn single_period_list_reduces_to_plain_stl() {
        let mut rng = StdRng::seed_from_u64(31);
        let values: Vec<f64> = (0..120)
            .map(|i| (2.0 * PI * i as f64 / 12.0).sin() + rng.gen_range(-0.5..0.5))
            .collect();
        let multi = multi_seasonal_decompose(&values, &[12]).unwrap();
        let single = stl_decompose(&values, &StlParams::for_period(12)).unwrap();
        assert_eq!(multi.per_period.len(), 1);
        assert_eq!(multi.per_period[0], single);
        assert_eq!(multi.seasonal_total, single.seasonal);
    }

    #[test]
    fn unsorted_periods_rejected() {
        let values = vec![0.0; 500];
        assert!(multi_seasonal_decompose(&values, &[96, 24]).is_err());
    }

    #[test]
    fn short_series_rejected() {
        let values = vec![0.0; 20];
        assert!(stl_decompose(&values, &StlParams::for_period(12)).is_err());
    }
}
