//! Autoregressive baseline with differencing and AIC order selection.
//!
//! Stands in for an auto-ARIMA configuration at desk scale: candidate
//! models AR(p) on the d-times differenced series, fit by least squares
//! on a lagged design matrix, ranked by AIC over a (p, d) grid. All
//! candidates are evaluated on a common sample (the same prediction
//! targets) so their AICs are comparable.

#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};

/// Fitted autoregression: y'_t = intercept + sum_j coeff_j * y'_{t-j}
/// on the d-times differenced series y'.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub p: usize,
    pub d: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub aic: f64,
    /// Residual variance (maximum-likelihood estimate RSS/n).
    pub sigma2: f64,
}

/// Candidate grid for order selection.
#[derive(Debug, Clone)]
pub struct AutoArOptions {
    pub p_grid: Vec<usize>,
    pub d_grid: Vec<usize>,
}

impl Default for AutoArOptions {
    fn default() -> Self {
        AutoArOptions {
            p_grid: (1..=8).collect(),
            d_grid: vec![0, 1],
        }
    }
}

/// Applies first differencing d times.
pub fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// One evaluated candidate from the selection grid.
#[derive(Debug, Clone)]
pub struct ArCandidate {
    pub p: usize,
    pub d: usize,
    pub aic: f64,
}

/// Fits every (p, d) candidate and returns the AIC argmin.
///
/// Ties break toward smaller (d, p). Candidates with a singular design
/// are skipped; if every candidate fails the fit errors out. When both
/// d = 0 and d = 1 are in the grid, a variance-ratio screen picks the
/// differencing order first — var(diff(y)) < var(y) marks a stochastic
/// trend — and AIC then selects p within it; comparing raw AIC across
/// differencing orders is not meaningful because the fitted targets
/// differ.
pub fn fit_auto_ar(lookback: &[f64], options: &AutoArOptions) -> Result<ArModel> {
    let (model, _) = fit_auto_ar_detailed(lookback, options)?;
    Ok(model)
}

/// [`fit_auto_ar`] plus the full candidate table, for grid re-checks.
pub fn fit_auto_ar_detailed(
    lookback: &[f64],
    options: &AutoArOptions,
) -> Result<(ArModel, Vec<ArCandidate>)> {
    if options.p_grid.is_empty() || options.d_grid.is_empty() {
        return Err(Error::invalid("grid", "p_grid and d_grid must be non-empty"));
    }
    let max_p = *options.p_grid.iter().max().unwrap();
    let max_d = *options.d_grid.iter().max().unwrap();
    if max_d > 1 {
        return Err(Error::invalid("d_grid", "only d in {0, 1} is supported"));
    }
    let needed = max_p + max_d + 10;
    if lookback.len() < needed {
        return Err(Error::SeriesTooShort {
            got: lookback.len(),
            needed,
            context: "fit_auto_ar".to_string(),
        });
    }

    let selected_d = select_differencing(lookback, &options.d_grid);
    let anchor = max_d + max_p;

    let mut candidates = Vec::new();
    let mut best: Option<ArModel> = None;
    for &d in &options.d_grid {
        let s = difference(lookback, d);
        let sums = LagSums::new(&s, max_p, anchor - d);
        for &p in &options.p_grid {
            let fitted = match fit_ar_at(p, d, &sums) {
                Some(m) => m,
                None => continue, // singular design
            };
            candidates.push(ArCandidate {
                p,
                d,
                aic: fitted.aic,
            });
            if d != selected_d {
                continue;
            }
            let better = match &best {
                None => true,
                Some(b) => {
                    fitted.aic < b.aic || (fitted.aic == b.aic && (d, p) < (b.d, b.p))
                }
            };
            if better {
                best = Some(fitted);
            }
        }
    }
    match best {
        Some(model) => Ok((model, candidates)),
        None => Err(Error::AllCandidatesFailed),
    }
}

/// Variance-ratio differencing screen: difference once when the first
/// difference has lower sample variance than the level series.
fn select_differencing(values: &[f64], d_grid: &[usize]) -> usize {
    let has0 = d_grid.contains(&0);
    let has1 = d_grid.contains(&1);
    match (has0, has1) {
        (true, false) => 0,
        (false, true) => 1,
        _ => {
            let var0 = sample_variance(values);
            let var1 = sample_variance(&difference(values, 1));
            if var1 < var0 {
                1
            } else {
                0
            }
        }
    }
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Cross-products of lagged values over the common sample, shared by
/// every p at one differencing order.
struct LagSums {
    /// g[i][j] = sum over targets of s[t-i] * s[t-j], i, j in 0..=max_p.
    g: Vec<Vec<f64>>,
    /// s1[i] = sum over targets of s[t-i].
    s1: Vec<f64>,
    /// Number of regression rows.
    m: usize,
    mean: f64,
}

impl LagSums {
    /// `first_target` indexes into s; targets run to the end of s.
    fn new(s: &[f64], max_p: usize, first_target: usize) -> LagSums {
        let n = s.len();
        let m = n - first_target;
        let mean = s.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = s.iter().map(|v| v - mean).collect();
        let mut g = vec![vec![0.0; max_p + 1]; max_p + 1];
        let mut s1 = vec![0.0; max_p + 1];
        for i in 0..=max_p {
            for t in first_target..n {
                s1[i] += centered[t - i];
            }
            for j in i..=max_p {
                let mut acc = 0.0;
                for t in first_target..n {
                    acc += centered[t - i] * centered[t - j];
                }
                g[i][j] = acc;
                g[j][i] = acc;
            }
        }
        LagSums { g, s1, m, mean }
    }
}

/// Least-squares AR(p) fit with intercept on the centered series;
/// returns None when the normal equations are singular.
fn fit_ar_at(p: usize, d: usize, sums: &LagSums) -> Option<ArModel> {
    let m = sums.m as f64;
    // Normal equations over [intercept, lag1..lagp] on centered data.
    let dim = p + 1;
    let mut a = vec![vec![0.0; dim]; dim];
    let mut b = vec![0.0; dim];
    a[0][0] = m;
    for i in 1..dim {
        a[0][i] = sums.s1[i];
        a[i][0] = sums.s1[i];
        for j in 1..dim {
            a[i][j] = sums.g[i][j];
        }
    }
    b[0] = sums.s1[0];
    for i in 1..dim {
        b[i] = sums.g[i][0];
    }
    let y_sq = sums.g[0][0];

    let beta = solve_symmetric(a, b.clone())?;

    // RSS = y'y - beta' X'y, exact at the least-squares solution.
    let explained: f64 = beta.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
    let rss = (y_sq - explained).max(0.0);
    let rss_for_aic = rss.max(f64::MIN_POSITIVE * m);
    let aic = m * (rss_for_aic / m).ln() + 2.0 * (p as f64 + 1.0);

    let coefficients = beta[1..].to_vec();
    let coeff_sum: f64 = coefficients.iter().sum();
    // Undo centering: s_t = c + sum phi_j s_{t-j} with c recovered from
    // the centered intercept.
    let intercept = beta[0] + sums.mean * (1.0 - coeff_sum);

    Some(ArModel {
        p,
        d,
        coefficients,
        intercept,
        aic,
        sigma2: rss / sums.m as f64,
    })
}

/// Gaussian elimination with partial pivoting; None on singular input.
fn solve_symmetric(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())?;
        if a[pivot_row][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Multi-step forecast: iterate one-step predictions feeding forecasts
/// back in, then undo differencing by cumulative summation from the
/// last observed level.
pub fn ar_forecast(model: &ArModel, lookback: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if lookback.len() < model.p + model.d {
        return Err(Error::SeriesTooShort {
            got: lookback.len(),
            needed: model.p + model.d,
            context: "ar_forecast".to_string(),
        });
    }
    let s = difference(lookback, model.d);
    let mut buf: Vec<f64> = s[s.len().saturating_sub(model.p)..].to_vec();
    let mut diffed = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut next = model.intercept;
        for (j, phi) in model.coefficients.iter().enumerate() {
            next += phi * buf[buf.len() - 1 - j];
        }
        buf.push(next);
        diffed.push(next);
    }
    if model.d == 0 {
        return Ok(diffed);
    }
    let mut level = *lookback.last().unwrap();
    Ok(diffed
        .into_iter()
        .map(|increment| {
            level += increment;
            level
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn simulate_ar2(n: usize, phi: (f64, f64), sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut y = vec![0.0; n + 200];
        for t in 2..y.len() {
            y[t] = phi.0 * y[t - 1] + phi.1 * y[t - 2] + normal.sample(&mut rng);
        }
        y.split_off(200) // discard burn-in
    }

    fn simulate_random_walk(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut y = vec![0.0; n];
        for t in 1..n {
            y[t] = y[t - 1] + normal.sample(&mut rng);
        }
        y
    }

    #[test]
    fn recovers_ar2_coefficients() {
        let data = simulate_ar2(5000, (0.5, -0.3), 1.0, 42);
        let model = fit_auto_ar(&data, &AutoArOptions::default()).unwrap();
        assert_eq!(model.d, 0);
        assert!(model.p == 2 || model.p == 3, "selected p = {}", model.p);
        assert!((model.coefficients[0] - 0.5).abs() < 0.05);
        assert!((model.coefficients[1] + 0.3).abs() < 0.05);
    }

    #[test]
    fn white_noise_selects_small_order() {
        for seed in [1u64, 2, 3, 4, 5] {
            let mut rng = StdRng::seed_from_u64(seed);
            let normal = Normal::new(0.0, 1.0).unwrap();
            let data: Vec<f64> = (0..3000).map(|_| normal.sample(&mut rng)).collect();
            let model = fit_auto_ar(&data, &AutoArOptions::default()).unwrap();
            assert!(model.p <= 2, "seed {seed}: selected p = {}", model.p);
            for phi in &model.coefficients {
                assert!(phi.abs() < 0.1, "seed {seed}: coefficient {phi}");
            }
        }
    }

    #[test]
    fn random_walk_selects_differencing() {
        let mut hits = 0;
        for seed in [11u64, 12, 13, 14, 15] {
            let data = simulate_random_walk(3000, seed);
            let model = fit_auto_ar(&data, &AutoArOptions::default()).unwrap();
            if model.d == 1 {
                hits += 1;
            }
        }
        assert!(hits >= 4, "d=1 selected only {hits}/5 times");
    }

    #[test]
    fn selected_aic_beats_same_d_competitors() {
        let data = simulate_ar2(4000, (0.5, -0.3), 1.0, 9);
        let (model, candidates) = fit_auto_ar_detailed(&data, &AutoArOptions::default()).unwrap();
        for c in candidates.iter().filter(|c| c.d == model.d) {
            assert!(
                model.aic <= c.aic,
                "candidate (p={}, d={}) has lower AIC: {} < {}",
                c.p,
                c.d,
                c.aic,
                model.aic
            );
        }
    }

    #[test]
    fn constant_series_fails_all_candidates() {
        let data = vec![5.0; 200];
        assert!(matches!(
            fit_auto_ar(&data, &AutoArOptions::default()),
            Err(Error::AllCandidatesFailed)
        ));
    }

    #[test]
    fn forecast_decays_geometrically() {
        let model = ArModel {
            p: 1,
            d: 0,
            coefficients: vec![0.5],
            intercept: 0.0,
            aic: 0.0,
            sigma2: 1.0,
        };
        let lookback = vec![1.0, 2.0, 8.0];
        let forecast = ar_forecast(&model, &lookback, 4).unwrap();
        assert_eq!(forecast, vec![4.0, 2.0, 1.0, 0.5]);
    }

    #[test]
    fn order_zero_forecasts_intercept() {
        let model = ArModel {
            p: 0,
            d: 0,
            coefficients: vec![],
            intercept: 7.25,
            aic: 0.0,
            sigma2: 1.0,
        };
        let forecast = ar_forecast(&model, &[1.0, 2.0], 3).unwrap();
        assert_eq!(forecast, vec![7.25, 7.25, 7.25]);
    }

    #[test]
    fn random_walk_naive_forecast_is_flat() {
        let model = ArModel {
            p: 0,
            d: 1,
            coefficients: vec![],
            intercept: 0.0,
            aic: 0.0,
            sigma2: 1.0,
        };
        let forecast = ar_forecast(&model, &[3.0, 6.0, 9.5], 4).unwrap();
        assert_eq!(forecast, vec![9.5, 9.5, 9.5, 9.5]);
    }

    #[test]
    fn stationary_forecast_converges_to_process_mean() {
        let model = ArModel {
            p: 2,
            d: 0,
            coefficients: vec![0.5, -0.3],
            intercept: 4.0,
            aic: 0.0,
            sigma2: 1.0,
        };
        let mu = 4.0 / (1.0 - 0.5 + 0.3);
        let forecast = ar_forecast(&model, &[10.0, 12.0, 11.0], 200).unwrap();
        let mut prev = f64::INFINITY;
        for h in [10, 50, 100, 199] {
            let dist = (forecast[h] - mu).abs();
            assert!(dist <= prev + 1e-12);
            prev = dist;
        }
        assert!((forecast[199] - mu).abs() < 1e-9);
    }

    #[test]
    fn too_short_lookback_rejected() {
        assert!(fit_auto_ar(&[1.0; 5], &AutoArOptions::default()).is_err());
    }
}
