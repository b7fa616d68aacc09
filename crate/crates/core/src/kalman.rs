//! Linear Kalman filter with a Huber-weighted update step.
//!
//! The filter alternates the textbook predict (through F, B, Q) and a
//! robustified update: the innovation is standardized, compared to the
//! Huber threshold delta, and the resulting weight w in (0, 1] scales
//! the Kalman gain. Large standardized innovations therefore correct
//! the state by at most delta standard deviations' worth of gain, which
//! keeps transient spikes from dragging the state estimate.
//!
//! Observations are scalar; the state may have any dimension. The
//! default price model is local level with drift: state [level, slope],
//! F = [[1, 1], [0, 1]], H = [1, 0], no control input.

#![allow(clippy::needless_range_loop)]

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Minimal dense matrix, row-major. Just enough linear algebra for the
/// filter recursions; dimensions stay tiny (state_dim <= a handful).
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Mat {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Mat {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn diag(values: &[f64]) -> Mat {
        let mut m = Mat::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    /// (M + M^T) / 2.
    pub fn symmetrized(&self) -> Mat {
        assert_eq!(self.rows, self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let avg = 0.5 * (self.get(i, j) + self.get(j, i));
                out.set(i, j, avg);
                out.set(j, i, avg);
            }
        }
        out
    }

    /// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
    pub fn min_eigenvalue_symmetric(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        if n == 1 {
            return self.get(0, 0);
        }
        let mut a = self.clone();
        for _ in 0..50 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a.get(i, j).abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        (0..n).map(|i| a.get(i, i)).fold(f64::INFINITY, f64::min)
    }
}

/// State-space model with scalar observations.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanModel {
    /// State transition, state_dim x state_dim.
    pub f: Mat,
    /// Observation row, 1 x state_dim.
    pub h: Mat,
    /// Control input, state_dim x control_dim (possibly zero columns).
    pub b: Mat,
    /// Process noise covariance, state_dim x state_dim.
    pub q: Mat,
    /// Measurement noise variance (scalar observation).
    pub r: f64,
}

impl KalmanModel {
    pub fn state_dim(&self) -> usize {
        self.f.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.f.rows();
        if self.f.cols() != n {
            return Err(Error::DimensionMismatch("F must be square".to_string()));
        }
        if self.h.rows() != 1 || self.h.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "H must be 1 x {n}, got {} x {}",
                self.h.rows(),
                self.h.cols()
            )));
        }
        if self.b.rows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B must have {n} rows, got {}",
                self.b.rows()
            )));
        }
        if self.q.rows() != n || self.q.cols() != n {
            return Err(Error::DimensionMismatch("Q must match the state dimension".to_string()));
        }
        if self.r.is_nan() || self.r <= 0.0 {
            return Err(Error::invalid("R", "measurement variance must be > 0"));
        }
        if self.q.symmetrized().min_eigenvalue_symmetric() < -1e-10 {
            return Err(Error::invalid("Q", "must be positive semi-definite"));
        }
        Ok(())
    }

    /// Local level with drift: tracks level and slope of deseasonalized
    /// prices with two states.
    pub fn local_level_with_drift(q_level: f64, q_slope: f64, r: f64) -> KalmanModel {
        KalmanModel {
            f: Mat::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]),
            h: Mat::from_rows(&[&[1.0, 0.0]]),
            b: Mat::zeros(2, 0),
            q: Mat::diag(&[q_level, q_slope]),
            r,
        }
    }

    /// Data-driven noise setup for [`local_level_with_drift`]:
    /// R from the MAD of first differences (robust to the spikes being
    /// hunted), Q at R/100 and R/10,000 for level and slope.
    pub fn auto_from_series(values: &[f64]) -> Result<(KalmanModel, KalmanState)> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                got: values.len(),
                needed: 2,
                context: "auto_from_series".to_string(),
            });
        }
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let sigma = 1.4826 * mad(&diffs);
        let r = (sigma * sigma).max(1e-12);
        let model = KalmanModel::local_level_with_drift(r / 100.0, r / 10_000.0, r);
        let head = &values[..values.len().min(48)];
        let level = median(head);
        let state = KalmanState::new(vec![level, 0.0], Mat::diag(&[r, r / 100.0]))?;
        Ok((model, state))
    }
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    }
}

fn mad(values: &[f64]) -> f64 {
    let m = median(values);
    let deviations: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&deviations)
}

/// State mean and error covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vec<f64>,
    pub cov: Mat,
}

impl KalmanState {
    pub fn new(mean: Vec<f64>, cov: Mat) -> Result<KalmanState> {
        if cov.rows() != mean.len() || cov.cols() != mean.len() {
            return Err(Error::DimensionMismatch(
                "covariance must be state_dim x state_dim".to_string(),
            ));
        }
        Ok(KalmanState { mean, cov })
    }
}

/// How the Huber residual scale is estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleEstimator {
    /// sqrt(S) from the filter's own innovation variance (default).
    PredictedStd,
    /// A fixed externally supplied scale.
    Fixed(f64),
    /// 1.4826 * MAD over a trailing window of innovations, falling back
    /// to sqrt(S) until the window has enough history.
    MadOfInnovations { window: usize },
}

/// Huber threshold and scale policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuberConfig {
    pub delta: f64,
    pub scale_estimator: ScaleEstimator,
}

impl Default for HuberConfig {
    fn default() -> Self {
        // 1.345 is the classical 95%-Gaussian-efficiency constant.
        HuberConfig {
            delta: 1.345,
            scale_estimator: ScaleEstimator::PredictedStd,
        }
    }
}

impl HuberConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(Error::invalid("delta", "must be > 0"));
        }
        if let ScaleEstimator::Fixed(s) = self.scale_estimator {
            if s.is_nan() || s <= 0.0 {
                return Err(Error::invalid("scale", "fixed scale must be > 0"));
            }
        }
        Ok(())
    }
}

/// w = 1 for standardized residuals within delta, delta/|r| beyond it.
pub fn huber_weight(residual: f64, scale: f64, delta: f64) -> Result<f64> {
    if scale.is_nan() || scale <= 0.0 {
        return Err(Error::invalid("scale", format!("must be > 0, got {scale}")));
    }
    let r = residual.abs() / scale;
    Ok(if r <= delta { 1.0 } else { delta / r })
}

/// Predict step: mean through F (plus B u), covariance through
/// F P F^T + Q, re-symmetrized.
pub fn kf_predict(
    state: &KalmanState,
    model: &KalmanModel,
    u: Option<&[f64]>,
) -> Result<KalmanState> {
    let n = model.state_dim();
    if state.mean.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "state has {} entries, model expects {n}",
            state.mean.len()
        )));
    }
    let mut mean = model.f.matvec(&state.mean);
    if let Some(u) = u {
        if u.len() != model.b.cols() {
            return Err(Error::DimensionMismatch(format!(
                "control vector has {} entries, B has {} columns",
                u.len(),
                model.b.cols()
            )));
        }
        for (m, bu) in mean.iter_mut().zip(model.b.matvec(u)) {
            *m += bu;
        }
    }
    let cov = model
        .f
        .matmul(&state.cov)
        .matmul(&model.f.transpose())
        .add(&model.q)
        .symmetrized();
    KalmanState::new(mean, cov)
}

/// One robust update step.
#[derive(Debug, Clone)]
pub struct RobustUpdate {
    pub posterior: KalmanState,
    pub innovation: f64,
    pub weight: f64,
    pub gain: Vec<f64>,
}

/// Huber-weighted measurement update.
///
/// y = z - H x, S = H P H^T + R; the weight from the standardized
/// innovation scales the gain: K = w P H^T / S. With w = 1 this is the
/// textbook update.
pub fn kf_update_robust(
    prior: &KalmanState,
    z: f64,
    model: &KalmanModel,
    huber: &HuberConfig,
) -> Result<RobustUpdate> {
    huber.validate()?;
    let scale_override = match huber.scale_estimator {
        ScaleEstimator::Fixed(s) => Some(s),
        _ => None, // MAD needs history; single updates use sqrt(S)
    };
    kf_update_with_scale(prior, z, model, huber.delta, scale_override)
}

fn kf_update_with_scale(
    prior: &KalmanState,
    z: f64,
    model: &KalmanModel,
    delta: f64,
    scale_override: Option<f64>,
) -> Result<RobustUpdate> {
    if !z.is_finite() {
        return Err(Error::invalid("z", "observation must be finite"));
    }
    let n = model.state_dim();
    let predicted = dot(&h_row(model), &prior.mean);
    let innovation = z - predicted;

    // S = H P H^T + R, scalar.
    let ph_t = prior.cov.matmul(&model.h.transpose()); // n x 1
    let s = dot(&h_row(model), &column(&ph_t)) + model.r;
    if s.is_nan() || s <= 0.0 || !s.is_finite() {
        return Err(Error::SingularInnovation { step: 0 });
    }
    let scale = scale_override.unwrap_or_else(|| s.sqrt());
    let weight = huber_weight(innovation, scale, delta)?;

    let gain: Vec<f64> = column(&ph_t).iter().map(|v| weight * v / s).collect();
    let mean: Vec<f64> = prior
        .mean
        .iter()
        .zip(gain.iter())
        .map(|(m, k)| m + k * innovation)
        .collect();

    // P = (I - K H) P, symmetrized.
    let mut kh = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            kh.set(i, j, gain[i] * model.h.get(0, j));
        }
    }
    let cov = Mat::identity(n)
        .sub(&kh)
        .matmul(&prior.cov)
        .symmetrized();

    Ok(RobustUpdate {
        posterior: KalmanState::new(mean, cov)?,
        innovation,
        weight,
        gain,
    })
}

fn h_row(model: &KalmanModel) -> Vec<f64> {
    (0..model.h.cols()).map(|j| model.h.get(0, j)).collect()
}

fn column(m: &Mat) -> Vec<f64> {
    (0..m.rows()).map(|i| m.get(i, 0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Per-step record of the forward pass.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub observed: f64,
    pub prior_mean: Vec<f64>,
    pub prior_cov: Mat,
    pub posterior_mean: Vec<f64>,
    pub posterior_cov: Mat,
    /// H x_prior: the predicted observation.
    pub predicted_obs: f64,
    /// H P_prior H^T: variance of the predicted observation (excludes R).
    pub predicted_obs_var: f64,
    pub innovation: f64,
    pub weight: f64,
    pub gain: Vec<f64>,
}

/// Full forward-pass trace; one step per observation.
#[derive(Debug, Clone)]
pub struct FilterTrace {
    pub steps: Vec<FilterStep>,
}

impl FilterTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Sequential predict/update over a whole series.
pub fn filter_series(
    values: &[f64],
    model: &KalmanModel,
    huber: &HuberConfig,
    init: &KalmanState,
) -> Result<FilterTrace> {
    model.validate()?;
    huber.validate()?;
    if values.is_empty() {
        return Err(Error::EmptyInput("filter_series".to_string()));
    }
    let mut state = init.clone();
    let mut steps = Vec::with_capacity(values.len());
    let mut recent_innovations: VecDeque<f64> = VecDeque::new();
    let mad_window = match huber.scale_estimator {
        ScaleEstimator::MadOfInnovations { window } => Some(window.max(2)),
        _ => None,
    };

    for (k, &z) in values.iter().enumerate() {
        let wrap = |e: Error| Error::FilterStep {
            step: k,
            source: Box::new(e),
        };
        let prior = kf_predict(&state, model, None).map_err(wrap)?;
        let scale_override = match huber.scale_estimator {
            ScaleEstimator::PredictedStd => None,
            ScaleEstimator::Fixed(s) => Some(s),
            ScaleEstimator::MadOfInnovations { .. } => {
                // Need a reasonable history before trusting the MAD.
                if recent_innovations.len() >= 30 {
                    let inn: Vec<f64> = recent_innovations.iter().copied().collect();
                    let scale = 1.4826 * mad(&inn);
                    if scale > 0.0 {
                        Some(scale)
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
        };
        let update =
            kf_update_with_scale(&prior, z, model, huber.delta, scale_override).map_err(wrap)?;

        if let Some(window) = mad_window {
            recent_innovations.push_back(update.innovation);
            if recent_innovations.len() > window {
                recent_innovations.pop_front();
            }
        }

        let predicted_obs = dot(&h_row(model), &prior.mean);
        let ph_t = prior.cov.matmul(&model.h.transpose());
        let predicted_obs_var = dot(&h_row(model), &column(&ph_t));
        steps.push(FilterStep {
            observed: z,
            prior_mean: prior.mean.clone(),
            prior_cov: prior.cov.clone(),
            posterior_mean: update.posterior.mean.clone(),
            posterior_cov: update.posterior.cov.clone(),
            predicted_obs,
            predicted_obs_var,
            innovation: update.innovation,
            weight: update.weight,
            gain: update.gain,
        });
        state = update.posterior;
    }
    Ok(FilterTrace { steps })
}

/// Writes `index,observed,prior_mean,posterior_mean,prior_var,innovation,weight`.
pub fn write_filter_trace_csv(path: impl AsRef<Path>, trace: &FilterTrace) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("index,observed,prior_mean,posterior_mean,prior_var,innovation,weight\n");
    for (i, step) in trace.steps.iter().enumerate() {
        let posterior_obs = step.posterior_mean[0];
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{}",
            step.observed,
            step.predicted_obs,
            posterior_obs,
            step.predicted_obs_var,
            step.innovation,
            step.weight
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
