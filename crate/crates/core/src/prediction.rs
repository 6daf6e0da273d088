//! Goal-directed pedestrian predictor.
//!
//! The mean walks toward a waypoint sequence at the observed speed; the
//! covariance follows a constant-velocity Kalman prediction on the
//! (position, velocity) state, optionally inflated by `kappa_pred`.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::{Error, Mat2, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianTrack {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub timestamp: f64,
}

/// Predicted mean path and positional covariances over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTube {
    pub means: Vec<Vec2>,
    pub covs: Vec<Mat2>,
}

impl GaussianTube {
    pub fn horizon(&self) -> usize {
        self.means.len().saturating_sub(1)
    }
}

/// How `kappa_pred` enters the covariance recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InflationMode {
    /// `Σₜ₊₁ = κ·(F Σₜ Fᵀ + Q)` at every step.
    #[default]
    PerStep,
    /// Plain CV recursion, then every predicted covariance scaled by κ once.
    OneShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    /// Diagonal initial variance of the 4-state track (m², (m/s)²).
    pub sigma_init: f64,
    pub kappa_pred: f64,
    /// White-acceleration intensity of the CV model (m²/s³).
    pub q_accel: f64,
    /// Waypoint switching radius (m).
    pub r_goal: f64,
    pub horizon_steps: usize,
    pub dt: f64,
    pub inflation: InflationMode,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            sigma_init: 0.01,
            kappa_pred: 1.0,
            q_accel: 0.3,
            r_goal: 0.5,
            horizon_steps: 40,
            dt: 0.05,
            inflation: InflationMode::PerStep,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_init > 0.0) {
            return Err(Error::Config("sigma_init must be positive".into()));
        }
        if !(self.kappa_pred > 0.0) {
            return Err(Error::Config("kappa_pred must be positive".into()));
        }
        if !(self.r_goal > 0.0) {
            return Err(Error::Config("r_goal must be positive".into()));
        }
        if !(self.q_accel >= 0.0) {
            return Err(Error::Config("q_accel must be non-negative".into()));
        }
        if self.horizon_steps == 0 || !(self.dt > 0.0) {
            return Err(Error::Config("predictor horizon and dt must be positive".into()));
        }
        Ok(())
    }
}

/// CV transition matrix on `[px, py, vx, vy]`.
pub fn cv_transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Discretized white-acceleration process noise.
pub fn cv_process_noise(q: f64, dt: f64) -> Matrix4<f64> {
    let (a, b, c) = (dt.powi(3) / 3.0, dt * dt / 2.0, dt);
    Matrix4::new(
        a, 0.0, b, 0.0, //
        0.0, a, 0.0, b, //
        b, 0.0, c, 0.0, //
        0.0, b, 0.0, c,
    ) * q
}

/// One covariance step `κ·(F Σ Fᵀ + Q)`.
pub fn cv_covariance_step(cov: &Matrix4<f64>, f: &Matrix4<f64>, q: &Matrix4<f64>, kappa: f64) -> Matrix4<f64> {
    let next = (f * cov * f.transpose() + q) * kappa;
    (next + next.transpose()) * 0.5
}

fn pos_block(cov: &Matrix4<f64>) -> Mat2 {
    Mat2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)])
}

/// Predicts the Gaussian tube of one pedestrian.
///
/// Waypoints are treated as a cyclic list starting at `goals[0]`; the target
/// advances once the predicted mean is strictly within `r_goal` of it.
pub fn predict(track: &PedestrianTrack, goals: &[Vec2], config: &PredictorConfig) -> Result<GaussianTube> {
    config.validate()?;
    if goals.is_empty() {
        return Err(Error::Config("predictor needs at least one goal".into()));
    }
    let n = config.horizon_steps;
    let dt = config.dt;
    let speed = track.velocity.norm();
    let step_len = speed * dt;

    let mut means = Vec::with_capacity(n + 1);
    let mut mean = track.position;
    let mut target = 0usize;
    let advance = |mean: &Vec2, target: &mut usize| {
        for _ in 0..goals.len() {
            if (goals[*target % goals.len()] - mean).norm() < config.r_goal {
                *target += 1;
            } else {
                break;
            }
        }
    };
    means.push(mean);
    advance(&mean, &mut target);
    for _ in 0..n {
        if step_len > 0.0 {
            let g = goals[target % goals.len()];
            let d = g - mean;
            let dist = d.norm();
            if dist <= step_len {
                mean = g;
            } else {
                mean += d * (step_len / dist);
            }
            advance(&mean, &mut target);
        }
        means.push(mean);
    }

    let f = cv_transition(dt);
    let q = cv_process_noise(config.q_accel, dt);
    let step_kappa = match config.inflation {
        InflationMode::PerStep => config.kappa_pred,
        InflationMode::OneShot => 1.0,
    };
    let mut cov = Matrix4::from_diagonal(&Vector4::repeat(config.sigma_init));
    let mut covs = Vec::with_capacity(n + 1);
    covs.push(pos_block(&cov));
    for _ in 0..n {
        cov = cv_covariance_step(&cov, &f, &q, step_kappa);
        let p = pos_block(&cov);
        covs.push(match config.inflation {
            InflationMode::PerStep => p,
            InflationMode::OneShot => p * config.kappa_pred,
        });
    }
    Ok(GaussianTube { means, covs })
}

/// Result of [`estimate_velocity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEstimate {
    pub velocity: Vec2,
    /// Set when fewer than two usable samples were available.
    pub low_confidence: bool,
}

/// Least-squares velocity from timestamped positions over a sliding window
/// ending at the newest sample, clamped to `v_max`.
///
/// `history` must be ordered by time. If fewer than two samples fall in the
/// window, the two newest samples are used instead.
pub fn estimate_velocity(history: &[(f64, Vec2)], window: f64, v_max: f64) -> VelocityEstimate {
    let zero = VelocityEstimate {
        velocity: Vec2::zeros(),
        low_confidence: true,
    };
    let Some(&(t_last, _)) = history.last() else {
        return zero;
    };
    if history.len() < 2 {
        return zero;
    }
    let mut start = history.partition_point(|(t, _)| *t < t_last - window - 1e-12);
    if history.len() - start < 2 {
        start = history.len() - 2;
    }
    let samples = &history[start..];
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|(t, _)| t).sum::<f64>() / n;
    let p_mean = samples.iter().fold(Vec2::zeros(), |acc, (_, p)| acc + p) / n;
    let mut stt = 0.0;
    let mut stp = Vec2::zeros();
    for (t, p) in samples {
        let dt = t - t_mean;
        stt += dt * dt;
        stp += (p - p_mean) * dt;
    }
    if !(stt > 0.0) {
        return zero;
    }
    let mut v = stp / stt;
    let speed = v.norm();
    if speed > v_max {
        v *= v_max / speed;
    }
    VelocityEstimate {
        velocity: v,
        low_confidence: false,
    }
}
