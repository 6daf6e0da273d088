//! Unicycle motion model, mean rollouts and one-tube unscented covariance
//! propagation.

use std::f64::consts::{PI, TAU};

use nalgebra::{SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Mat2, Mat3, Result, Vec2};

/// Symmetry tolerance for pose covariances.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Smallest eigenvalue still accepted as positive semi-definite.
pub const PSD_TOL: f64 = -1e-12;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading, kept in `(-π, π]`.
    pub psi: f64,
}

impl RobotState {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self {
            x,
            y,
            psi: wrap_angle(psi),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Control {
    /// Linear velocity (m/s).
    pub v: f64,
    /// Angular velocity (rad/s).
    pub omega: f64,
}

impl Control {
    pub const ZERO: Control = Control { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    /// Clamps into `[v_min, v_max] × [-omega_max, omega_max]`.
    pub fn clamped(self, v_min: f64, v_max: f64, omega_max: f64) -> Self {
        Self {
            v: self.v.clamp(v_min, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

/// Gaussian pose belief.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBelief {
    pub mean: RobotState,
    pub cov: Mat3,
}

impl StateBelief {
    pub fn new(mean: RobotState, cov: Mat3) -> Result<Self> {
        validate_cov3(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn exact(mean: RobotState) -> Self {
        Self {
            mean,
            cov: Mat3::zeros(),
        }
    }
}

/// Checks symmetry and positive semi-definiteness of a pose covariance.
pub fn validate_cov3(cov: &Mat3) -> Result<()> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Consistency("non-finite covariance entry".into()));
    }
    let asym = (cov - cov.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::Consistency(format!(
            "covariance asymmetric by {asym:e}"
        )));
    }
    let sym = symmetrize3(cov);
    let min_eig = sym.symmetric_eigenvalues().min();
    if min_eig < PSD_TOL {
        return Err(Error::Consistency(format!(
            "covariance has eigenvalue {min_eig:e}"
        )));
    }
    Ok(())
}

fn symmetrize3(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

/// Shared per-step pose covariance sequence of one planning cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceTube {
    pub covs: Vec<Mat3>,
}

impl CovarianceTube {
    /// A tube that carries the same covariance at every step.
    pub fn constant(cov: Mat3, steps: usize) -> Self {
        Self {
            covs: vec![cov; steps + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.covs.len().saturating_sub(1)
    }

    pub fn positional(&self, t: usize) -> Mat2 {
        positional_block(&self.covs[t])
    }
}

/// Scaled sigma-point parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UtParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Sigma-point weights for a state of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaWeights {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    /// `n + λ`, the spread factor applied to the covariance square root.
    pub spread: f64,
}

impl UtParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!(
                "ut alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(n as f64 + self.kappa > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config("ut kappa/beta out of range".into()));
        }
        Ok(())
    }

    pub fn weights(&self, n: usize) -> SigmaWeights {
        let nf = n as f64;
        let lambda = self.alpha * self.alpha * (nf + self.kappa) - nf;
        let spread = nf + lambda;
        let w = 1.0 / (2.0 * spread);
        let mut mean = vec![w; 2 * n + 1];
        let mut cov = vec![w; 2 * n + 1];
        mean[0] = lambda / spread;
        cov[0] = lambda / spread + (1.0 - self.alpha * self.alpha + self.beta);
        SigmaWeights { mean, cov, spread }
    }
}

/// One step of the unicycle model with explicit Euler integration.
pub fn step(state: &RobotState, control: &Control, dt: f64) -> Result<RobotState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!("dt must be positive, got {dt}")));
    }
    if !state.is_finite() || !control.v.is_finite() || !control.omega.is_finite() {
        return Err(Error::InvalidState(format!(
            "non-finite state or control: {state:?} {control:?}"
        )));
    }
    Ok(step_unchecked(state, control, dt))
}

#[inline]
pub(crate) fn step_unchecked(s: &RobotState, u: &Control, dt: f64) -> RobotState {
    let (sin, cos) = s.psi.sin_cos();
    RobotState {
        x: s.x + u.v * cos * dt,
        y: s.y + u.v * sin * dt,
        psi: wrap_angle(s.psi + u.omega * dt),
    }
}

/// Rolls the model forward under `controls`; returns `controls.len() + 1`
/// states starting with `start`.
pub fn rollout_mean(start: &RobotState, controls: &[Control], dt: f64) -> Result<Vec<RobotState>> {
    if controls.is_empty() {
        return Err(Error::Contract("rollout needs at least one control".into()));
    }
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(*start);
    let mut s = *start;
    for u in controls {
        s = step(&s, u, dt)?;
        out.push(s);
    }
    Ok(out)
}

/// Top-left 2×2 block, symmetrized. Position/heading correlations are dropped.
pub fn positional_block(cov3: &Mat3) -> Mat2 {
    let xy = 0.5 * (cov3[(0, 1)] + cov3[(1, 0)]);
    Mat2::new(cov3[(0, 0)], xy, xy, cov3[(1, 1)])
}

/// Matrix square root `S` with `S Sᵀ = cov`, through the symmetric
/// eigendecomposition so that singular covariances are handled.
fn psd_sqrt(cov: &Mat3) -> Result<Mat3> {
    let eig = SymmetricEigen::new(symmetrize3(cov));
    let mut s = eig.eigenvectors;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < PSD_TOL {
            return Err(Error::Consistency(format!(
                "covariance has eigenvalue {lambda:e}"
            )));
        }
        let root = lambda.max(0.0).sqrt();
        for r in 0..3 {
            s[(r, i)] *= root;
        }
    }
    Ok(s)
}

/// Propagates the belief covariance along `controls` with a prediction-only
/// unscented transform and no process noise.
///
/// The 2n+1 sigma points are drawn once from the initial belief and pushed
/// through [`step`]; at every step the covariance is recombined from the
/// propagated points. Residuals are taken relative to the first (central)
/// point so that a zero-covariance belief yields exactly zero covariances,
/// and heading residuals are wrapped.
pub fn ut_propagate_tube(
    belief: &StateBelief,
    controls: &[Control],
    dt: f64,
    params: &UtParams,
) -> Result<CovarianceTube> {
    validate_cov3(&belief.cov)?;
    params.validate(3)?;
    if controls.is_empty() {
        return Err(Error::Contract("tube propagation needs controls".into()));
    }
    let weights = params.weights(3);
    let root = psd_sqrt(&(belief.cov * weights.spread))?;
    let m = belief.mean;
    let mut points = Vec::with_capacity(7);
    points.push(m);
    for sign in [1.0, -1.0] {
        for i in 0..3 {
            points.push(RobotState {
                x: m.x + sign * root[(0, i)],
                y: m.y + sign * root[(1, i)],
                psi: wrap_angle(m.psi + sign * root[(2, i)]),
            });
        }
    }
    // order: 0, +0, +1, +2, -0, -1, -2
    let mut covs = Vec::with_capacity(controls.len() + 1);
    covs.push(belief.cov);
    for u in controls {
        for p in points.iter_mut() {
            *p = step(p, u, dt)?;
        }
        let cov = recombine(&points, &weights);
        validate_cov3(&cov)?;
        covs.push(cov);
    }
    Ok(CovarianceTube { covs })
}

fn recombine(points: &[RobotState], w: &SigmaWeights) -> Mat3 {
    let r = points[0];
    let deltas: Vec<Vector3<f64>> = points
        .iter()
        .map(|p| Vector3::new(p.x - r.x, p.y - r.y, wrap_angle(p.psi - r.psi)))
        .collect();
    let mut mx = 0.0;
    let mut my = 0.0;
    let mut sin_sum = 0.0;
    let mut cos_sum = 0.0;
    for (d, &wm) in deltas.iter().zip(&w.mean) {
        mx += wm * d.x;
        my += wm * d.y;
        let (s, c) = d.z.sin_cos();
        sin_sum += wm * s;
        cos_sum += wm * c;
    }
    let mpsi = sin_sum.atan2(cos_sum);
    let mut cov = Mat3::zeros();
    for (d, &wc) in deltas.iter().zip(&w.cov) {
        let e = Vector3::new(d.x - mx, d.y - my, wrap_angle(d.z - mpsi));
        cov += wc * e * e.transpose();
    }
    symmetrize3(&cov)
}
