//! Odometry-drift localizer with separately configurable reported and
//! injected noise intensities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, RobotState, StateBelief};
use crate::{Error, Mat3, Result};

/// Calibration regime shared by the localizer and predictor knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[default]
    Standard,
    Under,
    Over,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Standard, Regime::Under, Regime::Over];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Standard => "standard",
            Regime::Under => "under",
            Regime::Over => "over",
        }
    }

    /// Reported motion-noise parameter of the localizer.
    pub fn localizer_alpha(&self) -> f64 {
        match self {
            Regime::Standard => 0.2,
            Regime::Under => 0.4,
            Regime::Over => 1e-3,
        }
    }

    /// `(sigma_init, kappa_pred)` of the predictor.
    pub fn predictor_knobs(&self) -> (f64, f64) {
        match self {
            Regime::Standard => (0.01, 1.0),
            Regime::Under => (0.05, 1.2),
            Regime::Over => (1e-4, 1.0),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Regime::Standard),
            "under" => Ok(Regime::Under),
            "over" => Ok(Regime::Over),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalizerConfig {
    /// Reported noise parameter; `None` takes the regime value.
    pub alpha: Option<f64>,
    /// Injected noise parameter.
    pub true_alpha: f64,
    /// Longitudinal variance per metre travelled, per unit alpha (m²/m).
    pub k_s: f64,
    /// Lateral variance per metre travelled, per unit alpha (m²/m).
    pub k_l: f64,
    /// Heading variance per metre travelled, per unit alpha (rad²/m).
    pub k_psi_s: f64,
    /// Heading variance per radian turned, per unit alpha (rad²/rad).
    pub k_psi_psi: f64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            true_alpha: 0.2,
            k_s: 0.006,
            k_l: 0.002,
            k_psi_s: 1e-5,
            k_psi_psi: 1e-4,
        }
    }
}

impl LocalizerConfig {
    pub fn reported_alpha(&self, regime: Regime) -> f64 {
        self.alpha.unwrap_or_else(|| regime.localizer_alpha())
    }

    pub fn validate(&self, regime: Regime) -> Result<()> {
        let a = self.reported_alpha(regime);
        if !(a > 0.0) || !(self.true_alpha >= 0.0) {
            return Err(Error::Config("localizer alpha must be positive".into()));
        }
        if [self.k_s, self.k_l, self.k_psi_s, self.k_psi_psi].iter().any(|k| !(*k >= 0.0)) {
            return Err(Error::Config("localizer noise gains must be non-negative".into()));
        }
        Ok(())
    }

    /// Variances of `(ds, dl, dψ)` noise for a given increment and alpha.
    pub fn noise_variances(&self, inc: &OdometryIncrement, alpha: f64) -> [f64; 3] {
        let s = inc.ds.hypot(inc.dl);
        [
            alpha * self.k_s * s,
            alpha * self.k_l * s,
            alpha * (self.k_psi_s * s + self.k_psi_psi * inc.dpsi.abs()),
        ]
    }
}

/// Motion expressed in the frame of the earlier pose.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OdometryIncrement {
    pub ds: f64,
    pub dl: f64,
    pub dpsi: f64,
}

impl OdometryIncrement {
    pub fn between(from: &RobotState, to: &RobotState) -> Self {
        let (s, c) = from.psi.sin_cos();
        let dx = to.x - from.x;
        let dy = to.y - from.y;
        Self {
            ds: c * dx + s * dy,
            dl: -s * dx + c * dy,
            dpsi: wrap_angle(to.psi - from.psi),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.ds == 0.0 && self.dl == 0.0 && self.dpsi == 0.0
    }
}

/// Pose composition `x ⊕ u`.
pub fn compose(x: &RobotState, u: &OdometryIncrement) -> RobotState {
    let (s, c) = x.psi.sin_cos();
    RobotState::new(x.x + c * u.ds - s * u.dl, x.y + s * u.ds + c * u.dl, x.psi + u.dpsi)
}

/// Dead-reckons the estimate with a noisy increment and propagates the
/// reported covariance to first order.
pub fn localizer_step<R: Rng + ?Sized>(
    prev: &StateBelief,
    true_motion: &OdometryIncrement,
    config: &LocalizerConfig,
    regime: Regime,
    rng: &mut R,
) -> StateBelief {
    if true_motion.is_zero() {
        return *prev;
    }
    let inj = config.noise_variances(true_motion, config.true_alpha);
    let mut noise = [0.0; 3];
    for (n, v) in noise.iter_mut().zip(inj) {
        let z: f64 = rng.sample(StandardNormal);
        *n = v.sqrt() * z;
    }
    let measured = OdometryIncrement {
        ds: true_motion.ds + noise[0],
        dl: true_motion.dl + noise[1],
        dpsi: true_motion.dpsi + noise[2],
    };
    let mean = compose(&prev.mean, &measured);

    let (s, c) = prev.mean.psi.sin_cos();
    let jx = Mat3::new(
        1.0, 0.0, -s * measured.ds - c * measured.dl,
        0.0, 1.0, c * measured.ds - s * measured.dl,
        0.0, 0.0, 1.0,
    );
    let ju = Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    let rep = config.noise_variances(true_motion, config.reported_alpha(regime));
    let m = Mat3::from_diagonal(&rep.into());
    let cov = jx * prev.cov * jx.transpose() + ju * m * ju.transpose();
    let cov = (cov + cov.transpose()) * 0.5;
    StateBelief { mean, cov }
}
