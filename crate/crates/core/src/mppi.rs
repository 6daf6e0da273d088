//! Sampling-based receding-horizon controller with soft risk penalty and
//! hard chance-constraint rejection.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, Control, CovarianceTube, RobotState, StateBelief, UtParams};
use crate::occupancy::{FootprintSpec, OccupancyKernel};
use crate::prediction::GaussianTube;
use crate::risk::{self, RiskField, RiskProfile};
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Mat2, Mat3, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Distance penalty on predicted obstacle means, no probabilities.
    Vanilla,
    /// Monte Carlo joint risk with the robot pose treated as exact.
    Dra,
    /// Joint risk with the localization tube folded into the footprint.
    Ducct,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::Dra, Variant::Ducct];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Dra => "dra",
            Variant::Ducct => "ducct",
        }
    }

    pub fn uses_risk(&self) -> bool {
        !matches!(self, Variant::Vanilla)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "dra" => Ok(Variant::Dra),
            "ducct" => Ok(Variant::Ducct),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// How the chance-constraint parameter maps to the rejection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Reject when the step risk exceeds `1 − sigma_cc`.
    #[default]
    Complement,
    /// Reject when the step risk exceeds `sigma_cc` itself.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MppiConfig {
    pub rollouts: usize,
    pub horizon: usize,
    pub dt: f64,
    /// Standard deviations of the control noise (diagonal `Σ_u`).
    pub sigma_v: f64,
    pub sigma_omega: f64,
    pub temperature: f64,
    pub lambda_risk: f64,
    pub sigma_cc: f64,
    pub threshold_mode: ThresholdMode,
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub w_goal: f64,
    pub w_ctrl: f64,
    pub w_speed: f64,
    pub w_term: f64,
    /// Speed reference ramps down linearly inside this distance of the goal.
    pub slowdown_radius: f64,
    /// Robot positional variance used by the `dra` variant.
    pub dra_robot_var: f64,
    pub vanilla_weight: f64,
    pub vanilla_radius: f64,
    /// Free lateral range `[y_min, y_max]`; episodes fill it from the corridor.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lateral_bounds: Option<[f64; 2]>,
    pub w_wall: f64,
    /// Positions closer than this to a bound are penalised.
    pub wall_margin: f64,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            rollouts: 400,
            horizon: 40,
            dt: 0.05,
            sigma_v: 0.2,
            sigma_omega: 0.4,
            temperature: 0.25,
            lambda_risk: 50.0,
            sigma_cc: 0.95,
            threshold_mode: ThresholdMode::Complement,
            v_min: -0.2,
            v_max: 1.0,
            omega_max: 1.82,
            w_goal: 1.0,
            w_ctrl: 0.1,
            w_speed: 0.5,
            w_term: 10.0,
            slowdown_radius: 1.0,
            dra_robot_var: 1e-8,
            vanilla_weight: 50.0,
            vanilla_radius: 1.2,
            lateral_bounds: None,
            w_wall: 200.0,
            wall_margin: 0.5,
        }
    }
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.rollouts == 0 || self.horizon == 0 {
            return err("rollouts and horizon must be at least 1");
        }
        if !(self.dt > 0.0) || !(self.temperature > 0.0) {
            return err("dt and temperature must be positive");
        }
        if !(self.lambda_risk >= 0.0) {
            return err("lambda_risk must be non-negative");
        }
        if !(self.sigma_cc > 0.0 && self.sigma_cc < 1.0) {
            return err("sigma_cc must lie in (0, 1)");
        }
        if !(self.w_wall >= 0.0 && self.wall_margin >= 0.0) {
            return err("wall weight and margin must be non-negative");
        }
        if let Some([lo, hi]) = self.lateral_bounds {
            if !(lo < hi) {
                return err("lateral_bounds must satisfy y_min < y_max");
            }
        }
        if !(self.sigma_v >= 0.0 && self.sigma_omega >= 0.0) {
            return err("control noise must be non-negative");
        }
        if !(self.v_max > 0.0 && self.omega_max > 0.0 && self.v_min <= self.v_max && self.v_min >= -self.v_max) {
            return err("actuator limits inconsistent");
        }
        Ok(())
    }

    pub fn risk_reject_threshold(&self) -> f64 {
        match self.threshold_mode {
            ThresholdMode::Complement => 1.0 - self.sigma_cc,
            ThresholdMode::Literal => self.sigma_cc,
        }
    }

    pub fn control_cov(&self) -> Mat2 {
        Mat2::new(self.sigma_v * self.sigma_v, 0.0, 0.0, self.sigma_omega * self.sigma_omega)
    }

    fn clamp(&self, u: Control) -> Control {
        u.clamped(self.v_min, self.v_max, self.omega_max)
    }
}

/// Monte Carlo risk settings and footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RiskConfig {
    pub n_mc: usize,
    pub l_robot: f64,
    pub l_person: f64,
    /// Use a square of side `2·l_combined` instead of `l_combined`.
    pub circumscribe: bool,
    /// Grid cell size used to bucket risk samples (m).
    pub grid_cell: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            n_mc: 20_000,
            l_robot: 0.3,
            l_person: 0.5,
            circumscribe: false,
            grid_cell: 0.2,
        }
    }
}

impl RiskConfig {
    pub fn footprint(&self) -> Result<FootprintSpec> {
        if self.circumscribe {
            FootprintSpec::circumscribing(self.l_robot, self.l_person)
        } else {
            FootprintSpec::new(self.l_robot, self.l_person)
        }
    }
}

/// Everything a controller needs besides its warm start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerSettings {
    pub variant: Variant,
    pub mppi: MppiConfig,
    pub risk: RiskConfig,
    pub ut: UtParams,
}

impl ControllerSettings {
    pub fn validate(&self) -> Result<()> {
        self.mppi.validate()?;
        self.ut.validate(3)?;
        self.risk.footprint()?;
        if self.variant.uses_risk() && self.risk.n_mc == 0 {
            return Err(Error::Config("n_mc must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampled rollouts of one cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub controls: Vec<Vec<Control>>,
    pub trajectories: Vec<Vec<RobotState>>,
    pub costs: Vec<f64>,
    pub risks: RiskProfile,
    pub rejected: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleDiagnostics {
    pub min_cost: f64,
    pub mean_cost: f64,
    pub effective_sample_size: f64,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutput {
    pub command: Control,
    /// Warm start for the next cycle (`U*` shifted by one step).
    pub nominal: Vec<Control>,
    /// The weighted control sequence `U*` before shifting.
    pub optimal: Vec<Control>,
    pub executed_risk: f64,
    pub all_rejected_fallback: bool,
    pub diagnostics: CycleDiagnostics,
}

/// `K` perturbed copies of `nominal`, each control clamped to the limits.
pub fn sample_controls<R: Rng + ?Sized>(
    nominal: &[Control],
    config: &MppiConfig,
    rollouts: usize,
    rng: &mut R,
) -> Vec<Vec<Control>> {
    (0..rollouts)
        .map(|_| {
            nominal
                .iter()
                .map(|u| {
                    let ev: f64 = rng.sample(StandardNormal);
                    let ew: f64 = rng.sample(StandardNormal);
                    config.clamp(Control::new(u.v + config.sigma_v * ev, u.omega + config.sigma_omega * ew))
                })
                .collect()
        })
        .collect()
}

fn speed_reference(p: Vec2, goal: Vec2, config: &MppiConfig) -> f64 {
    let d = (p - goal).norm();
    config.v_max * (d / config.slowdown_radius).min(1.0)
}

fn wall_cost(y: f64, config: &MppiConfig) -> f64 {
    match config.lateral_bounds {
        Some([lo, hi]) => {
            let excess = (lo + config.wall_margin - y).max(0.0) + (y - hi + config.wall_margin).max(0.0);
            config.w_wall * excess * excess
        }
        None => 0.0,
    }
}

/// Quadratic goal, control-effort, speed-tracking and wall-proximity stage
/// costs plus a quadratic terminal goal cost.
pub fn trajectory_cost(trajectory: &[RobotState], controls: &[Control], goal: Vec2, config: &MppiConfig) -> Result<f64> {
    if trajectory.len() != controls.len() + 1 {
        return Err(Error::Contract(format!(
            "trajectory of {} states for {} controls",
            trajectory.len(),
            controls.len()
        )));
    }
    let inv_v = if config.sigma_v > 0.0 { 1.0 / (config.sigma_v * config.sigma_v) } else { 0.0 };
    let inv_w = if config.sigma_omega > 0.0 { 1.0 / (config.sigma_omega * config.sigma_omega) } else { 0.0 };
    let mut cost = 0.0;
    for (s, u) in trajectory.iter().zip(controls) {
        let p = s.position();
        let v_ref = speed_reference(p, goal, config);
        cost += config.w_goal * (p - goal).norm_squared()
            + config.w_ctrl * (u.v * u.v * inv_v + u.omega * u.omega * inv_w)
            + config.w_speed * (u.v - v_ref).powi(2)
            + wall_cost(p.y, config);
    }
    let last = trajectory[trajectory.len() - 1].position();
    cost += config.w_term * (last - goal).norm_squared();
    Ok(cost)
}

/// Adds `λ_risk·Σₜ riskₖₜ` to each cost and flags rollouts whose largest step
/// risk exceeds the threshold. The `vanilla` variant passes costs through.
pub fn apply_risk(costs: &[f64], risks: &RiskProfile, config: &MppiConfig, variant: Variant) -> Result<(Vec<f64>, Vec<bool>)> {
    if costs.len() != risks.rollouts() {
        return Err(Error::Contract("cost and risk shapes differ".into()));
    }
    if !variant.uses_risk() {
        return Ok((costs.to_vec(), vec![false; costs.len()]));
    }
    let threshold = config.risk_reject_threshold();
    let mut out = Vec::with_capacity(costs.len());
    let mut rejected = Vec::with_capacity(costs.len());
    for (k, &c) in costs.iter().enumerate() {
        let row = risks.row(k);
        out.push(c + config.lambda_risk * row.iter().sum::<f64>());
        rejected.push(row.iter().any(|&r| r > threshold));
    }
    Ok((out, rejected))
}

/// Softmin weights over non-rejected rollouts, shifted by their minimum cost.
/// Returns `None` when every rollout is rejected.
pub fn weights(costs: &[f64], rejected: &[bool], temperature: f64) -> Option<Vec<f64>> {
    let rho = costs
        .iter()
        .zip(rejected)
        .filter(|(_, &r)| !r)
        .map(|(&c, _)| c)
        .fold(f64::INFINITY, f64::min);
    if !rho.is_finite() {
        return None;
    }
    let raw: Vec<f64> = costs
        .iter()
        .zip(rejected)
        .map(|(&c, &r)| if r { 0.0 } else { (-(c - rho) / temperature).exp() })
        .collect();
    let eta: f64 = raw.iter().sum();
    Some(raw.into_iter().map(|w| w / eta).collect())
}

/// Weighted average sequence `U*`, its first control and the shifted warm
/// start (last entry repeated).
pub fn update_and_shift(weights: &[f64], controls: &[Vec<Control>]) -> Result<(Vec<Control>, Control, Vec<Control>)> {
    if weights.len() != controls.len() || controls.is_empty() {
        return Err(Error::Contract("weights and rollouts differ".into()));
    }
    let horizon = controls[0].len();
    if horizon == 0 || controls.iter().any(|c| c.len() != horizon) {
        return Err(Error::Contract("ragged control batch".into()));
    }
    let mut optimal = vec![Control::ZERO; horizon];
    for (w, seq) in weights.iter().zip(controls) {
        if *w == 0.0 {
            continue;
        }
        for (acc, u) in optimal.iter_mut().zip(seq) {
            acc.v += w * u.v;
            acc.omega += w * u.omega;
        }
    }
    let first = optimal[0];
    Ok((optimal.clone(), first, shift(&optimal)))
}

fn shift(seq: &[Control]) -> Vec<Control> {
    let mut warm: Vec<Control> = seq[1..].to_vec();
    warm.push(*seq.last().expect("non-empty sequence"));
    warm
}

/// Per-step rollout positions, `positions[t][k]`.
fn step_positions(trajectories: &[Vec<RobotState>], steps: usize) -> Vec<Vec<Vec2>> {
    (0..=steps)
        .map(|t| trajectories.iter().map(|tr| tr[t].position()).collect())
        .collect()
}

/// Risk profile of the batch under a shared robot covariance tube.
pub fn evaluate_risk(
    trajectories: &[Vec<RobotState>],
    tube: &CovarianceTube,
    obstacles: &[GaussianTube],
    risk_cfg: &RiskConfig,
    footprint: &FootprintSpec,
    key: StreamKey,
) -> Result<RiskProfile> {
    let k = trajectories.len();
    let steps = trajectories.first().map(|t| t.len() - 1).unwrap_or(0);
    if obstacles.is_empty() || k == 0 {
        return Ok(RiskProfile::zeros(k, steps));
    }
    let positions = step_positions(trajectories, steps);
    let half = footprint.half_side();
    let columns: Result<Vec<Vec<f64>>> = (1..=steps)
        .into_par_iter()
        .map(|t| {
            let region = risk::sample_region(&positions[t], half)?;
            let mut rng = key.with_purpose(Purpose::RiskSamples).step(t as u64).rng();
            let samples = risk::draw_samples(region, risk_cfg.n_mc, &mut rng)?;
            let joint = risk::joint_point_occupancy(&samples, obstacles, t)?;
            let kernel = OccupancyKernel::tabulated(&tube.positional(t), half)?;
            let field = RiskField::new(&samples, &joint, kernel, risk_cfg.grid_cell)?;
            Ok(positions[t].iter().map(|&p| field.collision_prob(p)).collect())
        })
        .collect();
    RiskProfile::from_columns(k, &columns?)
}

fn vanilla_penalty(trajectory: &[RobotState], obstacles: &[GaussianTube], config: &MppiConfig) -> f64 {
    let r = config.vanilla_radius;
    let mut pen = 0.0;
    for (t, s) in trajectory.iter().enumerate().skip(1) {
        let p = s.position();
        for o in obstacles {
            let m = o.means[t.min(o.means.len() - 1)];
            let gap = r - (p - m).norm();
            if gap > 0.0 {
                pen += gap * gap;
            }
        }
    }
    config.vanilla_weight * pen
}

/// Robot covariance tube used by a variant in one cycle.
pub fn robot_tube(settings: &ControllerSettings, belief: &StateBelief, prev_nominal: &[Control]) -> Result<CovarianceTube> {
    let steps = settings.mppi.horizon;
    match settings.variant {
        Variant::Ducct => dynamics::ut_propagate_tube(belief, prev_nominal, settings.mppi.dt, &settings.ut),
        Variant::Dra => {
            let v = settings.mppi.dra_robot_var;
            Ok(CovarianceTube::constant(Mat3::new(v, 0.0, 0.0, 0.0, v, 0.0, 0.0, 0.0, 0.0), steps))
        }
        Variant::Vanilla => Ok(CovarianceTube::constant(Mat3::zeros(), steps)),
    }
}

/// One full planning cycle. Also returns the sampled batch.
pub fn control_cycle_detailed(
    belief: &StateBelief,
    obstacles: &[GaussianTube],
    goal: Vec2,
    prev_nominal: &[Control],
    settings: &ControllerSettings,
    key: StreamKey,
) -> Result<(CycleOutput, RolloutBatch)> {
    let cfg = &settings.mppi;
    if prev_nominal.len() != cfg.horizon {
        return Err(Error::Contract(format!(
            "warm start has {} controls, horizon is {}",
            prev_nominal.len(),
            cfg.horizon
        )));
    }
    if let Some(o) = obstacles.iter().find(|o| o.means.len() < cfg.horizon + 1 || o.covs.len() < cfg.horizon + 1) {
        return Err(Error::Contract(format!("obstacle tube of {} steps is shorter than the horizon", o.horizon())));
    }
    let footprint = settings.risk.footprint()?;
    let tube = robot_tube(settings, belief, prev_nominal)?;

    let mut rng = key.with_purpose(Purpose::ControlNoise).rng();
    let controls = sample_controls(prev_nominal, cfg, cfg.rollouts, &mut rng);
    let start = belief.mean;
    let trajectories: Vec<Vec<RobotState>> = controls
        .par_iter()
        .map(|u| dynamics::rollout_mean(&start, u, cfg.dt))
        .collect::<Result<_>>()?;
    let mut costs: Vec<f64> = trajectories
        .par_iter()
        .zip(&controls)
        .map(|(tr, u)| trajectory_cost(tr, u, goal, cfg))
        .collect::<Result<_>>()?;

    let risks = if settings.variant.uses_risk() {
        evaluate_risk(&trajectories, &tube, obstacles, &settings.risk, &footprint, key)?
    } else {
        for (c, tr) in costs.iter_mut().zip(&trajectories) {
            *c += vanilla_penalty(tr, obstacles, cfg);
        }
        RiskProfile::zeros(cfg.rollouts, cfg.horizon)
    };
    let (costs, rejected) = apply_risk(&costs, &risks, cfg, settings.variant)?;
    let first_risks = risks.first_step();

    let min_cost = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_cost = costs.iter().sum::<f64>() / costs.len() as f64;
    let n_rejected = rejected.iter().filter(|&&r| r).count();

    let output = match weights(&costs, &rejected, cfg.temperature) {
        Some(w) => {
            let (optimal, first, warm) = update_and_shift(&w, &controls)?;
            let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
            CycleOutput {
                command: cfg.clamp(first),
                nominal: warm.into_iter().map(|u| cfg.clamp(u)).collect(),
                optimal,
                executed_risk: risk::executed_step_risk(&w, &first_risks)?,
                all_rejected_fallback: false,
                diagnostics: CycleDiagnostics {
                    min_cost,
                    mean_cost,
                    effective_sample_size: ess,
                    rejected: n_rejected,
                },
            }
        }
        None => {
            let best = min_max_risk_rollout(&risks);
            let seq = &controls[best];
            CycleOutput {
                command: cfg.clamp(seq[0]),
                nominal: shift(seq),
                optimal: seq.clone(),
                executed_risk: first_risks[best],
                all_rejected_fallback: true,
                diagnostics: CycleDiagnostics {
                    min_cost,
                    mean_cost,
                    effective_sample_size: 1.0,
                    rejected: n_rejected,
                },
            }
        }
    };
    let batch = RolloutBatch {
        controls,
        trajectories,
        costs,
        risks,
        rejected,
    };
    Ok((output, batch))
}

/// Index of the rollout with the smallest peak step risk (first on ties).
pub fn min_max_risk_rollout(risks: &RiskProfile) -> usize {
    let mut best = 0;
    let mut best_risk = f64::INFINITY;
    for k in 0..risks.rollouts() {
        let r = risks.max_risk(k);
        if r < best_risk {
            best = k;
            best_risk = r;
        }
    }
    best
}

pub fn control_cycle(
    belief: &StateBelief,
    obstacles: &[GaussianTube],
    goal: Vec2,
    prev_nominal: &[Control],
    settings: &ControllerSettings,
    key: StreamKey,
) -> Result<CycleOutput> {
    control_cycle_detailed(belief, obstacles, goal, prev_nominal, settings, key).map(|(out, _)| out)
}

/// Receding-horizon controller; owns only the warm-start sequence.
#[derive(Debug, Clone)]
pub struct Controller {
    settings: ControllerSettings,
    nominal: Vec<Control>,
}

impl Controller {
    pub fn new(settings: ControllerSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            nominal: vec![Control::ZERO; settings.mppi.horizon],
            settings,
        })
    }

    pub fn settings(&self) -> &ControllerSettings {
        &self.settings
    }

    pub fn nominal(&self) -> &[Control] {
        &self.nominal
    }

    /// Runs one cycle and keeps the shifted plan as the next warm start.
    pub fn cycle(&mut self, belief: &StateBelief, obstacles: &[GaussianTube], goal: Vec2, key: StreamKey) -> Result<CycleOutput> {
        let out = control_cycle(belief, obstacles, goal, &self.nominal, &self.settings, key)?;
        self.nominal = out.nominal.clone();
        Ok(out)
    }
}
