//! Closed-loop corridor simulation.

pub mod localizer;
pub mod scenario;
pub mod sfm;
pub mod verify;
pub mod world;

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use localizer::{LocalizerConfig, OdometryIncrement, Regime};
pub use scenario::{make_scenario, ScenarioSpec};
pub use sfm::{Pedestrian, SfmParams};
pub use world::WorldConfig;

use crate::dynamics::{self, Control, RobotState, StateBelief, UtParams};
use crate::metrics::RunSummary;
use crate::mppi::{Controller, ControllerSettings, MppiConfig, RiskConfig, Variant};
use crate::occupancy::FootprintSpec;
use crate::prediction::{self, GaussianTube, InflationMode, PedestrianTrack, PredictorConfig};
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result, Vec2};

/// Predictor settings not fixed by the calibration regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    /// Overrides the regime's initial variance when set.
    pub sigma_init: Option<f64>,
    /// Overrides the regime's inflation factor when set.
    pub kappa_pred: Option<f64>,
    pub q_accel: f64,
    pub r_goal: f64,
    pub inflation: InflationMode,
    /// Standard deviation of noise added to the waypoints the predictor sees.
    pub goal_noise: f64,
    /// Sliding window of the velocity estimator (s).
    pub velocity_window: f64,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let p = PredictorConfig::default();
        Self {
            sigma_init: None,
            kappa_pred: None,
            q_accel: p.q_accel,
            r_goal: p.r_goal,
            inflation: p.inflation,
            goal_noise: 0.0,
            velocity_window: 0.5,
        }
    }
}

impl PredictorSection {
    pub fn resolve(&self, regime: Regime, mppi: &MppiConfig) -> PredictorConfig {
        let (s, k) = regime.predictor_knobs();
        PredictorConfig {
            sigma_init: self.sigma_init.unwrap_or(s),
            kappa_pred: self.kappa_pred.unwrap_or(k),
            q_accel: self.q_accel,
            r_goal: self.r_goal,
            horizon_steps: mppi.horizon,
            dt: mppi.dt,
            inflation: self.inflation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunLimits {
    pub timeout: f64,
    /// Distance of the controller's local goal ahead of the robot (m).
    pub lookahead: f64,
    /// The run diverges once the robot is this far outside the corridor (m).
    pub divergence_margin: f64,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            timeout: 120.0,
            lookahead: 3.0,
            divergence_margin: 1.0,
        }
    }
}

/// Every module setting an episode depends on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    pub world: WorldConfig,
    pub sfm: SfmParams,
    pub localizer: LocalizerConfig,
    pub predictor: PredictorSection,
    pub mppi: MppiConfig,
    pub risk: RiskConfig,
    pub ut: UtParams,
    pub limits: RunLimits,
}

/// Which controller runs under which calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub scenario: String,
    pub variant: Variant,
    pub loc: Regime,
    pub pred: Regime,
    pub seed: u64,
}

impl RunSpec {
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_loc-{}_pred-{}_seed{}",
            self.scenario, self.variant, self.loc, self.pred, self.seed
        )
    }
}

impl EpisodeConfig {
    pub fn settings(&self, variant: Variant) -> ControllerSettings {
        let mut mppi = self.mppi;
        if mppi.lateral_bounds.is_none() {
            let h = self.world.half_width();
            mppi.lateral_bounds = Some([-h, h]);
        }
        ControllerSettings {
            variant,
            mppi,
            risk: self.risk,
            ut: self.ut,
        }
    }

    pub fn validate(&self, spec: &RunSpec) -> Result<()> {
        self.world.validate()?;
        self.sfm.validate()?;
        self.localizer.validate(spec.loc)?;
        self.predictor.resolve(spec.pred, &self.mppi).validate()?;
        self.settings(spec.variant).validate()?;
        if !(self.limits.timeout > 0.0 && self.limits.lookahead > 0.0 && self.predictor.velocity_window > 0.0) {
            return Err(Error::Config("timeout, lookahead and velocity window must be positive".into()));
        }
        if !(self.predictor.goal_noise >= 0.0) {
            return Err(Error::Config("goal_noise must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Success,
    Timeout,
    Diverged,
}

/// One control period. Poses, belief and labels are those after the step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_psi: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_psi: f64,
    pub sigma_xx: f64,
    pub sigma_xy: f64,
    pub sigma_yy: f64,
    pub sigma_psipsi: f64,
    pub cmd_v: f64,
    pub cmd_w: f64,
    pub executed_risk: f64,
    pub collision: u8,
    pub min_ped_dist: f64,
    pub robot_social_force: f64,
    pub all_rejected_flag: u8,
}

impl StepRecord {
    pub fn true_position(&self) -> Vec2 {
        Vec2::new(self.true_x, self.true_y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub spec: RunSpec,
    pub config: EpisodeConfig,
    pub status: Status,
    pub steps: Vec<StepRecord>,
}

impl RunLog {
    pub fn summary(&self) -> RunSummary {
        RunSummary::from_log(self)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.steps {
            w.serialize(s)?;
        }
        if self.steps.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        w.into_inner().map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Vec<StepRecord>> {
        let mut r = csv::Reader::from_path(path)?;
        r.deserialize().map(|row| row.map_err(Error::from)).collect()
    }

    /// Writes `<stem>.csv` and `<stem>.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let stem = self.spec.stem();
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        fs::write(&csv_path, self.csv_bytes()?)?;
        let mut json = serde_json::to_vec_pretty(&self.summary())?;
        json.push(b'\n');
        fs::write(&json_path, json)?;
        Ok((csv_path, json_path))
    }
}

pub const CSV_HEADER: [&str; 18] = [
    "t",
    "true_x",
    "true_y",
    "true_psi",
    "est_x",
    "est_y",
    "est_psi",
    "sigma_xx",
    "sigma_xy",
    "sigma_yy",
    "sigma_psipsi",
    "cmd_v",
    "cmd_w",
    "executed_risk",
    "collision",
    "min_ped_dist",
    "robot_social_force",
    "all_rejected_flag",
];

/// Deterministic unicycle plant with actuator clamping.
pub fn plant_step(state: &RobotState, command: &Control, config: &MppiConfig) -> Result<RobotState> {
    dynamics::step(state, &command.clamped(config.v_min, config.v_max, config.omega_max), config.dt)
}

/// Distance from the robot to the nearest pedestrian (∞ when there are none).
pub fn min_distance(robot: Vec2, peds: &[Pedestrian]) -> f64 {
    peds.iter().map(|p| (p.position - robot).norm()).fold(f64::INFINITY, f64::min)
}

/// True iff some pedestrian is strictly closer than `l_combined`.
pub fn ground_truth_collision(robot: Vec2, peds: &[Pedestrian], footprint: &FootprintSpec) -> bool {
    min_distance(robot, peds) < footprint.l_combined()
}

struct Tracker {
    window: f64,
    v_max: f64,
    history: Vec<VecDeque<(f64, Vec2)>>,
}

impl Tracker {
    fn new(n: usize, window: f64, v_max: f64) -> Self {
        Self {
            window,
            v_max,
            history: vec![VecDeque::new(); n],
        }
    }

    fn observe(&mut self, t: f64, peds: &[Pedestrian]) -> Vec<PedestrianTrack> {
        peds.iter()
            .zip(&mut self.history)
            .map(|(p, h)| {
                h.push_back((t, p.position));
                while h.front().is_some_and(|(t0, _)| t - *t0 > self.window + 1e-9) {
                    h.pop_front();
                }
                let samples: Vec<(f64, Vec2)> = h.iter().copied().collect();
                let v = prediction::estimate_velocity(&samples, self.window, self.v_max);
                PedestrianTrack {
                    id: p.id,
                    position: p.position,
                    velocity: v.velocity,
                    timestamp: t,
                }
            })
            .collect()
    }
}

fn predictor_goals(p: &Pedestrian, noise: f64, key: StreamKey) -> Vec<Vec2> {
    let goals = p.upcoming_goals();
    if noise == 0.0 {
        return goals;
    }
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = key.step(p.id as u64).rng();
    goals
        .into_iter()
        .map(|g| {
            let dx: f64 = rng.sample(StandardNormal);
            let dy: f64 = rng.sample(StandardNormal);
            g + Vec2::new(dx, dy) * noise
        })
        .collect()
}

fn belief_is_finite(b: &StateBelief) -> bool {
    [b.mean.x, b.mean.y, b.mean.psi].iter().all(|v| v.is_finite()) && b.cov.iter().all(|v| v.is_finite())
}

/// Runs one closed-loop episode at the controller period until the goal
/// region is entered, the timeout passes or the run diverges.
pub fn run_episode(spec: &RunSpec, config: &EpisodeConfig) -> Result<RunLog> {
    config.validate(spec)?;
    let scenario = make_scenario(&spec.scenario, spec.seed)?;
    let world = &config.world;
    let dt = config.mppi.dt;
    let footprint = config.risk.footprint()?;
    let predictor = config.predictor.resolve(spec.pred, &config.mppi);
    let mut peds = scenario::spawn(&scenario, world, &config.sfm);
    let mut tracker = Tracker::new(peds.len(), config.predictor.velocity_window, config.sfm.max_speed);
    let mut controller = Controller::new(config.settings(spec.variant))?;

    let start = world.start();
    let mut truth = RobotState::new(start.x, start.y, world.start_heading);
    let mut belief = StateBelief::exact(truth);
    let root = StreamKey::new(spec.seed, Purpose::ControlNoise);
    let max_steps = (config.limits.timeout / dt).round() as u64;
    let mut steps = Vec::with_capacity(max_steps as usize);
    let mut status = Status::Timeout;

    for k in 0..max_steps {
        let t = k as f64 * dt;
        let tracks = tracker.observe(t, &peds);
        let tubes: Vec<GaussianTube> = tracks
            .iter()
            .zip(&peds)
            .map(|(tr, p)| {
                let goals = predictor_goals(p, config.predictor.goal_noise, root.cycle(k).with_purpose(Purpose::GoalNoise));
                prediction::predict(tr, &goals, &predictor)
            })
            .collect::<Result<_>>()?;
        let local_goal = world.carrot(belief.mean.position(), config.limits.lookahead);
        let out = match controller.cycle(&belief, &tubes, local_goal, root.cycle(k)) {
            Ok(out) => out,
            Err(Error::InvalidState(_)) | Err(Error::Consistency(_)) => {
                status = Status::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };

        let next = plant_step(&truth, &out.command, &config.mppi)?;
        let forces = sfm::sfm_step(&mut peds, truth.position(), world, &config.sfm, dt)?;
        let inc = OdometryIncrement::between(&truth, &next);
        let mut rng = root.cycle(k).with_purpose(Purpose::Localizer).rng();
        belief = localizer::localizer_step(&belief, &inc, &config.localizer, spec.loc, &mut rng);
        truth = next;

        let p = truth.position();
        steps.push(StepRecord {
            t: (k + 1) as f64 * dt,
            true_x: truth.x,
            true_y: truth.y,
            true_psi: truth.psi,
            est_x: belief.mean.x,
            est_y: belief.mean.y,
            est_psi: belief.mean.psi,
            sigma_xx: belief.cov[(0, 0)],
            sigma_xy: belief.cov[(0, 1)],
            sigma_yy: belief.cov[(1, 1)],
            sigma_psipsi: belief.cov[(2, 2)],
            cmd_v: out.command.v,
            cmd_w: out.command.omega,
            executed_risk: out.executed_risk,
            collision: u8::from(ground_truth_collision(p, &peds, &footprint)),
            min_ped_dist: min_distance(p, &peds),
            robot_social_force: forces.iter().sum(),
            all_rejected_flag: u8::from(out.all_rejected_fallback),
        });

        let m = config.limits.divergence_margin;
        let outside = p.y.abs() > world.half_width() + m || p.x < -m || p.x > world.length + m;
        if !belief_is_finite(&belief) || outside {
            status = Status::Diverged;
            break;
        }
        if world.reached(p) {
            status = Status::Success;
            break;
        }
    }

    Ok(RunLog {
        spec: spec.clone(),
        config: *config,
        status,
        steps,
    })
}
