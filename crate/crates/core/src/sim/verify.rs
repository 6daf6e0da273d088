//! Open-loop consistency sweeps of the localizer and the predictor.

use rand::Rng;

use super::localizer::{self, LocalizerConfig, OdometryIncrement, Regime};
use super::{scenario, sfm, EpisodeConfig, Tracker};
use crate::dynamics::{self, positional_block, Control, RobotState, StateBelief};
use crate::metrics::nees;
use crate::prediction;
use crate::rng::{Purpose, StreamKey};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSize {
    pub tracks: usize,
    pub steps: usize,
}

impl Default for SweepSize {
    fn default() -> Self {
        Self { tracks: 2000, steps: 60 }
    }
}

/// Positional NEES of the localizer over independent dead-reckoning tracks
/// that start from an exact pose and follow randomized gentle turns.
pub fn localizer_sweep(config: &LocalizerConfig, regime: Regime, dt: f64, size: SweepSize, seed: u64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(size.tracks * size.steps);
    for track in 0..size.tracks as u64 {
        let key = StreamKey::new(seed, Purpose::Verification).episode(track);
        let mut script = key.rng();
        let v = script.random_range(0.5..1.0);
        let amp = script.random_range(0.0..0.8);
        let freq = script.random_range(0.2..1.0);
        let mut truth = RobotState::new(0.0, 0.0, script.random_range(-3.0..3.0));
        let mut belief = StateBelief::exact(truth);
        for k in 0..size.steps as u64 {
            let u = Control::new(v, amp * (freq * k as f64 * dt).sin());
            let next = dynamics::step(&truth, &u, dt)?;
            let inc = OdometryIncrement::between(&truth, &next);
            let mut rng = key.cycle(k).with_purpose(Purpose::Localizer).rng();
            belief = localizer::localizer_step(&belief, &inc, config, regime, &mut rng);
            truth = next;
            out.push(nees(belief.mean.position() - truth.position(), &positional_block(&belief.cov)));
        }
    }
    Ok(out)
}

/// Positional NEES of predicted tubes against the realized SFM motion in the
/// c9p9 layout, at every `stride`-th horizon step of predictions issued once
/// per second. The robot stands still at the start pose.
pub fn predictor_sweep(config: &EpisodeConfig, regime: Regime, episodes: usize, duration: f64, stride: usize, seed: u64) -> Result<Vec<f64>> {
    let dt = config.mppi.dt;
    let predictor = config.predictor.resolve(regime, &config.mppi);
    let horizon = predictor.horizon_steps;
    let stride = stride.max(1);
    let world = &config.world;
    let robot = world.start();
    let total = (duration / dt).round() as usize;
    let issue_every = (1.0 / dt).round().max(1.0) as usize;
    let mut out = Vec::new();
    for ep in 0..episodes as u64 {
        let spec = scenario::make_scenario("c9p9", seed.wrapping_add(ep))?;
        let mut peds = scenario::spawn(&spec, world, &config.sfm);
        let mut tracker = Tracker::new(peds.len(), config.predictor.velocity_window, config.sfm.max_speed);
        let mut positions = Vec::with_capacity(total + 1);
        let mut pending = Vec::new();
        for k in 0..=total {
            let tracks = tracker.observe(k as f64 * dt, &peds);
            positions.push(peds.iter().map(|p| p.position).collect::<Vec<_>>());
            if k >= issue_every && k % issue_every == 0 && k + horizon <= total {
                for (tr, p) in tracks.iter().zip(&peds) {
                    pending.push((k, tr.id, prediction::predict(tr, &p.upcoming_goals(), &predictor)?));
                }
            }
            sfm::sfm_step(&mut peds, robot, world, &config.sfm, dt)?;
        }
        for (k, id, tube) in pending {
            for h in (stride..=horizon).step_by(stride) {
                out.push(nees(tube.means[h] - positions[k + h][id], &tube.covs[h]));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_is_deterministic() {
        let cfg = LocalizerConfig::default();
        let size = SweepSize { tracks: 5, steps: 10 };
        let a = localizer_sweep(&cfg, Regime::Standard, 0.05, size, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a, localizer_sweep(&cfg, Regime::Standard, 0.05, size, 9).unwrap());
    }

    #[test]
    fn predictor_sweep_runs() {
        let cfg = EpisodeConfig::default();
        let v = predictor_sweep(&cfg, Regime::Standard, 1, 5.0, 10, 1).unwrap();
        assert!(!v.is_empty());
        assert!(v.iter().all(|x| *x >= 0.0));
    }
}
