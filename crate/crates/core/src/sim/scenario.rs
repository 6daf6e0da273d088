use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use super::sfm::{Pedestrian, SfmParams};
use super::world::WorldConfig;
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result, Vec2};

/// Clearance kept between spawned pedestrians and the corridor walls.
const WALL_CLEARANCE: f64 = 0.6;
/// No pedestrian spawns closer than this to the robot start along x.
const START_CLEARANCE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub n_crossing: usize,
    pub n_passing: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Parses `cXpY` (X crossing, Y passing). The empty corridor is `empty`.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        let bad = || Error::Config(format!("unknown scenario '{name}'"));
        let (n_crossing, n_passing) = if name == "empty" {
            (0, 0)
        } else {
            let rest = name.strip_prefix('c').ok_or_else(bad)?;
            let (c, p) = rest.split_once('p').ok_or_else(bad)?;
            (usize::from_str(c).map_err(|_| bad())?, usize::from_str(p).map_err(|_| bad())?)
        };
        Ok(Self {
            name: name.to_string(),
            n_crossing,
            n_passing,
            seed,
        })
    }

    pub fn total(&self) -> usize {
        self.n_crossing + self.n_passing
    }
}

/// Builds the named scenario; only `c3p3`, `c6p6`, `c9p9` and `empty` exist.
pub fn make_scenario(name: &str, seed: u64) -> Result<ScenarioSpec> {
    match name {
        "c3p3" | "c6p6" | "c9p9" | "empty" => ScenarioSpec::parse(name, seed),
        other => Err(Error::Config(format!("unknown scenario '{other}'"))),
    }
}

/// Initial pedestrians of a scenario: crossers shuttle across the width at
/// staggered stations, passers walk toward −x along lanes and loop end to end.
pub fn spawn(spec: &ScenarioSpec, world: &WorldConfig, sfm: &SfmParams) -> Vec<Pedestrian> {
    let mut rng = StreamKey::new(spec.seed, Purpose::Scenario).rng();
    let h = world.half_width() - WALL_CLEARANCE;
    let x_lo = world.start[0] + START_CLEARANCE;
    let x_hi = world.length - 2.0;
    let mut peds = Vec::with_capacity(spec.total());

    let nc = spec.n_crossing.max(1) as f64;
    for i in 0..spec.n_crossing {
        let slot = (x_hi - x_lo) / nc;
        let x = x_lo + slot * (i as f64 + 0.5) + rng.random_range(-0.3..0.3) * slot;
        let y = rng.random_range(-h..h);
        let up = rng.random_bool(0.5);
        let waypoints = vec![Vec2::new(x, -h), Vec2::new(x, h)];
        let target = usize::from(up);
        peds.push(Pedestrian {
            id: peds.len(),
            position: Vec2::new(x, y),
            velocity: Vec2::zeros(),
            waypoints,
            target,
            desired_speed: sfm.desired_speed,
        });
    }

    let lanes = [-1.5, 0.0, 1.5];
    let np = spec.n_passing.max(1) as f64;
    for i in 0..spec.n_passing {
        let lane = lanes[i % lanes.len()] + rng.random_range(-0.4..0.4);
        let slot = (x_hi - x_lo) / np;
        let x = x_lo + slot * (i as f64 + 0.5) + rng.random_range(-0.3..0.3) * slot;
        let waypoints = vec![Vec2::new(1.0, lane), Vec2::new(world.length - 1.0, lane)];
        peds.push(Pedestrian {
            id: peds.len(),
            position: Vec2::new(x, lane),
            velocity: Vec2::zeros(),
            waypoints,
            target: 0,
            desired_speed: sfm.desired_speed,
        });
    }

    for p in &mut peds {
        let d = p.current_goal() - p.position;
        let n = d.norm();
        if n > 0.0 {
            p.velocity = d * (p.desired_speed / n);
        }
    }
    peds
}
