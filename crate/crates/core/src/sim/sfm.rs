//! Social Force Model pedestrians.

use serde::{Deserialize, Serialize};

use super::world::{Wall, WorldConfig};
use crate::{Error, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SfmParams {
    /// Relaxation time of the goal force (s).
    pub tau: f64,
    pub a_ped: f64,
    pub b_ped: f64,
    pub a_wall: f64,
    pub b_wall: f64,
    pub ped_radius: f64,
    /// Radius the robot presents to pedestrians.
    pub robot_radius: f64,
    pub desired_speed: f64,
    pub max_speed: f64,
    /// Waypoint switching radius.
    pub r_goal: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        Self {
            tau: 0.5,
            a_ped: 2.1,
            b_ped: 0.35,
            a_wall: 5.0,
            b_wall: 0.1,
            ped_radius: 0.3,
            robot_radius: 0.3,
            desired_speed: 1.0,
            max_speed: 1.5,
            r_goal: 0.5,
        }
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<()> {
        let all_pos = [self.tau, self.b_ped, self.b_wall, self.max_speed, self.r_goal]
            .iter()
            .all(|v| *v > 0.0);
        if !all_pos || self.a_ped < 0.0 || self.a_wall < 0.0 || self.desired_speed < 0.0 {
            return Err(Error::Config("invalid social force parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// Cyclic waypoint list.
    pub waypoints: Vec<Vec2>,
    /// Index of the current waypoint.
    pub target: usize,
    pub desired_speed: f64,
}

impl Pedestrian {
    pub fn current_goal(&self) -> Vec2 {
        self.waypoints[self.target % self.waypoints.len()]
    }

    /// Waypoints in visiting order starting from the current one.
    pub fn upcoming_goals(&self) -> Vec<Vec2> {
        let n = self.waypoints.len();
        (0..n).map(|i| self.waypoints[(self.target + i) % n]).collect()
    }
}

/// Exponential repulsion on an agent at `p` from one at `q`:
/// `A·exp((r − d)/B)` along `p − q`.
pub fn repulsion(p: Vec2, q: Vec2, radius_sum: f64, a: f64, b: f64) -> Vec2 {
    let diff = p - q;
    let d = diff.norm();
    if d == 0.0 {
        return Vec2::zeros();
    }
    diff * (a * ((radius_sum - d) / b).exp() / d)
}

fn wall_force(p: Vec2, walls: &[Wall], params: &SfmParams) -> Vec2 {
    walls
        .iter()
        .map(|w| repulsion(p, w.closest_point(p), params.ped_radius, params.a_wall, params.b_wall))
        .sum()
}

fn goal_force(ped: &Pedestrian, params: &SfmParams) -> Vec2 {
    let d = ped.current_goal() - ped.position;
    let n = d.norm();
    let desired = if n > 0.0 { d * (ped.desired_speed / n) } else { Vec2::zeros() };
    (desired - ped.velocity) / params.tau
}

/// Net social force on every pedestrian and the magnitude of the part
/// exerted by the robot, evaluated on the current state.
pub fn forces(peds: &[Pedestrian], robot: Vec2, walls: &[Wall], params: &SfmParams) -> (Vec<Vec2>, Vec<f64>) {
    let r_pp = 2.0 * params.ped_radius;
    let r_pr = params.ped_radius + params.robot_radius;
    let mut total = Vec::with_capacity(peds.len());
    let mut from_robot = Vec::with_capacity(peds.len());
    for (i, p) in peds.iter().enumerate() {
        let mut f = goal_force(p, params) + wall_force(p.position, walls, params);
        for (j, q) in peds.iter().enumerate() {
            if i != j {
                f += repulsion(p.position, q.position, r_pp, params.a_ped, params.b_ped);
            }
        }
        let fr = repulsion(p.position, robot, r_pr, params.a_ped, params.b_ped);
        from_robot.push(fr.norm());
        total.push(f + fr);
    }
    (total, from_robot)
}

/// Advances all pedestrians by one explicit step. Returns the robot-induced
/// force magnitude on each pedestrian before the step.
pub fn sfm_step(peds: &mut [Pedestrian], robot: Vec2, world: &WorldConfig, params: &SfmParams, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidState(format!("dt must be positive, got {dt}")));
    }
    let walls = world.walls();
    let (f, from_robot) = forces(peds, robot, &walls, params);
    let h = world.half_width();
    for (p, a) in peds.iter_mut().zip(f) {
        let mut v = p.velocity + a * dt;
        let speed = v.norm();
        if speed > params.max_speed {
            v *= params.max_speed / speed;
        }
        let mut pos = p.position + v * dt;
        if pos.y.abs() > h {
            pos.y = pos.y.clamp(-h, h);
            v.y = 0.0;
        }
        pos.x = pos.x.clamp(0.0, world.length);
        p.position = pos;
        p.velocity = v;
        if (p.current_goal() - p.position).norm() < params.r_goal {
            p.target = (p.target + 1) % p.waypoints.len();
        }
    }
    Ok(from_robot)
}
