use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// Straight corridor along +x, centred on y = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub length: f64,
    pub width: f64,
    pub start: [f64; 2],
    pub start_heading: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            length: 40.0,
            width: 6.0,
            start: [2.0, 0.0],
            start_heading: 0.0,
            goal: [38.0, 0.0],
            goal_radius: 2.0,
        }
    }
}

/// A wall segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: Vec2,
    pub b: Vec2,
}

impl Wall {
    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            return self.a;
        }
        let s = ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0);
        self.a + ab * s
    }
}

impl WorldConfig {
    pub fn start(&self) -> Vec2 {
        Vec2::new(self.start[0], self.start[1])
    }

    pub fn goal(&self) -> Vec2 {
        Vec2::new(self.goal[0], self.goal[1])
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn inside(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.length && p.y.abs() <= self.half_width()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0 && self.goal_radius > 0.0) {
            return Err(Error::Config("corridor dimensions and goal radius must be positive".into()));
        }
        if !self.inside(self.start()) || !self.inside(self.goal()) {
            return Err(Error::Config("start and goal must lie inside the corridor".into()));
        }
        Ok(())
    }

    pub fn travel_distance(&self) -> f64 {
        (self.goal() - self.start()).norm()
    }

    pub fn walls(&self) -> [Wall; 2] {
        let h = self.half_width();
        [
            Wall {
                a: Vec2::new(0.0, -h),
                b: Vec2::new(self.length, -h),
            },
            Wall {
                a: Vec2::new(0.0, h),
                b: Vec2::new(self.length, h),
            },
        ]
    }

    /// Local goal handed to the controller: a point `lookahead` metres ahead
    /// of `p` along the start-goal line, never past the goal.
    pub fn carrot(&self, p: Vec2, lookahead: f64) -> Vec2 {
        let s = self.start();
        let g = self.goal();
        let len = self.travel_distance();
        if len == 0.0 {
            return g;
        }
        let dir = (g - s) / len;
        let along = ((p - s).dot(&dir) + lookahead).clamp(0.0, len);
        s + dir * along
    }

    pub fn reached(&self, p: Vec2) -> bool {
        (p - self.goal()).norm() <= self.goal_radius
    }
}
