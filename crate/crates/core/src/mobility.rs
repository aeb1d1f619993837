//! Random-waypoint motion and position queries.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SimTime;
use crate::NodeId;

/// Lower bound on a drawn leg speed when the nominal speed is non-zero.
pub const MIN_LEG_SPEED: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityConfig {
    pub area_x: f64,
    pub area_y: f64,
    pub node_count: usize,
    pub nominal_speed: f64,
    pub speed_margin: f64,
    pub pause: f64,
    pub duration: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig {
            area_x: 600.0,
            area_y: 300.0,
            node_count: 50,
            nominal_speed: 1.0,
            speed_margin: 1.0,
            pause: 10.0,
            duration: 1000.0,
        }
    }
}

impl MobilityConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), MobilityError> {
        let bad = |key: &'static str| Err(MobilityError::InvalidConfig(key));
        if !(self.area_x > 0.0) {
            return bad("area_x");
        }
        if !(self.area_y > 0.0) {
            return bad("area_y");
        }
        if self.node_count < 2 {
            return bad("node_count");
        }
        if !(self.nominal_speed >= 0.0) || !self.nominal_speed.is_finite() {
            return bad("speed");
        }
        if !(self.speed_margin >= 0.0) || !self.speed_margin.is_finite() {
            return bad("speed_margin");
        }
        if !(self.pause >= 0.0) {
            return bad("pause");
        }
        if !(self.duration > 0.0) {
            return bad("duration");
        }
        Ok(())
    }

    /// Closed interval leg speeds are drawn from, or `None` for static nodes.
    pub fn speed_interval(&self) -> Option<(f64, f64)> {
        if self.nominal_speed == 0.0 {
            return None;
        }
        let lo = (self.nominal_speed - self.speed_margin).max(MIN_LEG_SPEED);
        let hi = (self.nominal_speed + self.speed_margin).max(lo);
        Some((lo, hi))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MobilityError {
    #[error("invalid mobility setting `{0}`")]
    InvalidConfig(&'static str),
    #[error("time {t}s outside trace span [0, {duration}]s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Straight-line movement starting at `start_time`, followed by a pause at
/// `end` that lasts until the next leg begins. `speed == 0` marks a static
/// node that sits at `start` (== `end`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub start_time: f64,
    pub start: Position,
    pub end: Position,
    pub speed: f64,
}

impl Leg {
    pub fn travel_time(&self) -> f64 {
        if self.speed == 0.0 {
            0.0
        } else {
            self.start.distance(&self.end) / self.speed
        }
    }

    pub fn arrival_time(&self) -> f64 {
        self.start_time + self.travel_time()
    }

    fn position(&self, t: f64) -> Position {
        let travel = self.travel_time();
        let elapsed = t - self.start_time;
        if travel == 0.0 || elapsed >= travel {
            return self.end;
        }
        let f = (elapsed / travel).max(0.0);
        Position::new(
            self.start.x + (self.end.x - self.start.x) * f,
            self.start.y + (self.end.y - self.start.y) * f,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    duration: f64,
    legs: Vec<Vec<Leg>>,
}

impl MobilityTrace {
    /// Frozen topology: every node stays at its given position.
    pub fn fixed(positions: &[Position], duration: f64) -> Self {
        let legs = positions
            .iter()
            .map(|&p| vec![Leg { start_time: 0.0, start: p, end: p, speed: 0.0 }])
            .collect();
        MobilityTrace { duration, legs }
    }

    /// Builds a trace from explicit legs; each node's legs must be ordered by start time
    /// and the first must start at 0.
    pub fn from_legs(legs: Vec<Vec<Leg>>, duration: f64) -> Self {
        MobilityTrace { duration, legs }
    }

    pub fn node_count(&self) -> usize {
        self.legs.len()
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn legs(&self, node: NodeId) -> &[Leg] {
        &self.legs[node.index()]
    }

    pub fn position_at(&self, node: NodeId, t: SimTime) -> Result<Position, MobilityError> {
        self.position_at_secs(node, t.as_secs_f64())
    }

    pub fn position_at_secs(&self, node: NodeId, t: f64) -> Result<Position, MobilityError> {
        if !(0.0..=self.duration).contains(&t) {
            return Err(MobilityError::OutOfRange { t, duration: self.duration });
        }
        let legs = self.legs.get(node.index()).ok_or(MobilityError::UnknownNode(node))?;
        let i = legs.partition_point(|l| l.start_time <= t).max(1) - 1;
        Ok(legs[i].position(t))
    }

    /// Positions of every node at `t`, clamping `t` into the trace span.
    pub fn snapshot(&self, t: SimTime) -> Vec<Position> {
        let ts = t.as_secs_f64().min(self.duration);
        (0..self.legs.len())
            .map(|i| self.position_at_secs(NodeId(i as u32), ts).expect("clamped"))
            .collect()
    }

    /// One line per leg: `node t_start x0 y0 x1 y1 speed`.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for (node, legs) in self.legs.iter().enumerate() {
            for l in legs {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {} {} {}",
                    node, l.start_time, l.start.x, l.start.y, l.end.x, l.end.y, l.speed
                );
            }
        }
        out
    }
}

/// Random waypoint: uniform start position, then repeatedly pick a uniform
/// destination, travel there at a uniformly drawn speed and pause.
pub fn generate_trace<R: Rng>(cfg: &MobilityConfig, rng: &mut R) -> Result<MobilityTrace, MobilityError> {
    cfg.validate()?;
    let uniform_point = |rng: &mut R| {
        Position::new(rng.random_range(0.0..=cfg.area_x), rng.random_range(0.0..=cfg.area_y))
    };
    let initial: Vec<Position> = (0..cfg.node_count).map(|_| uniform_point(rng)).collect();
    let Some((lo, hi)) = cfg.speed_interval() else {
        return Ok(MobilityTrace::fixed(&initial, cfg.duration));
    };

    let mut legs = Vec::with_capacity(cfg.node_count);
    for start in initial {
        let mut node_legs = Vec::new();
        let mut t = 0.0;
        let mut pos = start;
        while t < cfg.duration {
            let dest = uniform_point(rng);
            let speed = rng.random_range(lo..=hi);
            let leg = Leg { start_time: t, start: pos, end: dest, speed };
            t = leg.arrival_time() + cfg.pause;
            pos = dest;
            node_legs.push(leg);
        }
        legs.push(node_legs);
    }
    Ok(MobilityTrace { duration: cfg.duration, legs })
}
