//! Simulated robots that close the loop: they sense the virtual environment
//! under their bodies and move.
//!
//! The behaviors are minimal standard models, not reproductions of any
//! particular robot firmware:
//!
//! - `RandomWalkDeposit`: correlated random walk that lays pheromone.
//! - `GradientFollow`: bang-bang turning toward the stronger antenna.
//! - `Disperse`: turning away from pheromone while laying it, which spreads
//!   a cluster over the arena. No random turning.
//! - `TileVote`: adopts the (noisy) tile label beneath it as its opinion.
//!
//! Every robot senses the same pre-tick snapshot and draws randomness from a
//! stream keyed by `(seed, tick, robot id)`, so a swarm step is independent
//! of list order.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::field::{Field, TileFrame};
use crate::geom::{wrap_angle, Point};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    RandomWalkDeposit,
    GradientFollow,
    Disperse,
    TileVote,
}

impl Behavior {
    pub fn index(self) -> usize {
        match self {
            Behavior::RandomWalkDeposit => 0,
            Behavior::GradientFollow => 1,
            Behavior::Disperse => 2,
            Behavior::TileVote => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Robot {
    pub id: u64,
    /// World mm.
    pub pos: Point,
    /// Radians in `[-pi, pi)`.
    pub heading: f64,
    /// mm/s
    pub speed: f64,
    /// mm
    pub radius: f64,
    pub opinion: u8,
    pub behavior: Behavior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorParams {
    /// Random-walk turning noise, rad/√s.
    pub sigma_turn: f64,
    /// Pheromone laid per second by depositing behaviors.
    pub deposit_rate: f64,
    /// Turn rate for gradient steering, rad/s.
    pub k_turn: f64,
    /// Antenna half-angle, rad.
    pub sensor_angle: f64,
    /// Antenna distance ahead of the centre, mm.
    pub sensor_offset: f64,
    pub sensor_noise_sigma: f64,
    /// Probability a TileVote robot adopts the opposite of what it sees.
    pub opinion_noise: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            sigma_turn: 0.8,
            deposit_rate: 1.0,
            k_turn: 2.0,
            sensor_angle: std::f64::consts::FRAC_PI_4,
            sensor_offset: 25.0,
            sensor_noise_sigma: 0.0,
            opinion_noise: 0.0,
        }
    }
}

impl BehaviorParams {
    pub fn validate(&self) -> Result<(), String> {
        let non_neg = [
            ("sigma_turn", self.sigma_turn),
            ("deposit_rate", self.deposit_rate),
            ("k_turn", self.k_turn),
            ("sensor_offset", self.sensor_offset),
            ("sensor_noise_sigma", self.sensor_noise_sigma),
        ];
        for (name, v) in non_neg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.opinion_noise) {
            return Err(format!("opinion_noise must be in [0,1], got {}", self.opinion_noise));
        }
        Ok(())
    }
}

/// Axis-aligned arena `[0, width] × [0, height]` in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
}

impl Arena {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    /// Range a body of `radius` can occupy along one axis.
    fn span(extent: f64, radius: f64) -> (f64, f64) {
        if 2.0 * radius >= extent {
            (extent / 2.0, extent / 2.0)
        } else {
            (radius, extent - radius)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub center_value: f64,
    pub left_value: f64,
    pub right_value: f64,
    pub tile_label: u8,
}

pub fn antenna_points(robot: &Robot, params: &BehaviorParams) -> (Point, Point) {
    let at = |a: f64| {
        Point::new(
            robot.pos.x + params.sensor_offset * a.cos(),
            robot.pos.y + params.sensor_offset * a.sin(),
        )
    };
    (
        at(robot.heading + params.sensor_angle),
        at(robot.heading - params.sensor_angle),
    )
}

fn clamp_to_field(field: &Field, p: Point) -> Point {
    Point::new(
        p.x.clamp(0.0, field.width_mm()),
        p.y.clamp(0.0, field.height_mm()),
    )
}

/// Sample the field at the body centre and both antennae, and read the
/// displayed tile label under the robot.
pub fn sense_robot(
    robot: &Robot,
    field: &Field,
    tiles: &TileFrame,
    t: u64,
    params: &BehaviorParams,
    seed: u64,
) -> SensorReading {
    let (l, r) = antenna_points(robot, params);
    let sample = |p: Point| field.sample(clamp_to_field(field, p)).unwrap_or(0.0);
    let mut vals = [sample(robot.pos), sample(l), sample(r)];
    if params.sensor_noise_sigma > 0.0 {
        let mut g = rng::stream_rng(rng::key(&[seed, 0x5E45, t, robot.id]));
        for v in &mut vals {
            let n: f64 = StandardNormal.sample(&mut g);
            *v = (*v + params.sensor_noise_sigma * n).max(0.0);
        }
    }
    SensorReading {
        center_value: vals[0],
        left_value: vals[1],
        right_value: vals[2],
        tile_label: tiles.label_at(robot.pos),
    }
}

/// Pheromone to lay at a position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deposit {
    pub pos: Point,
    pub amount: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Move forward by `speed·dt`, reflecting the heading specularly at walls.
fn advance(robot: &mut Robot, dt: f64, arena: &Arena) {
    use std::f64::consts::PI;
    let step = robot.speed * dt;
    let mut x = robot.pos.x + step * robot.heading.cos();
    let mut y = robot.pos.y + step * robot.heading.sin();
    let mut h = robot.heading;
    let (xl, xh) = Arena::span(arena.width, robot.radius);
    let (yl, yh) = Arena::span(arena.height, robot.radius);
    if x < xl {
        x = 2.0 * xl - x;
        h = PI - h;
    } else if x > xh {
        x = 2.0 * xh - x;
        h = PI - h;
    }
    if y < yl {
        y = 2.0 * yl - y;
        h = -h;
    } else if y > yh {
        y = 2.0 * yh - y;
        h = -h;
    }
    robot.pos = Point::new(x.clamp(xl, xh), y.clamp(yl, yh));
    robot.heading = wrap_angle(h);
}

/// One behavior update. Returns the moved robot and the pheromone it lays
/// this tick, if any.
pub fn step_robot<R: Rng + ?Sized>(
    robot: &Robot,
    reading: &SensorReading,
    dt: f64,
    params: &BehaviorParams,
    arena: &Arena,
    rng: &mut R,
) -> (Robot, Option<f64>) {
    let mut r = robot.clone();
    let random_turn = |rng: &mut R| {
        if params.sigma_turn > 0.0 {
            let n: f64 = StandardNormal.sample(rng);
            params.sigma_turn * dt.sqrt() * n
        } else {
            0.0
        }
    };
    let deposit = match r.behavior {
        Behavior::RandomWalkDeposit => {
            r.heading = wrap_angle(r.heading + random_turn(rng));
            Some(params.deposit_rate * dt)
        }
        Behavior::GradientFollow => {
            let turn = params.k_turn * sign(reading.left_value - reading.right_value) * dt;
            r.heading = wrap_angle(r.heading + turn);
            None
        }
        Behavior::Disperse => {
            let turn = -params.k_turn * sign(reading.left_value - reading.right_value) * dt;
            r.heading = wrap_angle(r.heading + turn);
            Some(params.deposit_rate * dt)
        }
        Behavior::TileVote => {
            let flip = params.opinion_noise > 0.0 && rng.gen::<f64>() < params.opinion_noise;
            r.opinion = reading.tile_label ^ flip as u8;
            r.heading = wrap_angle(r.heading + random_turn(rng));
            None
        }
    };
    if dt > 0.0 {
        advance(&mut r, dt, arena);
    }
    (r, deposit)
}

/// Push overlapping bodies apart along their centre line, equal split,
/// at most `max_iters` sweeps. `robots` must be sorted by id.
fn resolve_overlaps(robots: &mut [Robot], arena: &Arena, max_iters: usize) {
    for _ in 0..max_iters {
        let mut moved = false;
        for i in 0..robots.len() {
            for j in i + 1..robots.len() {
                let (a, b) = (robots[i].pos, robots[j].pos);
                let min = robots[i].radius + robots[j].radius;
                let d = a.dist(b);
                if d >= min {
                    continue;
                }
                let (ux, uy) = if d > 1e-12 {
                    ((b.x - a.x) / d, (b.y - a.y) / d)
                } else {
                    (1.0, 0.0)
                };
                let push = (min - d) / 2.0;
                let clamp = |p: Point, r: f64| {
                    let (xl, xh) = Arena::span(arena.width, r);
                    let (yl, yh) = Arena::span(arena.height, r);
                    Point::new(p.x.clamp(xl, xh), p.y.clamp(yl, yh))
                };
                robots[i].pos = clamp(Point::new(a.x - ux * push, a.y - uy * push), robots[i].radius);
                robots[j].pos = clamp(Point::new(b.x + ux * push, b.y + uy * push), robots[j].radius);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

pub const OVERLAP_ITERATIONS: usize = 8;

/// Sense and step every robot against the same field snapshot, then resolve
/// overlaps. Output robots keep the input order; deposits are ordered by
/// robot id and are not applied to `field`.
#[allow(clippy::too_many_arguments)]
pub fn step_swarm(
    robots: &[Robot],
    field: &Field,
    tiles: &TileFrame,
    t: u64,
    dt: f64,
    seed: u64,
    params: &BehaviorParams,
    arena: &Arena,
) -> (Vec<Robot>, Vec<Deposit>) {
    let mut order: Vec<usize> = (0..robots.len()).collect();
    order.sort_by_key(|&i| robots[i].id);

    let mut next = Vec::with_capacity(robots.len());
    let mut deposits = Vec::new();
    for &i in &order {
        let robot = &robots[i];
        let reading = sense_robot(robot, field, tiles, t, params, seed);
        let mut g = rng::stream_rng(rng::key(&[seed, 0x57E9, t, robot.id]));
        let (moved, amount) = step_robot(robot, &reading, dt, params, arena, &mut g);
        if let Some(amount) = amount {
            if amount > 0.0 {
                deposits.push(Deposit {
                    pos: robot.pos,
                    amount,
                });
            }
        }
        next.push(moved);
    }
    resolve_overlaps(&mut next, arena, OVERLAP_ITERATIONS);

    let mut out = robots.to_vec();
    for (&i, r) in order.iter().zip(next) {
        out[i] = r;
    }
    (out, deposits)
}

/// Mean distance from each robot to its nearest neighbour.
pub fn mean_nearest_neighbor_distance(robots: &[Robot]) -> f64 {
    if robots.len() < 2 {
        return 0.0;
    }
    let total: f64 = robots
        .iter()
        .enumerate()
        .map(|(i, a)| {
            robots
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.pos.dist2(b.pos))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .sum();
    total / robots.len() as f64
}
