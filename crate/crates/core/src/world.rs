//! Seeded 2D world: static maps, scripted moving obstacles, noisy observations
//! and episode stepping.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    clearance, goal_distance, step_unicycle, Disc, Limits, Pose, Vec2, VelocityCommand,
    WallSegment, DEFAULT_EMPTY_CLEARANCE,
};
use crate::rng::{substream, tag};

/// Robot motion is integrated in this many sub-steps per simulator step.
pub const ROBOT_SUBSTEPS: usize = 4;

/// Names accepted by [`build_environment`].
pub const ENVIRONMENT_NAMES: [&str; 3] = ["bottleneck", "warehouse-squeeze", "open-space"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Reflects `p` back inside the bounds, flipping the matching velocity
    /// components.
    fn reflect(&self, mut p: Vec2, mut vel: Vec2) -> (Vec2, Vec2) {
        if p.x < self.min.x {
            p.x = 2.0 * self.min.x - p.x;
            vel.x = -vel.x;
        } else if p.x > self.max.x {
            p.x = 2.0 * self.max.x - p.x;
            vel.x = -vel.x;
        }
        if p.y < self.min.y {
            p.y = 2.0 * self.min.y - p.y;
            vel.y = -vel.y;
        } else if p.y > self.max.y {
            p.y = 2.0 * self.max.y - p.y;
            vel.y = -vel.y;
        }
        p.x = p.x.clamp(self.min.x, self.max.x);
        p.y = p.y.clamp(self.min.y, self.max.y);
        (p, vel)
    }

    fn boundary_walls(&self) -> [WallSegment; 4] {
        let (lo, hi) = (self.min, self.max);
        [
            WallSegment::new(lo, Vec2::new(hi.x, lo.y)),
            WallSegment::new(Vec2::new(hi.x, lo.y), hi),
            WallSegment::new(hi, Vec2::new(lo.x, hi.y)),
            WallSegment::new(Vec2::new(lo.x, hi.y), lo),
        ]
    }
}

/// Fully known static environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMap {
    pub walls: Vec<WallSegment>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObstacleBehavior {
    /// Straight-line motion along `direction`, reflecting at the map bounds.
    Crossing { direction: Vec2 },
    /// Shuttles between two waypoints.
    Patrolling { a: Vec2, b: Vec2 },
    /// Parks until the robot is within `trigger_distance` of `gap_center`,
    /// then drives into the gap, holds it for `dwell_steps`, and returns home.
    GapBlocking {
        gap_center: Vec2,
        trigger_distance: f64,
        dwell_steps: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub id: usize,
    pub position: Vec2,
    pub radius: f64,
    pub speed: f64,
    /// Per-step velocity noise, m/s.
    pub sigma: f64,
    pub behavior: ObstacleBehavior,
}

/// Tunables shared by every generated environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub dt: f64,
    pub max_steps: u32,
    pub v_max: f64,
    pub omega_max: f64,
    pub robot_radius: f64,
    pub goal_radius: f64,
    pub sigma_obs: f64,
    pub sigma_act: f64,
    pub sensing_radius: f64,
    pub command_delay: u32,
    pub empty_clearance: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_steps: 600,
            v_max: 1.0,
            omega_max: 1.5,
            robot_radius: 0.25,
            goal_radius: 0.3,
            sigma_obs: 0.02,
            sigma_act: 0.03,
            sensing_radius: 6.0,
            command_delay: 0,
            empty_clearance: DEFAULT_EMPTY_CLEARANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub name: String,
    pub map: StaticMap,
    pub obstacles: Vec<ObstacleSpec>,
    pub start: Pose,
    pub goal: Vec2,
    pub goal_radius: f64,
    pub robot_radius: f64,
    pub dt: f64,
    pub max_steps: u32,
    pub limits: Limits,
    pub sigma_obs: f64,
    pub sensing_radius: f64,
    /// Multiplicative actuation noise standard deviation.
    pub sigma_act: f64,
    /// Steps between issuing a command and its execution.
    pub command_delay: u32,
    pub empty_clearance: f64,
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("{}: {msg}", self.name)));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if !(self.limits.v_max > 0.0 && self.limits.omega_max > 0.0) {
            return bad("velocity limits must be positive");
        }
        if !(self.robot_radius > 0.0 && self.goal_radius > 0.0) {
            return bad("radii must be positive");
        }
        if self.sigma_obs < 0.0 || self.sigma_act < 0.0 || !(self.sensing_radius > 0.0) {
            return bad("noise and sensing parameters out of range");
        }
        if !self.map.bounds.contains(self.goal) {
            return bad("goal outside bounds");
        }
        for w in &self.map.walls {
            if w.a == w.b {
                return bad("degenerate wall segment");
            }
            if !self.map.bounds.contains(w.a) || !self.map.bounds.contains(w.b) {
                return bad("wall outside bounds");
            }
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0) || o.speed < 0.0 || o.sigma < 0.0 {
                return bad("obstacle parameters out of range");
            }
        }
        let discs: Vec<Disc> = self
            .obstacles
            .iter()
            .map(|o| Disc::new(o.position, o.radius))
            .collect();
        let robot = Disc::new(self.start.position(), self.robot_radius);
        if clearance(&robot, &discs, &self.map.walls, self.empty_clearance) < 0.0 {
            return bad("start pose is in collision");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPhase {
    Waiting,
    Closing,
    Dwelling { left: u32 },
    Retreating,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionMode {
    Free,
    Patrol { toward_b: bool },
    Gap(GapPhase),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub mode: MotionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOutcome {
    Running,
    Success,
    Collision,
    Timeout,
}

impl StepOutcome {
    pub fn is_terminal(self) -> bool {
        self != StepOutcome::Running
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepOutcome::Running => "running",
            StepOutcome::Success => "success",
            StepOutcome::Collision => "collision",
            StepOutcome::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedObstacle {
    pub id: usize,
    pub position: Vec2,
    pub radius: f64,
}

/// What the robot sees at one step: its own pose and noisy positions of
/// obstacles within sensing range. Velocities are never observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub robot: Pose,
    pub obstacles: Vec<ObservedObstacle>,
    pub step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub seed: u64,
    pub step: u32,
    pub robot: Pose,
    pub obstacles: Vec<ObstacleState>,
    pub pending: VecDeque<VelocityCommand>,
    pub outcome: StepOutcome,
    pub clearance: f64,
}

impl WorldState {
    pub fn new(config: &EnvironmentConfig, seed: u64) -> Self {
        let obstacles: Vec<ObstacleState> = config
            .obstacles
            .iter()
            .map(|spec| {
                let (velocity, mode) = match spec.behavior {
                    ObstacleBehavior::Crossing { direction } => {
                        let n = direction.norm();
                        let dir = if n > 0.0 { direction * (1.0 / n) } else { Vec2::ZERO };
                        (dir * spec.speed, MotionMode::Free)
                    }
                    ObstacleBehavior::Patrolling { .. } => {
                        (Vec2::ZERO, MotionMode::Patrol { toward_b: true })
                    }
                    ObstacleBehavior::GapBlocking { .. } => {
                        (Vec2::ZERO, MotionMode::Gap(GapPhase::Waiting))
                    }
                };
                ObstacleState {
                    id: spec.id,
                    position: spec.position,
                    velocity,
                    radius: spec.radius,
                    mode,
                }
            })
            .collect();
        let discs: Vec<Disc> = obstacles.iter().map(|o| Disc::new(o.position, o.radius)).collect();
        let robot = Disc::new(config.start.position(), config.robot_radius);
        Self {
            seed,
            step: 0,
            robot: config.start,
            clearance: clearance(&robot, &discs, &config.map.walls, config.empty_clearance),
            obstacles,
            pending: std::iter::repeat_n(VelocityCommand::STOP, config.command_delay as usize)
                .collect(),
            outcome: StepOutcome::Running,
        }
    }

    pub fn obstacle_discs(&self) -> Vec<Disc> {
        self.obstacles
            .iter()
            .map(|o| Disc::new(o.position, o.radius))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: WorldState,
    pub observation: Observation,
    pub outcome: StepOutcome,
    /// Command actually applied after delay, noise and clamping.
    pub executed: VelocityCommand,
    /// Minimum clearance over the sub-steps of this step.
    pub clearance: f64,
}

fn normal2(rng: &mut impl Rng) -> Vec2 {
    Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn move_toward(from: Vec2, to: Vec2, step: f64) -> (Vec2, bool) {
    let d = to - from;
    let dist = d.norm();
    if dist <= step {
        (to, true)
    } else {
        (from + d * (step / dist), false)
    }
}

fn advance_obstacle(
    spec: &ObstacleSpec,
    state: &ObstacleState,
    robot: Vec2,
    bounds: &Bounds,
    dt: f64,
    noise: Vec2,
) -> ObstacleState {
    let step_len = spec.speed * dt;
    let start = state.position;
    let mut next = *state;
    let mut moving = true;
    match (spec.behavior, state.mode) {
        (ObstacleBehavior::Crossing { .. }, _) => {
            next.position = start + state.velocity * dt;
        }
        (ObstacleBehavior::Patrolling { a, b }, MotionMode::Patrol { toward_b }) => {
            let target = if toward_b { b } else { a };
            let (p, arrived) = move_toward(start, target, step_len);
            next.position = p;
            if arrived {
                next.mode = MotionMode::Patrol { toward_b: !toward_b };
            }
        }
        (
            ObstacleBehavior::GapBlocking {
                gap_center,
                trigger_distance,
                dwell_steps,
            },
            MotionMode::Gap(phase),
        ) => {
            let phase = if phase == GapPhase::Waiting && robot.distance(gap_center) <= trigger_distance {
                GapPhase::Closing
            } else {
                phase
            };
            let phase = match phase {
                GapPhase::Closing => {
                    let (p, arrived) = move_toward(start, gap_center, step_len);
                    next.position = p;
                    if arrived {
                        GapPhase::Dwelling { left: dwell_steps }
                    } else {
                        GapPhase::Closing
                    }
                }
                GapPhase::Dwelling { left } => {
                    moving = false;
                    if left <= 1 {
                        GapPhase::Retreating
                    } else {
                        GapPhase::Dwelling { left: left - 1 }
                    }
                }
                GapPhase::Retreating => {
                    let (p, arrived) = move_toward(start, spec.position, step_len);
                    next.position = p;
                    if arrived {
                        GapPhase::Done
                    } else {
                        GapPhase::Retreating
                    }
                }
                GapPhase::Waiting | GapPhase::Done => {
                    moving = false;
                    phase
                }
            };
            next.mode = MotionMode::Gap(phase);
        }
        _ => unreachable!("obstacle mode does not match its behavior"),
    }
    if moving {
        next.position += noise * (spec.sigma * dt);
    }
    let carried = match spec.behavior {
        ObstacleBehavior::Crossing { .. } => state.velocity,
        _ => (next.position - start) * (1.0 / dt),
    };
    let (p, v) = bounds.reflect(next.position, carried);
    next.position = p;
    next.velocity = match spec.behavior {
        ObstacleBehavior::Crossing { .. } => v,
        _ => (p - start) * (1.0 / dt),
    };
    next
}

/// Advances the world by one step under `cmd`.
pub fn step_world(
    state: &WorldState,
    cmd: VelocityCommand,
    config: &EnvironmentConfig,
) -> Result<StepResult> {
    if state.outcome.is_terminal() {
        return Err(Error::Usage(format!(
            "cannot step a terminal world (outcome {})",
            state.outcome.as_str()
        )));
    }
    let dt = config.dt;
    let mut next = state.clone();

    next.pending.push_back(cmd);
    let issued = next.pending.pop_front().unwrap_or(VelocityCommand::STOP);
    let mut act = substream(state.seed, &[tag::ACTUATION, state.step as u64]);
    let cap = 3.0 * config.sigma_act;
    let ev = (config.sigma_act * act.sample::<f64, _>(StandardNormal)).clamp(-cap, cap);
    let ew = (config.sigma_act * act.sample::<f64, _>(StandardNormal)).clamp(-cap, cap);
    let executed =
        VelocityCommand::new(issued.v * (1.0 + ev), issued.omega * (1.0 + ew)).clamped(&config.limits);

    let robot_start = state.robot.position();
    let starts: Vec<Vec2> = state.obstacles.iter().map(|o| o.position).collect();
    next.obstacles = config
        .obstacles
        .iter()
        .zip(&state.obstacles)
        .map(|(spec, obs)| {
            let mut rng = substream(state.seed, &[tag::PROCESS, state.step as u64, spec.id as u64]);
            advance_obstacle(spec, obs, robot_start, &config.map.bounds, dt, normal2(&mut rng))
        })
        .collect();

    let h = dt / ROBOT_SUBSTEPS as f64;
    let mut robot = state.robot;
    let mut min_clearance = f64::INFINITY;
    for k in 1..=ROBOT_SUBSTEPS {
        robot = step_unicycle(robot, executed, h);
        let frac = k as f64 / ROBOT_SUBSTEPS as f64;
        let discs: Vec<Disc> = starts
            .iter()
            .zip(&next.obstacles)
            .map(|(&s, o)| Disc::new(s + (o.position - s) * frac, o.radius))
            .collect();
        let disc = Disc::new(robot.position(), config.robot_radius);
        min_clearance =
            min_clearance.min(clearance(&disc, &discs, &config.map.walls, config.empty_clearance));
    }
    next.robot = robot;
    next.step = state.step + 1;
    next.clearance = min_clearance;
    next.outcome = if min_clearance < 0.0 {
        StepOutcome::Collision
    } else if goal_distance(&robot, config.goal) <= config.goal_radius {
        StepOutcome::Success
    } else if next.step >= config.max_steps {
        StepOutcome::Timeout
    } else {
        StepOutcome::Running
    };
    let observation = observe(&next, config);
    Ok(StepResult {
        outcome: next.outcome,
        observation,
        executed,
        clearance: min_clearance,
        state: next,
    })
}

/// Noisy local observation of the current state.
pub fn observe(state: &WorldState, config: &EnvironmentConfig) -> Observation {
    let robot = state.robot.position();
    let obstacles = state
        .obstacles
        .iter()
        .filter(|o| o.position.distance(robot) <= config.sensing_radius)
        .map(|o| {
            let noise = if config.sigma_obs > 0.0 {
                let mut rng =
                    substream(state.seed, &[tag::OBSERVATION, state.step as u64, o.id as u64]);
                normal2(&mut rng) * config.sigma_obs
            } else {
                Vec2::ZERO
            };
            ObservedObstacle {
                id: o.id,
                position: o.position + noise,
                radius: o.radius,
            }
        })
        .collect();
    Observation {
        robot: state.robot,
        obstacles,
        step: state.step,
    }
}

pub fn build_environment(name: &str, seed: u64) -> Result<(EnvironmentConfig, WorldState)> {
    build_environment_with(name, seed, &WorldParams::default())
}

/// Generates the named environment. The seed picks gap width, obstacle
/// speeds, phase offsets and trigger distances.
pub fn build_environment_with(
    name: &str,
    seed: u64,
    params: &WorldParams,
) -> Result<(EnvironmentConfig, WorldState)> {
    let mut rng = substream(seed, &[tag::ENVIRONMENT]);
    let mut u = || rng.random::<f64>();
    let (bounds, walls, obstacles, start, goal) = match name {
        "bottleneck" => {
            let bounds = Bounds {
                min: Vec2::new(0.0, -4.0),
                max: Vec2::new(12.0, 4.0),
            };
            let wall_x = 6.0;
            let gap = 1.2 + 0.6 * u();
            let mut walls = bounds.boundary_walls().to_vec();
            walls.push(WallSegment::new(Vec2::new(wall_x, -4.0), Vec2::new(wall_x, -gap / 2.0)));
            walls.push(WallSegment::new(Vec2::new(wall_x, gap / 2.0), Vec2::new(wall_x, 4.0)));
            let side = if u() < 0.5 { -1.0 } else { 1.0 };
            let blocker = ObstacleSpec {
                id: 0,
                position: Vec2::new(wall_x + 0.9 + 0.4 * u(), side * (1.6 + 0.4 * u())),
                radius: 0.4,
                speed: 0.8 + 0.3 * u(),
                sigma: 0.02,
                behavior: ObstacleBehavior::GapBlocking {
                    gap_center: Vec2::new(wall_x, 0.0),
                    trigger_distance: 3.0 + 0.5 * u(),
                    dwell_steps: 20 + (10.0 * u()) as u32,
                },
            };
            let dir = if u() < 0.5 { -1.0 } else { 1.0 };
            let crosser = ObstacleSpec {
                id: 1,
                position: Vec2::new(3.5 + 0.5 * u(), -3.0 + 6.0 * u()),
                radius: 0.3,
                speed: 0.4 + 0.2 * u(),
                sigma: 0.02,
                behavior: ObstacleBehavior::Crossing {
                    direction: Vec2::new(0.0, dir),
                },
            };
            (
                bounds,
                walls,
                vec![blocker, crosser],
                Pose::new(1.5, 0.0, 0.0),
                Vec2::new(10.5, 0.0),
            )
        }
        "warehouse-squeeze" => {
            let bounds = Bounds {
                min: Vec2::new(0.0, -3.0),
                max: Vec2::new(14.0, 3.0),
            };
            let (x0, x1, half) = (2.5, 11.5, 1.5);
            let mut walls = bounds.boundary_walls().to_vec();
            for s in [1.0, -1.0] {
                walls.push(WallSegment::new(Vec2::new(x0, s * half), Vec2::new(x1, s * half)));
                walls.push(WallSegment::new(Vec2::new(x0, s * half), Vec2::new(x0, s * 3.0)));
                walls.push(WallSegment::new(Vec2::new(x1, s * half), Vec2::new(x1, s * 3.0)));
            }
            // sweeps across the aisle, squeezing the passage shut twice per cycle
            let x = 5.5 + 3.0 * u();
            let reach = 0.4;
            let (a, b) = if u() < 0.5 {
                (Vec2::new(x, -reach), Vec2::new(x, reach))
            } else {
                (Vec2::new(x, reach), Vec2::new(x, -reach))
            };
            let phase = u();
            let patroller = ObstacleSpec {
                id: 0,
                position: a + (b - a) * phase,
                radius: 0.3,
                speed: 0.35 + 0.25 * u(),
                sigma: 0.02,
                behavior: ObstacleBehavior::Patrolling { a, b },
            };
            (
                bounds,
                walls,
                vec![patroller],
                Pose::new(1.0, 0.0, 0.0),
                Vec2::new(13.0, 0.0),
            )
        }
        "open-space" => {
            let bounds = Bounds {
                min: Vec2::new(0.0, 0.0),
                max: Vec2::new(10.0, 10.0),
            };
            let slow = ObstacleSpec {
                id: 0,
                position: Vec2::new(2.0 + 6.0 * u(), 1.5),
                radius: 0.3,
                speed: 0.2,
                sigma: 0.01,
                behavior: ObstacleBehavior::Crossing {
                    direction: Vec2::new(1.0, 0.0),
                },
            };
            (
                bounds,
                Vec::new(),
                vec![slow],
                Pose::new(1.0, 5.0, 0.0),
                Vec2::new(9.0, 5.0),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown environment '{other}' (expected one of {})",
                ENVIRONMENT_NAMES.join(", ")
            )))
        }
    };
    let config = EnvironmentConfig {
        name: name.to_string(),
        map: StaticMap { walls, bounds },
        obstacles,
        start,
        goal,
        goal_radius: params.goal_radius,
        robot_radius: params.robot_radius,
        dt: params.dt,
        max_steps: params.max_steps,
        limits: Limits {
            v_max: params.v_max,
            omega_max: params.omega_max,
        },
        sigma_obs: params.sigma_obs,
        sensing_radius: params.sensing_radius,
        sigma_act: params.sigma_act,
        command_delay: params.command_delay,
        empty_clearance: params.empty_clearance,
    };
    config.validate()?;
    let state = WorldState::new(&config, seed);
    Ok((config, state))
}

/// Width of the bottleneck gap, read back from the generated walls.
pub fn bottleneck_gap_width(config: &EnvironmentConfig) -> Option<f64> {
    let inner: Vec<&WallSegment> = config
        .map
        .walls
        .iter()
        .filter(|w| w.a.x == w.b.x && w.a.x > config.map.bounds.min.x && w.a.x < config.map.bounds.max.x)
        .collect();
    match inner.as_slice() {
        [lower, upper] => Some(upper.b.y.min(upper.a.y) - lower.b.y.max(lower.a.y)),
        _ => None,
    }
}
