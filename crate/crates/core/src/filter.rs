//! Fixed discrete barrier-style execution filter.
//!
//! The filter sees only the current observation and the tracked velocity
//! means. It never touches the posterior, the scenario batch or any risk
//! estimate; its signature admits none of them.

use serde::{Deserialize, Serialize};

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::geometry::{clearance, step_unicycle, Disc, Limits, Vec2, VelocityCommand};
use crate::planner::{prefer, CommandLattice};
use crate::scenario::RolloutContext;
use crate::world::Observation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    pub c_hard: f64,
    pub kappa: f64,
    pub horizon: usize,
    pub w_progress: f64,
    pub w_clearance: f64,
    pub w_deviation: f64,
    /// Clearance beyond this adds nothing to a candidate's score, m.
    pub clearance_cap: f64,
    pub infeasible_penalty: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            c_hard: 0.15,
            kappa: 0.5,
            horizon: 10,
            w_progress: 1.0,
            w_clearance: 2.0,
            w_deviation: 2.0,
            clearance_cap: 0.5,
            infeasible_penalty: 1e3,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.c_hard,
            self.kappa,
            self.w_progress,
            self.w_clearance,
            self.w_deviation,
            self.clearance_cap,
            self.infeasible_penalty,
        ];
        if positive.iter().all(|&x| x > 0.0) && self.horizon > 0 {
            Ok(())
        } else {
            Err(Error::Config("filter parameters must all be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRollout {
    /// Minimum predicted clearance over steps 0..=H_f.
    pub c_min: f64,
    /// Goal-distance reduction after H_f steps.
    pub progress: f64,
    /// Predicted clearance at the last step.
    pub terminal: f64,
}

fn tracked_obstacles(obs: &Observation, beliefs: &BeliefMap) -> Vec<(Disc, Vec2)> {
    obs.obstacles
        .iter()
        .map(|o| {
            let v = beliefs.get(&o.id).map(|b| b.velocity_mean).unwrap_or(Vec2::ZERO);
            (Disc::new(o.position, o.radius), v)
        })
        .collect()
}

/// Current clearance of the observed scene.
pub fn observed_clearance(obs: &Observation, ctx: &RolloutContext) -> f64 {
    let discs: Vec<Disc> = obs.obstacles.iter().map(|o| Disc::new(o.position, o.radius)).collect();
    clearance(
        &Disc::new(obs.robot.position(), ctx.robot_radius),
        &discs,
        &ctx.map.walls,
        ctx.empty_clearance,
    )
}

/// Holds `u` for `horizon` steps with obstacles extrapolated linearly at
/// their tracked velocities.
pub fn filter_rollout(
    u: VelocityCommand,
    obs: &Observation,
    beliefs: &BeliefMap,
    goal: Vec2,
    horizon: usize,
    ctx: &RolloutContext,
) -> FilterRollout {
    let tracked = tracked_obstacles(obs, beliefs);
    let mut pose = obs.robot;
    let mut c_min = observed_clearance(obs, ctx);
    let mut terminal = c_min;
    for k in 1..=horizon {
        pose = step_unicycle(pose, u, ctx.dt);
        let t = k as f64 * ctx.dt;
        let discs: Vec<Disc> = tracked
            .iter()
            .map(|(d, v)| Disc::new(d.center + *v * t, d.radius))
            .collect();
        terminal = clearance(
            &Disc::new(pose.position(), ctx.robot_radius),
            &discs,
            &ctx.map.walls,
            ctx.empty_clearance,
        );
        c_min = c_min.min(terminal);
        if terminal < 0.0 {
            break;
        }
    }
    FilterRollout {
        c_min,
        progress: ctx.goal_distance(&obs.robot, goal) - ctx.goal_distance(&pose, goal),
        terminal,
    }
}

/// Hard margin plus discrete barrier condition.
pub fn is_feasible(c_t: f64, c_min: f64, params: &FilterParams) -> bool {
    c_min >= params.c_hard && (c_min - params.c_hard) + params.kappa * (c_t - params.c_hard) >= 0.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterDecision {
    pub command: VelocityCommand,
    pub nominal: VelocityCommand,
    /// Candidates in evaluation order: nominal first, then the lattice.
    pub candidates: Vec<VelocityCommand>,
    pub feasible: Vec<bool>,
    pub scores: Vec<f64>,
    pub rollouts: Vec<FilterRollout>,
}

impl FilterDecision {
    pub fn any_feasible(&self) -> bool {
        self.feasible.iter().any(|&f| f)
    }
}

/// Deviation from the nominal command, with ω rescaled into speed units.
pub fn command_deviation(u: VelocityCommand, nominal: VelocityCommand, limits: &Limits) -> f64 {
    let scale = limits.v_max / limits.omega_max;
    (u.v - nominal.v).hypot((u.omega - nominal.omega) * scale)
}

/// Selects the executed command from `{u_nom} ∪ lattice`.
#[allow(clippy::too_many_arguments)]
pub fn apply_filter(
    nominal: VelocityCommand,
    obs: &Observation,
    beliefs: &BeliefMap,
    lattice: &CommandLattice,
    goal: Vec2,
    ctx: &RolloutContext,
    params: &FilterParams,
    limits: &Limits,
) -> FilterDecision {
    let candidates: Vec<VelocityCommand> = std::iter::once(nominal).chain(lattice.commands().iter().copied()).collect();
    let c_t = observed_clearance(obs, ctx);
    let rollouts: Vec<FilterRollout> = candidates
        .iter()
        .map(|&u| filter_rollout(u, obs, beliefs, goal, params.horizon, ctx))
        .collect();
    let feasible: Vec<bool> = rollouts.iter().map(|r| is_feasible(c_t, r.c_min, params)).collect();
    let scores: Vec<f64> = candidates
        .iter()
        .zip(&rollouts)
        .zip(&feasible)
        .map(|((&u, r), &ok)| {
            params.w_progress * r.progress + params.w_clearance * r.c_min.min(params.clearance_cap)
                - params.w_deviation * command_deviation(u, nominal, limits)
                - if ok { 0.0 } else { params.infeasible_penalty }
        })
        .collect();
    let pick = if feasible.iter().any(|&f| f) {
        (0..candidates.len())
            .min_by(|&i, &j| prefer((scores[i], candidates[i], i), (scores[j], candidates[j], j), limits.v_max))
    } else {
        // least-bad clearance; later clearance breaks ties among equal minima
        (0..candidates.len()).min_by(|&i, &j| {
            rollouts[j]
                .c_min
                .total_cmp(&rollouts[i].c_min)
                .then(rollouts[j].terminal.total_cmp(&rollouts[i].terminal))
                .then(prefer((0.0, candidates[i], i), (0.0, candidates[j], j), limits.v_max))
        })
    };
    FilterDecision {
        command: candidates[pick.unwrap_or(0)],
        nominal,
        candidates,
        feasible,
        scores,
        rollouts,
    }
}
