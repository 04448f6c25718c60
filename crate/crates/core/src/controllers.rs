//! Controllers sharing the simulator interface: four planner variants and
//! two reactive baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::belief::{log_likelihood, track_obstacles, update_posterior_log, BeliefMap, Posterior};
use crate::config::SuiteConfig;
use crate::error::{Error, Result};
use crate::filter::apply_filter;
use crate::geometry::{clearance, normalize_angle, step_unicycle, Disc, Pose, Vec2, VelocityCommand};
use crate::navigation::GoalField;
use crate::planner::{best_index, select_command, CommandLattice, CommandScore, Objective};
use crate::scenario::{sample_batch, InformationState, RolloutContext};
use crate::world::{EnvironmentConfig, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    RcspFull,
    RcspFixedPredictor,
    MeanRiskFilter,
    CvarOnly,
    DwaStyle,
    GoalPd,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::RcspFull,
        ControllerKind::RcspFixedPredictor,
        ControllerKind::MeanRiskFilter,
        ControllerKind::CvarOnly,
        ControllerKind::DwaStyle,
        ControllerKind::GoalPd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::RcspFull => "rcsp-full",
            ControllerKind::RcspFixedPredictor => "rcsp-fixed-predictor",
            ControllerKind::MeanRiskFilter => "mean-risk-filter",
            ControllerKind::CvarOnly => "cvar-only",
            ControllerKind::DwaStyle => "dwa-style",
            ControllerKind::GoalPd => "goal-pd",
        }
    }

    /// Uses scenario sampling and the tail-risk planner.
    pub fn is_scenario_planner(self) -> bool {
        matches!(
            self,
            ControllerKind::RcspFull
                | ControllerKind::RcspFixedPredictor
                | ControllerKind::MeanRiskFilter
                | ControllerKind::CvarOnly
        )
    }

    fn updates_posterior(self) -> bool {
        matches!(
            self,
            ControllerKind::RcspFull | ControllerKind::MeanRiskFilter | ControllerKind::CvarOnly
        )
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown controller '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DwaParams {
    pub w_heading: f64,
    pub w_clearance: f64,
    pub w_velocity: f64,
    /// Deceleration used for the admissible-velocity test, m/s².
    pub brake_decel: f64,
    /// Clearance at which the clearance term saturates, m.
    pub clearance_cap: f64,
}

impl Default for DwaParams {
    fn default() -> Self {
        Self {
            w_heading: 1.0,
            w_clearance: 2.0,
            w_velocity: 0.5,
            brake_decel: 1.0,
            clearance_cap: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoalPdParams {
    pub k_heading: f64,
    pub k_distance: f64,
}

impl Default for GoalPdParams {
    fn default() -> Self {
        Self {
            k_heading: 2.0,
            k_distance: 0.8,
        }
    }
}

/// Output of one control decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub command: VelocityCommand,
    pub nominal: VelocityCommand,
    /// Tail risk of the executed command when it was scored by the planner.
    pub cvar_selected: Option<f64>,
    pub posterior: Option<Posterior>,
    pub scores: Vec<CommandScore>,
    pub filter_feasible: Option<bool>,
}

/// Per-episode controller holding the tracked beliefs and the posterior.
#[derive(Debug, Clone)]
pub struct Controller {
    kind: ControllerKind,
    config: SuiteConfig,
    env: EnvironmentConfig,
    seed: u64,
    lattice: CommandLattice,
    beliefs: BeliefMap,
    posterior: Posterior,
    previous_robot: Option<Pose>,
    goal_field: Option<GoalField>,
}

impl Controller {
    pub fn new(kind: ControllerKind, config: &SuiteConfig, env: &EnvironmentConfig, seed: u64) -> Result<Self> {
        let family = config.belief.family.len();
        if family == 0 {
            return Err(Error::Config("conjecture family is empty".into()));
        }
        Ok(Self {
            kind,
            config: config.clone(),
            env: env.clone(),
            seed,
            lattice: CommandLattice::default_for(&env.limits),
            beliefs: BeliefMap::new(),
            posterior: Posterior::uniform(family),
            previous_robot: None,
            goal_field: config
                .planner
                .route_margin
                .map(|m| GoalField::new(&env.map, env.goal, m, env.robot_radius + config.planner.route_clearance)),
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn posterior(&self) -> &Posterior {
        &self.posterior
    }

    pub fn beliefs(&self) -> &BeliefMap {
        &self.beliefs
    }

    pub fn lattice(&self) -> &CommandLattice {
        &self.lattice
    }

    fn ctx(&self) -> RolloutContext<'_> {
        RolloutContext {
            map: &self.env.map,
            robot_radius: self.env.robot_radius,
            dt: self.env.dt,
            empty_clearance: self.env.empty_clearance,
            goal_field: self.goal_field.as_ref(),
        }
    }

    pub fn decide(&mut self, obs: &Observation) -> Result<Decision> {
        match self.kind {
            ControllerKind::DwaStyle => {
                let target = match &self.goal_field {
                    Some(f) => f.route(obs.robot.position()).1,
                    None => self.env.goal,
                };
                let command = dwa_command(obs, &self.lattice, &self.env, target, &self.config.dwa);
                Ok(simple(command))
            }
            ControllerKind::GoalPd => Ok(simple(goal_pd_command(obs, &self.env, &self.config.goal_pd))),
            _ => self.decide_rcsp(obs),
        }
    }

    fn decide_rcsp(&mut self, obs: &Observation) -> Result<Decision> {
        let dt = self.env.dt;
        let bp = &self.config.belief;
        if let (Some(prev), true) = (self.previous_robot, self.kind.updates_posterior()) {
            if !self.beliefs.is_empty() && obs.obstacles.iter().any(|o| self.beliefs.contains_key(&o.id)) {
                let sigma = bp.sigma_like(self.env.sigma_obs);
                let logs: Vec<f64> = bp
                    .family
                    .iter()
                    .map(|c| log_likelihood(c, &self.beliefs, obs, &prev, dt, sigma))
                    .collect();
                self.posterior = update_posterior_log(&self.posterior, &logs, bp.tau, bp.floor)?;
            }
        }
        self.beliefs = track_obstacles(&self.beliefs, obs, dt, &bp.tracking);
        self.previous_robot = Some(obs.robot);

        let mut params = self.config.planner.clone();
        params.objective = match self.kind {
            ControllerKind::MeanRiskFilter => Objective::Mean,
            _ => Objective::Cvar,
        };
        let info = InformationState {
            map: self.env.map.clone(),
            family: bp.family.clone(),
            beliefs: self.beliefs.clone(),
            posterior: self.posterior.clone(),
            goal: self.env.goal,
            robot: obs.robot,
        };
        let top_k = params.top_k.unwrap_or(bp.family.len());
        let batch = sample_batch(&info, params.n_scenarios, params.horizon, top_k, dt, self.seed, obs.step)?;
        let ctx = self.ctx();
        let v_max = self.env.limits.v_max;
        let (nominal, scores) = select_command(&obs.robot, self.env.goal, &self.lattice, &batch, &ctx, &params, v_max)?;

        let (command, filter_feasible) = if self.kind == ControllerKind::CvarOnly {
            (nominal, None)
        } else {
            let d = apply_filter(
                nominal,
                obs,
                &self.beliefs,
                &self.lattice,
                self.env.goal,
                &ctx,
                &self.config.filter,
                &self.env.limits,
            );
            let ok = d.any_feasible();
            (d.command, Some(ok))
        };
        let cvar_selected = scores
            .iter()
            .find(|s| s.command == command)
            .or_else(|| scores.iter().find(|s| s.command == nominal))
            .map(|s| s.tail_risk);
        Ok(Decision {
            command,
            nominal,
            cvar_selected,
            posterior: Some(self.posterior.clone()),
            scores,
            filter_feasible,
        })
    }
}

fn simple(command: VelocityCommand) -> Decision {
    Decision {
        command,
        nominal: command,
        cvar_selected: None,
        posterior: None,
        scores: Vec::new(),
        filter_feasible: None,
    }
}

/// Dynamic-window style choice: each lattice command is projected one step
/// against the obstacles frozen at their observed positions, and scored by
/// heading toward `target`, clearance and speed.
pub fn dwa_command(
    obs: &Observation,
    lattice: &CommandLattice,
    env: &EnvironmentConfig,
    target: Vec2,
    params: &DwaParams,
) -> VelocityCommand {
    let discs: Vec<Disc> = obs.obstacles.iter().map(|o| Disc::new(o.position, o.radius)).collect();
    let v_max = env.limits.v_max;
    let evaluated: Vec<(VelocityCommand, f64, f64)> = lattice
        .commands()
        .iter()
        .map(|&u| {
            let pose = step_unicycle(obs.robot, u, env.dt);
            let c = clearance(
                &Disc::new(pose.position(), env.robot_radius),
                &discs,
                &env.map.walls,
                env.empty_clearance,
            );
            let to_goal = target - pose.position();
            let err = normalize_angle(to_goal.y.atan2(to_goal.x) - pose.heading).abs();
            let score = params.w_heading * (1.0 - err / std::f64::consts::PI)
                + params.w_clearance * c.min(params.clearance_cap) / params.clearance_cap
                + params.w_velocity * u.v / v_max;
            (u, c, score)
        })
        .collect();
    let admissible: Vec<(f64, VelocityCommand)> = evaluated
        .iter()
        .filter(|(u, c, _)| *c >= 0.0 && u.v <= (2.0 * params.brake_decel * c).sqrt())
        .map(|&(u, _, s)| (s, u))
        .collect();
    if let Some(i) = best_index(&admissible, v_max) {
        return admissible[i].1;
    }
    let fallback: Vec<(f64, VelocityCommand)> = evaluated.iter().map(|&(u, c, _)| (c, u)).collect();
    best_index(&fallback, v_max).map(|i| fallback[i].1).unwrap_or(VelocityCommand::STOP)
}

/// Proportional heading and distance law toward the goal; ignores obstacles.
pub fn goal_pd_command(obs: &Observation, env: &EnvironmentConfig, params: &GoalPdParams) -> VelocityCommand {
    let to_goal = env.goal - obs.robot.position();
    let err = normalize_angle(to_goal.y.atan2(to_goal.x) - obs.robot.heading);
    let v = (params.k_distance * to_goal.norm()) * err.cos().max(0.0);
    VelocityCommand {
        v,
        omega: params.k_heading * err,
    }
    .clamped(&env.limits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::goal_distance;
    use crate::world::{build_environment, observe, step_world, StepOutcome};

    #[test]
    fn kind_names_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(k.as_str().parse::<ControllerKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
        assert!(matches!("teb".parse::<ControllerKind>(), Err(Error::Config(_))));
    }

    #[test]
    fn goal_pd_open_space_monotone_to_success() {
        let (env, mut state) = build_environment("open-space", 4).unwrap();
        let config = SuiteConfig::default();
        let mut c = Controller::new(ControllerKind::GoalPd, &config, &env, 4).unwrap();
        let mut last = goal_distance(&state.robot, env.goal);
        loop {
            let obs = observe(&state, &env);
            let d = c.decide(&obs).unwrap();
            let r = step_world(&state, d.command, &env).unwrap();
            state = r.state;
            let now = goal_distance(&state.robot, env.goal);
            assert!(now < last, "goal distance rose at step {}", state.step);
            last = now;
            if r.outcome.is_terminal() {
                assert_eq!(r.outcome, StepOutcome::Success);
                break;
            }
        }
    }

    #[test]
    fn full_and_fixed_agree_at_first_step() {
        let config = SuiteConfig::default();
        let (env, state) = build_environment("bottleneck", 2).unwrap();
        let obs = observe(&state, &env);
        let mut a = Controller::new(ControllerKind::RcspFull, &config, &env, 2).unwrap();
        let mut b = Controller::new(ControllerKind::RcspFixedPredictor, &config, &env, 2).unwrap();
        let da = a.decide(&obs).unwrap();
        let db = b.decide(&obs).unwrap();
        assert_eq!(da.command, db.command);
        assert_eq!(da.scores, db.scores);
    }

    #[test]
    fn dwa_prefers_nonnegative_clearance() {
        let config = SuiteConfig::default();
        let (env, state) = build_environment("bottleneck", 0).unwrap();
        let mut obs = observe(&state, &env);
        // obstacle right in front of the robot
        obs.obstacles.push(crate::world::ObservedObstacle {
            id: 99,
            position: obs.robot.position() + Vec2::new(0.6, 0.0),
            radius: 0.3,
        });
        let lattice = CommandLattice::default_for(&env.limits);
        let u = dwa_command(&obs, &lattice, &env, env.goal, &config.dwa);
        let pose = step_unicycle(obs.robot, u, env.dt);
        let discs: Vec<Disc> = obs.obstacles.iter().map(|o| Disc::new(o.position, o.radius)).collect();
        let c = clearance(&Disc::new(pose.position(), env.robot_radius), &discs, &env.map.walls, env.empty_clearance);
        assert!(c >= 0.0);
    }
}
