//! Tail-risk command scoring over a shared scenario batch.
//!
//! Each lattice command is held for the horizon against every scenario,
//! giving per-scenario progress `R` and risk `G`. The command objective is
//! `mean(R) − λ · tail(G)` where the tail term is the empirical CVaR, the
//! mean, or the maximum of the sampled risks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Limits, Pose, Vec2, VelocityCommand};
use crate::scenario::{progress_in, rollout_command, trajectory_risk, RolloutContext, ScenarioBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Cvar,
    Mean,
    Worst,
}

/// How a non-integer tail size `αN` is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailRule {
    /// Fractional weight on the boundary sample (quantile-integral CVaR).
    Fractional,
    /// Plain average of the top `⌈αN⌉` samples.
    Ceil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub n_scenarios: usize,
    pub horizon: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub objective: Objective,
    /// Number of conjectures kept for scenario allocation; `None` keeps all.
    pub top_k: Option<usize>,
    pub c_safe: f64,
    pub tail_rule: TailRule,
    /// Measure progress along the shortest route around walls, with detour
    /// points this far from wall ends; `None` uses straight-line distance.
    pub route_margin: Option<f64>,
    /// Clearance beyond the robot radius that route sight lines keep.
    pub route_clearance: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            n_scenarios: 64,
            horizon: 20,
            alpha: 0.1,
            lambda: 4.0,
            objective: Objective::Cvar,
            top_k: None,
            c_safe: 0.5,
            tail_rule: TailRule::Fractional,
            route_margin: Some(0.4),
            route_clearance: 0.1,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenarios == 0 || self.horizon == 0 {
            return Err(Error::Config("planner needs at least one scenario and one step".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.lambda >= 0.0) || !(self.c_safe > 0.0) {
            return Err(Error::Config("lambda must be >= 0 and c_safe > 0".into()));
        }
        if self.top_k == Some(0) {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if self.route_margin.is_some_and(|m| !(m >= 0.0)) || !(self.route_clearance >= 0.0) {
            return Err(Error::Config("route_margin and route_clearance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Finite set of candidate commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLattice {
    commands: Vec<VelocityCommand>,
}

impl CommandLattice {
    pub fn new(commands: Vec<VelocityCommand>, limits: &Limits) -> Result<Self> {
        if commands.is_empty() {
            return Err(Error::Config("command lattice is empty".into()));
        }
        if let Some(c) = commands.iter().find(|c| !c.within(limits)) {
            return Err(Error::Config(format!("lattice command {c:?} exceeds limits")));
        }
        if !commands.contains(&VelocityCommand::STOP) {
            return Err(Error::Config("lattice must contain the stop command".into()));
        }
        Ok(Self { commands })
    }

    /// Speeds {0, ¼, ½, ¾, 1}·v_max crossed with turn rates {−1, −½, 0, ½, 1}·ω_max.
    pub fn default_for(limits: &Limits) -> Self {
        let fractions = [0.0, 0.25, 0.5, 0.75, 1.0];
        let turns = [-1.0, -0.5, 0.0, 0.5, 1.0];
        let commands = fractions
            .iter()
            .flat_map(|&f| {
                turns
                    .iter()
                    .map(move |&t| VelocityCommand::new(f * limits.v_max, t * limits.omega_max))
            })
            .collect();
        Self { commands }
    }

    pub fn commands(&self) -> &[VelocityCommand] {
        &self.commands
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandScore {
    pub command: VelocityCommand,
    pub mean_reward: f64,
    pub tail_risk: f64,
    pub objective: f64,
    /// Per-scenario (reward, risk) pairs.
    pub samples: Vec<(f64, f64)>,
}

fn check_input(risks: &[f64], alpha: f64) -> Result<()> {
    if risks.is_empty() {
        return Err(Error::Usage("risk sample is empty".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Usage(format!("alpha {alpha} outside (0, 1]")));
    }
    Ok(())
}

/// Mean taken as offsets from the maximum, so it never rounds above it.
pub fn sample_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let top = sample_max(values);
    top + values.iter().map(|x| x - top).sum::<f64>() / values.len() as f64
}

pub fn sample_max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Tail size `αN`, snapped to the nearest integer when within rounding noise.
fn tail_mass(alpha: f64, n: usize) -> f64 {
    let m = alpha * n as f64;
    let r = m.round();
    if (m - r).abs() <= 1e-9 * m.max(1.0) {
        r
    } else {
        m
    }
}

/// Empirical CVaR with the fractional-tail convention: the average of the
/// largest `αN` samples, with the boundary sample weighted by the
/// fractional part of `αN`.
pub fn empirical_cvar(risks: &[f64], alpha: f64) -> Result<f64> {
    check_input(risks, alpha)?;
    if alpha == 1.0 {
        return Ok(sample_mean(risks));
    }
    let m = tail_mass(alpha, risks.len());
    if m <= 1.0 {
        return Ok(sample_max(risks));
    }
    let mut sorted = risks.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    // offsets from the top sample are all ≤ 0, so rounding cannot push the
    // result above the maximum ...
    let top = sorted[0];
    let whole = m.floor() as usize;
    let mut total: f64 = sorted[..whole].iter().map(|x| x - top).sum();
    let frac = m - whole as f64;
    if frac > 0.0 && whole < sorted.len() {
        total += frac * (sorted[whole] - top);
    }
    // and never below the mean
    Ok((top + total / m).max(sample_mean(risks)))
}

/// Average of the largest `⌈αN⌉` samples.
pub fn empirical_cvar_ceil(risks: &[f64], alpha: f64) -> Result<f64> {
    check_input(risks, alpha)?;
    let k = (tail_mass(alpha, risks.len()).ceil() as usize).clamp(1, risks.len());
    let mut sorted = risks.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// CVaR as `min_η η + E[(X − η)₊] / α` over the empirical distribution.
///
/// The objective is convex and piecewise linear with kinks at the samples,
/// so scanning the sample values finds the minimum.
pub fn cvar_via_threshold(risks: &[f64], alpha: f64) -> Result<f64> {
    check_input(risks, alpha)?;
    let n = risks.len();
    let mut asc = risks.to_vec();
    asc.sort_unstable_by(f64::total_cmp);
    // suffix[j] = sum of asc[j..]
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + asc[j];
    }
    let scale = 1.0 / (alpha * n as f64);
    let mut best = f64::INFINITY;
    for j in 0..n {
        let eta = asc[j];
        // samples strictly above eta start at the first index with a larger value
        let above = asc.partition_point(|&x| x <= eta);
        let excess = suffix[above] - (n - above) as f64 * eta;
        best = best.min(eta + scale * excess);
    }
    Ok(best)
}

/// Tail term used in the objective.
pub fn tail_risk(risks: &[f64], params: &PlannerParams) -> Result<f64> {
    match params.objective {
        Objective::Cvar => match params.tail_rule {
            TailRule::Fractional => empirical_cvar(risks, params.alpha),
            TailRule::Ceil => empirical_cvar_ceil(risks, params.alpha),
        },
        Objective::Mean => {
            check_input(risks, 1.0)?;
            Ok(sample_mean(risks))
        }
        Objective::Worst => {
            check_input(risks, 1.0)?;
            Ok(sample_max(risks))
        }
    }
}

/// Assembles a score from per-scenario (reward, risk) pairs.
pub fn score_from_samples(command: VelocityCommand, samples: Vec<(f64, f64)>, params: &PlannerParams) -> Result<CommandScore> {
    let rewards: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let risks: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let tail = tail_risk(&risks, params)?;
    let mean_reward = sample_mean(&rewards);
    Ok(CommandScore {
        command,
        mean_reward,
        tail_risk: tail,
        objective: mean_reward - params.lambda * tail,
        samples,
    })
}

pub fn score_command(
    u: VelocityCommand,
    batch: &ScenarioBatch,
    start: &Pose,
    goal: Vec2,
    ctx: &RolloutContext,
    params: &PlannerParams,
) -> Result<CommandScore> {
    let samples = batch
        .scenarios
        .iter()
        .map(|s| {
            let rollout = rollout_command(u, start, s, ctx);
            (
                progress_in(&rollout, start, goal, ctx),
                trajectory_risk(&rollout, params.c_safe),
            )
        })
        .collect();
    score_from_samples(u, samples, params)
}

/// Deterministic preference between two scored commands: higher score, then
/// smaller |ω|, then speed closer to v_max/2, then earlier position.
pub fn prefer(a: (f64, VelocityCommand, usize), b: (f64, VelocityCommand, usize), v_max: f64) -> Ordering {
    let half = 0.5 * v_max;
    b.0.total_cmp(&a.0)
        .then(a.1.omega.abs().total_cmp(&b.1.omega.abs()))
        .then((a.1.v - half).abs().total_cmp(&(b.1.v - half).abs()))
        .then(a.2.cmp(&b.2))
}

/// Index of the preferred entry under [`prefer`].
pub fn best_index(entries: &[(f64, VelocityCommand)], v_max: f64) -> Option<usize> {
    (0..entries.len()).min_by(|&i, &j| prefer((entries[i].0, entries[i].1, i), (entries[j].0, entries[j].1, j), v_max))
}

/// Nominal command: the argmax of the objective over the lattice.
pub fn select_command(
    robot: &Pose,
    goal: Vec2,
    lattice: &CommandLattice,
    batch: &ScenarioBatch,
    ctx: &RolloutContext,
    params: &PlannerParams,
    v_max: f64,
) -> Result<(VelocityCommand, Vec<CommandScore>)> {
    let scores = lattice
        .commands()
        .iter()
        .map(|&u| score_command(u, batch, robot, goal, ctx, params))
        .collect::<Result<Vec<_>>>()?;
    let nominal = select_from_scores(&scores, v_max)?;
    Ok((nominal, scores))
}

pub fn select_from_scores(scores: &[CommandScore], v_max: f64) -> Result<VelocityCommand> {
    let entries: Vec<(f64, VelocityCommand)> = scores.iter().map(|s| (s.objective, s.command)).collect();
    best_index(&entries, v_max)
        .map(|i| entries[i].1)
        .ok_or_else(|| Error::Usage("no commands to select from".into()))
}
