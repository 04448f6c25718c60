//! Posterior-mixture scenario sampling and constant-command robot rollouts.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::belief::{sample_velocity, BeliefMap, Conjecture, Posterior, SampledObstacle};
use crate::error::{Error, Result};
use crate::geometry::{clearance, goal_distance, step_unicycle, Disc, Pose, Vec2, VelocityCommand};
use crate::rng::{substream, tag};
use crate::navigation::GoalField;
use crate::world::StaticMap;

/// Everything the planner knows at a decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationState {
    pub map: StaticMap,
    pub family: Vec<Conjecture>,
    pub beliefs: BeliefMap,
    pub posterior: Posterior,
    pub goal: Vec2,
    pub robot: Pose,
}

/// Static quantities needed to roll the robot forward.
#[derive(Debug, Clone, Copy)]
pub struct RolloutContext<'a> {
    pub map: &'a StaticMap,
    pub robot_radius: f64,
    pub dt: f64,
    pub empty_clearance: f64,
    /// Route-aware goal distance for progress; Euclidean when absent.
    pub goal_field: Option<&'a GoalField>,
}

impl RolloutContext<'_> {
    pub fn goal_distance(&self, pose: &Pose, goal: Vec2) -> f64 {
        match self.goal_field {
            Some(f) => f.distance(pose.position()),
            None => goal_distance(pose, goal),
        }
    }
}

/// One sampled obstacle future.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub conjecture: usize,
    pub model: Conjecture,
    pub initial: Vec<SampledObstacle>,
    /// Obstacle positions at steps 1..=H, computed with the robot held at
    /// its decision-time pose.
    pub trajectory: Vec<Vec<Vec2>>,
    /// Standard-normal process noise per step and obstacle.
    pub noise: Vec<Vec<Vec2>>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.trajectory.len()
    }

    /// Obstacle positions over the horizon given the robot positions at
    /// steps 0..H-1. Non-reactive scenarios ignore the robot.
    fn obstacle_path(&self, robot_path: &[Vec2], dt: f64) -> Vec<Vec<Vec2>> {
        let mut positions: Vec<Vec2> = self.initial.iter().map(|o| o.position).collect();
        let mut out = Vec::with_capacity(self.noise.len());
        for (k, noise) in self.noise.iter().enumerate() {
            let robot = robot_path[k.min(robot_path.len() - 1)];
            for ((p, o), n) in positions.iter_mut().zip(&self.initial).zip(noise) {
                let v = self.model.velocity(*p, o.velocity, robot);
                *p += (v + *n * self.model.process_noise) * dt;
            }
            out.push(positions.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBatch {
    pub scenarios: Vec<Scenario>,
    pub step: u32,
    pub seed: u64,
}

impl ScenarioBatch {
    pub fn conjecture_histogram(&self, family_size: usize) -> Vec<usize> {
        let mut counts = vec![0; family_size];
        for s in &self.scenarios {
            counts[s.conjecture] += 1;
        }
        counts
    }
}

/// Indices of the `top_k` heaviest conjectures with renormalized weights.
pub fn top_k_mixture(posterior: &Posterior, top_k: usize) -> Vec<(usize, f64)> {
    let mut ranked: Vec<usize> = (0..posterior.len()).collect();
    ranked.sort_by(|&a, &b| posterior.weights[b].total_cmp(&posterior.weights[a]).then(a.cmp(&b)));
    ranked.truncate(top_k);
    let mass: f64 = ranked.iter().map(|&i| posterior.weights[i]).sum();
    ranked.into_iter().map(|i| (i, posterior.weights[i] / mass)).collect()
}

fn pick(mixture: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(i, w) in mixture {
        acc += w;
        if u < acc {
            return i;
        }
    }
    mixture.last().map(|&(i, _)| i).unwrap_or(0)
}

/// Samples `n` obstacle futures of `horizon` steps from the posterior
/// mixture. Every draw comes from a substream keyed by
/// `(seed, step, scenario, obstacle)`.
pub fn sample_batch(
    info: &InformationState,
    n: usize,
    horizon: usize,
    top_k: usize,
    dt: f64,
    seed: u64,
    step: u32,
) -> Result<ScenarioBatch> {
    if n == 0 || horizon == 0 {
        return Err(Error::Usage("scenario count and horizon must be positive".into()));
    }
    if top_k == 0 || top_k > info.family.len() || info.posterior.len() != info.family.len() {
        return Err(Error::Usage(format!(
            "top_k {top_k} invalid for a family of {}",
            info.family.len()
        )));
    }
    let mixture = top_k_mixture(&info.posterior, top_k);
    let robot = [info.robot.position()];
    let scenarios = (0..n)
        .map(|i| {
            let key = [tag::SCENARIO, step as u64, i as u64];
            let u: f64 = substream(seed, &[key[0], key[1], key[2], u64::MAX]).random();
            let conjecture = pick(&mixture, u);
            let mut initial = Vec::with_capacity(info.beliefs.len());
            let mut noise = vec![Vec::with_capacity(info.beliefs.len()); horizon];
            for (&id, belief) in &info.beliefs {
                let mut rng = substream(seed, &[key[0], key[1], key[2], id as u64]);
                initial.push(SampledObstacle {
                    id,
                    position: belief.last_position,
                    velocity: sample_velocity(belief, &mut rng),
                    radius: belief.radius,
                });
                for step_noise in noise.iter_mut() {
                    step_noise.push(Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
                }
            }
            let mut scenario = Scenario {
                conjecture,
                model: info.family[conjecture],
                initial,
                trajectory: Vec::new(),
                noise,
            };
            scenario.trajectory = scenario.obstacle_path(&robot, dt);
            scenario
        })
        .collect();
    Ok(ScenarioBatch { scenarios, step, seed })
}

/// Robot held at one command against one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotRollout {
    pub poses: Vec<Pose>,
    pub clearances: Vec<f64>,
}

impl RobotRollout {
    pub fn final_pose(&self, start: &Pose) -> Pose {
        self.poses.last().copied().unwrap_or(*start)
    }

    pub fn min_clearance(&self) -> f64 {
        self.clearances.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn rollout_command(u: VelocityCommand, start: &Pose, scenario: &Scenario, ctx: &RolloutContext) -> RobotRollout {
    let h = scenario.horizon();
    let mut poses = Vec::with_capacity(h);
    let mut pose = *start;
    for _ in 0..h {
        pose = step_unicycle(pose, u, ctx.dt);
        poses.push(pose);
    }
    let reacted;
    let obstacles = if scenario.model.is_reactive() {
        let path: Vec<Vec2> = std::iter::once(start.position())
            .chain(poses.iter().map(Pose::position))
            .collect();
        reacted = scenario.obstacle_path(&path, ctx.dt);
        &reacted
    } else {
        &scenario.trajectory
    };
    let clearances = poses
        .iter()
        .zip(obstacles)
        .map(|(p, obs)| {
            let discs: Vec<Disc> = obs
                .iter()
                .zip(&scenario.initial)
                .map(|(&c, o)| Disc::new(c, o.radius))
                .collect();
            clearance(
                &Disc::new(p.position(), ctx.robot_radius),
                &discs,
                &ctx.map.walls,
                ctx.empty_clearance,
            )
        })
        .collect::<Vec<f64>>();
    // contact is absorbing: the robot does not continue through what it hit
    if let Some(k) = clearances.iter().position(|&c| c < 0.0) {
        let stuck = poses[k];
        poses[k..].fill(stuck);
    }
    RobotRollout { poses, clearances }
}

/// Reduction in goal distance over the rollout.
pub fn progress_reward(rollout: &RobotRollout, start: &Pose, goal: Vec2) -> f64 {
    goal_distance(start, goal) - goal_distance(&rollout.final_pose(start), goal)
}

/// Progress measured with the context's goal distance.
pub fn progress_in(rollout: &RobotRollout, start: &Pose, goal: Vec2, ctx: &RolloutContext) -> f64 {
    ctx.goal_distance(start, goal) - ctx.goal_distance(&rollout.final_pose(start), goal)
}

/// Per-step risk `clamp((c_safe − c) / c_safe, 0, 1)`.
pub fn step_risk(clearance: f64, c_safe: f64) -> f64 {
    ((c_safe - clearance) / c_safe).clamp(0.0, 1.0)
}

/// Worst per-step risk along the rollout, in [0, 1].
pub fn trajectory_risk(rollout: &RobotRollout, c_safe: f64) -> f64 {
    rollout
        .clearances
        .iter()
        .map(|&c| step_risk(c, c_safe))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{default_family, ConjectureKind, Cov2, ObstacleBelief};
    use crate::geometry::{WallSegment, DEFAULT_EMPTY_CLEARANCE};
    use crate::world::Bounds;
    use proptest::prelude::*;

    fn open_map() -> StaticMap {
        StaticMap {
            walls: Vec::new(),
            bounds: Bounds {
                min: Vec2::new(-50.0, -50.0),
                max: Vec2::new(50.0, 50.0),
            },
        }
    }

    fn ctx(map: &StaticMap) -> RolloutContext<'_> {
        RolloutContext {
            map,
            robot_radius: 0.25,
            dt: 0.1,
            empty_clearance: DEFAULT_EMPTY_CLEARANCE,
            goal_field: None,
        }
    }

    fn info_with(beliefs: BeliefMap, weights: Vec<f64>, family: Vec<Conjecture>) -> InformationState {
        InformationState {
            map: open_map(),
            family,
            beliefs,
            posterior: Posterior { weights },
            goal: Vec2::new(10.0, 0.0),
            robot: Pose::new(0.0, 0.0, 0.0),
        }
    }

    fn one_belief(pos: Vec2, vel: Vec2, var: f64) -> BeliefMap {
        let mut m = BeliefMap::new();
        m.insert(
            0,
            ObstacleBelief {
                velocity_mean: vel,
                velocity_cov: Cov2::isotropic(var),
                last_position: pos,
                radius: 0.3,
                staleness: 0,
            },
        );
        m
    }

    fn static_scenario(pos: Vec2, h: usize) -> Scenario {
        Scenario {
            conjecture: 0,
            model: Conjecture::new(ConjectureKind::Static, 0.0),
            initial: vec![SampledObstacle {
                id: 0,
                position: pos,
                velocity: Vec2::ZERO,
                radius: 0.3,
            }],
            trajectory: vec![vec![pos]; h],
            noise: vec![vec![Vec2::ZERO]; h],
        }
    }

    #[test]
    fn static_point_mass_gives_frozen_futures() {
        let family = vec![Conjecture::new(ConjectureKind::Static, 0.0)];
        let info = info_with(one_belief(Vec2::new(3.0, 1.0), Vec2::new(1.0, 0.0), 0.5), vec![1.0], family);
        let batch = sample_batch(&info, 16, 10, 1, 0.1, 5, 0).unwrap();
        for s in &batch.scenarios {
            assert_eq!(s.horizon(), 10);
            assert!(s.trajectory.iter().all(|step| step[0] == Vec2::new(3.0, 1.0)));
        }
    }

    #[test]
    fn conjecture_counts_are_binomial() {
        let family = vec![
            Conjecture::new(ConjectureKind::Static, 0.0),
            Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.0 }, 0.0),
        ];
        let info = info_with(one_belief(Vec2::new(3.0, 1.0), Vec2::ZERO, 0.0), vec![0.7, 0.3], family);
        let sd = (100.0f64 * 0.7 * 0.3).sqrt();
        for step in 0..20 {
            let batch = sample_batch(&info, 100, 5, 2, 0.1, 1, step).unwrap();
            let h = batch.conjecture_histogram(2);
            assert!((h[0] as f64 - 70.0).abs() <= 3.0 * sd, "{h:?}");
        }
    }

    #[test]
    fn marginal_frequencies_match_posterior() {
        let family = default_family();
        let weights = vec![0.05, 0.1, 0.4, 0.2, 0.15, 0.1];
        let info = info_with(one_belief(Vec2::new(3.0, 1.0), Vec2::ZERO, 0.01), weights.clone(), family);
        let n = 10_000;
        let batch = sample_batch(&info, n, 1, 6, 0.1, 3, 0).unwrap();
        let h = batch.conjecture_histogram(6);
        for (c, w) in h.iter().zip(&weights) {
            let sd = (n as f64 * w * (1.0 - w)).sqrt();
            assert!((*c as f64 - n as f64 * w).abs() <= 3.0 * sd, "{h:?}");
        }
    }

    #[test]
    fn top_k_restricts_support() {
        let family = default_family();
        let weights = vec![0.05, 0.1, 0.4, 0.2, 0.15, 0.1];
        let info = info_with(one_belief(Vec2::new(3.0, 1.0), Vec2::ZERO, 0.01), weights, family);
        let batch = sample_batch(&info, 500, 1, 2, 0.1, 3, 0).unwrap();
        let h = batch.conjecture_histogram(6);
        assert_eq!(h[0] + h[1] + h[4] + h[5], 0);
        assert!(h[2] > h[3]);
        assert!(sample_batch(&info, 5, 1, 0, 0.1, 3, 0).is_err());
        assert!(sample_batch(&info, 5, 1, 7, 0.1, 3, 0).is_err());
    }

    #[test]
    fn batches_are_reproducible() {
        let info = info_with(
            one_belief(Vec2::new(3.0, 1.0), Vec2::new(-0.5, 0.2), 0.2),
            Posterior::uniform(6).weights,
            default_family(),
        );
        let a = sample_batch(&info, 32, 12, 6, 0.1, 77, 4).unwrap();
        let b = sample_batch(&info, 32, 12, 6, 0.1, 77, 4).unwrap();
        assert_eq!(a, b);
        // a scenario does not depend on how many were drawn before it
        let small = sample_batch(&info, 8, 12, 6, 0.1, 77, 4).unwrap();
        assert_eq!(small.scenarios[..], a.scenarios[..8]);
    }

    #[test]
    fn stationary_robot_keeps_current_clearance() {
        let map = open_map();
        let s = static_scenario(Vec2::new(2.0, 0.0), 8);
        let r = rollout_command(VelocityCommand::STOP, &Pose::default(), &s, &ctx(&map));
        assert!(r.clearances.iter().all(|&c| (c - 1.45).abs() < 1e-12));
    }

    #[test]
    fn driving_at_obstacle_strictly_decreases_clearance() {
        let map = open_map();
        let s = static_scenario(Vec2::new(5.0, 0.0), 20);
        let r = rollout_command(VelocityCommand::new(1.0, 0.0), &Pose::default(), &s, &ctx(&map));
        assert!(r.clearances.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn crossing_minimum_at_geometric_crossing_step() {
        let map = open_map();
        let h = 30;
        // obstacle starts 2 m to the side of x = 1.5 and crosses at 1 m/s,
        // robot drives along x at 1 m/s: both reach (1.5, 0) at step 15
        let init = SampledObstacle {
            id: 0,
            position: Vec2::new(1.5, -1.5),
            velocity: Vec2::new(0.0, 1.0),
            radius: 0.3,
        };
        let model = Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.0 }, 0.0);
        let mut s = Scenario {
            conjecture: 2,
            model,
            initial: vec![init],
            trajectory: Vec::new(),
            noise: vec![vec![Vec2::ZERO]; h],
        };
        s.trajectory = s.obstacle_path(&[Vec2::ZERO], 0.1);
        let r = rollout_command(VelocityCommand::new(1.0, 0.0), &Pose::default(), &s, &ctx(&map));
        let brute = (1..=h)
            .map(|k| {
                let t = k as f64 * 0.1;
                let robot = Vec2::new(t, 0.0);
                let obstacle = Vec2::new(1.5, -1.5 + t);
                (k, robot.distance(obstacle) - 0.55)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let (argmin, _) = r
            .clearances
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        assert_eq!(argmin + 1, brute.0);
        assert_eq!(brute.0, 15);
        assert!((r.clearances[argmin] - brute.1).abs() < 1e-9);
    }

    #[test]
    fn reactive_scenarios_follow_the_rollout_robot() {
        let map = open_map();
        let model = Conjecture::new(ConjectureKind::Aggressive { pursuit_gain: 1.0 }, 0.0);
        let mut s = static_scenario(Vec2::new(3.0, 3.0), 10);
        s.model = model;
        s.initial[0].velocity = Vec2::new(1.0, 0.0);
        let still = rollout_command(VelocityCommand::STOP, &Pose::default(), &s, &ctx(&map));
        let moving = rollout_command(VelocityCommand::new(1.0, 0.0), &Pose::default(), &s, &ctx(&map));
        assert_ne!(still.clearances, moving.clearances);
    }

    #[test]
    fn progress_examples() {
        let map = open_map();
        let s = static_scenario(Vec2::new(40.0, 40.0), 10);
        let start = Pose::default();
        let goal = Vec2::new(5.0, 0.0);
        let r = rollout_command(VelocityCommand::STOP, &start, &s, &ctx(&map));
        assert_eq!(progress_reward(&r, &start, goal), 0.0);
        let r = rollout_command(VelocityCommand::new(1.0, 0.0), &start, &s, &ctx(&map));
        assert!((progress_reward(&r, &start, goal) - 1.0).abs() < 1e-12);

        // quarter arc of radius 1 over H·dt = π/2 s ends at (1, 1)
        let h = 50;
        let dt = std::f64::consts::FRAC_PI_2 / h as f64;
        let arc_ctx = RolloutContext { dt, ..ctx(&map) };
        let s = static_scenario(Vec2::new(40.0, 40.0), h);
        let r = rollout_command(VelocityCommand::new(1.0, 1.0), &start, &s, &arc_ctx);
        let expected = 5.0 - (16.0f64 + 1.0).sqrt();
        assert!((progress_reward(&r, &start, goal) - expected).abs() < 1e-9);
    }

    #[test]
    fn risk_examples() {
        let mk = |c: Vec<f64>| RobotRollout {
            poses: vec![Pose::default(); c.len()],
            clearances: c,
        };
        assert_eq!(trajectory_risk(&mk(vec![0.6, 0.9, 0.5]), 0.5), 0.0);
        assert_eq!(trajectory_risk(&mk(vec![0.6, -0.1, 0.5]), 0.5), 1.0);
        assert_eq!(trajectory_risk(&mk(vec![0.6, 0.0, 0.5]), 0.5), 1.0);
        assert_eq!(trajectory_risk(&mk(vec![0.6, 0.25, 0.5]), 0.5), 0.5);
    }

    #[test]
    fn walls_enter_rollout_clearance() {
        let mut map = open_map();
        map.walls.push(WallSegment::new(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0)));
        let s = static_scenario(Vec2::new(40.0, 40.0), 3);
        let r = rollout_command(VelocityCommand::STOP, &Pose::default(), &s, &ctx(&map));
        assert!(r.clearances.iter().all(|&c| (c - 0.75).abs() < 1e-12));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn risk_monotone_under_lowering(cs in proptest::collection::vec(-1.0..2.0f64, 1..20),
                                        idx in 0usize..20, drop in 0.0..1.0f64) {
            let mk = |c: Vec<f64>| RobotRollout { poses: vec![Pose::default(); c.len()], clearances: c };
            let before = trajectory_risk(&mk(cs.clone()), 0.5);
            let mut lowered = cs.clone();
            let i = idx % lowered.len();
            lowered[i] -= drop;
            prop_assert!(trajectory_risk(&mk(lowered), 0.5) >= before);
            prop_assert!((0.0..=1.0).contains(&before));
        }

        #[test]
        fn reward_bounded(v in -1.0..1.0f64, w in -1.5..1.5f64, h in -3.1..3.1f64,
                          gx in -20.0..20.0f64, gy in -20.0..20.0f64, steps in 1usize..30) {
            let map = open_map();
            let s = static_scenario(Vec2::new(40.0, 40.0), steps);
            let start = Pose::new(0.5, -0.5, h);
            let r = rollout_command(VelocityCommand::new(v, w), &start, &s, &ctx(&map));
            let bound = 1.0 * steps as f64 * 0.1;
            prop_assert!(progress_reward(&r, &start, Vec2::new(gx, gy)).abs() <= bound + 1e-9);
        }
    }
}
