//! Conjecture family, tracked obstacle beliefs, predictive likelihoods and
//! the tempered, floored posterior over conjectures.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2};
use crate::world::Observation;

/// How a conjecture believes nearby obstacles move over the next few steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConjectureKind {
    Static,
    ConstantVelocity { speed_scale: f64 },
    /// Slows by `decel` once the robot is within `yield_distance`.
    Yielding { yield_distance: f64, decel: f64 },
    /// Turns its velocity toward the robot with blend weight `pursuit_gain`.
    Aggressive { pursuit_gain: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conjecture {
    #[serde(flatten)]
    pub kind: ConjectureKind,
    /// Per-step velocity noise used when rolling out scenarios, m/s.
    pub process_noise: f64,
}

impl Conjecture {
    pub fn new(kind: ConjectureKind, process_noise: f64) -> Self {
        Self { kind, process_noise }
    }

    /// Whether predictions depend on where the robot is.
    pub fn is_reactive(&self) -> bool {
        matches!(
            self.kind,
            ConjectureKind::Yielding { .. } | ConjectureKind::Aggressive { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ConjectureKind::Static => true,
            ConjectureKind::ConstantVelocity { speed_scale } => speed_scale.is_finite() && speed_scale >= 0.0,
            ConjectureKind::Yielding { yield_distance, decel } => {
                yield_distance.is_finite() && yield_distance >= 0.0 && decel.is_finite() && decel >= 0.0
            }
            ConjectureKind::Aggressive { pursuit_gain } => {
                pursuit_gain.is_finite() && (0.0..=1.0).contains(&pursuit_gain)
            }
        };
        if ok && self.process_noise.is_finite() && self.process_noise >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid conjecture parameters: {self:?}")))
        }
    }

    /// Velocity this conjecture assigns to an obstacle at `position` whose
    /// tracked velocity is `nominal`, with the robot at `robot`.
    pub fn velocity(&self, position: Vec2, nominal: Vec2, robot: Vec2) -> Vec2 {
        match self.kind {
            ConjectureKind::Static => Vec2::ZERO,
            ConjectureKind::ConstantVelocity { speed_scale } => nominal * speed_scale,
            ConjectureKind::Yielding { yield_distance, decel } => {
                if position.distance(robot) < yield_distance {
                    nominal * decel
                } else {
                    nominal
                }
            }
            ConjectureKind::Aggressive { pursuit_gain } => {
                let to_robot = robot - position;
                let d = to_robot.norm();
                if d == 0.0 {
                    return nominal;
                }
                // speed-preserving blend toward the robot
                let pursuit = to_robot * (nominal.norm() / d);
                nominal * (1.0 - pursuit_gain) + pursuit * pursuit_gain
            }
        }
    }
}

/// static; constant velocity at 0.5, 1.0, 1.5; yielding; aggressive.
pub fn default_family() -> Vec<Conjecture> {
    let noise = 0.1;
    vec![
        Conjecture::new(ConjectureKind::Static, noise),
        Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 0.5 }, noise),
        Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.0 }, noise),
        Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.5 }, noise),
        Conjecture::new(
            ConjectureKind::Yielding {
                yield_distance: 1.5,
                decel: 0.2,
            },
            noise,
        ),
        Conjecture::new(ConjectureKind::Aggressive { pursuit_gain: 0.5 }, noise),
    ]
}

/// Symmetric 2×2 covariance stored as (xx, xy, yy).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const ZERO: Cov2 = Cov2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn isotropic(var: f64) -> Self {
        Self { xx: var, xy: 0.0, yy: var }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            xx: self.xx * s,
            xy: self.xy * s,
            yy: self.yy * s,
        }
    }

    pub fn plus_isotropic(self, var: f64) -> Self {
        Self {
            xx: self.xx + var,
            xy: self.xy,
            yy: self.yy + var,
        }
    }

    pub fn is_psd(&self) -> bool {
        self.xx >= 0.0 && self.yy >= 0.0 && self.xx * self.yy - self.xy * self.xy >= -1e-15
    }

    /// Lower Cholesky factor (l11, l21, l22); tolerates semidefinite input.
    pub fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.xx.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { self.xy / l11 } else { 0.0 };
        let l22 = (self.yy - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    }
}

/// Tracked state of one obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBelief {
    pub velocity_mean: Vec2,
    pub velocity_cov: Cov2,
    pub last_position: Vec2,
    pub radius: f64,
    /// Steps since the obstacle was last observed.
    pub staleness: u32,
}

/// Beliefs keyed by obstacle id; ordered so iteration is deterministic.
pub type BeliefMap = BTreeMap<usize, ObstacleBelief>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackingParams {
    /// Exponential smoothing weight on the newest finite-difference velocity.
    pub smoothing: f64,
    /// Velocity variance assigned on first sighting, (m/s)².
    pub initial_variance: f64,
    /// Variance added per step an obstacle goes unseen, (m/s)².
    pub staleness_inflation: f64,
    /// Position noise assumed in finite differences, m.
    pub position_noise: f64,
    /// Variance floor after each update, (m/s)².
    pub min_variance: f64,
    /// Beliefs older than this many unseen steps are dropped.
    pub max_staleness: u32,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            smoothing: 0.5,
            initial_variance: 1.0,
            staleness_inflation: 0.05,
            position_noise: 0.02,
            min_variance: 1e-4,
            max_staleness: 20,
        }
    }
}

/// One-step position prediction for an obstacle under `conj`.
pub fn predict_obstacle(conj: &Conjecture, belief: &ObstacleBelief, robot: &Pose, dt: f64) -> Vec2 {
    let v = conj.velocity(belief.last_position, belief.velocity_mean, robot.position());
    belief.last_position + v * dt
}

/// Log of the isotropic 2D Gaussian density of each visible obstacle's
/// observed position around the conjecture's prediction, summed.
pub fn log_likelihood(
    conj: &Conjecture,
    beliefs: &BeliefMap,
    obs: &Observation,
    robot: &Pose,
    dt: f64,
    sigma_like: f64,
) -> f64 {
    let var = sigma_like * sigma_like;
    let log_norm = -(2.0 * PI * var).ln();
    obs.obstacles
        .iter()
        .filter_map(|o| beliefs.get(&o.id).map(|b| (o, b)))
        .map(|(o, b)| {
            let steps = (b.staleness + 1) as f64;
            let predicted = predict_obstacle(conj, b, robot, dt * steps);
            log_norm - (o.position - predicted).norm_sq() / (2.0 * var)
        })
        .sum()
}

/// Predictive likelihood, bounded below by the smallest positive double so
/// it is strictly positive for every finite input.
pub fn likelihood(
    conj: &Conjecture,
    beliefs: &BeliefMap,
    obs: &Observation,
    robot: &Pose,
    dt: f64,
    sigma_like: f64,
) -> f64 {
    log_likelihood(conj, beliefs, obs, robot, dt, sigma_like)
        .exp()
        .max(f64::MIN_POSITIVE)
}

/// Probability weights over the conjecture family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub weights: Vec<f64>,
}

impl Posterior {
    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Index of the largest weight; lowest index wins ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }
}

/// Tempered Bayes update from log-likelihoods, followed by the floor.
pub fn update_posterior_log(prior: &Posterior, log_likelihoods: &[f64], tau: f64, floor: f64) -> Result<Posterior> {
    let n = prior.len();
    if log_likelihoods.len() != n || n == 0 {
        return Err(Error::Usage(format!(
            "posterior has {n} entries but {} likelihoods were given",
            log_likelihoods.len()
        )));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Usage(format!("temperature must be positive, got {tau}")));
    }
    if !(0.0..1.0 / n as f64).contains(&floor) {
        return Err(Error::Usage(format!("floor {floor} outside [0, 1/{n})")));
    }
    if let Some(bad) = log_likelihoods.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("non-finite log-likelihood {bad}")));
    }
    let logs: Vec<f64> = prior
        .weights
        .iter()
        .zip(log_likelihoods)
        .map(|(&w, &l)| w.ln() + l / tau)
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    apply_floor(&mut weights, floor);
    Ok(Posterior { weights })
}

/// Tempered Bayes update `q ∝ prior · ℓ^(1/τ)` with a probability floor.
pub fn update_posterior(prior: &Posterior, likelihoods: &[f64], tau: f64, floor: f64) -> Result<Posterior> {
    if let Some(bad) = likelihoods.iter().find(|l| !l.is_finite()) {
        return Err(Error::Numeric(format!("non-finite likelihood {bad}")));
    }
    if let Some(bad) = likelihoods.iter().find(|&&l| l <= 0.0) {
        return Err(Error::Usage(format!("likelihoods must be positive, got {bad}")));
    }
    let logs: Vec<f64> = likelihoods.iter().map(|l| l.ln()).collect();
    update_posterior_log(prior, &logs, tau, floor)
}

/// Raises entries below `floor` to exactly `floor` and rescales the rest to
/// keep unit mass. Repeats only if rescaling pushed another entry under.
fn apply_floor(weights: &mut [f64], floor: f64) {
    if floor == 0.0 {
        return;
    }
    let mut clamped = vec![false; weights.len()];
    loop {
        let mut changed = false;
        for (w, c) in weights.iter_mut().zip(clamped.iter_mut()) {
            if !*c && *w < floor {
                *c = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let free_mass: f64 = weights.iter().zip(&clamped).filter(|(_, c)| !**c).map(|(w, _)| w).sum();
        let k = clamped.iter().filter(|c| **c).count() as f64;
        let scale = (1.0 - k * floor) / free_mass;
        for (w, c) in weights.iter_mut().zip(&clamped) {
            *w = if *c { floor } else { *w * scale };
        }
    }
}

/// Prediction–correction update of the tracked obstacle beliefs.
pub fn track_obstacles(beliefs: &BeliefMap, obs: &Observation, dt: f64, params: &TrackingParams) -> BeliefMap {
    let lambda = params.smoothing;
    let mut next = BeliefMap::new();
    for o in &obs.obstacles {
        let updated = match beliefs.get(&o.id) {
            None => ObstacleBelief {
                velocity_mean: Vec2::ZERO,
                velocity_cov: Cov2::isotropic(params.initial_variance),
                last_position: o.position,
                radius: o.radius,
                staleness: 0,
            },
            Some(b) => {
                let elapsed = dt * (b.staleness + 1) as f64;
                let fd = (o.position - b.last_position) * (1.0 / elapsed);
                let fd_var = 2.0 * params.position_noise * params.position_noise / (elapsed * elapsed);
                let keep = (1.0 - lambda) * (1.0 - lambda);
                let cov = b
                    .velocity_cov
                    .scaled(keep)
                    .plus_isotropic(lambda * lambda * fd_var + params.min_variance * (1.0 - keep));
                ObstacleBelief {
                    velocity_mean: b.velocity_mean * (1.0 - lambda) + fd * lambda,
                    velocity_cov: cov,
                    last_position: o.position,
                    radius: o.radius,
                    staleness: 0,
                }
            }
        };
        next.insert(o.id, updated);
    }
    for (&id, b) in beliefs {
        if next.contains_key(&id) || b.staleness >= params.max_staleness {
            continue;
        }
        next.insert(
            id,
            ObstacleBelief {
                staleness: b.staleness + 1,
                velocity_cov: b.velocity_cov.plus_isotropic(params.staleness_inflation),
                ..*b
            },
        );
    }
    next
}

/// One sampled obstacle in a sampled current moving-obstacle state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledObstacle {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
}

/// Draws a velocity from a belief's Gaussian.
pub fn sample_velocity(belief: &ObstacleBelief, rng: &mut impl Rng) -> Vec2 {
    let (l11, l21, l22) = belief.velocity_cov.cholesky();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    belief.velocity_mean + Vec2::new(l11 * z1, l21 * z1 + l22 * z2)
}

/// Samples a full current obstacle state from the beliefs.
pub fn sample_obstacle_state(beliefs: &BeliefMap, rng: &mut impl Rng) -> Vec<SampledObstacle> {
    beliefs
        .iter()
        .map(|(&id, b)| SampledObstacle {
            id,
            position: b.last_position,
            velocity: sample_velocity(b, rng),
            radius: b.radius,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::world::ObservedObstacle;
    use proptest::prelude::*;

    fn belief(pos: Vec2, vel: Vec2) -> ObstacleBelief {
        ObstacleBelief {
            velocity_mean: vel,
            velocity_cov: Cov2::isotropic(0.01),
            last_position: pos,
            radius: 0.3,
            staleness: 0,
        }
    }

    fn obs_at(points: &[(usize, Vec2)]) -> Observation {
        Observation {
            robot: Pose::default(),
            obstacles: points
                .iter()
                .map(|&(id, position)| ObservedObstacle { id, position, radius: 0.3 })
                .collect(),
            step: 1,
        }
    }

    #[test]
    fn predictions_follow_conjecture_semantics() {
        let b = belief(Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0));
        let far = Pose::new(100.0, 0.0, 0.0);
        let st = Conjecture::new(ConjectureKind::Static, 0.0);
        assert_eq!(predict_obstacle(&st, &b, &far, 0.1), Vec2::ZERO);
        let cv = Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.0 }, 0.0);
        assert_eq!(predict_obstacle(&cv, &b, &far, 0.1), Vec2::new(0.1, 0.0));

        let y = Conjecture::new(
            ConjectureKind::Yielding {
                yield_distance: 1.5,
                decel: 0.2,
            },
            0.0,
        );
        let near = Pose::new(0.0, 1.5 - 1e-6, 0.0);
        let p = predict_obstacle(&y, &b, &near, 0.1);
        assert!((p.x - 0.02).abs() < 1e-15 && p.y == 0.0);
        assert_eq!(predict_obstacle(&y, &b, &far, 0.1), Vec2::new(0.1, 0.0));

        let ag = Conjecture::new(ConjectureKind::Aggressive { pursuit_gain: 0.5 }, 0.0);
        let above = Pose::new(0.0, 5.0, 0.0);
        let p = predict_obstacle(&ag, &b, &above, 0.1);
        assert!((p.x - 0.05).abs() < 1e-15 && (p.y - 0.05).abs() < 1e-15);
    }

    #[test]
    fn likelihood_examples() {
        let cv = Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.0 }, 0.0);
        let mut beliefs = BeliefMap::new();
        beliefs.insert(0, belief(Vec2::ZERO, Vec2::new(1.0, 0.0)));
        let robot = Pose::new(50.0, 50.0, 0.0);
        let exact = obs_at(&[(0, Vec2::new(0.1, 0.0))]);
        let l = likelihood(&cv, &beliefs, &exact, &robot, 0.1, 0.1);
        assert!((l - 1.0 / (2.0 * PI * 0.01)).abs() < 1e-9);
        assert!((l - 15.9155).abs() < 1e-4);

        let left = obs_at(&[(0, Vec2::new(0.0, 0.0))]);
        let right = obs_at(&[(0, Vec2::new(0.2, 0.0))]);
        assert_eq!(
            likelihood(&cv, &beliefs, &left, &robot, 0.1, 0.1),
            likelihood(&cv, &beliefs, &right, &robot, 0.1, 0.1)
        );

        assert_eq!(likelihood(&cv, &beliefs, &obs_at(&[]), &robot, 0.1, 0.1), 1.0);
        // no history for id 9: contributes a factor of one
        assert_eq!(likelihood(&cv, &beliefs, &obs_at(&[(9, Vec2::ZERO)]), &robot, 0.1, 0.1), 1.0);
    }

    #[test]
    fn likelihood_stays_positive_for_outliers() {
        let st = Conjecture::new(ConjectureKind::Static, 0.0);
        let mut beliefs = BeliefMap::new();
        beliefs.insert(0, belief(Vec2::ZERO, Vec2::ZERO));
        let l = likelihood(&st, &beliefs, &obs_at(&[(0, Vec2::new(1e3, 0.0))]), &Pose::default(), 0.1, 0.01);
        assert!(l > 0.0);
    }

    #[test]
    fn posterior_update_examples() {
        let half = Posterior::uniform(2);
        let q = update_posterior(&half, &[1.0, 1.0], 1.0, 0.0).unwrap();
        assert_eq!(q.weights, vec![0.5, 0.5]);
        let q = update_posterior(&half, &[4.0, 1.0], 1.0, 0.0).unwrap();
        assert!((q.weights[0] - 0.8).abs() < 1e-15 && (q.weights[1] - 0.2).abs() < 1e-15);
        let q = update_posterior(&half, &[4.0, 1.0], 2.0, 0.0).unwrap();
        assert!((q.weights[0] - 2.0 / 3.0).abs() < 1e-15 && (q.weights[1] - 1.0 / 3.0).abs() < 1e-15);
        let q = update_posterior(&half, &[1e6, 1e-6], 1.0, 0.02).unwrap();
        assert_eq!(q.weights[1], 0.02);
        assert!((q.weights[0] - 0.98).abs() < 1e-15);
    }

    #[test]
    fn posterior_update_errors() {
        let half = Posterior::uniform(2);
        assert!(matches!(update_posterior(&half, &[f64::NAN, 1.0], 1.0, 0.0), Err(Error::Numeric(_))));
        assert!(matches!(update_posterior(&half, &[f64::INFINITY, 1.0], 1.0, 0.0), Err(Error::Numeric(_))));
        assert!(update_posterior(&half, &[1.0, 1.0], 0.0, 0.0).is_err());
        assert!(update_posterior(&half, &[1.0, 1.0], 1.0, 0.5).is_err());
        assert!(update_posterior(&half, &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn tracking_examples() {
        let params = TrackingParams {
            smoothing: 1.0,
            position_noise: 0.0,
            ..TrackingParams::default()
        };
        let first = track_obstacles(&BeliefMap::new(), &obs_at(&[(3, Vec2::new(1.0, 1.0))]), 0.1, &params);
        assert_eq!(first[&3].velocity_mean, Vec2::ZERO);
        assert_eq!(first[&3].velocity_cov, Cov2::isotropic(params.initial_variance));
        let second = track_obstacles(&first, &obs_at(&[(3, Vec2::new(1.0, 1.0))]), 0.1, &params);
        assert_eq!(second[&3].velocity_mean, Vec2::ZERO);

        let params = TrackingParams {
            smoothing: 0.5,
            position_noise: 0.0,
            ..TrackingParams::default()
        };
        let mut b = track_obstacles(&BeliefMap::new(), &obs_at(&[(0, Vec2::ZERO)]), 0.1, &params);
        let mut means = Vec::new();
        for k in 1..=3 {
            b = track_obstacles(&b, &obs_at(&[(0, Vec2::new(0.1 * k as f64, 0.0))]), 0.1, &params);
            means.push(b[&0].velocity_mean.x);
        }
        for (k, m) in means.iter().enumerate() {
            let expected = 1.0 - 0.5f64.powi(k as i32 + 1);
            assert!((m - expected).abs() < 1e-12, "update {k}: {m} vs {expected}");
        }
        assert!((means[2] - 0.875).abs() < 1e-12);
    }

    #[test]
    fn unseen_obstacles_age_and_inflate() {
        let params = TrackingParams::default();
        let b = track_obstacles(&BeliefMap::new(), &obs_at(&[(0, Vec2::ZERO)]), 0.1, &params);
        let b2 = track_obstacles(&b, &obs_at(&[]), 0.1, &params);
        assert_eq!(b2[&0].staleness, 1);
        assert!(b2[&0].velocity_cov.xx > b[&0].velocity_cov.xx);
        let mut aged = b2;
        for _ in 0..params.max_staleness + 1 {
            aged = track_obstacles(&aged, &obs_at(&[]), 0.1, &params);
        }
        assert!(aged.is_empty());
    }

    #[test]
    fn sampling_examples() {
        let mut beliefs = BeliefMap::new();
        let mut b = belief(Vec2::new(1.0, 2.0), Vec2::new(0.3, -0.2));
        b.velocity_cov = Cov2::ZERO;
        beliefs.insert(0, b);
        let s = sample_obstacle_state(&beliefs, &mut substream(1, &[0]));
        assert_eq!(s[0].velocity, Vec2::new(0.3, -0.2));
        assert_eq!(s[0].position, Vec2::new(1.0, 2.0));

        beliefs.get_mut(&0).unwrap().velocity_cov = Cov2::isotropic(1.0);
        let a = sample_obstacle_state(&beliefs, &mut substream(42, &[0]));
        let again = sample_obstacle_state(&beliefs, &mut substream(42, &[0]));
        assert_eq!(a, again);
        let locked = a[0].velocity;
        assert!(locked.is_finite() && locked != Vec2::new(0.3, -0.2));

        beliefs.get_mut(&0).unwrap().velocity_cov = Cov2::isotropic(0.04);
        let mut rng = substream(9, &[1]);
        let n = 10_000;
        let draws: Vec<Vec2> = (0..n).map(|_| sample_obstacle_state(&beliefs, &mut rng)[0].velocity).collect();
        let mean = draws.iter().fold(Vec2::ZERO, |a, &d| a + d) * (1.0 / n as f64);
        let var = |f: fn(Vec2) -> f64, m: f64| draws.iter().map(|&d| (f(d) - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let vx = var(|d| d.x, mean.x);
        let vy = var(|d| d.y, mean.y);
        assert!((vx / 0.04 - 1.0).abs() < 0.1, "{vx}");
        assert!((vy / 0.04 - 1.0).abs() < 0.1, "{vy}");
    }

    proptest! {
        #[test]
        fn floor_is_respected(prior in proptest::collection::vec(0.01..1.0f64, 6),
                              logs in proptest::collection::vec(-800.0..50.0f64, 6),
                              tau in 0.1..10.0f64, floor in 0.0..0.08f64) {
            let total: f64 = prior.iter().sum();
            let prior = Posterior { weights: prior.iter().map(|w| w / total).collect() };
            let q = update_posterior_log(&prior, &logs, tau, floor).unwrap();
            let sum: f64 = q.weights.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for &w in &q.weights {
                prop_assert!(w >= floor);
                if floor > 0.0 { prop_assert!(w > 0.0); }
            }
        }

        #[test]
        fn likelihood_positive(x in -1e4..1e4f64, y in -1e4..1e4f64, sigma in 0.001..1.0f64) {
            let cv = Conjecture::new(ConjectureKind::ConstantVelocity { speed_scale: 1.5 }, 0.0);
            let mut beliefs = BeliefMap::new();
            beliefs.insert(0, belief(Vec2::ZERO, Vec2::new(1.0, 0.0)));
            let l = likelihood(&cv, &beliefs, &obs_at(&[(0, Vec2::new(x, y))]), &Pose::default(), 0.1, sigma);
            prop_assert!(l > 0.0);
        }
    }
}
