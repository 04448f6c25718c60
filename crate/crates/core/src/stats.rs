//! Independent oracles and statistical checks for the tail-risk estimator.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::{empirical_cvar, sample_mean};
use crate::rng::{substream, tag};

/// Tail integral of the empirical quantile function,
/// `(1/α) ∫_{1−α}^{1} F⁻¹(p) dp`, integrated piece by piece.
pub fn cvar_oracle(risks: &[f64], alpha: f64) -> Result<f64> {
    if risks.is_empty() {
        return Err(Error::Usage("risk sample is empty".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Usage(format!("alpha {alpha} outside (0, 1]")));
    }
    let mut sorted = risks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let lo = 1.0 - alpha;
    let mut total = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let a = i as f64 / n;
        let b = (i + 1) as f64 / n;
        let len = b - a.max(lo);
        if len > 0.0 {
            total += x * len;
        }
    }
    Ok(total / alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Component {
    Point(f64),
    Uniform(f64, f64),
}

impl Component {
    fn cdf(&self, x: f64) -> f64 {
        match *self {
            Component::Point(p) => f64::from(u8::from(x >= p)),
            Component::Uniform(a, b) => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    /// `E[(X − η)⁺]`.
    fn excess(&self, eta: f64) -> f64 {
        match *self {
            Component::Point(p) => (p - eta).max(0.0),
            Component::Uniform(a, b) => {
                if eta <= a {
                    0.5 * (a + b) - eta
                } else if eta >= b {
                    0.0
                } else {
                    (b - eta) * (b - eta) / (2.0 * (b - a))
                }
            }
        }
    }

    fn mean(&self) -> f64 {
        match *self {
            Component::Point(p) => p,
            Component::Uniform(a, b) => 0.5 * (a + b),
        }
    }
}

/// Finite mixture of point masses and uniforms; CVaR is available in
/// closed form through the threshold representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub components: Vec<(f64, Component)>,
}

impl Mixture {
    /// Random mixture of one to three components supported on `[0, scale]`.
    pub fn random(rng: &mut impl Rng, scale: f64) -> Self {
        let k = rng.random_range(1..=3usize);
        let mut raw: Vec<(f64, Component)> = (0..k)
            .map(|_| {
                let w: f64 = rng.random::<f64>() + 0.05;
                let c = if rng.random::<bool>() {
                    Component::Point(scale * rng.random::<f64>())
                } else {
                    let a: f64 = rng.random();
                    let b: f64 = rng.random();
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    Component::Uniform(scale * lo, scale * (hi + 1e-3).min(1.0))
                };
                (w, c)
            })
            .collect();
        let total: f64 = raw.iter().map(|(w, _)| w).sum();
        for (w, _) in raw.iter_mut() {
            *w /= total;
        }
        Mixture { components: raw }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.last().expect("nonempty mixture").1;
        for &(w, c) in &self.components {
            acc += w;
            if u < acc {
                chosen = c;
                break;
            }
        }
        match chosen {
            Component::Point(p) => p,
            Component::Uniform(a, b) => a + (b - a) * v,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|(w, c)| w * c.cdf(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|(w, c)| w * c.mean()).sum()
    }

    fn support(&self) -> (f64, f64) {
        self.components.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, c)| match *c {
            Component::Point(p) => (lo.min(p), hi.max(p)),
            Component::Uniform(a, b) => (lo.min(a), hi.max(b)),
        })
    }

    /// Lower quantile `inf{x : F(x) ≥ p}` by bisection.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        if self.cdf(lo) >= p {
            return lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// `η + E[(X − η)⁺]/α` at the value-at-risk.
    pub fn cvar(&self, alpha: f64) -> f64 {
        if alpha >= 1.0 {
            return self.mean();
        }
        let eta = self.quantile(1.0 - alpha);
        eta + self.components.iter().map(|(w, c)| w * c.excess(eta)).sum::<f64>() / alpha
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub check: String,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub lattice_size: usize,
    pub trials: usize,
    pub violations: usize,
    pub bound: f64,
    pub max_error: f64,
    pub pass: bool,
    /// Indices of violating trials.
    pub violating_trials: Vec<usize>,
}

fn report(
    check: &str,
    n: usize,
    alpha: f64,
    delta: f64,
    lattice_size: usize,
    bound: f64,
    errors: Vec<f64>,
) -> BoundCheckReport {
    let violating_trials: Vec<usize> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > bound)
        .map(|(i, _)| i)
        .collect();
    let trials = errors.len();
    let violations = violating_trials.len();
    BoundCheckReport {
        check: check.into(),
        n,
        alpha,
        delta,
        lattice_size,
        trials,
        violations,
        bound,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        pass: violations as f64 <= delta * trials as f64,
        violating_trials,
    }
}

fn check_args(n: usize, alpha: f64, delta: f64, lattice_size: usize, trials: usize) -> Result<()> {
    if n == 0 || lattice_size == 0 || trials == 0 {
        return Err(Error::Usage("N, lattice size and trials must be positive".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Usage("alpha must be in (0, 1] and delta in (0, 1)".into()));
    }
    Ok(())
}

/// Uniform CVaR approximation bound `(B_G/α)·sqrt(ln(2|U|/δ)/(2N))`.
pub fn cvar_bound(n: usize, alpha: f64, delta: f64, lattice_size: usize, b_g: f64) -> f64 {
    b_g / alpha * ((2.0 * lattice_size as f64 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Objective approximation radius `ε_N`; regret is bounded by `2ε_N`.
pub fn objective_radius(n: usize, alpha: f64, delta: f64, lambda: f64, lattice_size: usize, b_r: f64, b_g: f64) -> f64 {
    (b_r + lambda * b_g / alpha) * ((4.0 * lattice_size as f64 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Monte Carlo check of the uniform CVaR bound on synthetic risks in
/// `[0, b_g]`.
pub fn check_prop_c2(
    n: usize,
    alpha: f64,
    delta: f64,
    lattice_size: usize,
    trials: usize,
    seed: u64,
    b_g: f64,
) -> Result<BoundCheckReport> {
    check_args(n, alpha, delta, lattice_size, trials)?;
    let bound = cvar_bound(n, alpha, delta, lattice_size, b_g);
    let errors = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[tag::VALIDATION, 2, t as u64]);
            let mut sup: f64 = 0.0;
            for _ in 0..lattice_size {
                let dist = Mixture::random(&mut rng, b_g);
                let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
                let err = (empirical_cvar(&xs, alpha)? - dist.cvar(alpha)).abs();
                sup = sup.max(err);
            }
            Ok(sup)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(report("uniform-cvar", n, alpha, delta, lattice_size, bound, errors))
}

/// Monte Carlo check of the regret bound for the empirical maximizer of
/// `mean(R) − λ·CVaR(G)` with rewards in `[0, 1]` and risks in `[0, 1]`.
pub fn check_prop_c3(
    n: usize,
    alpha: f64,
    delta: f64,
    lambda: f64,
    lattice_size: usize,
    trials: usize,
    seed: u64,
) -> Result<BoundCheckReport> {
    check_args(n, alpha, delta, lattice_size, trials)?;
    if !(lambda >= 0.0) {
        return Err(Error::Usage("lambda must be nonnegative".into()));
    }
    let bound = 2.0 * objective_radius(n, alpha, delta, lambda, lattice_size, 1.0, 1.0);
    let regrets = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[tag::VALIDATION, 3, t as u64]);
            let mut population = Vec::with_capacity(lattice_size);
            let mut empirical = Vec::with_capacity(lattice_size);
            for _ in 0..lattice_size {
                let reward = Mixture::random(&mut rng, 1.0);
                let risk = Mixture::random(&mut rng, 1.0);
                population.push(reward.mean() - lambda * risk.cvar(alpha));
                let rs: Vec<f64> = (0..n).map(|_| reward.sample(&mut rng)).collect();
                let gs: Vec<f64> = (0..n).map(|_| risk.sample(&mut rng)).collect();
                empirical.push(sample_mean(&rs) - lambda * empirical_cvar(&gs, alpha)?);
            }
            let argmax = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            let best = population[argmax(&population)];
            Ok(best - population[argmax(&empirical)])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(report("objective-regret", n, alpha, delta, lattice_size, bound, regrets))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub pairs: Vec<(f64, f64)>,
    pub mean_advantage: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bootstrap fraction of resampled mean advantages that are `≤ 0`.
    pub p_nonpositive: f64,
    pub resamples: usize,
}

/// Type-1 (inverse-CDF) percentile of an ascending slice.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Percentile interval and `P(mean ≤ 0)` from a set of resampled means.
pub fn interval_from_means(mut means: Vec<f64>, level: f64) -> (f64, f64, f64) {
    means.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let p0 = means.iter().filter(|&&m| m <= 0.0).count() as f64 / means.len() as f64;
    (percentile_sorted(&means, tail), percentile_sorted(&means, 1.0 - tail), p0)
}

/// Percentile bootstrap over seeds for the mean of `a − b`.
pub fn paired_bootstrap(pairs: &[(f64, f64)], resamples: usize, level: f64, seed: u64) -> Result<PairedComparison> {
    if pairs.is_empty() {
        return Err(Error::Usage("no pairs to compare".into()));
    }
    if resamples < 1000 {
        return Err(Error::Usage("at least 1000 resamples required".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Usage(format!("level {level} outside (0, 1)")));
    }
    let adv: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let n = adv.len();
    let mean_advantage = sample_mean(&adv);
    let mut rng = substream(seed, &[tag::BOOTSTRAP]);
    let means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| adv[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    let (lower, upper, p_nonpositive) = interval_from_means(means, level);
    Ok(PairedComparison {
        pairs: pairs.to_vec(),
        mean_advantage,
        level,
        // percentile intervals can miss the point estimate under heavy skew
        lower: lower.min(mean_advantage),
        upper: upper.max(mean_advantage),
        p_nonpositive,
        resamples,
    })
}
