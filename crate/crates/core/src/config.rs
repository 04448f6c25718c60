//! Single JSON configuration document with one block per module.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::belief::{default_family, Conjecture, TrackingParams};
use crate::controllers::{ControllerKind, DwaParams, GoalPdParams};
use crate::error::{Error, Result};
use crate::filter::FilterParams;
use crate::planner::PlannerParams;
use crate::world::{WorldParams, ENVIRONMENT_NAMES};

/// Version tag of the record and config layout; part of every fingerprint.
pub const SCHEMA_VERSION: &str = "rcsp-record/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeliefParams {
    /// Likelihood temperature τ.
    pub tau: f64,
    /// Probability floor on every conjecture.
    pub floor: f64,
    /// Likelihood scale; `None` uses `sigma_obs + sigma_like_slack`.
    pub sigma_like: Option<f64>,
    pub sigma_like_slack: f64,
    pub tracking: TrackingParams,
    pub family: Vec<Conjecture>,
}

impl Default for BeliefParams {
    fn default() -> Self {
        Self {
            tau: 2.0,
            floor: 0.02,
            sigma_like: None,
            sigma_like_slack: 0.05,
            tracking: TrackingParams::default(),
            family: default_family(),
        }
    }
}

impl BeliefParams {
    pub fn sigma_like(&self, sigma_obs: f64) -> f64 {
        self.sigma_like.unwrap_or(sigma_obs + self.sigma_like_slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricParams {
    /// Clearance below which proximity accumulates safety cost, m.
    pub c_safe: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self { c_safe: 0.5 }
    }
}

/// Experiment definition plus every module's parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub environments: Vec<String>,
    pub controllers: Vec<ControllerKind>,
    pub seeds: Vec<u64>,
    pub world: WorldParams,
    pub belief: BeliefParams,
    pub planner: PlannerParams,
    pub filter: FilterParams,
    pub dwa: DwaParams,
    pub goal_pd: GoalPdParams,
    pub metrics: MetricParams,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            environments: vec!["bottleneck".into(), "warehouse-squeeze".into()],
            controllers: ControllerKind::ALL.to_vec(),
            seeds: (0..30).collect(),
            world: WorldParams::default(),
            belief: BeliefParams::default(),
            planner: PlannerParams::default(),
            filter: FilterParams::default(),
            dwa: DwaParams::default(),
            goal_pd: GoalPdParams::default(),
            metrics: MetricParams::default(),
        }
    }
}

impl SuiteConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: SuiteConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.environments.is_empty() || self.controllers.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("environments, controllers and seeds must be nonempty".into()));
        }
        if let Some(bad) = self.environments.iter().find(|e| !ENVIRONMENT_NAMES.contains(&e.as_str())) {
            return Err(Error::Config(format!("unknown environment '{bad}'")));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let b = &self.belief;
        if b.family.is_empty() {
            return Err(Error::Config("conjecture family is empty".into()));
        }
        for c in &b.family {
            c.validate()?;
        }
        if !(b.tau > 0.0) || !(0.0..1.0 / b.family.len() as f64).contains(&b.floor) {
            return Err(Error::Config("tau must be positive and floor in [0, 1/|family|)".into()));
        }
        if !(b.sigma_like(self.world.sigma_obs) > 0.0) {
            return Err(Error::Config("likelihood scale must be positive".into()));
        }
        if !(b.tracking.smoothing > 0.0 && b.tracking.smoothing <= 1.0) {
            return Err(Error::Config("tracking smoothing must be in (0, 1]".into()));
        }
        self.planner.validate()?;
        if let Some(k) = self.planner.top_k {
            if k > b.family.len() {
                return Err(Error::Config(format!("top_k {k} exceeds family size {}", b.family.len())));
            }
        }
        self.filter.validate()?;
        if !(self.metrics.c_safe > 0.0) {
            return Err(Error::Config("metrics c_safe must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 over the schema version and the serialized config.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(SCHEMA_VERSION.as_bytes());
        hasher.update(serde_json::to_vec(self).expect("config serializes"));
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
