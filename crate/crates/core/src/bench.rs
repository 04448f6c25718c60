//! Episode and suite runner, metrics, persistence and replay.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{SuiteConfig, SCHEMA_VERSION};
use crate::controllers::{Controller, ControllerKind};
use crate::error::{Error, Result};
use crate::geometry::{Pose, VelocityCommand};
use crate::world::{build_environment_with, observe, step_world, Observation, StepOutcome, WorldState};

pub fn score(success: f64, collision: f64, timeout: f64, safety_cost: f64) -> f64 {
    success - collision - 0.10 * timeout - 0.03 * safety_cost
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v_cmd: f64,
    pub omega_cmd: f64,
    pub v_exec: f64,
    pub omega_exec: f64,
    pub clearance: f64,
    pub cvar_selected: Option<f64>,
    pub posterior_entropy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<Vec<f64>>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: u8,
    pub collision: u8,
    pub timeout: u8,
    pub safety_cost: f64,
    pub min_clearance: f64,
    pub spl: f64,
    pub path_length: f64,
    pub duration: u32,
    /// Wall-clock; kept out of persisted records.
    #[serde(skip)]
    pub mean_planner_latency_ms: f64,
    pub score: f64,
}

impl EpisodeMetrics {
    pub fn recomputed_score(&self) -> f64 {
        score(
            self.success as f64,
            self.collision as f64,
            self.timeout as f64,
            self.safety_cost,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema_version: String,
    pub fingerprint: String,
    pub env: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub config: SuiteConfig,
    pub trace: Vec<TraceRow>,
    pub metrics: EpisodeMetrics,
}

impl EpisodeRecord {
    pub fn file_stem(&self) -> String {
        cell_stem(&self.env, self.controller, self.seed)
    }

    pub fn commands(&self) -> Vec<VelocityCommand> {
        self.trace
            .iter()
            .map(|r| VelocityCommand {
                v: r.v_cmd,
                omega: r.omega_cmd,
            })
            .collect()
    }
}

fn cell_stem(env: &str, controller: ControllerKind, seed: u64) -> String {
    format!("{env}__{controller}__{seed}")
}

/// Computes metrics from a finished trace.
pub fn episode_metrics(start: &Pose, goal: crate::geometry::Vec2, trace: &[TraceRow], dt: f64, c_safe: f64) -> EpisodeMetrics {
    let outcome = trace.last().map(|r| r.outcome).unwrap_or(StepOutcome::Running);
    let success = u8::from(outcome == StepOutcome::Success);
    let collision = u8::from(outcome == StepOutcome::Collision);
    let timeout = u8::from(!matches!(outcome, StepOutcome::Success | StepOutcome::Collision));
    let safety_cost: f64 = trace
        .iter()
        .map(|r| dt * ((c_safe - r.clearance) / c_safe).max(0.0))
        .sum();
    let min_clearance = trace.iter().map(|r| r.clearance).fold(f64::INFINITY, f64::min);
    let mut path_length = 0.0;
    let (mut px, mut py) = (start.x, start.y);
    for r in trace {
        path_length += (r.x - px).hypot(r.y - py);
        (px, py) = (r.x, r.y);
    }
    let shortest = start.position().distance(goal);
    let spl = if success == 1 {
        shortest / shortest.max(path_length)
    } else {
        0.0
    };
    EpisodeMetrics {
        success,
        collision,
        timeout,
        safety_cost,
        min_clearance,
        spl,
        path_length,
        duration: trace.len() as u32,
        mean_planner_latency_ms: 0.0,
        score: score(success as f64, collision as f64, timeout as f64, safety_cost),
    }
}

/// Runs one episode: observe, decide, step, until a terminal outcome.
pub fn run_episode(env: &str, controller: ControllerKind, seed: u64, config: &SuiteConfig) -> Result<EpisodeRecord> {
    run_episode_observed(env, controller, seed, config, |_| {})
}

/// Like [`run_episode`], also handing every observation the controller
/// consumes to `sink`.
pub fn run_episode_observed(
    env_name: &str,
    kind: ControllerKind,
    seed: u64,
    config: &SuiteConfig,
    mut sink: impl FnMut(&Observation),
) -> Result<EpisodeRecord> {
    config.validate()?;
    let (env, mut state) = build_environment_with(env_name, seed, &config.world)?;
    env.validate()?;
    let mut controller = Controller::new(kind, config, &env, seed)?;
    let mut obs = observe(&state, &env);
    let mut trace = Vec::new();
    let mut latency_ms = 0.0;
    loop {
        sink(&obs);
        let t0 = Instant::now();
        let decision = controller.decide(&obs)?;
        latency_ms += t0.elapsed().as_secs_f64() * 1e3;
        let r = step_world(&state, decision.command, &env)?;
        let posterior = decision.posterior.as_ref();
        trace.push(TraceRow {
            step: r.state.step,
            x: r.state.robot.x,
            y: r.state.robot.y,
            heading: r.state.robot.heading,
            v_cmd: decision.command.v,
            omega_cmd: decision.command.omega,
            v_exec: r.executed.v,
            omega_exec: r.executed.omega,
            clearance: r.clearance,
            cvar_selected: decision.cvar_selected,
            posterior_entropy: posterior.map(|p| p.entropy()),
            posterior: posterior.map(|p| p.weights.clone()),
            outcome: r.outcome,
        });
        state = r.state;
        obs = r.observation;
        if r.outcome.is_terminal() {
            break;
        }
    }
    let mut metrics = episode_metrics(&env.start, env.goal, &trace, env.dt, config.metrics.c_safe);
    metrics.mean_planner_latency_ms = latency_ms / trace.len() as f64;
    Ok(EpisodeRecord {
        schema_version: SCHEMA_VERSION.to_string(),
        fingerprint: config.fingerprint(),
        env: env_name.to_string(),
        controller: kind,
        seed,
        config: config.clone(),
        trace,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub env: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// Environment name, or `pooled` for the across-environment row.
    pub env: String,
    pub controller: ControllerKind,
    pub episodes: usize,
    pub success: f64,
    pub collision: f64,
    pub timeout: f64,
    pub safety_cost: f64,
    pub min_clearance: f64,
    pub spl: f64,
    pub path_length: f64,
    pub duration: f64,
    pub score: f64,
    pub mean_planner_latency_ms: f64,
}

const SUMMARY_HEADER: &str =
    "env,controller,episodes,success,collision,timeout,safety_cost,min_clearance,spl,path_length,duration,score";

impl SummaryRow {
    fn from_records(env: &str, controller: ControllerKind, records: &[&EpisodeRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| records.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        Self {
            env: env.to_string(),
            controller,
            episodes: records.len(),
            success: mean(&|m| m.success as f64),
            collision: mean(&|m| m.collision as f64),
            timeout: mean(&|m| m.timeout as f64),
            safety_cost: mean(&|m| m.safety_cost),
            min_clearance: mean(&|m| m.min_clearance),
            spl: mean(&|m| m.spl),
            path_length: mean(&|m| m.path_length),
            duration: mean(&|m| m.duration as f64),
            score: mean(&|m| m.score),
            mean_planner_latency_ms: mean(&|m| m.mean_planner_latency_ms),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3},{:.6}",
            self.env,
            self.controller,
            self.episodes,
            self.success,
            self.collision,
            self.timeout,
            self.safety_cost,
            self.min_clearance,
            self.spl,
            self.path_length,
            self.duration,
            self.score
        )
    }
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    /// Successful records in `(env, controller, seed)` config order.
    pub records: Vec<EpisodeRecord>,
    pub failures: Vec<EpisodeFailure>,
    pub summary: Vec<SummaryRow>,
}

impl SuiteResult {
    pub fn row(&self, env: &str, controller: ControllerKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.env == env && r.controller == controller)
    }
}

/// Runs the full env × controller × seed product in memory.
pub fn run_cells(config: &SuiteConfig, workers: usize) -> Result<SuiteResult> {
    config.validate()?;
    let cells: Vec<(String, ControllerKind, u64)> = config
        .environments
        .iter()
        .flat_map(|e| {
            config
                .controllers
                .iter()
                .flat_map(move |&c| config.seeds.iter().map(move |&s| (e.clone(), c, s)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<std::result::Result<EpisodeRecord, EpisodeFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(e, c, s)| {
                run_episode(e, *c, *s, config).map_err(|err| EpisodeFailure {
                    env: e.clone(),
                    controller: *c,
                    seed: *s,
                    error: err.to_string(),
                })
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    let mut summary = Vec::new();
    for env in &config.environments {
        for &c in &config.controllers {
            let rs: Vec<&EpisodeRecord> = records.iter().filter(|r| &r.env == env && r.controller == c).collect();
            summary.push(SummaryRow::from_records(env, c, &rs));
        }
    }
    if config.environments.len() > 1 {
        for &c in &config.controllers {
            let rs: Vec<&EpisodeRecord> = records.iter().filter(|r| r.controller == c).collect();
            summary.push(SummaryRow::from_records("pooled", c, &rs));
        }
    }
    Ok(SuiteResult {
        records,
        failures,
        summary,
    })
}

pub fn trace_csv(record: &EpisodeRecord) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out =
        String::from("step,x,y,heading,v_cmd,omega_cmd,v_exec,omega_exec,clearance,cvar_selected,posterior_entropy,outcome\n");
    for r in &record.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.x,
            r.y,
            r.heading,
            r.v_cmd,
            r.omega_cmd,
            r.v_exec,
            r.omega_exec,
            r.clearance,
            opt(r.cvar_selected),
            opt(r.posterior_entropy),
            r.outcome.as_str()
        );
    }
    out
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for row in summary {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Runs the suite and writes `episodes/`, `traces/`, `summary.csv`,
/// `failures.jsonl` and the nondeterministic `timing.csv` under `out`.
pub fn run_suite(config: &SuiteConfig, out: &Path, workers: usize) -> Result<SuiteResult> {
    let result = run_cells(config, workers)?;
    let episodes = out.join("episodes");
    let traces = out.join("traces");
    fs::create_dir_all(&episodes)?;
    fs::create_dir_all(&traces)?;
    let mut timing = String::from("env,controller,seed,decisions,mean_planner_latency_ms\n");
    for r in &result.records {
        let stem = r.file_stem();
        let mut line = serde_json::to_string(r)?;
        line.push('\n');
        fs::write(episodes.join(format!("{stem}.jsonl")), line)?;
        fs::write(traces.join(format!("{stem}.csv")), trace_csv(r))?;
        let _ = writeln!(
            timing,
            "{},{},{},{},{:.4}",
            r.env,
            r.controller,
            r.seed,
            r.trace.len(),
            r.metrics.mean_planner_latency_ms
        );
    }
    let mut failures = String::new();
    for f in &result.failures {
        failures.push_str(&serde_json::to_string(f)?);
        failures.push('\n');
    }
    fs::write(out.join("failures.jsonl"), failures)?;
    fs::write(out.join("summary.csv"), summary_csv(&result.summary))?;
    fs::write(out.join("timing.csv"), timing)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub path: Option<PathBuf>,
    pub env: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub steps: usize,
    pub matched: bool,
    /// Step number of the first trace row that differs from re-simulation.
    pub first_divergence: Option<u32>,
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

/// Re-simulates a record from its config, seed and logged commands.
pub fn replay_record(record: &EpisodeRecord) -> Result<ReplayReport> {
    if record.schema_version != SCHEMA_VERSION {
        return Err(Error::Versioning(format!(
            "record schema '{}' but this build reads '{SCHEMA_VERSION}'",
            record.schema_version
        )));
    }
    let fingerprint = record.config.fingerprint();
    if fingerprint != record.fingerprint {
        return Err(Error::Versioning(format!(
            "config fingerprint {} does not match recorded {}",
            fingerprint, record.fingerprint
        )));
    }
    let (env, mut state): (_, WorldState) = build_environment_with(&record.env, record.seed, &record.config.world)?;
    let mut first_divergence = None;
    for row in &record.trace {
        if state.outcome.is_terminal() {
            first_divergence = Some(row.step);
            break;
        }
        let r = step_world(&state, VelocityCommand { v: row.v_cmd, omega: row.omega_cmd }, &env)?;
        let s = &r.state;
        let matches = row.step == s.step
            && same(row.x, s.robot.x)
            && same(row.y, s.robot.y)
            && same(row.heading, s.robot.heading)
            && same(row.v_exec, r.executed.v)
            && same(row.omega_exec, r.executed.omega)
            && same(row.clearance, r.clearance)
            && row.outcome == r.outcome;
        if !matches {
            first_divergence = Some(row.step);
            break;
        }
        state = r.state;
    }
    if first_divergence.is_none() && !state.outcome.is_terminal() {
        first_divergence = Some(state.step + 1);
    }
    Ok(ReplayReport {
        path: None,
        env: record.env.clone(),
        controller: record.controller,
        seed: record.seed,
        steps: record.trace.len(),
        matched: first_divergence.is_none(),
        first_divergence,
    })
}

/// Replays every record in a JSONL file.
pub fn replay(path: &Path) -> Result<Vec<ReplayReport>> {
    let text = fs::read_to_string(path)?;
    let mut reports = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let record: EpisodeRecord = serde_json::from_str(line)?;
        let mut report = replay_record(&record)?;
        report.path = Some(path.to_path_buf());
        reports.push(report);
    }
    if reports.is_empty() {
        return Err(Error::Usage(format!("{} holds no records", path.display())));
    }
    Ok(reports)
}
