//! Experiment manifests.
//!
//! A manifest is a TOML file with an optional `preset` and the sections
//! `[environment]`, `[scheduler]`, `[run]` and `[sweep]`. Every key left out
//! falls back to the preset, then to the built-in default. Keys with no
//! default (the seed, and the environment when no preset is given) must be
//! present.

use std::fs;
use std::path::{Path, PathBuf};

use adp_sched_core::env::{ChannelModel, ChannelStateTable, CostModel, TrafficModel, Utility, MEAN_GAIN};
use adp_sched_core::learner::{LambdaConfig, StepSchedule};
use adp_sched_core::sim::{Environment, RunConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Desk,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Oracle,
    Learner,
    Priority,
    Stability,
    Qlearning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    Virtual,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "delta")]
    Delta,
    #[serde(rename = "T")]
    RefreshPeriod,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "cbar")]
    Budget,
    #[serde(rename = "V_param")]
    VParam,
    #[serde(rename = "weights")]
    Weights,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Delta => "delta",
            SweepParameter::RefreshPeriod => "T",
            SweepParameter::Lambda => "lambda",
            SweepParameter::Budget => "cbar",
            SweepParameter::VParam => "V_param",
            SweepParameter::Weights => "weights",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<Preset>,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub run: RunSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    pub seed: Option<u64>,
    pub buffer: Option<f64>,
    pub alpha: Option<f64>,
    /// Backlog granularity of the planner and of the learner's `δ = 0` mode.
    pub grid: Option<f64>,
    pub overflow_penalty: Option<f64>,
    pub initial_channel: Option<usize>,
    pub channel: Option<ChannelSpec>,
    pub traffic: Option<TrafficList>,
    pub cost: Option<CostSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    Markov,
    Iid,
    BirthDeath,
    MovingAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TableName {
    ThreeState,
    EightState,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub gains: Option<Vec<f64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub probabilities: Option<Vec<f64>>,
    pub table: Option<TableName>,
    pub boundaries: Option<Vec<f64>>,
    pub representatives: Option<Vec<f64>>,
    pub mean_gain: Option<f64>,
    pub doppler: Option<f64>,
    pub slot_length: Option<f64>,
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrafficKind {
    Poisson,
    Deterministic,
    Discrete,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub kind: TrafficKind,
    pub rate: Option<f64>,
    pub cap: Option<f64>,
    pub units: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub probabilities: Option<Vec<f64>>,
}

/// One traffic table shared by every queue, or one per queue.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TrafficList {
    One(TrafficSpec),
    Many(Vec<TrafficSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    Exponential,
    Linear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub kind: CostKind,
    pub scale: Option<f64>,
}

/// Step size `c / n^p`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub c: f64,
    #[serde(default = "one")]
    pub p: f64,
}

fn one() -> f64 {
    1.0
}

impl ScheduleSpec {
    fn resolve(self) -> StepSchedule {
        if self.p == 1.0 {
            StepSchedule::Harmonic(self.c)
        } else if self.p == 0.0 {
            StepSchedule::Constant(self.c)
        } else {
            StepSchedule::Polynomial { c: self.c, p: self.p }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    pub method: Option<Method>,
    pub delta: Option<f64>,
    pub refresh_period: Option<u64>,
    /// Fixed multiplier.
    pub lambda: Option<f64>,
    /// Discounted energy budget `c̄`; switches the multiplier to adaptive.
    pub budget: Option<f64>,
    pub lambda_initial: Option<f64>,
    pub window: Option<u64>,
    pub gamma: Option<ScheduleSpec>,
    pub beta: Option<ScheduleSpec>,
    pub weights: Option<Vec<f64>>,
    pub v_param: Option<f64>,
    pub lambda_mode: Option<LambdaMode>,
    pub epsilon0: Option<f64>,
    pub exploration_seed: Option<u64>,
    pub max_evals: Option<usize>,
    /// Planner start state `[backlog, channel]`.
    pub start: Option<(f64, usize)>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub slots: Option<u64>,
    pub warmup_fraction: Option<f64>,
    /// Slots after which the learned value functions are written out.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    pub checkpoint_out: Option<PathBuf>,
    /// Per-slot trace file.
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: SweepParameter,
    pub values: Vec<toml::Value>,
}

/// How the Lagrange multiplier is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSetting {
    Fixed(f64),
    Budget { budget: f64, initial: f64, gamma: StepSchedule, window: u64 },
}

#[derive(Debug, Clone)]
pub struct SchedulerSettings {
    pub method: Option<Method>,
    pub delta: f64,
    pub refresh_period: u64,
    pub lambda: LambdaSetting,
    pub beta: StepSchedule,
    pub weights: Vec<f64>,
    pub v_param: f64,
    pub lambda_mode: LambdaMode,
    pub epsilon0: f64,
    pub exploration_seed: u64,
    pub max_evals: usize,
    pub start: Option<(f64, usize)>,
}

/// A single sweep value.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<SweepValue>,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub environment: Environment,
    pub grid: f64,
    pub overflow_penalty: Option<f64>,
    pub scheduler: SchedulerSettings,
    pub run: RunConfig,
    pub checkpoints: Vec<u64>,
    pub checkpoint_out: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub sweep: Option<Sweep>,
}

fn invalid(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { field: field.to_string(), reason: reason.into() }
}

fn need<T>(v: Option<T>, field: &str) -> CliResult<T> {
    v.ok_or_else(|| invalid(field, "missing"))
}

fn core(field: &str, e: adp_sched_core::Error) -> CliError {
    invalid(field, e.to_string())
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
        Self::parse(&text)
    }

    /// Applies preset defaults and validates every field.
    pub fn resolve(&self, seed_override: Option<u64>) -> CliResult<Experiment> {
        let env = &self.environment;
        let seed = need(seed_override.or(env.seed), "environment.seed")?;
        // Preset traffic is truncated at the buffer actually used.
        let (buffer, rate, channel_default, slots_default) = match self.preset {
            Some(Preset::Desk) => (Some(16.0), Some(2.0), Some(birth_death(TableName::ThreeState)), Some(50_000)),
            Some(Preset::Paper) => (Some(500.0), Some(15.0), Some(birth_death(TableName::EightState)), Some(10_000)),
            None => (None, None, None, None),
        };
        let buffer = need(env.buffer.or(buffer), "environment.buffer")?;
        if !(buffer.is_finite() && buffer > 0.0) {
            return Err(invalid("environment.buffer", "must be positive"));
        }
        let traffic_default = rate.map(|r| poisson(r, buffer));
        let alpha = env.alpha.or(self.preset.map(|_| 0.95));
        let alpha = need(alpha, "environment.alpha")?;
        if !(0.0..1.0).contains(&alpha) {
            return Err(invalid("environment.alpha", "must lie in [0, 1)"));
        }
        let grid = env.grid.unwrap_or(1.0);
        if !(grid.is_finite() && grid > 0.0) {
            return Err(invalid("environment.grid", "must be positive"));
        }
        if let Some(k) = env.overflow_penalty {
            if !(k.is_finite() && k >= 0.0) {
                return Err(invalid("environment.overflow_penalty", "must be non-negative"));
            }
        }

        let channel_spec = need(env.channel.clone().or(channel_default), "environment.channel")?;
        let channel = build_channel(&channel_spec)?;
        let period = channel.period();
        if period != 1 {
            log::warn!("channel chain has period {period}; periodic refresh may not converge");
        }
        let sched = &self.scheduler;
        let weights = sched.weights.clone().unwrap_or_default();
        let queues = weights.len().max(1);
        let traffic_specs = match env.traffic.clone().or(traffic_default.map(TrafficList::One)) {
            Some(TrafficList::One(t)) => vec![t; queues],
            Some(TrafficList::Many(v)) => v,
            None => return Err(invalid("environment.traffic", "missing")),
        };
        let traffic = traffic_specs.iter().map(build_traffic).collect::<CliResult<Vec<_>>>()?;
        if traffic.len() != queues && !weights.is_empty() {
            return Err(invalid("environment.traffic", "need one traffic model per priority weight"));
        }
        let cost = match &env.cost {
            None => CostModel::default(),
            Some(c) => {
                let scale = c.scale.unwrap_or(1.0);
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(invalid("environment.cost.scale", "must be positive"));
                }
                match c.kind {
                    CostKind::Exponential => CostModel::Exponential { scale },
                    CostKind::Linear => CostModel::Linear { scale },
                }
            }
        };
        let environment = Environment {
            buffer,
            alpha,
            channel,
            utilities: vec![Utility::Backlog; traffic.len()],
            traffic,
            cost,
            initial_channel: env.initial_channel,
        };
        environment.validate().map_err(|e| core("environment", e))?;

        let scheduler = resolve_scheduler(sched, seed)?;
        if scheduler.refresh_period == 0 {
            return Err(invalid("scheduler.refresh_period", "must be at least 1"));
        }

        let run = RunConfig {
            slots: need(self.run.slots.or(slots_default), "run.slots")?,
            warmup_fraction: self.run.warmup_fraction.unwrap_or(0.2),
            seed,
        };
        if run.slots == 0 {
            return Err(invalid("run.slots", "must be positive"));
        }
        if !(0.0..1.0).contains(&run.warmup_fraction) {
            return Err(invalid("run.warmup_fraction", "must lie in [0, 1)"));
        }
        if !self.run.checkpoints.is_empty() && self.run.checkpoint_out.is_none() {
            return Err(invalid("run.checkpoint_out", "required when checkpoints are listed"));
        }
        if let Some(&c) = self.run.checkpoints.iter().find(|&&c| c == 0 || c > run.slots) {
            return Err(invalid("run.checkpoints", format!("slot {c} is outside 1..={}", run.slots)));
        }

        let sweep = self.sweep.as_ref().map(resolve_sweep).transpose()?;
        Ok(Experiment {
            environment,
            grid,
            overflow_penalty: env.overflow_penalty,
            scheduler,
            run,
            checkpoints: self.run.checkpoints.clone(),
            checkpoint_out: self.run.checkpoint_out.clone(),
            trace: self.run.trace.clone(),
            sweep,
        })
    }
}

fn poisson(rate: f64, cap: f64) -> TrafficSpec {
    TrafficSpec { kind: TrafficKind::Poisson, rate: Some(rate), cap: Some(cap), units: None, values: None, probabilities: None }
}

fn birth_death(table: TableName) -> ChannelSpec {
    ChannelSpec {
        kind: ChannelKind::BirthDeath,
        gains: None,
        matrix: None,
        probabilities: None,
        table: Some(table),
        boundaries: None,
        representatives: None,
        mean_gain: None,
        doppler: None,
        slot_length: None,
        coefficients: None,
    }
}

fn build_table(spec: &ChannelSpec) -> CliResult<ChannelStateTable> {
    match (&spec.boundaries, &spec.representatives, spec.table) {
        (Some(b), Some(r), _) => {
            ChannelStateTable::new(b.clone(), r.clone()).map_err(|e| core("environment.channel.boundaries", e))
        }
        (None, None, Some(TableName::ThreeState)) => Ok(ChannelStateTable::three_state()),
        (None, None, Some(TableName::EightState) | None) => Ok(ChannelStateTable::eight_state()),
        _ => Err(invalid("environment.channel", "boundaries and representatives go together")),
    }
}

fn build_channel(spec: &ChannelSpec) -> CliResult<ChannelModel> {
    let field = "environment.channel";
    match spec.kind {
        ChannelKind::Markov => {
            let matrix = need(spec.matrix.clone(), "environment.channel.matrix")?;
            let gains = need(spec.gains.clone(), "environment.channel.gains")?;
            ChannelModel::markov(matrix, gains).map_err(|e| core(field, e))
        }
        ChannelKind::Iid => {
            let p = need(spec.probabilities.clone(), "environment.channel.probabilities")?;
            let gains = need(spec.gains.clone(), "environment.channel.gains")?;
            ChannelModel::iid(p, gains).map_err(|e| core(field, e))
        }
        ChannelKind::BirthDeath => {
            let table = build_table(spec)?;
            ChannelModel::birth_death(
                &table,
                spec.mean_gain.unwrap_or(MEAN_GAIN),
                spec.doppler.unwrap_or(5.0),
                spec.slot_length.unwrap_or(0.01),
            )
            .map_err(|e| core(field, e))
        }
        ChannelKind::MovingAverage => {
            let table = build_table(spec)?;
            match &spec.coefficients {
                Some(c) => ChannelModel::moving_average(c.clone(), table, spec.mean_gain.unwrap_or(MEAN_GAIN)),
                None => ChannelModel::default_moving_average(table),
            }
            .map_err(|e| core(field, e))
        }
    }
}

fn build_traffic(spec: &TrafficSpec) -> CliResult<TrafficModel> {
    let field = "environment.traffic";
    match spec.kind {
        TrafficKind::Poisson => {
            let rate = need(spec.rate, "environment.traffic.rate")?;
            let cap = need(spec.cap, "environment.traffic.cap")?;
            TrafficModel::poisson(rate, cap)
        }
        TrafficKind::Deterministic => TrafficModel::deterministic(need(spec.units, "environment.traffic.units")?),
        TrafficKind::Discrete => TrafficModel::discrete(
            need(spec.values.clone(), "environment.traffic.values")?,
            need(spec.probabilities.clone(), "environment.traffic.probabilities")?,
        ),
    }
    .map_err(|e| core(field, e))
}

fn resolve_scheduler(s: &SchedulerSection, seed: u64) -> CliResult<SchedulerSettings> {
    let lambda = match (s.lambda, s.budget) {
        (Some(_), Some(_)) if s.lambda_mode != Some(LambdaMode::Fixed) => {
            return Err(invalid("scheduler.lambda", "give either a fixed lambda or a budget"));
        }
        (_, Some(budget)) if s.lambda_mode != Some(LambdaMode::Fixed) => LambdaSetting::Budget {
            budget,
            initial: s.lambda_initial.unwrap_or(0.0),
            gamma: s.gamma.map(ScheduleSpec::resolve).unwrap_or(StepSchedule::DEFAULT_GAMMA),
            window: s.window.unwrap_or(1),
        },
        (l, _) => LambdaSetting::Fixed(l.unwrap_or(0.0)),
    };
    match lambda {
        LambdaSetting::Fixed(l) if !(l.is_finite() && l >= 0.0) => {
            return Err(invalid("scheduler.lambda", "must be finite and non-negative"));
        }
        LambdaSetting::Budget { budget, window, gamma, .. } => {
            if !(budget.is_finite() && budget > 0.0) {
                return Err(invalid("scheduler.budget", "must be positive"));
            }
            if window == 0 {
                return Err(invalid("scheduler.window", "must be at least 1"));
            }
            gamma.validate("gamma").map_err(|e| core("scheduler.gamma", e))?;
        }
        _ => {}
    }
    let beta = s.beta.map(ScheduleSpec::resolve).unwrap_or(StepSchedule::DEFAULT_BETA);
    beta.validate("beta").map_err(|e| core("scheduler.beta", e))?;
    let delta = s.delta.unwrap_or(0.1);
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(invalid("scheduler.delta", "must be finite and non-negative"));
    }
    let v_param = s.v_param.unwrap_or(10.0);
    if !(v_param.is_finite() && v_param > 0.0) {
        return Err(invalid("scheduler.v_param", "must be positive"));
    }
    let epsilon0 = s.epsilon0.unwrap_or(1.0);
    if !(epsilon0.is_finite() && epsilon0 >= 0.0) {
        return Err(invalid("scheduler.epsilon0", "must be non-negative"));
    }
    Ok(SchedulerSettings {
        method: s.method,
        delta,
        refresh_period: s.refresh_period.unwrap_or(1),
        lambda,
        beta,
        weights: s.weights.clone().unwrap_or_default(),
        v_param,
        lambda_mode: s.lambda_mode.unwrap_or(if s.budget.is_some() { LambdaMode::Virtual } else { LambdaMode::Fixed }),
        epsilon0,
        exploration_seed: s.exploration_seed.unwrap_or(seed.wrapping_add(1)),
        max_evals: s.max_evals.unwrap_or(100_000),
        start: s.start,
    })
}

fn number(v: &toml::Value) -> Option<f64> {
    match v {
        toml::Value::Float(f) => Some(*f),
        toml::Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn resolve_sweep(s: &SweepSection) -> CliResult<Sweep> {
    if s.values.is_empty() {
        return Err(invalid("sweep.values", "must not be empty"));
    }
    let values = s
        .values
        .iter()
        .map(|v| match (s.parameter, v) {
            (SweepParameter::Weights, toml::Value::Array(items)) => items
                .iter()
                .map(number)
                .collect::<Option<Vec<f64>>>()
                .map(SweepValue::Vector)
                .ok_or_else(|| invalid("sweep.values", "weights must be arrays of numbers")),
            (SweepParameter::Weights, _) => Err(invalid("sweep.values", "weights must be arrays of numbers")),
            (_, v) => number(v).map(SweepValue::Scalar).ok_or_else(|| invalid("sweep.values", "must be numbers")),
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Sweep { parameter: s.parameter, values })
}

impl Experiment {
    /// Copy with one swept parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: &SweepValue) -> CliResult<Experiment> {
        let mut e = self.clone();
        let s = &mut e.scheduler;
        let scalar = match value {
            SweepValue::Scalar(v) => Some(*v),
            SweepValue::Vector(_) => None,
        };
        match (parameter, scalar) {
            (SweepParameter::Delta, Some(v)) if v >= 0.0 => s.delta = v,
            (SweepParameter::RefreshPeriod, Some(v)) if v >= 1.0 && v.fract() == 0.0 => s.refresh_period = v as u64,
            (SweepParameter::Lambda, Some(v)) if v >= 0.0 => {
                s.lambda = LambdaSetting::Fixed(v);
                s.lambda_mode = LambdaMode::Fixed;
            }
            (SweepParameter::Budget, Some(v)) if v > 0.0 => {
                s.lambda = match s.lambda {
                    LambdaSetting::Budget { initial, gamma, window, .. } => LambdaSetting::Budget { budget: v, initial, gamma, window },
                    LambdaSetting::Fixed(l) => {
                        LambdaSetting::Budget { budget: v, initial: l, gamma: StepSchedule::DEFAULT_GAMMA, window: 1 }
                    }
                };
                s.lambda_mode = LambdaMode::Virtual;
            }
            (SweepParameter::VParam, Some(v)) if v > 0.0 => s.v_param = v,
            (SweepParameter::Weights, None) => {
                let SweepValue::Vector(w) = value else { unreachable!() };
                if w.len() != e.environment.queues() && e.environment.queues() != 1 {
                    return Err(invalid("sweep.values", "weight vectors must match the number of queues"));
                }
                if e.environment.queues() == 1 && w.len() > 1 {
                    let t = e.environment.traffic[0].clone();
                    e.environment.traffic = vec![t; w.len()];
                    e.environment.utilities = vec![Utility::Backlog; w.len()];
                }
                s.weights = w.clone();
            }
            _ => return Err(invalid("sweep.values", format!("invalid value for {}", parameter.name()))),
        }
        Ok(e)
    }

    /// Multiplier configuration for the online learners.
    pub fn lambda_config(&self) -> LambdaConfig {
        match self.scheduler.lambda {
            LambdaSetting::Fixed(l) => LambdaConfig::Fixed(l),
            LambdaSetting::Budget { budget, initial, gamma, window } => LambdaConfig::Adaptive { initial, budget, gamma, window },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_preset_fills_the_environment() {
        let e = ConfigFile::parse("preset = \"desk\"\n[environment]\nseed = 1\n").unwrap().resolve(None).unwrap();
        assert_eq!(e.environment.buffer, 16.0);
        assert_eq!(e.environment.alpha, 0.95);
        assert_eq!(e.environment.channel.num_states(), 3);
        assert!((e.environment.traffic[0].mean() - 2.0).abs() < 1e-9);
        assert_eq!(e.run.slots, 50_000);
        assert_eq!(e.run.warmup_slots(), 10_000);
    }

    #[test]
    fn paper_preset_uses_the_large_buffer() {
        let e = ConfigFile::parse("preset = \"paper\"\n[environment]\nseed = 1\nbuffer = 100\n").unwrap().resolve(None).unwrap();
        assert_eq!(e.environment.buffer, 100.0);
        assert_eq!(e.environment.channel.num_states(), 8);
        assert_eq!(e.run.slots, 10_000);
    }

    #[test]
    fn budget_switches_to_adaptive_multiplier() {
        let text = "preset = \"desk\"\n[environment]\nseed = 1\n[scheduler]\nbudget = 30\nwindow = 5\ngamma = { c = 0.5 }\n";
        let e = ConfigFile::parse(text).unwrap().resolve(None).unwrap();
        assert_eq!(
            e.lambda_config(),
            LambdaConfig::Adaptive { initial: 0.0, budget: 30.0, gamma: StepSchedule::Harmonic(0.5), window: 5 }
        );
        assert_eq!(e.scheduler.lambda_mode, LambdaMode::Virtual);
    }

    #[test]
    fn sweep_values_are_checked() {
        let base = "preset = \"desk\"\n[environment]\nseed = 1\n[sweep]\n";
        let ok = ConfigFile::parse(&format!("{base}parameter = \"T\"\nvalues = [1, 5, 10]\n")).unwrap().resolve(None).unwrap();
        assert_eq!(ok.sweep.unwrap().values.len(), 3);
        let bad = ConfigFile::parse(&format!("{base}parameter = \"weights\"\nvalues = [1, 2]\n")).unwrap().resolve(None);
        assert!(matches!(bad, Err(CliError::Config { .. })));
        assert!(ConfigFile::parse(&format!("{base}parameter = \"gamma\"\nvalues = [1]\n")).is_err());
        let e = ConfigFile::parse(&format!("{base}parameter = \"T\"\nvalues = [1]\n")).unwrap().resolve(None).unwrap();
        assert!(e.with_parameter(SweepParameter::RefreshPeriod, &SweepValue::Scalar(2.5)).is_err());
    }
}
