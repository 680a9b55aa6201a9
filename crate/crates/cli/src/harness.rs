//! Runs, sweeps and planner solves, and their CSV outputs.

use std::cmp::Ordering;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::thread;

use adp_sched_core::baselines::{QLearning, QLearningConfig, StabilityLambda, StabilityScheduler};
use adp_sched_core::env::{PriorityWeights, SystemState, Utility};
use adp_sched_core::learner::{Learner, LearnerConfig};
use adp_sched_core::num::format_sig;
use adp_sched_core::oracle::{lagrange_point, lagrange_search, DiscreteMdp, ExactSolution, LagrangeOptions, LagrangeResult, Policy};
use adp_sched_core::priority::{PriorityConfig, PriorityLearner};
use adp_sched_core::pwl::PwlConcave;
use adp_sched_core::sim::{simulate, Metrics, PolicyScheduler, Scheduler, SlotDecision, SlotView, TraceRow};
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Experiment, LambdaMode, LambdaSetting, Method, SweepParameter, SweepValue};
use crate::error::{CliError, CliResult};

/// A constructed scheduler of any method. Built once per run, so variant
/// sizes do not matter.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Built {
    Learner(Learner),
    Priority(PriorityLearner),
    Stability(StabilityScheduler),
    QLearning(QLearning),
    Policy(PolicyScheduler),
}

impl Built {
    /// Current value functions per queue, for checkpoints.
    fn values(&self) -> Vec<Vec<PwlConcave>> {
        match self {
            Built::Learner(l) => vec![l.values().to_vec()],
            Built::Priority(p) => (0..p.config().queues()).map(|i| p.values(i).to_vec()).collect(),
            _ => Vec::new(),
        }
    }
}

impl Scheduler for Built {
    fn start(&mut self, channel: usize) {
        match self {
            Built::Learner(s) => s.start(channel),
            Built::Priority(s) => s.start(channel),
            Built::Stability(s) => s.start(channel),
            Built::QLearning(s) => s.start(channel),
            Built::Policy(s) => s.start(channel),
        }
    }

    fn decide(&mut self, slot: &SlotView<'_>) -> adp_sched_core::Result<SlotDecision> {
        match self {
            Built::Learner(s) => s.decide(slot),
            Built::Priority(s) => s.decide(slot),
            Built::Stability(s) => s.decide(slot),
            Built::QLearning(s) => s.decide(slot),
            Built::Policy(s) => s.decide(slot),
        }
    }

    fn ops(&self) -> u64 {
        match self {
            Built::Learner(s) => Scheduler::ops(s),
            Built::Priority(s) => Scheduler::ops(s),
            Built::Stability(s) => s.ops(),
            Built::QLearning(s) => s.ops(),
            Built::Policy(s) => s.ops(),
        }
    }
}

fn config_error(field: &str, reason: &str) -> CliError {
    CliError::Config { field: field.to_string(), reason: reason.to_string() }
}

/// The planner's view of a single-queue experiment.
pub fn planner_mdp(exp: &Experiment) -> CliResult<DiscreteMdp> {
    let env = &exp.environment;
    if env.queues() != 1 {
        return Err(config_error("environment.traffic", "the planner handles one queue"));
    }
    let mut mdp = DiscreteMdp::new(env.buffer, exp.grid, env.alpha, &env.channel, &env.traffic[0])?;
    mdp.cost = env.cost.clone();
    if let Some(k) = exp.overflow_penalty {
        mdp.overflow_penalty = k;
    }
    Ok(mdp)
}

/// Planner start state as `(level, channel)`.
pub fn planner_start(exp: &Experiment, mdp: &DiscreteMdp) -> CliResult<(usize, usize)> {
    match exp.scheduler.start {
        None => Ok(mdp.default_start()),
        Some((x, h)) => {
            if !(0.0..=mdp.buffer).contains(&x) || h >= mdp.num_channels() {
                return Err(config_error("scheduler.start", "outside the state space"));
            }
            Ok(mdp.state_index(&SystemState { backlog: x, channel: h }))
        }
    }
}

/// Planner output: the fixed-λ solution, or the budget search around it.
#[derive(Debug, Clone)]
pub struct Plan {
    pub mdp: DiscreteMdp,
    pub start: (usize, usize),
    pub lambda: f64,
    pub solution: ExactSolution,
    pub search: Option<LagrangeResult>,
}

pub fn solve(exp: &Experiment) -> CliResult<Plan> {
    let mdp = planner_mdp(exp)?;
    let start = planner_start(exp, &mdp)?;
    let opts = LagrangeOptions::default();
    let (lambda, search) = match exp.scheduler.lambda {
        LambdaSetting::Fixed(l) => (l, None),
        LambdaSetting::Budget { budget, gamma, .. } => {
            let r = lagrange_search(&mdp, budget, start, &LagrangeOptions { gamma, ..opts })?;
            info!("budget {} met at lambda {} (mix {}, cost {})", budget, r.lambda, r.mix, r.cost);
            (r.lambda, Some(r))
        }
    };
    let m = mdp.clone().with_lambda(lambda);
    let solution = adp_sched_core::oracle::solve_exact(&m, 1e-10, 100_000)?;
    if !solution.converged {
        log::warn!("value iteration stopped before reaching the tolerance");
    }
    Ok(Plan { mdp: m, start, lambda, solution, search })
}

/// Policy the planner plays in simulation. With a budget, the two bracketing
/// policies are mixed once per run, seeded by the exploration seed.
fn planner_policy(exp: &Experiment) -> CliResult<(Policy, f64)> {
    let plan = solve(exp)?;
    match plan.search {
        None => Ok((plan.solution.policy, plan.lambda)),
        Some(r) => {
            let mut rng = ChaCha8Rng::seed_from_u64(exp.scheduler.exploration_seed);
            let pick = if rng.random::<f64>() < r.mix { r.low } else { r.high };
            Ok((pick.policy, pick.lambda))
        }
    }
}

/// Per-queue utilities seen by the simulator for `method`.
fn utilities(exp: &Experiment, method: Method) -> Vec<Utility> {
    match method {
        Method::Priority => exp.scheduler.weights.iter().map(|&w| Utility::Throughput { weight: w }).collect(),
        _ => vec![Utility::Backlog; exp.environment.queues()],
    }
}

pub fn build(exp: &Experiment, method: Method) -> CliResult<Built> {
    let env = &exp.environment;
    let s = &exp.scheduler;
    let gains = env.channel.gains().to_vec();
    if method != Method::Priority && env.queues() != 1 {
        return Err(config_error("scheduler.method", "multiple queues need the priority method"));
    }
    Ok(match method {
        Method::Oracle => {
            let (policy, lambda) = planner_policy(exp)?;
            Built::Policy(PolicyScheduler { policy, grid: exp.grid, lambda })
        }
        Method::Learner => {
            let mut cfg = LearnerConfig::new(env.buffer, env.alpha, gains);
            cfg.cost = env.cost.clone();
            cfg.delta = s.delta;
            cfg.refresh_period = s.refresh_period;
            cfg.beta = s.beta;
            cfg.lambda = exp.lambda_config();
            cfg.overflow_penalty = exp.overflow_penalty;
            cfg.grid_step = exp.grid;
            cfg.max_evals = s.max_evals;
            Built::Learner(Learner::new(cfg, env.start_channel())?)
        }
        Method::Priority => {
            if s.weights.is_empty() {
                return Err(config_error("scheduler.weights", "required by the priority method"));
            }
            if s.weights.len() != env.queues() {
                return Err(config_error("scheduler.weights", "need one weight per queue"));
            }
            let weights = PriorityWeights::new(s.weights.clone())?;
            let mut cfg = PriorityConfig::weighted(&weights, env.buffer, env.alpha, gains);
            cfg.cost = env.cost.clone();
            cfg.delta = s.delta;
            cfg.refresh_period = s.refresh_period;
            cfg.beta = s.beta;
            cfg.lambda = exp.lambda_config();
            cfg.overflow_penalty = exp.overflow_penalty;
            cfg.grid_step = exp.grid;
            cfg.max_evals = s.max_evals;
            Built::Priority(PriorityLearner::new(cfg, env.start_channel())?)
        }
        Method::Stability => {
            let (mode, budget) = match (s.lambda_mode, s.lambda) {
                (LambdaMode::Virtual, LambdaSetting::Budget { budget, .. }) => {
                    (StabilityLambda::Virtual { v_param: s.v_param }, (1.0 - env.alpha) * budget)
                }
                (LambdaMode::Virtual, LambdaSetting::Fixed(_)) => {
                    return Err(config_error("scheduler.budget", "the virtual-queue mode needs a budget"));
                }
                (LambdaMode::Fixed, LambdaSetting::Fixed(l)) => (StabilityLambda::Fixed(l), 0.0),
                (LambdaMode::Fixed, LambdaSetting::Budget { initial, .. }) => (StabilityLambda::Fixed(initial), 0.0),
            };
            let mut st = StabilityScheduler::new(gains, mode, budget)?;
            st.cost = env.cost.clone();
            st.action_step = exp.grid;
            Built::Stability(st)
        }
        Method::Qlearning => {
            let mut cfg = QLearningConfig::new(env.buffer, env.alpha, gains, s.exploration_seed);
            cfg.cost = env.cost.clone();
            cfg.epsilon0 = s.epsilon0;
            cfg.beta = s.beta;
            cfg.lambda = exp.lambda_config();
            cfg.overflow_penalty = exp.overflow_penalty;
            Built::QLearning(QLearning::new(cfg)?)
        }
    })
}

/// One learned value function at a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRow {
    pub slot: u64,
    pub queue: usize,
    pub channel: usize,
    pub function: PwlConcave,
}

struct Recorder<'a> {
    inner: &'a mut Built,
    at: &'a [u64],
    rows: Vec<CheckpointRow>,
}

impl Scheduler for Recorder<'_> {
    fn start(&mut self, channel: usize) {
        self.inner.start(channel);
    }

    fn decide(&mut self, slot: &SlotView<'_>) -> adp_sched_core::Result<SlotDecision> {
        let d = self.inner.decide(slot)?;
        if self.at.contains(&slot.t) {
            for (queue, per_channel) in self.inner.values().into_iter().enumerate() {
                for (channel, function) in per_channel.into_iter().enumerate() {
                    self.rows.push(CheckpointRow { slot: slot.t, queue, channel, function });
                }
            }
        }
        Ok(d)
    }

    fn ops(&self) -> u64 {
        self.inner.ops()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRow>,
    pub checkpoints: Vec<CheckpointRow>,
    pub scheduler: Built,
}

/// Simulates `method` on the experiment, optionally keeping the per-slot trace.
pub fn run(exp: &Experiment, method: Method, keep_trace: bool) -> CliResult<RunOutput> {
    let mut env = exp.environment.clone();
    env.utilities = utilities(exp, method);
    let mut built = build(exp, method)?;
    let mut trace = Vec::new();
    let mut push = |r: &TraceRow| trace.push(*r);
    let mut rec = Recorder { inner: &mut built, at: &exp.checkpoints, rows: Vec::new() };
    let sink: Option<&mut dyn FnMut(&TraceRow)> = if keep_trace { Some(&mut push) } else { None };
    let metrics = simulate(&env, &mut rec, &exp.run, sink)?;
    let checkpoints = rec.rows;
    debug!("{:?} run finished: {:?}", method, metrics);
    Ok(RunOutput { metrics, trace, checkpoints, scheduler: built })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: SweepValue,
    pub metrics: Metrics,
}

fn compare(a: &SweepValue, b: &SweepValue) -> Ordering {
    match (a, b) {
        (SweepValue::Scalar(x), SweepValue::Scalar(y)) => x.total_cmp(y),
        (SweepValue::Vector(x), SweepValue::Vector(y)) => {
            x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(x.len().cmp(&y.len()))
        }
        (SweepValue::Scalar(_), SweepValue::Vector(_)) => Ordering::Less,
        (SweepValue::Vector(_), SweepValue::Scalar(_)) => Ordering::Greater,
    }
}

/// One run per value with the experiment's seed, rows sorted by value.
/// Rows run on parallel threads; the result does not depend on scheduling.
pub fn sweep(exp: &Experiment, method: Method, parameter: SweepParameter, values: &[SweepValue]) -> CliResult<Vec<SweepRow>> {
    let experiments = values.iter().map(|v| exp.with_parameter(parameter, v)).collect::<CliResult<Vec<_>>>()?;
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).max(1);
    let mut rows = Vec::with_capacity(values.len());
    for chunk in experiments.iter().zip(values).collect::<Vec<_>>().chunks(workers) {
        let results: Vec<CliResult<SweepRow>> = thread::scope(|scope| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(e, v)| {
                    scope.spawn(move || run(e, method, false).map(|o| SweepRow { value: (*v).clone(), metrics: o.metrics }))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        for r in results {
            rows.push(r?);
        }
    }
    rows.sort_by(|a, b| compare(&a.value, &b.value));
    Ok(rows)
}

pub fn format_value(v: &SweepValue) -> String {
    match v {
        SweepValue::Scalar(x) => format_sig(*x),
        SweepValue::Vector(xs) => xs.iter().map(|x| format_sig(*x)).collect::<Vec<_>>().join(";"),
    }
}

const METRIC_COLUMNS: [&str; 13] = [
    "slots",
    "avg_queue",
    "avg_delay",
    "arrival_rate",
    "avg_power",
    "discounted_utility",
    "discounted_cost",
    "dropped",
    "lambda_final",
    "lambda_mean",
    "n_delta_mean",
    "updates",
    "ops_per_slot",
];

fn metric_fields(m: &Metrics, classes: usize) -> Vec<String> {
    let mut out = vec![
        m.slots.to_string(),
        format_sig(m.avg_queue),
        format_sig(m.avg_delay),
        format_sig(m.arrival_rate),
        format_sig(m.avg_power),
        format_sig(m.discounted_utility),
        format_sig(m.discounted_cost),
        format_sig(m.dropped),
        format_sig(m.lambda_final),
        format_sig(m.lambda_mean),
        format_sig(m.n_delta_mean),
        m.updates.to_string(),
        format_sig(m.ops_per_slot),
    ];
    if classes > 1 {
        for c in &m.per_class {
            out.extend([format_sig(c.avg_queue), format_sig(c.avg_delay), format_sig(c.avg_utility)]);
        }
    }
    out
}

fn metric_header(classes: usize) -> Vec<String> {
    let mut out: Vec<String> = METRIC_COLUMNS.iter().map(|s| s.to_string()).collect();
    if classes > 1 {
        for i in 1..=classes {
            out.extend([format!("queue_{i}"), format!("delay_{i}"), format!("utility_{i}")]);
        }
    }
    out
}

/// One-row metrics table.
pub fn write_metrics<W: Write>(out: W, m: &Metrics) -> CliResult<()> {
    let classes = m.per_class.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metric_header(classes))?;
    w.write_record(metric_fields(m, classes))?;
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Sweep table: `parameter,value,` followed by the metric columns.
pub fn write_sweep<W: Write>(out: W, parameter: SweepParameter, rows: &[SweepRow]) -> CliResult<()> {
    let classes = rows.iter().map(|r| r.metrics.per_class.len()).max().unwrap_or(1);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["parameter".to_string(), "value".to_string()];
    header.extend(metric_header(classes));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![parameter.name().to_string(), format_value(&r.value)];
        let mut fields = metric_fields(&r.metrics, classes);
        fields.resize(header.len() - 2, String::new());
        rec.extend(fields);
        w.write_record(&rec)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Per-slot trace: `t,x,h,y,energy,lambda,n_delta` (blank `n_delta` on
/// slots without a value update).
pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "h", "y", "energy", "lambda", "n_delta"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            format_sig(r.backlog),
            r.channel.to_string(),
            format_sig(r.sent),
            format_sig(r.energy),
            format_sig(r.lambda),
            r.evaluations.map(|e| e.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Learned value functions: `slot,queue,channel,breakpoints` with the
/// breakpoints as `x,v;x,v;…`.
pub fn write_checkpoints<W: Write>(out: W, rows: &[CheckpointRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "queue", "channel", "breakpoints"])?;
    for r in rows {
        w.write_record([r.slot.to_string(), r.queue.to_string(), r.channel.to_string(), r.function.to_row()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Planner tables: `channel,backlog,post_value,value,action`.
pub fn write_solution<W: Write>(out: W, plan: &Plan) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["channel", "backlog", "post_value", "value", "action"])?;
    let s = &plan.solution;
    for h in 0..plan.mdp.num_channels() {
        for i in 0..plan.mdp.levels() {
            w.write_record([
                h.to_string(),
                format_sig(plan.mdp.x(i)),
                format_sig(s.post.get(i, h)),
                format_sig(s.normal.get(i, h)),
                format_sig(plan.mdp.x(s.policy.action(i, h))),
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Multiplier search trace: `iteration,lambda,cost`.
pub fn write_search<W: Write>(out: W, search: &LagrangeResult) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "lambda", "cost"])?;
    for s in &search.trace {
        w.write_record([s.iteration.to_string(), format_sig(s.lambda), format_sig(s.cost)])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

/// Exact discounted Lagrangian of a grid policy at the planner start state.
pub fn policy_lagrangian(exp: &Experiment, policy: &Policy, lambda: f64) -> CliResult<f64> {
    let mdp = planner_mdp(exp)?.with_lambda(lambda);
    let s0 = planner_start(exp, &mdp)?;
    let pv = adp_sched_core::oracle::evaluate_policy(&mdp, policy, 1e-10)?;
    Ok(pv.lagrangian(&mdp, s0.0, s0.1))
}

/// Optimal discounted Lagrangian at the planner start state.
pub fn optimal_lagrangian(exp: &Experiment, lambda: f64) -> CliResult<f64> {
    let mdp = planner_mdp(exp)?;
    let s0 = planner_start(exp, &mdp)?;
    let opts = LagrangeOptions::default();
    Ok(lagrange_point(&mdp, lambda, s0, &opts)?.value)
}
