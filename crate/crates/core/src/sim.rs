//! Slot-by-slot simulation of a scheduler in a seeded environment.
//!
//! Each slot draws the arrivals of every queue (in queue order) and then the
//! next channel state from one environment RNG, so schedulers run with the
//! same seed see identical sample paths.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::baselines::{QLearning, StabilityScheduler};
use crate::env::{overflow, validate_action, ChannelModel, ChannelProcess, CostModel, SimRng, TrafficModel, Utility};
use crate::error::{Error, Result};
use crate::learner::Learner;
use crate::oracle::Policy;
use crate::priority::PriorityLearner;

/// Everything a scheduler observes at the start of a slot.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub t: u64,
    /// Arrivals that entered during the previous slot.
    pub arrivals: &'a [f64],
    /// Backlog after those arrivals.
    pub backlog: &'a [f64],
    pub dropped: &'a [f64],
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotDecision {
    pub sent: Vec<f64>,
    pub lambda: f64,
    /// Oracle evaluations of a value update made this slot.
    pub evaluations: Option<usize>,
}

/// A per-slot transmission policy.
pub trait Scheduler {
    /// Told the initial channel state before the first slot.
    fn start(&mut self, _channel: usize) {}

    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision>;

    /// Foresighted optimizations performed so far.
    fn ops(&self) -> u64 {
        0
    }
}

fn single(slot: &SlotView<'_>) -> Result<(f64, f64, f64)> {
    match (slot.arrivals, slot.backlog, slot.dropped) {
        ([a], [x], [d]) => Ok((*a, *x, *d)),
        _ => Err(Error::param("queues", "this scheduler handles exactly one queue")),
    }
}

impl Scheduler for Learner {
    fn start(&mut self, channel: usize) {
        self.set_initial_channel(channel);
    }

    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision> {
        let (a, _, _) = single(slot)?;
        let lambda = self.lambda();
        let step = self.learn_step(a, slot.channel)?;
        Ok(SlotDecision { sent: vec![step.sent], lambda, evaluations: step.evaluations })
    }

    fn ops(&self) -> u64 {
        Learner::ops(self)
    }
}

impl Scheduler for PriorityLearner {
    fn start(&mut self, channel: usize) {
        self.set_initial_channel(channel);
    }

    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision> {
        let lambda = self.lambda();
        let step = self.step(slot.arrivals, slot.channel)?;
        Ok(SlotDecision { sent: step.sent, lambda, evaluations: step.evaluations })
    }

    fn ops(&self) -> u64 {
        PriorityLearner::ops(self)
    }
}

impl Scheduler for StabilityScheduler {
    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision> {
        let (_, x, _) = single(slot)?;
        let lambda = self.lambda();
        let y = self.stability_step(x, slot.channel);
        Ok(SlotDecision { sent: vec![y], lambda, evaluations: None })
    }
}

impl Scheduler for QLearning {
    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision> {
        let (_, x, d) = single(slot)?;
        let lambda = self.lambda();
        let y = self.qlearning_step(x, slot.channel, d)?;
        Ok(SlotDecision { sent: vec![y], lambda, evaluations: None })
    }
}

/// Plays a fixed grid policy, e.g. one computed by the planner.
#[derive(Debug, Clone)]
pub struct PolicyScheduler {
    pub policy: Policy,
    pub grid: f64,
    pub lambda: f64,
}

impl Scheduler for PolicyScheduler {
    fn decide(&mut self, slot: &SlotView<'_>) -> Result<SlotDecision> {
        let (_, x, _) = single(slot)?;
        let i = libm::round(x / self.grid) as usize;
        let row = &self.policy.actions[slot.channel];
        if (x - i as f64 * self.grid).abs() > 1e-9 * self.grid || i >= row.len() {
            return Err(Error::param("backlog", "policy is defined on grid backlogs only"));
        }
        Ok(SlotDecision { sent: vec![(row[i] as f64 * self.grid).min(x)], lambda: self.lambda, evaluations: None })
    }
}

/// The simulated world: one shared channel and one buffer per queue.
#[derive(Debug, Clone)]
pub struct Environment {
    pub buffer: f64,
    pub alpha: f64,
    pub channel: ChannelModel,
    /// Per-queue arrival models, highest priority first.
    pub traffic: Vec<TrafficModel>,
    /// Per-queue utility used for the reported discounted utility.
    pub utilities: Vec<Utility>,
    pub cost: CostModel,
    /// Starting channel; defaults to the most likely state.
    pub initial_channel: Option<usize>,
}

impl Environment {
    pub fn single(buffer: f64, alpha: f64, channel: ChannelModel, traffic: TrafficModel) -> Self {
        Environment {
            buffer,
            alpha,
            channel,
            traffic: vec![traffic],
            utilities: vec![Utility::Backlog],
            cost: CostModel::default(),
            initial_channel: None,
        }
    }

    pub fn queues(&self) -> usize {
        self.traffic.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.traffic.is_empty() || self.traffic.len() != self.utilities.len() {
            return Err(Error::param("traffic", "need one traffic model and utility per queue"));
        }
        for t in &self.traffic {
            t.check_buffer(self.buffer)?;
        }
        if let Some(h) = self.initial_channel {
            if h >= self.channel.num_states() {
                return Err(Error::param("initial_channel", "index out of range"));
            }
        }
        Ok(())
    }

    /// Initial channel for Markov and i.i.d. models.
    pub fn start_channel(&self) -> usize {
        self.initial_channel.unwrap_or_else(|| self.channel.most_likely_state())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub slots: u64,
    /// Leading fraction of slots excluded from the averages.
    pub warmup_fraction: f64,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(slots: u64, seed: u64) -> Self {
        RunConfig { slots, warmup_fraction: 0.2, seed }
    }

    pub fn warmup_slots(&self) -> u64 {
        libm::floor(self.warmup_fraction * self.slots as f64) as u64
    }
}

/// One row of the optional per-slot trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    /// Total backlog after arrivals.
    pub backlog: f64,
    pub channel: usize,
    pub sent: f64,
    pub energy: f64,
    pub lambda: f64,
    pub evaluations: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub avg_queue: f64,
    pub avg_delay: f64,
    pub arrival_rate: f64,
    /// Average per-slot utility of the class.
    pub avg_utility: f64,
}

/// Averages over the measured window (after warmup), except the work
/// counters which cover the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub slots: u64,
    pub avg_queue: f64,
    /// `avg_queue / arrival_rate` (Little's law); 0 when nothing arrives.
    pub avg_delay: f64,
    pub arrival_rate: f64,
    pub avg_power: f64,
    pub discounted_utility: f64,
    pub discounted_cost: f64,
    pub dropped: f64,
    pub lambda_final: f64,
    pub lambda_mean: f64,
    /// Mean oracle evaluations per value update over the run.
    pub n_delta_mean: f64,
    pub updates: u64,
    /// Foresighted optimizations per slot over the run.
    pub ops_per_slot: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn little(queue: f64, rate: f64) -> f64 {
    if rate > 0.0 {
        queue / rate
    } else {
        0.0
    }
}

/// Runs `scheduler` for `run.slots` slots.
pub fn simulate<S: Scheduler + ?Sized>(
    env: &Environment,
    scheduler: &mut S,
    run: &RunConfig,
    mut trace: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<Metrics> {
    env.validate()?;
    if run.slots == 0 {
        return Err(Error::param("slots", "must be positive"));
    }
    if !(0.0..1.0).contains(&run.warmup_fraction) {
        return Err(Error::param("warmup_fraction", "must lie in [0, 1)"));
    }
    let n = env.queues();
    let mut rng = SimRng::seed_from_u64(run.seed);
    let mut channel = ChannelProcess::new(env.channel.clone(), env.start_channel(), &mut rng)?;
    scheduler.start(channel.current());
    let gains = env.channel.gains().to_vec();

    let warmup = run.warmup_slots();
    let mut post = vec![0.0; n];
    let mut arrivals = vec![0.0; n];
    let mut backlog = vec![0.0; n];
    let mut dropped = vec![0.0; n];

    let mut q_sum = vec![0.0; n];
    let mut a_sum = vec![0.0; n];
    let mut u_sum = vec![0.0; n];
    let (mut power, mut disc_u, mut disc_c, mut drop_sum, mut lambda_sum) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut discount = 1.0;
    let (mut evals, mut updates) = (0u64, 0u64);
    let mut lambda_final = 0.0;

    for t in 1..=run.slots {
        for i in 0..n {
            arrivals[i] = env.traffic[i].sample(&mut rng);
        }
        let h = channel.step(&mut rng);
        for i in 0..n {
            backlog[i] = (post[i] + arrivals[i]).min(env.buffer);
            dropped[i] = overflow(post[i], arrivals[i], env.buffer);
        }
        let view = SlotView { t, arrivals: &arrivals, backlog: &backlog, dropped: &dropped, channel: h };
        let d = scheduler.decide(&view)?;
        if d.sent.len() != n {
            return Err(Error::param("scheduler", "returned the wrong number of transmissions"));
        }
        let mut total = 0.0;
        let mut utility = 0.0;
        let mut sent = vec![0.0; n];
        for i in 0..n {
            sent[i] = validate_action(backlog[i], d.sent[i])?;
            total += sent[i];
            post[i] = backlog[i] - sent[i];
        }
        let energy = env.cost.cost(gains[h], total);
        if let Some(e) = d.evaluations {
            evals += e as u64;
            updates += 1;
        }
        lambda_final = d.lambda;

        if t > warmup {
            for i in 0..n {
                let u = env.utilities[i].value(backlog[i], sent[i]);
                q_sum[i] += backlog[i];
                a_sum[i] += arrivals[i];
                u_sum[i] += u;
                utility += u;
                drop_sum += dropped[i];
            }
            power += energy;
            lambda_sum += d.lambda;
            disc_u += discount * utility;
            disc_c += discount * energy;
            discount *= env.alpha;
        }
        if let Some(f) = trace.as_mut() {
            f(&TraceRow {
                t,
                backlog: backlog.iter().sum(),
                channel: h,
                sent: total,
                energy,
                lambda: d.lambda,
                evaluations: d.evaluations,
            });
        }
    }

    let m = (run.slots - warmup) as f64;
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|i| {
            let (q, r) = (q_sum[i] / m, a_sum[i] / m);
            ClassMetrics { avg_queue: q, avg_delay: little(q, r), arrival_rate: r, avg_utility: u_sum[i] / m }
        })
        .collect();
    let avg_queue = q_sum.iter().sum::<f64>() / m;
    let arrival_rate = a_sum.iter().sum::<f64>() / m;
    Ok(Metrics {
        slots: run.slots - warmup,
        avg_queue,
        avg_delay: little(avg_queue, arrival_rate),
        arrival_rate,
        avg_power: power / m,
        discounted_utility: disc_u,
        discounted_cost: disc_c,
        dropped: drop_sum,
        lambda_final,
        lambda_mean: lambda_sum / m,
        n_delta_mean: if updates > 0 { evals as f64 / updates as f64 } else { 0.0 },
        updates,
        ops_per_slot: scheduler.ops() as f64 / run.slots as f64,
        per_class,
    })
}
