//! Online learning for prioritized queues sharing one channel.
//!
//! Queue `i` has a strictly larger utility weight than queue `i+1`. The
//! joint value function then decomposes into one concave function per queue
//! and channel state, and the joint action is found queue by queue: each
//! queue's foresighted optimization sees the energy already committed by the
//! queues above it. A lower-priority queue transmits only once every queue
//! above it has been emptied.

use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::env::{overflow, validate_action, CostModel, PriorityWeights, Utility};
use crate::error::{Error, Result};
use crate::learner::{
    default_penalty, foresighted_optimize, Decision, LambdaConfig, LambdaController, Objective, StepSchedule,
};
use crate::pwl::{blend_reapproximate, ApproxConfig, PwlConcave};

/// Remaining backlog below this fraction of the buffer counts as empty.
const EMPTY_FRACTION: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct PriorityConfig {
    /// Per-queue buffer capacity, highest priority first.
    pub buffers: Vec<f64>,
    pub alpha: f64,
    pub gains: Vec<f64>,
    /// Per-queue utility, highest priority first.
    pub utilities: Vec<Utility>,
    pub cost: CostModel,
    pub delta: f64,
    pub refresh_period: u64,
    pub beta: StepSchedule,
    pub lambda: LambdaConfig,
    /// Per-unit overflow charge per queue; `None` derives it from the utility.
    pub overflow_penalty: Option<f64>,
    pub grid_step: f64,
    pub max_evals: usize,
}

impl PriorityConfig {
    /// Queues with utilities `w_i·min(x_i, y_i)` and a shared buffer size.
    pub fn weighted(weights: &PriorityWeights, buffer: f64, alpha: f64, gains: Vec<f64>) -> Self {
        PriorityConfig {
            buffers: vec![buffer; weights.len()],
            alpha,
            gains,
            utilities: weights.as_slice().iter().map(|&w| Utility::Throughput { weight: w }).collect(),
            cost: CostModel::default(),
            delta: 0.1,
            refresh_period: 1,
            beta: StepSchedule::DEFAULT_BETA,
            lambda: LambdaConfig::Fixed(0.0),
            overflow_penalty: None,
            grid_step: 1.0,
            max_evals: 100_000,
        }
    }

    pub fn queues(&self) -> usize {
        self.buffers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.buffers.is_empty() || self.buffers.len() != self.utilities.len() {
            return Err(Error::param("queues", "need one buffer and one utility per queue"));
        }
        if self.buffers.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::param("buffer", "must be positive and finite"));
        }
        // Weighted utilities must be strictly ordered.
        let weights: Option<Vec<f64>> = self
            .utilities
            .iter()
            .map(|u| match u {
                Utility::Throughput { weight } => Some(*weight),
                _ => None,
            })
            .collect();
        if let Some(w) = weights {
            PriorityWeights::new(w)?;
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1)"));
        }
        if self.gains.is_empty() || self.gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::param("gains", "must be positive and finite"));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::param("delta", "must be finite and non-negative"));
        }
        if self.refresh_period == 0 {
            return Err(Error::param("refresh_period", "must be at least 1"));
        }
        self.beta.validate("beta")
    }

    fn approx(&self) -> ApproxConfig {
        let cfg = ApproxConfig::new(self.delta).with_max_evals(self.max_evals);
        if self.delta == 0.0 {
            cfg.with_grid(self.grid_step)
        } else {
            cfg
        }
    }
}

/// One priority-learner slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityStep {
    pub backlog: Vec<f64>,
    pub dropped: Vec<f64>,
    pub sent: Vec<f64>,
    pub energy: f64,
    /// Oracle evaluations summed over queues, if an update ran.
    pub evaluations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PriorityLearner {
    config: PriorityConfig,
    penalties: Vec<f64>,
    /// `values[i][h]`
    values: Vec<Vec<PwlConcave>>,
    lambda: LambdaController,
    t: u64,
    updates: u64,
    post: Vec<f64>,
    channel: usize,
    ops: u64,
    evaluations: u64,
}

impl PriorityLearner {
    pub fn new(config: PriorityConfig, initial_channel: usize) -> Result<Self> {
        config.validate()?;
        if initial_channel >= config.gains.len() {
            return Err(Error::param("initial channel", "index out of range"));
        }
        let values = config
            .buffers
            .iter()
            .map(|&b| PwlConcave::zero(0.0, b).map(|z| vec![z; config.gains.len()]))
            .collect::<Result<Vec<_>>>()?;
        Ok(PriorityLearner {
            penalties: config.utilities.iter().map(|u| default_penalty(config.overflow_penalty, u, config.alpha)).collect(),
            values,
            lambda: LambdaController::new(config.lambda, config.alpha)?,
            t: 0,
            updates: 0,
            post: vec![0.0; config.queues()],
            channel: initial_channel,
            ops: 0,
            evaluations: 0,
            config,
        })
    }

    pub fn config(&self) -> &PriorityConfig {
        &self.config
    }

    /// Value functions of queue `i`, one per channel state.
    pub fn values(&self, i: usize) -> &[PwlConcave] {
        &self.values[i]
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.lambda()
    }

    /// See [`crate::learner::Learner::set_initial_channel`].
    pub fn set_initial_channel(&mut self, channel: usize) {
        if self.t == 0 && channel < self.config.gains.len() {
            self.channel = channel;
        }
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn objective(&self, i: usize, h: usize, offset: f64) -> Objective<'_> {
        Objective {
            utility: &self.config.utilities[i],
            cost: &self.config.cost,
            gain: self.config.gains[h],
            lambda: self.lambda.lambda(),
            alpha: self.config.alpha,
            cost_offset: offset,
        }
    }

    /// Sequential schedule for backlog `x` in channel `h`; returns the
    /// transmissions and the number of foresighted optimizations solved.
    fn sequential(&self, x: &[f64], h: usize) -> Result<(Vec<f64>, u64)> {
        let mut sent = vec![0.0; x.len()];
        let mut offset = 0.0;
        let mut ops = 0;
        for i in 0..x.len() {
            let d = foresighted_optimize(x[i], &self.values[i][h], &self.objective(i, h, offset))?;
            ops += 1;
            sent[i] = d.sent;
            offset += d.sent;
            if x[i] - d.sent > EMPTY_FRACTION * self.config.buffers[i] {
                break;
            }
        }
        Ok((sent, ops))
    }

    /// Joint transmission for backlog vector `x` in channel `h`.
    pub fn priority_schedule(&self, x: &[f64], h: usize) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self.sequential(x, h)?.0)
    }

    /// Drains `z*` of fresh arrivals `a` in channel `h′`, computed in
    /// priority order.
    pub fn compute_z_star(&self, a: &[f64], h_new: usize) -> Result<Vec<f64>> {
        self.check_len(a)?;
        Ok(self.sequential(a, h_new)?.0)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.config.queues() {
            Err(Error::param("queues", "vector length differs from the number of queues"))
        } else {
            Ok(())
        }
    }

    /// One slot: observe arrivals and the new channel, refresh on schedule,
    /// then act.
    pub fn step(&mut self, arrivals: &[f64], channel: usize) -> Result<PriorityStep> {
        self.check_len(arrivals)?;
        if channel >= self.config.gains.len() {
            return Err(Error::param("channel", "index out of range"));
        }
        self.t += 1;
        let n = self.config.queues();
        let mut backlog = vec![0.0; n];
        let mut dropped = vec![0.0; n];
        for i in 0..n {
            let b = self.config.buffers[i];
            backlog[i] = (self.post[i] + arrivals[i]).min(b);
            dropped[i] = overflow(self.post[i], arrivals[i], b);
        }

        let evaluations = if self.t.is_multiple_of(self.config.refresh_period) {
            Some(self.priority_batch_update(arrivals, self.channel, channel)?)
        } else {
            None
        };

        let (raw, ops) = self.sequential(&backlog, channel)?;
        self.ops += ops;
        let mut sent = vec![0.0; n];
        for i in 0..n {
            sent[i] = validate_action(backlog[i], raw[i])?;
            self.post[i] = backlog[i] - sent[i];
        }
        let energy = self.config.cost.cost(self.config.gains[channel], sent.iter().sum());
        self.lambda.record(energy);
        self.channel = channel;
        Ok(PriorityStep { backlog, dropped, sent, energy, evaluations })
    }

    /// Refreshes every `V_i(h_old)`; returns total oracle evaluations.
    pub fn priority_batch_update(&mut self, a: &[f64], h_old: usize, h_new: usize) -> Result<usize> {
        self.updates += 1;
        let beta = self.config.beta.at(self.updates);
        self.priority_batch_update_with(a, h_old, h_new, beta)
    }

    /// [`PriorityLearner::priority_batch_update`] with an explicit rate.
    pub fn priority_batch_update_with(&mut self, a: &[f64], h_old: usize, h_new: usize, beta: f64) -> Result<usize> {
        self.check_len(a)?;
        let z = self.compute_z_star(a, h_new)?;
        self.ops += z.len() as u64;
        let targets = self.update_targets(a, &z, h_new);
        let cfg = self.config.approx();
        let mut total = 0;
        let mut fresh = Vec::with_capacity(targets.len());
        for (i, target) in targets.iter().enumerate() {
            let failure = Cell::new(None);
            let g = |post: f64| match target.eval(self, post) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            };
            let r = blend_reapproximate(&self.values[i][h_old], g, beta, &cfg);
            if let Some(e) = failure.take() {
                return Err(e);
            }
            let approx = r?;
            total += approx.evaluations;
            fresh.push(approx.function);
        }
        for (i, f) in fresh.into_iter().enumerate() {
            self.values[i][h_old] = f;
        }
        self.ops += total as u64;
        self.evaluations += total as u64;
        Ok(total)
    }

    fn update_targets(&self, a: &[f64], z: &[f64], h_new: usize) -> Vec<UpdateTarget> {
        let n = a.len();
        let mut out = Vec::with_capacity(n);
        let mut offset = 0.0;
        let mut constant = 0.0;
        let mut blocked = false;
        for i in 0..n {
            out.push(UpdateTarget { queue: i, arrival: a[i], channel: h_new, offset, constant, blocked });
            offset += z[i];
            constant += self.config.utilities[i].value(a[i], z[i]);
            if a[i] - z[i] > EMPTY_FRACTION * self.config.buffers[i] {
                blocked = true;
            }
        }
        out
    }
}

/// `g_i(x̃) = Σ_{j<i} u_j(a_j, z_j) + J_i(min(x̃ + a_i, B_i), h′) − κ·drop`.
#[derive(Debug, Clone, Copy)]
struct UpdateTarget {
    queue: usize,
    arrival: f64,
    channel: usize,
    offset: f64,
    constant: f64,
    /// A higher-priority queue keeps part of its arrivals, so this queue
    /// cannot transmit.
    blocked: bool,
}

impl UpdateTarget {
    fn eval(&self, learner: &PriorityLearner, post: f64) -> Result<f64> {
        let i = self.queue;
        let b = learner.config.buffers[i];
        let x = (post + self.arrival).min(b);
        let v = &learner.values[i][self.channel];
        let obj = learner.objective(i, self.channel, self.offset);
        let d = if self.blocked {
            Decision { sent: 0.0, value: obj.value(x, 0.0, v) }
        } else {
            foresighted_optimize(x, v, &obj)?
        };
        let j = if i == 0 { d.value } else { self.constant + d.value };
        Ok(j - learner.penalties[i] * overflow(post, self.arrival, b))
    }
}
