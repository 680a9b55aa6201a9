//! Comparison schedulers: Lyapunov drift-plus-penalty and tabular Q-learning.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::env::{overflow, CostModel, SimRng, Utility};
use crate::error::{Error, Result};
use crate::learner::{default_penalty, LambdaConfig, LambdaController, StepSchedule};
use crate::oracle::Policy;

/// Actions `0, g, 2g, …` up to `x`, plus `x` itself when off the grid.
fn action_grid(x: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = libm::floor(x / step + 1e-9) as usize;
    let last = n as f64 * step;
    let extra = (x - last > 1e-9 * step).then_some(x);
    (0..=n).map(move |k| (k as f64 * step).min(x)).chain(extra)
}

/// How the drift-plus-penalty weight is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StabilityLambda {
    /// `λ_t = Q_t / V` from the virtual queue.
    Virtual { v_param: f64 },
    Fixed(f64),
}

/// Drift-plus-penalty scheduler with an average-energy virtual queue.
#[derive(Debug, Clone)]
pub struct StabilityScheduler {
    pub gains: Vec<f64>,
    pub cost: CostModel,
    pub mode: StabilityLambda,
    /// Per-slot energy budget `c̄_avg` drained from the virtual queue.
    pub budget_per_slot: f64,
    pub action_step: f64,
    virtual_queue: f64,
}

impl StabilityScheduler {
    pub fn new(gains: Vec<f64>, mode: StabilityLambda, budget_per_slot: f64) -> Result<Self> {
        match mode {
            StabilityLambda::Virtual { v_param } if !(v_param.is_finite() && v_param > 0.0) => {
                return Err(Error::param("v_param", "must be positive"));
            }
            StabilityLambda::Fixed(l) if !(l.is_finite() && l >= 0.0) => {
                return Err(Error::param("lambda", "must be finite and non-negative"));
            }
            _ => {}
        }
        if !(budget_per_slot.is_finite() && budget_per_slot >= 0.0) {
            return Err(Error::param("budget", "must be finite and non-negative"));
        }
        Ok(StabilityScheduler {
            gains,
            cost: CostModel::default(),
            mode,
            budget_per_slot,
            action_step: 1.0,
            virtual_queue: 0.0,
        })
    }

    pub fn virtual_queue(&self) -> f64 {
        self.virtual_queue
    }

    pub fn lambda(&self) -> f64 {
        match self.mode {
            StabilityLambda::Virtual { v_param } => self.virtual_queue / v_param,
            StabilityLambda::Fixed(l) => l,
        }
    }

    /// Minimizes `λ·c(h, y) + (x − y)² − x²` over the action grid (largest
    /// `y` on ties) and then charges the energy to the virtual queue.
    pub fn stability_step(&mut self, x: f64, h: usize) -> f64 {
        let y = self.choose(x, h, self.lambda());
        let energy = self.cost.cost(self.gains[h], y);
        self.virtual_queue = (self.virtual_queue + energy - self.budget_per_slot).max(0.0);
        y
    }

    /// The drift-plus-penalty minimizer at a given weight.
    pub fn choose(&self, x: f64, h: usize, lambda: f64) -> f64 {
        let mut best = (0.0, f64::INFINITY);
        for y in action_grid(x, self.action_step) {
            let r = x - y;
            let obj = lambda * self.cost.cost(self.gains[h], y) + r * r - x * x;
            if obj <= best.1 {
                best = (y, obj);
            }
        }
        best.0
    }
}

#[derive(Debug, Clone)]
pub struct QLearningConfig {
    pub buffer: f64,
    pub alpha: f64,
    pub gains: Vec<f64>,
    pub utility: Utility,
    pub cost: CostModel,
    /// Exploration `ε_t = min(1, ε₀/√t)`.
    pub epsilon0: f64,
    /// Learning rate indexed by the visit count of the updated entry.
    pub beta: StepSchedule,
    pub lambda: LambdaConfig,
    pub overflow_penalty: Option<f64>,
    /// Seed of the exploration stream, separate from the environment.
    pub seed: u64,
}

impl QLearningConfig {
    pub fn new(buffer: f64, alpha: f64, gains: Vec<f64>, seed: u64) -> Self {
        QLearningConfig {
            buffer,
            alpha,
            gains,
            utility: Utility::Backlog,
            cost: CostModel::default(),
            epsilon0: 1.0,
            beta: StepSchedule::DEFAULT_BETA,
            lambda: LambdaConfig::Fixed(0.0),
            overflow_penalty: None,
            seed,
        }
    }
}

/// Previous slot's entry awaiting its target.
#[derive(Debug, Clone, Copy)]
struct Pending {
    index: usize,
    reward: f64,
}

/// Tabular Q-learning on the integer backlog and action grid.
#[derive(Debug, Clone)]
pub struct QLearning {
    config: QLearningConfig,
    levels: usize,
    penalty: f64,
    /// `q[(h·levels + x)·levels + y]`
    q: Vec<f64>,
    visits: Vec<u64>,
    lambda: LambdaController,
    rng: SimRng,
    t: u64,
    pending: Option<Pending>,
    updates: u64,
}

impl QLearning {
    pub fn new(config: QLearningConfig) -> Result<Self> {
        let levels = libm::round(config.buffer) as usize + 1;
        if !(config.buffer >= 1.0) || libm::round(config.buffer) != config.buffer {
            return Err(Error::param("buffer", "Q-learning needs an integer buffer"));
        }
        if !(0.0..1.0).contains(&config.alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1)"));
        }
        if !(config.epsilon0 >= 0.0) {
            return Err(Error::param("epsilon0", "must be non-negative"));
        }
        config.beta.validate("beta")?;
        let size = config.gains.len() * levels * levels;
        Ok(QLearning {
            levels,
            penalty: default_penalty(config.overflow_penalty, &config.utility, config.alpha),
            q: vec![0.0; size],
            visits: vec![0; size],
            lambda: LambdaController::new(config.lambda, config.alpha)?,
            rng: SimRng::seed_from_u64(config.seed),
            t: 0,
            pending: None,
            updates: 0,
            config,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.lambda()
    }

    /// Number of table entries updated so far (one per slot after the first).
    pub fn updates(&self) -> u64 {
        self.updates
    }

    fn index(&self, x: usize, h: usize, y: usize) -> usize {
        (h * self.levels + x) * self.levels + y
    }

    pub fn q(&self, x: usize, h: usize, y: usize) -> f64 {
        self.q[self.index(x, h, y)]
    }

    /// Largest-`y` maximizer of `Q(x, h, ·)` over feasible actions.
    fn greedy(&self, x: usize, h: usize) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for y in 0..=x {
            let v = self.q(x, h, y);
            if v >= best.1 {
                best = (y, v);
            }
        }
        best
    }

    /// Exploration rate at slot `t`.
    pub fn epsilon(&self, t: u64) -> f64 {
        (self.config.epsilon0 / libm::sqrt(t.max(1) as f64)).min(1.0)
    }

    /// Completes the previous slot's update with the newly observed state,
    /// then picks an ε-greedy action. `x` must be an integer backlog.
    pub fn qlearning_step(&mut self, x: f64, h: usize, dropped: f64) -> Result<f64> {
        let xi = libm::round(x);
        if (x - xi).abs() > 1e-9 || xi < 0.0 || xi as usize >= self.levels {
            return Err(Error::param("backlog", "Q-learning needs an integer backlog within the buffer"));
        }
        let xi = xi as usize;
        self.t += 1;
        if let Some(p) = self.pending.take() {
            let target = p.reward + self.config.alpha * (self.greedy(xi, h).1 - self.penalty * dropped);
            self.visits[p.index] += 1;
            let beta = self.config.beta.at(self.visits[p.index]);
            self.q[p.index] = q_update(self.q[p.index], beta, target);
            self.updates += 1;
        }
        let y = if self.rng.random::<f64>() < self.epsilon(self.t) {
            self.rng.random_range(0..=xi)
        } else {
            self.greedy(xi, h).0
        };
        let sent = y as f64;
        let energy = self.config.cost.cost(self.config.gains[h], sent);
        let reward = self.config.utility.value(x, sent) - self.lambda.lambda() * energy;
        self.pending = Some(Pending { index: self.index(xi, h, y), reward });
        self.lambda.record(energy);
        Ok(sent)
    }

    /// Greedy policy of the current table.
    pub fn greedy_policy(&self) -> Policy {
        Policy {
            actions: (0..self.config.gains.len())
                .map(|h| (0..self.levels).map(|x| self.greedy(x, h).0).collect())
                .collect(),
        }
    }

    /// Drop at the buffer cap for the transition `post + a`.
    pub fn dropped(&self, post: f64, a: f64) -> f64 {
        overflow(post, a, self.config.buffer)
    }
}

/// `(1 − β)·Q + β·target`.
pub fn q_update(q: f64, beta: f64, target: f64) -> f64 {
    (1.0 - beta) * q + beta * target
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_plus_penalty_enumeration() {
        let mut s = StabilityScheduler::new(vec![1.0], StabilityLambda::Fixed(1.0), 0.0).unwrap();
        s.cost = CostModel::Linear { scale: 1.0 };
        // Objectives {0, −2, −2}; the tie goes to the larger action.
        assert_eq!(s.choose(2.0, 0, 1.0), 2.0);
        assert_eq!(s.choose(2.0, 0, 1e12), 0.0);
        assert_eq!(s.stability_step(0.0, 0), 0.0);
    }

    #[test]
    fn virtual_queue_stays_non_negative() {
        let mut s = StabilityScheduler::new(vec![0.1, 0.5], StabilityLambda::Virtual { v_param: 10.0 }, 5.0).unwrap();
        for t in 0..1000 {
            let x = (t % 7) as f64;
            let y = s.stability_step(x, t % 2);
            assert!((0.0..=x).contains(&y));
            assert!(s.virtual_queue() >= 0.0);
        }
    }

    #[test]
    fn off_grid_backlog_is_a_candidate() {
        let grid: Vec<f64> = action_grid(2.5, 1.0).collect();
        assert_eq!(grid, vec![0.0, 1.0, 2.0, 2.5]);
        let grid: Vec<f64> = action_grid(3.0, 1.0).collect();
        assert_eq!(grid, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_update_arithmetic() {
        assert_eq!(q_update(0.0, 0.5, 1.0), 0.5);
    }

    #[test]
    fn greedy_without_exploration_drains() {
        let mut cfg = QLearningConfig::new(8.0, 0.9, vec![0.2], 1);
        cfg.epsilon0 = 0.0;
        let mut q = QLearning::new(cfg).unwrap();
        assert_eq!(q.qlearning_step(5.0, 0, 0.0).unwrap(), 5.0);
    }

    #[test]
    fn one_entry_per_slot() {
        let cfg = QLearningConfig::new(8.0, 0.9, vec![0.2, 0.4], 3);
        let mut q = QLearning::new(cfg).unwrap();
        let mut x = 0.0;
        for t in 0..500u64 {
            let before = q.q.clone();
            let y = q.qlearning_step(x, (t % 2) as usize, 0.0).unwrap();
            let changed = before.iter().zip(&q.q).filter(|(a, b)| a != b).count();
            assert!(changed <= 1);
            assert!(y <= x);
            x = (x - y + (t % 3) as f64).min(8.0);
        }
        assert_eq!(q.updates(), 499);
    }
}
