//! Online learning of post-decision value functions.
//!
//! The learner keeps one concave piecewise-linear value function per channel
//! state over the post-decision backlog `x̃ ∈ [0, B]`. Every `T` slots it
//! refreshes the slice of the previous channel state with a batch update over
//! all backlogs at once, using only the observed arrival and channel
//! transition, then acts greedily by solving the one-dimensional foresighted
//! optimization against the current value function.

use alloc::vec::Vec;
use core::cell::Cell;

use crate::env::{overflow, validate_action, CostModel, PostDecisionState, Utility};
use crate::error::{Error, Result};
use crate::num::golden_section_max;
use crate::pwl::{blend_reapproximate, ApproxConfig, PwlConcave};

/// Tolerance of the golden-section fallback.
const GOLDEN_TOL: f64 = 1e-9;

/// Learning-rate or multiplier step schedule indexed from `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `c/n`
    Harmonic(f64),
    /// `c/n^p`
    Polynomial { c: f64, p: f64 },
    Constant(f64),
}

impl StepSchedule {
    /// The default value-function rate `1/n^0.6`.
    pub const DEFAULT_BETA: StepSchedule = StepSchedule::Polynomial { c: 1.0, p: 0.6 };
    /// The default multiplier step `1/n`.
    pub const DEFAULT_GAMMA: StepSchedule = StepSchedule::Harmonic(1.0);

    pub fn at(&self, n: u64) -> f64 {
        let n = n.max(1) as f64;
        match *self {
            StepSchedule::Harmonic(c) => c / n,
            StepSchedule::Polynomial { c, p } => c / libm::pow(n, p),
            StepSchedule::Constant(c) => c,
        }
    }

    /// `Σβ = ∞` and `Σβ² < ∞`.
    pub fn is_robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::Harmonic(c) => c > 0.0,
            StepSchedule::Polynomial { c, p } => c > 0.0 && p > 0.5 && p <= 1.0,
            StepSchedule::Constant(_) => false,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        let ok = match *self {
            StepSchedule::Harmonic(c) | StepSchedule::Constant(c) => c.is_finite() && c > 0.0,
            StepSchedule::Polynomial { c, p } => c.is_finite() && c > 0.0 && p.is_finite() && p > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param(name, "step schedule parameters must be positive"))
        }
    }
}

/// The per-slot maximization `u(x, y) − λ·c(h, y + offset) + α·V(x − y)`.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    pub utility: &'a Utility,
    pub cost: &'a CostModel,
    pub gain: f64,
    pub lambda: f64,
    pub alpha: f64,
    /// Amount already scheduled from other queues sharing the channel.
    pub cost_offset: f64,
}

impl Objective<'_> {
    /// The objective at `y` for backlog `x`.
    pub fn value(&self, x: f64, y: f64, v: &PwlConcave) -> f64 {
        self.utility.value(x, y) - self.lambda * self.cost.cost(self.gain, y + self.cost_offset)
            + self.alpha * v.eval_clamped(x - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub sent: f64,
    pub value: f64,
}

/// Maximizes the foresighted objective over `y ∈ [0, x]`.
///
/// The value function contributes one linear piece per breakpoint interval,
/// so the objective is concave with kinks at `y = x − b`. A binary search
/// over the kinks finds the pair of pieces holding the maximum; within each
/// piece the stationary point is solved in closed form when the utility is
/// affine in `y` and the cost has an invertible marginal, and by
/// golden-section search otherwise. Value ties go to the larger `y`.
pub fn foresighted_optimize(x: f64, v: &PwlConcave, obj: &Objective<'_>) -> Result<Decision> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(Error::param("backlog", "must be finite and non-negative"));
    }
    let g = |y: f64| obj.value(x, y, v);
    if x == 0.0 {
        return Ok(Decision { sent: 0.0, value: g(0.0) });
    }

    let (g0, gm, gx) = (g(0.0), g(0.5 * x), g(x));
    if gm < 0.5 * (g0 + gx) - 1e-9 * (1.0 + g0.abs() + gx.abs()) {
        return Err(Error::StructuralAssumption { backlog: x });
    }

    // Kinks in increasing y.
    let mut ys = Vec::with_capacity(v.len() + 2);
    ys.push(0.0);
    for p in v.points().iter().rev() {
        if p.x > 0.0 && p.x < x {
            ys.push(x - p.x);
        }
    }
    ys.push(x);

    // First kink after which the objective strictly drops; under concavity
    // this is the rightmost maximizer over the kinks.
    let n = ys.len();
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if g(ys[mid + 1]) < g(ys[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let j = lo;

    let mut best = Decision { sent: ys[j], value: g(ys[j]) };
    let consider = |y: f64, best: &mut Decision| {
        let val = g(y);
        if val > best.value || (val == best.value && y > best.sent) {
            *best = Decision { sent: y, value: val };
        }
    };
    for piece in [j.checked_sub(1), (j + 1 < n).then_some(j)].into_iter().flatten() {
        let (ya, yb) = (ys[piece], ys[piece + 1]);
        consider(ya, &mut best);
        consider(yb, &mut best);
        if yb - ya <= 0.0 {
            continue;
        }
        match piece_stationary_point(x, ya, yb, v, obj) {
            Some(y) => consider(y, &mut best),
            None => {
                let (y, _) = golden_section_max(g, ya, yb, GOLDEN_TOL);
                consider(y, &mut best);
            }
        }
    }
    best.sent = best.sent.clamp(0.0, x);
    Ok(best)
}

/// Closed-form maximizer of the objective on `[ya, yb]`, where the value
/// function is affine; `None` if no closed form applies.
fn piece_stationary_point(x: f64, ya: f64, yb: f64, v: &PwlConcave, obj: &Objective<'_>) -> Option<f64> {
    let su = obj.utility.affine_slope()?;
    let k = v.slope_at(x - 0.5 * (ya + yb));
    // g'(y) = su − λ·c'(y + offset) − α·k
    let drift = su - obj.alpha * k;
    if obj.lambda == 0.0 {
        return Some(if drift >= 0.0 { yb } else { ya });
    }
    let total = obj.cost.marginal_inverse(obj.gain, drift / obj.lambda)?;
    let y = total - obj.cost_offset;
    Some(if y.is_nan() { ya } else { y.clamp(ya, yb) })
}

/// Settings for the Lagrange multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaConfig {
    Fixed(f64),
    /// Stochastic subgradient on the per-slot budget `(1 − α)·budget`,
    /// applied every `window` slots.
    Adaptive { initial: f64, budget: f64, gamma: StepSchedule, window: u64 },
}

/// Windowed stochastic-subgradient multiplier shared by the online schedulers.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaController {
    config: LambdaConfig,
    lambda: f64,
    budget_per_slot: f64,
    window_cost: f64,
    window_len: u64,
    updates: u64,
}

impl LambdaController {
    pub fn new(config: LambdaConfig, alpha: f64) -> Result<Self> {
        let (lambda, budget_per_slot) = match config {
            LambdaConfig::Fixed(l) => (l, 0.0),
            LambdaConfig::Adaptive { initial, budget, gamma, window } => {
                gamma.validate("gamma")?;
                if !(budget.is_finite() && budget > 0.0) {
                    return Err(Error::param("budget", "must be positive"));
                }
                if window == 0 {
                    return Err(Error::param("window", "must be at least one slot"));
                }
                (initial, (1.0 - alpha) * budget)
            }
        };
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::param("lambda", "must be finite and non-negative"));
        }
        Ok(LambdaController { config, lambda, budget_per_slot, window_cost: 0.0, window_len: 0, updates: 0 })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Per-slot budget `c̄_avg`; zero in fixed mode.
    pub fn budget_per_slot(&self) -> f64 {
        self.budget_per_slot
    }

    /// Records one slot's energy and updates λ when a window closes.
    pub fn record(&mut self, energy: f64) {
        let LambdaConfig::Adaptive { window, .. } = self.config else { return };
        self.window_cost += energy;
        self.window_len += 1;
        if self.window_len == window {
            let avg = self.window_cost / window as f64;
            self.window_cost = 0.0;
            self.window_len = 0;
            self.lambda_update(avg);
        }
    }

    /// `λ ← max(λ + γ_n·(ĉ − c̄_avg), 0)` for a window average `ĉ`.
    pub fn lambda_update(&mut self, avg_cost: f64) -> f64 {
        if let LambdaConfig::Adaptive { gamma, .. } = self.config {
            self.updates += 1;
            self.lambda = subgradient_step(self.lambda, gamma.at(self.updates), avg_cost, self.budget_per_slot);
        }
        self.lambda
    }
}

/// One projected subgradient step `max(λ + γ·(c − budget), 0)`.
pub fn subgradient_step(lambda: f64, gamma: f64, cost: f64, budget: f64) -> f64 {
    (lambda + gamma * (cost - budget)).max(0.0)
}

/// Configuration of the single-queue learner.
#[derive(Debug, Clone)]
pub struct LearnerConfig {
    pub buffer: f64,
    pub alpha: f64,
    /// Representative gain of every channel state.
    pub gains: Vec<f64>,
    pub utility: Utility,
    pub cost: CostModel,
    /// Approximation threshold; `0` evaluates the full backlog grid.
    pub delta: f64,
    /// Refresh period `T` in slots.
    pub refresh_period: u64,
    pub beta: StepSchedule,
    pub lambda: LambdaConfig,
    /// Value charged per unit dropped at the buffer cap. `None` picks the
    /// utility's holding rate divided by `1 − α`.
    pub overflow_penalty: Option<f64>,
    /// Grid spacing used when `delta = 0`.
    pub grid_step: f64,
    pub max_evals: usize,
}

impl LearnerConfig {
    pub fn new(buffer: f64, alpha: f64, gains: Vec<f64>) -> Self {
        LearnerConfig {
            buffer,
            alpha,
            gains,
            utility: Utility::Backlog,
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

    pub fn validate(&self) -> Result<()> {
        if !(self.buffer.is_finite() && self.buffer > 0.0) {
            return Err(Error::param("buffer", "must be positive and finite"));
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
        if !(self.grid_step.is_finite() && self.grid_step > 0.0) {
            return Err(Error::param("grid_step", "must be positive"));
        }
        self.beta.validate("beta")?;
        if let Some(k) = self.overflow_penalty {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::param("overflow_penalty", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Effective penalty per dropped unit.
    pub fn penalty(&self) -> f64 {
        default_penalty(self.overflow_penalty, &self.utility, self.alpha)
    }

    pub(crate) fn approx(&self) -> ApproxConfig {
        let cfg = ApproxConfig::new(self.delta).with_max_evals(self.max_evals);
        if self.delta == 0.0 {
            cfg.with_grid(self.grid_step)
        } else {
            cfg
        }
    }
}

pub(crate) fn default_penalty(explicit: Option<f64>, utility: &Utility, alpha: f64) -> f64 {
    explicit.unwrap_or_else(|| utility.holding_rate().unwrap_or(0.0) / (1.0 - alpha))
}

/// What happened in one learner slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerStep {
    pub backlog: f64,
    pub dropped: f64,
    pub sent: f64,
    pub energy: f64,
    /// Oracle evaluations of this slot's batch update, if one ran.
    pub evaluations: Option<usize>,
}

/// State of the single-queue online learner.
#[derive(Debug, Clone)]
pub struct Learner {
    config: LearnerConfig,
    penalty: f64,
    values: Vec<PwlConcave>,
    lambda: LambdaController,
    t: u64,
    updates: u64,
    post: PostDecisionState,
    ops: u64,
    evaluations: u64,
}

impl Learner {
    /// Starts with zero value functions, an empty buffer and channel
    /// `initial_channel`.
    pub fn new(config: LearnerConfig, initial_channel: usize) -> Result<Self> {
        config.validate()?;
        if initial_channel >= config.gains.len() {
            return Err(Error::param("initial channel", "index out of range"));
        }
        let zero = PwlConcave::zero(0.0, config.buffer)?;
        Ok(Learner {
            penalty: config.penalty(),
            values: alloc::vec![zero; config.gains.len()],
            lambda: LambdaController::new(config.lambda, config.alpha)?,
            t: 0,
            updates: 0,
            post: PostDecisionState { backlog: 0.0, channel: initial_channel },
            ops: 0,
            evaluations: 0,
            config,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn values(&self) -> &[PwlConcave] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda.lambda()
    }

    pub fn lambda_controller(&self) -> &LambdaController {
        &self.lambda
    }

    pub fn post_state(&self) -> PostDecisionState {
        self.post
    }

    /// Resets the channel the learner believes it starts in. Only
    /// meaningful before the first slot.
    pub fn set_initial_channel(&mut self, channel: usize) {
        if self.t == 0 && channel < self.values.len() {
            self.post.channel = channel;
        }
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    /// Foresighted optimizations performed so far (one per decision plus
    /// one per oracle evaluation in batch updates).
    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Total oracle evaluations over all batch updates.
    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    fn objective(&self, h: usize) -> Objective<'_> {
        Objective {
            utility: &self.config.utility,
            cost: &self.config.cost,
            gain: self.config.gains[h],
            lambda: self.lambda.lambda(),
            alpha: self.config.alpha,
            cost_offset: 0.0,
        }
    }

    /// Greedy decision at `(x, h)` under the current value functions.
    pub fn decide(&self, x: f64, h: usize) -> Result<Decision> {
        foresighted_optimize(x, &self.values[h], &self.objective(h))
    }

    /// One slot: observe the arrival `a_{t−1}` and the new channel `h_t`,
    /// refresh the value function of the previous channel state when the
    /// period fires, then act.
    pub fn learn_step(&mut self, arrival: f64, channel: usize) -> Result<LearnerStep> {
        if channel >= self.values.len() {
            return Err(Error::param("channel", "index out of range"));
        }
        self.t += 1;
        let b = self.config.buffer;
        let backlog = (self.post.backlog + arrival).min(b);
        let dropped = overflow(self.post.backlog, arrival, b);

        let evaluations = if self.t.is_multiple_of(self.config.refresh_period) {
            Some(self.batch_update(arrival, self.post.channel, channel)?)
        } else {
            None
        };

        let d = self.decide(backlog, channel)?;
        self.ops += 1;
        let sent = validate_action(backlog, d.sent)?;
        let energy = self.config.cost.cost(self.config.gains[channel], sent);
        self.lambda.record(energy);
        self.post = PostDecisionState { backlog: backlog - sent, channel };
        Ok(LearnerStep { backlog, dropped, sent, energy, evaluations })
    }

    /// Refreshes `V(h_old)` from the observed arrival and channel transition;
    /// returns the number of oracle evaluations (`n_δ`).
    pub fn batch_update(&mut self, arrival: f64, h_old: usize, h_new: usize) -> Result<usize> {
        self.updates += 1;
        let beta = self.config.beta.at(self.updates);
        self.batch_update_with(arrival, h_old, h_new, beta)
    }

    /// [`Learner::batch_update`] with an explicit learning rate.
    pub fn batch_update_with(&mut self, arrival: f64, h_old: usize, h_new: usize, beta: f64) -> Result<usize> {
        let b = self.config.buffer;
        let kappa = self.penalty;
        let obj = self.objective(h_new);
        let v_new = &self.values[h_new];
        let failure = Cell::new(None);
        let target = |post: f64| match foresighted_optimize((post + arrival).min(b), v_new, &obj) {
            Ok(d) => d.value - kappa * overflow(post, arrival, b),
            Err(e) => {
                failure.set(Some(e));
                f64::NAN
            }
        };
        let result = blend_reapproximate(&self.values[h_old], target, beta, &self.config.approx());
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let approx = result?;
        self.ops += approx.evaluations as u64;
        self.evaluations += approx.evaluations as u64;
        self.values[h_old] = approx.function;
        Ok(approx.evaluations)
    }
}
