//! Exact and approximate dynamic programming on a discretized backlog grid.
//!
//! The solvers assume the dynamics are known: a finite arrival pmf on the
//! grid and a Markov (or i.i.d.) channel. They serve as a planner and as the
//! ground truth the online schedulers are checked against.
//!
//! Units dropped at the buffer cap are charged `overflow_penalty` each. The
//! charge enters the post-decision value, so the normal-state and
//! post-decision recursions share one fixed point.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{overflow, ChannelModel, CostModel, SystemState, TrafficModel, Utility};
use crate::error::{Error, Result};
use crate::learner::{default_penalty, foresighted_optimize, subgradient_step, Objective, StepSchedule};
use crate::pwl::{sandwich_approximate, ApproxConfig, PwlConcave};

/// Finite MDP on the grid `0, g, 2g, …, B`.
#[derive(Debug, Clone)]
pub struct DiscreteMdp {
    pub buffer: f64,
    pub grid: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub gains: Vec<f64>,
    /// Row-stochastic channel transitions `p(h′|h)`.
    pub transitions: Vec<Vec<f64>>,
    /// Arrival pmf as `(grid steps, probability)`.
    pub arrivals: Vec<(usize, f64)>,
    pub utility: Utility,
    pub cost: CostModel,
    pub overflow_penalty: f64,
}

impl DiscreteMdp {
    /// Builds the MDP from environment descriptors with `λ = 0`, the backlog
    /// utility and the exponential cost.
    pub fn new(buffer: f64, grid: f64, alpha: f64, channel: &ChannelModel, traffic: &TrafficModel) -> Result<Self> {
        let n = channel.num_states();
        let transitions = match channel {
            ChannelModel::MovingAverage { .. } => {
                return Err(Error::Unsupported("the planner needs a Markov or i.i.d. channel"));
            }
            _ => (0..n).map(|h| channel.transition_row(h).map(<[f64]>::to_vec).unwrap_or_default()).collect(),
        };
        Self::from_parts(buffer, grid, alpha, channel.gains().to_vec(), transitions, &traffic.pmf())
    }

    /// `arrivals` holds `(value, probability)` pairs with values on the grid.
    pub fn from_parts(
        buffer: f64,
        grid: f64,
        alpha: f64,
        gains: Vec<f64>,
        transitions: Vec<Vec<f64>>,
        arrivals: &[(f64, f64)],
    ) -> Result<Self> {
        if !(grid > 0.0 && buffer > 0.0) {
            return Err(Error::param("grid", "grid and buffer must be positive"));
        }
        let steps = buffer / grid;
        if (steps - libm::round(steps)).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::param("grid", "buffer must be a multiple of the grid step"));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1)"));
        }
        // Validates shape and stochasticity.
        ChannelModel::markov(transitions.clone(), gains.clone())?;
        let mut pmf = Vec::with_capacity(arrivals.len());
        let mut total = 0.0;
        for &(a, p) in arrivals {
            let k = libm::round(a / grid);
            if a < 0.0 || (a - k * grid).abs() > 1e-9 * grid {
                return Err(Error::param("arrivals", "values must be non-negative grid multiples"));
            }
            total += p;
            pmf.push((k as usize, p));
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("arrivals", "probabilities must sum to 1"));
        }
        let utility = Utility::Backlog;
        Ok(DiscreteMdp {
            buffer,
            grid,
            alpha,
            lambda: 0.0,
            gains,
            transitions,
            arrivals: pmf,
            overflow_penalty: default_penalty(None, &utility, alpha),
            utility,
            cost: CostModel::default(),
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Number of grid levels `B/g + 1`.
    pub fn levels(&self) -> usize {
        libm::round(self.buffer / self.grid) as usize + 1
    }

    pub fn num_channels(&self) -> usize {
        self.gains.len()
    }

    /// Backlog of level `i`.
    pub fn x(&self, i: usize) -> f64 {
        if i + 1 == self.levels() {
            self.buffer
        } else {
            i as f64 * self.grid
        }
    }

    /// Nearest grid level of a backlog.
    pub fn level(&self, x: f64) -> usize {
        (libm::round(x / self.grid).max(0.0) as usize).min(self.levels() - 1)
    }

    /// Default start state: empty buffer in the most likely channel state.
    pub fn default_start(&self) -> (usize, usize) {
        let model = ChannelModel::Markov { matrix: self.transitions.clone(), gains: self.gains.clone() };
        (0, model.most_likely_state())
    }

    pub fn state_index(&self, s: &SystemState) -> (usize, usize) {
        (self.level(s.backlog), s.channel)
    }

    /// Immediate Lagrangian reward of sending `k` steps from level `i`.
    pub fn reward(&self, i: usize, h: usize, k: usize) -> f64 {
        let (x, y) = (self.x(i), self.x(k));
        self.utility.value(x, y) - self.lambda * self.cost.cost(self.gains[h], y)
    }

    fn objective(&self, h: usize) -> Objective<'_> {
        Objective {
            utility: &self.utility,
            cost: &self.cost,
            gain: self.gains[h],
            lambda: self.lambda,
            alpha: self.alpha,
            cost_offset: 0.0,
        }
    }

    /// `J(i,h) = max_{k ≤ i} [r(i,h,k) + α·V(i−k,h)]` and its maximizer
    /// (largest `k` among ties).
    fn normal_from_post(&self, v: &ValueTable) -> (ValueTable, Policy) {
        let n = self.levels();
        let mut j = ValueTable::filled(self.num_channels(), n, 0.0);
        let mut actions = vec![vec![0usize; n]; self.num_channels()];
        for h in 0..self.num_channels() {
            for i in 0..n {
                let mut best = (0, f64::NEG_INFINITY);
                for k in 0..=i {
                    let val = self.reward(i, h, k) + self.alpha * v.values[h][i - k];
                    if val >= best.1 {
                        best = (k, val);
                    }
                }
                j.values[h][i] = best.1;
                actions[h][i] = best.0;
            }
        }
        (j, Policy { actions })
    }

    /// `V(i,h) = Σ_{h′} p(h′|h) Σ_a p(a)·[J(min(i+a, top), h′) − κ·drop]`.
    fn post_entry(&self, j: &ValueTable, i: usize, h: usize) -> f64 {
        let top = self.levels() - 1;
        let mut total = 0.0;
        for (h2, &ph) in self.transitions[h].iter().enumerate() {
            if ph == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for &(a, pa) in &self.arrivals {
                let drop = (i + a).saturating_sub(top) as f64 * self.grid;
                inner += pa * (j.values[h2][(i + a).min(top)] - self.overflow_penalty * drop);
            }
            total += ph * inner;
        }
        total
    }

    fn post_from_normal(&self, j: &ValueTable) -> ValueTable {
        let n = self.levels();
        let mut v = ValueTable::filled(self.num_channels(), n, 0.0);
        for h in 0..self.num_channels() {
            for i in 0..n {
                v.values[h][i] = self.post_entry(j, i, h);
            }
        }
        v
    }
}

/// Values indexed by channel state, then grid level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub values: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn filled(channels: usize, levels: usize, v: f64) -> Self {
        ValueTable { values: vec![vec![v; levels]; channels] }
    }

    pub fn zeros(mdp: &DiscreteMdp) -> Self {
        Self::filled(mdp.num_channels(), mdp.levels(), 0.0)
    }

    /// Samples piecewise-linear value functions at the grid levels.
    pub fn from_pwl(mdp: &DiscreteMdp, values: &[PwlConcave]) -> Self {
        ValueTable {
            values: values.iter().map(|f| (0..mdp.levels()).map(|i| f.eval_clamped(mdp.x(i))).collect()).collect(),
        }
    }

    pub fn get(&self, i: usize, h: usize) -> f64 {
        self.values[h][i]
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .flatten()
            .zip(other.values.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Deterministic policy: action level per channel state and grid level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn zeros(mdp: &DiscreteMdp) -> Self {
        Policy { actions: vec![vec![0; mdp.levels()]; mdp.num_channels()] }
    }

    pub fn action(&self, i: usize, h: usize) -> usize {
        self.actions[h][i]
    }

    pub fn is_monotone(&self) -> bool {
        self.actions.iter().all(|row| row.windows(2).all(|w| w[0] <= w[1]))
    }
}

/// One synchronous sweep of the normal-state Bellman operator.
pub fn bellman_normal_iterate(mdp: &DiscreteMdp, j: &ValueTable) -> ValueTable {
    mdp.normal_from_post(&mdp.post_from_normal(j)).0
}

/// Post-decision operator `T` on a table.
pub fn pd_operator_table(mdp: &DiscreteMdp, v: &ValueTable) -> ValueTable {
    mdp.post_from_normal(&mdp.normal_from_post(v).0)
}

/// `(TV)(x̃, h)` at an arbitrary post-decision backlog, with the inner
/// maximization over continuous `y` solved against piecewise-linear `V`.
pub fn pd_operator_at(mdp: &DiscreteMdp, values: &[PwlConcave], post: f64, h: usize) -> Result<f64> {
    let mut total = 0.0;
    for (h2, &ph) in mdp.transitions[h].iter().enumerate() {
        if ph == 0.0 {
            continue;
        }
        let obj = mdp.objective(h2);
        let mut inner = 0.0;
        for &(a, pa) in &mdp.arrivals {
            let a = a as f64 * mdp.grid;
            let x = (post + a).min(mdp.buffer);
            let d = foresighted_optimize(x, &values[h2], &obj)?;
            inner += pa * (d.value - mdp.overflow_penalty * overflow(post, a, mdp.buffer));
        }
        total += ph * inner;
    }
    Ok(total)
}

/// `A_δ T V` with continuous actions: every slice re-approximated by the
/// sandwich operator.
pub fn pd_operator_pwl(mdp: &DiscreteMdp, values: &[PwlConcave], delta: f64) -> Result<Vec<PwlConcave>> {
    check_concave(values)?;
    let cfg = ApproxConfig::new(delta);
    (0..mdp.num_channels())
        .map(|h| {
            let mut failure = None;
            let r = sandwich_approximate(
                |x| match pd_operator_at(mdp, values, x, h) {
                    Ok(v) => v,
                    Err(e) => {
                        failure = Some(e);
                        f64::NAN
                    }
                },
                0.0,
                mdp.buffer,
                &cfg,
            );
            match failure {
                Some(e) => Err(e),
                None => r.map(|a| a.function),
            }
        })
        .collect()
}

fn check_concave(values: &[PwlConcave]) -> Result<()> {
    for v in values {
        if !v.is_concave(1e-9) {
            let x = v.points()[0].x;
            return Err(Error::ConcavityViolation { x, excess: f64::NAN });
        }
    }
    Ok(())
}

/// Output of [`solve_exact`].
#[derive(Debug, Clone)]
pub struct ExactSolution {
    /// Post-decision values `V*`.
    pub post: ValueTable,
    /// Normal-state values `J*`.
    pub normal: ValueTable,
    pub policy: Policy,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm change of every sweep.
    pub residuals: Vec<f64>,
}

/// Value iteration on the post-decision values from `V ≡ 0` until the
/// sup-norm change drops below `tol`.
pub fn solve_exact(mdp: &DiscreteMdp, tol: f64, max_iters: usize) -> Result<ExactSolution> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let mut v = ValueTable::zeros(mdp);
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let next = pd_operator_table(mdp, &v);
        let r = next.sup_distance(&v);
        v = next;
        residuals.push(r);
        if r < tol {
            converged = true;
            break;
        }
    }
    let (normal, policy) = mdp.normal_from_post(&v);
    Ok(ExactSolution { post: v, normal, policy, iterations: residuals.len(), converged, residuals })
}

/// Output of [`solve_approx`].
#[derive(Debug, Clone)]
pub struct ApproxSolution {
    pub values: Vec<PwlConcave>,
    pub iterations: usize,
    pub converged: bool,
    /// Oracle evaluations of the last sweep, summed over channel states.
    pub evaluations: usize,
}

/// Iterates `A_δ ∘ T` on the grid from `v0` (zero by default).
///
/// `T` is evaluated with grid actions at grid levels, and the sandwich
/// samples only grid levels, so `delta = 0` reproduces [`solve_exact`].
pub fn solve_approx(
    mdp: &DiscreteMdp,
    delta: f64,
    tol: f64,
    max_iters: usize,
    v0: Option<Vec<PwlConcave>>,
) -> Result<ApproxSolution> {
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let mut values = match v0 {
        Some(v) => {
            if v.len() != mdp.num_channels() {
                return Err(Error::param("v0", "need one function per channel state"));
            }
            check_concave(&v)?;
            v
        }
        None => vec![PwlConcave::zero(0.0, mdp.buffer)?; mdp.num_channels()],
    };
    let cfg = ApproxConfig::new(delta).with_grid(mdp.grid);
    let mut table = ValueTable::from_pwl(mdp, &values);
    let mut iterations = 0;
    let mut evaluations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let (j, _) = mdp.normal_from_post(&table);
        evaluations = 0;
        let mut next = Vec::with_capacity(mdp.num_channels());
        for h in 0..mdp.num_channels() {
            let approx = sandwich_approximate(|x| mdp.post_entry(&j, mdp.level(x), h), 0.0, mdp.buffer, &cfg)?;
            evaluations += approx.evaluations;
            next.push(approx.function);
        }
        let next_table = ValueTable::from_pwl(mdp, &next);
        let r = next_table.sup_distance(&table);
        values = next;
        table = next_table;
        if r < tol {
            converged = true;
            break;
        }
    }
    Ok(ApproxSolution { values, iterations, converged, evaluations })
}

/// Greedy grid policy with respect to post-decision value functions.
pub fn greedy_policy(mdp: &DiscreteMdp, values: &[PwlConcave]) -> Policy {
    mdp.normal_from_post(&ValueTable::from_pwl(mdp, values)).1
}

/// Greedy grid policy with respect to a post-decision value table.
pub fn greedy_policy_table(mdp: &DiscreteMdp, v: &ValueTable) -> Policy {
    mdp.normal_from_post(v).1
}

/// Discounted totals of a policy from every normal state.
#[derive(Debug, Clone)]
pub struct PolicyValues {
    /// `E Σ αᵗ u`
    pub utility: ValueTable,
    /// `E Σ αᵗ c`
    pub cost: ValueTable,
    /// `E Σ αᵗ (units dropped)`, with drops discounted at the slot they
    /// occur in.
    pub dropped: ValueTable,
}

impl PolicyValues {
    /// `U − κ·D`: utility net of the overflow charge.
    pub fn net_utility(&self, mdp: &DiscreteMdp, i: usize, h: usize) -> f64 {
        self.utility.get(i, h) - mdp.overflow_penalty * self.dropped.get(i, h)
    }

    /// `U − λ·C − κ·D` at the MDP's own λ.
    pub fn lagrangian(&self, mdp: &DiscreteMdp, i: usize, h: usize) -> f64 {
        self.net_utility(mdp, i, h) - mdp.lambda * self.cost.get(i, h)
    }
}

/// Exact evaluation of a deterministic policy by fixed-point iteration.
pub fn evaluate_policy(mdp: &DiscreteMdp, policy: &Policy, tol: f64) -> Result<PolicyValues> {
    let n = mdp.levels();
    let hs = mdp.num_channels();
    let top = n - 1;
    for (h, row) in policy.actions.iter().enumerate() {
        if h >= hs || row.len() != n || row.iter().enumerate().any(|(i, &k)| k > i) {
            return Err(Error::param("policy", "shape mismatch or infeasible action"));
        }
    }
    let mut u = ValueTable::filled(hs, n, 0.0);
    let mut c = u.clone();
    let mut d = u.clone();
    for _ in 0..10_000_000usize {
        let mut nu = u.clone();
        let mut nc = c.clone();
        let mut nd = d.clone();
        for h in 0..hs {
            for i in 0..n {
                let k = policy.actions[h][i];
                let post = i - k;
                let (mut eu, mut ec, mut ed) = (0.0, 0.0, 0.0);
                for (h2, &ph) in mdp.transitions[h].iter().enumerate() {
                    if ph == 0.0 {
                        continue;
                    }
                    for &(a, pa) in &mdp.arrivals {
                        let next = (post + a).min(top);
                        let drop = (post + a).saturating_sub(top) as f64 * mdp.grid;
                        let p = ph * pa;
                        eu += p * u.values[h2][next];
                        ec += p * c.values[h2][next];
                        ed += p * (drop + d.values[h2][next]);
                    }
                }
                nu.values[h][i] = mdp.utility.value(mdp.x(i), mdp.x(k)) + mdp.alpha * eu;
                nc.values[h][i] = mdp.cost.cost(mdp.gains[h], mdp.x(k)) + mdp.alpha * ec;
                nd.values[h][i] = mdp.alpha * ed;
            }
        }
        let r = nu.sup_distance(&u).max(nc.sup_distance(&c)).max(nd.sup_distance(&d));
        u = nu;
        c = nc;
        d = nd;
        if r < tol {
            break;
        }
    }
    Ok(PolicyValues { utility: u, cost: c, dropped: d })
}

/// Discounted energy of a policy from `s0 = (level, channel)`.
pub fn policy_cost(mdp: &DiscreteMdp, policy: &Policy, s0: (usize, usize)) -> Result<f64> {
    Ok(evaluate_policy(mdp, policy, 1e-12)?.cost.get(s0.0, s0.1))
}

/// Options of [`lagrange_search`].
#[derive(Debug, Clone, Copy)]
pub struct LagrangeOptions {
    pub gamma: StepSchedule,
    /// Plain subgradient iterations before switching to bisection.
    pub subgradient_iters: usize,
    /// Acceptable `|C − c̄|`.
    pub tol: f64,
    /// Value-iteration tolerance of the inner solves.
    pub solve_tol: f64,
    pub max_iters: usize,
}

impl Default for LagrangeOptions {
    fn default() -> Self {
        LagrangeOptions {
            gamma: StepSchedule::DEFAULT_GAMMA,
            subgradient_iters: 50,
            tol: 1e-3,
            solve_tol: 1e-10,
            max_iters: 200,
        }
    }
}

/// Optimal policy at one multiplier and its discounted totals at `s0`.
#[derive(Debug, Clone)]
pub struct LagrangePoint {
    pub lambda: f64,
    pub policy: Policy,
    pub cost: f64,
    /// Utility net of the overflow charge.
    pub utility: f64,
    /// `max_π U − λC` at `s0`.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangeStep {
    pub iteration: usize,
    pub lambda: f64,
    pub cost: f64,
}

/// Result of [`lagrange_search`].
///
/// On a finite grid `C(λ)` is a step function, so the budget is met by
/// randomizing once at `s0`: `low` (cost above budget) with probability
/// `mix`, `high` otherwise. Both are optimal at `lambda` up to the bracket
/// width.
#[derive(Debug, Clone)]
pub struct LagrangeResult {
    pub lambda: f64,
    pub low: LagrangePoint,
    pub high: LagrangePoint,
    pub mix: f64,
    pub cost: f64,
    pub utility: f64,
    /// The constraint is slack at `λ = 0`.
    pub slack: bool,
    pub converged: bool,
    /// `(λ_lo, λ_hi)` bracketing the budget crossing.
    pub bracket: (f64, f64),
    pub trace: Vec<LagrangeStep>,
}

/// Solves the MDP at multiplier `lambda` and evaluates it at `s0`.
pub fn lagrange_point(mdp: &DiscreteMdp, lambda: f64, s0: (usize, usize), opts: &LagrangeOptions) -> Result<LagrangePoint> {
    let m = mdp.clone().with_lambda(lambda);
    let sol = solve_exact(&m, opts.solve_tol, 1_000_000)?;
    let pv = evaluate_policy(&m, &sol.policy, opts.solve_tol)?;
    Ok(LagrangePoint {
        lambda,
        cost: pv.cost.get(s0.0, s0.1),
        utility: pv.net_utility(&m, s0.0, s0.1),
        value: sol.normal.get(s0.0, s0.1),
        policy: sol.policy,
    })
}

/// Finds the multiplier meeting the discounted energy budget at `s0`.
///
/// Runs the projected subgradient recursion `λ ← max(λ + γ_n(C − c̄), 0)`,
/// keeping the tightest bracket seen, then bisects the bracket.
pub fn lagrange_search(mdp: &DiscreteMdp, budget: f64, s0: (usize, usize), opts: &LagrangeOptions) -> Result<LagrangeResult> {
    if !(budget > 0.0) {
        return Err(Error::param("budget", "must be positive"));
    }
    let mut trace = Vec::new();
    let single = |p: LagrangePoint, slack: bool, trace: Vec<LagrangeStep>| LagrangeResult {
        lambda: p.lambda,
        mix: 1.0,
        cost: p.cost,
        utility: p.utility,
        slack,
        converged: true,
        bracket: (p.lambda, p.lambda),
        low: p.clone(),
        high: p,
        trace,
    };

    let p0 = lagrange_point(mdp, 0.0, s0, opts)?;
    trace.push(LagrangeStep { iteration: 0, lambda: 0.0, cost: p0.cost });
    if p0.cost <= budget {
        return Ok(single(p0, true, trace));
    }

    let mut low = p0;
    let mut high: Option<LagrangePoint> = None;
    let mut lambda = 0.0;
    let mut current = low.cost;
    for n in 1..=opts.subgradient_iters {
        lambda = subgradient_step(lambda, opts.gamma.at(n as u64), current, budget);
        let p = lagrange_point(mdp, lambda, s0, opts)?;
        current = p.cost;
        trace.push(LagrangeStep { iteration: n, lambda, cost: p.cost });
        if (p.cost - budget).abs() <= opts.tol {
            return Ok(single(p, false, trace));
        }
        if p.cost > budget {
            if p.lambda >= low.lambda {
                low = p;
            }
        } else if high.as_ref().is_none_or(|h| p.lambda <= h.lambda) {
            high = Some(p);
        }
    }

    let mut iter = opts.subgradient_iters;
    let mut high = match high {
        Some(h) => h,
        None => {
            let mut l = low.lambda.max(1e-3);
            loop {
                iter += 1;
                l *= 2.0;
                let p = lagrange_point(mdp, l, s0, opts)?;
                trace.push(LagrangeStep { iteration: iter, lambda: l, cost: p.cost });
                if p.cost <= budget {
                    break p;
                }
                low = p;
                if iter > opts.subgradient_iters + 2000 || !l.is_finite() {
                    return Err(Error::param("budget", "unreachable: cost stays above budget"));
                }
            }
        }
    };
    if (high.cost - budget).abs() <= opts.tol {
        return Ok(single(high, false, trace));
    }

    let mut converged = false;
    for _ in 0..opts.max_iters {
        if high.lambda - low.lambda <= 1e-12 * (1.0 + high.lambda) {
            converged = true;
            break;
        }
        iter += 1;
        let mid = 0.5 * (low.lambda + high.lambda);
        let p = lagrange_point(mdp, mid, s0, opts)?;
        trace.push(LagrangeStep { iteration: iter, lambda: mid, cost: p.cost });
        if (p.cost - budget).abs() <= opts.tol {
            return Ok(single(p, false, trace));
        }
        if p.cost > budget {
            low = p;
        } else {
            high = p;
        }
    }

    let mix = ((budget - high.cost) / (low.cost - high.cost)).clamp(0.0, 1.0);
    Ok(LagrangeResult {
        lambda: high.lambda,
        cost: mix * low.cost + (1.0 - mix) * high.cost,
        utility: mix * low.utility + (1.0 - mix) * high.utility,
        mix,
        slack: false,
        converged,
        bracket: (low.lambda, high.lambda),
        low,
        high,
        trace,
    })
}
