//! Simulated transmission environment: buffer dynamics, channel and traffic
//! processes, utility and energy functions.
//!
//! Backlog, arrivals and transmissions are measured in abstract units per
//! slot. Channel states are indices into a table of representative gains
//! (`|h|²/σ²`).

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// The random number generator that drives every simulated trajectory.
pub type SimRng = ChaCha8Rng;

/// Average gain `|h|²/σ²` the channel models are calibrated to.
pub const MEAN_GAIN: f64 = 0.14;

/// Slack allowed when validating `y ≤ x` against rounding in the optimizer.
const ACTION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Buffer capacity `B`.
    pub buffer: f64,
    /// Discount factor in `[0, 1)`.
    pub alpha: f64,
    /// Slot duration in seconds; metadata only.
    pub slot_length: f64,
}

impl SystemParams {
    pub fn new(buffer: f64, alpha: f64) -> Result<Self> {
        if !(buffer.is_finite() && buffer > 0.0) {
            return Err(Error::param("buffer", "must be positive and finite"));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::param("alpha", "must lie in [0, 1)"));
        }
        Ok(SystemParams { buffer, alpha, slot_length: 0.01 })
    }
}

/// Backlog and channel index at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub backlog: f64,
    pub channel: usize,
}

/// Backlog and channel right after the transmission decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostDecisionState {
    pub backlog: f64,
    pub channel: usize,
}

impl SystemState {
    /// `x̃ = x − y`, channel unchanged.
    pub fn after(&self, sent: f64) -> PostDecisionState {
        PostDecisionState { backlog: (self.backlog - sent).max(0.0), channel: self.channel }
    }
}

/// Checks `0 ≤ y ≤ x` (up to optimizer rounding) and returns `y` clamped.
pub fn validate_action(x: f64, y: f64) -> Result<f64> {
    if !(y.is_finite() && y >= -ACTION_SLACK && y <= x + ACTION_SLACK * (1.0 + x)) {
        return Err(Error::InvalidAction { backlog: x, sent: y });
    }
    Ok(y.clamp(0.0, x.max(0.0)))
}

/// Next-slot backlog `min(x − y + a, B)`.
pub fn buffer_update(x: f64, y: f64, a: f64, buffer: f64) -> Result<f64> {
    let y = validate_action(x, y)?;
    Ok((x - y + a).min(buffer))
}

/// Units dropped at the buffer cap by [`buffer_update`].
pub fn overflow(post: f64, a: f64, buffer: f64) -> f64 {
    (post + a - buffer).max(0.0)
}

/// Utility of sending `y` from backlog `x`.
#[derive(Clone)]
pub enum Utility {
    /// `−(x − y)`: the negative post-decision backlog.
    Backlog,
    /// `w·min(x, y)`.
    Throughput { weight: f64 },
    /// Any function jointly concave and supermodular in `(x, y)`.
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Utility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Utility::Backlog => f.write_str("Backlog"),
            Utility::Throughput { weight } => f.debug_struct("Throughput").field("weight", weight).finish(),
            Utility::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Utility {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            Utility::Backlog => -(x - y),
            Utility::Throughput { weight } => weight * x.min(y),
            Utility::Custom(u) => u(x, y),
        }
    }

    /// `∂u/∂y` when the utility is affine in `y` on `[0, x]`.
    pub fn affine_slope(&self) -> Option<f64> {
        match self {
            Utility::Backlog => Some(1.0),
            Utility::Throughput { weight } => Some(*weight),
            Utility::Custom(_) => None,
        }
    }

    /// Utility lost per slot by holding one more unit, when known. Sets the
    /// default penalty on units dropped at the buffer cap.
    pub fn holding_rate(&self) -> Option<f64> {
        match self {
            Utility::Backlog => Some(1.0),
            Utility::Throughput { .. } => Some(0.0),
            Utility::Custom(_) => None,
        }
    }
}

/// Transmission energy `c(h, y)`; increasing and convex in `y`.
#[derive(Clone)]
pub enum CostModel {
    /// `scale·(2^y − 1)/gain`.
    Exponential { scale: f64 },
    /// `scale·y/gain`.
    Linear { scale: f64 },
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostModel::Exponential { scale } => f.debug_struct("Exponential").field("scale", scale).finish(),
            CostModel::Linear { scale } => f.debug_struct("Linear").field("scale", scale).finish(),
            CostModel::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::Exponential { scale: 1.0 }
    }
}

impl CostModel {
    pub fn cost(&self, gain: f64, y: f64) -> f64 {
        match self {
            CostModel::Exponential { scale } => scale * (libm::exp2(y) - 1.0) / gain,
            CostModel::Linear { scale } => scale * y / gain,
            CostModel::Custom(c) => c(gain, y),
        }
    }

    /// Total amount `y` at which the marginal cost equals `m`. Infinite
    /// results mean the marginal stays below (`+∞`) or above (`−∞`) `m`;
    /// `None` when no closed form is available.
    pub fn marginal_inverse(&self, gain: f64, m: f64) -> Option<f64> {
        match self {
            CostModel::Exponential { scale } => {
                if m <= 0.0 {
                    Some(f64::NEG_INFINITY)
                } else {
                    Some(libm::log2(m * gain / (scale * core::f64::consts::LN_2)))
                }
            }
            CostModel::Linear { scale } => {
                let c = scale / gain;
                // Ties resolve towards larger transmissions.
                Some(if m >= c { f64::INFINITY } else { f64::NEG_INFINITY })
            }
            CostModel::Custom(_) => None,
        }
    }
}

/// `c(h, y) = (2^y − 1)/h` for a tabulated gain `h = |h|²/σ²`.
pub fn energy_cost(gain: f64, y: f64) -> f64 {
    CostModel::default().cost(gain, y)
}

/// Default single-queue utility `−(x − y)`.
pub fn utility(x: f64, y: f64) -> f64 {
    -(x - y)
}

/// Strictly decreasing positive class weights; index 0 is the highest priority.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityWeights(Vec<f64>);

impl PriorityWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::PriorityOrder);
        }
        if weights.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::PriorityOrder);
        }
        Ok(PriorityWeights(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `w_i·min(x_i, y_i)`.
    pub fn utility(&self, class: usize, x: f64, y: f64) -> f64 {
        self.0[class] * x.min(y)
    }
}

/// Quantization of the gain axis into regions `(lo, hi]` with one
/// representative gain each.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStateTable {
    boundaries: Vec<f64>,
    representatives: Vec<f64>,
}

impl ChannelStateTable {
    /// `boundaries` are upper region edges; the last must be `+∞`.
    pub fn new(boundaries: Vec<f64>, representatives: Vec<f64>) -> Result<Self> {
        if boundaries.is_empty() || boundaries.len() != representatives.len() {
            return Err(Error::param("channel table", "needs matching, non-empty boundaries and representatives"));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) || representatives.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("channel table", "boundaries and representatives must be strictly increasing"));
        }
        if boundaries[boundaries.len() - 1] != f64::INFINITY {
            return Err(Error::param("channel table", "the last region must be unbounded"));
        }
        for (i, &r) in representatives.iter().enumerate() {
            let lo = if i == 0 { 0.0 } else { boundaries[i - 1] };
            if !(r > lo && r <= boundaries[i]) {
                return Err(Error::param("channel table", "each representative must lie in its region"));
            }
        }
        Ok(ChannelStateTable { boundaries, representatives })
    }

    /// The eight-region table used for paper-scale runs.
    pub fn eight_state() -> Self {
        ChannelStateTable {
            boundaries: vec![0.0280, 0.0580, 0.0960, 0.1400, 0.1980, 0.2780, 0.4160, f64::INFINITY],
            representatives: vec![0.0131, 0.0418, 0.0753, 0.1157, 0.1661, 0.2343, 0.3407, 0.6200],
        }
    }

    /// A coarse three-region table for desk-scale runs.
    pub fn three_state() -> Self {
        ChannelStateTable {
            boundaries: vec![0.07, 0.20, f64::INFINITY],
            representatives: vec![0.04, 0.12, 0.35],
        }
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn representatives(&self) -> &[f64] {
        &self.representatives
    }

    pub fn len(&self) -> usize {
        self.representatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }

    /// Index of the region `(lo, hi]` containing `raw`.
    pub fn quantize(&self, raw: f64) -> usize {
        self.boundaries.partition_point(|&hi| hi < raw).min(self.len() - 1)
    }

    /// Region probabilities when the gain is exponentially distributed with
    /// the given mean (Rayleigh fading).
    pub fn rayleigh_probabilities(&self, mean: f64) -> Vec<f64> {
        let tail = |g: f64| if g.is_infinite() { 0.0 } else { libm::exp(-g / mean) };
        let mut lo = 1.0;
        self.boundaries
            .iter()
            .map(|&hi| {
                let hi = tail(hi);
                let p = lo - hi;
                lo = hi;
                p
            })
            .collect()
    }

    /// Mean representative gain under Rayleigh fading of the given mean.
    pub fn rayleigh_mean_representative(&self, mean: f64) -> f64 {
        self.rayleigh_probabilities(mean).iter().zip(&self.representatives).map(|(p, r)| p * r).sum()
    }
}

/// Free function form of [`ChannelStateTable::quantize`].
pub fn quantize_gain(raw: f64, table: &ChannelStateTable) -> usize {
    table.quantize(raw)
}

/// Channel-state process descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Finite-state Markov chain with row-stochastic `matrix`.
    Markov { matrix: Vec<Vec<f64>>, gains: Vec<f64> },
    /// Independent draws from `probabilities`.
    Iid { probabilities: Vec<f64>, gains: Vec<f64> },
    /// Complex Gaussian moving average `h_t = Σ_k c_k w_{t−k}`, quantized
    /// through `table`; the innovations have per-dimension std
    /// `innovation_std/√2`.
    MovingAverage { coefficients: Vec<f64>, innovation_std: f64, table: ChannelStateTable },
}

fn check_distribution(p: &[f64], name: &'static str) -> Result<()> {
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::param(name, "probabilities must be finite and non-negative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 * p.len() as f64 {
        return Err(Error::param(name, "probabilities must sum to 1"));
    }
    Ok(())
}

fn check_gains(gains: &[f64]) -> Result<()> {
    if gains.is_empty() || gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::param("gains", "must be positive and finite"));
    }
    Ok(())
}

fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // Rounding left `acc` slightly below one; take the last positive entry.
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1)
}

impl ChannelModel {
    pub fn markov(matrix: Vec<Vec<f64>>, gains: Vec<f64>) -> Result<Self> {
        check_gains(&gains)?;
        if matrix.len() != gains.len() || matrix.iter().any(|r| r.len() != gains.len()) {
            return Err(Error::param("matrix", "must be square with one row per gain"));
        }
        for row in &matrix {
            check_distribution(row, "matrix")?;
        }
        Ok(ChannelModel::Markov { matrix, gains })
    }

    pub fn iid(probabilities: Vec<f64>, gains: Vec<f64>) -> Result<Self> {
        check_gains(&gains)?;
        if probabilities.len() != gains.len() {
            return Err(Error::param("probabilities", "need one entry per gain"));
        }
        check_distribution(&probabilities, "probabilities")?;
        Ok(ChannelModel::Iid { probabilities, gains })
    }

    /// Birth–death Markov chain for Rayleigh fading quantized by `table`.
    ///
    /// Transitions go to adjacent regions only, with probabilities
    /// `N(Γ)·slot/π_k`, where `N(Γ) = √(2πΓ/γ̄)·f_d·e^{−Γ/γ̄}` is the
    /// level-crossing rate at edge `Γ` and `π_k` the stationary region mass.
    pub fn birth_death(table: &ChannelStateTable, mean_gain: f64, doppler: f64, slot: f64) -> Result<Self> {
        if !(mean_gain > 0.0 && doppler > 0.0 && slot > 0.0) {
            return Err(Error::param("doppler", "mean gain, Doppler and slot length must be positive"));
        }
        let pi = table.rayleigh_probabilities(mean_gain);
        let n = table.len();
        let crossing = |g: f64| {
            libm::sqrt(2.0 * core::f64::consts::PI * g / mean_gain) * doppler * libm::exp(-g / mean_gain)
        };
        let mut matrix = vec![vec![0.0; n]; n];
        for k in 0..n {
            let up = if k + 1 < n { crossing(table.boundaries[k]) * slot / pi[k] } else { 0.0 };
            let down = if k > 0 { crossing(table.boundaries[k - 1]) * slot / pi[k] } else { 0.0 };
            if up + down > 1.0 {
                return Err(Error::param("doppler", "Doppler·slot too large for the region widths"));
            }
            if k + 1 < n {
                matrix[k][k + 1] = up;
            }
            if k > 0 {
                matrix[k][k - 1] = down;
            }
            matrix[k][k] = 1.0 - up - down;
        }
        Self::markov(matrix, table.representatives.clone())
    }

    /// Moving-average channel whose innovation scale is chosen so that the
    /// stationary mean of the quantized gain equals `mean_gain`.
    pub fn moving_average(coefficients: Vec<f64>, table: ChannelStateTable, mean_gain: f64) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("coefficients", "must be finite and non-empty"));
        }
        let energy: f64 = coefficients.iter().map(|c| c * c).sum();
        if energy <= 0.0 {
            return Err(Error::param("coefficients", "must not all be zero"));
        }
        let reps = table.representatives();
        if !(mean_gain > reps[0] && mean_gain < reps[reps.len() - 1]) {
            return Err(Error::param("mean_gain", "must lie strictly between the extreme representatives"));
        }
        // |h|² is exponential with mean σ²·Σc²; the quantized mean is
        // increasing in that mean, so bisect on it.
        let (mut lo, mut hi) = (1e-9, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if table.rayleigh_mean_representative(mid) < mean_gain {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let innovation_std = libm::sqrt(0.5 * (lo + hi) / energy);
        Ok(ChannelModel::MovingAverage { coefficients, innovation_std, table })
    }

    /// Order-3 moving average with the default tap profile.
    pub fn default_moving_average(table: ChannelStateTable) -> Result<Self> {
        Self::moving_average(vec![1.0, 0.8, 0.6, 0.4], table, MEAN_GAIN)
    }

    pub fn num_states(&self) -> usize {
        self.gains().len()
    }

    /// Representative gain of each state.
    pub fn gains(&self) -> &[f64] {
        match self {
            ChannelModel::Markov { gains, .. } | ChannelModel::Iid { gains, .. } => gains,
            ChannelModel::MovingAverage { table, .. } => table.representatives(),
        }
    }

    /// Transition row `p(·|h)` for models with Markov structure.
    pub fn transition_row(&self, h: usize) -> Option<&[f64]> {
        match self {
            ChannelModel::Markov { matrix, .. } => Some(&matrix[h]),
            ChannelModel::Iid { probabilities, .. } => Some(probabilities),
            ChannelModel::MovingAverage { .. } => None,
        }
    }

    /// Stationary state distribution.
    pub fn stationary(&self) -> Vec<f64> {
        match self {
            ChannelModel::Iid { probabilities, .. } => probabilities.clone(),
            ChannelModel::MovingAverage { coefficients, innovation_std, table } => {
                let energy: f64 = coefficients.iter().map(|c| c * c).sum();
                table.rayleigh_probabilities(innovation_std * innovation_std * energy)
            }
            ChannelModel::Markov { matrix, .. } => {
                let n = matrix.len();
                let mut p = vec![1.0 / n as f64; n];
                for _ in 0..100_000 {
                    // Lazy chain: same stationary law, no periodic oscillation.
                    let mut next = vec![0.0; n];
                    for i in 0..n {
                        for j in 0..n {
                            next[j] += 0.5 * p[i] * matrix[i][j];
                        }
                        next[i] += 0.5 * p[i];
                    }
                    let diff: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
                    p = next;
                    if diff < 1e-15 {
                        break;
                    }
                }
                p
            }
        }
    }

    /// Most likely state under the stationary law (lowest index on ties).
    pub fn most_likely_state(&self) -> usize {
        let p = self.stationary();
        let mut best = 0;
        for (i, &pi) in p.iter().enumerate() {
            if pi > p[best] + 1e-12 {
                best = i;
            }
        }
        best
    }

    /// Period of the chain reachable from state 0; `1` means aperiodic.
    /// Non-Markov models are treated as aperiodic.
    pub fn period(&self) -> usize {
        let ChannelModel::Markov { matrix, .. } = self else { return 1 };
        let n = matrix.len();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = alloc::collections::VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if matrix[u][v] > 0.0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        let mut g = 0usize;
        for u in 0..n {
            if level[u] == usize::MAX {
                continue;
            }
            for v in 0..n {
                if matrix[u][v] > 0.0 && level[v] != usize::MAX {
                    let d = (level[u] + 1).abs_diff(level[v]);
                    g = gcd(g, d);
                }
            }
        }
        g.max(1)
    }

    /// Samples the next state of a memoryless or Markov model.
    pub fn step<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> Result<usize> {
        match self {
            ChannelModel::Markov { matrix, .. } => Ok(sample_index(&matrix[current], rng)),
            ChannelModel::Iid { probabilities, .. } => Ok(sample_index(probabilities, rng)),
            ChannelModel::MovingAverage { .. } => {
                Err(Error::Unsupported("moving-average channels carry latent state; use ChannelProcess"))
            }
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// A channel trajectory: the model plus whatever latent state it needs.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    model: ChannelModel,
    current: usize,
    /// Most recent innovations, newest first (moving average only).
    history: Vec<(f64, f64)>,
}

impl ChannelProcess {
    /// Starts at `initial`. A moving-average process starts from a
    /// stationary draw of its innovations.
    pub fn new<R: Rng + ?Sized>(model: ChannelModel, initial: usize, rng: &mut R) -> Result<Self> {
        if initial >= model.num_states() {
            return Err(Error::param("initial channel", "index out of range"));
        }
        let mut process = ChannelProcess { model, current: initial, history: Vec::new() };
        if let ChannelModel::MovingAverage { coefficients, innovation_std, .. } = &process.model {
            let (q, s) = (coefficients.len(), *innovation_std);
            process.history = (0..q).map(|_| complex_normal(s, rng)).collect();
            process.current = process.quantize_latent();
        }
        Ok(process)
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        self.current = match &self.model {
            ChannelModel::MovingAverage { innovation_std, .. } => {
                let w = complex_normal(*innovation_std, rng);
                self.history.pop();
                self.history.insert(0, w);
                self.quantize_latent()
            }
            model => model.step(self.current, rng).unwrap_or(self.current),
        };
        self.current
    }

    fn quantize_latent(&self) -> usize {
        let ChannelModel::MovingAverage { coefficients, table, .. } = &self.model else { return self.current };
        let (mut re, mut im) = (0.0, 0.0);
        for (c, (wr, wi)) in coefficients.iter().zip(&self.history) {
            re += c * wr;
            im += c * wi;
        }
        table.quantize(re * re + im * im)
    }
}

fn complex_normal<R: Rng + ?Sized>(std: f64, rng: &mut R) -> (f64, f64) {
    let s = std * core::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (s * re, s * im)
}

/// Per-slot arrival distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum TrafficModel {
    /// `min(Poisson(rate), cap)`.
    Poisson { rate: f64, cap: f64 },
    Deterministic(f64),
    /// Finite distribution over non-negative values.
    Discrete { values: Vec<f64>, probabilities: Vec<f64> },
}

impl TrafficModel {
    pub fn poisson(rate: f64, cap: f64) -> Result<Self> {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::param("rate", "must be finite and non-negative"));
        }
        if !(cap >= 0.0) || libm::floor(cap) != cap {
            return Err(Error::param("cap", "must be a non-negative integer"));
        }
        Ok(TrafficModel::Poisson { rate, cap })
    }

    pub fn deterministic(units: f64) -> Result<Self> {
        if !(units.is_finite() && units >= 0.0) {
            return Err(Error::param("units", "must be finite and non-negative"));
        }
        Ok(TrafficModel::Deterministic(units))
    }

    pub fn discrete(values: Vec<f64>, probabilities: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probabilities.len() {
            return Err(Error::param("values", "need one probability per value"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("values", "must be finite and non-negative"));
        }
        check_distribution(&probabilities, "probabilities")?;
        Ok(TrafficModel::Discrete { values, probabilities })
    }

    /// Validates the model against a buffer of size `buffer`.
    pub fn check_buffer(&self, buffer: f64) -> Result<()> {
        match self {
            TrafficModel::Poisson { cap, .. } if *cap > buffer => Err(Error::param("cap", "must not exceed the buffer")),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            TrafficModel::Poisson { rate, cap } => {
                if *rate == 0.0 {
                    return 0.0;
                }
                // Constructor guarantees a valid rate.
                let d = Poisson::new(*rate).expect("validated Poisson rate");
                let k: f64 = d.sample(rng);
                k.min(*cap)
            }
            TrafficModel::Deterministic(u) => *u,
            TrafficModel::Discrete { values, probabilities } => values[sample_index(probabilities, rng)],
        }
    }

    /// Exact probability mass function as `(value, probability)` pairs with
    /// positive mass.
    pub fn pmf(&self) -> Vec<(f64, f64)> {
        match self {
            TrafficModel::Deterministic(u) => vec![(*u, 1.0)],
            TrafficModel::Discrete { values, probabilities } => values
                .iter()
                .zip(probabilities)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, p)| (*v, *p))
                .collect(),
            TrafficModel::Poisson { rate, cap } => {
                if *rate == 0.0 {
                    return vec![(0.0, 1.0)];
                }
                let mut out = Vec::new();
                let mut p = libm::exp(-rate);
                let mut mass = 0.0;
                let top = *cap as u64;
                for k in 0..top {
                    if p > 0.0 {
                        out.push((k as f64, p));
                    }
                    mass += p;
                    p *= rate / (k + 1) as f64;
                }
                out.push((*cap, (1.0 - mass).max(0.0)));
                out.retain(|&(_, p)| p > 0.0);
                out
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.pmf().iter().map(|(v, p)| v * p).sum()
    }
}

/// Free function form of [`TrafficModel::sample`].
pub fn arrival_sample<R: Rng + ?Sized>(model: &TrafficModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn buffer_dynamics() {
        assert_eq!(buffer_update(5.0, 2.0, 3.0, 6.0).unwrap(), 6.0);
        assert_eq!(buffer_update(5.0, 5.0, 0.0, 6.0).unwrap(), 0.0);
        assert_eq!(buffer_update(5.0, 2.0, 1.0, 500.0).unwrap(), 4.0);
        assert!(matches!(buffer_update(5.0, 6.0, 0.0, 6.0), Err(Error::InvalidAction { .. })));
        assert!(matches!(buffer_update(5.0, -1.0, 0.0, 6.0), Err(Error::InvalidAction { .. })));
        assert_eq!(overflow(3.0, 3.0, 6.0), 0.0);
        assert_eq!(overflow(3.0, 5.0, 6.0), 2.0);
    }

    #[test]
    fn system_params_validation() {
        assert!(SystemParams::new(8.0, 0.9).is_ok());
        assert!(SystemParams::new(8.0, 1.0).is_err());
        assert!(SystemParams::new(0.0, 0.5).is_err());
    }

    #[test]
    fn energy_cost_values() {
        assert_eq!(energy_cost(0.3, 0.0), 0.0);
        assert!((energy_cost(0.1157, 3.0) - 60.501296456).abs() < 1e-6);
        for &h in ChannelStateTable::eight_state().representatives() {
            let d1 = energy_cost(h, 2.0) - energy_cost(h, 1.0);
            let d2 = energy_cost(h, 3.0) - energy_cost(h, 2.0);
            assert!(d1 < d2);
        }
    }

    #[test]
    fn cost_is_increasing_and_convex() {
        for &h in ChannelStateTable::eight_state().representatives() {
            let c: Vec<f64> = (0..50).map(|k| energy_cost(h, k as f64 * 0.25)).collect();
            for w in c.windows(3) {
                assert!(w[1] > w[0]);
                assert!(w[2] - w[1] >= w[1] - w[0]);
            }
        }
    }

    #[test]
    fn marginal_inverse_matches_derivative() {
        let c = CostModel::default();
        let (g, y) = (0.2, 1.7);
        let m = core::f64::consts::LN_2 * libm::exp2(y) / g;
        assert!((c.marginal_inverse(g, m).unwrap() - y).abs() < 1e-12);
        assert_eq!(c.marginal_inverse(g, 0.0), Some(f64::NEG_INFINITY));
    }

    #[test]
    fn utility_values_and_supermodularity() {
        assert_eq!(utility(4.0, 4.0), 0.0);
        assert_eq!(utility(4.0, 0.0), -4.0);
        let u = Utility::Backlog;
        let grid = [0.0, 1.0, 2.0, 3.0];
        for &x in &grid {
            for &xp in grid.iter().filter(|&&v| v >= x) {
                for &y in grid.iter().filter(|&&v| v <= x) {
                    for &yp in grid.iter().filter(|&&v| v >= y && v <= x) {
                        let lhs = u.value(xp, yp) - u.value(xp, y);
                        let rhs = u.value(x, yp) - u.value(x, y);
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn priority_weights() {
        let w = PriorityWeights::new(vec![1.0, 0.8]).unwrap();
        assert_eq!(w.utility(0, 3.0, 2.0), 2.0);
        assert!((w.utility(1, 3.0, 2.0) - 1.6).abs() < 1e-15);
        assert_eq!(w.utility(1, 3.0, 0.0), 0.0);
        assert_eq!(PriorityWeights::new(vec![0.8, 1.0]), Err(Error::PriorityOrder));
        assert_eq!(PriorityWeights::new(vec![1.0, 1.0]), Err(Error::PriorityOrder));
    }

    #[test]
    fn quantizer_regions() {
        let t = ChannelStateTable::eight_state();
        assert_eq!(t.representatives()[t.quantize(0.05)], 0.0418);
        assert_eq!(t.quantize(0.0280), 0);
        assert_eq!(t.quantize(0.02800001), 1);
        assert_eq!(t.representatives()[t.quantize(1.0)], 0.6200);
        assert_eq!(t.quantize(0.0), 0);
        assert!(ChannelStateTable::new(vec![0.1, 0.2], vec![0.05, 0.15]).is_err());
        assert!(ChannelStateTable::new(vec![0.1, f64::INFINITY], vec![0.2, 0.3]).is_err());
    }

    #[test]
    fn identity_chain_is_absorbing() {
        let n = 5;
        let m: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let ch = ChannelModel::markov(m, vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap();
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(ch.step(3, &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn iid_uniform_frequencies() {
        let ch = ChannelModel::iid(vec![0.125; 8], ChannelStateTable::eight_state().representatives().to_vec()).unwrap();
        let mut rng = SimRng::seed_from_u64(7);
        let n = 1_000_000;
        let mut counts = [0usize; 8];
        for _ in 0..n {
            counts[ch.step(0, &mut rng).unwrap()] += 1;
        }
        let sigma = (n as f64 * 0.125 * 0.875).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.125).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn birth_death_chain_is_stochastic_and_calibrated() {
        let t = ChannelStateTable::eight_state();
        let ch = ChannelModel::birth_death(&t, MEAN_GAIN, 5.0, 0.01).unwrap();
        let ChannelModel::Markov { matrix, .. } = &ch else { panic!() };
        for row in matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Detailed balance makes the Rayleigh region masses stationary.
        let pi = t.rayleigh_probabilities(MEAN_GAIN);
        let st = ch.stationary();
        for (a, b) in pi.iter().zip(&st) {
            assert!((a - b).abs() < 1e-9);
        }
        assert_eq!(ch.period(), 1);
        assert!(ChannelModel::birth_death(&t, MEAN_GAIN, 500.0, 0.01).is_err());
    }

    #[test]
    fn period_detection() {
        let flip = ChannelModel::markov(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.1, 0.2]).unwrap();
        assert_eq!(flip.period(), 2);
        let lazy = ChannelModel::markov(vec![vec![0.5, 0.5], vec![1.0, 0.0]], vec![0.1, 0.2]).unwrap();
        assert_eq!(lazy.period(), 1);
    }

    #[test]
    fn invalid_rows_are_rejected() {
        assert!(ChannelModel::markov(vec![vec![0.5, 0.4], vec![0.5, 0.5]], vec![0.1, 0.2]).is_err());
        assert!(ChannelModel::iid(vec![0.5, 0.5], vec![0.1]).is_err());
    }

    #[test]
    fn moving_average_is_calibrated() {
        let ch = ChannelModel::default_moving_average(ChannelStateTable::eight_state()).unwrap();
        let mut rng = SimRng::seed_from_u64(3);
        let mut p = ChannelProcess::new(ch.clone(), 0, &mut rng).unwrap();
        let reps = ch.gains().to_vec();
        let n = 400_000;
        let mean: f64 = (0..n).map(|_| reps[p.step(&mut rng)]).sum::<f64>() / n as f64;
        assert!((mean - MEAN_GAIN).abs() < 0.01, "{mean}");
        let analytic: f64 = ch.stationary().iter().zip(&reps).map(|(a, b)| a * b).sum();
        assert!((analytic - MEAN_GAIN).abs() < 1e-9);
    }

    #[test]
    fn poisson_arrivals() {
        let mut rng = SimRng::seed_from_u64(11);
        let m = TrafficModel::poisson(2.0, 1000.0).unwrap();
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|_| m.sample(&mut rng)).sum::<f64>() / n as f64;
        let sigma = (2.0 / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * sigma, "{mean}");

        let zero = TrafficModel::poisson(0.0, 10.0).unwrap();
        assert!((0..100).all(|_| zero.sample(&mut rng) == 0.0));
        let det = TrafficModel::deterministic(3.0).unwrap();
        assert!((0..100).all(|_| det.sample(&mut rng) == 3.0));
    }

    #[test]
    fn truncated_poisson_pmf() {
        let m = TrafficModel::poisson(2.0, 4.0).unwrap();
        let pmf = m.pmf();
        assert_eq!(pmf.len(), 5);
        assert!((pmf.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((pmf[0].1 - libm::exp(-2.0)).abs() < 1e-15);
        assert!(m.check_buffer(3.0).is_err());
    }

    #[test]
    fn seeded_paths_repeat() {
        let ch = ChannelModel::birth_death(&ChannelStateTable::three_state(), MEAN_GAIN, 5.0, 0.01).unwrap();
        let tr = TrafficModel::poisson(2.0, 16.0).unwrap();
        let path = |seed| {
            let mut rng = SimRng::seed_from_u64(seed);
            let mut p = ChannelProcess::new(ch.clone(), 0, &mut rng).unwrap();
            (0..1000).map(|_| (tr.sample(&mut rng), p.step(&mut rng))).collect::<Vec<_>>()
        };
        assert_eq!(path(5), path(5));
        assert_ne!(path(5), path(6));
    }

    proptest! {
        #[test]
        fn backlog_stays_in_buffer(x in 0.0f64..20.0, frac in 0.0f64..=1.0, a in 0.0f64..30.0, b in 1.0f64..20.0) {
            let x = x.min(b);
            let next = buffer_update(x, x * frac, a, b).unwrap();
            prop_assert!((0.0..=b).contains(&next));
        }
    }
}
