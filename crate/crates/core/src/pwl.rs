//! Concave piecewise-linear functions on a closed interval and the adaptive
//! sandwich approximation operator `A_δ`.
//!
//! A [`PwlConcave`] is the linear interpolant of its breakpoints. Every
//! post-decision value function in the crate is stored in this form.
//!
//! [`sandwich_approximate`] samples a concave oracle at adaptively chosen
//! abscissae. With `n` samples the interpolant is a lower bound of the oracle
//! and, on each interval, the oracle is bounded above by the extensions of the
//! neighbouring chords. The vertical distance between the two envelopes is the
//! certified gap of that interval; the worst interval is bisected until every
//! gap is at most `δ`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::num::format_sig;

/// Relative tolerance on slope differences when validating concavity.
pub const SLOPE_TOLERANCE: f64 = 1e-9;

/// Relative tolerance, in value units, for oracle samples that fall outside
/// the band allowed by concavity. Samples inside it are projected back.
const SAMPLE_TOLERANCE: f64 = 1e-8;

/// Intervals narrower than this fraction of the domain are never bisected.
const MIN_RELATIVE_WIDTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Breakpoint {
    pub x: f64,
    pub v: f64,
}

impl Breakpoint {
    pub const fn new(x: f64, v: f64) -> Self {
        Breakpoint { x, v }
    }
}

impl From<(f64, f64)> for Breakpoint {
    fn from((x, v): (f64, f64)) -> Self {
        Breakpoint { x, v }
    }
}

/// Concave piecewise-linear function on `[points[0].x, points[n-1].x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlConcave {
    points: Vec<Breakpoint>,
}

/// Per-interval certified gaps between the lower (chord) and upper
/// (neighbouring-chord) envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub max_gap: f64,
    /// Lowest interval index attaining `max_gap`.
    pub interval_index: usize,
    pub per_interval_gaps: Vec<f64>,
}

impl PwlConcave {
    /// Builds a function from breakpoints, checking ordering and concavity.
    pub fn new(points: Vec<Breakpoint>) -> Result<Self> {
        Self::with_tolerance(points, SLOPE_TOLERANCE)
    }

    /// As [`PwlConcave::new`] with a custom relative slope tolerance.
    pub fn with_tolerance(points: Vec<Breakpoint>, slope_tol: f64) -> Result<Self> {
        check_structure(&points)?;
        for i in 1..points.len() - 1 {
            let k0 = slope(&points, i - 1);
            let k1 = slope(&points, i);
            let excess = k1 - k0;
            if excess > slope_tol * (1.0 + k0.abs() + k1.abs()) {
                return Err(Error::ConcavityViolation { x: points[i].x, excess });
            }
        }
        Ok(PwlConcave { points })
    }

    /// Caller guarantees ordering; concavity holds up to rounding.
    pub(crate) fn from_points_unchecked(points: Vec<Breakpoint>) -> Self {
        debug_assert!(check_structure(&points).is_ok());
        PwlConcave { points }
    }

    pub fn constant(lo: f64, hi: f64, value: f64) -> Result<Self> {
        Self::new(alloc::vec![Breakpoint::new(lo, value), Breakpoint::new(hi, value)])
    }

    /// The zero function on `[lo, hi]`, the learner's initial value function.
    pub fn zero(lo: f64, hi: f64) -> Result<Self> {
        Self::constant(lo, hi, 0.0)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.points[0].x, self.points[self.points.len() - 1].x)
    }

    pub fn points(&self) -> &[Breakpoint] {
        &self.points
    }

    /// Number of breakpoints (always at least two).
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slopes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.windows(2).map(|w| (w[1].v - w[0].v) / (w[1].x - w[0].x))
    }

    /// Linear interpolation; exact at breakpoints.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(lo..=hi).contains(&x) {
            return Err(Error::Domain { x, lo, hi });
        }
        Ok(self.eval_clamped(x))
    }

    /// Evaluates at `x` clamped into the domain.
    pub fn eval_clamped(&self, x: f64) -> f64 {
        let i = self.segment_index(x);
        let (a, b) = (self.points[i], self.points[i + 1]);
        if x <= a.x {
            return a.v;
        }
        if x >= b.x {
            return b.v;
        }
        a.v + (x - a.x) * (b.v - a.v) / (b.x - a.x)
    }

    /// Slope of the segment containing `x`; at a breakpoint, the segment to
    /// its right (the last segment at the right end).
    pub fn slope_at(&self, x: f64) -> f64 {
        slope(&self.points, self.segment_index(x))
    }

    /// Index `i` of the segment `[x_i, x_{i+1}]` containing `x` (clamped).
    pub fn segment_index(&self, x: f64) -> usize {
        let idx = self.points.partition_point(|p| p.x <= x);
        idx.saturating_sub(1).min(self.points.len() - 2)
    }

    pub fn is_concave(&self, slope_tol: f64) -> bool {
        let ks: Vec<f64> = self.slopes().collect();
        ks.windows(2).all(|w| w[1] - w[0] <= slope_tol * (1.0 + w[0].abs() + w[1].abs()))
    }

    pub fn segment_gaps(&self) -> GapReport {
        let per_interval_gaps: Vec<f64> =
            (0..self.points.len() - 1).map(|i| interval_gap(&self.points, i)).collect();
        let (interval_index, max_gap) = argmax_lowest(&per_interval_gaps);
        GapReport { max_gap, interval_index, per_interval_gaps }
    }

    /// Sup-norm distance to another function on the same domain. Both are
    /// piecewise linear, so the supremum is attained at a breakpoint.
    pub fn sup_distance(&self, other: &PwlConcave) -> Result<f64> {
        let (lo, hi) = self.domain();
        let (olo, ohi) = other.domain();
        if lo != olo || hi != ohi {
            return Err(Error::param("other", "domains differ"));
        }
        let d = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|p| (self.eval_clamped(p.x) - other.eval_clamped(p.x)).abs())
            .fold(0.0, f64::max);
        Ok(d)
    }

    /// `x₁,v₁;x₂,v₂;…` with 12 significant digits.
    pub fn to_row(&self) -> String {
        let mut s = String::new();
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                s.push(';');
            }
            s.push_str(&format_sig(p.x));
            s.push(',');
            s.push_str(&format_sig(p.v));
        }
        s
    }
}

impl fmt::Display for PwlConcave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_row())
    }
}

impl FromStr for PwlConcave {
    type Err = Error;

    /// Parses the row format. Values rounded to 12 digits can perturb nearly
    /// collinear slopes, so concavity is checked with a looser tolerance.
    fn from_str(s: &str) -> Result<Self> {
        let mut points = Vec::new();
        for pair in s.trim().split(';') {
            let (x, v) = pair.split_once(',').ok_or(Error::InvalidBreakpoints("expected `x,v` pairs"))?;
            let x: f64 = x.trim().parse().map_err(|_| Error::InvalidBreakpoints("bad abscissa"))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::InvalidBreakpoints("bad value"))?;
            points.push(Breakpoint::new(x, v));
        }
        Self::with_tolerance(points, 1e-6)
    }
}

fn check_structure(points: &[Breakpoint]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidBreakpoints("at least two breakpoints are required"));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.v.is_finite()) {
        return Err(Error::InvalidBreakpoints("breakpoints must be finite"));
    }
    if points.windows(2).any(|w| w[1].x <= w[0].x) {
        return Err(Error::InvalidBreakpoints("abscissae must be strictly increasing"));
    }
    Ok(())
}

#[inline]
fn slope(p: &[Breakpoint], i: usize) -> f64 {
    (p[i + 1].v - p[i].v) / (p[i + 1].x - p[i].x)
}

fn argmax_lowest(xs: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &g) in xs.iter().enumerate() {
        if g > best.1 {
            best = (i, g);
        }
    }
    best
}

/// Vertical gap of interval `i` between the chord and the upper envelope
/// formed by the extended neighbouring chords.
///
/// Boundary intervals have a single neighbour, and the gap is attained at
/// the domain end: `w·|k_0 − k_1|` and `w·|k_{n-3} − k_{n-2}|`. Interior
/// intervals are bounded by both neighbours, which cross above the chord;
/// the height of the crossing over the chord is
/// `w·(k_{i-1} − k_i)(k_i − k_{i+1}) / (k_{i-1} − k_{i+1})`.
/// With only two points there is no envelope and the gap is `|v_1 − v_0|`.
fn interval_gap(p: &[Breakpoint], i: usize) -> f64 {
    let n = p.len();
    if n == 2 {
        return (p[1].v - p[0].v).abs();
    }
    let w = p[i + 1].x - p[i].x;
    let k = slope(p, i);
    let left = (i > 0).then(|| slope(p, i - 1));
    let right = (i + 2 < n).then(|| slope(p, i + 1));
    match (left, right) {
        (None, Some(kr)) => (w * (k - kr)).abs(),
        (Some(kl), None) => (w * (kl - k)).abs(),
        (Some(kl), Some(kr)) => {
            let d1 = (kl - k).max(0.0);
            let d2 = (k - kr).max(0.0);
            if d1 + d2 > 0.0 {
                w * d1 * d2 / (d1 + d2)
            } else {
                0.0
            }
        }
        (None, None) => unreachable!("n > 2 implies at least one neighbour"),
    }
}

/// Settings of the approximation operator `A_δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxConfig {
    /// Certified gap threshold. `0` evaluates every grid point instead.
    pub delta: f64,
    /// Oracle evaluation budget for `delta > 0`.
    pub max_evals: usize,
    /// Restricts sample abscissae to `lo + k·step`. Required when `delta = 0`.
    pub grid_step: Option<f64>,
}

impl ApproxConfig {
    pub fn new(delta: f64) -> Self {
        ApproxConfig { delta, max_evals: 100_000, grid_step: None }
    }

    pub fn with_grid(mut self, step: f64) -> Self {
        self.grid_step = Some(step);
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::param("delta", "must be finite and non-negative"));
        }
        if let Some(g) = self.grid_step {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::param("grid_step", "must be positive"));
            }
        } else if self.delta == 0.0 {
            return Err(Error::param("delta", "delta = 0 needs a grid step for full evaluation"));
        }
        if self.max_evals < 2 {
            return Err(Error::param("max_evals", "must allow at least the two end points"));
        }
        Ok(())
    }
}

/// Result of applying `A_δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximation {
    pub function: PwlConcave,
    /// Oracle evaluations spent, `n_δ`.
    pub evaluations: usize,
    /// Certified maximum gap at termination.
    pub max_gap: f64,
    /// False when the budget or the width guard stopped refinement before
    /// every gap reached `delta`.
    pub converged: bool,
}

/// Sandwich approximation of a concave oracle on `[lo, hi]`.
///
/// Starts from the two end points and repeatedly bisects the interval with
/// the largest certified gap (lowest index on ties), re-evaluating only the
/// four intervals whose gap depends on the new point. Collinear breakpoints
/// are dropped from the result.
pub fn sandwich_approximate<F>(mut oracle: F, lo: f64, hi: f64, config: &ApproxConfig) -> Result<Approximation>
where
    F: FnMut(f64) -> f64,
{
    config.validate()?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::param("domain", "expected finite lo < hi"));
    }
    if config.delta == 0.0 {
        return full_grid(oracle, lo, hi, config.grid_step.unwrap_or(1.0));
    }

    let mut eval = |x: f64| -> Result<f64> {
        let v = oracle(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::param("oracle", "returned a non-finite value"))
        }
    };

    let mut pts = alloc::vec![Breakpoint::new(lo, eval(lo)?), Breakpoint::new(hi, eval(hi)?)];
    let mut evaluations = 2;
    let min_width = MIN_RELATIVE_WIDTH * (hi - lo);
    let bisectable = |a: f64, b: f64| -> Option<f64> { split_point(a, b, lo, min_width, config.grid_step) };

    let gap_of = |pts: &[Breakpoint], i: usize| -> f64 {
        if config.grid_step.is_some() && bisectable(pts[i].x, pts[i + 1].x).is_none() {
            // Exact at every grid point it contains.
            0.0
        } else {
            interval_gap(pts, i)
        }
    };
    let mut gaps = alloc::vec![gap_of(&pts, 0)];

    let converged = loop {
        // Two points bound nothing above the chord, so always split once.
        let open = pts.len() == 2 && bisectable(lo, hi).is_some();
        let (_, worst) = argmax_lowest(&gaps);
        if worst <= config.delta && !open {
            break true;
        }
        // Worst interval that can still be split.
        let mut pick: Option<(usize, f64, f64)> = None;
        for (i, &g) in gaps.iter().enumerate() {
            if (g > config.delta || open) && pick.is_none_or(|(_, best, _)| g > best) {
                if let Some(y) = bisectable(pts[i].x, pts[i + 1].x) {
                    pick = Some((i, g, y));
                }
            }
        }
        let Some((j, _, y)) = pick else { break false };
        if evaluations >= config.max_evals {
            break false;
        }
        let fy = eval(y)?;
        evaluations += 1;
        let fy = project_sample(&pts, j, y, fy)?;
        pts.insert(j + 1, Breakpoint::new(y, fy));
        gaps.insert(j + 1, 0.0);
        let last = pts.len() - 2;
        for i in j.saturating_sub(1)..=(j + 2).min(last) {
            gaps[i] = gap_of(&pts, i);
        }
    };

    if converged && pts.len() == 3 && chord_certified(&pts, config.delta) {
        pts.remove(1);
        gaps = alloc::vec![interval_gap(&pts, 0)];
    }
    let (_, max_gap) = argmax_lowest(&gaps);
    Ok(Approximation {
        function: PwlConcave::from_points_unchecked(drop_collinear(pts)),
        evaluations,
        max_gap,
        converged,
    })
}

/// Whether the chord through the outer points of `pts` (three points) stays
/// within `delta` of the envelope the middle point certifies, and so may
/// replace them.
fn chord_certified(pts: &[Breakpoint], delta: f64) -> bool {
    let [a, m, b] = [pts[0], pts[1], pts[2]];
    let chord = |x: f64| a.v + (b.v - a.v) / (b.x - a.x) * (x - a.x);
    let left = m.v + (b.v - m.v) / (b.x - m.x) * (a.x - m.x) - a.v;
    let right = m.v + (m.v - a.v) / (m.x - a.x) * (b.x - m.x) - b.v;
    let mid = m.v - chord(m.x);
    left.max(right).max(mid) <= delta && (b.v - a.v).abs() <= delta
}

/// Applies `A_δ` to `x ↦ (1−β)·f(x) + β·g(x)` on the domain of `f`.
///
/// `evaluations` in the result counts the calls made to `g`.
pub fn blend_reapproximate<G>(f: &PwlConcave, mut g: G, beta: f64, config: &ApproxConfig) -> Result<Approximation>
where
    G: FnMut(f64) -> f64,
{
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param("beta", "must lie in [0, 1]"));
    }
    let (lo, hi) = f.domain();
    let keep = 1.0 - beta;
    sandwich_approximate(|x| keep * f.eval_clamped(x) + beta * g(x), lo, hi, config)
}

/// Midpoint of `[a, b]`, snapped down to the grid when one is set. `None`
/// when the interval is too narrow or holds no interior grid point.
fn split_point(a: f64, b: f64, origin: f64, min_width: f64, grid: Option<f64>) -> Option<f64> {
    if b - a <= min_width {
        return None;
    }
    let mid = 0.5 * (a + b);
    match grid {
        None => Some(mid),
        Some(step) => {
            let k = libm::floor((mid - origin) / step + 1e-9);
            let y = origin + k * step;
            let eps = 1e-9 * step;
            if y > a + eps && y < b - eps {
                Some(y)
            } else {
                // The floor may land on `a`; try the next grid point.
                let y = origin + (k + 1.0) * step;
                (y > a + eps && y < b - eps).then_some(y)
            }
        }
    }
}

/// Checks a new sample against the concavity band of its interval and
/// projects rounding-level excursions back into it.
fn project_sample(pts: &[Breakpoint], j: usize, y: f64, fy: f64) -> Result<f64> {
    let (a, b) = (pts[j], pts[j + 1]);
    let k = (b.v - a.v) / (b.x - a.x);
    let chord = a.v + k * (y - a.x);
    let mut upper = f64::INFINITY;
    if j > 0 {
        upper = upper.min(a.v + slope(pts, j - 1) * (y - a.x));
    }
    if j + 2 < pts.len() {
        upper = upper.min(b.v + slope(pts, j + 1) * (y - b.x));
    }
    let tol = SAMPLE_TOLERANCE * (1.0 + a.v.abs() + b.v.abs() + fy.abs());
    if fy < chord - tol {
        return Err(Error::ConcavityViolation { x: y, excess: chord - fy });
    }
    if fy > upper + tol {
        return Err(Error::ConcavityViolation { x: y, excess: fy - upper });
    }
    Ok(fy.max(chord).min(upper.max(chord)))
}

fn full_grid<F: FnMut(f64) -> f64>(mut oracle: F, lo: f64, hi: f64, step: f64) -> Result<Approximation> {
    let mut pts = Vec::new();
    let mut k = 0u64;
    loop {
        let x = lo + k as f64 * step;
        if x >= hi - 1e-9 * step {
            break;
        }
        pts.push(Breakpoint::new(x, oracle(x)));
        k += 1;
    }
    pts.push(Breakpoint::new(hi, oracle(hi)));
    if pts.iter().any(|p| !p.v.is_finite()) {
        return Err(Error::param("oracle", "returned a non-finite value"));
    }
    for i in 1..pts.len() - 1 {
        let (a, p, b) = (pts[i - 1], pts[i], pts[i + 1]);
        let chord = a.v + (b.v - a.v) * (p.x - a.x) / (b.x - a.x);
        let tol = SAMPLE_TOLERANCE * (1.0 + a.v.abs() + b.v.abs() + p.v.abs());
        if p.v < chord - tol {
            return Err(Error::ConcavityViolation { x: p.x, excess: chord - p.v });
        }
    }
    let evaluations = pts.len();
    Ok(Approximation {
        function: PwlConcave::from_points_unchecked(pts),
        evaluations,
        max_gap: 0.0,
        converged: true,
    })
}

/// Removes interior breakpoints that lie on the line through their
/// neighbours; the interpolant is unchanged.
fn drop_collinear(pts: Vec<Breakpoint>) -> Vec<Breakpoint> {
    if pts.len() <= 2 {
        return pts;
    }
    let mut out: Vec<Breakpoint> = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    for i in 1..pts.len() - 1 {
        let prev = out[out.len() - 1];
        let (p, next) = (pts[i], pts[i + 1]);
        let k0 = (p.v - prev.v) / (p.x - prev.x);
        let k1 = (next.v - p.v) / (next.x - p.x);
        if (k0 - k1).abs() > 1e-12 * (1.0 + k0.abs() + k1.abs()) {
            out.push(p);
        }
    }
    out.push(pts[pts.len() - 1]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pwl(pairs: &[(f64, f64)]) -> PwlConcave {
        PwlConcave::new(pairs.iter().map(|&p| p.into()).collect()).unwrap()
    }

    /// Envelope gap per interval found by dense sampling plus a ternary
    /// refinement of the (concave) envelope difference.
    fn envelope_gaps(p: &[Breakpoint]) -> Vec<f64> {
        let n = p.len();
        let line = |i: usize, x: f64| p[i].v + slope(p, i) * (x - p[i].x);
        (0..n - 1)
            .map(|i| {
                if n == 2 {
                    return (p[1].v - p[0].v).abs();
                }
                let diff = |x: f64| {
                    let mut up = f64::INFINITY;
                    if i > 0 {
                        up = up.min(line(i - 1, x));
                    }
                    if i + 2 < n {
                        up = up.min(line(i + 1, x));
                    }
                    up - line(i, x)
                };
                let (a, b) = (p[i].x, p[i + 1].x);
                let m = 2000;
                let mut best = (a, diff(a));
                for s in 0..=m {
                    let x = a + (b - a) * s as f64 / m as f64;
                    let d = diff(x);
                    if d > best.1 {
                        best = (x, d);
                    }
                }
                let h = (b - a) / m as f64;
                let (mut lo, mut hi) = ((best.0 - h).max(a), (best.0 + h).min(b));
                for _ in 0..200 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if diff(m1) < diff(m2) {
                        lo = m1;
                    } else {
                        hi = m2;
                    }
                }
                best.1.max(diff(0.5 * (lo + hi)))
            })
            .collect()
    }

    #[test]
    fn eval_interpolates() {
        let f = pwl(&[(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(f.eval(0.5).unwrap(), 0.5);
        let f = pwl(&[(0.0, 0.0), (2.0, 4.0), (4.0, 6.0)]);
        assert_eq!(f.eval(2.0).unwrap(), 4.0);
        assert_eq!(f.eval(3.0).unwrap(), 5.0);
        assert_eq!(f.eval(4.0).unwrap(), 6.0);
    }

    #[test]
    fn eval_outside_domain_is_an_error() {
        let f = pwl(&[(0.0, 0.0), (1.0, 1.0)]);
        assert!(matches!(f.eval(1.5), Err(Error::Domain { .. })));
        assert!(matches!(f.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(PwlConcave::new(vec![Breakpoint::new(0.0, 0.0)]).is_err());
        assert!(PwlConcave::new(vec![(0.0, 0.0).into(), (0.0, 1.0).into()]).is_err());
        // Convex kink.
        let r = PwlConcave::new(vec![(0.0, 0.0).into(), (1.0, 0.0).into(), (2.0, 1.0).into()]);
        assert!(matches!(r, Err(Error::ConcavityViolation { .. })));
    }

    #[test]
    fn collinear_points_have_zero_gap() {
        let r = pwl(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]).segment_gaps();
        assert_eq!(r.per_interval_gaps, vec![0.0, 0.0]);
        assert_eq!(r.max_gap, 0.0);
    }

    #[test]
    fn two_points_gap_is_value_difference() {
        let r = pwl(&[(0.0, 0.0), (1.0, 1.0)]).segment_gaps();
        assert_eq!(r.max_gap, 1.0);
        assert_eq!(r.interval_index, 0);
        // Sign-agnostic for decreasing functions.
        assert_eq!(pwl(&[(0.0, 3.0), (1.0, 1.0)]).segment_gaps().max_gap, 2.0);
    }

    #[test]
    fn sqrt_three_point_gaps_match_envelope() {
        let f = pwl(&[(0.0, 0.0), (0.5, 0.5f64.sqrt()), (1.0, 1.0)]);
        let r = f.segment_gaps();
        let oracle = envelope_gaps(f.points());
        for (g, o) in r.per_interval_gaps.iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-6, "{g} vs {o}");
        }
        // w·(k0 − k1) = 0.5·(√2 − (2 − √2))
        assert!((r.max_gap - 0.414213562373).abs() < 1e-9);
        assert_eq!(r.interval_index, 0);
    }

    #[test]
    fn sandwich_of_affine_function_is_exact() {
        let a = sandwich_approximate(|x| x, 0.0, 10.0, &ApproxConfig::new(0.1)).unwrap();
        assert_eq!(a.function.points(), &[Breakpoint::new(0.0, 0.0), Breakpoint::new(10.0, 10.0)]);
        assert_eq!(a.max_gap, 0.0);
        assert!(a.converged);
    }

    #[test]
    fn sandwich_large_delta_returns_end_points() {
        // One probe certifies the chord, which then replaces the three points.
        let a = sandwich_approximate(libm::sqrt, 0.0, 1.0, &ApproxConfig::new(1.0)).unwrap();
        assert_eq!(a.evaluations, 3);
        assert_eq!(a.function.len(), 2);
    }

    #[test]
    fn sandwich_probes_a_flat_chord() {
        // Equal end values hide a hump of height 1 above the chord.
        let a = sandwich_approximate(|x: f64| 1.0 - (x - 1.0).abs(), 0.0, 2.0, &ApproxConfig::new(0.5)).unwrap();
        assert!(a.function.len() >= 3);
        assert!((a.function.eval(1.0).unwrap() - 1.0).abs() <= 0.5);
    }

    #[test]
    fn sandwich_sqrt_trace() {
        // Worked by hand: δ⁰ = 1 → split at 0.5; both gaps equal 0.41421 so the
        // lowest index wins → 0.25; then interval 0 has gap 0.29289 → 0.125.
        let a = sandwich_approximate(libm::sqrt, 0.0, 1.0, &ApproxConfig::new(0.05).with_max_evals(5)).unwrap();
        let xs: Vec<f64> = a.function.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 0.125, 0.25, 0.5, 1.0]);
        assert!((a.function.eval(0.5).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(!a.converged);

        let full = sandwich_approximate(libm::sqrt, 0.0, 1.0, &ApproxConfig::new(0.05)).unwrap();
        assert!(full.converged);
        assert!(full.max_gap <= 0.05);
        assert!(full.function.segment_gaps().max_gap <= 0.05);
    }

    #[test]
    fn local_gap_updates_match_full_recompute() {
        let f = |x: f64| -libm::exp(1.3 * x) + 4.0 * x;
        let a = sandwich_approximate(f, -1.0, 2.0, &ApproxConfig::new(1e-3)).unwrap();
        let report = a.function.segment_gaps();
        assert!((report.max_gap - a.max_gap).abs() < 1e-12 || report.max_gap <= 1e-3);
        assert!(report.max_gap <= 1e-3);
    }

    #[test]
    fn sandwich_rejects_convex_oracle() {
        let r = sandwich_approximate(|x| x * x, -1.0, 2.0, &ApproxConfig::new(0.01));
        assert!(matches!(r, Err(Error::ConcavityViolation { .. })));
    }

    #[test]
    fn delta_zero_evaluates_full_grid() {
        let a = sandwich_approximate(|x| -(x - 3.0) * (x - 3.0), 0.0, 8.0, &ApproxConfig::new(0.0).with_grid(1.0)).unwrap();
        assert_eq!(a.evaluations, 9);
        assert_eq!(a.function.len(), 9);
        assert!(ApproxConfig::new(0.0).validate().is_err());
    }

    #[test]
    fn grid_mode_samples_only_grid_points() {
        let cfg = ApproxConfig::new(1e-3).with_grid(1.0);
        let a = sandwich_approximate(|x| libm::sqrt(x + 1.0), 0.0, 16.0, &cfg).unwrap();
        assert!(a.converged);
        for p in a.function.points() {
            assert_eq!(p.x, libm::round(p.x));
        }
        // Exact at every grid point.
        for k in 0..=16 {
            let x = k as f64;
            assert!((a.function.eval(x).unwrap() - libm::sqrt(x + 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn max_evals_budget_is_respected() {
        let a = sandwich_approximate(libm::sqrt, 0.0, 1.0, &ApproxConfig::new(1e-9).with_max_evals(7)).unwrap();
        assert_eq!(a.evaluations, 7);
        assert!(!a.converged);
    }

    #[test]
    fn blend_extremes() {
        let f = pwl(&[(0.0, 0.0), (2.0, 1.5), (4.0, 2.0)]);
        let g = |x: f64| -x;
        let cfg = ApproxConfig::new(1e-6);
        let keep = blend_reapproximate(&f, g, 0.0, &cfg).unwrap();
        for p in keep.function.points() {
            assert_eq!(p.v, f.eval(p.x).unwrap());
        }
        let replace = blend_reapproximate(&f, g, 1.0, &cfg).unwrap();
        assert_eq!(replace.function.points(), &[Breakpoint::new(0.0, 0.0), Breakpoint::new(4.0, -4.0)]);

        let zero = PwlConcave::zero(0.0, 4.0).unwrap();
        let half = blend_reapproximate(&zero, g, 0.5, &ApproxConfig::new(0.1)).unwrap();
        assert_eq!(half.function.points(), &[Breakpoint::new(0.0, 0.0), Breakpoint::new(4.0, -2.0)]);
        assert!(blend_reapproximate(&zero, g, 1.5, &cfg).is_err());
    }

    #[test]
    fn row_format_round_trip() {
        let f = pwl(&[(0.0, 0.0), (0.5, 0.5f64.sqrt()), (1.0, 1.0)]);
        assert_eq!(f.to_row(), "0,0;0.5,0.707106781187;1,1");
        let back: PwlConcave = f.to_row().parse().unwrap();
        assert!(back.sup_distance(&f).unwrap() < 1e-11);
        assert!("1,2;x".parse::<PwlConcave>().is_err());
    }

    fn concave_family() -> impl Strategy<Value = (u8, f64, f64, f64)> {
        (0u8..4, 0.1f64..5.0, -3.0f64..3.0, 0.5f64..6.0)
    }

    fn family(kind: u8, a: f64, b: f64, x: f64) -> f64 {
        match kind {
            0 => a * libm::sqrt(x + 0.01),
            1 => -a * (x - b) * (x - b),
            2 => a * libm::log(1.0 + x) + b * x,
            _ => -libm::exp(0.5 * a * x) + b * x,
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn sandwich_brackets_oracle((kind, a, b, width) in concave_family(), delta in 0.001f64..2.0) {
            let f = |x: f64| family(kind, a, b, x);
            let approx = sandwich_approximate(f, 0.0, width, &ApproxConfig::new(delta)).unwrap();
            prop_assert!(approx.converged);
            prop_assert!(approx.function.is_concave(SLOPE_TOLERANCE));
            for s in 0..=2000 {
                let x = (width * s as f64 / 2000.0).min(width);
                let d = f(x) - approx.function.eval(x).unwrap();
                prop_assert!(d >= -1e-9, "x={} d={}", x, d);
                prop_assert!(d <= delta + 1e-9, "x={} d={}", x, d);
            }
        }

        #[test]
        fn evaluations_shrink_as_delta_grows((kind, a, b, width) in concave_family(), d in 0.001f64..1.0) {
            let f = |x: f64| family(kind, a, b, x);
            let fine = sandwich_approximate(f, 0.0, width, &ApproxConfig::new(d)).unwrap();
            let coarse = sandwich_approximate(f, 0.0, width, &ApproxConfig::new(2.0 * d)).unwrap();
            prop_assert!(coarse.evaluations <= fine.evaluations);
            prop_assert!(coarse.function.len() <= fine.function.len());
        }

        #[test]
        fn gap_formula_matches_envelope(slopes in proptest::collection::vec(-5.0f64..5.0, 1..8),
                                        widths in proptest::collection::vec(0.05f64..3.0, 8)) {
            let mut ks = slopes.clone();
            ks.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut pts = vec![Breakpoint::new(0.0, 0.0)];
            for (k, w) in ks.iter().zip(&widths) {
                let last = pts[pts.len() - 1];
                pts.push(Breakpoint::new(last.x + w, last.v + k * w));
            }
            let f = PwlConcave::new(pts).unwrap();
            let oracle = envelope_gaps(f.points());
            for (g, o) in f.segment_gaps().per_interval_gaps.iter().zip(&oracle) {
                prop_assert!((g - o).abs() < 1e-6, "{} vs {}", g, o);
            }
        }

        #[test]
        fn sandwich_is_deterministic(delta in 0.001f64..1.0) {
            let f = |x: f64| libm::log(1.0 + 3.0 * x);
            let a = sandwich_approximate(f, 0.0, 5.0, &ApproxConfig::new(delta)).unwrap();
            let b = sandwich_approximate(f, 0.0, 5.0, &ApproxConfig::new(delta)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
