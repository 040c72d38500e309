//! Sampled junction paths and the path-space diagnostics built on them:
//! uniform distance, modulus of continuity, a Skorokhod-distance upper bound
//! and membership in the space of paths that jump only from the vertex to
//! `delta`.
//!
//! Suprema over continuous time are taken over the stored grid, which makes
//! every quantity here a grid lower bound of its continuum value (or, for the
//! Skorokhod search, an upper bound over a restricted warp family).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::junction::{junction_distance, JunctionPoint};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("array lengths disagree: {0}")]
    Length(String),
    #[error("time grid must start at 0 and increase strictly (step {0})")]
    TimeGrid(usize),
    #[error("invalid position {value} at step {step}")]
    Position { step: usize, value: f64 },
    #[error("edge label 0 at step {0}; labels are 1-based")]
    EdgeLabel(usize),
    #[error("jump counter must start at 0 and rise by 0 or 1 per step (step {0})")]
    Counter(usize),
    #[error("edge label changes without a counted jump at step {0}")]
    EdgeChange(usize),
    #[error("delta must be finite and >= 0, got {0}")]
    Delta(f64),
    #[error("time grids differ")]
    GridMismatch,
    #[error("horizons differ: {0} vs {1}")]
    HorizonMismatch(f64, f64),
    #[error("theta {theta} outside (0, {horizon}]")]
    Theta { theta: f64, horizon: f64 },
    #[error("warp resolution must be at least 2, got {0}")]
    WarpResolution(usize),
    #[error("malformed path file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A sampled trajectory of `(x(t), i(t))` with its jump counter and the
/// Brownian increments that drove it.
///
/// Read as a càdlàg path: linear between grid points, except on a step where
/// the counter rises, where the path runs into the vertex and then jumps to
/// the stored next position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    time_grid: Vec<f64>,
    positions: Vec<f64>,
    edges: Vec<usize>,
    jump_counter: Vec<u64>,
    noise_increments: Vec<f64>,
    delta: f64,
}

impl PathRecord {
    /// Validated constructor; see the type-level invariants.
    pub fn new(
        time_grid: Vec<f64>,
        positions: Vec<f64>,
        edges: Vec<usize>,
        jump_counter: Vec<u64>,
        noise_increments: Vec<f64>,
        delta: f64,
    ) -> Result<Self, PathError> {
        let p = Self {
            time_grid,
            positions,
            edges,
            jump_counter,
            noise_increments,
            delta,
        };
        p.check()?;
        Ok(p)
    }

    /// A path with no counted jumps and zero-filled noise.
    pub fn synthetic(
        time_grid: Vec<f64>,
        positions: Vec<f64>,
        edges: Vec<usize>,
        delta: f64,
    ) -> Result<Self, PathError> {
        let n = time_grid.len();
        Self::new(
            time_grid,
            positions,
            edges,
            vec![0; n],
            vec![0.0; n.saturating_sub(1)],
            delta,
        )
    }

    /// A path held at one point on the uniform grid `k * T / steps`.
    pub fn constant(point: JunctionPoint, horizon: f64, steps: usize, delta: f64) -> Result<Self, PathError> {
        let grid = uniform_grid(horizon, steps);
        let n = grid.len();
        Self::synthetic(grid, vec![point.x; n], vec![point.edge; n], delta)
    }

    pub(crate) fn from_parts_unchecked(
        time_grid: Vec<f64>,
        positions: Vec<f64>,
        edges: Vec<usize>,
        jump_counter: Vec<u64>,
        noise_increments: Vec<f64>,
        delta: f64,
    ) -> Self {
        let p = Self {
            time_grid,
            positions,
            edges,
            jump_counter,
            noise_increments,
            delta,
        };
        debug_assert!(p.check().is_ok(), "{:?}", p.check());
        p
    }

    /// Re-checks every structural invariant.
    pub fn check(&self) -> Result<(), PathError> {
        let n = self.time_grid.len();
        if n == 0 {
            return Err(PathError::Empty);
        }
        if self.positions.len() != n || self.edges.len() != n || self.jump_counter.len() != n {
            return Err(PathError::Length(format!(
                "grid {n}, positions {}, edges {}, counter {}",
                self.positions.len(),
                self.edges.len(),
                self.jump_counter.len()
            )));
        }
        if self.noise_increments.len() != n - 1 {
            return Err(PathError::Length(format!(
                "noise has {} entries, expected {}",
                self.noise_increments.len(),
                n - 1
            )));
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(PathError::Delta(self.delta));
        }
        if self.time_grid[0] != 0.0 {
            return Err(PathError::TimeGrid(0));
        }
        if self.jump_counter[0] != 0 {
            return Err(PathError::Counter(0));
        }
        for k in 0..n {
            let x = self.positions[k];
            if !(x.is_finite() && x >= 0.0) {
                return Err(PathError::Position { step: k, value: x });
            }
            if self.edges[k] == 0 {
                return Err(PathError::EdgeLabel(k));
            }
            if k > 0 {
                if !(self.time_grid[k] > self.time_grid[k - 1]) || !self.time_grid[k].is_finite() {
                    return Err(PathError::TimeGrid(k));
                }
                let dn = self.jump_counter[k].checked_sub(self.jump_counter[k - 1]);
                match dn {
                    Some(0) => {
                        if self.edges[k] != self.edges[k - 1] {
                            return Err(PathError::EdgeChange(k));
                        }
                    }
                    Some(1) => {}
                    _ => return Err(PathError::Counter(k)),
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.time_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_grid.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.time_grid.last().expect("non-empty path")
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn times(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn jump_counter(&self) -> &[u64] {
        &self.jump_counter
    }

    pub fn noise_increments(&self) -> &[f64] {
        &self.noise_increments
    }

    pub fn point(&self, k: usize) -> JunctionPoint {
        JunctionPoint {
            x: self.positions[k],
            edge: self.edges[k],
        }
    }

    pub fn final_point(&self) -> JunctionPoint {
        self.point(self.len() - 1)
    }

    pub fn final_count(&self) -> u64 {
        *self.jump_counter.last().expect("non-empty path")
    }

    /// True when the noise column carries anything but zeros.
    pub fn has_noise(&self) -> bool {
        self.noise_increments.iter().any(|&w| w != 0.0)
    }

    /// Index of the last grid point at or before `t` (clamped to the grid).
    pub fn index_at(&self, t: f64) -> usize {
        let slack = 1e-12 * self.horizon().max(1.0);
        match self
            .time_grid
            .partition_point(|&s| s <= t + slack)
        {
            0 => 0,
            k => k - 1,
        }
    }

    /// Right-continuous step reading of the path at time `t`.
    pub fn value_at(&self, t: f64) -> JunctionPoint {
        self.point(self.index_at(t))
    }

    /// Same path with a different `delta` label.
    pub fn with_delta(mut self, delta: f64) -> Result<Self, PathError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(PathError::Delta(delta));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Same path with a different jump counter (edges must stay consistent).
    pub fn with_jump_counter(mut self, jump_counter: Vec<u64>) -> Result<Self, PathError> {
        self.jump_counter = jump_counter;
        self.check()?;
        Ok(self)
    }
}

/// `k * horizon / steps` for `k = 0..=steps`, with the last point exactly `horizon`.
pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..=steps)
        .map(|k| horizon * k as f64 / steps.max(1) as f64)
        .collect();
    if let Some(last) = grid.last_mut() {
        *last = horizon;
    }
    grid
}

fn same_grid(a: &PathRecord, b: &PathRecord) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let slack = 1e-12 * a.horizon().max(1.0);
    a.time_grid
        .iter()
        .zip(&b.time_grid)
        .all(|(s, t)| (s - t).abs() <= slack)
}

/// `max_k d(a(t_k), b(t_k))` over a shared grid.
pub fn uniform_distance(a: &PathRecord, b: &PathRecord) -> Result<f64, PathError> {
    if !same_grid(a, b) {
        return Err(PathError::GridMismatch);
    }
    Ok((0..a.len())
        .map(|k| a.point(k).distance(&b.point(k)))
        .fold(0.0, f64::max))
}

/// Sup of `d(p(u), p(s))` over grid pairs with `|u - s| <= theta`, both
/// window endpoints included.
///
/// Runs in `O(n * I)` with one monotone max/min deque per edge: the diameter
/// of a window is the widest same-edge range or the sum of the two largest
/// positions on distinct edges.
pub fn modulus_of_continuity(p: &PathRecord, theta: f64) -> Result<f64, PathError> {
    let horizon = p.horizon();
    let slack = 1e-9 * horizon.max(1.0);
    if !(theta > 0.0 && theta <= horizon + slack) {
        return Err(PathError::Theta { theta, horizon });
    }
    let edge_count = p.edges.iter().copied().max().unwrap_or(1);
    let mut max_q: Vec<VecDeque<usize>> = vec![VecDeque::new(); edge_count + 1];
    let mut min_q: Vec<VecDeque<usize>> = vec![VecDeque::new(); edge_count + 1];
    let xs = &p.positions;
    let ts = &p.time_grid;
    let mut left = 0usize;
    let mut best = 0.0f64;

    for right in 0..p.len() {
        let e = p.edges[right];
        while max_q[e].back().is_some_and(|&j| xs[j] <= xs[right]) {
            max_q[e].pop_back();
        }
        max_q[e].push_back(right);
        while min_q[e].back().is_some_and(|&j| xs[j] >= xs[right]) {
            min_q[e].pop_back();
        }
        min_q[e].push_back(right);

        while ts[right] - ts[left] > theta + slack {
            left += 1;
        }
        let (mut top, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for edge in 1..=edge_count {
            while max_q[edge].front().is_some_and(|&j| j < left) {
                max_q[edge].pop_front();
            }
            while min_q[edge].front().is_some_and(|&j| j < left) {
                min_q[edge].pop_front();
            }
            let (Some(&hi), Some(&lo)) = (max_q[edge].front(), min_q[edge].front()) else {
                continue;
            };
            best = best.max(xs[hi] - xs[lo]);
            if xs[hi] > top {
                second = top;
                top = xs[hi];
            } else if xs[hi] > second {
                second = xs[hi];
            }
        }
        if second.is_finite() {
            best = best.max(top + second);
        }
    }
    Ok(best)
}

/// Largest-increment step times of a path, used to seed warp offsets.
fn event_times(p: &PathRecord, count: usize) -> Vec<f64> {
    let mut inc: Vec<(f64, usize)> = (1..p.len())
        .map(|k| (p.point(k - 1).distance(&p.point(k)), k))
        .filter(|&(d, _)| d > 0.0)
        .collect();
    inc.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    inc.truncate(count);
    inc.into_iter().map(|(_, k)| p.time_grid[k]).collect()
}

/// Sup over `b`'s grid points in `[u0, u1]` of `d(a(lambda(t)), b(t))` for the
/// linear warp sending `[u0, u1]` onto `[v0, v1]`.
fn segment_cost(a: &PathRecord, b: &PathRecord, range: (usize, usize), u: (f64, f64), v: (f64, f64), cap: f64) -> f64 {
    let mut worst = 0.0f64;
    let slope = (v.1 - v.0) / (u.1 - u.0);
    for k in range.0..range.1 {
        let s = v.0 + slope * (b.time_grid[k] - u.0);
        let d = a.value_at(s).distance(&b.point(k));
        if d > worst {
            worst = d;
            if worst >= cap {
                break;
            }
        }
    }
    worst
}

/// Upper bound on the Skorokhod distance in its `|lambda - Id|` form.
///
/// Minimises `max(|lambda - Id|, sup_t d(a(lambda(t)), b(t)))` over increasing
/// piecewise-linear warps with `warp_resolution` equally spaced knots. Knot
/// images are the knot plus an offset drawn from a uniform offset ladder and
/// from differences of the two paths' largest-increment times; a minimax
/// dynamic program then picks the best monotone chain. The identity warp is
/// always a candidate, so on a shared grid the result never exceeds the
/// uniform distance.
pub fn skorokhod_distance_upper(a: &PathRecord, b: &PathRecord, warp_resolution: usize) -> Result<f64, PathError> {
    if warp_resolution < 2 {
        return Err(PathError::WarpResolution(warp_resolution));
    }
    let horizon = b.horizon();
    if (a.horizon() - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(PathError::HorizonMismatch(a.horizon(), horizon));
    }
    let knots = warp_resolution;
    let knot_at = |m: usize| horizon * m as f64 / (knots - 1) as f64;

    // b's grid indices covered by each knot segment, endpoints included.
    let slack = 1e-12 * horizon.max(1.0);
    let ranges: Vec<(usize, usize)> = (0..knots - 1)
        .map(|m| {
            let (u0, u1) = (knot_at(m), knot_at(m + 1));
            let lo = b.time_grid.partition_point(|&t| t < u0 - slack);
            let hi = b.time_grid.partition_point(|&t| t <= u1 + slack);
            (lo, hi)
        })
        .collect();

    let identity: f64 = ranges
        .iter()
        .enumerate()
        .map(|(m, &r)| segment_cost(a, b, r, (knot_at(m), knot_at(m + 1)), (knot_at(m), knot_at(m + 1)), f64::INFINITY))
        .fold(0.0, f64::max);
    let mut best = identity;
    if best == 0.0 || knots == 2 {
        return Ok(best);
    }

    let step = horizon / (4 * (knots - 1)) as f64;
    let mut offsets = vec![0.0];
    let mut k = 1;
    while (k as f64) * step < best.min(horizon) {
        offsets.push(k as f64 * step);
        offsets.push(-(k as f64) * step);
        k += 1;
    }
    let (ea, eb) = (event_times(a, 8), event_times(b, 8));
    for &ta in &ea {
        for &tb in &eb {
            let off = ta - tb;
            if off.abs() < best {
                offsets.push(off);
            }
        }
    }
    offsets.sort_by(f64::total_cmp);
    offsets.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);

    // cost[o]: best minimax cost of a warp reaching knot m at offset o.
    let feasible = |m: usize, off: f64| {
        let v = knot_at(m) + off;
        if m == 0 || m == knots - 1 {
            off == 0.0
        } else {
            v > 0.0 && v < horizon
        }
    };
    let mut cost: Vec<f64> = offsets
        .iter()
        .map(|&o| if feasible(0, o) { 0.0 } else { f64::INFINITY })
        .collect();
    for m in 0..knots - 1 {
        let (u0, u1) = (knot_at(m), knot_at(m + 1));
        let mut next = vec![f64::INFINITY; offsets.len()];
        for (j, &oj) in offsets.iter().enumerate() {
            if !feasible(m + 1, oj) || oj.abs() >= best {
                continue;
            }
            let v1 = u1 + oj;
            for (i, &oi) in offsets.iter().enumerate() {
                let base = cost[i].max(oj.abs());
                if base >= next[j].min(best) {
                    continue;
                }
                let v0 = u0 + oi;
                if v1 <= v0 {
                    continue;
                }
                let seg = segment_cost(a, b, ranges[m], (u0, u1), (v0, v1), next[j].min(best));
                next[j] = next[j].min(base.max(seg));
            }
        }
        cost = next;
    }
    if let Some(pos) = offsets.iter().position(|&o| o == 0.0) {
        best = best.min(cost[pos]);
    }
    Ok(best)
}

/// Tolerances used by [`validate_ddelta_membership_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipTolerances {
    /// Increments above this (plus the noise allowance) count as jumps.
    pub jump: f64,
    /// How close a position must be to the vertex or to `delta`.
    pub position: f64,
    /// Uncounted steps may move by `noise_gain * |dW|` on top of `jump`.
    pub noise_gain: f64,
    /// Uncounted steps may move by `drift_rate * dt` on top of `jump`.
    pub drift_rate: f64,
}

impl MembershipTolerances {
    /// `delta / 2` for jumps, `delta / 100` for positions, no noise allowance.
    pub fn for_delta(delta: f64) -> Self {
        Self {
            jump: delta / 2.0,
            position: delta / 100.0,
            noise_gain: 0.0,
            drift_rate: 0.0,
        }
    }

    /// Allows each uncounted step the displacement an Euler step can produce
    /// under the declared coefficient bounds.
    pub fn for_coefficients(delta: f64, diffusion_bound: f64, drift_bound: f64) -> Self {
        Self {
            noise_gain: diffusion_bound,
            drift_rate: drift_bound,
            ..Self::for_delta(delta)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// The path's `delta` is not positive.
    NonPositiveDelta,
    /// A counted jump did not land at `delta`.
    LandingNotAtDelta,
    /// A discontinuity whose left end is off the vertex.
    NotFromVertex,
    /// A vertex-to-`delta` discontinuity the counter did not record.
    UncountedJump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub time: f64,
    pub from: JunctionPoint,
    pub to: JunctionPoint,
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub step: usize,
    pub time: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub delta: f64,
    pub tolerances: MembershipTolerances,
    pub jumps: Vec<JumpEvent>,
    pub violations: Vec<Violation>,
    pub final_jump_counter: u64,
    pub passed: bool,
}

impl MembershipReport {
    pub fn detected_jumps(&self) -> usize {
        self.jumps.len()
    }
}

/// Membership check with the default tolerances of [`MembershipTolerances::for_delta`].
pub fn validate_ddelta_membership(p: &PathRecord) -> MembershipReport {
    validate_ddelta_membership_with(p, &MembershipTolerances::for_delta(p.delta))
}

/// Checks that the path's only discontinuities go from the vertex to `delta`.
///
/// Counted steps are jumps by construction: their left limit is the vertex
/// and they must land at `delta`. Uncounted steps must stay within the jump
/// tolerance (plus the noise allowance); a larger move is a discontinuity
/// that is either not from the vertex or missing from the counter.
pub fn validate_ddelta_membership_with(p: &PathRecord, tol: &MembershipTolerances) -> MembershipReport {
    let delta = p.delta;
    let mut report = MembershipReport {
        delta,
        tolerances: *tol,
        jumps: Vec::new(),
        violations: Vec::new(),
        final_jump_counter: p.final_count(),
        passed: true,
    };
    if !(delta > 0.0) {
        report.violations.push(Violation {
            step: 0,
            time: 0.0,
            kind: ViolationKind::NonPositiveDelta,
        });
        report.passed = false;
        return report;
    }
    for k in 1..p.len() {
        let (from, to) = (p.point(k - 1), p.point(k));
        let time = p.time_grid[k];
        let counted = p.jump_counter[k] > p.jump_counter[k - 1];
        if counted {
            report.jumps.push(JumpEvent {
                step: k,
                time,
                from,
                to,
                counted,
            });
            if (to.x - delta).abs() > tol.position {
                report.violations.push(Violation {
                    step: k,
                    time,
                    kind: ViolationKind::LandingNotAtDelta,
                });
            }
            continue;
        }
        let dt = time - p.time_grid[k - 1];
        let allowance = tol.jump + tol.noise_gain * p.noise_increments[k - 1].abs() + tol.drift_rate * dt;
        let step = junction_distance(from.x, from.edge, to.x, to.edge);
        if step <= allowance {
            continue;
        }
        report.jumps.push(JumpEvent {
            step: k,
            time,
            from,
            to,
            counted,
        });
        let kind = if from.x <= tol.position && (to.x - delta).abs() <= tol.position {
            ViolationKind::UncountedJump
        } else {
            ViolationKind::NotFromVertex
        };
        report.violations.push(Violation { step: k, time, kind });
    }
    report.passed = report.violations.is_empty();
    report
}
