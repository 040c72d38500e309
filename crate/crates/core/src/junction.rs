//! Star junction topology, points, the junction metric and per-edge
//! coefficient fields.
//!
//! A junction is `I` half-lines glued at one vertex. Edges are indexed
//! `1..=I` throughout the crate. A point `(x, i)` with `x = 0` is the vertex
//! whatever its label; the label is kept for bookkeeping only.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `sum(alpha) == 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JunctionError {
    #[error("junction needs at least one edge")]
    NoEdges,
    #[error("edge index {edge} outside 1..={edge_count}")]
    EdgeOutOfRange { edge: usize, edge_count: usize },
    #[error("position {0} is negative or not finite")]
    InvalidPosition(f64),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfDomain { t: f64, horizon: f64 },
    #[error("vertex weights invalid: {0}")]
    InvalidWeights(String),
    #[error("coefficient field invalid: {0}")]
    InvalidField(String),
    #[error("{which} on edge {edge} is not finite at (t={t}, x={x})")]
    NonFiniteCoefficient {
        which: &'static str,
        edge: usize,
        t: f64,
        x: f64,
    },
}

/// The star graph itself: only the number of edges matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Junction {
    edge_count: usize,
}

impl Junction {
    pub fn new(edge_count: usize) -> Result<Self, JunctionError> {
        if edge_count == 0 {
            return Err(JunctionError::NoEdges);
        }
        Ok(Self { edge_count })
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn edges(&self) -> impl Iterator<Item = usize> {
        1..=self.edge_count
    }

    pub fn check_edge(&self, edge: usize) -> Result<(), JunctionError> {
        if edge == 0 || edge > self.edge_count {
            return Err(JunctionError::EdgeOutOfRange {
                edge,
                edge_count: self.edge_count,
            });
        }
        Ok(())
    }

    /// Junction distance with range checks on both labels.
    pub fn distance(&self, p: JunctionPoint, q: JunctionPoint) -> Result<f64, JunctionError> {
        self.check_edge(p.edge)?;
        self.check_edge(q.edge)?;
        Ok(p.distance(&q))
    }
}

/// A point `(x, i)` on the junction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JunctionPoint {
    pub x: f64,
    pub edge: usize,
}

impl JunctionPoint {
    pub fn new(x: f64, edge: usize) -> Result<Self, JunctionError> {
        if !(x.is_finite() && x >= 0.0) {
            return Err(JunctionError::InvalidPosition(x));
        }
        Ok(Self { x, edge })
    }

    pub fn vertex(edge: usize) -> Self {
        Self { x: 0.0, edge }
    }

    pub fn is_vertex(&self) -> bool {
        self.x == 0.0
    }

    /// `|x - y|` on a common edge, `x + y` across edges.
    pub fn distance(&self, other: &JunctionPoint) -> f64 {
        junction_distance(self.x, self.edge, other.x, other.edge)
    }
}

/// Equality under vertex identification.
impl PartialEq for JunctionPoint {
    fn eq(&self, other: &Self) -> bool {
        self.x == other.x && (self.edge == other.edge || self.x == 0.0)
    }
}

impl fmt::Display for JunctionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_vertex() {
            write!(f, "vertex")
        } else {
            write!(f, "({}, {})", self.x, self.edge)
        }
    }
}

/// Unchecked junction metric on raw coordinates.
///
/// When either position is zero both branches give the same value, so the
/// vertex needs no special case.
#[inline]
pub fn junction_distance(x: f64, i: usize, y: f64, j: usize) -> f64 {
    if i == j {
        (x - y).abs()
    } else {
        x + y
    }
}

/// Probability vector used to pick an edge each time the vertex is hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct VertexWeights {
    alpha: Vec<f64>,
}

impl VertexWeights {
    /// Entries must be strictly positive and sum to one. An entry of exactly
    /// 1.0 is therefore only possible on a single-edge junction.
    pub fn new(alpha: Vec<f64>) -> Result<Self, JunctionError> {
        if alpha.is_empty() {
            return Err(JunctionError::InvalidWeights("empty weight vector".into()));
        }
        for (k, &a) in alpha.iter().enumerate() {
            if !(a.is_finite() && a > 0.0 && a <= 1.0) {
                return Err(JunctionError::InvalidWeights(format!(
                    "alpha[{}] = {a} is not in (0, 1]",
                    k + 1
                )));
            }
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(JunctionError::InvalidWeights(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn uniform(edge_count: usize) -> Result<Self, JunctionError> {
        if edge_count == 0 {
            return Err(JunctionError::NoEdges);
        }
        let mut alpha = vec![1.0 / edge_count as f64; edge_count];
        // Push the rounding residue onto the last entry.
        let head: f64 = alpha[..edge_count - 1].iter().sum();
        alpha[edge_count - 1] = 1.0 - head;
        Self::new(alpha)
    }

    pub fn edge_count(&self) -> usize {
        self.alpha.len()
    }

    pub fn junction(&self) -> Junction {
        Junction {
            edge_count: self.alpha.len(),
        }
    }

    /// Weight of a 1-based edge.
    pub fn weight(&self, edge: usize) -> f64 {
        self.alpha[edge - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.alpha
    }

    /// Total weight of a set of 1-based edges.
    pub fn subset_mass(&self, edges: &[usize]) -> f64 {
        edges.iter().map(|&e| self.weight(e)).sum()
    }
}

impl TryFrom<Vec<f64>> for VertexWeights {
    type Error = JunctionError;
    fn try_from(alpha: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(alpha)
    }
}

impl From<VertexWeights> for Vec<f64> {
    fn from(w: VertexWeights) -> Self {
        w.alpha
    }
}

/// A coefficient `(t, x) -> value` on one edge.
pub type EdgeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Serializable description of a built-in per-edge coefficient pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeSpec {
    /// `b = drift`, `sigma = sigma`.
    Constant { drift: f64, sigma: f64 },
    /// `b = -rate * x`, `sigma = sigma`.
    LinearDecay { rate: f64, sigma: f64 },
    /// `b = drift`, `sigma = sigma * (1 + slope * t)`.
    TimeRamp { drift: f64, sigma: f64, slope: f64 },
}

impl EdgeSpec {
    #[inline]
    fn drift(&self, _t: f64, x: f64) -> f64 {
        match *self {
            EdgeSpec::Constant { drift, .. } | EdgeSpec::TimeRamp { drift, .. } => drift,
            EdgeSpec::LinearDecay { rate, .. } => -rate * x,
        }
    }

    #[inline]
    fn diffusion(&self, t: f64, _x: f64) -> f64 {
        match *self {
            EdgeSpec::Constant { sigma, .. } | EdgeSpec::LinearDecay { sigma, .. } => sigma,
            EdgeSpec::TimeRamp { sigma, slope, .. } => sigma * (1.0 + slope * t),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EdgeSpec::Constant { .. } => "constant",
            EdgeSpec::LinearDecay { .. } => "linear_decay",
            EdgeSpec::TimeRamp { .. } => "time_ramp",
        }
    }
}

/// Declared constants of the coefficient assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldBounds {
    /// Uniform ellipticity floor `c`: `sigma_i >= c`.
    pub ellipticity: f64,
    /// `|b|`: bounds `sup|b_i| + Lip_x(b_i)`.
    pub drift_bound: f64,
    /// `|sigma|`: bounds `sup|sigma_i| + Lip_x(sigma_i)`.
    pub diffusion_bound: f64,
}

// Built-ins are matched inline; only custom evaluators pay for dynamic calls.
#[derive(Clone)]
enum EdgeCoefficients {
    Builtin(EdgeSpec),
    Custom { drift: EdgeFn, diffusion: EdgeFn },
}

/// Per-edge drift and diffusion on `[0, T] x [0, inf)` plus declared bounds.
#[derive(Clone)]
pub struct CoefficientField {
    edges: Vec<EdgeCoefficients>,
    bounds: FieldBounds,
    horizon: f64,
    specs: Option<Vec<EdgeSpec>>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("edge_count", &self.edges.len())
            .field("bounds", &self.bounds)
            .field("horizon", &self.horizon)
            .field("specs", &self.specs)
            .finish()
    }
}

fn check_bounds(bounds: &FieldBounds, horizon: f64) -> Result<(), JunctionError> {
    let named = [
        ("ellipticity", bounds.ellipticity),
        ("drift_bound", bounds.drift_bound),
        ("diffusion_bound", bounds.diffusion_bound),
        ("horizon", horizon),
    ];
    for (name, v) in named {
        if !(v.is_finite() && v > 0.0) {
            return Err(JunctionError::InvalidField(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

impl CoefficientField {
    /// Field from opaque evaluators, one `(drift, diffusion)` pair per edge.
    pub fn from_fns(
        edges: Vec<(EdgeFn, EdgeFn)>,
        bounds: FieldBounds,
        horizon: f64,
    ) -> Result<Self, JunctionError> {
        if edges.is_empty() {
            return Err(JunctionError::NoEdges);
        }
        check_bounds(&bounds, horizon)?;
        Ok(Self {
            edges: edges
                .into_iter()
                .map(|(drift, diffusion)| EdgeCoefficients::Custom { drift, diffusion })
                .collect(),
            bounds,
            horizon,
            specs: None,
        })
    }

    /// Field assembled from the named built-ins.
    pub fn from_specs(
        specs: Vec<EdgeSpec>,
        bounds: FieldBounds,
        horizon: f64,
    ) -> Result<Self, JunctionError> {
        if specs.is_empty() {
            return Err(JunctionError::NoEdges);
        }
        check_bounds(&bounds, horizon)?;
        Ok(Self {
            edges: specs.iter().cloned().map(EdgeCoefficients::Builtin).collect(),
            bounds,
            horizon,
            specs: Some(specs),
        })
    }

    /// Same constant `(drift, sigma)` on every edge.
    pub fn constant(
        edge_count: usize,
        drift: f64,
        sigma: f64,
        bounds: FieldBounds,
        horizon: f64,
    ) -> Result<Self, JunctionError> {
        Self::from_specs(
            vec![EdgeSpec::Constant { drift, sigma }; edge_count],
            bounds,
            horizon,
        )
    }

    /// Standard Brownian motion on every edge with bounds `(1, 1, 1)`.
    pub fn brownian(edge_count: usize, horizon: f64) -> Result<Self, JunctionError> {
        let bounds = FieldBounds {
            ellipticity: 1.0,
            drift_bound: 1.0,
            diffusion_bound: 1.0,
        };
        Self::constant(edge_count, 0.0, 1.0, bounds, horizon)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn bounds(&self) -> FieldBounds {
        self.bounds
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Built-in descriptions, when the field was assembled from them.
    pub fn specs(&self) -> Option<&[EdgeSpec]> {
        self.specs.as_deref()
    }

    /// Same evaluators on a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self, JunctionError> {
        check_bounds(&self.bounds, horizon)?;
        let mut out = self.clone();
        out.horizon = horizon;
        Ok(out)
    }

    /// `b_i(t, x)` without domain checks. `edge` is 1-based.
    #[inline]
    pub fn drift(&self, edge: usize, t: f64, x: f64) -> f64 {
        match &self.edges[edge - 1] {
            EdgeCoefficients::Builtin(spec) => spec.drift(t, x),
            EdgeCoefficients::Custom { drift, .. } => drift(t, x),
        }
    }

    /// `sigma_i(t, x)` without domain checks. `edge` is 1-based.
    #[inline]
    pub fn diffusion(&self, edge: usize, t: f64, x: f64) -> f64 {
        match &self.edges[edge - 1] {
            EdgeCoefficients::Builtin(spec) => spec.diffusion(t, x),
            EdgeCoefficients::Custom { diffusion, .. } => diffusion(t, x),
        }
    }

    /// Checked evaluation of `(b_i(t, x), sigma_i(t, x))`.
    pub fn eval(&self, edge: usize, t: f64, x: f64) -> Result<(f64, f64), JunctionError> {
        if edge == 0 || edge > self.edges.len() {
            return Err(JunctionError::EdgeOutOfRange {
                edge,
                edge_count: self.edges.len(),
            });
        }
        // Grid times are built as k * h and may overshoot T by rounding.
        let slack = 1e-9 * self.horizon;
        if !(t.is_finite() && t >= 0.0 && t <= self.horizon + slack) {
            return Err(JunctionError::TimeOutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        if !(x.is_finite() && x >= 0.0) {
            return Err(JunctionError::InvalidPosition(x));
        }
        let b = self.drift(edge, t, x);
        if !b.is_finite() {
            return Err(JunctionError::NonFiniteCoefficient {
                which: "drift",
                edge,
                t,
                x,
            });
        }
        let s = self.diffusion(edge, t, x);
        if !s.is_finite() {
            return Err(JunctionError::NonFiniteCoefficient {
                which: "diffusion",
                edge,
                t,
                x,
            });
        }
        Ok((b, s))
    }
}
