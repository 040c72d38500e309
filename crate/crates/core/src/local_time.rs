//! Estimators of the vertex local time along a sampled path.
//!
//! All time integrals are left-endpoint sums on the path grid.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::junction::{CoefficientField, VertexWeights};
use crate::path::PathRecord;

#[derive(Debug, Error, PartialEq)]
pub enum LocalTimeError {
    #[error("jump-count estimator needs delta > 0")]
    ZeroDelta,
    #[error("epsilon must be positive and finite, got {0}")]
    Epsilon(f64),
    #[error("edge subset is empty")]
    EmptySubset,
    #[error("edge {edge} outside 1..={edge_count}")]
    EdgeOutOfRange { edge: usize, edge_count: usize },
    #[error("path carries no noise increments")]
    MissingNoise,
    #[error("path visits edge {edge} but the field has {edge_count} edges")]
    FieldMismatch { edge: usize, edge_count: usize },
    #[error("malformed local-time file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorTag {
    JumpCount,
    OccupationFull,
    OccupationSubset(Vec<usize>),
    PhiDecomposition,
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorTag::JumpCount => f.write_str("jump_count"),
            EstimatorTag::OccupationFull => f.write_str("occupation_full"),
            EstimatorTag::OccupationSubset(edges) => {
                let list: Vec<String> = edges.iter().map(usize::to_string).collect();
                write!(f, "occupation_subset:{}", list.join("+"))
            }
            EstimatorTag::PhiDecomposition => f.write_str("phi_decomposition"),
        }
    }
}

/// Nondecreasing estimate of `l(t)` on a path's grid, starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeSeries {
    time_grid: Vec<f64>,
    values: Vec<f64>,
    tag: EstimatorTag,
}

impl LocalTimeSeries {
    fn from_increments(p: &PathRecord, tag: EstimatorTag, mut inc: impl FnMut(usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        values.push(0.0);
        for k in 0..p.steps() {
            acc += inc(k);
            values.push(acc);
        }
        Self {
            time_grid: p.times().to_vec(),
            values,
            tag,
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> &EstimatorTag {
        &self.tag
    }

    pub fn final_value(&self) -> f64 {
        *self.values.last().expect("non-empty series")
    }

    /// `l(t_{k+1}) - l(t_k)`.
    pub fn increment(&self, k: usize) -> f64 {
        self.values[k + 1] - self.values[k]
    }

    pub fn is_monotone(&self) -> bool {
        self.values[0] == 0.0 && self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// CSV with a versioned header and columns `t,value,estimator_tag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# junction-sim local-time v1\nt,value,estimator_tag\n");
        let tag = self.tag.to_string();
        for (t, v) in self.time_grid.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v},{tag}\n"));
        }
        out
    }
}

/// `delta * N(t)`.
pub fn jump_count_local_time(p: &PathRecord) -> Result<LocalTimeSeries, LocalTimeError> {
    if !(p.delta() > 0.0) {
        return Err(LocalTimeError::ZeroDelta);
    }
    let delta = p.delta();
    let n = p.jump_counter();
    Ok(LocalTimeSeries {
        time_grid: p.times().to_vec(),
        values: n.iter().map(|&c| delta * c as f64).collect(),
        tag: EstimatorTag::JumpCount,
    })
}

fn check_epsilon(eps: f64) -> Result<(), LocalTimeError> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(LocalTimeError::Epsilon(eps))
    }
}

fn check_field(p: &PathRecord, field: &CoefficientField) -> Result<(), LocalTimeError> {
    let edge_count = field.edge_count();
    match p.edges().iter().find(|&&e| e > edge_count) {
        Some(&edge) => Err(LocalTimeError::FieldMismatch { edge, edge_count }),
        None => Ok(()),
    }
}

/// Occupation estimator
/// `(1 / (2 eps sum_{I} alpha)) sum_{j in I} int sigma_j(s, 0)^2 1{y <= eps, edge = j} ds`,
/// with `subset = None` meaning every edge.
pub fn occupation_local_time(
    p: &PathRecord,
    field: &CoefficientField,
    alpha: &VertexWeights,
    epsilon: f64,
    subset: Option<&[usize]>,
) -> Result<LocalTimeSeries, LocalTimeError> {
    check_epsilon(epsilon)?;
    check_field(p, field)?;
    let edge_count = alpha.edge_count();
    let mut member = vec![subset.is_none(); edge_count + 1];
    let (mass, tag) = match subset {
        None => (1.0, EstimatorTag::OccupationFull),
        Some([]) => return Err(LocalTimeError::EmptySubset),
        Some(edges) => {
            for &e in edges {
                if e == 0 || e > edge_count {
                    return Err(LocalTimeError::EdgeOutOfRange { edge: e, edge_count });
                }
                member[e] = true;
            }
            let mut sorted = edges.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            (alpha.subset_mass(&sorted), EstimatorTag::OccupationSubset(sorted))
        }
    };
    let scale = 1.0 / (2.0 * epsilon * mass);
    let (t, y, e) = (p.times(), p.positions(), p.edges());
    Ok(LocalTimeSeries::from_increments(p, tag, |k| {
        if y[k] <= epsilon && member[e[k]] {
            let s = field.diffusion(e[k], t[k], 0.0);
            scale * s * s * (t[k + 1] - t[k])
        } else {
            0.0
        }
    }))
}

/// Smoothed identity `phi_eps`: value, first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiEps {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// `y^2 / (2 eps)` below `eps`, `y - eps / 2` above. The second derivative
/// jumps at `eps`; the left value `1 / eps` is returned there.
pub fn phi_epsilon(y: f64, epsilon: f64) -> PhiEps {
    if y <= epsilon {
        PhiEps {
            value: y * y / (2.0 * epsilon),
            first: y / epsilon,
            second: 1.0 / epsilon,
        }
    } else {
        PhiEps {
            value: y - epsilon / 2.0,
            first: 1.0,
            second: 0.0,
        }
    }
}

/// Raw series `(y(t) - y0) - sum_k phi_eps'(y_k) (b_k h_k + sigma_k dW_k)`.
///
/// Away from the vertex `phi_eps' = 1` and the sum reproduces the Euler
/// increments, so only time spent within `eps` of the vertex and the jumps
/// contribute. The series is not monotone pathwise.
pub fn phi_decomposition_raw(p: &PathRecord, field: &CoefficientField, epsilon: f64) -> Result<Vec<f64>, LocalTimeError> {
    check_epsilon(epsilon)?;
    check_field(p, field)?;
    if p.steps() > 0 && !p.has_noise() {
        return Err(LocalTimeError::MissingNoise);
    }
    let (t, y, e, dw) = (p.times(), p.positions(), p.edges(), p.noise_increments());
    let mut out = Vec::with_capacity(p.len());
    out.push(0.0);
    let mut integral = 0.0;
    for k in 0..p.steps() {
        let h = t[k + 1] - t[k];
        let b = field.drift(e[k], t[k], y[k]);
        let s = field.diffusion(e[k], t[k], y[k]);
        integral += phi_epsilon(y[k], epsilon).first * (b * h + s * dw[k]);
        out.push(y[k + 1] - y[0] - integral);
    }
    Ok(out)
}

/// [`phi_decomposition_raw`] clamped by its running maximum (and at 0).
pub fn phi_decomposition_local_time(p: &PathRecord, field: &CoefficientField, epsilon: f64) -> Result<LocalTimeSeries, LocalTimeError> {
    let raw = phi_decomposition_raw(p, field, epsilon)?;
    let mut run = 0.0f64;
    let values = raw
        .into_iter()
        .map(|v| {
            run = run.max(v);
            run
        })
        .collect();
    Ok(LocalTimeSeries {
        time_grid: p.times().to_vec(),
        values,
        tag: EstimatorTag::PhiDecomposition,
    })
}

/// `int 1{y <= eps} ds` on the grid.
pub fn occupation_time_near_zero(p: &PathRecord, epsilon: f64) -> f64 {
    let (t, y) = (p.times(), p.positions());
    (0..p.steps())
        .filter(|&k| y[k] <= epsilon)
        .map(|k| t[k + 1] - t[k])
        .sum()
}

/// JSON summary of an estimator comparison at one ladder point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorGap {
    pub epsilon: f64,
    pub delta: f64,
    pub mean_abs_gap: f64,
    pub stderr: f64,
    pub n: usize,
}

impl EstimatorGap {
    /// Summarises `|a_k - b_k|` over paired final values.
    pub fn from_pairs(epsilon: f64, delta: f64, a: &[f64], b: &[f64]) -> Result<Self, crate::stats::StatsError> {
        let gaps: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
        if a.len() != b.len() {
            return Err(crate::stats::StatsError::Unpaired(a.len(), b.len()));
        }
        let m = crate::stats::mean_stat(&gaps)?;
        Ok(Self {
            epsilon,
            delta,
            mean_abs_gap: m.mean,
            stderr: m.stderr,
            n: m.n,
        })
    }
}
