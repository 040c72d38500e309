//! Sampled checks of the coefficient assumptions.
//!
//! A finite sample can only refute the assumptions, never prove them, and the
//! report says so in its `note`.

use serde::{Deserialize, Serialize};

use crate::junction::{CoefficientField, JunctionError, VertexWeights, SIMPLEX_TOLERANCE};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge: Option<usize>,
    pub observed: f64,
    /// Declared limit the observation is compared against.
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub subject: String,
    pub items: Vec<CheckItem>,
    pub passed: bool,
    pub note: String,
}

impl ValidationReport {
    pub(crate) fn new(subject: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            items: Vec::new(),
            passed: true,
            note: note.into(),
        }
    }

    pub(crate) fn push(&mut self, name: &str, edge: Option<usize>, observed: f64, limit: f64, passed: bool) {
        self.passed &= passed;
        self.items.push(CheckItem {
            name: name.to_string(),
            edge,
            observed,
            limit,
            passed,
        });
    }

    /// Items that failed.
    pub fn failures(&self) -> impl Iterator<Item = &CheckItem> {
        self.items.iter().filter(|i| !i.passed)
    }

    pub fn find(&self, name: &str, edge: Option<usize>) -> Option<&CheckItem> {
        self.items.iter().find(|i| i.name == name && i.edge == edge)
    }
}

/// Sample points on `[0, T] x [0, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub t_points: usize,
    pub x_points: usize,
    pub x_max: f64,
}

impl SamplingGrid {
    pub const DEFAULT_POINTS: usize = 64;

    /// Default 64 x 64 grid reaching `x0 + 6 |sigma| sqrt(T)`.
    pub fn for_start(field: &CoefficientField, x0: f64) -> Self {
        let x_max = x0 + 6.0 * field.bounds().diffusion_bound * field.horizon().sqrt();
        Self {
            t_points: Self::DEFAULT_POINTS,
            x_points: Self::DEFAULT_POINTS,
            x_max,
        }
    }

    fn times(&self, horizon: f64) -> Vec<f64> {
        linspace(0.0, horizon, self.t_points)
    }

    fn positions(&self) -> Vec<f64> {
        linspace(0.0, self.x_max, self.x_points)
    }
}

pub(crate) fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[derive(Default)]
struct Extremes {
    min: f64,
    sup_abs: f64,
    lipschitz: f64,
}

fn scan(
    times: &[f64],
    xs: &[f64],
    edge: usize,
    which: &'static str,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Extremes, JunctionError> {
    let mut ext = Extremes {
        min: f64::INFINITY,
        ..Default::default()
    };
    for &t in times {
        let mut prev: Option<(f64, f64)> = None;
        for &x in xs {
            let v = f(t, x);
            if !v.is_finite() {
                return Err(JunctionError::NonFiniteCoefficient { which, edge, t, x });
            }
            ext.min = ext.min.min(v);
            ext.sup_abs = ext.sup_abs.max(v.abs());
            if let Some((px, pv)) = prev {
                ext.lipschitz = ext.lipschitz.max((v - pv).abs() / (x - px));
            }
            prev = Some((x, v));
        }
    }
    Ok(ext)
}

/// Checks ellipticity, boundedness and spatial Lipschitz constants of every
/// edge on the sample grid, plus the vertex weights.
///
/// For drift and diffusion the report carries the sup, the Lipschitz quotient
/// and their sum; the declared bound must dominate the sum.
pub fn validate_assumption_h(
    field: &CoefficientField,
    alpha: &VertexWeights,
    grid: &SamplingGrid,
) -> Result<ValidationReport, JunctionError> {
    let mut report = ValidationReport::new(
        "coefficient assumptions",
        "sampled on a finite grid: a pass is necessary, not sufficient",
    );
    let bounds = field.bounds();
    let times = grid.times(field.horizon());
    let xs = grid.positions();

    report.push(
        "edge_count_match",
        None,
        field.edge_count() as f64,
        alpha.edge_count() as f64,
        field.edge_count() == alpha.edge_count(),
    );

    for edge in 1..=field.edge_count() {
        let b = scan(&times, &xs, edge, "drift", |t, x| field.drift(edge, t, x))?;
        let s = scan(&times, &xs, edge, "diffusion", |t, x| field.diffusion(edge, t, x))?;

        report.push("ellipticity", Some(edge), s.min, bounds.ellipticity, s.min >= bounds.ellipticity);

        let db = bounds.drift_bound;
        report.push("drift_sup", Some(edge), b.sup_abs, db, b.sup_abs <= db);
        report.push("drift_lipschitz", Some(edge), b.lipschitz, db, b.lipschitz <= db);
        let total = b.sup_abs + b.lipschitz;
        report.push("drift_total", Some(edge), total, db, total <= db);

        let ds = bounds.diffusion_bound;
        report.push("diffusion_sup", Some(edge), s.sup_abs, ds, s.sup_abs <= ds);
        report.push("diffusion_lipschitz", Some(edge), s.lipschitz, ds, s.lipschitz <= ds);
        let total = s.sup_abs + s.lipschitz;
        report.push("diffusion_total", Some(edge), total, ds, total <= ds);
    }

    let sum: f64 = alpha.as_slice().iter().sum();
    let positive = alpha.as_slice().iter().all(|&a| a > 0.0);
    report.push(
        "alpha_simplex",
        None,
        sum,
        1.0,
        positive && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE,
    );
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::junction::{EdgeFn, FieldBounds};
    use std::sync::Arc;

    fn bounds(c: f64, b: f64, s: f64) -> FieldBounds {
        FieldBounds {
            ellipticity: c,
            drift_bound: b,
            diffusion_bound: s,
        }
    }

    #[test]
    fn brownian_field_passes() {
        let field = CoefficientField::constant(2, 0.0, 1.0, bounds(0.5, 1.0, 1.0), 1.0).unwrap();
        let alpha = VertexWeights::new(vec![0.5, 0.5]).unwrap();
        let grid = SamplingGrid::for_start(&field, 1.0);
        assert_eq!(grid.x_max, 7.0);
        let report = validate_assumption_h(&field, &alpha, &grid).unwrap();
        assert!(report.passed, "{report:?}");
        assert!(report.note.contains("necessary"));
    }

    #[test]
    fn weak_diffusion_fails_ellipticity_on_that_edge() {
        let zero: EdgeFn = Arc::new(|_, _| 0.0);
        let weak: EdgeFn = Arc::new(|_, _| 0.1);
        let one: EdgeFn = Arc::new(|_, _| 1.0);
        let field = CoefficientField::from_fns(
            vec![(zero.clone(), weak), (zero, one)],
            bounds(0.5, 1.0, 1.0),
            1.0,
        )
        .unwrap();
        let alpha = VertexWeights::uniform(2).unwrap();
        let report = validate_assumption_h(&field, &alpha, &SamplingGrid::for_start(&field, 1.0)).unwrap();
        assert!(!report.passed);
        assert!(!report.find("ellipticity", Some(1)).unwrap().passed);
        assert!(report.find("ellipticity", Some(2)).unwrap().passed);
    }

    #[test]
    fn quadratic_drift_fails_bound() {
        let sq: EdgeFn = Arc::new(|_, x| x * x);
        let one: EdgeFn = Arc::new(|_, _| 1.0);
        let field = CoefficientField::from_fns(vec![(sq, one)], bounds(0.5, 5.0, 1.0), 1.0).unwrap();
        let alpha = VertexWeights::new(vec![1.0]).unwrap();
        let grid = SamplingGrid {
            t_points: 64,
            x_points: 64,
            x_max: 10.0,
        };
        let report = validate_assumption_h(&field, &alpha, &grid).unwrap();
        let sup = report.find("drift_sup", Some(1)).unwrap();
        assert_eq!(sup.observed, 100.0);
        assert!(!sup.passed);
        assert!(report.find("ellipticity", Some(1)).unwrap().passed);
    }

    #[test]
    fn lipschitz_quotient_is_sampled() {
        let lin: EdgeFn = Arc::new(|_, x| -0.5 * x);
        let one: EdgeFn = Arc::new(|_, _| 1.0);
        let field = CoefficientField::from_fns(vec![(lin, one)], bounds(0.5, 2.0, 1.0), 1.0).unwrap();
        let alpha = VertexWeights::new(vec![1.0]).unwrap();
        let grid = SamplingGrid {
            t_points: 4,
            x_points: 11,
            x_max: 2.0,
        };
        let report = validate_assumption_h(&field, &alpha, &grid).unwrap();
        let lip = report.find("drift_lipschitz", Some(1)).unwrap();
        assert!((lip.observed - 0.5).abs() < 1e-12);
        let total = report.find("drift_total", Some(1)).unwrap();
        assert!((total.observed - 1.5).abs() < 1e-12);
        assert!(report.passed);
    }

    #[test]
    fn evaluator_failure_is_an_error() {
        let bad: EdgeFn = Arc::new(|_, x| if x > 3.0 { f64::INFINITY } else { 0.0 });
        let one: EdgeFn = Arc::new(|_, _| 1.0);
        let field = CoefficientField::from_fns(vec![(bad, one)], bounds(0.5, 1.0, 1.0), 1.0).unwrap();
        let alpha = VertexWeights::new(vec![1.0]).unwrap();
        let err = validate_assumption_h(&field, &alpha, &SamplingGrid::for_start(&field, 1.0)).unwrap_err();
        assert!(matches!(err, JunctionError::NonFiniteCoefficient { .. }));
    }

    #[test]
    fn report_serializes() {
        let field = CoefficientField::brownian(1, 1.0).unwrap();
        let alpha = VertexWeights::new(vec![1.0]).unwrap();
        let report = validate_assumption_h(&field, &alpha, &SamplingGrid::for_start(&field, 0.5)).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
