//! Sample statistics, log-log fits, Kolmogorov-Smirnov and the closed-form
//! reference quantities of reflected Brownian motion.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("fit inputs must be positive and finite: ({0}, {1})")]
    NonPositive(f64, f64),
    #[error("samples must be finite")]
    NonFinite,
    #[error("paired samples differ in length: {0} vs {1}")]
    Unpaired(usize, usize),
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStat {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanStat {
    /// `(mean - target) / stderr`; infinite when the error is zero and the
    /// mean misses the target, zero when both vanish.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = self.mean - target;
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap == 0.0 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }
}

/// Mean and standard error (`sd / sqrt(n)` with the `n - 1` variance).
pub fn mean_stat(xs: &[f64]) -> Result<MeanStat, StatsError> {
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(MeanStat {
        mean,
        stderr: (var / n as f64).sqrt(),
        n,
    })
}

/// Mean of `a_k - b_k` with the standard error of the paired difference.
pub fn paired_difference(a: &[f64], b: &[f64]) -> Result<MeanStat, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Unpaired(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_stat(&d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of `ln error` on `ln scale`.
pub fn fit_convergence_rate(points: &[(f64, f64)]) -> Result<LogLogFit, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::TooFew {
            need: 2,
            got: points.len(),
        });
    }
    for &(s, e) in points {
        if !(s > 0.0 && e > 0.0 && s.is_finite() && e.is_finite()) {
            return Err(StatsError::NonPositive(s, e));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

pub const KS_MIN_SAMPLES: usize = 100;
/// Asymptotic 1% critical value of `sqrt(n) D`.
pub const KS_CRITICAL_1PCT: f64 = 1.63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub n: usize,
    pub passed: bool,
}

/// One-sample Kolmogorov-Smirnov statistic against `cdf`, judged at the
/// asymptotic 1% level `1.63 / sqrt(n)`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult, StatsError> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(StatsError::TooFew {
            need: KS_MIN_SAMPLES,
            got: n,
        });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let critical = KS_CRITICAL_1PCT / nf.sqrt();
    Ok(KsResult {
        statistic: d,
        critical,
        n,
        passed: d <= critical,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// CDF of `|x0 + W(t)|`, the reflected Brownian motion at time `t`.
pub fn folded_normal_cdf(z: f64, x0: f64, t: f64) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    let s = t.sqrt();
    (normal_cdf((z - x0) / s) + normal_cdf((z + x0) / s) - 1.0).clamp(0.0, 1.0)
}

/// Mean local time at 0 by time `t` of reflected Brownian motion from 0:
/// `sqrt(2 t / pi)`.
pub fn reflected_bm_mean_local_time(t: f64) -> f64 {
    (2.0 * t / std::f64::consts::PI).sqrt()
}

/// Expected time `|W|` (started at 0) spends in `[0, eps]` up to `t`:
/// `int_0^t (2 Phi(eps / sqrt(s)) - 1) ds`, by Simpson's rule after the
/// substitution `s = u^2`, which removes the singular slope at `s = 0`.
pub fn reflected_bm_occupation(eps: f64, t: f64) -> f64 {
    let panels = 4000;
    let top = t.sqrt();
    let g = |u: f64| {
        if u == 0.0 {
            0.0
        } else {
            2.0 * u * (2.0 * normal_cdf(eps / u) - 1.0)
        }
    };
    let w = top / panels as f64;
    let mut acc = g(0.0) + g(top);
    for k in 1..panels {
        acc += g(k as f64 * w) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * w / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::rng::{normal_quantile, StreamId};
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn mean_and_stderr() {
        let m = mean_stat(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert_relative_eq!(m.stderr, (5.0f64 / 3.0 / 4.0).sqrt(), epsilon = 1e-15);
        assert!(mean_stat(&[1.0]).is_err());
        let flat = mean_stat(&[1.0; 10]).unwrap();
        assert_eq!(flat.z_score(1.0), 0.0);
        assert_eq!(flat.z_score(0.0), f64::INFINITY);
    }

    #[test]
    fn paired_difference_cancels_common_noise() {
        let a = [1.0, 5.0, 9.0];
        let b = [0.9, 4.9, 8.9];
        let d = paired_difference(&a, &b).unwrap();
        assert_relative_eq!(d.mean, 0.1, epsilon = 1e-12);
        assert!(d.stderr < 1e-12);
        assert!(paired_difference(&a, &b[..2]).is_err());
    }

    #[test]
    fn fit_examples() {
        let f = fit_convergence_rate(&[(0.1, 0.1), (0.01, 0.01)]).unwrap();
        assert_relative_eq!(f.slope, 1.0, epsilon = 1e-12);
        let f = fit_convergence_rate(&[(0.1, 0.01), (0.01, 0.0001)]).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        let f = fit_convergence_rate(&[(0.1, 5.0), (0.01, 5.0)]).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(fit_convergence_rate(&[(0.1, 1.0)]).is_err());
        assert!(fit_convergence_rate(&[(0.1, 1.0), (0.0, 1.0)]).is_err());
        let f = fit_convergence_rate(&[(1.0, 2.0), (2.0, 4.0), (4.0, 8.0)]).unwrap();
        assert_relative_eq!(f.r_squared, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn ks_examples() {
        // Seeded draws from the folded normal itself.
        let mut s = StreamId::new(2024, 0).noise();
        let samples: Vec<f64> = (0..2000).map(|_| (0.3 + s.next_step().normal).abs()).collect();
        let r = ks_statistic(&samples, |z| folded_normal_cdf(z, 0.3, 1.0)).unwrap();
        assert!(r.passed, "{r:?}");
        assert_relative_eq!(r.critical, 1.63 / 2000f64.sqrt());

        let zeros = vec![0.0; 500];
        let r = ks_statistic(&zeros, |z| normal_cdf(z - 10.0)).unwrap();
        assert!(r.statistic > 0.99);
        assert!(!r.passed);

        assert!(matches!(ks_statistic(&[0.0; 99], normal_cdf), Err(StatsError::TooFew { .. })));
    }

    #[test]
    fn normal_cdf_matches_statrs() {
        let n = Normal::standard();
        for &x in &[-8.0, -1.3, 0.0, 0.4, 2.5, 7.0] {
            assert_relative_eq!(normal_cdf(x), n.cdf(x), max_relative = 1e-13);
        }
        assert_relative_eq!(normal_cdf(normal_quantile(0.3)), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn folded_normal_limits() {
        assert_eq!(folded_normal_cdf(-1.0, 0.2, 1.0), 0.0);
        assert_eq!(folded_normal_cdf(0.0, 0.2, 1.0), 0.0);
        assert_relative_eq!(folded_normal_cdf(40.0, 0.2, 1.0), 1.0);
        // x0 = 0 is the half-normal: F(z) = 2 Phi(z) - 1.
        assert_relative_eq!(folded_normal_cdf(1.0, 0.0, 1.0), 2.0 * normal_cdf(1.0) - 1.0);
    }

    #[test]
    fn reflected_bm_references() {
        assert_relative_eq!(reflected_bm_mean_local_time(1.0), 0.797_884_560_802_865_4, epsilon = 1e-15);
        let occ = reflected_bm_occupation(0.05, 1.0);
        // Leading small-eps term 2 eps sqrt(2/pi) = 0.0798; the next
        // correction is of order eps^2.
        assert!((occ - 0.0798).abs() < 0.003, "{occ}");
        // Saturates at t when eps is huge.
        assert_relative_eq!(reflected_bm_occupation(1e3, 1.0), 1.0, epsilon = 1e-9);
        // Exact value of int_0^1 (2 Phi(eps/sqrt(s)) - 1) ds by a fine
        // midpoint rule on the original variable.
        let n = 2_000_000;
        let direct: f64 = (0..n)
            .map(|k| {
                let s = (k as f64 + 0.5) / n as f64;
                2.0 * normal_cdf(0.05 / s.sqrt()) - 1.0
            })
            .sum::<f64>()
            / n as f64;
        assert_relative_eq!(occ, direct, max_relative = 1e-6);
    }
}
