//! Named experiments and their JSON summaries.
//!
//! Each experiment streams paths through the worker pool, keeps only the
//! per-path numbers it needs, and reduces them in path-index order, so the
//! summary depends on the config alone and never on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, EstimatorSection, ExperimentConfig, ItoSection, Thresholds};
use crate::engine::{parallel_map, write_ensemble, EngineError, OutputFormat, SimConfig, SimConfigEcho, Simulator};
use crate::junction::EdgeSpec;
use crate::ito::{ito_residual, zero_mean_test, ItoError, ResidualMode};
use crate::local_time::{
    jump_count_local_time, occupation_local_time, occupation_time_near_zero, phi_decomposition_local_time,
    LocalTimeError,
};
use crate::path::{modulus_of_continuity, PathError};
use crate::stats::{
    fit_convergence_rate, folded_normal_cdf, ks_statistic, mean_stat, paired_difference,
    reflected_bm_mean_local_time, reflected_bm_occupation, LogLogFit, MeanStat, StatsError,
};

pub const SUMMARY_FILE: &str = "summary.json";
pub const POINTS_CSV_HEADER: &str = "# junction-sim ladder v1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    LocalTime(#[from] LocalTimeError),
    #[error(transparent)]
    Ito(#[from] ItoError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("experiment `{experiment}` needs `{key}`")]
    Missing { experiment: String, key: String },
    #[error("experiment `{experiment}`: {message}")]
    Unsupported { experiment: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Limit a check's observed value is held to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    AtMost(f64),
    Between(f64, f64),
}

impl Limit {
    fn admits(&self, x: f64) -> bool {
        match *self {
            Limit::AtMost(hi) => x <= hi,
            Limit::Between(lo, hi) => lo <= x && x <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: f64,
    pub limit: Limit,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, observed: f64, limit: Limit) -> Self {
        Self {
            name: name.into(),
            observed,
            passed: observed.is_finite() && limit.admits(observed),
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderPoint {
    pub label: String,
    pub parameters: BTreeMap<String, f64>,
    pub stats: BTreeMap<String, MeanStat>,
}

impl LadderPoint {
    fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            parameters: BTreeMap::new(),
            stats: BTreeMap::new(),
        }
    }

    fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.insert(key.to_string(), value);
        self
    }

    fn stat(&mut self, key: impl Into<String>, s: MeanStat) {
        self.stats.insert(key.into(), s);
    }

    pub fn mean(&self, key: &str) -> Option<f64> {
        self.stats.get(key).map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: LogLogFit,
}

/// Everything an experiment reports. Worker counts and timings are left out
/// so reruns compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub experiment: String,
    pub code_version: String,
    pub n_paths: usize,
    pub config: SimConfigEcho,
    pub step: f64,
    pub steps: usize,
    pub estimators: EstimatorSection,
    pub ito: ItoSection,
    pub thresholds: Thresholds,
    pub points: Vec<LadderPoint>,
    pub fits: Vec<NamedFit>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

impl SummaryRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One row per (point, statistic).
    pub fn points_csv(&self) -> String {
        let mut out = format!("{POINTS_CSV_HEADER} experiment={}\nindex,label,statistic,mean,stderr,n\n", self.experiment);
        for (i, p) in self.points.iter().enumerate() {
            for (key, s) in &p.stats {
                let _ = writeln!(out, "{i},{},{key},{},{},{}", p.label, s.mean, s.stderr, s.n);
            }
        }
        out
    }

    /// Human-readable pass/fail listing.
    pub fn report(&self) -> String {
        let mut out = format!(
            "{}: {} ({} paths)\n",
            self.experiment,
            if self.passed { "PASS" } else { "FAIL" },
            self.n_paths
        );
        for c in &self.checks {
            let limit = match c.limit {
                Limit::AtMost(hi) => format!("<= {hi}"),
                Limit::Between(lo, hi) => format!("in [{lo}, {hi}]"),
            };
            let _ = writeln!(
                out,
                "  [{}] {} = {} ({limit})",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.observed
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "  warning: {w}");
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// `0` picks the default worker count.
    pub workers: usize,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            workers: cfg.experiment.workers.unwrap_or(0),
            out_dir: cfg.experiment.output_dir.clone(),
            format: OutputFormat::Csv,
        }
    }
}

/// Per-path work on `0..n`, in index order.
fn per_path<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> Result<T, ExperimentError> + Sync + Send,
{
    parallel_map(n, workers, |k| Ok(f(k as u64)))?.into_iter().collect()
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Successive pairs that fail to decrease strictly.
fn inversions(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] >= w[0]).count()
}

fn is_reflected_brownian(cfg: &SimConfig) -> bool {
    cfg.field
        .specs()
        .is_some_and(|s| s.iter().all(|e| *e == EdgeSpec::Constant { drift: 0.0, sigma: 1.0 }))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    base: SimConfig,
    base_sim: Simulator,
    workers: usize,
    n: usize,
    points: Vec<LadderPoint>,
    fits: Vec<NamedFit>,
    checks: Vec<Check>,
    warnings: Vec<String>,
    series: Vec<(String, String)>,
}

impl<'a> Context<'a> {
    fn name(&self) -> &str {
        &self.cfg.experiment.name
    }

    fn th(&self) -> &Thresholds {
        &self.cfg.thresholds
    }

    fn missing(&self, key: &str) -> ExperimentError {
        ExperimentError::Missing {
            experiment: self.name().to_string(),
            key: key.to_string(),
        }
    }

    fn require<'b, T>(&self, xs: &'b [T], key: &str) -> Result<&'b [T], ExperimentError> {
        if xs.is_empty() {
            Err(self.missing(key))
        } else {
            Ok(xs)
        }
    }

    fn simulator(&self, delta: f64, step: Option<f64>) -> Result<Simulator, ExperimentError> {
        let mut cfg = self.cfg.at_delta(&self.base, delta);
        if step.is_some() {
            cfg.step = step;
        }
        Ok(Simulator::new(cfg)?)
    }

    /// Closed-form references assume reflected Brownian motion started at 0,
    /// approached here by starting at `x0 = delta`.
    fn has_brownian_oracle(&mut self) -> bool {
        let ok = is_reflected_brownian(&self.base) && self.cfg.sim.x0_follows_delta;
        if !ok {
            self.warnings.push(
                "reference values need b = 0, sigma = 1 and x0_follows_delta; oracle checks skipped".into(),
            );
        }
        ok
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn fit(&mut self, name: &str, pts: &[(f64, f64)]) {
        match fit_convergence_rate(pts) {
            Ok(fit) => self.fits.push(NamedFit { name: name.to_string(), fit }),
            Err(e) => self.warnings.push(format!("fit `{name}` skipped: {e}")),
        }
    }

    fn edge_occupation(&mut self) -> Result<(), ExperimentError> {
        let ends = self.base_sim.map_paths(self.n, self.workers, |s, k| s.endpoint(k))?;
        let z_max = self.th().z;
        let alpha = self.base.alpha.clone();
        for edge in 1..=alpha.edge_count() {
            let hits: Vec<f64> = ends.iter().map(|e| (e.point.edge == edge) as u8 as f64).collect();
            let m = mean_stat(&hits)?;
            let a = alpha.weight(edge);
            let binomial_se = (a * (1.0 - a) / self.n as f64).sqrt();
            let z = (m.mean - a) / binomial_se;
            let mut p = LadderPoint::new(format!("edge {edge}")).param("edge", edge as f64).param("alpha", a);
            p.stat("frequency", m);
            self.points.push(p);
            self.check(Check::new(format!("edge_{edge}_abs_z"), z.abs(), Limit::AtMost(z_max)));
        }
        Ok(())
    }

    fn radial_law(&mut self) -> Result<(), ExperimentError> {
        if !is_reflected_brownian(&self.base) {
            return Err(ExperimentError::Unsupported {
                experiment: self.name().into(),
                message: "the folded-normal reference needs b = 0 and sigma = 1 on every edge".into(),
            });
        }
        let ends = self.base_sim.map_paths(self.n, self.workers, |s, k| s.endpoint(k))?;
        let y: Vec<f64> = ends.iter().map(|e| e.point.x).collect();
        let (x0, t) = (self.base.x0, self.base.horizon);
        let ks = ks_statistic(&y, |z| folded_normal_cdf(z, x0, t))?;
        let mut p = LadderPoint::new("y(T)").param("x0", x0).param("horizon", t);
        p.stat("position", mean_stat(&y)?);
        self.points.push(p);
        let critical = self.th().ks_critical / (ks.n as f64).sqrt();
        self.check(Check::new("ks_statistic", ks.statistic, Limit::AtMost(critical)));
        Ok(())
    }

    fn local_time_delta_ladder(&mut self) -> Result<(), ExperimentError> {
        let deltas = self.require(&self.cfg.estimators.deltas, "estimators.deltas")?.to_vec();
        let finest = *deltas.last().expect("non-empty");
        let step = self.base.step.unwrap_or(finest * finest / 8.0);
        let sims = deltas
            .iter()
            .map(|&d| self.simulator(d, Some(step)))
            .collect::<Result<Vec<_>, _>>()?;
        let rows = per_path(self.n, self.workers, |k| {
            sims.iter()
                .map(|s| Ok(s.endpoint(k)?.jumps as f64 * s.config().delta))
                .collect()
        })?;
        for (i, s) in sims.iter().enumerate() {
            let l = jump_count_local_time(&s.path(0)?)?;
            self.series.push((format!("local_time_delta_{i}.csv"), l.to_csv()));
        }
        let oracle = self.has_brownian_oracle().then(|| reflected_bm_mean_local_time(self.base.horizon));
        let mut gaps = Vec::new();
        for (i, &d) in deltas.iter().enumerate() {
            let m = mean_stat(&column(&rows, i))?;
            let mut p = LadderPoint::new(format!("delta {d}")).param("delta", d).param("step", step);
            p.stat("scaled_jump_count", m);
            self.points.push(p);
            if let Some(o) = oracle {
                gaps.push((d, (m.mean - o).abs()));
            }
        }
        if let Some(o) = oracle {
            let rel = gaps.last().expect("non-empty").1 / o;
            self.check(Check::new("finest_relative_gap", rel, Limit::AtMost(self.th().local_time_rel_gap)));
            let gap_values: Vec<f64> = gaps.iter().map(|g| g.1).collect();
            self.check(Check::new(
                "gap_inversions",
                inversions(&gap_values) as f64,
                Limit::AtMost(self.th().allowed_inversions as f64),
            ));
            self.fit("gap_vs_delta", &gaps);
        }
        Ok(())
    }

    fn estimator_consistency(&mut self) -> Result<(), ExperimentError> {
        let est = &self.cfg.estimators;
        let epsilons = self.require(&est.epsilons, "estimators.epsilons")?.to_vec();
        let deltas: Vec<f64> = match (est.delta_over_epsilon, est.deltas.len()) {
            (Some(r), _) => epsilons.iter().map(|e| e * r).collect(),
            (None, n) if n == epsilons.len() => est.deltas.clone(),
            _ => return Err(self.missing("estimators.delta_over_epsilon")),
        };
        let subsets = est.subsets.clone();
        let z_max = self.th().z;
        let mut gap_means = Vec::new();
        for (i, (&eps, &delta)) in epsilons.iter().zip(&deltas).enumerate() {
            let sim = self.simulator(delta, None)?;
            let (field, alpha) = (&sim.config().field, &sim.config().alpha);
            // Columns: jump count, full occupation, phi decomposition, then one per subset.
            let rows = per_path(self.n, self.workers, |k| {
                let p = sim.path(k)?;
                let mut row = vec![
                    jump_count_local_time(&p)?.final_value(),
                    occupation_local_time(&p, field, alpha, eps, None)?.final_value(),
                    phi_decomposition_local_time(&p, field, eps)?.final_value(),
                ];
                for s in &subsets {
                    row.push(occupation_local_time(&p, field, alpha, eps, Some(s))?.final_value());
                }
                Ok(row)
            })?;
            let (jump, occ, phi) = (column(&rows, 0), column(&rows, 1), column(&rows, 2));
            let gaps: Vec<f64> = occ.iter().zip(&jump).map(|(a, b)| (a - b).abs()).collect();
            let gap = mean_stat(&gaps)?;
            gap_means.push((eps, gap.mean));

            let mut p = LadderPoint::new(format!("epsilon {eps}"))
                .param("epsilon", eps)
                .param("delta", delta)
                .param("step", sim.step());
            p.stat("mean_abs_gap", gap);
            p.stat("jump_count", mean_stat(&jump)?);
            p.stat("occupation_full", mean_stat(&occ)?);
            p.stat("phi_decomposition", mean_stat(&phi)?);
            let phi_vs_jump = paired_difference(&phi, &jump)?;
            p.stat("phi_minus_jump", phi_vs_jump);
            for (j, s) in subsets.iter().enumerate() {
                let sub = column(&rows, 3 + j);
                let tag = subset_tag(s);
                p.stat(format!("occupation_subset:{tag}"), mean_stat(&sub)?);
                let diff = paired_difference(&sub, &occ)?;
                p.stat(format!("subset_minus_full:{tag}"), diff);
                self.check(Check::new(
                    format!("subset_{tag}_vs_full_abs_z_eps_{i}"),
                    diff.z_score(0.0).abs(),
                    Limit::AtMost(z_max),
                ));
            }
            self.points.push(p);

            let first = sim.path(0)?;
            let l = occupation_local_time(&first, field, alpha, eps, None)?;
            self.series.push((format!("occupation_eps_{i}.csv"), l.to_csv()));
        }
        let means: Vec<f64> = gap_means.iter().map(|g| g.1).collect();
        self.check(Check::new("gap_inversions", inversions(&means) as f64, Limit::AtMost(0.0)));
        self.check(Check::new(
            "finest_mean_abs_gap",
            *means.last().expect("non-empty"),
            Limit::AtMost(self.th().estimator_gap),
        ));
        self.fit("gap_vs_epsilon", &gap_means);
        Ok(())
    }

    fn ito_residual(&mut self) -> Result<(), ExperimentError> {
        let functions = self.cfg.test_functions()?;
        if functions.is_empty() {
            return Err(self.missing("ito.functions"));
        }
        let checkpoints = self.require(&self.cfg.estimators.checkpoints, "estimators.checkpoints")?.to_vec();
        let z_max = self.th().z;
        let (field, alpha) = (&self.base.field, &self.base.alpha);

        // Zero mean against the local time, at the base config.
        let rows = per_path(self.n, self.workers, |k| {
            let p = self.base_sim.path(k)?;
            let l = jump_count_local_time(&p)?;
            functions
                .iter()
                .map(|f| Ok(ito_residual(&p, f, field, alpha, &l, ResidualMode::AgainstLocalTime)?.at_checkpoints(&checkpoints)))
                .collect::<Result<Vec<_>, ExperimentError>>()
        })?;
        let first = self.base_sim.path(0)?;
        let first_l = jump_count_local_time(&first)?;
        for (j, f) in functions.iter().enumerate() {
            let values: Vec<Vec<f64>> = rows.iter().map(|r| r[j].clone()).collect();
            let report = zero_mean_test(&values, &checkpoints)?;
            let mut p = LadderPoint::new(format!("{} against_local_time", f.name()));
            for (c, cp) in report.checkpoints.iter().enumerate() {
                p.stat(
                    format!("M(t={})", cp.t),
                    MeanStat { mean: cp.mean, stderr: cp.stderr, n: report.n },
                );
                self.checks.push(Check::new(
                    format!("{}_abs_z_t_{}", f.name(), checkpoints[c]),
                    cp.z.abs(),
                    Limit::AtMost(z_max),
                ));
            }
            self.points.push(p);
            for mode in [ResidualMode::AgainstLocalTime, ResidualMode::AgainstStochasticIntegral] {
                let r = ito_residual(&first, f, field, alpha, &first_l, mode)?;
                self.series.push((format!("residual_{}_{mode}.csv", f.name()), r.to_csv()));
            }
        }

        // Sup residual against the stochastic integral under joint refinement.
        let ladder = self.cfg.ito.ladder.clone();
        if ladder.is_empty() {
            return Ok(());
        }
        let n_ladder = self.cfg.ito.ladder_paths.unwrap_or(self.n);
        let mut sups: Vec<Vec<f64>> = Vec::new();
        for (i, &(delta, step)) in ladder.iter().enumerate() {
            let sim = self.simulator(delta, Some(step))?;
            let (field, alpha) = (&sim.config().field, &sim.config().alpha);
            let rows = per_path(n_ladder, self.workers, |k| {
                let p = sim.path(k)?;
                let l = jump_count_local_time(&p)?;
                functions
                    .iter()
                    .map(|f| Ok(ito_residual(&p, f, field, alpha, &l, ResidualMode::AgainstStochasticIntegral)?.sup_abs()))
                    .collect::<Result<Vec<_>, ExperimentError>>()
            })?;
            let mut p = LadderPoint::new(format!("ladder {i}")).param("delta", delta).param("step", step);
            let mut level = Vec::new();
            for (j, f) in functions.iter().enumerate() {
                let m = mean_stat(&column(&rows, j))?;
                p.stat(format!("sup_abs_M:{}", f.name()), m);
                level.push(m.mean);
            }
            self.points.push(p);
            sups.push(level);
        }
        let (lo, hi) = (self.th().halving_low, self.th().halving_high);
        for (j, f) in functions.iter().enumerate() {
            for i in 1..sups.len() {
                let ratio = sups[i][j] / sups[i - 1][j];
                self.check(Check::new(
                    format!("{}_sup_ratio_{}_{}", f.name(), i - 1, i),
                    ratio,
                    Limit::Between(lo, hi),
                ));
            }
            let pts: Vec<(f64, f64)> = ladder.iter().zip(&sups).map(|(l, s)| (l.0, s[j])).collect();
            self.fit(&format!("sup_abs_M_vs_delta:{}", f.name()), &pts);
        }
        Ok(())
    }

    /// `E[sup x^2] / (1 + x0^2 + delta^2)` per delta and
    /// `E[omega(theta)^2] / (delta^2 + theta ln(2T / theta))` per (delta, theta).
    fn modulus_scaling(&mut self) -> Result<(), ExperimentError> {
        let deltas = self.require(&self.cfg.estimators.deltas, "estimators.deltas")?.to_vec();
        let thetas = self.require(&self.cfg.estimators.thetas, "estimators.thetas")?.to_vec();
        let horizon = self.base.horizon;
        let mut sup_ratios = Vec::new();
        let mut omega_ratios = Vec::new();
        let mut finest_omega = Vec::new();
        for &d in &deltas {
            let sim = self.simulator(d, None)?;
            let x0 = sim.config().x0;
            let rows = per_path(self.n, self.workers, |k| {
                let p = sim.path(k)?;
                let sup = p.positions().iter().fold(0.0f64, |m, &x| m.max(x));
                let mut row = vec![sup * sup];
                for &th in &thetas {
                    row.push(modulus_of_continuity(&p, th)?.powi(2));
                }
                Ok(row)
            })?;
            let sup2 = mean_stat(&column(&rows, 0))?;
            let mut p = LadderPoint::new(format!("delta {d}")).param("delta", d).param("step", sim.step());
            let ratio = sup2.mean / (1.0 + x0 * x0 + d * d);
            p.stat("sup_x_squared", sup2);
            sup_ratios.push(ratio);
            for (j, &th) in thetas.iter().enumerate() {
                let w2 = mean_stat(&column(&rows, j + 1))?;
                p.stat(format!("omega_squared(theta={th})"), w2);
                omega_ratios.push(w2.mean / (d * d + th * (2.0 * horizon / th).ln()));
                if d == *deltas.last().expect("non-empty") {
                    finest_omega.push((th, w2.mean));
                }
            }
            self.points.push(p);
        }
        self.bound_checks("sup_x_squared_ratio", &sup_ratios);
        self.bound_checks("omega_squared_ratio", &omega_ratios);
        self.fit("omega_squared_vs_theta", &finest_omega);
        Ok(())
    }

    /// Ratios beyond the first must stay within `bound_factor` times the first.
    fn bound_checks(&mut self, name: &str, ratios: &[f64]) {
        let c = ratios[0];
        let limit = self.th().bound_factor * c;
        let worst = ratios[1..].iter().fold(f64::NEG_INFINITY, |m, &r| m.max(r));
        if ratios.len() > 1 {
            self.check(Check::new(format!("{name}_max_over_finer_points"), worst, Limit::AtMost(limit)));
        }
    }

    fn exp_moment(&mut self) -> Result<(), ExperimentError> {
        let deltas = self.require(&self.cfg.estimators.deltas, "estimators.deltas")?.to_vec();
        let mut ratios = Vec::new();
        for &d in &deltas {
            let sim = self.simulator(d, None)?;
            let vals = sim.map_paths(self.n, self.workers, |s, k| Ok((2.0 * s.endpoint(k)?.point.x).exp()))?;
            let m = mean_stat(&vals)?;
            ratios.push(m.mean / (2.0 * d).exp());
            let mut p = LadderPoint::new(format!("delta {d}")).param("delta", d).param("step", sim.step());
            p.stat("exp_2y", m);
            self.points.push(p);
        }
        self.bound_checks("exp_moment_ratio", &ratios);
        Ok(())
    }

    fn vertex_occupation(&mut self) -> Result<(), ExperimentError> {
        let epsilons = self.require(&self.cfg.estimators.epsilons, "estimators.epsilons")?.to_vec();
        let rows = per_path(self.n, self.workers, |k| {
            let p = self.base_sim.path(k)?;
            Ok(epsilons.iter().map(|&e| occupation_time_near_zero(&p, e)).collect())
        })?;
        let oracle = self.has_brownian_oracle();
        let mut means = Vec::new();
        for (i, &eps) in epsilons.iter().enumerate() {
            let m = mean_stat(&column(&rows, i))?;
            means.push(m.mean);
            let mut p = LadderPoint::new(format!("epsilon {eps}")).param("epsilon", eps);
            if oracle {
                p = p.param("reference", reflected_bm_occupation(eps, self.base.horizon));
            }
            p.stat("occupation_time", m);
            self.points.push(p);
        }
        self.check(Check::new("occupation_inversions", inversions(&means) as f64, Limit::AtMost(0.0)));
        if oracle {
            let eps = *epsilons.last().expect("non-empty");
            let reference = reflected_bm_occupation(eps, self.base.horizon);
            let rel = (means.last().expect("non-empty") - reference).abs() / reference;
            self.check(Check::new("finest_relative_error", rel, Limit::AtMost(self.th().occupation_rel)));
        }
        let pts: Vec<(f64, f64)> = epsilons.iter().copied().zip(means).collect();
        self.fit("occupation_vs_epsilon", &pts);
        Ok(())
    }
}

fn subset_tag(s: &[usize]) -> String {
    s.iter().map(usize::to_string).collect::<Vec<_>>().join("+")
}

/// Runs the experiment named in `cfg`, writing its artifacts when an output
/// directory is set.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SummaryRecord, ExperimentError> {
    cfg.validate()?;
    let base = cfg.sim_config()?;
    let base_sim = Simulator::new(base.clone())?;
    let mut ctx = Context {
        cfg,
        base: base.clone(),
        warnings: base_sim.warnings().to_vec(),
        base_sim,
        workers: opts.workers,
        n: cfg.experiment.n_paths,
        points: Vec::new(),
        fits: Vec::new(),
        checks: Vec::new(),
        series: Vec::new(),
    };
    match cfg.experiment.name.as_str() {
        "edge_occupation" => ctx.edge_occupation()?,
        "radial_law" => ctx.radial_law()?,
        "local_time_delta_ladder" => ctx.local_time_delta_ladder()?,
        "estimator_consistency" => ctx.estimator_consistency()?,
        "ito_residual" => ctx.ito_residual()?,
        "modulus_scaling" => ctx.modulus_scaling()?,
        "exp_moment" => ctx.exp_moment()?,
        "vertex_occupation" => ctx.vertex_occupation()?,
        other => {
            return Err(ExperimentError::Unsupported {
                experiment: other.into(),
                message: "unknown experiment".into(),
            })
        }
    }
    let summary = SummaryRecord {
        experiment: cfg.experiment.name.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        n_paths: ctx.n,
        config: base.echo(),
        step: ctx.base_sim.step(),
        steps: ctx.base_sim.steps(),
        estimators: cfg.estimators.clone(),
        ito: cfg.ito.clone(),
        thresholds: cfg.thresholds.clone(),
        passed: ctx.checks.iter().all(|c| c.passed),
        points: ctx.points,
        fits: ctx.fits,
        checks: ctx.checks,
        warnings: ctx.warnings,
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut files = vec![
            (SUMMARY_FILE.to_string(), summary.to_json()),
            ("points.csv".to_string(), summary.points_csv()),
        ];
        files.extend(ctx.series);
        for (name, text) in files {
            let target = dir.join(name);
            fs::write(&target, text).map_err(io_err(&target))?;
        }
        if cfg.experiment.write_paths {
            let paths = ctx.base_sim.batch(ctx.n, opts.workers)?;
            write_ensemble(&dir.join("paths"), &ctx.base_sim, &paths, opts.format)?;
        }
    }
    Ok(summary)
}
