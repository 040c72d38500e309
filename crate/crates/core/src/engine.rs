//! Euler simulation of the delta-jump process.
//!
//! On the current edge the position follows `x' = x + b h + sigma sqrt(h) xi`.
//! When the step reaches the vertex the process restarts at `delta` on an
//! edge drawn from the vertex weights, and the jump counter rises by one. The
//! jump lands on the grid point that ends the triggering step.
//!
//! Whether a step reached the vertex is decided by one of two rules:
//!
//! * `proposal`: the Euler proposal `x'` is `<= 0`;
//! * `bridge` (default): the Brownian bridge between `x` and `x'` dips to 0,
//!   i.e. `x' <= 0` or `u < exp(-2 x x' / (sigma^2 h))` with `u` the step's
//!   uniform. This removes the systematic overshoot of the proposal rule,
//!   which otherwise lowers `delta * N` by a fixed fraction of the local time.
//!
//! Paths draw from per-path counter streams (see [`crate::rng`]), so batches
//! are reproducible under any worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{write_pack, write_path_csv};
use crate::junction::{CoefficientField, EdgeSpec, FieldBounds, JunctionError, JunctionPoint, VertexWeights};
use crate::path::{PathError, PathRecord};
use crate::rng::StreamId;

/// Environment variable read for the default worker count.
pub const WORKERS_ENV: &str = "JUNCTION_WORKERS";

/// Exponent beyond which the bridge crossing probability is below every
/// uniform the stream can produce (`2^-53`).
const BRIDGE_EXPONENT_CUTOFF: f64 = 40.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Junction(#[from] JunctionError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("non-finite state on path {path} at step {step} (t = {t})")]
    NonFinite { path: u64, step: usize, t: f64 },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexRule {
    #[default]
    Bridge,
    Proposal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialEdge {
    Fixed(usize),
    #[default]
    DrawFromAlpha,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub field: CoefficientField,
    pub alpha: VertexWeights,
    pub x0: f64,
    pub initial_edge: InitialEdge,
    pub delta: f64,
    /// Requested step; `None` means `delta^2 / 8`.
    pub step: Option<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub vertex_rule: VertexRule,
    /// Accept steps above `delta^2 / 4` (with a warning) instead of failing.
    pub allow_coarse_step: bool,
}

impl SimConfig {
    /// Reflected Brownian setup: `b = 0`, `sigma = 1` on every edge.
    pub fn brownian(alpha: VertexWeights, x0: f64, delta: f64, horizon: f64, seed: u64) -> Result<Self, EngineError> {
        let field = CoefficientField::brownian(alpha.edge_count(), horizon)?;
        Ok(Self {
            field,
            alpha,
            x0,
            initial_edge: InitialEdge::DrawFromAlpha,
            delta,
            step: None,
            horizon,
            seed,
            vertex_rule: VertexRule::Bridge,
            allow_coarse_step: false,
        })
    }

    pub fn step_cap(&self) -> f64 {
        self.delta * self.delta / 4.0
    }

    pub fn requested_step(&self) -> f64 {
        self.step.unwrap_or(self.delta * self.delta / 8.0)
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..self.clone() }
    }

    /// Checks the config and returns the warnings it raises.
    pub fn validate(&self) -> Result<Vec<String>, EngineError> {
        let bad = |m: String| Err(EngineError::Config(m));
        if !(self.x0.is_finite() && self.x0 > 0.0) {
            return bad(format!("x0 must be positive, got {}", self.x0));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.horizon > self.field.horizon() * (1.0 + 1e-9) {
            return bad(format!(
                "horizon {} exceeds the coefficient field's horizon {}",
                self.horizon,
                self.field.horizon()
            ));
        }
        let h = self.requested_step();
        if !(h.is_finite() && h > 0.0) {
            return bad(format!("step must be positive, got {h}"));
        }
        if self.field.edge_count() != self.alpha.edge_count() {
            return bad(format!(
                "field has {} edges but alpha has {}",
                self.field.edge_count(),
                self.alpha.edge_count()
            ));
        }
        if let InitialEdge::Fixed(e) = self.initial_edge {
            self.alpha.junction().check_edge(e)?;
        }
        let mut warnings = Vec::new();
        if h > self.step_cap() {
            if !self.allow_coarse_step {
                return bad(format!(
                    "step {h} exceeds the cap delta^2/4 = {}; set allow_coarse_step to override",
                    self.step_cap()
                ));
            }
            warnings.push(format!("step {h} exceeds delta^2/4 = {}", self.step_cap()));
        }
        if self.delta > self.x0 {
            warnings.push(format!("delta {} exceeds x0 {}", self.delta, self.x0));
        }
        Ok(warnings)
    }

    pub fn echo(&self) -> SimConfigEcho {
        SimConfigEcho {
            field: FieldEcho {
                edge_count: self.field.edge_count(),
                bounds: self.field.bounds(),
                horizon: self.field.horizon(),
                specs: self.field.specs().map(<[EdgeSpec]>::to_vec),
            },
            alpha: self.alpha.as_slice().to_vec(),
            x0: self.x0,
            initial_edge: self.initial_edge,
            delta: self.delta,
            step_requested: self.step,
            horizon: self.horizon,
            seed: self.seed,
            vertex_rule: self.vertex_rule,
            allow_coarse_step: self.allow_coarse_step,
        }
    }
}

/// Coefficient field as recorded in manifests; `specs` is absent for fields
/// built from opaque evaluators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEcho {
    pub edge_count: usize,
    pub bounds: FieldBounds,
    pub horizon: f64,
    pub specs: Option<Vec<EdgeSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfigEcho {
    pub field: FieldEcho,
    pub alpha: Vec<f64>,
    pub x0: f64,
    pub initial_edge: InitialEdge,
    pub delta: f64,
    pub step_requested: Option<f64>,
    pub horizon: f64,
    pub seed: u64,
    pub vertex_rule: VertexRule,
    pub allow_coarse_step: bool,
}

/// Inverse-CDF sampler of the vertex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSampler {
    cumulative: Vec<f64>,
}

impl EdgeSampler {
    pub fn new(alpha: &VertexWeights) -> Self {
        let mut acc = 0.0;
        let cumulative = alpha
            .as_slice()
            .iter()
            .map(|a| {
                acc += a;
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Least 1-based edge `i` with `u < cumulative[i]`; the last edge absorbs
    /// rounding in the final prefix sum.
    #[inline]
    pub fn draw(&self, u: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c <= u);
        k.min(self.cumulative.len() - 1) + 1
    }
}

pub fn draw_edge(sampler: &EdgeSampler, u: f64) -> usize {
    sampler.draw(u)
}

/// One completed grid step, handed to path observers.
#[derive(Debug, Clone, Copy)]
struct Step {
    x: f64,
    edge: usize,
    dw: f64,
    jumped: bool,
    step_min: f64,
}

/// Final state of a path and its running maximum, without storing the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathEnd {
    pub point: JunctionPoint,
    pub jumps: u64,
    pub sup_position: f64,
}

/// A path together with the per-step minimum that decided each vertex hit:
/// the proposal under the proposal rule, the sampled bridge minimum under the
/// bridge rule. A step triggers a jump exactly when its minimum is `<= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedPath {
    pub path: PathRecord,
    pub step_minima: Vec<f64>,
}

/// A validated config with its grid resolved.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    steps: usize,
    h: f64,
    sqrt_h: f64,
    sampler: EdgeSampler,
    warnings: Vec<String>,
}

impl Simulator {
    /// Resolves the grid: `steps = ceil(T / h)` and the step is shrunk to
    /// `T / steps` so the grid ends exactly at `T`.
    pub fn new(cfg: SimConfig) -> Result<Self, EngineError> {
        let warnings = cfg.validate()?;
        let requested = cfg.requested_step();
        let steps = ((cfg.horizon / requested) * (1.0 - 1e-12)).ceil().max(1.0);
        if steps > usize::MAX as f64 / 64.0 {
            return Err(EngineError::Config(format!("{steps} steps is too many")));
        }
        let steps = steps as usize;
        let h = cfg.horizon / steps as f64;
        let sampler = EdgeSampler::new(&cfg.alpha);
        Ok(Self {
            cfg,
            steps,
            h,
            sqrt_h: h.sqrt(),
            sampler,
            warnings,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn sampler(&self) -> &EdgeSampler {
        &self.sampler
    }

    pub fn stream(&self, path: u64) -> StreamId {
        StreamId::new(self.cfg.seed, path)
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.cfg.horizon
        } else {
            k as f64 * self.h
        }
    }

    pub fn time_grid(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    fn drive<const TRACE: bool>(&self, path: u64, mut observe: impl FnMut(&Step)) -> Result<usize, EngineError> {
        let id = self.stream(path);
        let mut noise = id.noise();
        let mut edge_stream = id.edges();
        let first = edge_stream.next_uniform();
        let mut edge = match self.cfg.initial_edge {
            InitialEdge::Fixed(e) => e,
            InitialEdge::DrawFromAlpha => self.sampler.draw(first),
        };
        let start_edge = edge;
        let field = &self.cfg.field;
        let (h, sqrt_h, delta) = (self.h, self.sqrt_h, self.cfg.delta);
        let mut x = self.cfg.x0;

        for k in 0..self.steps {
            let t = k as f64 * h;
            let v = noise.next_step();
            let dw = sqrt_h * v.normal;
            let b = field.drift(edge, t, x);
            let s = field.diffusion(edge, t, x);
            let proposal = x + b * h + s * dw;
            if !proposal.is_finite() {
                return Err(EngineError::NonFinite { path, step: k, t });
            }
            let var = s * s * h;
            let hit = match self.cfg.vertex_rule {
                VertexRule::Proposal => proposal <= 0.0,
                VertexRule::Bridge => {
                    proposal <= 0.0 || {
                        let e = 2.0 * x * proposal / var;
                        e < BRIDGE_EXPONENT_CUTOFF && v.uniform < (-e).exp()
                    }
                }
            };
            let step_min = if !TRACE {
                0.0
            } else {
                match self.cfg.vertex_rule {
                    VertexRule::Proposal => proposal,
                    VertexRule::Bridge if var > 0.0 => {
                        let d = proposal - x;
                        0.5 * (x + proposal - (d * d - 2.0 * var * v.uniform.ln()).sqrt())
                    }
                    VertexRule::Bridge => x.min(proposal),
                }
            };
            if hit {
                x = delta;
                edge = self.sampler.draw(edge_stream.next_uniform());
            } else {
                x = proposal;
            }
            observe(&Step {
                x,
                edge,
                dw,
                jumped: hit,
                step_min,
            });
        }
        Ok(start_edge)
    }

    fn record<const TRACE: bool>(&self, path: u64) -> Result<(PathRecord, Vec<f64>), EngineError> {
        let n = self.steps + 1;
        let mut xs = Vec::with_capacity(n);
        let mut edges = Vec::with_capacity(n);
        let mut counter = Vec::with_capacity(n);
        let mut dws = Vec::with_capacity(self.steps);
        let mut minima = Vec::with_capacity(if TRACE { self.steps } else { 0 });
        xs.push(self.cfg.x0);
        edges.push(0);
        counter.push(0u64);
        let mut count = 0u64;
        let start = self.drive::<TRACE>(path, |s| {
            count += s.jumped as u64;
            xs.push(s.x);
            edges.push(s.edge);
            counter.push(count);
            dws.push(s.dw);
            if TRACE {
                minima.push(s.step_min);
            }
        })?;
        edges[0] = start;
        let record = PathRecord::from_parts_unchecked(self.time_grid(), xs, edges, counter, dws, self.cfg.delta);
        Ok((record, minima))
    }

    /// Full record of path `path` (stream `(seed, path)`).
    pub fn path(&self, path: u64) -> Result<PathRecord, EngineError> {
        Ok(self.record::<false>(path)?.0)
    }

    pub fn traced(&self, path: u64) -> Result<TracedPath, EngineError> {
        let (path, step_minima) = self.record::<true>(path)?;
        Ok(TracedPath { path, step_minima })
    }

    /// Final state of path `path` without storing the trajectory.
    pub fn endpoint(&self, path: u64) -> Result<PathEnd, EngineError> {
        let mut last = (self.cfg.x0, 0);
        let mut jumps = 0;
        let mut sup = self.cfg.x0;
        let start = self.drive::<false>(path, |s| {
            last = (s.x, s.edge);
            jumps += s.jumped as u64;
            sup = sup.max(s.x);
        })?;
        let edge = if self.steps == 0 { start } else { last.1 };
        Ok(PathEnd {
            point: JunctionPoint { x: last.0, edge },
            jumps,
            sup_position: sup,
        })
    }

    /// Runs `f` on path indices `0..n_paths` and returns results in index order.
    pub fn map_paths<T, F>(&self, n_paths: usize, workers: usize, f: F) -> Result<Vec<T>, EngineError>
    where
        T: Send,
        F: Fn(&Self, u64) -> Result<T, EngineError> + Sync + Send,
    {
        parallel_map(n_paths, workers, |k| f(self, k as u64))
    }

    pub fn batch(&self, n_paths: usize, workers: usize) -> Result<Vec<PathRecord>, EngineError> {
        self.map_paths(n_paths, workers, |sim, k| sim.path(k))
    }

    pub fn manifest(&self, first_path: u64, n_paths: usize, files: Vec<String>) -> Manifest {
        Manifest {
            format_version: 1,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.cfg.echo(),
            step: self.h,
            steps: self.steps,
            streams: (0..n_paths as u64).map(|k| self.stream(first_path + k)).collect(),
            files,
            warnings: self.warnings.clone(),
        }
    }
}

/// Worker count from [`WORKERS_ENV`], falling back to the machine's parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Index-ordered parallel map on a pool of `workers` threads (`0` picks
/// [`default_workers`]). Results depend only on the index, so the output is
/// identical for every worker count.
pub fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, EngineError>
where
    T: Send,
    F: Fn(usize) -> Result<T, EngineError> + Sync + Send,
{
    let workers = if workers == 0 { default_workers() } else { workers };
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| EngineError::Pool(e.to_string()))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

/// Path 0 of `cfg`.
pub fn simulate_delta_path(cfg: &SimConfig) -> Result<PathRecord, EngineError> {
    Simulator::new(cfg.clone())?.path(0)
}

pub fn simulate_batch(cfg: &SimConfig, n_paths: usize, workers: usize) -> Result<Vec<PathRecord>, EngineError> {
    if n_paths == 0 {
        return Err(EngineError::Config("n_paths must be at least 1".into()));
    }
    Simulator::new(cfg.clone())?.batch(n_paths, workers)
}

/// Simulators for each `delta` sharing `cfg`'s seed and a common step that
/// resolves the smallest `delta`.
pub fn coupled_simulators(cfg: &SimConfig, deltas: &[f64]) -> Result<Vec<Simulator>, EngineError> {
    if deltas.is_empty() {
        return Err(EngineError::Config("empty delta list".into()));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(EngineError::Config(format!("deltas must decrease strictly: {deltas:?}")));
    }
    let smallest = *deltas.last().expect("non-empty");
    let h = cfg.step.unwrap_or(smallest * smallest / 8.0);
    deltas
        .iter()
        .map(|&d| {
            Simulator::new(SimConfig {
                delta: d,
                step: Some(h),
                ..cfg.clone()
            })
        })
        .collect()
}

/// Path `path` at every `delta`, all driven by the same Gaussian increments
/// and edge uniforms.
pub fn simulate_coupled_refinement(cfg: &SimConfig, deltas: &[f64], path: u64) -> Result<Vec<PathRecord>, EngineError> {
    coupled_simulators(cfg, deltas)?.iter().map(|s| s.path(path)).collect()
}

/// Ensemble audit record written next to simulated paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub code_version: String,
    pub config: SimConfigEcho,
    pub step: f64,
    pub steps: usize,
    pub streams: Vec<StreamId>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EngineError + '_ {
    move |source| EngineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn path_io_err(path: &Path, e: PathError) -> EngineError {
    match e {
        PathError::Io(source) => EngineError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => EngineError::Path(other),
    }
}

/// Writes `paths` (indices `0..`) and `manifest.json` into `dir`: one
/// `path_NNNNN.csv` per path, or a single `paths.jsimpack`.
pub fn write_ensemble(dir: &Path, sim: &Simulator, paths: &[PathRecord], format: OutputFormat) -> Result<Manifest, EngineError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    match format {
        OutputFormat::Csv => {
            for (k, p) in paths.iter().enumerate() {
                let name = format!("path_{k:05}.csv");
                let target = dir.join(&name);
                let file = fs::File::create(&target).map_err(io_err(&target))?;
                write_path_csv(p, std::io::BufWriter::new(file)).map_err(|e| path_io_err(&target, e))?;
                files.push(name);
            }
        }
        OutputFormat::Binary => {
            let name = "paths.jsimpack".to_string();
            let target = dir.join(&name);
            let file = fs::File::create(&target).map_err(io_err(&target))?;
            write_pack(paths, std::io::BufWriter::new(file)).map_err(|e| path_io_err(&target, e))?;
            files.push(name);
        }
    }
    let manifest = sim.manifest(0, paths.len(), files);
    let target = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&target, json + "\n").map_err(io_err(&target))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::path_to_bytes;
    use crate::path::{validate_ddelta_membership, validate_ddelta_membership_with, MembershipTolerances};
    use proptest::prelude::*;

    fn bounds() -> FieldBounds {
        FieldBounds {
            ellipticity: 1.0,
            drift_bound: 1.0,
            diffusion_bound: 1.0,
        }
    }

    fn decay_config(delta: f64) -> SimConfig {
        SimConfig {
            field: CoefficientField::constant(2, -1.0, 0.0, bounds(), 1.0).unwrap(),
            alpha: VertexWeights::uniform(2).unwrap(),
            x0: 0.5,
            initial_edge: InitialEdge::Fixed(1),
            delta,
            step: Some(1e-4),
            horizon: 0.95,
            seed: 1,
            vertex_rule: VertexRule::Bridge,
            allow_coarse_step: false,
        }
    }

    fn bm(delta: f64, seed: u64) -> SimConfig {
        SimConfig::brownian(VertexWeights::new(vec![0.2, 0.3, 0.5]).unwrap(), 0.5, delta, 1.0, seed).unwrap()
    }

    #[test]
    fn draw_edge_examples() {
        let one = EdgeSampler::new(&VertexWeights::new(vec![1.0]).unwrap());
        assert_eq!(draw_edge(&one, 0.7), 1);
        let two = EdgeSampler::new(&VertexWeights::new(vec![0.5, 0.5]).unwrap());
        assert_eq!(draw_edge(&two, 0.25), 1);
        assert_eq!(draw_edge(&two, 0.5), 2);
        let three = EdgeSampler::new(&VertexWeights::new(vec![0.2, 0.3, 0.5]).unwrap());
        assert_eq!(draw_edge(&three, 0.6), 3);
        assert_eq!(draw_edge(&three, 0.0), 1);
        assert_eq!(draw_edge(&three, 1.0 - 1e-17), 3);
    }

    #[test]
    fn edge_frequencies_follow_alpha() {
        let alpha = VertexWeights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let sampler = EdgeSampler::new(&alpha);
        let mut stream = StreamId::new(5, 0).edges();
        let n = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sampler.draw(stream.next_uniform()) - 1] += 1;
        }
        for (i, &c) in counts.iter().enumerate() {
            let a = alpha.as_slice()[i];
            let se = (a * (1.0 - a) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - a).abs() < 3.0 * se, "edge {}: {c}", i + 1);
        }
    }

    #[test]
    fn deterministic_decay_hits_every_tenth() {
        // x(t) = 0.5 - t reaches 0 at t = 0.5, then restarts at 0.1 and
        // returns every 0.1.
        for rule in [VertexRule::Bridge, VertexRule::Proposal] {
            let cfg = SimConfig {
                vertex_rule: rule,
                ..decay_config(0.1)
            };
            let p = simulate_delta_path(&cfg).unwrap();
            assert_eq!(p.steps(), 9500);
            assert_eq!(p.final_count(), 5);
            let hits: Vec<f64> = (1..p.len())
                .filter(|&k| p.jump_counter()[k] > p.jump_counter()[k - 1])
                .map(|k| p.times()[k])
                .collect();
            for (hit, want) in hits.iter().zip([0.5, 0.6, 0.7, 0.8, 0.9]) {
                assert!((hit - want).abs() <= 2e-4, "hit at {hit}, want {want}");
            }
            assert!(validate_ddelta_membership(&p).passed);
        }
    }

    #[test]
    fn still_field_gives_constant_path() {
        let cfg = SimConfig {
            field: CoefficientField::constant(2, 0.0, 0.0, bounds(), 1.0).unwrap(),
            x0: 1.0,
            ..decay_config(0.1)
        };
        let p = simulate_delta_path(&cfg).unwrap();
        assert_eq!(p.final_count(), 0);
        assert!(p.positions().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn brownian_path_is_in_the_jump_space() {
        let cfg = SimConfig {
            x0: 0.05,
            ..bm(0.05, 3)
        };
        let sim = Simulator::new(cfg).unwrap();
        let p = sim.path(0).unwrap();
        assert!(p.positions().iter().all(|&x| x >= 0.0));
        assert!(p.final_count() > 0);
        let tol = MembershipTolerances::for_coefficients(0.05, 1.0, 0.0);
        let r = validate_ddelta_membership_with(&p, &tol);
        assert!(r.passed, "{:?}", r.violations);
        assert_eq!(r.detected_jumps() as u64, p.final_count());
    }

    #[test]
    fn step_cap_is_enforced() {
        let mut cfg = bm(0.1, 1);
        cfg.step = Some(0.003);
        assert!(matches!(Simulator::new(cfg.clone()), Err(EngineError::Config(_))));
        cfg.allow_coarse_step = true;
        let sim = Simulator::new(cfg).unwrap();
        assert_eq!(sim.warnings().len(), 1);
        let default = Simulator::new(bm(0.1, 1)).unwrap();
        assert!((default.step() - 0.00125).abs() < 1e-15);
        assert_eq!(default.steps(), 800);
    }

    #[test]
    fn config_errors() {
        let mut cfg = bm(0.1, 1);
        cfg.x0 = 0.0;
        assert!(Simulator::new(cfg).is_err());
        let mut cfg = bm(0.1, 1);
        cfg.initial_edge = InitialEdge::Fixed(4);
        assert!(Simulator::new(cfg).is_err());
        let mut cfg = bm(0.1, 1);
        cfg.alpha = VertexWeights::uniform(2).unwrap();
        assert!(Simulator::new(cfg).is_err());
        let mut cfg = bm(0.1, 1);
        cfg.step = Some(0.0);
        assert!(Simulator::new(cfg).is_err());
    }

    #[test]
    fn non_finite_state_is_reported() {
        use std::sync::Arc;
        let blow: crate::junction::EdgeFn = Arc::new(|t, _| if t > 0.2501 { f64::NAN } else { 0.0 });
        let one: crate::junction::EdgeFn = Arc::new(|_, _| 1.0);
        let field = CoefficientField::from_fns(vec![(blow, one)], bounds(), 1.0).unwrap();
        let cfg = SimConfig {
            field,
            alpha: VertexWeights::new(vec![1.0]).unwrap(),
            ..bm(0.1, 1)
        };
        let err = simulate_delta_path(&cfg).unwrap_err();
        assert!(matches!(err, EngineError::NonFinite { step: 201, .. }), "{err}");
    }

    #[test]
    fn batch_is_schedule_independent() {
        let cfg = bm(0.1, 9);
        let single = simulate_delta_path(&cfg).unwrap();
        let one = simulate_batch(&cfg, 1, 1).unwrap();
        assert_eq!(one[0], single);

        let serial = simulate_batch(&cfg, 4, 1).unwrap();
        let parallel = simulate_batch(&cfg, 4, 4).unwrap();
        let again = simulate_batch(&cfg, 4, 2).unwrap();
        let bytes = |v: &[PathRecord]| v.iter().flat_map(path_to_bytes).collect::<Vec<u8>>();
        assert_eq!(bytes(&serial), bytes(&parallel));
        assert_eq!(bytes(&serial), bytes(&again));
        assert_ne!(serial[0], serial[1]);
        assert!(simulate_batch(&cfg, 0, 1).is_err());
    }

    #[test]
    fn endpoint_matches_full_path() {
        let sim = Simulator::new(bm(0.05, 4)).unwrap();
        for k in 0..3 {
            let p = sim.path(k).unwrap();
            let e = sim.endpoint(k).unwrap();
            assert_eq!(e.point.x, p.final_point().x);
            assert_eq!(e.point.edge, p.final_point().edge);
            assert_eq!(e.jumps, p.final_count());
            assert_eq!(e.sup_position, p.positions().iter().copied().fold(0.0, f64::max));
        }
    }

    #[test]
    fn coupled_refinement_examples() {
        let cfg = decay_config(0.2);
        let single = simulate_coupled_refinement(&cfg, &[0.2], 0).unwrap();
        assert_eq!(single[0], simulate_delta_path(&cfg).unwrap());

        let pair = simulate_coupled_refinement(&cfg, &[0.2, 0.1], 0).unwrap();
        assert!(pair[1].final_count() >= pair[0].final_count());
        assert_eq!(pair[0].final_count(), 3);
        assert_eq!(pair[1].final_count(), 5);

        let cfg = bm(0.08, 2);
        let paths = simulate_coupled_refinement(&cfg, &[0.08, 0.02], 0).unwrap();
        assert_eq!(paths[0].times(), paths[1].times());
        assert_eq!(paths[0].noise_increments(), paths[1].noise_increments());
        let d = crate::path::uniform_distance(&paths[0], &paths[1]).unwrap();
        assert!(d.is_finite());

        assert!(simulate_coupled_refinement(&cfg, &[0.02, 0.08], 0).is_err());
    }

    #[test]
    fn manifest_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let sim = Simulator::new(bm(0.1, 3)).unwrap();
        let paths = sim.batch(2, 1).unwrap();
        let m = write_ensemble(dir.path(), &sim, &paths, OutputFormat::Csv).unwrap();
        assert_eq!(m.files, vec!["path_00000.csv", "path_00001.csv"]);
        assert_eq!(m.streams[1], StreamId::new(3, 1));
        let text = fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let back: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        let read = crate::io::read_path_csv(std::io::BufReader::new(fs::File::open(dir.path().join("path_00001.csv")).unwrap())).unwrap();
        assert_eq!(read, paths[1]);

        write_ensemble(dir.path(), &sim, &paths, OutputFormat::Binary).unwrap();
        let pack = crate::io::read_pack(fs::File::open(dir.path().join("paths.jsimpack")).unwrap()).unwrap();
        assert_eq!(pack, paths);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn traced_paths_satisfy_structural_invariants(
            seed in 0u64..10_000,
            delta in 0.02..0.2f64,
            proposal in any::<bool>(),
        ) {
            let cfg = SimConfig {
                x0: delta,
                vertex_rule: if proposal { VertexRule::Proposal } else { VertexRule::Bridge },
                ..bm(delta, seed)
            };
            let sim = Simulator::new(cfg).unwrap();
            let TracedPath { path, step_minima } = sim.traced(0).unwrap();
            path.check().unwrap();
            let jumps: Vec<bool> = path.jump_counter().windows(2).map(|w| w[1] > w[0]).collect();
            let triggered = step_minima.iter().filter(|&&m| m <= 0.0).count() as u64;
            prop_assert_eq!(triggered, path.final_count());
            let off_vertex: u64 = jumps.iter().zip(&step_minima).filter(|(&j, &m)| j && m > 0.0).count() as u64;
            prop_assert_eq!(off_vertex, 0);
            for (k, &j) in jumps.iter().enumerate() {
                if j {
                    prop_assert_eq!(path.positions()[k + 1], delta);
                }
            }
            prop_assert!(path.positions().iter().all(|&x| x >= 0.0));
            let tol = MembershipTolerances::for_coefficients(delta, 1.0, 0.0);
            let r = validate_ddelta_membership_with(&path, &tol);
            prop_assert!(r.passed);
            prop_assert_eq!(r.detected_jumps() as u64, path.final_count());
        }
    }
}
