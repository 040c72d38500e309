//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines always print:
//!
//! ```text
//! cargo test -p junction-sim --test acceptance
//! ```
//!
//! Arguments select criteria by prefix (`-- C2 C4`). The statistical criteria
//! run the shipped configs under `configs/`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use junction_sim::config::ExperimentConfig;
use junction_sim::engine::{InitialEdge, SimConfig, Simulator, VertexRule};
use junction_sim::experiments::{run_experiment, Check, Limit, RunOptions, SummaryRecord};
use junction_sim::path::{validate_ddelta_membership_with, MembershipTolerances};
use junction_sim::rng::StreamId;
use junction_sim::stats::{mean_stat, reflected_bm_mean_local_time};
use junction_sim::{CoefficientField, EdgeSpec, FieldBounds, VertexWeights};

struct Outcome {
    passed: bool,
    detail: String,
}

fn config(name: &str) -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", &format!("{name}.toml")]
        .iter()
        .collect();
    let mut cfg = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    cfg.experiment.output_dir = None;
    cfg
}

fn run(cfg: &ExperimentConfig) -> SummaryRecord {
    run_experiment(cfg, &RunOptions::default()).unwrap_or_else(|e| panic!("{}: {e}", cfg.experiment.name))
}

fn describe(checks: &[&Check]) -> String {
    checks
        .iter()
        .map(|c| {
            let limit = match c.limit {
                Limit::AtMost(hi) => format!("<={hi:.4}"),
                Limit::Between(lo, hi) => format!("in [{lo:.4}, {hi:.4}]"),
            };
            format!("{}{}={:.4} ({limit})", if c.passed { "" } else { "!" }, c.name, c.observed)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn from_checks(checks: Vec<&Check>) -> Outcome {
    Outcome {
        passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        detail: describe(&checks),
    }
}

fn mixed_config(i: usize) -> SimConfig {
    let edges = 2 + i % 3;
    let raw: Vec<f64> = (1..=edges).map(|k| (k + i % 2) as f64).collect();
    let total: f64 = raw.iter().sum();
    let alpha = VertexWeights::new(raw.iter().map(|w| w / total).collect()).unwrap();
    let delta = [0.05, 0.02, 0.1][i % 3];
    let horizon = 0.5;
    let specs: Vec<EdgeSpec> = (0..edges)
        .map(|e| match (i + e) % 4 {
            0 => EdgeSpec::Constant { drift: 0.0, sigma: 1.0 },
            1 => EdgeSpec::Constant { drift: 0.5, sigma: 1.2 },
            2 => EdgeSpec::TimeRamp { drift: -0.3, sigma: 0.8, slope: 0.5 },
            _ => EdgeSpec::Constant { drift: -1.0, sigma: 0.6 },
        })
        .collect();
    let bounds = FieldBounds {
        ellipticity: 0.5,
        drift_bound: 1.0,
        diffusion_bound: 1.5,
    };
    SimConfig {
        field: CoefficientField::from_specs(specs, bounds, horizon).unwrap(),
        alpha,
        x0: if i % 2 == 0 { delta } else { 0.3 },
        initial_edge: if i % 3 == 0 { InitialEdge::Fixed(1) } else { InitialEdge::DrawFromAlpha },
        delta,
        step: None,
        horizon,
        seed: 1000 + i as u64,
        vertex_rule: if i % 5 == 0 { VertexRule::Proposal } else { VertexRule::Bridge },
        allow_coarse_step: false,
    }
}

fn c1_structural_invariants() -> Outcome {
    let start = Instant::now();
    let n = 1000;
    let (mut violations, mut jumps) = (0usize, 0u64);
    for i in 0..n {
        let cfg = mixed_config(i);
        let tol = MembershipTolerances::for_coefficients(cfg.delta, 1.5, 1.0);
        let traced = Simulator::new(cfg.clone()).unwrap().traced(i as u64).unwrap();
        let p = &traced.path;
        let mut bad = 0;
        if !validate_ddelta_membership_with(p, &tol).passed {
            bad += 1;
        }
        if p.positions().iter().any(|&x| x <= 0.0) {
            bad += 1;
        }
        let n_counter = p.jump_counter();
        if n_counter[0] != 0 {
            bad += 1;
        }
        let mut reflection = 0u64;
        for k in 0..p.steps() {
            let dn = n_counter[k + 1] - n_counter[k];
            let hit = traced.step_minima[k] <= 0.0;
            if dn != hit as u64 {
                bad += 1;
            }
            if traced.step_minima[k] > 0.0 {
                reflection += dn;
            }
            if dn == 1 && p.positions()[k + 1] != cfg.delta {
                bad += 1;
            }
        }
        if reflection != 0 {
            bad += 1;
        }
        jumps += p.final_count();
        violations += bad;
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        passed: violations == 0 && secs < 60.0,
        detail: format!("{n} paths, {jumps} jumps, {violations} violations, {secs:.1}s"),
    }
}

fn c2_edge_weights() -> Outcome {
    let s = run(&config("edge_occupation"));
    let freq: Vec<String> = s
        .points
        .iter()
        .map(|p| format!("{:.4}", p.mean("frequency").unwrap()))
        .collect();
    let mut o = from_checks(s.checks.iter().collect());
    o.detail = format!("frequencies [{}] vs alpha {:?}; {}", freq.join(", "), s.config.alpha, o.detail);
    o
}

fn c3_radial_law() -> Outcome {
    let s = run(&config("radial_law"));
    let ks = s.check("ks_statistic").unwrap();
    let limit = match ks.limit {
        Limit::AtMost(x) => x,
        other => panic!("unexpected limit {other:?}"),
    };
    Outcome {
        passed: ks.passed,
        detail: format!("D = {:.5}, 1% critical {:.5}, n = {}", ks.observed, limit, s.n_paths),
    }
}

/// Reflected walk `y <- |y + sqrt(h) xi|`; its compensator
/// `sum (y_{k+1} - y_k - sqrt(h) xi_k)` has mean `E|W(1)|`.
fn reflected_walk_local_time(paths: usize, steps: usize) -> (f64, f64) {
    let h = 1.0 / steps as f64;
    let sh = h.sqrt();
    let values: Vec<f64> = (0..paths as u64)
        .map(|k| {
            let mut noise = StreamId::new(99, k).noise();
            let (mut y, mut l) = (0.0f64, 0.0);
            for _ in 0..steps {
                let step = sh * noise.next_step().normal;
                let next = (y + step).abs();
                l += next - y - step;
                y = next;
            }
            l
        })
        .collect();
    let m = mean_stat(&values).unwrap();
    (m.mean, m.stderr)
}

fn c4_local_time_convergence() -> Outcome {
    let s = run(&config("local_time_delta_ladder"));
    let means: Vec<String> = s
        .points
        .iter()
        .map(|p| format!("{:.4}", p.mean("scaled_jump_count").unwrap()))
        .collect();
    let target = reflected_bm_mean_local_time(1.0);
    let (walk, walk_se) = reflected_walk_local_time(2000, 4000);
    let walk_ok = ((walk - target) / walk_se).abs() <= 3.0 && (target - 0.7979).abs() < 5e-5;
    let checks = vec![s.check("finest_relative_gap").unwrap(), s.check("gap_inversions").unwrap()];
    let mut o = from_checks(checks);
    o.passed &= walk_ok;
    o.detail = format!(
        "means [{}] -> {target:.4} (reflected walk {walk:.4} +- {walk_se:.4}); {}",
        means.join(", "),
        o.detail
    );
    o
}

fn c5_estimator_consistency() -> Outcome {
    let s = run(&config("estimator_consistency"));
    let gaps: Vec<String> = s
        .points
        .iter()
        .map(|p| {
            let g = p.stats["mean_abs_gap"];
            format!("{:.4}+-{:.4}", g.mean, g.stderr)
        })
        .collect();
    let mut o = from_checks(s.checks.iter().collect());
    o.detail = format!("gaps [{}]; {}", gaps.join(", "), o.detail);
    o
}

fn c6_ito_formula() -> Outcome {
    let s = run(&config("ito_residual"));
    let zero_mean: Vec<&Check> = s.checks.iter().filter(|c| c.name.contains("_abs_z_")).collect();
    let halving: Vec<&Check> = s.checks.iter().filter(|c| c.name.contains("_sup_ratio_")).collect();
    let worst_z = zero_mean.iter().map(|c| c.observed).fold(0.0, f64::max);
    let passed = zero_mean.len() == 12 && halving.len() == 8 && s.checks.iter().all(|c| c.passed);
    Outcome {
        passed,
        detail: format!(
            "zero mean: max |z| = {worst_z:.2} over {} checks; halving ratios: {}",
            zero_mean.len(),
            describe(&halving)
        ),
    }
}

fn c7_vertex_occupation() -> Outcome {
    let s = run(&config("vertex_occupation"));
    let finest = s.points.last().unwrap().mean("occupation_time").unwrap();
    let literal_ok = (finest - 0.0798).abs() <= 0.25 * 0.0798;
    let means: Vec<String> = s
        .points
        .iter()
        .map(|p| format!("{:.4}", p.mean("occupation_time").unwrap()))
        .collect();
    let mut o = from_checks(s.checks.iter().collect());
    o.passed &= literal_ok;
    o.detail = format!("means [{}] (0.0798 +- 25%); {}", means.join(", "), o.detail);
    o
}

fn c8_moment_bounds() -> Outcome {
    let a = run(&config("modulus_scaling"));
    let b = run(&config("exp_moment"));
    from_checks(a.checks.iter().chain(&b.checks).collect())
}

fn c9_determinism() -> Outcome {
    let names = [
        "edge_occupation",
        "radial_law",
        "local_time_delta_ladder",
        "estimator_consistency",
        "ito_residual",
        "modulus_scaling",
        "exp_moment",
        "vertex_occupation",
    ];
    let mut mismatched = Vec::new();
    for name in names {
        let mut cfg = config(name);
        cfg.experiment.n_paths = 120;
        cfg.ito.ladder_paths = Some(30);
        let json = |workers| {
            run_experiment(&cfg, &RunOptions { workers, ..Default::default() })
                .unwrap()
                .to_json()
        };
        let first = json(1);
        if first != json(1) || first != json(4) {
            mismatched.push(name);
        }
    }
    Outcome {
        passed: mismatched.is_empty(),
        detail: format!("{} experiments at workers 1, 1, 4; mismatched: {mismatched:?}", names.len()),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("C1 structural path invariants", c1_structural_invariants),
        ("C2 edge weights", c2_edge_weights),
        ("C3 radial law", c3_radial_law),
        ("C4 local-time convergence", c4_local_time_convergence),
        ("C5 estimator consistency", c5_estimator_consistency),
        ("C6 Ito formula residuals", c6_ito_formula),
        ("C7 vertex occupation", c7_vertex_occupation),
        ("C8 moment and modulus bounds", c8_moment_bounds),
        ("C9 determinism", c9_determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let (mut ran, mut failed) = (0, 0);
    for (name, criterion) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.starts_with(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(criterion)).unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>().cloned().unwrap_or_else(|| "unknown".into())
            ),
        });
        failed += !outcome.passed as usize;
        println!(
            "{} {name} ({:.1}s): {}",
            if outcome.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
