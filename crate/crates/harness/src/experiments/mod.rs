//! The experiment runners.
//!
//! Replica `r` of every percolation cell uses seed `mix_seed(base_seed, r)`,
//! so cells at different `(n, c)` share random streams and a rerun with more
//! replicas extends the original seed list.

mod branching;
mod census;
mod convergence;
mod reducible;
mod scaling;
mod threshold;

pub use branching::run_branching_validation;
pub use census::run_component_census;
pub use convergence::run_convergence;
pub use reducible::run_reducible_demo;
pub use scaling::run_log_scaling;
pub use threshold::run_threshold_scan;

use graphon_percolation::percolation::{replicate_stats, ComponentStats, SummaryStat};
use graphon_percolation::WeightedGraph;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::Report;
use crate::HarnessError;

/// Factor applied to every replica count when a stochastic run fails.
pub const RERUN_FACTOR: usize = 3;

/// Runs the configured experiment. A stochastic experiment with failing
/// checks is rerun once at `RERUN_FACTOR`× replicas (when
/// `rerun_on_failure`), and the rerun's report is returned.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let kind = cfg.kind()?;
    let first = dispatch(kind, cfg)?;
    if first.passed() || !cfg.rerun_on_failure || !kind.is_stochastic() {
        return Ok(first);
    }
    let failed: Vec<String> = first.failures().iter().map(|c| c.name.clone()).collect();
    log::info!("{} failed {} checks at {} reps; rerunning", kind.name(), failed.len(), cfg.reps);
    let mut more = cfg.clone();
    more.reps *= RERUN_FACTOR;
    more.mc_reps *= RERUN_FACTOR as u64;
    more.tail_reps *= RERUN_FACTOR as u64;
    let mut report = dispatch(kind, &more)?;
    report.notes.insert(
        0,
        format!(
            "rerun at {}x replicas; the run at {} reps failed: {}",
            RERUN_FACTOR,
            cfg.reps,
            failed.join("; ")
        ),
    );
    Ok(report)
}

fn dispatch(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    match kind {
        ExperimentKind::ThresholdScan => run_threshold_scan(cfg),
        ExperimentKind::ComponentCensus => run_component_census(cfg),
        ExperimentKind::LogScaling => run_log_scaling(cfg),
        ExperimentKind::ReducibleDemo => run_reducible_demo(cfg),
        ExperimentKind::BranchingValidation => run_branching_validation(cfg),
        ExperimentKind::Convergence => run_convergence(cfg),
    }
}

fn census(g: &WeightedGraph, p: f64, cfg: &ExperimentConfig) -> Result<Vec<ComponentStats>, HarnessError> {
    Ok(replicate_stats(g, p, cfg.mode, cfg.reps, cfg.base_seed)?
        .into_iter()
        .map(|(_, s)| s)
        .collect())
}

fn fraction(stats: &[ComponentStats], f: impl Fn(&ComponentStats) -> usize) -> SummaryStat {
    let xs: Vec<f64> = stats.iter().map(|s| f(s) as f64 / s.n() as f64).collect();
    SummaryStat::of(&xs)
}

/// Nearest-rank percentile: the `⌈q·R⌉`-th smallest of `R` values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Least-squares slope of `y` on `x`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Number of `i` with `xs[i+1] > xs[i]`.
fn increases(xs: &[f64]) -> usize {
    xs.windows(2).filter(|w| w[1] > w[0]).count()
}
