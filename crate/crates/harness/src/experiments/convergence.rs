use graphon_percolation::homdensity::convergence_diagnostic;
use graphon_percolation::weighted_graph::GraphFamily;

use super::increases;
use crate::config::ExperimentConfig;
use crate::report::{Cell, Check, Relation, Report};
use crate::HarnessError;

const COLUMNS: [&str; 5] = ["n", "pattern", "t_graph", "t_kernel", "abs_dev"];

/// `|t(F, G_n) − t(F, W)|` over `n_values` for every pattern: checked to be
/// non-increasing in `n` and within `deviation_tolerance` at the largest `n`.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let w = cfg.generator.limit_kernel();
    let mut ns = cfg.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let graphs = ns.iter().map(|&n| cfg.generator.build(n)).collect::<Result<Vec<_>, _>>()?;
    let table = convergence_diagnostic(&graphs, &w, &cfg.patterns)?;
    let seeds = u64::from(matches!(cfg.generator, GraphFamily::SampleDense { .. }));
    let mut report = Report::new("convergence", cfg.base_seed, cfg.reps, &COLUMNS);
    for r in &table.rows {
        report.push_row(vec![
            Cell::int(r.n),
            Cell::text(r.pattern.clone()),
            Cell::float(r.t_graph),
            Cell::float(r.t_kernel),
            Cell::float(r.abs_dev),
        ]);
    }
    for f in &cfg.patterns {
        let name = f.name();
        let devs = table.column(f);
        report.check(Check::new(
            format!("{name} deviation non-increasing in n"),
            Relation::AtMost,
            0.0,
            increases(&devs) as f64,
            0.0,
            seeds,
        ));
        let last = table.rows.iter().rev().find(|r| r.pattern == name).expect("one row per graph");
        report.check(Check::new(
            format!("{name} t(F,G_n) vs t(F,W) at n={}", last.n),
            Relation::Within,
            last.t_kernel,
            last.t_graph,
            cfg.deviation_tolerance,
            seeds,
        ));
    }
    for proxy in table.cut_proxy.iter().flatten() {
        report.note(format!(
            "cut distance proxy at n={}: {:.6} over {} blocks ({}; heuristic)",
            proxy.n,
            proxy.distance.value,
            proxy.blocks,
            if proxy.distance.exact { "exact search" } else { "best permutation found" }
        ));
    }
    Ok(report)
}
