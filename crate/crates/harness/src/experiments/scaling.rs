use graphon_percolation::Error;

use super::{census, percentile};
use crate::config::ExperimentConfig;
use crate::report::{Cell, Check, Relation, Report};
use crate::HarnessError;

const COLUMNS: [&str; 7] = ["c", "n", "quantity", "ln_n", "percentile", "mean", "max"];

/// Percentile of `C₁/ln n` (subcritical `cW`) or `C₂/ln n` (supercritical,
/// irreducible `cW`) over a grid of `n`, checked against `growth_limit` times
/// its value at the smallest `n`.
pub fn run_log_scaling(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let w = cfg.generator.limit_kernel();
    let mut ns = cfg.n_values.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut report = Report::new("log_scaling", cfg.base_seed, cfg.reps, &COLUMNS);
    let q = cfg.percentile;
    for c in cfg.sorted_c() {
        let kernel = w.scale(c)?;
        let norm = kernel.operator_norm()?;
        if (norm - 1.0).abs() < cfg.critical_margin {
            return Err(Error::Precondition(format!(
                "c = {c} gives ‖T_cW‖ = {norm:.6}, within {} of the critical value 1; \
                 logarithmic bounds are not claimed inside the critical window",
                cfg.critical_margin
            ))
            .into());
        }
        let supercritical = norm > 1.0;
        if supercritical && !kernel.is_irreducible()? {
            return Err(Error::Precondition(format!(
                "c = {c}: the supercritical kernel is reducible, so C2 may be linear in n; use reducible_demo"
            ))
            .into());
        }
        let (label, index) = if supercritical { ("C2/ln n", 1) } else { ("C1/ln n", 0) };
        let mut values = Vec::with_capacity(ns.len());
        for &n in &ns {
            let g = cfg.generator.build(n)?;
            let ln = (n as f64).ln();
            let xs: Vec<f64> = census(&g, c / n as f64, cfg)?
                .iter()
                .map(|s| s.sizes().get(index).copied().unwrap_or(0) as f64 / ln)
                .collect();
            let pct = percentile(&xs, q);
            report.push_row(vec![
                Cell::float(c),
                Cell::int(n),
                Cell::text(label),
                Cell::float(ln),
                Cell::float(pct),
                Cell::float(xs.iter().sum::<f64>() / xs.len() as f64),
                Cell::float(xs.iter().copied().fold(f64::MIN, f64::max)),
            ]);
            values.push(pct);
        }
        if ns.len() < 2 {
            report.note(format!("c = {c}: a single n gives no growth check"));
            continue;
        }
        let bound = cfg.growth_limit * values[0];
        for (&n, &v) in ns.iter().zip(&values).skip(1) {
            report.check(Check::new(
                format!("{label} p{} at n={n} vs {}x n={}, c={c}", (q * 100.0).round(), cfg.growth_limit, ns[0]),
                Relation::AtMost,
                bound,
                v,
                0.0,
                cfg.reps as u64,
            ));
        }
    }
    Ok(report)
}
