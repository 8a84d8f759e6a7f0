use graphon_percolation::branching::survival;
use graphon_percolation::Error;

use super::{census, fraction};
use crate::config::ExperimentConfig;
use crate::report::{Cell, Check, Relation, Report};
use crate::HarnessError;

const COLUMNS: [&str; 7] = ["n", "c", "mean_c1_frac", "mean_c2_frac", "stderr_c2_frac", "oracle_c1_frac", "oracle_c2_frac"];

/// Giant of each irreducible part of `cW` is `μ(part)·ρ(part)`; the oracle
/// for `C₂/n` is the second largest.
pub fn run_reducible_demo(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let w = cfg.generator.limit_kernel();
    let seeds = cfg.reps as u64;
    let mut report = Report::new("reducible_demo", cfg.base_seed, cfg.reps, &COLUMNS);
    for c in cfg.sorted_c() {
        let kernel = w.scale(c)?;
        if kernel.is_irreducible()? {
            return Err(Error::Precondition(format!("c = {c}: kernel is irreducible; reducible_demo needs a reducible kernel")).into());
        }
        let mut giants = kernel
            .irreducible_parts()?
            .iter()
            .map(|part| Ok(part.measure * survival(&part.kernel)?.rho))
            .collect::<Result<Vec<f64>, graphon_percolation::Error>>()?;
        giants.sort_by(|a, b| b.total_cmp(a));
        let (o1, o2) = (giants[0], giants.get(1).copied().unwrap_or(0.0));
        report.note(format!("c = {c}: per-part giant fractions {giants:?}"));
        for &n in &cfg.n_values {
            let g = cfg.generator.build(n)?;
            let stats = census(&g, c / n as f64, cfg)?;
            let c1 = fraction(&stats, |s| s.c1());
            let c2 = fraction(&stats, |s| s.c2());
            report.push_row(vec![
                Cell::int(n),
                Cell::float(c),
                Cell::float(c1.mean),
                Cell::float(c2.mean),
                Cell::float(c2.stderr),
                Cell::float(o1),
                Cell::float(o2),
            ]);
            report.check(Check::new(
                format!("C2/n vs second part giant at n={n}, c={c}"),
                Relation::Within,
                o2,
                c2.mean,
                cfg.c2_tolerance,
                seeds,
            ));
            if o2 >= 0.05 {
                report.check(Check::new(
                    format!("C2/n linear at n={n}, c={c}"),
                    Relation::AtLeast,
                    0.05,
                    c2.mean,
                    0.0,
                    seeds,
                ));
            }
            let unordered = stats.iter().filter(|s| s.c2() > s.c1()).count();
            report.check(Check::new(
                format!("C2 <= C1 at n={n}, c={c}"),
                Relation::AtMost,
                0.0,
                unordered as f64,
                0.0,
                seeds,
            ));
        }
    }
    Ok(report)
}
