use graphon_percolation::branching::{point_mass, survival};

use super::{census, fraction};
use crate::config::{ExperimentConfig, OmegaRule};
use crate::report::{Cell, Check, Relation, Report};
use crate::HarnessError;

const COLUMNS: [&str; 8] = ["n", "c", "quantity", "k", "mean", "stderr", "oracle", "abs_dev"];

/// Census of `G_n(c/n)`: `N_k/n` against `P(|𝔛_{cW}| = k)` and `N_{>ω}/n`
/// against `ρ(cW)`. Every ω rule is tabulated; only the configured one is
/// checked.
pub fn run_component_census(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    cfg.validate()?;
    let w = cfg.generator.limit_kernel();
    let seeds = cfg.reps as u64;
    let mut report = Report::new("component_census", cfg.base_seed, cfg.reps, &COLUMNS);
    report.note(format!("omega rule checked: {}", cfg.omega.name()));
    let cs = cfg.sorted_c();
    let mut oracles = Vec::with_capacity(cs.len());
    for &c in &cs {
        let kernel = w.scale(c)?;
        let masses = (1..=cfg.k_max).map(|k| point_mass(&kernel, k)).collect::<Result<Vec<_>, _>>()?;
        oracles.push((masses, survival(&kernel)?.rho));
    }
    for &n in &cfg.n_values {
        let g = cfg.generator.build(n)?;
        for (&c, (masses, rho)) in cs.iter().zip(&oracles) {
            let stats = census(&g, c / n as f64, cfg)?;
            let broken = stats.iter().filter(|s| s.nk_map().values().sum::<usize>() != n).count();
            report.check(Check::new(
                format!("census identity sum_k N_k = n at n={n}, c={c}"),
                Relation::AtMost,
                0.0,
                broken as f64,
                0.0,
                seeds,
            ));
            for k in 1..=cfg.k_max {
                let s = fraction(&stats, |st| st.n_k(k));
                let oracle = masses[k - 1];
                report.push_row(vec![
                    Cell::int(n),
                    Cell::float(c),
                    Cell::text("N_k/n"),
                    Cell::int(k),
                    Cell::float(s.mean),
                    Cell::float(s.stderr),
                    Cell::float(oracle),
                    Cell::float((s.mean - oracle).abs()),
                ]);
                report.check(Check::new(
                    format!("N_{k}/n vs point mass at n={n}, c={c}"),
                    Relation::Within,
                    oracle,
                    s.mean,
                    cfg.census_tolerance,
                    seeds,
                ));
            }
            for rule in OmegaRule::ALL {
                let omega = rule.omega(n);
                let s = fraction(&stats, |st| st.n_gt(omega));
                report.push_row(vec![
                    Cell::int(n),
                    Cell::float(c),
                    Cell::text(format!("N_gt_omega/n[{}]", rule.name())),
                    Cell::int(omega),
                    Cell::float(s.mean),
                    Cell::float(s.stderr),
                    Cell::float(*rho),
                    Cell::float((s.mean - rho).abs()),
                ]);
                if rule == cfg.omega {
                    report.check(Check::new(
                        format!("N_>omega/n vs rho at n={n}, c={c}, omega={omega}"),
                        Relation::Within,
                        *rho,
                        s.mean,
                        cfg.omega_tolerance,
                        seeds,
                    ));
                }
            }
        }
    }
    Ok(report)
}
