//! The multi-type Poisson branching process `𝔛_W` of a step kernel.
//!
//! A particle in block `i` has `Poisson(μ_j W_ij)` children in block `j`,
//! independently over `j`. Simulation only tracks per-block generation counts:
//! a generation of `g_i` particles in block `i` has `Poisson(Σ_i g_i μ_j W_ij)`
//! children in block `j`, which has the same law as expanding particles one at
//! a time.

mod tree;

pub use tree::{enumerate_rooted_trees, point_mass, tree_probability, RootedTree, MAX_TREE_SIZE, TREE_SUM_BUDGET};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{BlockFunction, StepKernel};
use crate::seed::{mix_seed, rng_from_seed};

/// Particle cap used as the survival proxy.
pub const DEFAULT_CAP: u64 = 100_000;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const FIXED_POINT_MAX_ITER: usize = 1_000_000;
/// Components with `‖T_W‖` at most `1 + CRITICAL_SLACK` are treated as
/// non-surviving without iterating.
pub const CRITICAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchingOutcome {
    /// Particles over all generations, capped.
    pub total: u64,
    /// The cap was reached.
    pub escaped: bool,
}

fn check_sim(kernel: &StepKernel, cap: u64) -> Result<()> {
    if !kernel.is_nonnegative() {
        return Err(Error::SignedKernel);
    }
    if cap == 0 {
        return Err(Error::Domain("cap must be at least 1".into()));
    }
    Ok(())
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

fn run(kernel: &StepKernel, root: usize, cap: u64, rng: &mut ChaCha8Rng) -> BranchingOutcome {
    let m = kernel.m();
    let mu = kernel.block_measures();
    let mut generation = vec![0u64; m];
    generation[root] = 1;
    let mut total = 1u64;
    if total >= cap {
        return BranchingOutcome { total: cap, escaped: true };
    }
    let mut next = vec![0u64; m];
    loop {
        let mut any = false;
        for j in 0..m {
            let mean: f64 = (0..m)
                .filter(|&i| generation[i] > 0)
                .map(|i| generation[i] as f64 * mu[j] * kernel.value(i, j))
                .sum();
            next[j] = poisson(mean, rng);
            total = total.saturating_add(next[j]);
            if total >= cap {
                return BranchingOutcome { total: cap, escaped: true };
            }
            any |= next[j] > 0;
        }
        if !any {
            return BranchingOutcome { total, escaped: false };
        }
        std::mem::swap(&mut generation, &mut next);
    }
}

/// One run of `𝔛_W` with a uniformly distributed root type.
pub fn simulate(kernel: &StepKernel, seed: u64, cap: u64) -> Result<BranchingOutcome> {
    check_sim(kernel, cap)?;
    let mut rng = rng_from_seed(seed);
    let u: f64 = rng.random();
    let root = kernel.block_of_unchecked(u);
    Ok(run(kernel, root, cap, &mut rng))
}

/// One run of `𝔛_W(x)` for `x` in block `block`.
pub fn simulate_from(kernel: &StepKernel, block: usize, seed: u64, cap: u64) -> Result<BranchingOutcome> {
    check_sim(kernel, cap)?;
    if block >= kernel.m() {
        return Err(Error::Domain(format!("block {block} out of range for m = {}", kernel.m())));
    }
    let mut rng = rng_from_seed(seed);
    Ok(run(kernel, block, cap, &mut rng))
}

/// Histogram of total sizes over `reps` runs seeded `mix_seed(seed, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub reps: u64,
    /// `counts[k-1]` = runs with total exactly `k`, for `k ≤ k_max`.
    pub counts: Vec<u64>,
    pub escaped: u64,
    /// Sum of totals (escaped runs contribute the cap).
    pub total_sum: f64,
    pub total_sq_sum: f64,
}

impl SizeHistogram {
    fn empty(k_max: usize) -> Self {
        SizeHistogram {
            reps: 0,
            counts: vec![0; k_max],
            escaped: 0,
            total_sum: 0.0,
            total_sq_sum: 0.0,
        }
    }

    fn record(mut self, o: BranchingOutcome) -> Self {
        self.reps += 1;
        if o.escaped {
            self.escaped += 1;
        }
        let t = o.total as usize;
        if !o.escaped && t >= 1 && t <= self.counts.len() {
            self.counts[t - 1] += 1;
        }
        self.total_sum += o.total as f64;
        self.total_sq_sum += (o.total as f64).powi(2);
        self
    }

    fn merge(mut self, other: Self) -> Self {
        self.reps += other.reps;
        self.escaped += other.escaped;
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.total_sum += other.total_sum;
        self.total_sq_sum += other.total_sq_sum;
        self
    }

    /// Empirical `P(|𝔛| = k)` and its binomial standard error.
    pub fn frequency(&self, k: usize) -> (f64, f64) {
        let count = self.counts.get(k.wrapping_sub(1)).copied().unwrap_or(0);
        binomial_estimate(count, self.reps)
    }

    pub fn escape_fraction(&self) -> (f64, f64) {
        binomial_estimate(self.escaped, self.reps)
    }

    /// Mean total and its standard error.
    pub fn mean_total(&self) -> (f64, f64) {
        let r = self.reps as f64;
        let mean = self.total_sum / r;
        let var = (self.total_sq_sum / r - mean * mean).max(0.0) * r / (r - 1.0).max(1.0);
        (mean, (var / r).sqrt())
    }
}

fn binomial_estimate(count: u64, reps: u64) -> (f64, f64) {
    let p = count as f64 / reps as f64;
    (p, (p * (1.0 - p) / reps as f64).sqrt())
}

/// Runs `reps` simulations (root fixed to `root` if given) in parallel.
pub fn size_histogram(
    kernel: &StepKernel,
    root: Option<usize>,
    reps: u64,
    seed: u64,
    cap: u64,
    k_max: usize,
) -> Result<SizeHistogram> {
    check_sim(kernel, cap)?;
    if reps == 0 {
        return Err(Error::Domain("reps must be at least 1".into()));
    }
    if let Some(b) = root {
        if b >= kernel.m() {
            return Err(Error::Domain(format!("block {b} out of range for m = {}", kernel.m())));
        }
    }
    Ok((0..reps)
        .into_par_iter()
        .map(|r| {
            let s = mix_seed(seed, r);
            let o = match root {
                Some(b) => simulate_from(kernel, b, s, cap),
                None => simulate(kernel, s, cap),
            }
            .expect("validated above");
            SizeHistogram::empty(k_max).record(o)
        })
        .reduce(|| SizeHistogram::empty(k_max), SizeHistogram::merge))
}

/// `P(|𝔛_W| ≥ k)` by Monte Carlo with cap `k`: returns the estimate and its
/// binomial standard error.
pub fn tail_probability_mc(kernel: &StepKernel, k: u64, reps: u64, seed: u64) -> Result<(f64, f64)> {
    if k == 0 {
        return Ok((1.0, 0.0));
    }
    let h = size_histogram(kernel, None, reps, seed, k, 0)?;
    Ok(h.escape_fraction())
}

/// Survival probability and the per-block function `ρ(W; ·)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Survival {
    pub rho: f64,
    pub rho_fn: BlockFunction,
    pub iterations: usize,
    /// `sup_i |ρ_i − (1 − exp(−(T_W ρ)_i))|` at the returned point.
    pub residual: f64,
}

/// `Φ(ρ)_i = 1 − exp(−Σ_j μ_j W_ij ρ_j)`.
pub fn fixed_point_step(kernel: &StepKernel, rho: &[f64]) -> Result<Vec<f64>> {
    if !kernel.is_nonnegative() {
        return Err(Error::SignedKernel);
    }
    let t = kernel.apply(&BlockFunction::new(rho.to_vec()))?;
    Ok(t.values.iter().map(|v| -(-v).exp_m1()).collect())
}

/// Largest solution of `ρ = 1 − exp(−T_W ρ)`, iterated downwards from `ρ ≡ 1`.
///
/// Irreducible parts are decoupled: a part with `‖T_W‖ ≤ 1` has zero survival
/// and is pinned at 0 (iterating there converges sublinearly at criticality).
pub fn survival_probability(kernel: &StepKernel, tol: f64, max_iter: usize) -> Result<Survival> {
    if !kernel.is_nonnegative() {
        return Err(Error::SignedKernel);
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Domain(format!("tol must be positive, got {tol}")));
    }
    let m = kernel.m();
    let mut rho = vec![0.0; m];
    for part in kernel.irreducible_parts()? {
        if part.kernel.operator_norm()? > 1.0 + CRITICAL_SLACK {
            for &b in &part.blocks {
                rho[b] = 1.0;
            }
        }
    }
    let active: Vec<usize> = (0..m).filter(|&i| rho[i] > 0.0).collect();
    let mut iterations = 0;
    if !active.is_empty() {
        loop {
            if iterations == max_iter {
                let estimate = BlockFunction::new(rho).integral(kernel)?;
                return Err(Error::NoConvergence {
                    what: "survival fixed point",
                    iterations,
                    estimate,
                });
            }
            let next = fixed_point_step(kernel, &rho)?;
            iterations += 1;
            let change = active.iter().map(|&i| (next[i] - rho[i]).abs()).fold(0.0, f64::max);
            for &i in &active {
                rho[i] = next[i];
            }
            if change < tol {
                break;
            }
        }
    }
    let after = fixed_point_step(kernel, &rho)?;
    let residual = rho.iter().zip(&after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let rho_fn = BlockFunction::new(rho);
    Ok(Survival {
        rho: rho_fn.integral(kernel)?,
        rho_fn,
        iterations,
        residual,
    })
}

/// [`survival_probability`] with tolerance `1e-12` and `10⁶` iterations.
pub fn survival(kernel: &StepKernel) -> Result<Survival> {
    survival_probability(kernel, FIXED_POINT_TOL, FIXED_POINT_MAX_ITER)
}

/// Both sides of `ρ(W) ≥ (‖T_W‖ − 1)/‖W‖_∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub rho: f64,
    pub operator_norm: f64,
    pub sup_norm: f64,
    pub bound: f64,
    /// `rho − bound`.
    pub margin: f64,
    pub passed: bool,
}

pub fn check_lower_bound(kernel: &StepKernel) -> Result<LowerBoundReport> {
    if !kernel.is_irreducible()? {
        return Err(Error::Precondition("lower bound is only asserted for irreducible kernels".into()));
    }
    let norm = kernel.operator_norm()?;
    if norm <= 1.0 {
        return Err(Error::Precondition(format!("kernel is not supercritical: ‖T_W‖ = {norm}")));
    }
    let rho = survival(kernel)?.rho;
    let sup = kernel.sup_norm();
    let bound = (norm - 1.0) / sup;
    Ok(LowerBoundReport {
        rho,
        operator_norm: norm,
        sup_norm: sup,
        bound,
        margin: rho - bound,
        passed: rho >= bound,
    })
}

/// CSV `k,value,stderr`.
pub fn table_csv(rows: &[(usize, f64, f64)]) -> String {
    let mut out = String::from("k,value,stderr\n");
    for (k, v, s) in rows {
        out.push_str(&format!("{k},{v:.16e},{s:.16e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Scalar `ρ = 1 − e^{−cρ}` by bisection on `(0, 1]`.
    fn scalar_rho(c: f64) -> f64 {
        if c <= 1.0 {
            return 0.0;
        }
        let f = |r: f64| r - (1.0 - (-c * r).exp());
        let (mut lo, mut hi) = (1e-9, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_kernel_never_branches() {
        let w = StepKernel::constant(0.0);
        for seed in 0..50 {
            assert_eq!(simulate(&w, seed, 100).unwrap(), BranchingOutcome { total: 1, escaped: false });
        }
        let w = StepKernel::equal_blocks(vec![vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
        assert_eq!(simulate_from(&w, 0, 1, 100).unwrap().total, 1);
        assert!(simulate_from(&w, 2, 1, 100).is_err());
        assert!(simulate(&w, 1, 0).is_err());
    }

    #[test]
    fn outcome_invariants() {
        let w = StepKernel::constant(3.0);
        for seed in 0..200 {
            let o = simulate(&w, seed, 500).unwrap();
            assert!(o.total >= 1);
            if o.escaped {
                assert_eq!(o.total, 500);
            }
        }
        assert_eq!(simulate(&w, 0, 1).unwrap(), BranchingOutcome { total: 1, escaped: true });
    }

    #[test]
    fn subcritical_mean_total() {
        let c = 0.6;
        let h = size_histogram(&StepKernel::constant(c), None, 100_000, 11, DEFAULT_CAP, 0).unwrap();
        let (mean, se) = h.mean_total();
        assert!((mean - 1.0 / (1.0 - c)).abs() < 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn escape_fraction_matches_scalar_fixed_point() {
        let h = size_histogram(&StepKernel::constant(2.0), None, 20_000, 5, DEFAULT_CAP, 0).unwrap();
        let (frac, _) = h.escape_fraction();
        assert!((frac - 0.7968).abs() < 0.01, "{frac}");
    }

    #[test]
    fn bipartite_roots_agree() {
        let w = StepKernel::equal_blocks(vec![vec![0.0, 2.0], vec![2.0, 0.0]]).unwrap();
        let a = size_histogram(&w, Some(0), 10_000, 1, 10_000, 0).unwrap().escape_fraction();
        let b = size_histogram(&w, Some(1), 10_000, 2, 10_000, 0).unwrap().escape_fraction();
        assert!((a.0 - b.0).abs() < 3.0 * (a.1.powi(2) + b.1.powi(2)).sqrt());
        let s = survival(&w).unwrap();
        assert!((s.rho_fn.values[0] - s.rho_fn.values[1]).abs() < 1e-12);
    }

    #[test]
    fn survival_examples() {
        let s = survival(&StepKernel::constant(1.0)).unwrap();
        assert!(s.rho < FIXED_POINT_TOL);
        let s = survival(&StepKernel::constant(2.0)).unwrap();
        assert!((s.rho - scalar_rho(2.0)).abs() < 1e-10);
        assert!((s.rho - 0.79681).abs() < 1e-5);
        assert!(s.residual < 10.0 * FIXED_POINT_TOL);
        let w = StepKernel::equal_blocks(vec![vec![4.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = survival(&w).unwrap();
        assert!((s.rho - 0.5 * scalar_rho(2.0)).abs() < 1e-10, "{}", s.rho);
        assert_eq!(s.rho_fn.values[1], 0.0);
        assert!(survival_probability(&StepKernel::constant(2.0), 0.0, 10).is_err());
        assert!(matches!(
            survival_probability(&StepKernel::constant(1.05), 1e-15, 3),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
        assert!(matches!(survival(&StepKernel::constant(-1.0)), Err(Error::SignedKernel)));
    }

    #[test]
    fn survival_decouples_over_parts() {
        let w = StepKernel::new(
            vec![0.3, 0.2, 0.5],
            vec![vec![5.0, 2.0, 0.0], vec![2.0, 1.0, 0.0], vec![0.0, 0.0, 3.0]],
        )
        .unwrap();
        let whole = survival(&w).unwrap().rho;
        let parts: f64 = w
            .irreducible_parts()
            .unwrap()
            .iter()
            .map(|p| p.measure * survival(&p.kernel).unwrap().rho)
            .sum();
        assert!((whole - parts).abs() < 1e-10);
    }

    #[test]
    fn lower_bound_examples() {
        let r = check_lower_bound(&StepKernel::constant(2.0)).unwrap();
        assert!(r.passed && (r.bound - 0.5).abs() < 1e-12);
        let r = check_lower_bound(&StepKernel::constant(1.1)).unwrap();
        assert!(r.passed);
        assert!((r.rho - 0.1761).abs() < 1e-3, "{}", r.rho);
        assert!((r.bound - 0.1 / 1.1).abs() < 1e-9);
        assert!(check_lower_bound(&StepKernel::constant(0.5)).is_err());
        let red = StepKernel::equal_blocks(vec![vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert!(check_lower_bound(&red).is_err());
        let base = vec![vec![3.0, 1.0], vec![1.0, 1.0]];
        let margin = check_lower_bound(&StepKernel::equal_blocks(base.clone()).unwrap()).unwrap().margin;
        for eps in [1e-6, -1e-6] {
            let v: Vec<Vec<f64>> = base.iter().map(|r| r.iter().map(|x| x + eps).collect()).collect();
            let m2 = check_lower_bound(&StepKernel::equal_blocks(v).unwrap()).unwrap().margin;
            assert_eq!(m2.signum(), margin.signum());
            assert!((m2 - margin).abs() < 1e-4);
        }
    }

    #[test]
    fn tail_k1_is_one() {
        assert_eq!(tail_probability_mc(&StepKernel::constant(0.5), 1, 100, 3).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn csv_table() {
        assert_eq!(table_csv(&[(1, 0.5, 0.0)]), "k,value,stderr\n1,5.0000000000000000e-1,0.0000000000000000e0\n");
    }

    fn kernel_strategy() -> impl Strategy<Value = StepKernel> {
        (1usize..4)
            .prop_flat_map(|m| (proptest::collection::vec(0.1f64..1.0, m), proptest::collection::vec(0.0f64..4.0, m * m)))
            .prop_map(|(mu, v)| {
                let m = mu.len();
                let total: f64 = mu.iter().sum();
                let mut sym = vec![0.0; m * m];
                for i in 0..m {
                    for j in 0..m {
                        sym[i * m + j] = 0.5 * (v[i * m + j] + v[j * m + i]);
                    }
                }
                StepKernel::from_flat(mu.iter().map(|x| x / total).collect(), sym).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iteration_is_monotone(w in kernel_strategy()) {
            let mut rho = vec![1.0; w.m()];
            for _ in 0..200 {
                let next = fixed_point_step(&w, &rho).unwrap();
                for (a, b) in next.iter().zip(&rho) {
                    prop_assert!(*a <= *b + 1e-15);
                    prop_assert!((0.0..=1.0).contains(a));
                }
                rho = next;
            }
        }

        #[test]
        fn survival_is_nondecreasing_in_scale(w in kernel_strategy()) {
            let mut last = 0.0;
            for c in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
                let sc = w.scale(c).unwrap();
                let norm = sc.operator_norm().unwrap();
                if (norm - 1.0).abs() < 0.02 {
                    continue;
                }
                let s = survival(&sc).unwrap();
                prop_assert!(s.rho_fn.values.iter().all(|r| (0.0..=1.0).contains(r)));
                prop_assert!(s.rho >= last - 1e-9);
                last = s.rho;
            }
        }
    }
}
