//! The random subgraph `G(p)` and its component structure.
//!
//! # Randomness contract
//!
//! All samplers use [`ChaCha8Rng`](crate::seed::ChaCha8Rng) seeded with the
//! sample's seed. Dense graphs visit pairs `i < j` in row-major order and draw
//! one uniform `[0,1)` value per pair whose inclusion probability lies strictly
//! between 0 and 1. Block-structured graphs visit block pairs `(a, b)`, `a ≤ b`,
//! in lexicographic order; inside a block pair the candidate vertex pairs are
//! listed row-major (by vertex rank within each block) and traversed with
//! geometric jumps `⌊ln(1−U) / ln(1−q)⌋`, one uniform per jump. Both layouts
//! realise the same law: every pair independently with probability
//! `min{pβ, 1}` (Bernoulli) or `1 − e^{−pβ}` (Poisson).

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::StepKernel;
use crate::seed::{mix_seed, rng_from_seed};
use crate::unionfind::UnionFind;
use crate::weighted_graph::{GeneratorSpec, Storage, WeightedGraph};

/// Component sizes tracked per replica in [`replicate`] tables.
pub const CENSUS_K_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Edge probability `min{pβ, 1}`.
    #[default]
    Bernoulli,
    /// Edge probability `1 − exp(−pβ)`.
    Poisson,
}

impl EdgeMode {
    pub fn probability(self, p: f64, beta: f64) -> f64 {
        match self {
            EdgeMode::Bernoulli => (p * beta).min(1.0),
            EdgeMode::Poisson => -(-p * beta).exp_m1(),
        }
    }
}

/// A realisation of `G(p)`: simple graph plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercolationSample {
    n: usize,
    edges: Vec<(usize, usize)>,
    p: f64,
    mode: EdgeMode,
    seed: u64,
}

impl PercolationSample {
    /// Validated constructor; edges are stored as `(min, max)`.
    pub fn new(n: usize, edges: Vec<(usize, usize)>, p: f64, mode: EdgeMode, seed: u64) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a},{b}) out of range for n = {n}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({},{})", e.0, e.1)));
            }
            norm.push(e);
        }
        Ok(PercolationSample {
            n,
            edges: norm,
            p,
            mode,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mode(&self) -> EdgeMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Component census of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    n: usize,
    sizes: Vec<usize>,
    nk: BTreeMap<usize, usize>,
}

impl ComponentStats {
    /// Builds the census from component sizes in any order.
    pub fn from_sizes(n: usize, mut sizes: Vec<usize>) -> Result<Self> {
        if sizes.iter().sum::<usize>() != n || sizes.contains(&0) {
            return Err(Error::Precondition("component sizes must be positive and sum to n".into()));
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let mut nk = BTreeMap::new();
        for &s in &sizes {
            *nk.entry(s).or_insert(0) += s;
        }
        Ok(ComponentStats { n, sizes, nk })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Component sizes, largest first.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `k ↦ N_k`, vertices in components of size exactly `k`.
    pub fn nk_map(&self) -> &BTreeMap<usize, usize> {
        &self.nk
    }

    pub fn c1(&self) -> usize {
        self.sizes.first().copied().unwrap_or(0)
    }

    /// Second largest component; 0 when the sample is connected.
    pub fn c2(&self) -> usize {
        self.sizes.get(1).copied().unwrap_or(0)
    }

    pub fn n_k(&self, k: usize) -> usize {
        self.nk.get(&k).copied().unwrap_or(0)
    }

    /// `N_{≥k} = Σ_{j≥k} N_j`.
    pub fn n_geq_k(&self, k: usize) -> usize {
        self.nk.range(k..).map(|(_, v)| v).sum()
    }

    /// `N_{>ω}`.
    pub fn n_gt(&self, omega: usize) -> usize {
        self.n_geq_k(omega + 1)
    }

    pub fn component_count(&self) -> usize {
        self.sizes.len()
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return Err(Error::Domain(format!("edge scale p must be finite and ≥ 0, got {p}")));
    }
    Ok(())
}

/// Visits `⌊total⌋` candidates, calling `f(index)` for each success of an
/// independent Bernoulli(`q`) trial, using geometric jumps.
fn geometric_successes(total: u64, q: f64, rng: &mut ChaCha8Rng, mut f: impl FnMut(u64)) {
    if total == 0 || q <= 0.0 {
        return;
    }
    if q >= 1.0 {
        (0..total).for_each(f);
        return;
    }
    let log_fail = (-q).ln_1p();
    let mut k: u64 = 0;
    loop {
        let u: f64 = rng.random();
        let skip = ((1.0 - u).ln() / log_fail).floor();
        if skip >= (total - k) as f64 {
            return;
        }
        k += skip as u64;
        f(k);
        k += 1;
        if k >= total {
            return;
        }
    }
}

/// Row-major walk over pairs `r < c` of a list, for monotone linear indices.
struct TrianglePairs<'a> {
    list: &'a [usize],
    row: usize,
    row_start: u64,
}

impl<'a> TrianglePairs<'a> {
    fn new(list: &'a [usize]) -> Self {
        TrianglePairs {
            list,
            row: 0,
            row_start: 0,
        }
    }

    fn pair(&mut self, index: u64) -> (usize, usize) {
        let s = self.list.len() as u64;
        loop {
            let row_len = s - 1 - self.row as u64;
            if index < self.row_start + row_len {
                let col = self.row + 1 + (index - self.row_start) as usize;
                return (self.list[self.row], self.list[col]);
            }
            self.row_start += row_len;
            self.row += 1;
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn sample_edges(graph: &WeightedGraph, p: f64, mode: EdgeMode, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let n = graph.n();
    let mut edges = Vec::new();
    match graph.storage() {
        Storage::Dense(beta) => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let q = mode.probability(p, beta[i * n + j]);
                    if q >= 1.0 || (q > 0.0 && rng.random::<f64>() < q) {
                        edges.push((i, j));
                    }
                }
            }
        }
        Storage::Block { m, members, values, .. } => {
            for a in 0..*m {
                for b in a..*m {
                    let q = mode.probability(p, values[a * m + b]);
                    if q <= 0.0 {
                        continue;
                    }
                    let (la, lb) = (&members[a], &members[b]);
                    if a == b {
                        let s = la.len() as u64;
                        let mut walk = TrianglePairs::new(la);
                        geometric_successes(s * s.saturating_sub(1) / 2, q, rng, |k| {
                            edges.push(walk.pair(k));
                        });
                    } else {
                        let width = lb.len() as u64;
                        geometric_successes(la.len() as u64 * width, q, rng, |k| {
                            edges.push(ordered(la[(k / width) as usize], lb[(k % width) as usize]));
                        });
                    }
                }
            }
        }
    }
    edges
}

/// Samples `G(p)`: each pair `i < j` independently with probability
/// `min{pβ_ij, 1}` (Bernoulli) or `1 − e^{−pβ_ij}` (Poisson).
pub fn sample(graph: &WeightedGraph, p: f64, mode: EdgeMode, seed: u64) -> Result<PercolationSample> {
    check_p(p)?;
    let mut rng = rng_from_seed(seed);
    let edges = sample_edges(graph, p, mode, &mut rng);
    Ok(PercolationSample {
        n: graph.n(),
        edges,
        p,
        mode,
        seed,
    })
}

/// Samples `G(n, W)` at scale `c`: i.i.d. uniform types, then each pair joined
/// with probability `c·W(X_i, X_j)/n`, without building the weight matrix.
///
/// Per block pair the edge count is drawn from the binomial law and that many
/// distinct pairs are placed uniformly (rejecting repeats; when more than half
/// of the pairs are edges, the non-edges are placed instead).
pub fn sample_gnw(kernel: &StepKernel, n: usize, c: f64, seed: u64) -> Result<PercolationSample> {
    if !kernel.is_nonnegative() {
        return Err(Error::SignedKernel);
    }
    if n == 0 {
        return Err(Error::InvalidGraph("n must be positive".into()));
    }
    if !(c.is_finite() && c >= 0.0) {
        return Err(Error::Domain(format!("c must be finite and ≥ 0, got {c}")));
    }
    if c * kernel.sup_norm() > n as f64 {
        return Err(Error::Precondition(format!(
            "c·‖W‖_∞ = {} exceeds n = {n}; edge probabilities would exceed 1",
            c * kernel.sup_norm()
        )));
    }
    let mut rng = rng_from_seed(seed);
    let m = kernel.m();
    let mut members = vec![Vec::new(); m];
    for v in 0..n {
        let x: f64 = rng.random();
        members[kernel.block_of_unchecked(x)].push(v);
    }
    let mut edges = Vec::new();
    for a in 0..m {
        for b in a..m {
            let q = (c * kernel.value(a, b) / n as f64).min(1.0);
            let (la, lb) = (&members[a], &members[b]);
            let total: u64 = if a == b {
                let s = la.len() as u64;
                s * s.saturating_sub(1) / 2
            } else {
                la.len() as u64 * lb.len() as u64
            };
            if total == 0 || q <= 0.0 {
                continue;
            }
            let count = if q >= 1.0 {
                total
            } else {
                Binomial::new(total, q).expect("valid binomial").sample(&mut rng)
            };
            let draw = |rng: &mut ChaCha8Rng| -> (usize, usize) {
                if a == b {
                    let i = rng.random_range(0..la.len());
                    let mut j = rng.random_range(0..la.len() - 1);
                    if j >= i {
                        j += 1;
                    }
                    ordered(la[i], la[j])
                } else {
                    ordered(la[rng.random_range(0..la.len())], lb[rng.random_range(0..lb.len())])
                }
            };
            if count <= total / 2 {
                let mut chosen = HashSet::with_capacity(count as usize);
                while (chosen.len() as u64) < count {
                    let e = draw(&mut rng);
                    if chosen.insert(e) {
                        edges.push(e);
                    }
                }
            } else {
                let mut excluded = HashSet::with_capacity((total - count) as usize);
                while (excluded.len() as u64) < total - count {
                    excluded.insert(draw(&mut rng));
                }
                let mut push = |e: (usize, usize)| {
                    if !excluded.contains(&e) {
                        edges.push(e);
                    }
                };
                if a == b {
                    for (r, &u) in la.iter().enumerate() {
                        for &v in &la[r + 1..] {
                            push(ordered(u, v));
                        }
                    }
                } else {
                    for &u in la {
                        for &v in lb {
                            push(ordered(u, v));
                        }
                    }
                }
            }
        }
    }
    Ok(PercolationSample {
        n,
        edges,
        p: c / n as f64,
        mode: EdgeMode::Bernoulli,
        seed,
    })
}

fn union_find_of(sample: &PercolationSample) -> UnionFind {
    let mut uf = UnionFind::new(sample.n);
    for &(a, b) in &sample.edges {
        uf.union(a, b);
    }
    uf
}

/// Connected components by union-find.
pub fn components(sample: &PercolationSample) -> ComponentStats {
    let mut uf = union_find_of(sample);
    ComponentStats::from_sizes(sample.n, uf.sizes()).expect("union-find conserves vertices")
}

/// `k ↦` number of vertices lying in components of size `k` that contain a
/// cycle (more than `k − 1` edges), for `k ≤ k_max`.
pub fn non_tree_census(sample: &PercolationSample, k_max: usize) -> BTreeMap<usize, usize> {
    let mut uf = union_find_of(sample);
    let mut edge_count = vec![0usize; sample.n];
    for &(a, _) in &sample.edges {
        let r = uf.find(a);
        edge_count[r] += 1;
    }
    let mut out = BTreeMap::new();
    for v in 0..sample.n {
        if uf.find(v) == v {
            let size = uf.set_size(v);
            if size <= k_max && edge_count[v] >= size {
                *out.entry(size).or_insert(0) += size;
            }
        }
    }
    out
}

/// Sprinkled coupling of `G((1−δ)p)` inside `G(p)`.
///
/// `combined` is exactly `sample(graph, p, Bernoulli, seed)`; `base` keeps each
/// of its edges independently with probability `1 − δ` (a second ChaCha
/// stream, stream id 1). Then `base ~ G((1−δ)p)`, and given `base` each of its
/// non-edges lies in `combined` independently with probability
/// `s = (pβ − (1−δ)pβ) / (1 − (1−δ)pβ)`, which is the two-round construction.
pub fn two_phase_sample(
    graph: &WeightedGraph,
    p: f64,
    delta: f64,
    seed: u64,
) -> Result<(PercolationSample, PercolationSample)> {
    check_p(p)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta must lie in (0,1), got {delta}")));
    }
    if p * graph.beta_max() > 1.0 {
        return Err(Error::Precondition(format!(
            "p·β_max = {} > 1; clamped probabilities cannot be coupled",
            p * graph.beta_max()
        )));
    }
    let combined = sample(graph, p, EdgeMode::Bernoulli, seed)?;
    let mut rng = rng_from_seed(seed);
    rng.set_stream(1);
    let keep = 1.0 - delta;
    let base_edges = combined
        .edges
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < keep)
        .collect();
    let base = PercolationSample {
        n: combined.n,
        edges: base_edges,
        p: keep * p,
        mode: EdgeMode::Bernoulli,
        seed,
    };
    Ok((base, combined))
}

/// How the edge scale of a replicated experiment is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    /// Absolute `p`.
    P(f64),
    /// `p = c / n`.
    C(f64),
}

impl Intensity {
    pub fn p_for(self, n: usize) -> f64 {
        match self {
            Intensity::P(p) => p,
            Intensity::C(c) => c / n as f64,
        }
    }
}

/// Mean, standard error, min and max of a replicated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStat {
    pub fn of(values: &[f64]) -> SummaryStat {
        let k = values.len();
        if k == 0 {
            return SummaryStat {
                mean: f64::NAN,
                stderr: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let stderr = if k > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        SummaryStat {
            mean,
            stderr,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: u64,
    pub seed: u64,
    pub c1: usize,
    pub c2: usize,
    /// `N_1 … N_20`.
    pub nk: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub reps: usize,
    pub n: usize,
    pub p: f64,
    pub base_seed: u64,
    pub c1_frac: SummaryStat,
    pub c2_frac: SummaryStat,
    /// Summary of `N_k / n` for `k = 1..=20`.
    pub nk_frac: Vec<SummaryStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateTable {
    pub rows: Vec<RepRow>,
    pub summary: ReplicateSummary,
}

impl ReplicateTable {
    /// CSV with header `rep,seed,C1,C2,N1..N20`; counts are vertex counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rep,seed,C1,C2");
        for k in 1..=CENSUS_K_MAX {
            out.push_str(&format!(",N{k}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}", r.rep, r.seed, r.c1, r.c2));
            for v in &r.nk {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serialises")
    }
}

/// Runs `reps` independent samples of `G(p)` with seeds `mix_seed(base_seed, r)`
/// and returns each replica's seed and census, ordered by replica index.
pub fn replicate_stats(
    graph: &WeightedGraph,
    p: f64,
    mode: EdgeMode,
    reps: usize,
    base_seed: u64,
) -> Result<Vec<(u64, ComponentStats)>> {
    check_p(p)?;
    if reps == 0 {
        return Err(Error::Domain("reps must be at least 1".into()));
    }
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let seed = mix_seed(base_seed, r);
            let s = sample(graph, p, mode, seed)?;
            Ok((seed, components(&s)))
        })
        .collect()
}

/// Replicated component census on a fixed graph.
pub fn replicate_graph(
    graph: &WeightedGraph,
    p: f64,
    mode: EdgeMode,
    reps: usize,
    base_seed: u64,
) -> Result<ReplicateTable> {
    let n = graph.n();
    let stats = replicate_stats(graph, p, mode, reps, base_seed)?;
    let rows: Vec<RepRow> = stats
        .iter()
        .enumerate()
        .map(|(r, (seed, st))| RepRow {
            rep: r as u64,
            seed: *seed,
            c1: st.c1(),
            c2: st.c2(),
            nk: (1..=CENSUS_K_MAX).map(|k| st.n_k(k)).collect(),
        })
        .collect();
    let frac = |f: &dyn Fn(&RepRow) -> usize| -> SummaryStat {
        SummaryStat::of(&rows.iter().map(|r| f(r) as f64 / n as f64).collect::<Vec<_>>())
    };
    let summary = ReplicateSummary {
        reps,
        n,
        p,
        base_seed,
        c1_frac: frac(&|r| r.c1),
        c2_frac: frac(&|r| r.c2),
        nk_frac: (0..CENSUS_K_MAX).map(|k| frac(&|r| r.nk[k])).collect(),
    };
    Ok(ReplicateTable { rows, summary })
}

/// Builds the generator's graph once and replicates percolation on it.
pub fn replicate(
    spec: &GeneratorSpec,
    intensity: Intensity,
    mode: EdgeMode,
    reps: usize,
    base_seed: u64,
) -> Result<ReplicateTable> {
    let graph = spec.build()?;
    replicate_graph(&graph, intensity.p_for(graph.n()), mode, reps, base_seed)
}
