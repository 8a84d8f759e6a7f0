//! Weighted graphs `G_n`: symmetric nonnegative weights `β` with zero diagonal.
//!
//! Two storage layouts share one interface. Dense storage keeps the full
//! `n × n` matrix and is used for loaded and small random graphs. Block
//! storage keeps a type per vertex and an `m × m` value table, with
//! `β_ij = values[t_i][t_j]` for `i ≠ j`; every generator in this module
//! produces block storage, which lets percolation and spectral routines run at
//! `n` in the tens of thousands without materialising `β`.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::StepKernel;
use crate::seed::rng_from_seed;
use crate::spectral;

/// Largest `n` for which [`WeightedGraph::find_ab_cut`] enumerates exactly.
pub const AB_CUT_EXACT_MAX_N: usize = 24;

#[derive(Debug, Clone)]
pub(crate) enum Storage {
    Dense(Vec<f64>),
    Block {
        m: usize,
        types: Vec<usize>,
        members: Vec<Vec<usize>>,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct WeightedGraph {
    n: usize,
    storage: Storage,
    beta_max: f64,
    sample_points: Option<Vec<f64>>,
}

/// Result of [`WeightedGraph::find_ab_cut`].
#[derive(Debug, Clone, PartialEq)]
pub struct AbCut {
    /// Witness `X` with `an ≤ |X| ≤ (1−a)n` and `e(X, Xᶜ) ≤ bn²`, sorted.
    pub set: Option<Vec<usize>>,
    /// Smallest cut weight seen among balanced partitions.
    pub best_cut: f64,
    /// `false` when the search was heuristic, in which case a missing witness
    /// does not prove that none exists.
    pub exact: bool,
}

impl WeightedGraph {
    /// Dense graph from a row-major `n × n` matrix.
    pub fn from_dense(n: usize, beta: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        if beta.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: beta.len(),
            });
        }
        let mut beta_max = 0.0f64;
        for i in 0..n {
            if beta[i * n + i] != 0.0 {
                return Err(Error::InvalidGraph(format!("nonzero diagonal at vertex {i}")));
            }
            for j in (i + 1)..n {
                let w = beta[i * n + j];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidGraph(format!("weight {w} at ({i},{j}) must be finite and ≥ 0")));
                }
                if w != beta[j * n + i] {
                    return Err(Error::InvalidGraph(format!("asymmetric weight at ({i},{j})")));
                }
                beta_max = beta_max.max(w);
            }
        }
        Ok(WeightedGraph {
            n,
            storage: Storage::Dense(beta),
            beta_max,
            sample_points: None,
        })
    }

    /// Dense graph from `(i, j, β_ij)` triples; unlisted pairs have weight 0.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut beta = vec![0.0; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for n = {n}")));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at {i}")));
            }
            beta[i * n + j] = w;
            beta[j * n + i] = w;
        }
        Self::from_dense(n, beta)
    }

    fn from_types(kernel: &StepKernel, types: Vec<usize>, sample_points: Option<Vec<f64>>) -> Result<Self> {
        if !kernel.is_nonnegative() {
            return Err(Error::SignedKernel);
        }
        let n = types.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let m = kernel.m();
        let mut members = vec![Vec::new(); m];
        for (v, &t) in types.iter().enumerate() {
            members[t].push(v);
        }
        let mut beta_max = 0.0f64;
        for a in 0..m {
            for b in a..m {
                let present = if a == b {
                    members[a].len() >= 2
                } else {
                    !members[a].is_empty() && !members[b].is_empty()
                };
                if present {
                    beta_max = beta_max.max(kernel.value(a, b));
                }
            }
        }
        Ok(WeightedGraph {
            n,
            storage: Storage::Block {
                m,
                types,
                members,
                values: kernel.values_flat().to_vec(),
            },
            beta_max,
            sample_points,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub(crate) fn storage(&self) -> &Storage {
        &self.storage
    }

    /// Block index of every vertex, for block-structured graphs.
    pub fn block_types(&self) -> Option<&[usize]> {
        match &self.storage {
            Storage::Block { types, .. } => Some(types),
            Storage::Dense(_) => None,
        }
    }

    /// The uniform points `X_i` drawn by [`sample_dense`].
    pub fn sample_points(&self) -> Option<&[f64]> {
        self.sample_points.as_deref()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(beta) => beta[i * self.n + j],
            Storage::Block { m, types, values, .. } => {
                if i == j {
                    0.0
                } else {
                    values[types[i] * m + types[j]]
                }
            }
        }
    }

    /// Row-major copy of `β`.
    pub fn to_dense_matrix(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(beta) => beta.clone(),
            Storage::Block { .. } => {
                let n = self.n;
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        out[i * n + j] = self.weight(i, j);
                    }
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> WeightedGraph {
        WeightedGraph {
            n: self.n,
            storage: Storage::Dense(self.to_dense_matrix()),
            beta_max: self.beta_max,
            sample_points: self.sample_points.clone(),
        }
    }

    fn check_vertex(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(Error::Domain(format!("vertex {v} out of range for n = {}", self.n)));
        }
        Ok(())
    }

    /// `d_v = Σ_w β_vw`.
    pub fn weighted_degree(&self, v: usize) -> Result<f64> {
        self.check_vertex(v)?;
        Ok(match &self.storage {
            Storage::Dense(beta) => beta[v * self.n..(v + 1) * self.n].iter().sum(),
            Storage::Block { m, types, members, values } => {
                let t = types[v];
                (0..*m)
                    .map(|b| values[t * m + b] * members[b].len() as f64)
                    .sum::<f64>()
                    - values[t * m + t]
            }
        })
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n)
            .map(|v| self.weighted_degree(v).expect("vertex in range"))
            .collect()
    }

    /// `Σ_{i<j} β_ij`.
    pub fn total_weight(&self) -> f64 {
        0.5 * self.degrees().iter().sum::<f64>()
    }

    /// `y = β x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        match &self.storage {
            Storage::Dense(beta) => {
                for (i, yi) in y.iter_mut().enumerate() {
                    *yi = beta[i * n..(i + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            Storage::Block { m, types, members, values } => {
                let sums: Vec<f64> = members.iter().map(|vs| vs.iter().map(|&v| x[v]).sum()).collect();
                let per_block: Vec<f64> = (0..*m)
                    .map(|a| (0..*m).map(|b| values[a * m + b] * sums[b]).sum())
                    .collect();
                for (i, yi) in y.iter_mut().enumerate() {
                    let t = types[i];
                    *yi = per_block[t] - values[t * m + t] * x[i];
                }
            }
        }
    }

    /// Largest eigenvalue `λ_n` of `β`.
    pub fn top_eigenvalue(&self) -> Result<f64> {
        spectral::top_eigenvalue(
            self.n,
            |x, y| self.matvec(x, y),
            spectral::DEFAULT_TOL,
            spectral::DEFAULT_MAX_ITER,
        )
    }

    fn membership(&self, set: &[usize]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.n];
        for &v in set {
            self.check_vertex(v)?;
            mask[v] = true;
        }
        Ok(mask)
    }

    /// `e(A, B) = Σ_{v∈A} Σ_{w∈B} β_vw`; `A` and `B` may overlap.
    pub fn cut_weight(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        let in_a = self.membership(a)?;
        let in_b = self.membership(b)?;
        let b_list: Vec<usize> = (0..self.n).filter(|&v| in_b[v]).collect();
        Ok(match &self.storage {
            Storage::Dense(beta) => (0..self.n)
                .filter(|&v| in_a[v])
                .map(|v| b_list.iter().map(|&w| beta[v * self.n + w]).sum::<f64>())
                .sum(),
            Storage::Block { m, types, values, .. } => {
                let mut count_b = vec![0.0; *m];
                for &w in &b_list {
                    count_b[types[w]] += 1.0;
                }
                (0..self.n)
                    .filter(|&v| in_a[v])
                    .map(|v| {
                        let t = types[v];
                        let full: f64 = (0..*m).map(|c| values[t * m + c] * count_b[c]).sum();
                        if in_b[v] {
                            full - values[t * m + t]
                        } else {
                            full
                        }
                    })
                    .sum()
            }
        })
    }

    /// Looks for an `(a, b)`-cut: `X` with `an ≤ |X| ≤ (1−a)n` and
    /// `e(X, Xᶜ) ≤ bn²`.
    ///
    /// Exhaustive (Gray-code enumeration, minimal cut returned) for
    /// `n ≤ AB_CUT_EXACT_MAX_N`. Larger graphs use a spectral bisection seed
    /// refined by single-vertex moves, and report `exact = false`.
    pub fn find_ab_cut(&self, a: f64, b: f64) -> Result<AbCut> {
        if !(a > 0.0 && a <= 0.5) {
            return Err(Error::Domain(format!("a must lie in (0, 0.5], got {a}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::Domain(format!("b must be positive, got {b}")));
        }
        let n = self.n;
        let lo = (a * n as f64).ceil() as usize;
        let hi = ((1.0 - a) * n as f64).floor() as usize;
        let limit = b * (n * n) as f64;
        if lo > hi || lo == 0 {
            return Ok(AbCut {
                set: None,
                best_cut: f64::INFINITY,
                exact: true,
            });
        }
        let beta = self.to_dense_matrix();
        let degrees = self.degrees();
        let (candidate, exact) = if n <= AB_CUT_EXACT_MAX_N {
            (exact_min_balanced_cut(n, &beta, &degrees, lo, hi), true)
        } else {
            (heuristic_balanced_cut(self, &beta, &degrees, lo, hi), false)
        };
        let Some(mut set) = candidate else {
            return Ok(AbCut {
                set: None,
                best_cut: f64::INFINITY,
                exact,
            });
        };
        set.sort_unstable();
        let in_x = self.membership(&set)?;
        let complement: Vec<usize> = (0..n).filter(|&v| !in_x[v]).collect();
        let cut = self.cut_weight(&set, &complement)?;
        Ok(AbCut {
            set: (cut <= limit).then_some(set),
            best_cut: cut,
            exact,
        })
    }

    /// Piecewise-constant graphon `W_G` on `n` blocks of measure `1/n`.
    pub fn empirical_graphon(&self) -> StepKernel {
        StepKernel::from_flat(vec![1.0 / self.n as f64; self.n], self.to_dense_matrix())
            .expect("graph weights form a valid kernel")
    }

    /// Writes the text format: `n` on the first line, then `i j β_ij` for each
    /// pair `i < j` with nonzero weight.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::new();
        writeln!(buf, "{}", self.n).expect("write to string");
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let w = self.weight(i, j);
                if w != 0.0 {
                    writeln!(buf, "{i} {j} {w}").expect("write to string");
                }
            }
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads the text format of [`write_text`](Self::write_text). Blank lines
    /// and lines starting with `#` are ignored; repeated pairs are an error.
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut beta = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            match n {
                None => {
                    let value: usize = text.parse().map_err(|e| parse_err(format!("vertex count: {e}")))?;
                    if value == 0 {
                        return Err(parse_err("vertex count must be positive".into()));
                    }
                    n = Some(value);
                    beta = vec![0.0; value * value];
                }
                Some(n) => {
                    let fields: Vec<&str> = text.split_whitespace().collect();
                    if fields.len() != 3 {
                        return Err(parse_err(format!("expected 'i j weight', got {text:?}")));
                    }
                    let i: usize = fields[0].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let j: usize = fields[1].parse().map_err(|e| parse_err(format!("{e}")))?;
                    let w: f64 = fields[2].parse().map_err(|e| parse_err(format!("{e}")))?;
                    if i >= n || j >= n || i == j {
                        return Err(parse_err(format!("invalid pair ({i},{j}) for n = {n}")));
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(parse_err(format!("weight {w} must be finite and ≥ 0")));
                    }
                    if beta[i * n + j] != 0.0 {
                        return Err(parse_err(format!("pair ({i},{j}) listed twice")));
                    }
                    beta[i * n + j] = w;
                    beta[j * n + i] = w;
                }
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            msg: "empty input".into(),
        })?;
        let g = Self::from_dense(n, beta)?;
        let avg_degree = 2.0 * g.total_weight() / n as f64;
        if avg_degree < 0.01 * n as f64 {
            log::warn!(
                "loaded graph has average weighted degree {avg_degree:.4} < 0.01·n = {:.4}; it is not dense",
                0.01 * n as f64
            );
        }
        Ok(g)
    }
}

fn exact_min_balanced_cut(n: usize, beta: &[f64], degrees: &[f64], lo: usize, hi: usize) -> Option<Vec<usize>> {
    // Vertex n-1 stays in the complement; X and Xᶜ are interchangeable.
    let free = n - 1;
    let mut in_x = vec![false; n];
    let mut toward_x = vec![0.0; n];
    let mut size = 0usize;
    let mut cut = 0.0f64;
    let mut best: Option<(f64, u64)> = None;
    let mut gray: u64 = 0;
    for step in 1u64..(1u64 << free) {
        let v = step.trailing_zeros() as usize;
        if in_x[v] {
            cut -= degrees[v] - 2.0 * toward_x[v];
            in_x[v] = false;
            size -= 1;
            for u in 0..n {
                toward_x[u] -= beta[u * n + v];
            }
        } else {
            cut += degrees[v] - 2.0 * toward_x[v];
            in_x[v] = true;
            size += 1;
            for u in 0..n {
                toward_x[u] += beta[u * n + v];
            }
        }
        gray ^= 1 << v;
        if size >= lo && size <= hi && best.is_none_or(|(c, _)| cut < c) {
            best = Some((cut, gray));
        }
    }
    best.map(|(_, mask)| (0..free).filter(|&v| (mask >> v) & 1 == 1).collect())
}

fn heuristic_balanced_cut(g: &WeightedGraph, beta: &[f64], degrees: &[f64], lo: usize, hi: usize) -> Option<Vec<usize>> {
    let n = g.n();
    // Fiedler vector by power iteration on (2 d_max) I − L restricted to 1ᗮ.
    let shift = 2.0 * degrees.iter().fold(0.0f64, |a, d| a.max(*d)) + 1.0;
    let mut x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5).collect();
    let mut y = vec![0.0; n];
    for _ in 0..500 {
        let mean = x.iter().sum::<f64>() / n as f64;
        x.iter_mut().for_each(|v| *v -= mean);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        g.matvec(&x, &mut y);
        for i in 0..n {
            // ((2 d_max) I − D + β) x
            y[i] += (shift - degrees[i]) * x[i];
        }
        std::mem::swap(&mut x, &mut y);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));

    let mut in_x = vec![false; n];
    let mut toward_x = vec![0.0; n];
    let mut cut = 0.0;
    let mut best: Option<(f64, usize)> = None;
    for (k, &v) in order.iter().enumerate() {
        cut += degrees[v] - 2.0 * toward_x[v];
        in_x[v] = true;
        for u in 0..n {
            toward_x[u] += beta[u * n + v];
        }
        let size = k + 1;
        if size >= lo && size <= hi && best.is_none_or(|(c, _)| cut < c) {
            best = Some((cut, size));
        }
    }
    let (_, size) = best?;

    // Local improvement by single-vertex moves that keep the balance constraint.
    let mut in_x = vec![false; n];
    for &v in &order[..size] {
        in_x[v] = true;
    }
    let mut size = size;
    let mut toward_x: Vec<f64> = (0..n)
        .map(|u| (0..n).filter(|&w| in_x[w]).map(|w| beta[u * n + w]).sum())
        .collect();
    for _ in 0..n {
        let mut best_move: Option<(f64, usize)> = None;
        for v in 0..n {
            let (allowed, gain) = if in_x[v] {
                (size > lo, degrees[v] - 2.0 * toward_x[v])
            } else {
                (size < hi, -(degrees[v] - 2.0 * toward_x[v]))
            };
            // gain = reduction of the cut weight when v switches side
            if allowed && gain > 1e-12 && best_move.is_none_or(|(g, _)| gain > g) {
                best_move = Some((gain, v));
            }
        }
        let Some((_, v)) = best_move else { break };
        let delta = if in_x[v] { -1.0 } else { 1.0 };
        in_x[v] = !in_x[v];
        if in_x[v] {
            size += 1;
        } else {
            size -= 1;
        }
        for u in 0..n {
            toward_x[u] += delta * beta[u * n + v];
        }
    }
    Some((0..n).filter(|&v| in_x[v]).collect())
}

/// `K_n`: every off-diagonal weight 1.
pub fn complete_graph(n: usize) -> Result<WeightedGraph> {
    WeightedGraph::from_types(&StepKernel::constant(1.0), vec![0; n], None)
}

/// Deterministic blow-up: `β_ij = W((i+½)/n, (j+½)/n)` for `i ≠ j`.
pub fn blowup(kernel: &StepKernel, n: usize) -> Result<WeightedGraph> {
    let types = (0..n)
        .map(|i| kernel.block_of_unchecked((i as f64 + 0.5) / n as f64))
        .collect();
    WeightedGraph::from_types(kernel, types, None)
}

/// `W`-random weighted graph: i.i.d. uniform `X_i`, `β_ij = W(X_i, X_j)`.
pub fn sample_dense(kernel: &StepKernel, n: usize, seed: u64) -> Result<WeightedGraph> {
    let mut rng = rng_from_seed(seed);
    let points: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let types = points.iter().map(|&x| kernel.block_of_unchecked(x)).collect();
    WeightedGraph::from_types(kernel, types, Some(points))
}

/// Graph families accepted in generator configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphFamily {
    Complete,
    Blowup { kernel: StepKernel },
    SampleDense { kernel: StepKernel, seed: u64 },
}

impl GraphFamily {
    pub fn build(&self, n: usize) -> Result<WeightedGraph> {
        match self {
            GraphFamily::Complete => complete_graph(n),
            GraphFamily::Blowup { kernel } => blowup(kernel, n),
            GraphFamily::SampleDense { kernel, seed } => sample_dense(kernel, n, *seed),
        }
    }

    /// The graphon the family converges to.
    pub fn limit_kernel(&self) -> StepKernel {
        match self {
            GraphFamily::Complete => StepKernel::constant(1.0),
            GraphFamily::Blowup { kernel } | GraphFamily::SampleDense { kernel, .. } => kernel.clone(),
        }
    }
}

/// Generator config: `{"kind": "complete"|"blowup"|"sample_dense", "n": .., "kernel": .., "seed": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: GraphFamily,
    pub n: usize,
}

impl GeneratorSpec {
    pub fn build(&self) -> Result<WeightedGraph> {
        if self.n == 0 {
            return Err(Error::InvalidGraph("generator needs n ≥ 1".into()));
        }
        self.family.build(self.n)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
