//! Homomorphism densities `t(F, G)` and `t(F, W)`, double-star moments and
//! convergence diagnostics.
//!
//! Densities factor over the connected components of the pattern. Tree
//! components are evaluated exactly by message passing (one weighted
//! matrix-vector product per edge), triangles by one matrix product, and any
//! other component by summing over all maps into `V`, guarded by
//! [`HOM_BUDGET`] on `N^k`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{cut_distance, Estimate, StepKernel};
use crate::weighted_graph::WeightedGraph;

pub const MAX_PATTERN_SIZE: usize = 10;
/// Largest `N^k` evaluated by direct summation.
pub const HOM_BUDGET: f64 = 1e9;
/// Largest grid used when coarsening an empirical graphon.
pub const COARSE_MAX_BLOCKS: usize = 60;

/// A simple graph on `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PatternGraph {
    k: usize,
    edges: Vec<(usize, usize)>,
}

impl PatternGraph {
    pub fn new(k: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if k == 0 || k > MAX_PATTERN_SIZE {
            return Err(Error::Domain(format!("pattern size must lie in 1..={MAX_PATTERN_SIZE}, got {k}")));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            if a == b || a >= k || b >= k {
                return Err(Error::InvalidGraph(format!("bad pattern edge ({a},{b}) for k = {k}")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        let before = norm.len();
        norm.dedup();
        if norm.len() != before {
            return Err(Error::InvalidGraph("pattern has a repeated edge".into()));
        }
        Ok(PatternGraph { k, edges: norm })
    }

    pub fn edge() -> Self {
        PatternGraph { k: 2, edges: vec![(0, 1)] }
    }

    pub fn path(k: usize) -> Result<Self> {
        Self::new(k, (1..k).map(|i| (i - 1, i)).collect())
    }

    pub fn cycle(k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::Domain("a cycle needs at least 3 vertices".into()));
        }
        Self::new(k, (0..k).map(|i| (i, (i + 1) % k)).collect())
    }

    pub fn triangle() -> Self {
        PatternGraph {
            k: 3,
            edges: vec![(0, 1), (0, 2), (1, 2)],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `F₁ ⊔ F₂`, with the vertices of `other` shifted by `self.k()`.
    pub fn disjoint_union(&self, other: &PatternGraph) -> Result<Self> {
        let shift = self.k;
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|(a, b)| (a + shift, b + shift)));
        Self::new(self.k + other.k, edges)
    }

    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.k];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    pub fn is_forest(&self) -> bool {
        let mut uf = crate::unionfind::UnionFind::new(self.k);
        self.edges.iter().all(|&(a, b)| uf.union(a, b))
    }

    /// Canonical name `k:a-b,c-d`, e.g. `3:0-1,1-2`.
    pub fn name(&self) -> String {
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a}-{b}")).collect();
        format!("{}:{}", self.k, edges.join(","))
    }

    /// Parses a canonical name or one of the aliases `edge`, `path3`,
    /// `path4`, `triangle`, `s<t1><t2>` (double star, single digits).
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        match t {
            "edge" => return Ok(Self::edge()),
            "triangle" => return Ok(Self::triangle()),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("path") {
            if let Ok(k) = rest.parse::<usize>() {
                return Self::path(k);
            }
        }
        if let Some(rest) = t.strip_prefix('s') {
            let digits: Vec<u32> = rest.chars().filter_map(|c| c.to_digit(10)).collect();
            if digits.len() == 2 && rest.len() == 2 {
                return double_star(digits[0] as usize, digits[1] as usize);
            }
        }
        let (k, list) = t
            .split_once(':')
            .ok_or_else(|| Error::Domain(format!("unknown pattern {t:?}")))?;
        let k: usize = k.parse().map_err(|_| Error::Domain(format!("bad vertex count in {t:?}")))?;
        let mut edges = Vec::new();
        for e in list.split(',').filter(|s| !s.is_empty()) {
            let (a, b) = e
                .split_once('-')
                .ok_or_else(|| Error::Domain(format!("bad edge {e:?} in {t:?}")))?;
            let a = a.parse().map_err(|_| Error::Domain(format!("bad edge {e:?}")))?;
            let b = b.parse().map_err(|_| Error::Domain(format!("bad edge {e:?}")))?;
            edges.push((a, b));
        }
        Self::new(k, edges)
    }
}

impl fmt::Display for PatternGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl TryFrom<String> for PatternGraph {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Self::parse(&s)
    }
}

impl From<PatternGraph> for String {
    fn from(p: PatternGraph) -> String {
        p.name()
    }
}

/// The double star `S_{t1,t2}`: edge `0–1` with `t1` pendant edges at 0 and
/// `t2` at 1.
pub fn double_star(t1: usize, t2: usize) -> Result<PatternGraph> {
    let k = t1 + t2 + 2;
    if k > MAX_PATTERN_SIZE {
        return Err(Error::Domain(format!("double star needs {k} > {MAX_PATTERN_SIZE} vertices")));
    }
    let mut edges = vec![(0, 1)];
    edges.extend((0..t1).map(|i| (0, 2 + i)));
    edges.extend((0..t2).map(|i| (1, 2 + t1 + i)));
    PatternGraph::new(k, edges)
}

/// `Σ_{x:[k]→[N]} ∏ w_{x_i} ∏_{ij∈E} entry(x_i, x_j)` for a forest, by message
/// passing; `matvec(x, y)` must set `y_i = Σ_j entry(i, j) x_j`.
fn forest_density(f: &PatternGraph, weights: &[f64], matvec: &(dyn Fn(&[f64], &mut [f64]) + Sync)) -> f64 {
    let adj = f.adjacency();
    let n = weights.len();
    let mut visited = vec![false; f.k];
    let mut total = 1.0;
    for root in 0..f.k {
        if visited[root] {
            continue;
        }
        // Preorder with parents, then fold messages in reverse.
        let mut order = Vec::new();
        let mut parent = vec![usize::MAX; f.k];
        let mut stack = vec![root];
        visited[root] = true;
        while let Some(v) = stack.pop() {
            order.push(v);
            for &u in &adj[v] {
                if !visited[u] {
                    visited[u] = true;
                    parent[u] = v;
                    stack.push(u);
                }
            }
        }
        let mut msg: Vec<Vec<f64>> = vec![Vec::new(); f.k];
        for &v in order.iter().rev() {
            let mut own = vec![1.0; n];
            for &u in &adj[v] {
                if parent[u] == v {
                    let weighted: Vec<f64> = weights.iter().zip(&msg[u]).map(|(w, m)| w * m).collect();
                    let mut pulled = vec![0.0; n];
                    matvec(&weighted, &mut pulled);
                    own.iter_mut().zip(&pulled).for_each(|(o, p)| *o *= p);
                    msg[u] = Vec::new();
                }
            }
            msg[v] = own;
        }
        total *= weights.iter().zip(&msg[root]).map(|(w, m)| w * m).sum::<f64>();
    }
    total
}

fn check_budget(n: usize, k: usize) -> Result<()> {
    let cost = (n as f64).powi(k as i32);
    if cost > HOM_BUDGET {
        return Err(Error::Budget {
            what: "homomorphism summation over all maps",
            required: cost,
            limit: HOM_BUDGET,
        });
    }
    Ok(())
}

/// Direct summation; `entry` is a row-major `N×N` matrix.
fn brute_density(f: &PatternGraph, weights: &[f64], entry: &[f64]) -> f64 {
    let n = weights.len();
    let k = f.k;
    // back[v] = earlier neighbours of v.
    let mut back = vec![Vec::new(); k];
    for &(a, b) in &f.edges {
        back[b].push(a);
    }
    fn rec(v: usize, prod: f64, x: &mut Vec<usize>, back: &[Vec<usize>], w: &[f64], e: &[f64], n: usize) -> f64 {
        if v == back.len() {
            return prod;
        }
        let mut s = 0.0;
        for i in 0..n {
            let mut p = prod * w[i];
            for &u in &back[v] {
                p *= e[x[u] * n + i];
            }
            if p != 0.0 {
                x.push(i);
                s += rec(v + 1, p, x, back, w, e, n);
                x.pop();
            }
        }
        s
    }
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![i];
            rec(1, weights[i], &mut x, &back, weights, entry, n)
        })
        .sum()
}

/// Connected components of `F`, each relabelled to `0..k_i`.
fn split_components(f: &PatternGraph) -> Vec<PatternGraph> {
    let mut uf = crate::unionfind::UnionFind::new(f.k);
    for &(a, b) in &f.edges {
        uf.union(a, b);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; f.k];
    for v in 0..f.k {
        let r = uf.find(v);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(v);
    }
    groups
        .into_iter()
        .map(|verts| {
            let mut index = vec![usize::MAX; f.k];
            for (i, &v) in verts.iter().enumerate() {
                index[v] = i;
            }
            let edges = f
                .edges
                .iter()
                .filter(|(a, _)| index[*a] != usize::MAX)
                .map(|&(a, b)| (index[a], index[b]))
                .collect();
            PatternGraph::new(verts.len(), edges).expect("sub-pattern of a valid pattern")
        })
        .collect()
}

fn is_triangle(f: &PatternGraph) -> bool {
    f.k == 3 && f.edges.len() == 3
}

/// `Σ_{ijk} w_i w_j w_k A_ij A_jk A_ki` with one matrix product.
fn triangle_density(weights: &[f64], entry: &[f64]) -> f64 {
    let n = weights.len();
    let a = nalgebra::DMatrix::from_row_slice(n, n, entry);
    let mut aw = a.clone();
    for (j, w) in weights.iter().enumerate() {
        aw.column_mut(j).scale_mut(*w);
    }
    let c = &aw * &a;
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            s += weights[i] * weights[k] * a[(i, k)] * c[(i, k)];
        }
    }
    s
}

/// Product over connected components of `F`: trees by message passing,
/// triangles by a matrix product, anything else by direct summation.
fn density(
    f: &PatternGraph,
    weights: &[f64],
    matvec: &(dyn Fn(&[f64], &mut [f64]) + Sync),
    dense: &dyn Fn() -> Vec<f64>,
) -> Result<f64> {
    let n = weights.len();
    let parts = split_components(f);
    for part in &parts {
        if !part.is_forest() {
            check_budget(n, part.k)?;
        }
    }
    let mut matrix: Option<Vec<f64>> = None;
    let mut total = 1.0;
    for part in &parts {
        total *= if part.is_forest() {
            forest_density(part, weights, matvec)
        } else {
            let m = matrix.get_or_insert_with(dense);
            if is_triangle(part) {
                triangle_density(weights, m)
            } else {
                brute_density(part, weights, m)
            }
        };
    }
    Ok(total)
}

/// `t(F, G) = n^{−k} Σ_{x:[k]→V} ∏_{ij∈E(F)} β_{x_i x_j}` (maps need not be
/// injective).
pub fn t_graph(f: &PatternGraph, g: &WeightedGraph) -> Result<f64> {
    let n = g.n();
    let weights = vec![1.0 / n as f64; n];
    density(f, &weights, &|x, y| g.matvec(x, y), &|| g.to_dense_matrix())
}

/// `t(F, W) = Σ_b ∏_i μ_{b_i} ∏_{ij∈E(F)} W_{b_i b_j}`.
pub fn t_kernel(f: &PatternGraph, w: &StepKernel) -> Result<f64> {
    let m = w.m();
    let values = w.values_flat();
    density(
        f,
        w.block_measures(),
        &|x, y| {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = values[i * m..(i + 1) * m].iter().zip(x).map(|(a, b)| a * b).sum();
            }
        },
        &|| values.to_vec(),
    )
}

/// `X_{t1,t2} = n^{−(t1+t2+2)} Σ_{v,w} d_v^{t1} d_w^{t2} β_vw`.
pub fn joint_moment(g: &WeightedGraph, t1: usize, t2: usize) -> Result<f64> {
    if t1 + t2 + 2 > MAX_PATTERN_SIZE {
        return Err(Error::Domain(format!("t1 + t2 + 2 must not exceed {MAX_PATTERN_SIZE}")));
    }
    let n = g.n();
    let nf = n as f64;
    // Degrees scaled by 1/n keep the powers in range.
    let d: Vec<f64> = g.degrees().iter().map(|x| x / nf).collect();
    let right: Vec<f64> = d.iter().map(|x| x.powi(t2 as i32)).collect();
    let mut pulled = vec![0.0; n];
    g.matvec(&right, &mut pulled);
    Ok(d.iter().zip(&pulled).map(|(x, p)| x.powi(t1 as i32) * p).sum::<f64>() / (nf * nf))
}

/// `E_vw(β_vw D_vw^t)` with `D_vw = d_v/n + d_w/n`, summed directly over all
/// ordered pairs.
pub fn edge_degree_moment(g: &WeightedGraph, t: usize) -> f64 {
    let n = g.n();
    let nf = n as f64;
    let d: Vec<f64> = g.degrees().iter().map(|x| x / nf).collect();
    let mut s = 0.0;
    for v in 0..n {
        for w in 0..n {
            let b = g.weight(v, w);
            if b != 0.0 {
                s += b * (d[v] + d[w]).powi(t as i32);
            }
        }
    }
    s / (nf * nf)
}

/// `∫∫ W(x,y) e^{−λ(x)} e^{−λ(y)}`, the limit of `N₂/n`.
pub fn expected_n2_limit(w: &StepKernel) -> Result<f64> {
    let lambda = w.degree_function()?;
    let mu = w.block_measures();
    let m = w.m();
    let e: Vec<f64> = lambda.values.iter().map(|l| (-l).exp()).collect();
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..m {
            s += mu[i] * mu[j] * w.value(i, j) * e[i] * e[j];
        }
    }
    Ok(s)
}

/// `k² · max{1, β_max^k}`, the bound on the mean number of vertices in
/// `k`-vertex components containing a cycle of `G_n(1/n)`.
pub fn non_tree_bound(k: usize, beta_max: f64) -> f64 {
    (k * k) as f64 * beta_max.powi(k as i32).max(1.0)
}

/// Averages `β` over a `g×g` grid of consecutive vertex ranges, with `g` the
/// largest divisor of `n` not exceeding `max_blocks`.
pub fn coarsen(g: &WeightedGraph, max_blocks: usize) -> Result<StepKernel> {
    let n = g.n();
    let blocks = (1..=max_blocks.min(n)).rev().find(|d| n.is_multiple_of(*d)).unwrap_or(1);
    let width = n / blocks;
    let mut sums = vec![0.0; blocks * blocks];
    for i in 0..n {
        for j in 0..n {
            sums[(i / width) * blocks + j / width] += g.weight(i, j);
        }
    }
    let cell = (width * width) as f64;
    sums.iter_mut().for_each(|s| *s /= cell);
    StepKernel::from_flat(vec![1.0 / blocks as f64; blocks], sums)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub n: usize,
    pub pattern: String,
    pub t_graph: f64,
    pub t_kernel: f64,
    pub abs_dev: f64,
}

/// Cut-distance proxy between a coarsened empirical graphon and the limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutProxy {
    pub n: usize,
    pub blocks: usize,
    pub distance: Estimate,
    /// Always `true`: coarsening plus (possibly heuristic) search.
    pub heuristic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<DiagnosticRow>,
    /// `None` for a graph whose coarsening is incommensurable with `W`.
    pub cut_proxy: Vec<Option<CutProxy>>,
}

impl ConvergenceTable {
    /// CSV `n,pattern,t_graph,t_kernel,abs_dev`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,pattern,t_graph,t_kernel,abs_dev\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},\"{}\",{:.16e},{:.16e},{:.16e}\n",
                r.n, r.pattern, r.t_graph, r.t_kernel, r.abs_dev
            ));
        }
        out
    }

    /// Deviations of one pattern, in graph order.
    pub fn column(&self, pattern: &PatternGraph) -> Vec<f64> {
        let name = pattern.name();
        self.rows.iter().filter(|r| r.pattern == name).map(|r| r.abs_dev).collect()
    }
}

/// `|t(F, G_n) − t(F, W)|` for every graph and pattern, plus the coarsened
/// cut-distance proxy per graph.
pub fn convergence_diagnostic(graphs: &[WeightedGraph], w: &StepKernel, patterns: &[PatternGraph]) -> Result<ConvergenceTable> {
    let limits: Vec<f64> = patterns.iter().map(|f| t_kernel(f, w)).collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..graphs.len())
        .flat_map(|g| (0..patterns.len()).map(move |f| (g, f)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(gi, fi)| {
            let tg = t_graph(&patterns[fi], &graphs[gi])?;
            Ok(DiagnosticRow {
                n: graphs[gi].n(),
                pattern: patterns[fi].name(),
                t_graph: tg,
                t_kernel: limits[fi],
                abs_dev: (tg - limits[fi]).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cut_proxy = graphs
        .par_iter()
        .map(|g| {
            let coarse = coarsen(g, COARSE_MAX_BLOCKS)?;
            match cut_distance(&coarse, w) {
                Ok(distance) => Ok(Some(CutProxy {
                    n: g.n(),
                    blocks: coarse.m(),
                    distance,
                    heuristic: true,
                })),
                Err(Error::Incommensurable(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceTable { rows, cut_proxy })
}
