//! Step kernels on `[0,1]²` and their analytic quantities.
//!
//! A [`StepKernel`] is constant on the rectangles `I_i × I_j` of a partition of
//! `[0,1]` into consecutive intervals `I_0, …, I_{m-1}` of positive length
//! `μ_i`. Block `i` is the half-open interval `[a_i, b_i)`, except the last
//! block which is closed. Nonnegative kernels are graphons; signed kernels are
//! only used for differences fed to [`StepKernel::cut_norm`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::spectral;

/// Tolerance on `Σ μ_i = 1` and on value asymmetry at construction.
pub const MEASURE_TOL: f64 = 1e-12;
/// Largest block count for which [`StepKernel::cut_norm`] enumerates exactly.
pub const CUT_NORM_EXACT_MAX_BLOCKS: usize = 20;
/// Largest block count for which [`cut_distance`] tries every permutation.
pub const CUT_DISTANCE_EXACT_MAX_BLOCKS: usize = 8;
/// Breakpoints closer than this are merged when refining two partitions.
pub const REFINE_TOL: f64 = 1e-9;
/// Largest equal-block grid tried when refining incommensurable partitions.
pub const MAX_REFINE_GRID: usize = 4096;

const CUT_NORM_RESTARTS: u64 = 32;
const CUT_NORM_SEED: u64 = 0x00C0_7A0B_5EED;
const ANNEAL_STEPS: usize = 200;
const ANNEAL_SEED: u64 = 0x0A22_EA15_5EED;

/// Value of a quantity together with whether it was computed exactly.
///
/// Heuristic cut norms (more than [`CUT_NORM_EXACT_MAX_BLOCKS`] blocks) are
/// lower bounds; heuristic cut distances are the best permutation found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub exact: bool,
}

/// A function of the type `x ∈ [0,1]` that is constant on each block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFunction {
    pub values: Vec<f64>,
}

impl BlockFunction {
    pub fn new(values: Vec<f64>) -> Self {
        BlockFunction { values }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        BlockFunction { values: vec![c; m] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `∫ f(x) dx` against the block measures of `kernel`.
    pub fn integral(&self, kernel: &StepKernel) -> Result<f64> {
        kernel.check_len(self.len())?;
        Ok(self
            .values
            .iter()
            .zip(kernel.block_measures())
            .map(|(f, mu)| f * mu)
            .sum())
    }

    pub fn sup_distance(&self, other: &BlockFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KernelRepr {
    block_measures: Vec<f64>,
    values: Vec<Vec<f64>>,
}

/// Piecewise-constant symmetric kernel on `[0,1]²`.
///
/// JSON form: `{"block_measures": [..], "values": [[..], ..]}`. Values that
/// are asymmetric by more than [`MEASURE_TOL`] are rejected, never silently
/// symmetrised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelRepr", into = "KernelRepr")]
pub struct StepKernel {
    measures: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    nonnegative: bool,
}

impl TryFrom<KernelRepr> for StepKernel {
    type Error = Error;

    fn try_from(r: KernelRepr) -> Result<Self> {
        StepKernel::new(r.block_measures, r.values)
    }
}

impl From<StepKernel> for KernelRepr {
    fn from(k: StepKernel) -> Self {
        let m = k.m();
        KernelRepr {
            values: (0..m).map(|i| k.row(i).to_vec()).collect(),
            block_measures: k.measures,
        }
    }
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.c
    }
}

fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Neumaier::default();
    xs.into_iter().for_each(|x| acc.add(x));
    acc.total()
}

impl StepKernel {
    pub fn new(measures: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = measures.len();
        if values.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: values.len(),
            });
        }
        let mut flat = Vec::with_capacity(m * m);
        for row in &values {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(measures, flat)
    }

    /// Builds a kernel from row-major values.
    pub fn from_flat(measures: Vec<f64>, mut values: Vec<f64>) -> Result<Self> {
        let m = measures.len();
        if m == 0 {
            return Err(Error::InvalidKernel("at least one block is required".into()));
        }
        if values.len() != m * m {
            return Err(Error::DimensionMismatch {
                expected: m * m,
                found: values.len(),
            });
        }
        if let Some(bad) = measures.iter().find(|mu| !(mu.is_finite() && **mu > 0.0)) {
            return Err(Error::InvalidKernel(format!(
                "block measures must be positive, found {bad}"
            )));
        }
        let total = compensated_sum(measures.iter().copied());
        if (total - 1.0).abs() > MEASURE_TOL {
            return Err(Error::InvalidKernel(format!(
                "block measures sum to {total}, not 1"
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidKernel(format!("non-finite value {bad}")));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let (a, b) = (values[i * m + j], values[j * m + i]);
                if (a - b).abs() > MEASURE_TOL {
                    return Err(Error::InvalidKernel(format!(
                        "values not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let mid = 0.5 * (a + b);
                values[i * m + j] = mid;
                values[j * m + i] = mid;
            }
        }
        let mut cumulative = Vec::with_capacity(m);
        let mut acc = Neumaier::default();
        for mu in &measures {
            acc.add(*mu);
            cumulative.push(acc.total());
        }
        cumulative[m - 1] = 1.0;
        let nonnegative = values.iter().all(|v| *v >= 0.0);
        Ok(StepKernel {
            measures,
            values,
            cumulative,
            nonnegative,
        })
    }

    /// The single-block kernel `W ≡ c`.
    pub fn constant(c: f64) -> Self {
        StepKernel::from_flat(vec![1.0], vec![c]).expect("finite constant")
    }

    /// Kernel on `m` blocks of measure `1/m`.
    pub fn equal_blocks(values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.len();
        if m == 0 {
            return Err(Error::InvalidKernel("at least one block is required".into()));
        }
        Self::new(vec![1.0 / m as f64; m], values)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel serialises")
    }

    /// Number of blocks.
    pub fn m(&self) -> usize {
        self.measures.len()
    }

    pub fn block_measures(&self) -> &[f64] {
        &self.measures
    }

    /// Right endpoints of the blocks; the last is exactly 1.
    pub fn breakpoints(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.m();
        &self.values[i * m..(i + 1) * m]
    }

    /// Row-major `m × m` values.
    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn is_nonnegative(&self) -> bool {
        self.nonnegative
    }

    /// `‖W‖_∞ = max |value|`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                found: len,
            });
        }
        Ok(())
    }

    fn require_nonnegative(&self) -> Result<()> {
        if self.nonnegative {
            Ok(())
        } else {
            Err(Error::SignedKernel)
        }
    }

    /// Index of the block containing `x`.
    pub fn block_of(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("point {x} is outside [0,1]")));
        }
        Ok(self.block_of_unchecked(x))
    }

    pub(crate) fn block_of_unchecked(&self, x: f64) -> usize {
        self.cumulative
            .partition_point(|c| *c <= x)
            .min(self.m() - 1)
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        let i = self.block_of(x)?;
        let j = self.block_of(y)?;
        Ok(self.value(i, j))
    }

    /// `λ_i = Σ_j μ_j W_ij`, the mean offspring count of a type-`i` particle.
    pub fn degree_function(&self) -> Result<BlockFunction> {
        self.require_nonnegative()?;
        Ok(self.apply_unchecked(&vec![1.0; self.m()]))
    }

    fn apply_unchecked(&self, f: &[f64]) -> BlockFunction {
        let m = self.m();
        let values = (0..m)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(&self.measures)
                    .zip(f)
                    .map(|((w, mu), fj)| mu * w * fj)
                    .sum()
            })
            .collect();
        BlockFunction { values }
    }

    /// `(T_W f)_i = Σ_j μ_j W_ij f_j`.
    pub fn apply(&self, f: &BlockFunction) -> Result<BlockFunction> {
        self.check_len(f.len())?;
        Ok(self.apply_unchecked(&f.values))
    }

    /// `M_ij = sqrt(μ_i μ_j) W_ij`, the matrix of `T_W` in the orthonormal
    /// basis of normalised block indicators.
    pub fn symmetrized_matrix(&self) -> Vec<f64> {
        let m = self.m();
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = (self.measures[i] * self.measures[j]).sqrt() * self.value(i, j);
            }
        }
        out
    }

    /// `‖T_W‖` on `L²[0,1]`.
    pub fn operator_norm(&self) -> Result<f64> {
        self.require_nonnegative()?;
        spectral::top_eigenvalue_dense(
            self.m(),
            &self.symmetrized_matrix(),
            spectral::DEFAULT_TOL,
            spectral::DEFAULT_MAX_ITER,
        )
    }

    /// Connected components of the block support graph (edge `i–j` when
    /// `W_ij > 0`), each sorted, ordered by smallest block.
    pub fn support_components(&self) -> Vec<Vec<usize>> {
        let m = self.m();
        let mut uf = crate::unionfind::UnionFind::new(m);
        for i in 0..m {
            for j in (i + 1)..m {
                if self.value(i, j) > 0.0 {
                    uf.union(i, j);
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; m];
        for b in 0..m {
            let r = uf.find(b);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(b);
        }
        groups
    }

    /// Irreducibility of the graphon.
    ///
    /// The support graph must be connected and every block must carry some
    /// mass: a block whose row vanishes can itself be split into two halves
    /// with no weight between them, so `W ≡ 0` is reducible even on one block.
    pub fn is_irreducible(&self) -> Result<bool> {
        self.require_nonnegative()?;
        let rows_nonzero = (0..self.m()).all(|i| self.row(i).iter().any(|v| *v > 0.0));
        Ok(rows_nonzero && self.support_components().len() == 1)
    }

    /// Kernel restricted to `blocks`, rescaled to live on `[0,1]`.
    ///
    /// Measures are renormalised by `μ(A) = Σ_{i∈A} μ_i` and values multiplied
    /// by `μ(A)`, so the branching process of the result is the restriction of
    /// the original process to types in `A`.
    pub fn restrict(&self, blocks: &[usize]) -> Result<StepKernel> {
        if blocks.is_empty() {
            return Err(Error::Precondition("cannot restrict to no blocks".into()));
        }
        if let Some(&b) = blocks.iter().find(|&&b| b >= self.m()) {
            return Err(Error::Domain(format!("block {b} out of range")));
        }
        let mass = compensated_sum(blocks.iter().map(|&b| self.measures[b]));
        let measures = blocks.iter().map(|&b| self.measures[b] / mass).collect();
        let mut values = Vec::with_capacity(blocks.len() * blocks.len());
        for &i in blocks {
            for &j in blocks {
                values.push(self.value(i, j) * mass);
            }
        }
        StepKernel::from_flat(normalise(measures), values)
    }

    /// Decomposition into irreducible parts (one per support component).
    pub fn irreducible_parts(&self) -> Result<Vec<KernelPart>> {
        self.require_nonnegative()?;
        self.support_components()
            .into_iter()
            .map(|blocks| {
                let measure = compensated_sum(blocks.iter().map(|&b| self.measures[b]));
                let kernel = self.restrict(&blocks)?;
                Ok(KernelPart {
                    blocks,
                    measure,
                    kernel,
                })
            })
            .collect()
    }

    /// `c · W`.
    pub fn scale(&self, c: f64) -> Result<StepKernel> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Domain(format!("scale factor must be finite and ≥ 0, got {c}")));
        }
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.nonnegative = out.values.iter().all(|v| *v >= 0.0);
        Ok(out)
    }

    /// Block rearrangement `W^φ(x, y) = W(φ(x), φ(y))`: block `i` of the
    /// result carries block `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<StepKernel> {
        let m = self.m();
        self.check_len(perm.len())?;
        let mut seen = vec![false; m];
        for &p in perm {
            if p >= m || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Domain("not a permutation".into()));
            }
        }
        let measures = perm.iter().map(|&p| self.measures[p]).collect();
        let mut values = Vec::with_capacity(m * m);
        for &pi in perm {
            for &pj in perm {
                values.push(self.value(pi, pj));
            }
        }
        StepKernel::from_flat(measures, values)
    }

    /// `self − other` on identical block structures.
    pub fn difference(&self, other: &StepKernel) -> Result<StepKernel> {
        self.check_len(other.m())?;
        if self
            .measures
            .iter()
            .zip(&other.measures)
            .any(|(a, b)| (a - b).abs() > MEASURE_TOL)
        {
            return Err(Error::Incommensurable(
                "difference needs identical block measures; refine first".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        StepKernel::from_flat(self.measures.clone(), values)
    }

    /// The same function on the finer partition with right endpoints `breaks`
    /// (which must include every breakpoint of `self`).
    pub fn refine(&self, breaks: &[f64]) -> Result<StepKernel> {
        if breaks.is_empty() || (breaks[breaks.len() - 1] - 1.0).abs() > REFINE_TOL {
            return Err(Error::Domain("refinement must end at 1".into()));
        }
        let mut measures = Vec::with_capacity(breaks.len());
        let mut owner = Vec::with_capacity(breaks.len());
        let mut left = 0.0;
        for &b in breaks {
            if b <= left {
                return Err(Error::Domain("refinement breakpoints must increase".into()));
            }
            measures.push(b - left);
            owner.push(self.block_of_unchecked(0.5 * (left + b)));
            left = b;
        }
        let k = measures.len();
        let mut values = Vec::with_capacity(k * k);
        for &a in &owner {
            for &b in &owner {
                values.push(self.value(a, b));
            }
        }
        StepKernel::from_flat(normalise(measures), values)
    }

    /// Cut norm `sup_{A,B} |∫_{A×B} K|`.
    ///
    /// The objective is bilinear in fractional block memberships, so the
    /// supremum is attained at unions of blocks. Up to
    /// [`CUT_NORM_EXACT_MAX_BLOCKS`] blocks every row set `A` is enumerated in
    /// Gray-code order and `B` is chosen by column sign; above that, 32
    /// deterministic restarts of alternating maximisation give a lower bound.
    pub fn cut_norm(&self) -> Estimate {
        let m = self.m();
        let mut a = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                a[i * m + j] = self.measures[i] * self.measures[j] * self.value(i, j);
            }
        }
        if m <= CUT_NORM_EXACT_MAX_BLOCKS {
            Estimate {
                value: cut_norm_exact(&a, m),
                exact: true,
            }
        } else {
            Estimate {
                value: cut_norm_alternating(&a, m),
                exact: false,
            }
        }
    }
}

/// One irreducible part of a reducible kernel.
#[derive(Debug, Clone)]
pub struct KernelPart {
    /// Blocks of the parent kernel in this part.
    pub blocks: Vec<usize>,
    /// `μ(A)` of the part.
    pub measure: f64,
    /// The part rescaled to `[0,1]` (see [`StepKernel::restrict`]).
    pub kernel: StepKernel,
}

fn normalise(mut measures: Vec<f64>) -> Vec<f64> {
    let total = compensated_sum(measures.iter().copied());
    measures.iter_mut().for_each(|m| *m /= total);
    measures
}

fn best_given_columns(col: &[f64]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &c in col {
        if c > 0.0 {
            pos += c;
        } else {
            neg -= c;
        }
    }
    f64::max(pos, neg)
}

fn cut_norm_exact(a: &[f64], m: usize) -> f64 {
    let mut col = vec![0.0; m];
    let mut in_set = vec![false; m];
    let mut best = 0.0f64;
    for step in 1u64..(1u64 << m) {
        let bit = step.trailing_zeros() as usize;
        let sign = if in_set[bit] { -1.0 } else { 1.0 };
        in_set[bit] = !in_set[bit];
        let row = &a[bit * m..(bit + 1) * m];
        for (c, r) in col.iter_mut().zip(row) {
            *c += sign * r;
        }
        best = best.max(best_given_columns(&col));
    }
    best
}

fn cut_norm_alternating(a: &[f64], m: usize) -> f64 {
    let mut best = 0.0f64;
    for restart in 0..CUT_NORM_RESTARTS {
        let mut rng = rng_from_seed(CUT_NORM_SEED.wrapping_add(restart));
        let start: Vec<bool> = (0..m).map(|_| rng.random_bool(0.5)).collect();
        for sign in [1.0, -1.0] {
            let mut rows = start.clone();
            let mut last = f64::NEG_INFINITY;
            loop {
                let mut col = vec![0.0; m];
                for (i, _) in rows.iter().enumerate().filter(|(_, r)| **r) {
                    for j in 0..m {
                        col[j] += a[i * m + j];
                    }
                }
                let cols: Vec<bool> = col.iter().map(|c| sign * c > 0.0).collect();
                let mut rowsum = vec![0.0; m];
                for i in 0..m {
                    rowsum[i] = (0..m).filter(|&j| cols[j]).map(|j| a[i * m + j]).sum();
                }
                rows = rowsum.iter().map(|r| sign * r > 0.0).collect();
                let value: f64 = rowsum
                    .iter()
                    .zip(&rows)
                    .filter(|(_, r)| **r)
                    .map(|(s, _)| sign * s)
                    .sum();
                if value <= last + 1e-15 {
                    break;
                }
                last = value;
            }
            best = best.max(last.max(0.0));
        }
    }
    best
}

/// Refines two kernels onto a common partition whose blocks all have equal
/// measure, so that block permutations are measure preserving.
///
/// The union of both breakpoint sets is used when it is already equal-spaced;
/// otherwise the smallest grid `k/N`, `N ≤ MAX_REFINE_GRID`, containing every
/// breakpoint (within [`REFINE_TOL`]) is used.
pub fn common_refinement(w1: &StepKernel, w2: &StepKernel) -> Result<(StepKernel, StepKernel)> {
    let mut pts: Vec<f64> = w1.breakpoints().iter().chain(w2.breakpoints()).copied().collect();
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    let mut merged: Vec<f64> = Vec::with_capacity(pts.len());
    for p in pts {
        match merged.last() {
            Some(&q) if p - q <= REFINE_TOL => {}
            _ => merged.push(p),
        }
    }
    if let Some(last) = merged.last_mut() {
        *last = 1.0;
    }
    let k = merged.len();
    let equal = {
        let mut left = 0.0;
        merged.iter().all(|&b| {
            let ok = ((b - left) - 1.0 / k as f64).abs() <= REFINE_TOL;
            left = b;
            ok
        })
    };
    let breaks: Vec<f64> = if equal {
        (1..=k).map(|i| i as f64 / k as f64).collect()
    } else {
        let n = (1..=MAX_REFINE_GRID)
            .find(|&n| {
                merged.iter().all(|&b| {
                    let scaled = b * n as f64;
                    (scaled - scaled.round()).abs() <= REFINE_TOL * n as f64
                })
            })
            .ok_or_else(|| {
                Error::Incommensurable(format!(
                    "no equal grid with at most {MAX_REFINE_GRID} blocks contains all breakpoints"
                ))
            })?;
        (1..=n).map(|i| i as f64 / n as f64).collect()
    };
    Ok((w1.refine(&breaks)?, w2.refine(&breaks)?))
}

/// Computable surrogate for the cut metric `δ□(W1, W2)`: the minimum of
/// `‖W1 − W2^φ‖□` over block permutations `φ` of a common equal-measure
/// refinement.
///
/// Every permutation is tried up to [`CUT_DISTANCE_EXACT_MAX_BLOCKS`] blocks
/// (`exact = true`); above that a deterministic simulated annealing over
/// transpositions is used and the result is flagged heuristic.
pub fn cut_distance(w1: &StepKernel, w2: &StepKernel) -> Result<Estimate> {
    let (a, b) = common_refinement(w1, w2)?;
    let m = a.m();
    let eval = |perm: &[usize]| -> Result<Estimate> {
        Ok(a.difference(&b.permute(perm)?)?.cut_norm())
    };
    if m <= CUT_DISTANCE_EXACT_MAX_BLOCKS {
        let mut perm: Vec<usize> = (0..m).collect();
        let mut best = eval(&perm)?.value;
        // Heap's algorithm.
        let mut c = vec![0usize; m];
        let mut i = 0;
        while i < m {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                best = best.min(eval(&perm)?.value);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        return Ok(Estimate {
            value: best,
            exact: true,
        });
    }

    let mut rng = rng_from_seed(ANNEAL_SEED);
    let mut perm: Vec<usize> = (0..m).collect();
    let mut current = eval(&perm)?.value;
    let mut best = current;
    let t0 = 0.05 * current.max(1e-12);
    for step in 0..ANNEAL_STEPS {
        let temp = t0 * 1e-3f64.powf(step as f64 / ANNEAL_STEPS as f64);
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        perm.swap(i, j);
        let candidate = eval(&perm)?.value;
        let accept = candidate <= current || rng.random::<f64>() < (-(candidate - current) / temp).exp();
        if accept {
            current = candidate;
            best = best.min(current);
        } else {
            perm.swap(i, j);
        }
    }
    Ok(Estimate {
        value: best,
        exact: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn two_block(values: [[f64; 2]; 2]) -> StepKernel {
        StepKernel::equal_blocks(values.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Independent oracle: irreducible iff no nonempty proper union of blocks
    /// has zero weight towards its complement.
    fn irreducible_brute(w: &StepKernel) -> bool {
        let m = w.m();
        if m == 1 {
            return w.value(0, 0) > 0.0;
        }
        for mask in 1u32..((1 << m) - 1) {
            let mut cross = 0.0;
            for i in 0..m {
                for j in 0..m {
                    if (mask >> i) & 1 == 1 && (mask >> j) & 1 == 0 {
                        cross += w.value(i, j);
                    }
                }
            }
            if cross == 0.0 {
                return false;
            }
        }
        true
    }

    /// Independent oracle: enumerate every (A, B) pair of block unions.
    fn cut_norm_brute(w: &StepKernel) -> f64 {
        let m = w.m();
        let mu = w.block_measures();
        let mut best = 0.0f64;
        for a in 0u32..(1 << m) {
            for b in 0u32..(1 << m) {
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        if (a >> i) & 1 == 1 && (b >> j) & 1 == 1 {
                            s += mu[i] * mu[j] * w.value(i, j);
                        }
                    }
                }
                best = best.max(s.abs());
            }
        }
        best
    }

    #[test]
    fn eval_examples() {
        let c = StepKernel::constant(0.7);
        assert_eq!(c.eval(0.1, 0.9).unwrap(), 0.7);
        let d = two_block([[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(d.eval(0.25, 0.75).unwrap(), 0.0);
        assert_eq!(d.eval(0.5, 0.75).unwrap(), 1.0);
        assert_eq!(d.eval(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(d.eval(0.0, 0.0).unwrap(), 1.0);
        assert!(matches!(d.eval(1.5, 0.0), Err(Error::Domain(_))));
        assert!(matches!(d.eval(-0.1, 0.0), Err(Error::Domain(_))));
        assert!(d.eval(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(StepKernel::new(vec![0.5, 0.6], vec![vec![0.0; 2]; 2]).is_err());
        assert!(StepKernel::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.1, 0.0]]).is_err());
        assert!(StepKernel::new(vec![1.0, 0.0], vec![vec![0.0; 2]; 2]).is_err());
        assert!(StepKernel::new(vec![0.5, 0.5], vec![vec![0.0; 3]; 2]).is_err());
        assert!(StepKernel::new(vec![], vec![]).is_err());
        // Asymmetry below tolerance is accepted and symmetrised.
        let k = StepKernel::new(vec![0.5, 0.5], vec![vec![0.0, 1.0], vec![1.0 + 1e-14, 0.0]]).unwrap();
        assert_eq!(k.value(0, 1), k.value(1, 0));
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"block_measures": [0.25, 0.75], "values": [[4, 0], [0, 4]]}"#;
        let k = StepKernel::from_json(text).unwrap();
        assert_eq!(k.m(), 2);
        assert_eq!(StepKernel::from_json(&k.to_json()).unwrap(), k);
        let asym = r#"{"block_measures": [0.5, 0.5], "values": [[0, 1], [2, 0]]}"#;
        assert!(StepKernel::from_json(asym).is_err());
    }

    #[test]
    fn degree_function_examples() {
        assert_eq!(StepKernel::constant(3.0).degree_function().unwrap().values, vec![3.0]);
        assert_eq!(two_block([[0.0, 2.0], [2.0, 0.0]]).degree_function().unwrap().values, vec![1.0, 1.0]);
        let k = StepKernel::new(vec![0.25, 0.75], vec![vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(k.degree_function().unwrap().values, vec![1.0, 3.0]);
        let signed = two_block([[1.0, -1.0], [-1.0, 1.0]]);
        assert!(matches!(signed.degree_function(), Err(Error::SignedKernel)));
    }

    #[test]
    fn apply_examples() {
        let k = StepKernel::new(vec![0.25, 0.75], vec![vec![1.0, 2.0], vec![2.0, 5.0]]).unwrap();
        let ones = BlockFunction::constant(2, 1.0);
        assert_eq!(k.apply(&ones).unwrap(), k.degree_function().unwrap());
        let zero = StepKernel::constant(0.0);
        assert_eq!(zero.apply(&BlockFunction::constant(1, 5.0)).unwrap().values, vec![0.0]);
        assert_eq!(StepKernel::constant(2.5).apply(&BlockFunction::constant(1, 1.0)).unwrap().values, vec![2.5]);
        assert!(matches!(k.apply(&BlockFunction::constant(3, 1.0)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn operator_norm_examples() {
        assert!((StepKernel::constant(1.7).operator_norm().unwrap() - 1.7).abs() < 1e-12);
        for &(a, b) in &[(3.0f64, 1.0f64), (0.0, 2.0), (2.0, 0.0), (1.0, 1.0)] {
            // Oracle: characteristic polynomial of 0.5·[[a,b],[b,a]].
            let (tr, det) = (a, 0.25 * (a * a - b * b));
            let disc = (tr * tr - 4.0 * det).sqrt();
            let lam = f64::max((tr + disc) / 2.0, ((tr - disc) / 2.0).abs());
            let got = two_block([[a, b], [b, a]]).operator_norm().unwrap();
            assert!((got - (a + b) / 2.0).abs() < 1e-9 && (got - lam).abs() < 1e-9);
        }
        let w = StepKernel::new(vec![0.2, 0.3, 0.5], vec![vec![1.0, 2.0, 0.0], vec![2.0, 0.5, 1.0], vec![0.0, 1.0, 3.0]]).unwrap();
        let n1 = w.operator_norm().unwrap();
        assert!((w.scale(2.0).unwrap().operator_norm().unwrap() - 2.0 * n1).abs() < 1e-9 * n1);
        assert!(two_block([[1.0, -1.0], [-1.0, 1.0]]).operator_norm().is_err());
    }

    #[test]
    fn irreducibility_examples() {
        assert!(!two_block([[1.0, 0.0], [0.0, 1.0]]).is_irreducible().unwrap());
        assert!(two_block([[1.0, 0.5], [0.5, 2.0]]).is_irreducible().unwrap());
        let bip = two_block([[0.0, 1.0], [1.0, 0.0]]);
        assert!(bip.is_irreducible().unwrap());
        assert!(irreducible_brute(&bip));
        assert!(!StepKernel::constant(0.0).is_irreducible().unwrap());
        assert!(StepKernel::constant(0.1).is_irreducible().unwrap());
    }

    #[test]
    fn decomposition_of_block_diagonal() {
        let w = StepKernel::new(
            vec![0.25, 0.25, 0.5],
            vec![vec![4.0, 0.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 2.0]],
        )
        .unwrap();
        let parts = w.irreducible_parts().unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].blocks, vec![0]);
        assert!((parts[0].measure - 0.25).abs() < 1e-15);
        assert!((parts[0].kernel.value(0, 0) - 1.0).abs() < 1e-15);
        assert_eq!(parts[1].blocks, vec![1, 2]);
        // λ of the restricted part equals λ of the original blocks.
        let lam = w.degree_function().unwrap();
        let lam_part = parts[1].kernel.degree_function().unwrap();
        assert!((lam_part.values[0] - lam.values[1]).abs() < 1e-14);
        assert!((lam_part.values[1] - lam.values[2]).abs() < 1e-14);
    }

    #[test]
    fn cut_norm_examples() {
        let w = StepKernel::new(vec![0.3, 0.7], vec![vec![1.0, 2.0], vec![2.0, 0.5]]).unwrap();
        let total: f64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| w.block_measures()[i] * w.block_measures()[j] * w.value(i, j)).sum();
        assert!((w.cut_norm().value - total).abs() < 1e-15);
        assert_eq!(StepKernel::constant(0.0).cut_norm().value, 0.0);
        let signed = two_block([[1.0, -1.0], [-1.0, 1.0]]);
        assert!((cut_norm_brute(&signed) - 0.25).abs() < 1e-15);
        let got = signed.cut_norm();
        assert!(got.exact);
        assert!((got.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cut_norm_heuristic_regime_is_labelled() {
        let m = 24;
        let values: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 }).collect()).collect();
        let k = StepKernel::equal_blocks(values).unwrap();
        let est = k.cut_norm();
        assert!(!est.exact);
        // Checkerboard: A = B = even blocks gives (12/24)² = 0.25, optimal.
        assert!((est.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cut_distance_examples() {
        let w = StepKernel::new(vec![0.25, 0.25, 0.5], vec![vec![1.0, 0.2, 0.0], vec![0.2, 3.0, 1.0], vec![0.0, 1.0, 0.5]]).unwrap();
        let d = cut_distance(&w, &w).unwrap();
        assert!(d.exact && d.value.abs() < 1e-15);
        let eq = StepKernel::equal_blocks(vec![vec![1.0, 0.2, 0.0], vec![0.2, 3.0, 1.0], vec![0.0, 1.0, 0.5]]).unwrap();
        let perm = eq.permute(&[2, 0, 1]).unwrap();
        assert!(cut_distance(&eq, &perm).unwrap().value < 1e-15);
        let d = cut_distance(&StepKernel::constant(0.3), &StepKernel::constant(0.8)).unwrap();
        assert!((d.value - 0.5).abs() < 1e-15);
        // Different partitions of the same function are at distance zero.
        let refined = w.refine(&[0.125, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert!(cut_distance(&w, &refined).unwrap().value < 1e-15);
    }

    #[test]
    fn cut_distance_rejects_incommensurable() {
        let a = StepKernel::new(vec![1.0 / std::f64::consts::PI, 1.0 - 1.0 / std::f64::consts::PI], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let b = StepKernel::constant(1.0);
        assert!(matches!(cut_distance(&a, &b), Err(Error::Incommensurable(_))));
    }

    #[test]
    fn cut_distance_heuristic_regime() {
        let m = 10;
        let values: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| ((i * 7 + j * 7) % 5) as f64 * 0.1 + if i == j { 1.0 } else { 0.0 }).collect()).collect();
        let w = StepKernel::equal_blocks(values).unwrap();
        let shuffled = w.permute(&[3, 1, 4, 0, 5, 9, 2, 6, 8, 7]).unwrap();
        let d = cut_distance(&w, &shuffled).unwrap();
        assert!(!d.exact);
        let identity = w.difference(&shuffled).unwrap().cut_norm().value;
        assert!(d.value <= identity);
    }

    #[test]
    fn scale_examples() {
        let w = two_block([[3.0, 1.0], [1.0, 1.0]]);
        assert_eq!(w.scale(1.0).unwrap(), w);
        assert_eq!(w.scale(0.0).unwrap().cut_norm().value, 0.0);
        let n = w.operator_norm().unwrap();
        assert!((w.scale(2.0).unwrap().operator_norm().unwrap() - 2.0 * n).abs() < 1e-9);
        assert!(w.scale(-1.0).is_err());
    }

    fn kernel_strategy(signed: bool) -> impl Strategy<Value = StepKernel> {
        (1usize..=6).prop_flat_map(move |m| {
            let lo = if signed { -3.0 } else { 0.0 };
            (
                prop::collection::vec(0.05f64..1.0, m),
                prop::collection::vec(prop_oneof![Just(0.0), lo..3.0], m * m),
            )
                .prop_map(move |(raw, vals)| {
                    let measures = normalise(raw);
                    let mut flat = vec![0.0; m * m];
                    for i in 0..m {
                        for j in i..m {
                            flat[i * m + j] = vals[i * m + j];
                            flat[j * m + i] = vals[i * m + j];
                        }
                    }
                    StepKernel::from_flat(measures, flat).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn operator_norm_bounded_by_sup(w in kernel_strategy(false)) {
            prop_assert!(w.operator_norm().unwrap() <= w.sup_norm() * (1.0 + 1e-9) + 1e-12);
        }

        #[test]
        fn apply_is_linear(w in kernel_strategy(true), alpha in -3.0f64..3.0, seed in any::<u64>()) {
            let m = w.m();
            let mut rng = rng_from_seed(seed);
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let combo: Vec<f64> = f.iter().zip(&g).map(|(a, b)| alpha * a + b).collect();
            let lhs = w.apply(&BlockFunction::new(combo)).unwrap();
            let tf = w.apply(&BlockFunction::new(f)).unwrap();
            let tg = w.apply(&BlockFunction::new(g)).unwrap();
            for i in 0..m {
                prop_assert!((lhs.values[i] - (alpha * tf.values[i] + tg.values[i])).abs() < 1e-12);
            }
        }

        #[test]
        fn cut_norm_matches_brute_force(w in kernel_strategy(true)) {
            prop_assume!(w.m() <= 5);
            prop_assert!((w.cut_norm().value - cut_norm_brute(&w)).abs() < 1e-12);
        }

        #[test]
        fn cut_norm_is_a_norm(m in 1usize..=5, seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let mut mk = || {
                let mut flat = vec![0.0; m * m];
                for i in 0..m {
                    for j in i..m {
                        let v = rng.random_range(-2.0..2.0);
                        flat[i * m + j] = v;
                        flat[j * m + i] = v;
                    }
                }
                StepKernel::from_flat(vec![1.0 / m as f64; m], flat).unwrap()
            };
            let (a, b) = (mk(), mk());
            let sum = StepKernel::from_flat(
                a.block_measures().to_vec(),
                a.values_flat().iter().zip(b.values_flat()).map(|(x, y)| x + y).collect(),
            ).unwrap();
            let (na, nb, ns) = (a.cut_norm().value, b.cut_norm().value, sum.cut_norm().value);
            prop_assert!(na >= 0.0);
            prop_assert!(ns <= na + nb + 1e-12);
            let nonzero = a.values_flat().iter().any(|v| *v != 0.0);
            prop_assert_eq!(na > 0.0, nonzero);
        }

        #[test]
        fn cut_distance_below_identity_cut_norm(m in 1usize..=5, seed in any::<u64>()) {
            let mut rng = rng_from_seed(seed);
            let mut mk = || {
                let mut flat = vec![0.0; m * m];
                for i in 0..m {
                    for j in i..m {
                        let v = rng.random_range(0.0..2.0);
                        flat[i * m + j] = v;
                        flat[j * m + i] = v;
                    }
                }
                StepKernel::from_flat(vec![1.0 / m as f64; m], flat).unwrap()
            };
            let (a, b) = (mk(), mk());
            let identity = a.difference(&b).unwrap().cut_norm().value;
            let d = cut_distance(&a, &b).unwrap();
            prop_assert!(d.exact);
            prop_assert!(d.value <= identity + 1e-15);
        }

        #[test]
        fn irreducibility_matches_subset_enumeration(w in kernel_strategy(false)) {
            prop_assert_eq!(w.is_irreducible().unwrap(), irreducible_brute(&w));
        }

        #[test]
        fn eval_is_symmetric(w in kernel_strategy(true), x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            prop_assert_eq!(w.eval(x, y).unwrap(), w.eval(y, x).unwrap());
        }
    }
}
