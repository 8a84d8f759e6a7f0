//! Rooted trees up to isomorphism and the probability that `𝔛_W` is a given tree.

#[cfg(test)]
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::StepKernel;

pub const MAX_TREE_SIZE: usize = 12;
/// Largest `m^k` summed exactly by [`tree_probability`].
pub const TREE_SUM_BUDGET: f64 = 1e8;

/// A rooted tree on `0..k` with root 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootedTree {
    parent: Vec<Option<usize>>,
    aut: u64,
    code: String,
}

#[cfg(test)]
fn factorial(j: usize) -> u64 {
    (1..=j as u64).product()
}

impl RootedTree {
    /// Builds a tree from its parent array; `parents[0]` must be `None` and
    /// every other vertex must reach 0.
    pub fn from_parents(parents: Vec<Option<usize>>) -> Result<Self> {
        let k = parents.len();
        if k == 0 {
            return Err(Error::Domain("a tree needs at least one vertex".into()));
        }
        if parents[0].is_some() {
            return Err(Error::Domain("vertex 0 must be the root".into()));
        }
        let mut children = vec![Vec::new(); k];
        for (v, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k && *p != v => children[*p].push(v),
                _ => return Err(Error::Domain(format!("vertex {v} has no valid parent"))),
            }
        }
        // Reachability from the root rules out cycles among non-root vertices.
        let mut seen = vec![false; k];
        let mut stack = vec![0];
        let mut count = 0;
        while let Some(v) = stack.pop() {
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            count += 1;
            stack.extend(&children[v]);
        }
        if count != k {
            return Err(Error::Domain("parent array contains a cycle".into()));
        }
        let (code, aut) = encode(0, &children);
        Ok(RootedTree { parent: parents, aut, code })
    }

    /// Parses an AHU code such as `"(()())"`; vertices are numbered in preorder.
    pub fn from_code(code: &str) -> Result<Self> {
        let mut parents = Vec::new();
        let mut stack: Vec<usize> = Vec::new();
        for (pos, ch) in code.chars().enumerate() {
            match ch {
                '(' => {
                    if !parents.is_empty() && stack.is_empty() {
                        return Err(Error::Domain(format!("code has several roots (at {pos})")));
                    }
                    parents.push(stack.last().copied());
                    stack.push(parents.len() - 1);
                }
                ')' => {
                    if stack.pop().is_none() {
                        return Err(Error::Domain(format!("unbalanced code at {pos}")));
                    }
                }
                _ => return Err(Error::Domain(format!("unexpected character {ch:?} in code"))),
            }
        }
        if !stack.is_empty() {
            return Err(Error::Domain("unbalanced code".into()));
        }
        Self::from_parents(parents)
    }

    pub fn k(&self) -> usize {
        self.parent.len()
    }

    pub fn parent_array(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn aut(&self) -> u64 {
        self.aut
    }

    pub fn canonical_code(&self) -> &str {
        &self.code
    }

    /// `(child, parent)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|p| (v, p)))
            .collect()
    }
}

/// AHU code and automorphism count of the subtree at `v`:
/// `aut = ∏ aut(branch) · ∏ j!` over groups of `j` identical branches.
fn encode(v: usize, children: &[Vec<usize>]) -> (String, u64) {
    let mut parts: Vec<(String, u64)> = children[v].iter().map(|&c| encode(c, children)).collect();
    parts.sort();
    let mut aut = 1u64;
    let mut code = String::from("(");
    let mut run = 0;
    for (i, (c, a)) in parts.iter().enumerate() {
        aut *= a;
        code.push_str(c);
        run = if i > 0 && parts[i - 1].0 == *c { run + 1 } else { 1 };
        aut *= run as u64;
    }
    code.push(')');
    (code, aut)
}

/// One representative per isomorphism class of rooted trees on `k` vertices.
pub fn enumerate_rooted_trees(k: usize) -> Result<Vec<RootedTree>> {
    if k == 0 || k > MAX_TREE_SIZE {
        return Err(Error::Domain(format!("tree size must lie in 1..={MAX_TREE_SIZE}, got {k}")));
    }
    // Codes of all trees with fewer than k vertices, by size, with global ids.
    let mut codes: Vec<String> = vec!["()".into()];
    let mut sizes: Vec<usize> = vec![1];
    let mut by_size: Vec<Vec<usize>> = vec![vec![], vec![0]];
    for s in 2..=k {
        let mut found = Vec::new();
        let mut current = Vec::new();
        multisets(s - 1, codes.len() - 1, &sizes, &mut current, &mut |ids| {
            let mut parts: Vec<&str> = ids.iter().map(|&i| codes[i].as_str()).collect();
            parts.sort_unstable();
            found.push(format!("({})", parts.concat()));
        });
        found.sort();
        let start = codes.len();
        for c in found {
            codes.push(c);
            sizes.push(s);
        }
        by_size.push((start..codes.len()).collect());
    }
    by_size[k].iter().map(|&i| RootedTree::from_code(&codes[i])).collect()
}

/// Multisets of tree ids (non-increasing) whose sizes sum to `remaining`.
fn multisets(remaining: usize, max_id: usize, sizes: &[usize], current: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if remaining == 0 {
        emit(current);
        return;
    }
    for id in (0..=max_id).rev() {
        if sizes[id] <= remaining {
            current.push(id);
            multisets(remaining - sizes[id], id, sizes, current, emit);
            current.pop();
        }
    }
}

/// `P(𝔛_W ≅ T)`: `(1/aut T) Σ_b ∏_i μ_{b_i} e^{−λ_{b_i}} ∏_{ij∈E(T)} W_{b_i b_j}`,
/// summed over all `m^k` block assignments.
pub fn tree_probability(kernel: &StepKernel, tree: &RootedTree) -> Result<f64> {
    let lambda = kernel.degree_function()?;
    let (m, k) = (kernel.m(), tree.k());
    let terms = (m as f64).powi(k as i32);
    if terms > TREE_SUM_BUDGET {
        return Err(Error::Budget {
            what: "rooted-tree block assignments (use tail_probability_mc for a Monte Carlo estimate)",
            required: terms,
            limit: TREE_SUM_BUDGET,
        });
    }
    let weight: Vec<f64> = (0..m)
        .map(|i| kernel.block_measures()[i] * (-lambda.values[i]).exp())
        .collect();
    let edges = tree.edges();
    let mut assign = vec![0usize; k];
    let mut sum = 0.0;
    loop {
        let mut term: f64 = assign.iter().map(|&b| weight[b]).product();
        for &(a, b) in &edges {
            if term == 0.0 {
                break;
            }
            term *= kernel.value(assign[a], assign[b]);
        }
        sum += term;
        // Odometer increment.
        let mut pos = 0;
        while pos < k {
            assign[pos] += 1;
            if assign[pos] < m {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
    Ok(sum / tree.aut() as f64)
}

/// `P(|𝔛_W| = k)` as a sum over rooted tree classes.
pub fn point_mass(kernel: &StepKernel, k: usize) -> Result<f64> {
    enumerate_rooted_trees(k)?
        .iter()
        .map(|t| tree_probability(kernel, t))
        .sum()
}

/// Brute-force counts of codes, for tests: map from code to number of
/// labelled parent arrays on `0..k` rooted at 0 realising it.
#[cfg(test)]
fn labelled_code_counts(k: usize) -> HashMap<String, u64> {
    let mut out = HashMap::new();
    let mut parents: Vec<usize> = vec![0; k];
    loop {
        let arr: Vec<Option<usize>> = (0..k).map(|v| if v == 0 { None } else { Some(parents[v]) }).collect();
        if let Ok(t) = RootedTree::from_parents(arr) {
            *out.entry(t.code).or_insert(0) += 1;
        }
        let mut pos = 1;
        while pos < k {
            parents[pos] += 1;
            if parents[pos] < k {
                break;
            }
            parents[pos] = 0;
            pos += 1;
        }
        if pos >= k {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const A000081: [usize; 12] = [1, 1, 2, 4, 9, 20, 48, 115, 286, 719, 1842, 4766];

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut p: Vec<usize> = (0..n).collect();
        fn heap(k: usize, p: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k <= 1 {
                out.push(p.clone());
                return;
            }
            for i in 0..k {
                heap(k - 1, p, out);
                let j = if k.is_multiple_of(2) { i } else { 0 };
                p.swap(j, k - 1);
            }
        }
        heap(n, &mut p, &mut out);
        out
    }

    /// Root-fixing permutations preserving the parent relation.
    fn brute_aut(t: &RootedTree) -> u64 {
        let k = t.k();
        let par = t.parent_array();
        permutations(k)
            .into_iter()
            .filter(|s| s[0] == 0 && (1..k).all(|v| par[s[v]] == par[v].map(|p| s[p])))
            .count() as u64
    }

    #[test]
    fn counts_follow_a000081() {
        for k in 1..=MAX_TREE_SIZE {
            let trees = enumerate_rooted_trees(k).unwrap();
            assert_eq!(trees.len(), A000081[k - 1], "k = {k}");
            let mut codes: Vec<_> = trees.iter().map(|t| t.canonical_code().to_string()).collect();
            codes.dedup();
            assert_eq!(codes.len(), trees.len());
            assert!(trees.iter().all(|t| t.k() == k && t.aut() >= 1));
        }
        assert!(enumerate_rooted_trees(0).is_err());
        assert!(enumerate_rooted_trees(13).is_err());
    }

    #[test]
    fn small_cases() {
        let t = enumerate_rooted_trees(1).unwrap();
        assert_eq!((t[0].aut(), t[0].canonical_code()), (1, "()"));
        let t = enumerate_rooted_trees(3).unwrap();
        let mut auts: Vec<_> = t.iter().map(|t| (t.canonical_code().to_string(), t.aut())).collect();
        auts.sort();
        assert_eq!(auts, vec![("((()))".to_string(), 1), ("(()())".to_string(), 2)]);
    }

    #[test]
    fn aut_matches_permutation_search() {
        for k in 1..=7 {
            for t in enumerate_rooted_trees(k).unwrap() {
                assert_eq!(t.aut(), brute_aut(&t), "{}", t.canonical_code());
            }
        }
    }

    #[test]
    fn cayley_formula() {
        for k in 1..=8usize {
            let s: u64 = enumerate_rooted_trees(k).unwrap().iter().map(|t| factorial(k) / t.aut()).sum();
            assert_eq!(s, (k as u64).pow(k as u32 - 1));
        }
        // Direct labelled enumeration: every labelled tree rooted at 0 is
        // counted once, and k!/aut counts labellings with any root.
        for k in 1..=6usize {
            let counts = labelled_code_counts(k);
            assert_eq!(counts.values().sum::<u64>(), (k as u64).pow(k.saturating_sub(2) as u32).max(1));
            for t in enumerate_rooted_trees(k).unwrap() {
                let rooted_at_zero = counts[t.canonical_code()];
                assert_eq!(rooted_at_zero * k as u64, factorial(k) / t.aut());
            }
        }
    }

    #[test]
    fn parent_array_validation() {
        assert!(RootedTree::from_parents(vec![]).is_err());
        assert!(RootedTree::from_parents(vec![Some(0)]).is_err());
        assert!(RootedTree::from_parents(vec![None, Some(2), Some(1)]).is_err());
        assert!(RootedTree::from_parents(vec![None, Some(1)]).is_err());
        assert!(RootedTree::from_code("()()").is_err());
        assert!(RootedTree::from_code("(()").is_err());
        let a = RootedTree::from_parents(vec![None, Some(0), Some(0), Some(1)]).unwrap();
        let b = RootedTree::from_parents(vec![None, Some(2), Some(0), Some(0)]).unwrap();
        assert_eq!(a.canonical_code(), b.canonical_code());
        let c = RootedTree::from_parents(vec![None, Some(0), Some(1), Some(2)]).unwrap();
        assert_ne!(a.canonical_code(), c.canonical_code());
    }

    fn borel(c: f64, k: usize) -> f64 {
        let k = k as f64;
        (-c * k).exp() * (c * k).powf(k - 1.0) / (1..=k as u64).map(|j| j as f64).product::<f64>()
    }

    #[test]
    fn tree_probability_constant_kernel() {
        let c = 0.8;
        let w = StepKernel::constant(c);
        let t1 = &enumerate_rooted_trees(1).unwrap()[0];
        assert!((tree_probability(&w, t1).unwrap() - (-c).exp()).abs() < 1e-15);
        let t2 = &enumerate_rooted_trees(2).unwrap()[0];
        assert!((tree_probability(&w, t2).unwrap() - c * (-2.0 * c).exp()).abs() < 1e-15);
        for k in 1..=8 {
            assert!((point_mass(&w, k).unwrap() - borel(c, k)).abs() < 1e-13, "k = {k}");
        }
        let zero = StepKernel::constant(0.0);
        assert_eq!(point_mass(&zero, 1).unwrap(), 1.0);
        assert_eq!(point_mass(&zero, 4).unwrap(), 0.0);
    }

    #[test]
    fn isomorphic_trees_have_equal_probability() {
        let w = StepKernel::new(vec![0.2, 0.3, 0.5], vec![vec![1.0, 2.0, 0.5], vec![2.0, 0.1, 1.5], vec![0.5, 1.5, 0.7]]).unwrap();
        let a = RootedTree::from_parents(vec![None, Some(0), Some(0), Some(1), Some(1)]).unwrap();
        let b = RootedTree::from_parents(vec![None, Some(4), Some(4), Some(0), Some(0)]).unwrap();
        assert_eq!(a.canonical_code(), b.canonical_code());
        assert!((tree_probability(&w, &a).unwrap() - tree_probability(&w, &b).unwrap()).abs() < 1e-15);
    }

    /// Independent evaluation by dynamic programming over the tree.
    fn tree_dp(w: &StepKernel, t: &RootedTree) -> f64 {
        let lambda = w.degree_function().unwrap();
        let m = w.m();
        let k = t.k();
        let mut children = vec![Vec::new(); k];
        for (c, p) in t.edges() {
            children[p].push(c);
        }
        fn up(v: usize, ch: &[Vec<usize>], w: &StepKernel, base: &[f64]) -> Vec<f64> {
            let m = w.m();
            let mut out = base.to_vec();
            for &c in &ch[v] {
                let sub = up(c, ch, w, base);
                for (i, o) in out.iter_mut().enumerate() {
                    *o *= (0..m).map(|j| w.value(i, j) * sub[j]).sum::<f64>();
                }
            }
            out
        }
        let base: Vec<f64> = (0..m).map(|i| w.block_measures()[i] * (-lambda.values[i]).exp()).collect();
        up(0, &children, w, &base).iter().sum::<f64>() / t.aut() as f64
    }

    #[test]
    fn odometer_matches_tree_dp() {
        let w = StepKernel::new(vec![0.25, 0.75], vec![vec![3.0, 0.5], vec![0.5, 1.2]]).unwrap();
        for k in 1..=7 {
            for t in enumerate_rooted_trees(k).unwrap() {
                let a = tree_probability(&w, &t).unwrap();
                let b = tree_dp(&w, &t);
                assert!((a - b).abs() <= 1e-14 * b.max(1e-300) + 1e-300, "{} {a} {b}", t.canonical_code());
            }
        }
    }

    #[test]
    fn budget_guard() {
        let w = StepKernel::equal_blocks(vec![vec![1.0; 10]; 10]).unwrap();
        let t = &enumerate_rooted_trees(9).unwrap()[0];
        assert!(matches!(tree_probability(&w, t), Err(Error::Budget { .. })));
    }

    #[test]
    fn total_probability_defect() {
        let w = StepKernel::constant(2.0);
        let rho = crate::branching::survival(&w).unwrap().rho;
        let s: f64 = (1..=12).map(|k| point_mass(&w, k).unwrap()).sum();
        assert!(s + rho <= 1.0 + 1e-9);
        assert!(1.0 - s - rho < 0.01, "{}", 1.0 - s - rho);
    }
}
