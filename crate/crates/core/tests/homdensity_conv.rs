mod common;

use common::{mean_sd, median};
use graphon_percolation::homdensity::{double_star, expected_n2_limit, non_tree_bound, t_graph, t_kernel, PatternGraph};
use graphon_percolation::percolation::{components, non_tree_census, sample};
use graphon_percolation::seed::mix_seed;
use graphon_percolation::weighted_graph::{blowup, complete_graph, sample_dense};
use graphon_percolation::{EdgeMode, StepKernel};

fn patterns() -> Vec<PatternGraph> {
    vec![
        PatternGraph::edge(),
        PatternGraph::path(3).unwrap(),
        PatternGraph::triangle(),
        double_star(1, 1).unwrap(),
    ]
}

#[test]
fn sampled_dense_graphs_converge() {
    let w = StepKernel::new(vec![0.3, 0.7], vec![vec![0.9, 0.2], vec![0.2, 0.6]]).unwrap();
    for f in patterns() {
        let limit = t_kernel(&f, &w).unwrap();
        let mut medians = Vec::new();
        for n in [100usize, 300, 1000] {
            let devs: Vec<f64> = (0..20)
                .map(|s| {
                    let g = sample_dense(&w, n, mix_seed(n as u64, s)).unwrap();
                    (t_graph(&f, &g).unwrap() - limit).abs()
                })
                .collect();
            medians.push(median(devs));
        }
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{f}: {medians:?}");
    }
}

#[test]
fn blowup_triangle_density() {
    let w = StepKernel::new(vec![0.25, 0.75], vec![vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    let g = blowup(&w, 300).unwrap();
    let tri = PatternGraph::triangle();
    assert!((t_graph(&tri, &g).unwrap() - t_kernel(&tri, &w).unwrap()).abs() < 0.02);
}

#[test]
fn blowup_spectrum_tracks_operator_norm() {
    let w = StepKernel::equal_blocks(vec![vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let g = blowup(&w, 500).unwrap();
    let ratio = g.top_eigenvalue().unwrap() / 500.0;
    assert!((ratio - w.operator_norm().unwrap()).abs() < 0.02);
}

#[test]
fn n2_fraction_matches_limit() {
    let n = 20_000;
    let g = complete_graph(n).unwrap();
    let fracs: Vec<f64> = (0..20)
        .map(|s| {
            let st = components(&sample(&g, 1.0 / n as f64, EdgeMode::Bernoulli, mix_seed(12, s)).unwrap());
            st.n_k(2) as f64 / n as f64
        })
        .collect();
    let (mean, _) = mean_sd(&fracs);
    let limit = expected_n2_limit(&StepKernel::constant(1.0)).unwrap();
    assert!((limit - (-2.0f64).exp()).abs() < 1e-15);
    assert!((mean - limit).abs() < 0.005, "{mean} vs {limit}");
}

#[test]
fn non_tree_components_are_rare() {
    let w = StepKernel::equal_blocks(vec![vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let n = 2000;
    let g = blowup(&w, n).unwrap();
    let reps = 50;
    let mut totals = [0usize; 7];
    for s in 0..reps {
        let census = non_tree_census(&sample(&g, 1.0 / n as f64, EdgeMode::Bernoulli, mix_seed(4, s)).unwrap(), 6);
        for (k, v) in census {
            totals[k] += v;
        }
    }
    for k in 1..=6 {
        let mean = totals[k] as f64 / reps as f64;
        assert!(mean <= non_tree_bound(k, g.beta_max()), "k={k}: {mean}");
    }
}
