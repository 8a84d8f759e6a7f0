//! Experiment configuration.
//!
//! A config is a JSON object; every field except `experiment` has a default,
//! and the CLI subcommand supplies `experiment` when the file omits it.
//!
//! | field | default | used by |
//! |---|---|---|
//! | `generator` | `{"kind": "complete"}` | all graph experiments |
//! | `n_values` | `[20000]` | all graph experiments |
//! | `c_values` | `[1.0]` | threshold, census, log-scaling, reducible |
//! | `reps` | `20` | all stochastic experiments |
//! | `base_seed` | `0` | all |
//! | `mode` | `"bernoulli"` | percolation |
//! | `omega` | `"log_squared"` (`⌈ln² n⌉`) | census |
//! | `alphas` | `[]` | threshold |
//! | `low`, `high` | none | threshold |
//! | `rho_tolerance` | none | threshold |
//! | `coupled` | `false` | threshold |
//! | `k_max` | `6` | census, branching |
//! | `census_tolerance` | `0.01` | census |
//! | `omega_tolerance` | `0.02` | census |
//! | `percentile` | `0.95` | log-scaling |
//! | `growth_limit` | `2.0` | log-scaling |
//! | `critical_margin` | `0.05` | log-scaling, branching |
//! | `c2_tolerance` | `0.03` | reducible |
//! | `kernels` | `[]` | branching |
//! | `mc_reps` | `10000` | branching |
//! | `tail_reps` | `200000` | branching |
//! | `cap` | `100000` | branching |
//! | `slow_iterations` | `500` | branching |
//! | `deltas` | `[0.2, 0.1, 0.05, 0.02, 0.01]` | branching |
//! | `patterns` | edge, path3, triangle, s11 | convergence |
//! | `deviation_tolerance` | `0.05` | convergence |
//! | `rerun_on_failure` | `true` | stochastic experiments |
//! | `output` | none | CLI |

use std::path::{Path, PathBuf};

use graphon_percolation::homdensity::PatternGraph;
use graphon_percolation::weighted_graph::GraphFamily;
use graphon_percolation::{EdgeMode, StepKernel};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ThresholdScan,
    ComponentCensus,
    LogScaling,
    ReducibleDemo,
    BranchingValidation,
    Convergence,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ThresholdScan => "threshold_scan",
            ExperimentKind::ComponentCensus => "component_census",
            ExperimentKind::LogScaling => "log_scaling",
            ExperimentKind::ReducibleDemo => "reducible_demo",
            ExperimentKind::BranchingValidation => "branching_validation",
            ExperimentKind::Convergence => "convergence",
        }
    }

    /// Whether the outcome depends on the number of replicas.
    pub fn is_stochastic(self) -> bool {
        !matches!(self, ExperimentKind::Convergence)
    }
}

/// The `ω(n)` threshold for "large" components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaRule {
    /// `⌈ln n⌉`
    Log,
    /// `⌈ln² n⌉`
    #[default]
    LogSquared,
    /// `⌈n^{1/4}⌉`
    QuarterPower,
}

impl OmegaRule {
    pub const ALL: [OmegaRule; 3] = [OmegaRule::Log, OmegaRule::LogSquared, OmegaRule::QuarterPower];

    pub fn omega(self, n: usize) -> usize {
        let x = n as f64;
        let w = match self {
            OmegaRule::Log => x.ln(),
            OmegaRule::LogSquared => x.ln().powi(2),
            OmegaRule::QuarterPower => x.powf(0.25),
        };
        w.ceil().max(1.0) as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OmegaRule::Log => "log",
            OmegaRule::LogSquared => "log_squared",
            OmegaRule::QuarterPower => "quarter_power",
        }
    }
}

/// Threshold-scan expectation: mean `C₁/n ≤ max_fraction` for every `c ≤ c_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowExpectation {
    pub c_max: f64,
    pub max_fraction: f64,
}

/// Threshold-scan expectation: mean `C₁/n ≥ min_fraction` for every `c ≥ c_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighExpectation {
    pub c_min: f64,
    pub min_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default = "default_generator")]
    pub generator: GraphFamily,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_c_values")]
    pub c_values: Vec<f64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub mode: EdgeMode,
    #[serde(default)]
    pub omega: OmegaRule,
    #[serde(default)]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub low: Option<LowExpectation>,
    #[serde(default)]
    pub high: Option<HighExpectation>,
    #[serde(default)]
    pub rho_tolerance: Option<f64>,
    #[serde(default)]
    pub coupled: bool,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_census_tolerance")]
    pub census_tolerance: f64,
    #[serde(default = "default_omega_tolerance")]
    pub omega_tolerance: f64,
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default = "default_growth_limit")]
    pub growth_limit: f64,
    #[serde(default = "default_critical_margin")]
    pub critical_margin: f64,
    #[serde(default = "default_c2_tolerance")]
    pub c2_tolerance: f64,
    #[serde(default)]
    pub kernels: Vec<StepKernel>,
    #[serde(default = "default_mc_reps")]
    pub mc_reps: u64,
    #[serde(default = "default_tail_reps")]
    pub tail_reps: u64,
    #[serde(default = "default_cap")]
    pub cap: u64,
    #[serde(default = "default_slow_iterations")]
    pub slow_iterations: usize,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_patterns")]
    pub patterns: Vec<PatternGraph>,
    #[serde(default = "default_deviation_tolerance")]
    pub deviation_tolerance: f64,
    #[serde(default = "default_true")]
    pub rerun_on_failure: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_generator() -> GraphFamily {
    GraphFamily::Complete
}
fn default_n_values() -> Vec<usize> {
    vec![20_000]
}
fn default_c_values() -> Vec<f64> {
    vec![1.0]
}
fn default_reps() -> usize {
    20
}
fn default_k_max() -> usize {
    6
}
fn default_census_tolerance() -> f64 {
    0.01
}
fn default_omega_tolerance() -> f64 {
    0.02
}
fn default_percentile() -> f64 {
    0.95
}
fn default_growth_limit() -> f64 {
    2.0
}
fn default_critical_margin() -> f64 {
    0.05
}
fn default_c2_tolerance() -> f64 {
    0.03
}
fn default_mc_reps() -> u64 {
    10_000
}
fn default_tail_reps() -> u64 {
    200_000
}
fn default_cap() -> u64 {
    graphon_percolation::branching::DEFAULT_CAP
}
fn default_slow_iterations() -> usize {
    500
}
fn default_deltas() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02, 0.01]
}
fn default_patterns() -> Vec<PatternGraph> {
    ["edge", "path3", "triangle", "s11"]
        .iter()
        .map(|s| PatternGraph::parse(s).expect("built-in pattern"))
        .collect()
}
fn default_deviation_tolerance() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// All defaults for `kind`.
    pub fn new(kind: ExperimentKind) -> Self {
        let mut cfg: ExperimentConfig = serde_json::from_str("{}").expect("all fields have defaults");
        cfg.experiment = Some(kind);
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn kind(&self) -> Result<ExperimentKind, HarnessError> {
        self.experiment
            .ok_or_else(|| HarnessError::Config("experiment kind is not set".into()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let kind = self.kind()?;
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 2) {
            return bad(format!("n values must be at least 2, got {n}"));
        }
        if let Some(c) = self.c_values.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return bad(format!("c values must be finite and nonnegative, got {c}"));
        }
        let graph_experiment = !matches!(kind, ExperimentKind::BranchingValidation);
        if graph_experiment && self.n_values.is_empty() {
            return bad("n_values must not be empty".into());
        }
        if matches!(
            kind,
            ExperimentKind::ThresholdScan
                | ExperimentKind::ComponentCensus
                | ExperimentKind::LogScaling
                | ExperimentKind::ReducibleDemo
        ) && self.c_values.is_empty()
        {
            return bad("c_values must not be empty".into());
        }
        if !(1..=8).contains(&self.k_max) {
            return bad(format!("k_max must lie in 1..=8, got {}", self.k_max));
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return bad(format!("percentile must lie in (0,1], got {}", self.percentile));
        }
        if self.mc_reps == 0 || self.tail_reps == 0 || self.cap == 0 {
            return bad("mc_reps, tail_reps and cap must be positive".into());
        }
        if let Some(d) = self.deltas.iter().find(|d| !(**d > 0.0 && **d < 1.0)) {
            return bad(format!("deltas must lie in (0,1), got {d}"));
        }
        let tolerances = [
            self.census_tolerance,
            self.omega_tolerance,
            self.growth_limit,
            self.critical_margin,
            self.c2_tolerance,
            self.deviation_tolerance,
        ];
        if tolerances.iter().chain(self.rho_tolerance.iter()).any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad("tolerances must be finite and nonnegative".into());
        }
        if self.alphas.iter().any(|a| !a.is_finite()) {
            return bad("alphas must be finite".into());
        }
        Ok(())
    }

    /// `c_values` in increasing order.
    pub fn sorted_c(&self) -> Vec<f64> {
        let mut cs = self.c_values.clone();
        cs.sort_by(f64::total_cmp);
        cs
    }
}
