//! Percolation on dense weighted graph sequences and their step-graphon limits.
//!
//! The crate is organised around five analytic layers:
//!
//! * [`graphon`]: piecewise-constant kernels on `[0,1]²` with their degree
//!   function, integral operator, operator norm, irreducibility, cut norm and
//!   a computable cut-distance surrogate.
//! * [`weighted_graph`]: symmetric nonnegative weight matrices `β` (dense or
//!   block-structured), generators converging to a kernel, spectral and cut
//!   queries.
//! * [`percolation`]: the random subgraph `G(p)`, union-find component census
//!   and a sprinkled two-phase coupling.
//! * [`branching`]: the multi-type Poisson branching process, its survival
//!   probability, and exact small-tree probabilities via rooted-tree
//!   enumeration.
//! * [`homdensity`]: homomorphism densities, double-star moments and
//!   convergence diagnostics.
//!
//! Every random operation takes an explicit `u64` seed and is reproducible.

pub mod branching;
pub mod error;
pub mod graphon;
pub mod homdensity;
pub mod percolation;
pub mod seed;
pub mod spectral;
pub mod unionfind;
pub mod weighted_graph;

pub use error::{Error, Result};
pub use graphon::{BlockFunction, Estimate, StepKernel};
pub use percolation::{ComponentStats, EdgeMode, PercolationSample};
pub use weighted_graph::WeightedGraph;
