//! Low-rank optimal transport through transport registration.
//!
//! A rank-`K` coupling between two point clouds of equal size is built in two
//! stages. A full-rank plan (a permutation, or an entropic coupling when the
//! marginals differ) registers the cost matrix onto one side, and the
//! registered cost is then clustered with a generalized K-means solver. The
//! clustering factor `Q` and its transported copy `R` form the plan
//! `Q diag(1/g) Rᵀ`.
//!
//! ```
//! use transport_clustering::{datasets, pipeline, CostSpec};
//!
//! let (x, y, labels) = datasets::gen_shifted_gaussians(40, 4, 0.01, 7).unwrap();
//! let cost = CostSpec::sq_euclidean(x.points.clone(), y.points.clone()).unwrap();
//! let cfg = pipeline::TcConfig::new(4, 7);
//! let out = pipeline::transport_cluster(Some(&x.points), Some(&y.points), &cost, &cfg).unwrap();
//! assert!(out.cost >= out.full_rank_cost - 1e-9);
//! let found = transport_clustering::genkmeans::round_to_hard(out.plan.q(), &out.row_marginal);
//! let ari = transport_clustering::evaluation::ari(&found.labels, &labels).unwrap();
//! assert!(ari > 0.99);
//! ```

pub mod clustering;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod fullrank;
pub mod genkmeans;
pub mod oracle;
pub mod pipeline;
pub mod plan;
pub mod registration;
pub mod rng;

pub use error::{Error, Result};
pub use plan::{
    assemble_plan, full_cost, hard_to_factor, lrot_cost, partition_cost, CostSpec, Coupling, HardAssignment,
    HardFactor, LabeledPointCloud, LowRankPlan, Permutation, ProbVector,
};
