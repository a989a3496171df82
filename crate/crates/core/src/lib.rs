//! Crump-Mode-Jagers branching processes under time-dependent vaccination.
//!
//! The unvaccinated process is simulated once per replicate as a tree whose
//! births each carry an independent uniform. Any vaccination function is
//! then applied by pruning: a birth at time `b` with uniform `U` is removed,
//! together with its descendants, when `U <= alpha(b)`. Because every
//! vaccination function sees the same trees, functionals such as the
//! extinction time are pathwise ordered across policies, which makes
//! quantile-based policy search a bisection on a monotone step function.
//!
//! Modules follow the pipeline:
//!
//! * [`reproduction`]: life-history laws and their sampling.
//! * [`tree`]: one realization of the unvaccinated process.
//! * [`vaccination`]: vaccination functions, their order and pruning.
//! * [`functionals`]: extinction time, duration, peak size, birth counts.
//! * [`estimate`]: coupled Monte-Carlo distributions.
//! * [`policy`]: smallest policy meeting a quantile or mean bound.
//! * [`inference`]: Borel-Tanner law, offspring-mean MLE, gamma coverage.
//! * [`ingest`]: outbreak segmentation of weekly case counts.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod functionals;
pub mod inference;
pub mod ingest;
pub mod policy;
pub mod reproduction;
pub mod rng;
pub mod special;
pub mod tree;
pub mod vaccination;

pub use error::{Error, Result};
pub use estimate::{continuity_modulus, run_coupled, CoupledBatch, EmpiricalDistribution};
pub use functionals::{Functional, TimeUnit};
pub use policy::{optimal_policy, PolicyFamily, PolicyQuery, PolicyResult, PolicyTarget};
pub use reproduction::{LifeHistory, LifetimeLaw, OffspringLaw, Placement, ReproductionLaw};
pub use tree::{simulate_tree, BranchingTree, Individual, SimCaps};
pub use vaccination::{precedes, prune, PruneMask, VaccinationFunction};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
