//! Entropy-regularized optimal transport between Gaussian measures.
//!
//! Closed forms for the optimal coupling, its cost, moment-based lower bounds,
//! best approximations and barycenters, together with a grid-based Sinkhorn
//! solver that estimates the same continuous quantities independently.

// `!(x > 0.0)` is deliberate throughout: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barycenter;
pub mod cli;
pub mod cost;
pub mod error;
pub mod riccati;
pub mod sinkhorn;
pub mod spd;

#[cfg(test)]
pub(crate) mod testutil;

pub use barycenter::{
    barycenter_residual, eval_objective, solve_barycenter, solve_barycenter_from,
    BarycenterProblem, BarycenterSolution,
};
pub use cost::{
    best_approximation, cost_1d, entropic_cost, gelbrich_lower_bound, relative_entropic_cost,
    CostBreakdown, ReferenceMeasure,
};
pub use error::{Error, Result};
pub use riccati::{alt_riccati, assemble_plan, solve_riccati, EntropicPlan, QuadraticPotential, RiccatiSolution};
pub use sinkhorn::{
    discretize_gaussian, oracle_cost, sinkhorn_solve, DiscreteMeasure, SinkhornResult,
};
pub use spd::{spd_factor, validate_gaussian, Gaussian, SpdFactorization, SpdMatrix};
