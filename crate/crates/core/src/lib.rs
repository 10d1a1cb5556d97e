//! Sequential consumer search with product discovery.
//!
//! A consumer learns about products in two steps: discovering a product reveals
//! its partial valuation `x`, inspecting it reveals the residual `y`. The crate
//! computes the reservation values that drive the optimal index policy,
//! simulates consumers, verifies optimality against exact dynamic programming,
//! and provides demand, welfare, learning-bound and estimation tools.

pub mod demand;
pub mod dist;
pub mod error;
pub mod estimation;
pub mod learning;
pub mod numeric;
pub mod oracle;
pub mod outcomes;
mod par;
pub mod policy;
pub mod reservation;
pub mod rng;

pub use dist::{Distribution, DistributionSpec, ValuationModel};
pub use error::{Error, Result};
pub use rng::RandomStream;
pub use reservation::{ProductCount, ReservationBundle, SearchEnvironment, SearchMode};
