//! Optimal energy-storage control and sizing under multi-peaked Time-of-Use
//! tariffs with random, period-independent demand.
//!
//! The control policy is a sequence of capacity-free *virtual reservations*:
//! after each period keep at least `min(M_i, C)` kWh for later. The same
//! sequence is optimal for every capacity `C`, which makes sizing a
//! one-dimensional search on the marginal revenue of capacity.
//!
//! - [`tariff`]: tariff validation, local price extrema, per-unit profit bound
//! - [`demand`]: discretized demand distributions, convolution, pooling
//! - [`policy`]: charge timing, marginal revenue, reservations, exact expected cost
//! - [`sizing`]: capacity marginal revenue and optimal capacity
//! - [`oracle`]: brute-force dynamic programming and Monte Carlo checks
//! - [`experiments`]: randomness and pooling studies

pub mod config;
mod conv;
pub mod demand;
pub mod experiments;
pub mod money;
pub mod oracle;
pub mod policy;
pub mod sizing;
pub mod tariff;

pub use demand::{DemandDescriptor, DemandSpec, DiscreteDemand};
pub use money::Rate;
pub use policy::{Reservation, ReservationPolicy};
pub use sizing::SizingResult;
pub use tariff::{ExtremalPrices, Period, TouScheme};
