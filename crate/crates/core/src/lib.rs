//! Learning near-optimal single-parameter auctions from samples.
//!
//! The pipeline runs from samples of an unknown (possibly irregular) value
//! distribution to an [`IroningPlan`] (ironing intervals plus a reserve price).
//! The plan is then executed in single-item, k-unit, position and matroid
//! environments. Ground-truth oracles on discrete distributions measure the
//! revenue lost relative to the optimal (Myerson) auction.
//!
//! Module map:
//!
//! * [`distributions`]: exact, sampleable value distributions.
//! * [`empirical`]: empirical quantile function, DKW radius, pessimistic and
//!   optimistic sample revenue curves.
//! * [`curves`]: piecewise-linear curves in quantile space (hulls, ironing,
//!   induced curves).
//! * [`learner`]: sample → plan, plus sample-size and loss calculators.
//! * [`environments`]: feasibility structures and interim allocation rules.
//! * [`engine`]: executes a plan on a bid profile with truthful payments.
//! * [`oracle`]: exact optimal plans and expected revenue by enumeration,
//!   quadrature and Monte Carlo.
//! * [`online`]: repeated auctions that learn from past bids.
//! * [`experiments`]: seeded, parallel experiment drivers emitting CSV.

pub mod curves;
pub mod distributions;
pub mod empirical;
pub mod engine;
pub mod environments;
mod error;
pub mod experiments;
pub mod learner;
pub mod online;
pub mod oracle;
pub mod rng;

pub use curves::{PiecewiseLinearCurve, QuantileIntervalSet, RevenueCurve, Vertex};
pub use distributions::ValueDistribution;
pub use empirical::{dkw_epsilon, EmpiricalQuantile};
pub use engine::{AuctionOutcome, BidProfile, RankKey};
pub use environments::{Environment, EnvironmentKind, MatroidSpec};
pub use error::{Error, Result};
pub use learner::{compute_auction, IroningPlan, ValueInterval};
pub use oracle::{RevenueMethod, RevenueReport};
