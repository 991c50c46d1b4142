//! Demand estimation and traffic assignment for a two-level airport
//! terminal loop road.
//!
//! The crate covers the full chain from link-flow observations to a learned
//! inverse model:
//!
//! * [`network`] — the loop road graph, zones, sensors, travel costs.
//! * [`odgen`] — structurally constrained origin–destination matrices and
//!   the non-negative least-squares generator that produces them from
//!   observed flows.
//! * [`dta`] — iterative logit-based traffic assignment with volume-delay
//!   feedback.
//! * [`neural`] — a small feed-forward network that learns the inverse map
//!   from link flows back to demand.
//! * [`metrics`] — flow-error measures and sensor grouping for evaluation.
//! * [`pipeline`] — synthetic data generation, dataset assembly, training
//!   and closed-loop evaluation, scenario transforms.

pub mod cli;
pub mod config;
pub mod dta;
pub mod linalg;
pub mod metrics;
pub mod network;
pub mod neural;
pub mod odgen;
pub mod pipeline;
pub mod synth;
pub(crate) mod textio;
