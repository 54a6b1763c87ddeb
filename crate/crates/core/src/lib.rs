//! Epidemic simulation with smartphone self-reports, and a recursive
//! Bayesian filter that estimates per-user infection risk, whole-population
//! prevalence and where to spend a scarce test budget.
//!
//! The crate is split along the data flow:
//!
//! - [`model`]: six-compartment ground-truth dynamics;
//! - [`mobility`]: random-relocation movement and proximity contacts;
//! - [`observation`]: self-reports and user-only contact sets;
//! - [`filter`]: the per-user filter, which only sees observations;
//! - [`metrics`]: prevalence, MAP identification and test allocation;
//! - [`harness`]: configs, seeded runs, replay and output files.

pub mod error;
pub mod exec;
pub mod filter;
pub mod harness;
pub mod metrics;
pub mod mobility;
pub mod model;
pub mod observation;
pub mod rng;

pub use error::{BetisError, Result};
pub use exec::Exec;
pub use filter::{Belief, BetisFilter, FilterState, NonUserContactModel, Prior};
pub use model::{Compartment, EpidemicParams, PopulationState};
pub use observation::{ObservationLog, ReportSymbol};
