//! Analytical performance model of a joint THz/mmWave cellular deployment.
//!
//! The layers build on each other: [`scenario`] holds the inputs, [`radio`]
//! turns them into link budgets and coverage radii, [`demand`] into PRB
//! requirement pmfs, [`dynamics`] into event rates, [`rels`] solves the
//! resource loss systems and [`strategies`] assembles end metrics.

pub mod demand;
pub mod dynamics;
pub mod error;
pub mod numerics;
pub mod radio;
pub mod rels;
pub mod scenario;
pub mod strategies;

pub use error::{Error, Result};
pub use scenario::{default_scenario, load_scenario, Association, Scenario, Strategy};
