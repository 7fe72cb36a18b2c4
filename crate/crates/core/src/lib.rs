//! Household income nowcasting microsimulation.
//!
//! The pipeline nowcasts survey microdata to a pre-shock baseline, applies a
//! dated labour-market shock together with the pandemic income supports in
//! force at each date, and reports market, gross, disposable and adjusted
//! disposable income distributions.

pub mod calibration;
pub mod data;
pub mod error;
pub mod expenses;
pub mod igm;
pub mod kv;
pub mod metrics;
pub mod money;
pub mod population;
pub mod rng;
pub mod scenario;
pub mod table;
pub mod taxben;

pub use error::{Error, Result, ValidationReport, Violation};
pub use money::Cents;
