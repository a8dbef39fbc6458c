//! Standard-library companion to `micvar-core`: CSV ingestion, versioned
//! JSON schemas, atomic file output, and a parallel Monte Carlo driver.
//! The `micvar` binary is a thin layer over this library.

#![deny(missing_docs)]

pub mod error;
pub mod io;
pub mod parallel;
pub mod schema;
