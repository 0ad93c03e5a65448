//! IO companion to the `poisson-hmm` core crate: CSV ingestion, run
//! reports, and the command-line front end's plumbing.

pub mod data;
pub mod report;
