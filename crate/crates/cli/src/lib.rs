//! File formats, the experiment harness, sweeps and verification suites for
//! `predsub-core`.

pub mod config;
pub mod experiment;
pub mod instance;
pub mod io;
pub mod sweep;
pub mod verify;
