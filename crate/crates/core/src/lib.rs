//! Dynamic monotone submodular maximization under a cardinality constraint,
//! accelerated by predictions of when each element will be inserted and deleted.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It contains:
//!
//! * [`oracle`]: value oracles for monotone submodular functions and a query
//!   meter that attributes every evaluation to a phase and a caller.
//! * [`stream`]: update streams, prediction tables, prediction error (offline and
//!   online) and the predicted/unpredicted partition of the active set.
//! * [`generate`]: seeded synthetic coverage instances and streams with a
//!   controlled number of mispredicted elements.
//! * [`engine`]: a threshold-based fully dynamic algorithm built from levels of
//!   randomly peeled threshold buckets, plus [`multi::DynamicMax`] which runs it
//!   over a geometric grid of optimum guesses.
//! * [`robust`]: extraction of strongly robust `(Q, R)` pairs from an engine
//!   snapshot, the two-stage deletion-robust interface and a robustness verifier.
//! * [`scheduler`]: the precompute/stream framework with its warm-up, main and
//!   full subroutines.
//! * [`baseline`]: lazy greedy, eager greedy and brute-force optimum.
#![no_std]

extern crate alloc;

pub mod baseline;
pub mod engine;
pub mod error;
pub mod generate;
pub mod multi;
pub mod oracle;
pub mod robust;
pub mod scheduler;
pub mod stream;

mod util;

pub use error::{Error, Result};
pub use oracle::{CountingOracle, CoverageOracle, ElementId, Oracle, Phase, SetFunction, Tag};
pub use util::mix_seed;
