//! Exact state-vector simulator and local gate-schedule compiler for
//! finite-group lattice gauge theories with staggered fermionic matter.
//!
//! The crate has two halves. The direct half ([`oracle`], [`gauge_ops`])
//! constructs nonlocal gauge-invariant observables — Wilson loops and
//! mesonic strings — by brute force on the full state vector. The
//! protocol half ([`protocols`], [`schedule`]) compiles the same requests
//! into ordered sequences of two-body gates between the lattice and a
//! movable ancilla, executes them, and reads the observable off the
//! ancilla alone. Every protocol result can be cross-checked against the
//! oracle value on the same state.

pub mod error;
pub mod gauge_ops;
pub mod group;
pub mod hilbert;
pub mod lattice;
pub mod oracle;
pub mod protocols;
pub mod schedule;
pub mod xbasis;

pub use error::{Error, Result};
