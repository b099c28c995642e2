//! Support library for the `dynlu` command-line tool: state-file parsing,
//! benchmark sweeps, and output formatting. Kept as a library so the
//! integration and acceptance suites can drive the same code paths the
//! binary uses.

pub mod bench;
pub mod state;
