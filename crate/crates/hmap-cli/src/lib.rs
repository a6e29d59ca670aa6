//! Command implementations and bundled replay scenarios for the `hmap`
//! binary. Split out as a library so the integration tests can drive the
//! same scenario definitions the CLI ships.

pub mod commands;
pub mod scenarios;
