//! Library surface of the experiment harness: TOML config parsing and
//! validation, command implementations, and CSV writers. The `isac-hbf`
//! binary is a thin clap wrapper around these modules; they are exposed as a
//! library so integration tests can load configs and rebuild scenes exactly
//! the way the binary does.

// Config validation uses `!(x > 0.0)` rather than `x <= 0.0` so that NaN
// values land on the rejection branch; the lint's suggested rewrite would let
// NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
