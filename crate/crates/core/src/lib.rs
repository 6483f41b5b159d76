//! Compact nonlinear circuit simulator with a square-law carbon-nanotube FET
//! model, built around modified nodal analysis.
//!
//! The crate covers netlist parsing and elaboration, DC/transient/AC/noise
//! analyses, spectral post-processing, and a built-in quarter-square
//! four-quadrant multiplier benchmark with its experiment suite.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod analysis;
pub mod circuit;
pub mod cnfet;
pub mod mna;
pub mod root;
pub mod signal;
pub mod bench;
pub mod cli;
pub mod plot;
