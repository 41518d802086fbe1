#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulator for the Dicke-type transition of a pumped membrane-in-the-middle
//! optomechanical cavity.
//!
//! All quantities outside [`model`] are dimensionless: rates in units of the
//! membrane frequency, lengths in oscillator units.

pub mod dynamics;
pub mod experiment;
pub mod fockcheck;
pub mod meanfield;
pub mod model;
mod numerics;
pub mod quantum1d;
pub mod stability;

pub use meanfield::{Branch, SteadyState};
pub use model::{DimensionlessParams, PhysicalParams};
