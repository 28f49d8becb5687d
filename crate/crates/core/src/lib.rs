#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlator;
pub mod g2;
pub mod generator;
pub mod presets;
pub mod resonance;
pub mod spectral;
pub mod tags;
