//! Snapshot differential Doppler positioning with LEO signals of opportunity.
//!
//! A rover with an unknown position records short bursts of carrier
//! frequency from passing satellites. A base station at a known position
//! records the same satellites continuously; its model residuals are mostly
//! orbit error common to both receivers and are subtracted from the rover's
//! measurements before the rover's position and clock are fitted.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod differential;
pub mod doppler_model;
pub mod ephemeris;
pub mod geodesy;
pub mod observations;
pub mod orbits;
pub mod simulator;
pub mod solver;
pub mod time;
