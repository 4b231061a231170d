//! Simulation and estimation toolkit for chipless Wi-Fi tag soil-moisture sensing.
//!
//! The pipeline runs in stages that mirror a physical deployment:
//!
//! 1. [`soil`] maps moisture to relative permittivity.
//! 2. [`resonator`] turns a slot geometry plus soil permittivity into a lumped
//!    bandstop circuit, evaluates its frequency response, and searches slot
//!    geometries for a target moisture range.
//! 3. [`channel`] places a transmitter array, a receiver array, the tag and
//!    clutter in a plan-view scene and synthesizes per-subcarrier CSI.
//! 4. [`beam_align`] finds the tag's angle of departure with a transmit beam
//!    scan and its angle of arrival with MUSIC.
//! 5. [`features`] stitches CSI from the 13 channels into a filter-gain
//!    feature vector.
//! 6. [`estimator`] maps features to moisture with a random forest or a DTW
//!    nearest-profile matcher.
//!
//! [`pipeline`] wires the stages together and [`cli`] exposes them as
//! subcommands.

// `!(x > 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam_align;
pub mod channel;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod features;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod resonator;
pub mod seed;
pub mod soil;

pub use error::{Error, Result};
