//! Event-driven simulator and design-space explorer for a configurable,
//! time-multiplexed spiking-neural-network core.
//!
//! The crate models the hardware at the level of its integer datapath:
//! fixed-point words, a shift-and-add decay unit, per-core synaptic and
//! state memories, address-event packets between cores and an SPI
//! configuration port. On top of that sit a resource/cost model and a
//! simulated-annealing search over precision knobs.

pub mod aer;
pub mod cg;
pub mod cost;
pub mod dataset;
pub mod demo;
pub mod dse;
pub mod error;
pub mod fxp;
pub mod model;
pub mod neuron;
pub mod random;
pub mod spi;
pub mod system;

pub use error::{Error, Result};
