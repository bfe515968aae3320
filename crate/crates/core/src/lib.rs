//! Memristor crossbar simulation with ICA-based blind image separation.
//!
//! Devices follow a voltage-threshold adaptive model; a crossbar of them
//! stores an unmixing matrix and evaluates its products through read-pulse
//! charges. ACY natural-gradient ICA and FastICA run either on plain floats
//! or on the simulated array, and the results are scored with standard image
//! quality measures.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod device;
pub mod error;
pub mod ica;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod variability;

pub use crossbar::{Crossbar, CrossbarConfig};
pub use device::{DeviceParams, MemristorState, Pulse};
pub use error::{Error, Result};
pub use ica::{Algorithm, BackendKind, IcaConfig};
pub use imaging::{GrayImage, MixingMatrix};
pub use pipeline::Experiment;
