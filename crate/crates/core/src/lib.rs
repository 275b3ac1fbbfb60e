//! Flux-modulated fluxonium: static spectrum, Floquet quasienergies, polariton couplings,
//! dephasing and relaxation under flux and dielectric noise, spectroscopy and parameter sweeps.

pub mod circuit;
pub mod decoherence;
pub mod error;
pub mod floquet;
pub mod polariton;
pub mod spectroscopy;
pub mod spline;
mod serde_util;
pub mod sweep;
pub mod units;

pub use error::{Error, Result};
