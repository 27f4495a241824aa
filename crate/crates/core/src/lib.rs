//! Simulation and analysis of on-demand thermal states in a transmon coupled
//! to a quantum-circuit refrigerator (QCR).
//!
//! The crate is organized along the measurement chain:
//!
//! - [`system`]: truncated transmon + resonator Hamiltonian and its spectrum
//! - [`qcr`]: NIS tunnelling spectral function and voltage-controlled rates
//! - [`dynamics`]: Lindblad evolution under QCR bias pulses, steady states
//! - [`readout`]: synthetic single-shot IQ data, Gaussian-mixture fitting and
//!   1σ-counting population estimates
//! - [`thermometry`]: Gibbs fits, saturation curves and heating slopes
//! - [`otto`]: a four-stroke Otto engine with the QCR as both baths
//! - [`config`] and [`pipeline`]: config-driven, seeded experiment runs
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod calibration;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod otto;
pub mod pipeline;
pub mod quadrature;
pub mod qcr;
pub mod readout;
pub mod rng;
pub mod system;
pub mod thermometry;
pub mod units;

pub use error::{Error, Result};
