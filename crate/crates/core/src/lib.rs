//! Simulation engine for coherent tunnelling by adiabatic passage (CTAP) of a
//! single atom through three magnetic waveguides on an atom chip.
//!
//! The crate is organised bottom-up:
//!
//! * [`threemode`]: the exact three-level model and its dark state, used as an oracle.
//! * [`chipgeom`]: wire layout of the chip and its discretisation into segments.
//! * [`magfield`]: Biot-Savart fields, trapping potential and per-slice minima.
//! * [`qgrid`]: position/momentum grids, units and the wavefunction container.
//! * [`propagator`]: split-operator stepping in real and imaginary time.
//! * [`observables`]: waveguide populations, density maps and validity monitors.
//! * [`initial`]: guide ground state with a longitudinal envelope.

pub mod chipgeom;
pub mod consts;
mod error;
pub mod fft;
pub mod initial;
pub mod magfield;
pub mod observables;
pub mod propagator;
pub mod qgrid;
pub mod qwf;
pub mod reduce;
pub mod threemode;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
