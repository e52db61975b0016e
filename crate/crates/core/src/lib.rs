//! Coupled piezoelectric elastodynamics on structured hexahedral meshes.
//!
//! The crate models nanosecond voltage pulses applied to surface gates on a
//! GaAs substrate: the quasi-static potential is slaved to the lattice
//! displacement every step, and the displacement is advanced explicitly with
//! central differences on a lumped mass. Around that solver sit the material
//! tensors (with crystal rotation and a Christoffel velocity oracle), probe
//! and metric extraction, and a two-level charge-qubit integrator that turns
//! simulated potentials into detuning noise.
//!
//! Everything here is `no_std` with `alloc`; file formats, configuration and
//! the command line live in the companion `gatepulse` crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod assembly;
pub mod cholesky;
pub mod error;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod probes;
pub mod pulse;
pub mod qubit;
pub mod solver;
pub mod sparse;
pub mod timeloop;

pub use error::{Error, Result};
