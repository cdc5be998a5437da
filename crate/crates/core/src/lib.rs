//! Spectral phase-field engine on the unit sphere.
//!
//! Fields are discretized with the double Fourier sphere method; the
//! Ohta–Kawasaki (single species) and Nakazawa–Ohta (two species) energies are
//! minimized by linear, stabilized BDF2 schemes built on a fast spectral
//! Helmholtz solver.

pub mod banded;
pub mod dfs;
pub mod dynamics;
pub mod energetics;
pub mod error;
pub mod experiments;
pub mod harmonics;
pub mod helmholtz;
pub mod io;

pub use error::{Error, Result};
