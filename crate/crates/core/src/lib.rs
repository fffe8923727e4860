//! Wavenumber-domain toolkit for holographic MIMO arrays.
//!
//! * [`em`]: carrier, planar array geometry and the wavenumber lattice.
//! * [`channel`]: Fourier-series, exact Green's-function, Fraunhofer and
//!   Fresnel channel generators.
//! * [`bases`]: DFT and Fourier-harmonic bases, projection and leakage.
//! * [`estimation`]: compressive pilots, OMP and the MRF-structured estimator.
//! * [`codebook`]: bases used as beam codebooks, rate versus distance.

pub mod bases;
pub mod channel;
pub mod codebook;
pub mod em;
pub mod estimation;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod vmf;

pub use error::{Error, Result};
pub use num_complex::Complex64;
