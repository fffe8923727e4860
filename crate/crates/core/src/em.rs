//! Carrier and array bookkeeping, and the wavenumber lattice.
//!
//! The aperture of an `n_x × n_y` array with spacing `Δ` is taken as
//! `L_x = n_x·Δ`, `L_y = n_y·Δ` (continuous-aperture convention, not
//! `(n − 1)·Δ`). Lattice spatial frequencies are `κ_x = 2πl/L_x`,
//! `κ_y = 2πm/L_y`, so with this convention they fall exactly on the bins of
//! the array's 2-D DFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative slack used when deciding whether a lattice point lies on or
/// inside the propagating ellipse.
const RIM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarrierConfig {
    pub frequency_hz: f64,
    pub wavelength_m: f64,
    pub wavenumber_rad_per_m: f64,
}

impl CarrierConfig {
    pub fn new(frequency_hz: f64) -> Result<Self> {
        if !(frequency_hz.is_finite() && frequency_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "carrier frequency must be positive, got {frequency_hz}"
            )));
        }
        let wavelength_m = SPEED_OF_LIGHT / frequency_hz;
        Ok(Self {
            frequency_hz,
            wavelength_m,
            wavenumber_rad_per_m: 2.0 * PI / wavelength_m,
        })
    }

    #[inline]
    pub fn k(&self) -> f64 {
        self.wavenumber_rad_per_m
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.wavelength_m
    }
}

/// Uniform planar array in the `z = 0` plane, centred at the origin.
///
/// Elements are stored row-major: `index = j·n_x + i` with `i` along x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarArrayGeometry {
    pub n_x: usize,
    pub n_y: usize,
    pub spacing_m: f64,
    pub aperture_x_m: f64,
    pub aperture_y_m: f64,
    pub element_positions: Vec<[f64; 3]>,
}

impl PlanarArrayGeometry {
    pub fn new(n_x: usize, n_y: usize, spacing_m: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return Err(Error::InvalidArgument(format!(
                "element counts must be positive, got {n_x}×{n_y}"
            )));
        }
        if !(spacing_m.is_finite() && spacing_m > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "element spacing must be positive, got {spacing_m}"
            )));
        }
        let cx = 0.5 * (n_x as f64 - 1.0);
        let cy = 0.5 * (n_y as f64 - 1.0);
        let element_positions = (0..n_y)
            .flat_map(|j| {
                (0..n_x).map(move |i| [(i as f64 - cx) * spacing_m, (j as f64 - cy) * spacing_m, 0.0])
            })
            .collect();
        Ok(Self {
            n_x,
            n_y,
            spacing_m,
            aperture_x_m: n_x as f64 * spacing_m,
            aperture_y_m: n_y as f64 * spacing_m,
            element_positions,
        })
    }

    /// Array whose spacing is given as a fraction of the carrier wavelength.
    pub fn with_spacing_wavelengths(
        n_x: usize,
        n_y: usize,
        spacing_wavelengths: f64,
        carrier: &CarrierConfig,
    ) -> Result<Self> {
        Self::new(n_x, n_y, spacing_wavelengths * carrier.lambda())
    }

    #[inline]
    pub fn element_count(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn aperture_diagonal_m(&self) -> f64 {
        self.aperture_x_m.hypot(self.aperture_y_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticePoint {
    pub l: i32,
    pub m: i32,
    pub kappa_x: f64,
    pub kappa_y: f64,
    /// Longitudinal wavenumber: real for propagating, imaginary for evanescent.
    pub gamma: Complex64,
    pub is_propagating: bool,
}

impl LatticePoint {
    pub fn transverse_sq(&self) -> f64 {
        self.kappa_x * self.kappa_x + self.kappa_y * self.kappa_y
    }

    /// Unit propagation direction `(κ_x, κ_y, γ)/k`; `None` when evanescent.
    pub fn unit_direction(&self, carrier: &CarrierConfig) -> Option<[f64; 3]> {
        if !self.is_propagating {
            return None;
        }
        let k = carrier.k();
        Some([self.kappa_x / k, self.kappa_y / k, self.gamma.re / k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavenumberLattice {
    pub points: Vec<LatticePoint>,
    pub propagating_count: usize,
    pub evanescent_margin: u32,
}

impl WavenumberLattice {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn index_of(&self, l: i32, m: i32) -> Option<usize> {
        self.points.binary_search_by(|p| (p.l, p.m).cmp(&(l, m))).ok()
    }
}

fn longitudinal(k: f64, kappa_sq: f64, propagating: bool) -> Complex64 {
    let d = k * k - kappa_sq;
    if propagating {
        Complex64::new(d.max(0.0).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, (-d).max(0.0).sqrt())
    }
}

/// Enumerate the integer spatial-frequency lattice of `geometry`.
///
/// Propagating points satisfy `(lλ/L_x)² + (mλ/L_y)² ≤ 1`. With a positive
/// `evanescent_margin`, points inside the ellipse whose semi-axes are enlarged
/// by that many index units are retained and flagged evanescent. Output is
/// sorted lexicographically by `(l, m)`.
pub fn build_lattice(
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
    evanescent_margin: u32,
) -> Result<WavenumberLattice> {
    if !(geometry.aperture_x_m > 0.0 && geometry.aperture_y_m > 0.0) {
        return Err(Error::InvalidArgument("aperture must be positive".into()));
    }
    let k = carrier.k();
    let ax = geometry.aperture_x_m / carrier.lambda();
    let ay = geometry.aperture_y_m / carrier.lambda();
    let margin = f64::from(evanescent_margin);
    let (ox, oy) = (ax + margin, ay + margin);
    let lmax = (ox * (1.0 + RIM_TOLERANCE)).floor() as i32;
    let mmax = (oy * (1.0 + RIM_TOLERANCE)).floor() as i32;

    let mut points = Vec::new();
    let mut propagating_count = 0;
    for l in -lmax..=lmax {
        for m in -mmax..=mmax {
            let (lf, mf) = (f64::from(l), f64::from(m));
            let inner = (lf / ax).powi(2) + (mf / ay).powi(2);
            let outer = (lf / ox).powi(2) + (mf / oy).powi(2);
            let is_propagating = inner <= 1.0 + RIM_TOLERANCE;
            if !is_propagating && (evanescent_margin == 0 || outer > 1.0 + RIM_TOLERANCE) {
                continue;
            }
            let kappa_x = 2.0 * PI * lf / geometry.aperture_x_m;
            let kappa_y = 2.0 * PI * mf / geometry.aperture_y_m;
            let gamma = longitudinal(k, kappa_x * kappa_x + kappa_y * kappa_y, is_propagating);
            propagating_count += usize::from(is_propagating);
            points.push(LatticePoint {
                l,
                m,
                kappa_x,
                kappa_y,
                gamma,
                is_propagating,
            });
        }
    }
    Ok(WavenumberLattice {
        points,
        propagating_count,
        evanescent_margin,
    })
}

/// `2D²/λ` with `D` the aperture diagonal.
pub fn rayleigh_distance(geometry: &PlanarArrayGeometry, carrier: &CarrierConfig) -> f64 {
    let d = geometry.aperture_diagonal_m();
    2.0 * d * d / carrier.lambda()
}

/// Elevation/azimuth `(θ, φ)` in radians of a propagating lattice point.
pub fn wavenumber_to_direction(point: &LatticePoint, carrier: &CarrierConfig) -> Option<(f64, f64)> {
    if !point.is_propagating {
        return None;
    }
    let s = (point.transverse_sq().sqrt() / carrier.k()).min(1.0);
    Some((s.asin(), point.kappa_y.atan2(point.kappa_x)))
}

/// Transverse wavenumbers of a plane wave arriving from `(θ, φ)`.
pub fn direction_to_wavenumber(theta: f64, phi: f64, carrier: &CarrierConfig) -> (f64, f64) {
    let k = carrier.k();
    (k * theta.sin() * phi.cos(), k * theta.sin() * phi.sin())
}

/// Unit vector for elevation `θ` (from broadside, +z) and azimuth `φ`.
pub fn unit_vector(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}
