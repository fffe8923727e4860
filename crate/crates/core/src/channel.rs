//! Channel generators: Fourier plane-wave series, exact Green's function,
//! Fraunhofer and Fresnel approximations, plus the impairment-matrix hook.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bases::{Basis, BasisKind};
use crate::em::{CarrierConfig, PlanarArrayGeometry, WavenumberLattice};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{to_vector, CMatrix};
use crate::rng::{complex_normal, rng_from_seed};
use crate::vmf::VonMisesFisher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactGreens,
    FourierSeries,
    Fraunhofer,
    Fresnel,
}

/// Field samples across the receive array for a single-antenna source.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector {
    pub samples: Vec<Complex64>,
    pub provenance: Provenance,
    pub rng_seed: u64,
}

impl ChannelVector {
    pub fn new(samples: Vec<Complex64>, provenance: Provenance, rng_seed: u64) -> Self {
        Self {
            samples,
            provenance,
            rng_seed,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        crate::linalg::energy(&self.samples)
    }
}

const CHANNEL_MAGIC: &[u8; 4] = b"HMWC";

/// Binary export: 16-byte header (`"HMWC"`, `u32` length, `u32` reserved,
/// four zero padding bytes), then `length` pairs of little-endian `f64`
/// (re, im).
pub fn write_channel_binary<W: Write>(mut out: W, channel: &ChannelVector) -> std::io::Result<()> {
    let len = u32::try_from(channel.len())
        .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "channel too long"))?;
    out.write_all(CHANNEL_MAGIC)?;
    out.write_all(&len.to_le_bytes())?;
    out.write_all(&0u32.to_le_bytes())?;
    out.write_all(&[0u8; 4])?;
    for z in &channel.samples {
        out.write_all(&z.re.to_le_bytes())?;
        out.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

/// Read samples written by [`write_channel_binary`].
pub fn read_channel_binary<R: Read>(mut input: R) -> Result<Vec<Complex64>> {
    let io = |e: std::io::Error| Error::Format(e.to_string());
    let mut header = [0u8; 16];
    input.read_exact(&mut header).map_err(io)?;
    if &header[..4] != CHANNEL_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let len = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let mut body = vec![0u8; len * 16];
    input.read_exact(&mut body).map_err(io)?;
    let mut extra = [0u8; 1];
    if input.read(&mut extra).map_err(io)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    Ok(body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect())
}

/// CSV export: `index,re,im`.
pub fn write_channel_csv<W: Write>(mut out: W, channel: &ChannelVector) -> std::io::Result<()> {
    writeln!(out, "index,re,im")?;
    for (i, z) in channel.samples.iter().enumerate() {
        writeln!(out, "{i},{},{}", z.re, z.im)?;
    }
    Ok(())
}

/// One VMF cluster of the angular power spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VmfCluster {
    /// Unit vector with positive z-component.
    pub mean_direction: [f64; 3],
    pub alpha_vmf: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngularPowerSpectrum {
    pub clusters: Vec<VmfCluster>,
    /// Target `E‖h‖²`.
    pub normalization: f64,
}

impl AngularPowerSpectrum {
    /// Validates the clusters and rescales the weights to sum to one.
    pub fn new(mut clusters: Vec<VmfCluster>, normalization: f64) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::Empty("cluster list"));
        }
        if !(normalization.is_finite() && normalization > 0.0) {
            return Err(Error::InvalidArgument("normalization must be positive".into()));
        }
        let mut total = 0.0;
        for c in &mut clusters {
            let n = c.mean_direction.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(n > 0.0) || c.mean_direction[2] <= 0.0 {
                return Err(Error::InvalidArgument(
                    "cluster direction must point into the upper hemisphere".into(),
                ));
            }
            if !(c.alpha_vmf.is_finite() && c.alpha_vmf >= 0.0) {
                return Err(Error::InvalidArgument("alpha_vmf must be non-negative".into()));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidArgument("cluster weight must be positive".into()));
            }
            c.mean_direction = c.mean_direction.map(|x| x / n);
            total += c.weight;
        }
        for c in &mut clusters {
            c.weight /= total;
        }
        Ok(Self {
            clusters,
            normalization,
        })
    }

    fn density(&self, direction: &[f64; 3]) -> f64 {
        self.clusters
            .iter()
            .map(|c| {
                c.weight
                    * VonMisesFisher::new(c.mean_direction, c.alpha_vmf)
                        .expect("validated cluster")
                        .density(direction)
            })
            .sum()
    }
}

/// Per-lattice-point variances (zero at evanescent points).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVariances {
    pub variances: Vec<f64>,
}

impl LatticeVariances {
    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.variances.iter().sum()
    }
}

/// Map a VMF-mixture angular spectrum onto the lattice.
///
/// Each propagating point receives `f(d)/γ`, the mixture density at the
/// point's direction times the solid angle per unit transverse-wavenumber
/// area. The longitudinal wavenumber is floored at its value half a lattice
/// cell inside the rim so that points lying exactly on the rim stay finite.
pub fn build_vmf_spectrum(
    spectrum: &AngularPowerSpectrum,
    lattice: &WavenumberLattice,
    carrier: &CarrierConfig,
) -> Result<LatticeVariances> {
    if lattice.propagating_count == 0 {
        return Err(Error::EmptyLattice);
    }
    let k = carrier.k();
    let gamma_floor = rim_gamma_floor(lattice, k);
    let mut variances: Vec<f64> = lattice
        .points
        .iter()
        .map(|p| match p.unit_direction(carrier) {
            Some(d) => spectrum.density(&d) / p.gamma.re.max(gamma_floor),
            None => 0.0,
        })
        .collect();
    let total: f64 = variances.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroEnergy("angular power spectrum on lattice"));
    }
    let scale = spectrum.normalization / total;
    variances.iter_mut().for_each(|v| *v *= scale);
    Ok(LatticeVariances { variances })
}

fn rim_gamma_floor(lattice: &WavenumberLattice, k: f64) -> f64 {
    let cell = |f: fn(&crate::em::LatticePoint) -> Option<f64>| {
        lattice.points.iter().filter_map(f).fold(f64::INFINITY, f64::min)
    };
    let dx = cell(|p| (p.l == 1).then_some(p.kappa_x));
    let dy = cell(|p| (p.m == 1).then_some(p.kappa_y));
    let d = match (dx.is_finite(), dy.is_finite()) {
        (true, true) => (dx * dy).sqrt(),
        (true, false) => dx,
        (false, true) => dy,
        (false, false) => return 0.0,
    };
    let inner = (k - 0.5 * d).max(0.0);
    (k * k - inner * inner).sqrt()
}

/// Fourier plane-wave series channel: `h = Σ x_(l,m) a_(l,m)` with
/// independent `x_(l,m) ~ CN(0, σ²(l,m))`.
pub fn synthesize_farfield(variances: &LatticeVariances, basis_fh: &Basis, rng_seed: u64) -> Result<ChannelVector> {
    if basis_fh.kind() != BasisKind::Fh {
        return Err(Error::InvalidArgument("far-field synthesis needs an FH basis".into()));
    }
    check_dim(basis_fh.lattice_len(), variances.len(), "variances vs FH lattice")?;
    let mut rng = rng_from_seed(rng_seed);
    let mut coeff = vec![Complex64::default(); basis_fh.atom_count()];
    for (i, &var) in variances.variances.iter().enumerate() {
        let x = complex_normal(&mut rng, 1.0);
        if var > 0.0 {
            let atom = basis_fh.lattice_atom(i).expect("checked length");
            coeff[atom.column] += atom.phase * x * var.sqrt();
        }
    }
    Ok(ChannelVector::new(
        basis_fh.synthesize(&coeff)?,
        Provenance::FourierSeries,
        rng_seed,
    ))
}

/// Placement of one scatterer cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterLayout {
    /// Unit vector from the array centre towards the cluster (z > 0).
    pub direction: [f64; 3],
    pub distance_m: f64,
    pub alpha_vmf: f64,
    pub weight: f64,
    #[serde(default = "default_scatterers")]
    pub scatterers: usize,
    /// Radii are drawn uniformly in `distance·[1 − w, 1 + w]`.
    #[serde(default = "default_shell")]
    pub shell_half_width: f64,
}

fn default_scatterers() -> usize {
    20
}

fn default_shell() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScattererCluster {
    pub centroid: [f64; 3],
    pub positions: Vec<[f64; 3]>,
    pub gains: Vec<Complex64>,
    /// Variance of each gain in this cluster.
    pub gain_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterScattererSet {
    pub clusters: Vec<ScattererCluster>,
    pub rng_seed: u64,
}

impl ClusterScattererSet {
    /// Draw scatterers: VMF directions around each cluster's direction,
    /// radii uniform in the shell, gains `CN(0, weight / count)` with weights
    /// normalised to one.
    pub fn draw(layouts: &[ClusterLayout], rng_seed: u64) -> Result<Self> {
        if layouts.is_empty() {
            return Err(Error::Empty("cluster layout"));
        }
        let total_weight: f64 = layouts.iter().map(|c| c.weight).sum();
        let mut rng = rng_from_seed(rng_seed);
        let mut clusters = Vec::with_capacity(layouts.len());
        for layout in layouts {
            if layout.scatterers == 0 {
                return Err(Error::InvalidArgument("cluster needs at least one scatterer".into()));
            }
            if !(layout.distance_m > 0.0) || !(0.0..1.0).contains(&layout.shell_half_width) || !(layout.weight > 0.0) {
                return Err(Error::InvalidArgument("invalid cluster layout".into()));
            }
            let vmf = VonMisesFisher::new(layout.direction, layout.alpha_vmf)
                .ok_or_else(|| Error::InvalidArgument("invalid cluster direction".into()))?;
            let mean = vmf.mean();
            if mean[2] <= 0.0 {
                return Err(Error::InvalidArgument("cluster must lie in front of the array".into()));
            }
            let gain_variance = layout.weight / total_weight / layout.scatterers as f64;
            let mut positions = Vec::with_capacity(layout.scatterers);
            let mut gains = Vec::with_capacity(layout.scatterers);
            for _ in 0..layout.scatterers {
                let d = loop {
                    let d = vmf.sample(&mut rng);
                    if d[2] > 1e-3 {
                        break d;
                    }
                };
                let w = layout.shell_half_width;
                let r = layout.distance_m * (1.0 - w + 2.0 * w * rng.random::<f64>());
                positions.push(d.map(|x| x * r));
                gains.push(complex_normal(&mut rng, gain_variance));
            }
            clusters.push(ScattererCluster {
                centroid: mean.map(|x| x * layout.distance_m),
                positions,
                gains,
                gain_variance,
            });
        }
        Ok(Self { clusters, rng_seed })
    }

    /// A single unit-gain scatterer at `position`.
    pub fn single(position: [f64; 3]) -> Self {
        Self {
            clusters: vec![ScattererCluster {
                centroid: position,
                positions: vec![position],
                gains: vec![Complex64::new(1.0, 0.0)],
                gain_variance: 1.0,
            }],
            rng_seed: 0,
        }
    }

    fn scatterers(&self) -> impl Iterator<Item = (&[f64; 3], Complex64, f64)> {
        self.clusters
            .iter()
            .flat_map(|c| c.positions.iter().zip(&c.gains).map(move |(p, g)| (p, *g, c.gain_variance)))
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn validate_scatterers(set: &ClusterScattererSet, geometry: &PlanarArrayGeometry, carrier: &CarrierConfig) -> Result<()> {
    let min_dist = carrier.lambda() / 100.0;
    for (p, _, _) in set.scatterers() {
        if !(p[2] > 0.0) {
            return Err(Error::InvalidArgument("scatterers must satisfy z > 0".into()));
        }
        for (n, r) in geometry.element_positions.iter().enumerate() {
            let d = dist(p, r);
            if d < min_dist {
                return Err(Error::ScattererTooClose {
                    element: n,
                    distance_m: d,
                });
            }
        }
    }
    Ok(())
}

/// Scale that makes `E‖h‖²` (over the gains, for fixed positions) equal the
/// number of receive elements.
fn greens_scale(set: &ClusterScattererSet, geometry: &PlanarArrayGeometry) -> f64 {
    let expected: f64 = set
        .scatterers()
        .map(|(p, _, var)| {
            var * geometry
                .element_positions
                .iter()
                .map(|r| (4.0 * PI * dist(p, r)).powi(-2))
                .sum::<f64>()
        })
        .sum();
    if expected > 0.0 {
        (geometry.element_count() as f64 / expected).sqrt()
    } else {
        0.0
    }
}

/// Exact spherical-wave response `Σ β_s e^{−jk‖p_s − r_n‖} / (4π‖p_s − r_n‖)`
/// without normalisation.
pub fn greens_response(
    set: &ClusterScattererSet,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
) -> Result<Vec<Complex64>> {
    validate_scatterers(set, geometry, carrier)?;
    let k = carrier.k();
    Ok(geometry
        .element_positions
        .iter()
        .map(|r| {
            set.scatterers()
                .map(|(p, g, _)| {
                    let d = dist(p, r);
                    g * Complex64::from_polar(1.0 / (4.0 * PI * d), -k * d)
                })
                .sum()
        })
        .collect())
}

#[derive(Clone, Copy)]
enum Expansion {
    Linear,
    Quadratic,
}

fn approximate_response(
    set: &ClusterScattererSet,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
    order: Expansion,
) -> Result<Vec<Complex64>> {
    validate_scatterers(set, geometry, carrier)?;
    let k = carrier.k();
    Ok(geometry
        .element_positions
        .iter()
        .map(|r| {
            set.scatterers()
                .map(|(p, g, _)| {
                    let rc = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                    let proj = (p[0] * r[0] + p[1] * r[1] + p[2] * r[2]) / rc;
                    let mut path = rc - proj;
                    if let Expansion::Quadratic = order {
                        let rr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                        path += (rr - proj * proj) / (2.0 * rc);
                    }
                    g * Complex64::from_polar(1.0 / (4.0 * PI * rc), -k * path)
                })
                .sum()
        })
        .collect())
}

fn scaled(samples: Vec<Complex64>, scale: f64) -> Vec<Complex64> {
    samples.into_iter().map(|z| z * scale).collect()
}

/// Exact Green's-function channel, normalised so that `E‖h‖²` over the
/// scatterer gains equals the number of receive elements.
pub fn synthesize_nearfield_greens(
    set: &ClusterScattererSet,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
) -> Result<ChannelVector> {
    let raw = greens_response(set, geometry, carrier)?;
    Ok(ChannelVector::new(
        scaled(raw, greens_scale(set, geometry)),
        Provenance::ExactGreens,
        set.rng_seed,
    ))
}

/// Planar-wavefront approximation, same normalisation as the exact channel.
pub fn fraunhofer_channel(
    set: &ClusterScattererSet,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
) -> Result<ChannelVector> {
    let raw = approximate_response(set, geometry, carrier, Expansion::Linear)?;
    Ok(ChannelVector::new(
        scaled(raw, greens_scale(set, geometry)),
        Provenance::Fraunhofer,
        set.rng_seed,
    ))
}

/// Parabolic-wavefront approximation, same normalisation as the exact channel.
pub fn fresnel_channel(
    set: &ClusterScattererSet,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
) -> Result<ChannelVector> {
    let raw = approximate_response(set, geometry, carrier, Expansion::Quadratic)?;
    Ok(ChannelVector::new(
        scaled(raw, greens_scale(set, geometry)),
        Provenance::Fresnel,
        set.rng_seed,
    ))
}

/// `left · coefficients · rightᴴ`.
pub fn apply_impairment_matrices(coefficients: &CMatrix, left: &CMatrix, right: &CMatrix) -> Result<CMatrix> {
    check_dim(coefficients.nrows(), left.ncols(), "left matrix columns vs coefficient rows")?;
    check_dim(coefficients.ncols(), right.ncols(), "right matrix columns vs coefficient columns")?;
    Ok(left * coefficients * right.adjoint())
}

/// `‖a − b‖² / ‖b‖²`.
pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    num / crate::linalg::energy(b)
}

/// Complex correlation `|aᴴ b| / (‖a‖ ‖b‖)`.
pub fn correlation(a: &[Complex64], b: &[Complex64]) -> f64 {
    let va = to_vector(a);
    let vb = to_vector(b);
    va.dotc(&vb).norm() / (va.norm() * vb.norm())
}
