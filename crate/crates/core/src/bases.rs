//! DFT and Fourier-harmonic (FH) bases, channel projection and power
//! leakage metrics.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelVector;
use crate::em::{wavenumber_to_direction, CarrierConfig, LatticePoint, PlanarArrayGeometry, WavenumberLattice};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{energy, to_vector, CMatrix};

/// Fraction of spectral energy captured by the `n95` support.
pub const N95_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Dft,
    Fh,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Dft => "dft",
            BasisKind::Fh => "fh",
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMeta {
    pub kind: BasisKind,
    /// `(l, m)` for FH atoms, centred DFT bin `(p, q)` otherwise.
    pub index: (i32, i32),
    pub kappa_x: f64,
    pub kappa_y: f64,
    pub is_propagating: bool,
    /// `(θ, φ)` in radians for propagating atoms.
    pub direction: Option<(f64, f64)>,
}

/// Where a lattice point lands in an FH basis: `a_point = phase · atoms[:, column]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeAtom {
    pub column: usize,
    pub phase: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    Adjoint,
    LeastSquares,
}

struct QrFactors {
    q: CMatrix,
    r: CMatrix,
}

/// Atom dictionary with unit-norm columns indexed by array element.
pub struct Basis {
    kind: BasisKind,
    atoms: CMatrix,
    meta: Vec<AtomMeta>,
    lattice_map: Vec<LatticeAtom>,
    qr: OnceLock<std::result::Result<QrFactors, Error>>,
}

impl std::fmt::Debug for Basis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Basis")
            .field("kind", &self.kind)
            .field("rows", &self.atoms.nrows())
            .field("atoms", &self.atoms.ncols())
            .finish()
    }
}

impl Clone for Basis {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            atoms: self.atoms.clone(),
            meta: self.meta.clone(),
            lattice_map: self.lattice_map.clone(),
            qr: OnceLock::new(),
        }
    }
}

fn plane_wave_atom(geometry: &PlanarArrayGeometry, kappa_x: f64, kappa_y: f64) -> Vec<Complex64> {
    let scale = 1.0 / (geometry.element_count() as f64).sqrt();
    geometry
        .element_positions
        .iter()
        .map(|p| Complex64::from_polar(scale, kappa_x * p[0] + kappa_y * p[1]))
        .collect()
}

fn centered_bins(n: usize) -> std::ops::Range<i32> {
    let n = n as i32;
    let lo = -(n / 2);
    lo..lo + n
}

/// Centred 2-D DFT basis of the array. Columns are sorted by `(p, q)`.
pub fn build_dft_basis(geometry: &PlanarArrayGeometry, carrier: &CarrierConfig) -> Basis {
    let (nx, ny) = (geometry.n_x, geometry.n_y);
    let n = geometry.element_count();
    let scale = 1.0 / (n as f64).sqrt();
    let k2 = carrier.k() * carrier.k();
    let mut atoms = CMatrix::zeros(n, n);
    let mut meta = Vec::with_capacity(n);
    for p in centered_bins(nx) {
        for q in centered_bins(ny) {
            let col = meta.len();
            for j in 0..ny {
                for i in 0..nx {
                    let arg = 2.0 * PI * (f64::from(p) * i as f64 / nx as f64 + f64::from(q) * j as f64 / ny as f64);
                    atoms[(j * nx + i, col)] = Complex64::from_polar(scale, arg);
                }
            }
            let kappa_x = 2.0 * PI * f64::from(p) / geometry.aperture_x_m;
            let kappa_y = 2.0 * PI * f64::from(q) / geometry.aperture_y_m;
            let kappa_sq = kappa_x * kappa_x + kappa_y * kappa_y;
            let is_propagating = kappa_sq <= k2 * (1.0 + 1e-9);
            let point = LatticePoint {
                l: p,
                m: q,
                kappa_x,
                kappa_y,
                gamma: Complex64::new((k2 - kappa_sq).max(0.0).sqrt(), 0.0),
                is_propagating,
            };
            meta.push(AtomMeta {
                kind: BasisKind::Dft,
                index: (p, q),
                kappa_x,
                kappa_y,
                is_propagating,
                direction: wavenumber_to_direction(&point, carrier),
            });
        }
    }
    Basis {
        kind: BasisKind::Dft,
        atoms,
        meta,
        lattice_map: Vec::new(),
        qr: OnceLock::new(),
    }
}

/// FH basis: one plane-wave atom per lattice point, in lattice order.
///
/// Lattice points whose indices agree modulo `(n_x, n_y)` produce the same
/// sampled atom up to a constant phase (this happens on the rim at
/// half-wavelength spacing, and for evanescent points whenever the ring
/// reaches the alias band). Only the first of such a group gets a column;
/// the others are recorded in [`Basis::lattice_atom`].
pub fn build_fh_basis(
    lattice: &WavenumberLattice,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
) -> Result<Basis> {
    let (nx, ny) = (geometry.n_x as i32, geometry.n_y as i32);
    let k_expected = lattice
        .points
        .iter()
        .find(|p| p.l != 0)
        .map(|p| 2.0 * PI * f64::from(p.l) / p.kappa_x);
    if let Some(lx) = k_expected {
        if (lx - geometry.aperture_x_m).abs() > 1e-9 * geometry.aperture_x_m {
            return Err(Error::InvalidArgument(
                "lattice was built for a different aperture".into(),
            ));
        }
    }
    let n = geometry.element_count();
    let mut columns: Vec<Vec<Complex64>> = Vec::new();
    let mut meta = Vec::new();
    let mut lattice_map = Vec::with_capacity(lattice.len());
    let mut seen: HashMap<(i32, i32), usize> = HashMap::new();
    for point in &lattice.points {
        let atom = plane_wave_atom(geometry, point.kappa_x, point.kappa_y);
        let key = (point.l.rem_euclid(nx), point.m.rem_euclid(ny));
        match seen.get(&key) {
            Some(&col) => {
                let phase = atom[0] / columns[col][0];
                lattice_map.push(LatticeAtom {
                    column: col,
                    phase: phase / phase.norm(),
                });
            }
            None => {
                let col = columns.len();
                seen.insert(key, col);
                columns.push(atom);
                meta.push(AtomMeta {
                    kind: BasisKind::Fh,
                    index: (point.l, point.m),
                    kappa_x: point.kappa_x,
                    kappa_y: point.kappa_y,
                    is_propagating: point.is_propagating,
                    direction: wavenumber_to_direction(point, carrier),
                });
                lattice_map.push(LatticeAtom {
                    column: col,
                    phase: Complex64::new(1.0, 0.0),
                });
            }
        }
    }
    let mut atoms = CMatrix::zeros(n, columns.len());
    for (c, col) in columns.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            atoms[(r, c)] = *v;
        }
    }
    Ok(Basis {
        kind: BasisKind::Fh,
        atoms,
        meta,
        lattice_map,
        qr: OnceLock::new(),
    })
}

impl Basis {
    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn atoms(&self) -> &CMatrix {
        &self.atoms
    }

    pub fn meta(&self) -> &[AtomMeta] {
        &self.meta
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn element_count(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn column(&self, index: usize) -> Vec<Complex64> {
        self.atoms.column(index).iter().copied().collect()
    }

    /// Number of lattice points the basis was built from (FH only).
    pub fn lattice_len(&self) -> usize {
        self.lattice_map.len()
    }

    /// Column and phase representing a lattice point (FH only).
    pub fn lattice_atom(&self, lattice_index: usize) -> Option<LatticeAtom> {
        self.lattice_map.get(lattice_index).copied()
    }

    pub fn gram(&self) -> CMatrix {
        crate::linalg::matmul(&self.atoms.adjoint(), &self.atoms)
    }

    /// Basis restricted to the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Basis {
        let atoms = self.atoms.select_columns(columns.iter());
        let meta = columns.iter().map(|&c| self.meta[c]).collect();
        Basis {
            kind: self.kind,
            atoms,
            meta,
            lattice_map: Vec::new(),
            qr: OnceLock::new(),
        }
    }

    /// Indices of propagating atoms.
    pub fn propagating_columns(&self) -> Vec<usize> {
        (0..self.atom_count()).filter(|&c| self.meta[c].is_propagating).collect()
    }

    fn qr(&self) -> Result<&QrFactors> {
        self.qr
            .get_or_init(|| {
                let (n, a) = self.atoms.shape();
                if a > n {
                    return Err(Error::RankDeficient { column: n, pivot: 0.0 });
                }
                let qr = self.atoms.clone().qr();
                let r = qr.r();
                let q = qr.q();
                let scale = (0..a).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
                for i in 0..a {
                    let pivot = r[(i, i)].norm();
                    if pivot <= 1e-10 * scale {
                        return Err(Error::RankDeficient { column: i, pivot });
                    }
                }
                Ok(QrFactors { q, r })
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Coefficients of `samples` under the given mode.
    pub fn coefficients(&self, samples: &[Complex64], mode: ProjectionMode) -> Result<Vec<Complex64>> {
        check_dim(self.element_count(), samples.len(), "channel length vs basis rows")?;
        let h = to_vector(samples);
        let c = match mode {
            ProjectionMode::Adjoint => self.atoms.ad_mul(&h),
            ProjectionMode::LeastSquares => {
                let f = self.qr()?;
                let qh = f.q.ad_mul(&h);
                f.r.solve_upper_triangular(&qh)
                    .ok_or(Error::RankDeficient { column: 0, pivot: 0.0 })?
            }
        };
        Ok(c.iter().copied().collect())
    }

    /// `B c`.
    pub fn synthesize(&self, coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
        check_dim(self.atom_count(), coefficients.len(), "coefficients vs atom count")?;
        Ok((&self.atoms * to_vector(coefficients)).iter().copied().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub coefficients: Vec<Complex64>,
    pub power: Vec<f64>,
    pub n95: usize,
    pub residual_energy_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leakage {
    pub n95: usize,
    pub normalized: f64,
}

/// Smallest number of the largest entries of `power` whose sum reaches
/// `fraction` of the total. Returns 0 for an all-zero input.
pub fn energy_support_size(power: &[f64], fraction: f64) -> usize {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut sorted = power.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, p) in sorted.iter().enumerate() {
        acc += p;
        if acc >= target {
            return i + 1;
        }
    }
    sorted.len()
}

/// Project a channel onto `basis`.
pub fn project(basis: &Basis, channel: &ChannelVector, mode: ProjectionMode) -> Result<SpectrumResult> {
    let h = &channel.samples;
    let h_energy = energy(h);
    if h_energy <= 0.0 {
        return Err(Error::ZeroEnergy("channel"));
    }
    let coefficients = basis.coefficients(h, mode)?;
    let power: Vec<f64> = coefficients.iter().map(|c| c.norm_sqr()).collect();
    let recon = basis.synthesize(&coefficients)?;
    let residual: f64 = h.iter().zip(&recon).map(|(a, b)| (a - b).norm_sqr()).sum();
    let n95 = energy_support_size(&power, N95_FRACTION).max(1);
    Ok(SpectrumResult {
        coefficients,
        power,
        n95,
        residual_energy_fraction: (residual / h_energy).clamp(0.0, 1.0),
    })
}

/// Default projection for each basis kind: adjoint for DFT, least squares for FH.
pub fn default_mode(kind: BasisKind) -> ProjectionMode {
    match kind {
        BasisKind::Dft => ProjectionMode::Adjoint,
        BasisKind::Fh => ProjectionMode::LeastSquares,
    }
}

pub fn leakage_n95(spectrum: &SpectrumResult) -> Result<Leakage> {
    let n95 = energy_support_size(&spectrum.power, N95_FRACTION);
    if n95 == 0 {
        return Err(Error::ZeroEnergy("spectrum"));
    }
    Ok(Leakage {
        n95,
        normalized: n95 as f64 / spectrum.power.len() as f64,
    })
}

/// Magnitude of the normalised Dirichlet kernel between a continuous plane
/// wave at `probe_frequency` and a sampled atom at `atom_frequency` along x.
pub fn dirichlet_probe(geometry: &PlanarArrayGeometry, probe_frequency: f64, atom_frequency: f64) -> f64 {
    let n = geometry.n_x as f64;
    let u = (probe_frequency - atom_frequency) * geometry.spacing_m;
    let den = (0.5 * u).sin();
    if den.abs() < 1e-12 {
        return 1.0;
    }
    ((0.5 * n * u).sin() / (n * den)).abs()
}

/// Write a spectrum as CSV:
/// `atom_kind,l_or_p,m_or_q,kappa_x,kappa_y,is_propagating,power`.
pub fn write_spectrum_csv<W: Write>(mut out: W, basis: &Basis, spectrum: &SpectrumResult) -> std::io::Result<()> {
    writeln!(out, "atom_kind,l_or_p,m_or_q,kappa_x,kappa_y,is_propagating,power")?;
    for (meta, p) in basis.meta.iter().zip(&spectrum.power) {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            meta.kind, meta.index.0, meta.index.1, meta.kappa_x, meta.kappa_y, meta.is_propagating, p
        )?;
    }
    Ok(())
}
