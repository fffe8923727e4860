//! Compressive pilot measurements and sparse wavenumber-domain recovery.
//!
//! The pilot model is `y = A h + n` with `A` an `M × N` matrix of
//! unit-modulus entries scaled by `1/√N` (analog combining with random
//! phases). Recovery works on the combined dictionary `Φ = A B`, where `B`
//! is a DFT or FH basis, and returns wavenumber-domain coefficients `x` with
//! `ĥ = B x`.

mod mrf;
mod omp;

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::bases::{Basis, BasisKind};
use crate::em::PlanarArrayGeometry;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{energy, matmul, to_vector, CMatrix};
use crate::rng::{complex_normal, rng_from_seed};

pub use mrf::{bg_estimate, mrf_estimate, MrfGraph, MrfPrior};
pub use omp::{omp_estimate, OmpStop};

pub(crate) struct SvdFactors {
    /// `M × R`
    pub u: CMatrix,
    pub s: Vec<f64>,
    /// `R × A`
    pub v_t: CMatrix,
}

/// Sensing matrix, noise level and combined dictionary.
pub struct MeasurementModel {
    sensing: CMatrix,
    noise_variance: f64,
    dictionary: CMatrix,
    atom_indices: Vec<(i32, i32)>,
    basis_kind: BasisKind,
    rng_seed: u64,
    svd: OnceLock<Arc<SvdFactors>>,
}

impl std::fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("measurements", &self.sensing.nrows())
            .field("elements", &self.sensing.ncols())
            .field("atoms", &self.dictionary.ncols())
            .field("noise_variance", &self.noise_variance)
            .field("basis_kind", &self.basis_kind)
            .field("rng_seed", &self.rng_seed)
            .finish()
    }
}

/// Noise variance giving `E‖Ah‖² / (M σ²) = SNR` for a channel with
/// `E‖h‖² = channel_power` observed through `N` elements. `+∞` dB means
/// noiseless.
pub fn noise_variance_for(snr_db: f64, channel_power: f64, elements: usize) -> f64 {
    if snr_db == f64::INFINITY {
        return 0.0;
    }
    channel_power / elements as f64 / 10f64.powf(snr_db / 10.0)
}

/// Draw a random-phase pilot matrix with `ceil(ratio · N)` rows.
pub fn build_measurement(
    geometry: &PlanarArrayGeometry,
    basis: &Basis,
    compression_ratio: f64,
    snr_db: f64,
    rng_seed: u64,
) -> Result<MeasurementModel> {
    let n = geometry.element_count();
    if !(compression_ratio > 0.0 && compression_ratio <= 1.0) || (compression_ratio * n as f64) < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "compression ratio must lie in (0, 1] with ratio·N ≥ 1, got {compression_ratio}"
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("invalid SNR {snr_db} dB")));
    }
    let m = ((compression_ratio * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut rng = rng_from_seed(rng_seed);
    let phases = DMatrix::from_fn(m, n, |_, _| 2.0 * PI * rng.random::<f64>());
    let noise = noise_variance_for(snr_db, n as f64, n);
    let mut model = MeasurementModel::from_phases(&phases, basis, noise)?;
    model.rng_seed = rng_seed;
    Ok(model)
}

impl MeasurementModel {
    /// Model with prescribed pilot phases (`M × N`, radians).
    pub fn from_phases(phases: &DMatrix<f64>, basis: &Basis, noise_variance: f64) -> Result<Self> {
        let (m, n) = phases.shape();
        check_dim(basis.element_count(), n, "pilot columns vs basis rows")?;
        if m == 0 || m > n {
            return Err(Error::InvalidArgument(format!("need 1 ≤ M ≤ N, got M = {m}, N = {n}")));
        }
        if !(noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("noise variance must be non-negative".into()));
        }
        if basis.atom_count() == 0 {
            return Err(Error::Empty("dictionary"));
        }
        let scale = 1.0 / (n as f64).sqrt();
        let sensing = phases.map(|t| Complex64::from_polar(scale, t));
        let dictionary = matmul(&sensing, basis.atoms());
        Ok(Self {
            sensing,
            noise_variance,
            dictionary,
            atom_indices: basis.meta().iter().map(|m| m.index).collect(),
            basis_kind: basis.kind(),
            rng_seed: 0,
            svd: OnceLock::new(),
        })
    }

    /// Same pilots and dictionary at a different noise variance. Shares the
    /// dictionary factorisation if it has already been computed.
    pub fn with_noise_variance(&self, noise_variance: f64) -> Self {
        let svd = OnceLock::new();
        if let Some(f) = self.svd.get() {
            let _ = svd.set(Arc::clone(f));
        }
        Self {
            sensing: self.sensing.clone(),
            noise_variance,
            dictionary: self.dictionary.clone(),
            atom_indices: self.atom_indices.clone(),
            basis_kind: self.basis_kind,
            rng_seed: self.rng_seed,
            svd,
        }
    }

    pub fn sensing(&self) -> &CMatrix {
        &self.sensing
    }

    pub fn dictionary(&self) -> &CMatrix {
        &self.dictionary
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn measurements(&self) -> usize {
        self.sensing.nrows()
    }

    pub fn elements(&self) -> usize {
        self.sensing.ncols()
    }

    pub fn atom_count(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn atom_indices(&self) -> &[(i32, i32)] {
        &self.atom_indices
    }

    pub fn basis_kind(&self) -> BasisKind {
        self.basis_kind
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    /// Noisy pilot observation `A h + n`, noise drawn from `noise_seed`.
    pub fn observe(&self, h: &[Complex64], noise_seed: u64) -> Result<Vec<Complex64>> {
        check_dim(self.elements(), h.len(), "channel length vs pilot columns")?;
        let clean = &self.sensing * to_vector(h);
        let mut rng = rng_from_seed(noise_seed);
        Ok(clean
            .iter()
            .map(|z| {
                let n = complex_normal(&mut rng, 1.0);
                z + n * self.noise_variance.sqrt()
            })
            .collect())
    }

    pub(crate) fn svd(&self) -> &SvdFactors {
        self.svd.get_or_init(|| {
            let svd = self.dictionary.clone().svd(true, true);
            Arc::new(SvdFactors {
                u: svd.u.expect("requested U"),
                s: svd.singular_values.iter().copied().collect(),
                v_t: svd.v_t.expect("requested Vᴴ"),
            })
        })
    }

    /// Factorise the dictionary now rather than on first use by the MRF
    /// estimator, so copies made with [`Self::with_noise_variance`] share it.
    pub fn prepare(&self) {
        self.svd();
    }

    pub(crate) fn check_observation(&self, y: &[Complex64]) -> Result<DVector<Complex64>> {
        check_dim(self.measurements(), y.len(), "observation length vs pilots")?;
        Ok(to_vector(y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub coefficients: Vec<Complex64>,
    pub support: Vec<bool>,
    /// Filled by [`EstimationResult::evaluate`].
    pub nmse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// OMP: residual power after each selection. MRF: largest change in the
    /// support prior after each turbo iteration.
    pub trace: Vec<f64>,
    /// Posterior support probabilities (MRF/BG estimators only).
    pub support_probability: Vec<f64>,
}

impl EstimationResult {
    /// Channel estimate `B x`.
    pub fn channel(&self, basis: &Basis) -> Result<Vec<Complex64>> {
        basis.synthesize(&self.coefficients)
    }

    /// Record NMSE against the true channel and return it.
    pub fn evaluate(&mut self, basis: &Basis, h_true: &[Complex64]) -> Result<f64> {
        let v = nmse(&self.channel(basis)?, h_true)?;
        self.nmse = Some(v);
        Ok(v)
    }
}

/// `‖ĥ − h‖² / ‖h‖²`.
pub fn nmse(h_hat: &[Complex64], h_true: &[Complex64]) -> Result<f64> {
    check_dim(h_true.len(), h_hat.len(), "estimate vs truth")?;
    let e = energy(h_true);
    if e <= 0.0 {
        return Err(Error::ZeroEnergy("reference channel"));
    }
    Ok(h_hat.iter().zip(h_true).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / e)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{build_fh_basis, build_dft_basis};
    use crate::em::{build_lattice, CarrierConfig};
    use crate::rng::derive_seed;

    fn fh(n: usize) -> (PlanarArrayGeometry, Basis) {
        let c = CarrierConfig::new(30e9).unwrap();
        let g = PlanarArrayGeometry::with_spacing_wavelengths(n, n, 0.25, &c).unwrap();
        let l = build_lattice(&g, &c, 0).unwrap();
        let b = build_fh_basis(&l, &g, &c).unwrap();
        (g, b)
    }

    #[test]
    fn unit_modulus_pilots() {
        let (g, b) = fh(8);
        let model = build_measurement(&g, &b, 0.3, 10.0, 1).unwrap();
        assert_eq!(model.measurements(), 20);
        let s = 1.0 / 8.0;
        assert!(model.sensing().iter().all(|z| (z.norm() - s).abs() < 1e-12));
        assert!((model.noise_variance() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_phase_override() {
        let (g, b) = fh(4);
        let n = g.element_count();
        let model = MeasurementModel::from_phases(&DMatrix::zeros(n, n), &b, 0.0).unwrap();
        let a = model.sensing();
        let s = 1.0 / (n as f64).sqrt();
        assert!(a.iter().all(|z| (z - Complex64::new(s, 0.0)).norm() < 1e-15));
        assert!((a.norm_squared() - n as f64).abs() < 1e-12);
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let (g, b) = fh(4);
        let model = build_measurement(&g, &b, 1.0, f64::INFINITY, 2).unwrap();
        assert_eq!(model.noise_variance(), 0.0);
        let h: Vec<Complex64> = b.column(0);
        let y = model.observe(&h, 9).unwrap();
        let clean = model.sensing() * to_vector(&h);
        assert!(y.iter().zip(clean.iter()).all(|(a, b)| a == b));
    }

    #[test]
    fn invalid_ratio() {
        let (g, b) = fh(4);
        assert!(build_measurement(&g, &b, 0.0, 10.0, 0).is_err());
        assert!(build_measurement(&g, &b, 1.5, 10.0, 0).is_err());
        assert!(build_measurement(&g, &b, 0.01, 10.0, 0).is_err());
        assert!(build_measurement(&g, &b, 0.5, f64::NAN, 0).is_err());
    }

    #[test]
    fn compressive_energy() {
        let c = CarrierConfig::new(30e9).unwrap();
        let g = PlanarArrayGeometry::with_spacing_wavelengths(32, 32, 0.25, &c).unwrap();
        let b = build_dft_basis(&g, &c);
        let mut ratio = 0.0;
        let trials = 100;
        for t in 0..trials {
            let model = build_measurement(&g, &b, 0.25, f64::INFINITY, derive_seed(5, "pilot", t)).unwrap();
            assert_eq!(model.measurements(), 256);
            let mut rng = rng_from_seed(derive_seed(5, "h", t));
            let h: Vec<Complex64> = (0..1024).map(|_| complex_normal(&mut rng, 1.0)).collect();
            let y = model.observe(&h, 0).unwrap();
            ratio += energy(&y) / energy(&h);
        }
        ratio /= trials as f64;
        assert!((ratio / 0.25 - 1.0).abs() < 0.1, "{ratio}");
    }

    #[test]
    fn nmse_identities() {
        let h = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)];
        assert_eq!(nmse(&h, &h).unwrap(), 0.0);
        assert!((nmse(&[Complex64::default(); 2], &h).unwrap() - 1.0).abs() < 1e-15);
        let scaled: Vec<Complex64> = h.iter().map(|z| z * 1.1).collect();
        let v = nmse(&scaled, &h).unwrap();
        assert!((v - 0.01).abs() < 1e-12);
        assert!((to_db(v) + 20.0).abs() < 1e-9);
        assert!(nmse(&h, &[Complex64::default(); 2]).is_err());
        assert!(nmse(&h[..1], &h).is_err());
    }
}
