//! Bases as beamforming codebooks: beam selection under imperfect CSI and
//! achievable rate over a distance sweep.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bases::{Basis, BasisKind};
use crate::channel::{synthesize_nearfield_greens, ClusterLayout, ClusterScattererSet};
use crate::em::{CarrierConfig, PlanarArrayGeometry};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{energy, CMatrix};
use crate::rng::{complex_normal, derive_seed, rng_from_seed};

#[derive(Debug, Clone)]
pub struct Codebook {
    kind: BasisKind,
    codewords: CMatrix,
    propagating: Vec<bool>,
    /// Evanescent decay rate `√(κ² − k²)` of each codeword's beam (0 when
    /// propagating).
    decay: Vec<f64>,
}

impl Codebook {
    /// Use the columns of `basis` as codewords. Fails unless every column
    /// has unit norm to 1e-12.
    pub fn from_basis(basis: &Basis, carrier: &CarrierConfig) -> Result<Self> {
        if basis.atom_count() == 0 {
            return Err(Error::Empty("codebook"));
        }
        let codewords = basis.atoms().clone();
        for (j, col) in codewords.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("codeword {j} has norm {norm}")));
            }
        }
        Ok(Self {
            kind: basis.kind(),
            codewords,
            propagating: basis.meta().iter().map(|m| m.is_propagating).collect(),
            decay: basis
                .meta()
                .iter()
                .map(|m| {
                    let excess = m.kappa_x * m.kappa_x + m.kappa_y * m.kappa_y - carrier.k() * carrier.k();
                    if m.is_propagating {
                        0.0
                    } else {
                        excess.max(0.0).sqrt()
                    }
                })
                .collect(),
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.codewords.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.ncols() == 0
    }

    pub fn element_count(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn codeword(&self, index: usize) -> Vec<Complex64> {
        self.codewords.column(index).iter().copied().collect()
    }

    /// Whether the codeword's spatial frequency lies inside the visible disk.
    pub fn is_propagating(&self, index: usize) -> bool {
        self.propagating[index]
    }

    /// Amplitude factor `e^{−√(κ²−k²)·d}` of the codeword's beam after
    /// `distance_m`: 1 for propagating codewords.
    pub fn attenuation(&self, index: usize, distance_m: f64) -> f64 {
        (-self.decay[index] * distance_m).exp()
    }

    /// `|wᴴ h|` for every codeword.
    pub fn gains(&self, h: &[Complex64]) -> Result<Vec<f64>> {
        check_dim(self.element_count(), h.len(), "channel vs codeword length")?;
        Ok(self
            .codewords
            .column_iter()
            .map(|w| w.iter().zip(h).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm())
            .collect())
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Matched-filter selection on a noisy channel estimate
/// `ĥ = h + e`, `e ~ CN(0, (csi_error_std·‖h‖)²/N · I)`. Ties go to the
/// lowest index.
pub fn select_beam(h: &[Complex64], codebook: &Codebook, csi_error_std: f64, rng_seed: u64) -> Result<usize> {
    if codebook.is_empty() {
        return Err(Error::Empty("codebook"));
    }
    if !(csi_error_std >= 0.0) {
        return Err(Error::InvalidArgument("CSI error std must be non-negative".into()));
    }
    check_dim(codebook.element_count(), h.len(), "channel vs codeword length")?;
    let gains = if csi_error_std > 0.0 {
        let var = csi_error_std * csi_error_std * energy(h) / h.len() as f64;
        let mut rng = rng_from_seed(rng_seed);
        let noisy: Vec<Complex64> = h.iter().map(|z| z + complex_normal(&mut rng, var)).collect();
        codebook.gains(&noisy)?
    } else {
        codebook.gains(h)?
    };
    Ok(argmax(&gains))
}

/// `log₂(1 + snr·|hᴴw|²)`.
pub fn achievable_rate(h: &[Complex64], codeword: &[Complex64], snr_linear: f64) -> f64 {
    let g: Complex64 = h.iter().zip(codeword).map(|(a, b)| a.conj() * b).sum();
    (snr_linear * g.norm_sqr()).ln_1p() / std::f64::consts::LN_2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    pub distance_m: f64,
    pub trial: usize,
    pub rate_bps_hz: f64,
    pub selected_codeword_index: usize,
    pub codebook_kind: BasisKind,
    pub invalid_beam: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Cluster placements; `distance_m` is overridden by each grid point.
    pub clusters: Vec<ClusterLayout>,
    pub distances_m: Vec<f64>,
    pub snr_db: f64,
    pub csi_error_std: f64,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters.is_empty() {
            return Err(Error::Empty("cluster layout"));
        }
        if self.distances_m.is_empty() || self.distances_m.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::InvalidArgument("distance grid must be non-empty and positive".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidArgument("codebook SNR must be finite".into()));
        }
        if !(self.csi_error_std >= 0.0) {
            return Err(Error::InvalidArgument("CSI error std must be non-negative".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidArgument("need at least one trial".into()));
        }
        Ok(())
    }
}

/// Evaluate one `(distance, trial)` cell for every codebook. All codebooks
/// see the same channel and the same CSI error draw.
///
/// A non-propagating codeword launches an evanescent beam, so its gain is
/// scaled by the beam's decay over the link distance before the rate is
/// computed.
pub fn sweep_cell(
    config: &SweepConfig,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
    codebooks: &[Codebook],
    distance_index: usize,
    trial: usize,
) -> Result<Vec<RatePoint>> {
    let distance_m = config.distances_m[distance_index];
    let cell = (distance_index * config.trials + trial) as u64;
    let layouts: Vec<ClusterLayout> = config
        .clusters
        .iter()
        .map(|c| ClusterLayout { distance_m, ..*c })
        .collect();
    let set = ClusterScattererSet::draw(&layouts, derive_seed(config.seed, "codebook-channel", cell))?;
    let h = synthesize_nearfield_greens(&set, geometry, carrier)?;
    let csi_seed = derive_seed(config.seed, "codebook-csi", cell);
    let snr = 10f64.powf(config.snr_db / 10.0);
    codebooks
        .iter()
        .map(|cb| {
            let idx = select_beam(&h.samples, cb, config.csi_error_std, csi_seed)?;
            Ok(RatePoint {
                distance_m,
                trial,
                rate_bps_hz: achievable_rate(&h.samples, &cb.codeword(idx), snr * cb.attenuation(idx, distance_m).powi(2)),
                selected_codeword_index: idx,
                codebook_kind: cb.kind(),
                invalid_beam: !cb.is_propagating(idx),
            })
        })
        .collect()
}

/// Full sweep, ordered by (distance index, trial, codebook).
pub fn distance_sweep(
    config: &SweepConfig,
    geometry: &PlanarArrayGeometry,
    carrier: &CarrierConfig,
    codebooks: &[Codebook],
) -> Result<Vec<RatePoint>> {
    config.validate()?;
    let mut out = Vec::with_capacity(config.distances_m.len() * config.trials * codebooks.len());
    for d in 0..config.distances_m.len() {
        for t in 0..config.trials {
            out.extend(sweep_cell(config, geometry, carrier, codebooks, d, t)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSummary {
    pub distance_m: f64,
    pub codebook_kind: BasisKind,
    pub mean_rate: f64,
    pub median_rate: f64,
    pub std_rate: f64,
    pub invalid_beam_fraction: f64,
}

/// Per-(distance, codebook) statistics in first-appearance order.
pub fn summarize(points: &[RatePoint]) -> Vec<SweepSummary> {
    let mut keys: Vec<(f64, BasisKind)> = Vec::new();
    for p in points {
        if !keys.iter().any(|k| k.0 == p.distance_m && k.1 == p.codebook_kind) {
            keys.push((p.distance_m, p.codebook_kind));
        }
    }
    keys.into_iter()
        .map(|(d, kind)| {
            let sel: Vec<&RatePoint> = points.iter().filter(|p| p.distance_m == d && p.codebook_kind == kind).collect();
            let n = sel.len() as f64;
            let mut rates: Vec<f64> = sel.iter().map(|p| p.rate_bps_hz).collect();
            let mean = rates.iter().sum::<f64>() / n;
            let var = if sel.len() > 1 {
                rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            rates.sort_by(f64::total_cmp);
            SweepSummary {
                distance_m: d,
                codebook_kind: kind,
                mean_rate: mean,
                median_rate: median_sorted(&rates),
                std_rate: var.sqrt(),
                invalid_beam_fraction: sel.iter().filter(|p| p.invalid_beam).count() as f64 / n,
            }
        })
        .collect()
}

pub(crate) fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Coefficient of variation (population std / mean) of the per-distance
/// mean rates of one codebook.
pub fn rate_variation(summaries: &[SweepSummary], kind: BasisKind) -> f64 {
    let rates: Vec<f64> = summaries.iter().filter(|s| s.codebook_kind == kind).map(|s| s.mean_rate).collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub fn write_sweep_csv<W: Write>(mut out: W, summaries: &[SweepSummary]) -> std::io::Result<()> {
    writeln!(out, "distance_m,codebook_kind,mean_rate,std_rate,invalid_beam_fraction")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.distance_m, s.codebook_kind, s.mean_rate, s.std_rate, s.invalid_beam_fraction
        )?;
    }
    Ok(())
}
