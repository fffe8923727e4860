//! Experiment configuration: a TOML tree with dotted-path overrides.
//!
//! Every section has defaults, so an empty file (or no file) is a valid
//! configuration for the desk-scale scenarios. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use hmimo_core::bases::BasisKind;
use hmimo_core::em::unit_vector;
use hmimo_core::estimation::MrfPrior;
use hmimo_core::scenario;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    /// Monte-Carlo trials for `spectrum` and `estimate`.
    pub trials: usize,
    pub output_dir: PathBuf,
    pub carrier: CarrierSection,
    pub geometry: GeometrySection,
    pub lattice: LatticeSection,
    pub spectrum: SpectrumSection,
    pub estimation: EstimationSection,
    pub codebook: CodebookSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base_seed: 1,
            trials: 200,
            output_dir: PathBuf::from("out"),
            carrier: CarrierSection::default(),
            geometry: GeometrySection::default(),
            lattice: LatticeSection::default(),
            spectrum: SpectrumSection::default(),
            estimation: EstimationSection::default(),
            codebook: CodebookSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarrierSection {
    pub frequency_hz: f64,
}

impl Default for CarrierSection {
    fn default() -> Self {
        Self { frequency_hz: 30e9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub n_x: usize,
    pub n_y: usize,
    /// Element spacing as a fraction of the wavelength.
    pub spacing_wavelengths: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            n_x: 32,
            n_y: 32,
            spacing_wavelengths: 0.25,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSection {
    pub evanescent_margin: u32,
}

/// A cluster given by its direction in degrees off broadside (`theta_deg`)
/// and azimuth (`phi_deg`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub alpha_vmf: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

impl ClusterSpec {
    pub fn direction(&self) -> [f64; 3] {
        unit_vector(self.theta_deg.to_radians(), self.phi_deg.to_radians())
    }
}

fn four_cluster_specs() -> Vec<ClusterSpec> {
    scenario::FOUR_CLUSTER_DIRECTIONS_DEG
        .iter()
        .map(|&(theta_deg, phi_deg)| ClusterSpec {
            theta_deg,
            phi_deg,
            alpha_vmf: scenario::FOUR_CLUSTER_ALPHA,
            weight: 1.0,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumChannel {
    /// Scatterer clusters through the exact Green's function, at a far and
    /// a near distance.
    Greens,
    /// Fourier plane-wave series drawn from the VMF lattice variances.
    FourierSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub channel: SpectrumChannel,
    pub clusters: Vec<ClusterSpec>,
    /// Put all variance on one lattice point `(l, m)` instead of the VMF
    /// map (Fourier-series channel only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_atom: Option<[i32; 2]>,
    /// Cluster distances as multiples of the Rayleigh distance.
    pub far_distance_rayleigh: f64,
    pub near_distance_rayleigh: f64,
    pub scatterers_per_cluster: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        Self {
            channel: SpectrumChannel::Greens,
            clusters: four_cluster_specs(),
            single_atom: None,
            far_distance_rayleigh: 10.0,
            near_distance_rayleigh: 0.3,
            scatterers_per_cluster: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Omp,
    Mrf,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Omp => "omp",
            Algorithm::Mrf => "mrf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmpSection {
    /// Stop once the residual power falls below `noise_factor · M σ²`.
    pub noise_factor: f64,
    /// Defaults to `M / 4`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_atoms: Option<usize>,
}

impl Default for OmpSection {
    fn default() -> Self {
        Self {
            noise_factor: 1.1,
            max_atoms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationSection {
    pub compression_ratio: f64,
    pub snr_db: Vec<f64>,
    pub bases: Vec<BasisKind>,
    pub algorithms: Vec<Algorithm>,
    pub clusters: Vec<ClusterSpec>,
    pub omp: OmpSection,
    pub mrf: MrfPrior,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            compression_ratio: 0.25,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 40.0, 60.0],
            bases: vec![BasisKind::Fh],
            algorithms: vec![Algorithm::Omp, Algorithm::Mrf],
            clusters: four_cluster_specs(),
            omp: OmpSection::default(),
            mrf: MrfPrior::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodebookCluster {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub alpha_vmf: f64,
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default = "twenty")]
    pub scatterers: usize,
    #[serde(default = "tenth")]
    pub shell_half_width: f64,
}

fn twenty() -> usize {
    20
}

fn tenth() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub clusters: Vec<CodebookCluster>,
    /// Explicit grid; when empty, a log grid from the three fields below.
    pub distances_m: Vec<f64>,
    pub distance_min_m: f64,
    pub distance_max_m: f64,
    pub distance_points: usize,
    pub snr_db: f64,
    pub csi_error_std: f64,
    pub trials: usize,
    pub codebooks: Vec<BasisKind>,
}

impl Default for CodebookSection {
    fn default() -> Self {
        let (theta_deg, phi_deg) = scenario::DESK_CLUSTER_DIRECTION_DEG;
        Self {
            clusters: vec![CodebookCluster {
                theta_deg,
                phi_deg,
                alpha_vmf: scenario::DESK_CLUSTER_ALPHA,
                weight: 1.0,
                scatterers: 20,
                shell_half_width: 0.1,
            }],
            distances_m: Vec::new(),
            distance_min_m: 0.5,
            distance_max_m: 30.0,
            distance_points: 12,
            snr_db: 10.0,
            csi_error_std: 0.3,
            trials: 100,
            codebooks: vec![BasisKind::Fh, BasisKind::Dft],
        }
    }
}

impl CodebookSection {
    pub fn distance_grid(&self) -> Vec<f64> {
        if self.distances_m.is_empty() {
            scenario::log_grid(self.distance_min_m, self.distance_max_m, self.distance_points)
        } else {
            self.distances_m.clone()
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Reject values the experiments cannot run with. Finer checks happen
    /// in the library constructors and surface as runtime errors.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trials == 0 || self.codebook.trials == 0 {
            return Err(config_error("trials must be positive"));
        }
        if !(self.carrier.frequency_hz > 0.0 && self.carrier.frequency_hz.is_finite()) {
            return Err(config_error("carrier.frequency_hz must be positive"));
        }
        let g = &self.geometry;
        if g.n_x == 0 || g.n_y == 0 || !(g.spacing_wavelengths > 0.0 && g.spacing_wavelengths.is_finite()) {
            return Err(config_error("geometry needs positive n_x, n_y and spacing_wavelengths"));
        }
        let s = &self.spectrum;
        if s.clusters.is_empty() && s.single_atom.is_none() {
            return Err(config_error("spectrum needs clusters or single_atom"));
        }
        if s.single_atom.is_some() && s.channel != SpectrumChannel::FourierSeries {
            return Err(config_error("spectrum.single_atom needs channel = \"fourier_series\""));
        }
        if !(s.far_distance_rayleigh > 0.0 && s.near_distance_rayleigh > 0.0) || s.scatterers_per_cluster == 0 {
            return Err(config_error("spectrum distances and scatterer count must be positive"));
        }
        let e = &self.estimation;
        if !(e.compression_ratio > 0.0 && e.compression_ratio <= 1.0) {
            return Err(config_error("estimation.compression_ratio must lie in (0, 1]"));
        }
        if e.snr_db.is_empty() || e.snr_db.iter().any(|v| !v.is_finite()) {
            return Err(config_error("estimation.snr_db must be a non-empty list of finite SNRs"));
        }
        if e.bases.is_empty() || e.algorithms.is_empty() || e.clusters.is_empty() {
            return Err(config_error("estimation needs bases, algorithms and clusters"));
        }
        if !(e.omp.noise_factor >= 0.0) || e.omp.max_atoms == Some(0) {
            return Err(config_error("invalid estimation.omp settings"));
        }
        e.mrf.validate().map_err(|err| config_error(err.to_string()))?;
        let c = &self.codebook;
        if c.clusters.is_empty() || c.codebooks.is_empty() {
            return Err(config_error("codebook needs clusters and codebooks"));
        }
        let grid = c.distance_grid();
        if grid.is_empty() || grid.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(config_error("codebook distance grid must be non-empty and positive"));
        }
        if !c.snr_db.is_finite() || !(c.csi_error_std >= 0.0) {
            return Err(config_error("invalid codebook snr_db or csi_error_std"));
        }
        Ok(())
    }
}

/// Parse the right-hand side of `--set key=value`: any TOML value, or a
/// bare string when it does not parse as one.
fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Apply one `dotted.path=value` override to `table`, creating
/// intermediate tables as needed.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{assignment}` is not of the form key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_error(format!("bad override path `{path}`")));
    }
    let (last, parents) = keys.split_last().expect("non-empty split");
    let mut cursor = table;
    for key in parents {
        let entry = cursor
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override path `{path}`: `{key}` is not a table")))?;
    }
    cursor.insert(last.to_string(), parse_override_value(raw.trim()));
    Ok(())
}

/// Read a config tree. TOML files are taken as-is; a JSON file is accepted
/// too, either a bare config or a sidecar whose `config` field holds one.
pub fn read_tree(path: &Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))
    } else {
        text.parse::<toml::Table>()
            .map_err(|e| config_error(format!("{}: {e}", path.display())))
    }
}

/// Load, override and validate a configuration.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let mut tree = match path {
        Some(p) => read_tree(p)?,
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut tree, o)?;
    }
    let config: ExperimentConfig = toml::Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| config_error(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn overrides_typed_and_nested() {
        let mut t = toml::Table::new();
        apply_override(&mut t, "geometry.n_x=64").unwrap();
        apply_override(&mut t, "estimation.bases=[\"fh\", \"dft\"]").unwrap();
        apply_override(&mut t, "output_dir=results/run1").unwrap();
        let c: ExperimentConfig = toml::Value::Table(t).try_into().unwrap();
        assert_eq!(c.geometry.n_x, 64);
        assert_eq!(c.geometry.n_y, 32);
        assert_eq!(c.estimation.bases, vec![BasisKind::Fh, BasisKind::Dft]);
        assert_eq!(c.output_dir, PathBuf::from("results/run1"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(load(None, &["geometry.nx=4".into()]).is_err());
        assert!(load(None, &["typo=1".into()]).is_err());
        assert!(load(None, &["geometry".into()]).is_err());
        assert!(load(None, &["geometry.n_x=3".into(), "geometry.n_x.deep=1".into()]).is_err());
    }

    #[test]
    fn validation_errors_are_config_errors() {
        let err = load(None, &["estimation.compression_ratio=1.5".into()]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
        assert!(load(None, &["estimation.mrf.damping=1.0".into()]).is_err());
        assert!(load(None, &["spectrum.single_atom=[0, 0]".into()]).is_err());
    }

    #[test]
    fn explicit_distance_grid_wins() {
        let c = load(None, &["codebook.distances_m=[1.0, 2.0]".into()]).unwrap();
        assert_eq!(c.codebook.distance_grid(), vec![1.0, 2.0]);
        assert_eq!(ExperimentConfig::default().codebook.distance_grid().len(), 12);
    }
}
