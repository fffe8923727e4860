//! Reference scenarios shared by the CLI defaults and the test suites.

use crate::channel::{AngularPowerSpectrum, ClusterLayout, VmfCluster};
use crate::em::unit_vector;
use crate::error::Result;

/// Four cluster directions `(θ, φ)` in degrees, spread over the four
/// azimuth quadrants at moderate elevation off broadside.
pub const FOUR_CLUSTER_DIRECTIONS_DEG: [(f64, f64); 4] = [(20.0, 30.0), (35.0, 140.0), (25.0, 230.0), (45.0, 320.0)];

pub const FOUR_CLUSTER_ALPHA: f64 = 35.0;

pub fn four_clusters() -> Vec<VmfCluster> {
    FOUR_CLUSTER_DIRECTIONS_DEG
        .iter()
        .map(|&(t, p)| VmfCluster {
            mean_direction: unit_vector(t.to_radians(), p.to_radians()),
            alpha_vmf: FOUR_CLUSTER_ALPHA,
            weight: 1.0,
        })
        .collect()
}

/// Four-cluster VMF spectrum normalised to `E‖h‖² = elements`.
pub fn four_cluster_spectrum(elements: usize) -> Result<AngularPowerSpectrum> {
    AngularPowerSpectrum::new(four_clusters(), elements as f64)
}

/// Scatterer layouts for the four clusters, all at `distance_m`.
pub fn four_cluster_layouts(distance_m: f64, scatterers: usize) -> Vec<ClusterLayout> {
    four_clusters()
        .into_iter()
        .map(|c| ClusterLayout {
            direction: c.mean_direction,
            distance_m,
            alpha_vmf: c.alpha_vmf,
            weight: c.weight,
            scatterers,
            shell_half_width: 0.1,
        })
        .collect()
}

/// Direction `(θ, φ)` in degrees of the desk-scale codebook cluster. Its
/// angular tail occasionally reaches the edge of the visible region, which
/// is where the DFT and FH codebooks differ at quarter-wavelength spacing.
pub const DESK_CLUSTER_DIRECTION_DEG: (f64, f64) = (45.0, 0.0);

pub const DESK_CLUSTER_ALPHA: f64 = 25.0;

/// Single-cluster layout used by the desk-scale codebook sweep.
pub fn desk_cluster(distance_m: f64) -> ClusterLayout {
    let (t, p) = DESK_CLUSTER_DIRECTION_DEG;
    ClusterLayout {
        direction: unit_vector(t.to_radians(), p.to_radians()),
        distance_m,
        alpha_vmf: DESK_CLUSTER_ALPHA,
        weight: 1.0,
        scatterers: 20,
        shell_half_width: 0.1,
    }
}

/// `count` log-spaced points from `start` to `stop` inclusive.
pub fn log_grid(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let (a, b) = (start.ln(), stop.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}
