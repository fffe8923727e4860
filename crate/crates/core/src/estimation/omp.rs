use num_complex::Complex64;

use super::{EstimationResult, MeasurementModel};
use crate::error::Result;
use crate::linalg::{energy, CMatrix, CVector};

/// OMP stopping rule: stop once the residual power drops below
/// `power_threshold · ‖y‖²`, or after `max_atoms` selections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpStop {
    pub power_threshold: f64,
    pub max_atoms: usize,
}

impl OmpStop {
    /// Noise-matched rule: residual below `factor · M σ²`, at most `M/4` atoms.
    pub fn noise_matched(model: &MeasurementModel, y: &[Complex64], factor: f64) -> Self {
        let m = model.measurements();
        let y_energy = energy(y);
        let power_threshold = if y_energy > 0.0 {
            factor * m as f64 * model.noise_variance() / y_energy
        } else {
            0.0
        };
        Self {
            power_threshold,
            max_atoms: (m / 4).max(1),
        }
    }
}

/// Orthogonal matching pursuit over the combined dictionary.
///
/// Columns are ranked by normalised correlation `|φᴴ r| / ‖φ‖`. The selected
/// set is kept as an incrementally orthonormalised basis, so the residual is
/// always the least-squares residual on the current support.
pub fn omp_estimate(y: &[Complex64], model: &MeasurementModel, stop: OmpStop) -> Result<EstimationResult> {
    let yv = model.check_observation(y)?;
    let phi = model.dictionary();
    let (m, a) = phi.shape();
    let y_energy = energy(y);
    let col_norms: Vec<f64> = (0..a).map(|j| phi.column(j).norm()).collect();

    let mut selected: Vec<usize> = Vec::new();
    let mut chosen = vec![false; a];
    let mut q = CMatrix::zeros(m, 0);
    let mut r_factor: Vec<Vec<Complex64>> = Vec::new();
    let mut residual = yv.clone();
    let mut trace = Vec::new();
    let limit = stop.max_atoms.min(a).min(m);
    let target = stop.power_threshold * y_energy;

    if y_energy > 0.0 {
        while selected.len() < limit && residual.norm_squared() >= target {
            let corr = phi.ad_mul(&residual);
            let best = (0..a)
                .filter(|&j| !chosen[j] && col_norms[j] > 0.0)
                .map(|j| (j, corr[j].norm() / col_norms[j]))
                .fold(None, |acc: Option<(usize, f64)>, (j, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((j, v)),
                });
            let Some((j, _)) = best else { break };

            // Gram–Schmidt with one re-orthogonalisation pass.
            let col: CVector = phi.column(j).into_owned();
            let mut w = col.clone();
            let mut coeffs = vec![Complex64::default(); selected.len()];
            for _ in 0..2 {
                let proj = q.ad_mul(&w);
                w -= &q * &proj;
                for (c, p) in coeffs.iter_mut().zip(proj.iter()) {
                    *c += p;
                }
            }
            let wn = w.norm();
            if wn <= 1e-12 * col_norms[j] {
                chosen[j] = true;
                continue;
            }
            w /= Complex64::new(wn, 0.0);
            coeffs.push(Complex64::new(wn, 0.0));
            let k = q.ncols();
            q = q.insert_column(k, Complex64::default());
            q.set_column(k, &w);
            r_factor.push(coeffs);
            residual -= &w * w.dotc(&residual);
            selected.push(j);
            chosen[j] = true;
            trace.push(residual.norm_squared());
        }
    }

    // Back-substitution R c = Qᴴ y on the selected set.
    let k = selected.len();
    let qy = q.ad_mul(&yv);
    let mut c = vec![Complex64::default(); k];
    for i in (0..k).rev() {
        let mut acc = qy[i];
        for (jj, cj) in c.iter().enumerate().skip(i + 1) {
            acc -= r_factor[jj][i] * cj;
        }
        c[i] = acc / r_factor[i][i];
    }
    let mut coefficients = vec![Complex64::default(); a];
    let mut support = vec![false; a];
    for (&j, v) in selected.iter().zip(&c) {
        coefficients[j] = *v;
        support[j] = true;
    }
    let converged = residual.norm_squared() < target || y_energy == 0.0;
    Ok(EstimationResult {
        coefficients,
        support,
        nmse: None,
        iterations: k,
        converged,
        trace,
        support_probability: Vec::new(),
    })
}
