use hmimo_core::bases::{
    build_dft_basis, build_fh_basis, default_mode, energy_support_size, leakage_n95, project, write_spectrum_csv,
    Basis, BasisKind, SpectrumResult, N95_FRACTION,
};
use hmimo_core::channel::{
    build_vmf_spectrum, synthesize_farfield, synthesize_nearfield_greens, AngularPowerSpectrum, ChannelVector,
    ClusterLayout, ClusterScattererSet, LatticeVariances, VmfCluster,
};
use hmimo_core::codebook::{summarize, sweep_cell, write_sweep_csv, Codebook, SweepConfig};
use hmimo_core::em::{build_lattice, rayleigh_distance, CarrierConfig, PlanarArrayGeometry, WavenumberLattice};
use hmimo_core::estimation::{
    build_measurement, mrf_estimate, noise_variance_for, omp_estimate, to_db, MeasurementModel, OmpStop,
};
use hmimo_core::linalg::{energy, matmul, max_identity_deviation};
use hmimo_core::rng::{complex_normal, derive_seed, stream};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::{Algorithm, ClusterSpec, ExperimentConfig, SpectrumChannel};
use crate::output::Artifacts;
use crate::CliError;

struct Setup {
    carrier: CarrierConfig,
    geometry: PlanarArrayGeometry,
    lattice: WavenumberLattice,
}

impl Setup {
    fn new(config: &ExperimentConfig) -> Result<Self, CliError> {
        let carrier = CarrierConfig::new(config.carrier.frequency_hz)?;
        let g = &config.geometry;
        let geometry = PlanarArrayGeometry::with_spacing_wavelengths(g.n_x, g.n_y, g.spacing_wavelengths, &carrier)?;
        let lattice = build_lattice(&geometry, &carrier, config.lattice.evanescent_margin)?;
        Ok(Self {
            carrier,
            geometry,
            lattice,
        })
    }

    fn fh(&self) -> Result<Basis, CliError> {
        Ok(build_fh_basis(&self.lattice, &self.geometry, &self.carrier)?)
    }

    fn basis(&self, kind: BasisKind) -> Result<Basis, CliError> {
        match kind {
            BasisKind::Fh => self.fh(),
            BasisKind::Dft => Ok(build_dft_basis(&self.geometry, &self.carrier)),
        }
    }

    fn vmf_variances(&self, clusters: &[ClusterSpec]) -> Result<LatticeVariances, CliError> {
        let clusters = clusters
            .iter()
            .map(|c| VmfCluster {
                mean_direction: c.direction(),
                alpha_vmf: c.alpha_vmf,
                weight: c.weight,
            })
            .collect();
        let spectrum = AngularPowerSpectrum::new(clusters, self.geometry.element_count() as f64)?;
        Ok(build_vmf_spectrum(&spectrum, &self.lattice, &self.carrier)?)
    }
}

pub fn lattice(config: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let setup = Setup::new(config)?;
    out.write("lattice.csv", |w| {
        writeln!(w, "l,m,kappa_x,kappa_y,gamma_re,gamma_im,is_propagating")?;
        for p in &setup.lattice.points {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                p.l, p.m, p.kappa_x, p.kappa_y, p.gamma.re, p.gamma.im, p.is_propagating
            )?;
        }
        Ok(())
    })
}

struct SpectrumTrial {
    /// Indexed `[field][basis]`.
    power: Vec<Vec<Vec<f64>>>,
    n95: Vec<Vec<(usize, f64, f64)>>,
}

pub fn spectrum(config: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let setup = Setup::new(config)?;
    let fh = setup.fh()?;
    let bases = [fh.clone(), setup.basis(BasisKind::Dft)?];
    let s = &config.spectrum;
    let seed = config.base_seed;

    let fields: Vec<(&str, f64)> = match s.channel {
        SpectrumChannel::Greens => {
            let rd = rayleigh_distance(&setup.geometry, &setup.carrier);
            vec![("far", s.far_distance_rayleigh * rd), ("near", s.near_distance_rayleigh * rd)]
        }
        SpectrumChannel::FourierSeries => vec![("fourier", f64::NAN)],
    };
    let variances = match (s.channel, s.single_atom) {
        (SpectrumChannel::Greens, _) => None,
        (_, Some([l, m])) => {
            let idx = setup
                .lattice
                .index_of(l, m)
                .filter(|&i| setup.lattice.points[i].is_propagating)
                .ok_or_else(|| CliError::Config(format!("spectrum.single_atom ({l}, {m}) is not a propagating lattice point")))?;
            let mut v = vec![0.0; setup.lattice.len()];
            v[idx] = setup.geometry.element_count() as f64;
            Some(LatticeVariances { variances: v })
        }
        (_, None) => Some(setup.vmf_variances(&s.clusters)?),
    };

    let channel = |field: usize, distance_m: f64, trial: u64| -> Result<ChannelVector, CliError> {
        match &variances {
            Some(v) => Ok(synthesize_farfield(v, &fh, derive_seed(seed, "spectrum-fourier", trial))?),
            None => {
                let layouts: Vec<ClusterLayout> = s
                    .clusters
                    .iter()
                    .map(|c| ClusterLayout {
                        direction: c.direction(),
                        distance_m,
                        alpha_vmf: c.alpha_vmf,
                        weight: c.weight,
                        scatterers: s.scatterers_per_cluster,
                        shell_half_width: 0.1,
                    })
                    .collect();
                let purpose = if field == 0 { "spectrum-far" } else { "spectrum-near" };
                let set = ClusterScattererSet::draw(&layouts, derive_seed(seed, purpose, trial))?;
                Ok(synthesize_nearfield_greens(&set, &setup.geometry, &setup.carrier)?)
            }
        }
    };

    let trials: Vec<SpectrumTrial> = (0..config.trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut power = Vec::new();
            let mut n95 = Vec::new();
            for (f, &(_, d)) in fields.iter().enumerate() {
                let h = channel(f, d, t)?;
                let mut pf = Vec::new();
                let mut nf = Vec::new();
                for b in &bases {
                    let sp = project(b, &h, default_mode(b.kind()))?;
                    let leak = leakage_n95(&sp)?;
                    nf.push((leak.n95, leak.normalized, sp.residual_energy_fraction));
                    pf.push(sp.power);
                }
                power.push(pf);
                n95.push(nf);
            }
            Ok(SpectrumTrial { power, n95 })
        })
        .collect::<Result<_, CliError>>()?;

    for (f, &(field, _)) in fields.iter().enumerate() {
        for (b, basis) in bases.iter().enumerate() {
            let mut mean = vec![0.0; basis.atom_count()];
            for t in &trials {
                for (m, p) in mean.iter_mut().zip(&t.power[f][b]) {
                    *m += p;
                }
            }
            mean.iter_mut().for_each(|m| *m /= trials.len() as f64);
            let avg = SpectrumResult {
                coefficients: Vec::new(),
                n95: energy_support_size(&mean, N95_FRACTION),
                power: mean,
                residual_energy_fraction: 0.0,
            };
            out.write(&format!("spectrum_{}_{field}.csv", basis.kind()), |w| {
                write_spectrum_csv(w, basis, &avg)
            })?;
        }
    }
    out.write("spectrum_summary.csv", |w| {
        writeln!(w, "field,trial,basis_kind,n95,normalized_n95,residual_energy_fraction")?;
        for (f, &(field, _)) in fields.iter().enumerate() {
            for (t, trial) in trials.iter().enumerate() {
                for (b, basis) in bases.iter().enumerate() {
                    let (n, norm, res) = trial.n95[f][b];
                    writeln!(w, "{field},{t},{},{n},{norm},{res}", basis.kind())?;
                }
            }
        }
        Ok(())
    })
}

struct NmseRecord {
    snr_db: f64,
    algorithm: Algorithm,
    basis: BasisKind,
    trial: usize,
    nmse_db: f64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn estimate(config: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let setup = Setup::new(config)?;
    let e = &config.estimation;
    let fh = setup.fh()?;
    let variances = setup.vmf_variances(&e.clusters)?;
    let n = setup.geometry.element_count();
    let seed = config.base_seed;
    let trials = config.trials;

    let mut models: Vec<(Basis, MeasurementModel)> = Vec::new();
    for &kind in &e.bases {
        let basis = setup.basis(kind)?;
        // One pilot matrix per run, shared by every basis and trial.
        let model = build_measurement(
            &setup.geometry,
            &basis,
            e.compression_ratio,
            f64::INFINITY,
            derive_seed(seed, "estimate-pilots", 0),
        )?;
        model.prepare();
        models.push((basis, model));
    }

    let cells = models.len() * e.snr_db.len() * trials;
    let records: Vec<Vec<NmseRecord>> = (0..cells)
        .into_par_iter()
        .map(|cell| {
            let (b, rest) = (cell / (e.snr_db.len() * trials), cell % (e.snr_db.len() * trials));
            let (s, t) = (rest / trials, rest % trials);
            let (basis, base) = &models[b];
            let snr_db = e.snr_db[s];
            let h = synthesize_farfield(&variances, &fh, derive_seed(seed, "estimate-channel", t as u64))?;
            let model = base.with_noise_variance(noise_variance_for(snr_db, n as f64, n));
            let y = model.observe(&h.samples, derive_seed(seed, "estimate-noise", t as u64))?;
            e.algorithms
                .iter()
                .map(|&algorithm| {
                    let mut r = match algorithm {
                        Algorithm::Omp => {
                            let mut stop = OmpStop::noise_matched(&model, &y, e.omp.noise_factor);
                            if let Some(k) = e.omp.max_atoms {
                                stop.max_atoms = k;
                            }
                            omp_estimate(&y, &model, stop)?
                        }
                        Algorithm::Mrf => mrf_estimate(&y, &model, &e.mrf)?,
                    };
                    Ok(NmseRecord {
                        snr_db,
                        algorithm,
                        basis: basis.kind(),
                        trial: t,
                        nmse_db: to_db(r.evaluate(basis, &h.samples)?),
                    })
                })
                .collect()
        })
        .collect::<Result<_, CliError>>()?;
    let records: Vec<NmseRecord> = records.into_iter().flatten().collect();

    out.write("estimate.csv", |w| {
        writeln!(w, "snr_db,algorithm,basis_kind,trial,nmse_db")?;
        for r in &records {
            writeln!(w, "{},{},{},{},{}", r.snr_db, r.algorithm.as_str(), r.basis, r.trial, r.nmse_db)?;
        }
        Ok(())
    })?;
    out.write("estimate_summary.csv", |w| {
        writeln!(w, "snr_db,algorithm,basis_kind,trials,median_nmse_db,q1_nmse_db,q3_nmse_db")?;
        for (basis, _) in &models {
            for &snr in &e.snr_db {
                for &alg in &e.algorithms {
                    let mut v: Vec<f64> = records
                        .iter()
                        .filter(|r| r.basis == basis.kind() && r.snr_db == snr && r.algorithm == alg)
                        .map(|r| r.nmse_db)
                        .collect();
                    v.sort_by(f64::total_cmp);
                    writeln!(
                        w,
                        "{snr},{},{},{},{},{},{}",
                        alg.as_str(),
                        basis.kind(),
                        v.len(),
                        quantile(&v, 0.5),
                        quantile(&v, 0.25),
                        quantile(&v, 0.75)
                    )?;
                }
            }
        }
        Ok(())
    })
}

pub fn codebook(config: &ExperimentConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let setup = Setup::new(config)?;
    let c = &config.codebook;
    let codebooks: Vec<Codebook> = c
        .codebooks
        .iter()
        .map(|&k| Ok(Codebook::from_basis(&setup.basis(k)?, &setup.carrier)?))
        .collect::<Result<_, CliError>>()?;
    let sweep = SweepConfig {
        clusters: c
            .clusters
            .iter()
            .map(|cl| ClusterLayout {
                direction: hmimo_core::em::unit_vector(cl.theta_deg.to_radians(), cl.phi_deg.to_radians()),
                distance_m: 1.0,
                alpha_vmf: cl.alpha_vmf,
                weight: cl.weight,
                scatterers: cl.scatterers,
                shell_half_width: cl.shell_half_width,
            })
            .collect(),
        distances_m: c.distance_grid(),
        snr_db: c.snr_db,
        csi_error_std: c.csi_error_std,
        trials: c.trials,
        seed: config.base_seed,
    };
    sweep.validate()?;
    let cells = sweep.distances_m.len() * sweep.trials;
    let points: Vec<_> = (0..cells)
        .into_par_iter()
        .map(|cell| sweep_cell(&sweep, &setup.geometry, &setup.carrier, &codebooks, cell / sweep.trials, cell % sweep.trials))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let summaries = summarize(&points);
    out.write("codebook.csv", |w| write_sweep_csv(w, &summaries))?;
    out.write("codebook_trials.csv", |w| {
        writeln!(w, "distance_m,trial,codebook_kind,rate_bps_hz,selected_codeword_index,invalid_beam")?;
        for p in &points {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.distance_m, p.trial, p.codebook_kind, p.rate_bps_hz, p.selected_codeword_index, p.invalid_beam
            )?;
        }
        Ok(())
    })
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Invariant suite on the configured geometry. Returns the number of
/// failed checks.
pub fn validate(config: &ExperimentConfig, out: &mut Artifacts) -> Result<usize, CliError> {
    let setup = Setup::new(config)?;
    let (g, c) = (&setup.geometry, &setup.carrier);
    let fh = setup.fh()?;
    let dft = setup.basis(BasisKind::Dft)?;
    let mut checks = Vec::new();

    // Lattice: recount propagating harmonics from κ² ≤ k².
    let k = c.k();
    let (lx, ly) = (g.aperture_x_m, g.aperture_y_m);
    let lmax = (lx / c.lambda()).ceil() as i32 + 1;
    let mmax = (ly / c.lambda()).ceil() as i32 + 1;
    let mut count = 0usize;
    for l in -lmax..=lmax {
        for m in -mmax..=mmax {
            let kx = 2.0 * std::f64::consts::PI * f64::from(l) / lx;
            let ky = 2.0 * std::f64::consts::PI * f64::from(m) / ly;
            count += usize::from(kx * kx + ky * ky <= k * k * (1.0 + 1e-9));
        }
    }
    checks.push(Check {
        name: "lattice_propagating_count_mismatch",
        value: (count as f64 - setup.lattice.propagating_count as f64).abs(),
        tolerance: 0.0,
    });

    let norm_dev = |b: &Basis| {
        (0..b.atom_count())
            .map(|j| (energy(&b.column(j)).sqrt() - 1.0).abs())
            .fold(0.0, f64::max)
    };
    checks.push(Check {
        name: "fh_atom_norm_deviation",
        value: norm_dev(&fh),
        tolerance: 1e-12,
    });
    checks.push(Check {
        name: "dft_atom_norm_deviation",
        value: norm_dev(&dft),
        tolerance: 1e-12,
    });
    checks.push(Check {
        name: "dft_gram_identity_deviation",
        value: max_identity_deviation(&dft.gram()),
        tolerance: 1e-12,
    });
    checks.push(Check {
        name: "fh_gram_offdiagonal_max",
        value: max_identity_deviation(&fh.gram()),
        tolerance: 1e-10,
    });

    let mut rng = stream(config.base_seed, "validate-parseval", 0);
    let n = g.element_count();
    let mut parseval = 0.0f64;
    for _ in 0..20 {
        let h: Vec<Complex64> = (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect();
        let coeff = dft.coefficients(&h, default_mode(BasisKind::Dft))?;
        parseval = parseval.max((energy(&coeff) - energy(&h)).abs() / energy(&h));
    }
    checks.push(Check {
        name: "dft_parseval_relative_error",
        value: parseval,
        tolerance: 1e-12,
    });

    let rd = rayleigh_distance(g, c);
    let d2 = lx * lx + ly * ly;
    checks.push(Check {
        name: "rayleigh_distance_relative_error",
        value: (rd - 2.0 * d2 / c.lambda()).abs() / rd,
        tolerance: 1e-12,
    });

    let v = setup.vmf_variances(&config.estimation.clusters)?;
    checks.push(Check {
        name: "vmf_variance_normalization_error",
        value: (v.total() - n as f64).abs() / n as f64,
        tolerance: 1e-12,
    });

    // FH ⊆ span of the DFT atoms: projecting each FH atom onto the DFT basis
    // must reconstruct it exactly.
    let recon = matmul(&dft.atoms().adjoint(), fh.atoms());
    let fh_energy: f64 = recon.iter().map(|z| z.norm_sqr()).sum::<f64>() / fh.atom_count() as f64;
    checks.push(Check {
        name: "fh_in_dft_span_energy_deficit",
        value: (1.0 - fh_energy).abs(),
        tolerance: 1e-10,
    });

    let failed = checks.iter().filter(|c| !c.passed()).count();
    for ch in &checks {
        println!(
            "{:<40} {:>12.3e}  (tol {:.0e})  {}",
            ch.name,
            ch.value,
            ch.tolerance,
            if ch.passed() { "ok" } else { "FAILED" }
        );
    }
    out.write("validate.csv", |w| {
        writeln!(w, "check,value,tolerance,passed")?;
        for ch in &checks {
            writeln!(w, "{},{},{},{}", ch.name, ch.value, ch.tolerance, ch.passed())?;
        }
        Ok(())
    })?;
    Ok(failed)
}
