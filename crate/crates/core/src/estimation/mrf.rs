//! MRF-structured turbo estimator.
//!
//! Two stages exchange extrinsic information about the support `s ∈ {±1}^A`:
//!
//! 1. A linear stage: vector AMP with a Bernoulli–Gaussian denoiser. The
//!    LMMSE half uses the SVD of the combined dictionary; the denoiser turns
//!    the pseudo-observation `r = x + CN(0, τ)` into posterior means,
//!    variances and a per-atom support log-likelihood ratio.
//! 2. Loopy belief propagation on the Ising prior
//!    `p(s) ∝ exp(Σ_edges β s_i s_j + Σ_i α s_i)` over the 4-connected
//!    `(l, m)` grid, which turns the likelihood ratios into refined
//!    per-atom support priors for the next linear pass.
//!
//! Messages are kept in half-LLR units (`ln p(+1)/p(−1) / 2`), the natural
//! scale of the Ising field.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{EstimationResult, MeasurementModel};
use crate::error::{Error, Result};
use crate::linalg::{energy, CVector};

const LLR_CLAMP: f64 = 60.0;
const BP_SWEEPS: usize = 50;
const BP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MrfPrior {
    /// Ising coupling `β ≥ 0` between neighbouring atoms.
    pub beta: f64,
    /// Ising field `α`; the uncoupled prior activity is `1 / (1 + e^{−2α})`.
    pub alpha_bias: f64,
    pub max_turbo_iterations: usize,
    /// Weight on the previous iterate, in `[0, 1)`.
    pub damping: f64,
    pub convergence_tol: f64,
    /// Linear-stage passes per turbo iteration.
    pub inner_iterations: usize,
    /// Angular power threshold: atoms below this fraction of the active
    /// coefficient power are indistinguishable from noise.
    pub power_threshold: f64,
}

impl Default for MrfPrior {
    fn default() -> Self {
        Self {
            beta: 0.4,
            alpha_bias: -2.0,
            max_turbo_iterations: 30,
            damping: 0.5,
            convergence_tol: 1e-4,
            inner_iterations: 5,
            power_threshold: 3e-3,
        }
    }
}

impl MrfPrior {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("MRF prior: {what}")));
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad("beta must be finite and non-negative");
        }
        if !self.alpha_bias.is_finite() {
            return bad("alpha_bias must be finite");
        }
        if !(0.0..1.0).contains(&self.damping) {
            return bad("damping must lie in [0, 1)");
        }
        if !(self.convergence_tol > 0.0) {
            return bad("convergence_tol must be positive");
        }
        if self.max_turbo_iterations == 0 || self.inner_iterations == 0 {
            return bad("iteration counts must be positive");
        }
        if !(self.power_threshold >= 0.0 && self.power_threshold < 1.0) {
            return bad("power_threshold must lie in [0, 1)");
        }
        Ok(())
    }
}

/// 4-connected neighbourhood over atom indices: atoms are adjacent when
/// their index pairs differ by one in exactly one coordinate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MrfGraph {
    neighbors: Vec<Vec<usize>>,
    /// `reverse[i][p]` is the position of `i` in `neighbors[neighbors[i][p]]`.
    reverse: Vec<Vec<usize>>,
}

impl MrfGraph {
    pub fn from_indices(indices: &[(i32, i32)]) -> Self {
        let lookup: HashMap<(i32, i32), usize> = indices.iter().enumerate().map(|(i, &ix)| (ix, i)).collect();
        let neighbors: Vec<Vec<usize>> = indices
            .iter()
            .map(|&(l, m)| {
                [(l - 1, m), (l + 1, m), (l, m - 1), (l, m + 1)]
                    .iter()
                    .filter_map(|ix| lookup.get(ix).copied())
                    .collect()
            })
            .collect();
        let reverse = neighbors
            .iter()
            .enumerate()
            .map(|(i, ns)| {
                ns.iter()
                    .map(|&j| neighbors[j].iter().position(|&x| x == i).expect("symmetric adjacency"))
                    .collect()
            })
            .collect();
        Self { neighbors, reverse }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, atom: usize) -> &[usize] {
        &self.neighbors[atom]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Loopy BP state: one message per directed edge, warm-started across turbo
/// iterations.
struct IsingBp<'g> {
    graph: &'g MrfGraph,
    coupling: f64,
    messages: Vec<Vec<f64>>,
}

impl<'g> IsingBp<'g> {
    fn new(graph: &'g MrfGraph, beta: f64) -> Self {
        Self {
            graph,
            coupling: beta.tanh(),
            messages: graph.neighbors.iter().map(|n| vec![0.0; n.len()]).collect(),
        }
    }

    /// Run BP with local half-LLR fields `field` and return, per atom, the
    /// extrinsic prior in LLR units: `2 (α + Σ incoming)`.
    fn refine(&mut self, alpha: f64, field: &[f64], damping: f64) -> Vec<f64> {
        let g = self.graph;
        // messages[i][p] is the message from i to neighbors[i][p]
        for _ in 0..BP_SWEEPS {
            let incoming: Vec<f64> = (0..g.len())
                .map(|i| {
                    g.neighbors[i]
                        .iter()
                        .zip(&g.reverse[i])
                        .map(|(&j, &q)| self.messages[j][q])
                        .sum()
                })
                .collect();
            let mut delta = 0.0f64;
            let mut next = self.messages.clone();
            for i in 0..g.len() {
                for (p, (&j, &q)) in g.neighbors[i].iter().zip(&g.reverse[i]).enumerate() {
                    let cavity = field[i] + incoming[i] - self.messages[j][q];
                    let fresh = (self.coupling * cavity.tanh()).atanh();
                    let damped = (1.0 - damping) * fresh + damping * self.messages[i][p];
                    delta = delta.max((damped - self.messages[i][p]).abs());
                    next[i][p] = damped;
                }
            }
            self.messages = next;
            if delta < BP_TOL {
                break;
            }
        }
        (0..g.len())
            .map(|i| {
                let inc: f64 = g.neighbors[i]
                    .iter()
                    .zip(&g.reverse[i])
                    .map(|(&j, &q)| self.messages[j][q])
                    .sum();
                2.0 * (alpha + inc)
            })
            .collect()
    }
}

struct Denoised {
    mean: Vec<Complex64>,
    variance: Vec<f64>,
    /// Support LLR contributed by the pseudo-observation alone.
    llr: Vec<f64>,
    probability: Vec<f64>,
    tau: f64,
    /// Updated active variance (EM).
    active_variance: f64,
}

/// Bernoulli–Gaussian MMSE denoiser for `r = x + CN(0, τ)` with
/// `x ~ (1 − π) δ₀ + π CN(0, v)`.
fn bg_denoise(r: &[Complex64], tau: f64, v: f64, prior_logit: &[f64]) -> Denoised {
    let n = r.len();
    let gain = v / (v + tau);
    let post_var = v * tau / (v + tau);
    let log_ratio = (tau / (v + tau)).ln();
    let slope = 1.0 / tau - 1.0 / (v + tau);
    let mut mean = Vec::with_capacity(n);
    let mut variance = Vec::with_capacity(n);
    let mut llr = Vec::with_capacity(n);
    let mut probability = Vec::with_capacity(n);
    let (mut num, mut den) = (0.0, 0.0);
    for (z, &lp) in r.iter().zip(prior_logit) {
        let l = (log_ratio + z.norm_sqr() * slope).clamp(-LLR_CLAMP, LLR_CLAMP);
        let rho = sigmoid(l + lp);
        let m0 = z * gain;
        let second = m0.norm_sqr() + post_var;
        let xm = m0 * rho;
        mean.push(xm);
        variance.push((rho * second - xm.norm_sqr()).max(0.0));
        llr.push(l);
        probability.push(rho);
        num += rho * second;
        den += rho;
    }
    let active_variance = if den > 1e-9 { num / den } else { v };
    Denoised {
        mean,
        variance,
        llr,
        probability,
        tau,
        active_variance,
    }
}

struct Vamp<'m> {
    model: &'m MeasurementModel,
    /// `γ_w s_i (Uᴴ y)_i`
    uy_scaled: Vec<Complex64>,
    s2_scaled: Vec<f64>,
    r1: Vec<Complex64>,
    gamma1: f64,
    active_variance: f64,
    floor: f64,
}

impl<'m> Vamp<'m> {
    fn new(model: &'m MeasurementModel, y: &CVector, prior_activity: f64, power_threshold: f64) -> Self {
        let svd = model.svd();
        let m = model.measurements() as f64;
        let a = model.atom_count();
        let y_energy = y.norm_squared();
        let noise = model.noise_variance().max(1e-12 * y_energy / m).max(f64::MIN_POSITIVE);
        let gw = 1.0 / noise;
        let uy = svd.u.ad_mul(y);
        let uy_scaled = svd.s.iter().zip(uy.iter()).map(|(s, u)| u * (gw * s)).collect();
        let s2_scaled = svd.s.iter().map(|s| gw * s * s).collect();
        let col_energy = model.dictionary().norm_squared() / a as f64;
        let x_energy = (y_energy - m * model.noise_variance()).max(1e-3 * y_energy) / col_energy;
        let per_atom = (x_energy / a as f64).max(f64::MIN_POSITIVE);
        Self {
            model,
            uy_scaled,
            s2_scaled,
            r1: vec![Complex64::default(); a],
            gamma1: 1.0 / per_atom,
            active_variance: per_atom / prior_activity.max(1e-6),
            floor: power_threshold,
        }
    }

    fn denoise(&self, prior_logit: &[f64]) -> Denoised {
        let tau = (1.0 / self.gamma1).max(self.floor * self.active_variance);
        bg_denoise(&self.r1, tau, self.active_variance, prior_logit)
    }

    /// One VAMP pass; returns the denoiser output it started from.
    fn step(&mut self, prior_logit: &[f64], damping: f64) -> Denoised {
        let a = self.r1.len();
        let d = self.denoise(prior_logit);
        self.active_variance = d.active_variance.max(f64::MIN_POSITIVE);

        let alpha1 = (d.variance.iter().sum::<f64>() / a as f64 / d.tau).clamp(1e-9, 1.0 - 1e-9);
        let gamma2 = self.gamma1 * (1.0 - alpha1) / alpha1;
        let r2: Vec<Complex64> = d
            .mean
            .iter()
            .zip(&self.r1)
            .map(|(x, r)| (x - r * alpha1) / (1.0 - alpha1))
            .collect();

        let svd = self.model.svd();
        let r2v = CVector::from_column_slice(&r2);
        let z = &svd.v_t * &r2v;
        let rank = z.len();
        let mut w = CVector::zeros(rank);
        let mut trace = (a - rank) as f64;
        for i in 0..rank {
            let den = self.s2_scaled[i] + gamma2;
            w[i] = (self.uy_scaled[i] + z[i] * gamma2) / den - z[i];
            trace += gamma2 / den;
        }
        let x2 = r2v + svd.v_t.ad_mul(&w);
        let alpha2 = (trace / a as f64).clamp(1e-9, 1.0 - 1e-9);
        let gamma1_new = gamma2 * (1.0 - alpha2) / alpha2;
        for ((r1, x), r2) in self.r1.iter_mut().zip(x2.iter()).zip(&r2) {
            let fresh = (x - r2 * alpha2) / (1.0 - alpha2);
            *r1 = fresh * (1.0 - damping) + *r1 * damping;
        }
        self.gamma1 = 1.0 / ((1.0 - damping) / gamma1_new + damping / self.gamma1);
        d
    }
}

fn turbo(y: &[Complex64], model: &MeasurementModel, prior: &MrfPrior, coupled: bool) -> Result<EstimationResult> {
    prior.validate()?;
    let yv = model.check_observation(y)?;
    let a = model.atom_count();
    if a == 0 {
        return Err(Error::Empty("dictionary"));
    }
    if energy(y) == 0.0 {
        return Ok(EstimationResult {
            coefficients: vec![Complex64::default(); a],
            support: vec![false; a],
            nmse: None,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
            support_probability: vec![0.0; a],
        });
    }
    let graph = MrfGraph::from_indices(model.atom_indices());
    let mut bp = IsingBp::new(&graph, prior.beta);
    let base_logit = 2.0 * prior.alpha_bias;
    let mut logit = vec![base_logit; a];
    let mut vamp = Vamp::new(model, &yv, sigmoid(base_logit), prior.power_threshold);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut previous_mean: Option<Vec<Complex64>> = None;
    for _ in 0..prior.max_turbo_iterations {
        iterations += 1;
        for _ in 0..prior.inner_iterations {
            vamp.step(&logit, prior.damping);
        }
        let d = vamp.denoise(&logit);
        let fresh = if coupled {
            let field: Vec<f64> = d.llr.iter().map(|l| prior.alpha_bias + 0.5 * l).collect();
            bp.refine(prior.alpha_bias, &field, prior.damping)
        } else {
            vec![base_logit; a]
        };
        let mut prior_change = 0.0f64;
        for (old, new) in logit.iter_mut().zip(&fresh) {
            let next = (1.0 - prior.damping) * new + prior.damping * *old;
            prior_change = prior_change.max((sigmoid(next) - sigmoid(*old)).abs());
            *old = next;
        }
        let mean_change = match &previous_mean {
            Some(prev) => {
                let diff: f64 = prev.iter().zip(&d.mean).map(|(p, q)| (p - q).norm_sqr()).sum();
                (diff / energy(&d.mean).max(f64::MIN_POSITIVE)).sqrt()
            }
            None => f64::INFINITY,
        };
        previous_mean = Some(d.mean);
        let change = prior_change.max(mean_change);
        trace.push(change);
        if change < prior.convergence_tol {
            converged = true;
            break;
        }
    }

    let d = vamp.denoise(&logit);
    let support: Vec<bool> = d.probability.iter().map(|&p| p > 0.5).collect();
    let coefficients = d
        .mean
        .iter()
        .zip(&support)
        .map(|(x, &s)| if s { *x } else { Complex64::default() })
        .collect();
    Ok(EstimationResult {
        coefficients,
        support,
        nmse: None,
        iterations,
        converged,
        trace,
        support_probability: d.probability,
    })
}

/// MRF-structured estimate. Non-convergence is reported through
/// `converged = false`, not as an error.
pub fn mrf_estimate(y: &[Complex64], model: &MeasurementModel, prior: &MrfPrior) -> Result<EstimationResult> {
    turbo(y, model, prior, true)
}

/// Same linear stage with an independent Bernoulli prior of activity
/// `1 / (1 + e^{−2α})` (no MRF coupling).
pub fn bg_estimate(y: &[Complex64], model: &MeasurementModel, prior: &MrfPrior) -> Result<EstimationResult> {
    turbo(y, model, prior, false)
}
