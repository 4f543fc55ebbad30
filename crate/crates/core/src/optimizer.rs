//! Alternating maximization of `tr(M′ J̄_D)` over the transmit and receive
//! spectra, and the α sweep over diagonal weightings.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim_approx::{delta_terms, phi_terms, transmit_objective};
use crate::fim_exact::{efim, relative_gain};
use crate::freqops::{power, Operators, SpectrumVector, C64, ZERO};
use crate::model::{ParameterPrior, PriorQuadrature, Scenario};
use crate::symmetry::{reduce_receive_forms, reduce_transmit_form, HalfSpectrum};
use crate::waveforms::{default_code, reference_lowpass, rpc_waveform};

/// Outcome of one alternating optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub g_opt: SpectrumVector,
    pub h_opt: SpectrumVector,
    /// Objective before the first step, then after every half step.
    pub objective_trace: Vec<f64>,
    pub alpha: f64,
    /// `(χ_τ, χ_ν)` in dB from the exact EFIM against the reference design.
    pub chi: Option<(f64, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct DesignJson {
    alpha: f64,
    chi_tau_db: Option<f64>,
    chi_nu_db: Option<f64>,
    iterations: usize,
    converged: bool,
    objective: f64,
    g: Vec<[f64; 2]>,
    h: Vec<[f64; 2]>,
}

fn pairs(x: &SpectrumVector) -> Vec<[f64; 2]> {
    x.iter().map(|c| [c.re, c.im]).collect()
}

impl DesignResult {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap_or(&f64::NAN)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DesignJson {
            alpha: self.alpha,
            chi_tau_db: self.chi.map(|c| c.0),
            chi_nu_db: self.chi.map(|c| c.1),
            iterations: self.iterations,
            converged: self.converged,
            objective: self.objective(),
            g: pairs(&self.g_opt),
            h: pairs(&self.h_opt),
        })
        .expect("plain numbers serialize")
    }

    /// Reads a design written by [`DesignResult::to_json`]; only the final
    /// objective of the trace survives the round trip.
    pub fn from_json(text: &str) -> Result<Self> {
        let d: DesignJson = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let vec = |v: &[[f64; 2]]| DVector::from_iterator(v.len(), v.iter().map(|p| C64::new(p[0], p[1])));
        Ok(DesignResult {
            g_opt: vec(&d.g),
            h_opt: vec(&d.h),
            objective_trace: vec![d.objective],
            alpha: d.alpha,
            chi: d.chi_tau_db.zip(d.chi_nu_db),
            iterations: d.iterations,
            converged: d.converged,
        })
    }
}

/// Knobs of the alternating scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    /// Relative objective gain per iteration below which the run stops.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Extra runs from seeded random receive filters; the best run is kept.
    pub restarts: usize,
    pub seed: u64,
    /// Restrict both filters to real, even spectra.
    pub symmetric: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            epsilon: 1e-6,
            max_iter: 100,
            restarts: 3,
            seed: 0,
            symmetric: true,
        }
    }
}

/// `diag(α, 1-α)` applied to the prior-normalized parameters `θ_i / σ_i`.
pub fn weight_matrix(alpha: f64, prior: &ParameterPrior) -> Matrix2<f64> {
    Matrix2::new(
        alpha * prior.sigma_tau * prior.sigma_tau,
        0.0,
        0.0,
        (1.0 - alpha) * prior.sigma_nu * prior.sigma_nu,
    )
}

/// Largest eigenpair of a real symmetric matrix with the first nonzero
/// component made positive. A zero matrix yields `(0, e_1)`.
pub fn dominant_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let n = m.nrows();
    if m.iter().all(|v| *v == 0.0) {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        return (0.0, e);
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    if n > 1 {
        let second = eig.eigenvalues[order[1]];
        if (top - second).abs() < 1e-12 * top.abs() {
            warn!("degenerate objective: top eigenvalues {top:e} and {second:e} coincide");
        }
    }
    let mut v = eig.eigenvectors.column(order[0]).into_owned();
    let tol = 1e-12 * v.amax();
    if let Some(first) = v.iter().find(|x| x.abs() > tol) {
        if *first < 0.0 {
            v = -v;
        }
    }
    (top, v)
}

/// Complex Hermitian counterpart of [`dominant_eigen`]; the first nonzero
/// component is rotated onto the positive real axis.
pub fn dominant_eigen_hermitian(m: &DMatrix<C64>) -> (f64, DVector<C64>) {
    let n = m.nrows();
    if m.iter().all(|v| *v == ZERO) {
        let mut e = DVector::from_element(n, ZERO);
        e[0] = C64::new(1.0, 0.0);
        return (0.0, e);
    }
    let eig = SymmetricEigen::new(m.clone());
    let idx = eig.eigenvalues.imax();
    let mut v = eig.eigenvectors.column(idx).into_owned();
    let scale = v.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if let Some(first) = v.iter().find(|c| c.norm() > 1e-12 * scale).copied() {
        let rot = first.conj() / first.norm();
        v *= rot;
    }
    (eig.eigenvalues[idx], v)
}

/// Fixed data of a design problem: operators, prior rule and weighting.
pub struct DesignProblem<'a> {
    pub ops: &'a Operators,
    pub prior: ParameterPrior,
    pub rule: PriorQuadrature,
    pub nodes: usize,
    /// Effective weighting on the raw EFIM.
    pub weights: Matrix2<f64>,
    pub alpha: f64,
}

impl<'a> DesignProblem<'a> {
    pub fn new(ops: &'a Operators, prior: &ParameterPrior, nodes: usize, alpha: f64) -> Self {
        DesignProblem {
            ops,
            prior: *prior,
            rule: PriorQuadrature::new(prior, nodes),
            nodes,
            weights: weight_matrix(alpha, prior),
            alpha,
        }
    }

    fn cross(&self) -> bool {
        self.weights[(0, 1)] != 0.0 || self.weights[(1, 0)] != 0.0
    }

    /// `tr(M′ J̄_D)` at unit noise density.
    pub fn objective(&self, g: &SpectrumVector, h: &SpectrumVector) -> Result<f64> {
        let phi = phi_terms(h, &self.rule, self.ops, 1.0, self.cross())?.combine(&self.weights);
        Ok(transmit_objective(&phi, g))
    }

    /// Transmit step: best `g` for fixed `h` on the power sphere.
    pub fn transmit_step(&self, h: &SpectrumVector, symmetric: bool) -> Result<(SpectrumVector, f64)> {
        let phi = phi_terms(h, &self.rule, self.ops, 1.0, self.cross())?.combine(&self.weights);
        let pt = self.ops.config.pt;
        if symmetric {
            let half = reduce_transmit_form(&phi);
            let n = half.nrows();
            // whiten the power metric diag(2, …, 2, 1)
            let d: Vec<f64> = (0..n)
                .map(|i| if i + 1 < n { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 })
                .collect();
            let white = DMatrix::from_fn(n, n, |a, b| half[(a, b)] * d[a] * d[b]);
            let (lambda, z) = dominant_eigen(&white);
            let y = DVector::from_fn(n, |i, _| z[i] * d[i] * pt.sqrt());
            Ok((HalfSpectrum::from_stacked(&y).expand(), lambda * pt))
        } else {
            let (lambda, v) = dominant_eigen_hermitian(&phi);
            Ok((v * C64::new(pt.sqrt(), 0.0), lambda * pt))
        }
    }

    /// Receive step: per-group top eigenvector for fixed `g`.
    pub fn receive_step(&self, g: &SpectrumVector, symmetric: bool) -> Result<(SpectrumVector, f64)> {
        let deltas = delta_terms(g, &self.weights, &self.rule, self.ops, 1.0)?;
        if symmetric {
            let red = reduce_receive_forms(&deltas, self.ops);
            let mut total = 0.0;
            let coords: Vec<DVector<f64>> = red
                .groups
                .iter()
                .map(|grp| {
                    let (l, c) = dominant_eigen(&grp.form);
                    total += l;
                    c
                })
                .collect();
            Ok((red.assemble(&coords, self.ops), total))
        } else {
            let mut h = DVector::from_element(self.ops.k(), ZERO);
            let mut total = 0.0;
            for (bin, delta) in deltas.iter().enumerate() {
                let (l, v) = dominant_eigen_hermitian(delta);
                total += l;
                let mem = self.ops.partition.member_positions(self.ops.config.grid_index(bin));
                for (&p, &c) in mem.iter().zip(v.iter()) {
                    h[p] = c;
                }
            }
            Ok((h, total))
        }
    }

    /// Alternates transmit and receive steps starting with the transmit step.
    pub fn alternate(
        &self,
        g_init: &SpectrumVector,
        h_init: &SpectrumVector,
        epsilon: f64,
        max_iter: usize,
        symmetric: bool,
    ) -> Result<DesignResult> {
        if !(epsilon > 0.0) {
            return Err(Error::NonPositiveInput {
                name: "epsilon",
                value: epsilon,
            });
        }
        let mut trace = vec![self.objective(g_init, h_init)?];
        let mut g = g_init.clone();
        let mut h = h_init.clone();
        let mut converged = false;
        let mut iterations = 0;
        let mut prev = trace[0];
        while iterations < max_iter.max(1) {
            let (gn, ot) = self.transmit_step(&h, symmetric)?;
            trace.push(ot);
            let (hn, or) = self.receive_step(&gn, symmetric)?;
            trace.push(or);
            g = gn;
            h = hn;
            iterations += 1;
            let gain = (or - prev) / prev.abs().max(f64::MIN_POSITIVE);
            debug!("alpha={} iter={iterations} objective={or:e} gain={gain:e}", self.alpha);
            prev = or;
            if gain < epsilon {
                converged = true;
                break;
            }
        }
        Ok(DesignResult {
            g_opt: g,
            h_opt: h,
            objective_trace: trace,
            alpha: self.alpha,
            chi: None,
            iterations,
            converged,
        })
    }
}

/// Reference pair: seeded RPC transmit and low-pass receive of width `f_s`.
pub fn reference_design(scenario: &Scenario) -> Result<(SpectrumVector, SpectrumVector)> {
    let sys = &scenario.system;
    let g = rpc_waveform(sys, &default_code(sys, scenario.code_seed))?;
    let h = reference_lowpass(sys, sys.fs)?;
    Ok((g, h))
}

/// Information gains of a design over a reference via the exact EFIM.
pub fn exact_gain(
    design: (&SpectrumVector, &SpectrumVector),
    reference: (&SpectrumVector, &SpectrumVector),
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
) -> Result<(f64, f64)> {
    let sys = efim(design.0, design.1, prior, ops, nodes)?;
    let reff = efim(reference.0, reference.1, prior, ops, nodes)?;
    relative_gain(&sys.j, &reff.j)
}

fn random_receive(k: usize, rng: &mut ChaCha8Rng, symmetric: bool) -> SpectrumVector {
    let mut h = DVector::from_fn(k, |_, _| C64::new(rng.random_range(0.1..1.0), 0.0));
    if symmetric {
        for p in 1..k / 2 {
            h[k - p] = h[p];
        }
    }
    h
}

/// Full optimization for one α: default start (flat receive) plus seeded
/// restarts, best objective kept, χ against the reference design.
pub fn optimize(
    scenario: &Scenario,
    ops: &Operators,
    alpha: f64,
    settings: &OptimizerSettings,
) -> Result<DesignResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha {alpha} outside [0, 1]")));
    }
    let problem = DesignProblem::new(ops, &scenario.prior, scenario.ghq_nodes, alpha);
    let (g_ref, h_ref) = reference_design(scenario)?;
    let flat = reference_lowpass(&scenario.system, scenario.system.bandwidth())?;
    let mut best =
        problem.alternate(&g_ref, &flat, settings.epsilon, settings.max_iter, settings.symmetric)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for r in 0..settings.restarts {
        let h0 = random_receive(ops.k(), &mut rng, settings.symmetric);
        let run = problem.alternate(&g_ref, &h0, settings.epsilon, settings.max_iter, settings.symmetric)?;
        debug!("alpha={alpha} restart={r} objective={:e}", run.objective());
        if run.objective() > best.objective() {
            best = run;
        }
    }
    debug_assert!((power(&best.g_opt) - scenario.system.pt).abs() <= 1e-9 * scenario.system.pt);
    best.chi = Some(exact_gain(
        (&best.g_opt, &best.h_opt),
        (&g_ref, &h_ref),
        &scenario.prior,
        ops,
        scenario.ghq_nodes,
    )?);
    Ok(best)
}

/// Sweep outcome: one entry per α (failures kept as errors) and the index
/// of the max-sum weighting.
pub struct ParetoSweep {
    pub results: Vec<(f64, std::result::Result<DesignResult, Error>)>,
    pub best_sum: Option<usize>,
}

impl ParetoSweep {
    pub fn alpha_star(&self) -> Option<&DesignResult> {
        self.best_sum
            .and_then(|i| self.results[i].1.as_ref().ok())
    }
}

/// `α = 0, 1/(n-1), …, 1`.
pub fn alpha_grid(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0];
    }
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

pub fn pareto_sweep(
    alphas: &[f64],
    scenario: &Scenario,
    ops: &Operators,
    settings: &OptimizerSettings,
) -> ParetoSweep {
    let results: Vec<(f64, std::result::Result<DesignResult, Error>)> = alphas
        .par_iter()
        .map(|&a| (a, optimize(scenario, ops, a, settings)))
        .collect();
    let mut best_sum = None;
    let mut best_val = f64::NEG_INFINITY;
    for (i, (_, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => {
                if let Some((ct, cn)) = d.chi {
                    if ct + cn > best_val {
                        best_val = ct + cn;
                        best_sum = Some(i);
                    }
                }
            }
            Err(e) => warn!("alpha={}: {e}", results[i].0),
        }
    }
    ParetoSweep { results, best_sum }
}
