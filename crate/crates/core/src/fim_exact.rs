//! Exact Fisher information of the delay-Doppler model, its prior average
//! and the Bayesian bound built from it.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqops::{
    check_len, delay_diagonal, doppler_matrices, noise_covariance, NoiseCovariance, NoiseModel,
    Operators, ReceiveInterpolant, SpectrumVector, C64,
};
use crate::model::{ParameterPrior, PriorQuadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FimKind {
    Exact,
    Approx,
}

impl fmt::Display for FimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FimKind::Exact => "exact",
            FimKind::Approx => "approx",
        })
    }
}

/// 2×2 information matrix over `(τ, ν)` plus how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimResult {
    pub j: Matrix2<f64>,
    pub kind: FimKind,
    /// Quadrature nodes per axis (1 for a pointwise FIM).
    pub nodes: usize,
}

#[derive(Serialize, Deserialize)]
struct FimJson {
    j11: f64,
    j12: f64,
    j22: f64,
    kind: FimKind,
    nodes: usize,
}

impl FimResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FimJson {
            j11: self.j[(0, 0)],
            j12: self.j[(0, 1)],
            j22: self.j[(1, 1)],
            kind: self.kind,
            nodes: self.nodes,
        })
        .expect("plain numbers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: FimJson = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(FimResult {
            j: Matrix2::new(v.j11, v.j12, v.j12, v.j22),
            kind: v.kind,
            nodes: v.nodes,
        })
    }

    /// `tr(M′ J)`.
    pub fn weighted_trace(&self, m: &Matrix2<f64>) -> f64 {
        (m * self.j).trace()
    }

    pub fn scaled(&self, factor: f64) -> FimResult {
        FimResult {
            j: self.j * factor,
            ..*self
        }
    }
}

/// Doppler-dependent quantities shared by all delays at one `ν`.
struct DopplerSlice {
    x0: DVector<C64>,
    x1: DVector<C64>,
    delta_tilde: DMatrix<C64>,
    d_delta_tilde: DMatrix<C64>,
}

/// Exact FIM evaluator for a fixed filter pair.
pub struct ExactFim<'a> {
    ops: &'a Operators,
    g: SpectrumVector,
    interp: ReceiveInterpolant,
    noise: NoiseCovariance,
    gamma: C64,
}

impl<'a> ExactFim<'a> {
    /// Evaluator with noise density `n0` and the chosen noise construction.
    pub fn new(
        g: &SpectrumVector,
        h: &SpectrumVector,
        gamma: C64,
        n0: f64,
        model: NoiseModel,
        ops: &'a Operators,
    ) -> Result<Self> {
        check_len(g, ops.k())?;
        let interp = ReceiveInterpolant::new(h, &ops.config)?;
        let noise = noise_covariance(h, n0, ops, model)?;
        Ok(ExactFim {
            ops,
            g: g.clone(),
            interp,
            noise,
            gamma,
        })
    }

    pub fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }

    fn slice(&self, nu: f64) -> Result<DopplerSlice> {
        let limit = self.ops.config.f0() / 2.0;
        if !nu.is_finite() || nu.abs() >= limit {
            return Err(Error::DopplerOutOfRange { nu, limit });
        }
        let (hs, dhs) = self.interp.shifted(nu);
        let dop = doppler_matrices(nu, &self.ops.config, true);
        Ok(DopplerSlice {
            x0: self.g.component_mul(&hs),
            x1: self.g.component_mul(&dhs),
            delta_tilde: dop.delta_tilde,
            d_delta_tilde: dop.d_delta_tilde.expect("requested"),
        })
    }

    fn at_slice(&self, s: &DopplerSlice, tau: f64) -> Matrix2<f64> {
        let (t, dt) = delay_diagonal(tau, &self.ops.config);
        let a_tau = self.ops.fold(&dt.component_mul(&s.x0));
        let a0 = self.ops.fold(&t.component_mul(&s.x0));
        let a1 = self.ops.fold(&t.component_mul(&s.x1));
        let u_tau = &s.delta_tilde * a_tau;
        let u_nu = &s.d_delta_tilde * a0 + &s.delta_tilde * a1;
        let scale = 2.0 * self.ops.n() as f64 * self.gamma.norm_sqr();
        let j11 = self.noise.inner_freq(&u_tau, &u_tau, self.ops).re * scale;
        let j12 = self.noise.inner_freq(&u_tau, &u_nu, self.ops).re * scale;
        let j22 = self.noise.inner_freq(&u_nu, &u_nu, self.ops).re * scale;
        Matrix2::new(j11, j12, j12, j22)
    }

    /// `J_F(θ)`.
    pub fn at(&self, (tau, nu): (f64, f64)) -> Result<FimResult> {
        let s = self.slice(nu)?;
        Ok(FimResult {
            j: self.at_slice(&s, tau),
            kind: FimKind::Exact,
            nodes: 1,
        })
    }

    /// `E_θ[J_F(θ)]` under the tensor quadrature rule.
    pub fn expected(&self, rule: &PriorQuadrature) -> Result<FimResult> {
        let per_nu: Vec<Result<Matrix2<f64>>> = rule
            .nu
            .par_iter()
            .enumerate()
            .map(|(jn, &nu)| {
                let s = self.slice(nu)?;
                let mut acc = Matrix2::zeros();
                for (it, &tau) in rule.tau.iter().enumerate() {
                    acc += self.at_slice(&s, tau) * rule.weights[it];
                }
                Ok(acc * rule.weights[jn])
            })
            .collect();
        let mut j = Matrix2::zeros();
        for m in per_nu {
            j += m?;
        }
        Ok(FimResult {
            j,
            kind: FimKind::Exact,
            nodes: rule.nodes_per_axis(),
        })
    }
}

/// Exact FIM at one parameter value using the configured `N_0`.
pub fn fim_exact(
    theta: (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    h: &SpectrumVector,
    ops: &Operators,
) -> Result<FimResult> {
    ExactFim::new(g, h, gamma, ops.config.n0, NoiseModel::Circulant, ops)?.at(theta)
}

/// Prior-averaged exact FIM (`J_D`) with `γ = 1`.
pub fn efim(
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
) -> Result<FimResult> {
    efim_with(g, h, prior, ops, nodes, ops.config.n0, NoiseModel::Circulant)
}

pub fn efim_with(
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
    n0: f64,
    model: NoiseModel,
) -> Result<FimResult> {
    let rule = PriorQuadrature::new(prior, nodes);
    ExactFim::new(g, h, C64::new(1.0, 0.0), n0, model, ops)?.expected(&rule)
}

/// `J_B = J_D + J_P` and the bound `J_B⁻¹`.
pub fn bcrlb(j_d: &Matrix2<f64>, prior: &ParameterPrior) -> (Matrix2<f64>, Matrix2<f64>) {
    let j_b = j_d + prior.pim();
    let inv = j_b.try_inverse().expect("prior information keeps J_B invertible");
    let inv = (inv + inv.transpose()) * 0.5;
    (j_b, inv)
}

/// Information gains `(χ_τ, χ_ν)` in dB of `sys` over `reference`.
pub fn relative_gain(sys: &Matrix2<f64>, reference: &Matrix2<f64>) -> Result<(f64, f64)> {
    let inv = |m: &Matrix2<f64>| -> Result<Matrix2<f64>> {
        let det = m.determinant();
        if !(m[(0, 0)] > 0.0 && m[(1, 1)] > 0.0) || !(det > 1e-13 * m[(0, 0)] * m[(1, 1)]) {
            return Err(Error::SingularInformation);
        }
        m.try_inverse().ok_or(Error::SingularInformation)
    };
    let s = inv(sys)?;
    let r = inv(reference)?;
    Ok((
        10.0 * (r[(0, 0)] / s[(0, 0)]).log10(),
        10.0 * (r[(1, 1)] / s[(1, 1)]).log10(),
    ))
}
