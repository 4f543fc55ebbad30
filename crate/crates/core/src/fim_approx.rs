//! Periodic-Doppler approximation of the FIM and the two quadratic forms of
//! the weighted objective `tr(M′ J̄_D)`: `gᴴ Φ g` over the transmit spectrum
//! and `Σ_k h_kᴴ Δ_k h_k / h_kᴴ h_k` over the alias groups of the receive
//! spectrum.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::Result;
use crate::fim_exact::{FimKind, FimResult};
use crate::freqops::{
    check_len, check_omega, delay_diagonal, folded_noise_power, Operators, SpectrumVector, C64,
    ZERO,
};
use crate::model::{ParameterPrior, PriorQuadrature, SystemConfig};

/// Fourier coefficient `d_z(ν)` of the periodically extended Doppler phase.
pub fn doppler_coefficient(z: i64, nu: f64, t0: f64) -> f64 {
    let a = t0 * nu;
    let x = a - z as f64;
    if x == 0.0 {
        1.0
    } else {
        parity(z) * (PI * a).sin() / (PI * x)
    }
}

/// `(-1)^z`, so that `sin(π(a - z)) = (-1)^z sin(πa)` stays exact at `a = 0`.
fn parity(z: i64) -> f64 {
    if z.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `∂d_z(ν)/∂ν`.
pub fn doppler_coefficient_derivative(z: i64, nu: f64, t0: f64) -> f64 {
    let a = t0 * nu;
    let x = a - z as f64;
    let dsinc = if x.abs() < 1e-4 {
        -PI * PI * x / 3.0 * (1.0 - (PI * x).powi(2) / 10.0)
    } else {
        let s = parity(z);
        (s * (PI * a).cos() - s * (PI * a).sin() / (PI * x)) / x
    };
    t0 * dsinc
}

/// `D(ν)` with `[D]_{mn} = d_{m-n}(ν)`, truncated to the K×K window, and
/// optionally `∂D/∂ν`.
#[derive(Debug, Clone)]
pub struct DopplerConvolution {
    pub d: DMatrix<f64>,
    pub dd: Option<DMatrix<f64>>,
}

pub fn doppler_convolution(nu: f64, config: &SystemConfig, with_derivative: bool) -> DopplerConvolution {
    let k = config.k;
    let t0 = config.t0;
    let offset = k as i64 - 1;
    let coeff: Vec<f64> = (-offset..=offset)
        .map(|z| doppler_coefficient(z, nu, t0))
        .collect();
    let d = DMatrix::from_fn(k, k, |m, n| coeff[(m as i64 - n as i64 + offset) as usize]);
    let dd = with_derivative.then(|| {
        let dc: Vec<f64> = (-offset..=offset)
            .map(|z| doppler_coefficient_derivative(z, nu, t0))
            .collect();
        DMatrix::from_fn(k, k, |m, n| dc[(m as i64 - n as i64 + offset) as usize])
    });
    DopplerConvolution { d, dd }
}

fn real_times(m: &DMatrix<f64>, x: &DVector<C64>) -> DVector<C64> {
    let re = m * x.map(|c| c.re);
    let im = m * x.map(|c| c.im);
    DVector::from_fn(x.len(), |i, _| C64::new(re[i], im[i]))
}

/// `γ A (h ∘ D(ν) T(τ) g)`.
pub fn approx_received_spectrum(
    (tau, nu): (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    h: &SpectrumVector,
    ops: &Operators,
) -> Result<DVector<C64>> {
    check_len(g, ops.k())?;
    check_len(h, ops.k())?;
    let (t, _) = delay_diagonal(tau, &ops.config);
    let dc = doppler_convolution(nu, &ops.config, false);
    let inner = real_times(&dc.d, &t.component_mul(g));
    Ok(ops.fold(&h.component_mul(&inner)) * gamma)
}

/// `ξ_τ = √N ∂C/∂τ g` and `ξ_ν = √N ∂C/∂ν g` at one parameter value.
fn xi_vectors(
    (tau, nu): (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    ops: &Operators,
) -> (DVector<C64>, DVector<C64>) {
    let (t, dt) = delay_diagonal(tau, &ops.config);
    let dc = doppler_convolution(nu, &ops.config, true);
    let sn = gamma * (ops.n() as f64).sqrt();
    let xi_tau = real_times(&dc.d, &dt.component_mul(g)) * sn;
    let xi_nu = real_times(dc.dd.as_ref().expect("requested"), &t.component_mul(g)) * sn;
    (xi_tau, xi_nu)
}

/// Approximated FIM `J̄_F(θ)` evaluated through the transmit-side form.
pub fn fim_approx(
    theta: (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    h: &SpectrumVector,
    ops: &Operators,
) -> Result<FimResult> {
    check_len(g, ops.k())?;
    check_len(h, ops.k())?;
    let omega = folded_noise_power(h, ops.config.n0, ops);
    check_omega(&omega, ops)?;
    let (xt, xn) = xi_vectors(theta, gamma, g, ops);
    let ut = ops.fold(&h.component_mul(&xt));
    let un = ops.fold(&h.component_mul(&xn));
    let inner = |a: &DVector<C64>, b: &DVector<C64>| -> f64 {
        2.0 * a
            .iter()
            .zip(b.iter())
            .zip(omega.iter())
            .map(|((x, y), &o)| x.conj() * y / o)
            .sum::<C64>()
            .re
    };
    let j12 = inner(&ut, &un);
    Ok(FimResult {
        j: Matrix2::new(inner(&ut, &ut), j12, j12, inner(&un, &un)),
        kind: FimKind::Approx,
        nodes: 1,
    })
}

/// The same FIM evaluated through the per-group Rayleigh form in `h`.
pub fn fim_approx_receive_form(
    theta: (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    h: &SpectrumVector,
    ops: &Operators,
) -> Result<FimResult> {
    check_len(g, ops.k())?;
    let omega = folded_noise_power(h, ops.config.n0, ops);
    check_omega(&omega, ops)?;
    let (xt, xn) = xi_vectors(theta, gamma, g, ops);
    let xs = [xt, xn];
    let scale = ops.config.ts() / ops.config.n0;
    let mut j = Matrix2::zeros();
    for k in 0..ops.n() {
        let members = ops.partition.member_positions(ops.config.grid_index(k));
        let hk = DVector::from_iterator(members.len(), members.iter().map(|&p| h[p]));
        let norm = hk.norm_squared();
        if norm == 0.0 {
            continue;
        }
        for i in 0..2 {
            for jj in 0..2 {
                let a = DVector::from_iterator(members.len(), members.iter().map(|&p| xs[i][p]));
                let b = DVector::from_iterator(members.len(), members.iter().map(|&p| xs[jj][p]));
                // h_kᴴ ξ*_{k,i} ξᵀ_{k,j} h_k
                let q = (a.transpose() * &hk)[0].conj() * (b.transpose() * &hk)[0];
                j[(i, jj)] += 2.0 * q.re * scale / norm;
            }
        }
    }
    Ok(FimResult {
        j,
        kind: FimKind::Approx,
        nodes: 1,
    })
}

/// Prior averages `E[Φ_ττ]`, `E[Φ_τν]`, `E[Φ_νν]` for a fixed receive
/// spectrum.
#[derive(Debug, Clone)]
pub struct PhiTerms {
    pub tt: DMatrix<C64>,
    pub tn: Option<DMatrix<C64>>,
    pub nn: DMatrix<C64>,
}

impl PhiTerms {
    /// `Φ = Σ_ij [M′]_ji E[Φ_ij + Φ_ji]` for symmetric `M′`.
    pub fn combine(&self, m: &Matrix2<f64>) -> DMatrix<C64> {
        let mut phi = &self.tt * C64::new(2.0 * m[(0, 0)], 0.0) + &self.nn * C64::new(2.0 * m[(1, 1)], 0.0);
        let cross = 0.5 * (m[(0, 1)] + m[(1, 0)]);
        if cross != 0.0 {
            let tn = self.tn.as_ref().expect("cross terms computed for off-diagonal weights");
            phi += (tn + tn.adjoint()) * C64::new(2.0 * cross, 0.0);
        }
        phi
    }

    /// `J̄_D` for a transmit spectrum.
    pub fn efim(&self, g: &SpectrumVector, nodes: usize) -> FimResult {
        let quad = |m: &DMatrix<C64>| g.dotc(&(m * g));
        let j11 = 2.0 * quad(&self.tt).re;
        let j22 = 2.0 * quad(&self.nn).re;
        let j12 = self.tn.as_ref().map_or(0.0, |tn| 2.0 * quad(tn).re);
        FimResult {
            j: Matrix2::new(j11, j12, j12, j22),
            kind: FimKind::Approx,
            nodes,
        }
    }
}

/// `E_τ[e^{j d ω_0 τ}]` for `d = -(K-1) ..= K-1`.
fn delay_moments(rule: &PriorQuadrature, config: &SystemConfig) -> Vec<C64> {
    let k = config.k as i64;
    (-(k - 1)..k)
        .map(|d| {
            rule.tau
                .iter()
                .zip(&rule.weights)
                .map(|(&tau, &w)| crate::freqops::cis(d as f64 * config.omega0() * tau) * w)
                .sum()
        })
        .collect()
}

/// Averaged transmit-side forms for receive spectrum `h` and noise `n0`.
///
/// With `B(ν) = Ω^{-1/2} A H D(ν)` and `B′(ν) = Ω^{-1/2} A H D′(ν)` the
/// averages factor as `E[Φ_ττ] = N E_ν[BᴴB] ∘ E_τ[φ* φᵀ]` (and likewise for
/// the other pairs) because the prior is a product measure.
pub fn phi_terms(
    h: &SpectrumVector,
    rule: &PriorQuadrature,
    ops: &Operators,
    n0: f64,
    with_cross: bool,
) -> Result<PhiTerms> {
    check_len(h, ops.k())?;
    let omega = folded_noise_power(h, n0, ops);
    check_omega(&omega, ops)?;
    let cfg = &ops.config;
    let (n, k) = (ops.n(), ops.k());
    let nodes = rule.nodes_per_axis();
    let real_h = h.iter().all(|c| c.im == 0.0);
    let row_scale: Vec<f64> = omega.iter().map(|o| 1.0 / o.sqrt()).collect();

    // Stacked √w_ν B(ν) blocks, one N-row band per Doppler node.
    let gram = |a: &[DMatrix<C64>], b: &[DMatrix<C64>]| -> DMatrix<C64> {
        if real_h {
            let ra = stack_real(a);
            let rb = stack_real(b);
            (ra.transpose() * rb).map_to_complex()
        } else {
            let ca = stack(a);
            let cb = stack(b);
            ca.adjoint() * cb
        }
    };
    let mut b0 = Vec::with_capacity(nodes);
    let mut b1 = Vec::with_capacity(nodes);
    for (j, &nu) in rule.nu.iter().enumerate() {
        let dc = doppler_convolution(nu, cfg, true);
        let sw = rule.weights[j].sqrt();
        b0.push(fold_rows(&dc.d, h, &row_scale, sw, ops));
        b1.push(fold_rows(dc.dd.as_ref().expect("requested"), h, &row_scale, sw, ops));
    }
    let g00 = gram(&b0, &b0);
    let g11 = gram(&b1, &b1);
    let g01 = with_cross.then(|| gram(&b0, &b1));

    let moments = delay_moments(rule, cfg);
    let off = k - 1;
    let w0 = cfg.omega0();
    let nf = n as f64;
    let harm: Vec<f64> = (0..k).map(|p| cfg.harmonic(p) as f64).collect();
    let rho = |a: usize, b: usize| moments[a + off - b];
    let tt = DMatrix::from_fn(k, k, |a, b| g00[(a, b)] * rho(a, b) * (harm[a] * harm[b] * w0 * w0 * nf));
    let nn = DMatrix::from_fn(k, k, |a, b| g11[(a, b)] * rho(a, b) * nf);
    let tn = g01.map(|g01| {
        DMatrix::from_fn(k, k, |a, b| {
            g01[(a, b)] * rho(a, b) * C64::new(0.0, harm[a] * w0 * nf)
        })
    });
    Ok(PhiTerms { tt, tn, nn })
}

trait ToComplex {
    fn map_to_complex(self) -> DMatrix<C64>;
}

impl ToComplex for DMatrix<f64> {
    fn map_to_complex(self) -> DMatrix<C64> {
        self.map(|v| C64::new(v, 0.0))
    }
}

/// `s Ω^{-1/2} A H M` as an N×K matrix.
fn fold_rows(
    m: &DMatrix<f64>,
    h: &SpectrumVector,
    row_scale: &[f64],
    s: f64,
    ops: &Operators,
) -> DMatrix<C64> {
    let mut out = DMatrix::from_element(ops.n(), ops.k(), ZERO);
    for (pos, &bin) in ops.bin_of_pos.iter().enumerate() {
        let f = h[pos] * (row_scale[bin] * s);
        if f == ZERO {
            continue;
        }
        for col in 0..ops.k() {
            out[(bin, col)] += f * m[(pos, col)];
        }
    }
    out
}

fn stack(blocks: &[DMatrix<C64>]) -> DMatrix<C64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks[0].ncols();
    let mut out = DMatrix::from_element(rows, cols, ZERO);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

fn stack_real(blocks: &[DMatrix<C64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks[0].ncols();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(&b.map(|c| c.re));
        r += b.nrows();
    }
    out
}

/// `Φ` for weighting `M′` (Hermitian, `gᴴ Φ g = tr(M′ J̄_D)`).
pub fn phi_aggregate(
    h: &SpectrumVector,
    m: &Matrix2<f64>,
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
) -> Result<DMatrix<C64>> {
    let rule = PriorQuadrature::new(prior, nodes);
    let cross = m[(0, 1)] != 0.0 || m[(1, 0)] != 0.0;
    Ok(phi_terms(h, &rule, ops, ops.config.n0, cross)?.combine(m))
}

/// Approximated EFIM `J̄_D` via the transmit-side form.
pub fn efim_approx(
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
    n0: f64,
) -> Result<FimResult> {
    check_len(g, ops.k())?;
    let rule = PriorQuadrature::new(prior, nodes);
    Ok(phi_terms(h, &rule, ops, n0, true)?.efim(g, nodes))
}

/// Per-group receive-side forms `Δ_k`, indexed by bin position; block `k`
/// is ordered like the members of `F_k`.
///
/// The factor `T_s/N_0` of the folded noise power is included so that the
/// Rayleigh sum equals `tr(M′ J̄_D)` exactly.
pub fn delta_terms(
    g: &SpectrumVector,
    m: &Matrix2<f64>,
    rule: &PriorQuadrature,
    ops: &Operators,
    n0: f64,
) -> Result<Vec<DMatrix<C64>>> {
    check_len(g, ops.k())?;
    let cfg = &ops.config;
    let groups: Vec<Vec<usize>> = (0..ops.n())
        .map(|b| ops.partition.member_positions(cfg.grid_index(b)))
        .collect();
    let mut out: Vec<DMatrix<C64>> = groups
        .iter()
        .map(|mem| DMatrix::from_element(mem.len(), mem.len(), ZERO))
        .collect();
    let sym = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let sn = (ops.n() as f64).sqrt();
    for (jn, &nu) in rule.nu.iter().enumerate() {
        let dc = doppler_convolution(nu, cfg, true);
        let dd = dc.dd.as_ref().expect("requested");
        for (jt, &tau) in rule.tau.iter().enumerate() {
            let w = rule.weights[jn] * rule.weights[jt];
            let (t, dt) = delay_diagonal(tau, cfg);
            let xt = real_times(&dc.d, &dt.component_mul(g)) * C64::new(sn, 0.0);
            let xn = real_times(dd, &t.component_mul(g)) * C64::new(sn, 0.0);
            for (mem, acc) in groups.iter().zip(out.iter_mut()) {
                for (a, &pa) in mem.iter().enumerate() {
                    for (b, &pb) in mem.iter().enumerate() {
                        // Σ_ij M′_ji (ξ*_i ξ_jᵀ + ξ*_j ξ_iᵀ)
                        let tt = xt[pa].conj() * xt[pb];
                        let nn = xn[pa].conj() * xn[pb];
                        let mut v = tt * (2.0 * m[(0, 0)]) + nn * (2.0 * m[(1, 1)]);
                        if sym != 0.0 {
                            let tn = xt[pa].conj() * xn[pb] + xn[pa].conj() * xt[pb];
                            v += tn * (2.0 * sym);
                        }
                        acc[(a, b)] += v * w;
                    }
                }
            }
        }
    }
    let scale = cfg.ts() / n0;
    for acc in out.iter_mut() {
        *acc *= C64::new(scale, 0.0);
        let herm = (&*acc + acc.adjoint()) * C64::new(0.5, 0.0);
        *acc = herm;
    }
    Ok(out)
}

pub fn delta_aggregate(
    g: &SpectrumVector,
    m: &Matrix2<f64>,
    prior: &ParameterPrior,
    ops: &Operators,
    nodes: usize,
) -> Result<Vec<DMatrix<C64>>> {
    let rule = PriorQuadrature::new(prior, nodes);
    delta_terms(g, m, &rule, ops, ops.config.n0)
}

/// `Σ_k h_kᴴ Δ_k h_k / h_kᴴ h_k`; groups with `h_k = 0` contribute 0.
pub fn receive_objective(deltas: &[DMatrix<C64>], h: &SpectrumVector, ops: &Operators) -> f64 {
    let mut total = 0.0;
    for (b, delta) in deltas.iter().enumerate() {
        let mem = ops.partition.member_positions(ops.config.grid_index(b));
        let hk = DVector::from_iterator(mem.len(), mem.iter().map(|&p| h[p]));
        let norm = hk.norm_squared();
        if norm > 0.0 {
            total += hk.dotc(&(delta * &hk)).re / norm;
        }
    }
    total
}

/// `gᴴ Φ g`.
pub fn transmit_objective(phi: &DMatrix<C64>, g: &SpectrumVector) -> f64 {
    g.dotc(&(phi * g)).re
}
