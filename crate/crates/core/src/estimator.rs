//! Joint MAP/ML delay-Doppler estimation, ambiguity functions, correlated
//! noise synthesis and the Monte-Carlo NMSE harness.
//!
//! The path gain is eliminated in closed form, leaving
//! `f_MAP(θ) = |sᴴR⁻¹y|² / (sᴴR⁻¹s) − (τ−μ_τ)²/σ_τ² − (ν−μ_ν)²/σ_ν²`
//! with `s(θ)` the noise-free receive signal at unit gain.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fim_approx::doppler_convolution;
use crate::fim_exact::{bcrlb, efim_with};
use crate::freqops::{
    check_len, delay_diagonal, doppler_matrices, noise_covariance, received_signal_with,
    NoiseCovariance, NoiseModel, Operators, ReceiveInterpolant, SpectrumVector, C64, ZERO,
};
use crate::model::{ParameterPrior, Scenario, SystemConfig};

/// Grid search and Newton refinement settings, in prior standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSettings {
    /// Grid points per axis.
    pub points: usize,
    /// Half-width of the grid in σ.
    pub span: f64,
    pub max_newton: usize,
    /// Stop once an accepted step improves `f_MAP` by less than this
    /// fraction of `|f_MAP|`.
    pub rel_tol: f64,
    /// Finite-difference step in σ.
    pub fd_step: f64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            points: 61,
            span: 4.0,
            max_newton: 20,
            rel_tol: 1e-12,
            fd_step: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub tau: f64,
    pub nu: f64,
    pub gamma: C64,
    pub objective: f64,
    /// False when the grid point was kept.
    pub refined: bool,
}

struct Slice {
    nu: f64,
    x0: SpectrumVector,
    delta_tilde: DMatrix<C64>,
}

struct SearchGrid {
    /// Normalized offsets `(θ−μ)/σ`, shared by both axes.
    u: Vec<f64>,
    slices: Vec<Slice>,
    /// `conj(T(τ_i))` by row.
    phases: DMatrix<C64>,
    /// `sᴴR⁻¹s` by (τ, ν) grid index.
    energy: DMatrix<f64>,
}

/// MAP estimator for one transmit/receive pair and noise level.
pub struct MapEstimator<'a> {
    ops: &'a Operators,
    g: SpectrumVector,
    interp: ReceiveInterpolant,
    noise: NoiseCovariance,
    prior: ParameterPrior,
    settings: SearchSettings,
    grid: SearchGrid,
}

impl<'a> MapEstimator<'a> {
    pub fn new(
        g: &SpectrumVector,
        h: &SpectrumVector,
        prior: &ParameterPrior,
        n0: f64,
        ops: &'a Operators,
        settings: SearchSettings,
    ) -> Result<Self> {
        check_len(g, ops.k())?;
        if settings.points < 2 || !(settings.span > 0.0) {
            return Err(Error::Config("search grid needs at least 2 points and a positive span".into()));
        }
        let interp = ReceiveInterpolant::new(h, &ops.config)?;
        let noise = noise_covariance(h, n0, ops, NoiseModel::Circulant)?;
        let mut est = MapEstimator {
            ops,
            g: g.clone(),
            interp,
            noise,
            prior: *prior,
            settings,
            grid: SearchGrid {
                u: Vec::new(),
                slices: Vec::new(),
                phases: DMatrix::zeros(0, 0),
                energy: DMatrix::zeros(0, 0),
            },
        };
        est.grid = est.build_grid()?;
        Ok(est)
    }

    pub fn noise(&self) -> &NoiseCovariance {
        &self.noise
    }

    pub fn prior(&self) -> &ParameterPrior {
        &self.prior
    }

    fn theta(&self, u: Vector2<f64>) -> (f64, f64) {
        let p = &self.prior;
        (p.mu_tau + u[0] * p.sigma_tau, p.mu_nu + u[1] * p.sigma_nu)
    }

    fn build_grid(&self) -> Result<SearchGrid> {
        let s = &self.settings;
        let u: Vec<f64> = (0..s.points)
            .map(|i| -s.span + 2.0 * s.span * i as f64 / (s.points - 1) as f64)
            .collect();
        let slices = u
            .iter()
            .map(|&un| self.slice(self.prior.mu_nu + un * self.prior.sigma_nu))
            .collect::<Result<Vec<_>>>()?;
        let k = self.ops.k();
        let mut phases = DMatrix::from_element(u.len(), k, ZERO);
        for (i, &ut) in u.iter().enumerate() {
            let (t, _) = delay_diagonal(self.prior.mu_tau + ut * self.prior.sigma_tau, &self.ops.config);
            for p in 0..k {
                phases[(i, p)] = t[p].conj();
            }
        }
        let mut energy = DMatrix::zeros(u.len(), u.len());
        for (j, sl) in slices.iter().enumerate() {
            for i in 0..u.len() {
                let tau = self.prior.mu_tau + u[i] * self.prior.sigma_tau;
                energy[(i, j)] = self.energy(&self.spectrum(sl, tau));
            }
        }
        Ok(SearchGrid {
            u,
            slices,
            phases,
            energy,
        })
    }

    fn slice(&self, nu: f64) -> Result<Slice> {
        let limit = self.ops.config.f0() / 2.0;
        if !nu.is_finite() || nu.abs() >= limit {
            return Err(Error::DopplerOutOfRange { nu, limit });
        }
        let (hs, _) = self.interp.shifted(nu);
        Ok(Slice {
            nu,
            x0: self.g.component_mul(&hs),
            delta_tilde: doppler_matrices(nu, &self.ops.config, false).delta_tilde,
        })
    }

    /// `ṽ(θ)` at unit gain.
    fn spectrum(&self, sl: &Slice, tau: f64) -> DVector<C64> {
        let (t, _) = delay_diagonal(tau, &self.ops.config);
        &sl.delta_tilde * self.ops.fold(&t.component_mul(&sl.x0))
    }

    /// `sᴴR⁻¹s` from `ṽ`.
    fn energy(&self, v_tilde: &DVector<C64>) -> f64 {
        self.ops.n() as f64 * self.noise.inner_freq(v_tilde, v_tilde, self.ops).re
    }

    /// `W R⁻¹ y`, so that `sᴴR⁻¹y = √N ṽᴴ (W R⁻¹ y)`.
    fn whiten(&self, y: &DVector<C64>) -> Result<DVector<C64>> {
        check_len(y, self.ops.n())?;
        Ok(&self.ops.w * self.noise.solve_time(y, self.ops))
    }

    fn correlate(&self, v_tilde: &DVector<C64>, q: &DVector<C64>) -> C64 {
        v_tilde.dotc(q) * (self.ops.n() as f64).sqrt()
    }

    /// Noise-free sampled signal `s(θ)` at unit gain.
    pub fn signal(&self, theta: (f64, f64)) -> Result<DVector<C64>> {
        Ok(received_signal_with(theta, C64::new(1.0, 0.0), &self.g, &self.interp, self.ops)?.v)
    }

    /// Closed-form gain estimate `γ̂ = sᴴR⁻¹y / sᴴR⁻¹s`.
    pub fn gamma_hat(&self, y: &DVector<C64>, theta: (f64, f64)) -> Result<C64> {
        let q = self.whiten(y)?;
        let v = self.spectrum(&self.slice(theta.1)?, theta.0);
        let e = self.energy(&v);
        if !(e > 0.0) || e < 1e-15 * y.norm_squared() {
            return Err(Error::ZeroSignal);
        }
        Ok(self.correlate(&v, &q) / e)
    }

    /// `|sᴴR⁻¹y|² / sᴴR⁻¹s`.
    pub fn data_term(&self, y: &DVector<C64>, theta: (f64, f64)) -> Result<f64> {
        let q = self.whiten(y)?;
        let v = self.spectrum(&self.slice(theta.1)?, theta.0);
        Ok(self.data_from(&v, &q))
    }

    fn data_from(&self, v: &DVector<C64>, q: &DVector<C64>) -> f64 {
        let e = self.energy(v);
        if e > 0.0 {
            self.correlate(v, q).norm_sqr() / e
        } else {
            0.0
        }
    }

    pub fn penalty(&self, (tau, nu): (f64, f64)) -> f64 {
        let p = &self.prior;
        ((tau - p.mu_tau) / p.sigma_tau).powi(2) + ((nu - p.mu_nu) / p.sigma_nu).powi(2)
    }

    /// `f_MAP(θ)`.
    pub fn objective(&self, y: &DVector<C64>, theta: (f64, f64)) -> Result<f64> {
        Ok(self.data_term(y, theta)? - self.penalty(theta))
    }

    fn objective_at(&self, q: &DVector<C64>, sl: &Slice, u: Vector2<f64>) -> f64 {
        let theta = self.theta(u);
        self.data_from(&self.spectrum(sl, theta.0), q) - u.norm_squared()
    }

    /// `f_MAP` on the search grid, rows by τ and columns by ν.
    fn grid_objective(&self, q: &DVector<C64>) -> DMatrix<f64> {
        let m = self.grid.u.len();
        let sqrt_n = (self.ops.n() as f64).sqrt();
        let mut f = DMatrix::zeros(m, m);
        for (j, sl) in self.grid.slices.iter().enumerate() {
            let back = self.ops.unfold(&sl.delta_tilde.ad_mul(q));
            let c = DVector::from_fn(self.ops.k(), |p, _| sl.x0[p].conj() * back[p]);
            let corr = &self.grid.phases * c;
            for i in 0..m {
                let e = self.grid.energy[(i, j)];
                let data = if e > 0.0 {
                    (corr[i] * sqrt_n).norm_sqr() / e
                } else {
                    0.0
                };
                f[(i, j)] = data - self.grid.u[i].powi(2) - self.grid.u[j].powi(2);
            }
        }
        f
    }

    /// Grid argmax of `f_MAP` followed by Newton refinement with
    /// finite-difference derivatives; the grid point is kept when no step
    /// improves the objective.
    pub fn estimate(&self, y: &DVector<C64>) -> Result<Estimate> {
        let q = self.whiten(y)?;
        let f = self.grid_objective(&q);
        let (mut bi, mut bj) = (0, 0);
        for j in 0..f.ncols() {
            for i in 0..f.nrows() {
                if f[(i, j)] > f[(bi, bj)] {
                    bi = i;
                    bj = j;
                }
            }
        }
        let mut u = Vector2::new(self.grid.u[bi], self.grid.u[bj]);
        let mut best = f[(bi, bj)];
        let mut refined = false;
        let s = &self.settings;
        let bound = s.span + 2.0 * s.span / (s.points - 1) as f64;
        let d = s.fd_step;
        let inside = |v: &Vector2<f64>| v[0].abs() <= bound && v[1].abs() <= bound;
        for _ in 0..s.max_newton {
            let nu_of = |un: f64| self.prior.mu_nu + un * self.prior.sigma_nu;
            let (Ok(sm), Ok(s0), Ok(sp)) = (
                self.slice(nu_of(u[1] - d)),
                self.slice(nu_of(u[1])),
                self.slice(nu_of(u[1] + d)),
            ) else {
                break;
            };
            let at = |sl: &Slice, dt: f64, dn: f64| self.objective_at(&q, sl, u + Vector2::new(dt, dn));
            let f00 = at(&s0, 0.0, 0.0);
            let (fp0, fm0) = (at(&s0, d, 0.0), at(&s0, -d, 0.0));
            let (f0p, f0m) = (at(&sp, 0.0, d), at(&sm, 0.0, -d));
            let (fpp, fmp) = (at(&sp, d, d), at(&sp, -d, d));
            let (fpm, fmm) = (at(&sm, d, -d), at(&sm, -d, -d));
            let grad = Vector2::new((fp0 - fm0) / (2.0 * d), (f0p - f0m) / (2.0 * d));
            let htt = (fp0 - 2.0 * f00 + fm0) / (d * d);
            let hnn = (f0p - 2.0 * f00 + f0m) / (d * d);
            let htn = (fpp - fmp - fpm + fmm) / (4.0 * d * d);
            let hess = Matrix2::new(htt, htn, htn, hnn);
            // Newton only towards a maximum.
            if !(htt < 0.0 && hess.determinant() > 0.0) {
                break;
            }
            let Some(inv) = hess.try_inverse() else { break };
            let mut step = -(inv * grad);
            let mut accepted = None;
            for _ in 0..10 {
                let cand = u + step;
                if inside(&cand) {
                    if let Ok(sl) = self.slice(nu_of(cand[1])) {
                        let fc = self.objective_at(&q, &sl, cand);
                        if fc > best {
                            accepted = Some((cand, fc));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = accepted else { break };
            let gain = fc - best;
            u = cand;
            best = fc;
            refined = true;
            if gain <= s.rel_tol * best.abs() {
                break;
            }
        }
        let theta = self.theta(u);
        let v = self.spectrum(&self.slice(theta.1)?, theta.0);
        let e = self.energy(&v);
        let gamma = if e > 0.0 { self.correlate(&v, &q) / e } else { ZERO };
        Ok(Estimate {
            tau: theta.0,
            nu: theta.1,
            gamma,
            objective: best,
            refined,
        })
    }

    fn surface(&self, y: &DVector<C64>, tau_grid: &[f64], nu_grid: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.whiten(y)?;
        let mut f = DMatrix::zeros(tau_grid.len(), nu_grid.len());
        for (j, &nu) in nu_grid.iter().enumerate() {
            let sl = self.slice(nu)?;
            for (i, &tau) in tau_grid.iter().enumerate() {
                let v = self.spectrum(&sl, tau);
                f[(i, j)] = self.data_from(&v, &q) - self.penalty((tau, sl.nu));
            }
        }
        Ok(f)
    }
}

/// `γ̂` at `θ` with the configured noise density.
pub fn gamma_hat(
    y: &DVector<C64>,
    theta: (f64, f64),
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    ops: &Operators,
) -> Result<C64> {
    MapEstimator::new(g, h, prior, ops.config.n0, ops, SearchSettings::default())?.gamma_hat(y, theta)
}

/// `f_MAP(θ)` with the configured noise density.
pub fn map_objective(
    y: &DVector<C64>,
    theta: (f64, f64),
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    ops: &Operators,
) -> Result<f64> {
    MapEstimator::new(g, h, prior, ops.config.n0, ops, SearchSettings::default())?.objective(y, theta)
}

/// Factor `F` with `F Fᴴ = R_η`.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    /// `F = Wᴴ diag(√Ω)`.
    Circulant { sqrt_omega: DVector<f64>, w_adj: DMatrix<C64> },
    Dense { factor: DMatrix<C64> },
}

impl NoiseSampler {
    pub fn circulant(omega: &DVector<f64>, ops: &Operators) -> Result<Self> {
        check_len(&omega.map(|v| C64::new(v, 0.0)), ops.n())?;
        let trace = omega.sum();
        let min = omega.min();
        if min < -1e-9 * trace.abs() {
            return Err(Error::FactorizationFailure(min));
        }
        Ok(NoiseSampler::Circulant {
            sqrt_omega: omega.map(|v| v.max(0.0).sqrt()),
            w_adj: ops.w.adjoint(),
        })
    }

    /// Eigenvalue square root of a Hermitian PSD matrix.
    pub fn dense(r: &DMatrix<C64>) -> Result<Self> {
        let herm = (r + r.adjoint()) * C64::new(0.5, 0.0);
        let trace = herm.trace().re;
        let eig = herm.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -1e-9 * trace.abs() {
            return Err(Error::FactorizationFailure(min));
        }
        let mut factor = eig.eigenvectors;
        for (mut col, &l) in factor.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= C64::new(l.max(0.0).sqrt(), 0.0);
        }
        Ok(NoiseSampler::Dense { factor })
    }

    pub fn for_covariance(noise: &NoiseCovariance, ops: &Operators) -> Result<Self> {
        match noise.model {
            NoiseModel::Circulant => Self::circulant(&noise.omega, ops),
            NoiseModel::Toeplitz => Self::dense(&noise.r),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            NoiseSampler::Circulant { sqrt_omega, .. } => sqrt_omega.len(),
            NoiseSampler::Dense { factor } => factor.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One draw `η = F z`, `z` circular standard complex Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<C64> {
        let n = self.len();
        let z = DVector::from_fn(n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        });
        match self {
            NoiseSampler::Circulant { sqrt_omega, w_adj } => {
                w_adj * DVector::from_fn(n, |i, _| z[i] * sqrt_omega[i])
            }
            NoiseSampler::Dense { factor } => factor * z,
        }
    }
}

/// Single draw from `CN(0, R_η)`.
pub fn sample_noise<R: Rng + ?Sized>(
    noise: &NoiseCovariance,
    ops: &Operators,
    rng: &mut R,
) -> Result<DVector<C64>> {
    Ok(NoiseSampler::for_covariance(noise, ops)?.sample(rng))
}

/// Empirical NMSE and normalized BCRLB per pSNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// dB-Hz.
    pub psnr_grid: Vec<f64>,
    pub nmse_tau: Vec<f64>,
    pub nmse_nu: Vec<f64>,
    pub bcrlb_tau: Vec<f64>,
    pub bcrlb_nu: Vec<f64>,
    /// `E|γ̂ − 1|²`.
    pub gamma_mse: Vec<f64>,
    pub failures: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Tau,
    Nu,
}

impl McReport {
    /// First pSNR where the NMSE drops to `level` or below.
    pub fn knee(&self, axis: Axis, level: f64) -> Option<f64> {
        let nmse = match axis {
            Axis::Tau => &self.nmse_tau,
            Axis::Nu => &self.nmse_nu,
        };
        self.psnr_grid
            .iter()
            .zip(nmse)
            .find(|(_, &v)| v <= level)
            .map(|(&p, _)| p)
    }
}

/// `min, min+step, …, max` (inclusive, tolerant to rounding).
pub fn psnr_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(max >= min) || !min.is_finite() || !max.is_finite() {
        return Err(Error::Config(format!("invalid pSNR grid {min}..{max} step {step}")));
    }
    let n = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| min + i as f64 * step).collect())
}

const STRATA_STREAM: u64 = u64::MAX;

fn trial_rng(seed: u64, psnr_idx: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((psnr_idx as u64) << 32) | trial as u64);
    rng
}

/// Latin-hypercube strata per axis for one pSNR point.
fn strata(seed: u64, psnr_idx: usize, trials: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (psnr_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(STRATA_STREAM);
    let mut a: Vec<usize> = (0..trials).collect();
    let mut b = a.clone();
    a.shuffle(&mut rng);
    b.shuffle(&mut rng);
    (a, b)
}

struct TrialOutcome {
    err_tau: f64,
    err_nu: f64,
    err_gamma: f64,
}

/// NMSE of the MAP estimator against the normalized BCRLB over a pSNR grid.
///
/// `θ` is drawn from the prior by Latin-hypercube sampling, `γ = 1`, and
/// every trial owns a random stream keyed by `(seed, pSNR index, trial)`.
pub fn monte_carlo(
    g: &SpectrumVector,
    h: &SpectrumVector,
    scenario: &Scenario,
    ops: &Operators,
    psnr: &[f64],
    trials: usize,
    seed: u64,
) -> Result<McReport> {
    if trials < 100 {
        return Err(Error::Config(format!("at least 100 trials required (got {trials})")));
    }
    let prior = scenario.prior;
    let pt = scenario.system.pt;
    let j_unit = efim_with(g, h, &prior, ops, scenario.ghq_nodes, 1.0, NoiseModel::Circulant)?.j;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut report = McReport {
        psnr_grid: psnr.to_vec(),
        nmse_tau: Vec::new(),
        nmse_nu: Vec::new(),
        bcrlb_tau: Vec::new(),
        bcrlb_nu: Vec::new(),
        gamma_mse: Vec::new(),
        failures: Vec::new(),
        trials,
        seed,
    };
    for (ip, &p) in psnr.iter().enumerate() {
        let n0 = pt / 10f64.powf(p / 10.0);
        let (_, bound) = bcrlb(&(j_unit / n0), &prior);
        report.bcrlb_tau.push(bound[(0, 0)] / prior.sigma_tau.powi(2));
        report.bcrlb_nu.push(bound[(1, 1)] / prior.sigma_nu.powi(2));

        let est = MapEstimator::new(g, h, &prior, n0, ops, SearchSettings::default())?;
        let sampler = NoiseSampler::for_covariance(est.noise(), ops)?;
        let (st, sn) = strata(seed, ip, trials);
        let outcomes: Vec<Option<TrialOutcome>> = (0..trials)
            .into_par_iter()
            .map(|it| {
                let mut rng = trial_rng(seed, ip, it);
                let ut = (st[it] as f64 + rng.random::<f64>()) / trials as f64;
                let un = (sn[it] as f64 + rng.random::<f64>()) / trials as f64;
                let tau = prior.mu_tau + prior.sigma_tau * std_normal.inverse_cdf(ut);
                let nu = prior.mu_nu + prior.sigma_nu * std_normal.inverse_cdf(un);
                let s = est.signal((tau, nu)).ok()?;
                let y = s + sampler.sample(&mut rng);
                let e = est.estimate(&y).ok()?;
                Some(TrialOutcome {
                    err_tau: (e.tau - tau) / prior.sigma_tau,
                    err_nu: (e.nu - nu) / prior.sigma_nu,
                    err_gamma: (e.gamma - C64::new(1.0, 0.0)).norm_sqr(),
                })
            })
            .collect();
        let ok: Vec<&TrialOutcome> = outcomes.iter().flatten().collect();
        let count = ok.len().max(1) as f64;
        report.nmse_tau.push(ok.iter().map(|o| o.err_tau.powi(2)).sum::<f64>() / count);
        report.nmse_nu.push(ok.iter().map(|o| o.err_nu.powi(2)).sum::<f64>() / count);
        report.gamma_mse.push(ok.iter().map(|o| o.err_gamma).sum::<f64>() / count);
        report.failures.push(trials - ok.len());
        log::info!(
            "pSNR {p} dB-Hz: nmse=({:.4e}, {:.4e}) bound=({:.4e}, {:.4e})",
            report.nmse_tau[ip],
            report.nmse_nu[ip],
            report.bcrlb_tau[ip],
            report.bcrlb_nu[ip]
        );
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityKind {
    Classic,
    Map,
}

/// Ambiguity values on a (τ, ν) grid, normalized to a unit peak.
///
/// Raw values are `values * scale + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub kind: AmbiguityKind,
    pub tau_grid: Vec<f64>,
    pub nu_grid: Vec<f64>,
    /// Rows by τ, columns by ν.
    pub values: DMatrix<f64>,
    pub offset: f64,
    pub scale: f64,
}

impl AmbiguitySurface {
    /// Width of the contiguous region around the grid point nearest the
    /// origin where the value stays at or above 1/2, with linear
    /// interpolation at the crossings.
    pub fn half_power_width(&self, axis: Axis) -> Option<f64> {
        let nearest = |grid: &[f64]| {
            grid.iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
        };
        let (ti, ni) = (nearest(&self.tau_grid)?, nearest(&self.nu_grid)?);
        let (grid, line): (&[f64], Vec<f64>) = match axis {
            Axis::Tau => (&self.tau_grid, self.values.column(ni).iter().copied().collect()),
            Axis::Nu => (&self.nu_grid, self.values.row(ti).iter().copied().collect()),
        };
        let c = match axis {
            Axis::Tau => ti,
            Axis::Nu => ni,
        };
        if line[c] < 0.5 {
            return None;
        }
        let cross = |a: usize, b: usize| {
            let t = (line[a] - 0.5) / (line[a] - line[b]);
            grid[a] + t * (grid[b] - grid[a])
        };
        let mut hi = c;
        while hi + 1 < line.len() && line[hi + 1] >= 0.5 {
            hi += 1;
        }
        let right = if hi + 1 < line.len() { cross(hi, hi + 1) } else { return None };
        let mut lo = c;
        while lo > 0 && line[lo - 1] >= 0.5 {
            lo -= 1;
        }
        let left = if lo > 0 { cross(lo, lo - 1) } else { return None };
        Some(right - left)
    }

    /// `(τ, ν, value)` in τ-major order.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.tau_grid.iter().enumerate().flat_map(move |(i, &t)| {
            self.nu_grid
                .iter()
                .enumerate()
                .map(move |(j, &n)| (t, n, self.values[(i, j)]))
        })
    }
}

/// `points` values evenly spread over `[-half_width, half_width]`.
pub fn centered_grid(half_width: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -half_width + 2.0 * half_width * i as f64 / (points - 1) as f64)
        .collect()
}

/// Periodic ambiguity `|Σ_m conj(G_m) [D(ν) T(τ) G]_m|²`, normalized by
/// its zero-lag value.
pub fn classic_ambiguity(
    g: &SpectrumVector,
    tau_grid: &[f64],
    nu_grid: &[f64],
    config: &SystemConfig,
) -> Result<AmbiguitySurface> {
    check_len(g, config.k)?;
    let peak = g.norm_squared().powi(2);
    if !(peak > 0.0) {
        return Err(Error::ZeroSignal);
    }
    let delays: Vec<DVector<C64>> = tau_grid.iter().map(|&t| delay_diagonal(t, config).0).collect();
    let mut values = DMatrix::zeros(tau_grid.len(), nu_grid.len());
    for (j, &nu) in nu_grid.iter().enumerate() {
        let d = doppler_convolution(nu, config, false).d;
        for (i, t) in delays.iter().enumerate() {
            let x = t.component_mul(g);
            let re = &d * x.map(|c| c.re);
            let im = &d * x.map(|c| c.im);
            let c: C64 = (0..config.k).map(|p| g[p].conj() * C64::new(re[p], im[p])).sum();
            values[(i, j)] = c.norm_sqr() / peak;
        }
    }
    Ok(AmbiguitySurface {
        kind: AmbiguityKind::Classic,
        tau_grid: tau_grid.to_vec(),
        nu_grid: nu_grid.to_vec(),
        values,
        offset: 0.0,
        scale: peak,
    })
}

/// `f_MAP` for the noise-free input `y = s(0)`, affinely mapped so the grid
/// minimum is 0 and the peak (grid or origin) is 1.
pub fn map_ambiguity(
    g: &SpectrumVector,
    h: &SpectrumVector,
    prior: &ParameterPrior,
    n0: f64,
    ops: &Operators,
    tau_grid: &[f64],
    nu_grid: &[f64],
) -> Result<AmbiguitySurface> {
    let settings = SearchSettings {
        points: 2,
        ..SearchSettings::default()
    };
    let est = MapEstimator::new(g, h, prior, n0, ops, settings)?;
    let y = est.signal((0.0, 0.0))?;
    let raw = est.surface(&y, tau_grid, nu_grid)?;
    let peak = raw.max().max(est.objective(&y, (0.0, 0.0))?);
    let offset = raw.min();
    let scale = if peak > offset { peak - offset } else { 1.0 };
    Ok(AmbiguitySurface {
        kind: AmbiguityKind::Map,
        tau_grid: tau_grid.to_vec(),
        nu_grid: nu_grid.to_vec(),
        values: raw.map(|v| (v - offset) / scale),
        offset,
        scale,
    })
}

pub fn ambiguity_surface(
    kind: AmbiguityKind,
    g: &SpectrumVector,
    h: &SpectrumVector,
    scenario: &Scenario,
    ops: &Operators,
    tau_grid: &[f64],
    nu_grid: &[f64],
) -> Result<AmbiguitySurface> {
    match kind {
        AmbiguityKind::Classic => classic_ambiguity(g, tau_grid, nu_grid, &scenario.system),
        AmbiguityKind::Map => map_ambiguity(
            g,
            h,
            &scenario.prior,
            scenario.system.n0,
            ops,
            tau_grid,
            nu_grid,
        ),
    }
}
