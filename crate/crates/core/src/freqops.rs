//! Frequency-domain operators of the periodic delay-Doppler receive model.
//!
//! The sampled, filtered receive signal is
//! `v(θ) = γ √N Δ(ν) Wᴴ A T(τ) (g ∘ h(ν))` where `A` folds the K harmonics
//! onto the N sampled bins, `T(τ)` is the per-harmonic delay phase, `Δ(ν)`
//! the sampled Doppler phase and `h(ν)` the receive response evaluated at
//! Doppler-shifted harmonics.

use std::f64::consts::PI;

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{AliasPartition, SystemConfig};

pub type C64 = Complex<f64>;

/// Length-K vector of Fourier coefficients, stored by harmonic position.
pub type SpectrumVector = DVector<C64>;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    let (s, c) = phase.sin_cos();
    C64::new(c, s)
}

/// Total power `Σ|x_i|²`.
pub fn power(x: &SpectrumVector) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum()
}

pub fn check_len(x: &DVector<C64>, expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            got: x.len(),
        });
    }
    Ok(())
}

/// Real spectrum from a slice.
pub fn real_spectrum(values: &[f64]) -> SpectrumVector {
    DVector::from_iterator(values.len(), values.iter().map(|&v| C64::new(v, 0.0)))
}

/// Shared grid operators for one [`SystemConfig`].
#[derive(Debug, Clone)]
pub struct Operators {
    pub config: SystemConfig,
    pub partition: AliasPartition,
    /// Bin position that each harmonic position folds onto (the sparse form
    /// of `A`).
    pub bin_of_pos: Vec<usize>,
    /// Centered unitary DFT matrix.
    pub w: DMatrix<C64>,
}

impl Operators {
    pub fn new(config: &SystemConfig) -> Self {
        let partition = config.partition();
        let bin_of_pos = (0..config.k)
            .map(|pos| {
                let bin = partition.bin_of(config.harmonic(pos));
                (bin + (config.n / 2) as i64) as usize
            })
            .collect();
        Operators {
            config: config.clone(),
            partition,
            bin_of_pos,
            w: dft_matrix(config.n),
        }
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    /// `A x` without forming `A`.
    pub fn fold(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::from_element(self.n(), ZERO);
        for (pos, &bin) in self.bin_of_pos.iter().enumerate() {
            out[bin] += x[pos];
        }
        out
    }

    /// `Aᵀ y`: every harmonic picks the value of its bin.
    pub fn unfold(&self, y: &DVector<C64>) -> DVector<C64> {
        DVector::from_iterator(self.k(), self.bin_of_pos.iter().map(|&b| y[b]))
    }

    /// Harmonic numbers `m` by position.
    pub fn harmonics(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.k()).map(|p| self.config.harmonic(p))
    }
}

/// Dense `N × K` aliasing matrix.
pub fn aliasing_matrix(config: &SystemConfig) -> DMatrix<f64> {
    let ops = Operators::new(config);
    let mut a = DMatrix::zeros(config.n, config.k);
    for (pos, &bin) in ops.bin_of_pos.iter().enumerate() {
        a[(bin, pos)] = 1.0;
    }
    a
}

/// Centered unitary DFT, `[W]_{ab} = exp(-j2π a b / N) / √N` with `a, b`
/// running over `-N/2 ..= N/2-1`.
pub fn dft_matrix(n: usize) -> DMatrix<C64> {
    let half = (n / 2) as i64;
    let scale = 1.0 / (n as f64).sqrt();
    DMatrix::from_fn(n, n, |i, j| {
        let a = i as i64 - half;
        let b = j as i64 - half;
        let e = (a * b).rem_euclid(n as i64) as f64;
        cis(-2.0 * PI * e / n as f64) * scale
    })
}

/// Diagonal of `T(τ)` and of `∂T/∂τ`.
pub fn delay_diagonal(tau: f64, config: &SystemConfig) -> (DVector<C64>, DVector<C64>) {
    let w0 = config.omega0();
    let t = DVector::from_fn(config.k, |p, _| cis(-(config.harmonic(p) as f64) * w0 * tau));
    let dt = DVector::from_fn(config.k, |p, _| {
        t[p] * C64::new(0.0, -(config.harmonic(p) as f64) * w0)
    });
    (t, dt)
}

/// Dense `T(τ)` and optionally `∂T/∂τ`.
pub fn delay_matrix(
    tau: f64,
    config: &SystemConfig,
    with_derivative: bool,
) -> (DMatrix<C64>, Option<DMatrix<C64>>) {
    let (t, dt) = delay_diagonal(tau, config);
    (
        DMatrix::from_diagonal(&t),
        with_derivative.then(|| DMatrix::from_diagonal(&dt)),
    )
}

/// Doppler operators at one shift.
#[derive(Debug, Clone)]
pub struct DopplerMatrices {
    /// Diagonal of `Δ(ν)`.
    pub delta: DVector<C64>,
    /// `Δ̃(ν) = W Δ(ν) Wᴴ`.
    pub delta_tilde: DMatrix<C64>,
    /// `∂Δ̃/∂ν`.
    pub d_delta_tilde: Option<DMatrix<C64>>,
}

/// `Δ(ν)`, `Δ̃(ν)` and optionally `∂Δ̃/∂ν`.
///
/// `Δ̃` is circulant, `[Δ̃]_{ab} = (1/N) Σ_n exp(j2πn(ν T_s - (a-b)/N))`, so
/// only `2N-1` distinct entries are computed.
pub fn doppler_matrices(nu: f64, config: &SystemConfig, with_derivative: bool) -> DopplerMatrices {
    let n = config.n;
    let half = (n / 2) as i64;
    let ts = config.ts();
    let delta = DVector::from_fn(n, |i, _| cis(2.0 * PI * (i as i64 - half) as f64 * nu * ts));
    let mut c = vec![ZERO; 2 * n - 1];
    let mut dc = vec![ZERO; 2 * n - 1];
    for (idx, d) in (-(n as i64 - 1)..n as i64).enumerate() {
        let mut s = ZERO;
        let mut ds = ZERO;
        for s_idx in 0..n {
            let t = s_idx as i64 - half;
            let e = cis(2.0 * PI * t as f64 * (nu * ts - d as f64 / n as f64));
            s += e;
            ds += e * C64::new(0.0, 2.0 * PI * t as f64 * ts);
        }
        c[idx] = s / n as f64;
        dc[idx] = ds / n as f64;
    }
    let offset = n - 1;
    let delta_tilde = DMatrix::from_fn(n, n, |a, b| c[a + offset - b]);
    let d_delta_tilde =
        with_derivative.then(|| DMatrix::from_fn(n, n, |a, b| dc[a + offset - b]));
    DopplerMatrices {
        delta,
        delta_tilde,
        d_delta_tilde,
    }
}

/// Band-limited continuous receive response built from the K stored
/// harmonic samples.
///
/// `H(ω) = Σ_{|p|<K/2} c_p e^{-jω t_p} + c_{-K/2} cos(ω T_0/2)` with
/// `t_p = p T_0 / K` and `c_p` the inverse length-K DFT of the samples. It
/// reproduces every stored sample, is `Kω_0`-periodic, and is real and even
/// whenever the stored spectrum is (the Nyquist tap is split evenly).
#[derive(Debug, Clone)]
pub struct ReceiveInterpolant {
    k: usize,
    t0: f64,
    omega0: f64,
    /// Taps for `p = -K/2+1 ..= K/2-1`.
    taps: Vec<C64>,
    nyquist_tap: C64,
    /// `exp(-j2π m p / K)` for harmonic row `m` and tap column `p`.
    twiddle: DMatrix<C64>,
}

impl ReceiveInterpolant {
    pub fn new(h: &SpectrumVector, config: &SystemConfig) -> Result<Self> {
        check_len(h, config.k)?;
        let k = config.k;
        let half = (k / 2) as i64;
        let tap = |p: i64| -> C64 {
            let mut s = ZERO;
            for pos in 0..k {
                let m = pos as i64 - half;
                let e = (m * p).rem_euclid(k as i64) as f64;
                s += h[pos] * cis(2.0 * PI * e / k as f64);
            }
            s / k as f64
        };
        let taps: Vec<C64> = (-half + 1..half).map(tap).collect();
        let nyquist_tap = tap(-half);
        let twiddle = DMatrix::from_fn(k, taps.len(), |row, col| {
            let m = row as i64 - half;
            let p = col as i64 - half + 1;
            let e = (m * p).rem_euclid(k as i64) as f64;
            cis(-2.0 * PI * e / k as f64)
        });
        Ok(ReceiveInterpolant {
            k,
            t0: config.t0,
            omega0: config.omega0(),
            taps,
            nyquist_tap,
            twiddle,
        })
    }

    fn tap_time(&self, col: usize) -> f64 {
        (col as i64 - (self.k / 2) as i64 + 1) as f64 * self.t0 / self.k as f64
    }

    /// `H(ω)`.
    pub fn eval(&self, omega: f64) -> C64 {
        let mut s = self.nyquist_tap * (omega * self.t0 / 2.0).cos();
        for (col, &c) in self.taps.iter().enumerate() {
            s += c * cis(-omega * self.tap_time(col));
        }
        s
    }

    /// `dH/dω`.
    pub fn eval_derivative(&self, omega: f64) -> C64 {
        let mut s = -self.nyquist_tap * (self.t0 / 2.0) * (omega * self.t0 / 2.0).sin();
        for (col, &c) in self.taps.iter().enumerate() {
            let t = self.tap_time(col);
            s += c * cis(-omega * t) * C64::new(0.0, -t);
        }
        s
    }

    /// Entries `H(mω_0 + 2πν)` and their ν-derivatives `2π H'(mω_0 + 2πν)`.
    pub fn shifted(&self, nu: f64) -> (SpectrumVector, SpectrumVector) {
        let shift = 2.0 * PI * nu;
        let mut a = DVector::from_element(self.taps.len(), ZERO);
        let mut b = DVector::from_element(self.taps.len(), ZERO);
        for (col, &c) in self.taps.iter().enumerate() {
            let t = self.tap_time(col);
            a[col] = c * cis(-shift * t);
            b[col] = a[col] * C64::new(0.0, -t * 2.0 * PI);
        }
        let mut h = &self.twiddle * a;
        let mut dh = &self.twiddle * b;
        let half_phase = shift * self.t0 / 2.0;
        let (sn, cs) = half_phase.sin_cos();
        for row in 0..self.k {
            let m = row as i64 - (self.k / 2) as i64;
            // cos((mω0 + 2πν) T0/2) = (-1)^m cos(πνT0)
            let sign = if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            h[row] += self.nyquist_tap * (sign * cs);
            dh[row] += self.nyquist_tap * (-sign * sn * PI * self.t0);
        }
        let _ = self.omega0;
        (h, dh)
    }

    /// Taps as `(time, coefficient)` pairs; the Nyquist tap appears twice at
    /// `±T_0/2` with half weight.
    pub fn impulse_taps(&self) -> Vec<(f64, C64)> {
        let mut out: Vec<(f64, C64)> = self
            .taps
            .iter()
            .enumerate()
            .map(|(col, &c)| (self.tap_time(col), c))
            .collect();
        out.push((-self.t0 / 2.0, self.nyquist_tap * 0.5));
        out.push((self.t0 / 2.0, self.nyquist_tap * 0.5));
        out
    }
}

fn check_doppler(nu: f64, config: &SystemConfig) -> Result<()> {
    let limit = config.f0() / 2.0;
    if !nu.is_finite() || nu.abs() >= limit {
        return Err(Error::DopplerOutOfRange { nu, limit });
    }
    Ok(())
}

/// `h(ν)` and `∂h(ν)/∂ν` for a stored receive spectrum.
pub fn shifted_receive_spectrum(
    h: &SpectrumVector,
    nu: f64,
    config: &SystemConfig,
) -> Result<(SpectrumVector, SpectrumVector)> {
    check_doppler(nu, config)?;
    Ok(ReceiveInterpolant::new(h, config)?.shifted(nu))
}

/// Sampled receive signal `v` and its spectrum `ṽ`, with `v = √N Wᴴ ṽ`.
#[derive(Debug, Clone)]
pub struct ReceivedSignal {
    pub v: DVector<C64>,
    pub v_tilde: DVector<C64>,
}

/// Exact sampled receive signal for a transmit/receive filter pair.
pub fn received_signal(
    theta: (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    h: &SpectrumVector,
    ops: &Operators,
) -> Result<ReceivedSignal> {
    check_len(g, ops.k())?;
    let interp = ReceiveInterpolant::new(h, &ops.config)?;
    received_signal_with(theta, gamma, g, &interp, ops)
}

pub fn received_signal_with(
    (tau, nu): (f64, f64),
    gamma: C64,
    g: &SpectrumVector,
    interp: &ReceiveInterpolant,
    ops: &Operators,
) -> Result<ReceivedSignal> {
    check_doppler(nu, &ops.config)?;
    let (hs, _) = interp.shifted(nu);
    let (t, _) = delay_diagonal(tau, &ops.config);
    let x = DVector::from_fn(ops.k(), |p, _| gamma * t[p] * g[p] * hs[p]);
    let folded = ops.fold(&x);
    let dop = doppler_matrices(nu, &ops.config, false);
    let v_tilde = &dop.delta_tilde * &folded;
    let v = ops.w.adjoint() * &v_tilde * C64::new((ops.n() as f64).sqrt(), 0.0);
    Ok(ReceivedSignal { v, v_tilde })
}

/// Construction of the sampled noise covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseModel {
    /// Frequency-sampled autocorrelation; exactly diagonalized by `W`.
    #[default]
    Circulant,
    /// Continuous-frequency autocorrelation of the interpolated response.
    Toeplitz,
}

/// Sampled noise covariance in time and frequency domain.
#[derive(Debug, Clone)]
pub struct NoiseCovariance {
    pub model: NoiseModel,
    /// `R_η`.
    pub r: DMatrix<C64>,
    /// `R̃_η = W R_η Wᴴ`.
    pub r_tilde: DMatrix<C64>,
    /// Diagonal `Ω_η` (per-bin folded noise power).
    pub omega: DVector<f64>,
    chol: Option<Cholesky<C64, Dyn>>,
}

/// `Ω_k = (N_0/T_s) Σ_{m∈F_k} |H_m|²` by bin position.
pub fn folded_noise_power(h: &SpectrumVector, n0: f64, ops: &Operators) -> DVector<f64> {
    let mut omega = DVector::zeros(ops.n());
    for (pos, &bin) in ops.bin_of_pos.iter().enumerate() {
        omega[bin] += h[pos].norm_sqr();
    }
    omega * (n0 / ops.config.ts())
}

pub(crate) fn check_omega(omega: &DVector<f64>, ops: &Operators) -> Result<()> {
    let max = omega.max();
    for (bin, &v) in omega.iter().enumerate() {
        if !(v > 1e-15 * max) || max <= 0.0 {
            return Err(Error::SingularCovariance {
                bin: ops.config.grid_index(bin),
                value: v,
                max,
            });
        }
    }
    Ok(())
}

/// Noise covariance for a receive spectrum and noise density `N_0`.
pub fn noise_covariance(
    h: &SpectrumVector,
    n0: f64,
    ops: &Operators,
    model: NoiseModel,
) -> Result<NoiseCovariance> {
    check_len(h, ops.k())?;
    let omega = folded_noise_power(h, n0, ops);
    check_omega(&omega, ops)?;
    let n = ops.n();
    let cfg = &ops.config;
    let lag_value: Vec<C64> = match model {
        NoiseModel::Circulant => (-(n as i64) + 1..n as i64)
            .map(|m| {
                let mut s = ZERO;
                for pos in 0..ops.k() {
                    let k = cfg.harmonic(pos) as f64;
                    s += cis(k * cfg.omega0() * m as f64 * cfg.ts()) * h[pos].norm_sqr();
                }
                s * (n0 * cfg.f0())
            })
            .collect(),
        NoiseModel::Toeplitz => {
            let taps = ReceiveInterpolant::new(h, cfg)?.impulse_taps();
            let b = cfg.bandwidth();
            (-(n as i64) + 1..n as i64)
                .map(|m| {
                    let lag = m as f64 * cfg.ts();
                    let mut s = ZERO;
                    for &(tp, cp) in &taps {
                        for &(tq, cq) in &taps {
                            s += cp * cq.conj() * sinc(b * (lag - (tp - tq)));
                        }
                    }
                    s * (n0 * b)
                })
                .collect()
        }
    };
    let offset = n - 1;
    let r = DMatrix::from_fn(n, n, |a, c| lag_value[a + offset - c]);
    let r_tilde = &ops.w * &r * ops.w.adjoint();
    let chol = match model {
        NoiseModel::Circulant => None,
        NoiseModel::Toeplitz => {
            let herm = (&r + r.adjoint()) * C64::new(0.5, 0.0);
            Some(Cholesky::new(herm).ok_or(Error::FactorizationFailure(f64::NAN))?)
        }
    };
    Ok(NoiseCovariance {
        model,
        r,
        r_tilde,
        omega,
        chol,
    })
}

impl NoiseCovariance {
    /// `R_η⁻¹ x` for a time-domain vector.
    pub fn solve_time(&self, x: &DVector<C64>, ops: &Operators) -> DVector<C64> {
        match &self.chol {
            Some(ch) => ch.solve(x),
            None => {
                let mut f = &ops.w * x;
                for (v, &o) in f.iter_mut().zip(self.omega.iter()) {
                    *v /= o;
                }
                ops.w.adjoint() * f
            }
        }
    }

    /// `ãᴴ R̃_η⁻¹ b̃` for frequency-domain vectors.
    pub fn inner_freq(&self, a: &DVector<C64>, b: &DVector<C64>, ops: &Operators) -> C64 {
        match &self.chol {
            Some(ch) => {
                let ta = ops.w.adjoint() * a;
                let tb = ops.w.adjoint() * b;
                ta.dotc(&ch.solve(&tb))
            }
            None => a
                .iter()
                .zip(b.iter())
                .zip(self.omega.iter())
                .map(|((x, y), &o)| x.conj() * y / o)
                .sum(),
        }
    }
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - (PI * x).powi(2) / 6.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_config;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(l: u32) -> SystemConfig {
        build_config(25e6, 2e-6, l, 1.0, 1.0).unwrap()
    }

    fn small(n_t0: f64, l: u32) -> SystemConfig {
        build_config(1.0, n_t0, l, 1.0, 1.0).unwrap()
    }

    fn random_spectrum(k: usize, rng: &mut ChaCha8Rng) -> SpectrumVector {
        DVector::from_fn(k, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn aliasing_matrix_shapes() {
        let c0 = cfg(0);
        assert_eq!(aliasing_matrix(&c0), DMatrix::identity(50, 50));
        let a = aliasing_matrix(&cfg(1));
        for i in 0..50 {
            assert_eq!(a.row(i).sum(), 3.0);
        }
        for j in 0..150 {
            assert_eq!(a.column(j).sum(), 1.0);
        }
        let aat = &a * a.transpose();
        assert_eq!(aat, DMatrix::from_diagonal_element(50, 50, 3.0));
    }

    #[test]
    fn dft_is_unitary() {
        for n in [2usize, 8, 50] {
            let w = dft_matrix(n);
            let e = &w * w.adjoint() - DMatrix::identity(n, n);
            assert!(e.norm() < 1e-12);
        }
    }

    #[test]
    fn delay_derivative_matches_difference() {
        let c = cfg(1);
        let tau = 1e-9;
        let h = 1e-12;
        let (_, dt) = delay_diagonal(tau, &c);
        let (tp, _) = delay_diagonal(tau + h, &c);
        let (tm, _) = delay_diagonal(tau - h, &c);
        let fd = (tp - tm) / C64::new(2.0 * h, 0.0);
        assert!((fd - &dt).norm() / dt.norm() < 1e-6);
        let (t0, _) = delay_matrix(0.0, &c, false);
        assert!((t0 - DMatrix::identity(150, 150)).norm() < 1e-15);
    }

    #[test]
    fn doppler_derivative_matches_difference() {
        let c = cfg(1);
        let nu = 5e3;
        let h = 0.1;
        let d = doppler_matrices(nu, &c, true);
        let p = doppler_matrices(nu + h, &c, false).delta_tilde;
        let m = doppler_matrices(nu - h, &c, false).delta_tilde;
        let fd = (p - m) / C64::new(2.0 * h, 0.0);
        let exact = d.d_delta_tilde.unwrap();
        assert!((fd - &exact).norm() / exact.norm() < 1e-6);
        let d0 = doppler_matrices(0.0, &c, false).delta_tilde;
        assert!((d0 - DMatrix::identity(50, 50)).norm() < 1e-12);
        let dt = d.delta_tilde;
        assert!((&dt * dt.adjoint() - DMatrix::identity(50, 50)).norm() < 1e-12);
    }

    #[test]
    fn doppler_tilde_equals_conjugated_diagonal() {
        let c = cfg(0);
        let d = doppler_matrices(1234.5, &c, false);
        let w = dft_matrix(c.n);
        let direct = &w * DMatrix::from_diagonal(&d.delta) * w.adjoint();
        assert!(max_abs(&(direct - d.delta_tilde)) < 1e-12);
    }

    #[test]
    fn group_properties() {
        let c = cfg(1);
        let (a, _) = delay_diagonal(0.37e-9, &c);
        let (b, _) = delay_diagonal(-1.1e-9, &c);
        let (ab, _) = delay_diagonal(0.37e-9 - 1.1e-9, &c);
        assert!((a.component_mul(&b) - ab).norm() < 1e-10);
        let x = doppler_matrices(3e3, &c, false).delta_tilde;
        let y = doppler_matrices(-7.5e3, &c, false).delta_tilde;
        let xy = doppler_matrices(-4.5e3, &c, false).delta_tilde;
        assert!((x * y - xy).norm() < 1e-10);
    }

    #[test]
    fn interpolant_reproduces_samples_and_constants() {
        let c = cfg(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_spectrum(c.k, &mut rng);
        let (hs, _) = shifted_receive_spectrum(&h, 0.0, &c).unwrap();
        assert!((hs - &h).norm() < 1e-12 * h.norm());
        let flat = DVector::from_element(c.k, C64::new(2.5, -1.0));
        for nu in [-2e5, 1e3, 2.4e5] {
            let (hs, dh) = shifted_receive_spectrum(&flat, nu, &c).unwrap();
            assert!((hs - &flat).norm() < 1e-11);
            assert!(dh.norm() < 1e-15);
        }
        assert!(matches!(
            shifted_receive_spectrum(&flat, 2.5e5, &c),
            Err(Error::DopplerOutOfRange { .. })
        ));
    }

    #[test]
    fn interpolant_matches_dirichlet_kernel() {
        // A unit sample at harmonic m interpolates to a periodic Dirichlet
        // kernel centred on mω0.
        let c = small(16.0, 0);
        let k = c.k;
        let m_unit = 3i64;
        let pos = c.harmonic_pos(m_unit).unwrap();
        let mut h = DVector::from_element(k, ZERO);
        h[pos] = C64::new(1.0, 0.0);
        let nu = c.f0() / 4.0;
        let (hs, _) = shifted_receive_spectrum(&h, nu, &c).unwrap();
        for row in 0..k {
            let m = c.harmonic(row);
            let x = (m - m_unit) as f64 + 0.25;
            // Σ_{p} e^{-j2π x p / K} / K over p = -K/2..K/2-1 with the
            // endpoint split evenly between ±K/2.
            let half = (k / 2) as f64;
            let mut s = C64::new((PI * x).cos(), 0.0) / k as f64;
            for p in -(k as i64) / 2 + 1..(k as i64) / 2 {
                s += cis(-2.0 * PI * x * p as f64 / k as f64) / k as f64;
            }
            // closed form: sin(πx)cos(πx/K)/(K sin(πx/K))
            let closed = (PI * x).sin() * (PI * x / k as f64).cos()
                / (k as f64 * (PI * x / k as f64).sin());
            assert!((s.re - closed).abs() < 1e-12 && s.im.abs() < 1e-12, "{half}");
            assert!((hs[row] - C64::new(closed, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn interpolant_derivative_matches_difference() {
        let c = cfg(1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_spectrum(c.k, &mut rng);
        let interp = ReceiveInterpolant::new(&h, &c).unwrap();
        let nu = 3.3e3;
        let step = 0.5;
        let (_, dh) = interp.shifted(nu);
        let (p, _) = interp.shifted(nu + step);
        let (m, _) = interp.shifted(nu - step);
        let fd = (p - m) / C64::new(2.0 * step, 0.0);
        assert!((fd - &dh).norm() / dh.norm() < 1e-7);
        let w = 7.3 * c.omega0();
        let dw = 1e-4 * c.omega0();
        let fdw = (interp.eval(w + dw) - interp.eval(w - dw)) / (2.0 * dw);
        assert!((fdw - interp.eval_derivative(w)).norm() < 1e-6 * interp.eval_derivative(w).norm());
    }

    #[test]
    fn symmetric_real_spectrum_interpolates_real_even() {
        let c = cfg(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut h = DVector::from_element(c.k, ZERO);
        for m in 0..(c.k / 2) as i64 {
            let v = C64::new(rng.random_range(-1.0..1.0), 0.0);
            h[c.harmonic_pos(m).unwrap()] = v;
            h[c.harmonic_pos(-m).unwrap()] = v;
        }
        h[0] = C64::new(0.7, 0.0);
        let interp = ReceiveInterpolant::new(&h, &c).unwrap();
        for w in [0.13, 4.9, 40.2, 74.6] {
            let w = w * c.omega0();
            let a = interp.eval(w);
            let b = interp.eval(-w);
            assert!(a.im.abs() < 1e-12);
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn identity_channel_gives_waveform_samples() {
        let c = cfg(0);
        let ops = Operators::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_spectrum(c.k, &mut rng);
        let h = DVector::from_element(c.k, C64::new(1.0, 0.0));
        let s = received_signal((0.0, 0.0), C64::new(1.0, 0.0), &g, &h, &ops).unwrap();
        for pos in 0..c.n {
            let t = c.sample_time(pos);
            let mut x = ZERO;
            for p in 0..c.k {
                x += g[p] * cis(c.harmonic(p) as f64 * c.omega0() * t);
            }
            assert!((s.v[pos] - x).norm() < 1e-11);
        }
        let zero = received_signal((1e-9, 10.0), ZERO, &g, &h, &ops).unwrap();
        assert_eq!(zero.v.norm(), 0.0);
    }

    #[test]
    fn received_signal_matches_harmonic_sum() {
        let c = cfg(1);
        let ops = Operators::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_spectrum(c.k, &mut rng);
        let h = random_spectrum(c.k, &mut rng);
        let gamma = C64::new(0.3, -1.2);
        let (tau, nu) = (0.7e-9, -4.1e3);
        let interp = ReceiveInterpolant::new(&h, &c).unwrap();
        let s = received_signal((tau, nu), gamma, &g, &h, &ops).unwrap();
        for pos in 0..c.n {
            let t = c.sample_time(pos);
            let mut x = ZERO;
            for p in 0..c.k {
                let w = c.harmonic(p) as f64 * c.omega0();
                x += g[p] * cis(w * (t - tau)) * interp.eval(w + 2.0 * PI * nu);
            }
            x *= gamma * cis(2.0 * PI * nu * t);
            assert!((s.v[pos] - x).norm() < 1e-10 * s.v.norm());
        }
        let ratio = s.v.norm_squared() / s.v_tilde.norm_squared();
        assert!((ratio - c.n as f64).abs() < 1e-9 * c.n as f64);
    }

    #[test]
    fn pure_delay_is_phase_ramp() {
        let c = cfg(1);
        let ops = Operators::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_spectrum(c.k, &mut rng);
        let h = random_spectrum(c.k, &mut rng);
        let one = C64::new(1.0, 0.0);
        let tau = 2.2e-9;
        let s = received_signal((tau, 0.0), one, &g, &h, &ops).unwrap();
        let (t, _) = delay_diagonal(tau, &c);
        let expected = ops.fold(&DVector::from_fn(c.k, |p, _| g[p] * h[p] * t[p]));
        for (a, b) in s.v_tilde.iter().zip(expected.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn circulant_noise_is_diagonalized() {
        let c = cfg(1);
        let ops = Operators::new(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let h = random_spectrum(c.k, &mut rng);
        let n0 = 1e-3;
        let cov = noise_covariance(&h, n0, &ops, NoiseModel::Circulant).unwrap();
        let off = &cov.r_tilde - DMatrix::from_diagonal(&cov.omega.map(|v| C64::new(v, 0.0)));
        assert!(off.norm() < 1e-10 * cov.r_tilde.norm());
        let tr: f64 = cov.r.diagonal().iter().map(|v| v.re).sum();
        let expected = c.n as f64 * n0 * c.f0() * power(&h);
        assert!((tr - expected).abs() < 1e-10 * expected);
        let herm = (&cov.r - cov.r.adjoint()).norm();
        assert!(herm < 1e-12 * cov.r.norm());
        let eig = cov.r.clone().symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * tr);
    }

    #[test]
    fn flat_filter_gives_white_noise() {
        let c = cfg(0);
        let ops = Operators::new(&c);
        let h = DVector::from_element(c.k, C64::new(1.0, 0.0));
        let cov = noise_covariance(&h, 2.0, &ops, NoiseModel::Circulant).unwrap();
        let expected = DMatrix::from_diagonal_element(c.n, c.n, C64::new(2.0 / c.ts(), 0.0));
        assert!((cov.r - &expected).norm() < 1e-12 * expected.norm());
    }

    #[test]
    fn dead_group_is_singular() {
        let c = cfg(1);
        let ops = Operators::new(&c);
        let mut h = DVector::from_element(c.k, C64::new(1.0, 0.0));
        for pos in ops.partition.member_positions(3) {
            h[pos] = ZERO;
        }
        assert!(matches!(
            noise_covariance(&h, 1.0, &ops, NoiseModel::Circulant),
            Err(Error::SingularCovariance { bin: 3, .. })
        ));
    }

    #[test]
    fn toeplitz_matches_circulant_at_zero_wrap() {
        // With all taps concentrated near t = 0 the wrap-around terms vanish
        // and both constructions agree.
        let c = cfg(1);
        let ops = Operators::new(&c);
        let h = DVector::from_element(c.k, C64::new(1.0, 0.0));
        let a = noise_covariance(&h, 1.0, &ops, NoiseModel::Circulant).unwrap();
        let b = noise_covariance(&h, 1.0, &ops, NoiseModel::Toeplitz).unwrap();
        assert!((a.r - &b.r).norm() < 1e-9 * b.r.norm());
        let x = DVector::from_fn(c.n, |i, _| C64::new(i as f64, 1.0));
        let y = b.solve_time(&x, &ops);
        assert!((&b.r * y - x).norm() < 1e-9 * 50.0);
    }
}
