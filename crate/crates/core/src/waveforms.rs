//! Reference transmit spectra (rectangular phase code, LFM chirp), the
//! reference low-pass receive filter, and a few shape metrics.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::freqops::{cis, power, SpectrumVector, C64, ZERO};
use crate::model::SystemConfig;

/// Reference waveform selector.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceSpec {
    /// Band-limited rectangular phase code with chips of width `2 T_s`.
    Rpc { code: Vec<f64> },
    /// Chirp of duration `duration` and slope `slope` (rad/s²).
    Lfm { duration: f64, slope: f64 },
    /// Ideal low-pass receive filter of two-sided bandwidth `b_ref`.
    Lowpass { b_ref: f64 },
}

impl ReferenceSpec {
    pub fn generate(&self, config: &SystemConfig) -> Result<SpectrumVector> {
        match self {
            ReferenceSpec::Rpc { code } => rpc_waveform(config, code),
            ReferenceSpec::Lfm { duration, slope } => lfm_waveform(config, *duration, *slope),
            ReferenceSpec::Lowpass { b_ref } => reference_lowpass(config, *b_ref),
        }
    }
}

/// Pseudo-random ±1 code of `N/2` chips.
pub fn default_code(config: &SystemConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..config.n / 2)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect()
}

fn normalize(mut g: SpectrumVector, pt: f64) -> Result<SpectrumVector> {
    let p = power(&g);
    if !(p > 0.0) {
        return Err(Error::ZeroSignal);
    }
    g *= C64::new((pt / p).sqrt(), 0.0);
    Ok(g)
}

/// Rectangular phase code spectrum, power-normalized to `P_T`.
pub fn rpc_waveform(config: &SystemConfig, code: &[f64]) -> Result<SpectrumVector> {
    let m = config.n / 2;
    if code.len() != m {
        return Err(Error::CodeLengthMismatch {
            expected: m,
            got: code.len(),
        });
    }
    let t = 2.0 * config.ts();
    let edge = PI * config.fs;
    let g = DVector::from_fn(config.k, |p, _| {
        let w = config.harmonic(p) as f64 * config.omega0();
        // half-open passband [-π f_s, π f_s)
        if w < -edge * (1.0 + 1e-12) || w >= edge * (1.0 - 1e-12) {
            return ZERO;
        }
        // ωT/2 = 2πk/N, so the pulse nulls fall exactly on harmonics with 2k ≡ 0 mod N
        let k = config.harmonic(p);
        let pulse = if k == 0 {
            t
        } else if (2 * k).rem_euclid(config.n as i64) == 0 {
            0.0
        } else {
            2.0 * (w * t / 2.0).sin() / w
        };
        let chips: C64 = code
            .iter()
            .enumerate()
            .map(|(i, &b)| cis(-w * i as f64 * t) * b)
            .sum();
        chips * pulse / config.t0
    });
    normalize(g, config.pt)
}

/// Default chirp: `T = T_0`, two-sided sweep `2 f_s / 3`.
pub fn lfm_default(config: &SystemConfig) -> ReferenceSpec {
    ReferenceSpec::Lfm {
        duration: config.t0,
        slope: 4.0 * PI * config.n as f64 / (3.0 * config.t0 * config.t0),
    }
}

/// Fourier coefficient `(1/T_0) ∫_{-T/2}^{T/2} e^{jμt²/2} e^{-jωt} dt` of a
/// chirp, via Fresnel integrals.
pub fn lfm_coefficient(omega: f64, duration: f64, slope: f64, t0: f64) -> C64 {
    if slope.abs() < 1e-300 {
        let x = omega * duration / 2.0;
        let s = if x == 0.0 { 1.0 } else { x.sin() / x };
        return C64::new(duration * s / t0, 0.0);
    }
    if omega.abs() > 10.0 * slope.abs() * duration {
        // stationary point far outside the pulse: the Fresnel difference cancels badly
        let half = duration / 2.0;
        let v = gauss_kronrod(|t| cis(slope * t * t / 2.0 - omega * t), -half, half, 1e-14 * duration);
        return v / t0;
    }
    let (mu, flip) = if slope > 0.0 { (slope, false) } else { (-slope, true) };
    // e^{-jμt²/2} is the conjugate chirp at -ω
    let w = if flip { -omega } else { omega };
    let scale = (mu / PI).sqrt();
    let c = w / mu;
    let u1 = scale * (-duration / 2.0 - c);
    let u2 = scale * (duration / 2.0 - c);
    let val = cis(-w * w / (2.0 * mu)) * (fresnel(u2) - fresnel(u1)) * (PI / mu).sqrt() / t0;
    if flip {
        val.conj()
    } else {
        val
    }
}

/// LFM spectrum on the harmonic grid, power-normalized to `P_T`.
pub fn lfm_waveform(config: &SystemConfig, duration: f64, slope: f64) -> Result<SpectrumVector> {
    if !(duration > 0.0) || duration > config.t0 * (1.0 + 1e-12) {
        return Err(Error::NonPositiveInput {
            name: "duration",
            value: duration,
        });
    }
    let g = DVector::from_fn(config.k, |p, _| {
        lfm_coefficient(config.harmonic(p) as f64 * config.omega0(), duration, slope, config.t0)
    });
    normalize(g, config.pt)
}

/// Ideal low-pass: `H_k = 1` for `-B_ref/2 ≤ k f_0 < B_ref/2`.
pub fn reference_lowpass(config: &SystemConfig, b_ref: f64) -> Result<SpectrumVector> {
    let b_max = config.bandwidth();
    if !(b_ref > 0.0) || b_ref > b_max * (1.0 + 1e-12) {
        return Err(Error::BandwidthOutOfRange { b_ref, b_max });
    }
    let half = b_ref * config.t0 / 2.0;
    Ok(DVector::from_fn(config.k, |p, _| {
        let k = config.harmonic(p) as f64;
        if k >= -half - 1e-9 && k < half - 1e-9 {
            C64::new(1.0, 0.0)
        } else {
            ZERO
        }
    }))
}

/// `Z(u) = ∫_0^u e^{jπa²/2} da`.
pub fn fresnel(u: f64) -> C64 {
    let a = u.abs();
    let z = if a <= 2.0 {
        fresnel_series(a)
    } else if a <= 6.0 {
        fresnel_series(2.0) + gauss_kronrod(|x| cis(FRAC_PI_2 * x * x), 2.0, a, 1e-13)
    } else {
        fresnel_asymptotic(a)
    };
    if u < 0.0 {
        -z
    } else {
        z
    }
}

fn fresnel_series(u: f64) -> C64 {
    // Σ_n (jπ/2)^n u^{2n+1} / (n! (2n+1))
    let x = FRAC_PI_2 * u * u;
    let mut term = C64::new(u, 0.0);
    let mut sum = term;
    for n in 1..200 {
        term *= C64::new(0.0, x / n as f64);
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

fn fresnel_asymptotic(u: f64) -> C64 {
    let x = FRAC_PI_2 * u * u;
    let y = PI * u * u;
    let inv = 1.0 / (y * y);
    // f ~ (1/πu) Σ (-1)^n (4n-1)!! / y^{2n},  g ~ (1/πu y) Σ (-1)^n (4n+1)!! / y^{2n}
    let (mut f, mut g) = (0.0, 0.0);
    let (mut tf, mut tg) = (1.0, 1.0);
    for n in 0..30 {
        if n > 0 {
            let a = (4 * n - 3) as f64 * (4 * n - 1) as f64;
            let b = (4 * n - 1) as f64 * (4 * n + 1) as f64;
            let ntf = -tf * a * inv;
            let ntg = -tg * b * inv;
            if ntf.abs() > tf.abs() {
                break;
            }
            tf = ntf;
            tg = ntg;
        }
        f += tf;
        g += tg;
        if tf.abs() < 1e-18 {
            break;
        }
    }
    let f = f / (PI * u);
    let g = g / (PI * u * y);
    let (s, c) = x.sin_cos();
    C64::new(0.5 + f * s - g * c, 0.5 - f * c - g * s)
}

const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const G_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> C64>(f: &F, a: f64, b: f64) -> (C64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = ZERO;
    let mut gauss = ZERO;
    for (i, (&x, &w)) in GK_NODES.iter().zip(&GK_WEIGHTS).enumerate() {
        if x == 0.0 {
            let v = f(c);
            kron += v * w;
            gauss += v * G_WEIGHTS[3];
        } else {
            let v = f(c - h * x) + f(c + h * x);
            kron += v * w;
            if i % 2 == 1 {
                gauss += v * G_WEIGHTS[i / 2];
            }
        }
    }
    (kron * h, ((kron - gauss) * h).norm())
}

/// Adaptive 7/15-point Gauss–Kronrod with absolute tolerance `tol`.
pub(crate) fn gauss_kronrod<F: Fn(f64) -> C64>(f: F, a: f64, b: f64, tol: f64) -> C64 {
    let mut stack = vec![(a, b, tol)];
    let mut total = ZERO;
    while let Some((lo, hi, t)) = stack.pop() {
        let (v, err) = gk15(&f, lo, hi);
        // stop once the error estimate reaches the rounding level of |f|
        let floor = 50.0 * f64::EPSILON * gk15(&|x| C64::new(f(x).norm(), 0.0), lo, hi).0.re;
        if err <= t.max(floor) || (hi - lo) < 1e-9 * (b - a).abs() {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * t));
            stack.push((mid, hi, 0.5 * t));
        }
    }
    total
}

/// Fraction of transmit power at harmonics with `|m| > K/3`, i.e. in the top
/// third of the occupied `|frequency|` range.
pub fn spectral_edge_fraction(g: &SpectrumVector, config: &SystemConfig) -> f64 {
    let limit = config.k as f64 / 3.0;
    let top: f64 = g
        .iter()
        .enumerate()
        .filter(|(p, _)| (config.harmonic(*p) as f64).abs() > limit)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    top / power(g)
}

/// Periodic time signal `Σ_m G_m e^{jmω_0 t}` on `samples` points of
/// `[-T_0/2, T_0/2)`.
pub fn time_signal(g: &SpectrumVector, config: &SystemConfig, samples: usize) -> Vec<(f64, C64)> {
    (0..samples)
        .map(|i| {
            let t = (i as f64 / samples as f64 - 0.5) * config.t0;
            let v = g
                .iter()
                .enumerate()
                .map(|(p, &c)| c * cis(config.harmonic(p) as f64 * config.omega0() * t))
                .sum();
            (t, v)
        })
        .collect()
}

/// Fraction of time-domain power with `|t| > T_0/3` (outer third of the
/// period).
pub fn temporal_edge_fraction(g: &SpectrumVector, config: &SystemConfig) -> f64 {
    let sig = time_signal(g, config, 16 * config.k.max(64));
    let total: f64 = sig.iter().map(|(_, v)| v.norm_sqr()).sum();
    let outer: f64 = sig
        .iter()
        .filter(|(t, _)| t.abs() > config.t0 / 3.0)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    outer / total
}
