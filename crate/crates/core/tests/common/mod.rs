//! Oracles and measurements shared by the property suites and the
//! acceptance harness.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subnyq::estimator::NoiseSampler;
use subnyq::fim_approx::{delta_aggregate, phi_aggregate, receive_objective, transmit_objective};
use subnyq::fim_exact::{efim, fim_exact};
use subnyq::freqops::{
    aliasing_matrix, delay_diagonal, doppler_matrices, noise_covariance, received_signal, NoiseModel,
    Operators, SpectrumVector, C64,
};
use subnyq::model::{build_config, ParameterPrior, SystemConfig};
use subnyq::optimizer::{reference_design, DesignProblem};
use subnyq::model::Scenario;
use subnyq::symmetry::{expansion_matrix, mirror, reduce_receive_forms, reduce_transmit_form, HalfSpectrum};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn reference_config(l: u32, n0: f64) -> SystemConfig {
    build_config(25e6, 2e-6, l, 1.0, n0).unwrap()
}

pub fn reference_prior() -> ParameterPrior {
    ParameterPrior::zero_mean(1e-9, 5e3).unwrap()
}

pub fn random_complex(k: usize, r: &mut ChaCha8Rng) -> SpectrumVector {
    DVector::from_fn(k, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)))
}

/// Receive spectrum bounded away from zero so every bin carries noise.
pub fn random_receive(k: usize, r: &mut ChaCha8Rng) -> SpectrumVector {
    DVector::from_fn(k, |_, _| {
        let mag = r.random_range(0.2..1.0);
        let ph = r.random_range(-3.0..3.0_f64);
        C64::new(mag * ph.cos(), mag * ph.sin())
    })
}

/// Real spectrum, even under `m → −m`, zero at `−K/2`.
pub fn random_symmetric(k: usize, r: &mut ChaCha8Rng, floor: f64) -> SpectrumVector {
    let half = HalfSpectrum {
        g_r: DVector::from_fn(k / 2 - 1, |_, _| r.random_range(floor..1.0)),
        g_0: r.random_range(floor..1.0),
    };
    half.expand()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// FIM from central differences of the sampled signal:
/// `J = 2 Re(∂sᴴ R⁻¹ ∂s)`.
pub fn fd_fim(theta: (f64, f64), g: &SpectrumVector, h: &SpectrumVector, ops: &Operators) -> Matrix2<f64> {
    let one = C64::new(1.0, 0.0);
    let s = |t: f64, n: f64| received_signal((t, n), one, g, h, ops).unwrap().v;
    let (dt, dn) = (2e-12, 0.5);
    let ds_t = (s(theta.0 + dt, theta.1) - s(theta.0 - dt, theta.1)) / C64::new(2.0 * dt, 0.0);
    let ds_n = (s(theta.0, theta.1 + dn) - s(theta.0, theta.1 - dn)) / C64::new(2.0 * dn, 0.0);
    let cov = noise_covariance(h, ops.config.n0, ops, NoiseModel::Circulant).unwrap();
    let rt = cov.solve_time(&ds_t, ops);
    let rn = cov.solve_time(&ds_n, ops);
    let j11 = 2.0 * ds_t.dotc(&rt).re;
    let j12 = 2.0 * ds_t.dotc(&rn).re;
    let j22 = 2.0 * ds_n.dotc(&rn).re;
    Matrix2::new(j11, j12, j12, j22)
}

/// Worst entry-wise relative error (scaled by the diagonal) between the
/// exact FIM and the finite-difference oracle over random instances.
pub fn fim_vs_fd(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let l = r.random_range(0..3);
        let cfg = reference_config(l, 10f64.powf(r.random_range(-10.0..-6.0)));
        let ops = Operators::new(&cfg);
        let g = random_complex(cfg.k, &mut r);
        let h = random_receive(cfg.k, &mut r);
        let theta = (r.random_range(-3e-9..3e-9), r.random_range(-15e3..15e3));
        let exact = fim_exact(theta, C64::new(1.0, 0.0), &g, &h, &ops).unwrap().j;
        let fd = fd_fim(theta, &g, &h, &ops);
        let scale = |i: usize, j: usize| (fd[(i, i)] * fd[(j, j)]).sqrt();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            worst = worst.max((exact[(i, j)] - fd[(i, j)]).abs() / scale(i, j));
        }
    }
    worst
}

/// Worst relative mismatch between the transmit (Φ) and receive (Δ_k)
/// forms of the approximate objective.
pub fn phi_vs_delta(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let prior = reference_prior();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let l = r.random_range(0..3);
        let cfg = reference_config(l, 1.0);
        let ops = Operators::new(&cfg);
        let g = random_complex(cfg.k, &mut r);
        let h = random_receive(cfg.k, &mut r);
        let a: f64 = r.random_range(0.0..1.0);
        let c: f64 = r.random_range(-0.3..0.3);
        let m = Matrix2::new(a * 1e-18, c * 1e-18 * 5e3, c * 1e-18 * 5e3, (1.0 - a) * 25e6);
        let via_phi = transmit_objective(&phi_aggregate(&h, &m, &prior, &ops, 5).unwrap(), &g);
        let via_delta = receive_objective(&delta_aggregate(&g, &m, &prior, &ops, 5).unwrap(), &h, &ops);
        worst = worst.max(rel(via_delta, via_phi));
    }
    worst
}

/// Worst relative mismatch of the reduced symmetric forms against the full
/// quadratic forms, transmit and receive.
pub fn reduced_vs_full(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let prior = reference_prior();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let l = r.random_range(0..3);
        let cfg = reference_config(l, 1.0);
        let ops = Operators::new(&cfg);
        let a: f64 = r.random_range(0.0..1.0);
        let m = Matrix2::new(a * 1e-18, 0.0, 0.0, (1.0 - a) * 25e6);
        let h = random_symmetric_receive(cfg.k, &mut r);
        let g = random_symmetric(cfg.k, &mut r, 0.0);

        let phi = phi_aggregate(&h, &m, &prior, &ops, 5).unwrap();
        let half = HalfSpectrum::project(&g).stacked();
        let reduced = (half.transpose() * reduce_transmit_form(&phi) * &half)[(0, 0)];
        worst = worst.max(rel(reduced, transmit_objective(&phi, &g)));
        let e = expansion_matrix(cfg.k);
        let back = e * &half;
        worst = worst.max((back.map(|v| C64::new(v, 0.0)) - &g).norm() / g.norm());

        let deltas = delta_aggregate(&g, &m, &prior, &ops, 5).unwrap();
        let red = reduce_receive_forms(&deltas, &ops);
        worst = worst.max(rel(red.objective(&h, &ops), receive_objective(&deltas, &h, &ops)));
    }
    worst
}

/// Largest relative decrease along the objective trace over seeded runs
/// from random starting points; 0 when every trace is non-decreasing.
pub fn worst_trace_drop(runs: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = build_config(25e6, 1.2e-6, 1, 1.0, 1.0).unwrap();
    let ops = Operators::new(&cfg);
    let scenario = Scenario {
        system: cfg.clone(),
        prior: reference_prior(),
        ghq_nodes: 5,
        code_seed: 11,
    };
    let (g_ref, _) = reference_design(&scenario).unwrap();
    let mut worst: f64 = 0.0;
    for run in 0..runs {
        let alpha = r.random_range(0.0..1.0);
        let symmetric = run % 2 == 0;
        let h0 = if symmetric {
            random_symmetric(cfg.k, &mut r, 0.1)
        } else {
            random_receive(cfg.k, &mut r)
        };
        let problem = DesignProblem::new(&ops, &scenario.prior, 5, alpha);
        let d = problem.alternate(&g_ref, &h0, 1e-9, 15, symmetric).unwrap();
        for w in d.objective_trace.windows(2) {
            worst = worst.max((w[0] - w[1]) / w[0].abs());
        }
    }
    worst
}

/// Checks the aliasing matrix of every `(N, L)` with `K ≤ k_max`: one unit
/// entry per column, `2L+1` per row, and congruent fold targets.
pub fn aliasing_partition_holds(k_max: usize) -> Result<usize, String> {
    let mut checked = 0;
    for n in (2..=k_max).step_by(2) {
        for l in 0.. {
            let k = (2 * l + 1) * n;
            if k > k_max {
                break;
            }
            let cfg = build_config(n as f64 * 1e6, 1e-6, l as u32, 1.0, 1.0).map_err(|e| e.to_string())?;
            let a = aliasing_matrix(&cfg);
            for col in 0..k {
                let c = a.column(col);
                let ones: Vec<usize> = (0..n).filter(|&row| c[row] == 1.0).collect();
                if ones.len() != 1 || c.sum() != 1.0 {
                    return Err(format!("N={n} L={l}: column {col} is not a unit vector"));
                }
                let m = cfg.harmonic(col);
                let b = ones[0] as i64 - (n / 2) as i64;
                if (m - b).rem_euclid(n as i64) != 0 {
                    return Err(format!("N={n} L={l}: harmonic {m} folded to bin {b}"));
                }
            }
            for row in 0..n {
                if a.row(row).sum() != (2 * l + 1) as f64 {
                    return Err(format!("N={n} L={l}: bin row {row} has wrong multiplicity"));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Worst deviation of `T(τ₁)T(τ₂) = T(τ₁+τ₂)`, `Δ̃(ν₁)Δ̃(ν₂) = Δ̃(ν₁+ν₂)`
/// and `Δ̃ Δ̃ᴴ = I` over random draws.
pub fn group_error(draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = reference_config(1, 1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..draws {
        let (t1, t2) = (r.random_range(-5e-9..5e-9), r.random_range(-5e-9..5e-9));
        let (n1, n2) = (r.random_range(-1e5..1e5), r.random_range(-1e5..1e5));
        let (a, _) = delay_diagonal(t1, &cfg);
        let (b, _) = delay_diagonal(t2, &cfg);
        let (ab, _) = delay_diagonal(t1 + t2, &cfg);
        worst = worst.max((a.component_mul(&b) - ab).camax());
        let x = doppler_matrices(n1, &cfg, false).delta_tilde;
        let y = doppler_matrices(n2, &cfg, false).delta_tilde;
        let xy = doppler_matrices(n1 + n2, &cfg, false).delta_tilde;
        worst = worst.max((&x * &y - xy).norm() / (cfg.n as f64).sqrt());
        let id = DMatrix::<C64>::identity(cfg.n, cfg.n);
        worst = worst.max((&x * x.adjoint() - id).norm() / (cfg.n as f64).sqrt());
    }
    worst
}

/// Symmetric receive spectrum; `−K/2` maps to itself and is kept nonzero.
pub fn random_symmetric_receive(k: usize, r: &mut ChaCha8Rng) -> SpectrumVector {
    let mut h = random_symmetric(k, r, 0.2);
    h[0] = C64::new(r.random_range(0.2..1.0), 0.0);
    h
}

/// Largest `|J₁₂| / √(J₁₁J₂₂)` of the exact EFIM for symmetric filter
/// pairs under zero-mean priors.
pub fn symmetric_offdiag(instances: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let prior = reference_prior();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let l = r.random_range(0..3);
        let cfg = reference_config(l, 1.0);
        let ops = Operators::new(&cfg);
        let g = random_symmetric(cfg.k, &mut r, 0.0);
        let h = random_symmetric_receive(cfg.k, &mut r);
        let j = efim(&g, &h, &prior, &ops, 7).unwrap().j;
        worst = worst.max(j[(0, 1)].abs() / (j[(0, 0)] * j[(1, 1)]).sqrt());
    }
    worst
}

/// Largest `‖J_D(g,h) − J_D(Πg,Πh)‖_F / ‖J_D‖_F` over random filter pairs,
/// with `Π` the full index reversal by default.
pub fn mirror_efim_error(instances: usize, seed: u64) -> f64 {
    mirror_efim_error_with(instances, seed, mirror)
}

pub fn mirror_efim_error_with(
    instances: usize,
    seed: u64,
    pi: fn(&SpectrumVector) -> SpectrumVector,
) -> f64 {
    let mut r = rng(seed);
    let prior = reference_prior();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let l = r.random_range(0..3);
        let cfg = reference_config(l, 1.0);
        let ops = Operators::new(&cfg);
        let g = random_complex(cfg.k, &mut r);
        let h = random_receive(cfg.k, &mut r);
        let a = efim(&g, &h, &prior, &ops, 7).unwrap().j;
        let b = efim(&pi(&g), &pi(&h), &prior, &ops, 7).unwrap().j;
        worst = worst.max((a - b).norm() / a.norm());
    }
    worst
}

/// Relative Frobenius error of the sample covariance of `draws` noise
/// vectors against `R_η`.
pub fn noise_covariance_error(draws: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let cfg = reference_config(1, 3e-9);
    let ops = Operators::new(&cfg);
    let h = random_receive(cfg.k, &mut r);
    let cov = noise_covariance(&h, cfg.n0, &ops, NoiseModel::Circulant).unwrap();
    let sampler = NoiseSampler::for_covariance(&cov, &ops).unwrap();
    let mut acc = DMatrix::<C64>::zeros(cfg.n, cfg.n);
    for _ in 0..draws {
        let eta = sampler.sample(&mut r);
        acc.ger(C64::new(1.0, 0.0), &eta, &eta.conjugate(), C64::new(1.0, 0.0));
    }
    acc /= C64::new(draws as f64, 0.0);
    (acc - &cov.r).norm() / cov.r.norm()
}
