//! System configuration, alias partition of the harmonic grid and the
//! Gaussian parameter prior.
//!
//! Index conventions used throughout the crate:
//! - harmonic index `m` runs over `-K/2 ..= K/2-1` and is stored at vector
//!   position `m + K/2`;
//! - sampled-frequency (grid) index `k` runs over `-N/2 ..= N/2-1` and is
//!   stored at position `k + N/2`. The same positions index time samples
//!   `n T_s`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling and bandwidth setup of the transceiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Sampling rate in Hz.
    pub fs: f64,
    /// Signal period in seconds.
    pub t0: f64,
    /// Bandwidth factor, `B = (2L+1) fs`.
    pub bandwidth_factor: u32,
    /// Transmit power budget.
    pub pt: f64,
    /// Noise power spectral density.
    pub n0: f64,
    /// Samples per period.
    pub n: usize,
    /// Harmonics inside the transmit band.
    pub k: usize,
}

/// Validates inputs and derives `N = T0 fs` and `K = (2L+1) N`.
pub fn build_config(fs: f64, t0: f64, l: u32, pt: f64, n0: f64) -> Result<SystemConfig> {
    for (name, value) in [("fs", fs), ("t0", t0), ("pt", pt)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveInput { name, value });
        }
    }
    if !(n0 >= 0.0) || !n0.is_finite() {
        return Err(Error::NonPositiveInput {
            name: "n0",
            value: n0,
        });
    }
    let product = t0 * fs;
    let rounded = product.round();
    if (product - rounded).abs() > 1e-9 * product.max(1.0) || rounded < 2.0 {
        return Err(Error::NonIntegerSampleCount(product));
    }
    let n = rounded as usize;
    if n % 2 != 0 {
        return Err(Error::NonIntegerSampleCount(product));
    }
    Ok(SystemConfig {
        fs,
        t0,
        bandwidth_factor: l,
        pt,
        n0,
        n,
        k: (2 * l as usize + 1) * n,
    })
}

impl SystemConfig {
    pub fn f0(&self) -> f64 {
        1.0 / self.t0
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI / self.t0
    }

    pub fn omega_s(&self) -> f64 {
        2.0 * PI * self.fs
    }

    pub fn ts(&self) -> f64 {
        1.0 / self.fs
    }

    /// Two-sided bandwidth `B` in Hz.
    pub fn bandwidth(&self) -> f64 {
        (2 * self.bandwidth_factor + 1) as f64 * self.fs
    }

    /// Same system with a different noise density.
    pub fn with_n0(&self, n0: f64) -> SystemConfig {
        SystemConfig {
            n0,
            ..self.clone()
        }
    }

    pub fn with_pt(&self, pt: f64) -> SystemConfig {
        SystemConfig {
            pt,
            ..self.clone()
        }
    }

    /// Harmonic index stored at vector position `pos`.
    #[inline]
    pub fn harmonic(&self, pos: usize) -> i64 {
        pos as i64 - (self.k / 2) as i64
    }

    /// Vector position of harmonic `m`, if inside the band.
    #[inline]
    pub fn harmonic_pos(&self, m: i64) -> Option<usize> {
        let p = m + (self.k / 2) as i64;
        (p >= 0 && (p as usize) < self.k).then_some(p as usize)
    }

    /// Grid (sample/bin) index stored at position `pos`.
    #[inline]
    pub fn grid_index(&self, pos: usize) -> i64 {
        pos as i64 - (self.n / 2) as i64
    }

    /// Time instant of sample position `pos`.
    #[inline]
    pub fn sample_time(&self, pos: usize) -> f64 {
        self.grid_index(pos) as f64 * self.ts()
    }

    pub fn partition(&self) -> AliasPartition {
        AliasPartition::new(self.k, self.n)
    }
}

/// Fold counts `(L_minus, L_plus)` of grid bin `k` for `k_total` harmonics
/// sampled into `n` bins.
pub fn harmonic_limits_raw(k: i64, k_total: usize, n: usize) -> Result<(i64, i64)> {
    let half_n = (n / 2) as i64;
    if k < -half_n || k >= half_n {
        return Err(Error::IndexOutOfRange {
            index: k,
            min: -half_n,
            max: half_n - 1,
        });
    }
    let half_k = (k_total / 2) as i64;
    let n = n as i64;
    Ok(((half_k + k).div_euclid(n), (half_k - 1 - k).div_euclid(n)))
}

pub fn harmonic_limits(k: i64, config: &SystemConfig) -> Result<(i64, i64)> {
    harmonic_limits_raw(k, config.k, config.n)
}

/// Partition of the harmonic set into the alias groups `F_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AliasPartition {
    pub k_total: usize,
    pub n: usize,
    /// `(L_minus, L_plus)` per bin position.
    pub limits: Vec<(i64, i64)>,
    /// Harmonic indices of each group, ascending.
    pub members: Vec<Vec<i64>>,
}

impl AliasPartition {
    pub fn new(k_total: usize, n: usize) -> Self {
        let half_n = (n / 2) as i64;
        let mut limits = Vec::with_capacity(n);
        let mut members = Vec::with_capacity(n);
        for pos in 0..n {
            let k = pos as i64 - half_n;
            let (lm, lp) = harmonic_limits_raw(k, k_total, n).expect("bin index in range");
            limits.push((lm, lp));
            members.push((-lm..=lp).map(|l| k + l * n as i64).collect());
        }
        AliasPartition {
            k_total,
            n,
            limits,
            members,
        }
    }

    /// Bin index that harmonic `m` folds onto.
    #[inline]
    pub fn bin_of(&self, m: i64) -> i64 {
        let n = self.n as i64;
        (m + n / 2).rem_euclid(n) - n / 2
    }

    /// Members of `F_k` as vector positions.
    pub fn member_positions(&self, k: i64) -> Vec<usize> {
        let half_k = (self.k_total / 2) as i64;
        self.members[(k + (self.n / 2) as i64) as usize]
            .iter()
            .map(|&m| (m + half_k) as usize)
            .collect()
    }
}

/// Independent Gaussian prior on delay (s) and Doppler (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPrior {
    pub mu_tau: f64,
    pub mu_nu: f64,
    pub sigma_tau: f64,
    pub sigma_nu: f64,
}

impl ParameterPrior {
    pub fn new(mu_tau: f64, mu_nu: f64, sigma_tau: f64, sigma_nu: f64) -> Result<Self> {
        for (name, value) in [("sigma_tau", sigma_tau), ("sigma_nu", sigma_nu)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::NonPositiveInput { name, value });
            }
        }
        Ok(ParameterPrior {
            mu_tau,
            mu_nu,
            sigma_tau,
            sigma_nu,
        })
    }

    pub fn zero_mean(sigma_tau: f64, sigma_nu: f64) -> Result<Self> {
        Self::new(0.0, 0.0, sigma_tau, sigma_nu)
    }

    /// Prior information matrix `diag(1/σ_τ², 1/σ_ν²)`.
    pub fn pim(&self) -> Matrix2<f64> {
        Matrix2::new(
            1.0 / (self.sigma_tau * self.sigma_tau),
            0.0,
            0.0,
            1.0 / (self.sigma_nu * self.sigma_nu),
        )
    }

    pub fn covariance(&self) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_tau * self.sigma_tau,
            0.0,
            0.0,
            self.sigma_nu * self.sigma_nu,
        )
    }
}

/// Gauss–Hermite rule for the standard normal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// `n`-point rule: exact for polynomials up to degree `2n-1` under N(0,1).
    ///
    /// Nodes come from the Jacobi matrix eigenvalues (Golub–Welsch), polished
    /// by Newton on the orthonormal Hermite recurrence; weights are the
    /// Christoffel numbers `1 / Σ p_j(x)²`. The rule is symmetrized so odd
    /// moments vanish to rounding.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "at least one node");
        if n == 1 {
            return GaussHermite {
                nodes: vec![0.0],
                weights: vec![1.0],
            };
        }
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64).sqrt()
            } else {
                0.0
            }
        });
        let mut nodes: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());

        for x in nodes.iter_mut() {
            for _ in 0..8 {
                let (pn, pn1) = orthonormal_hermite(n, *x);
                let step = pn / ((n as f64).sqrt() * pn1);
                *x -= step;
                if step.abs() < 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        let mut weights: Vec<f64> = nodes
            .iter()
            .map(|&x| {
                let mut p_prev = 0.0;
                let mut p = 1.0;
                let mut sum = 1.0;
                for j in 0..n - 1 {
                    let next = (x * p - (j as f64).sqrt() * p_prev) / ((j + 1) as f64).sqrt();
                    p_prev = p;
                    p = next;
                    sum += p * p;
                }
                1.0 / sum
            })
            .collect();

        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        GaussHermite { nodes, weights }
    }
}

/// Orthonormal probabilists' Hermite values `(p_n(x), p_{n-1}(x))`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0;
    for j in 0..n {
        let next = (x * p - (j as f64).sqrt() * p_prev) / ((j + 1) as f64).sqrt();
        p_prev = p;
        p = next;
    }
    (p, p_prev)
}

/// Tensor-product quadrature of a [`ParameterPrior`].
#[derive(Debug, Clone, PartialEq)]
pub struct PriorQuadrature {
    pub tau: Vec<f64>,
    pub nu: Vec<f64>,
    pub weights: Vec<f64>,
}

/// One node of the bivariate rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub tau: f64,
    pub nu: f64,
    pub weight: f64,
}

impl PriorQuadrature {
    pub fn new(prior: &ParameterPrior, nodes_per_axis: usize) -> Self {
        let rule = GaussHermite::new(nodes_per_axis);
        PriorQuadrature {
            tau: rule
                .nodes
                .iter()
                .map(|x| prior.mu_tau + prior.sigma_tau * x)
                .collect(),
            nu: rule
                .nodes
                .iter()
                .map(|x| prior.mu_nu + prior.sigma_nu * x)
                .collect(),
            weights: rule.weights,
        }
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.weights.len()
    }

    /// Nodes with the Doppler axis outermost.
    pub fn points(&self) -> Vec<QuadNode> {
        let mut out = Vec::with_capacity(self.weights.len().pow(2));
        for (j, &nu) in self.nu.iter().enumerate() {
            for (i, &tau) in self.tau.iter().enumerate() {
                out.push(QuadNode {
                    tau,
                    nu,
                    weight: self.weights[i] * self.weights[j],
                });
            }
        }
        out
    }
}

pub fn prior_quadrature(prior: &ParameterPrior, nodes_per_axis: usize) -> Vec<QuadNode> {
    PriorQuadrature::new(prior, nodes_per_axis).points()
}

/// Numeric value that may be given as a JSON number or as a string with an
/// engineering suffix (`"25MHz"`, `"2us"`, `"1 ns"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Quantity(pub f64);

impl<'de> Deserialize<'de> for Quantity {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(v) => Ok(Quantity(v)),
            Raw::Text(s) => parse_quantity(&s)
                .map(Quantity)
                .map_err(serde::de::Error::custom),
        }
    }
}

/// Parses `"<number>[prefix][unit]"` where the unit is one of `Hz`, `s` or
/// `dB-Hz`-less plain numbers.
pub fn parse_quantity(text: &str) -> std::result::Result<f64, String> {
    let s = text.trim();
    let split = s
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
        .unwrap_or(s.len());
    // An exponent marker followed by a non-digit belongs to the suffix.
    let (mut num, mut rest) = s.split_at(split);
    if num.ends_with(['e', 'E']) {
        num = &s[..split - 1];
        rest = &s[split - 1..];
    }
    let value: f64 = num
        .parse()
        .map_err(|_| format!("cannot parse number in {text:?}"))?;
    let mut rest = rest.trim();
    for unit in ["Hz", "hz", "s"] {
        if let Some(stripped) = rest.strip_suffix(unit) {
            rest = stripped;
            break;
        }
    }
    let scale = match rest {
        "" => 1.0,
        "G" => 1e9,
        "M" => 1e6,
        "k" | "K" => 1e3,
        "m" => 1e-3,
        "u" | "µ" | "μ" => 1e-6,
        "n" => 1e-9,
        "p" => 1e-12,
        other => return Err(format!("unknown suffix {other:?} in {text:?}")),
    };
    Ok(value * scale)
}

fn default_nodes() -> usize {
    15
}

/// JSON configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub fs_hz: Quantity,
    pub t0_s: Quantity,
    #[serde(rename = "L")]
    pub l: u32,
    pub pt: Quantity,
    pub n0: Quantity,
    pub sigma_tau_s: Quantity,
    pub sigma_nu_hz: Quantity,
    #[serde(default = "zero_quantity")]
    pub mu_tau_s: Quantity,
    #[serde(default = "zero_quantity")]
    pub mu_nu_hz: Quantity,
    #[serde(default = "default_nodes")]
    pub ghq_nodes: usize,
    /// Seed of the reference phase code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_seed: Option<u64>,
}

fn zero_quantity() -> Quantity {
    Quantity(0.0)
}

/// Everything a run needs from the configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: SystemConfig,
    pub prior: ParameterPrior,
    pub ghq_nodes: usize,
    pub code_seed: u64,
}

pub const DEFAULT_CODE_SEED: u64 = 0x5eed_c0de;

pub const CONFIG_SCHEMA: &str = r#"{
  "fs_hz": <number|"25MHz">,      sampling rate
  "t0_s": <number|"2us">,         signal period (t0*fs must be an even integer)
  "L": <integer >= 0>,            bandwidth factor, B = (2L+1) fs
  "pt": <number>,                 transmit power
  "n0": <number>,                 noise power spectral density
  "sigma_tau_s": <number|"1ns">,  prior std of the delay
  "sigma_nu_hz": <number|"5kHz">, prior std of the Doppler shift
  "mu_tau_s": <number>,           optional, default 0
  "mu_nu_hz": <number>,           optional, default 0
  "ghq_nodes": <integer >= 1>,    optional, default 15
  "code_seed": <integer>          optional, seed of the reference phase code
}"#;

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        if self.ghq_nodes == 0 {
            return Err(Error::Config("ghq_nodes must be at least 1".into()));
        }
        Ok(Scenario {
            system: build_config(self.fs_hz.0, self.t0_s.0, self.l, self.pt.0, self.n0.0)?,
            prior: ParameterPrior::new(
                self.mu_tau_s.0,
                self.mu_nu_hz.0,
                self.sigma_tau_s.0,
                self.sigma_nu_hz.0,
            )?,
            ghq_nodes: self.ghq_nodes,
            code_seed: self.code_seed.unwrap_or(DEFAULT_CODE_SEED),
        })
    }
}

impl Scenario {
    /// 25 MHz sampling, 2 µs period, σ_τ = 1 ns, σ_ν = 5 kHz.
    pub fn reference_setup(l: u32) -> Scenario {
        Scenario {
            system: build_config(25e6, 2e-6, l, 1.0, 1.0).expect("valid defaults"),
            prior: ParameterPrior::zero_mean(1e-9, 5e3).expect("valid defaults"),
            ghq_nodes: 15,
            code_seed: DEFAULT_CODE_SEED,
        }
    }

    pub fn quadrature(&self) -> PriorQuadrature {
        PriorQuadrature::new(&self.prior, self.ghq_nodes)
    }

    pub fn to_config_file(&self) -> ConfigFile {
        ConfigFile {
            fs_hz: Quantity(self.system.fs),
            t0_s: Quantity(self.system.t0),
            l: self.system.bandwidth_factor,
            pt: Quantity(self.system.pt),
            n0: Quantity(self.system.n0),
            sigma_tau_s: Quantity(self.prior.sigma_tau),
            sigma_nu_hz: Quantity(self.prior.sigma_nu),
            mu_tau_s: Quantity(self.prior.mu_tau),
            mu_nu_hz: Quantity(self.prior.mu_nu),
            ghq_nodes: self.ghq_nodes,
            code_seed: Some(self.code_seed),
        }
    }
}
