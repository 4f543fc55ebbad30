//! Mirroring, the real-even filter parameterization and the one-sided
//! quadratic forms used by the optimizer.

use nalgebra::{DMatrix, DVector, Scalar};

use crate::error::{Error, Result};
use crate::freqops::{Operators, SpectrumVector, C64, ZERO};

/// `Πx`: element `i` moves to `K+1-i`.
pub fn mirror<T: Scalar>(x: &DVector<T>) -> DVector<T> {
    let k = x.len();
    DVector::from_fn(k, |i, _| x[k - 1 - i].clone())
}

/// Checked variant of [`mirror`] for spectrum vectors of the configured length.
pub fn mirror_checked(x: &SpectrumVector, k: usize) -> Result<SpectrumVector> {
    if x.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: x.len(),
        });
    }
    Ok(mirror(x))
}

/// Frequency reversal `m → -m` on the centered harmonic grid. The unpaired
/// slot `-K/2` stays in place.
pub fn mirror_dc<T: Scalar>(x: &DVector<T>) -> DVector<T> {
    let k = x.len();
    DVector::from_fn(k, |p, _| x[(k - p) % k].clone())
}

/// Real, even transmit spectrum stored on its negative half.
///
/// `g_r[i]` is harmonic `-(K/2-1) + i`, which by symmetry equals harmonic
/// `K/2-1-i`; harmonic `-K/2` is pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpectrum {
    pub g_r: DVector<f64>,
    pub g_0: f64,
}

impl HalfSpectrum {
    /// Splits the stacked vector `[g_r; g_0]`.
    pub fn from_stacked(y: &DVector<f64>) -> Self {
        let n = y.len();
        HalfSpectrum {
            g_r: y.rows(0, n - 1).into_owned(),
            g_0: y[n - 1],
        }
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.g_r.len();
        DVector::from_fn(n + 1, |i, _| if i < n { self.g_r[i] } else { self.g_0 })
    }

    /// Full length-K spectrum.
    pub fn expand(&self) -> SpectrumVector {
        let half = self.g_r.len() + 1;
        let k = 2 * half;
        let mut out = DVector::from_element(k, ZERO);
        for (i, &v) in self.g_r.iter().enumerate() {
            out[1 + i] = C64::new(v, 0.0);
            out[k - 1 - i] = C64::new(v, 0.0);
        }
        out[half] = C64::new(self.g_0, 0.0);
        out
    }

    /// `‖expand‖² = 2‖g_r‖² + g_0²`.
    pub fn power(&self) -> f64 {
        2.0 * self.g_r.norm_squared() + self.g_0 * self.g_0
    }

    /// Symmetric real part of a full spectrum (pinned slot dropped).
    pub fn project(x: &SpectrumVector) -> Self {
        let k = x.len();
        let half = k / 2;
        let g_r = DVector::from_fn(half - 1, |i, _| 0.5 * (x[1 + i].re + x[k - 1 - i].re));
        HalfSpectrum {
            g_r,
            g_0: x[half].re,
        }
    }
}

/// The `K × K/2` real matrix `E` with `expand(y) = E y`.
pub fn expansion_matrix(k: usize) -> DMatrix<f64> {
    let half = k / 2;
    let mut e = DMatrix::zeros(k, half);
    for i in 0..half - 1 {
        e[(1 + i, i)] = 1.0;
        e[(k - 1 - i, i)] = 1.0;
    }
    e[(half, half - 1)] = 1.0;
    e
}

/// `Φ_half = Re(Eᵀ Φ E)`, so that `expand(y)ᴴ Φ expand(y) = yᵀ Φ_half y` for
/// real `y`.
pub fn reduce_transmit_form(phi: &DMatrix<C64>) -> DMatrix<f64> {
    let k = phi.nrows();
    let half = k / 2;
    // columns of E as (position, position') pairs; the DC column has one entry
    let cols: Vec<Vec<usize>> = (0..half)
        .map(|i| {
            if i + 1 < half {
                vec![1 + i, k - 1 - i]
            } else {
                vec![half]
            }
        })
        .collect();
    let mut out = DMatrix::zeros(half, half);
    for a in 0..half {
        for b in a..half {
            let mut s = 0.0;
            for &p in &cols[a] {
                for &q in &cols[b] {
                    s += phi[(p, q)].re;
                }
            }
            out[(a, b)] = s;
            out[(b, a)] = s;
        }
    }
    out
}

/// One orbit of alias groups under `m → -m`, with a real orthonormal basis
/// of its symmetric filter values and the reduced form on that basis.
#[derive(Debug, Clone)]
pub struct ReducedGroup {
    /// Bin positions covered: one for a self-mirrored group, two for a pair
    /// `(k, -k)` with `k < 0` first.
    pub bins: Vec<usize>,
    /// Columns span the symmetric values on the first bin's members.
    pub basis: DMatrix<f64>,
    /// Real symmetric form in basis coordinates.
    pub form: DMatrix<f64>,
}

impl ReducedGroup {
    pub fn is_paired(&self) -> bool {
        self.bins.len() == 2
    }

    /// `cᵀ form c / cᵀ c`.
    pub fn rayleigh(&self, c: &DVector<f64>) -> f64 {
        let n = c.norm_squared();
        if n == 0.0 {
            0.0
        } else {
            c.dot(&(&self.form * c)) / n
        }
    }
}

/// Reduced receive-side forms: `N/2 - 1` pairs plus the self-mirrored bins
/// `-N/2` and `0` (for `N = 2` only the two lone bins remain).
#[derive(Debug, Clone)]
pub struct ReceiveReduction {
    pub groups: Vec<ReducedGroup>,
}

fn member_values(ops: &Operators, bin: usize) -> Vec<i64> {
    ops.partition
        .member_positions(ops.config.grid_index(bin))
        .into_iter()
        .map(|p| ops.config.harmonic(p))
        .collect()
}

/// Orthonormal basis of vectors on `members` invariant under `m → -m`.
/// Members whose mirror falls outside the band are free singletons.
fn self_mirror_basis(members: &[i64]) -> DMatrix<f64> {
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::new();
    for (a, &m) in members.iter().enumerate() {
        match members.iter().position(|&x| x == -m) {
            Some(b) if b == a => cols.push(vec![(a, 1.0)]),
            Some(b) if b > a => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                cols.push(vec![(a, s), (b, s)]);
            }
            Some(_) => {}
            None => cols.push(vec![(a, 1.0)]),
        }
    }
    let mut q = DMatrix::zeros(members.len(), cols.len());
    for (c, entries) in cols.iter().enumerate() {
        for &(r, v) in entries {
            q[(r, c)] = v;
        }
    }
    q
}

/// Index map `i → j` with `members_b[j] = -members_a[i]`.
fn mirror_index(members_a: &[i64], members_b: &[i64]) -> Vec<usize> {
    members_a
        .iter()
        .map(|&m| {
            members_b
                .iter()
                .position(|&x| x == -m)
                .expect("paired alias groups mirror onto each other")
        })
        .collect()
}

/// Pairs the per-group forms `Δ_k` (indexed by bin position) for filters
/// with `h_{-m} = h_m` real.
pub fn reduce_receive_forms(deltas: &[DMatrix<C64>], ops: &Operators) -> ReceiveReduction {
    let n = ops.n();
    let half = n / 2;
    let mut groups = Vec::with_capacity(half + 1);
    for bin in 0..n {
        let k = ops.config.grid_index(bin);
        let members = member_values(ops, bin);
        let re = deltas[bin].map(|c| c.re);
        if k == 0 || k == -(half as i64) {
            let q = self_mirror_basis(&members);
            let form = q.transpose() * &re * &q;
            groups.push(ReducedGroup {
                bins: vec![bin],
                basis: q,
                form: (&form + form.transpose()) * 0.5,
            });
        } else if k < 0 {
            let partner = (half as i64 - k) as usize;
            let pm = member_values(ops, partner);
            let map = mirror_index(&members, &pm);
            let other = &deltas[partner];
            let d = members.len();
            let form = DMatrix::from_fn(d, d, |a, b| re[(a, b)] + other[(map[a], map[b])].re);
            groups.push(ReducedGroup {
                bins: vec![bin, partner],
                basis: DMatrix::identity(d, d),
                form: (&form + form.transpose()) * 0.5,
            });
        }
    }
    ReceiveReduction { groups }
}

impl ReceiveReduction {
    /// Writes basis coordinates `c` of each group into a full symmetric
    /// receive spectrum.
    pub fn assemble(&self, coords: &[DVector<f64>], ops: &Operators) -> SpectrumVector {
        let mut h = DVector::from_element(ops.k(), ZERO);
        for (g, c) in self.groups.iter().zip(coords) {
            let vals = &g.basis * c;
            let first = ops.partition.member_positions(ops.config.grid_index(g.bins[0]));
            for (&p, &v) in first.iter().zip(vals.iter()) {
                h[p] = C64::new(v, 0.0);
            }
            if g.is_paired() {
                for (&p, &v) in first.iter().zip(vals.iter()) {
                    let m = ops.config.harmonic(p);
                    let q = ops.config.harmonic_pos(-m).expect("paired members stay in band");
                    h[q] = C64::new(v, 0.0);
                }
            }
        }
        h
    }

    /// Basis coordinates of a symmetric spectrum.
    pub fn coordinates(&self, h: &SpectrumVector, ops: &Operators) -> Vec<DVector<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let first = ops.partition.member_positions(ops.config.grid_index(g.bins[0]));
                let vals = DVector::from_iterator(first.len(), first.iter().map(|&p| h[p].re));
                g.basis.transpose() * vals
            })
            .collect()
    }

    /// Receive objective of a symmetric spectrum.
    pub fn objective(&self, h: &SpectrumVector, ops: &Operators) -> f64 {
        self.groups
            .iter()
            .zip(self.coordinates(h, ops))
            .map(|(g, c)| g.rayleigh(&c))
            .sum()
    }
}

/// True if `h` is real with `h_{-m} = h_m` within `tol`.
pub fn is_symmetric(h: &SpectrumVector, tol: f64) -> bool {
    let scale = h.iter().map(|v| v.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let m = mirror_dc(h);
    h.iter()
        .zip(m.iter())
        .all(|(a, b)| a.im.abs() <= tol * scale && (a - b).norm() <= tol * scale)
}
