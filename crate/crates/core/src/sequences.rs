//! Signature sequences that realize the optimal multi-code sum rate.
//!
//! Every active code stream becomes a virtual single-code user. Streams at the
//! full width `1/(2N)` get mutually orthogonal sequences; the remaining
//! streams share the orthogonal complement with generalized Welch-bound
//! equality (GWBE) sequences, whose power-weighted Gram matrix is a multiple
//! of the identity on that complement.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::cdma::CdmaSolution;
use crate::error::{Error, Result};
use crate::fdma::{classify_sorted, UserClass, CRITICAL_TOLERANCE};
use crate::model::{order_users, CdmaConstants, UserProfile, PSD_TOLERANCE};

/// Pass threshold for every [`GramReport`] residual.
pub const GRAM_TOLERANCE: f64 = 1e-8;

/// One active code stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualUser {
    pub user: usize,
    pub stream: usize,
    /// Column of the sequence matrix.
    pub column: usize,
    pub power: f64,
    pub bandwidth: f64,
    pub label: UserClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirtualUserSet {
    pub entries: Vec<VirtualUser>,
    /// Entry indices of the full-width streams.
    pub orthogonal: Vec<usize>,
    /// `N − |orthogonal|`.
    pub complement_dim: usize,
    /// Total number of columns, `Σ n̄_k`.
    pub columns: usize,
    pub processing_gain: u32,
}

impl VirtualUserSet {
    pub fn is_orthogonal(&self, entry: usize) -> bool {
        self.orthogonal.binary_search(&entry).is_ok()
    }

    /// Entry indices outside the orthogonal set.
    pub fn complement(&self) -> Vec<usize> {
        (0..self.entries.len())
            .filter(|&e| !self.is_orthogonal(e))
            .collect()
    }

    /// Stream powers laid out by column, zero for inactive streams.
    pub fn column_powers(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.columns];
        for e in &self.entries {
            p[e.column] = e.power;
        }
        p
    }
}

/// Expands a solution into its active streams and labels them as users of
/// the equivalent FDMA instance with one cap `1/(2N)` per stream.
pub fn build_virtual_users(
    solution: &CdmaSolution,
    constants: &CdmaConstants,
) -> Result<VirtualUserSet> {
    constants.validate()?;
    let two_n = 2.0 * f64::from(constants.processing_gain);
    let unit = 1.0 / two_n;
    let streams = &solution.streams;
    let mut entries = Vec::new();
    let mut column = 0;
    for (user, (ws, ps)) in streams.bandwidths.iter().zip(&streams.powers).enumerate() {
        let total: f64 = ws.iter().sum();
        let expected = solution.bandwidths[user];
        if (total - expected).abs() > CRITICAL_TOLERANCE * unit {
            return Err(Error::InconsistentSplit {
                user,
                expected,
                found: total,
            });
        }
        for (stream, (&w, &p)) in ws.iter().zip(ps).enumerate() {
            if p > 0.0 {
                entries.push(VirtualUser {
                    user,
                    stream,
                    column: column + stream,
                    power: p,
                    bandwidth: w,
                    label: UserClass::Undersized,
                });
            }
        }
        column += ws.len();
    }
    if entries.is_empty() {
        return Err(Error::AllZeroPower);
    }

    let profile = UserProfile::with_bandwidths(
        entries.iter().map(|e| e.power).collect(),
        vec![unit; entries.len()],
    )?;
    let order = order_users(&profile);
    let labels = classify_sorted(&order.apply(&profile.powers), &vec![unit; entries.len()], 0.5);
    for (pos, &e) in order.permutation.iter().enumerate() {
        entries[e].label = labels.labels[pos];
    }

    let orthogonal: Vec<usize> = (0..entries.len())
        .filter(|&e| entries[e].bandwidth == unit)
        .collect();
    let n = constants.processing_gain as usize;
    if orthogonal.len() > n {
        return Err(Error::TooManyOrthogonal(orthogonal.len(), n));
    }
    Ok(VirtualUserSet {
        complement_dim: n - orthogonal.len(),
        entries,
        orthogonal,
        columns: column,
        processing_gain: constants.processing_gain,
    })
}

/// Sequences as columns of an `N × Σn̄` matrix with their stream powers.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceMatrix {
    pub matrix: DMatrix<f64>,
    /// Power of each column.
    pub powers: Vec<f64>,
}

impl SequenceMatrix {
    pub fn processing_gain(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Columns of a random orthogonal `n × n` matrix, deterministic in `seed`.
fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    a.qr().q()
}

/// Rotates `x` and `y` in their common plane so `x` ends with squared norm
/// `target`. Needs `|y|² ≤ target ≤ |x|²`. Returns `(fixed, leftover)`.
fn rotate_to(x: DVector<f64>, y: DVector<f64>, target: f64) -> (DVector<f64>, DVector<f64>) {
    let a = x.norm_squared();
    let b = y.norm_squared();
    let g = x.dot(&y);
    let d = (g * g - (a - target) * (b - target)).max(0.0);
    let sign = if g < 0.0 { -1.0 } else { 1.0 };
    let denom = g + sign * d.sqrt();
    if a == target {
        return (x, y);
    }
    if denom == 0.0 {
        return (y, x);
    }
    let t = (a - target) / denom;
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    (&x * c - &y * s, &x * s + &y * c)
}

/// A `d × m` matrix with orthonormal rows whose squared column norms are
/// `targets` (each in `(0, 1]`, summing to `d`).
fn frame_with_norms(d: usize, targets: &[f64]) -> DMatrix<f64> {
    const EXACT: f64 = 1e-13;
    let m = targets.len();
    let mut ones: Vec<DVector<f64>> = (0..d)
        .map(|i| DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    let mut zeros: Vec<DVector<f64>> = (d..m).map(|_| DVector::zeros(d)).collect();
    let mut partial: Option<DVector<f64>> = None;
    let mut out = DMatrix::zeros(d, m);
    let mut put = |i: usize, v: &DVector<f64>| out.set_column(i, v);

    for (i, &t) in targets.iter().enumerate() {
        let fixed = match partial.take() {
            Some(r) if (r.norm_squared() - t).abs() <= EXACT => r,
            Some(r) if r.norm_squared() > t || ones.is_empty() => match zeros.pop() {
                Some(z) => {
                    let (f, rest) = rotate_to(r, z, t);
                    partial = Some(rest);
                    f
                }
                None => r,
            },
            Some(r) => {
                let one = ones.pop().unwrap_or_else(|| DVector::zeros(d));
                let (f, rest) = rotate_to(one, r, t);
                partial = Some(rest);
                f
            }
            None if (t - 1.0).abs() <= EXACT => ones.pop().unwrap_or_else(|| DVector::zeros(d)),
            None => match (ones.pop(), zeros.pop()) {
                (Some(one), Some(z)) => {
                    let (f, rest) = rotate_to(one, z, t);
                    partial = Some(rest);
                    f
                }
                (Some(v), None) | (None, Some(v)) => v,
                (None, None) => DVector::zeros(d),
            },
        };
        put(i, &fixed);
        if let Some(r) = &partial {
            if r.norm_squared() <= EXACT {
                zeros.push(partial.take().unwrap());
            }
        }
    }
    out
}

/// Builds the sequence matrix for `vset`: full-width streams get orthogonal
/// columns, the others GWBE columns in the complement. Columns have squared
/// norm `N`; inactive columns are zero.
pub fn construct_sequences(vset: &VirtualUserSet, seed: u64) -> Result<SequenceMatrix> {
    let n = vset.processing_gain as usize;
    let sqrt_n = (n as f64).sqrt();
    let m2 = vset.orthogonal.len();
    if m2 > n {
        return Err(Error::TooManyOrthogonal(m2, n));
    }
    let q = random_orthogonal(n, seed);
    let mut s = DMatrix::zeros(n, vset.columns);
    for (j, &e) in vset.orthogonal.iter().enumerate() {
        s.set_column(vset.entries[e].column, &(q.column(j) * sqrt_n));
    }

    let complement = vset.complement();
    if !complement.is_empty() {
        let d = n - m2;
        let total: f64 = complement.iter().map(|&e| vset.entries[e].power).sum();
        if d == 0 {
            return Err(Error::InfeasibleComplement {
                stream: complement[0],
                power: vset.entries[complement[0]].power,
                level: 0.0,
            });
        }
        let level = total / d as f64;
        let mut targets = Vec::with_capacity(complement.len());
        for &e in &complement {
            let p = vset.entries[e].power;
            if p > level * (1.0 + CRITICAL_TOLERANCE) {
                return Err(Error::InfeasibleComplement {
                    stream: e,
                    power: p,
                    level,
                });
            }
            targets.push((p / level).min(1.0));
        }
        let frame = frame_with_norms(d, &targets);
        let basis = q.columns(m2, d);
        for (i, &e) in complement.iter().enumerate() {
            let b = frame.column(i);
            let unit = basis * (b / b.norm());
            s.set_column(vset.entries[e].column, &(unit * sqrt_n));
        }
    }
    Ok(SequenceMatrix {
        matrix: s,
        powers: vset.column_powers(),
    })
}

/// Worst deviations of a sequence matrix from the optimal structure, each
/// scaled by `N` (and by the common level for the complement Gram).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    /// Inner products of full-width columns with every other active column.
    pub orthogonality: f64,
    /// Power-weighted complement Gram against the scaled identity on the
    /// complement subspace.
    pub complement_gram: f64,
    /// Squared column norms against `N`, and the size of inactive columns.
    pub norms: f64,
}

impl GramReport {
    pub fn max(&self) -> f64 {
        self.orthogonality.max(self.complement_gram).max(self.norms)
    }

    pub fn passes(&self) -> bool {
        self.max() <= GRAM_TOLERANCE
    }
}

/// Checks `s` against the structure required by `vset`. Report only.
pub fn verify_gram(s: &SequenceMatrix, vset: &VirtualUserSet) -> Result<GramReport> {
    let n = vset.processing_gain as usize;
    let m = &s.matrix;
    if m.nrows() != n || m.ncols() != vset.columns {
        return Err(Error::Dimension(format!(
            "sequence matrix is {}x{}, expected {}x{}",
            m.nrows(),
            m.ncols(),
            n,
            vset.columns
        )));
    }
    let nf = n as f64;
    let col = |e: usize| m.column(vset.entries[e].column);

    let mut orthogonality: f64 = 0.0;
    for &a in &vset.orthogonal {
        for b in 0..vset.entries.len() {
            if b != a {
                orthogonality = orthogonality.max(col(a).dot(&col(b)).abs() / nf);
            }
        }
    }

    let mut norms: f64 = 0.0;
    let mut active = vec![false; vset.columns];
    for (e, v) in vset.entries.iter().enumerate() {
        active[v.column] = true;
        norms = norms.max((col(e).norm_squared() - nf).abs() / nf);
    }
    for (c, _) in active.iter().enumerate().filter(|(_, &a)| !a) {
        norms = norms.max(m.column(c).norm_squared() / nf);
    }

    let complement = vset.complement();
    let mut complement_gram = 0.0;
    if !complement.is_empty() && vset.complement_dim > 0 {
        let total: f64 = complement.iter().map(|&e| vset.entries[e].power).sum();
        let level = total / vset.complement_dim as f64;
        let mut diff = DMatrix::<f64>::identity(n, n) * (level * nf);
        for &e in &vset.orthogonal {
            let c = col(e);
            diff -= c * c.transpose() * level;
        }
        for &e in &complement {
            let c = col(e);
            diff -= c * c.transpose() * vset.entries[e].power;
        }
        complement_gram = diff.amax() / (level * nf);
    }
    Ok(GramReport {
        orthogonality,
        complement_gram,
        norms,
    })
}

/// `(1/2N) log2 det(I + S P Sᵀ / σ²)` in bits/chip for diagonal `P`.
pub fn logdet_sum_rate(s: &DMatrix<f64>, powers: &[f64], noise_variance: f64) -> Result<f64> {
    if powers.len() != s.ncols() {
        return Err(Error::LengthMismatch {
            what: "powers",
            expected: s.ncols(),
            found: powers.len(),
        });
    }
    if let Some(&p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::NotPsd { min_eigenvalue: p });
    }
    let p = DMatrix::from_diagonal(&DVector::from_column_slice(powers));
    logdet_with(s, &p, noise_variance)
}

/// [`logdet_sum_rate`] for a full symmetric positive semidefinite data
/// correlation matrix `P`.
pub fn logdet_sum_rate_full(s: &DMatrix<f64>, p: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    if p.nrows() != s.ncols() || p.ncols() != s.ncols() {
        return Err(Error::Dimension(format!(
            "data correlation is {}x{}, expected {}x{}",
            p.nrows(),
            p.ncols(),
            s.ncols(),
            s.ncols()
        )));
    }
    let eig = SymmetricEigen::new(p.clone()).eigenvalues;
    let min = eig.min();
    let scale = eig.amax().max(1.0);
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    logdet_with(s, p, noise_variance)
}

fn logdet_with(s: &DMatrix<f64>, p: &DMatrix<f64>, noise_variance: f64) -> Result<f64> {
    if !(noise_variance.is_finite() && noise_variance > 0.0) {
        return Err(Error::InvalidConstant {
            what: "noise_variance",
            value: noise_variance,
        });
    }
    let n = s.nrows();
    let mut m = s * p * s.transpose() / noise_variance;
    m = (&m + m.transpose()) * 0.5;
    m += DMatrix::<f64>::identity(n, n);
    let chol = m.cholesky().ok_or(Error::NotPsd {
        min_eigenvalue: f64::NAN,
    })?;
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(logdet / (2.0 * n as f64 * LN_2))
}
