//! Domain types shared by every solver: system constants, user profiles, the
//! canonical user ordering, and canonicalization of correlation/sequence
//! pairs to diagonal powers with norm-`N` sequences.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of a restricted FDMA (or TDMA) system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdmaConstants {
    /// Total available bandwidth `w_tot` in Hz.
    pub total_bandwidth: f64,
    /// One-sided noise PSD `N0` in W/Hz.
    pub noise_psd: f64,
}

impl FdmaConstants {
    pub fn new(total_bandwidth: f64, noise_psd: f64) -> Result<Self> {
        let c = FdmaConstants {
            total_bandwidth,
            noise_psd,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        positive_constant("total_bandwidth", self.total_bandwidth)?;
        positive_constant("noise_psd", self.noise_psd)
    }
}

/// Constants of a synchronous multi-code CDMA system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdmaConstants {
    /// Processing gain `N` (chips per symbol).
    pub processing_gain: u32,
    /// Noise variance `σ²` per real dimension.
    pub noise_variance: f64,
}

impl CdmaConstants {
    pub fn new(processing_gain: u32, noise_variance: f64) -> Result<Self> {
        let c = CdmaConstants {
            processing_gain,
            noise_variance,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.processing_gain == 0 {
            return Err(Error::InvalidConstant {
                what: "processing_gain",
                value: 0.0,
            });
        }
        positive_constant("noise_variance", self.noise_variance)
    }

    /// The FDMA system with the same maximum sum rate: total bandwidth 1/2
    /// and one-sided noise PSD `2σ²`.
    pub fn equivalent_fdma(&self) -> FdmaConstants {
        FdmaConstants {
            total_bandwidth: 0.5,
            noise_psd: 2.0 * self.noise_variance,
        }
    }
}

fn positive_constant(what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConstant { what, value })
    }
}

/// Per-user upper limits on the resource each user may occupy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limits {
    /// Bandwidth caps `w̄_k` in Hz.
    Bandwidth(Vec<f64>),
    /// Duty-cycle caps `t̄_k`.
    DutyCycle(Vec<f64>),
    /// Caps `n̄_k` on the number of multi-codes.
    Codes(Vec<u32>),
}

impl Limits {
    pub fn len(&self) -> usize {
        match self {
            Limits::Bandwidth(v) | Limits::DutyCycle(v) => v.len(),
            Limits::Codes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Limits::Bandwidth(_) => "bandwidth",
            Limits::DutyCycle(_) => "duty_cycle",
            Limits::Codes(_) => "codes",
        }
    }

    /// Limit of user `k` as a real number.
    pub fn value(&self, k: usize) -> f64 {
        match self {
            Limits::Bandwidth(v) | Limits::DutyCycle(v) => v[k],
            Limits::Codes(v) => f64::from(v[k]),
        }
    }
}

/// Per-user powers together with their resource limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub powers: Vec<f64>,
    pub limits: Limits,
}

impl UserProfile {
    /// Builds a validated profile. Zero powers are allowed as long as at
    /// least one user is active.
    pub fn new(powers: Vec<f64>, limits: Limits) -> Result<Self> {
        let profile = UserProfile { powers, limits };
        profile.validate()?;
        Ok(profile)
    }

    pub fn with_bandwidths(powers: Vec<f64>, caps: Vec<f64>) -> Result<Self> {
        Self::new(powers, Limits::Bandwidth(caps))
    }

    pub fn with_duty_cycles(powers: Vec<f64>, caps: Vec<f64>) -> Result<Self> {
        Self::new(powers, Limits::DutyCycle(caps))
    }

    pub fn with_codes(powers: Vec<f64>, caps: Vec<u32>) -> Result<Self> {
        Self::new(powers, Limits::Codes(caps))
    }

    pub fn num_users(&self) -> usize {
        self.powers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.powers.is_empty() {
            return Err(Error::NoUsers);
        }
        if self.limits.len() != self.powers.len() {
            return Err(Error::LengthMismatch {
                what: "limits",
                expected: self.powers.len(),
                found: self.limits.len(),
            });
        }
        for (index, &p) in self.powers.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidValue {
                    what: "powers",
                    index,
                    value: p,
                    reason: "must be finite and non-negative",
                });
            }
        }
        for index in 0..self.limits.len() {
            let v = self.limits.value(index);
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue {
                    what: "limits",
                    index,
                    value: v,
                    reason: "must be finite and positive",
                });
            }
            if matches!(self.limits, Limits::DutyCycle(_)) && v > 1.0 {
                return Err(Error::InvalidValue {
                    what: "limits",
                    index,
                    value: v,
                    reason: "duty cycles cannot exceed 1",
                });
            }
        }
        if self.powers.iter().all(|&p| p == 0.0) {
            return Err(Error::AllZeroPower);
        }
        Ok(())
    }

    /// `p_k / limit_k` for every user, in the profile's own order.
    pub fn minimal_psds(&self) -> Vec<f64> {
        self.powers
            .iter()
            .enumerate()
            .map(|(k, p)| p / self.limits.value(k))
            .collect()
    }

    /// Returns the profile with users rearranged into `order`.
    pub fn permuted(&self, order: &UserOrder) -> UserProfile {
        let powers = order.apply(&self.powers);
        let limits = match &self.limits {
            Limits::Bandwidth(v) => Limits::Bandwidth(order.apply(v)),
            Limits::DutyCycle(v) => Limits::DutyCycle(order.apply(v)),
            Limits::Codes(v) => Limits::Codes(order.apply(v)),
        };
        UserProfile { powers, limits }
    }

    /// Whether users already appear in non-increasing minimal-PSD order.
    pub fn is_sorted(&self) -> bool {
        self.first_unsorted().is_none()
    }

    pub(crate) fn first_unsorted(&self) -> Option<usize> {
        let psd = self.minimal_psds();
        psd.windows(2).position(|w| w[1] > w[0]).map(|i| i + 1)
    }
}

/// A permutation that sorts users by non-increasing minimal PSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserOrder {
    /// `permutation[sorted_index] = original_index`.
    pub permutation: Vec<usize>,
    /// Minimal PSDs `p_k / limit_k` in sorted order.
    pub minimal_psds: Vec<f64>,
}

impl UserOrder {
    pub fn identity(minimal_psds: Vec<f64>) -> Self {
        UserOrder {
            permutation: (0..minimal_psds.len()).collect(),
            minimal_psds,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// Gathers `values` (original order) into sorted order.
    pub fn apply<T: Clone>(&self, values: &[T]) -> Vec<T> {
        self.permutation.iter().map(|&i| values[i].clone()).collect()
    }

    /// Scatters sorted-order `values` back to original order, filling
    /// positions not covered by the permutation with `fill`.
    pub fn unapply<T: Clone>(&self, values: &[T], total: usize, fill: T) -> Vec<T> {
        let mut out = vec![fill; total];
        for (sorted, &orig) in self.permutation.iter().enumerate() {
            out[orig] = values[sorted].clone();
        }
        out
    }

    /// Sorted position of every original index (`None` if not covered).
    pub fn inverse(&self, total: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; total];
        for (sorted, &orig) in self.permutation.iter().enumerate() {
            inv[orig] = Some(sorted);
        }
        inv
    }
}

/// Sorts users by non-increasing `p_k / limit_k`. Ties keep their original
/// order.
pub fn order_users(profile: &UserProfile) -> UserOrder {
    let psd = profile.minimal_psds();
    let mut permutation: Vec<usize> = (0..psd.len()).collect();
    permutation.sort_by(|&a, &b| psd[b].total_cmp(&psd[a]));
    let minimal_psds = permutation.iter().map(|&i| psd[i]).collect();
    UserOrder {
        permutation,
        minimal_psds,
    }
}

/// Relative eigenvalue floor below which a correlation eigenvalue is
/// treated as zero.
const EIGEN_CLAMP: f64 = 1e-12;
/// Relative tolerance on negative eigenvalues before a block is rejected.
pub(crate) const PSD_TOLERANCE: f64 = 1e-9;
/// Relative tolerance on the per-user power constraint.
const POWER_TOLERANCE: f64 = 1e-9;

/// Block-diagonal data correlation `P = diag(P_1, …, P_K)` paired with the
/// signature matrix `S = [S_1, …, S_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPair {
    /// One symmetric PSD block per user, of size `n̄_k × n̄_k`.
    pub blocks: Vec<DMatrix<f64>>,
    /// `N × Σ n̄_k` signature matrix.
    pub sequences: DMatrix<f64>,
    /// Per-user power `p_k = tr(S_k P_k S_kᵀ) / N`.
    pub powers: Vec<f64>,
}

impl CorrelationPair {
    pub fn new(
        blocks: Vec<DMatrix<f64>>,
        sequences: DMatrix<f64>,
        powers: Vec<f64>,
    ) -> Result<Self> {
        let pair = CorrelationPair {
            blocks,
            sequences,
            powers,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn processing_gain(&self) -> usize {
        self.sequences.nrows()
    }

    /// Column offset of each user's block inside `sequences`.
    pub fn offsets(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .scan(0, |acc, b| {
                let start = *acc;
                *acc += b.nrows();
                Some(start)
            })
            .collect()
    }

    pub fn user_sequences(&self, user: usize) -> DMatrix<f64> {
        let start = self.offsets()[user];
        self.sequences
            .columns(start, self.blocks[user].nrows())
            .into_owned()
    }

    /// `Σ_k S_k P_k S_kᵀ`.
    pub fn signal_correlation(&self) -> DMatrix<f64> {
        let n = self.processing_gain();
        let mut acc = DMatrix::zeros(n, n);
        for (k, block) in self.blocks.iter().enumerate() {
            let s = self.user_sequences(k);
            acc += &s * block * s.transpose();
        }
        acc
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::NoUsers);
        }
        if self.powers.len() != self.blocks.len() {
            return Err(Error::LengthMismatch {
                what: "powers",
                expected: self.blocks.len(),
                found: self.powers.len(),
            });
        }
        let cols: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        if cols != self.sequences.ncols() || self.sequences.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "sequence matrix is {}x{}, blocks need {} columns",
                self.sequences.nrows(),
                self.sequences.ncols(),
                cols
            )));
        }
        let n = self.processing_gain() as f64;
        for (k, block) in self.blocks.iter().enumerate() {
            if !block.is_square() {
                return Err(Error::Dimension(format!("block {k} is not square")));
            }
            let asym = (block - block.transpose()).amax();
            if asym > PSD_TOLERANCE * block.amax().max(1.0) {
                return Err(Error::Dimension(format!("block {k} is not symmetric")));
            }
            if block.nrows() > 0 {
                let eig = SymmetricEigen::new(block.clone()).eigenvalues;
                let min = eig.min();
                if min < -PSD_TOLERANCE * eig.amax().max(1.0) {
                    return Err(Error::NotPsd {
                        min_eigenvalue: min,
                    });
                }
            }
            let s = self.user_sequences(k);
            let found = (&s * block * s.transpose()).trace() / n;
            let expected = self.powers[k];
            if (found - expected).abs() > POWER_TOLERANCE * expected.abs().max(1.0) {
                return Err(Error::PowerMismatch {
                    user: k,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }

    /// Whether every block is diagonal with non-negative entries.
    pub fn is_diagonal(&self) -> bool {
        self.blocks.iter().all(|b| {
            (0..b.nrows()).all(|i| {
                b[(i, i)] >= 0.0 && (0..b.ncols()).all(|j| i == j || b[(i, j)] == 0.0)
            })
        })
    }
}

/// Rewrites a pair so that every block is diagonal and non-negative and every
/// sequence column has squared norm `N`, leaving `S P Sᵀ` unchanged.
///
/// Each block is eigendecomposed as `P_k = U_k diag(p̃) U_kᵀ`; the rotated
/// columns `s̃ = S_k U_k` are rescaled to `√N s̃/‖s̃‖` while the powers absorb
/// the scale, `p̂ = p̃ ‖s̃‖² / N`. Columns that end up carrying no power are
/// replaced by a norm-`N` coordinate vector.
pub fn canonicalize(pair: &CorrelationPair) -> Result<CorrelationPair> {
    pair.validate()?;
    let n = pair.processing_gain();
    let sqrt_n = (n as f64).sqrt();
    let mut blocks = Vec::with_capacity(pair.blocks.len());
    let mut sequences = DMatrix::zeros(n, pair.sequences.ncols());
    let offsets = pair.offsets();

    for (k, block) in pair.blocks.iter().enumerate() {
        let m = block.nrows();
        if m == 0 {
            blocks.push(DMatrix::zeros(0, 0));
            continue;
        }
        let eig = SymmetricEigen::new(block.clone());
        let floor = EIGEN_CLAMP * eig.eigenvalues.amax();
        let rotated = pair.user_sequences(k) * &eig.eigenvectors;
        let mut diag = DVector::zeros(m);
        for l in 0..m {
            let lambda = eig.eigenvalues[l];
            let lambda = if lambda <= floor { 0.0 } else { lambda };
            let col = rotated.column(l);
            let norm_sq = col.norm_squared();
            let power = lambda * norm_sq / n as f64;
            let target = offsets[k] + l;
            if power > 0.0 {
                diag[l] = power;
                sequences
                    .column_mut(target)
                    .copy_from(&(col * (sqrt_n / norm_sq.sqrt())));
            } else {
                // arbitrary norm-N vector for a silent stream
                sequences[(l % n, target)] = sqrt_n;
            }
        }
        blocks.push(DMatrix::from_diagonal(&diag));
    }

    Ok(CorrelationPair {
        blocks,
        sequences,
        powers: pair.powers.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_user_profile_is_already_sorted() {
        let p = UserProfile::with_bandwidths(vec![30., 15., 10., 7., 3.], vec![0.125; 5]).unwrap();
        let order = order_users(&p);
        assert_eq!(order.permutation, vec![0, 1, 2, 3, 4]);
        assert!(p.is_sorted());
    }

    #[test]
    fn ties_keep_original_order() {
        let p = UserProfile::with_bandwidths(vec![1., 1.], vec![1., 1.]).unwrap();
        assert_eq!(order_users(&p).permutation, vec![0, 1]);
    }

    #[test]
    fn swaps_weaker_first_user() {
        let p = UserProfile::with_bandwidths(vec![1., 4.], vec![1., 1.]).unwrap();
        let order = order_users(&p);
        assert_eq!(order.permutation, vec![1, 0]);
        assert_eq!(order.minimal_psds, vec![4., 1.]);
        assert_eq!(order.unapply(&order.apply(&[10, 20]), 2, 0), vec![10, 20]);
    }

    #[test]
    fn profile_validation() {
        assert_eq!(
            UserProfile::with_bandwidths(vec![], vec![]),
            Err(Error::NoUsers)
        );
        assert_eq!(
            UserProfile::with_bandwidths(vec![0., 0.], vec![1., 1.]),
            Err(Error::AllZeroPower)
        );
        assert!(matches!(
            UserProfile::with_bandwidths(vec![1.], vec![0.]),
            Err(Error::InvalidValue { .. })
        ));
        assert!(matches!(
            UserProfile::with_codes(vec![1., 2.], vec![1]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            UserProfile::with_bandwidths(vec![f64::NAN], vec![1.]),
            Err(Error::InvalidValue { .. })
        ));
        assert!(FdmaConstants::new(0.0, 1.0).is_err());
        assert!(CdmaConstants::new(0, 1.0).is_err());
    }

    #[test]
    fn canonicalize_diagonal_identity_case() {
        let n = 4;
        let s = DMatrix::<f64>::identity(n, 2) * 2.0; // squared norm 4 = N
        let block = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let pair = CorrelationPair::new(vec![block.clone()], s.clone(), vec![4.0]).unwrap();
        let out = canonicalize(&pair).unwrap();
        assert!(out.is_diagonal());
        let diff = (out.signal_correlation() - pair.signal_correlation()).norm();
        assert!(diff < 1e-12);
        let mut got: Vec<f64> = out.blocks[0].diagonal().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        assert!((got[0] - 1.0).abs() < 1e-12 && (got[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn canonicalize_rotated_block() {
        // P = U diag(2, 0) Uᵀ with a 30° rotation, S = √N · [e1 e2]
        let n = 4;
        let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
        let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let block = &u * DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])) * u.transpose();
        let seq = DMatrix::<f64>::identity(n, 2) * (n as f64).sqrt();
        let power = (&seq * &block * seq.transpose()).trace() / n as f64;
        let pair = CorrelationPair::new(vec![block], seq, vec![power]).unwrap();
        let out = canonicalize(&pair).unwrap();
        assert!(out.is_diagonal());
        let mut got: Vec<f64> = out.blocks[0].diagonal().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        assert!(got[0].abs() < 1e-12 && (got[1] - 2.0).abs() < 1e-12);
        assert!((out.signal_correlation() - pair.signal_correlation()).norm() < 1e-12);
        for col in out.sequences.column_iter() {
            assert!((col.norm_squared() - n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn canonicalize_rejects_bad_pairs() {
        let seq = DMatrix::<f64>::identity(2, 2);
        let not_psd = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            CorrelationPair::new(vec![not_psd], seq.clone(), vec![0.0]),
            Err(Error::NotPsd { .. })
        ));
        let block = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            CorrelationPair::new(vec![block], seq, vec![5.0]),
            Err(Error::PowerMismatch { .. })
        ));
    }
}
