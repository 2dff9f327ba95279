//! Sum-rate optimal restricted FDMA and TDMA.
//!
//! Users carry a power `p_k` and a bandwidth cap `w̄_k`. Unrestricted FDMA
//! gives each user a share of `w_tot` proportional to its power; with caps,
//! the strongest users (by minimal PSD `p_k / w̄_k`) may be *oversized*, i.e.
//! their proportional due share exceeds their cap. The optimum pins oversized
//! users at their caps and splits the rest proportionally among the others.
//!
//! All internal optimization uses natural logs; reported rates are in bits.

mod kkt;
mod oracle;

pub use kkt::{verify_kkt, KktCertificate, KktResiduals, KKT_TOLERANCE};
pub use oracle::oracle_solve;

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::model::{order_users, FdmaConstants, Limits, UserOrder, UserProfile};

/// Relative band inside which a due share counts as equal to its cap.
pub const CRITICAL_TOLERANCE: f64 = 1e-9;

/// User class relative to its cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserClass {
    Oversized,
    CriticallySized,
    Undersized,
}

impl UserClass {
    pub fn short(self) -> &'static str {
        match self {
            UserClass::Oversized => "O",
            UserClass::CriticallySized => "C",
            UserClass::Undersized => "U",
        }
    }

    pub fn is_oversized(self) -> bool {
        self == UserClass::Oversized
    }

    pub fn is_undersized(self) -> bool {
        self == UserClass::Undersized
    }
}

/// Per-user labels in sorted order together with the boundary counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub labels: Vec<UserClass>,
    /// Number of oversized users.
    pub k1: usize,
    /// Number of non-undersized (oversized or critically-sized) users.
    pub k2: usize,
    /// Test values `ŵ_k = (w_tot − Σ_{k'<k} w̄_k') p_k / Σ_{k'≥k} p_k'`.
    pub due_shares: Vec<f64>,
}

impl Classification {
    /// Labels form the prefix pattern O…O C…C U…U.
    pub fn is_monotone(&self) -> bool {
        self.labels.iter().enumerate().all(|(k, &l)| {
            let expected = if k < self.k1 {
                UserClass::Oversized
            } else if k < self.k2 {
                UserClass::CriticallySized
            } else {
                UserClass::Undersized
            };
            l == expected
        })
    }
}

/// Compares a proportional share against a cap with the critical band.
pub(crate) fn compare_share(share: f64, cap: f64) -> UserClass {
    if (share - cap).abs() <= CRITICAL_TOLERANCE * cap {
        UserClass::CriticallySized
    } else if share > cap {
        UserClass::Oversized
    } else {
        UserClass::Undersized
    }
}

/// Optimal allocation for a restricted FDMA instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Sorting of the (active) users by minimal PSD.
    pub order: UserOrder,
    /// Labels in sorted order.
    pub classification: Classification,
    /// Optimal bandwidths `w*_k` in original user order.
    pub bandwidths: Vec<f64>,
    /// `p_k / w*_k` in original order; `None` where `w*_k = 0`.
    pub psds: Vec<Option<f64>>,
    /// Shared PSD of the non-oversized users (0 if every user is oversized).
    pub common_psd: f64,
    /// Maximum sum rate in bits/s.
    pub sum_rate: f64,
}

impl AllocationResult {
    pub fn sorted_bandwidths(&self) -> Vec<f64> {
        self.order.apply(&self.bandwidths)
    }

    pub fn sorted_psds(&self) -> Vec<Option<f64>> {
        self.order.apply(&self.psds)
    }
}

/// One pass of the iterative algorithm: the user list at the start of the
/// pass and the proportional due shares computed for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSnapshot {
    /// Sorted indices still in the user list.
    pub users: Vec<usize>,
    /// Bandwidth left for those users.
    pub remaining_bandwidth: f64,
    /// Due share of each listed user.
    pub due_shares: Vec<f64>,
    /// Whether the first listed user was capped and removed in this pass.
    pub capped_first: bool,
}

/// Sorted, strictly positive FDMA data the solvers work on.
#[derive(Debug, Clone)]
pub(crate) struct SortedInstance {
    pub order: UserOrder,
    pub powers: Vec<f64>,
    pub caps: Vec<f64>,
    pub total_bandwidth: f64,
    pub noise_psd: f64,
}

fn bandwidth_caps(profile: &UserProfile) -> Result<&[f64]> {
    match &profile.limits {
        Limits::Bandwidth(v) => Ok(v),
        other => Err(Error::WrongLimits {
            expected: "bandwidth",
            found: other.kind(),
        }),
    }
}

impl SortedInstance {
    pub fn new(profile: &UserProfile, constants: &FdmaConstants) -> Result<Self> {
        profile.validate()?;
        constants.validate()?;
        let caps = bandwidth_caps(profile)?;
        if let Some(index) = profile.powers.iter().position(|&p| p == 0.0) {
            return Err(Error::ZeroPower { index });
        }
        let order = order_users(profile);
        Ok(SortedInstance {
            powers: order.apply(&profile.powers),
            caps: order.apply(caps),
            order,
            total_bandwidth: constants.total_bandwidth,
            noise_psd: constants.noise_psd,
        })
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn classify(&self) -> Classification {
        classify_sorted(&self.powers, &self.caps, self.total_bandwidth)
    }
}

pub(crate) fn classify_sorted(powers: &[f64], caps: &[f64], total_bandwidth: f64) -> Classification {
    let k = powers.len();
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = tail[i + 1] + powers[i];
    }
    let mut used = 0.0;
    let mut labels = Vec::with_capacity(k);
    let mut due_shares = Vec::with_capacity(k);
    for i in 0..k {
        let share = (total_bandwidth - used) * powers[i] / tail[i];
        labels.push(compare_share(share, caps[i]));
        due_shares.push(share);
        used += caps[i];
    }
    let k1 = labels.iter().filter(|l| l.is_oversized()).count();
    let k2 = labels.iter().filter(|l| !l.is_undersized()).count();
    Classification {
        labels,
        k1,
        k2,
        due_shares,
    }
}

/// Classifies users that are already in non-increasing minimal-PSD order.
/// The result does not depend on the noise PSD.
pub fn classify(profile: &UserProfile, constants: &FdmaConstants) -> Result<Classification> {
    profile.validate()?;
    constants.validate()?;
    let caps = bandwidth_caps(profile)?;
    if let Some(index) = profile.powers.iter().position(|&p| p == 0.0) {
        return Err(Error::ZeroPower { index });
    }
    if let Some(index) = profile.first_unsorted() {
        return Err(Error::Unsorted { index });
    }
    Ok(classify_sorted(
        &profile.powers,
        caps,
        constants.total_bandwidth,
    ))
}

/// `w log2(1 + p/(N0 w))`, zero at `w = 0`.
pub(crate) fn rate_term(w: f64, p: f64, noise_psd: f64) -> f64 {
    if w <= 0.0 {
        0.0
    } else {
        w * (p / (noise_psd * w)).ln_1p() / LN_2
    }
}

/// Maximum sum rate written around a boundary index `b`: users `< b` sit at
/// their caps and the remaining bandwidth is pooled by the rest.
pub(crate) fn boundary_sum_rate(
    powers: &[f64],
    caps: &[f64],
    total_bandwidth: f64,
    noise_psd: f64,
    boundary: usize,
) -> f64 {
    let capped: f64 = (0..boundary)
        .map(|i| rate_term(caps[i], powers[i], noise_psd))
        .sum();
    let residual = total_bandwidth - caps[..boundary].iter().sum::<f64>();
    let pooled: f64 = powers[boundary..].iter().sum();
    if pooled == 0.0 {
        capped
    } else {
        capped + rate_term(residual, pooled, noise_psd)
    }
}

/// Bandwidths in sorted order from the boundary form around `boundary`.
pub(crate) fn boundary_bandwidths(
    powers: &[f64],
    caps: &[f64],
    total_bandwidth: f64,
    boundary: usize,
) -> Vec<f64> {
    let residual = total_bandwidth - caps[..boundary].iter().sum::<f64>();
    let pooled: f64 = powers[boundary..].iter().sum();
    (0..powers.len())
        .map(|i| {
            if i < boundary {
                caps[i]
            } else {
                residual * powers[i] / pooled
            }
        })
        .collect()
}

/// Common PSD of the non-oversized users; 0 when every user is oversized.
pub(crate) fn common_psd(powers: &[f64], caps: &[f64], total_bandwidth: f64, k1: usize) -> f64 {
    let pooled: f64 = powers[k1..].iter().sum();
    if pooled == 0.0 {
        0.0
    } else {
        pooled / (total_bandwidth - caps[..k1].iter().sum::<f64>())
    }
}

fn finish(inst: &SortedInstance, classification: Classification, sorted_w: Vec<f64>) -> AllocationResult {
    let k = inst.len();
    let psd_sorted: Vec<Option<f64>> = sorted_w
        .iter()
        .zip(&inst.powers)
        .map(|(&w, &p)| (w > 0.0).then(|| p / w))
        .collect();
    let sum_rate = boundary_sum_rate(
        &inst.powers,
        &inst.caps,
        inst.total_bandwidth,
        inst.noise_psd,
        classification.k1,
    );
    let common = common_psd(&inst.powers, &inst.caps, inst.total_bandwidth, classification.k1);
    AllocationResult {
        bandwidths: inst.order.unapply(&sorted_w, k, 0.0),
        psds: inst.order.unapply(&psd_sorted, k, None),
        order: inst.order.clone(),
        classification,
        common_psd: common,
        sum_rate,
    }
}

pub(crate) fn closed_form_sorted(inst: &SortedInstance) -> AllocationResult {
    let classification = inst.classify();
    // K2 form: critically-sized users land exactly on their caps.
    let w = boundary_bandwidths(
        &inst.powers,
        &inst.caps,
        inst.total_bandwidth,
        classification.k2,
    );
    finish(inst, classification, w)
}

/// Optimal bandwidths from the classification: oversized users get their
/// caps, everybody else a proportional share of what is left.
pub fn allocate_closed_form(
    profile: &UserProfile,
    constants: &FdmaConstants,
) -> Result<AllocationResult> {
    let inst = SortedInstance::new(profile, constants)?;
    Ok(closed_form_sorted(&inst))
}

/// The two closed-form bandwidth expressions (around `K1` and around `K2`),
/// in sorted order. They agree up to rounding.
pub fn closed_form_variants(
    profile: &UserProfile,
    constants: &FdmaConstants,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let inst = SortedInstance::new(profile, constants)?;
    let c = inst.classify();
    Ok((
        boundary_bandwidths(&inst.powers, &inst.caps, inst.total_bandwidth, c.k1),
        boundary_bandwidths(&inst.powers, &inst.caps, inst.total_bandwidth, c.k2),
    ))
}

/// The two closed-form maximum sum-rate expressions (around `K1` and `K2`)
/// in bits/s.
pub fn sum_rate_variants(profile: &UserProfile, constants: &FdmaConstants) -> Result<(f64, f64)> {
    let inst = SortedInstance::new(profile, constants)?;
    let c = inst.classify();
    let at = |b| {
        boundary_sum_rate(
            &inst.powers,
            &inst.caps,
            inst.total_bandwidth,
            inst.noise_psd,
            b,
        )
    };
    Ok((at(c.k1), at(c.k2)))
}

/// Builds the optimum by repeated proportional sharing: cap the first user
/// while its due share exceeds its cap, then hand out due shares to the rest.
pub fn allocate_iterative(
    profile: &UserProfile,
    constants: &FdmaConstants,
) -> Result<AllocationResult> {
    allocate_iterative_traced(profile, constants).map(|(r, _)| r)
}

/// [`allocate_iterative`] plus the due shares of every pass.
pub fn allocate_iterative_traced(
    profile: &UserProfile,
    constants: &FdmaConstants,
) -> Result<(AllocationResult, Vec<IterationSnapshot>)> {
    let inst = SortedInstance::new(profile, constants)?;
    let (w, trace) = iterate_sorted(&inst);
    let classification = inst.classify();
    Ok((finish(&inst, classification, w), trace))
}

fn iterate_sorted(inst: &SortedInstance) -> (Vec<f64>, Vec<IterationSnapshot>) {
    let p = &inst.powers;
    let caps = &inst.caps;
    let mut w = vec![0.0; inst.len()];
    let mut trace = Vec::new();
    // already sorted by minimal PSD, and dropping the head keeps it sorted
    let mut list: Vec<usize> = (0..inst.len()).collect();
    let mut remaining = inst.total_bandwidth;
    while !list.is_empty() {
        let total: f64 = list.iter().map(|&i| p[i]).sum();
        let due: Vec<f64> = list.iter().map(|&i| remaining * p[i] / total).collect();
        let first = list[0];
        let capped = compare_share(due[0], caps[first]).is_oversized();
        trace.push(IterationSnapshot {
            users: list.clone(),
            remaining_bandwidth: remaining,
            due_shares: due.clone(),
            capped_first: capped,
        });
        if capped {
            w[first] = caps[first];
            remaining -= caps[first];
            list.remove(0);
        } else {
            for (&i, &share) in list.iter().zip(&due) {
                w[i] = match compare_share(share, caps[i]) {
                    UserClass::CriticallySized => caps[i],
                    _ => share,
                };
            }
            break;
        }
    }
    (w, trace)
}

/// `Σ_k w_k log2(1 + p_k/(N0 w_k))` in bits/s, with zero-bandwidth terms
/// taken as 0.
pub fn fdma_sum_rate(
    profile: &UserProfile,
    constants: &FdmaConstants,
    bandwidths: &[f64],
) -> Result<f64> {
    profile.validate()?;
    constants.validate()?;
    if bandwidths.len() != profile.num_users() {
        return Err(Error::LengthMismatch {
            what: "bandwidths",
            expected: profile.num_users(),
            found: bandwidths.len(),
        });
    }
    if let Some(index) = bandwidths.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidValue {
            what: "bandwidths",
            index,
            value: bandwidths[index],
            reason: "must be finite and non-negative",
        });
    }
    Ok(bandwidths
        .iter()
        .zip(&profile.powers)
        .map(|(&w, &p)| rate_term(w, p, constants.noise_psd))
        .sum())
}

/// Sum capacity of the Gaussian MAC, `w_tot log2(1 + Σp/(N0 w_tot))`.
pub fn mac_sum_capacity(powers: &[f64], constants: &FdmaConstants) -> f64 {
    let total: f64 = powers.iter().sum();
    rate_term(constants.total_bandwidth, total, constants.noise_psd)
}

/// TDMA solution expressed in duty cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmaResult {
    /// Optimal duty cycles `t*_k` in original order.
    pub duty_cycles: Vec<f64>,
    /// Solution of the FDMA instance with caps `t̄_k w_tot`.
    pub allocation: AllocationResult,
}

/// Solves restricted TDMA through the FDMA instance with `w̄_k = t̄_k w_tot`.
pub fn solve_tdma(profile: &UserProfile, constants: &FdmaConstants) -> Result<TdmaResult> {
    let fdma = tdma_as_fdma(profile, constants)?;
    let allocation = if fdma.powers.contains(&0.0) {
        extend_zero_power(&fdma, constants)?
    } else {
        allocate_closed_form(&fdma, constants)?
    };
    let duty_cycles = allocation
        .bandwidths
        .iter()
        .map(|w| w / constants.total_bandwidth)
        .collect();
    Ok(TdmaResult {
        duty_cycles,
        allocation,
    })
}

/// The FDMA profile equivalent to a duty-cycle profile.
pub fn tdma_as_fdma(profile: &UserProfile, constants: &FdmaConstants) -> Result<UserProfile> {
    profile.validate()?;
    constants.validate()?;
    let caps = match &profile.limits {
        Limits::DutyCycle(t) => t.iter().map(|t| t * constants.total_bandwidth).collect(),
        other => {
            return Err(Error::WrongLimits {
                expected: "duty_cycle",
                found: other.kind(),
            })
        }
    };
    UserProfile::with_bandwidths(profile.powers.clone(), caps)
}

/// Like [`allocate_closed_form`] but tolerates zero-power users, which get
/// zero bandwidth. The returned order and classification cover only the
/// active users (the permutation maps into original indices).
pub fn extend_zero_power(
    profile: &UserProfile,
    constants: &FdmaConstants,
) -> Result<AllocationResult> {
    profile.validate()?;
    constants.validate()?;
    let caps = bandwidth_caps(profile)?;
    let active: Vec<usize> = (0..profile.num_users())
        .filter(|&k| profile.powers[k] > 0.0)
        .collect();
    let sub = UserProfile::with_bandwidths(
        active.iter().map(|&k| profile.powers[k]).collect(),
        active.iter().map(|&k| caps[k]).collect(),
    )?;
    let r = allocate_closed_form(&sub, constants)?;
    let total = profile.num_users();
    let mut bandwidths = vec![0.0; total];
    let mut psds = vec![None; total];
    for (j, &k) in active.iter().enumerate() {
        bandwidths[k] = r.bandwidths[j];
        psds[k] = r.psds[j];
    }
    let order = UserOrder {
        permutation: r.order.permutation.iter().map(|&j| active[j]).collect(),
        minimal_psds: r.order.minimal_psds.clone(),
    };
    Ok(AllocationResult {
        order,
        classification: r.classification,
        bandwidths,
        psds,
        common_psd: r.common_psd,
        sum_rate: r.sum_rate,
    })
}
