//! Multi-code CDMA with per-user limits on the number of codes.
//!
//! A user with `n̄_k` codes over processing gain `N` behaves exactly like an
//! FDMA user with bandwidth cap `n̄_k / (2N)` sharing a total bandwidth of
//! `1/2` with noise PSD `2σ²`. The solver maps the instance, solves the FDMA
//! problem and then splits each user's bandwidth into per-code streams.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::fdma::{
    self, compare_share, AllocationResult, Classification, UserClass, CRITICAL_TOLERANCE,
};
use crate::model::{order_users, CdmaConstants, Limits, UserOrder, UserProfile};

/// A multi-code CDMA instance. Users may be in any order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmaInstance {
    pub powers: Vec<f64>,
    pub code_limits: Vec<u32>,
    pub constants: CdmaConstants,
    /// Per-user chip delays in `0..N` for the asynchronous variant.
    pub delays: Option<Vec<u32>>,
}

impl CdmaInstance {
    pub fn new(
        powers: Vec<f64>,
        code_limits: Vec<u32>,
        processing_gain: u32,
        noise_variance: f64,
    ) -> Result<Self> {
        let inst = CdmaInstance {
            powers,
            code_limits,
            constants: CdmaConstants::new(processing_gain, noise_variance)?,
            delays: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn with_delays(mut self, delays: Vec<u32>) -> Result<Self> {
        self.delays = Some(delays);
        self.validate()?;
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.powers.len()
    }

    pub fn processing_gain(&self) -> u32 {
        self.constants.processing_gain
    }

    pub fn noise_variance(&self) -> f64 {
        self.constants.noise_variance
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        self.profile().validate()?;
        if let Some(d) = &self.delays {
            if d.len() != self.num_users() {
                return Err(Error::LengthMismatch {
                    what: "delays",
                    expected: self.num_users(),
                    found: d.len(),
                });
            }
            let n = self.processing_gain();
            if let Some(user) = d.iter().position(|&t| t >= n) {
                return Err(Error::DelayOutOfRange {
                    user,
                    delay: d[user],
                    processing_gain: n,
                });
            }
        }
        Ok(())
    }

    /// Powers with code limits.
    pub fn profile(&self) -> UserProfile {
        UserProfile {
            powers: self.powers.clone(),
            limits: Limits::Codes(self.code_limits.clone()),
        }
    }

    /// The equivalent FDMA profile with caps `n̄_k / (2N)`.
    pub fn fdma_profile(&self) -> UserProfile {
        let two_n = 2.0 * f64::from(self.processing_gain());
        UserProfile {
            powers: self.powers.clone(),
            limits: Limits::Bandwidth(
                self.code_limits
                    .iter()
                    .map(|&n| f64::from(n) / two_n)
                    .collect(),
            ),
        }
    }

    /// Sorting by `p_k / n̄_k`, non-increasing.
    pub fn order(&self) -> UserOrder {
        order_users(&self.profile())
    }

    pub fn is_sorted(&self) -> bool {
        self.profile().is_sorted()
    }

    fn require_active(&self) -> Result<()> {
        match self.powers.iter().position(|&p| p == 0.0) {
            Some(index) => Err(Error::ZeroPower { index }),
            None => Ok(()),
        }
    }
}

/// How an undersized user spreads its bandwidth over its codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Every code gets the same bandwidth and power.
    EqualPower,
    /// As many full-width orthogonal codes as possible plus one remainder.
    #[default]
    MinCountMaxOrthogonal,
}

/// Per-stream allocation of every user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSplit {
    /// `w*_{k,l}`, one row per user with `n̄_k` entries.
    pub bandwidths: Vec<Vec<f64>>,
    /// `p*_{k,l}`, same layout.
    pub powers: Vec<Vec<f64>>,
    /// Active streams per user.
    pub active: Vec<u32>,
    /// Streams at the full width `1/(2N)`, i.e. with orthogonal codes.
    pub orthogonal: Vec<u32>,
}

/// Optimal multi-code allocation, reported in original user order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdmaSolution {
    pub order: UserOrder,
    /// Labels in sorted order; `due_shares` holds the code-count test values
    /// `n̂_k`.
    pub classification: Classification,
    /// FDMA-equivalent bandwidths `w*_k`.
    pub bandwidths: Vec<f64>,
    /// Fractions of the signal space `t*_k = 2 w*_k`.
    pub dimension_shares: Vec<f64>,
    pub strategy: SplitStrategy,
    pub streams: StreamSplit,
    /// Bits per chip.
    pub sum_rate: f64,
    /// Whether the sum rate equals the sum capacity of the MAC.
    pub achieves_mac: bool,
}

/// Maximum numbers of orthogonal codes and minimum numbers of active codes
/// over all optimal allocations, original order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamCounts {
    pub max_orthogonal: Vec<u32>,
    pub min_active: Vec<u32>,
}

/// Rounds `x` to the nearest integer when it is within the critical band.
fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= CRITICAL_TOLERANCE * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

/// Labels users from the code-count test
/// `n̂_k = (N − Σ_{k'<k} n̄_k') p_k / Σ_{k'≥k} p_k'`. Users must be sorted.
pub fn classify_multicode(instance: &CdmaInstance) -> Result<Classification> {
    instance.validate()?;
    instance.require_active()?;
    if let Some(index) = instance.profile().first_unsorted() {
        return Err(Error::Unsorted { index });
    }
    let p = &instance.powers;
    let k = p.len();
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = tail[i + 1] + p[i];
    }
    let mut used = 0u64;
    let mut labels = Vec::with_capacity(k);
    let mut due_shares = Vec::with_capacity(k);
    for i in 0..k {
        let free = f64::from(instance.processing_gain()) - used as f64;
        let n_hat = free * p[i] / tail[i];
        labels.push(compare_share(n_hat, f64::from(instance.code_limits[i])));
        due_shares.push(n_hat);
        used += u64::from(instance.code_limits[i]);
    }
    let k1 = labels.iter().filter(|l| l.is_oversized()).count();
    let k2 = labels.iter().filter(|l| !l.is_undersized()).count();
    Ok(Classification {
        labels,
        k1,
        k2,
        due_shares,
    })
}

/// Solves the instance through the FDMA equivalence and splits each user's
/// bandwidth over its codes with `strategy`.
pub fn solve_cdma(instance: &CdmaInstance, strategy: SplitStrategy) -> Result<CdmaSolution> {
    instance.validate()?;
    instance.require_active()?;
    let fdma_constants = instance.constants.equivalent_fdma();
    let AllocationResult {
        order,
        classification,
        bandwidths,
        sum_rate,
        ..
    } = fdma::allocate_closed_form(&instance.fdma_profile(), &fdma_constants)?;
    let streams = choose_stream_split(instance, &bandwidths, strategy)?;
    // test values in code units
    let two_n = 2.0 * f64::from(instance.processing_gain());
    let classification = Classification {
        due_shares: classification.due_shares.iter().map(|w| w * two_n).collect(),
        ..classification
    };
    Ok(CdmaSolution {
        achieves_mac: classification.k1 == 0,
        dimension_shares: bandwidths.iter().map(|w| 2.0 * w).collect(),
        order,
        classification,
        bandwidths,
        strategy,
        streams,
        sum_rate,
    })
}

/// Splits each user's bandwidth `w*_k` into `n̄_k` streams.
///
/// Users at their cap always get `n̄_k` full-width streams with power
/// `p_k / n̄_k`. Other users follow `strategy`; under
/// [`SplitStrategy::MinCountMaxOrthogonal`] the remainder stream sits at the
/// last code index.
pub fn choose_stream_split(
    instance: &CdmaInstance,
    w_star: &[f64],
    strategy: SplitStrategy,
) -> Result<StreamSplit> {
    instance.validate()?;
    let k = instance.num_users();
    if w_star.len() != k {
        return Err(Error::LengthMismatch {
            what: "w_star",
            expected: k,
            found: w_star.len(),
        });
    }
    let two_n = 2.0 * f64::from(instance.processing_gain());
    let unit = 1.0 / two_n;
    let mut split = StreamSplit {
        bandwidths: Vec::with_capacity(k),
        powers: Vec::with_capacity(k),
        active: Vec::with_capacity(k),
        orthogonal: Vec::with_capacity(k),
    };
    for (user, &w) in w_star.iter().enumerate() {
        let n_bar = instance.code_limits[user] as usize;
        let cap = n_bar as f64 * unit;
        let p = instance.powers[user];
        if !(w.is_finite() && w >= 0.0 && w <= cap * (1.0 + CRITICAL_TOLERANCE)) {
            return Err(Error::InvalidValue {
                what: "w_star",
                index: user,
                value: w,
                reason: "must lie in [0, n̄_k/(2N)]",
            });
        }
        let x = snap(w * two_n);
        let (ws, ps): (Vec<f64>, Vec<f64>) = if x >= n_bar as f64 {
            (vec![unit; n_bar], vec![p / n_bar as f64; n_bar])
        } else {
            let ws = match strategy {
                SplitStrategy::EqualPower => vec![w / n_bar as f64; n_bar],
                SplitStrategy::MinCountMaxOrthogonal => {
                    let full = x.floor() as usize;
                    let mut ws = vec![0.0; n_bar];
                    ws[..full].fill(unit);
                    if x > full as f64 {
                        ws[n_bar - 1] = w - full as f64 * unit;
                    }
                    ws
                }
            };
            let ps = ws
                .iter()
                .map(|&wl| if w > 0.0 { p * wl / w } else { 0.0 })
                .collect();
            (ws, ps)
        };
        split.active.push(ps.iter().filter(|&&q| q > 0.0).count() as u32);
        split
            .orthogonal
            .push(ws.iter().filter(|&&wl| wl == unit).count() as u32);
        split.bandwidths.push(ws);
        split.powers.push(ps);
    }
    Ok(split)
}

/// Extremes of the stream counts over all optimal allocations, from the
/// closed-form code counts. Users may be in any order.
pub fn stream_count_extremes(instance: &CdmaInstance) -> Result<StreamCounts> {
    instance.validate()?;
    instance.require_active()?;
    let order = instance.order();
    let sorted = CdmaInstance {
        powers: order.apply(&instance.powers),
        code_limits: order.apply(&instance.code_limits),
        constants: instance.constants,
        delays: None,
    };
    let cl = classify_multicode(&sorted)?;
    let k = sorted.num_users();
    let free = f64::from(sorted.processing_gain())
        - sorted.code_limits[..cl.k2].iter().map(|&n| f64::from(n)).sum::<f64>();
    let pooled: f64 = sorted.powers[cl.k2..].iter().sum();
    let mut max_orthogonal = Vec::with_capacity(k);
    let mut min_active = Vec::with_capacity(k);
    for i in 0..k {
        if i < cl.k2 {
            max_orthogonal.push(sorted.code_limits[i]);
            min_active.push(sorted.code_limits[i]);
        } else {
            let x = snap(free * sorted.powers[i] / pooled);
            max_orthogonal.push(x.floor() as u32);
            min_active.push(x.ceil() as u32);
        }
    }
    Ok(StreamCounts {
        max_orthogonal: order.unapply(&max_orthogonal, k, 0),
        min_active: order.unapply(&min_active, k, 0),
    })
}

/// Whether the restricted system reaches the MAC sum capacity: the user with
/// the largest `p_k / n̄_k` needs no more than `n̄_k` codes of its share
/// `N p_k / Σp`.
pub fn achieves_mac_capacity(instance: &CdmaInstance) -> Result<bool> {
    instance.validate()?;
    let order = instance.order();
    let first = order.permutation[0];
    let total: f64 = instance.powers.iter().sum();
    let share = f64::from(instance.processing_gain()) * instance.powers[first] / total;
    Ok(!compare_share(share, f64::from(instance.code_limits[first])).is_oversized())
}

/// MAC sum capacity in bits/chip, `½ log2(1 + Σp/σ²)`.
pub fn mac_capacity(instance: &CdmaInstance) -> f64 {
    fdma::mac_sum_capacity(&instance.powers, &instance.constants.equivalent_fdma())
}

/// Smallest code limits `⌈N p_k / Σp⌉` that reach the MAC sum capacity.
/// Users without power get one code so the profile stays valid.
pub fn minimal_upper_limit_profile(powers: &[f64], processing_gain: u32) -> Result<Vec<u32>> {
    if powers.is_empty() {
        return Err(Error::NoUsers);
    }
    if let Some(index) = powers.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::InvalidValue {
            what: "powers",
            index,
            value: powers[index],
            reason: "must be finite and non-negative",
        });
    }
    if processing_gain == 0 {
        return Err(Error::InvalidConstant {
            what: "processing_gain",
            value: 0.0,
        });
    }
    let total: f64 = powers.iter().sum();
    if total == 0.0 {
        return Err(Error::AllZeroPower);
    }
    let n = f64::from(processing_gain);
    Ok(powers
        .iter()
        .map(|&p| (snap(n * p / total).ceil() as u32).max(1))
        .collect())
}

/// Sum rate of the chip-asynchronous system. Delays are validated but the
/// optimum does not depend on them.
pub fn async_sum_rate(instance: &CdmaInstance) -> Result<f64> {
    instance.validate()?;
    Ok(solve_cdma(instance, SplitStrategy::default())?.sum_rate)
}

/// The two closed-form sum-rate expressions in bits/chip written directly in
/// code counts, around `K1` and around `K2`. Users may be in any order.
pub fn sum_rate_forms(instance: &CdmaInstance) -> Result<(f64, f64)> {
    instance.validate()?;
    instance.require_active()?;
    let order = instance.order();
    let p = order.apply(&instance.powers);
    let nb: Vec<f64> = order
        .apply(&instance.code_limits)
        .iter()
        .map(|&n| f64::from(n))
        .collect();
    let sorted = CdmaInstance {
        powers: p.clone(),
        code_limits: order.apply(&instance.code_limits),
        constants: instance.constants,
        delays: None,
    };
    let cl = classify_multicode(&sorted)?;
    let n = f64::from(instance.processing_gain());
    let s2 = instance.noise_variance();
    let form = |b: usize| {
        let capped: f64 = (0..b)
            .map(|i| nb[i] / (2.0 * n) * (n * p[i] / (s2 * nb[i])).ln_1p() / LN_2)
            .sum();
        let free = n - nb[..b].iter().sum::<f64>();
        let pooled: f64 = p[b..].iter().sum();
        if pooled == 0.0 {
            capped
        } else {
            capped + free / (2.0 * n) * (n * pooled / (s2 * free)).ln_1p() / LN_2
        }
    };
    Ok((form(cl.k1), form(cl.k2)))
}

/// Instance seen through complex-baseband signaling: each complex dimension
/// pairs two real ones and carries noise `2σ²`.
fn complex_equivalent(instance: &CdmaInstance) -> Result<CdmaInstance> {
    Ok(CdmaInstance {
        constants: CdmaConstants::new(
            instance.processing_gain(),
            2.0 * instance.noise_variance(),
        )?,
        ..instance.clone()
    })
}

/// Optimal sum rate in bits/s/Hz for complex-baseband signaling.
pub fn complex_sum_rate(instance: &CdmaInstance) -> Result<f64> {
    let real = solve_cdma(&complex_equivalent(instance)?, SplitStrategy::default())?;
    Ok(2.0 * real.sum_rate)
}

/// MAC sum capacity in bits/s/Hz for complex-baseband signaling,
/// `log2(1 + Σp/(2σ²))`.
pub fn complex_mac_capacity(instance: &CdmaInstance) -> Result<f64> {
    Ok(2.0 * mac_capacity(&complex_equivalent(instance)?))
}

impl CdmaSolution {
    /// Labels in original order.
    pub fn labels(&self) -> Vec<UserClass> {
        let k = self.bandwidths.len();
        self.order
            .unapply(&self.classification.labels, k, UserClass::Undersized)
    }
}
