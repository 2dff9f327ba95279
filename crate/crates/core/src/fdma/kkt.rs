use serde::{Deserialize, Serialize};

use super::SortedInstance;
use crate::error::{Error, Result};
use crate::model::{FdmaConstants, UserProfile};

/// Threshold applied to every normalized residual.
pub const KKT_TOLERANCE: f64 = 1e-9;

/// Worst violation of each optimality condition.
///
/// Bandwidth-valued residuals are divided by `w_tot`; stationarity is
/// divided by `1 + μ`. The rest are plain multiplier values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `|g(p_k/w_k) − μ_k + μ̃_k − μ|`
    pub stationarity: f64,
    /// `w_k ≤ w̄_k`
    pub upper_bound: f64,
    /// `w_k ≥ 0`
    pub nonnegativity: f64,
    /// `Σ w_k ≤ w_tot`
    pub total_bandwidth: f64,
    /// `μ_k ≥ 0`
    pub dual_upper: f64,
    /// `μ_k (w_k − w̄_k) = 0`
    pub slack_upper: f64,
    /// `μ̃_k ≥ 0`
    pub dual_nonneg: f64,
    /// `μ̃_k w_k = 0`
    pub slack_nonneg: f64,
    /// `μ ≥ 0`
    pub dual_total: f64,
    /// `μ (Σ w_k − w_tot) = 0`
    pub slack_total: f64,
}

impl KktResiduals {
    pub fn as_array(&self) -> [(&'static str, f64); 10] {
        [
            ("stationarity", self.stationarity),
            ("upper_bound", self.upper_bound),
            ("nonnegativity", self.nonnegativity),
            ("total_bandwidth", self.total_bandwidth),
            ("dual_upper", self.dual_upper),
            ("slack_upper", self.slack_upper),
            ("dual_nonneg", self.dual_nonneg),
            ("slack_nonneg", self.slack_nonneg),
            ("dual_total", self.dual_total),
            ("slack_total", self.slack_total),
        ]
    }

    pub fn max(&self) -> f64 {
        self.as_array()
            .iter()
            .map(|&(_, r)| r)
            .fold(0.0, |a, r| if r.is_nan() { f64::INFINITY } else { a.max(r) })
    }
}

/// Dual variables built from the classification and the residuals they
/// leave on a candidate allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// Multipliers of the cap constraints, original order.
    pub mu: Vec<f64>,
    /// Multipliers of the non-negativity constraints, original order.
    pub mu_tilde: Vec<f64>,
    /// Multiplier of the total-bandwidth constraint.
    pub mu_scalar: f64,
    /// Common PSD of the non-oversized users.
    pub s: f64,
    pub residuals: KktResiduals,
    pub tolerance: f64,
}

impl KktCertificate {
    pub fn is_valid(&self) -> bool {
        self.residuals.max() <= self.tolerance
    }
}

/// `ln(1 + x/N0) − x/(N0 + x)`: marginal rate of a user running at PSD `x`.
pub(crate) fn marginal(x: f64, noise_psd: f64) -> f64 {
    if x.is_infinite() {
        return f64::INFINITY;
    }
    (x / noise_psd).ln_1p() - x / (noise_psd + x)
}

/// Builds the multipliers for the instance and evaluates every condition on
/// `w_star` (original order).
pub fn verify_kkt(
    profile: &UserProfile,
    constants: &FdmaConstants,
    w_star: &[f64],
) -> Result<KktCertificate> {
    let inst = SortedInstance::new(profile, constants)?;
    let k = inst.len();
    if w_star.len() != k {
        return Err(Error::LengthMismatch {
            what: "w_star",
            expected: k,
            found: w_star.len(),
        });
    }
    let n0 = inst.noise_psd;
    let w_tot = inst.total_bandwidth;
    let cl = inst.classify();
    let s = super::common_psd(&inst.powers, &inst.caps, w_tot, cl.k1);
    let mu_scalar = marginal(s, n0);
    let mu_sorted: Vec<f64> = (0..k)
        .map(|i| {
            if i < cl.k1 {
                marginal(inst.powers[i] / inst.caps[i], n0) - mu_scalar
            } else {
                0.0
            }
        })
        .collect();
    let mu = inst.order.unapply(&mu_sorted, k, 0.0);
    let mu_tilde = vec![0.0; k];
    let caps = inst.order.unapply(&inst.caps, k, 0.0);
    let powers = &profile.powers;

    let mut r = KktResiduals {
        stationarity: 0.0,
        upper_bound: 0.0,
        nonnegativity: 0.0,
        total_bandwidth: 0.0,
        dual_upper: 0.0,
        slack_upper: 0.0,
        dual_nonneg: 0.0,
        slack_nonneg: 0.0,
        dual_total: (-mu_scalar).max(0.0),
        slack_total: 0.0,
    };
    let total: f64 = w_star.iter().sum();
    for j in 0..k {
        let w = w_star[j];
        let psd = if w > 0.0 { powers[j] / w } else { f64::INFINITY };
        let a = (marginal(psd, n0) - mu[j] + mu_tilde[j] - mu_scalar).abs() / (1.0 + mu_scalar);
        r.stationarity = r.stationarity.max(a);
        r.upper_bound = r.upper_bound.max((w - caps[j]).max(0.0) / w_tot);
        r.nonnegativity = r.nonnegativity.max((-w).max(0.0) / w_tot);
        r.dual_upper = r.dual_upper.max((-mu[j]).max(0.0));
        r.slack_upper = r.slack_upper.max((mu[j] * (w - caps[j])).abs() / w_tot);
        r.dual_nonneg = r.dual_nonneg.max((-mu_tilde[j]).max(0.0));
        r.slack_nonneg = r.slack_nonneg.max((mu_tilde[j] * w).abs() / w_tot);
    }
    r.total_bandwidth = (total - w_tot).max(0.0) / w_tot;
    r.slack_total = (mu_scalar * (total - w_tot)).abs() / w_tot;

    Ok(KktCertificate {
        mu,
        mu_tilde,
        mu_scalar,
        s,
        residuals: r,
        tolerance: KKT_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdma::allocate_closed_form;

    fn five_users() -> (UserProfile, FdmaConstants) {
        (
            UserProfile::with_bandwidths(vec![30., 15., 10., 7., 3.], vec![0.125; 5]).unwrap(),
            FdmaConstants::new(0.5, 1.0).unwrap(),
        )
    }

    #[test]
    fn marginal_values() {
        assert_eq!(marginal(0.0, 1.0), 0.0);
        let expect = 241f64.ln() - 240.0 / 241.0;
        assert!((marginal(240.0, 1.0) - expect).abs() < 1e-14);
        assert_eq!(marginal(f64::INFINITY, 1.0), f64::INFINITY);
    }

    #[test]
    fn five_user_certificate_is_valid() {
        let (p, c) = five_users();
        let w = allocate_closed_form(&p, &c).unwrap().bandwidths;
        let cert = verify_kkt(&p, &c, &w).unwrap();
        assert!(cert.is_valid(), "{:?}", cert.residuals);
        assert!((cert.s - 80.0).abs() < 1e-12);
        let g = |x: f64| (1.0 + x).ln() - x / (1.0 + x);
        assert!((cert.mu_scalar - g(80.0)).abs() < 1e-14);
        assert!((cert.mu[0] - (g(240.0) - g(80.0))).abs() < 1e-14);
        assert!((cert.mu[1] - (g(120.0) - g(80.0))).abs() < 1e-14);
        assert_eq!(&cert.mu[2..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn five_user_perturbation_is_rejected() {
        let (p, c) = five_users();
        let mut w = allocate_closed_form(&p, &c).unwrap().bandwidths;
        w[0] += 1e-3;
        w[1] -= 1e-3;
        let cert = verify_kkt(&p, &c, &w).unwrap();
        assert!(!cert.is_valid());
        assert!(cert.residuals.stationarity > 1e-9 || cert.residuals.slack_upper > 1e-9);
    }

    #[test]
    fn zero_bandwidth_for_active_user_is_invalid() {
        let (p, c) = five_users();
        let cert = verify_kkt(&p, &c, &[0.125, 0.125, 0.125, 0.125, 0.0]).unwrap();
        assert!(cert.residuals.stationarity.is_infinite());
        assert!(!cert.is_valid());
    }
}
