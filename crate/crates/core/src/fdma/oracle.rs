use std::f64::consts::LN_2;

use super::kkt::marginal;
use crate::error::{Error, Result};
use crate::model::{FdmaConstants, Limits, UserProfile};

const MAX_ITERATIONS: usize = 400;

/// Inverts the marginal rate: the PSD `x ≥ 0` with `marginal(x) = level`.
fn psd_at(level: f64, noise_psd: f64) -> f64 {
    if level <= 0.0 {
        return 0.0;
    }
    let mut hi = noise_psd;
    while marginal(hi, noise_psd) < level {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal(mid, noise_psd) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn bandwidths_at(level: f64, powers: &[f64], caps: &[f64], noise_psd: f64) -> Vec<f64> {
    let x = psd_at(level, noise_psd);
    powers
        .iter()
        .zip(caps)
        .map(|(&p, &cap)| if x == 0.0 { cap } else { (p / x).min(cap) })
        .collect()
}

/// Solves the capped bandwidth problem by bisection on the multiplier of the
/// total-bandwidth constraint, without using any user classification.
///
/// Stops once the duality gap (bits/s) drops to `tolerance`; the returned
/// bandwidths are always feasible. Zero-power users get zero bandwidth.
pub fn oracle_solve(
    profile: &UserProfile,
    constants: &FdmaConstants,
    tolerance: f64,
) -> Result<Vec<f64>> {
    profile.validate()?;
    constants.validate()?;
    let caps = match &profile.limits {
        Limits::Bandwidth(v) => v,
        other => {
            return Err(Error::WrongLimits {
                expected: "bandwidth",
                found: other.kind(),
            })
        }
    };
    let powers = &profile.powers;
    let n0 = constants.noise_psd;
    let w_tot = constants.total_bandwidth;
    let active_caps: f64 = powers
        .iter()
        .zip(caps)
        .filter(|(&p, _)| p > 0.0)
        .map(|(_, &c)| c)
        .sum();
    if active_caps <= w_tot {
        return Ok(powers
            .iter()
            .zip(caps)
            .map(|(&p, &c)| if p > 0.0 { c } else { 0.0 })
            .collect());
    }
    let used = |w: &[f64]| w.iter().sum::<f64>();

    let mut lo = 0.0;
    let mut hi = 1.0;
    while used(&bandwidths_at(hi, powers, caps, n0)) > w_tot {
        hi *= 2.0;
    }
    let mut gap = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let w = bandwidths_at(hi, powers, caps, n0);
        // Lagrangian maximizer at `hi`: the dual bound exceeds the primal
        // value by exactly hi * (unused bandwidth)
        gap = hi * (w_tot - used(&w)) / LN_2;
        if gap <= tolerance {
            return Ok(w);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if used(&bandwidths_at(mid, powers, caps, n0)) > w_tot {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_ITERATIONS,
        residual: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdma::{allocate_closed_form, fdma_sum_rate};

    #[test]
    fn inverse_marginal_round_trips() {
        for &x in &[1e-4, 0.3, 1.0, 80.0, 1e6] {
            let y = psd_at(marginal(x, 2.0), 2.0);
            assert!((y - x).abs() <= 1e-9 * x, "{x} -> {y}");
        }
        assert_eq!(psd_at(0.0, 1.0), 0.0);
    }

    #[test]
    fn five_user_oracle_matches_closed_form() {
        let p = UserProfile::with_bandwidths(vec![30., 15., 10., 7., 3.], vec![0.125; 5]).unwrap();
        let c = FdmaConstants::new(0.5, 1.0).unwrap();
        let w = oracle_solve(&p, &c, 1e-10).unwrap();
        let cf = allocate_closed_form(&p, &c).unwrap();
        let rate = fdma_sum_rate(&p, &c, &w).unwrap();
        assert!((rate - cf.sum_rate).abs() < 1e-9);
        assert!(w.iter().sum::<f64>() <= 0.5 + 1e-15);
    }

    #[test]
    fn caps_below_total_bandwidth() {
        let p = UserProfile::with_bandwidths(vec![1., 0., 2.], vec![0.1, 0.5, 0.2]).unwrap();
        let c = FdmaConstants::new(1.0, 1.0).unwrap();
        assert_eq!(oracle_solve(&p, &c, 1e-9).unwrap(), vec![0.1, 0.0, 0.2]);
    }
}
