//! Spectral efficiency of symmetric systems and a Rayleigh fading study.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;
use std::io::Write;

use crate::cdma::{self, CdmaInstance, SplitStrategy};
use crate::error::{Error, Result};

/// Upper end of the efficiency bracket in bits/chip.
const EFFICIENCY_BRACKET: f64 = 32.0;
/// Target for the fixed-point residual.
const FIXED_POINT_RESIDUAL: f64 = 1e-12;
/// Relative slack allowed when comparing two evaluations of the same rate.
pub const RATE_TOLERANCE: f64 = 1e-12;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn check_ebn0(ebn0: f64) -> Result<()> {
    if ebn0.is_finite() && ebn0 > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConstant {
            what: "ebn0",
            value: ebn0,
        })
    }
}

/// Efficiency `C` of the single-user AWGN channel at `Eb/N0 = ebn0`
/// (linear), the largest root of `C = ½ log2(1 + 2 C ebn0)`. Zero at or
/// below `ln 2`.
pub fn single_user_efficiency(ebn0: f64) -> Result<f64> {
    check_ebn0(ebn0)?;
    if ebn0 <= LN_2 {
        return Ok(0.0);
    }
    // f > 0 between the roots, f < 0 beyond the nontrivial one
    let f = |c: f64| 0.5 * (2.0 * c * ebn0).ln_1p() / LN_2 - c;
    let mut hi = EFFICIENCY_BRACKET;
    // the positive bump of f near 0 can be too thin for a plain midpoint
    let mut lo = {
        let mut x = hi;
        while f(x) <= 0.0 && x > 1e-300 {
            x *= 0.5;
        }
        x
    };
    if f(lo) <= 0.0 {
        return Ok(0.0);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = if f(lo).abs() < f(hi).abs() { lo } else { hi };
    if f(c).abs() > FIXED_POINT_RESIDUAL {
        return Err(Error::NotConverged {
            iterations: 2000,
            residual: f(c).abs(),
        });
    }
    Ok(c)
}

/// Efficiency for complex-baseband signaling, the root of
/// `C = log2(1 + C ebn0)`, in bits/s/Hz.
pub fn complex_single_user_efficiency(ebn0: f64) -> Result<f64> {
    Ok(2.0 * single_user_efficiency(ebn0)?)
}

/// Efficiency of a symmetric optimal system at load `n̄K/N`: grows
/// linearly up to load 1 and stays at the single-user value beyond.
pub fn symmetric_efficiency(load: f64, ebn0: f64) -> Result<f64> {
    if !(load.is_finite() && load >= 0.0) {
        return Err(Error::InvalidConstant {
            what: "load",
            value: load,
        });
    }
    Ok(load.min(1.0) * single_user_efficiency(ebn0)?)
}

/// Closed-form sum rate in bits/chip of `K` equal-power users with `n̄`
/// codes each, checked against the general solver.
pub fn symmetric_sum_rate_check(
    users: u32,
    processing_gain: u32,
    code_limit: u32,
    total_power: f64,
    noise_variance: f64,
) -> Result<f64> {
    if users == 0 {
        return Err(Error::NoUsers);
    }
    if !(total_power.is_finite() && total_power >= 0.0) {
        return Err(Error::InvalidConstant {
            what: "total_power",
            value: total_power,
        });
    }
    let snr = total_power / noise_variance;
    let load = f64::from(code_limit) * f64::from(users) / f64::from(processing_gain);
    let closed = if load <= 1.0 {
        0.5 * load * (snr / load).ln_1p() / LN_2
    } else {
        0.5 * snr.ln_1p() / LN_2
    };
    if total_power == 0.0 {
        return Ok(0.0);
    }
    let inst = CdmaInstance::new(
        vec![total_power / f64::from(users); users as usize],
        vec![code_limit; users as usize],
        processing_gain,
        noise_variance,
    )?;
    let solved = cdma::solve_cdma(&inst, SplitStrategy::default())?.sum_rate;
    if (solved - closed).abs() > RATE_TOLERANCE * closed.max(1.0) {
        return Err(Error::Mismatch {
            what: "symmetric sum rate",
            expected: closed,
            found: solved,
        });
    }
    Ok(closed)
}

/// One point of an efficiency curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub load: f64,
    pub ebn0_db: f64,
    pub efficiency: f64,
}

/// Samples `symmetric_efficiency` over `loads` at a fixed Eb/N0.
pub fn efficiency_curve(loads: &[f64], ebn0_db: f64) -> Result<Vec<EfficiencyPoint>> {
    let c = single_user_efficiency(db_to_linear(ebn0_db))?;
    loads
        .iter()
        .map(|&load| {
            if !(load.is_finite() && load >= 0.0) {
                return Err(Error::InvalidConstant {
                    what: "load",
                    value: load,
                });
            }
            Ok(EfficiencyPoint {
                load,
                ebn0_db,
                efficiency: load.min(1.0) * c,
            })
        })
        .collect()
}

/// A table with one x column and several named series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub x_label: String,
    pub series: Vec<String>,
    pub rows: Vec<(f64, Vec<f64>)>,
}

/// Full-precision float formatting used for every CSV cell.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

impl Curve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec![self.x_label.clone()];
        header.extend(self.series.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (x, ys) in &self.rows {
            let mut rec = vec![format_f64(*x)];
            rec.extend(ys.iter().map(|&y| format_f64(y)));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }
}

/// Sum rate in bits/chip of symmetric systems against the per-user code
/// limit, one series per user count. Saturates at the MAC value.
pub fn loading_curve(
    user_counts: &[u32],
    processing_gain: u32,
    user_snr_db: f64,
    code_limits: &[u32],
) -> Result<Curve> {
    let snr = db_to_linear(user_snr_db);
    let rows = code_limits
        .iter()
        .map(|&n_bar| {
            let ys = user_counts
                .iter()
                .map(|&k| {
                    let inst = CdmaInstance::new(
                        vec![snr; k as usize],
                        vec![n_bar; k as usize],
                        processing_gain,
                        1.0,
                    )?;
                    Ok(cdma::solve_cdma(&inst, SplitStrategy::default())?.sum_rate)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((f64::from(n_bar), ys))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        x_label: "n_bar".into(),
        series: user_counts.iter().map(|k| format!("K={k}")).collect(),
        rows,
    })
}

/// Efficiency against Eb/N0 (dB), one series per code limit at user load
/// `K/N`.
pub fn ebn0_curve(user_load: f64, code_limits: &[u32], ebn0_db: &[f64]) -> Result<Curve> {
    let rows = ebn0_db
        .iter()
        .map(|&db| {
            let ys = code_limits
                .iter()
                .map(|&n| symmetric_efficiency(f64::from(n) * user_load, db_to_linear(db)))
                .collect::<Result<Vec<_>>>()?;
            Ok((db, ys))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        x_label: "ebn0_db".into(),
        series: code_limits.iter().map(|n| format!("n_bar={n}")).collect(),
        rows,
    })
}

/// Efficiency against user load `K/N`, one series per code limit.
pub fn load_efficiency_curve(user_loads: &[f64], code_limits: &[u32], ebn0_db: f64) -> Result<Curve> {
    let ebn0 = db_to_linear(ebn0_db);
    let rows = user_loads
        .iter()
        .map(|&x| {
            let ys = code_limits
                .iter()
                .map(|&n| symmetric_efficiency(f64::from(n) * x, ebn0))
                .collect::<Result<Vec<_>>>()?;
            Ok((x, ys))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Curve {
        x_label: "user_load".into(),
        series: code_limits.iter().map(|n| format!("n_bar={n}")).collect(),
        rows,
    })
}

/// Parameters of the Monte-Carlo fading study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingStudyConfig {
    pub users: u32,
    pub processing_gain: u32,
    pub code_limit: u32,
    pub mean_ebn0_db: f64,
    pub trials: u32,
    pub seed: u64,
}

impl FadingStudyConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("users", self.users),
            ("processing_gain", self.processing_gain),
            ("code_limit", self.code_limit),
            ("trials", self.trials),
        ] {
            if v == 0 {
                return Err(Error::InvalidConstant { what, value: 0.0 });
            }
        }
        if !self.mean_ebn0_db.is_finite() {
            return Err(Error::InvalidConstant {
                what: "mean_ebn0_db",
                value: self.mean_ebn0_db,
            });
        }
        Ok(())
    }

    /// Nominal per-user power for unit noise variance: the unfaded system
    /// runs at the complex single-user efficiency `C`, with
    /// `p_tot / (2σ²) = (Eb/N0) C`.
    pub fn nominal_power(&self) -> Result<f64> {
        let ebn0 = db_to_linear(self.mean_ebn0_db);
        let c = complex_single_user_efficiency(ebn0)?;
        Ok(2.0 * ebn0 * c / f64::from(self.users))
    }
}

/// Source of per-trial power gains.
pub trait GainSampler: Sync {
    fn gains(&self, trial: u64, users: usize) -> Vec<f64>;
}

/// Unit-mean exponential gains from a ChaCha stream per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExponentialGains {
    pub seed: u64,
}

impl GainSampler for ExponentialGains {
    fn gains(&self, trial: u64, users: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trial);
        (0..users)
            .map(|_| {
                let g: f64 = Exp1.sample(&mut rng);
                g.max(f64::MIN_POSITIVE)
            })
            .collect()
    }
}

/// The same gain for every user in every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantGains(pub f64);

impl GainSampler for ConstantGains {
    fn gains(&self, _trial: u64, users: usize) -> Vec<f64> {
        vec![self.0; users]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingTrial {
    pub trial: u64,
    /// Optimal restricted efficiency, bits/s/Hz.
    pub restricted: f64,
    /// MAC sum capacity, bits/s/Hz.
    pub unrestricted: f64,
    /// Number of oversized users.
    pub oversized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingSummary {
    pub config: FadingStudyConfig,
    pub mean_restricted: f64,
    pub mean_unrestricted: f64,
    pub trials: Vec<FadingTrial>,
}

impl FadingSummary {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["trial", "restricted", "unrestricted", "oversized"])
            .map_err(io)?;
        for t in &self.trials {
            w.write_record([
                t.trial.to_string(),
                format_f64(t.restricted),
                format_f64(t.unrestricted),
                t.oversized.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Io(e.to_string()))?;
        Ok(())
    }
}

/// Runs the study with exponential gains seeded from the config.
pub fn rayleigh_fading_study(config: &FadingStudyConfig) -> Result<FadingSummary> {
    rayleigh_fading_study_with(config, &ExponentialGains { seed: config.seed })
}

/// Runs the study with an arbitrary gain source. Trials run in parallel;
/// results do not depend on scheduling.
pub fn rayleigh_fading_study_with<G: GainSampler>(
    config: &FadingStudyConfig,
    sampler: &G,
) -> Result<FadingSummary> {
    config.validate()?;
    let p_bar = config.nominal_power()?;
    let k = config.users as usize;
    let trials: Vec<FadingTrial> = (0..u64::from(config.trials))
        .into_par_iter()
        .map(|trial| {
            let powers = sampler.gains(trial, k).iter().map(|g| g * p_bar).collect();
            let inst = CdmaInstance::new(
                powers,
                vec![config.code_limit; k],
                config.processing_gain,
                1.0,
            )?;
            let restricted = cdma::complex_sum_rate(&inst)?;
            let unrestricted = cdma::complex_mac_capacity(&inst)?;
            if restricted > unrestricted * (1.0 + RATE_TOLERANCE) {
                return Err(Error::Mismatch {
                    what: "restricted rate above capacity",
                    expected: unrestricted,
                    found: restricted,
                });
            }
            // summation order differs between the two at capacity
            let restricted = restricted.min(unrestricted);
            let oversized = cdma::solve_cdma(&inst, SplitStrategy::default())?
                .classification
                .k1;
            Ok(FadingTrial {
                trial,
                restricted,
                unrestricted,
                oversized,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials.len() as f64;
    Ok(FadingSummary {
        mean_restricted: trials.iter().map(|t| t.restricted).sum::<f64>() / n,
        mean_unrestricted: trials.iter().map(|t| t.unrestricted).sum::<f64>() / n,
        config: config.clone(),
        trials,
    })
}

/// Runs the study for several code limits on the same gain draws.
pub fn fading_curve(config: &FadingStudyConfig, code_limits: &[u32]) -> Result<Curve> {
    let runs = code_limits
        .iter()
        .map(|&n| {
            rayleigh_fading_study(&FadingStudyConfig {
                code_limit: n,
                ..config.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = (0..config.trials as usize)
        .map(|t| {
            let mut ys: Vec<f64> = runs.iter().map(|r| r.trials[t].restricted).collect();
            ys.push(runs[0].trials[t].unrestricted);
            (t as f64, ys)
        })
        .collect();
    let mut series: Vec<String> = code_limits.iter().map(|n| format!("n_bar={n}")).collect();
    series.push("unrestricted".into());
    Ok(Curve {
        x_label: "trial".into(),
        series,
        rows,
    })
}
