//! Instance files and the `solve`, `sequences` and `curves` commands.
//!
//! Instance files are flat TOML documents:
//!
//! ```toml
//! mode = "cdma"
//! powers = [30.0, 15.0, 10.0, 7.0, 3.0]
//! code_limits = [2, 2, 2, 2, 2]
//! processing_gain = 8
//! noise_variance = 1.0
//! ```

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::analysis::{self, format_f64, Curve, FadingStudyConfig};
use crate::cdma::{self, CdmaInstance, SplitStrategy, StreamCounts};
use crate::error::Error;
use crate::fdma::{self, IterationSnapshot, KktResiduals, UserClass};
use crate::model::{FdmaConstants, UserProfile};
use crate::sequences::{self, GramReport};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "MULTICODE_SEED";

/// Failure of a command, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot parse instance: {0}")]
    Parse(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("invalid instance: {0}")]
    Invalid(#[from] Error),
    #[error("sequence check failed: {0:?}")]
    Gram(GramReport),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::BadParams(_) | CliError::Io { .. } => 2,
            CliError::Invalid(_) => 3,
            CliError::Gram(_) => 4,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Fdma,
    Tdma,
    Cdma,
    CdmaAsync,
}

/// Stream split as written in files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Equal,
    Mincount,
}

impl From<StrategyName> for SplitStrategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Equal => SplitStrategy::EqualPower,
            StrategyName::Mincount => SplitStrategy::MinCountMaxOrthogonal,
        }
    }
}

impl std::str::FromStr for StrategyName {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "equal" => Ok(StrategyName::Equal),
            "mincount" => Ok(StrategyName::Mincount),
            other => Err(CliError::BadParams(format!(
                "unknown strategy {other:?} (expected equal or mincount)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub mode: Mode,
    pub powers: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_limits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duty_cycle_limits: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_limits: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_gain: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<StrategyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A parsed instance ready for the solvers.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Fdma {
        profile: UserProfile,
        constants: FdmaConstants,
    },
    Tdma {
        profile: UserProfile,
        constants: FdmaConstants,
    },
    Cdma(CdmaInstance),
}

fn require<T>(v: Option<T>, field: &str, mode: Mode) -> CliResult<T> {
    v.ok_or_else(|| CliError::Parse(format!("mode {mode:?} requires `{field}`")))
}

impl InstanceFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let file: InstanceFile = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        file.check_shape()?;
        Ok(file)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("instance files always serialize")
    }

    fn check_shape(&self) -> CliResult<()> {
        let kinds = [
            ("bandwidth_limits", self.bandwidth_limits.is_some()),
            ("duty_cycle_limits", self.duty_cycle_limits.is_some()),
            ("code_limits", self.code_limits.is_some()),
        ];
        let present: Vec<&str> = kinds.iter().filter(|k| k.1).map(|k| k.0).collect();
        let expected = match self.mode {
            Mode::Fdma => "bandwidth_limits",
            Mode::Tdma => "duty_cycle_limits",
            Mode::Cdma | Mode::CdmaAsync => "code_limits",
        };
        if present != [expected] {
            return Err(CliError::Parse(format!(
                "mode {:?} takes exactly one limits field, `{expected}` (found {present:?})",
                self.mode
            )));
        }
        let fdma_fields = self.total_bandwidth.is_some() || self.noise_psd.is_some();
        let cdma_fields = self.processing_gain.is_some() || self.noise_variance.is_some();
        let cdma = matches!(self.mode, Mode::Cdma | Mode::CdmaAsync);
        if (cdma && fdma_fields) || (!cdma && cdma_fields) {
            return Err(CliError::Parse(format!(
                "constants do not match mode {:?}",
                self.mode
            )));
        }
        if self.delays.is_some() && self.mode != Mode::CdmaAsync {
            return Err(CliError::Parse("`delays` needs mode cdma-async".into()));
        }
        let floats = self
            .powers
            .iter()
            .chain(self.bandwidth_limits.iter().flatten())
            .chain(self.duty_cycle_limits.iter().flatten())
            .chain(self.total_bandwidth.iter())
            .chain(self.noise_psd.iter())
            .chain(self.noise_variance.iter());
        if let Some(x) = floats.into_iter().find(|x| !x.is_finite()) {
            return Err(CliError::Parse(format!("non-finite number {x}")));
        }
        Ok(())
    }

    pub fn instance(&self) -> CliResult<Instance> {
        let m = self.mode;
        let powers = self.powers.clone();
        Ok(match m {
            Mode::Fdma | Mode::Tdma => {
                let constants = FdmaConstants::new(
                    require(self.total_bandwidth, "total_bandwidth", m)?,
                    require(self.noise_psd, "noise_psd", m)?,
                )?;
                if m == Mode::Fdma {
                    let caps = require(self.bandwidth_limits.clone(), "bandwidth_limits", m)?;
                    Instance::Fdma {
                        profile: UserProfile::with_bandwidths(powers, caps)?,
                        constants,
                    }
                } else {
                    let caps = require(self.duty_cycle_limits.clone(), "duty_cycle_limits", m)?;
                    Instance::Tdma {
                        profile: UserProfile::with_duty_cycles(powers, caps)?,
                        constants,
                    }
                }
            }
            Mode::Cdma | Mode::CdmaAsync => {
                let inst = CdmaInstance::new(
                    powers,
                    require(self.code_limits.clone(), "code_limits", m)?,
                    require(self.processing_gain, "processing_gain", m)?,
                    require(self.noise_variance, "noise_variance", m)?,
                )?;
                let inst = match &self.delays {
                    Some(d) => inst.with_delays(d.clone())?,
                    None if m == Mode::CdmaAsync => inst.with_delays(vec![0; self.powers.len()])?,
                    None => inst,
                };
                Instance::Cdma(inst)
            }
        })
    }
}

/// Options of the `solve` command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    pub json: bool,
    pub csv_dir: Option<PathBuf>,
    pub strategy: Option<StrategyName>,
    pub trace: bool,
    pub complex: bool,
}

/// Per-code allocation of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRow {
    pub active: u32,
    pub orthogonal: u32,
    pub bandwidths: Vec<f64>,
    pub powers: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRow {
    pub index: usize,
    /// Position after sorting by minimal PSD; `None` for users without power.
    pub sorted_position: Option<usize>,
    pub power: f64,
    pub limit: f64,
    pub label: Option<UserClass>,
    /// Bandwidth (fdma, cdma equivalent) or duty cycle (tdma).
    pub allocation: f64,
    pub psd: Option<f64>,
    pub streams: Option<StreamRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktSummary {
    pub valid: bool,
    pub max_residual: f64,
    pub residuals: KktResiduals,
    pub mu_scalar: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexRates {
    pub sum_rate: f64,
    pub mac_capacity: f64,
}

/// Everything `solve` reports; this is also the `--json` schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub mode: Mode,
    /// `bits/s` for fdma and tdma, `bits/chip` for cdma.
    pub rate_unit: String,
    pub k1: usize,
    pub k2: usize,
    pub users: Vec<UserRow>,
    pub sum_rate: f64,
    pub mac_capacity: f64,
    pub capacity_gap: f64,
    pub achieves_mac: bool,
    pub kkt: KktSummary,
    #[serde(default)]
    pub strategy: Option<SplitStrategy>,
    #[serde(default)]
    pub stream_counts: Option<StreamCounts>,
    #[serde(default)]
    pub trace: Option<Vec<IterationSnapshot>>,
    #[serde(default)]
    pub complex: Option<ComplexRates>,
}

fn kkt_summary(profile: &UserProfile, constants: &FdmaConstants, w: &[f64]) -> CliResult<KktSummary> {
    // the certificate covers active users only
    let active: Vec<usize> = (0..profile.num_users())
        .filter(|&k| profile.powers[k] > 0.0)
        .collect();
    let caps: Vec<f64> = active.iter().map(|&k| profile.limits.value(k)).collect();
    let sub = UserProfile::with_bandwidths(active.iter().map(|&k| profile.powers[k]).collect(), caps)?;
    let ws: Vec<f64> = active.iter().map(|&k| w[k]).collect();
    let cert = fdma::verify_kkt(&sub, constants, &ws)?;
    Ok(KktSummary {
        valid: cert.is_valid(),
        max_residual: cert.residuals.max(),
        residuals: cert.residuals,
        mu_scalar: cert.mu_scalar,
        s: cert.s,
    })
}

fn fdma_report(
    mode: Mode,
    profile: &UserProfile,
    fdma_profile: &UserProfile,
    constants: &FdmaConstants,
    opts: &SolveOptions,
) -> CliResult<SolveReport> {
    let r = fdma::extend_zero_power(fdma_profile, constants)?;
    let k = profile.num_users();
    let positions = r.order.inverse(k);
    let scale = if mode == Mode::Tdma {
        constants.total_bandwidth
    } else {
        1.0
    };
    let users = (0..k)
        .map(|i| UserRow {
            index: i,
            sorted_position: positions[i],
            power: profile.powers[i],
            limit: profile.limits.value(i),
            label: positions[i].map(|p| r.classification.labels[p]),
            allocation: r.bandwidths[i] / scale,
            psd: r.psds[i],
            streams: None,
        })
        .collect();
    let mac = fdma::mac_sum_capacity(&profile.powers, constants);
    let trace = if opts.trace {
        let active = UserProfile::with_bandwidths(
            r.order.permutation.iter().map(|&i| fdma_profile.powers[i]).collect(),
            r.order
                .permutation
                .iter()
                .map(|&i| fdma_profile.limits.value(i))
                .collect(),
        )?;
        Some(fdma::allocate_iterative_traced(&active, constants)?.1)
    } else {
        None
    };
    Ok(SolveReport {
        mode,
        rate_unit: "bits/s".into(),
        k1: r.classification.k1,
        k2: r.classification.k2,
        users,
        sum_rate: r.sum_rate,
        mac_capacity: mac,
        capacity_gap: mac - r.sum_rate,
        achieves_mac: r.classification.k1 == 0,
        kkt: kkt_summary(fdma_profile, constants, &r.bandwidths)?,
        strategy: None,
        stream_counts: None,
        trace,
        complex: None,
    })
}

fn cdma_report(inst: &CdmaInstance, mode: Mode, strategy: SplitStrategy, opts: &SolveOptions) -> CliResult<SolveReport> {
    let sol = cdma::solve_cdma(inst, strategy)?;
    let k = inst.num_users();
    let positions = sol.order.inverse(k);
    let labels = sol.labels();
    let users = (0..k)
        .map(|i| UserRow {
            index: i,
            sorted_position: positions[i],
            power: inst.powers[i],
            limit: f64::from(inst.code_limits[i]),
            label: Some(labels[i]),
            allocation: sol.bandwidths[i],
            psd: Some(inst.powers[i] / sol.bandwidths[i]),
            streams: Some(StreamRow {
                active: sol.streams.active[i],
                orthogonal: sol.streams.orthogonal[i],
                bandwidths: sol.streams.bandwidths[i].clone(),
                powers: sol.streams.powers[i].clone(),
            }),
        })
        .collect();
    let fdma_constants = inst.constants.equivalent_fdma();
    let fdma_profile = inst.fdma_profile();
    let mac = cdma::mac_capacity(inst);
    let sum_rate = if mode == Mode::CdmaAsync {
        cdma::async_sum_rate(inst)?
    } else {
        sol.sum_rate
    };
    let trace = if opts.trace {
        Some(fdma::allocate_iterative_traced(&fdma_profile, &fdma_constants)?.1)
    } else {
        None
    };
    let complex = if opts.complex {
        Some(ComplexRates {
            sum_rate: cdma::complex_sum_rate(inst)?,
            mac_capacity: cdma::complex_mac_capacity(inst)?,
        })
    } else {
        None
    };
    Ok(SolveReport {
        mode,
        rate_unit: "bits/chip".into(),
        k1: sol.classification.k1,
        k2: sol.classification.k2,
        users,
        sum_rate,
        mac_capacity: mac,
        capacity_gap: mac - sum_rate,
        achieves_mac: sol.achieves_mac,
        kkt: kkt_summary(&fdma_profile, &fdma_constants, &sol.bandwidths)?,
        strategy: Some(strategy),
        stream_counts: Some(cdma::stream_count_extremes(inst)?),
        trace,
        complex,
    })
}

/// Solves a parsed instance file.
pub fn solve_instance(file: &InstanceFile, opts: &SolveOptions) -> CliResult<SolveReport> {
    let instance = file.instance()?;
    if opts.complex && !matches!(instance, Instance::Cdma(_)) {
        return Err(CliError::BadParams("--complex applies to cdma instances only".into()));
    }
    match instance {
        Instance::Fdma { profile, constants } => {
            fdma_report(Mode::Fdma, &profile, &profile, &constants, opts)
        }
        Instance::Tdma { profile, constants } => {
            let fdma_profile = fdma::tdma_as_fdma(&profile, &constants)?;
            fdma_report(Mode::Tdma, &profile, &fdma_profile, &constants, opts)
        }
        Instance::Cdma(inst) => {
            let strategy = opts.strategy.or(file.strategy).unwrap_or(StrategyName::Mincount);
            cdma_report(&inst, file.mode, strategy.into(), opts)
        }
    }
}

fn label_text(l: Option<UserClass>) -> &'static str {
    l.map_or("-", UserClass::short)
}

/// Plain-text rendering of a report.
pub fn render_report(r: &SolveReport) -> String {
    let mut s = String::new();
    let alloc = match r.mode {
        Mode::Tdma => "t*",
        Mode::Fdma => "w*",
        Mode::Cdma | Mode::CdmaAsync => "w*_k",
    };
    let mode = match r.mode {
        Mode::Fdma => "fdma",
        Mode::Tdma => "tdma",
        Mode::Cdma => "cdma",
        Mode::CdmaAsync => "cdma-async",
    };
    let _ = writeln!(s, "mode: {mode}");
    let _ = writeln!(s, "K1={} K2={}", r.k1, r.k2);
    let _ = write!(
        s,
        "{:>5} {:>6} {:>12} {:>12} {:>5} {:>14} {:>14}",
        "user", "sorted", "power", "limit", "class", alloc, "psd"
    );
    if r.strategy.is_some() {
        let _ = write!(s, " {:>6} {:>6}", "n*", "n_orth");
    }
    s.push('\n');
    for u in &r.users {
        let pos = u.sorted_position.map_or("-".to_string(), |p| (p + 1).to_string());
        let psd = u.psd.map_or("-".to_string(), |p| format!("{p:.6}"));
        let _ = write!(
            s,
            "{:>5} {:>6} {:>12.6} {:>12.6} {:>5} {:>14.10} {:>14}",
            u.index + 1,
            pos,
            u.power,
            u.limit,
            label_text(u.label),
            u.allocation,
            psd
        );
        if let Some(st) = &u.streams {
            let _ = write!(s, " {:>6} {:>6}", st.active, st.orthogonal);
        }
        s.push('\n');
    }
    if let Some(c) = &r.stream_counts {
        let _ = writeln!(s, "max orthogonal: {:?}", c.max_orthogonal);
        let _ = writeln!(s, "min active:     {:?}", c.min_active);
    }
    let _ = writeln!(s, "sum rate:     {:.12} {}", r.sum_rate, r.rate_unit);
    let _ = writeln!(s, "MAC capacity: {:.12} {}", r.mac_capacity, r.rate_unit);
    let _ = writeln!(s, "gap:          {:.3e}", r.capacity_gap);
    let _ = writeln!(s, "achieves MAC: {}", r.achieves_mac);
    let _ = writeln!(
        s,
        "KKT: {} (max residual {:.3e})",
        if r.kkt.valid { "valid" } else { "INVALID" },
        r.kkt.max_residual
    );
    if let Some(c) = &r.complex {
        let _ = writeln!(
            s,
            "complex baseband: sum rate {:.12} bits/s/Hz, MAC {:.12} bits/s/Hz",
            c.sum_rate, c.mac_capacity
        );
    }
    if let Some(trace) = &r.trace {
        for (i, it) in trace.iter().enumerate() {
            let shares: Vec<String> = it.due_shares.iter().map(|d| format!("{d:.4}")).collect();
            let _ = writeln!(
                s,
                "iteration {}: remaining {:.6}, due shares [{}]{}",
                i + 1,
                it.remaining_bandwidth,
                shares.join(", "),
                if it.capped_first { ", first user capped" } else { "" }
            );
        }
    }
    s
}

fn write_file(path: &Path, write: impl FnOnce(&mut csv::Writer<fs::File>) -> csv::Result<()>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    write(&mut w).map_err(|e| CliError::io(path, e))?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn opt_f64(x: Option<f64>) -> String {
    x.map_or(String::new(), format_f64)
}

/// Writes `allocation.csv`, plus `streams.csv` and `trace.csv` when present.
pub fn write_report_csv(r: &SolveReport, dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_file(&dir.join("allocation.csv"), |w| {
        w.write_record(["user", "sorted_position", "power", "limit", "class", "allocation", "psd"])?;
        for u in &r.users {
            w.write_record([
                u.index.to_string(),
                u.sorted_position.map_or(String::new(), |p| p.to_string()),
                format_f64(u.power),
                format_f64(u.limit),
                label_text(u.label).to_string(),
                format_f64(u.allocation),
                opt_f64(u.psd),
            ])?;
        }
        Ok(())
    })?;
    if r.users.iter().any(|u| u.streams.is_some()) {
        write_file(&dir.join("streams.csv"), |w| {
            w.write_record(["user", "stream", "bandwidth", "power"])?;
            for u in &r.users {
                if let Some(st) = &u.streams {
                    for (l, (b, p)) in st.bandwidths.iter().zip(&st.powers).enumerate() {
                        w.write_record([u.index.to_string(), l.to_string(), format_f64(*b), format_f64(*p)])?;
                    }
                }
            }
            Ok(())
        })?;
    }
    if let Some(trace) = &r.trace {
        write_file(&dir.join("trace.csv"), |w| {
            w.write_record(["iteration", "sorted_user", "remaining_bandwidth", "due_share", "capped_first"])?;
            for (i, it) in trace.iter().enumerate() {
                for (u, d) in it.users.iter().zip(&it.due_shares) {
                    w.write_record([
                        (i + 1).to_string(),
                        u.to_string(),
                        format_f64(it.remaining_bandwidth),
                        format_f64(*d),
                        it.capped_first.to_string(),
                    ])?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// `solve`: prints the report (text or JSON) to `out` and writes CSV files
/// if asked.
pub fn cmd_solve<W: Write>(path: &Path, opts: &SolveOptions, out: &mut W) -> CliResult<SolveReport> {
    let file = InstanceFile::read(path)?;
    let report = solve_instance(&file, opts)?;
    let text = if opts.json {
        serde_json::to_string_pretty(&report).map_err(|e| CliError::io(path, e))? + "\n"
    } else {
        render_report(&report)
    };
    out.write_all(text.as_bytes()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    if let Some(dir) = &opts.csv_dir {
        write_report_csv(&report, dir)?;
    }
    Ok(report)
}

/// Seed from the flag, then the instance file, then the environment, then 1.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::BadParams(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(1),
    }
}

/// Output of the `sequences` command.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencesOutput {
    pub seed: u64,
    pub matrix: sequences::SequenceMatrix,
    pub report: GramReport,
}

/// Sequence matrix as CSV: `N` rows, one column per code, no header.
pub fn sequence_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_f64(m[(r, c)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// `sequences`: builds the signature matrix of a cdma instance, writes it
/// to `out_path` and checks its Gram structure.
pub fn cmd_sequences(
    path: &Path,
    seed: Option<u64>,
    strategy: Option<StrategyName>,
    out_path: &Path,
) -> CliResult<SequencesOutput> {
    let file = InstanceFile::read(path)?;
    let inst = match file.instance()? {
        Instance::Cdma(inst) => inst,
        _ => return Err(CliError::BadParams("sequences needs a cdma instance".into())),
    };
    let seed = resolve_seed(seed, file.seed)?;
    let strategy = strategy.or(file.strategy).unwrap_or(StrategyName::Mincount);
    let sol = cdma::solve_cdma(&inst, strategy.into())?;
    let vset = sequences::build_virtual_users(&sol, &inst.constants)?;
    let matrix = sequences::construct_sequences(&vset, seed)?;
    let report = sequences::verify_gram(&matrix, &vset)?;
    fs::write(out_path, sequence_csv(&matrix.matrix)).map_err(|e| CliError::io(out_path, e))?;
    if !report.passes() {
        return Err(CliError::Gram(report));
    }
    Ok(SequencesOutput {
        seed,
        matrix,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    /// Sum rate against the code limit for several user counts.
    Loading,
    /// Efficiency against Eb/N0 for several code limits.
    Ebn0,
    /// Efficiency against user load for several code limits.
    Efficiency,
    /// Per-trial fading efficiencies for several code limits.
    Fading,
}

impl std::str::FromStr for CurveKind {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "loading" => Ok(CurveKind::Loading),
            "ebn0" => Ok(CurveKind::Ebn0),
            "efficiency" => Ok(CurveKind::Efficiency),
            "fading" => Ok(CurveKind::Fading),
            other => Err(CliError::BadParams(format!("unknown curve kind {other:?}"))),
        }
    }
}

/// Parameters of the `curves` command; unused fields are ignored per kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveParams {
    pub users: Vec<u32>,
    pub processing_gain: u32,
    pub code_limits: Vec<u32>,
    /// Per-user SNR `p_k/σ²` in dB for the loading curve.
    pub snr_db: f64,
    /// `K/N` for the Eb/N0 curve.
    pub user_load: f64,
    /// Eb/N0 grid for the Eb/N0 curve, or the operating point of the others.
    pub ebn0_db: Vec<f64>,
    /// `K/N` grid for the efficiency curve.
    pub loads: Vec<f64>,
    pub trials: u32,
    pub seed: Option<u64>,
}

impl Default for CurveParams {
    fn default() -> Self {
        CurveParams {
            users: vec![40, 80, 160],
            processing_gain: 128,
            code_limits: vec![1, 2, 4],
            snr_db: 10.0,
            user_load: 0.625,
            ebn0_db: vec![10.0],
            loads: (0..=200).map(|i| f64::from(i) * 0.01).collect(),
            trials: 1000,
            seed: None,
        }
    }
}

impl CurveParams {
    /// Defaults tuned to each curve kind.
    pub fn for_kind(kind: CurveKind) -> Self {
        let d = CurveParams::default();
        match kind {
            CurveKind::Loading => CurveParams {
                code_limits: (1..=8).collect(),
                ..d
            },
            CurveKind::Ebn0 => CurveParams {
                ebn0_db: (-3..=40).map(|i| f64::from(i) * 0.5).collect(),
                ..d
            },
            CurveKind::Efficiency => d,
            CurveKind::Fading => CurveParams {
                users: vec![100],
                ..d
            },
        }
    }
}

fn check_nonempty<T>(v: &[T], what: &str) -> CliResult<()> {
    if v.is_empty() {
        Err(CliError::BadParams(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

fn single_ebn0(p: &CurveParams) -> CliResult<f64> {
    match p.ebn0_db.as_slice() {
        [x] => Ok(*x),
        _ => Err(CliError::BadParams("this curve takes a single Eb/N0 value".into())),
    }
}

fn bad(e: Error) -> CliError {
    CliError::BadParams(e.to_string())
}

/// Computes a curve table.
pub fn build_curve(kind: CurveKind, p: &CurveParams) -> CliResult<Curve> {
    check_nonempty(&p.code_limits, "code limits")?;
    if p.code_limits.contains(&0) || p.users.contains(&0) || p.processing_gain == 0 {
        return Err(CliError::BadParams("counts must be positive".into()));
    }
    match kind {
        CurveKind::Loading => {
            check_nonempty(&p.users, "users")?;
            analysis::loading_curve(&p.users, p.processing_gain, p.snr_db, &p.code_limits).map_err(bad)
        }
        CurveKind::Ebn0 => {
            check_nonempty(&p.ebn0_db, "Eb/N0 grid")?;
            analysis::ebn0_curve(p.user_load, &p.code_limits, &p.ebn0_db).map_err(bad)
        }
        CurveKind::Efficiency => {
            check_nonempty(&p.loads, "load grid")?;
            analysis::load_efficiency_curve(&p.loads, &p.code_limits, single_ebn0(p)?).map_err(bad)
        }
        CurveKind::Fading => {
            let users = match p.users.as_slice() {
                [k] => *k,
                _ => return Err(CliError::BadParams("fading takes a single user count".into())),
            };
            let config = FadingStudyConfig {
                users,
                processing_gain: p.processing_gain,
                code_limit: p.code_limits[0],
                mean_ebn0_db: single_ebn0(p)?,
                trials: p.trials,
                seed: resolve_seed(p.seed, None)?,
            };
            analysis::fading_curve(&config, &p.code_limits).map_err(bad)
        }
    }
}

/// `curves`: writes the CSV table to `out`.
pub fn cmd_curves<W: Write>(kind: CurveKind, params: &CurveParams, out: W) -> CliResult<Curve> {
    let curve = build_curve(kind, params)?;
    curve
        .write_csv(out)
        .map_err(|e| CliError::io(Path::new("<output>"), e))?;
    Ok(curve)
}
