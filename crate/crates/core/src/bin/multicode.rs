use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multicode::cli::{self, CliError, CurveKind, CurveParams, SolveOptions, StrategyName};

#[derive(Parser)]
#[command(name = "multicode", version, about = "Sum-rate optimal FDMA/TDMA/multi-code CDMA allocation")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file and print the allocation report.
    Solve {
        instance: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Also write CSV tables into this directory.
        #[arg(long, value_name = "DIR")]
        csv: Option<PathBuf>,
        /// Stream split for cdma instances: equal or mincount.
        #[arg(long)]
        strategy: Option<StrategyName>,
        /// Include the per-iteration due shares of the iterative algorithm.
        #[arg(long)]
        trace: bool,
        /// Add complex-baseband rates (cdma only).
        #[arg(long)]
        complex: bool,
    },
    /// Build the signature sequence matrix of a cdma instance.
    Sequences {
        instance: PathBuf,
        #[arg(long, env = cli::SEED_ENV)]
        seed: Option<u64>,
        #[arg(long)]
        strategy: Option<StrategyName>,
        /// CSV destination for the N x sum(n_bar) matrix.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Emit curve data as CSV.
    Curves {
        /// loading, ebn0, efficiency or fading.
        kind: CurveKind,
        #[arg(long, value_delimiter = ',')]
        users: Option<Vec<u32>>,
        #[arg(long)]
        processing_gain: Option<u32>,
        #[arg(long, value_delimiter = ',')]
        code_limits: Option<Vec<u32>>,
        /// Per-user SNR in dB (loading).
        #[arg(long)]
        snr_db: Option<f64>,
        /// K/N (ebn0).
        #[arg(long)]
        user_load: Option<f64>,
        /// Eb/N0 values in dB; a list for ebn0, one value otherwise.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ebn0_db: Option<Vec<f64>>,
        /// K/N grid (efficiency).
        #[arg(long, value_delimiter = ',')]
        loads: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long, env = cli::SEED_ENV)]
        seed: Option<u64>,
        /// Output file; stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

fn run(args: Args) -> Result<(), CliError> {
    match args.command {
        Command::Solve {
            instance,
            json,
            csv,
            strategy,
            trace,
            complex,
        } => {
            let opts = SolveOptions {
                json,
                csv_dir: csv,
                strategy,
                trace,
                complex,
            };
            cli::cmd_solve(&instance, &opts, &mut io::stdout().lock())?;
        }
        Command::Sequences {
            instance,
            seed,
            strategy,
            out,
        } => {
            let result = cli::cmd_sequences(&instance, seed, strategy, &out);
            let report = match &result {
                Ok(o) => Some(o.report),
                Err(CliError::Gram(r)) => Some(*r),
                Err(_) => None,
            };
            if let Some(r) = report {
                println!(
                    "orthogonality {:.3e}, complement gram {:.3e}, norms {:.3e}",
                    r.orthogonality, r.complement_gram, r.norms
                );
            }
            result?;
        }
        Command::Curves {
            kind,
            users,
            processing_gain,
            code_limits,
            snr_db,
            user_load,
            ebn0_db,
            loads,
            trials,
            seed,
            out,
        } => {
            let d = CurveParams::for_kind(kind);
            let params = CurveParams {
                users: users.unwrap_or(d.users),
                processing_gain: processing_gain.unwrap_or(d.processing_gain),
                code_limits: code_limits.unwrap_or(d.code_limits),
                snr_db: snr_db.unwrap_or(d.snr_db),
                user_load: user_load.unwrap_or(d.user_load),
                ebn0_db: ebn0_db.unwrap_or(d.ebn0_db),
                loads: loads.unwrap_or(d.loads),
                trials: trials.unwrap_or(d.trials),
                seed,
            };
            match out {
                Some(path) => {
                    let f = File::create(&path).map_err(|e| CliError::Io {
                        path: path.clone(),
                        message: e.to_string(),
                    })?;
                    cli::cmd_curves(kind, &params, BufWriter::new(f))?;
                }
                None => {
                    cli::cmd_curves(kind, &params, io::stdout().lock())?;
                }
            }
        }
    }
    io::stdout().flush().ok();
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
