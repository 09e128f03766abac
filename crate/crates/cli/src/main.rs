//! `sel`: run experiments, the property suite, or dump kernel values.
//!
//! Exit status is 0 when every verdict passes, 1 when a verdict fails or a
//! run aborts, and 2 on configuration or I/O errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sel_core::config::load_config;
use sel_core::harness::{property_suite, run_experiment, verdicts_json, PropertyOptions, Verdict};
use sel_core::io::write_atomic;
use sel_core::specfun::kernel_samples;
use sel_core::{Dimension, Error};

#[derive(Parser, Debug)]
#[command(
    name = "sel",
    version,
    about = "Vortex-particle simulator for anti-parallel axisymmetric Euler flow"
)]
struct Cli {
    /// Worker threads for pairwise sums; 0 picks one per core.
    #[arg(long, global = true, env = "SEL_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run the randomized property suite.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the verdicts as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write `s,F,Fp,Fstar` at log-spaced `s`.
    KernelDump {
        #[arg(long)]
        dim: u32,
        #[arg(long, default_value_t = 1e-4)]
        smin: f64,
        #[arg(long, default_value_t = 1e4)]
        smax: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Verdicts,
    Run(Error),
    Config(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e)
        } else {
            Failure::Run(e)
        }
    }
}

fn report(verdicts: &[Verdict]) -> Result<(), Failure> {
    for v in verdicts {
        println!(
            "{} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.check_name,
            v.detail
        );
    }
    if verdicts.iter().all(|v| v.pass) {
        Ok(())
    } else {
        Err(Failure::Verdicts)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Failure::Config(Error::Config(format!("thread pool: {e}"))))?;
    match cli.command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let exp = run_experiment(&cfg)?;
            for f in &exp.files {
                eprintln!("wrote {}", f.display());
            }
            report(&exp.verdicts)
        }
        Command::Props { seed, out } => {
            let verdicts = property_suite(&PropertyOptions {
                seed,
                ..PropertyOptions::default()
            })?;
            if let Some(path) = out {
                write_atomic(&path, verdicts_json(&verdicts).as_bytes())?;
            }
            report(&verdicts)
        }
        Command::KernelDump {
            dim,
            smin,
            smax,
            n,
            out,
        } => {
            let dim = Dimension::new(dim)?;
            let rows = kernel_samples(dim, smin, smax, n).map_err(|e| match e {
                Error::Domain(m) => Failure::Config(Error::Config(m)),
                e => Failure::from(e),
            })?;
            let mut csv = String::from("s,F,Fp,Fstar\n");
            for [s, f, fp, fs] in rows {
                let _ = writeln!(csv, "{s},{f},{fp},{fs}");
            }
            match out {
                Some(path) => write_atomic(&path, csv.as_bytes())?,
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdicts) => ExitCode::from(1),
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
