//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration or I/O error,
//! 3 numerical failure (including a failed selftest).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::experiment::config::load_spec;
use crate::experiment::output::{curve_path, write_curve_rows, write_rows};
use crate::experiment::{
    prob_overhead, run_sweep, selftest, single_drop, with_threads, write_csv, write_curve_csv,
    SweepSpec,
};
use crate::schemes::Fallback;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const THREADS_ENV: &str = "STEERSIM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "steersim", version, about = "Two-tier downlink interference steering simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a parameter sweep and write one CSV row per point and scheme.
    Sweep(Common),
    /// Overhead exceedance probabilities plus the normalized exceedance curve.
    ProbOverhead(Common),
    /// Dump the per-scheme results of one drop as JSON.
    SingleDrop {
        #[command(flatten)]
        common: Common,
        /// Drop index within the first point.
        #[arg(long, default_value_t = 0)]
        drop: u64,
    },
    /// Run the built-in oracle and invariant suites.
    Selftest(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Sweep description (key=value or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; overrides the config. Standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: $STEERSIM_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Receiver used when a scheme cannot afford its overhead.
    #[arg(long, value_parser = ["mf", "zf"])]
    fallback: Option<String>,
}

impl Common {
    fn spec(&self) -> Result<SweepSpec> {
        let mut spec = match &self.config {
            Some(p) => load_spec(p)?,
            None => SweepSpec::default(),
        };
        if let Some(s) = self.seed {
            spec.master_seed = s;
        }
        if let Some(f) = &self.fallback {
            spec.fallback = Fallback::parse(f).expect("clap restricts the values");
        }
        if let Some(o) = &self.out {
            spec.output_path = Some(o.to_string_lossy().into_owned());
        }
        spec.validate()?;
        Ok(spec)
    }

    fn threads(&self) -> Result<Option<usize>> {
        if self.threads.is_some() {
            return Ok(self.threads);
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::config(THREADS_ENV, format!("`{v}` is not a thread count"))),
            _ => Ok(None),
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn to_stdout(f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    f(&mut lock)?;
    lock.flush().map_err(|e| Error::io("<stdout>", e))
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Sweep(c) => {
            let spec = c.spec()?;
            let rows = with_threads(c.threads()?, || run_sweep(&spec))??;
            match &spec.output_path {
                Some(p) => write_csv(&rows, p)?,
                None => to_stdout(|w| write_rows(&rows, w))?,
            }
            Ok(EXIT_OK)
        }
        Command::ProbOverhead(c) => {
            let spec = c.spec()?;
            let (rows, curve) = with_threads(c.threads()?, || prob_overhead(&spec))??;
            match &spec.output_path {
                Some(p) => {
                    write_csv(&rows, p)?;
                    write_curve_csv(&curve, curve_path(Path::new(p)))?;
                }
                None => to_stdout(|w| {
                    write_rows(&rows, &mut *w)?;
                    writeln!(w).map_err(|e| Error::io("<stdout>", e))?;
                    write_curve_rows(&curve, w)
                })?,
            }
            Ok(EXIT_OK)
        }
        Command::SingleDrop { common, drop } => {
            let spec = common.spec()?;
            let report = single_drop(&spec, drop)?;
            let json = serde_json::to_string_pretty(&report)?;
            match &spec.output_path {
                Some(p) => std::fs::write(p, json + "\n").map_err(|e| Error::io(p, e))?,
                None => to_stdout(|w| {
                    writeln!(w, "{json}").map_err(|e| Error::io("<stdout>", e))
                })?,
            }
            Ok(EXIT_OK)
        }
        Command::Selftest(c) => {
            let suites = with_threads(c.threads()?, selftest::run_all)??;
            let mut all = true;
            for s in &suites {
                println!("{:<24} {}  {}", s.name, if s.passed { "PASS" } else { "FAIL" }, s.detail);
                all &= s.passed;
            }
            Ok(if all { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("steersim: {e}");
            exit_code(&e)
        }
    }
}
