//! `bldc-sim`: run drivetrain scenarios, compare DTC modes, dump switching
//! tables and check drive-cycle files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bldc_sim::cycle::load_cycle;
use bldc_sim::dtc::{modified_table, table_entries, table_to_csv, DtcMode, Table3Variant, CONVENTIONAL_TABLE};
use bldc_sim::engine::{compare, comparison_to_string, run, summary_to_string, trace_to_csv};
use bldc_sim::error::{ConfigError, SimError};
use bldc_sim::scenario::Scenario;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bldc-sim", about = "BLDC electric-vehicle drivetrain simulator", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate two scenarios on the same cycle and report b - a.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print a switching table.
    Tables {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Use the pattern-consistent (TD, FD, sector 5) entry.
        #[arg(long)]
        patched: bool,
        #[arg(short, long = "out", value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Validate a drive-cycle CSV and print its extent.
    CycleCheck { path: PathBuf },
    /// Print the version.
    Version,
}

#[derive(Args)]
struct Common {
    /// Directory for output files; nothing is written without it.
    #[arg(short, long = "out", value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override a scenario key, e.g. `--set dtc.mode=conventional`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Conventional,
    Modified,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self {
            code: 2,
            message: format!("cannot write {}: {err}", path.display()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self { code: 2, message: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::NonFiniteState { .. } => 3,
            SimError::Config(_) | SimError::Mismatch(_) => 2,
        };
        Self { code, message: e.to_string() }
    }
}

fn init_logging() {
    let level = match std::env::var("BLDC_SIM_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("info") => log::LevelFilter::Info,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::io(&path, e))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { scenario, common } => {
            let sc = Scenario::load(&scenario, &common.set)?;
            let out = run(&sc)?;
            let summary = summary_to_string(&out, &sc);
            if let Some(dir) = &common.out {
                prepare_dir(dir)?;
                write_file(dir, "trace.csv", &trace_to_csv(&out.trace))?;
                write_file(dir, "summary.txt", &summary)?;
            }
            print!("{summary}");
        }
        Command::Compare { a, b, common } => {
            let sa = Scenario::load(&a, &common.set)?;
            let sb = Scenario::load(&b, &common.set)?;
            let cmp = compare(&sa, &sb)?;
            let report = comparison_to_string(&cmp);
            if let Some(dir) = &common.out {
                prepare_dir(dir)?;
                write_file(dir, "a_trace.csv", &trace_to_csv(&cmp.a.trace))?;
                write_file(dir, "a_summary.txt", &summary_to_string(&cmp.a, &sa))?;
                write_file(dir, "b_trace.csv", &trace_to_csv(&cmp.b.trace))?;
                write_file(dir, "b_summary.txt", &summary_to_string(&cmp.b, &sb))?;
                write_file(dir, "comparison.txt", &report)?;
            }
            print!("{report}");
        }
        Command::Tables {
            mode,
            format: Format::Csv,
            patched,
            out,
        } => {
            let (mode, rows) = match mode {
                Mode::Conventional => {
                    if patched {
                        return Err(Failure::usage("--patched applies to the modified table only"));
                    }
                    (DtcMode::Conventional, CONVENTIONAL_TABLE)
                }
                Mode::Modified => {
                    let variant = if patched { Table3Variant::Patched } else { Table3Variant::Verbatim };
                    (DtcMode::Modified, modified_table(variant))
                }
            };
            let csv = table_to_csv(&table_entries(&rows));
            match out {
                Some(dir) => {
                    prepare_dir(&dir)?;
                    write_file(&dir, &format!("table_{mode}.csv"), &csv)?;
                }
                None => print!("{csv}"),
            }
        }
        Command::CycleCheck { path } => {
            let cycle = load_cycle(&path)?;
            println!("cycle = \"{}\"", cycle.name);
            println!("samples = {}", cycle.samples().len());
            println!("duration_s = {}", cycle.duration());
            println!("peak_speed_mps = {}", cycle.peak_speed());
        }
        Command::Version => println!("bldc-sim {}", env!("CARGO_PKG_VERSION")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("error[1]: {first}");
            eprintln!("run `bldc-sim --help` for usage");
            return ExitCode::from(1);
        }
    };
    init_logging();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.code)
        }
    }
}
