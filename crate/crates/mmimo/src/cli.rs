//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use mmimo_core::sim::{ExperimentKind, REGISTRY};

use crate::config::{parse_config, ConfigError, Overrides};
use crate::output::{write_outputs, Metadata};
use crate::runner::{default_workers, run_parallel, RunError};

pub const OUT_DIR_ENV: &str = "MMIMO_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mmimo", about = "Multiuser massive MIMO link-level simulator", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config or a previous run's metadata.json.
    ///
    /// Flags override the values in the document. Outputs go to --out, else
    /// the document's [output] dir, else $MMIMO_OUT_DIR, else ./out.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated SNR points in dB.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        snr: Option<Vec<f64>>,
        /// Packets (uplink) or channel draws (downlink).
        #[arg(long)]
        packets: Option<usize>,
        /// Worker threads; 0 uses every available core.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress the progress lines on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// List the registered precoders and detectors with their options.
    ListAlgorithms,
    /// Print the version.
    Version,
}

/// A failure with its exit code and the tag printed as `error[tag]:`.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub tag: &'static str,
    pub message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self { code: EXIT_CONFIG, tag: "config", message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match &e {
            RunError::Sim(s) if s.is_numerical() => {
                Failure { code: EXIT_NUMERICAL, tag: "numerical", message: e.to_string() }
            }
            RunError::Sim(_) => Failure::config(e),
            RunError::Pool(_) => Failure { code: EXIT_CONFIG, tag: "io", message: e.to_string() },
        }
    }
}

pub fn algorithm_listing() -> String {
    let mut out = String::new();
    for kind in [ExperimentKind::DownlinkSumRate, ExperimentKind::UplinkBer] {
        let title = match kind {
            ExperimentKind::DownlinkSumRate => "precoders (experiment = \"downlink_sumrate\")",
            ExperimentKind::UplinkBer => "detectors (experiment = \"uplink_ber\")",
        };
        out.push_str(title);
        out.push('\n');
        for info in REGISTRY.iter().filter(|i| i.experiment == kind) {
            out.push_str(&format!("  {:<8} {}\n", info.name, info.summary));
            for (key, default, meaning) in info.options {
                out.push_str(&format!("           option {key} (default {default}): {meaning}\n"));
            }
        }
    }
    out
}

fn resolve_out_dir(cli: Option<PathBuf>, doc: Option<&Path>) -> PathBuf {
    cli.or_else(|| doc.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run_command(path: &Path, overrides: Overrides, quiet: bool) -> Result<(), Failure> {
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{origin}: {e}")))?;
    let (cfg, spec) = parse_config(&text, &origin, &overrides)?;
    let out_dir = resolve_out_dir(overrides.out.clone(), cfg.output.dir.as_deref());
    let workers = if cfg.workers == 0 { default_workers() } else { cfg.workers };
    if !quiet {
        eprintln!(
            "run: {} with {} algorithm(s), {} SNR point(s), {} packet(s), {} worker(s)",
            spec.experiment.as_str(),
            spec.algorithms.len(),
            spec.scenario.snr_grid_db.len(),
            spec.scenario.n_packets,
            workers
        );
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let report = run_parallel(&spec, workers)?;
    let wall = clock.elapsed().as_secs_f64();
    let meta = Metadata::new(&cfg, &report, started, wall, workers);
    let written = write_outputs(&out_dir, &cfg, &report, &meta)
        .map_err(|e| Failure { code: EXIT_CONFIG, tag: "io", message: format!("{}: {e}", out_dir.display()) })?;
    if !quiet {
        eprintln!("done: {} file(s) in {} after {wall:.2}s", written.len(), out_dir.display());
    }
    Ok(())
}

/// Runs the CLI and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return EXIT_OK;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return EXIT_CONFIG;
        }
    };
    let result = match cli.command {
        Command::Run { config, seed, snr, packets, workers, out, quiet } => {
            run_command(&config, Overrides { seed, snr_db: snr, n_packets: packets, workers, out }, quiet)
        }
        Command::ListAlgorithms => {
            print!("{}", algorithm_listing());
            Ok(())
        }
        Command::Version => {
            println!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            // one line, so the prefix stays machine-parsable
            eprintln!("error[{}]: {}", f.tag, f.message.replace('\n', " "));
            f.code
        }
    }
}
