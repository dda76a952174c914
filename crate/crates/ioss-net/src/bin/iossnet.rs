use clap::{Args, Parser, Subcommand};
use ioss_net::config::{MValue, RunConfig};
use ioss_net::pipeline::{
    self, FalsifyOutcome, VerifiedClasses, WitnessFile,
};
use ioss_net::report::Report;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Detectability certification for networks of coupled discrete-time
/// subsystems: per-class LMI verification, coupling-gain extraction,
/// small-gain analysis, certificate composition, and empirical
/// falsification.
///
/// Exit codes: 0 analysis passed, 2 analysis negative (uncertified class
/// or falsified inequality), 1 usage or runtime error. Set IOSSNET_LOG=1
/// for progress output on stderr.
#[derive(Parser)]
#[command(name = "iossnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// run configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// output directory for reports, certificates, and witnesses
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// override the eta~ sweep, comma-separated
    #[arg(long, value_delimiter = ',')]
    eta_sweep: Option<Vec<f64>>,
    /// override the LMI feasibility margin
    #[arg(long)]
    margin: Option<f64>,
    /// override the falsification sample count
    #[arg(long)]
    samples: Option<usize>,
    /// override the network sizes, comma-separated (e.g. 3,4,inf)
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// verify every distinct subsystem class over the eta~ sweep and
    /// write the chosen certificates
    Verify(CommonArgs),
    /// small-gain verdicts per network size from stored certificates
    Smallgain {
        #[command(flatten)]
        common: CommonArgs,
        /// certificate file from `verify` (default <out>/certificates.json)
        #[arg(long)]
        certificates: Option<PathBuf>,
    },
    /// sample trajectory pairs and check every certified inequality
    Falsify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        certificates: Option<PathBuf>,
    },
    /// render a stored machine-readable report to markdown
    Report {
        /// report JSON (default <out>/report.json)
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// re-run one recorded witness against its stored certificate
    Replay {
        #[command(flatten)]
        common: CommonArgs,
        /// witness file written by `falsify`
        #[arg(long)]
        witness: PathBuf,
    },
}

fn log_enabled() -> bool {
    std::env::var("IOSSNET_LOG").map_or(false, |v| !v.is_empty() && v != "0")
}

macro_rules! progress {
    ($($arg:tt)*) => {
        if log_enabled() {
            eprintln!($($arg)*);
        }
    };
}

fn parse_m_list(items: &[String]) -> Result<Vec<MValue>, String> {
    items
        .iter()
        .map(|s| {
            if s == "inf" {
                Ok(MValue::Infinite)
            } else {
                s.parse::<usize>()
                    .map(MValue::Finite)
                    .map_err(|_| format!("bad M value {s:?}: expected an integer or \"inf\""))
            }
        })
        .collect()
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("reading {}: {e}", args.config.display()))?;
    let mut config = RunConfig::from_json(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(sweep) = &args.eta_sweep {
        config.eta_sweep = sweep.clone();
    }
    if let Some(margin) = args.margin {
        config.margin = margin;
    }
    if let Some(samples) = args.samples {
        config.samples = samples;
    }
    if let Some(m) = &args.m {
        config.m_values = parse_m_list(m)?;
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    std::fs::write(&path, text + "\n").map_err(|e| format!("writing {}: {e}", path.display()))?;
    Ok(path)
}

fn write_report(dir: &Path, report: &Report) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;
    let json = report.to_json().map_err(|e| e.to_string())?;
    std::fs::write(dir.join("report.json"), json + "\n")
        .map_err(|e| format!("writing report.json: {e}"))?;
    std::fs::write(dir.join("report.md"), report.to_markdown())
        .map_err(|e| format!("writing report.md: {e}"))?;
    Ok(())
}

/// merge into an existing report.json from an earlier stage when present
fn merge_existing(dir: &Path, report: Report) -> Report {
    let path = dir.join("report.json");
    match std::fs::read_to_string(&path).ok().and_then(|t| Report::from_json(&t).ok()) {
        Some(mut existing) => {
            existing.merge(report);
            existing
        }
        None => report,
    }
}

fn load_certificates(
    common: &CommonArgs,
    explicit: &Option<PathBuf>,
) -> Result<VerifiedClasses, String> {
    let path = explicit
        .clone()
        .unwrap_or_else(|| common.out.join("certificates.json"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("reading {}: {e} (run `iossnet verify` first)", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("parsing {}: {e}", path.display()))
}

fn write_witnesses(dir: &Path, outcome: &FalsifyOutcome) -> Result<Vec<PathBuf>, String> {
    let mut paths = Vec::new();
    for (i, w) in outcome.witnesses.iter().enumerate() {
        let name = format!("witness-m{}-{}-{i}.json", w.m, w.record.check);
        paths.push(write_json(dir, &name, w)?);
    }
    Ok(paths)
}

fn run() -> Result<u8, String> {
    match Cli::parse().command {
        Command::Verify(common) => {
            let config = load_config(&common)?;
            progress!("verifying {} over eta~ sweep {:?}", config.model_name(), config.eta_sweep);
            let (report, verified) = pipeline::cmd_verify(&config).map_err(|e| e.to_string())?;
            write_report(&common.out, &report)?;
            match verified {
                Some(verified) => {
                    let path = write_json(&common.out, "certificates.json", &verified)?;
                    progress!("certificates written to {}", path.display());
                    Ok(0)
                }
                None => {
                    eprintln!("one or more classes could not be certified at any eta~ in the sweep");
                    Ok(2)
                }
            }
        }
        Command::Smallgain { common, certificates } => {
            let config = load_config(&common)?;
            let verified = load_certificates(&common, &certificates)?;
            let (report, _) =
                pipeline::cmd_smallgain(&config, &verified).map_err(|e| e.to_string())?;
            let merged = merge_existing(&common.out, report);
            write_report(&common.out, &merged)?;
            for row in &merged.m_rows {
                progress!(
                    "M={}: trajectory {:?}, Lyapunov {:?}",
                    row.m, row.verdict_traj, row.verdict_lyap
                );
            }
            Ok(0)
        }
        Command::Falsify { common, certificates } => {
            let config = load_config(&common)?;
            let verified = load_certificates(&common, &certificates)?;
            let (_, analyses) =
                pipeline::cmd_smallgain(&config, &verified).map_err(|e| e.to_string())?;
            progress!("falsifying with {} pairs per network size", config.samples);
            let (report, outcome) =
                pipeline::cmd_falsify(&config, &verified, &analyses).map_err(|e| e.to_string())?;
            let violations: usize = outcome.summaries.iter().map(|s| s.violations).sum();
            let merged = merge_existing(&common.out, report);
            write_report(&common.out, &merged)?;
            if violations > 0 {
                for path in write_witnesses(&common.out, &outcome)? {
                    eprintln!("witness written to {}", path.display());
                }
                eprintln!("{violations} violation(s) found");
                Ok(2)
            } else {
                progress!("no violations found");
                Ok(0)
            }
        }
        Command::Report { input, out } => {
            let path = input.unwrap_or_else(|| out.join("report.json"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            let report = Report::from_json(&text).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
            let md = report.to_markdown();
            std::fs::write(out.join("report.md"), &md)
                .map_err(|e| format!("writing report.md: {e}"))?;
            print!("{md}");
            Ok(0)
        }
        Command::Replay { common, witness } => {
            let config = load_config(&common)?;
            let text = std::fs::read_to_string(&witness)
                .map_err(|e| format!("reading {}: {e}", witness.display()))?;
            let file: WitnessFile =
                serde_json::from_str(&text).map_err(|e| format!("parsing witness: {e}"))?;
            let replayed = pipeline::replay_witness(&config, &file).map_err(|e| e.to_string())?;
            if replayed.violations > 0 {
                println!(
                    "violation reproduced: check {} slack {:.6e} (recorded {:.6e})",
                    file.record.check, replayed.worst_slack, file.record.slack
                );
                Ok(2)
            } else {
                println!("violation NOT reproduced; worst slack {:.6e}", replayed.worst_slack);
                Ok(0)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
