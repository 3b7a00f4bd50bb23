//! `atomst`: validate, summarize, convert and benchmark atomic-file datasets.

mod bench;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atomst::atomio::{load_bundle, save_bundle};
use atomst::convert::{from_long_csv, from_wide_csv, LongConfig, Manifest, SynthConfig, WideConfig};
use atomst::validate::{dataset_stats, validate_bundle};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] atomst::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    /// Already reported on stdout.
    #[error("validation failed")]
    Failed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

pub fn existing_dir(path: &Path) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{} is not a directory", path.display())))
    }
}

#[derive(Parser)]
#[command(name = "atomst", version, about = "Atomic-file datasets: validate, convert, benchmark, report")]
struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "ATOMST_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check keys, references, time grid and lattice completeness.
    Validate {
        bundle: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// One summary row: unit, relation and dynamics counts, time span and step.
    Stats {
        bundle: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Build a bundle from raw CSV or the synthetic generator.
    Convert {
        #[arg(long, value_enum)]
        from: Source,
        /// JSON mapping or generator config.
        #[arg(long)]
        config: PathBuf,
        /// Raw CSV for long/wide input; defaults to the config's `input` field.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit and score baseline models on the chronological split.
    Bench(bench::BenchArgs),
    /// Leaderboard and temporal profiles from bench reports.
    Report(report::ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Long,
    Wide,
    Synth,
}

fn run_validate(bundle: &Path, json: bool) -> CliResult<()> {
    existing_dir(bundle)?;
    let report = validate_bundle(&load_bundle(bundle)?);
    if json {
        print!("{}", to_json(&report));
    } else {
        println!("{report}");
    }
    if report.passed() { Ok(()) } else { Err(CliError::Failed) }
}

fn run_stats(bundle: &Path, json: bool) -> CliResult<()> {
    existing_dir(bundle)?;
    let stats = dataset_stats(&load_bundle(bundle)?)?;
    if json {
        print!("{}", to_json(&stats));
    } else {
        println!("{stats}");
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct InputField {
    input: Option<PathBuf>,
}

fn run_convert(from: Source, config: &Path, input: Option<PathBuf>, out: &Path) -> CliResult<()> {
    let raw_input = || -> CliResult<std::fs::File> {
        let path = match input.clone() {
            Some(p) => p,
            None => {
                let field: InputField = read_json(config)?;
                let p = field.input.ok_or_else(|| CliError::Usage("no --input given and the config has no `input` field".into()))?;
                if p.is_relative() { config.parent().unwrap_or(Path::new(".")).join(p) } else { p }
            }
        };
        std::fs::File::open(&path).map_err(|source| CliError::Io { path, source })
    };
    let (bundle, manifest): (_, Manifest) = match from {
        Source::Long => from_long_csv(raw_input()?, &read_json::<LongConfig>(config)?)?,
        Source::Wide => from_wide_csv(raw_input()?, &read_json::<WideConfig>(config)?)?,
        Source::Synth => read_json::<SynthConfig>(config)?.generate()?,
    };
    save_bundle(&bundle, out)?;
    write_file(&out.join("manifest.json"), to_json(&manifest))?;
    eprintln!("wrote {} ({} dynamics rows) to {}", bundle.name, bundle.dynamics.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match cli.command {
        Command::Validate { bundle, json } => run_validate(&bundle, json),
        Command::Stats { bundle, json } => run_stats(&bundle, json),
        Command::Convert { from, config, input, out } => run_convert(from, &config, input, &out),
        Command::Bench(args) => bench::run(&args),
        Command::Report(args) => report::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
