use std::collections::BTreeMap;
use std::path::PathBuf;

use atomst::analytics::{rank_models, DayClass, Metric, ResultGrid, TemporalProfile};
use clap::Args;

use crate::bench::{BenchReport, SCHEMA_VERSION};
use crate::{read_json, to_json, write_file, CliError, CliResult};

#[derive(Args)]
pub struct ReportArgs {
    /// Bench report files or glob patterns.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<String>,
    #[arg(long)]
    leaderboard: bool,
    #[arg(long)]
    profiles: bool,
    /// Metrics to rank on.
    #[arg(long, value_delimiter = ',', default_value = "mae,mape,rmse")]
    metrics: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_metric(s: &str) -> CliResult<Metric> {
    match s.trim().to_ascii_lowercase().as_str() {
        "mae" => Ok(Metric::Mae),
        "mape" => Ok(Metric::Mape),
        "rmse" => Ok(Metric::Rmse),
        other => Err(CliError::Usage(format!("unknown metric `{other}`"))),
    }
}

fn expand(patterns: &[String]) -> CliResult<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| CliError::Usage(format!("bad pattern `{pat}`: {e}")))?;
        let before = paths.len();
        for m in matches {
            paths.push(m.map_err(|e| CliError::Io { path: e.path().to_path_buf(), source: e.into() })?);
        }
        if paths.len() == before {
            return Err(CliError::Usage(format!("`{pat}` matches no file")));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn class_name(c: DayClass) -> &'static str {
    match c {
        DayClass::Weekday => "weekday",
        DayClass::Weekend => "weekend",
        DayClass::All => "all",
    }
}

pub fn run(args: &ReportArgs) -> CliResult<()> {
    let basis: Vec<Metric> = args.metrics.iter().map(|m| parse_metric(m)).collect::<CliResult<_>>()?;
    let (want_board, want_profiles) = match (args.leaderboard, args.profiles) {
        (false, false) => (true, true),
        flags => flags,
    };
    let mut reports = Vec::new();
    for path in expand(&args.runs)? {
        let report: BenchReport = read_json(&path)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(CliError::Usage(format!("{}: unsupported schema version {}", path.display(), report.schema_version)));
        }
        reports.push((path, report));
    }
    std::fs::create_dir_all(&args.out).map_err(|source| CliError::Io { path: args.out.clone(), source })?;

    if want_board {
        let mut grid = ResultGrid::new();
        for (path, report) in &reports {
            for run in &report.models {
                let mut result = run.result.clone();
                result.breakdown = None;
                let cell = grid.entry(run.model.clone()).or_default();
                if cell.insert(report.dataset.clone(), result).is_some() {
                    return Err(CliError::Usage(format!(
                        "{}: model `{}` on `{}` already appears in an earlier run",
                        path.display(),
                        run.model,
                        report.dataset
                    )));
                }
            }
        }
        let board = rank_models(&grid, &basis)?;
        write_file(&args.out.join("leaderboard.json"), board.to_json()?)?;
        write_file(&args.out.join("leaderboard.csv"), board.to_csv()?)?;
        let md = board.to_markdown();
        write_file(&args.out.join("leaderboard.md"), &md)?;
        print!("{md}");
    }

    if want_profiles {
        let mut merged: BTreeMap<(String, &'static str), TemporalProfile> = BTreeMap::new();
        for (_, report) in &reports {
            for run in &report.models {
                for p in &run.profiles {
                    let key = (report.dataset.clone(), class_name(p.day_class));
                    match merged.get_mut(&key) {
                        Some(acc) => acc.merge(p)?,
                        None => {
                            merged.insert(key, p.clone());
                        }
                    }
                }
            }
        }
        for ((dataset, class), profile) in &merged {
            let stem = format!("profile_{dataset}_{class}");
            write_file(&args.out.join(format!("{stem}.json")), to_json(profile))?;
            write_file(&args.out.join(format!("{stem}.csv")), profile.to_csv())?;
            write_file(&args.out.join(format!("{stem}.md")), profile.to_markdown())?;
            write_file(&args.out.join(format!("{stem}.svg")), profile.to_svg(&format!("{dataset}: MAPE by time of day ({class})")))?;
        }
        if merged.is_empty() {
            eprintln!("no profiles in the given runs");
        }
    }
    Ok(())
}
