use std::path::PathBuf;

use atomst::analytics::{DayClass, GroupBy, ProfileBuilder, TemporalProfile};
use atomst::assemble::assemble_bundle;
use atomst::atomio::load_bundle;
use atomst::baselines::{evaluate_with_profiles, ModelConfig};
use atomst::metrics::{aggregate_horizon, Aggregation, EvalResult, MaskPolicy, MissingSentinel};
use atomst::pipeline::{split_samples, SplitMode, SplitRatios, SplitSizes, WindowSpec};
use atomst::{DynamicsKind, TimeIndex};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::{existing_dir, to_json, write_file, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Comma-separated: persistence, historical_average, seasonal_naive[:season],
    /// linear_ar[:lags], linear_ar_node[:lags].
    #[arg(long, value_delimiter = ',', default_value = "persistence")]
    models: Vec<String>,
    /// Defaults to 12 for graph data and 6 for grid data.
    #[arg(long)]
    input_len: Option<usize>,
    /// Defaults to 12 for graph data and 1 for grid data.
    #[arg(long)]
    output_len: Option<usize>,
    #[arg(long, default_value = "7:1:2")]
    split: String,
    #[arg(long, value_enum, default_value_t = SplitModeArg::Samples)]
    split_mode: SplitModeArg,
    /// Drop target cells below this value. Grid data defaults to 5.
    #[arg(long)]
    low_flow_filter: Option<f64>,
    /// Disable the grid default low-flow filter.
    #[arg(long, conflicts_with = "low_flow_filter")]
    no_low_flow_filter: bool,
    /// Treat zero targets as missing.
    #[arg(long)]
    zero_missing: bool,
    #[arg(long, value_enum, default_value_t = AggregationArg::Pooled)]
    aggregation: AggregationArg,
    /// Include fitted parameters in the report.
    #[arg(long)]
    save_state: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitModeArg {
    Samples,
    Raw,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Pooled,
    Mean,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitInfo {
    pub ratios: SplitRatios,
    pub mode: SplitMode,
    /// Windows per split.
    pub windows: SplitSizes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: String,
    pub config: ModelConfig,
    pub result: EvalResult,
    /// Time-of-day MAPE on the test split, weekdays then weekends.
    #[serde(default)]
    pub profiles: Vec<TemporalProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub dataset: String,
    pub kind: DynamicsKind,
    pub time_index: TimeIndex,
    pub window: WindowSpec,
    pub split: SplitInfo,
    pub mask_policy: MaskPolicy,
    pub aggregation: Aggregation,
    pub models: Vec<ModelRun>,
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    existing_dir(&args.bundle)?;
    let ratios = SplitRatios::parse(&args.split).map_err(|e| CliError::Usage(e.to_string()))?;
    if args.models.is_empty() {
        return Err(CliError::Usage("--models is empty".into()));
    }
    let bundle = load_bundle(&args.bundle)?;
    let grid = bundle.kind().is_grid();
    let default = if grid { WindowSpec::GRID } else { WindowSpec::GRAPH };
    let spec = WindowSpec::new(args.input_len.unwrap_or(default.input_len), args.output_len.unwrap_or(default.output_len))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let low_flow = match (args.low_flow_filter, args.no_low_flow_filter) {
        (Some(t), _) => Some(t),
        (None, true) => None,
        (None, false) => grid.then_some(5.0),
    };
    let policy = MaskPolicy {
        missing_sentinel: if args.zero_missing { MissingSentinel::ZeroIsMissing } else { MissingSentinel::MaskChannel },
        low_flow_filter: low_flow,
    };
    let aggregation = match args.aggregation {
        AggregationArg::Pooled => Aggregation::Pooled,
        AggregationArg::Mean => Aggregation::MeanOfParts,
    };
    let mode = match args.split_mode {
        SplitModeArg::Samples => SplitMode::Samples,
        SplitModeArg::Raw => SplitMode::RawSteps,
    };

    let tensor = assemble_bundle(&bundle)?;
    let ti = *tensor.time_index();
    let configs: Vec<ModelConfig> = args
        .models
        .iter()
        .map(|m| ModelConfig::parse(m, &spec, ti.steps_per_day()).map_err(|e| CliError::Usage(e.to_string())))
        .collect::<CliResult<_>>()?;
    let [train, valid, test] = split_samples(&tensor, &spec, &ratios, mode)?;
    let windows = SplitSizes { train: train.len(), valid: valid.len(), test: test.len() };

    let mut runs = Vec::with_capacity(configs.len());
    for (name, cfg) in args.models.iter().zip(configs) {
        let templates: Vec<ProfileBuilder> = match ti.steps_per_day() {
            Some(_) => [DayClass::Weekday, DayClass::Weekend]
                .into_iter()
                .map(|c| ProfileBuilder::new(GroupBy::TimeOfDaySlot, c, ti.step_seconds, policy, vec![name.clone()]))
                .collect::<atomst::Result<_>>()?,
            None => Vec::new(),
        };
        let mut model = cfg.build();
        model.fit(&train)?;
        let (mut result, builders) = evaluate_with_profiles(model.as_ref(), &test, &policy, &templates)?;
        if aggregation == Aggregation::MeanOfParts {
            let breakdown = result.breakdown.take();
            let steps: Vec<EvalResult> = breakdown.iter().flat_map(|b| b.per_step.iter().flatten().cloned()).collect();
            result = EvalResult { breakdown, ..aggregate_horizon(&steps, aggregation)? };
        }
        let profiles = builders.iter().map(ProfileBuilder::finish).collect();
        eprintln!("{name}: MAE {:.4} MAPE {:.4} RMSE {:.4} over {} cells", result.mae, result.mape, result.rmse, result.n);
        runs.push(ModelRun { model: name.clone(), config: cfg, result, profiles, state: args.save_state.then(|| model.state()) });
    }

    let report = BenchReport {
        schema_version: SCHEMA_VERSION,
        dataset: bundle.name.clone(),
        kind: bundle.kind(),
        time_index: ti,
        window: spec,
        split: SplitInfo { ratios, mode, windows },
        mask_policy: policy,
        aggregation,
        models: runs,
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| CliError::Io { path: parent.to_path_buf(), source })?;
    }
    write_file(&args.out, to_json(&report))
}
