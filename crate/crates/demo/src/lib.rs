//! Browser bindings. Every export takes and returns strings (CSV or JSON) so
//! the page needs no generated types beyond the glue module.

use std::collections::BTreeMap;

use atomst::analytics::{rank_models, DayClass, GroupBy, Leaderboard, Metric, ProfileBuilder, ResultGrid, TemporalProfile};
use atomst::assemble::assemble_bundle;
use atomst::atomio::{read_dynamics, read_geo, read_rel};
use atomst::baselines::{evaluate_with_profiles, ModelConfig};
use atomst::convert::{SynthConfig, SynthGraphConfig};
use atomst::metrics::{EvalResult, MaskPolicy};
use atomst::pipeline::{split_samples, SplitMode, SplitRatios, WindowSpec};
use atomst::validate::{dataset_stats, validate_bundle, DatasetStats, ValidationReport};
use atomst::{DatasetBundle, Dynamics};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Checked {
    pub report: ValidationReport,
    /// Absent when the tables are too broken to summarize.
    pub stats: Option<DatasetStats>,
}

/// Parses pasted `.geo`, `.rel` (may be blank) and `.dyna` text and runs the
/// full validation suite over them.
pub fn check_tables(geo: &str, rel: &str, dyna: &str) -> Result<Checked, String> {
    let geo = read_geo(geo.as_bytes()).map_err(|e| format!(".geo: {e}"))?;
    let rel = if rel.trim().is_empty() {
        None
    } else {
        Some(read_rel(rel.as_bytes()).map_err(|e| format!(".rel: {e}"))?)
    };
    let dyna = read_dynamics(dyna.as_bytes()).map_err(|e| format!(".dyna: {e}"))?;
    let bundle = DatasetBundle::new("pasted", geo, rel, Dynamics::Graph(dyna), None, None).map_err(|e| e.to_string())?;
    let report = validate_bundle(&bundle);
    let stats = dataset_stats(&bundle).ok();
    Ok(Checked { report, stats })
}

/// One dataset's worth of scores, as produced by [`bench_synthetic`] and
/// consumed by [`rank`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Run {
    pub dataset: String,
    pub results: BTreeMap<String, EvalResult>,
}

#[derive(Debug, Serialize)]
pub struct Bench {
    #[serde(flatten)]
    pub run: Run,
    pub nodes: usize,
    pub time_steps: usize,
    pub windows: [usize; 3],
    /// Weekday then weekend MAPE by time of day, one series per model.
    pub profiles: Vec<TemporalProfile>,
}

/// Generates a synthetic graph dataset, fits each baseline on the training
/// split and scores it on the test split.
pub fn bench_synthetic(config: &str, models: &str) -> Result<Bench, String> {
    let cfg: SynthGraphConfig = serde_json::from_str(config).map_err(|e| format!("config: {e}"))?;
    let (bundle, _) = SynthConfig::Graph(cfg).generate().map_err(|e| e.to_string())?;
    let x = assemble_bundle(&bundle).map_err(|e| e.to_string())?;
    let ti = *x.time_index();
    let spec = WindowSpec::GRAPH;
    let sets = split_samples(&x, &spec, &SplitRatios::default(), SplitMode::Samples).map_err(|e| e.to_string())?;
    let policy = MaskPolicy::default();

    let mut results = BTreeMap::new();
    let mut profiles: Vec<TemporalProfile> = Vec::new();
    for name in models.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let mut model = ModelConfig::parse(name, &spec, ti.steps_per_day()).map_err(|e| e.to_string())?.build();
        model.fit(&sets[0]).map_err(|e| format!("{name}: {e}"))?;
        let templates: Vec<ProfileBuilder> = match ti.steps_per_day() {
            Some(_) => [DayClass::Weekday, DayClass::Weekend]
                .into_iter()
                .map(|c| ProfileBuilder::new(GroupBy::TimeOfDaySlot, c, ti.step_seconds, policy, vec![name.to_string()]))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?,
            None => Vec::new(),
        };
        let (result, builders) = evaluate_with_profiles(model.as_ref(), &sets[2], &policy, &templates).map_err(|e| format!("{name}: {e}"))?;
        results.insert(name.to_string(), result);
        for (i, b) in builders.iter().enumerate() {
            let p = b.finish();
            match profiles.get_mut(i) {
                Some(merged) => merged.merge(&p).map_err(|e| e.to_string())?,
                None => profiles.push(p),
            }
        }
    }
    if results.is_empty() {
        return Err("no models selected".into());
    }
    Ok(Bench {
        run: Run { dataset: bundle.name.clone(), results },
        nodes: x.spatial_size(),
        time_steps: ti.len,
        windows: [sets[0].len(), sets[1].len(), sets[2].len()],
        profiles,
    })
}

/// Ranks models across the collected runs. A model missing from some run is
/// an error, as is the same dataset appearing twice.
pub fn rank(runs: &[Run]) -> Result<Leaderboard, String> {
    let mut grid = ResultGrid::new();
    for run in runs {
        for (model, r) in &run.results {
            let per = grid.entry(model.clone()).or_default();
            if per.insert(run.dataset.clone(), r.clone()).is_some() {
                return Err(format!("dataset {} appears twice", run.dataset));
            }
        }
    }
    rank_models(&grid, &Metric::ALL).map_err(|e| e.to_string())
}

fn to_js<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = validateTables)]
pub fn validate_tables(geo: &str, rel: &str, dyna: &str) -> Result<String, JsError> {
    to_js(check_tables(geo, rel, dyna))
}

#[wasm_bindgen(js_name = benchSynthetic)]
pub fn bench_synthetic_js(config: &str, models: &str) -> Result<String, JsError> {
    to_js(bench_synthetic(config, models))
}

/// `runs` is a JSON array of earlier `benchSynthetic` outputs.
#[wasm_bindgen(js_name = leaderboard)]
pub fn leaderboard_js(runs: &str) -> Result<String, JsError> {
    let runs: Result<Vec<Run>, String> = serde_json::from_str(runs).map_err(|e| format!("runs: {e}"));
    to_js(runs.and_then(|r| rank(&r)).map(|board| {
        serde_json::json!({ "board": board, "markdown": board.to_markdown() })
    }))
}
