//! Classical predictors for the windowed forecasting task.
//!
//! All models fit on the raw steps covered by the training windows and
//! predict one `(T', spatial, D)` block per window.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analytics::ProfileBuilder;
use crate::error::{Error, Result};
use crate::metrics::{EvalResult, HorizonAccumulator, MaskPolicy};
use crate::model::DynamicsTensor;
use crate::pipeline::{SampleSet, Window, WindowSpec};

/// Ridge damping on the lag weights of [`LinearAr`].
pub const RIDGE_LAMBDA: f64 = 1e-6;

pub trait Predictor: Sync {
    fn name(&self) -> &'static str;

    fn fit(&mut self, train: &SampleSet) -> Result<()>;

    /// Writes the `(T', spatial, D)` forecast for `window` into `out`.
    fn predict_window(&self, tensor: &DynamicsTensor, spec: &WindowSpec, window: &Window, out: &mut [f64]);

    /// Fitted parameters for reproducible re-runs.
    fn state(&self) -> serde_json::Value;

    /// Forecasts for every window of `set`, `(S, T', spatial, D)`.
    fn predict(&self, set: &SampleSet) -> Vec<f64> {
        let block = set.spec.output_len * set.tensor().step_stride();
        let mut out = vec![0.0; set.len() * block];
        if block == 0 {
            return out;
        }
        let run = |(i, chunk): (usize, &mut [f64])| {
            self.predict_window(set.tensor(), &set.spec, &set.window(i), chunk);
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            out.par_chunks_mut(block).enumerate().for_each(run);
        }
        #[cfg(not(feature = "parallel"))]
        out.chunks_mut(block).enumerate().for_each(run);
        out
    }
}

/// Scores `model` on `set` without materializing all forecasts.
pub fn evaluate_predictor(model: &dyn Predictor, set: &SampleSet, policy: &MaskPolicy) -> Result<EvalResult> {
    Ok(evaluate_with_profiles(model, set, policy, &[])?.0)
}

/// Like [`evaluate_predictor`], also feeding each forecast into copies of
/// `profiles` (model index 0) keyed by the target step timestamps.
pub fn evaluate_with_profiles(
    model: &dyn Predictor,
    set: &SampleSet,
    policy: &MaskPolicy,
    profiles: &[ProfileBuilder],
) -> Result<(EvalResult, Vec<ProfileBuilder>)> {
    let x = set.tensor();
    let ti = x.time_index();
    let layout = [set.spec.output_len, x.spatial_size(), x.channels()];
    let block = layout.iter().product::<usize>();
    let chunk = |range: std::ops::Range<usize>| -> Result<(HorizonAccumulator, Vec<ProfileBuilder>)> {
        let mut acc = HorizonAccumulator::new(layout);
        let mut builders = profiles.to_vec();
        let mut buf = vec![0.0; block];
        let mut times = Vec::with_capacity(set.spec.output_len);
        for i in range {
            let w = set.window(i);
            model.predict_window(x, &set.spec, &w, &mut buf);
            acc.push(&buf, w.target, w.target_mask, policy)?;
            if !builders.is_empty() {
                let t0 = w.target_start(&set.spec);
                times.clear();
                times.extend((t0..t0 + set.spec.output_len).map(|t| ti.at(t)));
                for b in &mut builders {
                    b.push(0, &buf, w.target, w.target_mask, &times)?;
                }
            }
        }
        Ok((acc, builders))
    };
    const WINDOWS_PER_TASK: usize = 64;
    let ranges: Vec<_> = (0..set.len()).step_by(WINDOWS_PER_TASK).map(|s| s..(s + WINDOWS_PER_TASK).min(set.len())).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = {
        use rayon::prelude::*;
        ranges.into_par_iter().map(chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = ranges.into_iter().map(chunk).collect();
    let mut total = HorizonAccumulator::new(layout);
    let mut merged = profiles.to_vec();
    for p in parts {
        let (acc, builders) = p?;
        total.merge(&acc);
        for (m, b) in merged.iter_mut().zip(&builders) {
            m.merge(b)?;
        }
    }
    Ok((total.finish()?, merged))
}

/// Per-channel mean of observed training cells; used where a model has no
/// observed input to draw on.
fn channel_means(train: &SampleSet) -> Result<Vec<f64>> {
    let r = train.step_range();
    let x = train.tensor();
    let (data, mask) = x.steps(r.start, r.end);
    let d = x.channels();
    let mut sum = vec![0.0; d];
    let mut n = vec![0usize; d];
    for (i, (&v, _)) in data.iter().zip(mask).enumerate().filter(|(_, (_, &m))| m) {
        sum[i % d] += v;
        n[i % d] += 1;
    }
    if n.iter().all(|&k| k == 0) {
        return Err(Error::NoTrainingData);
    }
    Ok(sum.iter().zip(&n).map(|(s, &k)| if k == 0 { 0.0 } else { s / k as f64 }).collect())
}

/// Most recent observed input value of cell `cell`, if any.
fn last_observed(window: &Window, stride: usize, input_len: usize, cell: usize) -> Option<f64> {
    (0..input_len).rev().map(|t| t * stride + cell).find(|&i| window.input_mask[i]).map(|i| window.input[i])
}

/// Repeats the last observed input value.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Persistence {
    pub fallback: Vec<f64>,
}

impl Predictor for Persistence {
    fn name(&self) -> &'static str {
        "persistence"
    }

    fn fit(&mut self, train: &SampleSet) -> Result<()> {
        self.fallback = channel_means(train)?;
        Ok(())
    }

    fn predict_window(&self, tensor: &DynamicsTensor, spec: &WindowSpec, window: &Window, out: &mut [f64]) {
        let stride = tensor.step_stride();
        let d = tensor.channels();
        for cell in 0..stride {
            let v = last_observed(window, stride, spec.input_len, cell)
                .unwrap_or_else(|| self.fallback.get(cell % d).copied().unwrap_or(0.0));
            for h in 0..spec.output_len {
                out[h * stride + cell] = v;
            }
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({ "model": self.name(), "fallback": self.fallback })
    }
}

/// Mean of training values sharing a time-of-day slot.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HistoricalAverage {
    /// Slots per day.
    pub period: usize,
    pub step_seconds: i64,
    /// `(period, spatial, channels)`; `None` where a slot was never observed.
    pub table: Vec<Option<f64>>,
    pub global_mean: Vec<f64>,
}

impl HistoricalAverage {
    fn slot(&self, t: crate::time::Timestamp) -> usize {
        (t.seconds_of_day() / self.step_seconds) as usize % self.period
    }
}

impl Predictor for HistoricalAverage {
    fn name(&self) -> &'static str {
        "historical_average"
    }

    fn fit(&mut self, train: &SampleSet) -> Result<()> {
        let x = train.tensor();
        let ti = x.time_index();
        self.period = ti
            .steps_per_day()
            .ok_or_else(|| Error::InvalidArgument(format!("a {}s step does not divide a day", ti.step_seconds)))?;
        self.step_seconds = ti.step_seconds;
        self.global_mean = channel_means(train)?;
        let stride = x.step_stride();
        let mut sum = vec![0.0; self.period * stride];
        let mut n = vec![0u32; self.period * stride];
        for t in train.step_range() {
            let base = self.slot(ti.at(t)) * stride;
            let (data, mask) = x.steps(t, t + 1);
            for cell in (0..stride).filter(|&c| mask[c]) {
                sum[base + cell] += data[cell];
                n[base + cell] += 1;
            }
        }
        self.table = sum.iter().zip(&n).map(|(s, &k)| (k > 0).then(|| s / k as f64)).collect();
        Ok(())
    }

    fn predict_window(&self, tensor: &DynamicsTensor, spec: &WindowSpec, window: &Window, out: &mut [f64]) {
        let stride = tensor.step_stride();
        let d = tensor.channels();
        let ti = tensor.time_index();
        for h in 0..spec.output_len {
            let base = self.slot(ti.at(window.target_start(spec) + h)) * stride;
            for cell in 0..stride {
                out[h * stride + cell] = self.table[base + cell].unwrap_or(self.global_mean[cell % d]);
            }
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({ "model": self.name(), "state": self })
    }
}

/// Copies the value observed one season before each target step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeasonalNaive {
    pub season: usize,
    pub fallback: Vec<f64>,
}

impl SeasonalNaive {
    pub fn new(season: usize) -> Self {
        SeasonalNaive { season, fallback: Vec::new() }
    }
}

impl Predictor for SeasonalNaive {
    fn name(&self) -> &'static str {
        "seasonal_naive"
    }

    fn fit(&mut self, train: &SampleSet) -> Result<()> {
        if self.season == 0 {
            return Err(Error::InvalidArgument("season must be positive".into()));
        }
        self.fallback = channel_means(train)?;
        Ok(())
    }

    fn predict_window(&self, tensor: &DynamicsTensor, spec: &WindowSpec, window: &Window, out: &mut [f64]) {
        let stride = tensor.step_stride();
        let d = tensor.channels();
        let t_in = spec.input_len;
        for cell in 0..stride {
            let last = last_observed(window, stride, t_in, cell).unwrap_or_else(|| self.fallback.get(cell % d).copied().unwrap_or(0.0));
            for h in 0..spec.output_len {
                let v = if self.season <= t_in {
                    let i = (t_in - self.season + h % self.season) * stride + cell;
                    if window.input_mask[i] { window.input[i] } else { last }
                } else {
                    last
                };
                out[h * stride + cell] = v;
            }
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({ "model": self.name(), "season": self.season, "fallback": self.fallback })
    }
}

/// Autoregression on the last `lags` values, fitted by damped least squares
/// and rolled forward one step at a time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LinearAr {
    pub lags: usize,
    /// One coefficient set per spatial cell instead of one per channel.
    pub per_node: bool,
    /// `[intercept, w_1 (most recent), .., w_lags]`, indexed by channel,
    /// or by `spatial * channels + channel` in per-node mode.
    pub coefficients: Vec<Vec<f64>>,
    /// Stand-in for masked inputs.
    pub fill: Vec<f64>,
}

impl LinearAr {
    pub fn new(lags: usize, per_node: bool) -> Self {
        LinearAr { lags, per_node, ..Default::default() }
    }

    fn group(&self, cell: usize, d: usize) -> usize {
        if self.per_node { cell } else { cell % d }
    }
}

impl Predictor for LinearAr {
    fn name(&self) -> &'static str {
        "linear_ar"
    }

    fn fit(&mut self, train: &SampleSet) -> Result<()> {
        let lags = self.lags;
        if lags == 0 || lags > train.spec.input_len {
            return Err(Error::InvalidArgument(format!("lags must be in 1..={}, got {lags}", train.spec.input_len)));
        }
        let x = train.tensor();
        let r = train.step_range();
        if r.len() < lags + 1 {
            return Err(Error::NoTrainingData);
        }
        self.fill = channel_means(train)?;
        let stride = x.step_stride();
        let d = x.channels();
        let groups = if self.per_node { stride } else { d };
        let p = lags + 1;
        let mut xtx = vec![DMatrix::<f64>::zeros(p, p); groups];
        let mut xty = vec![DVector::<f64>::zeros(p); groups];
        let mut rows = vec![0usize; groups];
        let (data, mask) = x.steps(r.start, r.end);
        let mut feat = vec![0.0; p];
        for t in lags - 1..r.len() - 1 {
            for cell in 0..stride {
                let target = (t + 1) * stride + cell;
                if !mask[target] || !(0..lags).all(|k| mask[(t - k) * stride + cell]) {
                    continue;
                }
                feat[0] = 1.0;
                for k in 0..lags {
                    feat[k + 1] = data[(t - k) * stride + cell];
                }
                let g = self.group(cell, d);
                let y = data[target];
                for i in 0..p {
                    xty[g][i] += feat[i] * y;
                    for j in i..p {
                        xtx[g][(i, j)] += feat[i] * feat[j];
                    }
                }
                rows[g] += 1;
            }
        }
        self.coefficients = Vec::with_capacity(groups);
        for g in 0..groups {
            let mut a = xtx[g].clone();
            for i in 0..p {
                for j in 0..i {
                    a[(i, j)] = a[(j, i)];
                }
            }
            if rows[g] == 0 {
                // Nothing to learn from: predict the fill value.
                let mut w = vec![0.0; p];
                w[0] = self.fill[g % d];
                self.coefficients.push(w);
                continue;
            }
            for i in 1..p {
                a[(i, i)] += RIDGE_LAMBDA;
            }
            let chol = a.cholesky().ok_or(Error::SingularSystem)?;
            let w = chol.solve(&xty[g]);
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::SingularSystem);
            }
            self.coefficients.push(w.iter().copied().collect());
        }
        Ok(())
    }

    fn predict_window(&self, tensor: &DynamicsTensor, spec: &WindowSpec, window: &Window, out: &mut [f64]) {
        let stride = tensor.step_stride();
        let d = tensor.channels();
        let lags = self.lags;
        let mut hist = vec![0.0; lags];
        for cell in 0..stride {
            let w = &self.coefficients[self.group(cell, d)];
            // hist[0] is the most recent value.
            for (k, h) in hist.iter_mut().enumerate() {
                let i = (spec.input_len - 1 - k) * stride + cell;
                *h = if window.input_mask[i] { window.input[i] } else { self.fill[cell % d] };
            }
            for step in 0..spec.output_len {
                let y = w[0] + w[1..].iter().zip(&hist).map(|(a, b)| a * b).sum::<f64>();
                out[step * stride + cell] = y;
                hist.rotate_right(1);
                hist[0] = y;
            }
        }
    }

    fn state(&self) -> serde_json::Value {
        serde_json::json!({ "model": self.name(), "state": self })
    }
}

/// Buildable model choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum ModelConfig {
    Persistence,
    HistoricalAverage,
    SeasonalNaive { season: usize },
    LinearAr { lags: usize, per_node: bool },
}

impl ModelConfig {
    /// Parses `persistence`, `historical_average`, `seasonal_naive[:season]`
    /// or `linear_ar[:lags]`. Omitted parameters follow `spec`; the default
    /// season is a day when the input window holds one, else the window.
    pub fn parse(s: &str, spec: &WindowSpec, steps_per_day: Option<usize>) -> Result<Self> {
        let (name, arg) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
        let num = |default: usize| -> Result<usize> {
            arg.map_or(Ok(default), |a| a.parse().map_err(|_| Error::InvalidArgument(format!("bad model parameter in {s:?}"))))
        };
        Ok(match name {
            "persistence" => ModelConfig::Persistence,
            "historical_average" | "ha" => ModelConfig::HistoricalAverage,
            "seasonal_naive" => ModelConfig::SeasonalNaive { season: num(steps_per_day.filter(|&p| p <= spec.input_len).unwrap_or(spec.input_len))? },
            "linear_ar" | "ar" => ModelConfig::LinearAr { lags: num(spec.input_len)?, per_node: false },
            "linear_ar_node" => ModelConfig::LinearAr { lags: num(spec.input_len)?, per_node: true },
            _ => return Err(Error::InvalidArgument(format!("unknown model {s:?}"))),
        })
    }

    pub fn build(self) -> Box<dyn Predictor> {
        match self {
            ModelConfig::Persistence => Box::new(Persistence::default()),
            ModelConfig::HistoricalAverage => Box::new(HistoricalAverage::default()),
            ModelConfig::SeasonalNaive { season } => Box::new(SeasonalNaive::new(season)),
            ModelConfig::LinearAr { lags, per_node } => Box::new(LinearAr::new(lags, per_node)),
        }
    }
}
