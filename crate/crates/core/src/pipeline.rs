//! Chronological split, sliding windows, z-score scaling and the
//! time-of-day feature.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::{pack_bits, write_f64_le};
use crate::model::DynamicsTensor;
use crate::time::Timestamp;

/// Lookback `input_len` steps, predict `output_len` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_len: usize,
    pub output_len: usize,
}

impl WindowSpec {
    pub fn new(input_len: usize, output_len: usize) -> Result<Self> {
        if input_len == 0 || output_len == 0 {
            return Err(Error::InvalidArgument(format!("window lengths must be positive, got {input_len}/{output_len}")));
        }
        Ok(WindowSpec { input_len, output_len })
    }

    pub const GRAPH: WindowSpec = WindowSpec { input_len: 12, output_len: 12 };
    pub const GRID: WindowSpec = WindowSpec { input_len: 6, output_len: 1 };

    pub fn span(&self) -> usize {
        self.input_len + self.output_len
    }

    /// `total - input_len - output_len + 1`.
    pub fn window_count(&self, total: usize) -> Result<usize> {
        if total < self.span() {
            return Err(Error::SeriesTooShort { total, input: self.input_len, output: self.output_len });
        }
        Ok(total - self.span() + 1)
    }
}

/// One sample: input steps `[start, start+T)`, target steps `[start+T, start+T+T')`.
/// Borrowed from the tensor; nothing is copied.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    pub start: usize,
    pub input: &'a [f64],
    pub input_mask: &'a [bool],
    pub target: &'a [f64],
    pub target_mask: &'a [bool],
}

impl Window<'_> {
    pub fn target_start(&self, spec: &WindowSpec) -> usize {
        self.start + spec.input_len
    }
}

fn window_at<'a>(tensor: &'a DynamicsTensor, spec: &WindowSpec, start: usize) -> Window<'a> {
    let mid = start + spec.input_len;
    let (input, input_mask) = tensor.steps(start, mid);
    let (target, target_mask) = tensor.steps(mid, mid + spec.output_len);
    Window { start, input, input_mask, target, target_mask }
}

/// All windows in time order.
pub fn make_windows<'a>(tensor: &'a DynamicsTensor, spec: &WindowSpec) -> Result<Vec<Window<'a>>> {
    let s = spec.window_count(tensor.time_len())?;
    Ok((0..s).map(|i| window_at(tensor, spec, i)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];
}

/// Integer split weights; `7:1:2` by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: u64,
    pub valid: u64,
    pub test: u64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 7, valid: 1, test: 2 }
    }
}

impl SplitRatios {
    pub fn new(train: u64, valid: u64, test: u64) -> Result<Self> {
        if train == 0 || valid == 0 || test == 0 {
            return Err(Error::InvalidArgument(format!("split weights must be positive: {train}:{valid}:{test}")));
        }
        Ok(SplitRatios { train, valid, test })
    }

    /// Parses `7:1:2` or `0.7,0.1,0.2`. Decimal fractions are scaled to
    /// integer weights so the floor rule stays exact.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split([':', ',']).map(str::trim).collect();
        let bad = || Error::InvalidArgument(format!("bad split ratios {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let decimals = parts.iter().map(|p| p.split_once('.').map_or(0, |(_, f)| f.len())).max().unwrap_or(0);
        if decimals > 9 {
            return Err(bad());
        }
        let scale = 10u64.pow(decimals as u32);
        let mut w = [0u64; 3];
        for (slot, p) in w.iter_mut().zip(&parts) {
            let (int, frac) = p.split_once('.').unwrap_or((p, ""));
            let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
            let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
            *slot = int * scale + frac_val * 10u64.pow((decimals - frac.len()) as u32);
        }
        Self::new(w[0], w[1], w[2])
    }

    /// Floor rule with the remainder going to test.
    pub fn sizes(&self, total: usize) -> Result<SplitSizes> {
        let sum = (self.train + self.valid + self.test) as u128;
        let train = (total as u128 * self.train as u128 / sum) as usize;
        let valid = (total as u128 * self.valid as u128 / sum) as usize;
        let sizes = SplitSizes { train, valid, test: total - train - valid };
        if sizes.train == 0 || sizes.valid == 0 || sizes.test == 0 {
            return Err(Error::EmptySplit { train: sizes.train, valid: sizes.valid, test: sizes.test });
        }
        Ok(sizes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Window first, then split the window indices.
    #[default]
    Samples,
    /// Split the raw time axis first, then window each segment.
    RawSteps,
}

/// Contiguous run of windows belonging to one split.
#[derive(Debug, Clone)]
pub struct SampleSet<'a> {
    pub split: Split,
    pub spec: WindowSpec,
    tensor: &'a DynamicsTensor,
    starts: Range<usize>,
}

impl<'a> SampleSet<'a> {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Window start steps covered by this split.
    pub fn starts(&self) -> Range<usize> {
        self.starts.clone()
    }

    pub fn tensor(&self) -> &'a DynamicsTensor {
        self.tensor
    }

    pub fn window(&self, i: usize) -> Window<'a> {
        window_at(self.tensor, &self.spec, self.starts.start + i)
    }

    pub fn windows(&self) -> impl ExactSizeIterator<Item = Window<'a>> + '_ {
        self.starts.clone().map(|s| window_at(self.tensor, &self.spec, s))
    }

    /// Raw steps touched by any input or target of this split.
    pub fn step_range(&self) -> Range<usize> {
        if self.starts.is_empty() {
            return 0..0;
        }
        self.starts.start..self.starts.end - 1 + self.spec.span()
    }

    /// Input block of window `i` with the time-of-day channel appended.
    pub fn input_with_time_of_day(&self, i: usize) -> Vec<f64> {
        let w = self.window(i);
        let ti = self.tensor.time_index();
        let times: Vec<Timestamp> = (w.start..w.start + self.spec.input_len).map(|t| ti.at(t)).collect();
        add_time_of_day(w.input, self.tensor.spatial_size(), self.tensor.channels(), &times)
    }

    /// Writes `<stem>.inputs.f64` `(S, T, spatial…, D[+1])`, `<stem>.targets.f64`,
    /// `<stem>.target_mask` (packed bits) and a JSON sidecar.
    pub fn export(&self, dir: &Path, stem: &str, time_of_day: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut mask = Vec::new();
        for (i, w) in self.windows().enumerate() {
            if time_of_day {
                inputs.extend(self.input_with_time_of_day(i));
            } else {
                inputs.extend_from_slice(w.input);
            }
            targets.extend_from_slice(w.target);
            mask.extend_from_slice(w.target_mask);
        }
        write_f64_le(&inputs, &dir.join(format!("{stem}.inputs.f64")))?;
        write_f64_le(&targets, &dir.join(format!("{stem}.targets.f64")))?;
        std::fs::write(dir.join(format!("{stem}.target_mask")), pack_bits(&mask))?;
        let spatial = self.tensor.spatial_shape();
        let d = self.tensor.channels();
        let shape = |steps: usize, ch: usize| {
            let mut s = vec![self.len(), steps];
            s.extend_from_slice(spatial);
            s.push(ch);
            s
        };
        let meta = serde_json::json!({
            "split": self.split,
            "kind": self.tensor.kind(),
            "first_window_start": self.starts.start,
            "inputs_shape": shape(self.spec.input_len, d + time_of_day as usize),
            "targets_shape": shape(self.spec.output_len, d),
            "channels": self.tensor.channel_names(),
            "time_of_day": time_of_day,
            "time_index": self.tensor.time_index(),
            "dtype": "f64",
            "byte_order": "little",
            "mask_bits": "lsb0",
        });
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&meta)?)?;
        Ok(())
    }
}

/// Train, valid and test sample sets in chronological order.
pub fn split_samples<'a>(
    tensor: &'a DynamicsTensor,
    spec: &WindowSpec,
    ratios: &SplitRatios,
    mode: SplitMode,
) -> Result<[SampleSet<'a>; 3]> {
    let set = |split, starts| SampleSet { split, spec: *spec, tensor, starts };
    match mode {
        SplitMode::Samples => {
            let s = spec.window_count(tensor.time_len())?;
            let z = ratios.sizes(s)?;
            Ok([
                set(Split::Train, 0..z.train),
                set(Split::Valid, z.train..z.train + z.valid),
                set(Split::Test, z.train + z.valid..s),
            ])
        }
        SplitMode::RawSteps => {
            let total = tensor.time_len();
            let z = ratios.sizes(total)?;
            let bounds = [0, z.train, z.train + z.valid, total];
            let mut out = Vec::with_capacity(3);
            for (k, split) in Split::ALL.into_iter().enumerate() {
                let (lo, hi) = (bounds[k], bounds[k + 1]);
                let n = spec.window_count(hi - lo)?;
                out.push(set(split, lo..lo + n));
            }
            Ok(out.try_into().unwrap())
        }
    }
}

/// Per-channel z-score parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Population mean and std of observed cells, per channel, over
    /// `values`/`mask` laid out with `channels` innermost.
    pub fn fit(values: &[f64], mask: &[bool], channels: usize) -> Self {
        let mut n = vec![0usize; channels];
        let mut sum = vec![0.0; channels];
        for (i, (&v, _)) in values.iter().zip(mask).enumerate().filter(|(_, (_, &m))| m) {
            n[i % channels] += 1;
            sum[i % channels] += v;
        }
        let mean: Vec<f64> = sum.iter().zip(&n).map(|(s, &k)| if k == 0 { 0.0 } else { s / k as f64 }).collect();
        let mut sq = vec![0.0; channels];
        for (i, (&v, _)) in values.iter().zip(mask).enumerate().filter(|(_, (_, &m))| m) {
            let c = i % channels;
            sq[c] += (v - mean[c]) * (v - mean[c]);
        }
        let std = sq
            .iter()
            .zip(&n)
            .map(|(s, &k)| {
                let sd = if k == 0 { 0.0 } else { (s / k as f64).sqrt() };
                if sd > 0.0 && sd.is_finite() { sd } else { 1.0 }
            })
            .collect();
        Scaler { mean, std }
    }

    /// Fits on the raw steps covered by the training windows.
    pub fn fit_train(train: &SampleSet) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::NoTrainingData);
        }
        let r = train.step_range();
        let (values, mask) = train.tensor().steps(r.start, r.end);
        Ok(Self::fit(values, mask, train.tensor().channels()))
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, values: &mut [f64]) {
        let d = self.channels();
        for (i, v) in values.iter_mut().enumerate() {
            *v = (*v - self.mean[i % d]) / self.std[i % d];
        }
    }

    pub fn invert(&self, values: &mut [f64]) {
        let d = self.channels();
        for (i, v) in values.iter_mut().enumerate() {
            *v = *v * self.std[i % d] + self.mean[i % d];
        }
    }
}

/// Appends one channel holding the fraction of the UTC day elapsed at each
/// step. `input` is `(times.len(), spatial, channels)`.
pub fn add_time_of_day(input: &[f64], spatial: usize, channels: usize, times: &[Timestamp]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len() * spatial * (channels + 1));
    for (t, ts) in times.iter().enumerate() {
        let tod = ts.time_of_day();
        for s in 0..spatial {
            let base = (t * spatial + s) * channels;
            out.extend_from_slice(&input[base..base + channels]);
            out.push(tod);
        }
    }
    out
}
