//! Masked MAE, MAPE and RMSE with pooled aggregation.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Cells with `|y|` below this are skipped by MAPE only.
pub const MAPE_EPSILON: f64 = 1e-6;

/// Cells per reduction chunk. Fixed so results do not depend on thread count.
const CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingSentinel {
    /// Trust the truth mask.
    #[default]
    MaskChannel,
    /// Truth mask, and `y == 0` also counts as missing.
    ZeroIsMissing,
    /// Score every cell.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub missing_sentinel: MissingSentinel,
    /// Cells with `y < threshold` are dropped from every metric.
    pub low_flow_filter: Option<f64>,
}

impl MaskPolicy {
    pub fn with_low_flow(threshold: f64) -> Self {
        MaskPolicy { low_flow_filter: Some(threshold), ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        match self.low_flow_filter {
            Some(t) if !(t >= 0.0) => Err(Error::InvalidArgument(format!("low-flow threshold must be >= 0, got {t}"))),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn keeps(&self, y: f64, observed: bool) -> bool {
        let present = match self.missing_sentinel {
            MissingSentinel::MaskChannel => observed,
            MissingSentinel::ZeroIsMissing => observed && y != 0.0,
            MissingSentinel::None => true,
        };
        present && self.low_flow_filter.is_none_or(|t| y >= t)
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running error sums; merge in a fixed order for reproducible results.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Accumulator {
    abs: Kahan,
    sq: Kahan,
    ape: Kahan,
    n: usize,
    n_mape: usize,
}

impl Accumulator {
    #[inline]
    pub fn push(&mut self, pred: f64, truth: f64) {
        let e = pred - truth;
        self.abs.add(e.abs());
        self.sq.add(e * e);
        self.n += 1;
        if truth.abs() >= MAPE_EPSILON {
            self.ape.add((e / truth).abs());
            self.n_mape += 1;
        }
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.abs.merge(&other.abs);
        self.sq.merge(&other.sq);
        self.ape.merge(&other.ape);
        self.n += other.n;
        self.n_mape += other.n_mape;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn finish(&self) -> Result<EvalResult> {
        if self.n == 0 {
            return Err(Error::AllMasked);
        }
        let n = self.n as f64;
        let mae = self.abs.value() / n;
        // Guards the power-mean inequality against rounding.
        let rmse = (self.sq.value() / n).sqrt().max(mae);
        let mape = if self.n_mape == 0 { f64::NAN } else { 100.0 * self.ape.value() / self.n_mape as f64 };
        Ok(EvalResult { mae, mape, rmse, n: self.n, n_mape: self.n_mape, breakdown: None })
    }
}

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mae: f64,
    /// Percent. NaN (JSON null) when no cell qualifies.
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub mape: f64,
    pub rmse: f64,
    pub n: usize,
    #[serde(default)]
    pub n_mape: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<Breakdown>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub per_step: Vec<Option<EvalResult>>,
    pub per_channel: Vec<Option<EvalResult>>,
}

fn check_shapes(pred: &[f64], truth: &[f64], mask: &[bool]) -> Result<()> {
    if pred.len() != truth.len() || truth.len() != mask.len() {
        return Err(Error::ShapeMismatch(format!(
            "pred {} / truth {} / mask {} cells",
            pred.len(),
            truth.len(),
            mask.len()
        )));
    }
    Ok(())
}

fn accumulate_chunk(pred: &[f64], truth: &[f64], mask: &[bool], policy: &MaskPolicy) -> Accumulator {
    let mut acc = Accumulator::default();
    for ((&p, &y), &m) in pred.iter().zip(truth).zip(mask) {
        if policy.keeps(y, m) {
            acc.push(p, y);
        }
    }
    acc
}

/// Sums over the surviving cells, chunked and merged in index order.
pub fn accumulate(pred: &[f64], truth: &[f64], mask: &[bool], policy: &MaskPolicy) -> Result<Accumulator> {
    check_shapes(pred, truth, mask)?;
    policy.check()?;
    #[cfg(feature = "parallel")]
    let parts: Vec<Accumulator> = {
        use rayon::prelude::*;
        pred.par_chunks(CHUNK)
            .zip(truth.par_chunks(CHUNK))
            .zip(mask.par_chunks(CHUNK))
            .map(|((p, y), m)| accumulate_chunk(p, y, m, policy))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Accumulator> = pred
        .chunks(CHUNK)
        .zip(truth.chunks(CHUNK))
        .zip(mask.chunks(CHUNK))
        .map(|((p, y), m)| accumulate_chunk(p, y, m, policy))
        .collect();
    let mut total = Accumulator::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

pub fn evaluate(pred: &[f64], truth: &[f64], mask: &[bool], policy: &MaskPolicy) -> Result<EvalResult> {
    accumulate(pred, truth, mask, policy)?.finish()
}

/// Like [`evaluate`] for arrays laid out `(steps, spatial, channels)`, with
/// per-horizon-step and per-channel breakdowns. Several samples can be
/// scored at once by passing `(samples, steps, spatial, channels)`.
pub fn evaluate_horizon(
    pred: &[f64],
    truth: &[f64],
    mask: &[bool],
    layout: [usize; 3],
    policy: &MaskPolicy,
) -> Result<EvalResult> {
    let mut acc = HorizonAccumulator::new(layout);
    acc.push(pred, truth, mask, policy)?;
    acc.finish()
}

/// Streaming pooled evaluation over many windows of shape
/// `(steps, spatial, channels)`.
#[derive(Debug, Clone)]
pub struct HorizonAccumulator {
    steps: usize,
    spatial: usize,
    channels: usize,
    cells: Vec<Accumulator>,
}

impl HorizonAccumulator {
    pub fn new([steps, spatial, channels]: [usize; 3]) -> Self {
        HorizonAccumulator { steps, spatial, channels, cells: vec![Accumulator::default(); steps * channels] }
    }

    pub fn push(&mut self, pred: &[f64], truth: &[f64], mask: &[bool], policy: &MaskPolicy) -> Result<()> {
        check_shapes(pred, truth, mask)?;
        policy.check()?;
        let per_step = self.spatial * self.channels;
        let block = self.steps * per_step;
        if block == 0 || pred.len() % block != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} cells are not a multiple of {} x {} x {}",
                pred.len(),
                self.steps,
                self.spatial,
                self.channels
            )));
        }
        for (i, ((&p, &y), &m)) in pred.iter().zip(truth).zip(mask).enumerate() {
            if policy.keeps(y, m) {
                let step = (i % block) / per_step;
                self.cells[step * self.channels + i % self.channels].push(p, y);
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &HorizonAccumulator) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> Result<EvalResult> {
        let mut total = Accumulator::default();
        let mut steps = vec![Accumulator::default(); self.steps];
        let mut channels = vec![Accumulator::default(); self.channels];
        for (k, a) in self.cells.iter().enumerate() {
            total.merge(a);
            steps[k / self.channels].merge(a);
            channels[k % self.channels].merge(a);
        }
        let mut result = total.finish()?;
        result.breakdown = Some(Breakdown {
            per_step: steps.iter().map(|a| a.finish().ok()).collect(),
            per_channel: channels.iter().map(|a| a.finish().ok()).collect(),
        });
        Ok(result)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every surviving cell weighs the same.
    #[default]
    Pooled,
    /// Unweighted mean of the per-part metrics.
    MeanOfParts,
}

/// Combines per-step results into one multi-step figure.
pub fn aggregate_horizon(results: &[EvalResult], mode: Aggregation) -> Result<EvalResult> {
    combine(results, mode)
}

/// Combines the inflow and outflow results.
pub fn aggregate_inout(inflow: &EvalResult, outflow: &EvalResult, mode: Aggregation) -> Result<EvalResult> {
    combine(&[inflow.clone(), outflow.clone()], mode)
}

fn combine(results: &[EvalResult], mode: Aggregation) -> Result<EvalResult> {
    let n: usize = results.iter().map(|r| r.n).sum();
    let n_mape: usize = results.iter().map(|r| r.n_mape).sum();
    if n == 0 {
        return Err(Error::AllMasked);
    }
    let (mae, mape, rmse) = match mode {
        Aggregation::Pooled => {
            let mut abs = Kahan::default();
            let mut sq = Kahan::default();
            let mut ape = Kahan::default();
            for r in results {
                abs.add(r.mae * r.n as f64);
                sq.add(r.rmse * r.rmse * r.n as f64);
                if r.n_mape > 0 {
                    ape.add(r.mape * r.n_mape as f64);
                }
            }
            let mape = if n_mape == 0 { f64::NAN } else { ape.value() / n_mape as f64 };
            let mae = abs.value() / n as f64;
            (mae, mape, (sq.value() / n as f64).sqrt().max(mae))
        }
        Aggregation::MeanOfParts => {
            let scored: Vec<&EvalResult> = results.iter().filter(|r| r.n > 0).collect();
            let k = scored.len() as f64;
            let with_mape: Vec<f64> = scored.iter().filter(|r| r.n_mape > 0).map(|r| r.mape).collect();
            let mape = if with_mape.is_empty() { f64::NAN } else { with_mape.iter().sum::<f64>() / with_mape.len() as f64 };
            let mae = scored.iter().map(|r| r.mae).sum::<f64>() / k;
            let rmse = scored.iter().map(|r| r.rmse).sum::<f64>() / k;
            (mae, mape, rmse.max(mae))
        }
    };
    Ok(EvalResult { mae, mape, rmse, n, n_mape, breakdown: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * b.abs().max(1.0)
    }

    #[test]
    fn hand_computed_example() {
        let r = evaluate(&[3.0, 3.0], &[2.0, 4.0], &full(2), &MaskPolicy::default()).unwrap();
        assert_eq!((r.mae, r.rmse, r.mape, r.n), (1.0, 1.0, 37.5, 2));
    }

    #[test]
    fn identity_is_zero() {
        let y = [1.0, 2.0, 3.0];
        let r = evaluate(&y, &y, &full(3), &MaskPolicy::default()).unwrap();
        assert_eq!((r.mae, r.rmse, r.mape), (0.0, 0.0, 0.0));
    }

    #[test]
    fn low_flow_filter() {
        let r = evaluate(&[4.0, 9.0], &[3.0, 8.0], &full(2), &MaskPolicy::with_low_flow(5.0)).unwrap();
        assert_eq!((r.mae, r.mape, r.n), (1.0, 12.5, 1));
    }

    #[test]
    fn zero_is_missing() {
        let p = MaskPolicy { missing_sentinel: MissingSentinel::ZeroIsMissing, low_flow_filter: None };
        let r = evaluate(&[5.0, 12.0], &[0.0, 10.0], &full(2), &p).unwrap();
        assert_eq!((r.mae, r.n), (2.0, 1));
    }

    #[test]
    fn mape_skips_near_zero_truth_only() {
        let r = evaluate(&[1.0, 3.0], &[0.0, 2.0], &full(2), &MaskPolicy::default()).unwrap();
        assert_eq!((r.n, r.n_mape, r.mae, r.mape), (2, 1, 1.0, 50.0));
        let r = evaluate(&[1.0], &[0.0], &full(1), &MaskPolicy::default()).unwrap();
        assert!(r.mape.is_nan());
        assert!(serde_json::to_string(&r).unwrap().contains("\"mape\":null"));
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate(&[1.0], &[1.0], &[false], &MaskPolicy::default()), Err(Error::AllMasked)));
        assert!(matches!(evaluate(&[1.0], &[1.0, 2.0], &full(2), &MaskPolicy::default()), Err(Error::ShapeMismatch(_))));
        assert!(evaluate(&[1.0], &[1.0], &full(1), &MaskPolicy::with_low_flow(-1.0)).is_err());
    }

    #[test]
    fn mask_none_scores_everything() {
        let p = MaskPolicy { missing_sentinel: MissingSentinel::None, low_flow_filter: None };
        assert_eq!(evaluate(&[1.0, 1.0], &[0.0, 1.0], &[false, true], &p).unwrap().n, 2);
    }

    fn stub(mae: f64, rmse: f64, n: usize) -> EvalResult {
        EvalResult { mae, mape: mae, rmse, n, n_mape: n, breakdown: None }
    }

    #[test]
    fn pooled_aggregation_examples() {
        let r = stub(1.5, 2.0, 4);
        let same = aggregate_horizon(&[r.clone(), r.clone(), r.clone()], Aggregation::Pooled).unwrap();
        assert!(close(same.mae, 1.5) && close(same.rmse, 2.0) && same.n == 12);
        let two = aggregate_horizon(&[stub(1.0, 1.0, 2), stub(3.0, 3.0, 2)], Aggregation::Pooled).unwrap();
        assert_eq!(two.mae, 2.0);
        let rms = aggregate_inout(&stub(1.0, 1.0, 1), &stub(3.0, 3.0, 1), Aggregation::Pooled).unwrap();
        assert!(close(rms.rmse, 5f64.sqrt()));
        let mean = aggregate_horizon(&[stub(1.0, 1.0, 1), stub(3.0, 3.0, 3)], Aggregation::MeanOfParts).unwrap();
        assert_eq!((mean.mae, mean.rmse), (2.0, 2.0));
    }

    #[test]
    fn horizon_breakdown_matches_flat_pooling() {
        // 2 samples x 3 steps x 2 nodes x 2 channels.
        let n = 24;
        let truth: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let pred: Vec<f64> = truth.iter().enumerate().map(|(i, y)| y + (i % 5) as f64 - 2.0).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 7 != 3).collect();
        let p = MaskPolicy::default();
        let h = evaluate_horizon(&pred, &truth, &mask, [3, 2, 2], &p).unwrap();
        let flat = evaluate(&pred, &truth, &mask, &p).unwrap();
        assert!(close(h.mae, flat.mae) && close(h.rmse, flat.rmse) && h.n == flat.n);
        let b = h.breakdown.unwrap();
        let steps: Vec<EvalResult> = b.per_step.into_iter().flatten().collect();
        let pooled = aggregate_horizon(&steps, Aggregation::Pooled).unwrap();
        assert!(close(pooled.mae, flat.mae) && close(pooled.rmse, flat.rmse));
        // Step 1 holds cells 4..8 and 16..20.
        let idx: Vec<usize> = (4..8).chain(16..20).filter(|i| mask[*i]).collect();
        let oracle = idx.iter().map(|&i| (pred[i] - truth[i]).abs()).sum::<f64>() / idx.len() as f64;
        assert!(close(steps[1].mae, oracle));
    }

    #[test]
    fn chunked_reduction_is_stable() {
        let n = CHUNK * 3 + 17;
        let truth: Vec<f64> = (0..n).map(|i| 10.0 + (i % 97) as f64).collect();
        let pred: Vec<f64> = truth.iter().enumerate().map(|(i, y)| y + ((i * 31) % 11) as f64 * 0.1).collect();
        let r = evaluate(&pred, &truth, &full(n), &MaskPolicy::default()).unwrap();
        let oracle: f64 = pred.iter().zip(&truth).map(|(p, y)| (p - y).abs()).sum::<f64>() / n as f64;
        assert!((r.mae - oracle).abs() < 1e-10);
    }
}
