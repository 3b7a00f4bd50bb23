//! Rank-based leaderboards and error profiles over the day.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{Accumulator, EvalResult, MaskPolicy};
use crate::time::{Timestamp, SECONDS_PER_DAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mae,
    Mape,
    Rmse,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mae, Metric::Mape, Metric::Rmse];

    pub fn of(self, r: &EvalResult) -> f64 {
        match self {
            Metric::Mae => r.mae,
            Metric::Mape => r.mape,
            Metric::Rmse => r.rmse,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Mape => "MAPE",
            Metric::Rmse => "RMSE",
        }
    }
}

/// 1-based ranks of `values` (lower is better); ties share the mean of the
/// positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j share their mean.
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Ranks computed from a `model × column` score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    /// `[model][column]`.
    pub ranks: Vec<Vec<f64>>,
    pub mean_rank: Vec<f64>,
    /// Model indices, best first.
    pub order: Vec<usize>,
}

/// Mean rank over all columns; ordering ties fall to the mean rank over the
/// `tiebreak` columns, then to the name.
pub fn rank_matrix(names: &[String], scores: &[Vec<f64>], tiebreak: &[usize]) -> RankTable {
    let m = names.len();
    let cols = scores.first().map_or(0, Vec::len);
    let mut ranks = vec![vec![0.0; cols]; m];
    let mut column = vec![0.0; m];
    for c in 0..cols {
        for (slot, row) in column.iter_mut().zip(scores) {
            *slot = row[c];
        }
        for (i, r) in average_ranks(&column).into_iter().enumerate() {
            ranks[i][c] = r;
        }
    }
    let mean = |row: &[f64], idx: &mut dyn Iterator<Item = usize>| {
        let (s, n) = idx.fold((0.0, 0usize), |(s, n), c| (s + row[c], n + 1));
        if n == 0 { 0.0 } else { s / n as f64 }
    };
    let mean_rank: Vec<f64> = ranks.iter().map(|r| mean(r, &mut (0..cols))).collect();
    let tie: Vec<f64> = ranks.iter().map(|r| mean(r, &mut tiebreak.iter().copied())).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        mean_rank[a].total_cmp(&mean_rank[b]).then(tie[a].total_cmp(&tie[b])).then(names[a].cmp(&names[b]))
    });
    RankTable { ranks, mean_rank, order }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub model: String,
    pub final_rank: usize,
    pub mean_rank: f64,
    pub results: BTreeMap<String, EvalResult>,
    /// `dataset -> metric -> rank`.
    pub ranks: BTreeMap<String, BTreeMap<Metric, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub rank_basis: Vec<Metric>,
    pub datasets: Vec<String>,
    /// Sorted by `final_rank`.
    pub entries: Vec<LeaderboardEntry>,
}

/// `results[model][dataset]`.
pub type ResultGrid = BTreeMap<String, BTreeMap<String, EvalResult>>;

/// Per-`(dataset, metric)` average ranks, averaged per model. Ordering ties
/// are broken by the mean rank over the MAE columns, then by model name.
pub fn rank_models(results: &ResultGrid, basis: &[Metric]) -> Result<Leaderboard> {
    if basis.is_empty() || results.is_empty() {
        return Err(Error::InvalidArgument("ranking needs at least one model and one metric".into()));
    }
    let datasets: Vec<String> =
        results.values().flat_map(|m| m.keys().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    let names: Vec<String> = results.keys().cloned().collect();
    let columns: Vec<(&String, Metric)> = datasets.iter().flat_map(|d| basis.iter().map(move |&m| (d, m))).collect();
    let mut scores = Vec::with_capacity(names.len());
    for (model, per_dataset) in results {
        let mut row = Vec::with_capacity(columns.len());
        for &(dataset, metric) in &columns {
            let v = per_dataset.get(dataset).map(|r| metric.of(r)).filter(|v| !v.is_nan());
            row.push(v.ok_or_else(|| Error::MissingCell {
                model: model.clone(),
                dataset: dataset.clone(),
                metric: metric.label().to_string(),
            })?);
        }
        scores.push(row);
    }
    let tiebreak: Vec<usize> = columns.iter().enumerate().filter(|(_, c)| c.1 == Metric::Mae).map(|(i, _)| i).collect();
    let table = rank_matrix(&names, &scores, &tiebreak);
    let entries = table
        .order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let mut ranks: BTreeMap<String, BTreeMap<Metric, f64>> = BTreeMap::new();
            for (c, &(dataset, metric)) in columns.iter().enumerate() {
                ranks.entry(dataset.clone()).or_default().insert(metric, table.ranks[i][c]);
            }
            LeaderboardEntry {
                model: names[i].clone(),
                final_rank: pos + 1,
                mean_rank: table.mean_rank[i],
                results: results[&names[i]].clone(),
                ranks,
            }
        })
        .collect();
    Ok(Leaderboard { rank_basis: basis.to_vec(), datasets, entries })
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() { "-".into() } else { format!("{v:.4}") }
}

impl Leaderboard {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header = vec!["final_rank".to_string(), "model".into(), "mean_rank".into()];
        for d in &self.datasets {
            for m in &self.rank_basis {
                header.push(format!("{d}:{}", m.label()));
            }
        }
        w.write_record(&header)?;
        for e in &self.entries {
            let mut row = vec![e.final_rank.to_string(), e.model.clone(), format!("{}", e.mean_rank)];
            for d in &self.datasets {
                for &m in &self.rank_basis {
                    row.push(e.results.get(d).map_or(String::new(), |r| format!("{}", m.of(r))));
                }
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "| Rank | Model | Mean rank |");
        for d in &self.datasets {
            for m in &self.rank_basis {
                let _ = write!(s, " {d} {} |", m.label());
            }
        }
        s.push_str("\n|---:|---|---:|");
        for _ in 0..self.datasets.len() * self.rank_basis.len() {
            s.push_str("---:|");
        }
        s.push('\n');
        for e in &self.entries {
            let _ = write!(s, "| {} | {} | {:.2} |", e.final_rank, e.model, e.mean_rank);
            for d in &self.datasets {
                for &m in &self.rank_basis {
                    let _ = write!(s, " {} |", e.results.get(d).map_or("-".into(), |r| fmt_num(m.of(r))));
                }
            }
            s.push('\n');
        }
        s
    }
}

// ---------------------------------------------------------------------------
// temporal profiles

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    TimeOfDaySlot,
    DayOfWeek,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayClass {
    Weekday,
    Weekend,
    All,
}

impl DayClass {
    pub fn admits(self, t: Timestamp) -> bool {
        match self {
            DayClass::Weekday => !t.is_weekend(),
            DayClass::Weekend => t.is_weekend(),
            DayClass::All => true,
        }
    }
}

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGroup {
    pub index: usize,
    pub label: String,
    /// Cells scored in this group.
    pub n: usize,
    /// Mean ground truth over those cells; absent when the group is empty.
    pub mean_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalProfile {
    pub group_by: GroupBy,
    pub day_class: DayClass,
    pub groups: Vec<ProfileGroup>,
    /// Per-model MAPE (percent) aligned with `groups`.
    pub mape: BTreeMap<String, Vec<Option<f64>>>,
}

impl TemporalProfile {
    /// True when no group holds a scored cell.
    pub fn is_empty(&self) -> bool {
        self.groups.iter().all(|g| g.n == 0)
    }

    /// Adds the series of `other`; both must describe the same grouping.
    pub fn merge(&mut self, other: &TemporalProfile) -> Result<()> {
        if self.group_by != other.group_by || self.day_class != other.day_class || self.groups.len() != other.groups.len() {
            return Err(Error::ShapeMismatch("profiles use different groupings".into()));
        }
        for (k, v) in &other.mape {
            self.mape.insert(k.clone(), v.clone());
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let models: Vec<&String> = self.mape.keys().collect();
        let mut s = String::from("group,label,n,mean_truth");
        for m in &models {
            let _ = write!(s, ",mape:{m}");
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v}"));
        for (i, g) in self.groups.iter().enumerate() {
            let _ = write!(s, "{},{},{},{}", g.index, g.label, g.n, opt(g.mean_truth));
            for m in &models {
                let _ = write!(s, ",{}", opt(self.mape[*m][i]));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let models: Vec<&String> = self.mape.keys().collect();
        let mut s = String::from("| Group | n | Mean truth |");
        for m in &models {
            let _ = write!(s, " {m} MAPE |");
        }
        s.push_str("\n|---|---:|---:|");
        for _ in &models {
            s.push_str("---:|");
        }
        s.push('\n');
        let opt = |v: Option<f64>| v.map_or("-".to_string(), fmt_num);
        for (i, g) in self.groups.iter().enumerate().filter(|(_, g)| g.n > 0) {
            let _ = write!(s, "| {} | {} | {} |", g.label, g.n, opt(g.mean_truth));
            for m in &models {
                let _ = write!(s, " {} |", opt(self.mape[*m][i]));
            }
            s.push('\n');
        }
        s
    }

    /// MAPE lines per model, one point per non-empty group.
    pub fn to_svg(&self, title: &str) -> String {
        let labels: Vec<&str> = self.groups.iter().map(|g| g.label.as_str()).collect();
        let series: Vec<(&str, &[Option<f64>])> = self.mape.iter().map(|(k, v)| (k.as_str(), v.as_slice())).collect();
        line_chart_svg(title, "MAPE (%)", &labels, &series)
    }
}

/// Streaming builder: push forecast blocks with the timestamps of their
/// steps, then [`ProfileBuilder::finish`].
#[derive(Debug, Clone)]
pub struct ProfileBuilder {
    group_by: GroupBy,
    day_class: DayClass,
    step_seconds: i64,
    policy: MaskPolicy,
    models: Vec<String>,
    /// `[model][group]`.
    errors: Vec<Vec<Accumulator>>,
    truth_sum: Vec<f64>,
    truth_n: Vec<usize>,
}

impl ProfileBuilder {
    pub fn new(group_by: GroupBy, day_class: DayClass, step_seconds: i64, policy: MaskPolicy, models: Vec<String>) -> Result<Self> {
        let groups = match group_by {
            GroupBy::TimeOfDaySlot => {
                if step_seconds <= 0 || SECONDS_PER_DAY % step_seconds != 0 {
                    return Err(Error::InvalidArgument(format!("a {step_seconds}s step does not divide a day")));
                }
                (SECONDS_PER_DAY / step_seconds) as usize
            }
            GroupBy::DayOfWeek => 7,
        };
        Ok(ProfileBuilder {
            group_by,
            day_class,
            step_seconds,
            policy,
            errors: vec![vec![Accumulator::default(); groups]; models.len()],
            models,
            truth_sum: vec![0.0; groups],
            truth_n: vec![0; groups],
        })
    }

    pub fn group_count(&self) -> usize {
        self.truth_n.len()
    }

    fn group_of(&self, t: Timestamp) -> usize {
        match self.group_by {
            GroupBy::TimeOfDaySlot => (t.seconds_of_day() / self.step_seconds) as usize,
            GroupBy::DayOfWeek => t.weekday() as usize,
        }
    }

    /// `pred`, `truth` and `mask` hold `times.len()` steps of equal size.
    /// Truth statistics are taken from model 0's pushes.
    pub fn push(&mut self, model: usize, pred: &[f64], truth: &[f64], mask: &[bool], times: &[Timestamp]) -> Result<()> {
        if pred.len() != truth.len() || truth.len() != mask.len() || times.is_empty() || pred.len() % times.len() != 0 {
            return Err(Error::ShapeMismatch(format!("{} cells over {} steps", pred.len(), times.len())));
        }
        let per_step = pred.len() / times.len();
        for (s, &t) in times.iter().enumerate().filter(|(_, t)| self.day_class.admits(**t)) {
            let g = self.group_of(t);
            let range = s * per_step..(s + 1) * per_step;
            for i in range {
                if self.policy.keeps(truth[i], mask[i]) {
                    self.errors[model][g].push(pred[i], truth[i]);
                    if model == 0 {
                        self.truth_sum[g] += truth[i];
                        self.truth_n[g] += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Folds in a builder with the same configuration.
    pub fn merge(&mut self, other: &ProfileBuilder) -> Result<()> {
        if self.group_by != other.group_by || self.day_class != other.day_class || self.models != other.models || self.step_seconds != other.step_seconds {
            return Err(Error::ShapeMismatch("profile builders differ".into()));
        }
        for (a, b) in self.errors.iter_mut().zip(&other.errors) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        for (a, b) in self.truth_sum.iter_mut().zip(&other.truth_sum) {
            *a += b;
        }
        for (a, b) in self.truth_n.iter_mut().zip(&other.truth_n) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self) -> TemporalProfile {
        let groups = (0..self.group_count())
            .map(|g| ProfileGroup {
                index: g,
                label: match self.group_by {
                    GroupBy::TimeOfDaySlot => {
                        let s = g as i64 * self.step_seconds;
                        format!("{:02}:{:02}", s / 3600, s % 3600 / 60)
                    }
                    GroupBy::DayOfWeek => WEEKDAYS[g].to_string(),
                },
                n: self.truth_n[g],
                mean_truth: (self.truth_n[g] > 0).then(|| self.truth_sum[g] / self.truth_n[g] as f64),
            })
            .collect();
        let mape = self
            .models
            .iter()
            .zip(&self.errors)
            .map(|(m, accs)| (m.clone(), accs.iter().map(|a| a.finish().ok().map(|r| r.mape).filter(|v| !v.is_nan())).collect()))
            .collect();
        TemporalProfile { group_by: self.group_by, day_class: self.day_class, groups, mape }
    }
}

/// Single-model profile over `(steps, cells)` arrays whose step `s` falls
/// at `times[s]`.
#[allow(clippy::too_many_arguments)]
pub fn temporal_profile(
    pred: &[f64],
    truth: &[f64],
    mask: &[bool],
    times: &[Timestamp],
    step_seconds: i64,
    group_by: GroupBy,
    day_class: DayClass,
    policy: &MaskPolicy,
) -> Result<TemporalProfile> {
    let mut b = ProfileBuilder::new(group_by, day_class, step_seconds, *policy, vec!["model".into()])?;
    b.push(0, pred, truth, mask, times)?;
    Ok(b.finish())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Minimal standalone SVG line chart; `None` points break the line.
pub fn line_chart_svg(title: &str, y_label: &str, x_labels: &[&str], series: &[(&str, &[Option<f64>])]) -> String {
    let (w, h, left, right, top, bottom) = (800.0, 420.0, 60.0, 150.0, 40.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let values = series.iter().flat_map(|(_, v)| v.iter().flatten().copied());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo.min(0.0), if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    let n = x_labels.len().max(2);
    let x = |i: usize| left + plot_w * i as f64 / (n - 1) as f64;
    let y = |v: f64| top + plot_h * (1.0 - (v - lo) / (hi - lo));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + plot_w / 2.0, xml_escape(title));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + plot_h, left + plot_w, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + plot_h);
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, left - 6.0, y(v) + 4.0);
    }
    let ticks = (x_labels.len() / 8).max(1);
    for (i, l) in x_labels.iter().enumerate().step_by(ticks) {
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x(i), top + plot_h + 18.0, xml_escape(l));
    }
    let _ = writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">{}</text>"#, top + plot_h / 2.0, top + plot_h / 2.0, xml_escape(y_label));
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (i, v) in vals.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, x(i), y(*v));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end());
        let ly = top + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w - right + 36.0, ly + 4.0, xml_escape(name));
    }
    s.push_str("</svg>\n");
    s
}
