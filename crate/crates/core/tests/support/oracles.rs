//! Slow, obviously-correct reference implementations.

#![allow(dead_code)]

use std::collections::BTreeMap;

use atomst::analytics::{Metric, ResultGrid};

/// Exactly rounded sum of `xs` (Shewchuk's partials).
pub fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Partials are non-overlapping and increasing; add from the top with a
    // half-way correction.
    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        n -= 1;
        let x = hi;
        let y = partials[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub mae: f64,
    pub mape: Option<f64>,
    pub rmse: f64,
    pub n: usize,
}

/// Filters the index set explicitly, then applies the textbook formulas.
pub fn masked_metrics(
    pred: &[f64],
    truth: &[f64],
    mask: &[bool],
    zero_is_missing: bool,
    threshold: Option<f64>,
) -> Option<Scores> {
    let kept: Vec<usize> = (0..truth.len())
        .filter(|&i| mask[i])
        .filter(|&i| !(zero_is_missing && truth[i] == 0.0))
        .filter(|&i| threshold.map_or(true, |t| truth[i] >= t))
        .collect();
    if kept.is_empty() {
        return None;
    }
    let n = kept.len() as f64;
    let mae = fsum(kept.iter().map(|&i| (pred[i] - truth[i]).abs())) / n;
    let rmse = (fsum(kept.iter().map(|&i| (pred[i] - truth[i]).powi(2))) / n).sqrt();
    let pct: Vec<usize> = kept.iter().copied().filter(|&i| truth[i].abs() >= 1e-6).collect();
    let mape = (!pct.is_empty())
        .then(|| 100.0 * fsum(pct.iter().map(|&i| ((pred[i] - truth[i]) / truth[i]).abs())) / pct.len() as f64);
    Some(Scores { mae, mape, rmse, n: kept.len() })
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Model order by brute force: twice the average rank of model `i` in a
/// column is `2·#{strictly better} + #{equal} + 1`, kept as integers.
pub fn brute_force_order(grid: &ResultGrid, basis: &[Metric]) -> Vec<String> {
    let models: Vec<&String> = grid.keys().collect();
    let datasets: Vec<&String> = grid.values().flat_map(|m| m.keys()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut total: BTreeMap<&String, (u64, u64)> = BTreeMap::new();
    for d in &datasets {
        for &metric in basis {
            for &a in &models {
                let va = metric.of(&grid[a][*d]);
                let better = models.iter().filter(|&&b| metric.of(&grid[b][*d]) < va).count() as u64;
                let equal = models.iter().filter(|&&b| metric.of(&grid[b][*d]) == va).count() as u64;
                let twice = 2 * better + equal + 1;
                let e = total.entry(a).or_default();
                e.0 += twice;
                if metric == Metric::Mae {
                    e.1 += twice;
                }
            }
        }
    }
    let mut order: Vec<&String> = models.clone();
    order.sort_by(|a, b| total[a].cmp(&total[b]).then(a.cmp(b)));
    order.into_iter().cloned().collect()
}
