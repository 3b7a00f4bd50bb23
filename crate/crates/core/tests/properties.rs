mod support;

use std::collections::BTreeMap;

use atomst::analytics::{rank_models, temporal_profile, DayClass, GroupBy, Metric, ResultGrid};
use atomst::assemble::assemble_bundle;
use atomst::baselines::{evaluate_predictor, ModelConfig};
use atomst::convert::{from_long_csv, from_wide_csv, LongConfig, SynthConfig, SynthGraphConfig, SynthGridConfig, WideConfig};
use atomst::metrics::{evaluate, EvalResult, MAPE_EPSILON, MaskPolicy, MissingSentinel};
use atomst::pipeline::{split_samples, Scaler, SplitMode, SplitRatios, WindowSpec};
use atomst::validate::validate_bundle;
use atomst::{DynamicsKind, Timestamp};
use proptest::collection::vec;
use proptest::prelude::*;
use support::bundles::{any_bundle, bundle_of};
use support::oracles::{brute_force_order, close, masked_metrics};

fn policy(zero: bool, threshold: Option<f64>) -> MaskPolicy {
    MaskPolicy {
        missing_sentinel: if zero { MissingSentinel::ZeroIsMissing } else { MissingSentinel::MaskChannel },
        low_flow_filter: threshold,
    }
}

fn arrays(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (1..max).prop_flat_map(|n| {
        let v = prop_oneof![4 => -100.0f64..100.0, 1 => Just(0.0), 1 => (0i32..10).prop_map(f64::from)];
        (vec(v.clone(), n), vec(v, n), vec(any::<bool>(), n))
    })
}

fn window_specs() -> impl Strategy<Value = WindowSpec> {
    (1usize..4, 1usize..3).prop_map(|(i, o)| WindowSpec::new(i, o).unwrap())
}

// -- pipeline

proptest! {
    #[test]
    fn split_ranges_are_disjoint_and_ordered(total in 3usize..5000, spec in window_specs(), raw in any::<bool>()) {
        let ratios = SplitRatios::default();
        if raw {
            if let Ok(z) = ratios.sizes(total) {
                prop_assert_eq!(z.train + z.valid + z.test, total);
                prop_assert!(z.train >= z.valid || total < 20);
            }
        } else if let Ok(s) = spec.window_count(total) {
            prop_assert_eq!(s, total - spec.span() + 1);
            if let Ok(z) = ratios.sizes(s) {
                prop_assert_eq!(z.train, s * 7 / 10);
                prop_assert_eq!(z.valid, s / 10);
                prop_assert_eq!(z.test, s - z.train - z.valid);
            }
        }
    }

    #[test]
    fn targets_tile_the_tail_once_per_offset(g in any_bundle(), spec in window_specs(), raw in any::<bool>()) {
        let x = assemble_bundle(&g.bundle).unwrap();
        let mode = if raw { SplitMode::RawSteps } else { SplitMode::Samples };
        let Ok(sets) = split_samples(&x, &spec, &SplitRatios::new(1, 1, 1).unwrap(), mode) else { return Ok(()) };
        for w in sets.windows(2) {
            prop_assert!(w[0].starts().end <= w[1].starts().start);
        }
        if raw {
            return Ok(());
        }
        let stride = x.step_stride();
        for h in 0..spec.output_len {
            let mut steps = Vec::new();
            for set in &sets {
                for w in set.windows() {
                    let t = w.target_start(&spec) + h;
                    prop_assert_eq!(&w.target[h * stride..(h + 1) * stride], x.steps(t, t + 1).0);
                    steps.push(t);
                }
            }
            let want: Vec<usize> = (spec.input_len + h..x.time_len() - spec.output_len + 1 + h).collect();
            prop_assert_eq!(steps, want);
        }
    }

    #[test]
    fn scaling_round_trip_keeps_metrics((pred, truth, mask) in arrays(400), d in 1usize..3) {
        let n = truth.len() / d * d;
        prop_assume!(n > 0);
        let (pred, truth, mask) = (&pred[..n], &truth[..n], &mask[..n]);
        let scaler = Scaler::fit(truth, mask, d);
        let mut p = pred.to_vec();
        let mut y = truth.to_vec();
        scaler.apply(&mut p);
        scaler.apply(&mut y);
        scaler.invert(&mut p);
        scaler.invert(&mut y);
        let pol = MaskPolicy { missing_sentinel: MissingSentinel::MaskChannel, low_flow_filter: None };
        match (evaluate(pred, truth, mask, &pol), evaluate(&p, &y, mask, &pol)) {
            (Ok(a), Ok(b)) => {
                prop_assert!(close(a.mae, b.mae, 1e-9));
                prop_assert!(close(a.rmse, b.rmse, 1e-9));
                prop_assert_eq!(a.n, b.n);
            }
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }
}

// -- metrics

proptest! {
    #[test]
    fn metrics_match_brute_force(
        (pred, truth, mask) in arrays(2000),
        zero in any::<bool>(),
        threshold in prop::option::of(Just(5.0)),
        k in -6i32..7,
    ) {
        let pol = policy(zero, threshold);
        let got = evaluate(&pred, &truth, &mask, &pol);
        let want = masked_metrics(&pred, &truth, &mask, zero, threshold);
        match (&got, want) {
            (Ok(r), Some(w)) => {
                prop_assert_eq!(r.n, w.n);
                prop_assert!(close(r.mae, w.mae, 1e-12), "{} vs {}", r.mae, w.mae);
                prop_assert!(close(r.rmse, w.rmse, 1e-12), "{} vs {}", r.rmse, w.rmse);
                match w.mape {
                    Some(m) => prop_assert!(close(r.mape, m, 1e-12), "{} vs {}", r.mape, m),
                    None => prop_assert!(r.mape.is_nan()),
                }
                prop_assert!(r.mae <= r.rmse);

                let c = 2f64.powi(k);
                let sp: Vec<f64> = pred.iter().map(|v| v * c).collect();
                let st: Vec<f64> = truth.iter().map(|v| v * c).collect();
                let scaled = evaluate(&sp, &st, &mask, &policy(zero, threshold.map(|t| t * c))).unwrap();
                prop_assert_eq!(scaled.mae, r.mae * c);
                prop_assert_eq!(scaled.rmse, r.rmse * c);
                // The MAPE guard is absolute, so only cells that stay on the
                // same side of it after scaling keep MAPE exactly invariant.
                if truth.iter().all(|y| (y.abs() >= MAPE_EPSILON) == ((y * c).abs() >= MAPE_EPSILON)) {
                    prop_assert!(scaled.mape == r.mape || (scaled.mape.is_nan() && r.mape.is_nan()));
                }
            }
            (Err(_), None) => {}
            _ => prop_assert!(false, "{got:?} vs {want:?}"),
        }
    }
}

// -- baselines

fn models(spec: &WindowSpec) -> Vec<ModelConfig> {
    vec![
        ModelConfig::Persistence,
        ModelConfig::HistoricalAverage,
        ModelConfig::SeasonalNaive { season: 2 },
        ModelConfig::LinearAr { lags: spec.input_len.min(2), per_node: false },
        ModelConfig::LinearAr { lags: 1, per_node: true },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn predictors_have_target_shape_and_are_deterministic(g in any_bundle(), spec in window_specs()) {
        let x = assemble_bundle(&g.bundle).unwrap();
        let Ok([train, _, test]) = split_samples(&x, &spec, &SplitRatios::new(1, 1, 1).unwrap(), SplitMode::Samples) else {
            return Ok(());
        };
        for cfg in models(&spec) {
            let mut model = cfg.build();
            match model.fit(&train) {
                Ok(()) => {}
                Err(atomst::Error::SingularSystem) | Err(atomst::Error::NoTrainingData) => continue,
                Err(e) => return Err(TestCaseError::fail(format!("{cfg:?}: {e}"))),
            }
            let out = model.predict(&test);
            prop_assert_eq!(out.len(), test.len() * spec.output_len * x.step_stride());
            prop_assert!(out.iter().all(|v| v.is_finite()));
            let mut again = cfg.build();
            again.fit(&train).unwrap();
            let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&out), bits(&again.predict(&test)));
            prop_assert_eq!(model.state(), again.state());
            let _ = evaluate_predictor(model.as_ref(), &test, &MaskPolicy::default());
        }
    }
}

// -- convert

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn synthetic_bundles_validate(seed in any::<u64>(), grid in any::<bool>(), rate in 0.0f64..0.3, n in 2usize..6) {
        let cfg = if grid {
            SynthConfig::Grid(SynthGridConfig { seed, rows: n, cols: 2, days: 1, missing_rate: rate, ..Default::default() })
        } else {
            SynthConfig::Graph(SynthGraphConfig { seed, nodes: n, days: 1, missing_rate: rate, ..Default::default() })
        };
        let (bundle, _) = cfg.generate().unwrap();
        let report = validate_bundle(&bundle);
        prop_assert!(report.passed(), "{}", report);
    }

    #[test]
    fn long_and_wide_inputs_agree(
        values in vec(vec(prop::option::of(-1e3f64..1e3), 1..5), 1..8),
        start in 0i64..100_000,
    ) {
        let width = values[0].len();
        let rows: Vec<Vec<Option<f64>>> = values.iter().map(|r| (0..width).map(|i| r.get(i).copied().flatten()).collect()).collect();
        let time = |t: usize| {
            let mut s = String::new();
            Timestamp(start * 60 + 300 * t as i64).write_canonical(&mut s);
            s
        };
        let cell = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut wide = String::from("time");
        for e in 0..width {
            wide.push_str(&format!(",s{e}"));
        }
        wide.push('\n');
        let mut long = String::from("entity,time,speed\n");
        for (t, row) in rows.iter().enumerate() {
            wide.push_str(&time(t));
            for (e, v) in row.iter().enumerate() {
                wide.push_str(&format!(",{}", cell(*v)));
                long.push_str(&format!("s{e},{},{}\n", time(t), cell(*v)));
            }
            wide.push('\n');
        }
        let lc = LongConfig {
            name: "x".into(),
            entity_column: "entity".into(),
            time_column: "time".into(),
            value_columns: vec!["speed".into()],
            time_format: None,
            coordinates: None,
        };
        let wc = WideConfig { name: "x".into(), value_name: "speed".into(), time_format: None, coordinates: None };
        let (a, _) = from_long_csv(long.as_bytes(), &lc).unwrap();
        let (b, _) = from_wide_csv(wide.as_bytes(), &wc).unwrap();
        prop_assert_eq!(a, b);
    }
}

// -- analytics

fn result(mae: f64, mape: f64, rmse: f64) -> EvalResult {
    EvalResult { mae, mape, rmse, n: 1, n_mape: 1, breakdown: None }
}

fn grids() -> impl Strategy<Value = ResultGrid> {
    (1usize..6, 1usize..4).prop_flat_map(|(m, d)| {
        vec(vec((0u8..4, 0u8..4, 0u8..4), d), m).prop_map(|cells| {
            cells
                .into_iter()
                .enumerate()
                .map(|(i, row)| {
                    let per: BTreeMap<String, EvalResult> = row
                        .into_iter()
                        .enumerate()
                        .map(|(j, (a, b, c))| (format!("d{j}"), result(a as f64, b as f64 * 1.5, c as f64 + a as f64)))
                        .collect();
                    (format!("m{i}"), per)
                })
                .collect()
        })
    })
}

fn order(grid: &ResultGrid, basis: &[Metric]) -> Vec<String> {
    rank_models(grid, basis).unwrap().entries.into_iter().map(|e| e.model).collect()
}

proptest! {
    #[test]
    fn ranking_matches_brute_force_and_ignores_monotone_maps(grid in grids(), which in 0usize..3, shift in -3.0f64..3.0) {
        let basis = Metric::ALL;
        prop_assert_eq!(order(&grid, &basis), brute_force_order(&grid, &basis));
        let mut moved = grid.clone();
        for per in moved.values_mut() {
            for r in per.values_mut() {
                let f = |v: f64| (v + shift).exp() * 3.0 + v;
                match which {
                    0 => r.mae = f(r.mae),
                    1 => r.mape = f(r.mape),
                    _ => r.rmse = f(r.rmse),
                }
            }
        }
        let a = rank_models(&grid, &basis).unwrap();
        let b = rank_models(&moved, &basis).unwrap();
        for (x, y) in a.entries.iter().zip(&b.entries) {
            prop_assert_eq!(&x.model, &y.model);
            prop_assert_eq!(&x.ranks, &y.ranks);
        }
    }

    #[test]
    fn profile_groups_partition_the_scored_cells(
        (pred, truth, mask) in arrays(600),
        offset in 0i64..20_000,
        step in prop_oneof![Just(300i64), Just(3600)],
        by_day in any::<bool>(),
    ) {
        let cells = 3;
        let steps = truth.len() / cells;
        prop_assume!(steps > 0);
        let n = steps * cells;
        let times: Vec<Timestamp> = (0..steps).map(|s| Timestamp(1_330_560_000 + offset * 300 + step * s as i64)).collect();
        let group_by = if by_day { GroupBy::DayOfWeek } else { GroupBy::TimeOfDaySlot };
        let pol = MaskPolicy::default();
        let p = temporal_profile(&pred[..n], &truth[..n], &mask[..n], &times, step, group_by, DayClass::All, &pol).unwrap();
        let total: usize = p.groups.iter().map(|g| g.n).sum();
        let scored = (0..n).filter(|&i| mask[i]).count();
        prop_assert_eq!(total, scored);
        let week = temporal_profile(&pred[..n], &truth[..n], &mask[..n], &times, step, group_by, DayClass::Weekday, &pol).unwrap();
        let end = temporal_profile(&pred[..n], &truth[..n], &mask[..n], &times, step, group_by, DayClass::Weekend, &pol).unwrap();
        let split: usize = week.groups.iter().chain(&end.groups).map(|g| g.n).sum();
        prop_assert_eq!(split, scored);
    }
}

#[test]
fn graph_od_bundles_are_covered() {
    use proptest::strategy::ValueTree;
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let g = bundle_of(Just(DynamicsKind::GraphOd)).new_tree(&mut runner).unwrap().current();
    assert_eq!(assemble_bundle(&g.bundle).unwrap().spatial_shape().len(), 2);
}
