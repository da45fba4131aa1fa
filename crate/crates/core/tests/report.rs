use conbatch::data::{GeoBox, SynthSpec};
use conbatch::report::{aggregate, curves_csv, mean_std, smooth, targets_csv};
use conbatch::runner::{run_experiment, DataSource, ModelParams, RunConfig, RunSeries};
use conbatch::strategies::StrategyKind;
use proptest::prelude::*;

fn spec(seed_spread: f64) -> SynthSpec {
    SynthSpec {
        n_samples: 60,
        dim: 3,
        class_count: 2,
        cluster_spread: seed_spread,
        geo_bbox: GeoBox {
            lat_min: 51.90,
            lat_max: 51.95,
            lon_min: 4.40,
            lon_max: 4.50,
        },
        area_grid: (2, 2),
        split_fractions: (0.1, 0.3, 0.6),
        geo_hotspots: None,
    }
}

fn base(kind: StrategyKind, seed: u64) -> RunSeries {
    let mut cfg = RunConfig::new(DataSource::Synth {
        spec: spec(0.9),
        seed: 1,
    });
    cfg.strategy.kind = kind;
    cfg.iterations = 3;
    cfg.forward_passes = 4;
    cfg.model = ModelParams {
        width: 8,
        epochs: 2,
        ..ModelParams::default()
    };
    run_experiment(&cfg, seed).unwrap()
}

fn with_acc(mut s: RunSeries, acc: &[f64]) -> RunSeries {
    for (r, &a) in s.records.iter_mut().zip(acc) {
        r.test_accuracy = Some(a);
    }
    s
}

#[test]
fn hand_computed_mean_and_std() {
    let a = with_acc(base(StrategyKind::Random, 0), &[0.5, 0.6, 0.7]);
    let b = with_acc(base(StrategyKind::Random, 1), &[0.5, 0.8, 0.7]);
    let rep = aggregate(&[a, b], &[0.75], 1).unwrap();
    let p = &rep.curves[1];
    assert!((p.mean_accuracy - 0.7).abs() < 1e-12);
    assert!((p.std_accuracy - 0.1414).abs() < 1e-4);
    assert_eq!(p.n_seeds, 2);
    let (m, sd) = mean_std(&[0.6, 0.8]);
    assert!((m - 0.7).abs() < 1e-12 && (sd - 0.02f64.sqrt()).abs() < 1e-12);
}

#[test]
fn single_seed_without_smoothing_is_the_raw_series() {
    let s = base(StrategyKind::Greedy, 3);
    let raw = s.accuracies();
    let rep = aggregate(std::slice::from_ref(&s), &[0.9], 1).unwrap();
    let got: Vec<f64> = rep.curves.iter().map(|p| p.mean_accuracy).collect();
    assert_eq!(got, raw.iter().map(|a| a.unwrap()).collect::<Vec<_>>());
    assert!(rep.curves.iter().all(|p| p.std_accuracy == 0.0));
}

#[test]
fn unreached_targets_stay_visible() {
    let a = with_acc(base(StrategyKind::Random, 0), &[0.5, 0.72, 0.7]);
    let b = with_acc(base(StrategyKind::Random, 1), &[0.5, 0.6, 0.65]);
    let rep = aggregate(&[a, b], &[0.71], 1).unwrap();
    let table = targets_csv(&rep);
    let lines: Vec<&str> = table.lines().collect();
    assert!(lines[1].contains(",0,2,"), "{table}");
    assert!(lines[2].contains("not reached"), "{table}");
    assert!(lines[3].ends_with("1/2"), "{table}");
}

#[test]
fn mixed_datasets_are_refused() {
    let a = base(StrategyKind::Random, 0);
    let mut b = base(StrategyKind::Random, 1);
    b.config.data = DataSource::Synth {
        spec: spec(0.5),
        seed: 1,
    };
    assert!(aggregate(&[a.clone(), b], &[0.8], 1).is_err());
    assert!(aggregate(&[a.clone(), a], &[0.8], 1).is_err());
}

#[test]
fn trailing_window_average() {
    let s = smooth(&[Some(0.2), None, Some(0.4), Some(0.9)], 2);
    assert_eq!(s[1], None);
    assert!((s[2].unwrap() - 0.3).abs() < 1e-12);
    assert!((s[3].unwrap() - 0.65).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aggregation_ignores_input_order(order in Just((0..4usize).collect::<Vec<_>>()).prop_shuffle()) {
        let mut all = Vec::new();
        for (i, kind) in [StrategyKind::Random, StrategyKind::Greedy].into_iter().enumerate() {
            for seed in 0..2 {
                let acc = [0.3 + 0.1 * seed as f64, 0.5 + 0.05 * i as f64, 0.8];
                all.push(with_acc(base(kind, seed), &acc));
            }
        }
        let reference = aggregate(&all, &[0.5, 0.8], 2).unwrap();
        let shuffled: Vec<RunSeries> = order.iter().map(|&i| all[i].clone()).collect();
        let rep = aggregate(&shuffled, &[0.5, 0.8], 2).unwrap();
        prop_assert_eq!(curves_csv(&rep), curves_csv(&reference));
        prop_assert_eq!(targets_csv(&rep), targets_csv(&reference));
    }
}
