use conbatch::cost::CostVariant;
use conbatch::data::{gen_synthetic, GeoBox, SynthSpec};
use conbatch::runner::{
    iterations_to_target, read_series, run_experiment, run_on, samples_and_cost_to_target,
    write_series, CostConfig, DataSource, IterationRecord, ModelParams, RunConfig, RunSeries,
};
use conbatch::seeds;
use conbatch::strategies::{Budget, StrategyKind};
use rand::Rng as _;

fn blobs(n: usize) -> SynthSpec {
    SynthSpec {
        n_samples: n,
        dim: 4,
        class_count: 3,
        cluster_spread: 0.8,
        geo_bbox: GeoBox {
            lat_min: 51.90,
            lat_max: 51.95,
            lon_min: 4.40,
            lon_max: 4.50,
        },
        area_grid: (3, 3),
        split_fractions: (0.1, 0.3, 0.6),
        geo_hotspots: None,
    }
}

fn small_config(kind: StrategyKind, n: usize) -> RunConfig {
    let mut cfg = RunConfig::new(DataSource::Synth {
        spec: blobs(n),
        seed: 7,
    });
    cfg.strategy.kind = kind;
    cfg.iterations = 3;
    cfg.forward_passes = 6;
    cfg.model = ModelParams {
        width: 16,
        epochs: 4,
        lr: 1e-3,
        ..ModelParams::default()
    };
    cfg
}

fn check_bookkeeping(series: &RunSeries) {
    let r0 = &series.resolved;
    let (mut samples, mut cost) = (0, 0.0);
    for r in &series.records {
        samples += r.batch_size;
        cost += r.batch_total_cost;
        assert_eq!(r.batch_indices.len(), r.batch_size);
        assert_eq!(r.batch_marginal_costs.len(), r.batch_size);
        assert!((r.batch_marginal_costs.iter().sum::<f64>() - r.batch_total_cost).abs() < 1e-9);
        assert_eq!(r.cumulative_samples, samples);
        assert!((r.cumulative_cost - cost).abs() < 1e-9);
        assert_eq!(r.train_size, r0.initial_train + r.cumulative_samples);
        // train + pool + test is constant
        let pool = r0.initial_pool - r.cumulative_samples;
        assert_eq!(
            r.train_size + pool + r0.test_size,
            r0.initial_train + r0.initial_pool + r0.test_size
        );
    }
}

#[test]
fn bookkeeping_identities_hold() {
    let cfg = small_config(StrategyKind::Greedy, 90);
    let series = run_experiment(&cfg, 1).unwrap();
    assert_eq!(series.records.len(), 3);
    let total: usize = series.records.iter().map(|r| r.batch_size).sum();
    assert!(series.records.last().unwrap().cumulative_samples <= 15);
    assert_eq!(series.records.last().unwrap().cumulative_samples, total);
    check_bookkeeping(&series);
    for (i, r) in series.records.iter().enumerate() {
        assert_eq!(r.iteration, i + 1);
        assert!(r.batch_mutual_information.unwrap() >= -1e-9);
        assert!(r.test_accuracy.is_some());
    }
    // acquired indices are distinct across iterations
    let mut all: Vec<usize> = series
        .records
        .iter()
        .flat_map(|r| r.batch_indices.clone())
        .collect();
    all.sort_unstable();
    all.dedup();
    assert_eq!(all.len(), total);
}

#[test]
fn threshold_and_greedy_coincide_without_a_budget() {
    let a = run_experiment(&small_config(StrategyKind::Threshold, 90), 2).unwrap();
    let b = run_experiment(&small_config(StrategyKind::Greedy, 90), 2).unwrap();
    let idx = |s: &RunSeries| {
        s.records
            .iter()
            .map(|r| r.batch_indices.clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(idx(&a), idx(&b));
    assert_eq!(a.accuracies(), b.accuracies());
}

#[test]
fn repeated_runs_serialize_identically() {
    let cfg = small_config(StrategyKind::Threshold, 90);
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.json"), dir.path().join("b.json"));
    write_series(&run_experiment(&cfg, 4).unwrap(), &p1).unwrap();
    write_series(&run_experiment(&cfg, 4).unwrap(), &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let other = run_experiment(&cfg, 5).unwrap();
    assert_ne!(read_series(&p1).unwrap().records, other.records);
}

#[test]
fn series_round_trips_through_json() {
    let cfg = small_config(StrategyKind::Random, 90);
    let series = run_experiment(&cfg, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join(cfg.result_file_name(3));
    write_series(&series, &path).unwrap();
    assert_eq!(read_series(&path).unwrap(), series);
    assert!(!path.with_extension("json.tmp").exists());
    assert_eq!(cfg.result_file_name(3), "random_none_inf_seed3.json");
}

#[test]
fn every_batch_respects_a_fresh_budget() {
    for kind in [
        StrategyKind::Threshold,
        StrategyKind::Greedy,
        StrategyKind::Random,
    ] {
        let mut cfg = small_config(kind, 90);
        cfg.cost = CostConfig {
            variant: CostVariant::Distance,
            ..CostConfig::none()
        };
        cfg.strategy.budget = Budget(900.0);
        cfg.iterations = 4;
        let series = run_experiment(&cfg, 6).unwrap();
        check_bookkeeping(&series);
        for r in &series.records {
            assert!(
                r.batch_total_cost <= 900.0 + 1e-9,
                "{kind:?}: {}",
                r.batch_total_cost
            );
            assert!(r.batch_size <= 5);
        }
        // the budget does not roll over, so later batches are not starved
        assert!(series.records.iter().all(|r| r.batch_size >= 1));
    }
}

#[test]
fn pool_exhaustion_truncates_the_run() {
    // 30 samples: 3 train, 9 test, 18 pool, so four batches of five empty the pool
    let mut cfg = small_config(StrategyKind::Random, 30);
    cfg.iterations = 10;
    let series = run_experiment(&cfg, 0).unwrap();
    assert!(series.truncated);
    assert_eq!(series.records.last().unwrap().cumulative_samples, 18);
    assert_eq!(
        series
            .records
            .iter()
            .map(|r| r.batch_size)
            .collect::<Vec<_>>(),
        vec![5, 5, 5, 3]
    );
    assert!(series.records.last().unwrap().early_return);
    check_bookkeeping(&series);
}

#[test]
fn eval_stride_skips_and_keeps_the_last() {
    let mut cfg = small_config(StrategyKind::Random, 90);
    cfg.iterations = 5;
    cfg.eval_stride = 2;
    let series = run_experiment(&cfg, 0).unwrap();
    let evaluated: Vec<bool> = series
        .records
        .iter()
        .map(|r| r.test_accuracy.is_some())
        .collect();
    assert_eq!(evaluated, vec![true, false, true, false, true]);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small_config(StrategyKind::Greedy, 90);
    cfg.iterations = 0;
    assert!(run_experiment(&cfg, 0).is_err());
    let mut cfg = small_config(StrategyKind::Greedy, 90);
    cfg.seeds.clear();
    assert!(run_experiment(&cfg, 0).is_err());
    let mut cfg = small_config(StrategyKind::Greedy, 90);
    cfg.cost = CostConfig {
        variant: CostVariant::AreaCost,
        ..CostConfig::none()
    };
    let (mut ds, split) = gen_synthetic(&blobs(90), 7).unwrap();
    ds.area_id = vec![None; ds.len()];
    assert!(run_on(&ds, split, &cfg, 0).is_err());
}

fn template() -> RunSeries {
    let mut cfg = small_config(StrategyKind::Random, 60);
    cfg.iterations = 1;
    run_experiment(&cfg, 0).unwrap()
}

fn with_records(base: &RunSeries, batches: &[usize], acc: &[Option<f64>]) -> RunSeries {
    let proto = base.records[0].clone();
    let mut s = base.clone();
    let (mut cs, mut cc) = (0, 0.0);
    s.records = batches
        .iter()
        .zip(acc)
        .enumerate()
        .map(|(i, (&b, &a))| {
            cs += b;
            cc += 10.0 * b as f64;
            IterationRecord {
                iteration: i + 1,
                test_accuracy: a,
                batch_size: b,
                batch_total_cost: 10.0 * b as f64,
                cumulative_samples: cs,
                cumulative_cost: cc,
                ..proto.clone()
            }
        })
        .collect();
    s
}

#[test]
fn target_crossings_on_worked_examples() {
    let base = template();
    let s = with_records(&base, &[5, 4, 5], &[Some(0.5), Some(0.8), Some(0.9)]);
    assert_eq!(iterations_to_target(&s, 0.8), Some(2));
    assert_eq!(iterations_to_target(&s, 0.99), None);
    assert_eq!(samples_and_cost_to_target(&s, 0.8), Some((9, 90.0)));
    assert_eq!(samples_and_cost_to_target(&s, 0.99), None);
    // unevaluated iterations never count as a crossing
    let s = with_records(&base, &[5, 5, 5], &[Some(0.5), None, Some(0.85)]);
    assert_eq!(iterations_to_target(&s, 0.8), Some(3));
}

#[test]
fn target_crossings_match_a_linear_scan() {
    let base = template();
    let mut rng = seeds::rng(42);
    for _ in 0..100 {
        let n = rng.random_range(1..30);
        let batches: Vec<usize> = (0..n).map(|_| rng.random_range(0..6)).collect();
        let acc: Vec<Option<f64>> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < 0.2 {
                    None
                } else {
                    Some(rng.random())
                }
            })
            .collect();
        let target: f64 = rng.random_range(0.05..1.0);
        let s = with_records(&base, &batches, &acc);

        let mut want = None;
        for (i, a) in acc.iter().enumerate() {
            if let Some(a) = *a {
                if a >= target {
                    want = Some(i);
                    break;
                }
            }
        }
        assert_eq!(iterations_to_target(&s, target), want.map(|i| i + 1));
        let resum = want.map(|i| {
            let samples: usize = batches[..=i].iter().sum();
            (samples, 10.0 * samples as f64)
        });
        assert_eq!(samples_and_cost_to_target(&s, target), resum);
    }
}
