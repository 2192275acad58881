use offload_core::agents::HeuristicPolicy;
use offload_core::env::{ChannelSample, EnergyModel, NetworkChoice, ScenarioConfig, State};
use offload_core::harness::{
    aggregate, read_records, run_episode, run_sweep, write_records, Algorithm, Experiment, GroupKey, HarnessError,
    MetricsRecord, SweepGrid, METRICS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idle(_: &State, _: &ChannelSample, _: &ScenarioConfig) -> NetworkChoice {
    NetworkChoice::Idle
}

fn quick_experiment() -> Experiment {
    let mut exp = Experiment {
        n_eval_episodes: 2,
        ..Experiment::default()
    };
    exp.dqn.train_episodes = 2;
    exp.tabular.train_episodes = 2;
    exp
}

fn grid(algorithms: Vec<Algorithm>, n_flows: Vec<usize>, seeds: Vec<u64>) -> SweepGrid {
    SweepGrid {
        algorithms,
        n_flows,
        n_aps: vec![8],
        thetas: vec![0.05],
        energy_models: vec![EnergyModel::F1],
        seeds,
    }
}

#[test]
fn zero_size_flows_give_empty_episode() {
    let cfg = ScenarioConfig {
        flow_sizes: vec![0.0, 0.0],
        flow_deadlines: vec![5, 9],
        ..ScenarioConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = run_episode(&mut HeuristicPolicy::new(&cfg), &cfg, &mut rng).unwrap();
    assert_eq!(m.wall_slots, 0);
    assert_eq!(m.total_cost(), 0.0);
    assert_eq!(m.energy_joule, 0.0);
    assert_eq!(m.completion_ratio(&cfg), 0.0);
}

#[test]
fn always_idle_pays_full_penalty() {
    let cfg = ScenarioConfig::default().with_flows(1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = run_episode(&mut idle, &cfg, &mut rng).unwrap();
    assert_eq!(m.penalty, 800.0);
    assert_eq!(m.monetary, 0.0);
    assert_eq!(m.energy_joule, 0.0);
    assert_eq!(m.wall_slots, 400);
}

#[test]
fn infeasible_policy_is_a_contract_violation() {
    let cfg = ScenarioConfig {
        ap_cells: vec![],
        ..ScenarioConfig::default().with_flows(1)
    };
    let mut wlan = |_: &State, _: &ChannelSample, _: &ScenarioConfig| NetworkChoice::Wlan;
    let err = run_episode(&mut wlan, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap_err();
    assert!(matches!(err, HarnessError::ContractViolation { choice: NetworkChoice::Wlan, slot: 1 }));
}

#[test]
fn same_seed_same_records() {
    let exp = quick_experiment();
    let g = grid(vec![Algorithm::Heuristic, Algorithm::TabularQ], vec![1, 2], vec![0, 1]);
    assert_eq!(run_sweep(&exp, &g, 1).unwrap(), run_sweep(&exp, &g, 1).unwrap());
}

#[test]
fn parallelism_does_not_change_output() {
    let exp = quick_experiment();
    let g = grid(Algorithm::ALL.to_vec(), vec![1, 2], vec![0, 1, 2]);
    let serial = run_sweep(&exp, &g, 1).unwrap();
    let parallel = run_sweep(&exp, &g, 8).unwrap();
    assert_eq!(serial, parallel);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_records(&serial.records, &mut a).unwrap();
    write_records(&parallel.records, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_spec_three_seeds_gives_three_groups() {
    let exp = quick_experiment();
    let out = run_sweep(&exp, &grid(vec![Algorithm::Heuristic], vec![1], vec![4, 5, 6]), 1).unwrap();
    let rows = aggregate(&out.records, &[GroupKey::Seed]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.count == exp.n_eval_episodes));
}

#[test]
fn empty_seed_list_is_rejected() {
    let err = run_sweep(&quick_experiment(), &grid(vec![Algorithm::Dp], vec![1], vec![]), 1).unwrap_err();
    assert!(matches!(err, HarnessError::Config(e) if e.key == "seeds"));
}

#[test]
fn failing_runs_are_reported_by_id() {
    let mut exp = quick_experiment();
    exp.dp_state_cap = 10;
    let err = run_sweep(&exp, &grid(vec![Algorithm::Heuristic, Algorithm::Dp], vec![1], vec![0, 1]), 2).unwrap_err();
    match err {
        HarnessError::Runs(failures) => assert_eq!(failures.iter().map(|f| f.0).collect::<Vec<_>>(), vec![2, 3]),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn energy_under_f1_exceeds_f2_for_matched_seeds() {
    let exp = quick_experiment();
    let mut g = grid(vec![Algorithm::Heuristic, Algorithm::Dp], vec![1, 3], vec![0, 1]);
    g.energy_models = vec![EnergyModel::F1, EnergyModel::F2];
    let out = run_sweep(&exp, &g, 1).unwrap().records;
    let f1: Vec<&MetricsRecord> = out.iter().filter(|r| r.energy_model == EnergyModel::F1).collect();
    for a in f1 {
        let b = out
            .iter()
            .find(|r| {
                r.energy_model == EnergyModel::F2
                    && r.algorithm == a.algorithm
                    && r.n_flows == a.n_flows
                    && r.seed == a.seed
                    && r.episode == a.episode
            })
            .unwrap();
        assert!(a.energy_joule >= b.energy_joule, "{a:?} vs {b:?}");
    }
}

#[test]
fn record_invariants_hold() {
    let exp = quick_experiment();
    let out = run_sweep(&exp, &grid(Algorithm::ALL.to_vec(), vec![1, 2, 3], vec![0, 1]), 1).unwrap();
    for r in out.records.iter().chain(&out.learning_curve) {
        assert!((0.0..=1.0).contains(&r.completion_ratio));
        for m in METRICS {
            assert!(r.metric(m).unwrap() >= 0.0, "{m} in {r:?}");
        }
        if r.completion_ratio == 1.0 {
            assert_eq!(r.penalty_yen, 0.0);
        }
        if r.penalty_yen > 0.0 {
            assert!(r.completion_ratio < 1.0);
        }
        assert_eq!(r.total_cost, r.monetary_yen + r.weighted_energy + r.penalty_yen);
    }
    assert!(out.learning_curve.iter().all(|r| matches!(r.algorithm, Algorithm::Dqn | Algorithm::TabularQ)));
}

fn random_record<R: Rng>(rng: &mut R, i: u32) -> MetricsRecord {
    let algorithm = Algorithm::ALL[rng.random_range(0..Algorithm::ALL.len())];
    let monetary: f64 = rng.random_range(0.0..500.0);
    let energy: f64 = rng.random_range(0.0..100.0);
    let theta = [0.0, 0.05, 1.0][rng.random_range(0..3)];
    let penalty: f64 = rng.random_range(0.0..50.0);
    MetricsRecord {
        run_id: i / 4,
        seed: rng.random_range(0..3),
        algorithm,
        n_flows: rng.random_range(1..=4),
        n_aps: 8,
        energy_model: EnergyModel::F1,
        theta,
        episode: i % 4,
        monetary_yen: monetary,
        energy_joule: energy,
        weighted_energy: theta * energy,
        penalty_yen: penalty,
        total_cost: monetary + theta * energy + penalty,
        completion_ratio: rng.random_range(0.0..=1.0),
        wall_slots: rng.random_range(1..1600),
    }
}

#[test]
fn aggregation_matches_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let records: Vec<MetricsRecord> = (0..100).map(|i| random_record(&mut rng, i)).collect();
    let keys = [GroupKey::Algorithm, GroupKey::NFlows];
    let rows = aggregate(&records, &keys);
    let mut seen = 0;
    for row in &rows {
        let alg: Algorithm = row.group_value("algorithm").unwrap().parse().unwrap();
        let nf: usize = row.group_value("n_flows").unwrap().parse().unwrap();
        let members: Vec<&MetricsRecord> = records.iter().filter(|r| r.algorithm == alg && r.n_flows == nf).collect();
        assert_eq!(row.count, members.len());
        seen += members.len();
        for m in METRICS {
            let xs: Vec<f64> = members.iter().map(|r| r.metric(m).unwrap()).collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sq = xs.iter().map(|x| x * x).sum::<f64>() / n;
            let std = (sq - mean * mean).max(0.0).sqrt();
            assert!((row.mean_of(m).unwrap() - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            assert!((row.std_of(m).unwrap() - std).abs() <= 1e-6 * std.max(1.0), "{m}");
        }
    }
    assert_eq!(seen, 100);
}

#[test]
fn golden_csv_fixture() {
    let records = vec![
        MetricsRecord {
            run_id: 0,
            seed: 1,
            algorithm: Algorithm::Dp,
            n_flows: 2,
            n_aps: 8,
            energy_model: EnergyModel::F1,
            theta: 0.05,
            episode: 0,
            monetary_yen: 12.3456789,
            energy_joule: 0.1,
            weighted_energy: 0.005,
            penalty_yen: 0.0,
            total_cost: 12.3506789,
            completion_ratio: 1.0,
            wall_slots: 40,
        },
        MetricsRecord {
            run_id: 1,
            seed: 2,
            algorithm: Algorithm::Heuristic,
            n_flows: 1,
            n_aps: 4,
            energy_model: EnergyModel::F2,
            theta: 0.0,
            episode: 3,
            monetary_yen: 1234567.8,
            energy_joule: 2.0 / 3.0,
            weighted_energy: 0.0,
            penalty_yen: 800.0,
            total_cost: 1235367.8,
            completion_ratio: 0.5,
            wall_slots: 400,
        },
    ];
    let mut out = Vec::new();
    write_records(&records, &mut out).unwrap();
    let expected = include_str!("fixtures/two_records.csv");
    assert_eq!(String::from_utf8(out.clone()).unwrap(), expected);
    let back = read_records(out.as_slice()).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back[1].penalty_yen, 800.0);
    assert_eq!(back[0].algorithm, Algorithm::Dp);
}

#[test]
fn round_trip_of_six_digit_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let records: Vec<MetricsRecord> = (0..20)
        .map(|i| {
            let mut r = random_record(&mut rng, i);
            for v in [&mut r.monetary_yen, &mut r.energy_joule, &mut r.penalty_yen, &mut r.completion_ratio] {
                *v = offload_core::harness::fmt_sig6(*v).parse().unwrap();
            }
            r.weighted_energy = 0.0;
            r.theta = 0.0;
            r.total_cost = offload_core::harness::fmt_sig6(r.monetary_yen + r.penalty_yen).parse().unwrap();
            r
        })
        .collect();
    let mut out = Vec::new();
    write_records(&records, &mut out).unwrap();
    assert_eq!(read_records(out.as_slice()).unwrap(), records);
    let mut empty = Vec::new();
    write_records(&[], &mut empty).unwrap();
    assert_eq!(String::from_utf8(empty).unwrap().lines().count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn zero_theta_removes_energy_from_objective(seed in 0u64..1000, n_flows in 1usize..=2) {
        let exp = Experiment { master_seed: seed, ..quick_experiment() };
        let mut g = grid(vec![Algorithm::Heuristic, Algorithm::Dqn], vec![n_flows], vec![seed]);
        g.thetas = vec![0.0];
        let out = run_sweep(&exp, &g, 1).unwrap();
        for r in out.records.iter().chain(&out.learning_curve) {
            prop_assert_eq!(r.weighted_energy, 0.0);
            prop_assert_eq!(r.total_cost, r.monetary_yen + r.penalty_yen);
        }
    }
}
