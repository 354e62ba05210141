use proptest::prelude::*;

use s3gd_core::algorithm::Algorithm;
use s3gd_core::ledger::{total_cost_bits, CostMode};
use s3gd_core::sim::*;

fn config(alg: Algorithm, m: usize, dim: usize, gamma: f64, t: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        alg,
        m,
        gamma,
        t,
        ModelSpec::Quadratic {
            dim,
            l_diag: ScalarOrVec::Vector((0..dim).map(|i| 0.5 + i as f64 / dim as f64).collect()),
            noise_std: ScalarOrVec::Scalar(0.3),
            x0: ScalarOrVec::Scalar(1.0),
        },
    );
    cfg.learning_rate = Some(LearningRate::Constant(0.01));
    cfg.seed = seed;
    cfg
}

fn strip_time(rounds: &[RoundMetrics]) -> Vec<RoundMetrics> {
    rounds
        .iter()
        .cloned()
        .map(|mut r| {
            r.wall_ms = 0.0;
            r
        })
        .collect()
}

fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parallel_workers_do_not_change_results(
        alg in algorithm(), m in 1usize..6, dim in 1usize..24, gamma in 0.0f64..=1.0, seed in any::<u64>(), mu in 0.0f64..0.95,
    ) {
        let mut cfg = config(alg, m, dim, gamma, 15, seed);
        cfg.mu = mu;
        cfg.record_selection = true;
        cfg.cost_mode = CostMode::Wire;
        let seq = run_experiment(&cfg).unwrap();
        cfg.parallel = true;
        let par = run_experiment(&cfg).unwrap();
        prop_assert_eq!(strip_time(&seq.rounds), strip_time(&par.rounds));
        prop_assert_eq!(seq.params, par.params);
    }

    #[test]
    fn analytic_ledger_equals_closed_form(
        alg in algorithm(), m in 1usize..6, dim in 1usize..40, gamma in 0.0f64..=1.0, t in 1usize..30,
    ) {
        let cfg = config(alg, m, dim, gamma, t, 1);
        let out = run_experiment(&cfg).unwrap();
        let table = total_cost_bits(alg, m, dim, cfg.k_for(dim), t, None).unwrap().table;
        prop_assert!((out.cumulative_bits() - table).abs() <= 1e-12 * table.max(1.0));
        let summed: f64 = out.rounds.iter().map(|r| r.uplink_bits + r.downlink_bits).sum();
        prop_assert!((summed - out.cumulative_bits()).abs() <= 1e-12 * summed.max(1.0));
    }

    #[test]
    fn reductions_hold_for_any_seed(m in 1usize..6, dim in 1usize..24, seed in any::<u64>()) {
        let mut s3 = config(Algorithm::S3gdMv, m, dim, 1.0, 20, seed);
        s3.eta = 0.0;
        let sign = config(Algorithm::SignsgdMv, m, dim, 1.0, 20, seed);
        prop_assert_eq!(run_experiment(&s3).unwrap().params, run_experiment(&sign).unwrap().params);

        let topk = config(Algorithm::TopkSgdMem, m, dim, 1.0, 20, seed);
        let vanilla = config(Algorithm::VanillaSgd, m, dim, 1.0, 20, seed);
        prop_assert_eq!(run_baseline_topk_mem(&topk).unwrap().params, run_experiment(&vanilla).unwrap().params);
    }

    #[test]
    fn union_never_exceeds_selected_coordinates(m in 1usize..8, dim in 2usize..40, gamma in 0.01f64..=1.0, seed in any::<u64>()) {
        for alg in [Algorithm::S3gdMv, Algorithm::S3gdMvRandk] {
            let cfg = config(alg, m, dim, gamma, 10, seed);
            let k = cfg.k_for(dim);
            for r in run_experiment(&cfg).unwrap().rounds {
                prop_assert!(r.union_size <= (m * k).min(dim));
            }
        }
    }
}

#[test]
fn more_workers_help_on_noisy_quadratic() {
    let mut template = config(Algorithm::S3gdMv, 1, 50, 0.2, 400, 21);
    if let ModelSpec::Quadratic { noise_std, .. } = &mut template.model {
        *noise_std = ScalarOrVec::Scalar(2.0);
    }
    template.learning_rate = Some(LearningRate::Constant(0.003));
    let rows = sweep_repeated(&template, SweepAxis::Workers, &[1.0, 10.0], 5).unwrap();
    let mean = |m: usize| {
        let v: Vec<f64> = rows.iter().filter(|r| r.workers == m).map(|r| r.final_train_loss).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(10) <= mean(1), "M=10 {} vs M=1 {}", mean(10), mean(1));
}

#[test]
fn randk_selection_counts_within_binomial_bands() {
    let mut cfg = config(Algorithm::S3gdMvRandk, 5, 64, 0.125, 3000, 4);
    cfg.record_selection = true;
    let h = selection_histogram(&run_experiment(&cfg).unwrap().rounds).unwrap();
    let trials: f64 = 5.0 * 3000.0;
    let p = 8.0 / 64.0;
    let (mean, sd) = (trials * p, (trials * p * (1.0 - p)).sqrt());
    let outside = h.counts.iter().filter(|&&c| (c as f64 - mean).abs() > 3.0 * sd).count();
    // 64 coordinates at a 0.27% two-sided rate: more than 2 outliers is very unlikely
    assert!(outside <= 2, "{outside} coordinates outside 3 sd");
    assert_eq!(h.total, 5 * 3000 * 8);
}
