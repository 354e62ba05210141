//! End-to-end acceptance checks. Runs as a plain binary so every check
//! prints one PASS/FAIL line; exits non-zero if any check fails.

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use s3gd_core::aggregation::majority_vote;
use s3gd_core::algorithm::Algorithm;
use s3gd_core::codec::{count_width, decode_sparse_sign, encode_sparse_sign, index_width, Bitstream};
use s3gd_core::compression::{top_k_sign, Sign, SparseSignVector};
use s3gd_core::data::{PartitionMode, SyntheticSpec};
use s3gd_core::error::Error;
use s3gd_core::ledger::{analytic_round_cost, total_cost_bits, CommLedger};
use s3gd_core::rng::stream;
use s3gd_core::sim::*;
use s3gd_core::theory::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Check {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn quadratic(dim: usize, l: ScalarOrVec, noise: f64, x0: f64) -> ModelSpec {
    ModelSpec::Quadratic {
        dim,
        l_diag: l,
        noise_std: ScalarOrVec::Scalar(noise),
        x0: ScalarOrVec::Scalar(x0),
    }
}

fn three_worker_vote() -> Outcome {
    let grads = [3.0, -0.3, -0.03];
    let full: Vec<SparseSignVector> = grads.iter().map(|&g| top_k_sign(&[g], 1).unwrap()).collect();
    let full_vote = majority_vote(&full, 1).unwrap().ternary[0];
    let thresholded: Vec<SparseSignVector> = grads
        .iter()
        .map(|&g| {
            let entries = if g.abs() > 1.0 { vec![(0, Sign::of(g).unwrap())] } else { vec![] };
            SparseSignVector::new(1, entries).unwrap()
        })
        .collect();
    let sparse_vote = majority_vote(&thresholded, 1).unwrap().ternary[0];
    // the same threshold realized by top-1 selection against a unit decoy
    let embedded: Vec<SparseSignVector> = grads.iter().map(|&g| top_k_sign(&[g, 1.0], 1).unwrap()).collect();
    let embedded_vote = majority_vote(&embedded, 2).unwrap().ternary[0];
    outcome(
        full_vote == -1 && sparse_vote == 1 && embedded_vote == 1,
        format!("full-sign vote {full_vote}, thresholded vote {sparse_vote}, top-1 vote {embedded_vote}"),
    )
}

fn signsgd_reduction() -> Outcome {
    let mut sparse = ExperimentConfig::new(Algorithm::S3gdMv, 7, 1.0, 500, quadratic(32, ScalarOrVec::Scalar(1.0), 1.0, 1.0));
    sparse.eta = 0.0;
    sparse.learning_rate = Some(LearningRate::Constant(0.005));
    sparse.seed = 2024;
    let mut sign = sparse.clone();
    sign.algorithm = Algorithm::SignsgdMv;
    let a = run_experiment(&sparse).unwrap();
    let b = run_experiment(&sign).unwrap();
    let same_rounds = a.rounds.iter().zip(&b.rounds).all(|(x, y)| {
        x.train_loss.to_bits() == y.train_loss.to_bits()
            && x.gbar_l1.to_bits() == y.gbar_l1.to_bits()
            && x.union_size == y.union_size
    });
    let same_params = a
        .params
        .as_slice()
        .iter()
        .zip(b.params.as_slice())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    outcome(
        same_rounds && same_params && a.rounds.len() == 500,
        format!("500 rounds, final loss {} vs {}", a.final_metrics.train_loss, b.final_metrics.train_loss),
    )
}

fn enumerated_vote_error(p: f64, u: usize) -> f64 {
    (0u32..1 << u)
        .filter(|mask| 2 * mask.count_ones() as usize >= u)
        .map(|mask| {
            let z = mask.count_ones() as i32;
            p.powi(z) * (1.0 - p).powi(u as i32 - z)
        })
        .sum()
}

fn vote_bound_dominance() -> Outcome {
    let ps: Vec<f64> = std::iter::once(0.01).chain((1..=9).map(|i| 0.05 * f64::from(i))).collect();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut oracle_err: f64 = 0.0;
    for u in 1..=12 {
        for &p in &ps {
            let exact = vote_error_exact(p, u).unwrap();
            let bound = vote_error_bound(p, u).unwrap();
            oracle_err = oracle_err.max((exact - enumerated_vote_error(p, u)).abs());
            worst_gap = worst_gap.max(exact - bound);
        }
    }
    outcome(
        worst_gap <= 0.0 && oracle_err < 1e-12,
        format!("max(exact - bound) = {worst_gap:.3e}, enumeration mismatch {oracle_err:.1e}"),
    )
}

fn sign_flip_monte_carlo() -> Outcome {
    let (g_bar, sigma, trials) = (1.0f64, 2.0f64, 100_000usize);
    let mut rng = stream(77);
    let mut worst = f64::NEG_INFINITY;
    let mut points = 0;
    for gamma in [0.1, 0.5, 1.0] {
        for eps in [0.0, 0.5, 1.0] {
            for b in [1usize, 16, 256] {
                let rho = rho_lower_bound(gamma, eps, g_bar).unwrap();
                let sd = sigma / (b as f64).sqrt();
                let flips = (0..trials)
                    .filter(|_| {
                        let g = g_bar + sd * rng.sample::<f64, _>(StandardNormal);
                        g < 0.0 && g.abs() >= rho
                    })
                    .count();
                let freq = flips as f64 / trials as f64;
                let mc_sd = (freq * (1.0 - freq) / trials as f64).sqrt();
                let bound = sign_flip_bound(sigma, g_bar, b, gamma, eps).unwrap();
                worst = worst.max(freq - (bound + 3.0 * mc_sd));
                points += 1;
            }
        }
    }
    outcome(worst <= 0.0, format!("{points} grid points, max(freq - bound - 3sd) = {worst:.4}"))
}

fn convergence_bound_dominance() -> Outcome {
    let (n, noise, seeds) = (16usize, 1.0, 3u64);
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    for m in [4usize, 16] {
        for gamma in [0.1, 0.5, 1.0] {
            for t in [256usize, 1024] {
                let mut cfg = ExperimentConfig::new(Algorithm::S3gdMv, m, gamma, t, quadratic(n, ScalarOrVec::Scalar(1.0), noise, 1.0));
                cfg.learning_rate = Some(LearningRate::Schedule(RateSchedule::Theory));
                cfg.batch_size = BatchSize::Schedule(BatchSchedule::Horizon);
                let mut measured = 0.0;
                let mut k = 0;
                for s in 0..seeds {
                    cfg.seed = s;
                    let out = run_experiment(&cfg).unwrap();
                    measured += out.mean_gbar_l1();
                    k = out.k;
                }
                measured /= seeds as f64;
                let bound = convergence_bound_topk(&BoundInputs {
                    workers: m,
                    gamma: k as f64 / n as f64,
                    epsilon: 0.0,
                    l1_norm: n as f64,
                    sigma1_norm: noise * n as f64,
                    f0_minus_fstar: 0.5 * n as f64,
                    rounds: t,
                })
                .unwrap();
                worst = worst.max(measured / bound);
                if measured > bound {
                    fails += 1;
                }
            }
        }
    }
    outcome(fails == 0, format!("12 grid points, {fails} violations, max measured/bound = {worst:.3}"))
}

fn rate_shape() -> Outcome {
    let means: Vec<f64> = [1024usize, 4096]
        .iter()
        .map(|&t| {
            let mut cfg = ExperimentConfig::new(Algorithm::S3gdMv, 4, 0.25, t, quadratic(16, ScalarOrVec::Scalar(1.0), 0.0, 1.0));
            cfg.learning_rate = Some(LearningRate::Schedule(RateSchedule::Theory));
            run_experiment(&cfg).unwrap().mean_gbar_l1()
        })
        .collect();
    let ratio = means[1] / means[0];
    outcome(ratio <= 0.6, format!("mean |gbar|_1 {:.4} -> {:.4}, ratio {ratio:.3}", means[0], means[1]))
}

fn table_formula(alg: Algorithm, m: f64, n: f64, k: f64, t: f64) -> f64 {
    let per_round = match alg {
        Algorithm::VanillaSgd => 32.0 * m * n + 32.0 * m * n,
        Algorithm::TopkSgdMem => m * (32.0 * k + k * (n / k).log2()) + 32.0 * m * n,
        Algorithm::SignsgdMv => 2.0 * m * n,
        Algorithm::S3gdMv | Algorithm::S3gdMvRandk => m * (k + k * (n / k).log2()) + m * n,
    };
    per_round * t
}

fn cost_table() -> Outcome {
    let tuples = [(10usize, 10_000usize, 100usize, 1000usize), (4, 1000, 10, 50), (100, 1 << 20, 1, 7)];
    let mut worst: f64 = 0.0;
    for &(m, n, k, t) in &tuples {
        for alg in [Algorithm::VanillaSgd, Algorithm::TopkSgdMem, Algorithm::SignsgdMv, Algorithm::S3gdMv] {
            let round = analytic_round_cost(alg, m, n, k).unwrap();
            let mut ledger = CommLedger::new();
            for r in 0..t {
                ledger.record(r, alg, round.uplink, round.downlink).unwrap();
            }
            let expected = table_formula(alg, m as f64, n as f64, k as f64, t as f64);
            let table = total_cost_bits(alg, m, n, k, t, None).unwrap().table;
            for got in [ledger.cumulative(), table] {
                worst = worst.max((got - expected).abs() / expected);
            }
        }
    }
    outcome(worst <= 1e-12, format!("3 tuples x 4 algorithms, max relative error {worst:.2e}"))
}

fn pack(fields: &[(u64, u32)]) -> Bitstream {
    let bits: Vec<bool> = fields
        .iter()
        .flat_map(|&(v, w)| (0..w).rev().map(move |i| (v >> i) & 1 == 1))
        .collect();
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    Bitstream::from_parts(bytes, bits.len()).unwrap()
}

fn codec_roundtrip() -> Outcome {
    let mut rng = stream(8);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=512usize);
        let density: f64 = rng.random();
        let mut entries = Vec::new();
        for i in 0..n {
            if rng.random_bool(density) {
                entries.push((i, if rng.random_bool(0.5) { Sign::Pos } else { Sign::Neg }));
            }
        }
        let v = SparseSignVector::new(n, entries).unwrap();
        if decode_sparse_sign(&encode_sparse_sign(&v), n).ok().as_ref() != Some(&v) {
            mismatches += 1;
        }
    }
    let n = 8;
    let (cw, iw) = (count_width(n), index_width(n));
    let good = encode_sparse_sign(&SparseSignVector::new(n, vec![(1, Sign::Pos), (6, Sign::Neg)]).unwrap());
    let malformed = [
        ("truncated", good.truncated(good.bit_len() - 3)),
        ("count > N", pack(&[(9, cw)])),
        ("repeated index", pack(&[(2, cw), (3, iw), (1, 1), (0, iw), (0, 1)])),
    ];
    let rejected = malformed
        .iter()
        .filter(|(_, b)| matches!(decode_sparse_sign(b, n), Err(Error::Format { .. })))
        .count();
    outcome(
        mismatches == 0 && rejected == malformed.len(),
        format!("10000 roundtrips, {mismatches} mismatches; {rejected}/3 malformed classes rejected"),
    )
}

fn optimal_sparsity() -> Outcome {
    let mut rng = stream(9);
    let (lo, hi, points) = (1e-5f64.ln(), 0.0f64, 200);
    let step = (hi - lo) / (points - 1) as f64;
    let mut worst_cells: f64 = 0.0;
    for _ in 0..5 {
        let inp = SparsityInputs {
            workers: rng.random_range(10..200usize),
            epsilon: rng.random_range(0.2..1.0),
            f0_minus_fstar: rng.random_range(0.5..5.0),
            l1_norm: rng.random_range(1.0..400.0),
            sigma1_norm: rng.random_range(100.0..1000.0),
        };
        let gs = gamma_star(&inp).unwrap();
        let argmin = (0..points)
            .map(|i| (lo + step * i as f64).exp())
            .min_by(|a, b| {
                let ha = small_gamma_surrogate(&inp, *a, 1).unwrap();
                let hb = small_gamma_surrogate(&inp, *b, 1).unwrap();
                ha.total_cmp(&hb)
            })
            .unwrap();
        let cells = (argmin.ln() - gs.ln()).abs() / step;
        worst_cells = worst_cells.max(if !(1e-5..=1.0).contains(&gs) { f64::INFINITY } else { cells });
    }
    outcome(worst_cells <= 1.0, format!("5 parameter sets, max distance {worst_cells:.3} grid cells"))
}

fn interior_optimum() -> Outcome {
    let mut cfg = ExperimentConfig::new(Algorithm::S3gdMv, 16, 1.0, 2000, quadratic(100, ScalarOrVec::Scalar(1.0), 1.0, 1.0));
    cfg.learning_rate = Some(LearningRate::Constant(0.002));
    cfg.seed = 10;
    let gammas = [0.02, 0.05, 0.1, 0.3, 1.0];
    let rows = sweep_repeated(&cfg, SweepAxis::Gamma, &gammas, 5).unwrap();
    let mean_loss = |g: f64| {
        let v: Vec<f64> = rows.iter().filter(|r| r.value == g).map(|r| r.final_train_loss).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let full = mean_loss(1.0);
    let (best_g, best) = gammas[..4]
        .iter()
        .map(|&g| (g, mean_loss(g)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    outcome(best <= full, format!("best gamma {best_g}: mean final loss {best:.5} vs {full:.5} at gamma 1"))
}

fn selection_uniformity() -> Outcome {
    let n = 256;
    let l: Vec<f64> = (0..n).map(|i| 10f64.powf(2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect();
    let ratio = |eta: f64| {
        let mut cfg = ExperimentConfig::new(Algorithm::S3gdMv, 4, 0.1, 10_000, quadratic(n, ScalarOrVec::Vector(l.clone()), 1.0, 1.0));
        cfg.learning_rate = Some(LearningRate::Constant(1e-3));
        cfg.eta = eta;
        cfg.seed = 3;
        cfg.record_selection = true;
        selection_histogram(&run_experiment(&cfg).unwrap().rounds).unwrap().max_min_ratio
    };
    let (with_memory, without) = (ratio(1.0), ratio(0.0));
    outcome(
        with_memory < 3.0 && without > with_memory,
        format!("max/min selection ratio {with_memory:.3} with memory, {without:.3} without"),
    )
}

fn non_iid_accuracy() -> Outcome {
    let mut cfg = ExperimentConfig::new(Algorithm::S3gdMv, 10, 1.0, 500, ModelSpec::Logistic);
    cfg.data = Some(DataSpec {
        partition: PartitionMode::NonIid,
        source: DataSource::Synthetic(SyntheticSpec {
            num_classes: 10,
            dim: 20,
            train_per_class: 100,
            test_per_class: 50,
            separation: 3.0,
            spread: 1.0,
        }),
    });
    cfg.learning_rate = Some(LearningRate::Constant(1e-3));
    cfg.batch_size = BatchSize::Constant(16);
    let gammas = [0.01, 0.05, 0.1, 0.3];
    let rows = sweep_repeated(&cfg, SweepAxis::Gamma, &gammas, 5).unwrap();
    let summary = |rows: &[SweepRow], g: f64| {
        let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.value == g).collect();
        let acc = sel.iter().map(|r| r.final_test_metric).sum::<f64>() / sel.len() as f64;
        let bits = sel.iter().map(|r| r.cumulative_bits).sum::<f64>() / sel.len() as f64;
        (acc, bits)
    };
    let (best_g, (best_acc, best_bits)) = gammas
        .iter()
        .map(|&g| (g, summary(&rows, g)))
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .unwrap();
    cfg.algorithm = Algorithm::SignsgdMv;
    let sign_rows = sweep_repeated(&cfg, SweepAxis::Mu, &[0.0], 5).unwrap();
    let (sign_acc, sign_bits) = summary(&sign_rows, 0.0);
    outcome(
        best_acc >= sign_acc - 0.01 && best_bits < sign_bits,
        format!(
            "best gamma {best_g}: accuracy {:.2}% at {best_bits:.3e} bits; signSGD {:.2}% at {sign_bits:.3e} bits",
            100.0 * best_acc,
            100.0 * sign_acc
        ),
    )
}

fn main() {
    let checks = [
        Check { id: 1, name: "three-worker vote example", budget: Duration::from_millis(1), run: three_worker_vote },
        Check { id: 2, name: "full sparsity without memory equals signSGD", budget: Duration::from_secs(1), run: signsgd_reduction },
        Check { id: 3, name: "vote error bound dominates exact error", budget: Duration::from_secs(1), run: vote_bound_dominance },
        Check { id: 4, name: "sign-flip bound Monte Carlo", budget: Duration::from_secs(30), run: sign_flip_monte_carlo },
        Check { id: 5, name: "convergence bound not violated", budget: Duration::from_secs(300), run: convergence_bound_dominance },
        Check { id: 6, name: "O(1/sqrt(T)) rate shape", budget: Duration::from_secs(60), run: rate_shape },
        Check { id: 7, name: "analytic cost totals", budget: Duration::from_millis(1), run: cost_table },
        Check { id: 8, name: "codec roundtrip and malformed streams", budget: Duration::from_secs(5), run: codec_roundtrip },
        Check { id: 9, name: "optimal sparsity minimizes surrogate", budget: Duration::from_secs(1), run: optimal_sparsity },
        Check { id: 10, name: "interior sparsity optimum", budget: Duration::from_secs(120), run: interior_optimum },
        Check { id: 11, name: "memory uniformizes selection", budget: Duration::from_secs(60), run: selection_uniformity },
        Check { id: 12, name: "non-IID accuracy at lower cost", budget: Duration::from_secs(300), run: non_iid_accuracy },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in &checks {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str()) || c.id.to_string() == *f) {
            continue;
        }
        let start = Instant::now();
        let out = (c.run)();
        let elapsed = start.elapsed();
        let in_budget = elapsed <= c.budget;
        let pass = out.pass && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:02} {} {}: {} [{:.3?}{}]",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.name,
            out.detail,
            elapsed,
            if in_budget { String::new() } else { format!(" exceeds {:?}", c.budget) }
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
