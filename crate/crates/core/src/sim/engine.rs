use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, ModelSpec};
use crate::aggregation::{average_aggregate, average_sparse, majority_vote};
use crate::algorithm::Algorithm;
use crate::codec::{decode_sparse_sign, encode_sparse_sign};
use crate::compression::{rand_k_sign, ErrorMemory, SparseSignVector, SparseValueVector};
use crate::data::{
    load_idx_dataset, partition_dataset, sample_minibatch, synthetic_classification, Dataset, WorkerShard,
};
use crate::error::{check_dims, Error, Result};
use crate::ledger::{analytic_round_cost, wire_sparse_value_bits, CommLedger, CostMode, FLOAT_BITS};
use crate::models::{Classifier, Gradient, LogisticModel, Mlp, ModelParams, QuadraticObjective};
use crate::rng::{derive_seed, setup_stream, worker_stream};

/// Heavy-ball state `v`, zero-initialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumState {
    v: Vec<f64>,
}

impl MomentumState {
    pub fn new(n: usize) -> Self {
        Self { v: vec![0.0; n] }
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }
}

/// `x - δ·direction` when `μ = 0`; otherwise `v ← μv + direction`,
/// `x ← x - δv`.
pub fn update_model(
    x: &ModelParams,
    direction: &[f64],
    delta: f64,
    momentum: &mut MomentumState,
    mu: f64,
) -> Result<ModelParams> {
    check_dims("update direction", x.len(), direction.len())?;
    check_dims("momentum", x.len(), momentum.v.len())?;
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::invalid(format!("mu must lie in [0, 1), got {mu}")));
    }
    let next: Vec<f64> = if mu == 0.0 {
        x.as_slice().iter().zip(direction).map(|(x, d)| x - delta * d).collect()
    } else {
        for (v, d) in momentum.v.iter_mut().zip(direction) {
            *v = mu * *v + d;
        }
        x.as_slice().iter().zip(&momentum.v).map(|(x, v)| x - delta * v).collect()
    };
    let mut out = x.clone();
    out.set(next)?;
    Ok(out)
}

/// Metrics of one round, evaluated at the iterate the round starts from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub algorithm: Algorithm,
    pub train_loss: f64,
    /// Test accuracy for classifiers, `‖ḡ‖₁` for quadratics.
    pub test_metric: f64,
    /// `‖ḡ^t‖₁`: exact for quadratics, full training-set gradient otherwise.
    pub gbar_l1: f64,
    pub uplink_bits: f64,
    pub downlink_bits: f64,
    pub cumulative_bits: f64,
    pub wall_ms: f64,
    /// Coordinates touched by the aggregate.
    pub union_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<Vec<u32>>,
}

/// Metrics at the final iterate `x^T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub train_loss: f64,
    pub test_metric: f64,
    pub gbar_l1: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub algorithm: Algorithm,
    pub n: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rounds: Vec<RoundMetrics>,
    pub final_metrics: FinalMetrics,
    pub params: ModelParams,
    pub ledger: CommLedger,
}

impl RunOutput {
    /// `(1/T) Σ_t ‖ḡ^t‖₁`.
    pub fn mean_gbar_l1(&self) -> f64 {
        self.rounds.iter().map(|r| r.gbar_l1).sum::<f64>() / self.rounds.len().max(1) as f64
    }

    pub fn cumulative_bits(&self) -> f64 {
        self.ledger.cumulative()
    }
}

enum Problem {
    Quadratic(QuadraticObjective),
    Classifier {
        model: Box<dyn Classifier>,
        train: Dataset,
        test: Dataset,
        shards: Vec<WorkerShard>,
    },
}

impl Problem {
    fn evaluate(&self, x: &ModelParams) -> Result<FinalMetrics> {
        match self {
            Problem::Quadratic(q) => {
                let g = q.exact_grad(x)?.l1_norm();
                Ok(FinalMetrics {
                    train_loss: q.loss(x),
                    test_metric: g,
                    gbar_l1: g,
                })
            }
            Problem::Classifier { model, train, test, .. } => {
                let (loss, g) = model.loss_and_grad(x, &train.refs())?;
                let correct = test
                    .samples()
                    .iter()
                    .filter(|s| model.predict(x, &s.features) == s.label)
                    .count();
                Ok(FinalMetrics {
                    train_loss: loss,
                    test_metric: correct as f64 / test.len().max(1) as f64,
                    gbar_l1: g.l1_norm(),
                })
            }
        }
    }
}

struct Setup {
    problem: Problem,
    x0: ModelParams,
    l1_norm: Option<f64>,
}

fn build(cfg: &ExperimentConfig) -> Result<Setup> {
    match &cfg.model {
        ModelSpec::Quadratic { dim, l_diag, noise_std, x0 } => {
            let q = QuadraticObjective::new(l_diag.expand("L", *dim)?, noise_std.expand("noise_std", *dim)?)?;
            let l1 = q.l1_norm();
            Ok(Setup {
                x0: ModelParams::new(x0.expand("x0", *dim)?)?,
                problem: Problem::Quadratic(q),
                l1_norm: Some(l1),
            })
        }
        spec => {
            let data = cfg.data.as_ref().ok_or_else(|| Error::invalid("classification models need a data spec"))?;
            let (train, test) = match &data.source {
                DataSource::Synthetic(s) => synthetic_classification(s, &mut setup_stream(cfg.seed, 1))?,
                DataSource::Idx(src) => {
                    let train = load_idx_dataset(&src.train_images, &src.train_labels)?;
                    let train = match src.limit {
                        Some(n) => train.truncated(n),
                        None => train,
                    };
                    (train, load_idx_dataset(&src.test_images, &src.test_labels)?)
                }
            };
            check_dims("test features", train.dim(), test.dim())?;
            let classes = train.num_classes().max(test.num_classes());
            let model: Box<dyn Classifier> = match spec {
                ModelSpec::Logistic => Box::new(LogisticModel::new(train.dim(), classes)?),
                ModelSpec::Mlp { hidden } => {
                    let mut arch = vec![train.dim()];
                    arch.extend(hidden);
                    arch.push(classes);
                    Box::new(Mlp::new(arch)?)
                }
                ModelSpec::Quadratic { .. } => unreachable!(),
            };
            let shards = partition_dataset(&train, cfg.workers, data.partition, &mut setup_stream(cfg.seed, 2))?;
            Ok(Setup {
                x0: model.init_params(derive_seed(cfg.seed, &[3])),
                problem: Problem::Classifier { model, train, test, shards },
                l1_norm: None,
            })
        }
    }
}

enum Uplink {
    Dense(Gradient),
    Values(SparseValueVector),
    Signs(SparseSignVector),
}

impl Uplink {
    fn support(&self, counts: &mut [u32]) {
        match self {
            Uplink::Dense(_) => counts.iter_mut().for_each(|c| *c += 1),
            Uplink::Values(v) => v.entries.iter().for_each(|&(i, _)| counts[i] += 1),
            Uplink::Signs(s) => s.entries().iter().for_each(|&(i, _)| counts[i] += 1),
        }
    }
}

struct Worker {
    id: usize,
    memory: ErrorMemory,
}

struct RoundCtx<'a> {
    cfg: &'a ExperimentConfig,
    problem: &'a Problem,
    x: &'a ModelParams,
    n: usize,
    k: usize,
    batch: usize,
    round: usize,
}

fn sign_message(g: &Gradient) -> SparseSignVector {
    let ternary: Vec<i8> = g
        .as_slice()
        .iter()
        .map(|&v| if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 })
        .collect();
    SparseSignVector::from_ternary(&ternary)
}

/// Encodes, then decodes as the server would; returns the decoded message
/// and its wire length.
fn transmit(msg: &SparseSignVector) -> Result<(SparseSignVector, f64)> {
    let bits = encode_sparse_sign(msg);
    let decoded = decode_sparse_sign(&bits, msg.dim())?;
    Ok((decoded, bits.bit_len() as f64))
}

fn worker_step(ctx: &RoundCtx<'_>, w: &mut Worker) -> Result<(Uplink, f64)> {
    let mut rng = worker_stream(ctx.cfg.seed, w.id, ctx.round);
    let g_tilde = match ctx.problem {
        Problem::Quadratic(q) => q.batch_grad(ctx.x, ctx.batch, &mut rng)?,
        Problem::Classifier { model, train, shards, .. } => {
            let batch = sample_minibatch(train, &shards[w.id], ctx.batch, &mut rng)?;
            model.loss_and_grad(ctx.x, &batch)?.1
        }
    };
    let n = ctx.n;
    Ok(match ctx.cfg.algorithm {
        Algorithm::VanillaSgd => (Uplink::Dense(g_tilde), FLOAT_BITS * n as f64),
        Algorithm::TopkSgdMem => {
            let msg = w.memory.step_values(&g_tilde, ctx.cfg.eta, ctx.k)?;
            let bits = wire_sparse_value_bits(n, msg.entries.len()) as f64;
            (Uplink::Values(msg), bits)
        }
        Algorithm::SignsgdMv => (Uplink::Signs(sign_message(&g_tilde)), n as f64),
        Algorithm::S3gdMv => {
            let msg = w.memory.step(&g_tilde, ctx.cfg.eta, ctx.k)?;
            let (msg, bits) = transmit(&msg)?;
            (Uplink::Signs(msg), bits)
        }
        Algorithm::S3gdMvRandk => {
            let msg = rand_k_sign(g_tilde.as_slice(), ctx.k, &mut rng)?;
            let (msg, bits) = transmit(&msg)?;
            (Uplink::Signs(msg), bits)
        }
    })
}

/// Aggregated update direction, union size and wire downlink per worker.
fn server_step(alg: Algorithm, msgs: Vec<Uplink>, n: usize) -> Result<(Vec<f64>, usize, f64)> {
    match alg {
        Algorithm::VanillaSgd => {
            let grads: Vec<Gradient> = msgs
                .into_iter()
                .map(|m| match m {
                    Uplink::Dense(g) => g,
                    _ => unreachable!(),
                })
                .collect();
            Ok((average_aggregate(&grads)?.into_vec(), n, FLOAT_BITS * n as f64))
        }
        Algorithm::TopkSgdMem => {
            let sparse: Vec<SparseValueVector> = msgs
                .into_iter()
                .map(|m| match m {
                    Uplink::Values(v) => v,
                    _ => unreachable!(),
                })
                .collect();
            let mut touched = vec![false; n];
            sparse.iter().flat_map(|v| &v.entries).for_each(|&(i, _)| touched[i] = true);
            let union = touched.iter().filter(|&&b| b).count();
            Ok((average_sparse(&sparse, n)?.into_vec(), union, FLOAT_BITS * n as f64))
        }
        Algorithm::SignsgdMv | Algorithm::S3gdMv | Algorithm::S3gdMvRandk => {
            let signs: Vec<SparseSignVector> = msgs
                .into_iter()
                .map(|m| match m {
                    Uplink::Signs(s) => s,
                    _ => unreachable!(),
                })
                .collect();
            let vote = majority_vote(&signs, n)?;
            let union = vote.union_support.len();
            if alg == Algorithm::SignsgdMv {
                let dir = vote.ternary.iter().map(|&s| f64::from(s)).collect();
                return Ok((dir, union, n as f64));
            }
            let (decoded, bits) = transmit(&vote.to_sparse_sign())?;
            let dir = decoded.to_dense().into_iter().map(f64::from).collect();
            Ok((dir, union, bits))
        }
    }
}

/// Runs `T` rounds of the configured algorithm. The returned per-round
/// metrics describe the iterate each round starts from; `final_metrics`
/// describes `x^T`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let setup = build(cfg)?;
    let n = setup.x0.len();
    if let Some(declared) = cfg.model_size {
        if declared != n {
            return Err(Error::invalid(format!("config N = {declared} but the model has {n} parameters")));
        }
    }
    let k = cfg.k_for(n);
    let delta = cfg.resolve_learning_rate(setup.l1_norm)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {delta}")));
    }
    let batch = cfg.batch_for_round();
    let m = cfg.workers;
    let analytic = analytic_round_cost(cfg.algorithm, m, n, k)?;

    let mut workers: Vec<Worker> = (0..m)
        .map(|id| Worker {
            id,
            memory: ErrorMemory::new(n),
        })
        .collect();
    let mut x = setup.x0.clone();
    let mut momentum = MomentumState::new(n);
    let mut ledger = CommLedger::new();
    let mut rounds = Vec::with_capacity(cfg.rounds);

    for t in 0..cfg.rounds {
        let start = Instant::now();
        let eval = setup.problem.evaluate(&x)?;
        let ctx = RoundCtx {
            cfg,
            problem: &setup.problem,
            x: &x,
            n,
            k,
            batch,
            round: t,
        };
        let outputs: Vec<(Uplink, f64)> = if cfg.parallel {
            workers.par_iter_mut().map(|w| worker_step(&ctx, w)).collect::<Result<_>>()?
        } else {
            workers.iter_mut().map(|w| worker_step(&ctx, w)).collect::<Result<_>>()?
        };
        let selection = cfg.record_selection.then(|| {
            let mut counts = vec![0u32; n];
            outputs.iter().for_each(|(u, _)| u.support(&mut counts));
            counts
        });
        let wire_up: f64 = outputs.iter().map(|(_, b)| b).sum();
        let (direction, union_size, wire_down) = server_step(cfg.algorithm, outputs.into_iter().map(|(u, _)| u).collect(), n)?;
        x = update_model(&x, &direction, delta, &mut momentum, cfg.mu)
            .map_err(|e| Error::InvalidState(format!("round {t}: {e}")))?;
        let (up, down) = match cfg.cost_mode {
            CostMode::Analytic => (analytic.uplink, analytic.downlink),
            CostMode::Wire => (wire_up, m as f64 * wire_down),
        };
        let cumulative = ledger.record(t, cfg.algorithm, up, down)?.cumulative_bits;
        rounds.push(RoundMetrics {
            round: t,
            algorithm: cfg.algorithm,
            train_loss: eval.train_loss,
            test_metric: eval.test_metric,
            gbar_l1: eval.gbar_l1,
            uplink_bits: up,
            downlink_bits: down,
            cumulative_bits: cumulative,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            union_size,
            selection,
        });
    }
    Ok(RunOutput {
        algorithm: cfg.algorithm,
        n,
        k,
        learning_rate: delta,
        batch_size: batch,
        final_metrics: setup.problem.evaluate(&x)?,
        rounds,
        params: x,
        ledger,
    })
}

/// Top-K SGD with memory: the configured run with the algorithm set to
/// `TOPK_SGD_MEM` (full-precision sparse messages, mean aggregation).
pub fn run_baseline_topk_mem(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let mut cfg = cfg.clone();
    cfg.algorithm = Algorithm::TopkSgdMem;
    run_experiment(&cfg)
}
