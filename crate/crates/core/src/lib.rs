//! Sparse sign compression with error feedback and majority-vote
//! aggregation for distributed SGD, with bit-exact communication accounting.

pub mod aggregation;
pub mod algorithm;
pub mod codec;
pub mod compression;
pub mod data;
pub mod error;
pub mod ledger;
pub mod models;
pub mod rng;
pub mod sim;
pub mod theory;

pub use aggregation::{average_aggregate, average_sparse, majority_vote, participation_count, VoteResult};
pub use algorithm::Algorithm;
pub use codec::{decode_sparse_sign, encode_sparse_sign, Bitstream};
pub use compression::{
    error_feedback_step, rand_k_sign, top_k_select, top_k_sign, ErrorMemory, FeedbackStep, Sign, SparseSignVector,
    SparseValueVector, ThresholdReport,
};
pub use error::{Error, Result};
pub use ledger::{total_cost_bits, CommLedger, CostMode, LedgerRecord, RoundCost, TotalCost};
pub use models::{Classifier, Gradient, ModelParams};
pub use sim::{run_experiment, ExperimentConfig, RoundMetrics, RunOutput};
