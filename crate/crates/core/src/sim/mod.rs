//! Round-synchronous simulation of distributed training with compressed
//! communication, plus parameter sweeps and result emission.

mod config;
mod engine;
mod output;
mod sweep;

pub use config::{
    BatchSchedule, BatchSize, DataSource, DataSpec, ExperimentConfig, IdxSource, LearningRate, ModelSpec,
    RateSchedule, ScalarOrVec,
};
pub use engine::{run_baseline_topk_mem, run_experiment, update_model, FinalMetrics, MomentumState, RoundMetrics, RunOutput};
pub use output::{
    emit_results, emit_sweep, load_results_json, write_metrics_csv, write_metrics_json, write_sweep_csv, OutputFormat,
    METRICS_COLUMNS, SWEEP_COLUMNS,
};
pub use sweep::{repeat_seed, selection_histogram, sweep, sweep_repeated, SelectionHistogram, SweepAxis, SweepRow};
