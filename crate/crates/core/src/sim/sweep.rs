use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::engine::{run_experiment, RoundMetrics, RunOutput};
use crate::algorithm::Algorithm;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "M")]
    Workers,
    #[serde(rename = "eta")]
    Eta,
    #[serde(rename = "mu")]
    Mu,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::Workers => "M",
            SweepAxis::Eta => "eta",
            SweepAxis::Mu => "mu",
        }
    }

    fn check_applies(self, alg: Algorithm) -> Result<()> {
        let ok = match self {
            SweepAxis::Gamma => alg.is_sparse(),
            SweepAxis::Eta => alg.uses_memory(),
            SweepAxis::Workers | SweepAxis::Mu => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("axis {} does not apply to {alg}", self.name())))
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        match self {
            SweepAxis::Gamma => cfg.gamma = value,
            SweepAxis::Eta => cfg.eta = value,
            SweepAxis::Mu => cfg.mu = value,
            SweepAxis::Workers => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Error::invalid(format!("M value {value} is not a positive integer")));
                }
                cfg.workers = value as usize;
            }
        }
        cfg.validate()
            .map_err(|e| Error::invalid(format!("{} value {value}: {e}", self.name())))
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(SweepAxis::Gamma),
            "m" | "workers" => Ok(SweepAxis::Workers),
            "eta" => Ok(SweepAxis::Eta),
            "mu" => Ok(SweepAxis::Mu),
            other => Err(Error::invalid(format!("unknown sweep axis '{other}' (gamma, M, eta, mu)"))),
        }
    }
}

/// One line of the sweep table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(rename = "M")]
    pub workers: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub final_train_loss: f64,
    pub final_test_metric: f64,
    pub final_gbar_l1: f64,
    pub mean_gbar_l1: f64,
    pub cumulative_bits: f64,
}

impl SweepRow {
    fn new(axis: SweepAxis, value: f64, repeat: usize, cfg: &ExperimentConfig, out: &RunOutput) -> Self {
        Self {
            axis,
            value,
            repeat,
            seed: cfg.seed,
            algorithm: cfg.algorithm,
            workers: cfg.workers,
            k: out.k,
            final_train_loss: out.final_metrics.train_loss,
            final_test_metric: out.final_metrics.test_metric,
            final_gbar_l1: out.final_metrics.gbar_l1,
            mean_gbar_l1: out.mean_gbar_l1(),
            cumulative_bits: out.cumulative_bits(),
        }
    }
}

/// Seed of repeat `r`: the template seed for `r = 0`, derived otherwise.
/// Every swept value shares the seeds, so comparisons along the axis are
/// paired.
pub fn repeat_seed(master: u64, repeat: usize) -> u64 {
    if repeat == 0 {
        master
    } else {
        derive_seed(master, &[0x5357_4550, repeat as u64])
    }
}

/// Runs the template once per value and repeat. All values are validated
/// before any run starts.
pub fn sweep_repeated(
    template: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    repeats: usize,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("sweep needs at least one value"));
    }
    if repeats == 0 {
        return Err(Error::invalid("sweep needs at least one repeat"));
    }
    axis.check_applies(template.algorithm)?;
    let configs: Vec<(f64, ExperimentConfig)> = values
        .iter()
        .map(|&v| {
            let mut cfg = template.clone();
            axis.apply(&mut cfg, v)?;
            Ok((v, cfg))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(values.len() * repeats);
    for r in 0..repeats {
        for (v, cfg) in &configs {
            let mut cfg = cfg.clone();
            cfg.seed = repeat_seed(template.seed, r);
            let out = run_experiment(&cfg)?;
            rows.push(SweepRow::new(axis, *v, r, &cfg, &out));
        }
    }
    Ok(rows)
}

pub fn sweep(template: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    sweep_repeated(template, axis, values, 1)
}

/// Per-coordinate selection totals over a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionHistogram {
    pub counts: Vec<u64>,
    pub total: u64,
    /// Infinite when some coordinate was never selected.
    pub max_min_ratio: f64,
    /// Pearson statistic against the uniform histogram with the same total.
    pub chi_square: f64,
}

pub fn selection_histogram(metrics: &[RoundMetrics]) -> Result<SelectionHistogram> {
    let first = metrics
        .first()
        .ok_or_else(|| Error::InvalidState("no rounds recorded".into()))?;
    let n = first
        .selection
        .as_ref()
        .ok_or_else(|| Error::InvalidState("selection counts were not recorded (set record_selection)".into()))?
        .len();
    let mut counts = vec![0u64; n];
    for r in metrics {
        let sel = r.selection.as_ref().ok_or_else(|| {
            Error::InvalidState(format!("round {} has no selection counts", r.round))
        })?;
        if sel.len() != n {
            return Err(Error::InvalidState(format!("round {} has {} counts, expected {n}", r.round, sel.len())));
        }
        counts.iter_mut().zip(sel).for_each(|(c, &s)| *c += u64::from(s));
    }
    let total: u64 = counts.iter().sum();
    let max = counts.iter().copied().max().unwrap_or(0);
    let min = counts.iter().copied().min().unwrap_or(0);
    let max_min_ratio = match (max, min) {
        (0, _) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => max as f64 / min as f64,
    };
    let mean = total as f64 / n.max(1) as f64;
    let chi_square = if mean > 0.0 {
        counts.iter().map(|&c| (c as f64 - mean).powi(2) / mean).sum()
    } else {
        0.0
    };
    Ok(SelectionHistogram {
        counts,
        total,
        max_min_ratio,
        chi_square,
    })
}
