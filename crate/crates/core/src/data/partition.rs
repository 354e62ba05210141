use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    #[default]
    #[serde(alias = "IID")]
    Iid,
    #[serde(alias = "non_iid", alias = "non-iid", alias = "NONIID", alias = "NON_IID")]
    NonIid,
}

/// The slice of the dataset held by one worker.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerShard {
    pub worker_id: usize,
    pub indices: Vec<usize>,
}

/// Splits `ds` across `workers` shards that together cover every sample
/// exactly once.
///
/// * `Iid`: random permutation cut into near-equal pieces (sizes differ by at
///   most one).
/// * `NonIid`: class-sorted. With `workers <= num_classes`, class `c` goes to
///   worker `c mod workers`. With more workers than classes, worker `m`
///   holds only class `m mod num_classes` and the workers sharing a class
///   split its samples evenly. Either way a worker sees as few classes as
///   possible.
pub fn partition_dataset<R: Rng + ?Sized>(
    ds: &Dataset,
    workers: usize,
    mode: PartitionMode,
    rng: &mut R,
) -> Result<Vec<WorkerShard>> {
    if workers == 0 {
        return Err(Error::invalid("worker count must be at least 1"));
    }
    if workers > ds.len() {
        return Err(Error::invalid(format!(
            "{workers} workers exceed dataset size {}",
            ds.len()
        )));
    }
    let mut shards: Vec<WorkerShard> = (0..workers)
        .map(|worker_id| WorkerShard {
            worker_id,
            indices: Vec::new(),
        })
        .collect();
    match mode {
        PartitionMode::Iid => {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            idx.shuffle(rng);
            for (m, chunk) in split_even(&idx, workers).into_iter().enumerate() {
                shards[m].indices = chunk.to_vec();
            }
        }
        PartitionMode::NonIid => {
            let classes = ds.num_classes();
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
            for (i, s) in ds.samples().iter().enumerate() {
                by_class[s.label].push(i);
            }
            for members in &mut by_class {
                members.shuffle(rng);
            }
            if workers <= classes {
                for (c, members) in by_class.into_iter().enumerate() {
                    shards[c % workers].indices.extend(members);
                }
            } else {
                for (c, members) in by_class.iter().enumerate() {
                    let owners: Vec<usize> = (c..workers).step_by(classes).collect();
                    for (owner, chunk) in owners.iter().zip(split_even(members, owners.len())) {
                        shards[*owner].indices = chunk.to_vec();
                    }
                }
            }
        }
    }
    if let Some(empty) = shards.iter().find(|s| s.indices.is_empty()) {
        return Err(Error::invalid(format!(
            "worker {} would receive no samples under {mode:?} partitioning",
            empty.worker_id
        )));
    }
    Ok(shards)
}

fn split_even(items: &[usize], parts: usize) -> Vec<&[usize]> {
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        out.push(&items[start..start + len]);
        start += len;
    }
    out
}

/// Draws `batch_size` samples uniformly with replacement from `shard`.
pub fn sample_minibatch<'a, R: Rng + ?Sized>(
    ds: &'a Dataset,
    shard: &WorkerShard,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<&'a Sample>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if shard.indices.is_empty() {
        return Err(Error::invalid(format!("shard of worker {} is empty", shard.worker_id)));
    }
    (0..batch_size)
        .map(|_| {
            let i = shard.indices[rng.random_range(0..shard.indices.len())];
            ds.get(i)
                .ok_or_else(|| Error::invalid(format!("shard index {i} outside dataset")))
        })
        .collect()
}
