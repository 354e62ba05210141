//! Server-side aggregation: majority vote over sparse sign messages and
//! full-precision averaging for the baselines.

use serde::{Deserialize, Serialize};

use crate::compression::{SparseSignVector, SparseValueVector};
use crate::error::{check_dims, Error, Result};
use crate::models::Gradient;

/// Outcome of a majority vote.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteResult {
    pub dim: usize,
    /// `sgn(tallies)`; zero outside the union support and on exact ties.
    pub ternary: Vec<i8>,
    /// Coordinates at least one worker voted on, ascending.
    pub union_support: Vec<usize>,
    pub tallies: Vec<i32>,
}

impl VoteResult {
    /// The downlink payload: signs of the nonzero vote entries.
    pub fn to_sparse_sign(&self) -> SparseSignVector {
        SparseSignVector::from_ternary(&self.ternary)
    }
}

fn check_messages(msgs: &[SparseSignVector], n: usize) -> Result<()> {
    for (m, msg) in msgs.iter().enumerate() {
        if msg.dim() != n {
            return Err(Error::invalid(format!(
                "message {m} has dim {}, expected {n}",
                msg.dim()
            )));
        }
    }
    Ok(())
}

/// `sgn(Σ_m msg_m)` coordinate-wise. Only coordinates present in some message
/// are touched, so the cost is linear in the total message size.
pub fn majority_vote(msgs: &[SparseSignVector], n: usize) -> Result<VoteResult> {
    check_messages(msgs, n)?;
    let mut tallies = vec![0i32; n];
    let mut voted = vec![false; n];
    let mut union_support = Vec::new();
    for msg in msgs {
        for &(i, s) in msg.entries() {
            tallies[i] += i32::from(s.value());
            if !voted[i] {
                voted[i] = true;
                union_support.push(i);
            }
        }
    }
    union_support.sort_unstable();
    let mut ternary = vec![0i8; n];
    for &i in &union_support {
        ternary[i] = tallies[i].signum() as i8;
    }
    Ok(VoteResult {
        dim: n,
        ternary,
        union_support,
        tallies,
    })
}

/// Number of workers voting on each coordinate.
pub fn participation_count(msgs: &[SparseSignVector], n: usize) -> Result<Vec<u32>> {
    check_messages(msgs, n)?;
    let mut count = vec![0u32; n];
    for msg in msgs {
        for &(i, _) in msg.entries() {
            count[i] += 1;
        }
    }
    Ok(count)
}

/// Coordinate-wise mean, summed in list order.
pub fn average_aggregate(grads: &[Gradient]) -> Result<Gradient> {
    let first = grads
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty gradient list"))?;
    let n = first.len();
    let mut sum = vec![0.0; n];
    for g in grads {
        check_dims("average_aggregate", n, g.len())?;
        for (s, v) in sum.iter_mut().zip(g.as_slice()) {
            *s += v;
        }
    }
    let inv = grads.len() as f64;
    Ok(Gradient::from_raw(sum.into_iter().map(|s| s / inv).collect()))
}

/// Mean of sparse full-precision messages, treating absent entries as zero.
///
/// Summation visits every coordinate of every message in list order, so with
/// full-support messages the result is bit-identical to
/// [`average_aggregate`] on the dense vectors.
pub fn average_sparse(msgs: &[SparseValueVector], n: usize) -> Result<Gradient> {
    if msgs.is_empty() {
        return Err(Error::invalid("cannot average an empty message list"));
    }
    let mut sum = vec![0.0; n];
    for msg in msgs {
        check_dims("average_sparse", n, msg.dim)?;
        for (s, v) in sum.iter_mut().zip(msg.to_dense()) {
            *s += v;
        }
    }
    let inv = msgs.len() as f64;
    Ok(Gradient::from_raw(sum.into_iter().map(|s| s / inv).collect()))
}
