//! Communication-cost accounting.
//!
//! Analytic costs are the real-valued per-round formulas (`K + K log2(N/K)`
//! bits for a K-sparse sign message, 32 bits per full-precision value); wire
//! costs are the lengths actually produced by [`crate::codec`].

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithm::Algorithm;
use crate::codec;
use crate::error::{Error, Result};

pub const FLOAT_BITS: f64 = 32.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    #[default]
    Analytic,
    Wire,
}

impl std::str::FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(CostMode::Analytic),
            "wire" => Ok(CostMode::Wire),
            other => Err(Error::invalid(format!("unknown cost mode '{other}'"))),
        }
    }
}

/// `K + K log2(N/K)` bits for one K-sparse sign message; 0 when `K = 0`.
pub fn analytic_uplink_bits(n: usize, k: usize) -> Result<f64> {
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds N = {n}")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let k = k as f64;
    Ok(k + k * (n as f64 / k).log2())
}

/// Bits to send a vote over union support `U`: the sparse form
/// `|U| + |U| log2(N/|U|)` or the dense `N`-bit form, whichever is smaller.
pub fn analytic_downlink_bits(union_size: usize, n: usize) -> Result<f64> {
    if union_size > n {
        return Err(Error::invalid(format!(
            "union size {union_size} exceeds N = {n}"
        )));
    }
    Ok(analytic_uplink_bits(n, union_size)?.min(n as f64))
}

/// Bits moved in one round, summed over all workers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundCost {
    pub uplink: f64,
    pub downlink: f64,
}

impl RoundCost {
    pub fn total(&self) -> f64 {
        self.uplink + self.downlink
    }
}

fn check_mnk(m: usize, n: usize, k: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("M and N must be positive"));
    }
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds N = {n}")));
    }
    Ok(())
}

/// Per-round cost from the algorithm's closed-form formula:
///
/// | algorithm | uplink | downlink |
/// |---|---|---|
/// | vanilla SGD | `32MN` | `32MN` |
/// | top-K SGD with memory | `M[32K + K log2(N/K)]` | `32MN` |
/// | signSGD-MV | `MN` | `MN` |
/// | S3GD-MV (TopK or RandK) | `M[K + K log2(N/K)]` | `MN` |
pub fn analytic_round_cost(alg: Algorithm, m: usize, n: usize, k: usize) -> Result<RoundCost> {
    check_mnk(m, n, k)?;
    let (mf, nf) = (m as f64, n as f64);
    let cost = match alg {
        Algorithm::VanillaSgd => RoundCost {
            uplink: FLOAT_BITS * mf * nf,
            downlink: FLOAT_BITS * mf * nf,
        },
        Algorithm::TopkSgdMem => {
            let index_bits = analytic_uplink_bits(n, k)? - k as f64;
            RoundCost {
                uplink: mf * (FLOAT_BITS * k as f64 + index_bits),
                downlink: FLOAT_BITS * mf * nf,
            }
        }
        Algorithm::SignsgdMv => RoundCost {
            uplink: mf * nf,
            downlink: mf * nf,
        },
        Algorithm::S3gdMv | Algorithm::S3gdMvRandk => RoundCost {
            uplink: mf * analytic_uplink_bits(n, k)?,
            downlink: mf * nf,
        },
    };
    Ok(cost)
}

/// Total over `T` rounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TotalCost {
    /// Closed-form total, `T ×` [`analytic_round_cost`].
    pub table: f64,
    /// Same uplink, downlink from the measured per-round union sizes
    /// (`M · analytic_downlink_bits(|U_t|, N)` per round). Only for the
    /// majority-vote algorithms and only when unions were supplied.
    pub measured: Option<f64>,
}

pub fn total_cost_bits(
    alg: Algorithm,
    m: usize,
    n: usize,
    k: usize,
    t: usize,
    per_round_unions: Option<&[usize]>,
) -> Result<TotalCost> {
    let round = analytic_round_cost(alg, m, n, k)?;
    let table = round.total() * t as f64;
    let measured = match per_round_unions {
        None => None,
        Some(unions) => {
            if !matches!(alg, Algorithm::S3gdMv | Algorithm::S3gdMvRandk) {
                return Err(Error::invalid(format!(
                    "measured-union accounting applies to sparse majority-vote algorithms, not {alg}"
                )));
            }
            if unions.len() != t {
                return Err(Error::invalid(format!(
                    "{} union sizes given for {t} rounds",
                    unions.len()
                )));
            }
            let mut down = 0.0;
            for &u in unions {
                down += m as f64 * analytic_downlink_bits(u, n)?;
            }
            Some(round.uplink * t as f64 + down)
        }
    };
    Ok(TotalCost { table, measured })
}

/// Encoded size of a full-precision sparse message with `entries` values.
pub fn wire_sparse_value_bits(n: usize, entries: usize) -> usize {
    codec::count_width(n) as usize + entries * (codec::index_width(n) as usize + FLOAT_BITS as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub round: usize,
    pub algorithm: Algorithm,
    pub uplink_bits: f64,
    pub downlink_bits: f64,
    pub cumulative_bits: f64,
}

/// Running bit counts of one experiment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    records: Vec<LedgerRecord>,
    uplink_total: f64,
    downlink_total: f64,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: usize, algorithm: Algorithm, uplink_bits: f64, downlink_bits: f64) -> Result<&LedgerRecord> {
        for (name, v) in [("uplink", uplink_bits), ("downlink", downlink_bits)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} bits must be finite and >= 0, got {v}")));
            }
        }
        self.uplink_total += uplink_bits;
        self.downlink_total += downlink_bits;
        self.records.push(LedgerRecord {
            round,
            algorithm,
            uplink_bits,
            downlink_bits,
            cumulative_bits: self.uplink_total + self.downlink_total,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn uplink_total(&self) -> f64 {
        self.uplink_total
    }

    pub fn downlink_total(&self) -> f64 {
        self.downlink_total
    }

    pub fn cumulative(&self) -> f64 {
        self.uplink_total + self.downlink_total
    }

    /// CSV with columns `round, algorithm, uplink_bits, downlink_bits,
    /// cumulative_bits`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "algorithm", "uplink_bits", "downlink_bits", "cumulative_bits"])?;
        for r in &self.records {
            w.write_record([
                r.round.to_string(),
                r.algorithm.to_string(),
                r.uplink_bits.to_string(),
                r.downlink_bits.to_string(),
                r.cumulative_bits.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}
