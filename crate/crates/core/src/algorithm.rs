use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Distributed training algorithms the simulator and the cost ledger know.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Algorithm {
    /// Full-precision gradients up, full-precision average down.
    VanillaSgd,
    /// Top-K values with error memory up, full-precision average down.
    TopkSgdMem,
    /// Dense signs up, majority-vote signs down.
    SignsgdMv,
    /// Top-K signs with error memory up, majority vote down.
    S3gdMv,
    /// Random-K signs (no memory) up, majority vote down.
    S3gdMvRandk,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::VanillaSgd,
        Algorithm::TopkSgdMem,
        Algorithm::SignsgdMv,
        Algorithm::S3gdMv,
        Algorithm::S3gdMvRandk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::VanillaSgd => "VANILLA_SGD",
            Algorithm::TopkSgdMem => "TOPK_SGD_MEM",
            Algorithm::SignsgdMv => "SIGNSGD_MV",
            Algorithm::S3gdMv => "S3GD_MV",
            Algorithm::S3gdMvRandk => "S3GD_MV_RANDK",
        }
    }

    /// Whether the server aggregates by majority vote over signs.
    pub fn is_sign_based(self) -> bool {
        matches!(
            self,
            Algorithm::SignsgdMv | Algorithm::S3gdMv | Algorithm::S3gdMvRandk
        )
    }

    /// Whether workers transmit only K of N coordinates.
    pub fn is_sparse(self) -> bool {
        matches!(
            self,
            Algorithm::TopkSgdMem | Algorithm::S3gdMv | Algorithm::S3gdMvRandk
        )
    }

    /// Whether workers keep an error-feedback memory.
    pub fn uses_memory(self) -> bool {
        matches!(self, Algorithm::TopkSgdMem | Algorithm::S3gdMv)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(json, format!("\"{}\"", a.name()));
        }
        assert_eq!("s3gd-mv".parse::<Algorithm>().unwrap(), Algorithm::S3gdMv);
        assert!("adam".parse::<Algorithm>().is_err());
    }
}
