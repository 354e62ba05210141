//! Top-K / random-K sparsification, sign quantization and the error-feedback
//! memory that re-injects unsent gradient mass.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::models::Gradient;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    /// `sgn(v)`; `None` for zero.
    pub fn of(v: f64) -> Option<Sign> {
        if v > 0.0 {
            Some(Sign::Pos)
        } else if v < 0.0 {
            Some(Sign::Neg)
        } else {
            None
        }
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            1 => Some(Sign::Pos),
            -1 => Some(Sign::Neg),
            _ => None,
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }
}

/// A ternary vector in `{-1, 0, +1}^dim` stored as its nonzero entries,
/// indices strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseSignVector {
    dim: usize,
    entries: Vec<(usize, Sign)>,
}

impl SparseSignVector {
    pub fn new(dim: usize, entries: Vec<(usize, Sign)>) -> Result<Self> {
        for (pos, &(i, _)) in entries.iter().enumerate() {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dim {dim}")));
            }
            if pos > 0 && entries[pos - 1].0 >= i {
                return Err(Error::invalid("indices must be strictly increasing"));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Signs of the nonzero entries of a dense ternary vector.
    pub fn from_ternary(ternary: &[i8]) -> Self {
        let entries = ternary
            .iter()
            .enumerate()
            .filter_map(|(i, &v)| Sign::from_i8(v.signum()).map(|s| (i, s)))
            .collect();
        Self {
            dim: ternary.len(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, Sign)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self) -> Vec<i8> {
        let mut out = vec![0; self.dim];
        for &(i, s) in &self.entries {
            out[i] = s.value();
        }
        out
    }
}

/// A sparse real vector: the full-precision `TopK` message of the top-K SGD
/// baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseValueVector {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl SparseValueVector {
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Per-worker accumulated sparsification residual, zero-initialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ErrorMemory {
    values: Vec<f64>,
}

impl ErrorMemory {
    pub fn new(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("error memory entries must be finite"));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// In-place [`error_feedback_step`]: returns the sign message and
    /// overwrites the memory with the new residual.
    pub fn step(&mut self, g_tilde: &Gradient, eta: f64, k: usize) -> Result<SparseSignVector> {
        let g = compensate(g_tilde, self, eta)?;
        let (support, _) = top_k_select(&g, k)?;
        let msg = signs_on(&g, &support);
        self.values = residual(g, &support);
        Ok(msg)
    }

    /// In-place compensated top-K with full-precision values, for the
    /// top-K SGD with memory baseline.
    pub fn step_values(&mut self, g_tilde: &Gradient, eta: f64, k: usize) -> Result<SparseValueVector> {
        let g = compensate(g_tilde, self, eta)?;
        let (support, _) = top_k_select(&g, k)?;
        let msg = SparseValueVector {
            dim: g.len(),
            entries: support.iter().map(|&i| (i, g[i])).collect(),
        };
        self.values = residual(g, &support);
        Ok(msg)
    }
}

/// Selection threshold `rho` separating the K-th and (K+1)-th magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub rho: f64,
    pub kth_mag: f64,
    pub kplus1_mag: f64,
}

/// Descending magnitude, ties to the lower index.
fn rank(u: &[f64], a: usize, b: usize) -> Ordering {
    u[b].abs().total_cmp(&u[a].abs()).then(a.cmp(&b))
}

/// Indices of the `k` largest-magnitude entries of `u` (sorted ascending) and
/// the threshold report.
///
/// Boundary ties go to the lower index. `rho` is the midpoint of the K-th and
/// (K+1)-th magnitudes; with `k == len` it equals the K-th magnitude and the
/// (K+1)-th is reported as 0; with `k == 0` it is `+inf`.
pub fn top_k_select(u: &[f64], k: usize) -> Result<(Vec<usize>, ThresholdReport)> {
    let n = u.len();
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds dimension {n}")));
    }
    debug_assert!(u.iter().all(|v| v.is_finite()));
    if k == 0 {
        let max = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let report = ThresholdReport {
            rho: f64::INFINITY,
            kth_mag: f64::INFINITY,
            kplus1_mag: max,
        };
        return Ok((Vec::new(), report));
    }
    if k == n {
        let min = u.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let report = ThresholdReport {
            rho: min,
            kth_mag: min,
            kplus1_mag: 0.0,
        };
        return Ok(((0..n).collect(), report));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.select_nth_unstable_by(k, |&a, &b| rank(u, a, b));
    let kplus1 = idx[k];
    let kth = idx[..k]
        .iter()
        .copied()
        .max_by(|&a, &b| rank(u, a, b))
        .expect("k >= 1");
    let mut support = idx[..k].to_vec();
    support.sort_unstable();
    let (kth_mag, kplus1_mag) = (u[kth].abs(), u[kplus1].abs());
    let report = ThresholdReport {
        rho: 0.5 * (kth_mag + kplus1_mag),
        kth_mag,
        kplus1_mag,
    };
    Ok((support, report))
}

fn signs_on(u: &[f64], support: &[usize]) -> SparseSignVector {
    SparseSignVector {
        dim: u.len(),
        entries: support
            .iter()
            .filter_map(|&i| Sign::of(u[i]).map(|s| (i, s)))
            .collect(),
    }
}

/// `sgn(TopK(u))`. Selected zeros are dropped, so the result can hold fewer
/// than `k` entries.
pub fn top_k_sign(u: &[f64], k: usize) -> Result<SparseSignVector> {
    let (support, _) = top_k_select(u, k)?;
    Ok(signs_on(u, &support))
}

/// `sgn(RandK(u))`: `k` coordinates drawn uniformly without replacement.
pub fn rand_k_sign<R: Rng + ?Sized>(u: &[f64], k: usize, rng: &mut R) -> Result<SparseSignVector> {
    let n = u.len();
    if k > n {
        return Err(Error::invalid(format!("K = {k} exceeds dimension {n}")));
    }
    let mut support = rand::seq::index::sample(rng, n, k).into_vec();
    support.sort_unstable();
    Ok(signs_on(u, &support))
}

/// Result of one error-compensated compression step.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackStep {
    pub msg: SparseSignVector,
    pub e_next: ErrorMemory,
    /// The compensated gradient `g_tilde + eta * e`.
    pub g: Gradient,
}

fn compensate(g_tilde: &Gradient, e: &ErrorMemory, eta: f64) -> Result<Vec<f64>> {
    check_dims("error memory", g_tilde.len(), e.len())?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be finite and >= 0, got {eta}")));
    }
    Ok(g_tilde
        .as_slice()
        .iter()
        .zip(&e.values)
        .map(|(g, e)| g + eta * e)
        .collect())
}

fn residual(mut g: Vec<f64>, support: &[usize]) -> Vec<f64> {
    for &i in support {
        g[i] = 0.0;
    }
    g
}

/// `g = g_tilde + eta * e`, `msg = TopKSign(g)`, `e_next = g - TopK(g)`.
pub fn error_feedback_step(g_tilde: &Gradient, e: &ErrorMemory, eta: f64, k: usize) -> Result<FeedbackStep> {
    let g = compensate(g_tilde, e, eta)?;
    let (support, _) = top_k_select(&g, k)?;
    let msg = signs_on(&g, &support);
    let e_next = ErrorMemory {
        values: residual(g.clone(), &support),
    };
    Ok(FeedbackStep {
        msg,
        e_next,
        g: Gradient::from_raw(g),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    /// Reference: full sort by (|u| desc, index asc), take the first k.
    fn sort_oracle(u: &[f64], k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..u.len()).collect();
        idx.sort_by(|&a, &b| u[b].abs().partial_cmp(&u[a].abs()).unwrap().then(a.cmp(&b)));
        let mut top = idx[..k].to_vec();
        top.sort_unstable();
        top
    }

    fn grad(v: &[f64]) -> Gradient {
        Gradient::new(v.to_vec()).unwrap()
    }

    #[test]
    fn top_k_select_examples() {
        assert_eq!(top_k_select(&[3.0, -0.3, -0.03], 1).unwrap().0, vec![0]);
        assert_eq!(top_k_select(&[1.0, -1.0, 2.0, -2.0], 2).unwrap().0, vec![2, 3]);
        assert_eq!(top_k_select(&[1.0, 1.0, 1.0], 1).unwrap().0, vec![0]);
        assert_eq!(top_k_select(&[0.5, -4.0, 2.0], 3).unwrap().0, vec![0, 1, 2]);
        assert!(top_k_select(&[1.0], 2).is_err());
    }

    #[test]
    fn threshold_report_lies_between_kth_and_next() {
        let (_, r) = top_k_select(&[5.0, -1.0, 3.0, 0.5], 2).unwrap();
        assert_eq!((r.kth_mag, r.kplus1_mag, r.rho), (3.0, 1.0, 2.0));
        let (_, r) = top_k_select(&[5.0, -1.0], 2).unwrap();
        assert_eq!(r.rho, 1.0);
        let (s, r) = top_k_select(&[5.0, -1.0], 0).unwrap();
        assert!(s.is_empty() && r.rho.is_infinite());
    }

    #[test]
    fn top_k_sign_examples() {
        let v = top_k_sign(&[3.0, -0.3, -0.03], 1).unwrap();
        assert_eq!(v.entries(), &[(0, Sign::Pos)]);
        assert!(top_k_sign(&[0.0, 0.0, 0.0], 2).unwrap().is_empty());
        let v = top_k_sign(&[-5.0, 4.0, -3.0, 2.0, 1.0], 3).unwrap();
        assert_eq!(v.entries(), &[(0, Sign::Neg), (1, Sign::Pos), (2, Sign::Neg)]);
    }

    #[test]
    fn rand_k_sign_edges_and_marginal() {
        let u = [1.0, -2.0, 0.0, 4.0];
        let full = rand_k_sign(&u, 4, &mut stream(0)).unwrap();
        assert_eq!(full, top_k_sign(&u, 4).unwrap());
        assert!(rand_k_sign(&u, 0, &mut stream(0)).unwrap().is_empty());
        assert!(rand_k_sign(&u, 5, &mut stream(0)).is_err());

        let trials = 100_000;
        let mut counts = [0usize; 4];
        let mut rng = stream(17);
        let dense = [1.0, 1.0, 1.0, 1.0];
        for _ in 0..trials {
            for &(i, _) in rand_k_sign(&dense, 2, &mut rng).unwrap().entries() {
                counts[i] += 1;
            }
        }
        let sd = (trials as f64 * 0.25).sqrt();
        for c in counts {
            assert!((c as f64 - 0.5 * trials as f64).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn feedback_step_examples() {
        let step = error_feedback_step(&grad(&[2.0, -1.0]), &ErrorMemory::from_vec(vec![1.0, 0.0]).unwrap(), 1.0, 1).unwrap();
        assert_eq!(step.g.as_slice(), &[3.0, -1.0]);
        assert_eq!(step.msg.entries(), &[(0, Sign::Pos)]);
        assert_eq!(step.e_next.values(), &[0.0, -1.0]);

        let e = ErrorMemory::from_vec(vec![7.0, -9.0]).unwrap();
        let step = error_feedback_step(&grad(&[2.0, -1.0]), &e, 0.0, 1).unwrap();
        assert_eq!(step.g.as_slice(), &[2.0, -1.0]);
        assert_eq!(step.e_next.values(), &[0.0, -1.0]);

        let step = error_feedback_step(&grad(&[2.0, -1.0, 0.5]), &ErrorMemory::new(3), 1.0, 3).unwrap();
        assert_eq!(step.e_next.values(), &[0.0, 0.0, 0.0]);
        assert!(error_feedback_step(&grad(&[1.0]), &ErrorMemory::new(2), 1.0, 1).is_err());
    }

    #[test]
    fn in_place_step_matches_pure_step() {
        let mut mem = ErrorMemory::from_vec(vec![0.5, -0.25, 2.0]).unwrap();
        let g = grad(&[1.0, -3.0, 0.1]);
        let pure = error_feedback_step(&g, &mem, 0.7, 2).unwrap();
        let msg = mem.step(&g, 0.7, 2).unwrap();
        assert_eq!(msg, pure.msg);
        assert_eq!(mem, pure.e_next);
    }

    fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 1..max_len)
    }

    proptest! {
        #[test]
        fn selection_matches_sort_oracle(u in prop::collection::vec(-4i32..4, 1..40), kf in 0.0f64..=1.0) {
            // small integer range forces plenty of ties
            let u: Vec<f64> = u.into_iter().map(f64::from).collect();
            let k = (kf * u.len() as f64).floor() as usize;
            prop_assert_eq!(top_k_select(&u, k).unwrap().0, sort_oracle(&u, k));
        }

        #[test]
        fn mass_conservation(g in finite_vec(50), e_seed in finite_vec(50), eta in 0.0f64..2.0, kf in 0.0f64..=1.0) {
            let n = g.len();
            let e: Vec<f64> = (0..n).map(|i| e_seed[i % e_seed.len()]).collect();
            let k = (kf * n as f64).floor() as usize;
            let step = error_feedback_step(&grad(&g), &ErrorMemory::from_vec(e).unwrap(), eta, k).unwrap();
            let (support, _) = top_k_select(step.g.as_slice(), k).unwrap();
            let mut topk = vec![0.0; n];
            for &i in &support { topk[i] = step.g.as_slice()[i]; }
            for ((t, e), g) in topk.iter().zip(step.e_next.values()).zip(step.g.as_slice()) {
                prop_assert_eq!(t + e, *g);
            }
            prop_assert!(step.msg.len() <= k);
            if k > 0 && top_k_select(step.g.as_slice(), k).unwrap().1.kth_mag > 0.0 {
                prop_assert_eq!(step.msg.len(), k);
            }
        }

        #[test]
        fn permutation_equivariance(u in prop::collection::hash_set(-1000i32..1000, 1..30), kf in 0.0f64..=1.0, seed in any::<u64>()) {
            // distinct integers, then distinct magnitudes by offsetting
            let u: Vec<f64> = u.into_iter().map(|v| f64::from(v) + 0.25).collect();
            let n = u.len();
            let k = (kf * n as f64).floor() as usize;
            let mut perm: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            perm.shuffle(&mut stream(seed));
            let permuted: Vec<f64> = perm.iter().map(|&p| u[p]).collect();
            let base = top_k_sign(&u, k).unwrap().to_dense();
            let moved = top_k_sign(&permuted, k).unwrap().to_dense();
            let expect: Vec<i8> = perm.iter().map(|&p| base[p]).collect();
            prop_assert_eq!(moved, expect);
        }

        #[test]
        fn sign_scale_invariance(u in prop::collection::hash_set(-1000i32..1000, 1..30), c in 0.001f64..1000.0, kf in 0.0f64..=1.0) {
            let u: Vec<f64> = u.into_iter().map(|v| f64::from(v) + 0.25).collect();
            let k = (kf * u.len() as f64).floor() as usize;
            let scaled: Vec<f64> = u.iter().map(|v| c * v).collect();
            prop_assert_eq!(top_k_sign(&u, k).unwrap(), top_k_sign(&scaled, k).unwrap());
        }
    }
}
