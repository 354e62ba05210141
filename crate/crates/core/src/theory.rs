//! Closed-form quantities from the convergence analysis: participation
//! statistics, sign-flip and vote-decoding error bounds, the non-convex
//! convergence bounds for TopK and RandK selection, and the optimal sparsity.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

fn check_prob(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
    }
    Ok(())
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

/// `ln C(n, u)` for `u = 0..=n`, built by the multiplicative recurrence.
fn ln_binomials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(acc);
    for u in 1..=n {
        acc += ((n - u + 1) as f64).ln() - (u as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial pmf terms `C(M,u) γ^u (1-γ)^(M-u)` for all `u`, in log space.
fn binomial_pmf_all(m: usize, gamma: f64) -> Vec<f64> {
    if gamma == 0.0 || gamma == 1.0 {
        let mut pmf = vec![0.0; m + 1];
        pmf[if gamma == 0.0 { 0 } else { m }] = 1.0;
        return pmf;
    }
    let (lg, lq) = (gamma.ln(), (1.0 - gamma).ln());
    ln_binomials(m)
        .into_iter()
        .enumerate()
        .map(|(u, lc)| (lc + u as f64 * lg + (m - u) as f64 * lq).exp())
        .collect()
}

/// Probability that at least one of `M` workers selects a coordinate:
/// `1 - (1-γ)^M`.
pub fn alpha(m: usize, gamma: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    check_gamma(gamma)?;
    Ok(1.0 - (1.0 - gamma).powi(m as i32))
}

/// `Σ_{u=1}^{M} u^{-1/2} C(M,u) γ^u (1-γ)^{M-u}`.
pub fn beta(m: usize, gamma: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid("M must be at least 1"));
    }
    check_gamma(gamma)?;
    Ok(binomial_pmf_all(m, gamma)
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(u, p)| p / (u as f64).sqrt())
        .sum())
}

/// `P[M_n = u]` for the number of workers voting on a coordinate,
/// `M_n ~ Binomial(M, γ)`.
pub fn m_participation_pmf(m: usize, gamma: f64, u: usize) -> Result<f64> {
    check_gamma(gamma)?;
    if u > m {
        return Err(Error::invalid(format!("u = {u} exceeds M = {m}")));
    }
    if gamma == 0.0 || gamma == 1.0 {
        return Ok(binomial_pmf_all(m, gamma)[u]);
    }
    let lc = ln_binomials(m)[u];
    Ok((lc + u as f64 * gamma.ln() + (m - u) as f64 * (1.0 - gamma).ln()).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmptyProb {
    /// `(1-γ)^M`
    pub exact: f64,
    /// `exp(-γM)`
    pub approx: f64,
}

/// Balls-and-bins probability that no worker selects a given coordinate.
pub fn empty_coordinate_prob(m: usize, gamma: f64) -> Result<EmptyProb> {
    check_gamma(gamma)?;
    Ok(EmptyProb {
        exact: (1.0 - gamma).powi(m as i32),
        approx: (-gamma * m as f64).exp(),
    })
}

/// Unclamped sign-flip bound `σ_n / (√B (1 + ε/√γ) |ḡ_n|)`.
pub fn sign_flip_bound_raw(sigma_n: f64, g_bar_abs: f64, batch: usize, gamma: f64, epsilon: f64) -> Result<f64> {
    check_nonneg("sigma_n", sigma_n)?;
    if !(g_bar_abs > 0.0 && g_bar_abs.is_finite()) {
        return Err(Error::invalid(
            "|g_bar| must be positive: the signal-to-noise ratio is undefined at zero",
        ));
    }
    if batch == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    check_nonneg("epsilon", epsilon)?;
    Ok(sigma_n / ((batch as f64).sqrt() * (1.0 + epsilon / gamma.sqrt()) * g_bar_abs))
}

/// Upper bound on the probability that a single worker's selected sign
/// disagrees with the true gradient sign, clamped to 1.
pub fn sign_flip_bound(sigma_n: f64, g_bar_abs: f64, batch: usize, gamma: f64, epsilon: f64) -> Result<f64> {
    sign_flip_bound_raw(sigma_n, g_bar_abs, batch, gamma, epsilon).map(|b| b.min(1.0))
}

fn check_vote_args(p: f64, u: usize) -> Result<()> {
    check_prob(p)?;
    if u == 0 {
        return Err(Error::invalid("U must be at least 1"));
    }
    Ok(())
}

/// Chernoff bound `[4p(1-p)]^{U/2}` on the majority-vote decoding error
/// among `U` voters with individual flip probability `p`.
pub fn vote_error_bound(p: f64, u: usize) -> Result<f64> {
    check_vote_args(p, u)?;
    Ok((4.0 * p * (1.0 - p)).powf(u as f64 / 2.0))
}

/// Exact decoding error `P[Z >= U/2]`, `Z ~ Binomial(U, p)`. Ties count as
/// errors: a zero vote fails to recover a nonzero true sign.
pub fn vote_error_exact(p: f64, u: usize) -> Result<f64> {
    check_vote_args(p, u)?;
    let start = u.div_ceil(2);
    Ok(binomial_pmf_all(u, p)[start..].iter().sum::<f64>().min(1.0))
}

/// Lower bound `(ε/√γ)|ḡ_n|` on the top-K selection threshold.
pub fn rho_lower_bound(gamma: f64, epsilon: f64, g_bar_abs: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Err(Error::invalid("gamma must be positive"));
    }
    check_nonneg("epsilon", epsilon)?;
    check_nonneg("|g_bar|", g_bar_abs)?;
    Ok(epsilon / gamma.sqrt() * g_bar_abs)
}

/// Problem constants entering the convergence bounds, evaluated at the
/// horizon-matched step size `1/√(T‖L‖₁)` and batch size `B = T`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    #[serde(rename = "M")]
    pub workers: usize,
    pub gamma: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(rename = "L1_norm")]
    pub l1_norm: f64,
    pub sigma1_norm: f64,
    pub f0_minus_fstar: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        if self.workers == 0 || self.rounds == 0 {
            return Err(Error::invalid("M and T must be at least 1"));
        }
        check_gamma(self.gamma)?;
        if self.gamma == 0.0 {
            return Err(Error::invalid("gamma must be positive (alpha would vanish)"));
        }
        check_nonneg("epsilon", self.epsilon)?;
        check_positive("L1_norm", self.l1_norm)?;
        check_nonneg("sigma1_norm", self.sigma1_norm)?;
        check_nonneg("f0_minus_fstar", self.f0_minus_fstar)?;
        Ok(())
    }

    /// `(1/√T) √‖L‖₁ ((f⁰-f*)/α + ½)`, shared by both bounds.
    fn descent_term(&self, alpha: f64) -> f64 {
        self.l1_norm.sqrt() * (self.f0_minus_fstar / alpha + 0.5) / (self.rounds as f64).sqrt()
    }
}

/// Bound on `E[(1/T) Σ_t ‖ḡ^t‖₁]` with TopK selection:
/// `(1/√T)[√‖L‖₁((f⁰-f*)/α + ½) + (β/α)(2/(1+ε/√γ))‖σ‖₁]`.
pub fn convergence_bound_topk(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let a = alpha(inp.workers, inp.gamma)?;
    let b = beta(inp.workers, inp.gamma)?;
    let shrink = 2.0 / (1.0 + inp.epsilon / inp.gamma.sqrt());
    Ok(inp.descent_term(a) + b / a * shrink * inp.sigma1_norm / (inp.rounds as f64).sqrt())
}

/// Same bound with RandK selection, which loses the `1/(1+ε/√γ)` factor.
pub fn convergence_bound_randk(inp: &BoundInputs) -> Result<f64> {
    inp.validate()?;
    let a = alpha(inp.workers, inp.gamma)?;
    let b = beta(inp.workers, inp.gamma)?;
    Ok(inp.descent_term(a) + 2.0 * b / a * inp.sigma1_norm / (inp.rounds as f64).sqrt())
}

/// Inputs of the optimal-sparsity formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityInputs {
    #[serde(rename = "M")]
    pub workers: usize,
    pub epsilon: f64,
    pub f0_minus_fstar: f64,
    #[serde(rename = "L1_norm")]
    pub l1_norm: f64,
    pub sigma1_norm: f64,
}

impl SparsityInputs {
    fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::invalid("M must be at least 1"));
        }
        check_positive("epsilon", self.epsilon)?;
        check_positive("f0_minus_fstar", self.f0_minus_fstar)?;
        check_positive("L1_norm", self.l1_norm)?;
        check_positive("sigma1_norm", self.sigma1_norm)?;
        Ok(())
    }
}

/// Small-γ surrogate of the TopK bound, using `α ≈ Mγ` and
/// `2/(1+ε/√γ) ≈ 2√γ/ε`:
/// `h(γ) = (1/√T)((f⁰-f*)√‖L‖₁/(Mγ) + 2√γ‖σ‖₁/ε)`.
pub fn small_gamma_surrogate(inp: &SparsityInputs, gamma: f64, rounds: usize) -> Result<f64> {
    inp.validate()?;
    check_positive("gamma", gamma)?;
    if rounds == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    let descent = inp.f0_minus_fstar * inp.l1_norm.sqrt() / (inp.workers as f64 * gamma);
    let noise = 2.0 * gamma.sqrt() * inp.sigma1_norm / inp.epsilon;
    Ok((descent + noise) / (rounds as f64).sqrt())
}

/// `γ* = (ε(f⁰-f*)/M · √‖L‖₁/‖σ‖₁)^{2/3}`, the stationary point of
/// [`small_gamma_surrogate`].
pub fn gamma_star(inp: &SparsityInputs) -> Result<f64> {
    inp.validate()?;
    let base = inp.epsilon * inp.f0_minus_fstar / inp.workers as f64 * inp.l1_norm.sqrt() / inp.sigma1_norm;
    Ok(base.powf(2.0 / 3.0))
}

/// Numerical confirmation that `γ*` minimizes the surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaStarCheck {
    pub gamma_star: f64,
    /// Minimizer of `h` over the log grid.
    pub grid_argmin: f64,
    /// Grid cells between `grid_argmin` and `γ*`.
    pub cells_from_argmin: f64,
    /// Second difference of `h` at `γ*` (positive means locally convex).
    pub second_difference: f64,
}

/// Evaluates `h` on `points` log-spaced values over `[γ*/10, 10γ*]` and a
/// centered second difference at `γ*`.
pub fn check_gamma_star(inp: &SparsityInputs, points: usize) -> Result<GammaStarCheck> {
    if points < 3 {
        return Err(Error::invalid("need at least 3 grid points"));
    }
    let gs = gamma_star(inp)?;
    let (lo, hi) = ((gs / 10.0).ln(), (gs * 10.0).ln());
    let step = (hi - lo) / (points - 1) as f64;
    let mut best = (f64::INFINITY, gs);
    for i in 0..points {
        let g = (lo + step * i as f64).exp();
        let h = small_gamma_surrogate(inp, g, 1)?;
        if h < best.0 {
            best = (h, g);
        }
    }
    let d = gs * 1e-3;
    let second = small_gamma_surrogate(inp, gs + d, 1)? - 2.0 * small_gamma_surrogate(inp, gs, 1)?
        + small_gamma_surrogate(inp, gs - d, 1)?;
    Ok(GammaStarCheck {
        gamma_star: gs,
        grid_argmin: best.1,
        cells_from_argmin: (best.1.ln() - gs.ln()).abs() / step,
        second_difference: second,
    })
}

/// Names accepted by [`eval_json`].
pub const BOUND_NAMES: [&str; 12] = [
    "alpha",
    "beta",
    "m_participation_pmf",
    "empty_coordinate_prob",
    "sign_flip_bound",
    "vote_error_bound",
    "vote_error_exact",
    "rho_lower_bound",
    "convergence_bound_topk",
    "convergence_bound_randk",
    "gamma_star",
    "small_gamma_surrogate",
];

fn field<T: serde::de::DeserializeOwned>(params: &Value, key: &str) -> Result<T> {
    let v = params
        .get(key)
        .ok_or_else(|| Error::invalid(format!("missing parameter '{key}'")))?;
    serde_json::from_value(v.clone())
        .map_err(|e| Error::invalid(format!("parameter '{key}': {e}")))
}

fn field_or<T: serde::de::DeserializeOwned>(params: &Value, key: &str, default: T) -> Result<T> {
    if params.get(key).is_some() {
        field(params, key)
    } else {
        Ok(default)
    }
}

/// Evaluates the bound `name` with parameters given as a JSON object and
/// returns `{"bound": name, "params": ..., "value": ...}`.
///
/// Parameter keys: `M`, `gamma`, `u`, `p`, `U`, `epsilon`, `sigma_n`,
/// `g_bar_abs`, `B`, `L1_norm`, `sigma1_norm`, `f0_minus_fstar`, `T`.
pub fn eval_json(name: &str, params: &Value) -> Result<Value> {
    let value = match name {
        "alpha" => json!(alpha(field(params, "M")?, field(params, "gamma")?)?),
        "beta" => json!(beta(field(params, "M")?, field(params, "gamma")?)?),
        "m_participation_pmf" => json!(m_participation_pmf(
            field(params, "M")?,
            field(params, "gamma")?,
            field(params, "u")?
        )?),
        "empty_coordinate_prob" => {
            serde_json::to_value(empty_coordinate_prob(field(params, "M")?, field(params, "gamma")?)?)?
        }
        "sign_flip_bound" => json!(sign_flip_bound(
            field(params, "sigma_n")?,
            field(params, "g_bar_abs")?,
            field_or(params, "B", 1)?,
            field_or(params, "gamma", 1.0)?,
            field_or(params, "epsilon", 0.0)?
        )?),
        "vote_error_bound" => json!(vote_error_bound(field(params, "p")?, field(params, "U")?)?),
        "vote_error_exact" => json!(vote_error_exact(field(params, "p")?, field(params, "U")?)?),
        "rho_lower_bound" => json!(rho_lower_bound(
            field(params, "gamma")?,
            field(params, "epsilon")?,
            field(params, "g_bar_abs")?
        )?),
        "convergence_bound_topk" => {
            let inp: BoundInputs = serde_json::from_value(params.clone())?;
            json!(convergence_bound_topk(&inp)?)
        }
        "convergence_bound_randk" => {
            let inp: BoundInputs = serde_json::from_value(params.clone())?;
            json!(convergence_bound_randk(&inp)?)
        }
        "gamma_star" => {
            let inp: SparsityInputs = serde_json::from_value(params.clone())?;
            serde_json::to_value(check_gamma_star(&inp, 200)?)?
        }
        "small_gamma_surrogate" => {
            let inp: SparsityInputs = serde_json::from_value(params.clone())?;
            json!(small_gamma_surrogate(&inp, field(params, "gamma")?, field_or(params, "T", 1)?)?)
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown bound '{other}' (expected one of {})",
                BOUND_NAMES.join(", ")
            )))
        }
    };
    Ok(json!({ "bound": name, "params": params, "value": value }))
}
