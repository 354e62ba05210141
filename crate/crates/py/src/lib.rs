//! Python bindings: compression, voting, the wire codec, cost accounting,
//! the bound evaluators and the simulator.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use s3gd_core::algorithm::Algorithm;
use s3gd_core::compression::{self, Sign, SparseSignVector};
use s3gd_core::models::Gradient;
use s3gd_core::sim::ExperimentConfig;
use s3gd_core::{aggregation, codec, ledger, theory, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::InvalidState(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Entries = Vec<(usize, i8)>;

fn to_entries(v: &SparseSignVector) -> Entries {
    v.entries().iter().map(|&(i, s)| (i, s.value())).collect()
}

fn from_entries(n: usize, entries: Entries) -> PyResult<SparseSignVector> {
    let entries = entries
        .into_iter()
        .map(|(i, s)| {
            Sign::from_i8(s)
                .map(|s| (i, s))
                .ok_or_else(|| PyValueError::new_err(format!("sign at index {i} must be +1 or -1, got {s}")))
        })
        .collect::<PyResult<_>>()?;
    SparseSignVector::new(n, entries).map_err(py_err)
}

fn gradient(values: Vec<f64>) -> PyResult<Gradient> {
    Gradient::new(values).map_err(py_err)
}

/// Indices of the K largest magnitudes (ascending) and the threshold rho.
#[pyfunction]
fn top_k_select(u: Vec<f64>, k: usize) -> PyResult<(Vec<usize>, f64)> {
    let (support, report) = compression::top_k_select(&u, k).map_err(py_err)?;
    Ok((support, report.rho))
}

/// Signs of the K largest magnitudes as `[(index, ±1)]`.
#[pyfunction]
fn top_k_sign(u: Vec<f64>, k: usize) -> PyResult<Entries> {
    compression::top_k_sign(&u, k).map(|v| to_entries(&v)).map_err(py_err)
}

/// Signs of K uniformly drawn coordinates.
#[pyfunction]
fn rand_k_sign(u: Vec<f64>, k: usize, seed: u64) -> PyResult<Entries> {
    let mut rng = s3gd_core::rng::stream(seed);
    compression::rand_k_sign(&u, k, &mut rng).map(|v| to_entries(&v)).map_err(py_err)
}

/// Returns `(message, e_next, g)` for `g = g_tilde + eta * e`.
#[pyfunction]
fn error_feedback_step(g_tilde: Vec<f64>, e: Vec<f64>, eta: f64, k: usize) -> PyResult<(Entries, Vec<f64>, Vec<f64>)> {
    let memory = compression::ErrorMemory::from_vec(e).map_err(py_err)?;
    let step = compression::error_feedback_step(&gradient(g_tilde)?, &memory, eta, k).map_err(py_err)?;
    Ok((to_entries(&step.msg), step.e_next.values().to_vec(), step.g.into_vec()))
}

/// Per-worker error-compensation memory.
#[pyclass(name = "ErrorMemory")]
struct PyErrorMemory {
    inner: compression::ErrorMemory,
}

#[pymethods]
impl PyErrorMemory {
    #[new]
    fn new(n: usize) -> Self {
        Self {
            inner: compression::ErrorMemory::new(n),
        }
    }

    /// Compresses `g_tilde + eta * e` to its top-K signs and keeps the rest.
    fn step(&mut self, g_tilde: Vec<f64>, eta: f64, k: usize) -> PyResult<Entries> {
        let msg = self.inner.step(&gradient(g_tilde)?, eta, k).map_err(py_err)?;
        Ok(to_entries(&msg))
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Majority vote over sparse sign messages: `(ternary, union_support, tallies)`.
#[pyfunction]
fn majority_vote(msgs: Vec<Entries>, n: usize) -> PyResult<(Vec<i8>, Vec<usize>, Vec<i32>)> {
    let msgs = msgs.into_iter().map(|m| from_entries(n, m)).collect::<PyResult<Vec<_>>>()?;
    let vote = aggregation::majority_vote(&msgs, n).map_err(py_err)?;
    Ok((vote.ternary, vote.union_support, vote.tallies))
}

/// Encodes a sparse sign vector; returns `(bytes, bit_len)`.
#[pyfunction]
fn encode_sparse_sign(n: usize, entries: Entries) -> PyResult<(Vec<u8>, usize)> {
    let b = codec::encode_sparse_sign(&from_entries(n, entries)?);
    Ok((b.as_bytes().to_vec(), b.bit_len()))
}

#[pyfunction]
fn decode_sparse_sign(data: Vec<u8>, bit_len: usize, n: usize) -> PyResult<Entries> {
    let b = codec::Bitstream::from_parts(data, bit_len).map_err(py_err)?;
    codec::decode_sparse_sign(&b, n).map(|v| to_entries(&v)).map_err(py_err)
}

/// Closed-form total bits over `T` rounds for an algorithm name such as
/// `"S3GD_MV"`.
#[pyfunction]
fn total_cost_bits(algorithm: &str, m: usize, n: usize, k: usize, t: usize) -> PyResult<f64> {
    let alg: Algorithm = algorithm.parse().map_err(py_err)?;
    ledger::total_cost_bits(alg, m, n, k, t, None).map(|c| c.table).map_err(py_err)
}

#[pyfunction]
fn alpha(m: usize, gamma: f64) -> PyResult<f64> {
    theory::alpha(m, gamma).map_err(py_err)
}

#[pyfunction]
fn beta(m: usize, gamma: f64) -> PyResult<f64> {
    theory::beta(m, gamma).map_err(py_err)
}

#[pyfunction]
fn vote_error_bound(p: f64, u: usize) -> PyResult<f64> {
    theory::vote_error_bound(p, u).map_err(py_err)
}

#[pyfunction]
fn vote_error_exact(p: f64, u: usize) -> PyResult<f64> {
    theory::vote_error_exact(p, u).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (sigma_n, g_bar_abs, batch, gamma, epsilon=0.0))]
fn sign_flip_bound(sigma_n: f64, g_bar_abs: f64, batch: usize, gamma: f64, epsilon: f64) -> PyResult<f64> {
    theory::sign_flip_bound(sigma_n, g_bar_abs, batch, gamma, epsilon).map_err(py_err)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (m, gamma, l1_norm, sigma1_norm, f0_minus_fstar, t, epsilon=0.0))]
fn convergence_bound_topk(
    m: usize,
    gamma: f64,
    l1_norm: f64,
    sigma1_norm: f64,
    f0_minus_fstar: f64,
    t: usize,
    epsilon: f64,
) -> PyResult<f64> {
    theory::convergence_bound_topk(&theory::BoundInputs {
        workers: m,
        gamma,
        epsilon,
        l1_norm,
        sigma1_norm,
        f0_minus_fstar,
        rounds: t,
    })
    .map_err(py_err)
}

#[pyfunction]
fn gamma_star(m: usize, epsilon: f64, f0_minus_fstar: f64, l1_norm: f64, sigma1_norm: f64) -> PyResult<f64> {
    theory::gamma_star(&theory::SparsityInputs {
        workers: m,
        epsilon,
        f0_minus_fstar,
        l1_norm,
        sigma1_norm,
    })
    .map_err(py_err)
}

/// Evaluates any bound by name; parameters and result are JSON strings.
#[pyfunction]
fn theory_eval(bound: &str, params_json: &str) -> PyResult<String> {
    let params: serde_json::Value =
        serde_json::from_str(params_json).map_err(|e| PyValueError::new_err(format!("params: {e}")))?;
    let v = theory::eval_json(bound, &params).map_err(py_err)?;
    Ok(v.to_string())
}

/// Runs an experiment from a JSON config. Returns JSON with `rounds`,
/// `final`, `N`, `K`, `learning_rate` and `cumulative_bits`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json_str(config_json).map_err(py_err)?;
    let out = py.detach(|| s3gd_core::sim::run_experiment(&cfg)).map_err(py_err)?;
    let v = serde_json::json!({
        "rounds": out.rounds,
        "final": out.final_metrics,
        "N": out.n,
        "K": out.k,
        "learning_rate": out.learning_rate,
        "cumulative_bits": out.cumulative_bits(),
    });
    Ok(v.to_string())
}

#[pymodule]
fn s3gd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyErrorMemory>()?;
    m.add_function(wrap_pyfunction!(top_k_select, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_sign, m)?)?;
    m.add_function(wrap_pyfunction!(rand_k_sign, m)?)?;
    m.add_function(wrap_pyfunction!(error_feedback_step, m)?)?;
    m.add_function(wrap_pyfunction!(majority_vote, m)?)?;
    m.add_function(wrap_pyfunction!(encode_sparse_sign, m)?)?;
    m.add_function(wrap_pyfunction!(decode_sparse_sign, m)?)?;
    m.add_function(wrap_pyfunction!(total_cost_bits, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(beta, m)?)?;
    m.add_function(wrap_pyfunction!(vote_error_bound, m)?)?;
    m.add_function(wrap_pyfunction!(vote_error_exact, m)?)?;
    m.add_function(wrap_pyfunction!(sign_flip_bound, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_bound_topk, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_star, m)?)?;
    m.add_function(wrap_pyfunction!(theory_eval, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
