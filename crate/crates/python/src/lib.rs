//! Python bindings. Information quantities are in nats, as in the core
//! crate; curve rows are in bits per letter.

use std::collections::HashMap;
use std::path::PathBuf;

use noisy_rd::bes::{self, BesParams, Family};
use noisy_rd::dispersion::{self, ThirdOrder};
use noisy_rd::model::{builtin_bes, load_model, parse_model, surrogate_from_noisy, Distribution, NoisySourceModel};
use noisy_rd::numerics::Rational;
use noisy_rd::oneshot::{
    self, achievability_random_coding, achievability_shannon_style, achievability_tilted, conditioned_kernel,
    BlockSpec, ConverseOptions, Reference, Sampling, TiltedParams,
};
use noisy_rd::rd_solver::{solve_distortion, SolverOptions};
use noisy_rd::Error;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

pyo3::create_exception!(noisy_rd_py, RefusedError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Refused(_) => RefusedError::new_err(e.to_string()),
        Error::NonConvergence { .. } | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn ok<T>(r: noisy_rd::Result<T>) -> PyResult<T> {
    r.map_err(to_py)
}

fn rational(s: &str) -> PyResult<Rational> {
    ok(s.parse::<Rational>())
}

/// A memoryless source observed through a noisy channel, with a
/// per-letter distortion measure.
#[pyclass(name = "Model", frozen)]
struct Model {
    inner: NoisySourceModel,
}

#[pymethods]
impl Model {
    /// Fair coin seen through an erasure channel.
    #[staticmethod]
    fn bes(delta: f64) -> PyResult<Self> {
        Ok(Model { inner: ok(builtin_bes(delta))? })
    }

    /// Reads a TOML model file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Model { inner: ok(load_model(path))? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Model { inner: ok(parse_model(text))? })
    }

    #[getter]
    fn n_source(&self) -> usize {
        self.inner.n_source()
    }

    #[getter]
    fn n_observation(&self) -> usize {
        self.inner.n_observation()
    }

    #[getter]
    fn n_reproduction(&self) -> usize {
        self.inner.n_reproduction()
    }

    fn observation_marginal(&self) -> Vec<f64> {
        self.inner.observation_marginal()
    }

    /// `(d_min, d_max)` of the surrogate problem.
    fn d_range(&self) -> PyResult<(f64, f64)> {
        let sur = ok(surrogate_from_noisy(&self.inner, true))?;
        Ok((sur.d_min(), sur.d_max()))
    }

    /// `(R(d), lambda*)` in nats.
    fn rate(&self, d: f64) -> PyResult<(f64, f64)> {
        let sur = ok(surrogate_from_noisy(&self.inner, true))?;
        let sol = ok(solve_distortion(&sur, d, &SolverOptions::default()))?;
        Ok((sol.rate, sol.lambda_star))
    }

    /// Rate, dispersions and the decomposition terms at level `d`.
    fn dispersion(&self, d: f64) -> PyResult<HashMap<&'static str, f64>> {
        let (_, _, r) = ok(dispersion::analyze(&self.inner, d, &SolverOptions::default()))?;
        Ok(HashMap::from([
            ("rate", r.rate),
            ("v", r.v_surrogate),
            ("vtilde", r.v_noisy),
            ("v_pair", r.v_pair),
            ("lambda_star", r.lambda_star),
            ("inner_variance", r.inner_variance_term),
            ("covariance", r.covariance_cross_term),
        ]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n_source={}, n_observation={}, n_reproduction={})",
            self.inner.n_source(),
            self.inner.n_observation(),
            self.inner.n_reproduction()
        )
    }
}

type Bracket = (Option<u64>, Option<u64>, f64, Option<f64>);

/// A `k`-letter block with threshold `d` (a string such as `"1/4"` or
/// `"0.1"`) and target `eps`. Bounds return `(value, std_error)`.
#[pyclass(name = "Block", frozen)]
struct Block {
    inner: BlockSpec,
}

#[pymethods]
impl Block {
    #[new]
    #[pyo3(signature = (model, k, d, eps, samples = 20000, seed = 0))]
    fn new(model: PyRef<'_, Model>, k: usize, d: &str, eps: f64, samples: usize, seed: u64) -> PyResult<Self> {
        let spec = ok(BlockSpec::new(model.inner.clone(), k, rational(d)?, eps))?;
        Ok(Block { inner: spec.with_sampling(Sampling { samples: samples.max(1), seed }) })
    }

    /// Lower bound on the excess-distortion probability of any code of
    /// size `m`.
    fn converse(&self, m: f64) -> PyResult<f64> {
        ok(oneshot::converse_bound(&self.inner, m, &ConverseOptions::default()))
    }

    /// Random-coding bound; the reference defaults to the tilted marginal.
    #[pyo3(signature = (m, reference = None))]
    fn random_coding(&self, m: f64, reference: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
        let q = match reference {
            Some(q) => ok(Distribution::new(q))?,
            None => ok(self.inner.tilted_solution())?.marginal,
        };
        let e = ok(achievability_random_coding(&self.inner, m, &Reference::Product(q)))?;
        Ok((e.value, e.std_error))
    }

    fn shannon_style(&self, m: f64, gamma: f64) -> PyResult<(f64, f64)> {
        let (w, _) = ok(self.inner.tilted_kernel())?;
        let e = ok(achievability_shannon_style(&self.inner, m, &w, gamma))?;
        Ok((e.value, e.std_error))
    }

    /// Conditional-type bound with `beta = sqrt(k)/b`, `delta = tau/k`.
    #[pyo3(signature = (m, b = 1.0, tau = None))]
    fn tilted(&self, m: f64, b: f64, tau: Option<f64>) -> PyResult<(f64, f64)> {
        let (w, sol) = ok(self.inner.tilted_kernel())?;
        let w = ok(conditioned_kernel(&self.inner.base, &w))?;
        let tau = tau.unwrap_or((self.inner.k as f64).sqrt());
        let p = ok(TiltedParams::asymptotic(self.inner.k, m, b, tau, sol.marginal))?;
        let e = ok(achievability_tilted(&self.inner, m, &w, &p))?;
        Ok((e.value, e.std_error))
    }

    /// `(m_converse, m_achievability, ln_m_converse, ln_m_achievability)`;
    /// the integers are `None` when too large or unbounded.
    fn bracket(&self) -> PyResult<Bracket> {
        let br = ok(oneshot::code_size_bracket(&self.inner))?;
        Ok((br.m_converse(), br.m_achievability(), br.ln_m_converse, br.ln_m_achievability))
    }
}

/// One blocklength of a rate-blocklength curve, in bits per letter.
#[pyclass(name = "CurveRow", frozen, get_all)]
struct CurveRow {
    k: u64,
    rate_rd: f64,
    noisy_converse: f64,
    noisy_achievability: Option<f64>,
    noisy_gaussian: f64,
    noisy_gaussian_logk: f64,
    surrogate_converse: f64,
    surrogate_achievability: Option<f64>,
    surrogate_gaussian: f64,
    surrogate_gaussian_logk: f64,
    note: Option<String>,
}

fn bes_params(delta: f64, d: f64, eps: f64) -> PyResult<BesParams> {
    ok(BesParams::from_f64(delta, d, eps))
}

fn ln_size(m: f64) -> PyResult<f64> {
    if m.is_nan() || m < 1.0 {
        return Err(PyValueError::new_err("m must be at least 1"));
    }
    Ok(m.ln())
}

fn family(noisy: bool) -> Family {
    if noisy {
        Family::Noisy
    } else {
        Family::Surrogate
    }
}

/// `R(d)` of the erased coin in nats.
#[pyfunction]
fn bes_rate(delta: f64, d: f64) -> PyResult<f64> {
    ok(bes::bes_rate(&bes_params(delta, d, 0.5)?))
}

#[pyfunction]
fn bes_lambda_star(delta: f64, d: f64) -> PyResult<f64> {
    ok(bes::bes_lambda_star(&bes_params(delta, d, 0.5)?))
}

/// `(vtilde, v)` in nats squared.
#[pyfunction]
fn bes_dispersions(delta: f64, d: f64) -> PyResult<(f64, f64)> {
    ok(bes::bes_dispersions(&bes_params(delta, d, 0.5)?))
}

#[pyfunction]
#[pyo3(signature = (k, m, delta, d, noisy = true))]
fn bes_converse(k: u64, m: f64, delta: f64, d: f64, noisy: bool) -> PyResult<f64> {
    let b = ok(bes::BesBounds::new(k, &bes_params(delta, d, 0.5)?, family(noisy)))?;
    Ok(b.converse_ln(ln_size(m)?))
}

#[pyfunction]
#[pyo3(signature = (k, m, delta, d, noisy = true))]
fn bes_achievability(k: u64, m: f64, delta: f64, d: f64, noisy: bool) -> PyResult<f64> {
    let b = ok(bes::BesBounds::new(k, &bes_params(delta, d, 0.5)?, family(noisy)))?;
    Ok(b.achievability_ln(ln_size(m)?))
}

/// Rate-blocklength curve; `ks` defaults to 40 log-spaced points in
/// `[10, 5000]`.
#[pyfunction]
#[pyo3(signature = (delta = 0.1, d = 0.1, eps = 0.1, ks = None))]
fn bes_curve(delta: f64, d: f64, eps: f64, ks: Option<Vec<u64>>) -> PyResult<Vec<CurveRow>> {
    let params = bes_params(delta, d, eps)?;
    let ks = ks.unwrap_or_else(bes::default_k_grid);
    let curve = ok(bes::bes_curve(&params, &ks))?;
    Ok(curve
        .rows
        .into_iter()
        .map(|r| CurveRow {
            k: r.k,
            rate_rd: r.rate_rd,
            noisy_converse: r.noisy_converse,
            noisy_achievability: r.noisy_achievability,
            noisy_gaussian: r.noisy_gaussian,
            noisy_gaussian_logk: r.noisy_gaussian_logk,
            surrogate_converse: r.surrogate_converse,
            surrogate_achievability: r.surrogate_achievability,
            surrogate_gaussian: r.surrogate_gaussian,
            surrogate_gaussian_logk: r.surrogate_gaussian_logk,
            note: r.note,
        })
        .collect())
}

/// `rate + sqrt(dispersion/k) Q^-1(eps)`, plus `ln k / (2k)` when
/// `log_term` is set.
#[pyfunction]
#[pyo3(signature = (k, eps, rate, dispersion, log_term = false))]
fn gaussian_approximation(k: u64, eps: f64, rate: f64, dispersion: f64, log_term: bool) -> PyResult<f64> {
    let t = if log_term { ThirdOrder::HalfLogOverK } else { ThirdOrder::None };
    ok(dispersion::gaussian_approximation(k, eps, rate, dispersion, t))
}

#[pymodule]
pub fn noisy_rd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Block>()?;
    m.add_class::<CurveRow>()?;
    m.add("RefusedError", m.py().get_type::<RefusedError>())?;
    m.add_function(wrap_pyfunction!(bes_rate, m)?)?;
    m.add_function(wrap_pyfunction!(bes_lambda_star, m)?)?;
    m.add_function(wrap_pyfunction!(bes_dispersions, m)?)?;
    m.add_function(wrap_pyfunction!(bes_converse, m)?)?;
    m.add_function(wrap_pyfunction!(bes_achievability, m)?)?;
    m.add_function(wrap_pyfunction!(bes_curve, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_approximation, m)?)?;
    Ok(())
}
