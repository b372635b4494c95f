//! Python bindings for the distributed HMM filtering library.
//!
//! Exposes the transition/likelihood/network building blocks, the
//! filtering algorithms, and the Monte Carlo estimators as a
//! `diffusion_hmm` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use diffusion_hmm::analysis::{
    self, disagreement_counterexample, estimate_error_prob, estimate_risks, simulate_trace,
    asymptotic_risk_bounds,
};
use diffusion_hmm::filters;
use diffusion_hmm::likelihood;
use diffusion_hmm::markov;
use diffusion_hmm::network;

fn err(e: diffusion_hmm::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Finite-state Markov transition model.
#[pyclass(name = "TransitionModel", from_py_object)]
#[derive(Clone)]
struct PyTransitionModel {
    inner: markov::TransitionModel,
}

#[pymethods]
impl PyTransitionModel {
    /// Binary symmetric channel with flip probability `alpha`.
    #[staticmethod]
    fn bsc(alpha: f64) -> PyResult<Self> {
        Ok(Self {
            inner: markov::TransitionModel::bsc(alpha).map_err(err)?,
        })
    }

    /// Arbitrary chain from row-stochastic rows `rows[prev][next]`.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: markov::TransitionModel::from_row_stochastic(rows).map_err(err)?,
        })
    }

    #[getter]
    fn hypothesis_count(&self) -> usize {
        self.inner.hypothesis_count()
    }

    /// Dobrushin ergodicity coefficient.
    #[getter]
    fn kappa(&self) -> f64 {
        markov::dobrushin_coefficient(&self.inner)
    }

    /// Stationary distribution of the chain.
    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(markov::perron_vector(&self.inner)
            .map_err(err)?
            .probs()
            .to_vec())
    }
}

/// Per-agent observation model.
#[pyclass(name = "LikelihoodModel", from_py_object)]
#[derive(Clone)]
struct PyLikelihoodModel {
    inner: likelihood::LikelihoodModel,
}

#[pymethods]
impl PyLikelihoodModel {
    #[staticmethod]
    fn gaussian(means: Vec<f64>, sigma: f64) -> PyResult<Self> {
        Ok(Self {
            inner: likelihood::LikelihoodModel::gaussian(means, sigma).map_err(err)?,
        })
    }

    #[staticmethod]
    fn truncated_gaussian(
        means: Vec<f64>,
        sigma: f64,
        lower: f64,
        upper: f64,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: likelihood::LikelihoodModel::truncated_gaussian(means, sigma, lower, upper)
                .map_err(err)?,
        })
    }

    #[staticmethod]
    fn categorical(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: likelihood::LikelihoodModel::categorical(rows).map_err(err)?,
        })
    }

    /// Log-likelihood of observation `x` under hypothesis `theta`.
    fn log_likelihood(&self, theta: usize, x: f64) -> PyResult<f64> {
        self.inner.log_likelihood(x, theta).map_err(err)
    }
}

/// Undirected network with a doubly-stochastic combination matrix.
#[pyclass(name = "Network", from_py_object)]
#[derive(Clone)]
struct PyNetwork {
    inner: network::CombinationMatrix,
}

#[pymethods]
impl PyNetwork {
    /// Metropolis weights over an undirected edge list (self-loops
    /// implied); `agents` fixes the node count.
    #[staticmethod]
    fn metropolis(agents: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let mut graph = network::Graph::new(agents).map_err(err)?;
        for (u, v) in edges {
            graph.add_edge(u, v).map_err(err)?;
        }
        Ok(Self {
            inner: network::metropolis_weights(&graph).map_err(err)?,
        })
    }

    /// Uniform averaging over the complete graph.
    #[staticmethod]
    fn complete(agents: usize) -> PyResult<Self> {
        Ok(Self {
            inner: network::CombinationMatrix::uniform(agents).map_err(err)?,
        })
    }

    /// Explicit doubly-stochastic combination matrix rows.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: network::CombinationMatrix::from_rows(rows).map_err(err)?,
        })
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agent_count()
    }

    /// Second-largest singular value (network mixing rate).
    #[getter]
    fn rho2(&self) -> PyResult<f64> {
        Ok(network::spectral_stats(&self.inner, 1.0).map_err(err)?.rho2)
    }

    fn weight(&self, l: usize, k: usize) -> f64 {
        self.inner.weight(l, k)
    }
}

fn parse_algorithm(name: &str, gamma: Option<f64>, delta: Option<f64>) -> PyResult<filters::Algorithm> {
    let need_gamma = || {
        gamma.ok_or_else(|| PyValueError::new_err(format!("algorithm `{name}` requires gamma")))
    };
    let algorithm = match name {
        "centralized" => filters::Algorithm::Centralized,
        "dhs" => filters::Algorithm::Dhs { gamma: need_gamma()? },
        "diffusion-aa" => filters::Algorithm::DiffusionAa { gamma: need_gamma()? },
        "consensus-ga" => filters::Algorithm::ConsensusGa { gamma: need_gamma()? },
        "asl" => {
            let delta = delta
                .ok_or_else(|| PyValueError::new_err("algorithm `asl` requires delta"))?;
            filters::Algorithm::Asl { delta }
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown algorithm `{other}`"
            )))
        }
    };
    algorithm.validate().map_err(err)?;
    Ok(algorithm)
}

/// A complete simulation scenario: transition, likelihoods, network.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: analysis::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Uniform priors everywhere; every agent shares `likelihood`.
    #[new]
    fn new(
        transition: PyTransitionModel,
        likelihood: PyLikelihoodModel,
        net: PyNetwork,
    ) -> PyResult<Self> {
        let agents = net.inner.agent_count();
        let likelihoods =
            likelihood::NetworkLikelihoods::homogeneous(likelihood.inner, agents)
                .map_err(err)?;
        Ok(Self {
            inner: analysis::Scenario::uniform_priors(
                transition.inner,
                likelihoods,
                net.inner,
            )
            .map_err(err)?,
        })
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agent_count()
    }

    /// One trajectory; returns `(theta, maps, errors, kl_cent)` where
    /// `theta[t]` is the state at step `t` (index 0 = initial state) and
    /// the other lists are per-step, per-agent.
    #[pyo3(signature = (algorithm, horizon, seed, run=0, gamma=None, delta=None))]
    fn simulate(
        &self,
        algorithm: &str,
        horizon: usize,
        seed: u64,
        run: u64,
        gamma: Option<f64>,
        delta: Option<f64>,
    ) -> PyResult<(Vec<usize>, Vec<Vec<usize>>, Vec<Vec<bool>>, Vec<Vec<f64>>)> {
        let algorithm = parse_algorithm(algorithm, gamma, delta)?;
        let trace =
            simulate_trace(&self.inner, algorithm, horizon, seed, run, false).map_err(err)?;
        Ok((trace.theta, trace.maps, trace.errors, trace.kl_posterior))
    }

    /// Monte Carlo posterior-risk series: `risks[step][agent]`.
    #[pyo3(signature = (algorithm, runs, horizon, seed, gamma=None, delta=None))]
    fn risks(
        &self,
        algorithm: &str,
        runs: usize,
        horizon: usize,
        seed: u64,
        gamma: Option<f64>,
        delta: Option<f64>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let algorithm = parse_algorithm(algorithm, gamma, delta)?;
        let series =
            estimate_risks(&self.inner, algorithm, runs, horizon, seed).map_err(err)?;
        Ok(series.posterior)
    }

    /// Monte Carlo error-probability series: `p[step][agent]`.
    #[pyo3(signature = (algorithm, runs, horizon, seed, gamma=None, delta=None))]
    fn error_probabilities(
        &self,
        algorithm: &str,
        runs: usize,
        horizon: usize,
        seed: u64,
        gamma: Option<f64>,
        delta: Option<f64>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let algorithm = parse_algorithm(algorithm, gamma, delta)?;
        let series =
            estimate_error_prob(&self.inner, algorithm, runs, horizon, seed).map_err(err)?;
        Ok((0..horizon)
            .map(|t| {
                (0..self.inner.agent_count())
                    .map(|k| series.probability(t, k))
                    .collect()
            })
            .collect())
    }

    /// Asymptotic risk bound `(posterior_bound, prior_bound)` for the
    /// diffusion strategy with scaling `gamma`.
    fn risk_bounds(&self, gamma: f64) -> PyResult<(f64, f64)> {
        let c_l = self.inner.likelihoods.log_likelihood_bound().map_err(err)?;
        let b = asymptotic_risk_bounds(&self.inner.transition, &self.inner.combine, gamma, c_l)
            .map_err(err)?;
        Ok((b.posterior_bound, b.prior_bound))
    }
}

/// Runs the three-agent disagreement example; returns a dict of the
/// analytic and Monte Carlo quantities.
#[pyfunction]
#[pyo3(signature = (runs=30_000, seed=41))]
fn counterexample(
    py: Python<'_>,
    runs: usize,
    seed: u64,
) -> PyResult<Bound<'_, pyo3::types::PyDict>> {
    let report = disagreement_counterexample(runs, seed).map_err(err)?;
    let dict = pyo3::types::PyDict::new(py);
    dict.set_item("runs", report.runs)?;
    dict.set_item("analytic_var", report.analytic_var.to_vec())?;
    dict.set_item("analytic_ratio", report.analytic_ratio)?;
    dict.set_item("mc_var", report.mc_var.to_vec())?;
    dict.set_item("analytic_error", report.analytic_error.to_vec())?;
    dict.set_item("mc_error", report.mc_error.to_vec())?;
    dict.set_item("ks_peripheral_central", report.ks_peripheral_central)?;
    dict.set_item("passes", report.passes)?;
    Ok(dict)
}

#[pymodule]
fn diffusion_hmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTransitionModel>()?;
    m.add_class::<PyLikelihoodModel>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    Ok(())
}
