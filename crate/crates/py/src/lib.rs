//! Python bindings for `kl_control`.

use kl_control::config::{load_config, Model};
use kl_control::envs::{CartPoleLqg, GridWorld};
use kl_control::harness::{
    run_cartpole_experiment, run_gridworld_experiment, run_verification_suite, CartpoleOptions, ExperimentConfig,
    GridworldOptions, VerifyOptions,
};
use kl_control::kl::kl_minimizer_closed_form;
use kl_control::lqr::{lqr_solve, LqgProblem};
use kl_control::lspsi::GaussianForm;
use kl_control::mdp::{CostTable, Horizon, Start, TabularPolicy};
use kl_control::psi::{iterate_policies, psi_value_iteration, PsiTable, UpdateSchedule};
use kl_control::solvers::{finite_horizon_dp, value_iteration, DEFAULT_TOL};
use kl_control::{expected_cost, Error, FiniteMdp};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidModel(_) | Error::Shape(_) | Error::IndexOutOfRange { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Per stage, per state, the control distribution.
fn policy_rows(p: &TabularPolicy) -> Vec<Vec<Vec<f64>>> {
    (0..p.num_stages()).map(|t| (0..p.num_states()).map(|x| p.row(t, x).to_vec()).collect()).collect()
}

/// A tabular MDP. `transition[x][u][y]`, `cost[x][u]`; `horizon=None` is
/// infinite.
#[pyclass(name = "Mdp", frozen)]
struct PyMdp {
    inner: FiniteMdp,
}

#[pymethods]
impl PyMdp {
    #[new]
    #[pyo3(signature = (transition, cost, discount=1.0, horizon=None, absorbing=vec![]))]
    fn new(
        transition: Vec<Vec<Vec<f64>>>,
        cost: Vec<Vec<f64>>,
        discount: f64,
        horizon: Option<usize>,
        absorbing: Vec<usize>,
    ) -> PyResult<Self> {
        let nx = transition.len();
        let nu = transition.first().map_or(0, Vec::len);
        let flat: Vec<f64> = transition.into_iter().flatten().flatten().collect();
        let cost: Vec<f64> = cost.into_iter().flatten().collect();
        let horizon = horizon.map_or(Horizon::Infinite, Horizon::Finite);
        let inner =
            FiniteMdp::new(nx, nu, flat, CostTable::Stationary(cost), discount, horizon, absorbing).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads an `mdp` or `gridworld` TOML file.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        let inner = match load_config(path).map_err(py_err)?.model {
            Model::Mdp(m) => m,
            Model::GridWorld(w) => w.to_mdp().map_err(py_err)?.mdp,
            _ => return Err(PyValueError::new_err("config describes a continuous model")),
        };
        Ok(Self { inner })
    }

    /// The grid world as an MDP; the built-in layout when `map` is omitted.
    #[staticmethod]
    #[pyo3(signature = (map=None, success_prob=None))]
    fn gridworld(map: Option<&str>, success_prob: Option<f64>) -> PyResult<Self> {
        let mut w = match map {
            Some(m) => GridWorld::from_ascii(m).map_err(py_err)?,
            None => GridWorld::default(),
        };
        if let Some(p) = success_prob {
            w = w.with_success_prob(p).map_err(py_err)?;
        }
        Ok(Self { inner: w.to_mdp().map_err(py_err)?.mdp })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_controls(&self) -> usize {
        self.inner.num_controls()
    }

    #[getter]
    fn discount(&self) -> f64 {
        self.inner.discount()
    }

    #[getter]
    fn horizon(&self) -> Option<usize> {
        self.inner.horizon().stages().map(|s| s - 1)
    }

    /// `(values[t][x], policy[t][x][u])` by dynamic programming or value iteration.
    fn solve(&self) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>)> {
        let (v, p) = match self.inner.horizon() {
            Horizon::Finite(_) => finite_horizon_dp(&self.inner),
            Horizon::Infinite => value_iteration(&self.inner, DEFAULT_TOL),
        }
        .map_err(py_err)?;
        Ok(((0..v.num_stages()).map(|t| v.values(t).to_vec()).collect(), policy_rows(&p)))
    }

    /// Exact expected cost of `policy[t][x][u]` (one stage means stationary).
    fn expected_cost(&self, policy: Vec<Vec<Vec<f64>>>, start: usize) -> PyResult<f64> {
        let (nx, nu) = (self.inner.num_states(), self.inner.num_controls());
        let stages = policy.into_iter().map(|s| s.into_iter().flatten().collect()).collect();
        let p = TabularPolicy::stochastic(nx, nu, stages).map_err(py_err)?;
        expected_cost(&self.inner, &p, &Start::State(start)).map_err(py_err)
    }

    /// Policy iteration from the uniform prior. Returns one
    /// `(iteration, expected_cost, kl, max_policy_change)` per step.
    #[pyo3(signature = (iters, schedule="full", start=0))]
    fn iterate(&self, iters: usize, schedule: &str, start: usize) -> PyResult<Vec<(usize, f64, f64, f64)>> {
        let horizon = self.inner.finite_horizon().map_err(py_err)?;
        let schedule = match schedule {
            "full" => UpdateSchedule::FullBackwardSweep,
            "async" => UpdateSchedule::Asynchronous((0..=horizon).rev().collect()),
            "stationary" => UpdateSchedule::StationaryValueStyle,
            other => return Err(PyValueError::new_err(format!("unknown schedule {other:?}"))),
        };
        let prior = TabularPolicy::uniform_stages(&self.inner, horizon + 1);
        let trace = iterate_policies(&self.inner, &prior, &schedule, iters, &Start::State(start)).map_err(py_err)?;
        Ok(trace.into_iter().map(|r| (r.iteration, r.expected_cost, r.kl, r.max_policy_change)).collect())
    }

    /// Stationary Psi table `psi[x][u]` after `sweeps` sweeps from zero.
    fn psi_value_iteration(&self, sweeps: usize) -> PyResult<Vec<Vec<f64>>> {
        let psi = psi_value_iteration(&self.inner, &PsiTable::zeros(&self.inner, 1), sweeps).map_err(py_err)?;
        Ok((0..self.inner.num_states()).map(|x| psi.row(0, x).to_vec()).collect())
    }
}

/// Riccati gain `K` (`u = -K x`) and cost-to-go `P`.
#[pyfunction]
#[pyo3(signature = (a, b, q, r, sigma=None, discount=1.0))]
fn lqr(
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    sigma: Option<Vec<Vec<f64>>>,
    discount: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let a = matrix(&a)?;
    let sigma = match sigma {
        Some(s) => matrix(&s)?,
        None => DMatrix::zeros(a.nrows(), a.nrows()),
    };
    let prob = LqgProblem::new(a, matrix(&b)?, sigma, matrix(&q)?, matrix(&r)?, discount).map_err(py_err)?;
    let sol = lqr_solve(&prob).map_err(py_err)?;
    Ok((nested(&sol.gain), nested(&sol.cost_to_go)))
}

/// Riccati gain of the cart-pole model.
#[pyfunction]
fn cartpole_gain() -> PyResult<Vec<f64>> {
    let sol = lqr_solve(&CartPoleLqg::default().lqg_problem().map_err(py_err)?).map_err(py_err)?;
    Ok(sol.gain.row(0).iter().copied().collect())
}

/// Closed-form `(q*, min_kl)` of the one-step inference problem.
#[pyfunction]
fn kl_minimizer(prior: Vec<f64>, channel: Vec<Vec<f64>>, obs_loglik: Vec<f64>) -> PyResult<(Vec<f64>, f64)> {
    let sol = kl_minimizer_closed_form(&prior, &channel, &obs_loglik).map_err(py_err)?;
    Ok((sol.q, sol.min_kl))
}

/// `log int exp(-u'Ku/2 + k'u + k0) du`.
#[pyfunction]
fn gaussian_log_partition(k_mat: Vec<Vec<f64>>, k_vec: Vec<f64>, k0: f64) -> PyResult<f64> {
    let form = GaussianForm { k_mat: matrix(&k_mat)?, k_vec: DVector::from_vec(k_vec), k0 };
    form.log_partition().map_err(py_err)
}

fn experiment(id: &str, seeds: Vec<u64>, budget: u64, eval_every: u64) -> ExperimentConfig {
    ExperimentConfig {
        id: id.into(),
        environment: id.into(),
        algorithm: "all".into(),
        seeds,
        budget,
        eval_every,
        output: None,
    }
}

/// Grid-world comparison on the built-in layout; returns the metrics CSV.
#[pyfunction]
#[pyo3(signature = (seeds, budget=200_000, eval_every=1000))]
fn run_gridworld(py: Python<'_>, seeds: Vec<u64>, budget: u64, eval_every: u64) -> PyResult<String> {
    let config = experiment("gridworld", seeds, budget, eval_every);
    let r = py.detach(|| run_gridworld_experiment(&config, &GridWorld::default(), &GridworldOptions::default()));
    Ok(r.map_err(py_err)?.table.to_csv())
}

/// LSPsi on the cart-pole; returns the metrics CSV.
#[pyfunction]
#[pyo3(signature = (seeds, episodes=2500, eval_every=100))]
fn run_cartpole(py: Python<'_>, seeds: Vec<u64>, episodes: u64, eval_every: u64) -> PyResult<String> {
    let config = experiment("cartpole", seeds, episodes, eval_every);
    let r = py.detach(|| run_cartpole_experiment(&config, &CartPoleLqg::default(), &CartpoleOptions::default()));
    Ok(r.map_err(py_err)?.table.to_csv())
}

/// Oracle checks as `(name, passed, max_deviation, detail)`.
#[pyfunction]
#[pyo3(signature = (quick=true, seed=0))]
fn verify(py: Python<'_>, quick: bool, seed: u64) -> PyResult<Vec<(String, bool, f64, String)>> {
    let mut opts = if quick { VerifyOptions::quick() } else { VerifyOptions::default() };
    opts.seed = seed;
    let report = py.detach(|| run_verification_suite(&opts)).map_err(py_err)?;
    Ok(report.checks.into_iter().map(|c| (c.name.to_string(), c.passed, c.max_deviation, c.detail)).collect())
}

#[pymodule]
fn kl_control_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMdp>()?;
    m.add_function(wrap_pyfunction!(lqr, m)?)?;
    m.add_function(wrap_pyfunction!(cartpole_gain, m)?)?;
    m.add_function(wrap_pyfunction!(kl_minimizer, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_log_partition, m)?)?;
    m.add_function(wrap_pyfunction!(run_gridworld, m)?)?;
    m.add_function(wrap_pyfunction!(run_cartpole, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
