//! Python bindings for the `ebna` crate.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ebna::bayesnet::{pls_sample, BayesianNetwork, DagStructure};
use ebna::benchmarks::{Benchmark, ProblemKind};
use ebna::eda::{ModelBuilder, Strategy};
use ebna::genome::{Dataset, Gene, Objective};
use ebna::harness::{derive_seed, execute, AlgorithmKind, ExperimentConfig, RunSpec};
use ebna::rank_stats::{kruskal_wallis as kw_test, SampleGroup};
use ebna::scores::{self, Metric, Penalty};

fn py_err(e: ebna::Error) -> PyErr {
    match e {
        ebna::Error::Io { .. } => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn dataset(rows: Vec<Vec<Gene>>, cardinalities: Option<Vec<usize>>) -> PyResult<Dataset> {
    let width = rows.first().map_or(0, Vec::len);
    let cards = cardinalities.unwrap_or_else(|| {
        (0..width)
            .map(|j| {
                rows.iter()
                    .map(|r| r.get(j).map_or(0, |&v| v as usize) + 1)
                    .max()
                    .unwrap_or(2)
                    .max(2)
            })
            .collect()
    });
    Dataset::from_rows(cards, &rows).map_err(py_err)
}

/// A benchmark problem instance.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    inner: Benchmark,
}

#[pymethods]
impl PyProblem {
    /// `size` is n, or the grid side for checkerboard; the defaults are the
    /// standard experimental settings.
    #[new]
    #[pyo3(signature = (name, size=None, t_fraction=None, weights_seed=None))]
    fn new(name: &str, size: Option<usize>, t_fraction: Option<f64>, weights_seed: Option<u64>) -> PyResult<Self> {
        let cfg = ExperimentConfig {
            problems: vec![name.parse::<ProblemKind>().map_err(py_err)?],
            size,
            t_fraction,
            weights_seed,
            ..Default::default()
        };
        let problem = cfg.resolved_problems().remove(0);
        Ok(Self {
            inner: problem.build().map_err(py_err)?,
        })
    }

    fn evaluate(&self, genes: Vec<Gene>) -> PyResult<f64> {
        self.inner.check(0, &genes).map_err(py_err)?;
        Ok(self.inner.evaluate(&genes))
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.kind().name()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        self.inner.direction().as_str()
    }

    #[getter]
    fn optimum(&self) -> Option<f64> {
        self.inner.known_optimum()
    }

    fn __repr__(&self) -> String {
        format!("Problem({}, {})", self.inner.name(), self.inner.describe())
    }
}

/// Outcome of one optimisation run.
#[pyclass(name = "RunResult", frozen, get_all)]
struct PyRunResult {
    algorithm: String,
    problem: String,
    seed: u64,
    final_best: f64,
    best_genes: Vec<Gene>,
    evaluations: u64,
    generations: usize,
    stop_reason: String,
    /// (generation, best, mean, evaluations, arcs) per trace entry.
    trace: Vec<(usize, f64, f64, u64, usize)>,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "RunResult({} on {}: best={} evaluations={} stop={})",
            self.algorithm, self.problem, self.final_best, self.evaluations, self.stop_reason
        )
    }
}

/// Runs one seeded optimisation. `settings` takes configuration keys such as
/// `{"problem.population": "200", "algo.ebna_k2pen.f": "bic"}`.
#[pyfunction]
#[pyo3(signature = (problem, algorithm, seed=0, repetition=0, settings=None))]
fn run(
    py: Python<'_>,
    problem: &str,
    algorithm: &str,
    seed: u64,
    repetition: usize,
    settings: Option<BTreeMap<String, String>>,
) -> PyResult<PyRunResult> {
    let mut cfg = ExperimentConfig::default();
    cfg.set("problem.name", problem).map_err(py_err)?;
    for (k, v) in settings.unwrap_or_default() {
        cfg.set(&k, &v).map_err(py_err)?;
    }
    let algorithm: AlgorithmKind = algorithm.parse().map_err(py_err)?;
    let problem = cfg.resolved_problems().remove(0);
    let spec = RunSpec {
        run_id: 0,
        seed: derive_seed(seed, problem.kind.name(), algorithm.name(), repetition),
        problem,
        algorithm,
        repetition,
    };
    let record = py.detach(|| execute(&spec, &cfg)).map_err(py_err)?;
    Ok(PyRunResult {
        algorithm: record.algorithm,
        problem: record.problem,
        seed: record.seed,
        final_best: record.final_best,
        best_genes: record.best_genes,
        evaluations: record.evaluations,
        generations: record.generations,
        stop_reason: record.stop_reason.to_string(),
        trace: record
            .trace
            .iter()
            .map(|g| (g.generation, g.best, g.mean, g.evaluations, g.arcs))
            .collect(),
    })
}

/// A discrete Bayesian network with its conditional probability tables.
#[pyclass(name = "BayesianNetwork", frozen)]
struct PyNetwork {
    inner: BayesianNetwork,
}

#[pymethods]
impl PyNetwork {
    /// Learns structure and parameters from integer rows with one of the
    /// EDA model builders (umda, mimic, ebna_pc, ebna_bic, ebna_k2pen).
    #[staticmethod]
    #[pyo3(signature = (rows, algorithm="ebna_bic", cardinalities=None, f="aic"))]
    fn learn(rows: Vec<Vec<Gene>>, algorithm: &str, cardinalities: Option<Vec<usize>>, f: &str) -> PyResult<Self> {
        let data = dataset(rows, cardinalities)?;
        let strategy: Strategy = algorithm.parse().map_err(py_err)?;
        let mut builder = ModelBuilder::new(strategy);
        builder.penalty = f.parse().map_err(py_err)?;
        Ok(Self {
            inner: builder.build(&data).map_err(py_err)?.network,
        })
    }

    /// Draws `count` rows by forward sampling.
    #[pyo3(signature = (count, seed=0))]
    fn sample(&self, count: usize, seed: u64) -> Vec<Vec<Gene>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pls_sample(&self.inner, count, &mut rng)
            .rows()
            .map(<[Gene]>::to_vec)
            .collect()
    }

    fn arcs(&self) -> Vec<(usize, usize)> {
        self.inner.structure().arcs()
    }

    fn parents(&self, variable: usize) -> PyResult<Vec<usize>> {
        if variable >= self.inner.n_vars() {
            return Err(PyValueError::new_err(format!("no variable {variable}")));
        }
        Ok(self.inner.structure().parents(variable).to_vec())
    }

    fn log_probability(&self, row: Vec<Gene>) -> PyResult<f64> {
        if row.len() != self.inner.n_vars()
            || row
                .iter()
                .zip(self.inner.cardinalities())
                .any(|(&v, &r)| v as usize >= r)
        {
            return Err(PyValueError::new_err("row does not match the network's variables"));
        }
        Ok(self.inner.log_probability(&row))
    }

    fn dump(&self) -> String {
        self.inner.dump()
    }

    #[getter]
    fn n_vars(&self) -> usize {
        self.inner.n_vars()
    }
}

/// Score of a structure, given as one parent list per variable.
#[pyfunction]
#[pyo3(signature = (rows, parents, metric="bic", f="aic", cardinalities=None))]
fn score_structure(
    rows: Vec<Vec<Gene>>,
    parents: Vec<Vec<usize>>,
    metric: &str,
    f: &str,
    cardinalities: Option<Vec<usize>>,
) -> PyResult<f64> {
    let data = dataset(rows, cardinalities)?;
    let structure = DagStructure::from_parents(parents).map_err(py_err)?;
    let metric = match metric.to_ascii_lowercase().as_str() {
        "bic" => Metric::Bic,
        "k2pen" | "k2+pen" => Metric::K2Pen(f.parse::<Penalty>().map_err(py_err)?),
        other => return Err(PyValueError::new_err(format!("unknown metric `{other}`"))),
    };
    scores::score_structure(&structure, &data, metric).map_err(py_err)
}

/// Parent bound for 0-based `variable`: returns `(m, l, rhs, max_parents)`.
#[pyfunction]
#[pyo3(signature = (cardinalities, rows, variable, f="1"))]
fn parent_bound(cardinalities: Vec<usize>, rows: usize, variable: usize, f: &str) -> PyResult<(u64, u64, f64, usize)> {
    let penalty: Penalty = f.parse().map_err(py_err)?;
    let b = scores::parent_bound(variable, &cardinalities, rows, penalty).map_err(py_err)?;
    Ok((b.m, b.l, b.rhs, b.max_parents))
}

/// Kruskal-Wallis H test: returns `(h, p_value, reject)`.
#[pyfunction]
#[pyo3(signature = (groups, alpha=0.05))]
fn kruskal_wallis(groups: Vec<Vec<f64>>, alpha: f64) -> PyResult<(f64, f64, bool)> {
    let groups: Vec<SampleGroup> = groups
        .into_iter()
        .enumerate()
        .map(|(i, v)| SampleGroup::new(format!("g{i}"), v))
        .collect();
    let r = kw_test(&groups, alpha).map_err(py_err)?;
    Ok((r.h, r.p_value, r.reject))
}

#[pymodule]
fn ebna_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(score_structure, m)?)?;
    m.add_function(wrap_pyfunction!(parent_bound, m)?)?;
    m.add_function(wrap_pyfunction!(kruskal_wallis, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
