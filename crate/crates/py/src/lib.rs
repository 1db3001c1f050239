//! Python bindings. States are 1-based here, as in every serialized form.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use arbor_core::sampler::{replicate_with, ConfiguredSampler, RootOneBiased};
use arbor_core::stats::{chi_square_gof as gof, FrequencyTable};
use arbor_core::verify::VerifyConfig;
use arbor_core::{
    Distribution, Error, InitPolicy, RngStream, SamplerConfig, SamplerMode, DEFAULT_ROW_TOLERANCE,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::OracleMismatch(_) | Error::SourceExhausted { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mode_from(name: &str) -> PyResult<SamplerMode> {
    match name {
        "restricted" => Ok(SamplerMode::Restricted),
        "general" => Ok(SamplerMode::General),
        _ => Err(PyValueError::new_err(format!(
            "mode must be 'restricted' or 'general', got {name:?}"
        ))),
    }
}

fn zero_based(states: &[usize], n: usize) -> PyResult<Vec<usize>> {
    states
        .iter()
        .map(|&s| {
            if (1..=n).contains(&s) {
                Ok(s - 1)
            } else {
                Err(PyValueError::new_err(format!("state {s} outside 1..={n}")))
            }
        })
        .collect()
}

/// Row-stochastic transition matrix.
#[pyclass(frozen, module = "arbor")]
struct TransitionMatrix {
    inner: arbor_core::TransitionMatrix,
}

#[pymethods]
impl TransitionMatrix {
    #[new]
    #[pyo3(signature = (rows, tolerance = DEFAULT_ROW_TOLERANCE))]
    fn new(rows: Vec<Vec<f64>>, tolerance: f64) -> PyResult<Self> {
        arbor_core::TransitionMatrix::with_tolerance(rows, tolerance)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.rows()
    }

    /// Entry `p_ij` with 1-based states.
    fn get(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.n();
        let ij = zero_based(&[i, j], n)?;
        Ok(self.inner.get(ij[0], ij[1]))
    }

    /// Structural report as a dict.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.validate();
        let d = PyDict::new(py);
        d.set_item("row_stochastic", r.row_stochastic)?;
        d.set_item("irreducible", r.irreducible)?;
        d.set_item("aperiodic", r.aperiodic)?;
        d.set_item("assumption_a", r.assumption_a)?;
        d.set_item("period", r.period)?;
        Ok(d)
    }

    /// Stationary distribution by a linear solve.
    fn stationary(&self) -> PyResult<Vec<f64>> {
        arbor_core::stationary_solve(&self.inner)
            .map(|d| d.probs().to_vec())
            .map_err(to_py)
    }

    /// Stationary distribution as normalized root weights.
    fn tree_theorem_stationary(&self) -> PyResult<Vec<f64>> {
        arbor_core::tree_theorem_stationary(&self.inner)
            .map(|d| d.probs().to_vec())
            .map_err(to_py)
    }

    /// Total weight of arborescences rooted at `root`, by determinant.
    fn root_weight(&self, root: usize) -> PyResult<f64> {
        let r = zero_based(&[root], self.inner.n())?[0];
        arbor_core::matrix_tree_root_weight(&self.inner, r).map_err(to_py)
    }

    /// `[(tree, weight, probability)]` for every positive-weight
    /// arborescence, trees as `"root:p1,...,pn"` strings.
    fn tree_distribution(&self) -> PyResult<Vec<(String, f64, f64)>> {
        let d = arbor_core::tree_distribution(&self.inner).map_err(to_py)?;
        Ok(d.trees
            .into_iter()
            .map(|t| (t.tree.to_string(), t.weight, t.probability))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("TransitionMatrix({:?})", self.inner.rows())
    }
}

/// Weight of a tree given as a canonical string.
#[pyfunction]
fn tree_weight(p: &TransitionMatrix, tree: &str) -> PyResult<f64> {
    let t = arbor_core::canonical_decode(tree).map_err(to_py)?;
    arbor_core::tree_weight(&p.inner, &t).map_err(to_py)
}

fn init_policy(init: &str, init_vector: Option<Vec<usize>>, n: usize) -> PyResult<InitPolicy> {
    match (init, init_vector) {
        ("all-ones", None) => Ok(InitPolicy::AllOnes),
        ("random", None) => Ok(InitPolicy::Random(Distribution::uniform(n))),
        ("fixed", Some(v)) if v.len() == n => Ok(InitPolicy::Fixed(zero_based(&v, n)?)),
        ("fixed", _) => Err(PyValueError::new_err(format!(
            "init='fixed' needs init_vector with {n} states"
        ))),
        (_, Some(_)) => Err(PyValueError::new_err(
            "init_vector only applies to init='fixed'",
        )),
        (other, None) => Err(PyValueError::new_err(format!(
            "init must be 'all-ones', 'fixed' or 'random', got {other:?}"
        ))),
    }
}

/// Independent sampler replications. Each result is a dict with `tau`,
/// `root`, `tree`, `blocks`, `censored` and `offsets`.
#[pyfunction]
#[pyo3(signature = (p, mode = "restricted", replications = 1, seed = 0, max_blocks = None, init = "all-ones", init_vector = None))]
#[allow(clippy::too_many_arguments)]
fn sample<'py>(
    py: Python<'py>,
    p: &TransitionMatrix,
    mode: &str,
    replications: u64,
    seed: u64,
    max_blocks: Option<u64>,
    init: &str,
    init_vector: Option<Vec<usize>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mode = mode_from(mode)?;
    let report = p.inner.validate();
    if mode == SamplerMode::Restricted && !report.assumption_a {
        return Err(PyValueError::new_err(
            "restricted mode needs Assumption A (every p_1j > 0); use mode='general'",
        ));
    }
    let config = SamplerConfig {
        mode,
        max_blocks,
        init: init_policy(init, init_vector, p.inner.n())?,
    };
    let sampler = ConfiguredSampler(config);
    let reps = py
        .detach(|| replicate_with(&sampler, &p.inner, 0..replications, seed))
        .map_err(to_py)?;
    reps.iter()
        .map(|r| {
            let rec = r.record();
            let d = PyDict::new(py);
            d.set_item("tau", rec.tau)?;
            d.set_item("root", rec.root)?;
            d.set_item("tree", rec.tree)?;
            d.set_item("blocks", rec.blocks)?;
            d.set_item("censored", rec.censored)?;
            d.set_item("offsets", rec.offsets)?;
            Ok(d)
        })
        .collect()
}

/// Statistical verification against the exact oracles. Returns a dict with
/// `passed`, `censored` and a list of per-criterion dicts.
#[pyfunction]
#[pyo3(signature = (p, replications = 100_000, seed = 0, alpha = 0.001, mode = None, max_blocks = 1_000_000, biased_fixture = false))]
#[allow(clippy::too_many_arguments)]
fn verify<'py>(
    py: Python<'py>,
    p: &TransitionMatrix,
    replications: u64,
    seed: u64,
    alpha: f64,
    mode: Option<&str>,
    max_blocks: u64,
    biased_fixture: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        Some(m) => mode_from(m)?,
        None if p.inner.validate().assumption_a => SamplerMode::Restricted,
        None => SamplerMode::General,
    };
    let real = ConfiguredSampler(SamplerConfig {
        mode,
        max_blocks: Some(max_blocks),
        init: InitPolicy::AllOnes,
    });
    let biased = RootOneBiased(real.clone());
    let cfg = VerifyConfig {
        replications,
        seed,
        significance: alpha,
        mode,
    };
    let report = py
        .detach(|| {
            if biased_fixture {
                arbor_core::verify::verify(&p.inner, &biased, &cfg)
            } else {
                arbor_core::verify::verify(&p.inner, &real, &cfg)
            }
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("passed", report.all_passed())?;
    d.set_item("censored", report.censored)?;
    let criteria = report
        .criteria
        .iter()
        .map(|c| {
            let e = PyDict::new(py);
            e.set_item("name", c.name)?;
            e.set_item("passed", c.passed)?;
            e.set_item("p", c.p)?;
            e.set_item("detail", &c.detail)?;
            Ok(e)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("criteria", criteria)?;
    Ok(d)
}

/// Lift a two-state trajectory (states 1 and 2) to `n` states.
#[pyfunction]
#[pyo3(signature = (trajectory, n, seed = 0))]
fn lift_two_state(trajectory: Vec<usize>, n: usize, seed: u64) -> PyResult<Vec<usize>> {
    let traj = zero_based(&trajectory, 2)?;
    let lifted =
        arbor_core::lift_two_state(&traj, n, &mut RngStream::new(seed, 0)).map_err(to_py)?;
    Ok(lifted.into_iter().map(|s| s + 1).collect())
}

/// Pearson goodness of fit. Returns `(statistic, dof, p_value)`.
#[pyfunction]
fn chi_square_gof(
    observed: Vec<(String, u64)>,
    expected: Vec<(String, f64)>,
) -> PyResult<(f64, usize, f64)> {
    let r = gof(&FrequencyTable::from_counts(observed), &expected).map_err(to_py)?;
    Ok((r.statistic, r.dof, r.p_value))
}

#[pymodule]
fn arbor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<TransitionMatrix>()?;
    m.add_function(wrap_pyfunction!(tree_weight, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(lift_two_state, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_gof, m)?)?;
    Ok(())
}
