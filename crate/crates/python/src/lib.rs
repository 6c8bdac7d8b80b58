//! Python bindings. Matrices cross the boundary as lists of rows.

use std::path::PathBuf;

use jico::selection::{default_a_grid, DEFAULT_FOLDS};
use jico::simulation::{Method, Setting, SimulationSpec};
use jico::{
    CenteringMode, CrConstraints, FitOptions, Gamma, Group, GroupedDataset, JicoModel,
    SelectionGrid,
};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(
    pyjico,
    JicoError,
    PyException,
    "Raised when a fit, file or argument is invalid."
);

fn err(e: jico::JicoError) -> PyErr {
    JicoError::new_err(e.to_string())
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!(
            "{what}: row {i} has {} entries, expected {cols}",
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_centering(name: &str) -> PyResult<CenteringMode> {
    match name {
        "global" => Ok(CenteringMode::Global),
        "per-group" | "per_group" => Ok(CenteringMode::PerGroup),
        "none" => Ok(CenteringMode::None),
        other => Err(PyValueError::new_err(format!(
            "centering `{other}` is not one of global, per-group, none"
        ))),
    }
}

/// Grouped design and response.
#[pyclass(name = "Dataset", module = "pyjico", frozen)]
struct PyDataset {
    inner: GroupedDataset,
}

#[pymethods]
impl PyDataset {
    /// `groups` is a list of `(label, rows, response)` triples.
    #[new]
    fn new(groups: Vec<(String, Vec<Vec<f64>>, Vec<f64>)>) -> PyResult<Self> {
        let groups = groups
            .into_iter()
            .map(|(label, x, y)| {
                Ok(Group::new(
                    label.clone(),
                    to_matrix(&x, &label)?,
                    DVector::from_vec(y),
                ))
            })
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyDataset {
            inner: GroupedDataset::new(groups).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: jico::read_dataset(&path).map_err(err)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn group_sizes(&self) -> Vec<usize> {
        self.inner.group_sizes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(groups={:?}, p={})",
            self.inner.labels(),
            self.inner.p()
        )
    }
}

/// A fitted model with the labels of the groups it was fitted on.
#[pyclass(name = "Model", module = "pyjico", frozen)]
struct PyModel {
    inner: JicoModel,
    labels: Vec<String>,
}

impl PyModel {
    fn group_index(&self, label: &str) -> PyResult<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| err(jico::JicoError::UnknownGroup(label.to_string())))
    }
}

#[pymethods]
impl PyModel {
    fn predict(&self, x: Vec<Vec<f64>>, group: &str) -> PyResult<Vec<f64>> {
        let g = self.group_index(group)?;
        let x = to_matrix(&x, "x")?;
        Ok(jico::predict(&self.inner, &x, g)
            .map_err(err)?
            .iter()
            .copied()
            .collect())
    }

    /// Per-group dictionaries with the joint, individual and residual parts
    /// of the design and the joint and individual parts of the fit.
    fn decompose<'py>(
        &self,
        py: Python<'py>,
        data: &PyDataset,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let parts = jico::decompose(&self.inner, &data.inner).map_err(err)?;
        parts
            .iter()
            .zip(data.inner.labels())
            .map(|(part, label)| {
                let d = PyDict::new(py);
                d.set_item("group", label)?;
                d.set_item("joint", to_rows(&part.joint))?;
                d.set_item("individual", to_rows(&part.individual))?;
                d.set_item("residual", to_rows(&part.residual))?;
                d.set_item("joint_response", part.joint_response.as_slice().to_vec())?;
                d.set_item(
                    "individual_response",
                    part.individual_response.as_slice().to_vec(),
                )?;
                Ok(d)
            })
            .collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        jico::save_model(&self.inner, &self.labels, &path).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (inner, labels) = jico::load_model(&path).map_err(err)?;
        Ok(PyModel { inner, labels })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.inner.gamma.a()
    }

    /// `inf` for the principal-component end.
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma.value()
    }

    #[getter]
    fn joint_rank(&self) -> usize {
        self.inner.joint_rank
    }

    #[getter]
    fn individual_ranks(&self) -> Vec<usize> {
        self.inner.individual_ranks.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn n_iter(&self) -> usize {
        self.inner.n_iter
    }

    /// p × K joint weights.
    #[getter]
    fn joint_weights(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.w)
    }

    fn individual_weights(&self, group: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.w_g[self.group_index(group)?]))
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(a={}, joint_rank={}, individual_ranks={:?}, converged={})",
            self.inner.gamma.a(),
            self.inner.joint_rank,
            self.inner.individual_ranks,
            self.inner.converged
        )
    }
}

#[pyfunction]
#[pyo3(signature = (data, joint_rank, individual_ranks, a = 0.5, centering = "global", tol = jico::fit::DEFAULT_TOL, max_iter = jico::fit::DEFAULT_MAX_ITER))]
fn fit(
    data: &PyDataset,
    joint_rank: usize,
    individual_ranks: Vec<usize>,
    a: f64,
    centering: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<PyModel> {
    let opts = FitOptions::new(Gamma::from_a(a).map_err(err)?, joint_rank, individual_ranks)
        .with_centering(parse_centering(centering)?)
        .with_tol(tol)
        .with_max_iter(max_iter);
    let inner = jico::fit(&data.inner, &opts).map_err(err)?;
    Ok(PyModel {
        inner,
        labels: data.inner.labels(),
    })
}

/// Grid search by k-fold CV. Returns the selected `(joint_rank,
/// individual_ranks, a, mean_mse)` and every evaluated cell.
#[pyfunction]
#[pyo3(signature = (data, seed, max_joint_rank = 2, max_individual_rank = 2, a_grid = None, folds = DEFAULT_FOLDS, centering = "global", equal_individual_ranks = true))]
#[allow(clippy::too_many_arguments)]
fn cross_validate<'py>(
    py: Python<'py>,
    data: &PyDataset,
    seed: u64,
    max_joint_rank: usize,
    max_individual_rank: usize,
    a_grid: Option<Vec<f64>>,
    folds: usize,
    centering: &str,
    equal_individual_ranks: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = SelectionGrid {
        max_joint_rank,
        max_individual_rank,
        equal_individual_ranks,
        a_grid: a_grid.unwrap_or_else(default_a_grid),
        folds,
        seed,
        centering: parse_centering(centering)?,
        ..SelectionGrid::default()
    };
    let report = py
        .detach(|| jico::cv_grid(&data.inner, &grid))
        .map_err(err)?;
    let cells = report
        .cells
        .iter()
        .map(|c| {
            (
                c.joint_rank,
                c.individual_ranks.clone(),
                c.a,
                c.mean_mse,
                c.std_err,
                c.error.clone(),
            )
        })
        .collect::<Vec<_>>();
    let best = report.best_cell();
    let out = PyDict::new(py);
    out.set_item(
        "best",
        (
            best.joint_rank,
            best.individual_ranks.clone(),
            best.a,
            best.mean_mse,
        ),
    )?;
    out.set_item("cells", cells)?;
    Ok(out)
}

/// Unit weight vectors, one per row, from sequential continuum regression
/// of `y` on `x` with no constraints.
#[pyfunction]
fn cr_directions(x: Vec<Vec<f64>>, y: Vec<f64>, a: f64, count: usize) -> PyResult<Vec<Vec<f64>>> {
    let x = to_matrix(&x, "x")?;
    let y = DVector::from_vec(y);
    let none = CrConstraints::none(x.nrows(), x.ncols());
    let path = jico::extract_directions(&x, &y, Gamma::from_a(a).map_err(err)?, count, &none)
        .map_err(err)?;
    Ok(to_rows(&path.weights.transpose()))
}

/// Runs the benchmark for one simulation setting and returns
/// `(method, overall mean MSE, standard error, failures)` rows.
#[pyfunction]
fn simulate(
    py: Python<'_>,
    setting: &str,
    reps: usize,
    seed: u64,
) -> PyResult<Vec<(String, f64, f64, usize)>> {
    let setting = Setting::parse(setting)
        .ok_or_else(|| PyValueError::new_err(format!("unknown setting `{setting}`")))?;
    let spec = SimulationSpec::new(setting)
        .with_reps(reps)
        .with_seed(seed)
        .with_centering(CenteringMode::None);
    let report = py
        .detach(|| jico::run_benchmark(&spec, &Method::standard_set(setting)))
        .map_err(err)?;
    Ok(report
        .methods
        .into_iter()
        .map(|m| (m.label, m.overall.0, m.overall.1, m.failures))
        .collect())
}

#[pymodule]
fn pyjico(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(cr_directions, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("JicoError", m.py().get_type::<JicoError>())?;
    Ok(())
}
