//! Python bindings: charts, fibers of point-supported currents, Hodge star, suite runner.
//!
//! Currents and tensor elements cross the boundary as dicts keyed by `"I|K"` strings
//! (1-based letters, comma separated). Coefficients are `float` in float mode and
//! `fractions.Fraction` in rational mode.

use std::path::Path;

use covcurrents::atomic::{AtomicCurrent, Fiber};
use covcurrents::cli::{self, ManifoldSpec, RunOptions};
use covcurrents::connection::ChartConnection;
use covcurrents::multialg::{key_string, parse_key, AntiIndex, ExtVec, Hodge, MetricSignature, TensorExtElement, Word};
use covcurrents::operators::boundary;
use covcurrents::{Error, Mode, Rational, Scalar};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyFloat, PyList, PyTuple};

/// A coefficient on its way in or out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Float(f64),
    Ratio(i128, i128),
}

pub fn to_scalar<S: Scalar>(n: Num) -> covcurrents::Result<S> {
    match n {
        Num::Float(x) => S::from_f64(x),
        Num::Ratio(p, q) => Ok(S::from_ratio(p, q)),
    }
}

pub fn from_scalar<S: Scalar>(s: S) -> Num {
    match (S::MODE, s.to_literal().exact) {
        (Mode::Rational, Some((p, q))) => Num::Ratio(p, q),
        _ => Num::Float(s.to_f64()),
    }
}

pub fn parse_mode(mode: &str) -> covcurrents::Result<Mode> {
    match mode {
        "float" => Ok(Mode::Float),
        "rational" => Ok(Mode::Rational),
        other => Err(Error::invalid(format!("unknown mode \"{other}\""))),
    }
}

pub fn current_from_terms<S: Scalar>(terms: &[(String, Num)], k: usize) -> covcurrents::Result<AtomicCurrent<S>> {
    let mut t = AtomicCurrent::zero(k);
    for (key, c) in terms {
        let key = parse_key(key)?;
        if key.1.len() != k {
            return Err(Error::DegreeMismatch {
                expected: k,
                found: key.1.len(),
            });
        }
        t.add_term(key, to_scalar(*c)?);
    }
    Ok(t)
}

pub fn current_to_terms<S: Scalar>(t: &AtomicCurrent<S>) -> Vec<(String, Num)> {
    t.iter().map(|(k, c)| (key_string(k), from_scalar(*c))).collect()
}

pub fn element_from_terms<S: Scalar>(terms: &[(String, Num)]) -> covcurrents::Result<TensorExtElement<S>> {
    let mut x = TensorExtElement::zero();
    for (key, c) in terms {
        let (w, a) = parse_key(key)?;
        x.add_term(w, a, to_scalar(*c)?);
    }
    Ok(x)
}

pub fn element_to_terms<S: Scalar>(x: &TensorExtElement<S>) -> Vec<(String, Num)> {
    x.iter().map(|(k, c)| (key_string(k), from_scalar(*c))).collect()
}

/// `"1,3"` → `{1,3}` (1-based).
pub fn parse_anti(s: &str) -> covcurrents::Result<AntiIndex> {
    parse_key(&format!("|{s}")).map(|k| k.1)
}

/// `⋆` of a constant form in an orthonormal frame with the given signs.
pub fn hodge_star_terms(signature: &[i8], alpha: &[(String, Num)], orientation: i8, inverse: bool) -> covcurrents::Result<Vec<(String, Num)>> {
    let h = Hodge::<Rational>::orthonormal(&MetricSignature(signature.to_vec()), orientation);
    let mut a = ExtVec::new();
    for (k, c) in alpha {
        let idx = parse_anti(k)?;
        if idx.0.iter().any(|l| *l as usize >= signature.len()) {
            return Err(Error::invalid(format!("index {k} exceeds dimension {}", signature.len())));
        }
        *a.entry(idx).or_insert_with(Rational::zero) += to_scalar::<Rational>(*c)?;
    }
    let out = if inverse { h.star_inverse(&a) } else { h.star(&a) };
    Ok(out
        .iter()
        .map(|(k, c)| (key_string(&(Word::empty(), k.clone())).trim_start_matches('|').to_string(), from_scalar(*c)))
        .collect())
}

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn num_of(obj: &Bound<'_, PyAny>) -> PyResult<Num> {
    if let Ok(v) = obj.extract::<i64>() {
        return Ok(Num::Ratio(v as i128, 1));
    }
    if obj.hasattr("numerator")? && obj.hasattr("denominator")? && !obj.is_instance_of::<PyFloat>() {
        let p: i64 = obj.getattr("numerator")?.extract()?;
        let q: i64 = obj.getattr("denominator")?.extract()?;
        return Ok(Num::Ratio(p as i128, q as i128));
    }
    Ok(Num::Float(obj.extract::<f64>()?))
}

fn num_to_py<'py>(py: Python<'py>, n: Num) -> PyResult<Bound<'py, PyAny>> {
    match n {
        Num::Float(x) => Ok(PyFloat::new(py, x).into_any()),
        Num::Ratio(p, q) => {
            let fraction = py.import("fractions")?.getattr("Fraction")?;
            fraction.call1((p, q))
        }
    }
}

fn terms_of(d: &Bound<'_, PyDict>) -> PyResult<Vec<(String, Num)>> {
    d.iter().map(|(k, v)| Ok((k.extract::<String>()?, num_of(&v)?))).collect()
}

fn dict_of<'py>(py: Python<'py>, terms: Vec<(String, Num)>) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in terms {
        d.set_item(k, num_to_py(py, v)?)?;
    }
    Ok(d)
}

fn point_of<S: Scalar>(p: &[Bound<'_, PyAny>]) -> PyResult<Vec<S>> {
    p.iter().map(|x| to_scalar::<S>(num_of(x)?).map_err(err)).collect()
}

/// A coordinate chart with a torsion-free connection.
#[pyclass(name = "Chart", module = "pycovcurrents")]
pub struct PyChart {
    inner: ChartConnection,
}

#[pymethods]
impl PyChart {
    #[new]
    #[pyo3(signature = (name, coordinates, metric=None, christoffel=None))]
    fn new(name: &str, coordinates: Vec<String>, metric: Option<Vec<String>>, christoffel: Option<Vec<String>>) -> PyResult<Self> {
        let syms: Vec<&str> = coordinates.iter().map(|s| s.as_str()).collect();
        let inner = match (metric, christoffel) {
            (Some(g), None) => ChartConnection::parse_metric(name, &syms, &g.iter().map(|s| s.as_str()).collect::<Vec<_>>()),
            (None, Some(c)) => ChartConnection::parse_christoffel(name, &syms, &c.iter().map(|s| s.as_str()).collect::<Vec<_>>()),
            _ => return Err(PyValueError::new_err("give exactly one of metric and christoffel")),
        }
        .map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(PyChart { inner })
    }

    /// Primary chart of a TOML spec file.
    #[staticmethod]
    fn from_spec(path: &str) -> PyResult<Self> {
        Ok(PyChart {
            inner: ManifoldSpec::load(Path::new(path)).map_err(err)?.chart,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn fiber_dim(&self) -> usize {
        self.inner.fiber_dim()
    }

    #[getter]
    fn has_metric(&self) -> bool {
        self.inner.has_metric()
    }

    /// `Γ[k][i][j]` at a point.
    fn christoffel(&self, point: Vec<Bound<'_, PyAny>>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let local = self.inner.local::<f64>(&point_of::<f64>(&point)?, 0).map_err(err)?;
        let n = self.inner.dim();
        Ok((0..n)
            .map(|k| (0..n).map(|i| (0..n).map(|j| local.gamma(k, i, j).value()).collect()).collect())
            .collect())
    }

    /// `R[k][j][u][v]` of the tangent connection at a point.
    fn curvature(&self, point: Vec<Bound<'_, PyAny>>) -> PyResult<Vec<Vec<Vec<Vec<f64>>>>> {
        let local = self.inner.local::<f64>(&point_of::<f64>(&point)?, 1).map_err(err)?;
        let r = local.curvature().map_err(err)?;
        let n = self.inner.dim();
        Ok((0..n)
            .map(|k| (0..n).map(|j| (0..n).map(|u| (0..n).map(|v| r.base(k, j, u, v)).collect()).collect()).collect())
            .collect())
    }

    /// Higher Christoffel symbols `Γ^k_{I,j}` for a nonempty 1-based word `I`.
    fn higher_christoffel(&self, point: Vec<Bound<'_, PyAny>>, word: Vec<u8>, j: usize) -> PyResult<Vec<f64>> {
        if word.iter().any(|l| *l == 0 || *l as usize > self.inner.dim()) || j == 0 || j > self.inner.dim() {
            return Err(PyValueError::new_err("letters and j are 1-based coordinate indices"));
        }
        let w = Word::from_slice(&word.iter().map(|l| l - 1).collect::<Vec<_>>());
        let local = self.inner.local::<f64>(&point_of::<f64>(&point)?, word.len()).map_err(err)?;
        local.higher_christoffel(&w, j - 1).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Chart({:?}, dim={})", self.inner.name(), self.inner.dim())
    }
}

enum AnyFiber {
    F(Fiber<f64>),
    Q(Fiber<Rational>),
}

macro_rules! with_fiber {
    ($self:expr, $f:ident, $body:expr) => {
        match &$self.inner {
            AnyFiber::F($f) => $body,
            AnyFiber::Q($f) => $body,
        }
    };
}

/// The fiber of point-supported currents of order `≤ r` at a point.
#[pyclass(name = "Fiber", module = "pycovcurrents")]
pub struct PyFiber {
    inner: AnyFiber,
}

fn fiber_at<S: Scalar>(chart: &ChartConnection, point: &[Bound<'_, PyAny>], order: usize) -> PyResult<Fiber<S>> {
    Fiber::at(chart, &point_of::<S>(point)?, order).map_err(err)
}

#[pymethods]
impl PyFiber {
    #[new]
    #[pyo3(signature = (chart, point, order, mode="float"))]
    fn new(chart: &PyChart, point: Vec<Bound<'_, PyAny>>, order: usize, mode: &str) -> PyResult<Self> {
        let inner = match parse_mode(mode).map_err(err)? {
            Mode::Float => AnyFiber::F(fiber_at(&chart.inner, &point, order)?),
            Mode::Rational => AnyFiber::Q(fiber_at(&chart.inner, &point, order)?),
        };
        Ok(PyFiber { inner })
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner {
            AnyFiber::F(_) => "float",
            AnyFiber::Q(_) => "rational",
        }
    }

    #[getter]
    fn order(&self) -> usize {
        with_fiber!(self, f, f.order())
    }

    #[staticmethod]
    fn kernel_dimension(n: usize, d: usize, r: usize, k: usize) -> usize {
        Fiber::<f64>::kernel_dimension(n, d, r, k)
    }

    /// PBW keys of degree `k`.
    fn pbw_keys(&self, k: usize) -> Vec<String> {
        with_fiber!(self, f, Fiber::<f64>::pbw_keys(f.dim(), f.fiber_dim(), f.order(), k).iter().map(key_string).collect())
    }

    fn probe_rank(&self, k: usize) -> PyResult<usize> {
        let tol = if matches!(self.inner, AnyFiber::F(_)) { 1e-9 } else { 0.0 };
        with_fiber!(self, f, f.probe_rank(k, tol).map_err(err))
    }

    /// Kernel elements `E_{I,i,j,J,K}` of degree `k`, each as a dict.
    fn kernel_basis<'py>(&self, py: Python<'py>, k: usize) -> PyResult<Bound<'py, PyList>> {
        let items = with_fiber!(self, f, {
            f.kernel_basis(k).map_err(err)?.iter().map(|e| element_to_terms(&e.element)).collect::<Vec<_>>()
        });
        let out = PyList::empty(py);
        for t in items {
            out.append(dict_of(py, t)?)?;
        }
        Ok(out)
    }

    /// Evaluations of a tensor element against every monomial probe of degree `k`.
    fn probe_values<'py>(&self, py: Python<'py>, element: &Bound<'py, PyDict>, k: usize) -> PyResult<Bound<'py, PyList>> {
        let terms = terms_of(element)?;
        let vals: Vec<Num> = with_fiber!(self, f, {
            let x = element_from_terms(&terms).map_err(err)?;
            f.probe_values(&x, k).map_err(err)?.into_iter().map(from_scalar).collect()
        });
        let out = PyList::empty(py);
        for v in vals {
            out.append(num_to_py(py, v)?)?;
        }
        Ok(out)
    }

    /// PBW coordinates of the current represented by a tensor element.
    fn to_pbw<'py>(&self, py: Python<'py>, element: &Bound<'py, PyDict>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let terms = terms_of(element)?;
        let out = with_fiber!(self, f, {
            let x = element_from_terms(&terms).map_err(err)?;
            current_to_terms(&f.to_pbw(&x, k).map_err(err)?)
        });
        dict_of(py, out)
    }

    /// Coproduct as `{(left_key, right_key): coefficient}`.
    fn coproduct<'py>(&self, py: Python<'py>, current: &Bound<'py, PyDict>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let terms = terms_of(current)?;
        let pairs: Vec<(String, String, Num)> = with_fiber!(self, f, {
            let t = current_from_terms(&terms, k).map_err(err)?;
            f.coproduct(&t)
                .map_err(err)?
                .iter()
                .map(|((l, r), c)| (key_string(l), key_string(r), from_scalar(*c)))
                .collect()
        });
        let d = PyDict::new(py);
        for (l, r, c) in pairs {
            d.set_item(PyTuple::new(py, [l, r])?, num_to_py(py, c)?)?;
        }
        Ok(d)
    }

    fn counit<'py>(&self, py: Python<'py>, current: &Bound<'py, PyDict>, k: usize) -> PyResult<Bound<'py, PyAny>> {
        let terms = terms_of(current)?;
        let v = with_fiber!(self, f, {
            let t = current_from_terms(&terms, k).map_err(err)?;
            from_scalar(f.counit(&t))
        });
        num_to_py(py, v)
    }

    /// Boundary `∂T`, dual to the exterior derivative. Needs `order(T) + 1 ≤ order`.
    fn boundary<'py>(&self, py: Python<'py>, current: &Bound<'py, PyDict>, k: usize) -> PyResult<Bound<'py, PyDict>> {
        let terms = terms_of(current)?;
        let out = with_fiber!(self, f, {
            let t = current_from_terms(&terms, k).map_err(err)?;
            current_to_terms(&boundary(f, &t).map_err(err)?)
        });
        dict_of(py, out)
    }
}

/// `⋆α` (or `⋆⁻¹α`) in an orthonormal frame; form keys are 1-based index lists like `"1,2"`.
#[pyfunction]
#[pyo3(signature = (signature, alpha, orientation=1, inverse=false))]
fn hodge_star<'py>(py: Python<'py>, signature: Vec<i8>, alpha: &Bound<'py, PyDict>, orientation: i8, inverse: bool) -> PyResult<Bound<'py, PyDict>> {
    if signature.iter().any(|s| *s != 1 && *s != -1) || (orientation != 1 && orientation != -1) {
        return Err(PyValueError::new_err("signature entries and orientation must be ±1"));
    }
    let out = hodge_star_terms(&signature, &terms_of(alpha)?, orientation, inverse).map_err(err)?;
    dict_of(py, out)
}

/// `[(name, description, anchor)]`.
#[pyfunction]
fn list_suites() -> Vec<(String, String, String)> {
    cli::SUITES
        .iter()
        .map(|s| (s.name.to_string(), s.description.to_string(), s.anchor.to_string()))
        .collect()
}

/// Run a suite over a spec file; returns `(exit_code, json_report)`.
#[pyfunction]
#[pyo3(signature = (spec, suite="all", order=2, degree=1, mode="float", tol=None, seed=None, jobs=None))]
#[allow(clippy::too_many_arguments)]
fn run_suite(py: Python<'_>, spec: &str, suite: &str, order: usize, degree: usize, mode: &str, tol: Option<f64>, seed: Option<u64>, jobs: Option<usize>) -> PyResult<(i32, String)> {
    let parsed = match ManifoldSpec::load(Path::new(spec)) {
        Ok(s) => s,
        Err(e) => return Ok((cli::error_exit_code(&e), String::new())),
    };
    let opts = RunOptions {
        suite: suite.to_string(),
        order,
        degree,
        mode: parse_mode(mode).map_err(err)?,
        tol,
        seed,
        jobs,
    };
    let label = Path::new(spec).file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = py.detach(|| cli::run(&parsed, &label, &opts)).map_err(err)?;
    Ok((report.exit_code(), report.to_json()))
}

/// TOML text of a random polynomial metric with unit determinant.
#[pyfunction]
#[pyo3(signature = (n, seed=0, degree=1))]
fn random_metric_spec(n: usize, seed: u64, degree: usize) -> String {
    cli::random_metric_spec(n, seed, degree)
}

#[pymodule]
fn pycovcurrents(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChart>()?;
    m.add_class::<PyFiber>()?;
    m.add_function(wrap_pyfunction!(hodge_star, m)?)?;
    m.add_function(wrap_pyfunction!(list_suites, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(random_metric_spec, m)?)?;
    Ok(())
}
