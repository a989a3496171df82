//! Python bindings for `cmjvax`.
//!
//! Laws, vaccination functions and policy targets are passed as dicts (or
//! JSON strings) with the same keys as the TOML configuration.

use std::path::PathBuf;

use cmjvax::estimate::dkw_half_width;
use cmjvax::ingest::{filter_outbreaks, read_weekly_csv, segment_outbreaks, size_records, FilterOptions, Verdict};
use cmjvax::policy::{quantile_curve, DEFAULT_RESOLUTION};
use cmjvax::reproduction::{critical_coverage, critical_coverage_for_mean, offspring_mean};
use cmjvax::{inference, Error, Functional, PolicyFamily, PolicyQuery, PolicyTarget, TimeUnit};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyString};
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::ExplosionRate { .. } | Error::CensoredTree { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn from_spec<T: DeserializeOwned>(spec: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if spec.is_instance_of::<PyString>() {
        spec.extract()?
    } else {
        spec.py().import("json")?.call_method1("dumps", (spec,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn functional(name: &str) -> PyResult<Functional> {
    name.parse().map_err(err)
}

fn unit(name: &str) -> PyResult<TimeUnit> {
    match name {
        "days" => Ok(TimeUnit::Days),
        "weeks" => Ok(TimeUnit::Weeks),
        "whole_weeks" => Ok(TimeUnit::WholeWeeks),
        other => Err(PyValueError::new_err(format!("unknown unit `{other}` (days, weeks, whole_weeks)"))),
    }
}

#[pyclass(name = "ReproductionLaw", module = "cmjvax", frozen)]
pub struct PyLaw {
    inner: cmjvax::ReproductionLaw,
}

#[pymethods]
impl PyLaw {
    /// From a dict such as `{"lifetime": {...}, "offspring": {...}}` or its JSON.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: cmjvax::ReproductionLaw = from_spec(spec)?;
        inner.validate().map_err(err)?;
        Ok(PyLaw { inner })
    }

    #[staticmethod]
    fn bellman_harris(shape: f64, mean: f64, offspring_mean: f64) -> PyResult<Self> {
        let inner = cmjvax::ReproductionLaw::bellman_harris(shape, mean, offspring_mean);
        inner.validate().map_err(err)?;
        Ok(PyLaw { inner })
    }

    fn offspring_mean(&self) -> f64 {
        offspring_mean(&self.inner)
    }

    fn critical_coverage(&self) -> f64 {
        critical_coverage(&self.inner)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("ReproductionLaw({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

#[pyclass(name = "VaccinationFunction", module = "cmjvax", frozen)]
pub struct PyAlpha {
    inner: cmjvax::VaccinationFunction,
}

impl PyAlpha {
    fn wrap(inner: cmjvax::Result<cmjvax::VaccinationFunction>) -> PyResult<Self> {
        Ok(PyAlpha { inner: inner.map_err(err)? })
    }
}

#[pymethods]
impl PyAlpha {
    /// From a dict such as `{"kind": "step", "c": 0.5, "t0": 0.0}` or its JSON.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let inner: cmjvax::VaccinationFunction = from_spec(spec)?;
        inner.validate().map_err(err)?;
        Ok(PyAlpha { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (c, t0 = 0.0))]
    fn step(c: f64, t0: f64) -> PyResult<Self> {
        Self::wrap(cmjvax::VaccinationFunction::step(c, t0))
    }

    #[staticmethod]
    #[pyo3(name = "ramp", signature = (start, tv, p0))]
    fn ramp_fn(start: f64, tv: f64, p0: f64) -> PyResult<Self> {
        Self::wrap(cmjvax::VaccinationFunction::ramp(start, tv, p0))
    }

    #[staticmethod]
    fn piecewise(t: Vec<f64>, v: Vec<f64>) -> PyResult<Self> {
        Self::wrap(cmjvax::VaccinationFunction::piecewise(t, v))
    }

    fn __call__(&self, t: f64) -> f64 {
        self.inner.eval(t)
    }

    fn plateau(&self) -> f64 {
        self.inner.plateau()
    }

    /// Whether `self` is pointwise at most `other`.
    fn precedes(&self, other: &PyAlpha) -> bool {
        cmjvax::precedes(&self.inner, &other.inner)
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        self.inner.describe()
    }
}

#[pyclass(name = "SimCaps", module = "cmjvax", frozen)]
pub struct PyCaps {
    inner: cmjvax::SimCaps,
}

#[pymethods]
impl PyCaps {
    #[new]
    #[pyo3(signature = (horizon = 700.0, max_births = 100_000))]
    fn new(horizon: f64, max_births: usize) -> PyResult<Self> {
        Ok(PyCaps { inner: cmjvax::SimCaps::new(horizon, max_births).map_err(err)? })
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn max_births(&self) -> usize {
        self.inner.max_births
    }

    fn __repr__(&self) -> String {
        format!("SimCaps(horizon={}, max_births={})", self.inner.horizon, self.inner.max_births)
    }
}

fn caps_or_default(caps: Option<&PyCaps>) -> cmjvax::SimCaps {
    caps.map(|c| c.inner).unwrap_or_default()
}

#[pyclass(name = "BranchingTree", module = "cmjvax", frozen)]
pub struct PyTree {
    inner: cmjvax::BranchingTree,
}

#[pymethods]
impl PyTree {
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Self> {
        Ok(PyTree { inner: cmjvax::BranchingTree::from_json(json).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn births(&self) -> usize {
        self.inner.births()
    }

    #[getter]
    fn initials(&self) -> usize {
        self.inner.initials()
    }

    #[getter]
    fn censored(&self) -> bool {
        self.inner.is_censored()
    }

    #[getter]
    fn censor_time(&self) -> Option<f64> {
        self.inner.censor_time()
    }

    /// Value of a functional (`T`, `Ttilde`, `M`, `Nt:<days>`, `Ninf`) after
    /// pruning by `alpha` (no pruning when omitted).
    #[pyo3(signature = (functional, alpha = None, unit = "days"))]
    fn evaluate(&self, functional: &str, alpha: Option<&PyAlpha>, unit: &str) -> PyResult<f64> {
        let f = self::functional(functional)?;
        let mask = match alpha {
            Some(a) => cmjvax::prune(&self.inner, &a.inner),
            None => cmjvax::PruneMask::empty(&self.inner),
        };
        let value = f.evaluate(&self.inner, &mask).map_err(err)?;
        Ok(if f.is_time() { self::unit(unit)?.convert(value) } else { value })
    }

    /// Ids of the births removed by `alpha`, descendants included.
    fn deleted_births(&self, alpha: &PyAlpha) -> Vec<usize> {
        cmjvax::prune(&self.inner, &alpha.inner).deleted_births(&self.inner)
    }

    fn __repr__(&self) -> String {
        let censored = if self.inner.is_censored() { "True" } else { "False" };
        format!("BranchingTree(births={}, censored={censored})", self.inner.births())
    }
}

#[pyfunction]
#[pyo3(signature = (law, seed, initials = 1, caps = None))]
fn simulate_tree(py: Python<'_>, law: &PyLaw, seed: u64, initials: usize, caps: Option<&PyCaps>) -> PyResult<PyTree> {
    let caps = caps_or_default(caps);
    let inner = py.detach(|| cmjvax::simulate_tree(&law.inner, initials, caps, seed)).map_err(err)?;
    Ok(PyTree { inner })
}

#[pyclass(name = "EmpiricalDistribution", module = "cmjvax", frozen)]
pub struct PyDistribution {
    inner: cmjvax::EmpiricalDistribution,
}

#[pymethods]
impl PyDistribution {
    #[new]
    fn new(samples: Vec<f64>) -> PyResult<Self> {
        Ok(PyDistribution { inner: cmjvax::EmpiricalDistribution::from_samples(samples).map_err(err)? })
    }

    fn cdf(&self, x: f64) -> f64 {
        self.inner.cdf(x)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.inner.quantile(p).map_err(err)
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn se_mean(&self) -> f64 {
        self.inner.se_mean()
    }

    /// Mean of the maximum of `z` independent draws.
    fn mean_max_of(&self, z: u32) -> f64 {
        self.inner.mean_max_of(z)
    }

    /// Sorted samples; unresolved replicates appear as `inf`.
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("EmpiricalDistribution(n={}, mean={})", self.inner.len(), self.inner.mean())
    }
}

#[pyclass(name = "CoupledBatch", module = "cmjvax", frozen)]
pub struct PyBatch {
    inner: cmjvax::CoupledBatch,
}

impl PyBatch {
    fn query(&self, functional: &str, target: &Bound<'_, PyAny>, family: Option<&Bound<'_, PyAny>>, z: u32, unit: &str) -> PyResult<PolicyQuery> {
        let target: PolicyTarget = from_spec(target)?;
        let family: PolicyFamily = match family {
            Some(f) => from_spec(f)?,
            None => PolicyFamily::Constant,
        };
        let query = PolicyQuery { family, target, functional: self::functional(functional)?, z, unit: self::unit(unit)? };
        query.validate().map_err(err)?;
        Ok(query)
    }
}

#[pymethods]
impl PyBatch {
    /// `n` coupled replicates of `law`; trees are kept in memory unless
    /// `cache` is false.
    #[new]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (law, n, seed, initials = 1, caps = None, threads = None, cache = true))]
    fn new(
        py: Python<'_>,
        law: &PyLaw,
        n: usize,
        seed: u64,
        initials: usize,
        caps: Option<&PyCaps>,
        threads: Option<usize>,
        cache: bool,
    ) -> PyResult<Self> {
        let caps = caps_or_default(caps);
        let law = law.inner.clone();
        let inner = py
            .detach(|| {
                let mut batch = cmjvax::CoupledBatch::new(law, initials, caps, n, seed)?;
                if let Some(t) = threads {
                    batch = batch.with_threads(t)?;
                }
                if cache {
                    batch = batch.cached()?;
                }
                Ok(batch)
            })
            .map_err(err)?;
        Ok(PyBatch { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn replicate_seed(&self, i: usize) -> u64 {
        self.inner.replicate_seed(i)
    }

    fn tree(&self, i: usize) -> PyResult<PyTree> {
        if i >= self.inner.len() {
            return Err(PyValueError::new_err(format!("replicate {i} out of range")));
        }
        Ok(PyTree { inner: self.inner.tree(i).map_err(err)?.into_owned() })
    }

    /// Per-replicate values under each vaccination function, as
    /// `(values[alpha][replicate], unresolved)`.
    #[pyo3(signature = (functional, alphas, unit = "days"))]
    fn evaluate(&self, py: Python<'_>, functional: &str, alphas: Vec<PyRef<'_, PyAlpha>>, unit: &str) -> PyResult<(Vec<Vec<f64>>, usize)> {
        let (f, u) = (self::functional(functional)?, self::unit(unit)?);
        let alphas: Vec<_> = alphas.iter().map(|a| a.inner.clone()).collect();
        let samples = py.detach(|| self.inner.evaluate(f, u, &alphas)).map_err(err)?;
        Ok((samples.values, samples.unresolved))
    }

    #[pyo3(signature = (functional, alphas, unit = "days"))]
    fn distributions(&self, py: Python<'_>, functional: &str, alphas: Vec<PyRef<'_, PyAlpha>>, unit: &str) -> PyResult<Vec<PyDistribution>> {
        let (f, u) = (self::functional(functional)?, self::unit(unit)?);
        let alphas: Vec<_> = alphas.iter().map(|a| a.inner.clone()).collect();
        let dists = py.detach(|| self.inner.distributions(f, u, &alphas)).map_err(err)?;
        Ok(dists.into_iter().map(|inner| PyDistribution { inner }).collect())
    }

    /// Smallest index of `family` (default constant coverage) whose target
    /// statistic is at most the bound. Returns the result as a dict.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (functional, target, family = None, z = 1, unit = "days", resolution = DEFAULT_RESOLUTION))]
    fn optimal_policy(
        &self,
        py: Python<'_>,
        functional: &str,
        target: &Bound<'_, PyAny>,
        family: Option<&Bound<'_, PyAny>>,
        z: u32,
        unit: &str,
        resolution: f64,
    ) -> PyResult<Py<PyAny>> {
        let query = self.query(functional, target, family, z, unit)?;
        let result = py.detach(|| cmjvax::optimal_policy(&query, &self.inner, resolution)).map_err(err)?;
        to_py(py, &result)
    }

    /// `(index, statistic)` over the whole index grid of the family.
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (functional, target, family = None, z = 1, unit = "days", resolution = DEFAULT_RESOLUTION))]
    fn policy_curve(
        &self,
        py: Python<'_>,
        functional: &str,
        target: &Bound<'_, PyAny>,
        family: Option<&Bound<'_, PyAny>>,
        z: u32,
        unit: &str,
        resolution: f64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let query = self.query(functional, target, family, z, unit)?;
        py.detach(|| {
            let grid = query.family.index_grid(self.inner.law(), resolution)?;
            quantile_curve(&query, &self.inner, &grid)
        })
        .map_err(err)
    }
}

#[pyfunction]
fn precedes(alpha: &PyAlpha, other: &PyAlpha) -> bool {
    cmjvax::precedes(&alpha.inner, &other.inner)
}

#[pyfunction]
fn borel_tanner_pmf(a: u64, m: f64, k: u64) -> PyResult<f64> {
    inference::borel_tanner_pmf(a, m, k).map_err(err)
}

#[pyfunction]
fn borel_tanner_mean(a: u64, m: f64) -> PyResult<f64> {
    inference::borel_tanner_mean(a, m).map_err(err)
}

/// `(k, pmf, cdf)` rows until the cdf reaches `mass`.
#[pyfunction]
#[pyo3(signature = (a, m, mass = 0.999999))]
fn borel_tanner_table(a: u64, m: f64, mass: f64) -> PyResult<Vec<(u64, f64, f64)>> {
    inference::borel_tanner_table(a, m, mass).map_err(err)
}

/// Pearson goodness of fit of total-birth counts to Borel-Tanner(a, m).
#[pyfunction]
fn borel_tanner_gof(py: Python<'_>, counts: Vec<u64>, a: u64, m: f64) -> PyResult<Py<PyAny>> {
    to_py(py, &inference::borel_tanner_gof(&counts, a, m).map_err(err)?)
}

/// Offspring-mean MLE from `(a, n)` pairs.
#[pyfunction]
fn mle_offspring_mean(records: Vec<(u64, u64)>) -> PyResult<f64> {
    let records: Vec<_> = records.into_iter().map(|(a, n)| inference::OutbreakSizeRecord { a, n }).collect();
    inference::mle_offspring_mean(&records).map_err(err)
}

#[pyfunction]
fn mean_outbreak_size(m: f64) -> PyResult<f64> {
    inference::mean_outbreak_size(m).map_err(err)
}

#[pyfunction]
fn gamma_coverage(mean: f64, shape: f64, lo: f64, hi: f64) -> PyResult<f64> {
    inference::gamma_coverage(mean, shape, lo, hi).map_err(err)
}

#[pyfunction(name = "critical_coverage")]
fn critical_coverage_py(m: f64) -> f64 {
    critical_coverage_for_mean(m)
}

#[pyfunction(name = "dkw_half_width")]
fn dkw_half_width_py(n: usize, delta: f64) -> f64 {
    dkw_half_width(n, delta)
}

/// Segments a `province,week,cases` CSV into outbreaks. Returns a dict with
/// `outbreaks` (each with its `status`), `sizes` as `(a, n)` pairs of the
/// kept outbreaks, and `warnings`.
#[pyfunction]
#[pyo3(signature = (path, gap_limit = cmjvax::ingest::DEFAULT_GAP_LIMIT, initial_cases = Some(1), max_duration = Some(9)))]
fn read_outbreaks(py: Python<'_>, path: PathBuf, gap_limit: u32, initial_cases: Option<u64>, max_duration: Option<u64>) -> PyResult<Py<PyAny>> {
    let file = std::fs::File::open(&path).map_err(|e| PyValueError::new_err(format!("{}: {e}", path.display())))?;
    let (series, warnings) = read_weekly_csv(file).map_err(err)?;
    let filter = FilterOptions { initial_cases, max_duration_weeks: max_duration };
    let mut outbreaks = Vec::new();
    let mut records = Vec::new();
    for s in &series {
        for r in segment_outbreaks(s, gap_limit) {
            let status = match filter.verdict(&r) {
                Verdict::Kept => "kept",
                Verdict::DroppedInitialCases => "dropped_initial_cases",
                Verdict::DroppedDuration => "dropped_duration",
            };
            outbreaks.push(serde_json::json!({
                "province": r.province,
                "start_week": s.week_label(r.start_week),
                "initial_cases": r.initial_cases,
                "duration_weeks": r.duration_weeks,
                "total_cases": r.total_cases,
                "status": status,
            }));
            records.push(r);
        }
    }
    let kept = filter_outbreaks(&records, &filter).kept;
    let sizes: Vec<(u64, u64)> = size_records(&kept).into_iter().map(|r| (r.a, r.n)).collect();
    let out = PyDict::new(py);
    out.set_item("outbreaks", to_py(py, &outbreaks)?)?;
    out.set_item("sizes", sizes)?;
    out.set_item("warnings", warnings)?;
    Ok(out.into_any().unbind())
}

#[pymodule(name = "cmjvax")]
pub fn cmjvax_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cmjvax::VERSION)?;
    m.add_class::<PyLaw>()?;
    m.add_class::<PyAlpha>()?;
    m.add_class::<PyCaps>()?;
    m.add_class::<PyTree>()?;
    m.add_class::<PyDistribution>()?;
    m.add_class::<PyBatch>()?;
    m.add_function(wrap_pyfunction!(simulate_tree, m)?)?;
    m.add_function(wrap_pyfunction!(precedes, m)?)?;
    m.add_function(wrap_pyfunction!(borel_tanner_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(borel_tanner_mean, m)?)?;
    m.add_function(wrap_pyfunction!(borel_tanner_table, m)?)?;
    m.add_function(wrap_pyfunction!(borel_tanner_gof, m)?)?;
    m.add_function(wrap_pyfunction!(mle_offspring_mean, m)?)?;
    m.add_function(wrap_pyfunction!(mean_outbreak_size, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(critical_coverage_py, m)?)?;
    m.add_function(wrap_pyfunction!(dkw_half_width_py, m)?)?;
    m.add_function(wrap_pyfunction!(read_outbreaks, m)?)?;
    Ok(())
}
