//! Python bindings. Matrices cross the boundary as lists of rows.

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use raman_pcr as rp;

create_exception!(ramanpcr, RamanPcrError, PyException, "Raised for every library error.");

fn py_err(e: rp::Error) -> PyErr {
    RamanPcrError::new_err(e.to_string())
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rp::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Rows of equal length into a matrix.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> rp::Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(rp::Error::ShapeMismatch {
            expected: (r, c),
            found: (bad, rows[bad].len()),
        });
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "SpectraSet", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct SpectraSet {
    pub inner: rp::SpectraSet,
}

#[pymethods]
impl SpectraSet {
    /// `matrix` holds one row per spectrum.
    #[new]
    pub fn new(axis: Vec<f64>, matrix: Vec<Vec<f64>>, labels: Vec<String>) -> PyResult<Self> {
        let m = rows_to_matrix(&matrix).py()?;
        Ok(SpectraSet {
            inner: rp::SpectraSet::new(axis, m, labels).py()?,
        })
    }

    #[staticmethod]
    pub fn load(path: &str) -> PyResult<Self> {
        Ok(SpectraSet {
            inner: rp::load_spectra(path, rp::SpectraFormat::WideCsv).py()?,
        })
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        rp::save_spectra(path, &self.inner).py()
    }

    #[getter]
    pub fn axis(&self) -> Vec<f64> {
        self.inner.axis().to_vec()
    }

    #[getter]
    pub fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    pub fn n_spectra(&self) -> usize {
        self.inner.n_spectra()
    }

    #[getter]
    pub fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    fn __len__(&self) -> usize {
        self.inner.n_spectra()
    }

    fn __repr__(&self) -> String {
        format!("SpectraSet(i={}, j={})", self.inner.n_spectra(), self.inner.n_channels())
    }
}

#[pyclass(name = "ConcentrationSet", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct ConcentrationSet {
    pub inner: rp::ConcentrationSet,
}

#[pymethods]
impl ConcentrationSet {
    /// `matrix` holds one row per species, one column per sample.
    #[new]
    #[pyo3(signature = (matrix, species, labels, units=None))]
    pub fn new(
        matrix: Vec<Vec<f64>>,
        species: Vec<String>,
        labels: Vec<String>,
        units: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let m = rows_to_matrix(&matrix).py()?;
        let units = units.unwrap_or_else(|| vec![String::new(); species.len()]);
        if units.len() != species.len() {
            return Err(RamanPcrError::new_err("units and species differ in length"));
        }
        let species = species.into_iter().zip(units).map(|(n, u)| rp::Species::new(n, u)).collect();
        Ok(ConcentrationSet {
            inner: rp::ConcentrationSet::new(m, species, labels).py()?,
        })
    }

    #[staticmethod]
    pub fn load(path: &str) -> PyResult<Self> {
        Ok(ConcentrationSet {
            inner: rp::load_concentrations(path).py()?,
        })
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        rp::save_concentrations(path, &self.inner).py()
    }

    #[getter]
    pub fn species(&self) -> Vec<String> {
        self.inner.species().iter().map(|s| s.name.clone()).collect()
    }

    #[getter]
    pub fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    pub fn align_to(&self, labels: Vec<String>) -> PyResult<Self> {
        Ok(ConcentrationSet {
            inner: self.inner.align_to(&labels).py()?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "ConcentrationSet(q={}, samples={})",
            self.inner.n_species(),
            self.inner.n_samples()
        )
    }
}

#[pyclass(name = "Pipeline", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct Pipeline {
    pub inner: rp::Pipeline,
}

#[pymethods]
impl Pipeline {
    /// Parses e.g. `"baseline_als|rnv(90)"`.
    #[new]
    #[pyo3(signature = (text="identity"))]
    pub fn new(text: &str) -> PyResult<Self> {
        Ok(Pipeline {
            inner: text.parse().py()?,
        })
    }

    #[getter]
    pub fn name(&self) -> String {
        self.inner.name()
    }

    pub fn apply(&self, set: &SpectraSet) -> PyResult<SpectraSet> {
        Ok(SpectraSet {
            inner: rp::apply_pipeline(&set.inner, &self.inner).py()?,
        })
    }

    /// Applies the pipeline to one spectrum.
    pub fn apply_spectrum(&self, intensities: Vec<f64>, axis: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&intensities, &axis).py()
    }

    fn __repr__(&self) -> String {
        format!("Pipeline({:?})", self.inner.name())
    }
}

#[pyclass(name = "PressMatrix", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct PressMatrix {
    pub inner: rp::PressMatrix,
}

#[pymethods]
impl PressMatrix {
    #[getter]
    pub fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    pub fn n_pcs(&self) -> usize {
        self.inner.n_pcs()
    }

    #[getter]
    pub fn labels(&self) -> Vec<String> {
        self.inner.labels.clone()
    }

    /// Rows are held-out spectra, columns PC counts; NaN marks unreachable cells.
    pub fn values(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(&self.inner.values)
    }

    pub fn notes(&self) -> Vec<String> {
        self.inner.notes.iter().map(|n| format!("{n:?}")).collect()
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }
}

#[pyclass(name = "AnovaResult", module = "ramanpcr", get_all, from_py_object)]
#[derive(Clone)]
pub struct AnovaResult {
    pub sst: f64,
    pub sse: f64,
    pub f: f64,
    pub p_value: f64,
    pub df_treat: usize,
    pub df_error: usize,
    pub critical_f: f64,
    pub significant: bool,
    pub group_means: Vec<f64>,
}

impl From<rp::AnovaResult> for AnovaResult {
    fn from(a: rp::AnovaResult) -> Self {
        AnovaResult {
            sst: a.sst,
            sse: a.sse,
            f: a.f,
            p_value: a.p_value,
            df_treat: a.df_treat,
            df_error: a.df_error,
            critical_f: a.critical_f,
            significant: a.significant,
            group_means: a.group_means,
        }
    }
}

#[pyclass(name = "PcVerdict", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct PcVerdict {
    pub inner: rp::PcVerdict,
}

#[pymethods]
impl PcVerdict {
    #[getter]
    pub fn significant(&self) -> bool {
        self.inner.significant
    }

    #[getter]
    pub fn optimal_pc(&self) -> usize {
        self.inner.optimal_pc
    }

    #[getter]
    pub fn candidate_set(&self) -> Vec<usize> {
        self.inner.candidate_set.clone()
    }

    #[getter]
    pub fn worst_pc(&self) -> Option<usize> {
        self.inner.worst_pc
    }

    #[getter]
    pub fn sum_press(&self) -> Vec<f64> {
        self.inner.sum_press.clone()
    }

    #[getter]
    pub fn alert(&self) -> Option<String> {
        self.inner.alert.clone()
    }

    #[getter]
    pub fn anova(&self) -> Option<AnovaResult> {
        self.inner.anova.clone().map(Into::into)
    }

    fn __repr__(&self) -> String {
        format!(
            "PcVerdict(significant={}, optimal_pc={})",
            self.inner.significant, self.inner.optimal_pc
        )
    }
}

#[pyclass(name = "PcrModel", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct PcrModel {
    pub inner: rp::PcrModel,
}

#[pymethods]
impl PcrModel {
    #[staticmethod]
    pub fn load(path: &str) -> PyResult<Self> {
        Ok(PcrModel {
            inner: rp::PcrModel::load(path).py()?,
        })
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[staticmethod]
    pub fn from_json(text: &str) -> PyResult<Self> {
        Ok(PcrModel {
            inner: rp::PcrModel::from_json(text).py()?,
        })
    }

    pub fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    #[getter]
    pub fn n_components(&self) -> usize {
        self.inner.n_components()
    }

    #[getter]
    pub fn species(&self) -> Vec<String> {
        self.inner.species.iter().map(|s| s.name.clone()).collect()
    }

    #[getter]
    pub fn pipeline(&self) -> String {
        self.inner.pipeline.name()
    }

    pub fn truncate(&self, k: usize) -> PyResult<Self> {
        Ok(PcrModel {
            inner: self.inner.truncate(k).py()?,
        })
    }

    /// Estimates for raw spectra (the stored pipeline is applied first);
    /// one row per species.
    pub fn predict(&self, set: &SpectraSet) -> PyResult<Vec<Vec<f64>>> {
        Ok(matrix_to_rows(&self.inner.predict_raw(&set.inner).py()?))
    }
}

/// `(label, significant, optimal_pc, sum_press_at_optimal, error)`.
pub type CandidateRow = (String, bool, Option<usize>, Option<f64>, Option<String>);

#[pyclass(name = "SelectionReport", module = "ramanpcr", from_py_object)]
#[derive(Clone)]
pub struct SelectionReport {
    pub inner: rp::SelectionReport,
}

#[pymethods]
impl SelectionReport {
    #[getter]
    pub fn chosen_label(&self) -> String {
        self.inner.chosen_label.clone()
    }

    #[getter]
    pub fn chosen_pipeline(&self) -> String {
        self.inner.chosen_pipeline.clone()
    }

    #[getter]
    pub fn chosen_pc(&self) -> usize {
        self.inner.chosen_pc
    }

    #[getter]
    pub fn chosen_significant(&self) -> bool {
        self.inner.chosen_significant
    }

    #[getter]
    pub fn alerts(&self) -> Vec<String> {
        self.inner.alerts.clone()
    }

    /// `(label, significant, optimal_pc, sum_press_at_optimal, error)` per candidate.
    pub fn candidates(&self) -> Vec<CandidateRow> {
        self.inner
            .candidates
            .iter()
            .map(|c| {
                (
                    c.label.clone(),
                    c.significant,
                    c.optimal_pc,
                    c.sum_press_at_optimal,
                    c.error.clone(),
                )
            })
            .collect()
    }

    pub fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }

    pub fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }
}

fn press_scale(log_press: bool) -> rp::PressScale {
    if log_press {
        rp::PressScale::Log10
    } else {
        rp::PressScale::Raw
    }
}

#[pyfunction]
#[pyo3(signature = (set, conc, pipeline=None))]
pub fn loo_press_matrix(
    set: &SpectraSet,
    conc: &ConcentrationSet,
    pipeline: Option<&Pipeline>,
) -> PyResult<PressMatrix> {
    let p = pipeline.map(|p| p.inner.clone()).unwrap_or_default();
    Ok(PressMatrix {
        inner: rp::loo_press_matrix(&set.inner, &conc.inner, &p).py()?,
    })
}

#[pyfunction]
#[pyo3(signature = (press, alpha=0.05, log_press=false))]
pub fn anova_oneway(press: &PressMatrix, alpha: f64, log_press: bool) -> PyResult<AnovaResult> {
    Ok(rp::anova_oneway_scaled(&press.inner, alpha, press_scale(log_press)).py()?.into())
}

#[pyfunction]
#[pyo3(signature = (press, alpha=0.05, log_press=false))]
pub fn select_optimal_pc(press: &PressMatrix, alpha: f64, log_press: bool) -> PyResult<PcVerdict> {
    Ok(PcVerdict {
        inner: rp::select_optimal_pc_scaled(&press.inner, alpha, press_scale(log_press)).py()?,
    })
}

/// `candidates` entries are `"pipeline"` or `"label=pipeline"`; `None`
/// evaluates the stock grid.
#[pyfunction]
#[pyo3(signature = (set, conc, candidates=None, alpha=0.05, log_press=false))]
pub fn select_method(
    py: Python<'_>,
    set: &SpectraSet,
    conc: &ConcentrationSet,
    candidates: Option<Vec<String>>,
    alpha: f64,
    log_press: bool,
) -> PyResult<SelectionReport> {
    let cands = match candidates {
        Some(list) => list
            .iter()
            .map(|c| rp::Candidate::parse(c))
            .collect::<rp::Result<Vec<_>>>()
            .py()?,
        None => rp::default_candidates(),
    };
    let options = rp::SelectOptions {
        alpha,
        scale: press_scale(log_press),
        ..rp::SelectOptions::default()
    };
    let report = py.detach(|| rp::select_method_with(&set.inner, &conc.inner, &cands, &options));
    Ok(SelectionReport { inner: report.py()? })
}

#[pyfunction]
pub fn train_final(set: &SpectraSet, conc: &ConcentrationSet, pipeline: &Pipeline, pc_count: usize) -> PyResult<PcrModel> {
    Ok(PcrModel {
        inner: rp::train_final(&set.inner, &conc.inner, &pipeline.inner, pc_count).py()?,
    })
}

/// Holdout RSS for each truncation `1..=k` of the model.
#[pyfunction]
pub fn evaluate_holdout(model: &PcrModel, holdout: &SpectraSet, truth: &ConcentrationSet) -> PyResult<Vec<f64>> {
    Ok(rp::evaluate_holdout(&model.inner, &holdout.inner, &truth.inner).py()?.rss)
}

#[pyfunction]
#[pyo3(signature = (n, seed=1))]
pub fn tears_phantom(n: usize, seed: u64) -> PyResult<(SpectraSet, ConcentrationSet)> {
    let (set, conc) = rp::tears_phantom(n, seed).py()?;
    Ok((SpectraSet { inner: set }, ConcentrationSet { inner: conc }))
}

#[pymodule]
fn ramanpcr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RamanPcrError", m.py().get_type::<RamanPcrError>())?;
    m.add_class::<SpectraSet>()?;
    m.add_class::<ConcentrationSet>()?;
    m.add_class::<Pipeline>()?;
    m.add_class::<PressMatrix>()?;
    m.add_class::<AnovaResult>()?;
    m.add_class::<PcVerdict>()?;
    m.add_class::<PcrModel>()?;
    m.add_class::<SelectionReport>()?;
    m.add_function(wrap_pyfunction!(loo_press_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(anova_oneway, m)?)?;
    m.add_function(wrap_pyfunction!(select_optimal_pc, m)?)?;
    m.add_function(wrap_pyfunction!(select_method, m)?)?;
    m.add_function(wrap_pyfunction!(train_final, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_holdout, m)?)?;
    m.add_function(wrap_pyfunction!(tears_phantom, m)?)?;
    Ok(())
}
