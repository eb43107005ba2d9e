//! Principal component regression: coefficients from scores, concentration
//! estimates for new spectra, and the PRESS error.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decompose::{project, PcaModel};
use crate::error::{Error, Result};
use crate::preprocess::{apply_pipeline, Pipeline};
use crate::spectra::{ConcentrationSet, SpectraSet, Species};

/// Largest accepted condition number of `T^T T`.
pub const MAX_SCORE_CONDITION: f64 = 1e12;

const MODEL_FORMAT: &str = "raman-pcr-model";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcrModel {
    pub pca: PcaModel,
    /// `q x k`; column `c` pairs with loading column `c`.
    pub coefficients: DMatrix<f64>,
    pub mean_conc: DVector<f64>,
    pub species: Vec<Species>,
    /// Pre-treatment the training spectra went through; applied to raw
    /// spectra by [`PcrModel::predict_raw`].
    pub pipeline: Pipeline,
}

impl PcrModel {
    pub fn n_components(&self) -> usize {
        self.coefficients.ncols()
    }

    /// Keeps the leading `k` components. Score columns are orthogonal, so the
    /// leading coefficients are those a fresh `k`-component fit would give.
    pub fn truncate(&self, k: usize) -> Result<PcrModel> {
        Ok(PcrModel {
            pca: self.pca.truncate(k)?,
            coefficients: self.coefficients.columns(0, k).into_owned(),
            mean_conc: self.mean_conc.clone(),
            species: self.species.clone(),
            pipeline: self.pipeline.clone(),
        })
    }

    /// Estimates for spectra that already went through the model pipeline.
    pub fn predict(&self, new_set: &SpectraSet) -> Result<DMatrix<f64>> {
        pcr_predict(self, new_set)
    }

    /// Applies the stored pipeline, then predicts.
    pub fn predict_raw(&self, raw: &SpectraSet) -> Result<DMatrix<f64>> {
        if raw.axis() != self.pca.axis.as_slice() {
            return Err(Error::AxisMismatch);
        }
        pcr_predict(self, &apply_pipeline(raw, &self.pipeline)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<PcrModel> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::InvalidParameter {
                step: "model",
                reason: format!("unsupported model file {} v{}", file.format, file.version),
            });
        }
        let m = file.model;
        let (j, k) = m.pca.loadings.shape();
        if m.pca.axis.len() != j
            || m.pca.mean_spectrum.len() != j
            || m.coefficients.shape() != (m.species.len(), k)
            || m.mean_conc.len() != m.species.len()
        {
            return Err(Error::ShapeMismatch {
                expected: (m.species.len(), k),
                found: m.coefficients.shape(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<PcrModel> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: PcrModel,
}

/// Least-squares coefficients `B` with `C_centered ≈ B T^T`, i.e.
/// `B = C_centered T (T^T T)^-1`, solved through a QR factorisation of `T`.
pub fn pcr_fit(pca: &PcaModel, conc: &ConcentrationSet) -> Result<PcrModel> {
    let scores = &pca.scores;
    let (i, k) = scores.shape();
    if conc.n_samples() != i {
        return Err(Error::ShapeMismatch {
            expected: (conc.n_species(), i),
            found: conc.matrix().shape(),
        });
    }
    if k == 0 {
        return Err(Error::BadOrder("regression needs at least one component".into()));
    }
    let c = conc.matrix();
    let q = c.nrows();
    let mean_conc = DVector::from_iterator(q, c.row_iter().map(|r| r.sum() / i as f64));
    let mut centred = c.clone();
    for (s, mut row) in centred.row_iter_mut().enumerate() {
        row.add_scalar_mut(-mean_conc[s]);
    }

    let qr = scores.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if !(condition <= MAX_SCORE_CONDITION) {
        return Err(Error::SingularScores { condition });
    }
    // B^T = R^-1 Q^T C_c^T
    let qtc = qr.q().tr_mul(&centred.transpose());
    let bt = r
        .solve_upper_triangular(&qtc)
        .ok_or(Error::SingularScores { condition })?;
    Ok(PcrModel {
        pca: pca.clone(),
        coefficients: bt.transpose(),
        mean_conc,
        species: conc.species().to_vec(),
        pipeline: Pipeline::identity(),
    })
}

/// `C_est = B (X_new P)^T + mean_conc`, shape `q x r`.
pub fn pcr_predict(model: &PcrModel, new_set: &SpectraSet) -> Result<DMatrix<f64>> {
    let t = project(&model.pca, new_set)?;
    let mut est = &model.coefficients * t.transpose();
    for (s, mut row) in est.row_iter_mut().enumerate() {
        row.add_scalar_mut(model.mean_conc[s]);
    }
    Ok(est)
}

/// Predicted residual sum of squares over every species and sample.
pub fn press(estimated: &DMatrix<f64>, actual: &DMatrix<f64>) -> Result<f64> {
    if estimated.shape() != actual.shape() {
        return Err(Error::ShapeMismatch {
            expected: actual.shape(),
            found: estimated.shape(),
        });
    }
    Ok(estimated.iter().zip(actual.iter()).map(|(e, a)| (e - a) * (e - a)).sum())
}
