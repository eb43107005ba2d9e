//! Leave-one-out cross-validation producing the PRESS matrix.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{nipals_fit, PcaModel, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::preprocess::{apply_pipeline, Pipeline};
use crate::regress::{pcr_fit, pcr_predict, press};
use crate::spectra::{save_labeled_matrix, ConcentrationSet, SpectraSet};

pub const MIN_SPECTRA: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldIssue {
    RankDeficient,
    NoConvergence,
    SingularScores,
}

/// Why a fold could not fill every PC column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldNote {
    /// Label of the held-out spectrum.
    pub label: String,
    pub issue: FoldIssue,
    /// Columns from this PC count upward are NaN.
    pub first_missing_pc: usize,
}

/// `i x (i - 2)` matrix of leave-one-out PRESS values. Entry `(n, m)` is the
/// PRESS of spectrum `n` held out and predicted with `m + 1` components.
#[derive(Debug, Clone, PartialEq)]
pub struct PressMatrix {
    pub values: DMatrix<f64>,
    pub pipeline: String,
    pub labels: Vec<String>,
    pub notes: Vec<FoldNote>,
    /// Held-out predictions below zero, summed over folds, species and PC counts.
    pub negative_predictions: usize,
}

impl PressMatrix {
    /// Wraps a bare matrix, e.g. for testing the significance layer.
    pub fn from_values(values: DMatrix<f64>) -> Self {
        let labels = (0..values.nrows()).map(|n| format!("row_{}", n + 1)).collect();
        PressMatrix {
            values,
            pipeline: Pipeline::identity().name(),
            labels,
            notes: Vec::new(),
            negative_predictions: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_pcs(&self) -> usize {
        self.values.ncols()
    }

    pub fn column_headers(&self) -> Vec<String> {
        (1..=self.n_pcs()).map(|m| format!("pc_{m}")).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_labeled_matrix(path, &self.values, &self.column_headers(), "sample", &self.labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossValOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for CrossValOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn loo_press_matrix(set: &SpectraSet, conc: &ConcentrationSet, pipeline: &Pipeline) -> Result<PressMatrix> {
    loo_press_matrix_with(set, conc, pipeline, &CrossValOptions::default())
}

/// Leave-one-out PRESS for 1..=i-2 components.
///
/// Every implemented step is spectrum-local, so pre-treating the whole set
/// once equals pre-treating each fold's training rows and its held-out
/// spectrum separately. A step that pools statistics across spectra would
/// have to be fitted on each fold's training rows instead.
///
/// Each fold is decomposed once with `i - 2` components and truncated per
/// column. Columns a fold cannot reach (rank deficiency, non-convergence,
/// ill-conditioned scores) are NaN and recorded in `notes`.
pub fn loo_press_matrix_with(
    set: &SpectraSet,
    conc: &ConcentrationSet,
    pipeline: &Pipeline,
    options: &CrossValOptions,
) -> Result<PressMatrix> {
    set.require_spectra(MIN_SPECTRA)?;
    let conc = if conc.labels() == set.labels() {
        conc.clone()
    } else {
        conc.align_to(set.labels())?
    };
    let processed = apply_pipeline(set, pipeline).map_err(|e| match e {
        Error::Step { label, step, source } => Error::FoldPreprocessFailure { label, step, source },
        other => other,
    })?;
    let i = set.n_spectra();
    let kmax = i - 2;
    let folds: Vec<Result<FoldResult>> = (0..i)
        .into_par_iter()
        .map(|n| fold_press(&processed, &conc, n, kmax, options))
        .collect();

    let mut values = DMatrix::from_element(i, kmax, f64::NAN);
    let mut notes = Vec::new();
    let mut negative_predictions = 0;
    for (n, fold) in folds.into_iter().enumerate() {
        let fold = fold?;
        values.row_mut(n).copy_from_slice(&fold.press);
        notes.extend(fold.note);
        negative_predictions += fold.negatives;
    }
    Ok(PressMatrix {
        values,
        pipeline: pipeline.name(),
        labels: set.labels().to_vec(),
        notes,
        negative_predictions,
    })
}

struct FoldResult {
    press: Vec<f64>,
    note: Option<FoldNote>,
    negatives: usize,
}

fn fold_press(
    processed: &SpectraSet,
    conc: &ConcentrationSet,
    held_out: usize,
    kmax: usize,
    options: &CrossValOptions,
) -> Result<FoldResult> {
    let i = processed.n_spectra();
    let train: Vec<usize> = (0..i).filter(|&n| n != held_out).collect();
    let train_set = processed.select_rows(&train);
    let train_conc = conc.select_columns(&train);
    let test_set = processed.select_rows(&[held_out]);
    let test_conc = conc.select_columns(&[held_out]);
    let label = processed.labels()[held_out].clone();

    let mut note = None;
    let (pca, reached): (PcaModel, usize) = match nipals_fit(&train_set, kmax, options.tol, options.max_iter) {
        Ok(m) => (m, kmax),
        Err(Error::RankDeficient { found, partial, .. }) => {
            note = Some(FoldNote {
                label: label.clone(),
                issue: FoldIssue::RankDeficient,
                first_missing_pc: found + 1,
            });
            (*partial, found)
        }
        Err(Error::NoConvergence { component, partial }) => {
            note = Some(FoldNote {
                label: label.clone(),
                issue: FoldIssue::NoConvergence,
                first_missing_pc: component + 1,
            });
            (*partial, component)
        }
        Err(e) => return Err(e),
    };

    let mut out = vec![f64::NAN; kmax];
    let mut negatives = 0;
    for m in 1..=reached {
        let model = match pcr_fit(&pca.truncate(m)?, &train_conc) {
            Ok(model) => model,
            Err(Error::SingularScores { .. }) => {
                note = Some(FoldNote {
                    label: label.clone(),
                    issue: FoldIssue::SingularScores,
                    first_missing_pc: m,
                });
                break;
            }
            Err(e) => return Err(e),
        };
        let est = pcr_predict(&model, &test_set)?;
        negatives += est.iter().filter(|v| **v < 0.0).count();
        out[m - 1] = press(&est, test_conc.matrix())?;
    }
    Ok(FoldResult {
        press: out,
        note,
        negatives,
    })
}
