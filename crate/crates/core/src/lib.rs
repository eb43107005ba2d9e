//! Principal component regression for Raman spectra, with a statistical
//! test for choosing the pre-treatment.
//!
//! Candidate pre-treatment pipelines are compared through leave-one-out
//! PRESS matrices. A pipeline qualifies only if a one-way ANOVA finds the
//! number of principal components to matter; the optimal PC count is then
//! picked from the components that beat the worst one.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossval;
pub mod decompose;
pub mod error;
pub mod preprocess;
pub mod regress;
pub mod selector;
mod serde_nan;
pub mod significance;
pub mod special;
pub mod spectra;
pub mod stats;
pub mod synth;

pub use crossval::{loo_press_matrix, loo_press_matrix_with, CrossValOptions, FoldIssue, FoldNote, PressMatrix};
pub use decompose::{nipals_fit, nipals_matrix, project, PcaModel};
pub use error::{Error, Result};
pub use preprocess::{apply_pipeline, Pipeline, PipelineStep, Step};
pub use regress::{pcr_fit, pcr_predict, press, PcrModel};
pub use selector::{
    default_candidates, evaluate_holdout, select_method, select_method_with, train_final, Candidate, CandidateReport,
    HoldoutEvaluation, SelectOptions, SelectionReport,
};
pub use significance::{
    anova_oneway, anova_oneway_scaled, boxplot_stats, select_optimal_pc, select_optimal_pc_scaled, AnovaResult,
    BoxplotStats, PcVerdict, PressScale,
};
pub use spectra::{
    load_concentrations, load_spectra, save_concentrations, save_spectra, ConcentrationSet, SpectraFormat, SpectraSet,
    Species, Spectrum,
};
pub use synth::{generate, tears_phantom, SynthRecipe};
