use std::path::PathBuf;

use crate::decompose::PcaModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Display strings start with the variant name so command-line tools can
/// surface them verbatim (`RaggedRows row=12 ...`).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("IoFailure path={path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CsvFailure: {0}")]
    Csv(#[from] csv::Error),
    #[error("JsonFailure: {0}")]
    Json(#[from] serde_json::Error),

    #[error("MissingAxisHeader: first column must be `wavenumber_cm-1`, found `{found}`")]
    MissingAxisHeader { found: String },
    #[error("NonmonotonicAxis row={row}: wavenumbers must be strictly increasing")]
    NonmonotonicAxis { row: usize },
    #[error("RaggedRows row={row}: expected {expected} fields, found {found}")]
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("NonFiniteValue row={row} column={column}: `{value}`")]
    NonFiniteValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("TooFewSpectra: found {found}, need at least {required}")]
    TooFewSpectra { found: usize, required: usize },
    #[error("TooFewChannels: found {found}, need at least {required}")]
    TooFewChannels { found: usize, required: usize },
    #[error("DuplicateLabel label={label}")]
    DuplicateLabel { label: String },
    #[error("LabelMismatch label={label}: sample present in one file but not the other")]
    LabelMismatch { label: String },
    #[error("NegativeConcentration species={species} label={label}: {value}")]
    NegativeConcentration {
        species: String,
        label: String,
        value: f64,
    },
    #[error("EmptyMatrix")]
    EmptyMatrix,
    #[error("AxisMismatch: spectra axis differs from the model axis")]
    AxisMismatch,
    #[error("ShapeMismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("InvalidParameter step={step}: {reason}")]
    InvalidParameter { step: &'static str, reason: String },
    #[error("ZeroVariance: spectrum has zero standard deviation")]
    ZeroVariance,
    #[error("DegenerateSubset: {0}")]
    DegenerateSubset(String),
    #[error("WindowTooLarge: window {window} exceeds spectrum length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("BadOrder: {0}")]
    BadOrder(String),
    #[error("NonuniformAxis: channel spacing varies by more than 0.1%")]
    NonuniformAxis,
    #[error("WindowOutsideAxis: [{lo}, {hi}] cm-1 not inside the axis")]
    WindowOutsideAxis { lo: f64, hi: f64 },
    #[error("NonpositivePeak: reference peak maximum {0} is not positive")]
    NonpositivePeak(f64),
    #[error("PipelineSyntax `{input}`: {reason}")]
    PipelineSyntax { input: String, reason: String },
    #[error("StepFailure label={label} step={step}: {source}")]
    Step {
        label: String,
        step: String,
        #[source]
        source: Box<Error>,
    },

    #[error("NoConvergence component={component}")]
    NoConvergence {
        component: usize,
        partial: Box<PcaModel>,
    },
    #[error("RankDeficient: {found} of {requested} components found")]
    RankDeficient {
        found: usize,
        requested: usize,
        partial: Box<PcaModel>,
    },
    #[error("SingularScores: condition number {condition:e}")]
    SingularScores { condition: f64 },

    #[error("FoldPreprocessFailure fold={label} step={step}: {source}")]
    FoldPreprocessFailure {
        label: String,
        step: String,
        #[source]
        source: Box<Error>,
    },
    #[error("DegenerateMatrix: PRESS values carry no variation")]
    DegenerateMatrix,
    #[error("TooFewGroups: {0}")]
    TooFewGroups(String),

    #[error("RecipeSpeciesMismatch: {0}")]
    RecipeSpeciesMismatch(String),
    #[error("InvalidRecipe: {0}")]
    InvalidRecipe(String),
    #[error("AllCandidatesFailed: {0}")]
    AllCandidatesFailed(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(step: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            step,
            reason: reason.into(),
        }
    }
}
