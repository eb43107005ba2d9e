//! End-to-end qualification of candidate pre-treatments.
//!
//! Every candidate pipeline is cross-validated and run through the PC
//! significance test. Candidates whose PRESS does not depend significantly on
//! the PC count are rejected; among the rest the one with the smallest PRESS
//! sum at its own optimal PC is chosen.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crossval::{loo_press_matrix_with, CrossValOptions, FoldNote, PressMatrix};
use crate::decompose::{nipals_fit, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::preprocess::{apply_pipeline, Pipeline};
use crate::regress::{pcr_fit, press, PcrModel};
use crate::significance::{select_optimal_pc_scaled, PcVerdict, PressScale, DEFAULT_ALPHA};
use crate::spectra::{ConcentrationSet, SpectraSet};

const REPORT_FORMAT: &str = "raman-pcr-selection";

/// A pipeline under evaluation, with the name it is reported under.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub pipeline: Pipeline,
}

impl Candidate {
    pub fn new(pipeline: Pipeline) -> Self {
        Candidate {
            label: pipeline.name(),
            pipeline,
        }
    }

    pub fn labeled(label: impl Into<String>, pipeline: Pipeline) -> Self {
        Candidate {
            label: label.into(),
            pipeline,
        }
    }

    /// Parses `pipeline` or `label=pipeline`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.split_once('=') {
            Some((label, spec)) => Ok(Candidate::labeled(label.trim(), spec.parse()?)),
            None => Ok(Candidate::new(text.parse()?)),
        }
    }
}

/// The stock candidate grid.
pub fn default_candidates() -> Vec<Candidate> {
    [
        "identity",
        "snv",
        "rnv(75)",
        "rnv(90)",
        "savitzky_golay(7,2,0)",
        "derivative(1)",
        "derivative(2)",
        "baseline_als(1e5,0.01,10)",
        "despike(7,8)",
        "baseline_als(1e5,0.01,10)|rnv(75)",
        "baseline_als(1e5,0.01,10)|rnv(90)",
        "despike(7,8)|baseline_als(1e5,0.01,10)",
        "savitzky_golay(7,2,0)|derivative(2)",
    ]
    .iter()
    .map(|s| Candidate::new(s.parse().expect("stock pipeline parses")))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub alpha: f64,
    pub scale: PressScale,
    pub crossval: CrossValOptions,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            alpha: DEFAULT_ALPHA,
            scale: PressScale::Raw,
            crossval: CrossValOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub label: String,
    pub pipeline: String,
    /// Set when the candidate could not be evaluated.
    pub error: Option<String>,
    pub significant: bool,
    pub optimal_pc: Option<usize>,
    pub sum_press_at_optimal: Option<f64>,
    pub verdict: Option<PcVerdict>,
    pub fold_notes: Vec<FoldNote>,
    pub negative_predictions: usize,
    /// Not serialised: reports must be byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
    #[serde(skip)]
    pub press: Option<PressMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub format: String,
    pub inputs_digest: String,
    pub n_spectra: usize,
    pub n_channels: usize,
    pub species: Vec<String>,
    pub alpha: f64,
    pub scale: PressScale,
    pub candidates: Vec<CandidateReport>,
    pub chosen_label: String,
    pub chosen_pipeline: String,
    pub chosen_pc: usize,
    /// False when no candidate passed the significance gate and the choice
    /// fell back to the smallest PRESS sum.
    pub chosen_significant: bool,
    pub alerts: Vec<String>,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn chosen(&self) -> Option<&CandidateReport> {
        self.candidates.iter().find(|c| c.label == self.chosen_label)
    }
}

/// SHA-256 over the numeric content and labels of both inputs.
pub fn inputs_digest(set: &SpectraSet, conc: &ConcentrationSet) -> String {
    let mut h = Sha256::new();
    for v in set.axis() {
        h.update(v.to_le_bytes());
    }
    for n in 0..set.n_spectra() {
        h.update(set.labels()[n].as_bytes());
        h.update([0u8]);
        for v in set.matrix().row(n).iter() {
            h.update(v.to_le_bytes());
        }
    }
    for (s, sp) in conc.species().iter().enumerate() {
        h.update(sp.name.as_bytes());
        h.update([0u8]);
        h.update(sp.unit.as_bytes());
        h.update([0u8]);
        for v in conc.matrix().row(s).iter() {
            h.update(v.to_le_bytes());
        }
    }
    for l in conc.labels() {
        h.update(l.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

pub fn select_method(
    set: &SpectraSet,
    conc: &ConcentrationSet,
    candidates: &[Candidate],
    alpha: f64,
) -> Result<SelectionReport> {
    let options = SelectOptions {
        alpha,
        ..SelectOptions::default()
    };
    select_method_with(set, conc, candidates, &options)
}

fn evaluate(set: &SpectraSet, conc: &ConcentrationSet, cand: &Candidate, options: &SelectOptions) -> CandidateReport {
    let started = Instant::now();
    let mut report = CandidateReport {
        label: cand.label.clone(),
        pipeline: cand.pipeline.name(),
        error: None,
        significant: false,
        optimal_pc: None,
        sum_press_at_optimal: None,
        verdict: None,
        fold_notes: Vec::new(),
        negative_predictions: 0,
        wall_time: Duration::ZERO,
        press: None,
    };
    let outcome = loo_press_matrix_with(set, conc, &cand.pipeline, &options.crossval)
        .and_then(|s| select_optimal_pc_scaled(&s, options.alpha, options.scale).map(|v| (s, v)));
    match outcome {
        Ok((s, verdict)) => {
            report.significant = verdict.significant;
            report.optimal_pc = Some(verdict.optimal_pc);
            report.sum_press_at_optimal = Some(verdict.sum_press_at_optimal());
            report.fold_notes = s.notes.clone();
            report.negative_predictions = s.negative_predictions;
            report.verdict = Some(verdict);
            report.press = Some(s);
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report.wall_time = started.elapsed();
    report
}

/// Runs the qualification procedure over `candidates`.
///
/// Individual candidate failures are recorded in the report; only when every
/// candidate fails is an error returned. Among equal PRESS sums the earlier
/// candidate wins and the tie is noted in `alerts`.
pub fn select_method_with(
    set: &SpectraSet,
    conc: &ConcentrationSet,
    candidates: &[Candidate],
    options: &SelectOptions,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::invalid("select", "no candidate pipelines"));
    }
    let conc = if conc.labels() == set.labels() {
        conc.clone()
    } else {
        conc.align_to(set.labels())?
    };
    let reports: Vec<CandidateReport> = candidates
        .par_iter()
        .map(|c| evaluate(set, &conc, c, options))
        .collect();

    let mut alerts = Vec::new();
    for r in &reports {
        if let Some(e) = &r.error {
            alerts.push(format!("candidate `{}` excluded: {e}", r.label));
        }
    }
    let evaluated: Vec<usize> = (0..reports.len()).filter(|&k| reports[k].error.is_none()).collect();
    if evaluated.is_empty() {
        return Err(Error::AllCandidatesFailed(
            reports
                .iter()
                .map(|r| format!("{}: {}", r.label, r.error.as_deref().unwrap_or("")))
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    for &k in &evaluated {
        let r = &reports[k];
        if !r.significant {
            alerts.push(format!("candidate `{}` rejected: PRESS not significant across PC counts", r.label));
        }
        if !r.fold_notes.is_empty() {
            alerts.push(format!(
                "candidate `{}`: {} fold(s) could not reach every PC count; missing PRESS cells excluded",
                r.label,
                r.fold_notes.len()
            ));
        }
        if r.negative_predictions > 0 {
            alerts.push(format!(
                "candidate `{}`: {} negative concentration prediction(s) during cross-validation",
                r.label, r.negative_predictions
            ));
        }
    }

    let significant: Vec<usize> = evaluated.iter().copied().filter(|&k| reports[k].significant).collect();
    let chosen_significant = !significant.is_empty();
    let pool = if chosen_significant { &significant } else { &evaluated };
    if !chosen_significant {
        alerts.push(
            "no candidate pre-treatment produced a significant PC effect on PRESS; \
             choice falls back to the smallest PRESS sum and the model is not qualified"
                .into(),
        );
    }
    let key = |k: usize| reports[k].sum_press_at_optimal.unwrap_or(f64::INFINITY);
    let mut best = pool[0];
    for &k in &pool[1..] {
        if key(k).total_cmp(&key(best)).is_lt() {
            best = k;
        }
    }
    let tied: Vec<&str> = pool
        .iter()
        .filter(|&&k| k != best && key(k) == key(best))
        .map(|&k| reports[k].label.as_str())
        .collect();
    if !tied.is_empty() {
        alerts.push(format!(
            "tie on PRESS sum between `{}` and {:?}; earlier candidate kept",
            reports[best].label, tied
        ));
    }

    Ok(SelectionReport {
        format: REPORT_FORMAT.into(),
        inputs_digest: inputs_digest(set, &conc),
        n_spectra: set.n_spectra(),
        n_channels: set.n_channels(),
        species: conc.species().iter().map(|s| s.name.clone()).collect(),
        alpha: options.alpha,
        scale: options.scale,
        chosen_label: reports[best].label.clone(),
        chosen_pipeline: reports[best].pipeline.clone(),
        chosen_pc: reports[best].optimal_pc.expect("evaluated candidate has a PC"),
        chosen_significant,
        candidates: reports,
        alerts,
    })
}

/// Fits the final model on every spectrum with `pc_count` components.
pub fn train_final(
    set: &SpectraSet,
    conc: &ConcentrationSet,
    pipeline: &Pipeline,
    pc_count: usize,
) -> Result<PcrModel> {
    if pc_count == 0 || pc_count + 1 > set.n_spectra() {
        return Err(Error::BadOrder(format!(
            "pc_count {pc_count} must lie in 1..={}",
            set.n_spectra().saturating_sub(1)
        )));
    }
    let conc = conc.align_to(set.labels())?;
    let processed = apply_pipeline(set, pipeline)?;
    let pca = nipals_fit(&processed, pc_count, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mut model = pcr_fit(&pca, &conc)?;
    model.pipeline = pipeline.clone();
    Ok(model)
}

/// Residuals of a model on spectra with known composition, for every
/// truncation of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutEvaluation {
    /// `rss[m - 1]`: residual sum of squares with `m` components.
    pub rss: Vec<f64>,
    /// `species_rss[m - 1][s]`: the same split by species.
    pub species_rss: Vec<Vec<f64>>,
}

impl HoldoutEvaluation {
    /// 1-based PC count with the smallest RSS.
    pub fn argmin_pc(&self) -> usize {
        self.rss
            .iter()
            .enumerate()
            .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)))
            .map(|(m, _)| m + 1)
            .unwrap_or(0)
    }

    pub fn min_rss(&self) -> f64 {
        self.rss.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `model` truncated to 1..=k components on raw `holdout`
/// spectra (the model pipeline is applied first).
pub fn evaluate_holdout(model: &PcrModel, holdout: &SpectraSet, truth: &ConcentrationSet) -> Result<HoldoutEvaluation> {
    if holdout.axis() != model.pca.axis.as_slice() {
        return Err(Error::AxisMismatch);
    }
    let truth = truth.align_to(holdout.labels())?;
    let processed = apply_pipeline(holdout, &model.pipeline)?;
    let mut rss = Vec::with_capacity(model.n_components());
    let mut species_rss = Vec::with_capacity(model.n_components());
    for m in 1..=model.n_components() {
        let est = model.truncate(m)?.predict(&processed)?;
        rss.push(press(&est, truth.matrix())?);
        species_rss.push(
            (0..est.nrows())
                .map(|s| {
                    est.row(s)
                        .iter()
                        .zip(truth.matrix().row(s).iter())
                        .map(|(e, t)| (e - t) * (e - t))
                        .sum()
                })
                .collect(),
        );
    }
    Ok(HoldoutEvaluation { rss, species_rss })
}
