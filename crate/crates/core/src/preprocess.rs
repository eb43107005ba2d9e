//! Per-spectrum pre-treatments and their composition into pipelines.
//!
//! Every operation here works on one intensity vector at a time, so a
//! pipeline applied to a set is exactly the per-row application.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraSet;
use crate::stats;

/// Standard normal variate: `(x - mean) / std`, sample standard deviation.
pub fn snv(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let mu = stats::mean(x);
    let sd = stats::sample_std(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    Ok(x.iter().map(|v| (v - mu) / sd).collect())
}

/// Robust normal variate: centre on a percentile and scale by the standard
/// deviation of the values at or below it.
pub fn rnv(x: &[f64], percentile: f64) -> Result<Vec<f64>> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::invalid("rnv", format!("percentile {percentile} outside (0, 100]")));
    }
    let sorted = stats::sorted(x);
    if sorted.is_empty() {
        return Err(Error::DegenerateSubset("empty spectrum".into()));
    }
    let pct = stats::percentile_sorted(&sorted, percentile);
    // ties at the percentile value are included
    let below: Vec<f64> = x.iter().copied().filter(|v| *v <= pct).collect();
    if below.len() < 2 {
        return Err(Error::DegenerateSubset(format!(
            "{} value(s) at or below percentile {percentile}",
            below.len()
        )));
    }
    let sd = stats::sample_std(&below);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSubset(format!(
            "zero spread at or below percentile {percentile}"
        )));
    }
    Ok(x.iter().map(|v| (v - pct) / sd).collect())
}

fn check_sg(len: usize, window: usize, polyorder: usize, deriv: usize) -> Result<()> {
    if window.is_multiple_of(2) || window < 5 {
        return Err(Error::invalid("savitzky_golay", format!("window {window} must be odd and >= 5")));
    }
    if polyorder >= window {
        return Err(Error::BadOrder(format!("polyorder {polyorder} must be below window {window}")));
    }
    if deriv > polyorder {
        return Err(Error::BadOrder(format!("deriv {deriv} exceeds polyorder {polyorder}")));
    }
    if window > len {
        return Err(Error::WindowTooLarge { window, len });
    }
    Ok(())
}

/// Savitzky-Golay weights for evaluating the `deriv`-th derivative of the
/// local least-squares polynomial at `offset` channels from the window centre.
///
/// The derivative is per channel; divide by `spacing^deriv` for physical units.
pub fn savitzky_golay_weights(window: usize, polyorder: usize, deriv: usize, offset: isize) -> Result<Vec<f64>> {
    check_sg(window, window, polyorder, deriv)?;
    let half = (window / 2) as f64;
    if offset.unsigned_abs() > window / 2 {
        return Err(Error::invalid("savitzky_golay", format!("offset {offset} outside the window")));
    }
    let ncoef = polyorder + 1;
    // Positions scaled to [-1, 1] keep the Vandermonde matrix well conditioned.
    let vander = DMatrix::from_fn(window, ncoef, |r, k| {
        let z = (r as f64 - half) / half;
        z.powi(k as i32)
    });
    let tau = offset as f64 / half;
    let mut e = DVector::zeros(ncoef);
    for k in deriv..ncoef {
        let falling: f64 = ((k - deriv + 1)..=k).map(|v| v as f64).product();
        e[k] = falling * tau.powi((k - deriv) as i32);
    }
    let qr = vander.clone().qr();
    let r = qr.r();
    // (A^T A)^{-1} e = R^{-1} R^{-T} e
    let y = r
        .transpose()
        .solve_lower_triangular(&e)
        .ok_or_else(|| Error::BadOrder("singular Savitzky-Golay design".into()))?;
    let g = r
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::BadOrder("singular Savitzky-Golay design".into()))?;
    let w = &vander * g;
    let scale = half.powi(deriv as i32);
    Ok(w.iter().map(|v| v / scale).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Savitzky-Golay smoothing or differentiation.
///
/// Interior points use the centred window. The first and last `window / 2`
/// points are evaluated off-centre on the first/last full window, so the
/// output keeps the input length without padding.
pub fn savitzky_golay(x: &[f64], window: usize, polyorder: usize, deriv: usize, spacing: f64) -> Result<Vec<f64>> {
    check_sg(x.len(), window, polyorder, deriv)?;
    if deriv > 0 && !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::invalid("savitzky_golay", format!("spacing {spacing} must be positive")));
    }
    let half = window / 2;
    let n = x.len();
    let unit = spacing.powi(deriv as i32);
    let centre = savitzky_golay_weights(window, polyorder, deriv, 0)?;
    let mut out = vec![0.0; n];
    for c in half..n - half {
        out[c] = dot(&centre, &x[c - half..=c + half]);
    }
    let head = &x[..window];
    let tail = &x[n - window..];
    for k in 0..half {
        let w = savitzky_golay_weights(window, polyorder, deriv, k as isize - half as isize)?;
        out[k] = dot(&w, head);
        let w = savitzky_golay_weights(window, polyorder, deriv, (k + 1) as isize)?;
        out[n - half + k] = dot(&w, tail);
    }
    if deriv > 0 {
        for v in &mut out {
            *v /= unit;
        }
    }
    Ok(out)
}

/// Returns the mean channel spacing if every step lies within 0.1% of it.
pub fn uniform_spacing(axis: &[f64]) -> Result<f64> {
    if axis.len() < 2 {
        return Err(Error::NonuniformAxis);
    }
    let h = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::NonuniformAxis);
    }
    if axis.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-3 * h) {
        return Err(Error::NonuniformAxis);
    }
    Ok(h)
}

/// Finite-difference derivative along the wavenumber axis.
///
/// Central differences inside, one-sided differences at the two ends.
pub fn derivative(x: &[f64], axis: &[f64], order: usize) -> Result<Vec<f64>> {
    if x.len() != axis.len() {
        return Err(Error::ShapeMismatch {
            expected: (1, axis.len()),
            found: (1, x.len()),
        });
    }
    if !(order == 1 || order == 2) {
        return Err(Error::BadOrder(format!("derivative order {order} must be 1 or 2")));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewChannels { found: n, required: 3 });
    }
    let h = uniform_spacing(axis)?;
    let mut out = vec![0.0; n];
    match order {
        1 => {
            out[0] = (x[1] - x[0]) / h;
            out[n - 1] = (x[n - 1] - x[n - 2]) / h;
            for c in 1..n - 1 {
                out[c] = (x[c + 1] - x[c - 1]) / (2.0 * h);
            }
        }
        _ => {
            let h2 = h * h;
            out[0] = (x[0] - 2.0 * x[1] + x[2]) / h2;
            out[n - 1] = (x[n - 1] - 2.0 * x[n - 2] + x[n - 3]) / h2;
            for c in 1..n - 1 {
                out[c] = (x[c + 1] - 2.0 * x[c] + x[c - 1]) / h2;
            }
        }
    }
    Ok(out)
}

/// Symmetric positive-definite pentadiagonal system, solved by banded
/// Cholesky. `diag`, `off1`, `off2` hold the main and the first/second
/// sub-diagonals.
fn solve_pentadiagonal(diag: &[f64], off1: &[f64], off2: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut l0 = vec![0.0; n];
    let mut l1 = vec![0.0; n];
    let mut l2 = vec![0.0; n];
    for i in 0..n {
        if i >= 2 {
            l2[i] = off2[i - 2] / l0[i - 2];
        }
        if i >= 1 {
            let mut v = off1[i - 1];
            if i >= 2 {
                v -= l2[i] * l1[i - 1];
            }
            l1[i] = v / l0[i - 1];
        }
        let d = diag[i] - l1[i] * l1[i] - l2[i] * l2[i];
        l0[i] = d.sqrt();
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut v = rhs[i];
        if i >= 1 {
            v -= l1[i] * y[i - 1];
        }
        if i >= 2 {
            v -= l2[i] * y[i - 2];
        }
        y[i] = v / l0[i];
    }
    let mut z = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = y[i];
        if i + 1 < n {
            v -= l1[i + 1] * z[i + 1];
        }
        if i + 2 < n {
            v -= l2[i + 2] * z[i + 2];
        }
        z[i] = v / l0[i];
    }
    z
}

/// Baseline estimate and corrected spectrum from [`baseline_als`].
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineFit {
    pub corrected: Vec<f64>,
    pub baseline: Vec<f64>,
}

/// Asymmetric least-squares baseline.
///
/// Minimises `sum w (x - z)^2 + lambda * sum (second difference of z)^2`,
/// re-weighting with `p` where the signal is above the baseline and `1 - p`
/// where it is below.
pub fn baseline_als(x: &[f64], lambda: f64, p: f64, iterations: usize) -> Result<BaselineFit> {
    validate_als(lambda, p, iterations)?;
    let n = x.len();
    if n < 8 {
        return Err(Error::TooFewChannels { found: n, required: 8 });
    }
    // lambda * D^T D for the second-difference operator D
    let mut pd = vec![0.0; n];
    let mut p1 = vec![0.0; n - 1];
    let mut p2 = vec![0.0; n - 2];
    let stencil = [1.0, -2.0, 1.0];
    for r in 0..n - 2 {
        for a in 0..3 {
            pd[r + a] += lambda * stencil[a] * stencil[a];
            if a + 1 < 3 {
                p1[r + a] += lambda * stencil[a] * stencil[a + 1];
            }
        }
        p2[r] += lambda * stencil[0] * stencil[2];
    }
    let mut w = vec![1.0; n];
    let mut z = Vec::new();
    for _ in 0..iterations {
        let diag: Vec<f64> = pd.iter().zip(&w).map(|(d, wi)| d + wi).collect();
        let rhs: Vec<f64> = w.iter().zip(x).map(|(wi, xi)| wi * xi).collect();
        z = solve_pentadiagonal(&diag, &p1, &p2, &rhs);
        for ((wi, xi), zi) in w.iter_mut().zip(x).zip(&z) {
            *wi = if xi > zi { p } else { 1.0 - p };
        }
    }
    let corrected = x.iter().zip(&z).map(|(a, b)| a - b).collect();
    Ok(BaselineFit { corrected, baseline: z })
}

fn validate_als(lambda: f64, p: f64, iterations: usize) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("baseline_als", format!("lambda {lambda} must be positive")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("baseline_als", format!("asymmetry {p} outside (0, 1)")));
    }
    if iterations == 0 {
        return Err(Error::invalid("baseline_als", "iterations must be >= 1"));
    }
    Ok(())
}

fn validate_despike(window: usize, threshold: f64) -> Result<()> {
    if window.is_multiple_of(2) || window < 3 {
        return Err(Error::invalid("despike", format!("window {window} must be odd and >= 3")));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid("despike", format!("threshold {threshold} must be positive")));
    }
    Ok(())
}

/// Cosmic-spike removal.
///
/// A point whose distance from its running median exceeds
/// `threshold * MAD` of the same window is replaced by that median. Windows
/// stay centred and narrow near the ends; points whose window would hold
/// fewer than `min(window, 5)` values are left alone. All statistics come
/// from the unmodified input.
pub fn despike(x: &[f64], window: usize, threshold: f64) -> Result<Vec<f64>> {
    validate_despike(window, threshold)?;
    let n = x.len();
    if window > n {
        return Err(Error::WindowTooLarge { window, len: n });
    }
    let smallest = window.min(5);
    let mut out = x.to_vec();
    let mut buf = Vec::with_capacity(window);
    for c in 0..n {
        // centred window, narrowed near the ends
        let half = (window / 2).min(c).min(n - 1 - c);
        if 2 * half + 1 < smallest {
            continue;
        }
        let win = &x[c - half..=c + half];
        buf.clear();
        buf.extend_from_slice(win);
        buf.sort_by(f64::total_cmp);
        let med = buf[half];
        let dev = (x[c] - med).abs();
        if dev == 0.0 {
            continue;
        }
        buf.clear();
        buf.extend(win.iter().map(|v| (v - med).abs()));
        buf.sort_by(f64::total_cmp);
        let mad = buf[half];
        if dev > threshold * mad {
            out[c] = med;
        }
    }
    Ok(out)
}

/// Divides by the maximum intensity inside `reference ± half_width`.
pub fn peak_normalize(x: &[f64], axis: &[f64], reference: f64, half_width: f64) -> Result<Vec<f64>> {
    if !(half_width >= 0.0) {
        return Err(Error::invalid("peak_normalize", format!("half width {half_width} must be >= 0")));
    }
    let lo = reference - half_width;
    let hi = reference + half_width;
    let (first, last) = match (axis.first(), axis.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => return Err(Error::WindowOutsideAxis { lo, hi }),
    };
    if lo < first || hi > last {
        return Err(Error::WindowOutsideAxis { lo, hi });
    }
    let peak = axis
        .iter()
        .zip(x)
        .filter(|(nu, _)| **nu >= lo && **nu <= hi)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Err(Error::WindowOutsideAxis { lo, hi });
    }
    if !(peak > 0.0) {
        return Err(Error::NonpositivePeak(peak));
    }
    Ok(x.iter().map(|v| v / peak).collect())
}

/// Parameters of one pipeline step. Only reachable through the validating
/// constructors on [`PipelineStep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Snv,
    Rnv { percentile: f64 },
    SavitzkyGolay { window: usize, polyorder: usize, deriv: usize },
    Derivative { order: usize },
    BaselineAls { lambda: f64, p: f64, iterations: usize },
    Despike { window: usize, threshold: f64 },
    PeakNormalize { reference: f64, half_width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineStep(Step);

pub const DEFAULT_ALS: (f64, f64, usize) = (1e5, 0.01, 10);
pub const DEFAULT_DESPIKE: (usize, f64) = (7, 8.0);
pub const DEFAULT_SG: (usize, usize, usize) = (7, 2, 0);
pub const DEFAULT_RNV_PERCENTILE: f64 = 75.0;
pub const DEFAULT_PEAK_HALF_WIDTH: f64 = 10.0;

impl PipelineStep {
    pub fn snv() -> Self {
        PipelineStep(Step::Snv)
    }

    pub fn rnv(percentile: f64) -> Result<Self> {
        if !(percentile > 0.0 && percentile < 100.0) {
            return Err(Error::invalid("rnv", format!("percentile {percentile} outside (0, 100)")));
        }
        Ok(PipelineStep(Step::Rnv { percentile }))
    }

    pub fn savitzky_golay(window: usize, polyorder: usize, deriv: usize) -> Result<Self> {
        check_sg(window, window, polyorder, deriv)?;
        Ok(PipelineStep(Step::SavitzkyGolay {
            window,
            polyorder,
            deriv,
        }))
    }

    pub fn derivative(order: usize) -> Result<Self> {
        if !(order == 1 || order == 2) {
            return Err(Error::BadOrder(format!("derivative order {order} must be 1 or 2")));
        }
        Ok(PipelineStep(Step::Derivative { order }))
    }

    pub fn baseline_als(lambda: f64, p: f64, iterations: usize) -> Result<Self> {
        validate_als(lambda, p, iterations)?;
        Ok(PipelineStep(Step::BaselineAls { lambda, p, iterations }))
    }

    pub fn despike(window: usize, threshold: f64) -> Result<Self> {
        validate_despike(window, threshold)?;
        Ok(PipelineStep(Step::Despike { window, threshold }))
    }

    pub fn peak_normalize(reference: f64, half_width: f64) -> Result<Self> {
        if !reference.is_finite() || !(half_width >= 0.0 && half_width.is_finite()) {
            return Err(Error::invalid(
                "peak_normalize",
                format!("reference {reference} / half width {half_width} invalid"),
            ));
        }
        Ok(PipelineStep(Step::PeakNormalize { reference, half_width }))
    }

    pub fn step(&self) -> Step {
        self.0
    }

    /// Canonical text form, e.g. `baseline_als(1e5,0.01,10)`.
    pub fn name(&self) -> String {
        match self.0 {
            Step::Snv => "snv".into(),
            Step::Rnv { percentile } => format!("rnv({})", fmt_param(percentile)),
            Step::SavitzkyGolay {
                window,
                polyorder,
                deriv,
            } => format!("savitzky_golay({window},{polyorder},{deriv})"),
            Step::Derivative { order } => format!("derivative({order})"),
            Step::BaselineAls { lambda, p, iterations } => {
                format!("baseline_als({},{},{iterations})", fmt_param(lambda), fmt_param(p))
            }
            Step::Despike { window, threshold } => format!("despike({window},{})", fmt_param(threshold)),
            Step::PeakNormalize { reference, half_width } => {
                format!("peak_normalize({},{})", fmt_param(reference), fmt_param(half_width))
            }
        }
    }

    /// Applies the step to one spectrum on `axis`.
    pub fn apply(&self, x: &[f64], axis: &[f64]) -> Result<Vec<f64>> {
        match self.0 {
            Step::Snv => snv(x),
            Step::Rnv { percentile } => rnv(x, percentile),
            Step::SavitzkyGolay {
                window,
                polyorder,
                deriv,
            } => {
                let spacing = if deriv > 0 { uniform_spacing(axis)? } else { 1.0 };
                savitzky_golay(x, window, polyorder, deriv, spacing)
            }
            Step::Derivative { order } => derivative(x, axis, order),
            Step::BaselineAls { lambda, p, iterations } => baseline_als(x, lambda, p, iterations).map(|f| f.corrected),
            Step::Despike { window, threshold } => despike(x, window, threshold),
            Step::PeakNormalize { reference, half_width } => peak_normalize(x, axis, reference, half_width),
        }
    }
}

/// Shortest of plain and exponent notation; `100000` prints as `1e5`.
fn fmt_param(v: f64) -> String {
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

/// Ordered list of steps. Equality and hashing go through the canonical
/// name, so two pipelines are equal exactly when their names are.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Pipeline {
    steps: Vec<PipelineStep>,
}

impl Pipeline {
    pub fn new(steps: Vec<PipelineStep>) -> Self {
        Self { steps }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn steps(&self) -> &[PipelineStep] {
        &self.steps
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn name(&self) -> String {
        if self.steps.is_empty() {
            return "identity".into();
        }
        self.steps.iter().map(PipelineStep::name).collect::<Vec<_>>().join("|")
    }

    /// Runs every step in order on one spectrum. Errors carry the step name.
    pub fn apply(&self, x: &[f64], axis: &[f64]) -> Result<Vec<f64>> {
        self.apply_labeled(x, axis, "")
    }

    fn apply_labeled(&self, x: &[f64], axis: &[f64], label: &str) -> Result<Vec<f64>> {
        let mut cur = x.to_vec();
        for step in &self.steps {
            cur = step.apply(&cur, axis).map_err(|e| Error::Step {
                label: label.to_string(),
                step: step.name(),
                source: Box::new(e),
            })?;
        }
        Ok(cur)
    }
}

impl PartialEq for Pipeline {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl Eq for Pipeline {}

impl std::hash::Hash for Pipeline {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.name().hash(state)
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl From<Pipeline> for String {
    fn from(p: Pipeline) -> String {
        p.name()
    }
}

impl TryFrom<String> for Pipeline {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    /// Parses `step(arg,...)|step(arg,...)`, case-insensitively. Omitted
    /// arguments take their defaults; `identity`, `none` or an empty string
    /// give the empty pipeline.
    fn from_str(input: &str) -> Result<Self> {
        let syntax = |reason: String| Error::PipelineSyntax {
            input: input.to_string(),
            reason,
        };
        let text = input.trim().to_ascii_lowercase();
        if text.is_empty() || text == "identity" || text == "none" {
            return Ok(Pipeline::identity());
        }
        let mut steps = Vec::new();
        for part in text.split('|') {
            let part = part.trim();
            let (name, args) = match part.find('(') {
                Some(open) => {
                    if !part.ends_with(')') {
                        return Err(syntax(format!("missing `)` in `{part}`")));
                    }
                    let inner = &part[open + 1..part.len() - 1];
                    let args: Vec<&str> = if inner.trim().is_empty() {
                        Vec::new()
                    } else {
                        inner.split(',').map(str::trim).collect()
                    };
                    (part[..open].trim(), args)
                }
                None => (part, Vec::new()),
            };
            let num = |k: usize, default: Option<f64>| -> Result<f64> {
                match args.get(k) {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|_| syntax(format!("argument `{a}` of `{name}` is not a number"))),
                    None => default.ok_or_else(|| syntax(format!("`{name}` needs argument {}", k + 1))),
                }
            };
            let int = |k: usize, default: Option<usize>| -> Result<usize> {
                let v = num(k, default.map(|d| d as f64))?;
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(syntax(format!("argument {} of `{name}` must be a whole number", k + 1)));
                }
                Ok(v as usize)
            };
            let max_args = |n: usize| -> Result<()> {
                if args.len() > n {
                    return Err(syntax(format!("`{name}` takes at most {n} argument(s)")));
                }
                Ok(())
            };
            let step = match name {
                "snv" => {
                    max_args(0)?;
                    PipelineStep::snv()
                }
                "rnv" => {
                    max_args(1)?;
                    PipelineStep::rnv(num(0, Some(DEFAULT_RNV_PERCENTILE))?)?
                }
                "savitzky_golay" | "sg" => {
                    max_args(3)?;
                    PipelineStep::savitzky_golay(
                        int(0, Some(DEFAULT_SG.0))?,
                        int(1, Some(DEFAULT_SG.1))?,
                        int(2, Some(DEFAULT_SG.2))?,
                    )?
                }
                "derivative" | "deriv" => {
                    max_args(1)?;
                    PipelineStep::derivative(int(0, Some(1))?)?
                }
                "baseline_als" | "als" | "baseline" => {
                    max_args(3)?;
                    PipelineStep::baseline_als(
                        num(0, Some(DEFAULT_ALS.0))?,
                        num(1, Some(DEFAULT_ALS.1))?,
                        int(2, Some(DEFAULT_ALS.2))?,
                    )?
                }
                "despike" => {
                    max_args(2)?;
                    PipelineStep::despike(int(0, Some(DEFAULT_DESPIKE.0))?, num(1, Some(DEFAULT_DESPIKE.1))?)?
                }
                "peak_normalize" | "peak" => {
                    max_args(2)?;
                    PipelineStep::peak_normalize(num(0, None)?, num(1, Some(DEFAULT_PEAK_HALF_WIDTH))?)?
                }
                other => return Err(syntax(format!("unknown step `{other}`"))),
            };
            steps.push(step);
        }
        Ok(Pipeline { steps })
    }
}

/// Applies `pipeline` to every spectrum of `set`. The axis is unchanged.
/// The first failing spectrum (in row order) is reported with its label.
pub fn apply_pipeline(set: &SpectraSet, pipeline: &Pipeline) -> Result<SpectraSet> {
    if pipeline.is_identity() {
        return Ok(set.clone());
    }
    let axis = set.axis();
    let rows: Vec<Result<Vec<f64>>> = (0..set.n_spectra())
        .into_par_iter()
        .map(|n| pipeline.apply_labeled(&set.row(n), axis, &set.labels()[n]))
        .collect();
    let mut out = DMatrix::zeros(set.n_spectra(), set.n_channels());
    for (n, row) in rows.into_iter().enumerate() {
        let row = row?;
        if row.len() != set.n_channels() {
            return Err(Error::ShapeMismatch {
                expected: (1, set.n_channels()),
                found: (1, row.len()),
            });
        }
        out.row_mut(n).copy_from_slice(&row);
    }
    set.with_matrix(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn snv_symmetric_case() {
        assert!(close(&snv(&[1.0, 2.0, 3.0]).unwrap(), &[-1.0, 0.0, 1.0], 1e-15));
        assert!(matches!(snv(&[5.0; 4]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn rnv_hand_percentile() {
        let s2 = 2f64.sqrt();
        assert!(close(&rnv(&[1.0, 2.0, 3.0], 50.0).unwrap(), &[-s2, 0.0, s2], 1e-12));
        assert!(matches!(rnv(&[5.0, 5.0, 5.0, 9.0], 50.0), Err(Error::DegenerateSubset(_))));
    }

    #[test]
    fn rnv_at_full_percentile_uses_whole_vector() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let max = 9.0;
        let sd = stats::sample_std(&x);
        let expected: Vec<f64> = x.iter().map(|v| (v - max) / sd).collect();
        assert!(close(&rnv(&x, 100.0).unwrap(), &expected, 1e-12));
    }

    #[test]
    fn sg_edges_use_off_centre_fits() {
        // A line is reproduced exactly by any polyorder >= 1, edges included.
        let x: Vec<f64> = (0..20).map(|c| 3.0 * c as f64 - 7.0).collect();
        let y = savitzky_golay(&x, 7, 1, 0, 1.0).unwrap();
        assert!(close(&x, &y, 1e-10));
        let d = savitzky_golay(&x, 7, 2, 1, 0.5).unwrap();
        assert!(d.iter().all(|v| (v - 6.0).abs() < 1e-10));
    }

    #[test]
    fn sg_parameter_errors() {
        let x = vec![0.0; 9];
        assert!(matches!(savitzky_golay(&x, 11, 2, 0, 1.0), Err(Error::WindowTooLarge { .. })));
        assert!(matches!(savitzky_golay(&x, 5, 5, 0, 1.0), Err(Error::BadOrder(_))));
        assert!(matches!(savitzky_golay(&x, 5, 2, 3, 1.0), Err(Error::BadOrder(_))));
        assert!(matches!(savitzky_golay(&x, 6, 2, 0, 1.0), Err(Error::InvalidParameter { .. })));
    }

    #[test]
    fn derivative_annihilates_offsets_and_slopes() {
        let axis: Vec<f64> = (0..30).map(|c| 500.0 + 2.0 * c as f64).collect();
        let ramp: Vec<f64> = axis.iter().map(|v| v + 7.0).collect();
        let d1 = derivative(&ramp, &axis, 1).unwrap();
        assert!(d1.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let line: Vec<f64> = axis.iter().map(|v| -0.3 * v + 12.0).collect();
        assert!(derivative(&line, &axis, 2).unwrap().iter().all(|v| v.abs() < 1e-9));

        let unit: Vec<f64> = (0..12).map(f64::from).collect();
        let sq: Vec<f64> = unit.iter().map(|v| v * v).collect();
        let d2 = derivative(&sq, &unit, 2).unwrap();
        assert!(d2[1..11].iter().all(|v| (v - 2.0).abs() < 1e-12));

        let mut bent = axis.clone();
        bent[10] += 0.5;
        assert!(matches!(derivative(&ramp, &bent, 1), Err(Error::NonuniformAxis)));
        assert!(matches!(derivative(&ramp, &axis, 3), Err(Error::BadOrder(_))));
    }

    #[test]
    fn als_zero_spectrum() {
        let fit = baseline_als(&[0.0; 50], 1e5, 0.01, 10).unwrap();
        assert!(fit.baseline.iter().all(|v| *v == 0.0));
        assert!(fit.corrected.iter().all(|v| *v == 0.0));
        assert!(baseline_als(&[0.0; 50], -1.0, 0.01, 10).is_err());
        assert!(baseline_als(&[0.0; 50], 1.0, 1.0, 10).is_err());
        assert!(baseline_als(&[0.0; 50], 1.0, 0.5, 0).is_err());
    }

    #[test]
    fn pentadiagonal_matches_dense_solve() {
        let n = 12;
        let diag: Vec<f64> = (0..n).map(|k| 10.0 + k as f64).collect();
        let off1: Vec<f64> = (0..n - 1).map(|k| -1.0 - 0.1 * k as f64).collect();
        let off2: Vec<f64> = (0..n - 2).map(|k| 0.5 + 0.05 * k as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let mut dense = DMatrix::zeros(n, n);
        for k in 0..n {
            dense[(k, k)] = diag[k];
            if k + 1 < n {
                dense[(k + 1, k)] = off1[k];
                dense[(k, k + 1)] = off1[k];
            }
            if k + 2 < n {
                dense[(k + 2, k)] = off2[k];
                dense[(k, k + 2)] = off2[k];
            }
        }
        let oracle = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let z = solve_pentadiagonal(&diag, &off1, &off2, &rhs);
        assert!(close(&z, oracle.as_slice(), 1e-12));
    }

    #[test]
    fn despike_flags_only_outliers() {
        let x: Vec<f64> = (0..40).map(|c| (c as f64 * 0.3).sin() * 10.0).collect();
        assert_eq!(despike(&x, 7, 8.0).unwrap(), x);
        assert!(despike(&x, 4, 8.0).is_err());
        assert!(despike(&x, 5, 0.0).is_err());
    }

    #[test]
    fn peak_normalize_window_checks() {
        let axis: Vec<f64> = (0..20).map(|c| 1000.0 + c as f64).collect();
        let x: Vec<f64> = (0..20).map(|c| 1.0 + c as f64).collect();
        let y = peak_normalize(&x, &axis, 1005.0, 2.0).unwrap();
        assert!((y[7] - 1.0).abs() < 1e-15);
        assert!(matches!(peak_normalize(&x, &axis, 1018.0, 5.0), Err(Error::WindowOutsideAxis { .. })));
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!(matches!(peak_normalize(&neg, &axis, 1005.0, 2.0), Err(Error::NonpositivePeak(_))));
    }

    #[test]
    fn pipeline_names_round_trip() {
        let p: Pipeline = "Baseline_ALS(1e5, 0.01, 10) | RNV(75)".parse().unwrap();
        assert_eq!(p.name(), "baseline_als(1e5,0.01,10)|rnv(75)");
        let again: Pipeline = p.name().parse().unwrap();
        assert_eq!(p, again);
        assert_eq!("als|rnv".parse::<Pipeline>().unwrap(), p);
        assert_eq!("".parse::<Pipeline>().unwrap().name(), "identity");
        assert_eq!("sg|deriv(2)".parse::<Pipeline>().unwrap().name(), "savitzky_golay(7,2,0)|derivative(2)");
        assert_eq!(
            "despike|peak_normalize(1002.5)".parse::<Pipeline>().unwrap().name(),
            "despike(7,8)|peak_normalize(1002.5,10)"
        );
    }

    #[test]
    fn pipeline_parse_errors() {
        for bad in ["rnv(150)", "wavelet", "rnv(75", "sg(6,2,0)", "derivative(3)", "rnv(a)", "snv(1)", "peak_normalize"] {
            assert!(bad.parse::<Pipeline>().is_err(), "{bad}");
        }
    }

    #[test]
    fn pipeline_serde_as_string() {
        let p: Pipeline = "despike|rnv(90)".parse().unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, "\"despike(7,8)|rnv(90)\"");
        let back: Pipeline = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }
}
