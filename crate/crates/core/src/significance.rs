//! One-way ANOVA over the PRESS matrix and the optimal-PC decision.
//!
//! Each PC column of the PRESS matrix is a treatment group and each held-out
//! spectrum an observation. A pre-treatment qualifies when the PC count has a
//! significant effect on PRESS (`F > F_alpha`). The optimal PC is then taken
//! from the columns whose mean PRESS is significantly below the worst column;
//! otherwise it falls back to the smallest column sum.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossval::PressMatrix;
use crate::error::{Error, Result};
use crate::special::reg_inc_beta;
use crate::stats;

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Cumulative F distribution with `d1`, `d2` degrees of freedom.
pub fn f_cdf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    let z = d1 * x;
    reg_inc_beta(d1 / 2.0, d2 / 2.0, z / (z + d2))
}

/// Upper tail `1 - f_cdf(x)`, evaluated without cancellation.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
}

/// Inverse of [`f_cdf`] by bisection.
pub fn f_quantile(p: f64, d1: f64, d2: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f_cdf(hi, d1, d2) < p {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f_cdf(mid, d1, d2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided p-value of a Student t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    reg_inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Scale on which the ANOVA runs. Column sums of PRESS are always raw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressScale {
    #[default]
    Raw,
    /// `log10(PRESS)`; exact zeros are floored at `1e-300` first.
    Log10,
}

impl PressScale {
    fn apply(self, v: f64) -> f64 {
        match self {
            PressScale::Raw => v,
            PressScale::Log10 => v.max(1e-300).log10(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    /// Between-group (treatments) sum of squares.
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub sst: f64,
    /// Within-group (error) sum of squares.
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub sse: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub f: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub p_value: f64,
    pub df_treat: usize,
    pub df_error: usize,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub alpha: f64,
    /// `F_alpha`, the critical value at `alpha`.
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub critical_f: f64,
    pub significant: bool,
    /// Pooled within-group mean square, `sse / df_error`.
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub mse: f64,
    /// Mean per PC column (NaN where a column had no valid value).
    #[serde(deserialize_with = "crate::serde_nan::floats")]
    pub group_means: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub scale: PressScale,
    pub notes: Vec<String>,
}

pub fn anova_oneway(s: &PressMatrix, alpha: f64) -> Result<AnovaResult> {
    anova_oneway_scaled(s, alpha, PressScale::Raw)
}

/// One-way ANOVA with each PC column as a group. NaN cells are dropped
/// individually and `df_error` counts only valid observations.
///
/// Group values are summed in sorted order, so the result does not depend
/// on row order.
pub fn anova_oneway_scaled(s: &PressMatrix, alpha: f64, scale: PressScale) -> Result<AnovaResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("anova", format!("alpha {alpha} outside (0, 1)")));
    }
    let mut notes = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::with_capacity(s.n_pcs());
    let mut dropped_cells = 0;
    for m in 0..s.n_pcs() {
        let mut g: Vec<f64> = s
            .values
            .column(m)
            .iter()
            .filter(|v| !v.is_nan())
            .map(|v| scale.apply(*v))
            .collect();
        dropped_cells += s.n_rows() - g.len();
        g.sort_by(f64::total_cmp);
        groups.push(g);
    }
    let empty: Vec<usize> = (0..groups.len()).filter(|&m| groups[m].is_empty()).map(|m| m + 1).collect();
    if dropped_cells > 0 {
        notes.push(format!("{dropped_cells} missing PRESS value(s) excluded"));
    }
    if !empty.is_empty() {
        notes.push(format!("PC column(s) {empty:?} have no valid values and were dropped"));
    }
    let k = groups.iter().filter(|g| !g.is_empty()).count();
    let n: usize = groups.iter().map(Vec::len).sum();
    if k < 2 {
        return Err(Error::TooFewGroups(format!("{k} PC column(s) with data, need 2")));
    }
    if n <= k {
        return Err(Error::TooFewGroups(format!("{n} observations for {k} groups")));
    }

    let sums: Vec<f64> = groups.iter().map(|g| g.iter().sum()).collect();
    let group_means: Vec<f64> = groups
        .iter()
        .zip(&sums)
        .map(|(g, s)| if g.is_empty() { f64::NAN } else { s / g.len() as f64 })
        .collect();
    let grand = sums.iter().sum::<f64>() / n as f64;
    let mut sst = 0.0;
    let mut sse = 0.0;
    for (g, mean) in groups.iter().zip(&group_means) {
        if g.is_empty() {
            continue;
        }
        sst += g.len() as f64 * (mean - grand) * (mean - grand);
        sse += g.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    if sst == 0.0 && sse == 0.0 {
        return Err(Error::DegenerateMatrix);
    }
    let df_treat = k - 1;
    let df_error = n - k;
    let mse = sse / df_error as f64;
    let f = if sse == 0.0 {
        f64::INFINITY
    } else {
        (sst / df_treat as f64) / mse
    };
    let p_value = f_sf(f, df_treat as f64, df_error as f64);
    let critical_f = f_quantile(1.0 - alpha, df_treat as f64, df_error as f64);
    Ok(AnovaResult {
        sst,
        sse,
        f,
        p_value,
        df_treat,
        df_error,
        alpha,
        critical_f,
        significant: f > critical_f,
        mse,
        group_means,
        group_sizes: groups.iter().map(Vec::len).collect(),
        scale,
        notes,
    })
}

/// Box-plot summary of one PC column. Whiskers reach the most extreme
/// points within 1.5 IQR of the quartiles; anything beyond is an outlier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub pc: usize,
    pub n: usize,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub q1: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub median: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub q3: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub lo_whisker: f64,
    #[serde(deserialize_with = "crate::serde_nan::float")]
    pub hi_whisker: f64,
    pub outliers: Vec<f64>,
}

pub fn boxplot_column(pc: usize, values: &[f64]) -> BoxplotStats {
    let sorted = stats::sorted(&values.iter().copied().filter(|v| !v.is_nan()).collect::<Vec<_>>());
    if sorted.is_empty() {
        return BoxplotStats {
            pc,
            n: 0,
            q1: f64::NAN,
            median: f64::NAN,
            q3: f64::NAN,
            lo_whisker: f64::NAN,
            hi_whisker: f64::NAN,
            outliers: Vec::new(),
        };
    }
    let q1 = stats::percentile_sorted(&sorted, 25.0);
    let median = stats::percentile_sorted(&sorted, 50.0);
    let q3 = stats::percentile_sorted(&sorted, 75.0);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
    let outliers = sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    BoxplotStats {
        pc,
        n: sorted.len(),
        q1,
        median,
        q3,
        lo_whisker: inside.first().copied().unwrap_or(f64::NAN),
        hi_whisker: inside.last().copied().unwrap_or(f64::NAN),
        outliers,
    }
}

pub fn boxplot_stats(s: &PressMatrix) -> Vec<BoxplotStats> {
    (0..s.n_pcs())
        .map(|m| boxplot_column(m + 1, s.values.column(m).as_slice()))
        .collect()
}

/// CSV with columns `pc,q1,median,q3,lo_whisker,hi_whisker,outliers`;
/// outliers are `;`-separated.
pub fn write_boxplot_csv<W: Write>(writer: W, stats: &[BoxplotStats]) -> Result<()> {
    use crate::spectra::format_float;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["pc", "q1", "median", "q3", "lo_whisker", "hi_whisker", "outliers"])?;
    for b in stats {
        let outliers = b.outliers.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";");
        w.write_record([
            b.pc.to_string(),
            format_float(b.q1),
            format_float(b.median),
            format_float(b.q3),
            format_float(b.lo_whisker),
            format_float(b.hi_whisker),
            outliers,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<writer>", e))?;
    Ok(())
}

pub fn save_boxplot_csv(path: impl AsRef<Path>, stats: &[BoxplotStats]) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_boxplot_csv(f, stats)
}

/// Outcome of the PC selection for one PRESS matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcVerdict {
    /// ANOVA rejected equal mean PRESS across PC counts.
    pub significant: bool,
    pub optimal_pc: usize,
    /// PCs whose mean PRESS is significantly below the worst PC.
    pub candidate_set: Vec<usize>,
    pub worst_pc: Option<usize>,
    /// Pairwise p-value of each PC against the worst PC (`None` for the
    /// worst PC itself, dropped columns, or when the ANOVA was not significant).
    pub pairwise_p: Vec<Option<f64>>,
    /// Column sums of raw PRESS, missing cells skipped.
    #[serde(deserialize_with = "crate::serde_nan::floats")]
    pub sum_press: Vec<f64>,
    pub boxplot: Vec<BoxplotStats>,
    pub anova: Option<AnovaResult>,
    /// Set when the pre-treatment failed the significance gate.
    pub alert: Option<String>,
    pub notes: Vec<String>,
}

impl PcVerdict {
    pub fn sum_press_at_optimal(&self) -> f64 {
        self.sum_press[self.optimal_pc - 1]
    }
}

pub fn select_optimal_pc(s: &PressMatrix, alpha: f64) -> Result<PcVerdict> {
    select_optimal_pc_scaled(s, alpha, PressScale::Raw)
}

/// Chooses the PC count for one PRESS matrix.
///
/// When the ANOVA is significant, the worst PC is the column with the largest
/// mean; each other column is compared against it with a two-sided t test on
/// the pooled mean square. Among the columns significantly better than the
/// worst, each is ranked by mean PRESS and by pairwise p-value (both
/// ascending, ties share the lower rank) and the smallest rank sum wins, ties
/// going to fewer PCs. Without significance the column with the smallest sum
/// of PRESS is returned together with an alert.
pub fn select_optimal_pc_scaled(s: &PressMatrix, alpha: f64, scale: PressScale) -> Result<PcVerdict> {
    if s.n_pcs() == 0 || s.n_rows() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let sum_press: Vec<f64> = (0..s.n_pcs())
        .map(|m| {
            let col: Vec<f64> = stats::sorted(&s.values.column(m).iter().copied().filter(|v| !v.is_nan()).collect::<Vec<_>>());
            if col.is_empty() {
                f64::NAN
            } else {
                col.iter().sum()
            }
        })
        .collect();
    let boxplot = boxplot_stats(s);
    let mut notes = Vec::new();
    let mut pairwise_p = vec![None; s.n_pcs()];

    let anova = match anova_oneway_scaled(s, alpha, scale) {
        Ok(a) => Some(a),
        Err(Error::DegenerateMatrix) => {
            notes.push("PRESS matrix has no variation; treated as not significant (p = 1)".into());
            None
        }
        Err(Error::TooFewGroups(why)) => {
            notes.push(format!("ANOVA not possible: {why}; treated as not significant"));
            None
        }
        Err(e) => return Err(e),
    };
    if let Some(a) = &anova {
        notes.extend(a.notes.iter().cloned());
    }

    let fallback = argmin_pc(&sum_press).ok_or_else(|| Error::TooFewGroups("no PC column with data".into()))?;

    let Some(a) = anova.as_ref().filter(|a| a.significant) else {
        let p = anova.as_ref().map(|a| a.p_value).unwrap_or(1.0);
        let alert = format!(
            "PRESS does not vary significantly with the number of PCs (p = {p:.4}, alpha = {alpha}); \
             the pre-treatment is unsuitable for a robust regression model, PC {fallback} chosen by minimum PRESS sum"
        );
        return Ok(PcVerdict {
            significant: false,
            optimal_pc: fallback,
            candidate_set: Vec::new(),
            worst_pc: None,
            pairwise_p,
            sum_press,
            boxplot,
            anova,
            alert: Some(alert),
            notes,
        });
    };

    let valid: Vec<usize> = (0..s.n_pcs()).filter(|&m| a.group_sizes[m] > 0).collect();
    let worst = valid
        .iter()
        .copied()
        .fold(None::<usize>, |best, m| match best {
            Some(b) if a.group_means[b] >= a.group_means[m] => Some(b),
            _ => Some(m),
        })
        .expect("significant ANOVA has groups");
    let df = a.df_error as f64;
    let mut candidates = Vec::new();
    for &m in &valid {
        if m == worst {
            continue;
        }
        let diff = a.group_means[worst] - a.group_means[m];
        let se = (a.mse * (1.0 / a.group_sizes[worst] as f64 + 1.0 / a.group_sizes[m] as f64)).sqrt();
        let p = if se > 0.0 {
            t_two_sided_p(diff / se, df)
        } else if diff != 0.0 {
            0.0
        } else {
            1.0
        };
        pairwise_p[m] = Some(p);
        if diff > 0.0 && p < alpha {
            candidates.push(m);
        }
    }

    let optimal = if candidates.is_empty() {
        let best = (0..s.n_pcs())
            .filter(|m| a.group_sizes[*m] > 0)
            .min_by(|x, y| a.group_means[*x].total_cmp(&a.group_means[*y]).then(x.cmp(y)))
            .expect("groups present");
        notes.push(format!(
            "no PC differs significantly from the worst PC {}; PC {} with the lowest mean PRESS kept as sole candidate",
            worst + 1,
            best + 1
        ));
        candidates.push(best);
        best
    } else {
        let mean_rank = min_ranks(&candidates.iter().map(|&m| a.group_means[m]).collect::<Vec<_>>());
        let p_rank = min_ranks(&candidates.iter().map(|&m| pairwise_p[m].unwrap_or(1.0)).collect::<Vec<_>>());
        let mut best = 0;
        for c in 1..candidates.len() {
            let score = mean_rank[c] + p_rank[c];
            let best_score = mean_rank[best] + p_rank[best];
            if score < best_score {
                best = c;
            }
        }
        candidates[best]
    };

    Ok(PcVerdict {
        significant: true,
        optimal_pc: optimal + 1,
        candidate_set: candidates.iter().map(|m| m + 1).collect(),
        worst_pc: Some(worst + 1),
        pairwise_p,
        sum_press,
        boxplot,
        anova,
        alert: None,
        notes,
    })
}

/// 1-based PC with the smallest finite value, ties to fewer PCs.
fn argmin_pc(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_nan())
        .min_by(|(i, a), (j, b)| a.total_cmp(b).then(i.cmp(j)))
        .map(|(m, _)| m + 1)
}

/// Competition ranks starting at 1; equal values share the lowest rank.
fn min_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|w| w.total_cmp(v).is_lt()).count())
        .collect()
}
