//! Principal components by NIPALS with deflation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectraSet;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

/// Residual norm (relative to the centred data) below which no further
/// component is extracted.
pub const RANK_TOL: f64 = 1e-12;

/// Mean-centred principal component model of a spectra matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub axis: Vec<f64>,
    pub mean_spectrum: DVector<f64>,
    /// `j x k`, unit-norm orthogonal columns.
    pub loadings: DMatrix<f64>,
    /// `i x k`, orthogonal columns.
    pub scores: DMatrix<f64>,
    /// Fraction of the total centred sum of squares per component.
    pub explained_variance: Vec<f64>,
    /// Frobenius norm of the residual after each component; the last entry
    /// is the residual of the whole model.
    pub residual_norms: Vec<f64>,
    /// Frobenius norm of the centred data.
    pub total_norm: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.loadings.ncols()
    }

    /// Frobenius norm of `X_centered - T P^T`.
    pub fn residual_fro(&self) -> f64 {
        self.residual_norms.last().copied().unwrap_or(self.total_norm)
    }

    /// Leading `k` components. NIPALS deflation makes these identical to a
    /// fresh fit with `k` components.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.n_components() {
            return Err(Error::BadOrder(format!(
                "cannot truncate {} components to {k}",
                self.n_components()
            )));
        }
        Ok(PcaModel {
            axis: self.axis.clone(),
            mean_spectrum: self.mean_spectrum.clone(),
            loadings: self.loadings.columns(0, k).into_owned(),
            scores: self.scores.columns(0, k).into_owned(),
            explained_variance: self.explained_variance[..k].to_vec(),
            residual_norms: self.residual_norms[..k].to_vec(),
            total_norm: self.total_norm,
        })
    }

    fn empty(axis: Vec<f64>, mean: DVector<f64>, rows: usize, total_norm: f64) -> Self {
        let j = mean.len();
        PcaModel {
            axis,
            mean_spectrum: mean,
            loadings: DMatrix::zeros(j, 0),
            scores: DMatrix::zeros(rows, 0),
            explained_variance: Vec::new(),
            residual_norms: Vec::new(),
            total_norm,
        }
    }
}

/// Column means of `x` as a vector.
pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let i = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / i))
}

fn center(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

/// Fits `k` principal components of `set` by NIPALS.
///
/// Rows are mean-centred first. Each component starts from the column of
/// largest variance and alternates `p = X^T t / t^T t` (normalised) and
/// `t = X p` until the score vector moves by less than `tol` relative to
/// its norm. After convergence the loading is sign-fixed so its largest
/// magnitude entry is positive, and `t p^T` is deflated from the residual.
///
/// On [`Error::NoConvergence`] and [`Error::RankDeficient`] the components
/// found so far come back inside the error.
pub fn nipals_fit(set: &SpectraSet, k: usize, tol: f64, max_iter: usize) -> Result<PcaModel> {
    nipals_matrix(set.matrix(), set.axis().to_vec(), k, tol, max_iter)
}

/// [`nipals_fit`] on a bare matrix.
pub fn nipals_matrix(x: &DMatrix<f64>, axis: Vec<f64>, k: usize, tol: f64, max_iter: usize) -> Result<PcaModel> {
    let (i, j) = x.shape();
    if k == 0 || k > j || k + 1 > i {
        return Err(Error::BadOrder(format!(
            "component count {k} must lie in 1..={} for a {i}x{j} matrix",
            (i.saturating_sub(1)).min(j)
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::BadOrder(format!("tolerance {tol} must be positive")));
    }
    if max_iter < 10 {
        return Err(Error::BadOrder(format!("max_iter {max_iter} must be >= 10")));
    }
    if axis.len() != j {
        return Err(Error::AxisMismatch);
    }
    let mean = column_means(x);
    let mut resid = center(x, &mean);
    let total_norm = resid.norm();
    let total_ss = total_norm * total_norm;
    let mut model = PcaModel::empty(axis, mean, i, total_norm);
    let mut loadings = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);

    for comp in 0..k {
        let current = resid.norm();
        if current <= RANK_TOL * total_norm || current == 0.0 {
            finish(&mut model, &loadings, &scores);
            return Err(Error::RankDeficient {
                found: comp,
                requested: k,
                partial: Box::new(model),
            });
        }
        let start = (0..j)
            .max_by(|&a, &b| resid.column(a).norm_squared().total_cmp(&resid.column(b).norm_squared()))
            .unwrap_or(0);
        let mut t = resid.column(start).into_owned();
        // t <- X X^T t / |X^T t| is the score half-step composed with the
        // loading half-step; iterating on the i x i Gram matrix is cheaper.
        let gram = &resid * resid.transpose();
        let mut converged = false;
        for _ in 0..max_iter {
            let gt = &gram * &t;
            let norm = t.dot(&gt).max(0.0).sqrt();
            if norm == 0.0 {
                break;
            }
            let t_new = gt / norm;
            let change = (&t_new - &t).norm();
            let scale = t_new.norm();
            t = t_new;
            if change <= tol * scale {
                converged = true;
                break;
            }
        }
        if !converged {
            finish(&mut model, &loadings, &scores);
            return Err(Error::NoConvergence {
                component: comp,
                partial: Box::new(model),
            });
        }
        let mut p = resid.tr_mul(&t);
        p /= p.norm();
        let mut t = &resid * &p;
        let pivot = p.iamax();
        if p[pivot] < 0.0 {
            p.neg_mut();
            t.neg_mut();
        }
        resid -= &t * p.transpose();
        model.explained_variance.push(if total_ss > 0.0 { t.norm_squared() / total_ss } else { 0.0 });
        model.residual_norms.push(resid.norm());
        loadings.push(p);
        scores.push(t);
    }
    finish(&mut model, &loadings, &scores);
    Ok(model)
}

fn finish(model: &mut PcaModel, loadings: &[DVector<f64>], scores: &[DVector<f64>]) {
    let j = model.mean_spectrum.len();
    let i = model.scores.nrows();
    model.loadings = if loadings.is_empty() {
        DMatrix::zeros(j, 0)
    } else {
        DMatrix::from_columns(loadings)
    };
    model.scores = if scores.is_empty() {
        DMatrix::zeros(i, 0)
    } else {
        DMatrix::from_columns(scores)
    };
}

/// Scores of new spectra: `(X_new - mean) P`, one row per spectrum.
pub fn project(model: &PcaModel, new_set: &SpectraSet) -> Result<DMatrix<f64>> {
    if new_set.axis() != model.axis.as_slice() {
        return Err(Error::AxisMismatch);
    }
    Ok(center(new_set.matrix(), &model.mean_spectrum) * &model.loadings)
}
