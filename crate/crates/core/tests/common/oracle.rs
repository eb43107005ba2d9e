//! Reference computations that share no code with the library.

use nalgebra::{DMatrix, SymmetricEigen};

/// Eigenvectors of the sample covariance, largest eigenvalue first.
pub fn covariance_eigenvectors(x: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let cov = xc.transpose() * &xc / (x.nrows() as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&k| eig.eigenvectors.column(k)).collect::<Vec<_>>());
    (values, vectors)
}

/// PRESS of one held-out spectrum for a `k`-component PCR fitted from scratch
/// with an SVD of the centred training block and normal equations.
pub fn brute_press(x: &DMatrix<f64>, c: &DMatrix<f64>, held: usize, k: usize) -> f64 {
    let (i, j) = x.shape();
    let q = c.nrows();
    let train: Vec<usize> = (0..i).filter(|&n| n != held).collect();
    let xt = DMatrix::from_fn(train.len(), j, |r, col| x[(train[r], col)]);
    let ct = DMatrix::from_fn(q, train.len(), |s, r| c[(s, train[r])]);
    let xmean: Vec<f64> = (0..j).map(|col| xt.column(col).mean()).collect();
    let cmean: Vec<f64> = (0..q).map(|s| ct.row(s).mean()).collect();
    let xc = DMatrix::from_fn(xt.nrows(), j, |r, col| xt[(r, col)] - xmean[col]);
    let cc = DMatrix::from_fn(q, ct.ncols(), |s, r| ct[(s, r)] - cmean[s]);

    let svd = xc.clone().svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let p = DMatrix::from_fn(j, k, |col, m| vt[(order[m], col)]);
    let t = &xc * &p;
    let b = &cc * &t * (t.transpose() * &t).try_inverse().unwrap();
    let xnew = DMatrix::from_fn(1, j, |_, col| x[(held, col)] - xmean[col]);
    let tnew = xnew * &p;
    (0..q)
        .map(|s| {
            let est = cmean[s] + (b.row(s) * tnew.transpose())[(0, 0)];
            (est - c[(s, held)]).powi(2)
        })
        .sum()
}

/// Least-squares polynomial fit weights for the centre of a window, from the
/// normal equations written out by hand.
pub fn smoothing_weights(window: usize, order: usize) -> Vec<f64> {
    let half = (window / 2) as i64;
    let xs: Vec<f64> = (-half..=half).map(|v| v as f64).collect();
    let n = order + 1;
    let a = DMatrix::from_fn(window, n, |r, c| xs[r].powi(c as i32));
    let ata = a.transpose() * &a;
    let inv = ata.try_inverse().unwrap();
    // value at 0 is the constant coefficient: first row of (A^T A)^-1 A^T
    let w = inv * a.transpose();
    w.row(0).iter().copied().collect()
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    // split first so narrow peaks are not missed
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|k| {
            let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(&f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// F distribution CDF by quadrature of the unnormalised density.
///
/// With `x = (v / (1 - v))^2` both the origin singularity and the infinite
/// tail map to well-behaved integrands on `[0, 1)`.
pub fn f_cdf_quadrature(x: f64, d1: f64, d2: f64) -> f64 {
    let density = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        ((0.5 * d1 - 1.0) * y.ln() - 0.5 * (d1 + d2) * (1.0 + d1 * y / d2).ln()).exp()
    };
    let mapped = |v: f64| {
        if v <= 0.0 || v >= 1.0 {
            return 0.0;
        }
        let r = v / (1.0 - v);
        density(r * r) * 2.0 * r / ((1.0 - v) * (1.0 - v))
    };
    let total = integrate(mapped, 0.0, 1.0, 1e-15);
    let vx = x.sqrt() / (1.0 + x.sqrt());
    integrate(mapped, 0.0, vx, 1e-15) / total
}
