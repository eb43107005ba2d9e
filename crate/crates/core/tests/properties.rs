mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use raman_pcr::preprocess::{despike, peak_normalize, rnv, savitzky_golay, snv};
use raman_pcr::spectra::{read_spectra, write_spectra};
use raman_pcr::*;

fn spectrum(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, len)
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

fn matrix(rows: std::ops::Range<usize>, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    rows.prop_flat_map(move |r| {
        prop::collection::vec(0.0f64..100.0, r * cols).prop_map(move |v| DMatrix::from_row_slice(r, cols, &v))
    })
}

fn press_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (4usize..12).prop_flat_map(|i| matrix(i..i + 1, i - 2))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snv_idempotent_and_scale_free(x in spectrum(8..200), c in 0.01f64..100.0) {
        let once = snv(&x).unwrap();
        prop_assert!(close(&snv(&once).unwrap(), &once, 1e-12));
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!(close(&snv(&scaled).unwrap(), &once, 1e-12));
    }

    #[test]
    fn rnv_scale_free(x in spectrum(8..200), c in 0.01f64..100.0, pct in 50.0f64..95.0) {
        let base = rnv(&x, pct).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!(close(&rnv(&scaled, pct).unwrap(), &base, 1e-12));
    }

    #[test]
    fn rnv_ignores_values_above_the_percentile(x in prop::collection::vec(0.0f64..10.0, 20..100), boost in 1.0f64..50.0) {
        // the top value sits above the 75th percentile; magnifying it changes nothing else
        let top = x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let mut y = x.clone();
        y[top] = 20.0 + boost * 10.0;
        let mut z = x.clone();
        z[top] = 20.0;
        let a = rnv(&y, 75.0).unwrap();
        let b = rnv(&z, 75.0).unwrap();
        for n in (0..x.len()).filter(|&n| n != top) {
            prop_assert_eq!(a[n], b[n]);
        }
    }

    #[test]
    fn peak_normalize_scale_free(x in prop::collection::vec(0.1f64..100.0, 30..80), c in 0.01f64..100.0) {
        let axis = common::axis(x.len());
        let base = peak_normalize(&x, &axis, axis[10], 6.0).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        prop_assert!(close(&peak_normalize(&scaled, &axis, axis[10], 6.0).unwrap(), &base, 1e-12));
        let peak = (7..=13).map(|k| base[k]).fold(f64::MIN, f64::max);
        prop_assert!((peak - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sg_reproduces_polynomials(
        coef in prop::collection::vec(-2.0f64..2.0, 4),
        half in 2usize..7,
        order in 2usize..4,
        len in 20usize..80,
    ) {
        let window = 2 * half + 1;
        prop_assume!(order < window);
        let x: Vec<f64> = (0..len)
            .map(|c| {
                let u = c as f64 / len as f64;
                (0..=order).map(|d| coef[d] * u.powi(d as i32)).sum()
            })
            .collect();
        let y = savitzky_golay(&x, window, order, 0, 1.0).unwrap();
        prop_assert!(close(&y, &x, 1e-10));
    }

    #[test]
    fn despike_keeps_inliers(x in prop::collection::vec(-5.0f64..5.0, 20..120), threshold in 2.0f64..10.0) {
        let out = despike(&x, 7, threshold).unwrap();
        let n = x.len();
        for c in 0..n {
            let half = 3.min(c).min(n - 1 - c);
            if half < 2 {
                prop_assert_eq!(out[c], x[c]);
                continue;
            }
            let mut w = x[c - half..=c + half].to_vec();
            w.sort_by(f64::total_cmp);
            let med = w[half];
            let mut d: Vec<f64> = x[c - half..=c + half].iter().map(|v| (v - med).abs()).collect();
            d.sort_by(f64::total_cmp);
            let mad = d[half];
            if (x[c] - med).abs() > threshold * mad {
                prop_assert_eq!(out[c], med);
            } else {
                prop_assert_eq!(out[c], x[c]);
            }
        }
    }

    #[test]
    fn pipeline_is_per_spectrum(x in matrix(2..6, 40), which in 0usize..4) {
        let specs = ["snv", "sg(5,2,0)|derivative(1)", "baseline_als(1e4,0.05,5)|rnv(80)", "despike(5,6)|snv"];
        let pipeline: Pipeline = specs[which].parse().unwrap();
        let set = SpectraSet::new(common::axis(40), x.clone(), common::labels("p", x.nrows())).unwrap();
        let whole = apply_pipeline(&set, &pipeline).unwrap();
        for n in 0..x.nrows() {
            let one = pipeline.apply(&set.row(n), set.axis()).unwrap();
            prop_assert_eq!(whole.row(n), one);
        }
    }

    #[test]
    fn spectra_round_trip(x in matrix(1..6, 10), scale in -8i32..8) {
        let x = x * 10f64.powi(scale);
        let set = SpectraSet::new(common::axis(10), x.clone(), common::labels("s", x.nrows())).unwrap();
        let mut buf = Vec::new();
        write_spectra(&mut buf, &set).unwrap();
        let back = read_spectra(buf.as_slice()).unwrap();
        prop_assert_eq!(back.labels(), set.labels());
        prop_assert_eq!(back.axis(), set.axis());
        for (a, b) in back.matrix().iter().zip(set.matrix().iter()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn concentrations_align_by_label(n in 2usize..8, rot in 1usize..7) {
        let labels = common::labels("c", n);
        let c = DMatrix::from_fn(2, n, |s, k| (s * 10 + k) as f64);
        let conc = ConcentrationSet::new(c, vec![Species::new("a", "mg/mL"), Species::new("b", "")], labels.clone()).unwrap();
        let order: Vec<String> = (0..n).map(|k| labels[(k + rot) % n].clone()).collect();
        let aligned = conc.align_to(&order).unwrap();
        prop_assert_eq!(aligned.labels(), order.as_slice());
        for (k, l) in order.iter().enumerate() {
            let src = labels.iter().position(|x| x == l).unwrap();
            prop_assert_eq!(aligned.matrix()[(1, k)], conc.matrix()[(1, src)]);
        }
    }

    #[test]
    fn anova_sums_and_invariances(s in press_matrix(), shift in -50.0f64..50.0, scale in 0.01f64..100.0) {
        let base = PressMatrix::from_values(s.clone());
        let a = anova_oneway(&base, 0.05).unwrap();
        let grand = s.mean();
        let total: f64 = s.iter().map(|v| (v - grand).powi(2)).sum();
        prop_assert!((a.sst + a.sse - total).abs() <= 1e-9 * total.max(1e-300));
        prop_assert!(a.sst >= 0.0 && a.sse >= 0.0 && a.f >= 0.0);
        prop_assert!((a.p_value - (1.0 - significance::f_cdf(a.f, a.df_treat as f64, a.df_error as f64))).abs() < 1e-12);

        let shifted = anova_oneway(&PressMatrix::from_values(s.add_scalar(shift)), 0.05).unwrap();
        prop_assert!((shifted.f - a.f).abs() <= 1e-9 * a.f.max(1.0));
        let scaled = anova_oneway(&PressMatrix::from_values(&s * scale), 0.05).unwrap();
        prop_assert!((scaled.f - a.f).abs() <= 1e-9 * a.f.max(1.0));
    }

    #[test]
    fn verdict_ignores_row_order(s in press_matrix(), rot in 1usize..10) {
        let i = s.nrows();
        let perm: Vec<usize> = (0..i).map(|n| (n * (2 * rot + 1) + rot) % i).collect();
        prop_assume!({
            let mut p = perm.clone();
            p.sort();
            p.dedup();
            p.len() == i
        });
        let permuted = DMatrix::from_fn(i, s.ncols(), |r, c| s[(perm[r], c)]);
        let a = select_optimal_pc(&PressMatrix::from_values(s), 0.05).unwrap();
        let b = select_optimal_pc(&PressMatrix::from_values(permuted), 0.05).unwrap();
        prop_assert_eq!(a.significant, b.significant);
        prop_assert_eq!(a.optimal_pc, b.optimal_pc);
        prop_assert_eq!(a.candidate_set, b.candidate_set);
        prop_assert_eq!(a.anova.map(|x| x.f), b.anova.map(|x| x.f));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pca_invariants(seed in 0u64..1_000_000, i in 6usize..20, j in 8usize..60) {
        let mut rng = common::rng(seed);
        let x = common::planted_matrix(&mut rng, i, j);
        let set = SpectraSet::new(common::axis(j), x.clone(), common::labels("r", i)).unwrap();
        let k = 5.min(i - 1).min(j);
        let m = nipals_fit(&set, k, 1e-10, 20_000).unwrap();

        let ptp = m.loadings.transpose() * &m.loadings;
        prop_assert!((ptp - DMatrix::identity(k, k)).abs().max() < 1e-8);
        let ttt = m.scores.transpose() * &m.scores;
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    prop_assert!(ttt[(a, b)].abs() < 1e-8 * (ttt[(a, a)] * ttt[(b, b)]).sqrt());
                }
            }
            let col = m.loadings.column(a);
            prop_assert!(col[col.iamax()] > 0.0);
        }
        let ev = &m.explained_variance;
        prop_assert!(ev.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(ev.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(ev.iter().sum::<f64>() <= 1.0 + 1e-12);

        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            row -= m.mean_spectrum.transpose();
        }
        let mut last = f64::INFINITY;
        for kk in 1..=k {
            let t = m.truncate(kk).unwrap();
            let resid = (&xc - &t.scores * t.loadings.transpose()).norm();
            prop_assert!((resid - t.residual_fro()).abs() <= 1e-8 * m.total_norm);
            prop_assert!(resid <= last + 1e-9 * m.total_norm);
            last = resid;
        }

        // permuting rows permutes scores, loadings unchanged up to sign
        let perm: Vec<usize> = (0..i).rev().collect();
        let mp = nipals_fit(&set.select_rows(&perm), k, 1e-10, 20_000).unwrap();
        for c in 0..k {
            let sign = mp.loadings.column(c).dot(&m.loadings.column(c)).signum();
            prop_assert!((mp.loadings.column(c) - sign * m.loadings.column(c)).abs().max() < 1e-8);
            for (r, &src) in perm.iter().enumerate() {
                prop_assert!((mp.scores[(r, c)] - sign * m.scores[(src, c)]).abs() < 1e-8 * m.scores.column(c).norm());
            }
        }
    }

    #[test]
    fn pcr_affine_and_monotone(seed in 0u64..1_000_000, alpha in -1.0f64..2.0) {
        let pure = common::pure_components(3, 60, seed);
        let (set, conc) = common::mixtures(&pure, 12, seed + 1, "m");
        let mut rng = common::rng(seed + 2);
        let noisy = set.with_matrix(set.matrix() + 0.01 * common::gaussian_matrix(&mut rng, 12, 60)).unwrap();
        let pca = nipals_fit(&noisy, 8, 1e-10, 20_000).unwrap();
        let model = pcr_fit(&pca, &conc).unwrap();

        let x1 = noisy.select_rows(&[0]);
        let x2 = noisy.select_rows(&[5]);
        let mix = x1.with_matrix(x1.matrix() * alpha + x2.matrix() * (1.0 - alpha)).unwrap();
        let lhs = model.predict(&mix).unwrap();
        let rhs = model.predict(&x1).unwrap() * alpha + model.predict(&x2).unwrap() * (1.0 - alpha);
        prop_assert!((lhs - rhs).abs().max() < 1e-9);

        let mut last = f64::INFINITY;
        for k in 1..=8 {
            let est = model.truncate(k).unwrap().predict(&noisy).unwrap();
            let rss = press(&est, conc.matrix()).unwrap();
            prop_assert!(rss <= last * (1.0 + 1e-9) + 1e-12);
            last = rss;
        }
    }

    #[test]
    fn loo_truncation_and_fold_ordering(seed in 0u64..1_000_000) {
        let (set, conc) = common::toy(7, 25, seed);
        let s = loo_press_matrix(&set, &conc, &Pipeline::identity()).unwrap();
        // fresh fits per column agree with the truncated single fit
        for n in [0usize, 3, 6] {
            let train: Vec<usize> = (0..7).filter(|&r| r != n).collect();
            let ts = set.select_rows(&train);
            let tc = conc.select_columns(&train);
            for k in 1..=5 {
                let fresh = nipals_fit(&ts, k, 1e-10, 20_000).unwrap();
                let est = pcr_predict(&pcr_fit(&fresh, &tc).unwrap(), &set.select_rows(&[n])).unwrap();
                let p = press(&est, conc.select_columns(&[n]).matrix()).unwrap();
                prop_assert!((p - s.values[(n, k - 1)]).abs() < 1e-8 * p.max(1.0));
            }
        }
        // reordering the other spectra leaves each row unchanged
        let perm = [6usize, 4, 2, 0, 1, 3, 5];
        let ps = set.select_rows(&perm);
        let pc = conc.select_columns(&perm);
        let s2 = loo_press_matrix(&ps, &pc, &Pipeline::identity()).unwrap();
        for (r, &src) in perm.iter().enumerate() {
            for m in 0..5 {
                let (a, b) = (s2.values[(r, m)], s.values[(src, m)]);
                prop_assert!((a - b).abs() < 1e-8 * b.max(1.0));
            }
        }
    }
}
