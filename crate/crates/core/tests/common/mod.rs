#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use raman_pcr::synth::{
    generate, random_concentrations, tears_recipe, BaselineShape, BaselineSpec, Peak, SpeciesRecipe, SynthRecipe,
    GLUCOSE_RANGE, LYSOZYME_RANGE,
};
use raman_pcr::{ConcentrationSet, SpectraSet, Species};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn axis(j: usize) -> Vec<f64> {
    (0..j).map(|c| 500.0 + 2.0 * c as f64).collect()
}

pub fn labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("{prefix}{k:02}")).collect()
}

/// Pure component spectra: `q` rows of Gaussian bands on a `j`-channel axis.
pub fn pure_components(q: usize, j: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let mut out = DMatrix::zeros(q, j);
    for s in 0..q {
        for _ in 0..3 {
            let centre = r.random_range(0.1..0.9) * j as f64;
            let width = r.random_range(2.0..6.0);
            let height = r.random_range(0.5..1.5);
            for c in 0..j {
                let z = (c as f64 - centre) / width;
                out[(s, c)] += height * (-0.5 * z * z).exp();
            }
        }
    }
    out
}

/// Noiseless linear mixtures `X = C^T R` of `q` components.
pub fn mixtures(
    pure: &DMatrix<f64>,
    n: usize,
    seed: u64,
    prefix: &str,
) -> (SpectraSet, ConcentrationSet) {
    let mut r = rng(seed);
    let q = pure.nrows();
    let c = DMatrix::from_fn(q, n, |_, _| r.random_range(0.5..5.0));
    let x = c.transpose() * pure;
    let labels = labels(prefix, n);
    let species = (0..q).map(|s| Species::new(format!("s{s}"), "mg/mL")).collect();
    (
        SpectraSet::new(axis(pure.ncols()), x, labels.clone()).unwrap(),
        ConcentrationSet::new(c, species, labels).unwrap(),
    )
}

/// Small set with well separated singular values and one species.
pub fn toy(i: usize, j: usize, seed: u64) -> (SpectraSet, ConcentrationSet) {
    let mut r = rng(seed);
    let x = planted_matrix(&mut r, i, j);
    let c = DMatrix::from_fn(1, i, |_, _| r.random_range(0.5..3.0));
    let labels = labels("t", i);
    (
        SpectraSet::new(axis(j), x, labels.clone()).unwrap(),
        ConcentrationSet::new(c, vec![Species::new("a", "mg/mL")], labels).unwrap(),
    )
}

/// `i x j` matrix whose centred part has well separated top singular values.
pub fn planted_matrix(rng: &mut ChaCha8Rng, i: usize, j: usize) -> DMatrix<f64> {
    let r = (i - 1).min(j);
    let mut u = gaussian_matrix(rng, i, r);
    for mut col in u.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let u = u.qr().q();
    let v = gaussian_matrix(rng, j, r).qr().q();
    let mut s = DVector::zeros(r);
    for k in 0..r {
        s[k] = if k < 6 {
            100.0 * 0.6f64.powi(k as i32)
        } else {
            5.0 * rng.random_range(0.1..1.0) * 0.9f64.powi(k as i32)
        };
    }
    let offset = DMatrix::from_fn(1, j, |_, _| rng.random_range(-3.0..3.0));
    let mut x = &u * DMatrix::from_diagonal(&s) * v.transpose();
    for mut row in x.row_iter_mut() {
        row += &offset;
    }
    x
}

fn drop_species(full: &ConcentrationSet, keep: usize) -> ConcentrationSet {
    ConcentrationSet::new(
        DMatrix::from(full.matrix().rows(0, keep)),
        full.species()[..keep].to_vec(),
        full.labels().to_vec(),
    )
    .unwrap()
}

/// Two analytes in a fluid with a constant solvent background, two
/// unreported interferents, strong random fluorescence and laser drift.
pub fn fluorescent_recipe(seed: u64) -> SynthRecipe {
    let mut recipe = tears_recipe(seed);
    for sp in &mut recipe.species {
        for p in &mut sp.peaks {
            p.width *= 2.0;
        }
    }
    recipe.species.push(SpeciesRecipe {
        name: "interferent_a".into(),
        unit: String::new(),
        peaks: vec![Peak::new(640.0, 60.0, 1.0), Peak::new(1320.0, 48.0, 0.7)],
        response: 1.0,
    });
    recipe.species.push(SpeciesRecipe {
        name: "interferent_b".into(),
        unit: String::new(),
        peaks: vec![Peak::new(880.0, 40.0, 1.0), Peak::new(1580.0, 60.0, 0.8)],
        response: 1.0,
    });
    recipe.species.push(SpeciesRecipe {
        name: "solvent".into(),
        unit: String::new(),
        peaks: (0..14)
            .map(|k| Peak::new(450.0 + 100.0 * k as f64, 40.0, 1.0 + 0.3 * ((k * 7) % 5) as f64))
            .collect(),
        response: 1.0,
    });
    recipe.noise = 0.05;
    recipe.amplitude_drift = [0.8, 1.2];
    recipe.baseline = BaselineSpec {
        shape: BaselineShape::Exponential {
            amplitude: 3.0,
            decay: 500.0,
        },
        scale: [0.0, 3.0],
        shape_jitter: 0.5,
    };
    recipe
}

/// Spectra plus the concentrations of the two analytes only.
pub fn fluorescent_set(n: usize, seed: u64, prefix: &str) -> (SpectraSet, ConcentrationSet) {
    let recipe = fluorescent_recipe(seed);
    let species: Vec<Species> = recipe.species.iter().map(|s| Species::new(&s.name, &s.unit)).collect();
    let ranges = [GLUCOSE_RANGE, LYSOZYME_RANGE, [0.0, 5.0], [0.0, 5.0], [1.0, 1.0]];
    let full = random_concentrations(&species, &ranges, n, seed, prefix).unwrap();
    let set = generate(&recipe, &full).unwrap();
    (set, drop_species(&full, 2))
}

pub mod oracle;
