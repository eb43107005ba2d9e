//! Synthetic Raman-like spectra with known composition.
//!
//! Each spectrum is `drift * (sum_s c_s * response_s + baseline) + noise +
//! spikes`, where `response_s` is a sum of Lorentzian lines. Noise, spike
//! and baseline magnitudes are expressed relative to the *reference peak
//! height*: the maximum over the axis of the summed unit-concentration
//! responses. Peak lists are synthetic and make no claim of spectroscopic
//! fidelity.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{ConcentrationSet, SpectraSet, Species};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

impl Default for AxisSpec {
    fn default() -> Self {
        AxisSpec {
            start: 400.0,
            stop: 1800.0,
            step: 2.0,
        }
    }
}

/// Lorentzian line; `width` is the full width at half maximum (cm⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl Peak {
    pub fn new(center: f64, width: f64, amplitude: f64) -> Self {
        Peak { center, width, amplitude }
    }

    pub fn eval(&self, nu: f64) -> f64 {
        let z = 2.0 * (nu - self.center) / self.width;
        self.amplitude / (1.0 + z * z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesRecipe {
    pub name: String,
    #[serde(default)]
    pub unit: String,
    pub peaks: Vec<Peak>,
    /// Signal per unit concentration.
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineShape {
    #[default]
    None,
    /// `sum_k coefficients[k] * u^k` with `u` the axis mapped onto [0, 1].
    Polynomial { coefficients: Vec<f64> },
    /// `amplitude * exp(-(nu - start) / decay)`.
    Exponential { amplitude: f64, decay: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub shape: BaselineShape,
    /// Per-spectrum multiplier drawn uniformly from this range.
    pub scale: [f64; 2],
    /// Relative per-spectrum jitter of the shape parameter (decay length
    /// or polynomial coefficients), uniform in `[-jitter, jitter]`.
    #[serde(default)]
    pub shape_jitter: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        BaselineSpec {
            shape: BaselineShape::None,
            scale: [1.0, 1.0],
            shape_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeSpec {
    /// Mean spike count per spectrum (Poisson).
    pub rate: f64,
    pub amplitude: [f64; 2],
}

impl Default for SpikeSpec {
    fn default() -> Self {
        SpikeSpec {
            rate: 0.0,
            amplitude: [5.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecipe {
    #[serde(default)]
    pub axis: AxisSpec,
    pub species: Vec<SpeciesRecipe>,
    #[serde(default)]
    pub baseline: BaselineSpec,
    /// Gaussian noise standard deviation.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub spikes: SpikeSpec,
    #[serde(default = "unit_range")]
    pub amplitude_drift: [f64; 2],
    #[serde(default)]
    pub seed: u64,
}

fn unit_range() -> [f64; 2] {
    [1.0, 1.0]
}

fn check_range(name: &str, r: [f64; 2], positive: bool) -> Result<()> {
    let ok = r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && (!positive || r[0] > 0.0);
    if !ok {
        return Err(Error::InvalidRecipe(format!("{name} range {r:?} invalid")));
    }
    Ok(())
}

impl SynthRecipe {
    pub fn validate(&self) -> Result<()> {
        let axis = self.axis.values();
        if !(self.axis.step > 0.0) || axis.len() < crate::spectra::MIN_CHANNELS {
            return Err(Error::InvalidRecipe(format!("axis {:?} too short", self.axis)));
        }
        if self.species.is_empty() {
            return Err(Error::InvalidRecipe("no species".into()));
        }
        let (lo, hi) = (axis[0], axis[axis.len() - 1]);
        for sp in &self.species {
            for p in &sp.peaks {
                if !(p.width > 0.0) {
                    return Err(Error::InvalidRecipe(format!("{}: peak width {} must be > 0", sp.name, p.width)));
                }
                if p.center < lo || p.center > hi {
                    return Err(Error::InvalidRecipe(format!(
                        "{}: peak at {} outside axis [{lo}, {hi}]",
                        sp.name, p.center
                    )));
                }
            }
        }
        if !(self.noise >= 0.0) || !(self.spikes.rate >= 0.0) || !(self.baseline.shape_jitter >= 0.0) {
            return Err(Error::InvalidRecipe("noise, spike rate and jitter must be >= 0".into()));
        }
        check_range("amplitude_drift", self.amplitude_drift, true)?;
        check_range("baseline scale", self.baseline.scale, false)?;
        check_range("spike amplitude", self.spikes.amplitude, false)?;
        if let BaselineShape::Exponential { decay, .. } = self.baseline.shape {
            if !(decay > 0.0) {
                return Err(Error::InvalidRecipe(format!("baseline decay {decay} must be > 0")));
            }
        }
        Ok(())
    }

    /// Unit-concentration response of every species, `q x j`.
    pub fn responses(&self) -> DMatrix<f64> {
        let axis = self.axis.values();
        DMatrix::from_fn(self.species.len(), axis.len(), |s, c| {
            let sp = &self.species[s];
            sp.response * sp.peaks.iter().map(|p| p.eval(axis[c])).sum::<f64>()
        })
    }

    pub fn reference_peak(&self) -> f64 {
        let r = self.responses();
        r.row_sum().iter().copied().fold(0.0, f64::max)
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        // still consume a draw so streams stay aligned across recipes
        let _: f64 = rng.random();
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Renders one spectrum per concentration column. Spectrum `n` draws from
/// its own ChaCha stream `n + 1` of the recipe seed, so output does not
/// depend on generation order.
pub fn generate(recipe: &SynthRecipe, conc: &ConcentrationSet) -> Result<SpectraSet> {
    recipe.validate()?;
    let names: Vec<&str> = recipe.species.iter().map(|s| s.name.as_str()).collect();
    let mut rows = Vec::with_capacity(names.len());
    for name in &names {
        match conc.species().iter().position(|s| s.name == *name) {
            Some(r) => rows.push(r),
            None => return Err(Error::RecipeSpeciesMismatch(format!("no concentrations for `{name}`"))),
        }
    }
    if let Some(extra) = conc.species().iter().find(|s| !names.contains(&s.name.as_str())) {
        return Err(Error::RecipeSpeciesMismatch(format!("`{}` not in recipe", extra.name)));
    }

    let axis = recipe.axis.values();
    let j = axis.len();
    let responses = recipe.responses();
    let reference = responses.row_sum().iter().copied().fold(0.0, f64::max);
    let span = axis[j - 1] - axis[0];
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let i = conc.n_samples();
    let mut x = DMatrix::zeros(i, j);
    for n in 0..i {
        let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
        rng.set_stream(n as u64 + 1);
        let drift = uniform(&mut rng, recipe.amplitude_drift);
        let bscale = uniform(&mut rng, recipe.baseline.scale);
        let jitter = recipe.baseline.shape_jitter;
        let wobble = 1.0 + uniform(&mut rng, [-jitter, jitter]);
        let wobble2 = 1.0 + uniform(&mut rng, [-jitter, jitter]);
        for c in 0..j {
            let signal: f64 = rows
                .iter()
                .enumerate()
                .map(|(s, &r)| conc.matrix()[(r, n)] * responses[(s, c)])
                .sum();
            let u = (axis[c] - axis[0]) / span;
            let baseline = match &recipe.baseline.shape {
                BaselineShape::None => 0.0,
                BaselineShape::Polynomial { coefficients } => coefficients
                    .iter()
                    .enumerate()
                    .map(|(k, a)| {
                        let w = if k % 2 == 0 { wobble } else { wobble2 };
                        a * w * u.powi(k as i32)
                    })
                    .sum(),
                BaselineShape::Exponential { amplitude, decay } => {
                    amplitude * wobble2 * (-(axis[c] - axis[0]) / (decay * wobble)).exp()
                }
            };
            let noise: f64 = normal.sample(&mut rng);
            x[(n, c)] = drift * (signal + bscale * baseline * reference) + recipe.noise * reference * noise;
        }
        if recipe.spikes.rate > 0.0 {
            let count = Poisson::new(recipe.spikes.rate).expect("positive rate").sample(&mut rng) as usize;
            for _ in 0..count {
                let c = rng.random_range(0..j);
                x[(n, c)] += uniform(&mut rng, recipe.spikes.amplitude) * reference;
            }
        }
    }
    SpectraSet::new(axis, x, conc.labels().to_vec())
}

pub const GLUCOSE_RANGE: [f64; 2] = [0.0, 1.0];
pub const LYSOZYME_RANGE: [f64; 2] = [0.0, 10.0];

/// Artificial-tear recipe: glucose and lysozyme with exponential
/// fluorescence, mild amplitude drift and noise. Peak positions are synthetic.
pub fn tears_recipe(seed: u64) -> SynthRecipe {
    SynthRecipe {
        axis: AxisSpec::default(),
        species: vec![
            SpeciesRecipe {
                name: "glucose".into(),
                unit: "mg/mL".into(),
                peaks: vec![
                    Peak::new(423.0, 12.0, 0.6),
                    Peak::new(520.0, 14.0, 0.5),
                    Peak::new(1060.0, 16.0, 0.8),
                    Peak::new(1125.0, 14.0, 1.0),
                    Peak::new(1365.0, 18.0, 0.4),
                ],
                response: 1.0,
            },
            SpeciesRecipe {
                name: "lysozyme".into(),
                unit: "mg/mL".into(),
                peaks: vec![
                    Peak::new(760.0, 10.0, 0.7),
                    Peak::new(1003.0, 8.0, 1.0),
                    Peak::new(1250.0, 20.0, 0.6),
                    Peak::new(1450.0, 16.0, 0.8),
                    Peak::new(1660.0, 20.0, 0.9),
                ],
                response: 0.2,
            },
        ],
        baseline: BaselineSpec {
            shape: BaselineShape::Exponential {
                amplitude: 3.0,
                decay: 600.0,
            },
            scale: [0.5, 1.5],
            shape_jitter: 0.1,
        },
        noise: 0.005,
        spikes: SpikeSpec::default(),
        amplitude_drift: [0.9, 1.1],
        seed,
    }
}

/// Random concentrations uniform in `ranges` (one per species), drawn
/// from stream 0 of `seed`. Labels are `{prefix}_{001..}`.
pub fn random_concentrations(
    species: &[Species],
    ranges: &[[f64; 2]],
    n: usize,
    seed: u64,
    prefix: &str,
) -> Result<ConcentrationSet> {
    if species.len() != ranges.len() {
        return Err(Error::RecipeSpeciesMismatch(format!(
            "{} species but {} ranges",
            species.len(),
            ranges.len()
        )));
    }
    for r in ranges {
        check_range("concentration", *r, false)?;
        if r[0] < 0.0 {
            return Err(Error::InvalidRecipe(format!("concentration range {r:?} negative")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut c = DMatrix::zeros(species.len(), n);
    for col in 0..n {
        for (s, r) in ranges.iter().enumerate() {
            c[(s, col)] = uniform(&mut rng, *r);
        }
    }
    let labels = (1..=n).map(|k| format!("{prefix}_{k:03}")).collect();
    ConcentrationSet::new(c, species.to_vec(), labels)
}

/// `n` artificial tear spectra with glucose in 0 to 1 mg/mL and lysozyme in
/// 0 to 10 mg/mL.
pub fn tears_phantom(n: usize, seed: u64) -> Result<(SpectraSet, ConcentrationSet)> {
    if n < 4 {
        return Err(Error::TooFewSpectra { found: n, required: 4 });
    }
    let recipe = tears_recipe(seed);
    let species: Vec<Species> = recipe.species.iter().map(|s| Species::new(&s.name, &s.unit)).collect();
    let conc = random_concentrations(&species, &[GLUCOSE_RANGE, LYSOZYME_RANGE], n, seed, "tear")?;
    let set = generate(&recipe, &conc)?;
    Ok((set, conc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain_recipe() -> SynthRecipe {
        let mut r = tears_recipe(4);
        r.baseline = BaselineSpec::default();
        r.noise = 0.0;
        r.amplitude_drift = [1.0, 1.0];
        r
    }

    #[test]
    fn clean_spectra_are_linear_in_concentration() {
        let recipe = plain_recipe();
        let species: Vec<Species> = recipe.species.iter().map(|s| Species::new(&s.name, &s.unit)).collect();
        let conc = random_concentrations(&species, &[[0.0, 1.0], [0.0, 10.0]], 6, 1, "s").unwrap();
        let set = generate(&recipe, &conc).unwrap();
        // least squares recovers the concentrations from the pure responses
        let r = recipe.responses();
        let rt = r.transpose();
        let solved = (&r * &rt).lu().solve(&(&r * set.matrix().transpose())).unwrap();
        assert!((solved - conc.matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn seeded_determinism_and_ranges() {
        let (a, ca) = tears_phantom(40, 9).unwrap();
        let (b, cb) = tears_phantom(40, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca, cb);
        let (c, _) = tears_phantom(40, 10).unwrap();
        assert_ne!(a, c);
        for n in 0..40 {
            let g = ca.matrix()[(0, n)];
            let l = ca.matrix()[(1, n)];
            assert!((0.0..=1.0).contains(&g));
            assert!((0.0..=10.0).contains(&l));
        }
        assert_eq!(a.n_spectra(), 40);
        assert!(tears_phantom(3, 1).is_err());
    }

    #[test]
    fn species_mismatch() {
        let recipe = plain_recipe();
        let conc = random_concentrations(&[Species::new("glucose", "mg/mL")], &[[0.0, 1.0]], 4, 1, "s").unwrap();
        assert!(matches!(generate(&recipe, &conc), Err(Error::RecipeSpeciesMismatch(_))));
    }

    #[test]
    fn invalid_recipes() {
        let mut r = plain_recipe();
        r.species[0].peaks[0].center = 5000.0;
        assert!(r.validate().is_err());
        let mut r = plain_recipe();
        r.species[0].peaks[0].width = 0.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn spikes_land_on_single_channels() {
        let mut recipe = plain_recipe();
        recipe.spikes = SpikeSpec {
            rate: 3.0,
            amplitude: [50.0, 60.0],
        };
        let species: Vec<Species> = recipe.species.iter().map(|s| Species::new(&s.name, &s.unit)).collect();
        let conc = random_concentrations(&species, &[[0.0, 1.0], [0.0, 10.0]], 10, 2, "s").unwrap();
        let spiky = generate(&recipe, &conc).unwrap();
        recipe.spikes.rate = 0.0;
        let clean = generate(&recipe, &conc).unwrap();
        let diff = spiky.matrix() - clean.matrix();
        let hits = diff.iter().filter(|v| v.abs() > 1e-9).count();
        assert!(hits > 0);
        assert!(diff.iter().all(|v| v.abs() < 1e-9 || *v > 49.0 * recipe.reference_peak()));
    }

    #[test]
    fn recipe_parses_from_json() {
        let text = r#"{
            "species": [{"name": "a", "peaks": [{"center": 900, "width": 10, "amplitude": 1}], "response": 1}],
            "baseline": {"shape": {"kind": "polynomial", "coefficients": [1, 0.5]}, "scale": [0.5, 2]},
            "noise": 0.01,
            "seed": 3
        }"#;
        let r: SynthRecipe = serde_json::from_str(text).unwrap();
        r.validate().unwrap();
        assert_eq!(r.axis, AxisSpec::default());
        assert_eq!(r.amplitude_drift, [1.0, 1.0]);
    }
}
