//! Run configuration: an optional TOML file, overridden field by field by
//! command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use raman_pcr::synth::SynthRecipe;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spectra: Option<PathBuf>,
    pub concentrations: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// `pipeline` or `label=pipeline` entries.
    pub candidates: Option<Vec<String>>,
    pub pipeline: Option<String>,
    pub alpha: Option<f64>,
    pub log_press: Option<bool>,
    pub threads: Option<usize>,
    pub pc_count: Option<usize>,
    pub model: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub prefix: Option<String>,
    /// Without a recipe the artificial-tears phantom is generated.
    pub recipe: Option<SynthRecipe>,
    /// Concentration range per recipe species.
    pub ranges: Option<Vec<[f64; 2]>>,
}

impl RunConfig {
    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("ConfigError path={}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| format!("ConfigError path={}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.spectra,
            &mut cfg.concentrations,
            &mut cfg.out_dir,
            &mut cfg.model,
            &mut cfg.report,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn alpha(&self) -> Result<f64, String> {
        let a = self.alpha.unwrap_or(raman_pcr::significance::DEFAULT_ALPHA);
        if a > 0.0 && a < 1.0 {
            Ok(a)
        } else {
            Err(format!("InvalidParameter step=alpha: {a} must lie in (0, 1)"))
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn require<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, String> {
        value.as_deref().ok_or_else(|| format!("MissingArgument: --{what} not given"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
            spectra = "x.csv"
            candidates = ["identity", "A=baseline_als|rnv(90)"]
            alpha = 0.01
            log_press = true
            [synth]
            n = 12
            seed = 3
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.candidates.as_ref().unwrap().len(), 2);
        assert_eq!(cfg.alpha().unwrap(), 0.01);
        assert_eq!(cfg.synth.unwrap().n, Some(12));
    }

    #[test]
    fn alpha_must_be_open_unit_interval() {
        for bad in [0.0, 1.0, -0.1, 2.0] {
            let cfg = RunConfig {
                alpha: Some(bad),
                ..RunConfig::default()
            };
            assert!(cfg.alpha().is_err());
        }
        assert_eq!(RunConfig::default().alpha().unwrap(), 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("alpah = 0.1").is_err());
    }

    #[test]
    fn recipe_from_toml() {
        let text = r#"
            [synth]
            ranges = [[0.0, 1.0]]
            [synth.recipe]
            noise = 0.0
            [[synth.recipe.species]]
            name = "a"
            response = 1.0
            peaks = [{ center = 1000.0, width = 10.0, amplitude = 1.0 }]
        "#;
        let cfg: RunConfig = toml::from_str(text).unwrap();
        let recipe = cfg.synth.unwrap().recipe.unwrap();
        assert_eq!(recipe.species[0].peaks[0].center, 1000.0);
        recipe.validate().unwrap();
    }

    #[test]
    fn shipped_config_matches_stock_grid() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
        let cfg = RunConfig::load(&path).unwrap();
        let listed = cfg.candidates.clone().unwrap();
        let stock: Vec<String> = raman_pcr::default_candidates().into_iter().map(|c| c.label).collect();
        assert_eq!(listed, stock);
        assert_eq!(cfg.alpha().unwrap(), 0.05);
    }
}
