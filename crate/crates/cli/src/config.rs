//! Experiment configuration file.
//!
//! TOML: top-level keys plus `[data]`, `[model]` and `[train]` tables. The
//! single `seed` and the noise scale live at top level; `[train]` must not
//! repeat them.

use std::fs;
use std::path::{Path, PathBuf};

use mdctgan::neural::{ModelConfig, TrainConfig};
use mdctgan::psycho::PsychoConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub sample_rate_hz: u32,
    pub mdct_bands: usize,
    pub alpha: f64,
    pub noise_scale: f64,
    pub db_reference: f64,
    pub db_floor: f64,
    pub seed: u64,
    /// Relative paths resolve against the config file's directory.
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 22016,
            mdct_bands: 128,
            alpha: 0.3,
            noise_scale: 1.0,
            db_reference: 96.0,
            db_floor: -100.0,
            seed: 0,
            out_dir: PathBuf::from("out"),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `"tones"`, the built-in synthetic corpus; the default when
    /// `dataset_dir` is unset.
    pub synthetic: Option<String>,
    /// Directory of WAV files.
    pub dataset_dir: Option<PathBuf>,
    /// Number of synthetic samples.
    pub count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            synthetic: None,
            dataset_dir: None,
            count: 64,
        }
    }
}

/// `[train]` keys that are owned by the top level.
const TOP_LEVEL_ONLY: [&str; 2] = ["rng_seed", "noise_scale"];

impl AppConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = toml::from_str(text)
            .map_err(|e: toml::de::Error| CliError::config(format!("config: {}", e.message())))?;
        if let Some(train) = table.get("train").and_then(|t| t.as_table()) {
            if let Some(k) = TOP_LEVEL_ONLY.iter().find(|k| train.contains_key(**k)) {
                let top = if *k == "rng_seed" { "seed" } else { *k };
                return Err(CliError::config(format!(
                    "config: [train] {k} is not allowed; set top-level `{top}`"
                )));
            }
        }
        let mut cfg: AppConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(format!("config: {}", e.message())))?;
        cfg.train.rng_seed = cfg.seed;
        cfg.train.noise_scale = cfg.noise_scale;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative `out_dir` and `dataset_dir` are resolved
    /// against its parent directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        if let Some(d) = cfg.data.dataset_dir.as_mut() {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::config(m));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be positive".into());
        }
        if self.mdct_bands < 8 || !self.mdct_bands.is_power_of_two() {
            return bad(format!(
                "mdct_bands must be a power of two >= 8, got {}",
                self.mdct_bands
            ));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!(
                "noise_scale must be >= 0, got {}",
                self.noise_scale
            ));
        }
        if !self.db_reference.is_finite() || !(self.db_floor < 0.0) {
            return bad("db_reference must be finite and db_floor negative".into());
        }
        match (&self.data.synthetic, &self.data.dataset_dir) {
            (Some(s), _) if s != "tones" => {
                return bad(format!("unknown synthetic dataset {s:?}; only \"tones\""))
            }
            (Some(_), Some(_)) => return bad("[data] sets both synthetic and dataset_dir".into()),
            _ => {}
        }
        self.model
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        self.train
            .validate()
            .map_err(|e| CliError::config(e.to_string()))?;
        Ok(())
    }

    pub fn psycho(&self) -> PsychoConfig {
        PsychoConfig {
            alpha: self.alpha,
            db_reference: self.db_reference,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = AppConfig::parse("").unwrap();
        assert_eq!(cfg.sample_rate_hz, 22016);
        assert_eq!(cfg.mdct_bands, 128);
        assert_eq!(cfg.model.output_shape(), (16384, 128, 2));
    }

    #[test]
    fn seed_and_noise_flow_into_training() {
        let cfg = AppConfig::parse("seed = 9\nnoise_scale = 0.5\n").unwrap();
        assert_eq!(cfg.train.rng_seed, 9);
        assert_eq!(cfg.train.noise_scale, 0.5);
    }

    #[test]
    fn rejects_duplicate_seed_and_unknown_keys() {
        assert_eq!(
            AppConfig::parse("[train]\nrng_seed = 3\n")
                .unwrap_err()
                .code,
            1
        );
        assert_eq!(AppConfig::parse("bogus = 1\n").unwrap_err().code, 1);
        assert_eq!(AppConfig::parse("mdct_bands = 100\n").unwrap_err().code, 1);
        assert_eq!(
            AppConfig::parse("[data]\nsynthetic = \"drums\"\n")
                .unwrap_err()
                .code,
            1
        );
        assert_eq!(
            AppConfig::parse("sample_rate_hz = \"x\"\n")
                .unwrap_err()
                .code,
            1
        );
    }
}
