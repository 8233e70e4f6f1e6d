//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biot::{FrequencySpec, PoroelasticParams};
use crate::error::{Error, Result};
use crate::fields::NoiseDistribution;
use crate::spectral::{FluidSource, GridSpec, SourceSpec, WindowSpec};
use crate::trainer::{BalanceOptions, NetworkOptions, TrainOptions};

/// Where a region's training data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub name: String,
    /// Full parameter set used to synthesize the data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PoroelasticParams<f64>>,
    /// Shorthand for sandstone with this permeability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Previously simulated dataset; truth is read from its sidecar.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
}

impl RegionSpec {
    pub fn sandstone(name: &str, kappa: f64) -> Self {
        Self { name: name.into(), params: None, kappa: Some(kappa), dataset: None }
    }

    /// Parameters for synthesis, `None` for dataset regions.
    pub fn synthetic_params(&self) -> Option<PoroelasticParams<f64>> {
        self.params.or_else(|| self.kappa.map(PoroelasticParams::sandstone))
    }

    fn validate(&self) -> Result<()> {
        let given = [self.params.is_some(), self.kappa.is_some(), self.dataset.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::Config(format!(
                "region '{}' needs exactly one of params, kappa or dataset",
                self.name
            )));
        }
        if let Some(p) = self.synthetic_params() {
            p.validate()?;
        }
        if let Some(path) = &self.dataset {
            if !path.exists() {
                return Err(Error::Config(format!("dataset {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// Forward problem settings shared by all regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    pub omega: f64,
    pub grid: GridSpec<f64>,
    pub window: WindowSpec<f64>,
    pub source: SourceSpec<f64>,
    pub fluid_source: FluidSource,
    pub max_condition: f64,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        Self {
            omega: FrequencySpec::<f64>::nominal().omega,
            grid: GridSpec { side: 8.0, n: 512 },
            window: WindowSpec::default(),
            source: SourceSpec::nominal(),
            fluid_source: FluidSource::Dx,
            max_condition: 1e12,
        }
    }
}

/// Low-pass cutoff used before differentiating noisy data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cutoff {
    /// A fixed wavenumber.
    Fixed(f64),
    /// `"auto"`: a multiple of the dominant wavenumber of the clean field.
    Auto(AutoCutoff),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoCutoff {
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub level: f64,
    /// Ensemble sizes to compare.
    pub ensembles: Vec<usize>,
    pub seed: u64,
    pub distribution: NoiseDistribution,
    pub cutoff: Cutoff,
    /// Multiple of the dominant wavenumber used by the automatic cutoff.
    pub cutoff_factor: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            level: 0.05,
            ensembles: vec![250, 1500, 2500],
            seed: 2024,
            distribution: NoiseDistribution::Uniform,
            cutoff: Cutoff::Auto(AutoCutoff::Auto),
            cutoff_factor: 4.0,
        }
    }
}

/// A complete experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub forward: ForwardConfig,
    pub regions: Vec<RegionSpec>,
    pub network: NetworkOptions,
    pub training: TrainOptions,
    pub balance: BalanceOptions,
    pub noise: NoiseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("out"),
            forward: ForwardConfig::default(),
            regions: vec![
                RegionSpec::sandstone("high-permeability", 1.5407e-5),
                RegionSpec::sandstone("low-permeability", 2.45e-8),
            ],
            network: NetworkOptions::default(),
            training: TrainOptions::default(),
            balance: BalanceOptions::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        for r in &mut cfg.regions {
            if let Some(d) = &r.dataset {
                if d.is_relative() {
                    r.dataset = Some(base.join(d));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.regions.is_empty() {
            return Err(Error::Config("at least one region is required".into()));
        }
        FrequencySpec::new(self.forward.omega)?;
        self.forward.grid.validate()?;
        SourceSpec::new(self.forward.source.amplitude, self.forward.source.decay, self.forward.source.center)?;
        for r in &self.regions {
            r.validate()?;
        }
        if !(self.training.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.noise.level >= 0.0) || self.noise.ensembles.iter().any(|&n| n == 0) {
            return Err(Error::Config("noise level must be >= 0 and ensemble sizes >= 1".into()));
        }
        if let Cutoff::Fixed(k) = self.noise.cutoff {
            if !(k > 0.0) {
                return Err(Error::Config("cutoff must be positive".into()));
            }
        }
        Ok(())
    }
}
