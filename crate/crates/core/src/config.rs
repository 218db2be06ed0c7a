//! Run configuration, presets and the hash stamped on every output.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierConfig, ClassifierTraining};
use crate::ensemble::{HistorySource, MitigationConfig};
use crate::entropy::OipeConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::forecasters::{Architecture, ForecastSpec, ForecastTraining};
use crate::signal::GeneratorConfig;
use crate::sim::SimConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastSection {
    pub k: usize,
    pub q: usize,
    pub hidden: usize,
    pub conv_channels: usize,
    pub training: ForecastTraining,
    /// Timed forecasts per model when measuring `T^l`.
    pub bench_trials: usize,
}

impl ForecastSection {
    pub fn spec(&self, architecture: Architecture) -> ForecastSpec {
        ForecastSpec { hidden: self.hidden, conv_channels: self.conv_channels, ..ForecastSpec::new(architecture, self.k, self.q) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSection {
    pub epsilon: f64,
    /// One threshold for every level.
    pub tau_c: f64,
    pub mitigation: MitigationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preset: String,
    pub seed: u64,
    /// Fraction of every partition used for training; the rest validates.
    pub train_fraction: f64,
    pub generator: GeneratorConfig,
    pub features: FeatureConfig,
    /// Frame length in seconds; overrides `features.frame_len` when set.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Stack span in seconds; overrides `features.channels` when set.
    #[serde(default)]
    pub kappa: Option<f64>,
    pub entropy: OipeConfig,
    /// Level-count ratio; `floor(rho * models)` levels when set, else 3.
    #[serde(default)]
    pub rho: Option<f64>,
    pub classifier: ClassifierConfig,
    pub classifier_training: ClassifierTraining,
    pub forecast: ForecastSection,
    pub ensemble: EnsembleSection,
    pub sim: SimConfig,
}

impl RunConfig {
    /// Laptop-scale preset used by the acceptance runs.
    pub fn desk() -> Self {
        Self {
            preset: "desk".into(),
            seed: 1,
            train_fraction: 0.7,
            generator: GeneratorConfig::default(),
            features: FeatureConfig::default(),
            lambda: None,
            kappa: None,
            entropy: OipeConfig { h_min: 8, h_max: 12, ..Default::default() },
            rho: None,
            classifier: ClassifierConfig::desk(),
            classifier_training: ClassifierTraining::default(),
            forecast: ForecastSection {
                k: 60,
                q: 1,
                hidden: 16,
                conv_channels: 8,
                training: ForecastTraining { epochs: 20, ..Default::default() },
                bench_trials: 200,
            },
            ensemble: EnsembleSection {
                epsilon: 0.4,
                tau_c: 0.7,
                mitigation: MitigationConfig { history: HistorySource::Gated { threshold: 0.2 }, dead_band: None, coast: true },
            },
            sim: SimConfig::default(),
        }
    }

    /// Published dimensions.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.preset = "paper".into();
        c.features.scales = 92;
        c.features.zeta = 227;
        c.features.channels = 8;
        c.entropy = OipeConfig { dim: 4, delay: 1, h_min: 2, h_max: 32, folds: 10 };
        c.classifier = ClassifierConfig::paper();
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::config(format!("unknown preset '{other}' (expected desk or paper)"))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Feature settings with `lambda` and `kappa` applied.
    pub fn resolved_features(&self) -> FeatureConfig {
        let mut f = self.features;
        if let Some(l) = self.lambda {
            f.frame_len = (l * f.fs).round() as usize;
        }
        if let Some(k) = self.kappa {
            f.channels = (k * f.fs).round() as usize;
        }
        f
    }

    pub fn levels(&self) -> usize {
        self.rho.map_or(3, |r| crate::entropy::level_count(r, Architecture::ALL.len()))
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.resolved_features();
        f.frames()?;
        self.entropy.validate()?;
        self.classifier.validate()?;
        self.forecast.spec(Architecture::Gru).validate()?;
        self.sim.validate()?;
        if f.zeta != self.classifier.input_side || f.channels != self.classifier.channels {
            return Err(Error::config("classifier input must match zeta and c'"));
        }
        if self.levels() != self.classifier.classes {
            return Err(Error::config("classifier classes must equal the level count"));
        }
        if self.levels() != self.generator.partitions {
            return Err(Error::config("the generator must produce one partition per level"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.ensemble.epsilon) || !(self.ensemble.tau_c > 0.0 && self.ensemble.tau_c < 1.0) {
            return Err(Error::config("epsilon must lie in [0, 1] and tau_c in (0, 1)"));
        }
        if self.forecast.bench_trials == 0 {
            return Err(Error::config("bench_trials must be positive"));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the TOML serialization.
    pub fn hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Header entries for every output file.
    pub fn stamp(&self) -> Vec<(&'static str, String)> {
        vec![("config_hash", self.hash()), ("seed", self.seed.to_string())]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        RunConfig::desk().validate().unwrap();
        let p = RunConfig::paper();
        p.validate().unwrap();
        assert_eq!((p.features.frame_len, p.features.overlap, p.features.scales), (60, 54, 92));
        assert_eq!((p.features.zeta, p.features.channels), (227, 8));
        assert_eq!((p.entropy.dim, p.entropy.delay, p.entropy.folds), (4, 1, 10));
        assert_eq!((p.ensemble.epsilon, p.ensemble.tau_c), (0.4, 0.7));
        assert!(RunConfig::preset("huge").is_err());
    }

    #[test]
    fn toml_round_trip_keeps_hash() {
        let c = RunConfig::desk();
        let back = RunConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let mut d = c.clone();
        d.seed = 2;
        assert_ne!(d.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn spans_override_counts() {
        let mut c = RunConfig::desk();
        c.lambda = Some(0.6);
        c.kappa = Some(0.04);
        let f = c.resolved_features();
        assert_eq!((f.frame_len, f.channels), (60, 4));
        c.classifier.channels = 5;
        assert!(c.validate().is_err());
    }
}
