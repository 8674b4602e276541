//! Training hyperparameters and sectioned config files.

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Preset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: u64,
    /// Examples drawn with replacement per epoch.
    pub steps_per_epoch: u64,
    /// Seeds initialisation, example order and dropout.
    pub seed: u64,
    /// Max global gradient norm; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_clip: Option<f64>,
    /// Write a numbered checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            epochs: 100,
            steps_per_epoch: 100,
            seed: 0,
            grad_clip: None,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.epochs * self.steps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("grad_clip {c} must be positive")));
            }
        }
        Ok(())
    }
}

/// Contents of a config file:
///
/// ```toml
/// [model]
/// preset = "tiny"   # base values; other keys override fields
/// dropout = 0.0
///
/// [train]
/// lr = 0.001
/// ```
///
/// Unknown sections or keys are errors.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        Self {
            model: ModelConfig::preset(p),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let err = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut root: toml::Table = text.parse().map_err(|e| err(&e))?;
        if let Some(key) = root.keys().find(|k| *k != "model" && *k != "train") {
            return Err(Error::Config(format!(
                "unknown section [{key}] (expected [model] and [train])"
            )));
        }
        let section = |root: &mut toml::Table, name: &str| -> Result<toml::Table> {
            match root.remove(name) {
                None => Ok(toml::Table::new()),
                Some(toml::Value::Table(t)) => Ok(t),
                Some(_) => Err(Error::Config(format!("{name} must be a [{name}] section"))),
            }
        };
        let mut model_over = section(&mut root, "model")?;
        let train_tab = section(&mut root, "train")?;
        let preset = match model_over.remove("preset") {
            None => Preset::Paper,
            Some(toml::Value::String(s)) => s.parse()?,
            Some(v) => return Err(Error::Config(format!("preset must be a string, got {v}"))),
        };
        let mut model_tab = toml::Table::try_from(ModelConfig::preset(preset)).map_err(|e| err(&e))?;
        model_tab.extend(model_over);
        let model: ModelConfig = toml::Value::Table(model_tab)
            .try_into()
            .map_err(|e| Error::Config(format!("[model]: {e}")))?;
        model.validate()?;
        let train: TrainConfig = toml::Value::Table(train_tab)
            .try_into()
            .map_err(|e| Error::Config(format!("[train]: {e}")))?;
        train.validate()?;
        Ok(Self { model, train })
    }

    pub fn to_toml(&self) -> String {
        let mut root = toml::Table::new();
        root.insert(
            "model".into(),
            toml::Value::try_from(&self.model).expect("model config serializes"),
        );
        root.insert(
            "train".into(),
            toml::Value::try_from(&self.train).expect("train config serializes"),
        );
        toml::to_string(&root).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_with_overrides() {
        let cfg = RunConfig::from_toml(
            "[model]\npreset = \"tiny\"\ndropout = 0.0\n[train]\nlr = 0.001\nepochs = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelConfig { dropout: 0.0, ..ModelConfig::tiny() });
        assert_eq!(cfg.train.lr, 0.001);
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.beta2, 0.999);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[model]\nchanels = 4\n",
            "[train]\nlearning_rate = 1.0\n",
            "[optim]\nlr = 1.0\n",
            "[model]\npreset = \"huge\"\n",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn text_round_trips() {
        let mut cfg = RunConfig::preset(Preset::Tiny);
        cfg.train.grad_clip = Some(5.0);
        cfg.model.ablate = Some(crate::model::SubBlock::Freq);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
