//! The three predictor kinds behind one serializable type.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anfis::{self, AnfisConfig, AnfisModel};
use crate::bel::{self, BelConfig, BelModel};
use crate::dataset::{Channel, Normalization, PatternMode, PatternSet};
use crate::error::{Error, Result};
use crate::mlp::{self, MlpConfig, MlpModel};
use crate::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Bel,
    Anfis,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Bel, ModelKind::Anfis, ModelKind::Mlp];
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Bel => "bel",
            ModelKind::Anfis => "anfis",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bel" => Ok(ModelKind::Bel),
            "anfis" => Ok(ModelKind::Anfis),
            "mlp" | "ann" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Bel(BelConfig),
    Anfis(AnfisConfig),
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Bel(_) => ModelKind::Bel,
            ModelConfig::Anfis(_) => ModelKind::Anfis,
            ModelConfig::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Bel(c) => c.validate(),
            ModelConfig::Anfis(c) => c.validate(),
            ModelConfig::Mlp(c) => c.validate(),
        }
    }

    pub fn fit(&self, patterns: &PatternSet) -> Result<Model> {
        Ok(match self {
            ModelConfig::Bel(c) => Model::Bel(bel::fit(patterns, c)?),
            ModelConfig::Anfis(c) => Model::Anfis(anfis::fit(patterns, c)?),
            ModelConfig::Mlp(c) => Model::Mlp(mlp::fit(patterns, c)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Bel(BelModel),
    Anfis(AnfisModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Bel(_) => ModelKind::Bel,
            Model::Anfis(_) => ModelKind::Anfis,
            Model::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Bel(m) => ModelConfig::Bel(m.config.clone()),
            Model::Anfis(m) => ModelConfig::Anfis(m.config.clone()),
            Model::Mlp(m) => ModelConfig::Mlp(m.config.clone()),
        }
    }
}

impl Predictor for Model {
    fn input_dim(&self) -> usize {
        match self {
            Model::Bel(m) => m.input_dim(),
            Model::Anfis(m) => m.input_dim(),
            Model::Mlp(m) => m.input_dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Model::Bel(m) => m.predict(x),
            Model::Anfis(m) => m.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }

    fn supports_adaptation(&self) -> bool {
        matches!(self, Model::Bel(_))
    }

    fn adapt(&mut self, x: &[f64], target: f64) -> Result<()> {
        match self {
            Model::Bel(m) => m.adapt(x, target),
            other => Err(Error::Unsupported(format!(
                "online adaptation is only available for BEL models, not {}",
                other.kind()
            ))),
        }
    }
}

/// How raw daily readings become model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub mode: PatternMode,
    pub lag: usize,
    pub normalization: Option<Normalization>,
}

impl Preprocessing {
    pub fn of(patterns: &PatternSet) -> Self {
        Preprocessing {
            mode: patterns.mode,
            lag: patterns.lag,
            normalization: patterns.normalization.clone(),
        }
    }

    pub fn input_channels(&self) -> Vec<Channel> {
        self.mode.input_channels(self.lag)
    }

    pub fn scale_input(&self, raw: &[f64]) -> Result<Vec<f64>> {
        match &self.normalization {
            Some(n) => n.apply_input(&self.input_channels(), raw),
            None => Ok(raw.to_vec()),
        }
    }

    pub fn scale_target(&self, raw: f64) -> Result<f64> {
        match &self.normalization {
            Some(n) => n.apply_target(raw),
            None => Ok(raw),
        }
    }

    pub fn unscale_target(&self, scaled: f64) -> Result<f64> {
        match &self.normalization {
            Some(n) => n.invert_target(scaled),
            None => Ok(scaled),
        }
    }
}

/// The on-disk model document: the model itself plus the preprocessing it
/// was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    #[serde(flatten)]
    pub model: Model,
    #[serde(flatten)]
    pub preprocessing: Preprocessing,
}

impl SavedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let saved: SavedModel = serde_json::from_str(text)?;
        let expected = saved.preprocessing.input_channels().len();
        if saved.model.input_dim() != expected {
            return Err(Error::Contract(format!(
                "model expects {} inputs but {} with lag {} yields {expected}",
                saved.model.input_dim(),
                saved.preprocessing.mode,
                saved.preprocessing.lag
            )));
        }
        Ok(saved)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
