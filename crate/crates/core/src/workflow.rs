//! End-to-end runs: data source to patterns, training, comparison and the
//! files each run writes.
//!
//! A [`RunConfig`] holds everything that affects results. Its fingerprint
//! is embedded in every report; output locations are not part of it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alarm::{Replay, ReplayOptions};
use crate::anfis::AnfisConfig;
use crate::bel::BelConfig;
use crate::dataset::{
    assign_splits, load_csv, make_patterns, normalize, PatternMode, PatternSet, Series,
    SplitFractions, SynthSpec, DEFAULT_LAG,
};
use crate::error::{Error, Result};
use crate::evaluate::{
    compare, fingerprint, score, Comparison, EvalReport, PatternSummary, PredictionPoint,
};
use crate::figures::comparison_figures;
use crate::mlp::MlpConfig;
use crate::model::{ModelConfig, ModelKind, Preprocessing, SavedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv(PathBuf),
    Synth(SynthSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Series> {
        match self {
            DataSource::Csv(path) => load_csv(path),
            DataSource::Synth(spec) => spec.generate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs: usize,
}

impl Default for BelParams {
    fn default() -> Self {
        BelParams {
            alpha: BelConfig::DEFAULT_ALPHA,
            beta: BelConfig::DEFAULT_BETA,
            gamma: BelConfig::DEFAULT_GAMMA,
            epochs: BelConfig::DEFAULT_EPOCHS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnfisParams {
    pub mfs_per_input: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub zeroth_order: bool,
    pub max_rules: usize,
}

impl Default for AnfisParams {
    fn default() -> Self {
        AnfisParams {
            mfs_per_input: AnfisConfig::DEFAULT_MFS,
            learning_rate: AnfisConfig::DEFAULT_LEARNING_RATE,
            epochs: AnfisConfig::DEFAULT_EPOCHS,
            zeroth_order: false,
            max_rules: AnfisConfig::DEFAULT_MAX_RULES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: MlpConfig::DEFAULT_HIDDEN,
            learning_rate: MlpConfig::DEFAULT_LEARNING_RATE,
            epochs: MlpConfig::DEFAULT_EPOCHS,
        }
    }
}

fn default_mode() -> PatternMode {
    PatternMode::LaggedO3
}

fn default_lag() -> usize {
    DEFAULT_LAG
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "default_mode")]
    pub mode: PatternMode,
    #[serde(default = "default_lag")]
    pub lag: usize,
    /// Drives the split shuffle and every model's initialisation.
    pub seed: u64,
    #[serde(default)]
    pub fractions: SplitFractions,
    #[serde(default)]
    pub bel: BelParams,
    #[serde(default)]
    pub anfis: AnfisParams,
    #[serde(default)]
    pub mlp: MlpParams,
}

impl RunConfig {
    pub fn new(data: DataSource, seed: u64) -> Self {
        RunConfig {
            data,
            mode: default_mode(),
            lag: default_lag(),
            seed,
            fractions: SplitFractions::default(),
            bel: BelParams::default(),
            anfis: AnfisParams::default(),
            mlp: MlpParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("run config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn input_dim(&self) -> usize {
        self.mode.input_channels(self.lag).len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == PatternMode::LaggedO3 && self.lag == 0 {
            return Err(Error::Config("lag must be at least 1".into()));
        }
        self.fractions.counts(0)?;
        for kind in ModelKind::ALL {
            self.model_config(kind).validate()?;
        }
        Ok(())
    }

    pub fn model_config(&self, kind: ModelKind) -> ModelConfig {
        let (input_dim, seed) = (self.input_dim(), self.seed);
        match kind {
            ModelKind::Bel => ModelConfig::Bel(BelConfig {
                alpha: self.bel.alpha,
                beta: self.bel.beta,
                gamma: self.bel.gamma,
                epochs: self.bel.epochs,
                seed,
                input_dim,
            }),
            ModelKind::Anfis => ModelConfig::Anfis(AnfisConfig {
                input_dim,
                mfs_per_input: self.anfis.mfs_per_input,
                learning_rate: self.anfis.learning_rate,
                epochs: self.anfis.epochs,
                seed,
                zeroth_order: self.anfis.zeroth_order,
                max_rules: self.anfis.max_rules,
            }),
            ModelKind::Mlp => ModelConfig::Mlp(MlpConfig {
                input_dim,
                hidden: self.mlp.hidden,
                learning_rate: self.mlp.learning_rate,
                epochs: self.mlp.epochs,
                seed,
            }),
        }
    }

    pub fn fingerprint(&self) -> Result<String> {
        fingerprint(self)
    }
}

/// Loaded data and the normalized, split pattern set built from it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub series: Series,
    pub patterns: PatternSet,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let series = config.data.load()?;
    let patterns = make_patterns(&series, config.lag, config.mode)?;
    let patterns = normalize(&assign_splits(&patterns, config.fractions, config.seed)?)?;
    log::info!(
        "{} days -> {} patterns ({} mode, lag {})",
        series.len(),
        patterns.len(),
        config.mode,
        config.lag
    );
    Ok(Prepared { series, patterns })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub saved: SavedModel,
    pub report: EvalReport,
    pub points: Vec<PredictionPoint>,
}

/// Trains one model kind. Unlike a comparison, a training failure is an
/// error.
pub fn train(config: &RunConfig, kind: ModelKind) -> Result<TrainOutput> {
    let Prepared { patterns, .. } = prepare(config)?;
    let model_config = config.model_config(kind);
    let fitted = model_config.fit(&patterns)?;
    let trained = score(&model_config, fitted, &patterns)?;
    let model = trained.model.expect("scored models are kept");
    let report = EvalReport {
        run_fingerprint: Some(config.fingerprint()?),
        patterns: PatternSummary::of(&patterns),
        ranking: trained.report.metrics.iter().filter(|m| m.test.cor.is_some()).map(|_| kind).collect(),
        models: vec![trained.report],
    };
    Ok(TrainOutput {
        saved: SavedModel {
            model,
            preprocessing: Preprocessing::of(&patterns),
        },
        report,
        points: trained.points,
    })
}

pub fn compare_all(config: &RunConfig) -> Result<(Prepared, Comparison)> {
    let prepared = prepare(config)?;
    let configs: Vec<ModelConfig> = ModelKind::ALL.iter().map(|&k| config.model_config(k)).collect();
    let mut comparison = compare(&configs, &prepared.patterns)?;
    comparison.report.run_fingerprint = Some(config.fingerprint()?);
    Ok((prepared, comparison))
}

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
pub fn prepare_output_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `model.json` and `report.json`; returns the written paths.
pub fn write_train(dir: &Path, force: bool, output: &TrainOutput) -> Result<Vec<PathBuf>> {
    prepare_output_dir(dir, force)?;
    Ok(vec![
        write_text(dir.join("model.json"), &output.saved.to_json()?)?,
        write_text(dir.join("report.json"), &output.report.to_json()?)?,
    ])
}

/// Writes `report.json` and the figure set; returns the written paths.
pub fn write_compare(
    dir: &Path,
    force: bool,
    prepared: &Prepared,
    comparison: &Comparison,
) -> Result<Vec<PathBuf>> {
    prepare_output_dir(dir, force)?;
    let mut written = vec![write_text(dir.join("report.json"), &comparison.report.to_json()?)?];
    for figure in comparison_figures(&prepared.series, comparison)? {
        written.extend(figure.write(dir)?);
    }
    Ok(written)
}

/// One next-day forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub issued: chrono::NaiveDate,
    pub date: chrono::NaiveDate,
    pub predicted_o3: f64,
}

/// Forecasts the day after every day with enough history.
pub fn forecast(saved: &SavedModel, series: &Series) -> Result<Vec<Forecast>> {
    Replay::new(
        series,
        saved.model.clone(),
        saved.preprocessing.clone(),
        None,
        ReplayOptions::default(),
    )?
    .map(|r| {
        r.map(|r| Forecast {
            issued: r.issued,
            date: r.date,
            predicted_o3: r.predicted_o3,
        })
    })
    .collect()
}
