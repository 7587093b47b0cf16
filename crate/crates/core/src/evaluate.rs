//! Per-split evaluation and the three-model comparison.
//!
//! Metrics are computed in raw ozone units: predictions and targets are
//! passed back through the pattern set's normalization before scoring.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{PatternMode, PatternSet, Split};
use crate::error::{check_dim, Error, Result};
use crate::metrics::{correlation, mae, rmse};
use crate::model::{Model, ModelConfig, ModelKind};
use crate::Predictor;

/// Short hex digest of the canonical JSON form of `value`. Object keys are
/// sorted, so field order in the source does not matter.
pub fn fingerprint<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?.to_string();
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(hex::encode(&digest[..8]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub count: usize,
    /// `None` when correlation is undefined; `cor_error` says why.
    pub cor: Option<f64>,
    pub rmse: f64,
    pub mae: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cor_error: Option<String>,
}

impl SplitMetrics {
    fn compute(predicted: &[f64], actual: &[f64]) -> Result<Self> {
        let (cor, cor_error) = match correlation(predicted, actual) {
            Ok(r) => (Some(r), None),
            Err(e @ Error::UndefinedCorrelation(_)) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        Ok(SplitMetrics {
            count: predicted.len(),
            cor,
            rmse: rmse(predicted, actual)?,
            mae: mae(predicted, actual)?,
            cor_error,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub train: SplitMetrics,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
}

impl ModelEvaluation {
    pub fn split(&self, split: Split) -> &SplitMetrics {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// One pattern's prediction next to its target, in raw units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub date: NaiveDate,
    pub split: Split,
    pub predicted: f64,
    pub actual: f64,
}

pub fn predictions<P: Predictor>(model: &P, patterns: &PatternSet) -> Result<Vec<PredictionPoint>> {
    check_dim("model input", patterns.input_dim(), model.input_dim())?;
    let unscale = |y: f64| match &patterns.normalization {
        Some(n) => n.invert_target(y),
        None => Ok(y),
    };
    (0..patterns.len())
        .map(|i| {
            let y = model.predict(&patterns.inputs[i])?;
            if !y.is_finite() {
                return Err(Error::RejectedInput(format!("model produced {y} on pattern {i}")));
            }
            Ok(PredictionPoint {
                date: patterns.dates[i],
                split: patterns.split_labels[i],
                predicted: unscale(y)?,
                actual: unscale(patterns.targets[i])?,
            })
        })
        .collect()
}

fn summarize(points: &[PredictionPoint]) -> Result<ModelEvaluation> {
    let metrics = |split: Split| {
        let (p, a): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter(|pt| pt.split == split)
            .map(|pt| (pt.predicted, pt.actual))
            .unzip();
        SplitMetrics::compute(&p, &a)
    };
    Ok(ModelEvaluation {
        train: metrics(Split::Train)?,
        validation: metrics(Split::Validation)?,
        test: metrics(Split::Test)?,
    })
}

pub fn evaluate_model<P: Predictor>(model: &P, patterns: &PatternSet) -> Result<ModelEvaluation> {
    summarize(&predictions(model, patterns)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub mode: PatternMode,
    pub lag: usize,
    pub total: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl PatternSummary {
    pub fn of(patterns: &PatternSet) -> Self {
        PatternSummary {
            mode: patterns.mode,
            lag: patterns.lag,
            total: patterns.len(),
            train: patterns.count(Split::Train),
            validation: patterns.count(Split::Validation),
            test: patterns.count(Split::Test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub config_fingerprint: String,
    pub status: ModelStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: Option<ModelEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Fingerprint of the run configuration that produced the report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_fingerprint: Option<String>,
    pub patterns: PatternSummary,
    pub models: Vec<ModelReport>,
    /// Models with a defined test correlation, best first.
    pub ranking: Vec<ModelKind>,
}

impl EvalReport {
    pub fn model(&self, kind: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.kind == kind)
    }

    pub fn test_cor(&self, kind: ModelKind) -> Option<f64> {
        self.model(kind)?.metrics.as_ref()?.test.cor
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn rank(models: &[ModelReport]) -> Vec<ModelKind> {
    let mut scored: Vec<(f64, ModelKind)> = models
        .iter()
        .filter_map(|m| Some((m.metrics.as_ref()?.test.cor?, m.kind)))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, k)| k).collect()
}

/// Outcome of training and scoring one model.
#[derive(Debug, Clone)]
pub struct Trained {
    pub report: ModelReport,
    pub model: Option<Model>,
    pub points: Vec<PredictionPoint>,
}

/// Scores an already fitted model.
pub fn score(config: &ModelConfig, model: Model, patterns: &PatternSet) -> Result<Trained> {
    let points = predictions(&model, patterns)?;
    let metrics = summarize(&points)?;
    Ok(Trained {
        report: ModelReport {
            kind: config.kind(),
            config: config.clone(),
            config_fingerprint: fingerprint(config)?,
            status: ModelStatus::Ok,
            error: None,
            metrics: Some(metrics),
        },
        model: Some(model),
        points,
    })
}

/// Fits and scores one model. Failure is recorded in the report rather
/// than returned.
pub fn train_and_evaluate(config: &ModelConfig, patterns: &PatternSet) -> Result<Trained> {
    let outcome = config
        .validate()
        .and_then(|_| config.fit(patterns))
        .and_then(|model| score(config, model, patterns));
    match outcome {
        Ok(trained) => Ok(trained),
        Err(e) => {
            log::warn!("{} failed: {e}", config.kind());
            Ok(Trained {
                report: ModelReport {
                    kind: config.kind(),
                    config: config.clone(),
                    config_fingerprint: fingerprint(config)?,
                    status: ModelStatus::Failed,
                    error: Some(e.to_string()),
                    metrics: None,
                },
                model: None,
                points: Vec::new(),
            })
        }
    }
}

/// Trained models plus the report built from them.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: EvalReport,
    pub runs: Vec<Trained>,
}

impl Comparison {
    pub fn run(&self, kind: ModelKind) -> Option<&Trained> {
        self.runs.iter().find(|r| r.report.kind == kind)
    }
}

/// Trains every config on the same patterns and ranks by test correlation.
/// A model that fails to train is reported as failed rather than aborting
/// the comparison.
pub fn compare(configs: &[ModelConfig], patterns: &PatternSet) -> Result<Comparison> {
    let runs = train_all(configs, patterns)?;
    let models: Vec<ModelReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(Comparison {
        report: EvalReport {
            run_fingerprint: None,
            patterns: PatternSummary::of(patterns),
            ranking: rank(&models),
            models,
        },
        runs,
    })
}

#[cfg(not(target_arch = "wasm32"))]
fn train_all(configs: &[ModelConfig], patterns: &PatternSet) -> Result<Vec<Trained>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || train_and_evaluate(c, patterns)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

#[cfg(target_arch = "wasm32")]
fn train_all(configs: &[ModelConfig], patterns: &PatternSet) -> Result<Vec<Trained>> {
    configs.iter().map(|c| train_and_evaluate(c, patterns)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anfis::AnfisConfig;
    use crate::bel::BelConfig;
    use crate::dataset::{assign_splits, make_patterns, normalize, Series, SplitFractions};
    use crate::mlp::MlpConfig;

    struct Oracle<'a>(&'a PatternSet);

    impl Predictor for Oracle<'_> {
        fn input_dim(&self) -> usize {
            self.0.input_dim()
        }
        fn predict(&self, x: &[f64]) -> Result<f64> {
            let i = self.0.inputs.iter().position(|p| p == x).expect("known input");
            Ok(self.0.targets[i])
        }
    }

    struct Constant(usize);

    impl Predictor for Constant {
        fn input_dim(&self) -> usize {
            self.0
        }
        fn predict(&self, _x: &[f64]) -> Result<f64> {
            Ok(0.25)
        }
    }

    fn prepared(values: Vec<f64>, lag: usize) -> PatternSet {
        let s = Series::from_o3(crate::dataset::default_epoch(), values).unwrap();
        let p = make_patterns(&s, lag, PatternMode::LaggedO3).unwrap();
        normalize(&assign_splits(&p, SplitFractions::default(), 4).unwrap()).unwrap()
    }

    fn wiggle(n: usize) -> Vec<f64> {
        (0..n).map(|t| 300.0 + 20.0 * (t as f64 * 0.37).sin() + (t % 7) as f64).collect()
    }

    #[test]
    fn oracle_model_is_perfect_on_every_split() {
        // distinct inputs so the oracle lookup is unambiguous
        let p = prepared((0..80).map(|t| (t * t) as f64).collect(), 2);
        let eval = evaluate_model(&Oracle(&p), &p).unwrap();
        for split in Split::ALL {
            let m = eval.split(split);
            assert_eq!(m.count, p.count(split));
            assert!((m.cor.unwrap() - 1.0).abs() < 1e-12);
            assert!(m.rmse < 1e-9, "{split} rmse {}", m.rmse);
        }
    }

    #[test]
    fn constant_model_surfaces_undefined_correlation() {
        let p = prepared(wiggle(60), 3);
        let eval = evaluate_model(&Constant(3), &p).unwrap();
        for split in Split::ALL {
            let m = eval.split(split);
            assert!(m.cor.is_none());
            assert!(m.cor_error.as_deref().unwrap().contains("constant"));
        }
    }

    #[test]
    fn metrics_are_in_raw_units() {
        let p = prepared(wiggle(60), 3);
        let points = predictions(&Constant(3), &p).unwrap();
        let scale = p.normalization.as_ref().unwrap().scale(crate::dataset::Channel::O3).unwrap();
        assert!((points[0].predicted - scale.invert(0.25)).abs() < 1e-12);
        assert!(points.iter().all(|pt| pt.actual > 250.0));
    }

    #[test]
    fn dimension_mismatch_is_a_contract_error() {
        let p = prepared(wiggle(60), 3);
        assert!(matches!(evaluate_model(&Constant(2), &p), Err(Error::Contract(_))));
    }

    fn configs(dim: usize) -> Vec<ModelConfig> {
        vec![
            ModelConfig::Bel(BelConfig { epochs: 20, ..BelConfig::new(dim, 1) }),
            ModelConfig::Anfis(AnfisConfig { epochs: 50, ..AnfisConfig::new(dim, 1) }),
            ModelConfig::Mlp(MlpConfig { epochs: 20, ..MlpConfig::new(dim, 1) }),
        ]
    }

    #[test]
    fn constant_data_gives_no_ranking() {
        let p = prepared(vec![280.0; 80], 4);
        let cmp = compare(&configs(4), &p).unwrap();
        assert!(cmp.report.ranking.is_empty());
        for m in &cmp.report.models {
            assert_eq!(m.status, ModelStatus::Ok);
            assert!(m.metrics.as_ref().unwrap().test.cor_error.is_some(), "{:?}", m.kind);
        }
    }

    #[test]
    fn failed_model_is_flagged_not_fatal() {
        let p = prepared(wiggle(100), 4);
        let mut cfgs = configs(4);
        cfgs[2] = ModelConfig::Mlp(MlpConfig { hidden: 0, ..MlpConfig::new(4, 1) });
        let cmp = compare(&cfgs, &p).unwrap();
        let mlp = cmp.report.model(ModelKind::Mlp).unwrap();
        assert_eq!(mlp.status, ModelStatus::Failed);
        assert!(mlp.error.is_some());
        assert!(!cmp.report.ranking.contains(&ModelKind::Mlp));
        assert_eq!(cmp.report.ranking.len(), 2);
    }

    #[test]
    fn report_json_round_trips() {
        let p = prepared(wiggle(120), 4);
        let mut report = compare(&configs(4), &p).unwrap().report;
        report.run_fingerprint = Some("abc".into());
        let text = report.to_json().unwrap();
        assert_eq!(EvalReport::from_json(&text).unwrap(), report);
    }

    #[test]
    fn fingerprint_ignores_field_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x":1,"y":[1,2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[1,2],"x":1}"#).unwrap();
        assert_eq!(fingerprint(&a).unwrap(), fingerprint(&b).unwrap());
        assert_eq!(fingerprint(&a).unwrap().len(), 16);
        assert_ne!(fingerprint(&a).unwrap(), fingerprint(&serde_json::json!({"x": 2})).unwrap());
    }

    #[test]
    fn evaluation_is_idempotent() {
        let p = prepared(wiggle(120), 4);
        let model = ModelConfig::Bel(BelConfig { epochs: 5, ..BelConfig::new(4, 2) }).fit(&p).unwrap();
        assert_eq!(evaluate_model(&model, &p).unwrap(), evaluate_model(&model, &p).unwrap());
    }
}
