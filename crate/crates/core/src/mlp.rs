//! One-hidden-layer perceptron: `tanh` hidden units, linear output, trained
//! by per-sample backpropagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PatternSet, Split};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::training::BestSnapshot;
use crate::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl MlpConfig {
    pub const DEFAULT_HIDDEN: usize = 2;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.05;
    pub const DEFAULT_EPOCHS: usize = 200;

    pub fn new(input_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden: Self::DEFAULT_HIDDEN,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            epochs: Self::DEFAULT_EPOCHS,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// Hidden weights, `[hidden][input]`.
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    #[serde(rename = "W2")]
    pub w2: Vec<f64>,
    pub b2: f64,
    pub config: MlpConfig,
}

/// Gradient of `0.5 * (y - t)^2`, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpGradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.w1.iter().flatten().copied().collect();
        out.extend(&self.b1);
        out.extend(&self.w2);
        out.push(self.b2);
        out
    }
}

impl MlpModel {
    /// Seeded initialisation: hidden-layer parameters uniform in
    /// `±1/sqrt(input_dim)`, output-layer parameters in `±1/sqrt(hidden)`.
    pub fn init(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let a = 1.0 / (config.input_dim as f64).sqrt();
        let b = 1.0 / (config.hidden as f64).sqrt();
        let w1 = (0..config.hidden)
            .map(|_| (0..config.input_dim).map(|_| rng.random_range(-a..=a)).collect())
            .collect();
        let b1 = (0..config.hidden).map(|_| rng.random_range(-a..=a)).collect();
        let w2 = (0..config.hidden).map(|_| rng.random_range(-b..=b)).collect();
        let b2 = rng.random_range(-b..=b);
        Ok(MlpModel {
            w1,
            b1,
            w2,
            b2,
            config,
        })
    }

    pub fn from_parts(
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
        config: MlpConfig,
    ) -> Result<Self> {
        config.validate()?;
        check_dim("hidden rows", config.hidden, w1.len())?;
        for row in &w1 {
            check_dim("hidden weights", config.input_dim, row.len())?;
        }
        check_dim("hidden biases", config.hidden, b1.len())?;
        check_dim("output weights", config.hidden, w2.len())?;
        Ok(MlpModel {
            w1,
            b1,
            w2,
            b2,
            config,
        })
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| (row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b).tanh())
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_dim("input", self.config.input_dim, x.len())?;
        check_finite("input", x)?;
        let h = self.hidden(x);
        Ok(self.w2.iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>() + self.b2)
    }

    /// Backpropagated gradient for one sample, plus the prediction.
    pub fn gradient(&self, x: &[f64], target: f64) -> Result<(MlpGradient, f64)> {
        check_dim("input", self.config.input_dim, x.len())?;
        check_finite("input", x)?;
        let h = self.hidden(x);
        let y = self.w2.iter().zip(&h).map(|(w, hj)| w * hj).sum::<f64>() + self.b2;
        let err = y - target;
        let delta: Vec<f64> = self
            .w2
            .iter()
            .zip(&h)
            .map(|(w, hj)| err * w * (1.0 - hj * hj))
            .collect();
        let grad = MlpGradient {
            w1: delta.iter().map(|d| x.iter().map(|xi| d * xi).collect()).collect(),
            b1: delta,
            w2: h.iter().map(|hj| err * hj).collect(),
            b2: err,
        };
        Ok((grad, y))
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.w1.iter().flatten().copied().collect();
        out.extend(&self.b1);
        out.extend(&self.w2);
        out.push(self.b2);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.params().len(), params.len())?;
        let mut it = params.iter().copied();
        for w in self
            .w1
            .iter_mut()
            .flatten()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
        {
            *w = it.next().expect("length checked");
        }
        self.b2 = it.next().expect("length checked");
        Ok(())
    }

    fn descend(&mut self, grad: &MlpGradient) {
        let lr = self.config.learning_rate;
        for (row, g) in self.w1.iter_mut().zip(&grad.w1) {
            for (w, d) in row.iter_mut().zip(g) {
                *w -= lr * d;
            }
        }
        for (b, d) in self.b1.iter_mut().zip(&grad.b1) {
            *b -= lr * d;
        }
        for (w, d) in self.w2.iter_mut().zip(&grad.w2) {
            *w -= lr * d;
        }
        self.b2 -= lr * grad.b2;
    }
}

impl Predictor for MlpModel {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x)
    }
}

/// Per-sample SGD over shuffled epochs; returns the best-validation snapshot
/// (the final model when validation correlation is never defined).
pub fn fit(patterns: &PatternSet, config: &MlpConfig) -> Result<MlpModel> {
    let mut model = MlpModel::init(config.clone())?;
    check_dim("pattern length", config.input_dim, patterns.input_dim())?;
    let train = patterns.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let validation = patterns.indices(Split::Validation);
    // Shuffling draws from a stream separate from initialisation.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut best = BestSnapshot::default();
    let mut order = train;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for &i in &order {
            let (grad, y) = model.gradient(&patterns.inputs[i], patterns.targets[i])?;
            sse += (y - patterns.targets[i]).powi(2);
            model.descend(&grad);
        }
        if !sse.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                detail: "MLP loss became non-finite".into(),
            });
        }
        best.offer(&model, patterns, &validation);
    }
    Ok(best.into_best().unwrap_or(model))
}
