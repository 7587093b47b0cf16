//! Supervised brain emotional learning (BEL).
//!
//! Two linear pathways read the same stimulus `p`. The amygdala sums
//! `v_j * p_j` plus a threshold unit `v_{m+1} * max_j p_j`; the
//! orbitofrontal cortex sums `w_j * p_j`. The prediction is their
//! difference, `E = E_a - E_o`.
//!
//! Learning, with `E_a` and `E` taken from the weights before the update:
//!
//! ```text
//! v_j <- (1 - gamma) v_j + alpha * max(t - E_a, 0) * p_j
//! w_j <- w_j + beta * (E - t) * p_j
//! ```
//!
//! The amygdala rule only ever adds (it is rectified), so with `gamma = 0`
//! and non-negative stimuli `v` is monotone non-decreasing. The
//! orbitofrontal rule corrects the overshoot.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PatternSet, Split};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::training::BestSnapshot;
use crate::Predictor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BelConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub seed: u64,
    pub input_dim: usize,
}

impl BelConfig {
    pub const DEFAULT_ALPHA: f64 = 0.2;
    pub const DEFAULT_BETA: f64 = 0.1;
    pub const DEFAULT_GAMMA: f64 = 0.001;
    pub const DEFAULT_EPOCHS: usize = 100;

    pub fn new(input_dim: usize, seed: u64) -> Self {
        BelConfig {
            alpha: Self::DEFAULT_ALPHA,
            beta: Self::DEFAULT_BETA,
            gamma: Self::DEFAULT_GAMMA,
            epochs: Self::DEFAULT_EPOCHS,
            seed,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must be in [0, 1), got {}", self.gamma)));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pathway outputs of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BelActivation {
    pub amygdala: f64,
    pub orbitofrontal: f64,
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BelModel {
    /// Amygdala weights; the last entry multiplies `max_j p_j`.
    pub v: Vec<f64>,
    /// Orbitofrontal weights.
    pub w: Vec<f64>,
    pub config: BelConfig,
    #[serde(default)]
    pub trained_epochs: usize,
}

impl BelModel {
    /// Zero-initialized model.
    pub fn new(config: BelConfig) -> Self {
        let m = config.input_dim;
        BelModel {
            v: vec![0.0; m + 1],
            w: vec![0.0; m],
            config,
            trained_epochs: 0,
        }
    }

    /// Builds a model from explicit weights. Rates are not validated here so
    /// that degenerate settings such as `alpha = 0` can be exercised.
    pub fn from_weights(v: Vec<f64>, w: Vec<f64>, config: BelConfig) -> Result<Self> {
        let model = BelModel {
            v,
            w,
            config,
            trained_epochs: 0,
        };
        model.check_shape()?;
        Ok(model)
    }

    pub fn check_shape(&self) -> Result<()> {
        let m = self.config.input_dim;
        check_dim("amygdala weights", m + 1, self.v.len())?;
        check_dim("orbitofrontal weights", m, self.w.len())?;
        check_finite("amygdala weights", &self.v)?;
        check_finite("orbitofrontal weights", &self.w)
    }

    pub fn forward(&self, p: &[f64]) -> Result<BelActivation> {
        let m = self.config.input_dim;
        check_dim("stimulus", m, p.len())?;
        check_finite("stimulus", p)?;
        let peak = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let amygdala = dot(&self.v[..m], p) + self.v[m] * peak;
        let orbitofrontal = dot(&self.w, p);
        Ok(BelActivation {
            amygdala,
            orbitofrontal,
            output: amygdala - orbitofrontal,
        })
    }

    /// One application of both learning rules on `(p, target)`.
    pub fn train_step(&mut self, p: &[f64], target: f64) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::RejectedInput(format!("non-finite target {target}")));
        }
        let act = self.forward(p)?;
        let BelConfig {
            alpha, beta, gamma, ..
        } = self.config;
        let m = self.config.input_dim;
        let reinforcement = alpha * (target - act.amygdala).max(0.0);
        let correction = beta * (act.output - target);
        let peak = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (v, &x) in self.v[..m].iter_mut().zip(p) {
            *v = (1.0 - gamma) * *v + reinforcement * x;
        }
        self.v[m] = (1.0 - gamma) * self.v[m] + reinforcement * peak;
        for (w, &x) in self.w.iter_mut().zip(p) {
            *w += correction * x;
        }
        if self.v.iter().chain(&self.w).any(|x| !x.is_finite()) {
            return Err(Error::Diverged {
                epoch: self.trained_epochs,
                detail: "BEL weights became non-finite".into(),
            });
        }
        Ok(())
    }
}

impl Predictor for BelModel {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.output)
    }

    fn supports_adaptation(&self) -> bool {
        true
    }

    fn adapt(&mut self, x: &[f64], target: f64) -> Result<()> {
        self.train_step(x, target)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains on the training split for `config.epochs` shuffled passes and
/// returns the epoch snapshot with the best validation correlation. When no
/// epoch has a defined validation correlation the final model is returned.
pub fn fit(patterns: &PatternSet, config: &BelConfig) -> Result<BelModel> {
    config.validate()?;
    check_dim("pattern length", config.input_dim, patterns.input_dim())?;
    let train = patterns.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let validation = patterns.indices(Split::Validation);
    let mut model = BelModel::new(config.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best = BestSnapshot::default();
    let mut order = train;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            model.train_step(&patterns.inputs[i], patterns.targets[i])?;
        }
        model.trained_epochs += 1;
        best.offer(&model, patterns, &validation);
    }
    Ok(best.into_best().unwrap_or(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{assign_splits, make_patterns, normalize, PatternMode, Series, SplitFractions};
    use crate::metrics::correlation;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn cfg(m: usize, alpha: f64, beta: f64, gamma: f64) -> BelConfig {
        BelConfig {
            alpha,
            beta,
            gamma,
            epochs: 1,
            seed: 0,
            input_dim: m,
        }
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let model = BelModel::new(BelConfig::new(3, 1));
        let act = model.forward(&[0.3, -2.0, 5.0]).unwrap();
        assert_eq!((act.amygdala, act.orbitofrontal, act.output), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_active_weight() {
        let m = BelModel::from_weights(vec![1.0, 0.0, 0.0], vec![0.0, 0.0], cfg(2, 0.1, 0.1, 0.0)).unwrap();
        assert_eq!(m.forward(&[0.5, 0.3]).unwrap().output, 0.5);
    }

    #[test]
    fn three_input_forward_matches_scalar_oracle() {
        let v = [0.1, 0.2, 0.3, 0.4];
        let w = [0.05, 0.05, 0.05];
        let p = [1.0, 2.0, 3.0];
        // scalar oracle, written out term by term
        let ea = v[0] * p[0] + v[1] * p[1] + v[2] * p[2] + v[3] * 3.0;
        let eo = w[0] * p[0] + w[1] * p[1] + w[2] * p[2];
        let model = BelModel::from_weights(v.to_vec(), w.to_vec(), cfg(3, 0.1, 0.1, 0.0)).unwrap();
        let act = model.forward(&p).unwrap();
        assert!((act.amygdala - ea).abs() < 1e-15);
        assert!((act.amygdala - 2.6).abs() < 1e-12);
        assert!((act.orbitofrontal - 0.3).abs() < 1e-12);
        assert!((act.output - 2.3).abs() < 1e-12);
        assert!((act.output - (ea - eo)).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_finiteness_errors() {
        let model = BelModel::new(BelConfig::new(2, 0));
        assert!(matches!(model.forward(&[1.0]), Err(Error::Contract(_))));
        assert!(matches!(model.forward(&[1.0, f64::NAN]), Err(Error::RejectedInput(_))));
        let mut model = model;
        assert!(matches!(model.train_step(&[1.0, 1.0], f64::INFINITY), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn zero_rates_leave_model_unchanged() {
        let mut m = BelModel::from_weights(vec![0.3, -0.1, 0.2], vec![0.4, 0.5], cfg(2, 0.0, 0.0, 0.0)).unwrap();
        let before = m.clone();
        m.train_step(&[0.7, 0.2], 3.0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn single_step_by_hand() {
        let mut m = BelModel::new(cfg(1, 0.5, 0.5, 0.0));
        m.train_step(&[1.0], 1.0).unwrap();
        assert_eq!(m.v, vec![0.5, 0.5]);
        assert_eq!(m.w, vec![-0.5]);
    }

    #[test]
    fn pure_decay() {
        let mut m = BelModel::from_weights(vec![1.0, 1.0], vec![0.0], cfg(1, 0.0, 0.0, 0.1)).unwrap();
        m.train_step(&[0.4], 2.0).unwrap();
        assert!(m.v.iter().all(|&v| (v - 0.9).abs() < 1e-15));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, 0.1, 0.1, 0.0).validate().is_ok());
        assert!(cfg(1, 0.0, 0.1, 0.0).validate().is_err());
        assert!(cfg(1, 0.1, -0.1, 0.0).validate().is_err());
        assert!(cfg(1, 0.1, 0.1, 1.0).validate().is_err());
        assert!(cfg(0, 0.1, 0.1, 0.0).validate().is_err());
    }

    fn series(values: Vec<f64>) -> Series {
        Series::from_o3(NaiveDate::from_ymd_opt(2000, 1, 1).unwrap(), values).unwrap()
    }

    fn prepared(values: Vec<f64>, lag: usize, seed: u64) -> PatternSet {
        let p = make_patterns(&series(values), lag, PatternMode::LaggedO3).unwrap();
        let p = assign_splits(&p, SplitFractions::default(), seed).unwrap();
        normalize(&p).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let p = prepared((0..50).map(|i| (i as f64 * 0.3).sin()).collect(), 4, 1);
        let mut c = BelConfig::new(4, 3);
        c.epochs = 0;
        assert_eq!(fit(&p, &c).unwrap(), BelModel::new(c));
    }

    #[test]
    fn constant_series_reaches_fixed_point() {
        let c_val = 0.6;
        let mut p = make_patterns(&series(vec![c_val; 60]), 4, PatternMode::LaggedO3).unwrap();
        p = assign_splits(&p, SplitFractions::default(), 5).unwrap();
        let model = fit(&p, &BelConfig::new(4, 5)).unwrap();
        for i in p.indices(Split::Train) {
            let e = model.predict(&p.inputs[i]).unwrap();
            assert!((e - c_val).abs() <= 0.05 * c_val + 0.01, "prediction {e}");
        }
    }

    #[test]
    fn sine_series_is_learned() {
        let values: Vec<f64> = (0..1200).map(|t| (2.0 * std::f64::consts::PI * t as f64 / 40.0).sin()).collect();
        let p = prepared(values, 4, 8);
        let model = fit(&p, &BelConfig::new(4, 8)).unwrap();
        let test = p.indices(Split::Test);
        let pred: Vec<f64> = test.iter().map(|&i| model.predict(&p.inputs[i]).unwrap()).collect();
        let actual: Vec<f64> = test.iter().map(|&i| p.targets[i]).collect();
        let cor = correlation(&pred, &actual).unwrap();
        assert!(cor >= 0.95, "test COR {cor}");
    }

    #[test]
    fn empty_training_split_is_a_config_error() {
        let mut p = prepared((0..30).map(|i| i as f64).collect(), 2, 1);
        p.split_labels.iter_mut().for_each(|s| *s = Split::Test);
        assert!(matches!(fit(&p, &BelConfig::new(2, 1)), Err(Error::Config(_))));
    }

    #[test]
    fn fit_is_deterministic() {
        let values: Vec<f64> = (0..300).map(|t| ((t * 7919) % 101) as f64).collect();
        let p = prepared(values, 4, 2);
        let c = BelConfig { epochs: 10, ..BelConfig::new(4, 17) };
        let a = fit(&p, &c).unwrap();
        let b = fit(&p, &c).unwrap();
        assert!(a.v.iter().zip(&b.v).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.w.iter().zip(&b.w).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #[test]
        fn monotone_amygdala_without_decay(
            p in prop::collection::vec(0.0f64..1.0, 3),
            t in -1.0f64..2.0,
            v in prop::collection::vec(-1.0f64..1.0, 4),
            w in prop::collection::vec(-1.0f64..1.0, 3),
            alpha in 0.0f64..1.0,
            beta in 0.0f64..1.0,
        ) {
            let mut m = BelModel::from_weights(v.clone(), w, cfg(3, alpha, beta, 0.0)).unwrap();
            m.train_step(&p, t).unwrap();
            for (after, before) in m.v.iter().zip(&v) {
                prop_assert!(after >= before);
            }
        }

        #[test]
        fn forward_is_linear_in_weights(
            p in prop::collection::vec(-2.0f64..2.0, 4),
            v in prop::collection::vec(-1.0f64..1.0, 5),
            w in prop::collection::vec(-1.0f64..1.0, 4),
        ) {
            let a = BelModel::from_weights(v.clone(), w.clone(), cfg(4, 0.1, 0.1, 0.0)).unwrap();
            let b = BelModel::from_weights(
                v.iter().map(|x| 2.0 * x).collect(),
                w.iter().map(|x| 2.0 * x).collect(),
                cfg(4, 0.1, 0.1, 0.0),
            ).unwrap();
            let ea = a.forward(&p).unwrap().output;
            let eb = b.forward(&p).unwrap().output;
            prop_assert!((eb - 2.0 * ea).abs() <= 1e-12 * (1.0 + ea.abs()));
        }

        #[test]
        fn normalized_training_stays_finite(
            data in prop::collection::vec((prop::collection::vec(0.0f64..=1.0, 2), 0.0f64..=1.0), 1..200),
            alpha in 0.01f64..=1.0,
            beta in 0.01f64..=1.0,
            gamma in 0.0f64..0.99,
        ) {
            let mut m = BelModel::new(cfg(2, alpha, beta, gamma));
            for (p, t) in &data {
                m.train_step(p, *t).unwrap();
            }
            prop_assert!(m.v.iter().chain(&m.w).all(|x| x.is_finite()));
        }
    }
}
