//! Next-day ozone forecasting and threshold alarms.
//!
//! Three predictors share the [`Predictor`] interface: supervised brain
//! emotional learning ([`bel`]), a Sugeno neuro-fuzzy system ([`anfis`]) and
//! a one-hidden-layer perceptron ([`mlp`]). [`dataset`] turns daily series
//! into windowed patterns, [`evaluate`] compares predictors by correlation
//! and [`alarm`] replays a series through a trained model against an expert
//! threshold policy.

pub mod alarm;
pub mod anfis;
pub mod bel;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod figures;
pub mod gradcheck;
pub mod metrics;
pub mod mlp;
pub mod model;
mod training;
pub mod workflow;

pub use error::{Error, Result};

/// A trained scalar regressor over fixed-length input vectors.
pub trait Predictor {
    fn input_dim(&self) -> usize;
    fn predict(&self, x: &[f64]) -> Result<f64>;

    /// Whether [`Predictor::adapt`] performs online learning.
    fn supports_adaptation(&self) -> bool {
        false
    }

    /// One online learning step once the true value for `x` is known.
    fn adapt(&mut self, _x: &[f64], _target: f64) -> Result<()> {
        Err(Error::Unsupported("this predictor does not learn online".into()))
    }
}
