//! First-order Sugeno ANFIS with Gaussian membership functions.
//!
//! Five layers:
//!
//! 1. fuzzifier: `mu_ij(x_i) = exp(-(x_i - c_ij)^2 / (2 sigma_ij^2))`
//! 2. production: rule strength `w_r = prod_i mu_{i, k_i(r)}`, one rule per
//!    combination of membership functions (grid partition)
//! 3. normalized: `wn_r = w_r / sum_s w_s`
//! 4. defuzzy: `wn_r * z_r(x)` with the affine consequent
//!    `z_r(x) = a_r . x + b_r`
//! 5. output: the sum over rules
//!
//! Training is plain full-batch gradient descent on half the mean squared
//! error, over premise and consequent parameters together.

use serde::{Deserialize, Serialize};

use crate::dataset::{PatternSet, Split};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::Predictor;

/// Total firing strength below which a sample is treated as degenerate.
pub const FIRING_FLOOR: f64 = 1e-300;
pub const MIN_SIGMA: f64 = 1e-6;

fn default_max_rules() -> usize {
    AnfisConfig::DEFAULT_MAX_RULES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnfisConfig {
    pub input_dim: usize,
    pub mfs_per_input: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Unused by the deterministic grid initialisation and batch descent;
    /// kept so every model config carries a seed.
    pub seed: u64,
    /// Zeroth-order Sugeno: consequents are constants.
    #[serde(default)]
    pub zeroth_order: bool,
    #[serde(default = "default_max_rules")]
    pub max_rules: usize,
}

impl AnfisConfig {
    pub const DEFAULT_MFS: usize = 2;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
    pub const DEFAULT_EPOCHS: usize = 500;
    pub const DEFAULT_MAX_RULES: usize = 4096;

    pub fn new(input_dim: usize, seed: u64) -> Self {
        AnfisConfig {
            input_dim,
            mfs_per_input: Self::DEFAULT_MFS,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            epochs: Self::DEFAULT_EPOCHS,
            seed,
            zeroth_order: false,
            max_rules: Self::DEFAULT_MAX_RULES,
        }
    }

    pub fn rule_count(&self) -> Option<usize> {
        let exp = u32::try_from(self.input_dim).ok()?;
        self.mfs_per_input.checked_pow(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be at least 1".into()));
        }
        if self.mfs_per_input == 0 {
            return Err(Error::Config("mfs_per_input must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        match self.rule_count() {
            Some(n) if n <= self.max_rules => Ok(()),
            _ => Err(Error::Config(format!(
                "{}^{} rules exceeds the cap of {}",
                self.mfs_per_input, self.input_dim, self.max_rules
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub center: f64,
    pub sigma: f64,
}

impl Gaussian {
    pub fn eval(&self, x: f64) -> f64 {
        let d = (x - self.center) / self.sigma;
        (-0.5 * d * d).exp()
    }
}

/// Intermediate values of every layer for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct AnfisTrace {
    /// Layer 1, indexed `[input][mf]`.
    pub memberships: Vec<Vec<f64>>,
    /// Layer 2.
    pub firing: Vec<f64>,
    /// Layer 3.
    pub normalized: Vec<f64>,
    /// Consequent value `z_r(x)` of every rule.
    pub rule_outputs: Vec<f64>,
    /// Layer 5.
    pub output: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel {
    /// Indexed `[input][mf]`.
    pub premise: Vec<Vec<Gaussian>>,
    /// Indexed `[rule][coefficient]`; the last coefficient is the constant term.
    pub consequent: Vec<Vec<f64>>,
    pub config: AnfisConfig,
}

/// Gradient of half the mean squared error, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AnfisGradient {
    pub centers: Vec<Vec<f64>>,
    pub sigmas: Vec<Vec<f64>>,
    pub consequent: Vec<Vec<f64>>,
    /// Loss at the point where the gradient was taken.
    pub loss: f64,
    /// Samples skipped because every rule underflowed.
    pub degenerate_samples: usize,
}

impl AnfisGradient {
    /// Flattened in the same order as [`AnfisModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (c, s) in self.centers.iter().zip(&self.sigmas) {
            for (dc, ds) in c.iter().zip(s) {
                out.push(*dc);
                out.push(*ds);
            }
        }
        out.extend(self.consequent.iter().flatten());
        out
    }

    fn is_finite(&self) -> bool {
        self.flatten().iter().all(|g| g.is_finite())
    }
}

impl AnfisModel {
    pub fn rule_count(&self) -> usize {
        self.consequent.len()
    }

    /// Membership-function index of `input` within `rule`. Input 0 is the
    /// most significant digit of the rule index.
    fn rule_mfs(&self) -> Vec<Vec<usize>> {
        let m = self.config.input_dim;
        let k = self.config.mfs_per_input;
        (0..self.rule_count())
            .map(|r| {
                let mut digits = vec![0; m];
                let mut rest = r;
                for d in digits.iter_mut().rev() {
                    *d = rest % k;
                    rest /= k;
                }
                digits
            })
            .collect()
    }

    fn check_shape(&self) -> Result<()> {
        self.config.validate()?;
        let m = self.config.input_dim;
        check_dim("premise inputs", m, self.premise.len())?;
        for mfs in &self.premise {
            check_dim("membership functions", self.config.mfs_per_input, mfs.len())?;
            if let Some(g) = mfs.iter().find(|g| g.sigma.is_nan() || g.sigma <= 0.0 || !g.center.is_finite()) {
                return Err(Error::Contract(format!("invalid membership function {g:?}")));
            }
        }
        check_dim("rules", self.config.rule_count().unwrap_or(0), self.consequent.len())?;
        for c in &self.consequent {
            check_dim("consequent coefficients", m + 1, c.len())?;
            check_finite("consequent", c)?;
        }
        Ok(())
    }

    pub fn from_parts(
        premise: Vec<Vec<Gaussian>>,
        consequent: Vec<Vec<f64>>,
        config: AnfisConfig,
    ) -> Result<Self> {
        let model = AnfisModel {
            premise,
            consequent,
            config,
        };
        model.check_shape()?;
        Ok(model)
    }

    pub fn trace(&self, x: &[f64]) -> Result<AnfisTrace> {
        self.trace_with(x, &self.rule_mfs())
    }

    fn trace_with(&self, x: &[f64], rule_mfs: &[Vec<usize>]) -> Result<AnfisTrace> {
        check_dim("input", self.config.input_dim, x.len())?;
        check_finite("input", x)?;
        let memberships: Vec<Vec<f64>> = self
            .premise
            .iter()
            .zip(x)
            .map(|(mfs, &xi)| mfs.iter().map(|g| g.eval(xi)).collect())
            .collect();
        let firing: Vec<f64> = rule_mfs
            .iter()
            .map(|digits| {
                digits
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| memberships[i][k])
                    .product()
            })
            .collect();
        let total: f64 = firing.iter().sum();
        if total.is_nan() || total < FIRING_FLOOR {
            return Err(Error::DegenerateActivation);
        }
        let normalized: Vec<f64> = firing.iter().map(|w| w / total).collect();
        let rule_outputs: Vec<f64> = self
            .consequent
            .iter()
            .map(|coef| {
                let (linear, constant) = coef.split_at(x.len());
                linear.iter().zip(x).map(|(a, xi)| a * xi).sum::<f64>() + constant[0]
            })
            .collect();
        let output = normalized.iter().zip(&rule_outputs).map(|(w, z)| w * z).sum();
        Ok(AnfisTrace {
            memberships,
            firing,
            normalized,
            rule_outputs,
            output,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.trace(x)?.output)
    }

    /// Half the mean squared error over `(inputs[i], targets[i])`.
    pub fn loss(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<f64> {
        Ok(self.gradient(inputs, targets)?.loss)
    }

    pub fn gradient(&self, inputs: &[&[f64]], targets: &[f64]) -> Result<AnfisGradient> {
        check_dim("targets", inputs.len(), targets.len())?;
        let m = self.config.input_dim;
        let k = self.config.mfs_per_input;
        let rule_mfs = self.rule_mfs();
        let mut centers = vec![vec![0.0; k]; m];
        let mut sigmas = vec![vec![0.0; k]; m];
        let mut consequent = vec![vec![0.0; m + 1]; self.rule_count()];
        let mut loss = 0.0;
        let mut degenerate = 0;
        let mut share = vec![vec![0.0; k]; m];

        for (x, &t) in inputs.iter().zip(targets) {
            let tr = match self.trace_with(x, &rule_mfs) {
                Ok(tr) => tr,
                Err(Error::DegenerateActivation) => {
                    degenerate += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let err = tr.output - t;
            loss += 0.5 * err * err;
            for row in share.iter_mut() {
                row.iter_mut().for_each(|s| *s = 0.0);
            }
            for (r, digits) in rule_mfs.iter().enumerate() {
                let wn = tr.normalized[r];
                let grad = &mut consequent[r];
                if !self.config.zeroth_order {
                    for (g, xi) in grad[..m].iter_mut().zip(x.iter()) {
                        *g += err * wn * xi;
                    }
                }
                grad[m] += err * wn;
                let spread = wn * (tr.rule_outputs[r] - tr.output);
                for (i, &d) in digits.iter().enumerate() {
                    share[i][d] += spread;
                }
            }
            for i in 0..m {
                for j in 0..k {
                    let g = self.premise[i][j];
                    let d = x[i] - g.center;
                    let s2 = g.sigma * g.sigma;
                    centers[i][j] += err * share[i][j] * d / s2;
                    sigmas[i][j] += err * share[i][j] * d * d / (s2 * g.sigma);
                }
            }
        }

        let used = inputs.len() - degenerate;
        if used == 0 && degenerate > 0 {
            return Err(Error::DegenerateActivation);
        }
        if used > 0 {
            let scale = 1.0 / used as f64;
            loss *= scale;
            for v in centers
                .iter_mut()
                .chain(sigmas.iter_mut())
                .chain(consequent.iter_mut())
                .flatten()
            {
                *v *= scale;
            }
        }
        Ok(AnfisGradient {
            centers,
            sigmas,
            consequent,
            loss,
            degenerate_samples: degenerate,
        })
    }

    /// All trainable parameters: `(center, sigma)` per membership function,
    /// then consequent coefficients rule by rule.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in self.premise.iter().flatten() {
            out.push(g.center);
            out.push(g.sigma);
        }
        out.extend(self.consequent.iter().flatten());
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_dim("parameter vector", self.params().len(), params.len())?;
        let mut it = params.iter().copied();
        for g in self.premise.iter_mut().flatten() {
            g.center = it.next().expect("length checked");
            g.sigma = it.next().expect("length checked");
        }
        for c in self.consequent.iter_mut().flatten() {
            *c = it.next().expect("length checked");
        }
        Ok(())
    }

    fn descend(&mut self, grad: &AnfisGradient) {
        let lr = self.config.learning_rate;
        for (i, mfs) in self.premise.iter_mut().enumerate() {
            for (j, g) in mfs.iter_mut().enumerate() {
                g.center -= lr * grad.centers[i][j];
                g.sigma = (g.sigma - lr * grad.sigmas[i][j]).max(MIN_SIGMA);
            }
        }
        for (coef, g) in self.consequent.iter_mut().zip(&grad.consequent) {
            for (c, d) in coef.iter_mut().zip(g) {
                *c -= lr * d;
            }
        }
    }
}

impl Predictor for AnfisModel {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        self.forward(x)
    }
}

/// Grid-partition initialisation: centers evenly spaced over each input's
/// training range, `sigma = spacing / sqrt(2)`, zero consequents. A constant
/// input column gets coincident centers and `sigma = 1`.
pub fn init_grid(patterns: &PatternSet, config: &AnfisConfig) -> Result<AnfisModel> {
    config.validate()?;
    check_dim("pattern length", config.input_dim, patterns.input_dim())?;
    let train = patterns.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let k = config.mfs_per_input;
    let premise = (0..config.input_dim)
        .map(|i| {
            let (lo, hi) = train
                .iter()
                .map(|&n| patterns.inputs[n][i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                    (lo.min(x), hi.max(x))
                });
            let range = hi - lo;
            if range <= 0.0 {
                return vec![Gaussian { center: lo, sigma: 1.0 }; k];
            }
            if k == 1 {
                let sigma = range / std::f64::consts::SQRT_2;
                return vec![Gaussian { center: lo + range / 2.0, sigma }];
            }
            let spacing = range / (k - 1) as f64;
            let sigma = spacing / std::f64::consts::SQRT_2;
            (0..k)
                .map(|j| Gaussian {
                    center: if j == k - 1 { hi } else { lo + spacing * j as f64 },
                    sigma,
                })
                .collect()
        })
        .collect();
    let rules = config.rule_count().expect("validated");
    AnfisModel::from_parts(premise, vec![vec![0.0; config.input_dim + 1]; rules], config.clone())
}

/// A trained model plus the training MSE before each epoch's update and
/// after the last one.
#[derive(Debug, Clone)]
pub struct AnfisFit {
    pub model: AnfisModel,
    pub mse_trace: Vec<f64>,
    pub degenerate_samples: usize,
}

pub fn fit_traced(patterns: &PatternSet, config: &AnfisConfig) -> Result<AnfisFit> {
    let mut model = init_grid(patterns, config)?;
    let train = patterns.indices(Split::Train);
    let inputs: Vec<&[f64]> = train.iter().map(|&i| patterns.inputs[i].as_slice()).collect();
    let targets: Vec<f64> = train.iter().map(|&i| patterns.targets[i]).collect();
    let mut mse_trace = Vec::with_capacity(config.epochs + 1);
    let mut degenerate_samples = 0;
    for epoch in 0..config.epochs {
        let grad = model.gradient(&inputs, &targets)?;
        if !grad.is_finite() || !grad.loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: "ANFIS gradient became non-finite".into(),
            });
        }
        degenerate_samples += grad.degenerate_samples;
        mse_trace.push(2.0 * grad.loss);
        model.descend(&grad);
    }
    let last = model.gradient(&inputs, &targets)?;
    if !last.loss.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs,
            detail: "ANFIS loss became non-finite".into(),
        });
    }
    mse_trace.push(2.0 * last.loss);
    if degenerate_samples > 0 {
        log::warn!("ANFIS training skipped {degenerate_samples} degenerate sample evaluations");
    }
    Ok(AnfisFit {
        model,
        mse_trace,
        degenerate_samples,
    })
}

pub fn fit(patterns: &PatternSet, config: &AnfisConfig) -> Result<AnfisModel> {
    fit_traced(patterns, config).map(|f| f.model)
}
