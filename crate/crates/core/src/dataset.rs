//! Daily sensor series, windowed supervised patterns and the synthetic
//! generators used in place of a real station feed.
//!
//! The pipeline is `Series` → [`make_patterns`] → [`assign_splits`] →
//! [`normalize`]. Every step is a pure function of its inputs and seed.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// Lag used by the reproduction profile.
pub const DEFAULT_LAG: usize = 4;

/// A gap-free daily series. `o3` is the prediction target; `uv` and `tsr`
/// are optional auxiliary sensor channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub timestamps: Vec<NaiveDate>,
    pub o3: Vec<f64>,
    pub uv: Option<Vec<f64>>,
    pub tsr: Option<Vec<f64>>,
}

impl Series {
    pub fn new(
        timestamps: Vec<NaiveDate>,
        o3: Vec<f64>,
        uv: Option<Vec<f64>>,
        tsr: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = timestamps.len();
        let channels = [Some(&o3), uv.as_ref(), tsr.as_ref()];
        for (name, ch) in ["o3", "uv", "tsr"].iter().zip(channels) {
            let Some(ch) = ch else { continue };
            if ch.len() != n {
                return Err(Error::Contract(format!(
                    "channel {name} has {} values for {n} dates",
                    ch.len()
                )));
            }
            crate::error::check_finite(name, ch)?;
        }
        for (i, pair) in timestamps.windows(2).enumerate() {
            let expected = pair[0] + Days::new(1);
            if pair[1] <= pair[0] {
                return Err(Error::Ordering {
                    line: i + 2,
                    date: pair[1],
                });
            }
            if pair[1] != expected {
                return Err(Error::Gap {
                    line: i + 2,
                    missing: expected,
                });
            }
        }
        Ok(Series {
            timestamps,
            o3,
            uv,
            tsr,
        })
    }

    /// An ozone-only series of consecutive days starting at `start`.
    pub fn from_o3(start: NaiveDate, o3: Vec<f64>) -> Result<Self> {
        let timestamps = consecutive_days(start, o3.len());
        Series::new(timestamps, o3, None, None)
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn has_sensors(&self) -> bool {
        self.uv.is_some() && self.tsr.is_some()
    }

    pub fn channel(&self, channel: Channel) -> Option<&[f64]> {
        match channel {
            Channel::O3 => Some(&self.o3),
            Channel::Uv => self.uv.as_deref(),
            Channel::Tsr => self.tsr.as_deref(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["date", "o3"];
        if self.uv.is_some() {
            header.push("uv");
        }
        if self.tsr.is_some() {
            header.push("tsr");
        }
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![
                self.timestamps[i].format(DATE_FORMAT).to_string(),
                self.o3[i].to_string(),
            ];
            if let Some(uv) = &self.uv {
                row.push(uv[i].to_string());
            }
            if let Some(tsr) = &self.tsr {
                row.push(tsr[i].to_string());
            }
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn consecutive_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start.iter_days().take(n).collect()
}

/// Reads a `date,o3[,uv,tsr]` CSV file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Series> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(std::io::BufReader::new(file))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Series> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let date_col = find("date").ok_or_else(|| header_error("date"))?;
    let o3_col = find("o3").ok_or_else(|| header_error("o3"))?;
    let uv_col = find("uv");
    let tsr_col = find("tsr");

    let mut timestamps: Vec<NaiveDate> = Vec::new();
    let mut o3 = Vec::new();
    let mut uv = uv_col.map(|_| Vec::new());
    let mut tsr = tsr_col.map(|_| Vec::new());

    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize, name: &str| {
            record.get(col).ok_or_else(|| Error::Parse {
                line,
                column: name.to_string(),
                detail: "missing field".into(),
            })
        };
        let raw_date = field(date_col, "date")?;
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|e| Error::Parse {
            line,
            column: "date".into(),
            detail: format!("{raw_date:?}: {e}"),
        })?;
        if let Some(&prev) = timestamps.last() {
            if date <= prev {
                return Err(Error::Ordering { line, date });
            }
            let expected = prev + Days::new(1);
            if date != expected {
                return Err(Error::Gap {
                    line,
                    missing: expected,
                });
            }
        }
        timestamps.push(date);
        o3.push(parse_value(field(o3_col, "o3")?, line, "o3")?);
        if let (Some(col), Some(values)) = (uv_col, uv.as_mut()) {
            values.push(parse_value(field(col, "uv")?, line, "uv")?);
        }
        if let (Some(col), Some(values)) = (tsr_col, tsr.as_mut()) {
            values.push(parse_value(field(col, "tsr")?, line, "tsr")?);
        }
    }
    Series::new(timestamps, o3, uv, tsr)
}

fn header_error(column: &str) -> Error {
    Error::Parse {
        line: 1,
        column: column.to_string(),
        detail: "required column missing from header".into(),
    }
}

fn parse_value(raw: &str, line: usize, column: &str) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|e| Error::Parse {
        line,
        column: column.to_string(),
        detail: format!("{raw:?}: {e}"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            column: column.to_string(),
            detail: format!("{raw:?} is not a finite number"),
        });
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    O3,
    Uv,
    Tsr,
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::O3 => "o3",
            Channel::Uv => "uv",
            Channel::Tsr => "tsr",
        })
    }
}

/// How input vectors are assembled from a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    /// The previous `lag` ozone values predict the next one.
    LaggedO3,
    /// Today's (uv, tsr, o3) predict tomorrow's o3.
    Sensors,
}

impl PatternMode {
    /// Number of past days (including today) an input vector reads.
    pub fn history(self, lag: usize) -> usize {
        match self {
            PatternMode::LaggedO3 => lag,
            PatternMode::Sensors => 1,
        }
    }

    pub fn input_channels(self, lag: usize) -> Vec<Channel> {
        match self {
            PatternMode::LaggedO3 => vec![Channel::O3; lag],
            PatternMode::Sensors => vec![Channel::Uv, Channel::Tsr, Channel::O3],
        }
    }

    /// Input vector for the pattern issued on day `t`.
    pub(crate) fn input_at(self, series: &Series, lag: usize, t: usize) -> Vec<f64> {
        match self {
            PatternMode::LaggedO3 => series.o3[t + 1 - lag..=t].to_vec(),
            PatternMode::Sensors => vec![
                series.uv.as_ref().expect("sensors checked")[t],
                series.tsr.as_ref().expect("sensors checked")[t],
                series.o3[t],
            ],
        }
    }
}

impl fmt::Display for PatternMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PatternMode::LaggedO3 => "lagged_o3",
            PatternMode::Sensors => "sensors",
        })
    }
}

impl FromStr for PatternMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lagged_o3" => Ok(PatternMode::LaggedO3),
            "sensors" => Ok(PatternMode::Sensors),
            other => Err(Error::Config(format!("unknown pattern mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

/// Min-max scale of one channel, computed on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScale {
    pub channel: Channel,
    pub min: f64,
    pub max: f64,
    /// Set when the channel was constant on the training split; the range
    /// then falls back to 1.
    pub fallback: bool,
}

impl ChannelScale {
    fn range(&self) -> f64 {
        if self.fallback {
            1.0
        } else {
            self.max - self.min
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / self.range()
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.range() + self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub scales: Vec<ChannelScale>,
}

impl Normalization {
    pub fn scale(&self, channel: Channel) -> Option<&ChannelScale> {
        self.scales.iter().find(|s| s.channel == channel)
    }

    fn scale_or_err(&self, channel: Channel) -> Result<&ChannelScale> {
        self.scale(channel)
            .ok_or_else(|| Error::Contract(format!("no normalization recorded for {channel}")))
    }

    pub fn apply_input(&self, channels: &[Channel], raw: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_dim("input vector", channels.len(), raw.len())?;
        channels
            .iter()
            .zip(raw)
            .map(|(&c, &x)| Ok(self.scale_or_err(c)?.apply(x)))
            .collect()
    }

    pub fn apply_target(&self, raw: f64) -> Result<f64> {
        Ok(self.scale_or_err(Channel::O3)?.apply(raw))
    }

    pub fn invert_target(&self, scaled: f64) -> Result<f64> {
        Ok(self.scale_or_err(Channel::O3)?.invert(scaled))
    }
}

/// Supervised (input, target) pairs with split assignments. Targets are
/// always next-day ozone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    pub mode: PatternMode,
    pub lag: usize,
    pub input_channels: Vec<Channel>,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// Date of each target day.
    pub dates: Vec<NaiveDate>,
    pub split_labels: Vec<Split>,
    pub normalization: Option<Normalization>,
}

impl PatternSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_channels.len()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.split_labels
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split_labels.iter().filter(|&&s| s == split).count()
    }

    /// Checks the structural invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        let n = self.targets.len();
        if self.inputs.len() != n || self.split_labels.len() != n || self.dates.len() != n {
            return Err(Error::Contract(format!(
                "pattern set columns disagree: {} inputs, {} targets, {} labels, {} dates",
                self.inputs.len(),
                n,
                self.split_labels.len(),
                self.dates.len()
            )));
        }
        let dim = self.input_dim();
        if dim == 0 {
            return Err(Error::Contract("pattern set has zero-length inputs".into()));
        }
        for x in &self.inputs {
            crate::error::check_dim("pattern input", dim, x.len())?;
            crate::error::check_finite("pattern input", x)?;
        }
        crate::error::check_finite("pattern targets", &self.targets)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: PatternSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }
}

/// Windows a series into next-day prediction patterns. All patterns start
/// labelled [`Split::Train`].
pub fn make_patterns(series: &Series, lag: usize, mode: PatternMode) -> Result<PatternSet> {
    if lag == 0 {
        return Err(Error::Config("lag must be at least 1".into()));
    }
    if mode == PatternMode::Sensors {
        if series.uv.is_none() {
            return Err(Error::MissingChannel("uv"));
        }
        if series.tsr.is_none() {
            return Err(Error::MissingChannel("tsr"));
        }
    }
    let history = mode.history(lag);
    if series.len() < history + 1 {
        return Err(Error::InsufficientData(format!(
            "{} days cannot form a single pattern with history {history}",
            series.len()
        )));
    }
    let issue_days = history - 1..series.len() - 1;
    let inputs: Vec<Vec<f64>> = issue_days
        .clone()
        .map(|t| mode.input_at(series, lag, t))
        .collect();
    let targets: Vec<f64> = issue_days.clone().map(|t| series.o3[t + 1]).collect();
    let dates = issue_days.map(|t| series.timestamps[t + 1]).collect();
    let n = targets.len();
    Ok(PatternSet {
        mode,
        lag,
        input_channels: mode.input_channels(lag),
        inputs,
        targets,
        dates,
        split_labels: vec![Split::Train; n],
        normalization: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

impl SplitFractions {
    /// Sample counts for `n` patterns. Validation and test quotas are rounded
    /// half-down so each lands within one sample of its share; whatever is
    /// left over goes to train.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        let fractions = [self.train, self.validation, self.test];
        if fractions.iter().any(|f| !f.is_finite() || *f < 0.0)
            || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions must be non-negative and sum to 1, got {fractions:?}"
            )));
        }
        let round_half_down = |q: f64| (q - 0.5 - 1e-9).ceil().max(0.0) as usize;
        let validation = round_half_down(self.validation * n as f64);
        let test = round_half_down(self.test * n as f64);
        Ok((n - validation - test, validation, test))
    }
}

/// Randomly partitions the patterns into train/validation/test.
pub fn assign_splits(
    patterns: &PatternSet,
    fractions: SplitFractions,
    seed: u64,
) -> Result<PatternSet> {
    let n = patterns.len();
    if n == 0 {
        return Err(Error::InsufficientData("no patterns to split".into()));
    }
    let (train, validation, _) = fractions.counts(n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        labels[i] = if rank < train {
            Split::Train
        } else if rank < train + validation {
            Split::Validation
        } else {
            Split::Test
        };
    }
    Ok(PatternSet {
        split_labels: labels,
        ..patterns.clone()
    })
}

/// Min-max scales inputs and targets to [0, 1] per channel, using only the
/// training split to fit the scale.
pub fn normalize(patterns: &PatternSet) -> Result<PatternSet> {
    if patterns.normalization.is_some() {
        return Err(Error::Contract("pattern set is already normalized".into()));
    }
    let train = patterns.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::InsufficientData(
            "normalization needs a non-empty training split".into(),
        ));
    }
    let mut channels: Vec<Channel> = patterns.input_channels.clone();
    channels.push(Channel::O3);
    channels.sort();
    channels.dedup();

    let scales = channels
        .into_iter()
        .map(|channel| {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for &i in &train {
                let row = patterns.inputs[i]
                    .iter()
                    .zip(&patterns.input_channels)
                    .filter(|(_, &c)| c == channel)
                    .map(|(&x, _)| x);
                let target = (channel == Channel::O3).then_some(patterns.targets[i]);
                for x in row.chain(target) {
                    min = min.min(x);
                    max = max.max(x);
                }
            }
            ChannelScale {
                channel,
                min,
                max,
                fallback: max <= min,
            }
        })
        .collect();
    let normalization = Normalization { scales };

    let inputs = patterns
        .inputs
        .iter()
        .map(|x| normalization.apply_input(&patterns.input_channels, x))
        .collect::<Result<Vec<_>>>()?;
    let targets = patterns
        .targets
        .iter()
        .map(|&t| normalization.apply_target(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatternSet {
        inputs,
        targets,
        normalization: Some(normalization),
        ..patterns.clone()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    SeasonalAr,
    MackeyGlass,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::SeasonalAr => "seasonal_ar",
            SynthKind::MackeyGlass => "mackey_glass",
        })
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seasonal_ar" => Ok(SynthKind::SeasonalAr),
            "mackey_glass" => Ok(SynthKind::MackeyGlass),
            other => Err(Error::Config(format!("unknown synthetic series `{other}`"))),
        }
    }
}

pub const MIN_SYNTH_LENGTH: usize = 100;

/// Constants of the seasonal generator. Noise standard deviations are
/// multiples of `noise_level * O3_AMPLITUDE`.
pub mod seasonal {
    pub const PERIOD_DAYS: f64 = 365.0;
    pub const O3_BASE: f64 = 300.0;
    pub const O3_AMPLITUDE: f64 = 30.0;
    pub const AR_COEFF: f64 = 0.8;
    pub const AR_INNOVATION: f64 = 4.0;
    pub const O3_OBSERVATION: f64 = 2.0;
    pub const UV_BASE: f64 = 6.0;
    pub const UV_AMPLITUDE: f64 = 4.0;
    pub const UV_PHASE: f64 = -0.3;
    pub const TSR_BASE: f64 = 20.0;
    pub const TSR_AMPLITUDE: f64 = 8.0;
    pub const TSR_PHASE: f64 = -0.2;
}

pub mod mackey_glass {
    pub const BETA: f64 = 0.2;
    pub const GAMMA: f64 = 0.1;
    pub const EXPONENT: i32 = 10;
    pub const DELAY: usize = 17;
    pub const SUBSTEPS: usize = 10;
    pub const WARMUP: usize = 300;
    pub const O3_OFFSET: f64 = 200.0;
    pub const O3_SCALE: f64 = 100.0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub length: usize,
    pub seed: u64,
    pub noise_level: f64,
    #[serde(default = "default_epoch")]
    pub start: NaiveDate,
}

pub fn default_epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date")
}

impl SynthSpec {
    pub fn generate(&self) -> Result<Series> {
        if self.length < MIN_SYNTH_LENGTH {
            return Err(Error::InsufficientData(format!(
                "synthetic series need at least {MIN_SYNTH_LENGTH} days, asked for {}",
                self.length
            )));
        }
        if !self.noise_level.is_finite() || self.noise_level < 0.0 {
            return Err(Error::Config(format!(
                "noise level must be a finite non-negative number, got {}",
                self.noise_level
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let timestamps = consecutive_days(self.start, self.length);
        match self.kind {
            SynthKind::SeasonalAr => {
                let (o3, uv, tsr) = seasonal_channels(self.length, self.noise_level, &mut rng);
                Series::new(timestamps, o3, Some(uv), Some(tsr))
            }
            SynthKind::MackeyGlass => {
                let o3 = mackey_glass_o3(self.length, self.noise_level, &mut rng);
                Series::new(timestamps, o3, None, None)
            }
        }
    }
}

pub fn synth_series(kind: SynthKind, length: usize, seed: u64, noise_level: f64) -> Result<Series> {
    SynthSpec {
        kind,
        length,
        seed,
        noise_level,
        start: default_epoch(),
    }
    .generate()
}

fn seasonal_channels(
    length: usize,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use seasonal::*;
    let mut o3 = Vec::with_capacity(length);
    let mut uv = Vec::with_capacity(length);
    let mut tsr = Vec::with_capacity(length);
    let mut ar = 0.0;
    for t in 0..length {
        let innovation: f64 = rng.sample(StandardNormal);
        let o3_noise: f64 = rng.sample(StandardNormal);
        let uv_noise: f64 = rng.sample(StandardNormal);
        let tsr_noise: f64 = rng.sample(StandardNormal);
        let angle = 2.0 * PI * t as f64 / PERIOD_DAYS;
        ar = AR_COEFF * ar + AR_INNOVATION * noise * O3_AMPLITUDE * innovation;
        o3.push(
            O3_BASE + O3_AMPLITUDE * angle.sin() + ar + O3_OBSERVATION * noise * O3_AMPLITUDE * o3_noise,
        );
        uv.push(UV_BASE + UV_AMPLITUDE * (angle + UV_PHASE).sin() + noise * UV_AMPLITUDE * uv_noise);
        tsr.push(
            TSR_BASE + TSR_AMPLITUDE * (angle + TSR_PHASE).sin() + noise * TSR_AMPLITUDE * tsr_noise,
        );
    }
    (o3, uv, tsr)
}

/// Euler-integrated delay-17 Mackey-Glass, sampled once per time unit after
/// a warm-up, affinely mapped into ozone-like units.
fn mackey_glass_o3(length: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    use mackey_glass::*;
    let dt = 1.0 / SUBSTEPS as f64;
    let delay_steps = DELAY * SUBSTEPS;
    // `history[k]` holds x at substep k; the initial segment is slightly jittered.
    let mut history: Vec<f64> = (0..=delay_steps)
        .map(|_| 1.2 + 0.2 * (rng.random::<f64>() - 0.5))
        .collect();
    let mut out = Vec::with_capacity(length);
    for sample in 0..WARMUP + length {
        for _ in 0..SUBSTEPS {
            let now = history[history.len() - 1];
            let lagged = history[history.len() - 1 - delay_steps];
            let dx = BETA * lagged / (1.0 + lagged.powi(EXPONENT)) - GAMMA * now;
            history.push(now + dt * dx);
        }
        if history.len() > 4 * delay_steps {
            history.drain(..history.len() - delay_steps - 1);
        }
        if sample >= WARMUP {
            let x = history[history.len() - 1];
            let jitter: f64 = rng.sample(StandardNormal);
            out.push(O3_OFFSET + O3_SCALE * (x + noise * jitter));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    fn ramp(n: usize) -> Series {
        Series::from_o3(d("2000-01-01"), (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn parses_well_formed_csv() {
        let text = "date,o3,uv,tsr\n2000-01-01,300.5,5,20\n2000-01-02,301,5.5,21\n2000-01-03,299,6,22\n";
        let s = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.o3, vec![300.5, 301.0, 299.0]);
        assert_eq!(s.uv.as_deref(), Some(&[5.0, 5.5, 6.0][..]));
        assert!(s.has_sensors());
    }

    #[test]
    fn ozone_only_csv_has_no_sensors() {
        let s = parse_csv("date,o3\n2000-01-01,1\n2000-01-02,2\n".as_bytes()).unwrap();
        assert!(s.uv.is_none() && s.tsr.is_none());
    }

    #[test]
    fn duplicate_date_is_an_ordering_error() {
        let text = "date,o3\n2000-01-01,1\n2000-01-02,2\n2000-01-02,3\n";
        match parse_csv(text.as_bytes()) {
            Err(Error::Ordering { line, date }) => {
                assert_eq!(line, 4);
                assert_eq!(date, d("2000-01-02"));
            }
            other => panic!("expected ordering error, got {other:?}"),
        }
    }

    #[test]
    fn gap_reports_first_missing_date() {
        let text = "date,o3\n2000-01-01,1\n2000-01-04,2\n";
        match parse_csv(text.as_bytes()) {
            Err(Error::Gap { line, missing }) => {
                assert_eq!(line, 3);
                assert_eq!(missing, d("2000-01-02"));
            }
            other => panic!("expected gap error, got {other:?}"),
        }
    }

    #[test]
    fn nan_value_names_the_column() {
        let text = "date,o3\n2000-01-01,1\n2000-01-02,NaN\n";
        match parse_csv(text.as_bytes()) {
            Err(Error::Parse { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "o3");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_o3_header_is_rejected() {
        let err = parse_csv("date,uv\n2000-01-01,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { ref column, .. } if column == "o3"));
    }

    #[test]
    fn csv_write_then_parse_is_identity() {
        let s = synth_series(SynthKind::SeasonalAr, 120, 3, 0.1).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(parse_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn lag_four_patterns_by_hand() {
        let p = make_patterns(&ramp(6), 4, PatternMode::LaggedO3).unwrap();
        assert_eq!(p.inputs, vec![vec![1.0, 2.0, 3.0, 4.0], vec![2.0, 3.0, 4.0, 5.0]]);
        assert_eq!(p.targets, vec![5.0, 6.0]);
        assert_eq!(p.dates, vec![d("2000-01-05"), d("2000-01-06")]);
    }

    #[test]
    fn sensors_mode_on_two_days_gives_one_pattern() {
        let s = Series::new(
            vec![d("2000-01-01"), d("2000-01-02")],
            vec![300.0, 290.0],
            Some(vec![5.0, 6.0]),
            Some(vec![20.0, 21.0]),
        )
        .unwrap();
        let p = make_patterns(&s, DEFAULT_LAG, PatternMode::Sensors).unwrap();
        assert_eq!(p.inputs, vec![vec![5.0, 20.0, 300.0]]);
        assert_eq!(p.targets, vec![290.0]);
        assert_eq!(p.input_channels, vec![Channel::Uv, Channel::Tsr, Channel::O3]);
    }

    #[test]
    fn sensors_mode_requires_channels() {
        let err = make_patterns(&ramp(5), 1, PatternMode::Sensors).unwrap_err();
        assert!(matches!(err, Error::MissingChannel("uv")));
    }

    #[test]
    fn short_series_is_insufficient() {
        let err = make_patterns(&ramp(4), 4, PatternMode::LaggedO3).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn split_counts_follow_rounding_rule() {
        let f = SplitFractions::default();
        assert_eq!(f.counts(100).unwrap(), (70, 15, 15));
        assert_eq!(f.counts(10).unwrap(), (8, 1, 1));
    }

    #[test]
    fn tiny_sets_go_to_train() {
        let p = make_patterns(&ramp(6), 4, PatternMode::LaggedO3).unwrap();
        let s = assign_splits(&p, SplitFractions::default(), 1).unwrap();
        assert_eq!(s.count(Split::Train), 2);
        let empty = PatternSet { inputs: vec![], targets: vec![], dates: vec![], split_labels: vec![], ..p };
        assert!(matches!(
            assign_splits(&empty, SplitFractions::default(), 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let p = make_patterns(&ramp(40), 4, PatternMode::LaggedO3).unwrap();
        let f = SplitFractions {
            train: 0.5,
            validation: 0.2,
            test: 0.2,
        };
        assert!(matches!(assign_splits(&p, f, 1), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_split() {
        let p = make_patterns(&ramp(80), 4, PatternMode::LaggedO3).unwrap();
        let a = assign_splits(&p, SplitFractions::default(), 42).unwrap();
        let b = assign_splits(&p, SplitFractions::default(), 42).unwrap();
        let c = assign_splits(&p, SplitFractions::default(), 43).unwrap();
        assert_eq!(a.split_labels, b.split_labels);
        assert_ne!(a.split_labels, c.split_labels);
    }

    #[test]
    fn normalization_uses_train_range() {
        let mut p = make_patterns(&ramp(6), 1, PatternMode::LaggedO3).unwrap();
        // inputs 1..5, targets 2..6
        p.inputs = vec![vec![10.0], vec![20.0], vec![15.0], vec![12.0], vec![30.0]];
        p.targets = vec![20.0, 15.0, 12.0, 10.0, 40.0];
        p.split_labels = vec![
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Train,
            Split::Test,
        ];
        let n = normalize(&p).unwrap();
        let scale = n.normalization.as_ref().unwrap().scale(Channel::O3).unwrap();
        assert_eq!((scale.min, scale.max), (10.0, 20.0));
        assert!(!scale.fallback);
        assert_eq!(n.inputs[2][0], 0.5);
        // test values may leave [0, 1]
        assert_eq!(n.targets[4], 3.0);
    }

    #[test]
    fn constant_channel_falls_back_to_unit_range() {
        let s = Series::from_o3(d("2000-01-01"), vec![7.0; 10]).unwrap();
        let p = make_patterns(&s, 2, PatternMode::LaggedO3).unwrap();
        let n = normalize(&p).unwrap();
        let scale = n.normalization.as_ref().unwrap().scale(Channel::O3).unwrap();
        assert!(scale.fallback);
        assert!(n.inputs.iter().flatten().all(|&x| x == 0.0));
        assert!(n.targets.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn normalization_inverts() {
        let s = synth_series(SynthKind::SeasonalAr, 200, 9, 0.2).unwrap();
        let p = make_patterns(&s, 1, PatternMode::Sensors).unwrap();
        let p = assign_splits(&p, SplitFractions::default(), 9).unwrap();
        let n = normalize(&p).unwrap();
        let norm = n.normalization.as_ref().unwrap();
        for (raw, scaled) in p.targets.iter().zip(&n.targets) {
            assert!((norm.invert_target(*scaled).unwrap() - raw).abs() <= 1e-12 * raw.abs());
        }
        for (raw, scaled) in p.inputs.iter().zip(&n.inputs) {
            for ((r, s), c) in raw.iter().zip(scaled).zip(&p.input_channels) {
                let back = norm.scale(*c).unwrap().invert(*s);
                assert!((back - r).abs() <= 1e-12 * r.abs().max(1.0));
            }
        }
        assert!(matches!(normalize(&n), Err(Error::Contract(_))));
    }

    #[test]
    fn noiseless_seasonal_matches_closed_form() {
        let s = synth_series(SynthKind::SeasonalAr, 400, 11, 0.0).unwrap();
        for (t, &v) in s.o3.iter().enumerate() {
            let angle = 2.0 * PI * t as f64 / seasonal::PERIOD_DAYS;
            assert_eq!(v, seasonal::O3_BASE + seasonal::O3_AMPLITUDE * angle.sin());
        }
        let uv = s.uv.as_ref().unwrap();
        let angle = 2.0 * PI * 10.0 / seasonal::PERIOD_DAYS;
        let expected = seasonal::UV_BASE + seasonal::UV_AMPLITUDE * (angle + seasonal::UV_PHASE).sin();
        assert_eq!(uv[10], expected);
    }

    #[test]
    fn synth_is_seeded() {
        for kind in [SynthKind::SeasonalAr, SynthKind::MackeyGlass] {
            let a = synth_series(kind, 150, 5, 0.05).unwrap();
            assert_eq!(a, synth_series(kind, 150, 5, 0.05).unwrap());
            assert_ne!(a, synth_series(kind, 150, 6, 0.05).unwrap());
        }
    }

    #[test]
    fn synth_length_and_epoch() {
        let s = synth_series(SynthKind::SeasonalAr, 500, 1, 0.05).unwrap();
        assert_eq!(s.len(), 500);
        assert_eq!(s.timestamps[0], default_epoch());
        assert_eq!(s.timestamps[499], d("2001-05-14"));
        assert!(matches!(
            synth_series(SynthKind::SeasonalAr, 50, 1, 0.05),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn mackey_glass_stays_in_attractor_band() {
        let s = synth_series(SynthKind::MackeyGlass, 1000, 2, 0.0).unwrap();
        let lo = s.o3.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.o3.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // x oscillates roughly within [0.2, 1.4] for delay 17
        assert!(lo > 200.0 + 10.0 && hi < 200.0 + 150.0, "range [{lo}, {hi}]");
        assert!(hi - lo > 50.0);
    }

    #[test]
    fn pattern_set_json_round_trip_validates() {
        let p = make_patterns(&ramp(20), 4, PatternMode::LaggedO3).unwrap();
        let text = p.to_json().unwrap();
        assert_eq!(PatternSet::from_json(&text).unwrap(), p);
        let mut broken = p.clone();
        broken.targets.pop();
        assert!(PatternSet::from_json(&broken.to_json().unwrap()).is_err());
    }
}
