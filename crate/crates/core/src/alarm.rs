//! Threshold alarms on predicted next-day ozone.
//!
//! An [`AlarmPolicy`] is a set of bands, each a bound with a severity label.
//! With `low_is_dangerous` a band triggers when the prediction is at or
//! below its bound; the deepest triggered band wins. `high_is_dangerous`
//! mirrors this. Bounds are inclusive on the dangerous side.
//!
//! [`Replay`] walks a daily feed forward in time. On each day with enough
//! history it predicts tomorrow from data up to today, classifies the
//! prediction, and raises an [`AlarmEvent`] whenever the severity rises
//! above the previous day's level (entering a band or escalating).

use std::collections::VecDeque;
use std::path::Path;
use std::sync::mpsc::sync_channel;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::dataset::{PatternMode, Series};
use crate::error::{Error, Result};
use crate::model::Preprocessing;
use crate::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    LowIsDangerous,
    HighIsDangerous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub bound: f64,
    pub severity: String,
    /// Template with `{value}`, `{bound}`, `{severity}` and `{date}` placeholders.
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolicy", into = "RawPolicy")]
pub struct AlarmPolicy {
    direction: Direction,
    /// Sorted from least to most severe.
    bands: Vec<Band>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPolicy {
    direction: Direction,
    bands: Vec<Band>,
}

impl TryFrom<RawPolicy> for AlarmPolicy {
    type Error = Error;

    fn try_from(raw: RawPolicy) -> Result<Self> {
        AlarmPolicy::new(raw.direction, raw.bands)
    }
}

impl From<AlarmPolicy> for RawPolicy {
    fn from(p: AlarmPolicy) -> Self {
        RawPolicy {
            direction: p.direction,
            bands: p.bands,
        }
    }
}

impl AlarmPolicy {
    /// Bands may be listed in either order but their bounds must be strictly
    /// monotone, finite, and carry unique labels.
    pub fn new(direction: Direction, mut bands: Vec<Band>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::Policy("at least one band is required".into()));
        }
        if let Some(b) = bands.iter().find(|b| !b.bound.is_finite()) {
            return Err(Error::Policy(format!("band `{}` has a non-finite bound", b.severity)));
        }
        let increasing = bands.windows(2).all(|w| w[0].bound < w[1].bound);
        let decreasing = bands.windows(2).all(|w| w[0].bound > w[1].bound);
        if !increasing && !decreasing {
            return Err(Error::Policy("band bounds must be strictly monotone".into()));
        }
        for (i, b) in bands.iter().enumerate() {
            if bands[..i].iter().any(|o| o.severity == b.severity) {
                return Err(Error::Policy(format!("duplicate severity label `{}`", b.severity)));
            }
        }
        match direction {
            // least severe first: highest bound when low values are dangerous
            Direction::LowIsDangerous => bands.sort_by(|a, b| b.bound.total_cmp(&a.bound)),
            Direction::HighIsDangerous => bands.sort_by(|a, b| a.bound.total_cmp(&b.bound)),
        }
        Ok(AlarmPolicy { direction, bands })
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    /// Bands from least to most severe.
    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<RawPolicy>(text)?.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Index into [`AlarmPolicy::bands`] of the most severe triggered band.
    pub fn rank(&self, prediction: f64) -> Result<Option<usize>> {
        if !prediction.is_finite() {
            return Err(Error::RejectedInput(format!("non-finite prediction {prediction}")));
        }
        let triggered = |b: &Band| match self.direction {
            Direction::LowIsDangerous => prediction <= b.bound,
            Direction::HighIsDangerous => prediction >= b.bound,
        };
        Ok(self.bands.iter().rposition(triggered))
    }

    pub fn classify(&self, prediction: f64) -> Result<Option<&Band>> {
        Ok(self.rank(prediction)?.map(|r| &self.bands[r]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlarmEvent {
    /// Day the prediction is for.
    pub date: NaiveDate,
    pub predicted_o3: f64,
    pub severity: String,
    pub bound: f64,
    pub message: String,
}

impl AlarmEvent {
    fn new(date: NaiveDate, predicted_o3: f64, band: &Band) -> Self {
        let message = band
            .message
            .replace("{value}", &format!("{predicted_o3:.2}"))
            .replace("{bound}", &band.bound.to_string())
            .replace("{severity}", &band.severity)
            .replace("{date}", &date.to_string());
        AlarmEvent {
            date,
            predicted_o3,
            severity: band.severity.clone(),
            bound: band.bound,
            message,
        }
    }
}

/// One line of the replay stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// Last day of data the prediction used.
    pub issued: NaiveDate,
    /// Day being predicted.
    pub date: NaiveDate,
    pub predicted_o3: f64,
    pub event: Option<AlarmEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayReading {
    pub date: NaiveDate,
    pub o3: f64,
    pub uv: Option<f64>,
    pub tsr: Option<f64>,
}

/// Day-by-day access to sensor readings.
pub trait DailyFeed {
    fn len(&self) -> usize;
    fn day(&self, index: usize) -> DayReading;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl DailyFeed for Series {
    fn len(&self) -> usize {
        Series::len(self)
    }

    fn day(&self, index: usize) -> DayReading {
        DayReading {
            date: self.timestamps[index],
            o3: self.o3[index],
            uv: self.uv.as_ref().map(|c| c[index]),
            tsr: self.tsr.as_ref().map(|c| c[index]),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    /// Apply one online learning step per day once the true value arrives.
    pub adapt: bool,
}

pub struct Replay<'a, F: DailyFeed + ?Sized, P: Predictor> {
    feed: &'a F,
    model: P,
    preprocessing: Preprocessing,
    policy: Option<&'a AlarmPolicy>,
    options: ReplayOptions,
    next_day: usize,
    window: VecDeque<DayReading>,
    /// Scaled input of yesterday's prediction, awaiting today's truth.
    pending: Option<Vec<f64>>,
    last_rank: Option<usize>,
}

impl<'a, F: DailyFeed + ?Sized, P: Predictor> Replay<'a, F, P> {
    pub fn new(
        feed: &'a F,
        model: P,
        preprocessing: Preprocessing,
        policy: Option<&'a AlarmPolicy>,
        options: ReplayOptions,
    ) -> Result<Self> {
        let dim = preprocessing.input_channels().len();
        if model.input_dim() != dim {
            return Err(Error::Contract(format!(
                "model expects {} inputs, preprocessing yields {dim}",
                model.input_dim()
            )));
        }
        if options.adapt && !model.supports_adaptation() {
            return Err(Error::Unsupported(
                "--adapt needs a model that learns online (BEL)".into(),
            ));
        }
        Ok(Replay {
            feed,
            model,
            preprocessing,
            policy,
            options,
            next_day: 0,
            window: VecDeque::new(),
            pending: None,
            last_rank: None,
        })
    }

    pub fn model(&self) -> &P {
        &self.model
    }

    fn raw_input(&self, today: &DayReading) -> Result<Vec<f64>> {
        match self.preprocessing.mode {
            PatternMode::LaggedO3 => Ok(self.window.iter().map(|d| d.o3).collect()),
            PatternMode::Sensors => Ok(vec![
                today.uv.ok_or(Error::MissingChannel("uv"))?,
                today.tsr.ok_or(Error::MissingChannel("tsr"))?,
                today.o3,
            ]),
        }
    }

    fn step(&mut self) -> Option<Result<ReplayRecord>> {
        let history = self.preprocessing.mode.history(self.preprocessing.lag);
        while self.next_day < self.feed.len() {
            let t = self.next_day;
            self.next_day += 1;
            let today = self.feed.day(t);
            if let Some(input) = self.pending.take() {
                let learned = self
                    .preprocessing
                    .scale_target(today.o3)
                    .and_then(|target| self.model.adapt(&input, target));
                if let Err(e) = learned {
                    return Some(Err(e));
                }
            }
            self.window.push_back(today);
            if self.window.len() > history {
                self.window.pop_front();
            }
            if self.window.len() < history {
                log::info!(
                    "skipping {}: {} of {history} days of history available",
                    today.date,
                    self.window.len()
                );
                continue;
            }
            return Some(self.predict_from(&today));
        }
        None
    }

    fn predict_from(&mut self, today: &DayReading) -> Result<ReplayRecord> {
        let input = self.preprocessing.scale_input(&self.raw_input(today)?)?;
        let scaled = self.model.predict(&input)?;
        let predicted_o3 = self.preprocessing.unscale_target(scaled)?;
        let date = today.date + Days::new(1);
        let mut event = None;
        if let Some(policy) = self.policy {
            let rank = policy.rank(predicted_o3)?;
            if let Some(r) = rank {
                if self.last_rank.is_none_or(|prev| r > prev) {
                    event = Some(AlarmEvent::new(date, predicted_o3, &policy.bands()[r]));
                }
            }
            self.last_rank = rank;
        }
        if self.options.adapt {
            self.pending = Some(input);
        }
        Ok(ReplayRecord {
            issued: today.date,
            date,
            predicted_o3,
            event,
        })
    }
}

impl<F: DailyFeed + ?Sized, P: Predictor> Iterator for Replay<'_, F, P> {
    type Item = Result<ReplayRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.step()
    }
}

impl<F, P> Replay<'_, F, P>
where
    F: DailyFeed + Sync + ?Sized,
    P: Predictor + Send,
{
    /// Runs the replay on a producer thread feeding `consumer` through a
    /// queue of `capacity` records; the producer blocks while the queue is
    /// full. Stops at the first consumer error.
    pub fn drive_bounded<C>(self, capacity: usize, mut consumer: C) -> Result<()>
    where
        C: FnMut(ReplayRecord) -> Result<()>,
    {
        let (tx, rx) = sync_channel(capacity);
        std::thread::scope(|scope| {
            scope.spawn(move || {
                for record in self {
                    let stop = record.is_err();
                    if tx.send(record).is_err() || stop {
                        break;
                    }
                }
            });
            for record in rx {
                consumer(record?)?;
            }
            Ok(())
        })
    }
}

/// Convenience wrapper collecting a full replay.
pub fn replay<F: DailyFeed + ?Sized, P: Predictor>(
    feed: &F,
    model: P,
    preprocessing: Preprocessing,
    policy: &AlarmPolicy,
    options: ReplayOptions,
) -> Result<Vec<ReplayRecord>> {
    Replay::new(feed, model, preprocessing, Some(policy), options)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bel::{BelConfig, BelModel};
    use std::cell::{Cell, RefCell};
    use std::rc::Rc;

    fn band(bound: f64, severity: &str) -> Band {
        Band {
            bound,
            severity: severity.into(),
            message: "O3 predicted {value} below {bound}".into(),
        }
    }

    fn single(bound: f64) -> AlarmPolicy {
        AlarmPolicy::new(Direction::LowIsDangerous, vec![band(bound, "warning")]).unwrap()
    }

    #[test]
    fn single_band_classification() {
        let p = single(250.0);
        assert!(p.classify(260.0).unwrap().is_none());
        assert_eq!(p.classify(240.0).unwrap().unwrap().severity, "warning");
        assert_eq!(p.classify(250.0).unwrap().unwrap().severity, "warning");
        assert!(matches!(p.classify(f64::NAN), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn deepest_band_wins() {
        let p = AlarmPolicy::new(
            Direction::LowIsDangerous,
            vec![band(220.0, "critical"), band(250.0, "warning")],
        )
        .unwrap();
        assert_eq!(p.bands()[0].severity, "warning");
        assert_eq!(p.classify(230.0).unwrap().unwrap().severity, "warning");
        assert_eq!(p.classify(220.0).unwrap().unwrap().severity, "critical");
        let high = AlarmPolicy::new(
            Direction::HighIsDangerous,
            vec![band(300.0, "elevated"), band(350.0, "severe")],
        )
        .unwrap();
        assert!(high.classify(299.9).unwrap().is_none());
        assert_eq!(high.classify(360.0).unwrap().unwrap().severity, "severe");
    }

    #[test]
    fn invalid_policies_are_rejected() {
        assert!(matches!(AlarmPolicy::new(Direction::LowIsDangerous, vec![]), Err(Error::Policy(_))));
        let dup = vec![band(250.0, "a"), band(220.0, "a")];
        assert!(matches!(AlarmPolicy::new(Direction::LowIsDangerous, dup), Err(Error::Policy(_))));
        let flat = vec![band(250.0, "a"), band(250.0, "b")];
        assert!(matches!(AlarmPolicy::new(Direction::LowIsDangerous, flat), Err(Error::Policy(_))));
        let zigzag = vec![band(250.0, "a"), band(220.0, "b"), band(260.0, "c")];
        assert!(matches!(AlarmPolicy::new(Direction::LowIsDangerous, zigzag), Err(Error::Policy(_))));
        assert!(AlarmPolicy::from_json(r#"{"direction":"low_is_dangerous","bands":[]}"#).is_err());
        assert!(AlarmPolicy::from_json(r#"{"direction":"low_is_dangerous","bands":[],"extra":1}"#).is_err());
    }

    #[test]
    fn policy_file_format() {
        let p = AlarmPolicy::from_json(
            r#"{"direction":"low_is_dangerous","bands":[{"bound":250,"severity":"warning","message":"O3 predicted {value} below {bound}"}]}"#,
        )
        .unwrap();
        assert_eq!(p, single(250.0));
        let back = AlarmPolicy::from_json(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn message_is_rendered() {
        let d = NaiveDate::from_ymd_opt(2001, 3, 4).unwrap();
        let e = AlarmEvent::new(d, 241.456, &band(250.0, "warning"));
        assert_eq!(e.message, "O3 predicted 241.46 below 250");
    }

    fn series(values: &[f64]) -> Series {
        Series::from_o3(crate::dataset::default_epoch(), values.to_vec()).unwrap()
    }

    /// Echoes a scripted sequence of predictions, one per call.
    struct Scripted {
        dim: usize,
        outputs: Vec<f64>,
        calls: Cell<usize>,
    }

    impl Predictor for Scripted {
        fn input_dim(&self) -> usize {
            self.dim
        }
        fn predict(&self, _x: &[f64]) -> Result<f64> {
            let i = self.calls.get();
            self.calls.set(i + 1);
            Ok(self.outputs[i])
        }
    }

    fn lagged(lag: usize) -> Preprocessing {
        Preprocessing {
            mode: PatternMode::LaggedO3,
            lag,
            normalization: None,
        }
    }

    #[test]
    fn never_triggering_policy_yields_only_predictions() {
        let s = series(&[300.0; 10]);
        let model = Scripted { dim: 3, outputs: vec![300.0; 8], calls: Cell::new(0) };
        let records = replay(&s, model, lagged(3), &single(100.0), ReplayOptions::default()).unwrap();
        assert_eq!(records.len(), 8);
        assert!(records.iter().all(|r| r.event.is_none()));
        assert_eq!(records[0].issued, s.timestamps[2]);
        assert_eq!(records[7].date, s.timestamps[9] + Days::new(1));
    }

    #[test]
    fn events_fire_on_entry_and_escalation() {
        let policy = AlarmPolicy::new(
            Direction::LowIsDangerous,
            vec![band(250.0, "warning"), band(220.0, "critical")],
        )
        .unwrap();
        let outputs = vec![260.0, 245.0, 240.0, 210.0, 215.0, 230.0, 270.0, 200.0];
        let s = series(&[300.0; 8]);
        let model = Scripted { dim: 1, outputs, calls: Cell::new(0) };
        let records = replay(&s, model, lagged(1), &policy, ReplayOptions::default()).unwrap();
        let severities: Vec<Option<&str>> = records
            .iter()
            .map(|r| r.event.as_ref().map(|e| e.severity.as_str()))
            .collect();
        assert_eq!(
            severities,
            vec![None, Some("warning"), None, Some("critical"), None, None, None, Some("critical")]
        );
    }

    /// Feed wrapper that logs every index read.
    struct Tracked<'a> {
        inner: &'a Series,
        reads: Rc<RefCell<Vec<usize>>>,
    }

    impl DailyFeed for Tracked<'_> {
        fn len(&self) -> usize {
            self.inner.len()
        }
        fn day(&self, index: usize) -> DayReading {
            self.reads.borrow_mut().push(index);
            DayReading {
                date: self.inner.timestamps[index],
                o3: self.inner.o3[index],
                uv: None,
                tsr: None,
            }
        }
    }

    /// Knows the whole future but records how much of the feed had been read
    /// when each prediction was requested.
    struct Peeking {
        lag: usize,
        truth: Vec<f64>,
        reads: Rc<RefCell<Vec<usize>>>,
        calls: Cell<usize>,
        violations: Cell<usize>,
    }

    impl Predictor for Peeking {
        fn input_dim(&self) -> usize {
            self.lag
        }
        fn predict(&self, x: &[f64]) -> Result<f64> {
            let call = self.calls.get();
            self.calls.set(call + 1);
            let issue_day = call + self.lag - 1;
            if self.reads.borrow().iter().any(|&i| i > issue_day) {
                self.violations.set(self.violations.get() + 1);
            }
            assert_eq!(x, &self.truth[issue_day + 1 - self.lag..=issue_day]);
            Ok(self.truth.get(issue_day + 1).copied().unwrap_or(300.0))
        }
    }

    #[test]
    fn replay_never_reads_ahead() {
        let values: Vec<f64> = (0..40).map(|t| 280.0 + (t as f64).sin() * 40.0).collect();
        let s = series(&values);
        let reads = Rc::new(RefCell::new(Vec::new()));
        let feed = Tracked { inner: &s, reads: reads.clone() };
        let model = Peeking {
            lag: 4,
            truth: values.clone(),
            reads: reads.clone(),
            calls: Cell::new(0),
            violations: Cell::new(0),
        };
        let policy = single(250.0);
        let mut replay = Replay::new(&feed, model, lagged(4), Some(&policy), ReplayOptions::default()).unwrap();
        let records: Vec<_> = replay.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(records.len(), 37);
        assert_eq!(replay.model().violations.get(), 0);
        assert_eq!(replay.model().calls.get(), 37);
    }

    #[test]
    fn sensors_replay_needs_channels() {
        let s = series(&[300.0; 5]);
        let model = Scripted { dim: 3, outputs: vec![300.0; 5], calls: Cell::new(0) };
        let pre = Preprocessing { mode: PatternMode::Sensors, lag: 1, normalization: None };
        let err = replay(&s, model, pre, &single(250.0), ReplayOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingChannel("uv")));
    }

    #[test]
    fn adaptation_requires_online_model() {
        let s = series(&[300.0; 5]);
        let model = Scripted { dim: 1, outputs: vec![], calls: Cell::new(0) };
        let options = ReplayOptions { adapt: true };
        assert!(matches!(
            Replay::new(&s, model, lagged(1), None, options),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn adaptive_bel_learns_during_replay() {
        let s = series(&[0.5; 30]);
        let bel = BelModel::new(BelConfig::new(2, 0));
        let options = ReplayOptions { adapt: true };
        let mut replay = Replay::new(&s, bel.clone(), lagged(2), None, options).unwrap();
        let records: Vec<_> = replay.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(records[0].predicted_o3, 0.0);
        assert!(records.last().unwrap().predicted_o3 > 0.3);
        assert_ne!(replay.model(), &bel);
    }

    #[test]
    fn bounded_driver_preserves_order() {
        let values: Vec<f64> = (0..50).map(|t| 300.0 - t as f64 * 2.0).collect();
        let s = series(&values);
        let bel = BelModel::from_weights(vec![1.0, 0.0], vec![0.0], BelConfig::new(1, 0)).unwrap();
        let direct = replay(&s, bel.clone(), lagged(1), &single(250.0), ReplayOptions::default()).unwrap();
        let policy = single(250.0);
        let mut streamed = Vec::new();
        Replay::new(&s, bel, lagged(1), Some(&policy), ReplayOptions::default())
            .unwrap()
            .drive_bounded(2, |r| {
                streamed.push(r);
                Ok(())
            })
            .unwrap();
        assert_eq!(streamed, direct);
        assert_eq!(direct.iter().filter(|r| r.event.is_some()).count(), 1);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn three_band(direction: Direction) -> AlarmPolicy {
            AlarmPolicy::new(
                direction,
                vec![band(200.0, "a"), band(250.0, "b"), band(280.0, "c")],
            )
            .unwrap()
        }

        proptest! {
            #[test]
            fn lower_prediction_never_lowers_severity(x in 100.0..400.0f64, drop in 0.0..100.0f64) {
                let p = three_band(Direction::LowIsDangerous);
                let rank = |v: f64| p.rank(v).unwrap().map_or(-1, |r| r as i64);
                prop_assert!(rank(x - drop) >= rank(x));
                let h = three_band(Direction::HighIsDangerous);
                let rank = |v: f64| h.rank(v).unwrap().map_or(-1, |r| r as i64);
                prop_assert!(rank(x + drop) >= rank(x));
            }

            #[test]
            fn events_match_brute_force_crossings(outputs in proptest::collection::vec(180.0..320.0f64, 1..80)) {
                let policy = single(250.0);
                let s = series(&vec![300.0; outputs.len()]);
                let model = Scripted { dim: 1, outputs: outputs.clone(), calls: Cell::new(0) };
                let records = replay(&s, model, lagged(1), &policy, ReplayOptions::default()).unwrap();
                let mut expected = 0;
                let mut below = false;
                for &y in &outputs {
                    if y <= 250.0 && !below {
                        expected += 1;
                    }
                    below = y <= 250.0;
                }
                prop_assert_eq!(records.iter().filter(|r| r.event.is_some()).count(), expected);
            }
        }
    }
}
