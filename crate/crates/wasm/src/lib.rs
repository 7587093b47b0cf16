//! Browser demo. [`Session`] holds a synthetic series and, once trained,
//! the three compared models; every method returns a JSON string so the
//! page needs no bindings beyond plain strings and numbers.
//!
//! On `wasm32` the session is exported to JavaScript as `Demo`.

use serde_json::{json, Value};

use oz_sentinel::alarm::{replay, AlarmPolicy, Band, Direction, ReplayOptions};
use oz_sentinel::dataset::{default_epoch, SynthKind, SynthSpec};
use oz_sentinel::evaluate::Comparison;
use oz_sentinel::model::{ModelKind, Preprocessing};
use oz_sentinel::workflow::{compare_all, DataSource, Prepared, RunConfig};

pub type DemoResult<T> = Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub struct Session {
    spec: SynthSpec,
    prepared: Prepared,
    comparison: Option<Comparison>,
}

impl Session {
    pub fn new(kind: &str, length: usize, seed: u64, noise_level: f64) -> DemoResult<Self> {
        let spec = SynthSpec {
            kind: kind.parse::<SynthKind>().map_err(err)?,
            length,
            seed,
            noise_level,
            start: default_epoch(),
        };
        let prepared = oz_sentinel::workflow::prepare(&RunConfig::new(DataSource::Synth(spec.clone()), seed))
            .map_err(err)?;
        Ok(Session {
            spec,
            prepared,
            comparison: None,
        })
    }

    /// `{"dates": [...], "o3": [...]}`
    pub fn series_json(&self) -> String {
        let s = &self.prepared.series;
        let dates: Vec<String> = s.timestamps.iter().map(|d| d.to_string()).collect();
        json!({ "dates": dates, "o3": s.o3 }).to_string()
    }

    /// Trains all three models with `epochs` each and returns the report
    /// plus test-split (actual, predicted) pairs per model.
    pub fn compare(&mut self, seed: u64, epochs: usize) -> DemoResult<String> {
        let mut config = RunConfig::new(DataSource::Synth(self.spec.clone()), seed);
        config.bel.epochs = epochs;
        config.anfis.epochs = epochs;
        config.mlp.epochs = epochs;
        let (prepared, comparison) = compare_all(&config).map_err(err)?;
        let scatter: serde_json::Map<String, Value> = comparison
            .runs
            .iter()
            .map(|run| {
                let pairs: Vec<[f64; 2]> = run
                    .points
                    .iter()
                    .filter(|p| p.split == oz_sentinel::dataset::Split::Test)
                    .map(|p| [p.actual, p.predicted])
                    .collect();
                (run.report.kind.to_string(), json!(pairs))
            })
            .collect();
        let out = json!({ "report": comparison.report, "test_points": scatter });
        self.prepared = prepared;
        self.comparison = Some(comparison);
        Ok(out.to_string())
    }

    /// Replays the series through a trained model against a single-band
    /// policy. Returns every daily record plus the alarm events.
    pub fn alarm(&self, kind: &str, bound: f64, high_is_dangerous: bool, adapt: bool) -> DemoResult<String> {
        let comparison = self.comparison.as_ref().ok_or("train the models first")?;
        let kind: ModelKind = kind.parse().map_err(err)?;
        let model = comparison
            .run(kind)
            .and_then(|r| r.model.clone())
            .ok_or_else(|| format!("{kind} did not train"))?;
        let direction = if high_is_dangerous {
            Direction::HighIsDangerous
        } else {
            Direction::LowIsDangerous
        };
        let policy = AlarmPolicy::new(
            direction,
            vec![Band {
                bound,
                severity: "alarm".into(),
                message: "O3 predicted {value} on {date} (bound {bound})".into(),
            }],
        )
        .map_err(err)?;
        let pre = Preprocessing::of(&self.prepared.patterns);
        let records = replay(&self.prepared.series, model, pre, &policy, ReplayOptions { adapt })
            .map_err(err)?;
        let events: Vec<_> = records.iter().filter_map(|r| r.event.clone()).collect();
        let predicted: Vec<f64> = records.iter().map(|r| r.predicted_o3).collect();
        let first = records.first().map(|r| r.date.to_string());
        Ok(json!({ "first_date": first, "predicted": predicted, "events": events }).to_string())
    }
}

#[cfg(target_arch = "wasm32")]
mod bindings {
    use wasm_bindgen::prelude::*;

    #[wasm_bindgen]
    pub struct Demo(super::Session);

    #[wasm_bindgen]
    impl Demo {
        #[wasm_bindgen(constructor)]
        pub fn new(kind: &str, length: usize, seed: u64, noise_level: f64) -> Result<Demo, JsError> {
            super::Session::new(kind, length, seed, noise_level)
                .map(Demo)
                .map_err(|e| JsError::new(&e))
        }

        #[wasm_bindgen(js_name = seriesJson)]
        pub fn series_json(&self) -> String {
            self.0.series_json()
        }

        pub fn compare(&mut self, seed: u64, epochs: usize) -> Result<String, JsError> {
            self.0.compare(seed, epochs).map_err(|e| JsError::new(&e))
        }

        pub fn alarm(&self, kind: &str, bound: f64, high_is_dangerous: bool, adapt: bool) -> Result<String, JsError> {
            self.0
                .alarm(kind, bound, high_is_dangerous, adapt)
                .map_err(|e| JsError::new(&e))
        }
    }
}
