use crate::dataset::PatternSet;
use crate::metrics::correlation;
use crate::Predictor;

/// Keeps the model snapshot with the highest validation correlation seen so
/// far. Ties keep the earlier snapshot.
pub(crate) struct BestSnapshot<M> {
    best: Option<(f64, M)>,
}

impl<M> Default for BestSnapshot<M> {
    fn default() -> Self {
        BestSnapshot { best: None }
    }
}

impl<M: Predictor + Clone> BestSnapshot<M> {
    pub(crate) fn offer(&mut self, model: &M, patterns: &PatternSet, validation: &[usize]) {
        let Some(score) = validation_correlation(model, patterns, validation) else {
            return;
        };
        if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
            self.best = Some((score, model.clone()));
        }
    }

    pub(crate) fn into_best(self) -> Option<M> {
        self.best.map(|(_, m)| m)
    }
}

pub(crate) fn validation_correlation<M: Predictor>(
    model: &M,
    patterns: &PatternSet,
    indices: &[usize],
) -> Option<f64> {
    if indices.len() < 2 {
        return None;
    }
    let mut predicted = Vec::with_capacity(indices.len());
    let mut actual = Vec::with_capacity(indices.len());
    for &i in indices {
        let y = model.predict(&patterns.inputs[i]).ok()?;
        if !y.is_finite() {
            return None;
        }
        predicted.push(y);
        actual.push(patterns.targets[i]);
    }
    correlation(&predicted, &actual).ok()
}
