//! Regression metrics. `correlation` is the Pearson product-moment
//! coefficient.

use crate::error::{Error, Result};

fn check_pair(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::Contract(format!(
            "metric inputs differ in length: {} vs {}",
            predicted.len(),
            actual.len()
        )));
    }
    crate::error::check_finite("predicted", predicted)?;
    crate::error::check_finite("actual", actual)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn correlation(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    if predicted.len() < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "need at least 2 samples, got {}",
            predicted.len()
        )));
    }
    let constant = |xs: &[f64]| xs.iter().all(|&x| x == xs[0]);
    if constant(predicted) {
        return Err(Error::UndefinedCorrelation("predicted values are constant".into()));
    }
    if constant(actual) {
        return Err(Error::UndefinedCorrelation("actual values are constant".into()));
    }
    let (mp, ma) = (mean(predicted), mean(actual));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &a) in predicted.iter().zip(actual) {
        let (dp, da) = (p - mp, a - ma);
        sxy += dp * da;
        sxx += dp * dp;
        syy += da * da;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("variance underflowed to zero".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sse: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok((sse / predicted.len() as f64).sqrt())
}

pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sae: f64 = predicted.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(sae / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Textbook single-pass formula, used only as an oracle.
    fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn perfect_and_anti_correlation() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_eq!(correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(correlation(&neg, &a).unwrap(), -1.0);
    }

    #[test]
    fn small_example_matches_formula() {
        let r = correlation(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let oracle = naive_pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]);
        // 3/sqrt(2*4.6667)
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 0.98198).abs() < 1e-5);
    }

    #[test]
    fn constant_inputs_are_undefined() {
        assert!(matches!(
            correlation(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(
            correlation(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(correlation(&[1.0], &[1.0]), Err(Error::UndefinedCorrelation(_))));
        assert!(matches!(correlation(&[1.0, 2.0], &[1.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn rmse_and_mae_by_hand() {
        let p = [1.0, 2.0, 3.0, 4.0];
        let a = [1.0, 2.0, 3.0, 8.0];
        assert_eq!(rmse(&p, &a).unwrap(), 2.0);
        assert_eq!(mae(&p, &a).unwrap(), 1.0);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn invariant_under_positive_affine_maps(
            xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
            scale in 0.01f64..100.0,
            shift in -1000.0f64..1000.0,
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            let base = correlation(&x, &y);
            prop_assume!(base.is_ok());
            let moved: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            let r = correlation(&moved, &y).unwrap();
            prop_assert!((r - base.unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r));
        }

        #[test]
        fn rmse_dominates_mae(
            xy in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..60),
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            prop_assert!(rmse(&x, &y).unwrap() + 1e-12 >= mae(&x, &y).unwrap());
        }
    }
}
