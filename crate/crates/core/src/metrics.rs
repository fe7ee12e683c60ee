//! Error and efficiency metrics.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute-error summary: mean and population standard deviation of `|y - ŷ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean_abs_error: f64,
    pub std_abs_error: f64,
    pub n: usize,
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if y.len() != yhat.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    Ok(())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population (n-divisor) standard deviation.
pub fn population_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

/// Root mean square percent error, in percent.
pub fn rmspe(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    if let Some(i) = y.iter().position(|&v| v == 0.0) {
        return Err(Error::UndefinedMetric(format!(
            "RMSPE needs non-zero targets; target {i} is zero"
        )));
    }
    let s: f64 = y
        .iter()
        .zip(yhat)
        .map(|(a, b)| {
            let r = (a - b) / a;
            r * r
        })
        .sum();
    Ok(100.0 * (s / y.len() as f64).sqrt())
}

pub fn abs_error_stats(y: &[f64], yhat: &[f64]) -> Result<ErrorStats> {
    check_pair(y, yhat)?;
    let errs: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).collect();
    Ok(ErrorStats {
        mean_abs_error: mean(&errs),
        std_abs_error: population_std(&errs),
        n: errs.len(),
    })
}

/// Signed-error summary (mean and population std of `ŷ - y`).
pub fn signed_error_stats(y: &[f64], yhat: &[f64]) -> Result<(f64, f64)> {
    check_pair(y, yhat)?;
    let errs: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| b - a).collect();
    Ok((mean(&errs), population_std(&errs)))
}

/// Runs `block` and returns its result together with the elapsed wall-clock seconds.
pub fn timed<T>(block: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = block();
    (out, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[2.0], &[-3.0]).unwrap(), 5.0);
        assert!(matches!(rmse(&[], &[]), Err(Error::InsufficientData { .. })));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn rmspe_examples() {
        assert_eq!(rmspe(&[5.0, 7.0], &[5.0, 7.0]).unwrap(), 0.0);
        assert!((rmspe(&[100.0], &[110.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((rmspe(&[100.0, 200.0], &[110.0, 180.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(
            rmspe(&[0.0, 1.0], &[1.0, 1.0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn abs_error_examples() {
        let s = abs_error_stats(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((s.mean_abs_error, s.std_abs_error), (0.0, 0.0));
        let s = abs_error_stats(&[0.0, 0.0], &[1.0, -3.0]).unwrap();
        assert_eq!((s.mean_abs_error, s.std_abs_error, s.n), (2.0, 1.0, 2));
        let s = abs_error_stats(&[10.0], &[5.0]).unwrap();
        assert_eq!((s.mean_abs_error, s.std_abs_error), (5.0, 0.0));
    }

    #[test]
    fn timed_bounds() {
        let (v, ct) = timed(|| 42);
        assert_eq!(v, 42);
        assert!((0.0..0.1).contains(&ct));
        let ((), ct) = timed(|| std::thread::sleep(std::time::Duration::from_millis(100)));
        assert!((0.1..=1.0).contains(&ct), "ct = {ct}");
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae_and_is_permutation_invariant(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40),
            rot in 0usize..40,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = rmse(&y, &yh).unwrap();
            let s = abs_error_stats(&y, &yh).unwrap();
            prop_assert!(r >= 0.0);
            prop_assert!(r + 1e-9 >= s.mean_abs_error);
            let k = rot % y.len();
            let mut y2 = y.clone();
            let mut yh2 = yh.clone();
            y2.rotate_left(k);
            yh2.rotate_left(k);
            prop_assert!((rmse(&y2, &yh2).unwrap() - r).abs() <= 1e-9 * (1.0 + r));
        }

        #[test]
        fn rmspe_scale_invariant(
            pairs in prop::collection::vec((1.0f64..1e3, 1.0f64..1e3), 1..30),
            k in 0.01f64..100.0,
        ) {
            let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let yh: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
            let yhs: Vec<f64> = yh.iter().map(|v| v * k).collect();
            let a = rmspe(&y, &yh).unwrap();
            let b = rmspe(&ys, &yhs).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
