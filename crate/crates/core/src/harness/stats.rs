use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const ALPHA: f64 = 0.05;
pub const TEST_NAME: &str = "paired two-sided t-test on per-fold macro-F1";

/// `(t statistic, two-sided p)` for paired samples. Identical samples give
/// `(None, 1.0)`; a constant nonzero difference gives an infinite statistic and p = 0.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<(Option<f64>, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Contract(format!("paired t-test needs equal samples of size >= 2, got {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            (None, 1.0)
        } else {
            (Some(mean.signum() * f64::INFINITY), 0.0)
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok((Some(t), p))
}

pub fn bonferroni_significant(p: f64, n_comparisons: usize) -> bool {
    p < ALPHA / n_comparisons.max(1) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub test: String,
    pub a: String,
    pub b: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub t_statistic: Option<f64>,
    pub p_value: f64,
    pub n_comparisons: usize,
    pub adjusted_alpha: f64,
    pub significant: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Compares two per-fold score vectors that share one fold split.
pub fn compare_folds(a_name: &str, a: &[f64], b_name: &str, b: &[f64], n_comparisons: usize) -> Result<Significance> {
    let (t, p) = paired_t_test(a, b)?;
    let note = match t {
        None => Some("no difference: identical fold scores".to_string()),
        Some(t) if t.is_infinite() => Some("zero variance of fold differences".to_string()),
        Some(_) => None,
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Significance {
        test: TEST_NAME.into(),
        a: a_name.into(),
        b: b_name.into(),
        mean_a: mean(a),
        mean_b: mean(b),
        t_statistic: t.filter(|t| t.is_finite()),
        p_value: p,
        n_comparisons,
        adjusted_alpha: ALPHA / n_comparisons.max(1) as f64,
        significant: bonferroni_significant(p, n_comparisons),
        note,
    })
}
