//! Central finite-difference gradient checking.
//!
//! The numeric side only evaluates the loss function; it never touches the
//! tape's backward rules, so it serves as an independent oracle for them.

use crate::error::Result;

use super::adam::ParamSet;

/// Outcome of comparing analytic and numeric gradients entry by entry.
#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub passed: usize,
    pub max_rel_error: f64,
    /// Up to ten `(parameter, flat index, analytic, numeric)` failures.
    pub worst: Vec<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.passed as f64 / self.checked as f64
        }
    }
}

/// Relative error with an absolute floor so that two vanishing gradients agree.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < 1e-9 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Perturbs every entry of `params` by `±step` and compares the central
/// difference of `loss` with `analytic`.
pub fn check_params<F>(
    params: &ParamSet,
    analytic: &ParamSet,
    step: f64,
    tolerance: f64,
    mut loss: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    let names: Vec<String> = params.names().cloned().collect();
    for name in names {
        let n = params.get(&name).map_or(0, |t| t.len());
        for i in 0..n {
            let original = params.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = original + step;
            let plus = loss(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = original - step;
            let minus = loss(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(&name).map_or(0.0, |t| t.data()[i]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(err);
            if err <= tolerance {
                report.passed += 1;
            } else if report.worst.len() < 10 {
                report.worst.push((name.clone(), i, a, numeric));
            }
        }
    }
    Ok(report)
}
