use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::{GraphInput, Model};
use crate::numkit::ParamSet;

/// Predicted class; ties go to class 0.
pub fn argmax(logits: [f64; 2]) -> usize {
    usize::from(logits[1] > logits[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Macro-averaged over both classes.
    pub precision: f64,
    pub recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_class_f1: [f64; 2],
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
    /// Whether some per-class ratio had a zero denominator and was set to 0.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(labels: &[usize], preds: &[usize]) -> Result<Metrics> {
    if labels.len() != preds.len() || labels.is_empty() {
        return Err(Error::Contract(format!("{} labels vs {} predictions", labels.len(), preds.len())));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&l, &p) in labels.iter().zip(preds) {
        if l > 1 || p > 1 {
            return Err(Error::Input("labels and predictions must be 0 or 1".into()));
        }
        confusion[l][p] += 1;
    }
    let mut zero_division = false;
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    let mut f1 = [0.0; 2];
    for c in 0..2 {
        let tp = confusion[c][c];
        let fp = confusion[1 - c][c];
        let fn_ = confusion[c][1 - c];
        p_sum += ratio(tp, tp + fp, &mut zero_division);
        r_sum += ratio(tp, tp + fn_, &mut zero_division);
        f1[c] = ratio(2 * tp, 2 * tp + fp + fn_, &mut zero_division);
    }
    Ok(Metrics {
        precision: p_sum / 2.0,
        recall: r_sum / 2.0,
        macro_f1: (f1[0] + f1[1]) / 2.0,
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / labels.len() as f64,
        per_class_f1: f1,
        confusion,
        zero_division,
    })
}

pub fn predict(model: &Model, params: &ParamSet, graphs: &[&GraphInput]) -> Result<Vec<usize>> {
    graphs.iter().map(|g| model.logits(params, g).map(argmax)).collect()
}

pub fn evaluate(model: &Model, params: &ParamSet, graphs: &[&GraphInput]) -> Result<Metrics> {
    let preds = predict(model, params, graphs)?;
    let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
    compute_metrics(&labels, &preds)
}
