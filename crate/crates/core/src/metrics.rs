//! Binary classification metrics. The positive class is label 1.
//!
//! Any ratio with a zero denominator is reported as 0, except accuracy on
//! an empty evaluation, which is an error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorio::LabelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The matrix obtained by swapping truth and prediction.
    pub fn transposed(&self) -> Self {
        ConfusionMatrix {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

pub fn confusion(y_true: &LabelVector, y_pred: &LabelVector) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::contract(format!(
            "{} true labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut c = ConfusionMatrix::default();
    for (i, (&t, &p)) in y_true.as_slice().iter().zip(y_pred.as_slice()).enumerate() {
        match (t, p) {
            (1, 1) => c.tp += 1,
            (0, 1) => c.fp += 1,
            (1, 0) => c.fn_ += 1,
            (0, 0) => c.tn += 1,
            _ => {
                return Err(Error::contract(format!(
                    "row {i}: labels must be 0 or 1, got truth {t}, prediction {p}"
                )))
            }
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn accuracy(c: &ConfusionMatrix) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::contract("accuracy of an empty evaluation"));
    }
    Ok(ratio(c.tp + c.tn, c.total()))
}

pub fn precision(c: &ConfusionMatrix) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn recall(c: &ConfusionMatrix) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn f1(c: &ConfusionMatrix) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Everything the run report prints about an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn evaluate(y_true: &LabelVector, y_pred: &LabelVector) -> Result<Evaluation> {
    let c = confusion(y_true, y_pred)?;
    Ok(Evaluation {
        confusion: c,
        accuracy: accuracy(&c)?,
        precision: precision(&c),
        recall: recall(&c),
        f1: f1(&c),
    })
}
