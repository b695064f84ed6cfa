use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, SolverOptions};
use super::{sigmoid, LOGIT_CLAMP};
use crate::error::{Error, Result};

/// `sigmoid(a * ln(p) + b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattModel {
    pub a: f64,
    pub b: f64,
}

impl PlattModel {
    pub fn apply(&self, p: f64) -> f64 {
        sigmoid(self.a * p.max(LOGIT_CLAMP).ln() + self.b)
    }
}

pub(crate) fn require_both_classes(labels: &[bool]) -> Result<()> {
    match labels.first() {
        None => Err(Error::EmptyInput("calibration training set")),
        Some(&first) if labels.iter().all(|l| *l == first) => Err(Error::SingleClass(u8::from(first))),
        _ => Ok(()),
    }
}

/// Logistic regression of the labels on `ln(p)`.
pub fn fit_platt(scores: &[f64], labels: &[bool], ridge: f64) -> Result<PlattModel> {
    require_both_classes(labels)?;
    let rows: Vec<Vec<f64>> = scores.iter().map(|p| vec![p.max(LOGIT_CLAMP).ln(), 1.0]).collect();
    let fit = fit_logistic(
        &rows,
        labels,
        SolverOptions {
            ridge,
            ..SolverOptions::default()
        },
    );
    Ok(PlattModel {
        a: fit.weights[0],
        b: fit.weights[1],
    })
}
