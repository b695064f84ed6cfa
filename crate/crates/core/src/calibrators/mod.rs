//! Post-hoc calibrators: Platt scaling, histogram binning, group-conditional
//! unbiased regression (linear and logistic), and the two iterative grouped
//! binning methods.
//!
//! Every fitted model is immutable and applies as a pure function of a raw
//! score and the sample's group-membership row.

mod gcur;
mod histogram;
mod iterative;
pub mod logistic;
mod platt;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gcur::{fit_gcur_linear, fit_gcur_logistic, GcurModel, GcurVariant, LogisticHead};
pub use histogram::{fit_histogram_binning, HistogramBinningModel};
pub use iterative::{fit_ighb, fit_iglb, IterativeKind, IterativePatchModel, Patch, StopReason};
pub use logistic::LinkLoss;
pub use platt::{fit_platt, PlattModel};

use crate::binning::BinGrid;
use crate::error::{Error, Result};
use crate::groups::GroupSet;

pub const LOGIT_CLAMP: f64 = 1e-6;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `logit(p)` with `p` clamped into `[1e-6, 1 - 1e-6]`.
pub fn clamped_logit(p: f64) -> f64 {
    let p = p.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Platt,
    Hb,
    Linr,
    Logr,
    Ighb,
    Iglb,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Platt,
        Method::Hb,
        Method::Linr,
        Method::Logr,
        Method::Ighb,
        Method::Iglb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Platt => "platt",
            Method::Hb => "hb",
            Method::Linr => "linr",
            Method::Logr => "logr",
            Method::Ighb => "ighb",
            Method::Iglb => "iglb",
        }
    }

    pub fn uses_groups(self) -> bool {
        !matches!(self, Method::Platt | Method::Hb)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown calibration method {s:?}")))
    }
}

/// Scores, labels and group rows of one split.
#[derive(Debug, Clone, Copy)]
pub struct FitData<'a> {
    pub scores: &'a [f64],
    pub labels: &'a [bool],
    pub groups: &'a GroupSet,
}

impl<'a> FitData<'a> {
    pub fn new(scores: &'a [f64], labels: &'a [bool], groups: &'a GroupSet) -> Result<Self> {
        if scores.len() != labels.len() || groups.n_samples() != scores.len() {
            return Err(Error::RowMismatch {
                expected: scores.len(),
                got: if labels.len() != scores.len() {
                    labels.len()
                } else {
                    groups.n_samples()
                },
            });
        }
        if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(*bad));
        }
        Ok(Self {
            scores,
            labels,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub grid: BinGrid,
    /// Multicalibration tolerance for IGHB; `None` means `1/M`.
    pub ighb_alpha: Option<f64>,
    pub max_iters: usize,
    pub iglb_epsilon: f64,
    pub ls_loss: LinkLoss,
    pub ridge: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            grid: BinGrid::default(),
            ighb_alpha: None,
            max_iters: 1000,
            iglb_epsilon: 0.05,
            ls_loss: LinkLoss::CrossEntropy,
            ridge: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn alpha(&self) -> f64 {
        self.ighb_alpha.unwrap_or(1.0 / self.grid.m_bins() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CalibratorModel {
    Platt(PlattModel),
    Hb(HistogramBinningModel),
    Linr(GcurModel),
    Logr(GcurModel),
    Ighb(IterativePatchModel),
    Iglb(IterativePatchModel),
}

fn check_arity(names: &[String], row: &[bool]) -> Result<()> {
    if names.len() != row.len() {
        return Err(Error::Arity {
            expected: names.len(),
            got: row.len(),
        });
    }
    Ok(())
}

impl CalibratorModel {
    pub fn method(&self) -> Method {
        match self {
            Self::Platt(_) => Method::Platt,
            Self::Hb(_) => Method::Hb,
            Self::Linr(_) => Method::Linr,
            Self::Logr(_) => Method::Logr,
            Self::Ighb(_) => Method::Ighb,
            Self::Iglb(_) => Method::Iglb,
        }
    }

    /// Group names the model was fitted against; empty for group-agnostic methods.
    pub fn group_names(&self) -> &[String] {
        match self {
            Self::Platt(_) | Self::Hb(_) => &[],
            Self::Linr(m) | Self::Logr(m) => &m.group_names,
            Self::Ighb(m) | Self::Iglb(m) => &m.group_names,
        }
    }

    /// Calibrated score for one sample. Group-agnostic models ignore `row`.
    pub fn apply(&self, p: f64, row: &[bool]) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(p));
        }
        if self.method().uses_groups() {
            check_arity(self.group_names(), row)?;
        }
        Ok(match self {
            Self::Platt(m) => m.apply(p),
            Self::Hb(m) => m.apply(p),
            Self::Linr(m) | Self::Logr(m) => m.apply(p, row),
            Self::Ighb(m) | Self::Iglb(m) => m.apply(p, row),
        })
    }

    pub fn apply_all(&self, scores: &[f64], groups: &GroupSet) -> Result<Vec<f64>> {
        if groups.n_samples() != scores.len() {
            return Err(Error::RowMismatch {
                expected: scores.len(),
                got: groups.n_samples(),
            });
        }
        if self.method().uses_groups() && groups.names() != self.group_names() {
            if groups.n_groups() != self.group_names().len() {
                return Err(Error::Arity {
                    expected: self.group_names().len(),
                    got: groups.n_groups(),
                });
            }
            return Err(Error::Config(format!(
                "group columns {:?} do not match the model's {:?}",
                groups.names(),
                self.group_names()
            )));
        }
        scores
            .iter()
            .enumerate()
            .map(|(i, p)| self.apply(*p, groups.row(i)))
            .collect()
    }
}

/// Fits one calibrator. `val` is only consulted by IGLB, which requires it.
pub fn fit(method: Method, train: FitData<'_>, val: Option<FitData<'_>>, cfg: &FitConfig) -> Result<CalibratorModel> {
    Ok(match method {
        Method::Platt => CalibratorModel::Platt(fit_platt(train.scores, train.labels, cfg.ridge)?),
        Method::Hb => CalibratorModel::Hb(fit_histogram_binning(train.scores, train.labels, cfg.grid)?),
        Method::Linr => CalibratorModel::Linr(fit_gcur_linear(train)?),
        Method::Logr => CalibratorModel::Logr(fit_gcur_logistic(train, cfg.ridge)?),
        Method::Ighb => CalibratorModel::Ighb(fit_ighb(train, cfg)?),
        Method::Iglb => {
            let val = val.ok_or(Error::EmptyInput("iglb validation split"))?;
            CalibratorModel::Iglb(fit_iglb(train, val, cfg)?)
        }
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub model: CalibratorModel,
}

impl ModelDocument {
    pub fn new(model: CalibratorModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported model format version {}",
                doc.format_version
            )));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_clamp() {
        assert_eq!(clamped_logit(0.5), 0.0);
        let top = clamped_logit(1.0);
        assert!((top - ((1.0 - 1e-6) / 1e-6f64).ln()).abs() < 1e-9);
        assert!((top - 13.815_509_557_963_773).abs() < 1e-9);
        assert!((clamped_logit(0.0) + top).abs() < 1e-9);
        for p in [1e-6, 0.001, 0.2, 0.5, 0.77, 0.999, 1.0 - 1e-6] {
            assert!((sigmoid(clamped_logit(p)) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("isotonic".parse::<Method>().is_err());
    }
}
