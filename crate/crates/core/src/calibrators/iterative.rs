//! Iterative grouped binning: IGHB (additive shifts on disjoint group/bin
//! cells) and IGLB (logit-linear patches on overlapping one-sided bins with
//! validation early stopping).
//!
//! Both start from grid-rounded scores and re-round after every patch. A
//! sample's trajectory depends only on its own score and membership row, so
//! applying a model replays the recorded patches one by one and reproduces the
//! training trajectory exactly.

use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, SolverOptions};
use super::{clamped_logit, sigmoid, FitConfig, FitData};
use crate::binning::{BinGrid, Side};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterativeKind {
    Ighb,
    Iglb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Patch {
    /// Add `delta` to members of `group` currently in disjoint bin `bin`.
    Shift { group: usize, bin: usize, delta: f64 },
    /// Map members of `group` on `side` of `bin/M` through `sigmoid(alpha + beta * logit(p))`.
    Linear {
        group: usize,
        bin: usize,
        side: Side,
        alpha: f64,
        beta: f64,
    },
}

impl Patch {
    fn step(&self, grid: &BinGrid, s: f64, row: &[bool]) -> Option<f64> {
        match *self {
            Patch::Shift { group, bin, delta } => (row[group] && grid.bin_of(s) == bin).then(|| {
                let floor = grid.edge(1);
                grid.round_unchecked((s + delta).clamp(floor, 1.0))
            }),
            Patch::Linear {
                group,
                bin,
                side,
                alpha,
                beta,
            } => (row[group] && side.contains(s, grid.edge(bin)))
                .then(|| grid.round_unchecked(sigmoid(alpha + beta * clamped_logit(s)))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// IGHB: every group satisfies the weighted gASCE bound.
    Converged,
    MaxIters,
    /// IGHB: the selected patch moved no score after re-rounding.
    Stalled,
    /// IGLB: the worst region's probability mass fell below epsilon.
    MassBelowEpsilon,
    /// IGLB: the tentative patch did not lower validation Brier.
    ValidationStopped,
    /// IGLB: no region with both labels remained.
    NoCandidate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterativePatchModel {
    pub kind: IterativeKind,
    pub grid: BinGrid,
    pub group_names: Vec<String>,
    pub patches: Vec<Patch>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// IGHB tolerance on `max_g P(g) * gASCE(g)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// IGHB: `max_g P(g) * gASCE(g)` on train when the loop ended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_weighted_gasce: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// IGLB: validation Brier before the first patch and after each accepted one.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub val_brier_trace: Vec<f64>,
    /// IGLB: single-class regions passed over during selection.
    #[serde(default)]
    pub skipped_regions: usize,
}

impl IterativePatchModel {
    pub fn apply(&self, p: f64, row: &[bool]) -> f64 {
        self.patches.iter().fold(self.grid.round_unchecked(p), |s, patch| {
            patch.step(&self.grid, s, row).unwrap_or(s)
        })
    }
}

fn label(y: bool) -> f64 {
    if y {
        1.0
    } else {
        0.0
    }
}

/// Per group, per index `1..=M`: member count and residual sum.
struct CellStats {
    count: Vec<Vec<usize>>,
    residual: Vec<Vec<f64>>,
}

fn cell_stats(
    data: &FitData<'_>,
    scores: &[f64],
    index_of: impl Fn(f64) -> usize,
    m_bins: usize,
) -> CellStats {
    let g = data.groups.n_groups();
    let mut count = vec![vec![0usize; m_bins + 1]; g];
    let mut residual = vec![vec![0.0f64; m_bins + 1]; g];
    for (i, (s, y)) in scores.iter().zip(data.labels).enumerate() {
        let b = index_of(*s);
        let r = label(*y) - s;
        for (j, member) in data.groups.row(i).iter().enumerate() {
            if *member {
                count[j][b] += 1;
                residual[j][b] += r;
            }
        }
    }
    CellStats { count, residual }
}

fn validate_train(train: &FitData<'_>) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyInput("iterative binning training set"));
    }
    Ok(())
}

/// Iterative grouped histogram binning.
pub fn fit_ighb(train: FitData<'_>, cfg: &FitConfig) -> Result<IterativePatchModel> {
    validate_train(&train)?;
    let grid = cfg.grid;
    let m = grid.m_bins();
    let alpha = cfg.alpha();
    let n = train.len() as f64;
    let mut scores: Vec<f64> = train.scores.iter().map(|p| grid.round_unchecked(*p)).collect();
    let mut patches = Vec::new();

    let (stop_reason, final_weighted) = loop {
        let stats = cell_stats(&train, &scores, |s| grid.bin_of(s), m);
        let mut worst_weighted = 0.0f64;
        let mut best: Option<(f64, usize, usize, f64)> = None;
        for (j, (counts, sums)) in stats.count.iter().zip(&stats.residual).enumerate() {
            let mut weighted = 0.0;
            for b in 1..=m {
                if counts[b] == 0 {
                    continue;
                }
                let delta = sums[b] / counts[b] as f64;
                let contribution = counts[b] as f64 / n * delta * delta;
                weighted += contribution;
                if best.is_none_or(|(c, ..)| contribution > c) {
                    best = Some((contribution, j, b, delta));
                }
            }
            worst_weighted = worst_weighted.max(weighted);
        }
        if worst_weighted <= alpha {
            break (StopReason::Converged, worst_weighted);
        }
        if patches.len() >= cfg.max_iters {
            break (StopReason::MaxIters, worst_weighted);
        }
        let Some((_, group, bin, delta)) = best else {
            break (StopReason::Converged, worst_weighted);
        };
        let patch = Patch::Shift { group, bin, delta };
        let mut changed = false;
        for (i, s) in scores.iter_mut().enumerate() {
            if let Some(next) = patch.step(&grid, *s, train.groups.row(i)) {
                changed |= next != *s;
                *s = next;
            }
        }
        if !changed {
            break (StopReason::Stalled, worst_weighted);
        }
        patches.push(patch);
    };

    Ok(IterativePatchModel {
        kind: IterativeKind::Ighb,
        grid,
        group_names: train.groups.names().to_vec(),
        iterations: patches.len(),
        patches,
        converged: stop_reason == StopReason::Converged,
        stop_reason,
        alpha: Some(alpha),
        final_weighted_gasce: Some(final_weighted),
        epsilon: None,
        val_brier_trace: Vec::new(),
        skipped_regions: 0,
    })
}

struct Candidate {
    score: f64,
    mass: f64,
    group: usize,
    bin: usize,
    side: Side,
}

fn brier_of(scores: &[f64], labels: &[bool]) -> f64 {
    scores
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - label(*y)).powi(2))
        .sum::<f64>()
        / scores.len() as f64
}

/// Iterative grouped linear binning with validation early stopping.
pub fn fit_iglb(train: FitData<'_>, val: FitData<'_>, cfg: &FitConfig) -> Result<IterativePatchModel> {
    validate_train(&train)?;
    if val.is_empty() {
        return Err(Error::EmptyInput("iglb validation split"));
    }
    if val.groups.names() != train.groups.names() {
        return Err(Error::Config(
            "validation group columns differ from training group columns".into(),
        ));
    }
    if !(cfg.iglb_epsilon > 0.0) {
        return Err(Error::Config(format!(
            "iglb epsilon must be positive, got {}",
            cfg.iglb_epsilon
        )));
    }
    let grid = cfg.grid;
    let m = grid.m_bins();
    let n = train.len() as f64;
    let solver = SolverOptions {
        ridge: cfg.ridge,
        loss: cfg.ls_loss,
        ..SolverOptions::default()
    };

    let mut scores: Vec<f64> = train.scores.iter().map(|p| grid.round_unchecked(*p)).collect();
    let mut val_scores: Vec<f64> = val.scores.iter().map(|p| grid.round_unchecked(*p)).collect();
    let mut val_brier = brier_of(&val_scores, val.labels);
    let mut trace = vec![val_brier];
    let mut patches = Vec::new();
    let mut skipped = 0usize;

    let stop_reason = loop {
        if patches.len() >= cfg.max_iters {
            break StopReason::MaxIters;
        }
        // Scores are grid values, so one-sided membership is a prefix/suffix over grid indices.
        let stats = cell_stats(&train, &scores, |s| grid.grid_index(s), m);
        let mut candidates = Vec::with_capacity(stats.count.len() * m * 2);
        for (j, (counts, sums)) in stats.count.iter().zip(&stats.residual).enumerate() {
            for b in 1..=m {
                for side in Side::BOTH {
                    let range = match side {
                        Side::AtMost => 1..=b,
                        Side::AtLeast => b..=m,
                    };
                    let (c, r) = range.fold((0usize, 0.0f64), |(c, r), i| (c + counts[i], r + sums[i]));
                    if c == 0 {
                        continue;
                    }
                    let mass = c as f64 / n;
                    let delta = r / c as f64;
                    candidates.push(Candidate {
                        score: mass * delta * delta,
                        mass,
                        group: j,
                        bin: b,
                        side,
                    });
                }
            }
        }
        // Stable sort keeps (group, bin, side) order among ties.
        candidates.sort_by(|a, b| b.score.total_cmp(&a.score));

        let mut chosen = None;
        let mut reason = StopReason::NoCandidate;
        for cand in &candidates {
            if cand.mass < cfg.iglb_epsilon {
                reason = StopReason::MassBelowEpsilon;
                break;
            }
            let threshold = grid.edge(cand.bin);
            let region: Vec<usize> = (0..scores.len())
                .filter(|&i| train.groups.row(i)[cand.group] && cand.side.contains(scores[i], threshold))
                .collect();
            let first = train.labels[region[0]];
            if region.iter().all(|&i| train.labels[i] == first) {
                skipped += 1;
                continue;
            }
            let rows: Vec<Vec<f64>> = region.iter().map(|&i| vec![1.0, clamped_logit(scores[i])]).collect();
            let labels: Vec<bool> = region.iter().map(|&i| train.labels[i]).collect();
            let fit = fit_logistic(&rows, &labels, solver);
            chosen = Some(Patch::Linear {
                group: cand.group,
                bin: cand.bin,
                side: cand.side,
                alpha: fit.weights[0],
                beta: fit.weights[1],
            });
            break;
        }
        let Some(patch) = chosen else {
            break reason;
        };

        let tentative_val: Vec<f64> = val_scores
            .iter()
            .enumerate()
            .map(|(i, s)| patch.step(&grid, *s, val.groups.row(i)).unwrap_or(*s))
            .collect();
        let tentative_brier = brier_of(&tentative_val, val.labels);
        if tentative_brier >= val_brier {
            break StopReason::ValidationStopped;
        }
        for (i, s) in scores.iter_mut().enumerate() {
            if let Some(next) = patch.step(&grid, *s, train.groups.row(i)) {
                *s = next;
            }
        }
        val_scores = tentative_val;
        val_brier = tentative_brier;
        trace.push(val_brier);
        patches.push(patch);
    };

    Ok(IterativePatchModel {
        kind: IterativeKind::Iglb,
        grid,
        group_names: train.groups.names().to_vec(),
        iterations: patches.len(),
        patches,
        converged: stop_reason != StopReason::MaxIters,
        stop_reason,
        alpha: None,
        final_weighted_gasce: None,
        epsilon: Some(cfg.iglb_epsilon),
        val_brier_trace: trace,
        skipped_regions: skipped,
    })
}
