//! Group-conditional unbiased regression.
//!
//! The linear variant adds a per-group offset to the raw score, with offsets
//! chosen by least squares on the residual `y - p`. Its normal equations are
//! exactly the per-group zero-mean-residual conditions on the training split.
//! The logistic variant fits `sigmoid(w0 + w1 * logit(p) + sum_g lambda_g g(x))`
//! by cross-entropy.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logistic::{fit_logistic, SolverOptions};
use super::platt::require_both_classes;
use super::{clamped_logit, sigmoid, FitData};
use crate::error::{Error, Result};

const TIKHONOV: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcurVariant {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub intercept: f64,
    pub score_coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcurModel {
    pub variant: GcurVariant,
    pub group_names: Vec<String>,
    /// One coefficient per group; zero for groups dropped at fit time.
    pub lambdas: Vec<f64>,
    pub logistic: Option<LogisticHead>,
    /// Groups without training members, excluded from the fit.
    pub dropped: Vec<String>,
    /// Sets of fitted columns that were linearly dependent; the damped solve
    /// returns the minimum-norm combination for them.
    pub collinear: Vec<Vec<String>>,
}

impl GcurModel {
    fn group_sum(&self, row: &[bool]) -> f64 {
        self.lambdas
            .iter()
            .zip(row)
            .filter(|(_, m)| **m)
            .map(|(l, _)| l)
            .sum()
    }

    pub fn apply(&self, p: f64, row: &[bool]) -> f64 {
        match (self.variant, self.logistic) {
            (GcurVariant::Logistic, Some(head)) => {
                sigmoid(head.intercept + head.score_coef * clamped_logit(p) + self.group_sum(row))
            }
            _ => (p + self.group_sum(row)).clamp(0.0, 1.0),
        }
    }
}

fn active_columns(train: &FitData<'_>) -> (Vec<usize>, Vec<String>) {
    let groups = train.groups;
    let mut active = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..groups.n_groups() {
        if groups.is_degenerate(j) {
            dropped.push(groups.names()[j].clone());
        } else {
            active.push(j);
        }
    }
    (active, dropped)
}

/// For each column that lies in the span of earlier independent columns, the
/// set formed by those columns plus it. Rank is tested on Gram sub-matrices.
fn dependent_sets(gram: &DMatrix<f64>, names: &[String]) -> Vec<Vec<String>> {
    let k = gram.nrows();
    let scale = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut basis: Vec<usize> = Vec::new();
    let mut sets = Vec::new();
    for j in 0..k {
        let idx: Vec<usize> = basis.iter().copied().chain([j]).collect();
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])]);
        let sv = sub.singular_values();
        let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 1e-9 * scale {
            let mut set: Vec<String> = basis.iter().map(|&b| names[b].clone()).collect();
            set.push(names[j].clone());
            sets.push(set);
        } else {
            basis.push(j);
        }
    }
    sets
}

/// Least-squares group offsets on the residual `y - p` (the LINR variant).
pub fn fit_gcur_linear(train: FitData<'_>) -> Result<GcurModel> {
    if train.is_empty() {
        return Err(Error::EmptyInput("gcur linear"));
    }
    let (active, dropped) = active_columns(&train);
    let names = train.groups.names();
    let n = train.len() as f64;
    let k = active.len();

    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for (i, (p, y)) in train.scores.iter().zip(train.labels).enumerate() {
        let row = train.groups.row(i);
        let r = f64::from(u8::from(*y)) - p;
        for (a, &ja) in active.iter().enumerate() {
            if !row[ja] {
                continue;
            }
            rhs[a] += r;
            for (b, &jb) in active.iter().enumerate() {
                if row[jb] {
                    gram[(a, b)] += 1.0;
                }
            }
        }
    }
    gram /= n;
    rhs /= n;

    let active_names: Vec<String> = active.iter().map(|&j| names[j].clone()).collect();
    let collinear = dependent_sets(&gram, &active_names);

    let mut damped = gram.clone();
    for a in 0..k {
        damped[(a, a)] += TIKHONOV;
    }
    let solution = match damped.cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            return Err(Error::RankDeficient(
                collinear.into_iter().flatten().collect::<Vec<_>>(),
            ))
        }
    };
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::RankDeficient(collinear.into_iter().flatten().collect()));
    }

    let mut lambdas = vec![0.0; names.len()];
    for (a, &j) in active.iter().enumerate() {
        lambdas[j] = solution[a];
    }
    Ok(GcurModel {
        variant: GcurVariant::Linear,
        group_names: names.to_vec(),
        lambdas,
        logistic: None,
        dropped,
        collinear,
    })
}

/// Logistic regression on `[1, logit(p), group indicators]` (the LOGR variant).
pub fn fit_gcur_logistic(train: FitData<'_>, ridge: f64) -> Result<GcurModel> {
    require_both_classes(train.labels)?;
    let (active, dropped) = active_columns(&train);
    let names = train.groups.names();
    let rows: Vec<Vec<f64>> = train
        .scores
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let row = train.groups.row(i);
            let mut x = Vec::with_capacity(active.len() + 2);
            x.push(1.0);
            x.push(clamped_logit(*p));
            x.extend(active.iter().map(|&j| if row[j] { 1.0 } else { 0.0 }));
            x
        })
        .collect();
    let fit = fit_logistic(
        &rows,
        train.labels,
        SolverOptions {
            ridge,
            ..SolverOptions::default()
        },
    );
    let mut lambdas = vec![0.0; names.len()];
    for (a, &j) in active.iter().enumerate() {
        lambdas[j] = fit.weights[a + 2];
    }
    Ok(GcurModel {
        variant: GcurVariant::Logistic,
        group_names: names.to_vec(),
        lambdas,
        logistic: Some(LogisticHead {
            intercept: fit.weights[0],
            score_coef: fit.weights[1],
        }),
        dropped,
        collinear: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{GroupCategory, GroupSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn groups(names: &[&str], rows: Vec<Vec<bool>>) -> GroupSet {
        GroupSet::new(
            names.iter().map(|s| s.to_string()).collect(),
            vec![GroupCategory::Custom; names.len()],
            rows,
        )
        .unwrap()
    }

    #[test]
    fn single_group_offset_is_mean_residual() {
        let scores = vec![0.5; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 6).collect();
        let gs = GroupSet::all_ones(10);
        let m = fit_gcur_linear(FitData::new(&scores, &labels, &gs).unwrap()).unwrap();
        assert!((m.lambdas[0] - 0.1).abs() < 1e-8);
        assert!((m.apply(0.5, &[true]) - 0.6).abs() < 1e-8);
    }

    #[test]
    fn disjoint_groups_get_their_own_residuals() {
        // Group a: scores 0.5, accuracy 0.7. Group b: scores 0.6, accuracy 0.5.
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for i in 0..10 {
            scores.push(0.5);
            labels.push(i < 7);
            rows.push(vec![true, false]);
        }
        for i in 0..10 {
            scores.push(0.6);
            labels.push(i < 5);
            rows.push(vec![false, true]);
        }
        let gs = groups(&["a", "b"], rows);
        let m = fit_gcur_linear(FitData::new(&scores, &labels, &gs).unwrap()).unwrap();
        assert!((m.lambdas[0] - 0.2).abs() < 1e-8);
        assert!((m.lambdas[1] + 0.1).abs() < 1e-8);
        assert!(m.collinear.is_empty());
    }

    #[test]
    fn unbiased_data_gives_zero_offsets() {
        let scores = vec![0.25, 0.25, 0.25, 0.25, 0.5, 0.5];
        let labels = vec![true, false, false, false, true, false];
        let gs = GroupSet::all_ones(6);
        let m = fit_gcur_linear(FitData::new(&scores, &labels, &gs).unwrap()).unwrap();
        assert!(m.lambdas[0].abs() < 1e-9);
    }

    #[test]
    fn clamps_outputs() {
        let m = GcurModel {
            variant: GcurVariant::Linear,
            group_names: vec!["ALL".into()],
            lambdas: vec![0.1],
            logistic: None,
            dropped: vec![],
            collinear: vec![],
        };
        assert!((m.apply(0.85, &[true]) - 0.95).abs() < 1e-12);
        assert_eq!(m.apply(0.95 + 1e-9, &[true]), 1.0);
        assert_eq!(m.apply(0.5, &[false]), 0.5);
    }

    #[test]
    fn collinear_columns_are_reported_and_still_unbiased() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400;
        let rows: Vec<Vec<bool>> = (0..n)
            .map(|i| {
                let a = i % 2 == 0;
                vec![true, a, !a]
            })
            .collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..0.6)).collect();
        let labels: Vec<bool> = (0..n).map(|i| rng.gen::<f64>() < if i % 2 == 0 { 0.75 } else { 0.3 }).collect();
        let gs = groups(&["ALL", "even", "odd"], rows);
        let m = fit_gcur_linear(FitData::new(&scores, &labels, &gs).unwrap()).unwrap();
        assert_eq!(m.collinear.len(), 1);
        assert_eq!(m.collinear[0], ["ALL", "even", "odd"]);
        for j in 0..3 {
            let (mut sum, mut cnt) = (0.0, 0.0);
            for i in 0..n {
                if gs.row(i)[j] {
                    let y = if labels[i] { 1.0 } else { 0.0 };
                    sum += y - m.apply(scores[i], gs.row(i));
                    cnt += 1.0;
                }
            }
            assert!((sum / cnt).abs() < 1e-8, "group {j}: {}", sum / cnt);
        }
    }

    #[test]
    fn degenerate_groups_dropped() {
        let scores = vec![0.4, 0.6];
        let labels = vec![true, false];
        let gs = groups(&["a", "none"], vec![vec![true, false], vec![true, false]]);
        let m = fit_gcur_linear(FitData::new(&scores, &labels, &gs).unwrap()).unwrap();
        assert_eq!(m.dropped, ["none"]);
        assert_eq!(m.lambdas[1], 0.0);
    }

    #[test]
    fn logistic_identity_weights() {
        let m = GcurModel {
            variant: GcurVariant::Logistic,
            group_names: vec!["g".into()],
            lambdas: vec![0.0],
            logistic: Some(LogisticHead {
                intercept: 0.0,
                score_coef: 1.0,
            }),
            dropped: vec![],
            collinear: vec![],
        };
        assert!((m.apply(0.3, &[true]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn logistic_recovers_group_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let p: f64 = rng.gen_range(0.1..0.9);
            let member = rng.gen_bool(0.5);
            let z = clamped_logit(p) + if member { 1.0 } else { 0.0 };
            scores.push(p);
            labels.push(rng.gen::<f64>() < sigmoid(z));
            rows.push(vec![member]);
        }
        let gs = groups(&["shifted"], rows);
        let m = fit_gcur_logistic(FitData::new(&scores, &labels, &gs).unwrap(), 1e-6).unwrap();
        assert!((m.lambdas[0] - 1.0).abs() < 0.1, "lambda = {}", m.lambdas[0]);
        let head = m.logistic.unwrap();
        assert!(head.score_coef > 0.0);
    }

    #[test]
    fn logistic_all_positive_group_raises_mean() {
        let n = 200;
        let scores = vec![0.5; n];
        let rows: Vec<Vec<bool>> = (0..n).map(|i| vec![i < 50]).collect();
        let labels: Vec<bool> = (0..n).map(|i| i < 50 || i % 2 == 0).collect();
        let gs = groups(&["winners"], rows);
        let m = fit_gcur_logistic(FitData::new(&scores, &labels, &gs).unwrap(), 1e-6).unwrap();
        let out: Vec<f64> = (0..n).map(|i| m.apply(scores[i], gs.row(i))).collect();
        let global = out.iter().sum::<f64>() / n as f64;
        let group = out[..50].iter().sum::<f64>() / 50.0;
        assert!(group > global);
        assert!(matches!(
            fit_gcur_logistic(FitData::new(&scores, &vec![true; n], &gs).unwrap(), 1e-6),
            Err(Error::SingleClass(1))
        ));
    }
}
