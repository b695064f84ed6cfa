//! Calibration metrics: ECE, Brier score, Brier skill score, accuracy at the
//! 0.5 threshold, per-group gASCE, the multicalibration bound and the
//! reliability table.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::binning::BinGrid;
use crate::error::{Error, Result};
use crate::groups::GroupSet;

fn check_pairs(scores: &[f64], labels: &[bool], what: &'static str) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::RowMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(*bad));
    }
    Ok(())
}

fn y(label: bool) -> f64 {
    if label {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct BinAccumulator {
    count: usize,
    score_sum: f64,
    label_sum: f64,
}

fn accumulate<'a>(
    grid: &BinGrid,
    pairs: impl Iterator<Item = (&'a f64, &'a bool)>,
) -> Vec<BinAccumulator> {
    let mut bins = vec![BinAccumulator::default(); grid.m_bins()];
    for (p, l) in pairs {
        let b = &mut bins[grid.bin_of(*p) - 1];
        b.count += 1;
        b.score_sum += p;
        b.label_sum += y(*l);
    }
    bins
}

/// Expected calibration error; empty bins contribute nothing.
pub fn ece(scores: &[f64], labels: &[bool], grid: &BinGrid) -> Result<f64> {
    check_pairs(scores, labels, "ece")?;
    let n = scores.len() as f64;
    Ok(accumulate(grid, scores.iter().zip(labels))
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let c = b.count as f64;
            (c / n) * (b.label_sum / c - b.score_sum / c).abs()
        })
        .sum())
}

pub fn brier(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_pairs(scores, labels, "brier")?;
    Ok(scores
        .iter()
        .zip(labels)
        .map(|(p, l)| (p - y(*l)).powi(2))
        .sum::<f64>()
        / scores.len() as f64)
}

pub fn base_rate(labels: &[bool]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("base_rate"));
    }
    Ok(labels.iter().filter(|l| **l).count() as f64 / labels.len() as f64)
}

/// Brier skill score. `NegInfinity` is the explicit sentinel for a zero
/// reference score with an imperfect prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bss {
    Finite(f64),
    NegInfinity,
}

impl Bss {
    pub fn value(self) -> f64 {
        match self {
            Bss::Finite(v) => v,
            Bss::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn from_parts(brier: f64, brier_ref: f64) -> Self {
        if brier_ref == 0.0 {
            if brier == 0.0 {
                Bss::Finite(1.0)
            } else {
                Bss::NegInfinity
            }
        } else {
            Bss::Finite((brier_ref - brier) / brier_ref)
        }
    }
}

impl fmt::Display for Bss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bss::Finite(v) => write!(f, "{v}"),
            Bss::NegInfinity => f.write_str("-inf"),
        }
    }
}

impl Serialize for Bss {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bss::Finite(v) => s.serialize_f64(*v),
            Bss::NegInfinity => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Bss {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Bss::Finite(v)),
            Repr::Text(t) if t == "-inf" => Ok(Bss::NegInfinity),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad BSS value {t:?}"))),
        }
    }
}

pub fn bss(scores: &[f64], labels: &[bool]) -> Result<Bss> {
    let b = brier(scores, labels)?;
    let pr = base_rate(labels)?;
    Ok(Bss::from_parts(b, pr * (1.0 - pr)))
}

/// Fraction of samples where `p >= 0.5` agrees with the label.
pub fn accuracy_at_half(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_pairs(scores, labels, "accuracy")?;
    Ok(scores
        .iter()
        .zip(labels)
        .filter(|(p, l)| (**p >= 0.5) == **l)
        .count() as f64
        / scores.len() as f64)
}

/// gASCE of the samples flagged in `members`.
pub fn gasce_of(scores: &[f64], labels: &[bool], members: &[bool], grid: &BinGrid) -> Result<f64> {
    check_pairs(scores, labels, "gasce")?;
    if members.len() != scores.len() {
        return Err(Error::RowMismatch {
            expected: scores.len(),
            got: members.len(),
        });
    }
    let size = members.iter().filter(|m| **m).count();
    if size == 0 {
        return Err(Error::DegenerateGroup(String::new()));
    }
    let bins = accumulate(
        grid,
        scores
            .iter()
            .zip(labels)
            .zip(members)
            .filter(|(_, m)| **m)
            .map(|(pair, _)| pair),
    );
    Ok(bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let c = b.count as f64;
            let delta = (b.label_sum - b.score_sum) / c;
            (c / size as f64) * delta * delta
        })
        .sum())
}

pub fn gasce(scores: &[f64], labels: &[bool], groups: &GroupSet, name: &str, grid: &BinGrid) -> Result<f64> {
    let j = groups
        .index_of(name)
        .ok_or_else(|| Error::UnknownGroup(name.to_string()))?;
    if groups.n_samples() != scores.len() {
        return Err(Error::RowMismatch {
            expected: scores.len(),
            got: groups.n_samples(),
        });
    }
    gasce_of(scores, labels, &groups.column(j), grid).map_err(|e| match e {
        Error::DegenerateGroup(_) => Error::DegenerateGroup(name.to_string()),
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: String,
    pub mass: f64,
    pub gasce: f64,
    /// `mass * gasce`, compared against `alpha`.
    pub weighted: f64,
    pub pass: bool,
    pub degenerate: bool,
}

/// Per-group test of `gASCE(g) < alpha / P(g)`, evaluated as `P(g) * gASCE(g) < alpha`.
/// Groups without members pass vacuously.
pub fn multicalibration_check(
    scores: &[f64],
    labels: &[bool],
    groups: &GroupSet,
    grid: &BinGrid,
    alpha: f64,
) -> Result<Vec<GroupCheck>> {
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    check_pairs(scores, labels, "multicalibration_check")?;
    (0..groups.n_groups())
        .map(|j| {
            let name = groups.names()[j].clone();
            let mass = groups.masses()[j];
            if groups.is_degenerate(j) {
                return Ok(GroupCheck {
                    group: name,
                    mass,
                    gasce: 0.0,
                    weighted: 0.0,
                    pass: true,
                    degenerate: true,
                });
            }
            let g = gasce_of(scores, labels, &groups.column(j), grid)?;
            Ok(GroupCheck {
                group: name,
                mass,
                gasce: g,
                weighted: mass * g,
                pass: mass * g < alpha,
                degenerate: false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin: usize,
    pub count: usize,
    pub conf: f64,
    pub acc: f64,
}

/// One row per occupied bin, in bin order.
pub fn reliability_table(scores: &[f64], labels: &[bool], grid: &BinGrid) -> Result<Vec<ReliabilityRow>> {
    check_pairs(scores, labels, "reliability_table")?;
    Ok(accumulate(grid, scores.iter().zip(labels))
        .iter()
        .enumerate()
        .filter(|(_, b)| b.count > 0)
        .map(|(i, b)| ReliabilityRow {
            bin: i + 1,
            count: b.count,
            conf: b.score_sum / b.count as f64,
            acc: b.label_sum / b.count as f64,
        })
        .collect())
}

pub fn reliability_csv(rows: &[ReliabilityRow]) -> String {
    let mut out = String::from("bin,count,conf,acc\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.bin, r.count, r.conf, r.acc));
    }
    out
}

/// Mean score and accuracy inside one group, for group-level scatter plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub mass: f64,
    pub count: usize,
    pub mean_score: Option<f64>,
    pub accuracy: Option<f64>,
    pub gasce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n: usize,
    pub m_bins: usize,
    pub ece: f64,
    pub brier: f64,
    pub brier_ref: f64,
    pub bss: Bss,
    pub accuracy: f64,
    pub base_rate: f64,
    /// gASCE of every non-degenerate group.
    pub per_group_gasce: BTreeMap<String, f64>,
    pub groups: Vec<GroupSummary>,
    pub reliability: Vec<ReliabilityRow>,
}

impl EvalReport {
    pub fn compute(
        method: &str,
        scores: &[f64],
        labels: &[bool],
        groups: Option<&GroupSet>,
        grid: &BinGrid,
    ) -> Result<Self> {
        check_pairs(scores, labels, "evaluate")?;
        let b = brier(scores, labels)?;
        let pr = base_rate(labels)?;
        let brier_ref = pr * (1.0 - pr);
        let mut per_group_gasce = BTreeMap::new();
        let mut summaries = Vec::new();
        if let Some(gs) = groups {
            if gs.n_samples() != scores.len() {
                return Err(Error::RowMismatch {
                    expected: scores.len(),
                    got: gs.n_samples(),
                });
            }
            for j in 0..gs.n_groups() {
                let name = gs.names()[j].clone();
                let col = gs.column(j);
                let count = col.iter().filter(|m| **m).count();
                let (mean_score, accuracy, g) = if count == 0 {
                    (None, None, None)
                } else {
                    let (ssum, lsum) = scores
                        .iter()
                        .zip(labels)
                        .zip(&col)
                        .filter(|(_, m)| **m)
                        .fold((0.0, 0.0), |(s, l), ((p, y_), _)| (s + p, l + y(*y_)));
                    let g = gasce_of(scores, labels, &col, grid)?;
                    per_group_gasce.insert(name.clone(), g);
                    (Some(ssum / count as f64), Some(lsum / count as f64), Some(g))
                };
                summaries.push(GroupSummary {
                    group: name,
                    mass: gs.masses()[j],
                    count,
                    mean_score,
                    accuracy,
                    gasce: g,
                });
            }
        }
        Ok(Self {
            method: method.to_string(),
            n: scores.len(),
            m_bins: grid.m_bins(),
            ece: ece(scores, labels, grid)?,
            brier: b,
            brier_ref,
            bss: Bss::from_parts(b, brier_ref),
            accuracy: accuracy_at_half(scores, labels)?,
            base_rate: pr,
            per_group_gasce,
            groups: summaries,
            reliability: reliability_table(scores, labels, grid)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::GroupCategory;

    fn g(m: usize) -> BinGrid {
        BinGrid::new(m).unwrap()
    }

    #[test]
    fn ece_examples() {
        let e = ece(&[0.7, 0.7], &[true, false], &g(10)).unwrap();
        assert!((e - 0.2).abs() < 1e-12);
        let e = ece(&[0.7, 0.7, 0.7], &[true, true, false], &g(10)).unwrap();
        assert!((e - (0.7 - 2.0 / 3.0)).abs() < 1e-12);
        assert_eq!(ece(&[1.0, 1.0], &[true, true], &g(20)).unwrap(), 0.0);
        assert!(matches!(ece(&[], &[], &g(20)), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[1.0, 0.0], &[true, false]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5; 4], &[true, false, false, true]).unwrap(), 0.25);
        assert_eq!(brier(&[0.5; 3], &[true, true, true]).unwrap(), 0.25);
        assert_eq!(brier(&[1.0], &[false]).unwrap(), 1.0);
        assert!(brier(&[], &[]).is_err());
        assert!(matches!(brier(&[1.2], &[true]), Err(Error::Domain(_))));
    }

    #[test]
    fn bss_examples() {
        let labels = [true, false, true, true];
        let pr = 0.75;
        assert_eq!(bss(&[pr; 4], &labels).unwrap(), Bss::Finite(0.0));
        assert_eq!(bss(&[1.0, 1.0], &[true, true]).unwrap(), Bss::Finite(1.0));
        assert_eq!(bss(&[0.0, 0.0], &[false, false]).unwrap(), Bss::Finite(1.0));
        assert_eq!(bss(&[0.9, 1.0], &[true, true]).unwrap(), Bss::NegInfinity);
        assert_eq!(Bss::NegInfinity.value(), f64::NEG_INFINITY);
    }

    #[test]
    fn bss_serializes_sentinel() {
        assert_eq!(serde_json::to_string(&Bss::NegInfinity).unwrap(), "\"-inf\"");
        assert_eq!(serde_json::to_string(&Bss::Finite(0.25)).unwrap(), "0.25");
        let back: Bss = serde_json::from_str("\"-inf\"").unwrap();
        assert_eq!(back, Bss::NegInfinity);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy_at_half(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(accuracy_at_half(&[0.5], &[false]).unwrap(), 0.0);
        assert_eq!(accuracy_at_half(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    }

    fn single_group(n: usize) -> GroupSet {
        GroupSet::all_ones(n)
    }

    #[test]
    fn gasce_examples() {
        // All scores in one bin with mean residual 0.2.
        let scores = [0.4, 0.4, 0.4, 0.4, 0.4];
        let labels = [true, true, true, false, false];
        let v = gasce(&scores, &labels, &single_group(5), "ALL", &g(20)).unwrap();
        assert!((v - 0.04).abs() < 1e-12);

        // Calibrated within every occupied bin.
        let scores = [0.5, 0.5, 0.25, 0.25, 0.25, 0.25];
        let labels = [true, false, true, false, false, false];
        assert!(gasce(&scores, &labels, &single_group(6), "ALL", &g(20)).unwrap().abs() < 1e-15);

        // Two bins, residual means 0.1 and -0.3.
        let scores = [0.4, 0.4, 0.8, 0.8];
        let labels = [true, false, true, false];
        let v = gasce(&scores, &labels, &single_group(4), "ALL", &g(20)).unwrap();
        assert!((v - 0.05).abs() < 1e-12);
    }

    #[test]
    fn gasce_errors() {
        let gs = GroupSet::new(
            vec!["a".into()],
            vec![GroupCategory::Custom],
            vec![vec![false], vec![false]],
        )
        .unwrap();
        assert!(matches!(
            gasce(&[0.1, 0.2], &[true, false], &gs, "a", &g(20)),
            Err(Error::DegenerateGroup(n)) if n == "a"
        ));
        assert!(matches!(
            gasce(&[0.1, 0.2], &[true, false], &gs, "b", &g(20)),
            Err(Error::UnknownGroup(_))
        ));
    }

    #[test]
    fn multicalibration_examples() {
        let scores = [0.5, 0.5];
        let labels = [true, false];
        let checks = multicalibration_check(&scores, &labels, &single_group(2), &g(20), 1e-9).unwrap();
        assert!(checks.iter().all(|c| c.pass));

        // Mass 1 and gASCE 0.06 against alpha 0.05 fails: residual sqrt(0.06) in one bin.
        let r = 0.06f64.sqrt();
        let labels: Vec<bool> = (0..100).map(|i| (i as f64) < 100.0 * (0.3 + r)).collect();
        let mean_y = labels.iter().filter(|l| **l).count() as f64 / 100.0;
        let p = mean_y - r;
        let scores = vec![p; 100];
        let checks = multicalibration_check(&scores, &labels, &single_group(100), &g(20), 0.05).unwrap();
        assert!((checks[0].gasce - 0.06).abs() < 1e-12);
        assert!(!checks[0].pass);

        // Mass 0.1 group with gASCE 0.3 passes at alpha 0.05.
        let r = 0.3f64.sqrt();
        let mut rows = vec![vec![false]; 100];
        for row in rows.iter_mut().take(10) {
            row[0] = true;
        }
        let gs = GroupSet::new(vec!["small".into()], vec![GroupCategory::Custom], rows).unwrap();
        let mut labels = vec![false; 100];
        labels[..10].iter_mut().for_each(|l| *l = true);
        let mut scores = vec![0.0; 100];
        scores[..10].iter_mut().for_each(|s| *s = 1.0 - r);
        let checks = multicalibration_check(&scores, &labels, &gs, &g(20), 0.05).unwrap();
        assert!((checks[0].gasce - 0.3).abs() < 1e-12);
        assert!((checks[0].weighted - 0.03).abs() < 1e-12);
        assert!(checks[0].pass);

        let empty = GroupSet::new(vec!["none".into()], vec![GroupCategory::Custom], vec![vec![false]; 2]).unwrap();
        let checks = multicalibration_check(&[0.1, 0.9], &[true, true], &empty, &g(20), 0.01).unwrap();
        assert!(checks[0].pass && checks[0].degenerate);
    }

    #[test]
    fn reliability_examples() {
        let rows = reliability_table(&[0.31, 0.33], &[true, false], &g(10)).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bin, 4);
        assert_eq!(rows[0].count, 2);
        assert!((rows[0].conf - 0.32).abs() < 1e-12);
        assert_eq!(rows[0].acc, 0.5);

        let scores = [0.05, 0.12, 0.51, 0.55, 0.99, 1.0, 0.97];
        let labels = [false, false, true, false, true, true, true];
        let rows = reliability_table(&scores, &labels, &g(5)).unwrap();
        assert_eq!(rows.iter().map(|r| r.count).sum::<usize>(), scores.len());
        let top = rows.last().unwrap();
        assert_eq!(top.bin, 5);
        assert!((top.conf - (0.99 + 1.0 + 0.97) / 3.0).abs() < 1e-12);
        assert_eq!(reliability_csv(&rows).lines().next(), Some("bin,count,conf,acc"));
    }

    #[test]
    fn report_invariants() {
        let scores = [0.2, 0.4, 0.6, 0.8, 0.95];
        let labels = [false, true, true, true, false];
        let gs = GroupSet::all_ones(5);
        let r = EvalReport::compute("raw", &scores, &labels, Some(&gs), &g(20)).unwrap();
        assert!((r.brier_ref - r.base_rate * (1.0 - r.base_rate)).abs() < 1e-15);
        assert_eq!(r.reliability.iter().map(|x| x.count).sum::<usize>(), 5);
        assert_eq!(r.groups[0].accuracy, Some(0.6));
        let json = serde_json::to_string(&r).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
