//! Binary group functions over samples (language, output length, complexity)
//! and their materialized membership matrix.
//!
//! Thresholds are always fitted on a reference split (normally train) and then
//! applied unchanged to any other split, so test data never moves a cutpoint.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};

pub const ALL_GROUP: &str = "ALL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupCategory {
    All,
    Complexity,
    Language,
    Length,
    Custom,
}

impl GroupCategory {
    pub fn name(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Complexity => "complexity",
            Self::Language => "language",
            Self::Length => "length",
            Self::Custom => "custom",
        }
    }
}

/// Named group columns with row-major membership.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSet {
    names: Vec<String>,
    categories: Vec<GroupCategory>,
    rows: Vec<Vec<bool>>,
    n_samples: usize,
    masses: Vec<f64>,
}

impl GroupSet {
    /// Builds a group set from per-sample membership rows.
    pub fn new(
        names: Vec<String>,
        categories: Vec<GroupCategory>,
        rows: Vec<Vec<bool>>,
    ) -> Result<Self> {
        if names.len() != categories.len() {
            return Err(Error::Config(format!(
                "{} group names but {} categories",
                names.len(),
                categories.len()
            )));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != names.len()) {
            return Err(Error::Arity {
                expected: names.len(),
                got: bad.len(),
            });
        }
        let n = rows.len();
        let masses = (0..names.len())
            .map(|j| {
                if n == 0 {
                    0.0
                } else {
                    rows.iter().filter(|r| r[j]).count() as f64 / n as f64
                }
            })
            .collect();
        Ok(Self {
            names,
            categories,
            n_samples: n,
            rows,
            masses,
        })
    }

    /// A set with `n` rows and no columns.
    pub fn empty(n: usize) -> Self {
        Self {
            names: Vec::new(),
            categories: Vec::new(),
            rows: vec![Vec::new(); n],
            n_samples: n,
            masses: Vec::new(),
        }
    }

    /// Single all-ones column.
    pub fn all_ones(n: usize) -> Self {
        Self::new(
            vec![ALL_GROUP.to_string()],
            vec![GroupCategory::All],
            vec![vec![true]; n],
        )
        .expect("consistent shape")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn categories(&self) -> &[GroupCategory] {
        &self.categories
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_groups(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<bool> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_degenerate(&self, j: usize) -> bool {
        self.masses[j] == 0.0
    }

    pub fn degenerate_names(&self) -> Vec<&str> {
        (0..self.n_groups())
            .filter(|&j| self.is_degenerate(j))
            .map(|j| self.names[j].as_str())
            .collect()
    }

    /// Columns whose category is in `keep`, in their original order.
    pub fn select_categories(&self, keep: &[GroupCategory]) -> GroupSet {
        let cols: Vec<usize> = (0..self.n_groups())
            .filter(|&j| keep.contains(&self.categories[j]))
            .collect();
        self.select_columns(&cols)
    }

    pub fn select_columns(&self, cols: &[usize]) -> GroupSet {
        GroupSet {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            categories: cols.iter().map(|&j| self.categories[j]).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| cols.iter().map(|&j| r[j]).collect())
                .collect(),
            n_samples: self.n_samples,
            masses: cols.iter().map(|&j| self.masses[j]).collect(),
        }
    }

    /// Category tags present, deduplicated and sorted.
    pub fn present_categories(&self) -> Vec<GroupCategory> {
        self.categories
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

/// Column-concatenates partial group sets; `always_on` prepends the all-ones `ALL` group.
pub fn assemble(parts: &[GroupSet], always_on: bool) -> Result<GroupSet> {
    let n = match parts.first() {
        Some(p) => p.n_samples,
        None => return Err(Error::EmptyInput("assemble")),
    };
    if let Some(bad) = parts.iter().find(|p| p.n_samples != n) {
        return Err(Error::RowMismatch {
            expected: n,
            got: bad.n_samples,
        });
    }
    let mut out = if always_on {
        GroupSet::all_ones(n)
    } else {
        GroupSet::empty(n)
    };
    for p in parts {
        out.names.extend(p.names.iter().cloned());
        out.categories.extend(p.categories.iter().copied());
        out.masses.extend(p.masses.iter().copied());
        for (row, extra) in out.rows.iter_mut().zip(&p.rows) {
            row.extend(extra.iter().copied());
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMetric {
    Chars,
    Loc,
}

impl LengthMetric {
    fn prefix(self) -> &'static str {
        match self {
            Self::Chars => "len",
            Self::Loc => "loc",
        }
    }

    pub fn measure(self, code: &str) -> f64 {
        match self {
            Self::Chars => code.chars().count() as f64,
            Self::Loc => code.lines().filter(|l| !l.trim().is_empty()).count() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexitySource {
    DifficultyLabel,
    BranchHeuristic,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    pub use_language: bool,
    pub length_metrics: Vec<LengthMetric>,
    /// Quantile levels per metric; a metric without an entry splits at the median.
    pub length_cutpoints: BTreeMap<LengthMetric, Vec<f64>>,
    pub complexity_source: ComplexitySource,
    pub complexity_cutpoints: Vec<f64>,
    pub always_on: bool,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            use_language: true,
            length_metrics: vec![LengthMetric::Chars, LengthMetric::Loc],
            length_cutpoints: BTreeMap::new(),
            complexity_source: ComplexitySource::BranchHeuristic,
            complexity_cutpoints: vec![1.0 / 3.0, 2.0 / 3.0],
            always_on: true,
        }
    }
}

fn check_levels(levels: &[f64], what: &str) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Config(format!("{what}: no quantile levels")));
    }
    let in_range = levels.iter().all(|q| *q > 0.0 && *q < 1.0);
    let increasing = levels.windows(2).all(|w| w[0] < w[1]);
    if !in_range || !increasing {
        return Err(Error::Config(format!(
            "{what}: quantiles must be strictly increasing within (0, 1), got {levels:?}"
        )));
    }
    Ok(())
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        for m in &self.length_metrics {
            check_levels(self.length_levels(*m), "length cutpoints")?;
        }
        if self.complexity_source == ComplexitySource::BranchHeuristic {
            check_levels(&self.complexity_cutpoints, "complexity cutpoints")?;
        }
        Ok(())
    }

    fn length_levels(&self, metric: LengthMetric) -> &[f64] {
        self.length_cutpoints
            .get(&metric)
            .map(Vec::as_slice)
            .unwrap_or(&[0.5])
    }

    /// Categories this config produces (excluding `ALL`).
    pub fn categories(&self) -> Vec<GroupCategory> {
        let mut cats = Vec::new();
        if self.complexity_source != ComplexitySource::None {
            cats.push(GroupCategory::Complexity);
        }
        if self.use_language {
            cats.push(GroupCategory::Language);
        }
        if !self.length_metrics.is_empty() {
            cats.push(GroupCategory::Length);
        }
        cats
    }
}

/// Empirical quantile on sorted values without interpolation: the nearest-rank
/// value, except when `q * n` lands exactly on a rank, where the two adjacent
/// order statistics are averaged.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = q * n as f64;
    let k = h.round();
    if (h - k).abs() < 1e-9 && k >= 1.0 && (k as usize) < n {
        let k = k as usize;
        (sorted[k - 1] + sorted[k]) / 2.0
    } else {
        let rank = (h.ceil() as usize).clamp(1, n);
        sorted[rank - 1]
    }
}

fn bucket_names(prefix: &str, n_cuts: usize) -> Vec<String> {
    let suffixes: Vec<String> = match n_cuts {
        1 => vec!["low".into(), "high".into()],
        2 => vec!["low".into(), "mid".into(), "high".into()],
        _ => (0..=n_cuts).map(|i| format!("b{i}")).collect(),
    };
    suffixes.into_iter().map(|s| format!("{prefix}_{s}")).collect()
}

/// Number of branch constructs: the keywords `if for while case catch` as whole
/// words plus occurrences of `&&`, `||` and `?`.
pub fn branch_count(code: &str) -> usize {
    const WORDS: [&str; 5] = ["if", "for", "while", "case", "catch"];
    let words = code
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| WORDS.contains(w))
        .count();
    let ops = code.matches("&&").count() + code.matches("||").count() + code.matches('?').count();
    words + ops
}

/// Cutpoints fitted for one length metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRule {
    pub metric: LengthMetric,
    pub cutpoints: Vec<f64>,
    pub names: Vec<String>,
    /// Name of the group receiving samples without code text, if any.
    pub unknown: Option<String>,
}

impl LengthRule {
    fn fit(metric: LengthMetric, levels: &[f64], fit_on: &Dataset, with_unknown: bool) -> Result<Self> {
        if fit_on.is_empty() {
            return Err(Error::EmptyInput("length groups: fit_on"));
        }
        let mut values: Vec<f64> = fit_on
            .samples
            .iter()
            .filter_map(|s| s.code_text.as_deref().map(|c| metric.measure(c)))
            .collect();
        if values.is_empty() {
            return Err(Error::Config(format!(
                "length groups: no sample in fit_on has code_text ({})",
                fit_on.provenance
            )));
        }
        values.sort_by(f64::total_cmp);
        let cutpoints = levels.iter().map(|q| empirical_quantile(&values, *q)).collect();
        let with_unknown =
            with_unknown || fit_on.samples.iter().any(|s| s.code_text.is_none());
        Ok(Self {
            metric,
            cutpoints,
            names: bucket_names(metric.prefix(), levels.len()),
            unknown: with_unknown.then(|| format!("{}_unknown", metric.prefix())),
        })
    }

    fn width(&self) -> usize {
        self.names.len() + usize::from(self.unknown.is_some())
    }

    fn row(&self, s: &Sample, row: &mut Vec<bool>) {
        let start = row.len();
        row.resize(start + self.width(), false);
        match &s.code_text {
            Some(code) => {
                let x = self.metric.measure(code);
                // At-or-above a cutpoint goes to the higher bucket.
                let bucket = self.cutpoints.iter().filter(|c| x >= **c).count();
                row[start + bucket] = true;
            }
            None => {
                if self.unknown.is_some() {
                    row[start + self.names.len()] = true;
                }
            }
        }
    }

    fn column_names(&self) -> impl Iterator<Item = String> + '_ {
        self.names.iter().cloned().chain(self.unknown.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ComplexityRule {
    DifficultyLabel { labels: Vec<String> },
    BranchHeuristic { cutpoints: Vec<f64>, names: Vec<String> },
}

impl ComplexityRule {
    fn fit(cfg: &GroupingConfig, fit_on: &Dataset) -> Result<Option<Self>> {
        match cfg.complexity_source {
            ComplexitySource::None => Ok(None),
            ComplexitySource::DifficultyLabel => {
                let mut labels = BTreeSet::new();
                for s in &fit_on.samples {
                    labels.insert(require_difficulty(s)?.to_string());
                }
                Ok(Some(Self::DifficultyLabel {
                    labels: labels.into_iter().collect(),
                }))
            }
            ComplexitySource::BranchHeuristic => {
                if fit_on.is_empty() {
                    return Err(Error::EmptyInput("complexity groups: fit_on"));
                }
                let mut counts = fit_on
                    .samples
                    .iter()
                    .map(|s| require_code(s).map(|c| branch_count(c) as f64))
                    .collect::<Result<Vec<_>>>()?;
                counts.sort_by(f64::total_cmp);
                Ok(Some(Self::BranchHeuristic {
                    cutpoints: cfg
                        .complexity_cutpoints
                        .iter()
                        .map(|q| empirical_quantile(&counts, *q))
                        .collect(),
                    names: bucket_names("cx", cfg.complexity_cutpoints.len()),
                }))
            }
        }
    }

    fn column_names(&self) -> Vec<String> {
        match self {
            Self::DifficultyLabel { labels } => labels.clone(),
            Self::BranchHeuristic { names, .. } => names.clone(),
        }
    }

    fn row(&self, s: &Sample, row: &mut Vec<bool>) -> Result<()> {
        let start = row.len();
        match self {
            Self::DifficultyLabel { labels } => {
                let label = require_difficulty(s)?;
                row.extend(labels.iter().map(|l| l == label));
            }
            Self::BranchHeuristic { cutpoints, names } => {
                let x = branch_count(require_code(s)?) as f64;
                // At-or-below a cutpoint stays in the lower bucket, so zero-branch
                // code is always the lowest band.
                let bucket = cutpoints.iter().filter(|c| x > **c).count();
                row.resize(start + names.len(), false);
                row[start + bucket] = true;
            }
        }
        Ok(())
    }
}

fn require_difficulty(s: &Sample) -> Result<&str> {
    s.difficulty.as_deref().ok_or_else(|| Error::MissingField {
        sample_id: s.sample_id.clone(),
        field: "difficulty",
    })
}

fn require_code(s: &Sample) -> Result<&str> {
    s.code_text.as_deref().ok_or_else(|| Error::MissingField {
        sample_id: s.sample_id.clone(),
        field: "code_text",
    })
}

/// A grouping fitted on a reference split, applicable to any dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingModel {
    pub always_on: bool,
    pub languages: Option<Vec<String>>,
    pub length: Vec<LengthRule>,
    pub complexity: Option<ComplexityRule>,
}

impl GroupingModel {
    pub fn fit(cfg: &GroupingConfig, fit_on: &Dataset) -> Result<Self> {
        cfg.validate()?;
        let languages = cfg.use_language.then(|| {
            fit_on
                .samples
                .iter()
                .map(|s| s.language.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        });
        let length = cfg
            .length_metrics
            .iter()
            .map(|m| LengthRule::fit(*m, cfg.length_levels(*m), fit_on, false))
            .collect::<Result<_>>()?;
        Ok(Self {
            always_on: cfg.always_on,
            languages,
            length,
            complexity: ComplexityRule::fit(cfg, fit_on)?,
        })
    }

    /// Column names in materialization order.
    pub fn names(&self) -> Vec<String> {
        self.columns().into_iter().map(|(n, _)| n).collect()
    }

    fn columns(&self) -> Vec<(String, GroupCategory)> {
        let mut cols = Vec::new();
        if self.always_on {
            cols.push((ALL_GROUP.to_string(), GroupCategory::All));
        }
        if let Some(c) = &self.complexity {
            cols.extend(c.column_names().into_iter().map(|n| (n, GroupCategory::Complexity)));
        }
        if let Some(langs) = &self.languages {
            cols.extend(langs.iter().map(|l| (l.clone(), GroupCategory::Language)));
        }
        for rule in &self.length {
            cols.extend(rule.column_names().map(|n| (n, GroupCategory::Length)));
        }
        cols
    }

    /// Materializes membership for `d`. Languages unseen at fit time get no language column.
    pub fn apply(&self, d: &Dataset) -> Result<GroupSet> {
        let (names, categories): (Vec<_>, Vec<_>) = self.columns().into_iter().unzip();
        let mut rows = Vec::with_capacity(d.len());
        for s in &d.samples {
            let mut row = Vec::with_capacity(names.len());
            if self.always_on {
                row.push(true);
            }
            if let Some(c) = &self.complexity {
                c.row(s, &mut row)?;
            }
            if let Some(langs) = &self.languages {
                row.extend(langs.iter().map(|l| *l == s.language));
            }
            for rule in &self.length {
                rule.row(s, &mut row);
            }
            rows.push(row);
        }
        GroupSet::new(names, categories, rows)
    }
}

/// One group per distinct language tag of `d`, sorted by tag.
pub fn build_language_groups(d: &Dataset) -> GroupSet {
    let model = GroupingModel {
        always_on: false,
        languages: Some(
            d.samples
                .iter()
                .map(|s| s.language.clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        ),
        length: Vec::new(),
        complexity: None,
    };
    model.apply(d).expect("language groups never fail")
}

/// Length bands with cutpoints fitted on `fit_on` and applied to `d`.
pub fn build_length_groups(d: &Dataset, cfg: &GroupingConfig, fit_on: &Dataset) -> Result<GroupSet> {
    cfg.validate()?;
    let d_missing = d.samples.iter().any(|s| s.code_text.is_none());
    let model = GroupingModel {
        always_on: false,
        languages: None,
        length: cfg
            .length_metrics
            .iter()
            .map(|m| LengthRule::fit(*m, cfg.length_levels(*m), fit_on, d_missing))
            .collect::<Result<_>>()?,
        complexity: None,
    };
    model.apply(d)
}

/// Complexity bands (difficulty labels or branch-count quantiles) fitted on `fit_on`.
pub fn build_complexity_groups(d: &Dataset, cfg: &GroupingConfig, fit_on: &Dataset) -> Result<GroupSet> {
    cfg.validate()?;
    let model = GroupingModel {
        always_on: false,
        languages: None,
        length: Vec::new(),
        complexity: ComplexityRule::fit(cfg, fit_on)?,
    };
    model.apply(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(id: usize, lang: &str, code: Option<&str>, difficulty: Option<&str>) -> Sample {
        Sample {
            problem_id: format!("p{id}"),
            sample_id: format!("s{id}"),
            language: lang.into(),
            token_logprobs: vec![-0.1],
            code_span: None,
            label: true,
            difficulty: difficulty.map(Into::into),
            code_text: code.map(Into::into),
        }
    }

    fn ds(samples: Vec<Sample>) -> Dataset {
        Dataset::new(samples, "t").unwrap()
    }

    fn chars_only() -> GroupingConfig {
        GroupingConfig {
            length_metrics: vec![LengthMetric::Chars],
            ..GroupingConfig::default()
        }
    }

    #[test]
    fn language_groups() {
        let d = ds(vec![
            s(0, "python", None, None),
            s(1, "rust", None, None),
            s(2, "python", None, None),
        ]);
        let g = build_language_groups(&d);
        assert_eq!(g.names(), ["python", "rust"]);
        assert_eq!(g.masses(), [2.0 / 3.0, 1.0 / 3.0]);

        let single = build_language_groups(&ds(vec![s(0, "go", None, None), s(1, "go", None, None)]));
        assert_eq!(single.masses(), [1.0]);
    }

    #[test]
    fn forty_languages_partition() {
        let d = ds((0..400).map(|i| s(i, &format!("lang{:02}", i % 40), None, None)).collect());
        let g = build_language_groups(&d);
        assert_eq!(g.n_groups(), 40);
        assert!((g.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(g.rows().iter().all(|r| r.iter().filter(|b| **b).count() == 1));
    }

    #[test]
    fn quantile_definition() {
        assert_eq!(empirical_quantile(&[10.0, 20.0, 30.0, 40.0], 0.5), 25.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 100.0], 0.5), 2.5);
        let five = [0.0, 1.0, 3.0, 5.0, 9.0];
        assert_eq!(empirical_quantile(&five, 1.0 / 3.0), 1.0);
        assert_eq!(empirical_quantile(&five, 2.0 / 3.0), 5.0);
        assert_eq!(empirical_quantile(&five, 0.5), 3.0);
        assert_eq!(empirical_quantile(&[7.0], 0.5), 7.0);
    }

    #[test]
    fn length_boundary_goes_high() {
        let fit = ds([10, 20, 30, 40]
            .iter()
            .enumerate()
            .map(|(i, n)| s(i, "py", Some(&"x".repeat(*n)), None))
            .collect());
        let d = ds(vec![s(9, "py", Some(&"x".repeat(25)), None), s(10, "py", Some("x"), None)]);
        let g = build_length_groups(&d, &chars_only(), &fit).unwrap();
        assert_eq!(g.names(), ["len_low", "len_high"]);
        assert_eq!(g.row(0), [false, true]);
        assert_eq!(g.row(1), [true, false]);
    }

    #[test]
    fn equal_lengths_degenerate_low() {
        let d = ds((0..4).map(|i| s(i, "py", Some("abcd"), None)).collect());
        let g = build_length_groups(&d, &chars_only(), &d).unwrap();
        assert_eq!(g.masses(), [0.0, 1.0]);
        assert_eq!(g.degenerate_names(), ["len_low"]);
    }

    #[test]
    fn loc_median_boundary() {
        let code = |lines: usize| (0..lines).map(|i| format!("x{i}\n")).collect::<String>();
        let fit = ds([1, 2, 3, 100]
            .iter()
            .enumerate()
            .map(|(i, n)| s(i, "py", Some(&code(*n)), None))
            .collect());
        let cfg = GroupingConfig {
            length_metrics: vec![LengthMetric::Loc],
            ..GroupingConfig::default()
        };
        let d = ds(vec![s(20, "py", Some(&code(3)), None), s(21, "py", Some(&code(2)), None)]);
        let g = build_length_groups(&d, &cfg, &fit).unwrap();
        assert_eq!(g.names(), ["loc_low", "loc_high"]);
        assert_eq!(g.row(0), [false, true]);
        assert_eq!(g.row(1), [true, false]);
    }

    #[test]
    fn missing_code_goes_unknown() {
        let fit = ds(vec![s(0, "py", Some("ab"), None), s(1, "py", Some("abcd"), None)]);
        let d = ds(vec![s(2, "py", None, None)]);
        let g = build_length_groups(&d, &chars_only(), &fit).unwrap();
        assert_eq!(g.names(), ["len_low", "len_high", "len_unknown"]);
        assert_eq!(g.row(0), [false, false, true]);
        assert!(build_length_groups(&d, &chars_only(), &Dataset::default()).is_err());
    }

    #[test]
    fn cutpoints_depend_only_on_fit_split() {
        let fit = ds((0..6).map(|i| s(i, "py", Some(&"y".repeat(i * 3 + 1)), None)).collect());
        let model = GroupingModel::fit(&chars_only(), &fit).unwrap();
        let a = ds((10..13).map(|i| s(i, "py", Some(&"y".repeat(100)), None)).collect());
        let b = ds((20..22).map(|i| s(i, "py", Some("y"), None)).collect());
        let before = model.clone();
        model.apply(&a).unwrap();
        model.apply(&b).unwrap();
        assert_eq!(model, before);
        assert_eq!(model.length[0].cutpoints, GroupingModel::fit(&chars_only(), &fit).unwrap().length[0].cutpoints);
    }

    #[test]
    fn difficulty_groups() {
        let d = ds(vec![
            s(0, "py", None, Some("low")),
            s(1, "py", None, Some("high")),
            s(2, "py", None, Some("low")),
        ]);
        let cfg = GroupingConfig {
            complexity_source: ComplexitySource::DifficultyLabel,
            ..GroupingConfig::default()
        };
        let g = build_complexity_groups(&d, &cfg, &d).unwrap();
        let low = g.index_of("low").unwrap();
        let high = g.index_of("high").unwrap();
        assert_eq!(g.masses()[low], 2.0 / 3.0);
        assert_eq!(g.masses()[high], 1.0 / 3.0);

        let missing = ds(vec![s(5, "py", None, None)]);
        assert!(matches!(
            build_complexity_groups(&missing, &cfg, &d),
            Err(Error::MissingField { sample_id, field: "difficulty" }) if sample_id == "s5"
        ));
    }

    #[test]
    fn branch_counting() {
        assert_eq!(branch_count("return 1"), 0);
        let code = "if a { x } \nif b { y }\nfor i in v {}\nlet iffy = notify;";
        assert_eq!(branch_count(code), 3);
        assert_eq!(branch_count("a && b || c ? d : e; catch(e) case 1: while(x)"), 6);
    }

    #[test]
    fn branch_terciles() {
        let cfg = GroupingConfig::default();
        let with_branches = |n: usize| "if x {}\n".repeat(n);
        let fit = ds([0, 1, 3, 5, 9]
            .iter()
            .enumerate()
            .map(|(i, n)| s(i, "py", Some(&with_branches(*n)), None))
            .collect());
        let d = ds(vec![
            s(10, "py", Some("if a {}\nif b {}\nfor x in y {}"), None),
            s(11, "py", Some("return 1"), None),
            s(12, "py", Some(&with_branches(6)), None),
        ]);
        let g = build_complexity_groups(&d, &cfg, &fit).unwrap();
        assert_eq!(g.names(), ["cx_low", "cx_mid", "cx_high"]);
        assert_eq!(g.row(0), [false, true, false]);
        assert_eq!(g.row(1), [true, false, false]);
        assert_eq!(g.row(2), [false, false, true]);

        // Zero-branch code is low even when the fit split has no branches at all.
        let flat = ds((0..5).map(|i| s(i, "py", Some("x = 1"), None)).collect());
        let g = build_complexity_groups(&d, &cfg, &flat).unwrap();
        assert_eq!(g.row(1), [true, false, false]);
    }

    #[test]
    fn assemble_columns() {
        let d = ds(vec![
            s(0, "python", Some("aaaaaaaa"), None),
            s(1, "rust", Some("a"), None),
        ]);
        let lang = build_language_groups(&d);
        let len = build_length_groups(&d, &chars_only(), &d).unwrap();
        let g = assemble(&[lang.clone(), len.clone()], false).unwrap();
        assert_eq!(g.n_groups(), 4);
        assert_eq!(g.names(), ["python", "rust", "len_low", "len_high"]);
        // python sample is long: member of both python and len_high.
        assert_eq!(g.row(0), [true, false, false, true]);

        let g = assemble(&[lang, len], true).unwrap();
        assert_eq!(g.names()[0], ALL_GROUP);
        assert_eq!(g.masses()[0], 1.0);
        assert!(g.column(0).iter().all(|b| *b));

        let short = GroupSet::all_ones(1);
        assert!(matches!(
            assemble(&[GroupSet::all_ones(2), short], false),
            Err(Error::RowMismatch { .. })
        ));
    }

    #[test]
    fn bad_levels_rejected() {
        let mut cfg = GroupingConfig {
            complexity_cutpoints: vec![0.6, 0.3],
            ..GroupingConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.complexity_cutpoints = vec![0.0, 0.5];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn model_roundtrips_json() {
        let d = ds((0..6)
            .map(|i| s(i, if i % 2 == 0 { "c" } else { "go" }, Some(&"if\n".repeat(i)), None))
            .collect());
        let model = GroupingModel::fit(&GroupingConfig::default(), &d).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: GroupingModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.apply(&d).unwrap(), model.apply(&d).unwrap());
    }

    proptest! {
        #[test]
        fn masses_are_column_means(bits in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 0..40)) {
            let g = GroupSet::new(
                vec!["a".into(), "b".into(), "c".into()],
                vec![GroupCategory::Custom; 3],
                bits.clone(),
            ).unwrap();
            for j in 0..3 {
                let expected = if bits.is_empty() { 0.0 } else {
                    bits.iter().filter(|r| r[j]).count() as f64 / bits.len() as f64
                };
                prop_assert_eq!(g.masses()[j], expected);
                prop_assert_eq!(g.is_degenerate(j), expected == 0.0);
            }
        }
    }
}
