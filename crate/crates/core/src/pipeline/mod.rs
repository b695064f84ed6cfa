//! File-level commands: scoring, splitting, fit-and-evaluate, ablation,
//! applying saved models, and rendering reports.
//!
//! Every command is a deterministic function of its configuration and input
//! files. Outputs contain no timestamps or absolute paths, so reruns are
//! byte-identical.

mod calibri;
mod svg;

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use calibri::{convert_calibri, fenced_block_text, CalibriMapping, ConvertSummary};
pub use svg::{group_scatter_svg, reliability_svg};

use crate::binning::BinGrid;
use crate::calibrators::{fit, CalibratorModel, FitConfig, FitData, LinkLoss, Method, ModelDocument};
use crate::data::{split_by_problem, Dataset, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::groups::{GroupCategory, GroupSet, GroupingConfig, GroupingModel};
use crate::metrics::EvalReport;
use crate::scoring::{confidence, ConfidenceMethod};

/// A sample record plus the optional score columns added by the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    #[serde(flatten)]
    pub sample: Sample,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_cal: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrator: Option<String>,
}

impl From<Sample> for Record {
    fn from(sample: Sample) -> Self {
        Self {
            sample,
            p_hat: None,
            method: None,
            p_cal: None,
            calibrator: None,
        }
    }
}

pub fn read_record_lines<R: BufRead>(reader: R, source: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: idx + 1,
            message: e.to_string(),
        })?;
        rec.sample.validate()?;
        for p in [rec.p_hat, rec.p_cal].into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidSample {
                    sample_id: rec.sample.sample_id.clone(),
                    message: format!("score {p} outside [0, 1]"),
                });
            }
        }
        if !seen.insert(rec.sample.sample_id.clone()) {
            return Err(Error::DuplicateSampleId(rec.sample.sample_id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records_file(path: &Path) -> Result<Vec<Record>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_record_lines(BufReader::new(file), &path.display().to_string())
}

pub fn write_records_file(path: &Path, records: &[Record]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

/// Settings shared by all commands. Loaded from an optional JSON file; command
/// line flags override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub m_bins: usize,
    /// `avg_prob`, `code_prob` or `tail_prob`.
    pub confidence: String,
    pub tail_k: usize,
    pub skip_missing: bool,
    pub grouping: GroupingConfig,
    pub split_fracs: [f64; 3],
    pub seed: u64,
    pub epsilon: f64,
    pub ighb_alpha: Option<f64>,
    pub max_iters: usize,
    pub ls_loss: LinkLoss,
    pub ridge: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        Self {
            input: None,
            output: None,
            methods: Method::ALL.to_vec(),
            m_bins: fit.grid.m_bins(),
            confidence: "avg_prob".into(),
            tail_k: crate::scoring::DEFAULT_TAIL_K,
            skip_missing: false,
            grouping: GroupingConfig::default(),
            split_fracs: [0.6, 0.2, 0.2],
            seed: 0,
            epsilon: fit.iglb_epsilon,
            ighb_alpha: None,
            max_iters: fit.max_iters,
            ls_loss: fit.ls_loss,
            ridge: fit.ridge,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn grid(&self) -> Result<BinGrid> {
        BinGrid::new(self.m_bins)
    }

    pub fn confidence_method(&self) -> Result<ConfidenceMethod> {
        if self.confidence == "tail_prob" {
            return ConfidenceMethod::tail(self.tail_k);
        }
        self.confidence.parse()
    }

    pub fn split_spec(&self) -> SplitSpec {
        let [train_frac, val_frac, test_frac] = self.split_fracs;
        SplitSpec {
            train_frac,
            val_frac,
            test_frac,
            seed: self.seed,
        }
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(FitConfig {
            grid: self.grid()?,
            ighb_alpha: self.ighb_alpha,
            max_iters: self.max_iters,
            iglb_epsilon: self.epsilon,
            ls_loss: self.ls_loss,
            ridge: self.ridge,
        })
    }
}

fn distinct_paths(input: &Path, output: &Path) -> Result<()> {
    if input == output {
        return Err(Error::Config(format!(
            "input and output must differ, both are {}",
            input.display()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreSummary {
    pub written: usize,
    pub skipped: usize,
}

/// Scores records in place, adding `p_hat` and `method`.
pub fn score_records(records: &mut Vec<Record>, method: ConfidenceMethod, skip_missing: bool) -> Result<usize> {
    let mut skipped = 0;
    let mut kept = Vec::with_capacity(records.len());
    for mut r in records.drain(..) {
        match confidence(&r.sample, method) {
            Ok(p) => {
                r.p_hat = Some(p);
                r.method = Some(method.to_string());
                kept.push(r);
            }
            Err(Error::MissingCode(_) | Error::EmptyTokens(_)) if skip_missing => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    *records = kept;
    Ok(skipped)
}

pub fn score_file(input: &Path, output: &Path, method: ConfidenceMethod, skip_missing: bool) -> Result<ScoreSummary> {
    distinct_paths(input, output)?;
    let mut records = read_records_file(input)?;
    let skipped = score_records(&mut records, method, skip_missing)?;
    write_records_file(output, &records)?;
    Ok(ScoreSummary {
        written: records.len(),
        skipped,
    })
}

/// Problem-level split of records, keeping any score columns.
pub fn split_records(records: Vec<Record>, spec: &SplitSpec) -> Result<[Vec<Record>; 3]> {
    let d = Dataset::new(records.iter().map(|r| r.sample.clone()).collect(), "records")?;
    let splits = split_by_problem(&d, spec)?;
    let mut part_of: HashMap<String, usize> = HashMap::with_capacity(records.len());
    for (k, part) in [&splits.train, &splits.val, &splits.test].into_iter().enumerate() {
        for s in &part.samples {
            part_of.insert(s.sample_id.clone(), k);
        }
    }
    let mut out: [Vec<Record>; 3] = Default::default();
    for r in records {
        let k = part_of[&r.sample.sample_id];
        out[k].push(r);
    }
    Ok(out)
}

pub const SPLIT_FILES: [&str; 3] = ["train.jsonl", "val.jsonl", "test.jsonl"];

/// Writes `train.jsonl`, `val.jsonl` and `test.jsonl` into `out_dir`; returns their sizes.
pub fn split_file(input: &Path, out_dir: &Path, spec: &SplitSpec) -> Result<[usize; 3]> {
    let parts = split_records(read_records_file(input)?, spec)?;
    ensure_dir(out_dir)?;
    let mut sizes = [0; 3];
    for (k, part) in parts.iter().enumerate() {
        write_records_file(&out_dir.join(SPLIT_FILES[k]), part)?;
        sizes[k] = part.len();
    }
    Ok(sizes)
}

/// A split held in memory: samples, raw scores and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSplit {
    pub dataset: Dataset,
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredSplit {
    pub fn from_records(records: Vec<Record>, provenance: &str) -> Result<Self> {
        let mut scores = Vec::with_capacity(records.len());
        let mut samples = Vec::with_capacity(records.len());
        for r in records {
            let p = r.p_hat.ok_or_else(|| Error::MissingField {
                sample_id: r.sample.sample_id.clone(),
                field: "p_hat",
            })?;
            scores.push(p);
            samples.push(r.sample);
        }
        let dataset = Dataset::new(samples, provenance)?;
        Ok(Self {
            labels: dataset.labels(),
            dataset,
            scores,
        })
    }

    /// Scores a dataset directly, without going through record files.
    pub fn score(dataset: Dataset, method: ConfidenceMethod) -> Result<Self> {
        let scores = dataset
            .samples
            .iter()
            .map(|s| confidence(s, method))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            labels: dataset.labels(),
            dataset,
            scores,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(read_records_file(path)?, &path.display().to_string())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Group memberships of the three splits under one fitted grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitGroups {
    pub train: GroupSet,
    pub val: GroupSet,
    pub test: GroupSet,
}

impl SplitGroups {
    pub fn fit(cfg: &GroupingConfig, train: &ScoredSplit, val: &ScoredSplit, test: &ScoredSplit) -> Result<(GroupingModel, Self)> {
        let model = GroupingModel::fit(cfg, &train.dataset)?;
        let groups = Self {
            train: model.apply(&train.dataset)?,
            val: model.apply(&val.dataset)?,
            test: model.apply(&test.dataset)?,
        };
        Ok((model, groups))
    }

    pub fn select_categories(&self, keep: &[GroupCategory]) -> Self {
        Self {
            train: self.train.select_categories(keep),
            val: self.val.select_categories(keep),
            test: self.test.select_categories(keep),
        }
    }
}

/// Fitted model and calibrated test scores of one method, or why it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub method: Method,
    pub result: std::result::Result<(CalibratorModel, Vec<f64>), String>,
}

fn run_method(
    method: Method,
    train: &ScoredSplit,
    val: &ScoredSplit,
    test: &ScoredSplit,
    groups: &SplitGroups,
    fit_cfg: &FitConfig,
) -> Result<(CalibratorModel, Vec<f64>)> {
    let train_fd = FitData::new(&train.scores, &train.labels, &groups.train)?;
    let val_fd = FitData::new(&val.scores, &val.labels, &groups.val)?;
    let model = fit(method, train_fd, Some(val_fd), fit_cfg)?;
    let calibrated = model.apply_all(&test.scores, &groups.test)?;
    Ok((model, calibrated))
}

/// Fits each method on train (IGLB also sees val) and applies it to test.
pub fn run_methods(
    methods: &[Method],
    train: &ScoredSplit,
    val: &ScoredSplit,
    test: &ScoredSplit,
    groups: &SplitGroups,
    fit_cfg: &FitConfig,
) -> Vec<MethodRun> {
    methods
        .iter()
        .map(|&method| MethodRun {
            method,
            result: run_method(method, train, val, test, groups, fit_cfg).map_err(|e| e.to_string()),
        })
        .collect()
}

pub const UNCALIBRATED: &str = "uncalibrated";

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub report: std::result::Result<EvalReport, String>,
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,bss,acc,ece,brier\n");
    for row in rows {
        match &row.report {
            Ok(r) => out.push_str(&format!("{},{},{},{},{}\n", row.method, r.bss, r.accuracy, r.ece, r.brier)),
            Err(_) => out.push_str(&format!("{},failed,failed,failed,failed\n", row.method)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitEvalOutcome {
    pub rows: Vec<ComparisonRow>,
    pub models: BTreeMap<Method, CalibratorModel>,
}

impl FitEvalOutcome {
    pub fn report(&self, method: &str) -> Option<&EvalReport> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .and_then(|r| r.report.as_ref().ok())
    }
}

/// In-memory fit and evaluation. The uncalibrated baseline comes first.
pub fn fit_eval_splits(
    methods: &[Method],
    train: &ScoredSplit,
    val: &ScoredSplit,
    test: &ScoredSplit,
    groups: &SplitGroups,
    fit_cfg: &FitConfig,
) -> Result<FitEvalOutcome> {
    let grid = fit_cfg.grid;
    let mut rows = vec![ComparisonRow {
        method: UNCALIBRATED.into(),
        report: Ok(EvalReport::compute(UNCALIBRATED, &test.scores, &test.labels, Some(&groups.test), &grid)?),
    }];
    let mut models = BTreeMap::new();
    for run in run_methods(methods, train, val, test, groups, fit_cfg) {
        let report = match run.result {
            Ok((model, calibrated)) => {
                let report = EvalReport::compute(run.method.name(), &calibrated, &test.labels, Some(&groups.test), &grid)
                    .map_err(|e| e.to_string());
                models.insert(run.method, model);
                report
            }
            Err(e) => Err(e),
        };
        rows.push(ComparisonRow {
            method: run.method.name().into(),
            report,
        });
    }
    Ok(FitEvalOutcome { rows, models })
}

/// Paths of the three scored splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPaths {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
}

impl SplitPaths {
    /// `train.jsonl`, `val.jsonl` and `test.jsonl` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            train: dir.join(SPLIT_FILES[0]),
            val: dir.join(SPLIT_FILES[1]),
            test: dir.join(SPLIT_FILES[2]),
        }
    }

    pub fn load(&self) -> Result<[ScoredSplit; 3]> {
        Ok([
            ScoredSplit::load(&self.train)?,
            ScoredSplit::load(&self.val)?,
            ScoredSplit::load(&self.test)?,
        ])
    }
}

/// Fits and evaluates every configured method, writing into `out_dir`:
/// `groups.json`, `model_<m>.json`, `report_<m>.json`, `reliability_<m>.csv`
/// (also for the uncalibrated baseline) and `comparison.csv`.
pub fn fit_eval(paths: &SplitPaths, out_dir: &Path, cfg: &RunConfig) -> Result<FitEvalOutcome> {
    let fit_cfg = cfg.fit_config()?;
    let [train, val, test] = paths.load()?;
    let (grouping, groups) = SplitGroups::fit(&cfg.grouping, &train, &val, &test)?;
    let outcome = fit_eval_splits(&cfg.methods, &train, &val, &test, &groups, &fit_cfg)?;

    ensure_dir(out_dir)?;
    write_text(&out_dir.join("groups.json"), &to_pretty_json(&grouping))?;
    for (method, model) in &outcome.models {
        ModelDocument::new(model.clone()).save(&out_dir.join(format!("model_{method}.json")))?;
    }
    for row in &outcome.rows {
        if let Ok(report) = &row.report {
            write_text(&out_dir.join(format!("report_{}.json", row.method)), &to_pretty_json(report))?;
            write_text(
                &out_dir.join(format!("reliability_{}.csv", row.method)),
                &crate::metrics::reliability_csv(&report.reliability),
            )?;
        }
    }
    write_text(&out_dir.join("comparison.csv"), &comparison_csv(&outcome.rows))?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub method: String,
    pub groups: String,
    pub bss: Option<crate::metrics::Bss>,
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("method,groups,bss\n");
    for r in rows {
        match r.bss {
            Some(b) => out.push_str(&format!("{},{},{}\n", r.method, r.groups, b)),
            None => out.push_str(&format!("{},{},failed\n", r.method, r.groups)),
        }
    }
    out
}

/// Every non-empty subset of `cats`, named `a+b`, in lexicographic order of the name.
pub fn category_subsets(cats: &[GroupCategory]) -> Vec<(String, Vec<GroupCategory>)> {
    let mut sorted = cats.to_vec();
    sorted.sort_by_key(|c| c.name());
    sorted.dedup();
    let mut subsets: Vec<(String, Vec<GroupCategory>)> = (1u32..1 << sorted.len())
        .map(|mask| {
            let members: Vec<GroupCategory> = sorted
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, c)| *c)
                .collect();
            let name = members.iter().map(|c| c.name()).collect::<Vec<_>>().join("+");
            (name, members)
        })
        .collect();
    subsets.sort_by(|a, b| a.0.cmp(&b.0));
    subsets
}

/// Test BSS of each method under every subset of group categories. The
/// uncalibrated baseline is listed once with groups `none`.
pub fn ablate_splits(
    methods: &[Method],
    train: &ScoredSplit,
    val: &ScoredSplit,
    test: &ScoredSplit,
    groups: &SplitGroups,
    fit_cfg: &FitConfig,
) -> Result<Vec<AblationRow>> {
    let cats: Vec<GroupCategory> = groups
        .train
        .present_categories()
        .into_iter()
        .filter(|c| *c != GroupCategory::All)
        .collect();
    if cats.len() < 2 {
        return Err(Error::Config(format!(
            "ablation needs at least two group categories, grouping yields {}",
            cats.len()
        )));
    }
    let mut rows = vec![AblationRow {
        method: UNCALIBRATED.into(),
        groups: "none".into(),
        bss: Some(crate::metrics::bss(&test.scores, &test.labels)?),
    }];
    for (name, subset) in category_subsets(&cats) {
        let mut keep = subset.clone();
        keep.push(GroupCategory::All);
        let sub = groups.select_categories(&keep);
        for run in run_methods(methods, train, val, test, &sub, fit_cfg) {
            let bss = match run.result {
                Ok((_, calibrated)) => crate::metrics::bss(&calibrated, &test.labels).ok(),
                Err(_) => None,
            };
            rows.push(AblationRow {
                method: run.method.name().into(),
                groups: name.clone(),
                bss,
            });
        }
    }
    Ok(rows)
}

pub fn ablate(paths: &SplitPaths, output: &Path, cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    let fit_cfg = cfg.fit_config()?;
    let [train, val, test] = paths.load()?;
    let (_, groups) = SplitGroups::fit(&cfg.grouping, &train, &val, &test)?;
    let rows = ablate_splits(&cfg.methods, &train, &val, &test, &groups, &fit_cfg)?;
    write_text(output, &ablation_csv(&rows))?;
    Ok(rows)
}

/// Applies a saved model to scored records, adding `p_cal` and `calibrator`.
/// `grouping` is required for group-aware models.
pub fn apply_file(model: &Path, grouping: Option<&Path>, input: &Path, output: &Path) -> Result<usize> {
    distinct_paths(input, output)?;
    let doc = ModelDocument::load(model)?;
    let mut records = read_records_file(input)?;
    let split = ScoredSplit::from_records(records.clone(), &input.display().to_string())?;
    let groups = match grouping {
        Some(path) => load_grouping(path)?.apply(&split.dataset)?,
        None if doc.model.method().uses_groups() => {
            return Err(Error::Config(format!(
                "{} models need the grouping file written by fit-eval",
                doc.model.method()
            )))
        }
        None => GroupSet::empty(split.len()),
    };
    let calibrated = doc.model.apply_all(&split.scores, &groups)?;
    for (r, p) in records.iter_mut().zip(calibrated) {
        r.p_cal = Some(p);
        r.calibrator = Some(doc.model.method().to_string());
    }
    write_records_file(output, &records)?;
    Ok(records.len())
}

pub fn load_grouping(path: &Path) -> Result<GroupingModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Evaluates the `p_cal` column when every record has one, otherwise `p_hat`.
pub fn evaluate_file(input: &Path, grouping: Option<&Path>, output: &Path, grid: &BinGrid) -> Result<EvalReport> {
    distinct_paths(input, output)?;
    let records = read_records_file(input)?;
    let use_cal = !records.is_empty() && records.iter().all(|r| r.p_cal.is_some());
    let name = if use_cal {
        records[0].calibrator.clone().unwrap_or_else(|| "calibrated".into())
    } else {
        UNCALIBRATED.into()
    };
    let cal: Vec<f64> = records.iter().filter_map(|r| r.p_cal).collect();
    let split = ScoredSplit::from_records(records, &input.display().to_string())?;
    let scores = if use_cal { &cal } else { &split.scores };
    let groups = grouping.map(|p| load_grouping(p)?.apply(&split.dataset)).transpose()?;
    let report = EvalReport::compute(&name, scores, &split.labels, groups.as_ref(), grid)?;
    write_text(output, &to_pretty_json(&report))?;
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Renders `reliability_<method>.svg` and `groups_<method>.svg` for a report file.
pub fn render_report(report: &Path, out_dir: &Path) -> Result<[PathBuf; 2]> {
    let r = load_report(report)?;
    ensure_dir(out_dir)?;
    let rel = out_dir.join(format!("reliability_{}.svg", r.method));
    let grp = out_dir.join(format!("groups_{}.svg", r.method));
    write_text(&rel, &reliability_svg(&r))?;
    write_text(&grp, &group_scatter_svg(&r))?;
    Ok([rel, grp])
}
