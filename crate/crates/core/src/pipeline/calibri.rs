//! Offline converter from downloaded CALIBRI shards to the record schema.
//!
//! The source layout is not fixed here. Each target field has a list of
//! candidate source keys, tried in order, and the whole mapping can be
//! replaced from a JSON file. Shards are JSON Lines or a single JSON array.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{to_pretty_json, write_text};
use crate::data::{extract_code_span, CodeSpan, Dataset, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibriMapping {
    pub layout: String,
    pub problem_id: Vec<String>,
    pub sample_id: Vec<String>,
    pub language: Vec<String>,
    pub token_logprobs: Vec<String>,
    pub label: Vec<String>,
    pub difficulty: Vec<String>,
    pub code_text: Vec<String>,
    pub code_span: Vec<String>,
    /// Full generation text; with `token_offsets` it yields the code span.
    pub generation_text: Vec<String>,
    pub token_offsets: Vec<String>,
    /// Used when no language key is present, e.g. for single-language shards.
    pub default_language: Option<String>,
}

fn keys(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for CalibriMapping {
    fn default() -> Self {
        Self {
            layout: "calibri-v1".into(),
            problem_id: keys(&["problem_id", "task_id", "question_id", "problem"]),
            sample_id: keys(&["sample_id", "id", "generation_id", "uid"]),
            language: keys(&["language", "lang", "programming_language"]),
            token_logprobs: keys(&["token_logprobs", "logprobs", "token_log_probs", "log_probs"]),
            label: keys(&["label", "passed", "correct", "is_correct", "pass"]),
            difficulty: keys(&["difficulty", "level"]),
            code_text: keys(&["code_text", "code", "extracted_code"]),
            code_span: keys(&["code_span"]),
            generation_text: keys(&["generation", "completion", "output", "response"]),
            token_offsets: keys(&["token_offsets", "offsets"]),
            default_language: None,
        }
    }
}

impl CalibriMapping {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn required(&self) -> Vec<(&'static str, &[String])> {
        let mut req = vec![
            ("problem_id", self.problem_id.as_slice()),
            ("sample_id", self.sample_id.as_slice()),
            ("label", self.label.as_slice()),
        ];
        if self.default_language.is_none() {
            req.push(("language", self.language.as_slice()));
        }
        req
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvertSummary {
    pub layout: String,
    pub records_read: usize,
    pub written: usize,
    /// Skipped records by reason.
    pub skipped: BTreeMap<String, usize>,
    /// Every `(target, source)` field pair that was used.
    pub field_mapping: Vec<(String, String)>,
}

impl ConvertSummary {
    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }
}

fn parse_source(text: &str) -> Result<Vec<Map<String, Value>>> {
    let to_object = |v: Value, line: usize| match v {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Schema {
            line,
            message: "expected a JSON object".into(),
        }),
    };
    if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(text).map_err(|e| Error::Schema {
            line: e.line(),
            message: e.to_string(),
        })?;
        return values.into_iter().enumerate().map(|(i, v)| to_object(v, i + 1)).collect();
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let v: Value = serde_json::from_str(l).map_err(|e| Error::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            to_object(v, i + 1)
        })
        .collect()
}

fn lookup<'a>(rec: &'a Map<String, Value>, candidates: &[String]) -> Option<(&'a str, &'a Value)> {
    candidates
        .iter()
        .find_map(|k| rec.get_key_value(k.as_str()).filter(|(_, v)| !v.is_null()))
        .map(|(k, v)| (k.as_str(), v))
}

fn as_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn as_label(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_f64() {
            Some(0.0) => Some(false),
            Some(1.0) => Some(true),
            _ => None,
        },
        _ => None,
    }
}

/// Numbers, or objects carrying a `logprob` entry.
fn as_logprobs(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?
        .iter()
        .map(|t| match t {
            Value::Number(n) => n.as_f64(),
            Value::Object(o) => o.get("logprob").and_then(Value::as_f64),
            _ => None,
        })
        .collect()
}

fn as_pair(v: &Value) -> Option<(usize, usize)> {
    let a = v.as_array()?;
    match a.as_slice() {
        [s, e] => Some((s.as_u64()? as usize, e.as_u64()? as usize)),
        _ => None,
    }
}

/// Text between the first complete pair of fence lines.
pub fn fenced_block_text(text: &str) -> Option<String> {
    let mut lines = text.lines();
    lines.by_ref().find(|l| l.starts_with("```"))?;
    let mut body = Vec::new();
    for l in lines {
        if l.starts_with("```") {
            return Some(body.join("\n"));
        }
        body.push(l);
    }
    None
}

enum Converted {
    Sample(Sample),
    Skip(&'static str),
}

fn convert_one(rec: &Map<String, Value>, map: &CalibriMapping, used: &mut BTreeSet<(String, String)>) -> Result<Converted> {
    let mut take = |target: &str, candidates: &[String]| {
        lookup(rec, candidates).map(|(k, v)| {
            used.insert((target.to_string(), k.to_string()));
            v
        })
    };
    let Some(problem_id) = take("problem_id", &map.problem_id).and_then(as_id) else {
        return Ok(Converted::Skip("bad problem_id"));
    };
    let Some(sample_id) = take("sample_id", &map.sample_id).and_then(as_id) else {
        return Ok(Converted::Skip("bad sample_id"));
    };
    let Some(label) = take("label", &map.label).and_then(as_label) else {
        return Ok(Converted::Skip("bad label"));
    };
    let language = match take("language", &map.language).and_then(Value::as_str) {
        Some(l) => l.to_lowercase(),
        None => match &map.default_language {
            Some(l) => l.to_lowercase(),
            None => return Ok(Converted::Skip("missing language")),
        },
    };
    let token_logprobs = match take("token_logprobs", &map.token_logprobs).map(as_logprobs) {
        None => return Ok(Converted::Skip("missing token_logprobs")),
        Some(None) => return Ok(Converted::Skip("malformed token_logprobs")),
        Some(Some(lps)) if lps.is_empty() => return Ok(Converted::Skip("missing token_logprobs")),
        Some(Some(lps)) => lps,
    };
    let difficulty = take("difficulty", &map.difficulty).and_then(|v| match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    });
    let generation = take("generation_text", &map.generation_text).and_then(Value::as_str);
    let mut code_text = take("code_text", &map.code_text).and_then(Value::as_str).map(str::to_string);
    if code_text.is_none() {
        code_text = generation.and_then(fenced_block_text);
    }
    let mut code_span = take("code_span", &map.code_span)
        .and_then(as_pair)
        .map(|(s, e)| CodeSpan::new(s, e));
    if code_span.is_none() {
        let offsets = take("token_offsets", &map.token_offsets)
            .and_then(Value::as_array)
            .map(|a| a.iter().map(as_pair).collect::<Option<Vec<_>>>());
        if let (Some(text), Some(Some(offsets))) = (generation, offsets) {
            if offsets.len() != token_logprobs.len() {
                return Ok(Converted::Skip("token_offsets length mismatch"));
            }
            match extract_code_span(text, &offsets) {
                Ok(span) => code_span = span,
                Err(Error::Alignment { .. }) => return Ok(Converted::Skip("misaligned token_offsets")),
                Err(e) => return Err(e),
            }
        }
    }
    let sample = Sample {
        problem_id,
        sample_id,
        language,
        token_logprobs,
        code_span,
        label,
        difficulty,
        code_text,
    };
    if sample.validate().is_err() {
        return Ok(Converted::Skip("invalid values"));
    }
    Ok(Converted::Sample(sample))
}

/// Converts one downloaded shard. Writes the records to `output` and the
/// mapping metadata next to it as `<output>.mapping.json`.
pub fn convert_calibri(source: &Path, output: &Path, mapping: &CalibriMapping) -> Result<ConvertSummary> {
    super::distinct_paths(source, output)?;
    let text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    let records = parse_source(&text)?;

    if let Some(first) = records.first() {
        let missing: Vec<String> = mapping
            .required()
            .into_iter()
            .filter(|(_, cands)| lookup(first, cands).is_none())
            .map(|(t, _)| t.to_string())
            .collect();
        if !missing.is_empty() {
            let expected = mapping
                .required()
                .into_iter()
                .map(|(t, cands)| format!("{t}: one of {}", cands.join("|")))
                .collect();
            return Err(Error::UnknownLayout { missing, expected });
        }
    }

    let mut summary = ConvertSummary {
        layout: mapping.layout.clone(),
        records_read: records.len(),
        ..ConvertSummary::default()
    };
    let mut used = BTreeSet::new();
    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in &records {
        match convert_one(rec, mapping, &mut used)? {
            Converted::Sample(s) if !seen.insert(s.sample_id.clone()) => {
                *summary.skipped.entry("duplicate sample_id".into()).or_default() += 1;
            }
            Converted::Sample(s) => samples.push(s),
            Converted::Skip(reason) => *summary.skipped.entry(reason.into()).or_default() += 1,
        }
    }
    summary.written = samples.len();
    summary.field_mapping = used.into_iter().collect();
    let dataset = Dataset::new(samples, source.display().to_string())?;
    dataset.save(output)?;
    let mut meta_name = output.as_os_str().to_owned();
    meta_name.push(".mapping.json");
    write_text(Path::new(&meta_name), &to_pretty_json(&summary))?;
    Ok(summary)
}
