//! Sample records, line-delimited JSON ingestion, code-span extraction and
//! leakage-free splitting at the problem level.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open token index range `[start, end)` of the extracted code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct CodeSpan {
    pub start: usize,
    pub end: usize,
}

impl CodeSpan {
    pub fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl From<[usize; 2]> for CodeSpan {
    fn from([start, end]: [usize; 2]) -> Self {
        Self { start, end }
    }
}

impl From<CodeSpan> for [usize; 2] {
    fn from(span: CodeSpan) -> Self {
        [span.start, span.end]
    }
}

/// One prompt/generation pair with its token log-likelihoods and correctness label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub problem_id: String,
    pub sample_id: String,
    pub language: String,
    /// Natural-log token likelihoods over the full generation.
    pub token_logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_span: Option<CodeSpan>,
    #[serde(with = "label_repr")]
    pub label: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code_text: Option<String>,
}

mod label_repr {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u64::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

impl Sample {
    /// Checks the per-sample invariants: finite non-positive logprobs and an in-range span.
    pub fn validate(&self) -> Result<()> {
        if let Some(bad) = self
            .token_logprobs
            .iter()
            .find(|lp| !lp.is_finite() || **lp > 0.0)
        {
            return Err(Error::InvalidSample {
                sample_id: self.sample_id.clone(),
                message: format!("token logprob {bad} is not a finite value <= 0"),
            });
        }
        if let Some(span) = self.code_span {
            if span.start >= span.end || span.end > self.token_logprobs.len() {
                return Err(Error::InvalidSample {
                    sample_id: self.sample_id.clone(),
                    message: format!(
                        "code_span [{}, {}) invalid for {} tokens",
                        span.start,
                        span.end,
                        self.token_logprobs.len()
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn label_f64(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId(s.sample_id.clone()));
            }
        }
        Ok(Self {
            samples,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Number of samples without an extracted code span.
    pub fn missing_code_count(&self) -> usize {
        self.samples.iter().filter(|s| s.code_span.is_none()).count()
    }

    /// Writes one JSON object per line in the ingestion schema.
    pub fn write_records<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_records(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Parses line-delimited records from any reader. Blank lines are ignored.
pub fn read_records<R: BufRead>(reader: R, provenance: &str) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(provenance, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        sample.validate()?;
        if !seen.insert(sample.sample_id.clone()) {
            return Err(Error::DuplicateSampleId(sample.sample_id));
        }
        samples.push(sample);
    }
    Ok(Dataset {
        samples,
        provenance: provenance.to_string(),
    })
}

pub fn load_records(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(BufReader::new(file), &path.display().to_string())
}

/// Maps the first complete fenced block of `text` onto token indices.
///
/// `token_offsets` holds one `[start, end)` character range per token, ascending
/// and non-overlapping. Character positions count Unicode scalar values.
pub fn extract_code_span(text: &str, token_offsets: &[(usize, usize)]) -> Result<Option<CodeSpan>> {
    let mut prev_end = 0;
    for (i, &(start, end)) in token_offsets.iter().enumerate() {
        if end < start {
            return Err(Error::Alignment {
                index: i,
                message: format!("range [{start}, {end}) is descending"),
            });
        }
        if i > 0 && start < prev_end {
            return Err(Error::Alignment {
                index: i,
                message: format!("range starts at {start} before previous end {prev_end}"),
            });
        }
        prev_end = end;
    }

    let Some((code_start, code_end)) = first_fenced_block(text) else {
        return Ok(None);
    };
    let first = token_offsets.iter().position(|&(_, end)| end > code_start);
    let last = token_offsets.iter().rposition(|&(start, _)| start < code_end);
    Ok(match (first, last) {
        (Some(a), Some(b)) if a <= b => Some(CodeSpan::new(a, b + 1)),
        _ => None,
    })
}

/// Character range of the body of the first complete fenced block.
fn first_fenced_block(text: &str) -> Option<(usize, usize)> {
    let mut pos = 0;
    let mut body_start = None;
    for line in text.split_inclusive('\n') {
        let len = line.chars().count();
        if line.starts_with("```") {
            match body_start {
                None => body_start = Some(pos + len),
                Some(start) => return Some((start, pos)),
            }
        }
        pos += len;
    }
    None
}

/// Fractions and seed of a three-way problem-level split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.6,
            val_frac: 0.2,
            test_frac: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!(
                "split fractions must lie in (0, 1), got {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// 64-bit FNV-1a over the little-endian seed followed by the problem id bytes.
pub fn problem_hash(seed: u64, problem_id: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(problem_id.as_bytes())
        .fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Splits `d` so that every problem id lands wholly inside one of train/val/test.
///
/// Unique problem ids are ordered by `(problem_hash(seed, id), id)` and cut at the
/// fraction boundaries; each split receives at least one problem.
pub fn split_by_problem(d: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    if d.is_empty() {
        return Err(Error::EmptyInput("split_by_problem"));
    }
    let mut problems: Vec<(u64, &str)> = d
        .samples
        .iter()
        .map(|s| s.problem_id.as_str())
        .collect::<HashSet<_>>()
        .into_iter()
        .map(|p| (problem_hash(spec.seed, p), p))
        .collect();
    let n = problems.len();
    if n < 3 {
        return Err(Error::TooFewProblems(n));
    }
    problems.sort_unstable();

    let n_train = ((spec.train_frac * n as f64).round() as usize).clamp(1, n - 2);
    let n_val = ((spec.val_frac * n as f64).round() as usize).clamp(1, n - 1 - n_train);

    let assignment: BTreeMap<&str, usize> = problems
        .iter()
        .enumerate()
        .map(|(rank, (_, p))| {
            let part = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
            (*p, part)
        })
        .collect();

    let mut parts: [Vec<Sample>; 3] = Default::default();
    for s in &d.samples {
        parts[assignment[s.problem_id.as_str()]].push(s.clone());
    }
    let [train, val, test] = parts;
    let wrap = |samples, tag: &str| Dataset {
        samples,
        provenance: format!("{} [{tag} split, seed {}]", d.provenance, spec.seed),
    };
    Ok(Splits {
        train: wrap(train, "train"),
        val: wrap(val, "val"),
        test: wrap(test, "test"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, problem: &str) -> Sample {
        Sample {
            problem_id: problem.into(),
            sample_id: id.into(),
            language: "python".into(),
            token_logprobs: vec![-0.1, -0.2],
            code_span: None,
            label: true,
            difficulty: None,
            code_text: None,
        }
    }

    fn grid_dataset(problems: usize, gens: usize) -> Dataset {
        let samples = (0..problems)
            .flat_map(|p| (0..gens).map(move |g| sample(&format!("p{p}-g{g}"), &format!("p{p}"))))
            .collect();
        Dataset::new(samples, "fixture").unwrap()
    }

    #[test]
    fn reads_three_valid_lines_in_order() {
        let text = r#"{"problem_id":"p1","sample_id":"a","language":"python","token_logprobs":[-0.1],"label":1}
{"problem_id":"p1","sample_id":"b","language":"rust","token_logprobs":[-0.5,-0.2],"label":0,"code_span":[0,2],"difficulty":"low"}
{"problem_id":"p2","sample_id":"c","language":"go","token_logprobs":[0.0],"label":1,"code_text":"x"}
"#;
        let d = read_records(text.as_bytes(), "mem").unwrap();
        let ids: Vec<_> = d.samples.iter().map(|s| s.sample_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(d.samples[0].code_span, None);
        assert_eq!(d.samples[0].difficulty, None);
        assert_eq!(d.samples[1].code_span, Some(CodeSpan::new(0, 2)));
        assert!(!d.samples[1].label);
    }

    #[test]
    fn label_out_of_domain_names_line() {
        let text = r#"{"problem_id":"p1","sample_id":"a","language":"python","token_logprobs":[-0.1],"label":1}
{"problem_id":"p1","sample_id":"b","language":"python","token_logprobs":[-0.1],"label":2}
"#;
        match read_records(text.as_bytes(), "mem") {
            Err(Error::Schema { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("label"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_json_names_line() {
        let text = "{\"problem_id\":\"p\",\"sample_id\":\"a\",\"language\":\"c\",\"token_logprobs\":[-1],\"label\":0}\n{nope\n";
        assert!(matches!(
            read_records(text.as_bytes(), "mem"),
            Err(Error::Schema { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_sample_id_rejected() {
        let text = r#"{"problem_id":"p1","sample_id":"a1","language":"python","token_logprobs":[-0.1],"label":1}
{"problem_id":"p2","sample_id":"a1","language":"python","token_logprobs":[-0.1],"label":0}
"#;
        assert!(matches!(
            read_records(text.as_bytes(), "mem"),
            Err(Error::DuplicateSampleId(id)) if id == "a1"
        ));
    }

    #[test]
    fn positive_logprob_names_sample() {
        let text = r#"{"problem_id":"p1","sample_id":"bad","language":"python","token_logprobs":[-0.1, 0.3],"label":1}"#;
        assert!(matches!(
            read_records(text.as_bytes(), "mem"),
            Err(Error::InvalidSample { sample_id, .. }) if sample_id == "bad"
        ));
    }

    #[test]
    fn out_of_range_span_rejected() {
        let text = r#"{"problem_id":"p1","sample_id":"s","language":"python","token_logprobs":[-0.1],"label":1,"code_span":[0,3]}"#;
        assert!(matches!(
            read_records(text.as_bytes(), "mem"),
            Err(Error::InvalidSample { .. })
        ));
    }

    /// Character offsets for a whitespace-free tokenization: one token per character.
    fn char_tokens(text: &str) -> Vec<(usize, usize)> {
        (0..text.chars().count()).map(|i| (i, i + 1)).collect()
    }

    #[test]
    fn fenced_block_maps_to_token_range() {
        // 9 prose tokens, an opening fence token, 15 code tokens, a closing fence token.
        let mut offsets = Vec::new();
        let mut text = String::new();
        for i in 0..9 {
            let word = format!("w{i} ");
            offsets.push((text.len(), text.len() + word.len()));
            text.push_str(&word);
        }
        // Last prose token ends the line.
        text.pop();
        offsets.last_mut().unwrap().1 -= 1;
        text.push('\n');
        let fence_start = text.len();
        text.push_str("```rust\n");
        offsets.push((fence_start, text.len()));
        for i in 0..15 {
            let tok = if i % 5 == 4 { format!("t{i}\n") } else { format!("t{i} ") };
            offsets.push((text.len(), text.len() + tok.len()));
            text.push_str(&tok);
        }
        let close = text.len();
        text.push_str("```\n");
        offsets.push((close, text.len()));
        assert_eq!(extract_code_span(&text, &offsets).unwrap(), Some(CodeSpan::new(10, 25)));
    }

    #[test]
    fn no_fence_is_absent() {
        let text = "just some prose\nno code here\n";
        assert_eq!(extract_code_span(text, &char_tokens(text)).unwrap(), None);
    }

    #[test]
    fn unterminated_fence_is_absent() {
        // Lines: prose, opening fence, code, code, prose. The scanner sees one
        // line starting with ``` and never finds a second one.
        let text = "intro\n```python\nx = 1\ny = 2\nthe end";
        assert_eq!(extract_code_span(text, &char_tokens(text)).unwrap(), None);
    }

    #[test]
    fn first_block_wins() {
        let text = "a\n```\nbc\n```\n```\nzz\n```\n";
        // Body "bc\n" occupies characters 6..9.
        assert_eq!(
            extract_code_span(text, &char_tokens(text)).unwrap(),
            Some(CodeSpan::new(6, 9))
        );
    }

    #[test]
    fn overlapping_offsets_rejected() {
        let text = "```\nx\n```\n";
        assert!(matches!(
            extract_code_span(text, &[(0, 3), (2, 4)]),
            Err(Error::Alignment { index: 1, .. })
        ));
        assert!(matches!(
            extract_code_span(text, &[(3, 1)]),
            Err(Error::Alignment { index: 0, .. })
        ));
    }

    #[test]
    fn split_keeps_problems_whole() {
        let d = grid_dataset(10, 10);
        let spec = SplitSpec {
            seed: 7,
            ..SplitSpec::default()
        };
        let splits = split_by_problem(&d, &spec).unwrap();
        let problems = |ds: &Dataset| {
            ds.samples
                .iter()
                .map(|s| s.problem_id.clone())
                .collect::<HashSet<_>>()
        };
        let (a, b, c) = (problems(&splits.train), problems(&splits.val), problems(&splits.test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        assert_eq!((a.len(), b.len(), c.len()), (6, 2, 2));
        assert_eq!(splits.train.len(), 10 * a.len());
        assert_eq!(splits.val.len(), 10 * b.len());
        assert_eq!(splits.test.len(), 10 * c.len());
    }

    #[test]
    fn split_is_deterministic() {
        let d = grid_dataset(10, 10);
        let spec = SplitSpec {
            seed: 7,
            ..SplitSpec::default()
        };
        let dump = |s: &Splits| {
            let mut buf = Vec::new();
            for part in [&s.train, &s.val, &s.test] {
                part.write_records(&mut buf).unwrap();
                buf.push(b'|');
            }
            buf
        };
        let first = split_by_problem(&d, &spec).unwrap();
        let second = split_by_problem(&d, &spec).unwrap();
        assert_eq!(dump(&first), dump(&second));
    }

    #[test]
    fn seed_changes_assignment() {
        let d = grid_dataset(100, 1);
        let assign = |seed| {
            let s = split_by_problem(
                &d,
                &SplitSpec {
                    seed,
                    ..SplitSpec::default()
                },
            )
            .unwrap();
            s.train
                .samples
                .iter()
                .map(|x| x.problem_id.clone())
                .collect::<HashSet<_>>()
        };
        assert_ne!(assign(7), assign(8));
    }

    #[test]
    fn too_few_problems() {
        let d = grid_dataset(2, 5);
        assert!(matches!(
            split_by_problem(&d, &SplitSpec::default()),
            Err(Error::TooFewProblems(2))
        ));
    }

    #[test]
    fn three_problems_fill_every_split() {
        let d = grid_dataset(3, 2);
        let s = split_by_problem(&d, &SplitSpec::default()).unwrap();
        assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
    }

    #[test]
    fn bad_fractions_rejected() {
        let d = grid_dataset(5, 1);
        let spec = SplitSpec {
            train_frac: 0.5,
            val_frac: 0.3,
            test_frac: 0.3,
            seed: 0,
        };
        assert!(matches!(split_by_problem(&d, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn fnv_reference_vector() {
        // FNV-1a 64 of the empty string is the offset basis; of "a" is the published vector.
        fn fnv(bytes: &[u8]) -> u64 {
            bytes.iter().fold(0xcbf29ce484222325u64, |h, b| {
                (h ^ *b as u64).wrapping_mul(0x100000001b3)
            })
        }
        assert_eq!(fnv(b"a"), 0xaf63dc4c8601ec8c);
        let mut bytes = 42u64.to_le_bytes().to_vec();
        bytes.extend_from_slice(b"HumanEval/0");
        assert_eq!(problem_hash(42, "HumanEval/0"), fnv(&bytes));
    }
}
