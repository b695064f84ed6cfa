//! Synthetic datasets with planted group-conditional accuracy.
//!
//! Each sample carries a single token whose logprob is `ln(c)`, so every
//! scoring method returns the planted raw confidence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{CodeSpan, Dataset, Sample};
use crate::error::{Error, Result};
use crate::groups::{GroupCategory, GroupSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceDist {
    Constant { c: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ConfidenceDist {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ConfidenceDist::Constant { c } => c > 0.0 && c <= 1.0,
            ConfidenceDist::Uniform { lo, hi } => lo > 0.0 && lo <= hi && hi <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("confidence distribution {self:?} must lie in (0, 1]")))
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ConfidenceDist::Constant { c } => c,
            ConfidenceDist::Uniform { lo, hi } if lo == hi => lo,
            ConfidenceDist::Uniform { lo, hi } => rng.gen_range(lo..=hi),
        }
    }
}

/// A mutually exclusive block of samples with its own accuracy and confidence law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub mass: f64,
    pub accuracy: f64,
    pub confidence: ConfidenceDist,
}

impl BlockSpec {
    pub fn new(name: impl Into<String>, mass: f64, accuracy: f64, confidence: ConfidenceDist) -> Self {
        Self {
            name: name.into(),
            mass,
            accuracy,
            confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub blocks: Vec<BlockSpec>,
    pub n_samples: usize,
    pub seed: u64,
    /// When set, each sample gets a uniformly drawn language and one group column per language.
    #[serde(default)]
    pub languages: Option<Vec<String>>,
    /// Samples per problem id; consecutive samples share a problem.
    #[serde(default = "default_generations")]
    pub generations_per_problem: usize,
    /// Accuracy and confidence for samples outside every block (when masses sum below 1).
    #[serde(default = "default_background")]
    pub background: (f64, ConfidenceDist),
}

fn default_generations() -> usize {
    5
}

fn default_background() -> (f64, ConfidenceDist) {
    (0.5, ConfidenceDist::Constant { c: 0.5 })
}

impl SynthSpec {
    pub fn new(blocks: Vec<BlockSpec>, n_samples: usize, seed: u64) -> Self {
        Self {
            blocks,
            n_samples,
            seed,
            languages: None,
            generations_per_problem: default_generations(),
            background: default_background(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.generations_per_problem == 0 {
            return Err(Error::Config("generations_per_problem must be positive".into()));
        }
        let mut total = 0.0;
        for b in &self.blocks {
            if !(b.mass > 0.0 && b.mass <= 1.0) {
                return Err(Error::Config(format!("block {} mass {} outside (0, 1]", b.name, b.mass)));
            }
            if !(0.0..=1.0).contains(&b.accuracy) {
                return Err(Error::Config(format!("block {} accuracy {} outside [0, 1]", b.name, b.accuracy)));
            }
            b.confidence.validate()?;
            total += b.mass;
        }
        if total > 1.0 + 1e-9 {
            return Err(Error::Config(format!("block masses sum to {total} > 1")));
        }
        if !(0.0..=1.0).contains(&self.background.0) {
            return Err(Error::Config("background accuracy outside [0, 1]".into()));
        }
        self.background.1.validate()?;
        if let Some(langs) = &self.languages {
            if langs.is_empty() {
                return Err(Error::Config("language list is empty".into()));
            }
        }
        Ok(())
    }
}

fn synthetic_code(rng: &mut ChaCha8Rng, language: &str) -> String {
    let lines = rng.gen_range(1..=24);
    let mut code = format!("// {language}\n");
    for i in 0..lines {
        if rng.gen_bool(0.25) {
            code.push_str(&format!("if x > {i} {{ x -= 1; }}\n"));
        } else {
            code.push_str(&format!("x = x + {i};\n"));
        }
    }
    code
}

/// Draws the dataset and a group set with one column per block, then one per language.
pub fn generate(spec: &SynthSpec) -> Result<(Dataset, GroupSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let langs = spec.languages.clone();
    let n_blocks = spec.blocks.len();
    let n_langs = langs.as_ref().map_or(0, Vec::len);
    let mut samples = Vec::with_capacity(spec.n_samples);
    let mut rows = Vec::with_capacity(spec.n_samples);

    for i in 0..spec.n_samples {
        let u: f64 = rng.gen();
        let mut acc_mass = 0.0;
        let block = spec.blocks.iter().position(|b| {
            acc_mass += b.mass;
            u < acc_mass
        });
        let (accuracy, dist) = match block {
            Some(k) => (spec.blocks[k].accuracy, spec.blocks[k].confidence),
            None => spec.background,
        };
        let c = dist.draw(&mut rng);
        let label = rng.gen::<f64>() < accuracy;
        let lang_idx = langs.as_ref().map(|l| rng.gen_range(0..l.len()));
        let language = match (&langs, lang_idx) {
            (Some(l), Some(k)) => l[k].clone(),
            _ => "python".to_string(),
        };
        let code_text = synthetic_code(&mut rng, &language);

        let mut row = vec![false; n_blocks + n_langs];
        if let Some(k) = block {
            row[k] = true;
        }
        if let Some(k) = lang_idx {
            row[n_blocks + k] = true;
        }
        rows.push(row);
        samples.push(Sample {
            problem_id: format!("p{:06}", i / spec.generations_per_problem),
            sample_id: format!("s{i:07}"),
            language,
            token_logprobs: vec![c.ln()],
            code_span: Some(CodeSpan::new(0, 1)),
            label,
            difficulty: Some(block.map_or("background", |k| spec.blocks[k].name.as_str()).to_string()),
            code_text: Some(code_text),
        });
    }

    let mut names: Vec<String> = spec.blocks.iter().map(|b| b.name.clone()).collect();
    let mut cats = vec![GroupCategory::Custom; n_blocks];
    if let Some(l) = &langs {
        names.extend(l.iter().cloned());
        cats.extend(std::iter::repeat_n(GroupCategory::Language, l.len()));
    }
    let groups = GroupSet::new(names, cats, rows)?;
    let dataset = Dataset::new(samples, format!("synthetic seed={} n={}", spec.seed, spec.n_samples))?;
    Ok((dataset, groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{confidence, ConfidenceMethod};

    fn constant(c: f64) -> ConfidenceDist {
        ConfidenceDist::Constant { c }
    }

    #[test]
    fn perfect_block_is_all_correct() {
        let spec = SynthSpec::new(vec![BlockSpec::new("sure", 1.0, 1.0, constant(0.7))], 500, 3);
        let (d, _) = generate(&spec).unwrap();
        assert!(d.samples.iter().all(|s| s.label));
    }

    #[test]
    fn constant_half_scores_exactly_half() {
        let spec = SynthSpec::new(vec![BlockSpec::new("b", 1.0, 0.5, constant(0.5))], 200, 1);
        let (d, _) = generate(&spec).unwrap();
        for m in [
            ConfidenceMethod::AvgProb,
            ConfidenceMethod::CodeProb,
            ConfidenceMethod::tail(40).unwrap(),
        ] {
            assert!(d.samples.iter().all(|s| confidence(s, m).unwrap() == 0.5));
        }
    }

    #[test]
    fn empirical_accuracy_within_envelope() {
        let spec = SynthSpec::new(vec![BlockSpec::new("b", 1.0, 0.8, constant(0.5))], 10_000, 42);
        let (d, _) = generate(&spec).unwrap();
        let mean = d.samples.iter().filter(|s| s.label).count() as f64 / d.len() as f64;
        assert!((mean - 0.8).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn deterministic_given_seed() {
        let mut spec = SynthSpec::new(
            vec![
                BlockSpec::new("a", 0.4, 0.3, ConfidenceDist::Uniform { lo: 0.2, hi: 0.9 }),
                BlockSpec::new("b", 0.5, 0.9, constant(0.5)),
            ],
            300,
            9,
        );
        spec.languages = Some(vec!["python".into(), "rust".into()]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate(&spec).unwrap().0.write_records(&mut a).unwrap();
        generate(&spec).unwrap().0.write_records(&mut b).unwrap();
        assert_eq!(a, b);
        spec.seed = 10;
        let mut c = Vec::new();
        generate(&spec).unwrap().0.write_records(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn group_columns_mark_blocks_and_languages() {
        let mut spec = SynthSpec::new(
            vec![BlockSpec::new("a", 0.3, 0.3, constant(0.5)), BlockSpec::new("b", 0.3, 0.6, constant(0.5))],
            1000,
            5,
        );
        spec.languages = Some(vec!["go".into(), "rust".into()]);
        let (d, g) = generate(&spec).unwrap();
        assert_eq!(g.names(), ["a", "b", "go", "rust"]);
        for (i, s) in d.samples.iter().enumerate() {
            let row = g.row(i);
            assert!(!(row[0] && row[1]));
            assert_eq!(row[2], s.language == "go");
            assert_eq!(row[3], s.language == "rust");
            let block = s.difficulty.as_deref().unwrap();
            assert_eq!(row[0], block == "a");
        }
    }

    #[test]
    fn infeasible_masses_rejected() {
        let spec = SynthSpec::new(
            vec![BlockSpec::new("a", 0.7, 0.5, constant(0.5)), BlockSpec::new("b", 0.6, 0.5, constant(0.5))],
            10,
            0,
        );
        assert!(matches!(generate(&spec), Err(Error::Config(_))));
    }
}
