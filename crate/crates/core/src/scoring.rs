//! Initial confidence from token log-likelihoods: the exponentiated mean
//! logprob (inverse perplexity) over one of three token scopes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};

pub const DEFAULT_TAIL_K: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConfidenceMethod {
    /// All generated tokens, reasoning included.
    AvgProb,
    /// Only tokens inside the extracted code span.
    CodeProb,
    /// The last `min(tail_k, n)` tokens.
    TailProb { tail_k: usize },
}

impl ConfidenceMethod {
    pub fn tail(tail_k: usize) -> Result<Self> {
        if tail_k == 0 {
            return Err(Error::Config("tail_k must be at least 1".into()));
        }
        Ok(Self::TailProb { tail_k })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::AvgProb => "avg_prob",
            Self::CodeProb => "code_prob",
            Self::TailProb { .. } => "tail_prob",
        }
    }
}

impl fmt::Display for ConfidenceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConfidenceMethod {
    type Err = Error;

    /// Accepts `avg_prob`, `code_prob`, `tail_prob` (k = 40) or `tail_prob:K`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg_prob" => Ok(Self::AvgProb),
            "code_prob" => Ok(Self::CodeProb),
            "tail_prob" => Self::tail(DEFAULT_TAIL_K),
            other => match other.strip_prefix("tail_prob:") {
                Some(k) => Self::tail(
                    k.parse()
                        .map_err(|_| Error::Config(format!("bad tail_k in {other:?}")))?,
                ),
                None => Err(Error::Config(format!("unknown confidence method {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub sample: Sample,
    pub p_hat: f64,
}

fn geometric_mean(logprobs: &[f64]) -> f64 {
    let mean = logprobs.iter().sum::<f64>() / logprobs.len() as f64;
    mean.exp().clamp(0.0, 1.0)
}

/// Confidence of a single sample without copying it.
pub fn confidence(s: &Sample, method: ConfidenceMethod) -> Result<f64> {
    let lps = &s.token_logprobs;
    if lps.is_empty() {
        return Err(Error::EmptyTokens(s.sample_id.clone()));
    }
    let selected = match method {
        ConfidenceMethod::AvgProb => &lps[..],
        ConfidenceMethod::CodeProb => match s.code_span {
            Some(span) if !span.is_empty() && span.end <= lps.len() => &lps[span.start..span.end],
            _ => return Err(Error::MissingCode(s.sample_id.clone())),
        },
        ConfidenceMethod::TailProb { tail_k } => &lps[lps.len() - tail_k.min(lps.len())..],
    };
    Ok(geometric_mean(selected))
}

pub fn score(s: &Sample, method: ConfidenceMethod) -> Result<ScoredSample> {
    Ok(ScoredSample {
        p_hat: confidence(s, method)?,
        sample: s.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreOutcome {
    pub scored: Vec<ScoredSample>,
    pub skipped: usize,
}

/// Scores every sample in order. With `skip_missing`, samples that cannot be
/// scored are dropped and counted instead of aborting.
pub fn score_dataset(d: &Dataset, method: ConfidenceMethod, skip_missing: bool) -> Result<ScoreOutcome> {
    let mut out = ScoreOutcome {
        scored: Vec::with_capacity(d.len()),
        skipped: 0,
    };
    for s in &d.samples {
        match score(s, method) {
            Ok(scored) => out.scored.push(scored),
            Err(Error::MissingCode(_) | Error::EmptyTokens(_)) if skip_missing => out.skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
