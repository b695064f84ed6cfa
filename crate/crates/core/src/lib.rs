//! Calibration and multicalibration of token-likelihood confidence scores for
//! LLM-generated code.
//!
//! The crate covers the whole path from raw token logprobs to calibrated
//! probability-of-correctness scores: ingestion and problem-level splits
//! ([`data`]), confidence scoring ([`scoring`]), group construction
//! ([`groups`]), the binning grid ([`binning`]), metrics ([`metrics`]), six
//! post-hoc calibrators ([`calibrators`]), a synthetic oracle ([`synth`]) and
//! file-level pipeline commands ([`pipeline`]).

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binning;
pub mod calibrators;
pub mod data;
pub mod error;
pub mod groups;
pub mod metrics;
pub mod pipeline;
pub mod scoring;
pub mod synth;

pub use binning::{BinGrid, Side};
pub use calibrators::{fit, CalibratorModel, FitConfig, FitData, Method, ModelDocument};
pub use data::{load_records, split_by_problem, Dataset, Sample, SplitSpec, Splits};
pub use error::{Error, ErrorClass, Result};
pub use groups::{GroupSet, GroupingConfig, GroupingModel};
pub use metrics::{Bss, EvalReport};
pub use scoring::{score_dataset, ConfidenceMethod};
pub use synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};
