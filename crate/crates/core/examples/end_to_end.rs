//! The file-based workflow the `codecal` binary exposes: records, scoring,
//! split, fit and evaluate, then plots. Artifacts go to `target/codecal-demo/`.

use std::fs;
use std::path::Path;

use codecal::groups::ComplexitySource;
use codecal::pipeline::{self, RunConfig, SplitPaths};
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let dir = Path::new("target/codecal-demo");
    fs::create_dir_all(dir).map_err(|e| codecal::Error::io(dir, e))?;

    let mut spec = SynthSpec::new(
        vec![
            BlockSpec::new("easy", 0.4, 0.85, ConfidenceDist::Uniform { lo: 0.4, hi: 0.95 }),
            BlockSpec::new("hard", 0.4, 0.25, ConfidenceDist::Uniform { lo: 0.3, hi: 0.9 }),
        ],
        3000,
        77,
    );
    spec.languages = Some(vec!["python".into(), "rust".into(), "go".into()]);
    let (d, _) = generate(&spec)?;
    let raw = dir.join("raw.jsonl");
    d.save(&raw)?;

    let scored = dir.join("scored.jsonl");
    let s = pipeline::score_file(&raw, &scored, ConfidenceMethod::AvgProb, false)?;
    println!("scored {} records ({} skipped)", s.written, s.skipped);

    let mut cfg = RunConfig::default();
    cfg.grouping.complexity_source = ComplexitySource::DifficultyLabel;
    let splits = dir.join("splits");
    let sizes = pipeline::split_file(&scored, &splits, &cfg.split_spec())?;
    println!("split sizes {sizes:?}");

    let out = dir.join("fit");
    let outcome = pipeline::fit_eval(&SplitPaths::in_dir(&splits), &out, &cfg)?;
    print!("{}", pipeline::comparison_csv(&outcome.rows));

    let plots = pipeline::render_report(&out.join("report_iglb.json"), &out)?;
    println!("plots: {plots:?}");
    Ok(())
}
