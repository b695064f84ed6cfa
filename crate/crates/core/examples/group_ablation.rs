//! Test BSS of the group-aware calibrators for every combination of group
//! categories.

use codecal::groups::ComplexitySource;
use codecal::pipeline::{ablate_splits, ablation_csv, split_records, Record, RunConfig, ScoredSplit, SplitGroups};
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};
use codecal::Method;

fn main() -> codecal::Result<()> {
    let mut spec = SynthSpec::new(
        vec![
            BlockSpec::new("easy", 0.45, 0.85, ConfidenceDist::Uniform { lo: 0.3, hi: 0.8 }),
            BlockSpec::new("hard", 0.45, 0.2, ConfidenceDist::Uniform { lo: 0.4, hi: 0.9 }),
        ],
        4000,
        12,
    );
    spec.languages = Some(vec!["python".into(), "rust".into(), "go".into()]);
    let (d, _) = generate(&spec)?;

    // The generator stores each sample's block in `difficulty`, so the
    // complexity category is the one that carries the planted signal.
    let mut cfg = RunConfig::default();
    cfg.grouping.complexity_source = ComplexitySource::DifficultyLabel;
    let records: Vec<Record> = d.samples.into_iter().map(Record::from).collect();
    let [train, val, test] = split_records(records, &cfg.split_spec())?.map(|part| {
        let d = codecal::Dataset::new(part.into_iter().map(|r| r.sample).collect(), "synthetic")?;
        ScoredSplit::score(d, ConfidenceMethod::AvgProb)
    });
    let (train, val, test) = (train?, val?, test?);
    let (_, groups) = SplitGroups::fit(&cfg.grouping, &train, &val, &test)?;

    let rows = ablate_splits(
        &[Method::Platt, Method::Linr, Method::Ighb, Method::Iglb],
        &train,
        &val,
        &test,
        &groups,
        &cfg.fit_config()?,
    )?;
    print!("{}", ablation_csv(&rows));
    Ok(())
}
