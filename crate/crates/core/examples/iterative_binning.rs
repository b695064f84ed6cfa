//! IGHB and IGLB on three groups that share one raw confidence but differ in
//! accuracy. Prints the recorded patch lists.

use std::collections::HashMap;

use codecal::calibrators::{fit_ighb, fit_iglb, FitConfig, FitData};
use codecal::data::{split_by_problem, SplitSpec};
use codecal::groups::GroupSet;
use codecal::metrics::brier;
use codecal::pipeline::ScoredSplit;
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let half = ConfidenceDist::Constant { c: 0.5 };
    let spec = SynthSpec::new(
        vec![
            BlockSpec::new("g30", 1.0 / 3.0, 0.3, half),
            BlockSpec::new("g60", 1.0 / 3.0, 0.6, half),
            BlockSpec::new("g90", 1.0 / 3.0, 0.9, half),
        ],
        6000,
        5,
    );
    let (d, groups) = generate(&spec)?;
    let row_of: HashMap<String, usize> = d.samples.iter().enumerate().map(|(i, s)| (s.sample_id.clone(), i)).collect();
    let parts = split_by_problem(&d, &SplitSpec::default())?;
    let sub = |ds: &codecal::Dataset| {
        let rows = ds.samples.iter().map(|s| groups.row(row_of[&s.sample_id]).to_vec()).collect();
        GroupSet::new(groups.names().to_vec(), groups.categories().to_vec(), rows)
    };
    let (g_train, g_val, g_test) = (sub(&parts.train)?, sub(&parts.val)?, sub(&parts.test)?);
    let train = ScoredSplit::score(parts.train, ConfidenceMethod::AvgProb)?;
    let val = ScoredSplit::score(parts.val, ConfidenceMethod::AvgProb)?;
    let test = ScoredSplit::score(parts.test, ConfidenceMethod::AvgProb)?;

    let cfg = FitConfig::default();
    let ighb = fit_ighb(FitData::new(&train.scores, &train.labels, &g_train)?, &cfg)?;
    println!("IGHB: {:?} after {} patches", ighb.stop_reason, ighb.patches.len());
    for p in &ighb.patches {
        println!("  {p:?}");
    }

    let iglb = fit_iglb(
        FitData::new(&train.scores, &train.labels, &g_train)?,
        FitData::new(&val.scores, &val.labels, &g_val)?,
        &cfg,
    )?;
    println!("IGLB: {:?}, val Brier trace {:?}", iglb.stop_reason, iglb.val_brier_trace);
    for p in &iglb.patches {
        println!("  {p:?}");
    }

    for (name, model) in [("ighb", &ighb), ("iglb", &iglb)] {
        let out: Vec<f64> = (0..test.len()).map(|i| model.apply(test.scores[i], g_test.row(i))).collect();
        println!("{name} test Brier {:.4}", brier(&out, &test.labels)?);
    }
    println!("raw  test Brier {:.4}", brier(&test.scores, &test.labels)?);
    Ok(())
}
