//! Build language, length and complexity groups from records, then check
//! which groups violate the multicalibration bound before and after IGHB.

use codecal::calibrators::{fit_ighb, FitConfig, FitData};
use codecal::groups::{GroupingConfig, GroupingModel};
use codecal::metrics::multicalibration_check;
use codecal::pipeline::ScoredSplit;
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let mut spec = SynthSpec::new(
        vec![
            BlockSpec::new("easy", 0.5, 0.9, ConfidenceDist::Uniform { lo: 0.3, hi: 0.7 }),
            BlockSpec::new("hard", 0.5, 0.2, ConfidenceDist::Uniform { lo: 0.5, hi: 0.9 }),
        ],
        3000,
        8,
    );
    spec.languages = Some(vec!["python".into(), "rust".into()]);
    let (d, _) = generate(&spec)?;

    let grouping = GroupingModel::fit(&GroupingConfig::default(), &d)?;
    let groups = grouping.apply(&d)?;
    let s = ScoredSplit::score(d, ConfidenceMethod::AvgProb)?;
    let cfg = FitConfig::default();

    let report = |scores: &[f64], title: &str| -> codecal::Result<()> {
        println!("{title}");
        for c in multicalibration_check(scores, &s.labels, &groups, &cfg.grid, cfg.alpha())? {
            println!(
                "  {:>12}  P(g) {:.3}  gASCE {:.4}  P*gASCE {:.4}  {}",
                c.group,
                c.mass,
                c.gasce,
                c.weighted,
                if c.pass { "ok" } else { "VIOLATED" }
            );
        }
        Ok(())
    };
    report(&s.scores, "raw scores")?;

    let model = fit_ighb(FitData::new(&s.scores, &s.labels, &groups)?, &cfg)?;
    let out: Vec<f64> = (0..s.len()).map(|i| model.apply(s.scores[i], groups.row(i))).collect();
    report(&out, &format!("after IGHB ({} patches)", model.patches.len()))
}
