//! Planted accuracies in, recovered accuracies out: the synthetic generator
//! as a ground truth for calibrators.

use codecal::calibrators::{fit, FitConfig, FitData, Method};
use codecal::pipeline::ScoredSplit;
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let planted = [("g30", 0.3), ("g60", 0.6), ("g90", 0.9)];
    let spec = SynthSpec::new(
        planted
            .iter()
            .map(|(n, a)| BlockSpec::new(*n, 1.0 / 3.0, *a, ConfidenceDist::Constant { c: 0.5 }))
            .collect(),
        9000,
        4,
    );
    let (d, groups) = generate(&spec)?;
    let s = ScoredSplit::score(d, ConfidenceMethod::AvgProb)?;
    let data = FitData::new(&s.scores, &s.labels, &groups)?;
    let cfg = FitConfig::default();

    println!("{:>6} {:>8} calibrated output per method", "group", "planted");
    let models: Vec<_> = [Method::Platt, Method::Linr, Method::Logr, Method::Ighb]
        .into_iter()
        .map(|m| fit(m, data, None, &cfg).map(|model| (m, model)))
        .collect::<codecal::Result<_>>()?;
    for (j, (name, acc)) in planted.iter().enumerate() {
        let row: Vec<bool> = (0..planted.len()).map(|k| k == j).collect();
        let outputs: Vec<String> = models
            .iter()
            .map(|(m, model)| Ok(format!("{m} {:.3}", model.apply(0.5, &row)?)))
            .collect::<codecal::Result<_>>()?;
        println!("{name:>6} {acc:>8.2} {}", outputs.join("  "));
    }
    Ok(())
}
