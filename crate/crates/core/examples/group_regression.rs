//! LINR and LOGR: per-group offsets that remove group-level bias.

use codecal::calibrators::{fit_gcur_linear, fit_gcur_logistic, FitData};
use codecal::pipeline::ScoredSplit;
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let scores = ConfidenceDist::Uniform { lo: 0.4, hi: 0.8 };
    let mut spec = SynthSpec::new(
        vec![
            BlockSpec::new("hard", 0.5, 0.3, scores),
            BlockSpec::new("easy", 0.5, 0.85, scores),
        ],
        5000,
        11,
    );
    spec.languages = Some(vec!["python".into(), "rust".into()]);
    let (d, groups) = generate(&spec)?;
    let s = ScoredSplit::score(d, ConfidenceMethod::AvgProb)?;
    let data = FitData::new(&s.scores, &s.labels, &groups)?;

    let linr = fit_gcur_linear(data)?;
    let logr = fit_gcur_logistic(data, 1e-6)?;
    for (name, lambda) in linr.group_names.iter().zip(&linr.lambdas) {
        println!("LINR offset {name:>6}: {lambda:+.4}");
    }
    if !linr.collinear.is_empty() {
        println!("collinear column sets: {:?}", linr.collinear);
    }
    if let Some(head) = &logr.logistic {
        println!("LOGR intercept {:+.3}, logit coefficient {:+.3}", head.intercept, head.score_coef);
    }

    for (j, name) in groups.names().iter().enumerate() {
        let members: Vec<usize> = (0..s.len()).filter(|&i| groups.row(i)[j]).collect();
        let mean = |f: &dyn Fn(usize) -> f64| members.iter().map(|&i| f(i)).sum::<f64>() / members.len() as f64;
        println!(
            "{name:>6}: accuracy {:.3}  raw {:.3}  linr {:.3}  logr {:.3}",
            mean(&|i| f64::from(u8::from(s.labels[i]))),
            mean(&|i| s.scores[i]),
            mean(&|i| linr.apply(s.scores[i], groups.row(i))),
            mean(&|i| logr.apply(s.scores[i], groups.row(i))),
        );
    }
    Ok(())
}
