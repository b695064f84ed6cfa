//! Group-agnostic calibrators: Platt scaling and histogram binning on
//! overconfident synthetic scores.

use codecal::calibrators::{fit_histogram_binning, fit_platt};
use codecal::metrics::{brier, ece};
use codecal::pipeline::ScoredSplit;
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};
use codecal::BinGrid;

fn main() -> codecal::Result<()> {
    // Confident scores, mediocre accuracy.
    let spec = SynthSpec::new(
        vec![BlockSpec::new("model", 1.0, 0.55, ConfidenceDist::Uniform { lo: 0.6, hi: 1.0 })],
        4000,
        3,
    );
    let (d, _) = generate(&spec)?;
    let s = ScoredSplit::score(d, ConfidenceMethod::AvgProb)?;
    let grid = BinGrid::default();

    let platt = fit_platt(&s.scores, &s.labels, 1e-6)?;
    let hb = fit_histogram_binning(&s.scores, &s.labels, grid)?;
    println!("platt: a = {:.3}, b = {:.3}", platt.a, platt.b);

    let p_platt: Vec<f64> = s.scores.iter().map(|p| platt.apply(*p)).collect();
    let p_hb: Vec<f64> = s.scores.iter().map(|p| hb.apply(*p)).collect();
    for (name, scores) in [("raw", &s.scores), ("platt", &p_platt), ("hb", &p_hb)] {
        println!(
            "{name:>6}: ECE {:.4}  Brier {:.4}",
            ece(scores, &s.labels, &grid)?,
            brier(scores, &s.labels)?
        );
    }
    Ok(())
}
