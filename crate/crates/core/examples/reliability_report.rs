//! Evaluate raw and HB-calibrated scores and write reliability diagrams and
//! group scatter plots as SVG into `target/codecal-report/`.

use std::fs;
use std::path::Path;

use codecal::calibrators::fit_histogram_binning;
use codecal::groups::{GroupingConfig, GroupingModel};
use codecal::pipeline::{group_scatter_svg, reliability_svg, ScoredSplit};
use codecal::scoring::ConfidenceMethod;
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};
use codecal::{BinGrid, EvalReport};

fn main() -> codecal::Result<()> {
    let mut spec = SynthSpec::new(
        vec![
            BlockSpec::new("a", 0.5, 0.45, ConfidenceDist::Uniform { lo: 0.5, hi: 1.0 }),
            BlockSpec::new("b", 0.5, 0.7, ConfidenceDist::Uniform { lo: 0.2, hi: 0.9 }),
        ],
        3000,
        21,
    );
    spec.languages = Some(vec!["python".into(), "cpp".into()]);
    let (d, _) = generate(&spec)?;
    let groups = GroupingModel::fit(&GroupingConfig::default(), &d)?.apply(&d)?;
    let s = ScoredSplit::score(d, ConfidenceMethod::AvgProb)?;
    let grid = BinGrid::default();
    let hb = fit_histogram_binning(&s.scores, &s.labels, grid)?;
    let calibrated: Vec<f64> = s.scores.iter().map(|p| hb.apply(*p)).collect();

    let out = Path::new("target/codecal-report");
    fs::create_dir_all(out).map_err(|e| codecal::Error::io(out, e))?;
    for (name, scores) in [("uncalibrated", &s.scores), ("hb", &calibrated)] {
        let report = EvalReport::compute(name, scores, &s.labels, Some(&groups), &grid)?;
        println!("{name:>12}: ECE {:.4}  BSS {}", report.ece, report.bss);
        for (file, svg) in [
            (format!("reliability_{name}.svg"), reliability_svg(&report)),
            (format!("groups_{name}.svg"), group_scatter_svg(&report)),
        ] {
            let path = out.join(file);
            fs::write(&path, svg).map_err(|e| codecal::Error::io(&path, e))?;
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}
