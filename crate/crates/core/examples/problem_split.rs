//! Leakage-free splits: all generations of a problem land in the same split.

use std::collections::BTreeSet;

use codecal::data::{split_by_problem, SplitSpec};
use codecal::synth::{generate, BlockSpec, ConfidenceDist, SynthSpec};

fn main() -> codecal::Result<()> {
    let mut spec = SynthSpec::new(
        vec![BlockSpec::new("all", 1.0, 0.5, ConfidenceDist::Uniform { lo: 0.2, hi: 0.9 })],
        200,
        1,
    );
    spec.generations_per_problem = 10;
    let (d, _) = generate(&spec)?;

    let split = split_by_problem(&d, &SplitSpec { seed: 7, ..SplitSpec::default() })?;
    for (name, part) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        let problems: BTreeSet<&str> = part.samples.iter().map(|s| s.problem_id.as_str()).collect();
        println!("{name:>5}: {:3} samples from {:2} problems", part.len(), problems.len());
    }

    let again = split_by_problem(&d, &SplitSpec { seed: 7, ..SplitSpec::default() })?;
    println!("same seed, same split: {}", again == split);
    Ok(())
}
