//! Turn token logprobs into a confidence score three ways, and locate the
//! code span of a fenced answer.

use codecal::data::{extract_code_span, Sample};
use codecal::scoring::{confidence, ConfidenceMethod};

fn main() -> codecal::Result<()> {
    let text = "Here you go:\n```python\nprint(1)\n```\n";
    // One token per line keeps the offsets easy to read.
    let mut offsets = Vec::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        let len = line.chars().count();
        offsets.push((pos, pos + len));
        pos += len;
    }
    let span = extract_code_span(text, &offsets)?;
    println!("code span over {} tokens: {span:?}", offsets.len());

    let sample = Sample {
        problem_id: "two_sum".into(),
        sample_id: "two_sum/0".into(),
        language: "python".into(),
        token_logprobs: vec![0.9f64.ln(), 0.4f64.ln(), 0.7f64.ln(), 0.95f64.ln()],
        code_span: span,
        label: true,
        difficulty: None,
        code_text: Some("print(1)".into()),
    };
    for method in [
        ConfidenceMethod::AvgProb,
        ConfidenceMethod::CodeProb,
        ConfidenceMethod::tail(2)?,
    ] {
        println!("{method:>10}: {:.4}", confidence(&sample, method)?);
    }
    Ok(())
}
