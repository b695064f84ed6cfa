use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use codecal::calibrators::{LinkLoss, Method};
use codecal::error::{Error, ErrorClass, Result};
use codecal::pipeline::{self, CalibriMapping, RunConfig, SplitPaths};
use codecal::synth::{self, SynthSpec};

#[derive(Parser)]
#[command(name = "codecal", version, about = "Calibrate token-likelihood confidence of generated code")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Number of bins M.
    #[arg(long)]
    bins: Option<usize>,
    /// Comma-separated calibrators: platt,hb,linr,logr,ighb,iglb.
    #[arg(long)]
    methods: Option<String>,
    /// IGLB mass threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    /// IGHB tolerance (default 1/M).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Loss for the IGLB patch fit: ce or brier.
    #[arg(long)]
    ls_loss: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Add p_hat to every record.
    Score {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// avg_prob, code_prob, tail_prob or tail_prob:K.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        tail_k: Option<usize>,
        /// Drop samples that cannot be scored instead of failing.
        #[arg(long)]
        skip_missing: bool,
    },
    /// Problem-level train/val/test split into a directory.
    Split {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Three comma-separated fractions.
        #[arg(long)]
        fracs: Option<String>,
    },
    /// Fit calibrators on train (and val) and evaluate them on test.
    FitEval {
        /// Directory holding train.jsonl, val.jsonl and test.jsonl.
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Test BSS for every subset of group categories.
    Ablate {
        #[arg(long)]
        splits: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Apply a saved model to scored records, adding p_cal.
    Apply {
        #[arg(long)]
        model: PathBuf,
        /// groups.json written by fit-eval; needed for group-aware models.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a scored (or calibrated) record file into a report.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Render reliability and group SVGs from a report.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Convert a locally downloaded CALIBRI shard to records.
    ConvertCalibri {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSON field mapping replacing the built-in one.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Language for shards without a language field.
        #[arg(long)]
        language: Option<String>,
    },
    /// Write a synthetic record file from a JSON spec.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_methods(list: &str) -> Result<Vec<Method>> {
    list.split(',').map(|m| m.trim().parse()).collect()
}

fn parse_loss(s: &str) -> Result<LinkLoss> {
    match s {
        "ce" => Ok(LinkLoss::CrossEntropy),
        "brier" => Ok(LinkLoss::Brier),
        other => Err(Error::Config(format!("unknown ls_loss {other:?}, expected ce or brier"))),
    }
}

fn apply_common(cfg: &mut RunConfig, c: &Common) -> Result<()> {
    if let Some(b) = c.bins {
        cfg.m_bins = b;
    }
    if let Some(m) = &c.methods {
        cfg.methods = parse_methods(m)?;
    }
    if let Some(e) = c.epsilon {
        cfg.epsilon = e;
    }
    if c.alpha.is_some() {
        cfg.ighb_alpha = c.alpha;
    }
    if let Some(n) = c.max_iters {
        cfg.max_iters = n;
    }
    if let Some(l) = &c.ls_loss {
        cfg.ls_loss = parse_loss(l)?;
    }
    Ok(())
}

fn required<'a>(flag: Option<&'a PathBuf>, from_cfg: Option<&'a PathBuf>, name: &str) -> Result<&'a Path> {
    flag.or(from_cfg)
        .map(PathBuf::as_path)
        .ok_or_else(|| Error::Config(format!("--{name} is required")))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Score {
            input,
            output,
            method,
            tail_k,
            skip_missing,
        } => {
            if let Some(m) = method {
                cfg.confidence = m;
            }
            if let Some(k) = tail_k {
                cfg.tail_k = k;
            }
            cfg.skip_missing |= skip_missing;
            let method = cfg.confidence_method()?;
            let input = required(input.as_ref(), cfg.input.as_ref(), "input")?;
            let output = required(output.as_ref(), cfg.output.as_ref(), "output")?;
            let s = pipeline::score_file(input, output, method, cfg.skip_missing)?;
            println!("scored {} records with {method}, skipped {}", s.written, s.skipped);
        }
        Command::Split {
            input,
            out_dir,
            seed,
            fracs,
        } => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(f) = fracs {
                let v: Vec<f64> = f
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad fraction {x:?}"))))
                    .collect::<Result<_>>()?;
                cfg.split_fracs = v
                    .try_into()
                    .map_err(|_| Error::Config("--fracs needs exactly three values".into()))?;
            }
            let input = required(input.as_ref(), cfg.input.as_ref(), "input")?;
            let [a, b, c] = pipeline::split_file(input, &out_dir, &cfg.split_spec())?;
            println!("train {a}, val {b}, test {c} records");
        }
        Command::FitEval { splits, out_dir, common } => {
            apply_common(&mut cfg, &common)?;
            let outcome = pipeline::fit_eval(&SplitPaths::in_dir(&splits), &out_dir, &cfg)?;
            print!("{}", pipeline::comparison_csv(&outcome.rows));
            for row in &outcome.rows {
                if let Err(e) = &row.report {
                    eprintln!("{} failed: {e}", row.method);
                }
            }
        }
        Command::Ablate { splits, output, common } => {
            apply_common(&mut cfg, &common)?;
            let rows = pipeline::ablate(&SplitPaths::in_dir(&splits), &output, &cfg)?;
            print!("{}", pipeline::ablation_csv(&rows));
        }
        Command::Apply {
            model,
            groups,
            input,
            output,
        } => {
            let n = pipeline::apply_file(&model, groups.as_deref(), &input, &output)?;
            println!("calibrated {n} records");
        }
        Command::Evaluate {
            input,
            groups,
            output,
            bins,
        } => {
            if let Some(b) = bins {
                cfg.m_bins = b;
            }
            let r = pipeline::evaluate_file(&input, groups.as_deref(), &output, &cfg.grid()?)?;
            println!("{}: n={} bss={} acc={} ece={} brier={}", r.method, r.n, r.bss, r.accuracy, r.ece, r.brier);
        }
        Command::Report { report, out_dir } => {
            for p in pipeline::render_report(&report, &out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::ConvertCalibri {
            source,
            output,
            mapping,
            language,
        } => {
            let mut map = match mapping {
                Some(p) => CalibriMapping::load(&p)?,
                None => CalibriMapping::default(),
            };
            if language.is_some() {
                map.default_language = language;
            }
            let s = pipeline::convert_calibri(&source, &output, &map)?;
            println!(
                "read {}, wrote {}, skipped {}",
                s.records_read,
                s.written,
                s.skipped_total()
            );
            for (reason, n) in &s.skipped {
                println!("  skipped {n}: {reason}");
            }
        }
        Command::Synth { spec, output } => {
            let text = std::fs::read_to_string(&spec).map_err(|e| Error::io(&spec, e))?;
            let spec: SynthSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", spec.display())))?;
            let (d, _) = synth::generate(&spec)?;
            d.save(&output)?;
            println!("wrote {} synthetic records", d.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Io => 3,
                ErrorClass::Data => 4,
            })
        }
    }
}
