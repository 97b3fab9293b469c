use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use stlnet::datasets::{self, DrivingBehavior, LabeledDataset, NAVAL_LENGTH};
use stlnet::eval::{emit_report, network_mcr, sign_agreement};
use stlnet::network::{soundness_bound_check, soundness_terms, ActivationParams};
use stlnet::stl::{self, parse_formula, Formula};
use stlnet::trainer::{train_with_progress, TrainConfig, TrainReport};

#[derive(Parser)]
#[command(name = "stlnet", version, about = "Learn STL formulas that classify time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled dataset as CSV.
    Generate(GenerateArgs),
    /// Train a network, extract and simplify its formula, write a report.
    Train(TrainArgs),
    /// Misclassification rate of a formula and/or a trained model.
    Eval(EvalArgs),
    /// Evaluate the sparse-softmax soundness inequality.
    CheckSoundness(SoundnessArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Driving,
    Naval,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    scenario: Scenario,
    /// Comma-separated driving behaviors; the first is labeled +1, the rest -1.
    #[arg(long, value_delimiter = ',', default_value = "go-forward,overtake")]
    behaviors: Vec<String>,
    /// Samples per behavior (driving) or in total (naval).
    #[arg(long, default_value_t = 500)]
    count: usize,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML file with training settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json, formula.txt, simplified.txt and history.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Train even when the soundness bound fails.
    #[arg(long)]
    allow_unsound: bool,
    /// Print loss and MCR after every epoch.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Formula text, or a path to a file holding it.
    #[arg(long)]
    formula: Option<String>,
    /// A report.json written by `train`.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SoundnessArgs {
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long)]
    length: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            let line: Vec<&str> = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            eprintln!("error: {}", line.join(" "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::CheckSoundness(a) => check_soundness(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let data = match a.scenario {
        Scenario::Driving => {
            let behaviors =
                a.behaviors.iter().map(|b| b.parse::<DrivingBehavior>()).collect::<stlnet::Result<Vec<_>>>()?;
            let length = a.length.unwrap_or(40);
            let mut data: Option<LabeledDataset> = None;
            for (i, b) in behaviors.into_iter().enumerate() {
                let part = datasets::gen_driving(b, a.count, length, a.seed)?;
                let part = if i == 0 { part } else { part.relabel(-1)? };
                data = Some(match data {
                    None => part,
                    Some(d) => d.merge(part)?,
                });
            }
            data.context("--behaviors is empty")?
        }
        Scenario::Naval => {
            if let Some(l) = a.length.filter(|&l| l != NAVAL_LENGTH) {
                bail!("naval traces have fixed length {NAVAL_LENGTH}, got --length {l}");
            }
            datasets::gen_naval(a.count, a.seed)?
        }
    };
    datasets::save_csv(&data, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!(
        "wrote {} samples ({} positive, {} negative) to {}",
        data.len(),
        data.count_label(1),
        data.count_label(-1),
        a.out.display()
    );
    Ok(())
}

fn load_data(path: &Path) -> Result<LabeledDataset> {
    datasets::load_csv(path).with_context(|| format!("reading {}", path.display()))
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(b) = a.beta {
        cfg.beta = b;
    }
    cfg.allow_unsound |= a.allow_unsound;

    let data = load_data(&a.data)?;
    let verbose = a.verbose;
    let report = train_with_progress(&data, &cfg, |e| {
        if verbose {
            println!("epoch {:>4}  loss {:.6}  mcr {:.4}", e.epoch, e.loss, e.mcr);
        }
    })?;
    emit_report(&report, &a.out).with_context(|| format!("writing report to {}", a.out.display()))?;
    println!("formula: {}", report.formula);
    println!("formula mcr: {}", report.formula_mcr);
    println!("simplified: {}", report.simplified_formula);
    println!("simplified mcr: {}", report.simplified_mcr);
    Ok(())
}

fn read_formula(arg: &str) -> Result<Formula> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        arg.to_string()
    };
    Ok(parse_formula(text.trim())?)
}

fn eval(a: EvalArgs) -> Result<()> {
    if a.formula.is_none() && a.model.is_none() {
        bail!("eval needs --formula, --model or both");
    }
    let data = load_data(&a.data)?;
    let formula = a.formula.as_deref().map(read_formula).transpose()?;
    if let Some(f) = &formula {
        println!("formula mcr: {}", stl::mcr(&data, f)?);
    }
    if let Some(path) = &a.model {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let report = TrainReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
        println!("network mcr: {}", network_mcr(&report.params, &report.shape, &report.activation, &data)?);
        if let Some(f) = &formula {
            println!(
                "sign agreement: {}",
                sign_agreement(&report.params, &report.shape, &report.activation, f, &data)?
            );
        }
    }
    Ok(())
}

fn check_soundness(a: SoundnessArgs) -> Result<()> {
    if a.beta.is_nan() || a.h.is_nan() || a.beta <= 0.0 || a.h <= 0.0 {
        bail!("--beta and --h must be positive");
    }
    let p = ActivationParams { beta: a.beta, h: a.h, ..Default::default() };
    let (lhs, rhs) = soundness_terms(&p, a.length);
    let verdict = if soundness_bound_check(&p, a.length) { "sound" } else { "unsound" };
    println!(
        "h*exp(beta*h) = {lhs:.6e}, (l-1)*exp(-1)/beta = {rhs:.6e} (beta = {}, h = {}, l = {})",
        a.beta, a.h, a.length
    );
    println!("{verdict}");
    Ok(())
}
