//! Evaluation against data and report emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{predict, ActivationParams, ModelParams, NetworkShape};
use crate::stl::{classify, robustness, Formula};
use crate::trainer::TrainReport;

fn require_nonempty(data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one sample".into()));
    }
    Ok(())
}

/// Network output `R` for every sample, in dataset order.
pub fn network_outputs(
    params: &ModelParams,
    shape: &NetworkShape,
    p: &ActivationParams,
    data: &LabeledDataset,
) -> Result<Vec<f64>> {
    data.samples().par_iter().map(|(s, _)| predict(s, params, shape, p)).collect()
}

/// Misclassification rate of the network sign (`R > 0` predicts +1).
pub fn network_mcr(
    params: &ModelParams,
    shape: &NetworkShape,
    p: &ActivationParams,
    data: &LabeledDataset,
) -> Result<f64> {
    require_nonempty(data)?;
    let out = network_outputs(params, shape, p, data)?;
    let wrong = out.iter().zip(data.iter()).filter(|(r, (_, y))| classify(**r) != *y).count();
    Ok(wrong as f64 / data.len() as f64)
}

/// Fraction of samples on which the network and the exact robustness of
/// `formula` predict the same class.
pub fn sign_agreement(
    params: &ModelParams,
    shape: &NetworkShape,
    p: &ActivationParams,
    formula: &Formula,
    data: &LabeledDataset,
) -> Result<f64> {
    require_nonempty(data)?;
    let out = network_outputs(params, shape, p, data)?;
    let exact: Vec<f64> = data.samples().par_iter().map(|(s, _)| robustness(s, formula, 0)).collect::<Result<_>>()?;
    let same = out.iter().zip(&exact).filter(|(a, b)| classify(**a) == classify(**b)).count();
    Ok(same as f64 / data.len() as f64)
}

/// Per-epoch history as CSV with a wall-clock column.
pub fn history_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,loss,mcr,seconds\n");
    for e in &report.history {
        let _ = writeln!(out, "{},{},{},{:.3}", e.epoch, e.loss, e.mcr, e.seconds);
    }
    out
}

/// Writes `report.json`, `formula.txt`, `simplified.txt` and
/// `history.csv` into `dir`, creating it if needed. Everything except the
/// `seconds` column of the history is a pure function of data and config.
pub fn emit_report(report: &TrainReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json()? + "\n")?;
    fs::write(dir.join("formula.txt"), format!("{}\n", report.formula))?;
    fs::write(dir.join("simplified.txt"), format!("{}\n", report.simplified_formula))?;
    fs::write(dir.join("history.csv"), history_csv(report))?;
    Ok(())
}
