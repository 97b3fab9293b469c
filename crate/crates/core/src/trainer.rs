//! Training loop, parameter projection, formula extraction and
//! simplification.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::network_mcr;
use crate::network::{
    forward_var, min_sound_beta, require_sound, ActivationParams, GateDraw, ModelParams, NetworkShape, ParamVars, Slot,
    SoftmaxMode,
};
use crate::optim::{self, OptimizerKind};
use crate::stl::{self, Formula, Predicate, Signal, TemporalAtom};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    /// Gate is 1 iff its variable is at least 0.5.
    #[default]
    Threshold,
    /// Gate is drawn as Bernoulli(c) on every training forward pass.
    Sample,
}

/// Training settings. Read from a flat `key = value` file; every key is
/// optional and falls back to the default below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size for predicate offsets and window bounds.
    pub learning_rate: f64,
    /// Step size for the gate matrix.
    pub gate_learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Softmax temperature at the end of training.
    pub beta: f64,
    /// Temperature at the first epoch, annealed geometrically to `beta`.
    /// Unset picks `max(2, 1.1 * smallest sound beta)`, capped at `beta`.
    pub beta_initial: Option<f64>,
    pub h: f64,
    pub eps: f64,
    pub softmax: SoftmaxMode,
    pub slope_initial: f64,
    pub slope_final: f64,
    /// Number of temporal slots; 0 means `4 * dim`.
    pub k: usize,
    /// Number of conjunction rows.
    pub m: usize,
    pub seed: u64,
    pub allow_unsound: bool,
    pub gate_mode: GateMode,
    /// Train on per-axis standardized signals; offsets are mapped back to
    /// raw units afterwards.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 50,
            learning_rate: 0.05,
            gate_learning_rate: 0.1,
            optimizer: OptimizerKind::Adam,
            beta: 25.0,
            beta_initial: None,
            h: 1.0,
            eps: 1e-8,
            softmax: SoftmaxMode::Sparse,
            slope_initial: 3.0,
            slope_final: 1.0,
            k: 0,
            m: 2,
            seed: 0,
            allow_unsound: false,
            gate_mode: GateMode::Threshold,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !(self.gate_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.slope_initial > 0.0) || !(self.slope_final > 0.0) {
            return bad("slopes must be positive");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        if let Some(b0) = self.beta_initial {
            if !(b0 > 0.0) || !b0.is_finite() {
                return bad("beta_initial must be positive");
            }
        }
        self.activation(self.slope_final).validate()
    }

    pub fn activation(&self, slope: f64) -> ActivationParams {
        ActivationParams { beta: self.beta, h: self.h, eps: self.eps, slope, mode: self.softmax }
    }

    pub fn shape(&self, dim: usize) -> Result<NetworkShape> {
        let k = if self.k == 0 { 4 * dim } else { self.k };
        NetworkShape::cycled(dim, k, self.m)
    }

    /// Activation parameters in force during `epoch` for signals whose
    /// widest softmax has `width` inputs.
    pub fn activation_at(&self, epoch: usize, width: usize) -> ActivationParams {
        ActivationParams { beta: self.beta_at(epoch, width), ..self.activation(self.slope_at(epoch)) }
    }

    /// Temperature of the first epoch.
    pub fn beta_start(&self, width: usize) -> f64 {
        let b0 = self.beta_initial.unwrap_or_else(|| (1.1 * min_sound_beta(self.h, width)).max(2.0));
        b0.min(self.beta)
    }

    pub fn beta_at(&self, epoch: usize, width: usize) -> f64 {
        let b0 = self.beta_start(width);
        if self.epochs <= 1 {
            return self.beta;
        }
        let u = epoch as f64 / (self.epochs - 1) as f64;
        b0 * (self.beta / b0).powf(u)
    }

    /// Linear anneal from `slope_initial` at the first epoch to
    /// `slope_final` at the last.
    pub fn slope_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.slope_final;
        }
        let u = epoch as f64 / (self.epochs - 1) as f64;
        self.slope_initial + u * (self.slope_final - self.slope_initial)
    }
}

/// Per-axis affine map `s' = (s - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScaling {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl AxisScaling {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Mean and standard deviation over every sample and time step. Constant
    /// axes keep scale 1.
    pub fn fit(data: &LabeledDataset) -> Self {
        let dim = data.dim();
        let mut out = Self::identity(dim);
        let n = (data.len() * data.signal_len()) as f64;
        if n == 0.0 {
            return out;
        }
        for a in 0..dim {
            let vals = || data.iter().flat_map(move |(s, _)| (0..s.len()).map(move |t| s.at(t, a)));
            let mean = vals().sum::<f64>() / n;
            let var = vals().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            out.mean[a] = mean;
            out.scale[a] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        out
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let dim = self.mean.len();
        let samples = data
            .iter()
            .map(|(s, y)| {
                let v = s
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(i, x)| (x - self.mean[i % dim]) / self.scale[i % dim])
                    .collect();
                Ok((Signal::new(v, s.len(), dim)?, y))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset::new(samples)?.with_meta(data.meta.clone()))
    }

    /// Converts a standardized predicate offset to raw units.
    pub fn offset_to_raw(&self, slot: &Slot, b: f64) -> f64 {
        slot.sign.value() * self.mean[slot.axis] + self.scale[slot.axis] * b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    /// Network-sign misclassification rate on the training data.
    pub mcr: f64,
    /// Wall-clock time; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub shape: NetworkShape,
    /// Activation parameters at the end of training (final slope).
    pub activation: ActivationParams,
    pub signal_len: usize,
    /// Standardization used during training; `params` are already in raw units.
    pub scaling: AxisScaling,
    pub history: Vec<EpochStats>,
    /// Trained parameters with windows snapped to integers.
    pub params: ModelParams,
    /// Binary gate matrix after simplification.
    pub simplified_gates: Vec<f64>,
    pub formula: String,
    pub simplified_formula: String,
    /// Exact-semantics training MCR of `formula` and `simplified_formula`.
    pub formula_mcr: f64,
    pub simplified_mcr: f64,
}

impl TrainReport {
    pub fn simplified_params(&self) -> ModelParams {
        ModelParams { gates: self.simplified_gates.clone(), ..self.params.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Exponential margin loss `exp(-y R)`.
pub fn loss(y: i8, r: f64) -> f64 {
    (-(y as f64) * r).exp()
}

/// Clips gates to `[0, 1]`, clamps window bounds to `[0, len - 1]` and
/// collapses reversed windows onto their midpoint.
pub fn project_params(mut params: ModelParams, len: usize) -> ModelParams {
    let hi = len.saturating_sub(1) as f64;
    for c in params.gates.iter_mut() {
        *c = clip(*c);
    }
    for (a, b) in params.t1.iter_mut().zip(params.t2.iter_mut()) {
        *a = a.clamp(0.0, hi);
        *b = b.clamp(0.0, hi);
        if *a > *b {
            let mid = 0.5 * (*a + *b);
            *a = mid;
            *b = mid;
        }
    }
    params
}

pub fn clip(c: f64) -> f64 {
    c.clamp(0.0, 1.0)
}

/// Rounds windows outward (`floor(t1)`, `ceil(t2)`), clamped at zero.
pub fn snap_windows(mut params: ModelParams) -> ModelParams {
    for (a, b) in params.t1.iter_mut().zip(params.t2.iter_mut()) {
        *a = a.floor().max(0.0);
        *b = b.ceil().max(*a);
    }
    params
}

/// Reads the DNF formula encoded by the parameters: gates binarized at 0.5,
/// empty rows dropped, duplicate rows merged, windows rounded outward.
pub fn extract_formula(params: &ModelParams, shape: &NetworkShape) -> Result<Formula> {
    params.check(shape)?;
    let atoms: Vec<TemporalAtom> = shape
        .slots
        .iter()
        .enumerate()
        .map(|(j, slot)| {
            let t1 = params.t1[j].floor().max(0.0) as usize;
            let t2 = (params.t2[j].ceil().max(0.0) as usize).max(t1);
            TemporalAtom {
                kind: slot.kind,
                t1,
                t2,
                predicate: Predicate { axis: slot.axis, sign: slot.sign, offset: params.b[j] },
            }
        })
        .collect();

    let mut seen = HashSet::new();
    let mut clauses = Vec::new();
    for i in 0..shape.rows {
        let on: Vec<usize> = (0..shape.k()).filter(|&j| params.gate(i, j) >= 0.5).collect();
        if on.is_empty() || !seen.insert(on.clone()) {
            continue;
        }
        clauses.push(on.into_iter().map(|j| atoms[j]).collect());
    }
    Formula::dnf(clauses)
}

/// Greedy removal of gates that do not change the exact-semantics training
/// MCR. Entries are visited row-major; each accepted removal becomes the
/// new reference. Returns the binary simplified gate matrix.
pub fn simplify(params: &ModelParams, shape: &NetworkShape, data: &LabeledDataset) -> Result<Vec<f64>> {
    let mut gates: Vec<f64> = params.gates.iter().map(|&c| if c >= 0.5 { 1.0 } else { 0.0 }).collect();
    let with = |gates: &[f64]| ModelParams { gates: gates.to_vec(), ..params.clone() };
    let baseline = stl::mcr(data, &extract_formula(&with(&gates), shape)?)?;
    for idx in 0..gates.len() {
        if gates[idx] == 0.0 {
            continue;
        }
        let mut trial = gates.clone();
        trial[idx] = 0.0;
        let f = match extract_formula(&with(&trial), shape) {
            Ok(f) => f,
            Err(Error::EmptyFormula) => continue,
            Err(e) => return Err(e),
        };
        if stl::mcr(data, &f)? == baseline {
            gates = trial;
        }
    }
    Ok(gates)
}

/// Initial parameters: offsets uniform between the 10th and 90th percentile
/// of each slot's signed axis, full windows, gates uniform in `[0.4, 0.6]`.
pub fn init_params(data: &LabeledDataset, shape: &NetworkShape, rng: &mut ChaCha8Rng) -> ModelParams {
    let len = data.signal_len();
    let k = shape.k();
    let b = shape
        .slots
        .iter()
        .map(|slot| {
            let sign = slot.sign.value();
            let mut vals: Vec<f64> =
                data.iter().flat_map(|(s, _)| (0..s.len()).map(move |t| sign * s.at(t, slot.axis))).collect();
            vals.sort_by(f64::total_cmp);
            let lo = percentile(&vals, 0.1);
            let hi = percentile(&vals, 0.9);
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        })
        .collect();
    ModelParams {
        b,
        t1: vec![0.0; k],
        t2: vec![len.saturating_sub(1) as f64; k],
        gates: (0..shape.rows * k).map(|_| rng.random_range(0.4..0.6)).collect(),
        rows: shape.rows,
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

struct SampleGrad {
    loss: f64,
    grad: Vec<f64>,
}

fn flatten(p: &ModelParams) -> Vec<f64> {
    [p.b.as_slice(), &p.t1, &p.t2, &p.gates].concat()
}

fn unflatten(flat: &[f64], like: &ModelParams) -> ModelParams {
    let k = like.k();
    ModelParams {
        b: flat[..k].to_vec(),
        t1: flat[k..2 * k].to_vec(),
        t2: flat[2 * k..3 * k].to_vec(),
        gates: flat[3 * k..].to_vec(),
        rows: like.rows,
    }
}

fn sample_grad(
    data: &LabeledDataset,
    idx: usize,
    params: &ModelParams,
    shape: &NetworkShape,
    p: &ActivationParams,
    gate_seed: Option<u64>,
) -> Result<SampleGrad> {
    let (s, y) = &data.samples()[idx];
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params)?;
    let mut rng;
    let draw = match gate_seed {
        Some(seed) => {
            rng = ChaCha8Rng::seed_from_u64(seed);
            GateDraw::Sample(&mut rng)
        }
        None => GateDraw::Threshold,
    };
    let r = forward_var(&mut tape, s, &vars, shape, p, draw)?;
    let margin = tape.scale(r, -(*y as f64))?;
    let l = tape.exp(margin)?;
    let value = tape.scalar(l);
    let g = tape.backward(l)?;
    let grad = [g.wrt(vars.b), g.wrt(vars.t1), g.wrt(vars.t2), g.wrt(vars.gates)].concat();
    Ok(SampleGrad { loss: value, grad })
}

/// Minimizes the mean exponential margin loss by mini-batch gradient steps,
/// projecting after every step, then extracts and simplifies the formula.
pub fn train(data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    train_with_progress(data, cfg, |_| {})
}

pub fn train_with_progress(
    data: &LabeledDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot train on an empty dataset".into()));
    }
    if !data.has_both_labels() {
        return Err(Error::InvalidInput("training data needs both labels".into()));
    }
    let raw = data;
    let len = data.signal_len();
    let shape = cfg.shape(data.dim())?;
    let scaling = if cfg.standardize { AxisScaling::fit(raw) } else { AxisScaling::identity(raw.dim()) };
    let scaled = scaling.apply(raw)?;
    let data = &scaled;
    let final_p = cfg.activation(cfg.slope_final);
    // every sparse softmax in the network sees at most this many inputs
    let widest = len.max(shape.k()).max(shape.rows);
    if !cfg.allow_unsound {
        // the bound tightens as beta grows, so the smallest beta decides
        require_sound(&ActivationParams { beta: cfg.beta_start(widest), ..final_p }, widest)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(data, &shape, &mut rng);
    let k = shape.k();
    let lrs: Vec<f64> =
        (0..3 * k).map(|_| cfg.learning_rate).chain((0..shape.rows * k).map(|_| cfg.gate_learning_rate)).collect();
    let mut opt = optim::build(cfg.optimizer, lrs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let p = cfg.activation_at(epoch, widest);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<SampleGrad>> = batch
                .par_iter()
                .enumerate()
                .map(|(pos, &idx)| {
                    let gate_seed = match cfg.gate_mode {
                        GateMode::Threshold => None,
                        GateMode::Sample => Some(gate_seed(cfg.seed, epoch, step, pos)),
                    };
                    sample_grad(data, idx, &params, &shape, &p, gate_seed)
                })
                .collect();
            let mut grad = vec![0.0; 3 * k + shape.rows * k];
            for r in results {
                let sg = r.map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch, loss: f64::INFINITY },
                    other => other,
                })?;
                loss_sum += sg.loss;
                for (a, b) in grad.iter_mut().zip(&sg.grad) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let mut flat = flatten(&params);
            opt.step(&mut flat, &grad);
            params = project_params(unflatten(&flat, &params), len);
        }
        let loss = loss_sum / data.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        let stats = EpochStats {
            epoch,
            loss,
            mcr: network_mcr(&params, &shape, &p, data)?,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        history.push(stats);
    }

    let mut params = snap_windows(params);
    for (b, slot) in params.b.iter_mut().zip(&shape.slots) {
        *b = scaling.offset_to_raw(slot, *b);
    }
    let data = raw;
    let formula = extract_formula(&params, &shape)?;
    let formula_mcr = stl::mcr(data, &formula)?;
    let simplified_gates = simplify(&params, &shape, data)?;
    let simplified = extract_formula(&ModelParams { gates: simplified_gates.clone(), ..params.clone() }, &shape)?;
    let simplified_mcr = stl::mcr(data, &simplified)?;

    Ok(TrainReport {
        config: cfg.clone(),
        shape,
        activation: final_p,
        signal_len: len,
        scaling,
        history,
        params,
        simplified_gates,
        formula: formula.to_string(),
        simplified_formula: simplified.to_string(),
        formula_mcr,
        simplified_mcr,
    })
}

fn gate_seed(seed: u64, epoch: usize, step: usize, pos: usize) -> u64 {
    let mut h = seed ^ 0xD1B5_4A32_D192_ED03;
    for v in [epoch as u64, step as u64, pos as u64] {
        h = (h ^ v).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(29);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::soundness_bound_check;
    use crate::stl::{parse_formula, Sign, TemporalKind};

    #[test]
    fn loss_values() {
        assert_eq!(loss(1, 0.0), 1.0);
        assert!((loss(1, 2.0) - 0.1353352832366127).abs() < 1e-15);
        assert!((loss(-1, 2.0) - 7.38905609893065).abs() < 1e-12);
    }

    #[test]
    fn loss_decreases_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-20.0..20.0);
            let b: f64 = rng.random_range(-20.0..20.0);
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            // margin y*R: y = 1 uses R directly, y = -1 uses -R
            assert!(loss(1, hi) < loss(1, lo));
            assert!(loss(-1, -hi) < loss(-1, -lo));
        }
    }

    #[test]
    fn clip_values() {
        assert_eq!(clip(1.3), 1.0);
        assert_eq!(clip(-0.2), 0.0);
        assert_eq!(clip(0.4), 0.4);
    }

    #[test]
    fn projection_restores_invariants() {
        let p = ModelParams {
            b: vec![0.0; 3],
            t1: vec![-2.0, 7.0, 3.0],
            t2: vec![50.0, 5.0, 3.5],
            gates: vec![1.3, -0.2, 0.4, 0.5, 2.0, 0.0],
            rows: 2,
        };
        let q = project_params(p, 40);
        assert_eq!(q.gates, vec![1.0, 0.0, 0.4, 0.5, 1.0, 0.0]);
        assert_eq!(q.t1, vec![0.0, 6.0, 3.0]);
        assert_eq!(q.t2, vec![39.0, 6.0, 3.5]);
    }

    fn four_slot_shape(rows: usize) -> NetworkShape {
        let slot = |axis, kind| Slot { axis, sign: Sign::Pos, kind };
        NetworkShape {
            slots: vec![
                slot(0, TemporalKind::Always),
                slot(0, TemporalKind::Eventually),
                slot(1, TemporalKind::Always),
                slot(1, TemporalKind::Eventually),
            ],
            rows,
        }
    }

    fn four_slot_params(gates: Vec<f64>) -> ModelParams {
        ModelParams {
            b: vec![1.0, 2.0, 3.0, 4.0],
            t1: vec![0.2, 1.0, 2.7, 0.0],
            t2: vec![3.4, 1.0, 5.0, 0.0],
            rows: gates.len() / 4,
            gates,
        }
    }

    #[test]
    fn extraction_worked_example() {
        let shape = four_slot_shape(2);
        let params = four_slot_params(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let f = extract_formula(&params, &shape).unwrap();
        assert_eq!(f.to_string(), "(G[0,4](x0 > 1) & F[1,1](x0 > 2)) | (G[2,5](x1 > 3) & F[0,0](x1 > 4))");
        assert_eq!(f, parse_formula(&f.to_string()).unwrap());
    }

    #[test]
    fn extraction_thresholds_and_dedupes() {
        let shape = four_slot_shape(3);
        let params = four_slot_params(vec![0.7, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.49, 0.5, 0.1, 0.3, 0.0]);
        let f = extract_formula(&params, &shape).unwrap();
        assert_eq!(f.to_string(), "G[0,4](x0 > 1)");
        let zeros = four_slot_params(vec![0.0; 8]);
        assert!(matches!(extract_formula(&zeros, &four_slot_shape(2)), Err(Error::EmptyFormula)));
    }

    fn one_dim_data() -> (LabeledDataset, NetworkShape) {
        // positives stay above 1 the whole time, negatives dip below
        let mut samples = Vec::new();
        for i in 0..10 {
            let c = 2.0 + i as f64 * 0.1;
            samples.push((Signal::scalar(&[c, c, c, c]).unwrap(), 1));
            samples.push((Signal::scalar(&[c, 0.0, c, c]).unwrap(), -1));
        }
        let shape = NetworkShape {
            slots: vec![
                Slot { axis: 0, sign: Sign::Pos, kind: TemporalKind::Always },
                Slot { axis: 0, sign: Sign::Pos, kind: TemporalKind::Eventually },
            ],
            rows: 1,
        };
        (LabeledDataset::new(samples).unwrap(), shape)
    }

    #[test]
    fn simplify_drops_redundant_gate() {
        let (data, shape) = one_dim_data();
        let params =
            ModelParams { b: vec![1.0, 1.0], t1: vec![0.0, 0.0], t2: vec![3.0, 3.0], gates: vec![1.0, 1.0], rows: 1 };
        let before = stl::mcr(&data, &extract_formula(&params, &shape).unwrap()).unwrap();
        let g = simplify(&params, &shape, &data).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        let after = stl::mcr(&data, &extract_formula(&ModelParams { gates: g, ..params }, &shape).unwrap()).unwrap();
        assert_eq!((before, after), (0.0, 0.0));
    }

    #[test]
    fn simplify_keeps_essential_gates() {
        let (data, shape) = one_dim_data();
        let params =
            ModelParams { b: vec![1.0, 1.0], t1: vec![0.0, 0.0], t2: vec![3.0, 3.0], gates: vec![1.0, 0.0], rows: 1 };
        assert_eq!(simplify(&params, &shape, &data).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn snapping_rounds_outward() {
        let p = snap_windows(four_slot_params(vec![1.0; 4]));
        assert_eq!(p.t1, vec![0.0, 1.0, 2.0, 0.0]);
        assert_eq!(p.t2, vec![4.0, 1.0, 5.0, 0.0]);
    }

    #[test]
    fn scaling_maps_offsets_back_exactly() {
        let data = LabeledDataset::new(vec![
            (Signal::from_rows(&[vec![1.0, 10.0], vec![3.0, 30.0]]).unwrap(), 1),
            (Signal::from_rows(&[vec![5.0, 50.0], vec![7.0, 70.0]]).unwrap(), -1),
        ])
        .unwrap();
        let sc = AxisScaling::fit(&data);
        assert_eq!(sc.mean, vec![4.0, 40.0]);
        assert!((sc.scale[0] - 5f64.sqrt()).abs() < 1e-12);
        let scaled = sc.apply(&data).unwrap();
        let neg = Slot { axis: 1, sign: Sign::Neg, kind: TemporalKind::Always };
        // -x1' > 0.5 in standardized units is -x1 > -40 + 0.5 * scale
        let raw_b = sc.offset_to_raw(&neg, 0.5);
        for ((s, _), (z, _)) in data.samples().iter().zip(scaled.samples()) {
            for t in 0..2 {
                let lhs = -z.at(t, 1) - 0.5 > 0.0;
                let rhs = -s.at(t, 1) - raw_b > 0.0;
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn slope_schedule_is_linear() {
        let cfg = TrainConfig { epochs: 5, ..Default::default() };
        let s: Vec<f64> = (0..5).map(|e| cfg.slope_at(e)).collect();
        assert_eq!(s, vec![3.0, 2.5, 2.0, 1.5, 1.0]);
        let one = TrainConfig { epochs: 1, ..Default::default() };
        assert_eq!(one.slope_at(0), 1.0);
        let hot = TrainConfig { epochs: 3, beta: 32.0, beta_initial: Some(2.0), ..Default::default() };
        let b: Vec<f64> = (0..3).map(|e| hot.beta_at(e, 40)).collect();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] - 8.0).abs() < 1e-12 && (b[2] - 32.0).abs() < 1e-12);
        assert_eq!(cfg.beta_at(4, 40), 25.0);
        assert_eq!(cfg.beta_start(40), (1.1 * min_sound_beta(1.0, 40)).max(2.0));
        let long = cfg.beta_start(500);
        assert!(long > 2.0 && soundness_bound_check(&cfg.activation(1.0).with_beta(long), 500));
        let flat = TrainConfig { beta_initial: Some(25.0), ..cfg.clone() };
        assert_eq!(flat.beta_at(0, 40), 25.0);
    }

    #[test]
    fn config_parsing() {
        let cfg =
            TrainConfig::from_toml("epochs = 7\nbeta = 12.5\noptimizer = \"gd\"\ngate_mode = \"sample\"\n").unwrap();
        assert_eq!(cfg.epochs, 7);
        assert_eq!(cfg.beta, 12.5);
        assert_eq!(cfg.optimizer, OptimizerKind::Gd);
        assert_eq!(cfg.gate_mode, GateMode::Sample);
        assert_eq!(cfg.m, TrainConfig::default().m);
        assert!(TrainConfig::from_toml("epoch = 3").is_err());
        assert!(TrainConfig { epochs: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn refuses_unsound_config() {
        let (data, _) = one_dim_data();
        let cfg = TrainConfig { beta: 0.001, epochs: 1, ..Default::default() };
        assert!(matches!(train(&data, &cfg), Err(Error::Unsound { .. })));
        let cfg = TrainConfig { allow_unsound: true, ..cfg };
        assert!(train(&data, &cfg).is_ok());
    }

    #[test]
    fn rejects_single_class_data() {
        let (data, _) = one_dim_data();
        let only_pos = data.relabel(1).unwrap();
        assert!(matches!(train(&only_pos, &TrainConfig::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn small_problem_trains_and_is_deterministic() {
        let (data, _) = one_dim_data();
        let cfg = TrainConfig { epochs: 30, batch_size: 5, seed: 3, ..Default::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.history.len(), 30);
        assert!(a.simplified_mcr <= a.formula_mcr);
        assert_eq!(a.formula_mcr, 0.0, "{}", a.formula);
        let back = TrainReport::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back.params, a.params);
    }

    #[test]
    fn sampled_gates_train_deterministically() {
        let (data, _) = one_dim_data();
        let cfg = TrainConfig { epochs: 5, batch_size: 4, seed: 8, gate_mode: GateMode::Sample, ..Default::default() };
        let a = train(&data, &cfg).unwrap();
        let b = train(&data, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }
}
