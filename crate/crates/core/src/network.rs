//! The four-layer network: axis-aligned predicates, temporal operators
//! with a learnable time window, gated conjunctions and a disjunction.
//!
//! Every layer records onto an [`autodiff::Tape`](crate::autodiff::Tape) so
//! the trainer can differentiate the network output with respect to the
//! predicate offsets, the window bounds and the gate matrix. The plain
//! `f64` helpers (`sparse_softmax`, `time_indicator`, `predict`, ...) run
//! the same code on a throwaway tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::stl::{Sign, Signal, TemporalKind};

/// How the max/min approximation weights its inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftmaxMode {
    /// Rescale so the selected maximum sits at `h` before the softmax.
    #[default]
    Sparse,
    /// Plain softmax over the masked inputs, without rescaling. Not sound.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub beta: f64,
    pub h: f64,
    pub eps: f64,
    /// Width of the time window's linear shoulders, in samples.
    pub slope: f64,
    #[serde(default)]
    pub mode: SoftmaxMode,
}

impl Default for ActivationParams {
    fn default() -> Self {
        Self { beta: 25.0, h: 1.0, eps: 1e-8, slope: 1.0, mode: SoftmaxMode::Sparse }
    }
}

impl ActivationParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta > 0.0
            && self.beta.is_finite()
            && self.h > 0.0
            && self.h.is_finite()
            && self.eps >= 0.0
            && self.eps.is_finite()
            && self.slope > 0.0
            && self.slope.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid activation parameters {self:?}")))
        }
    }

    pub fn with_slope(self, slope: f64) -> Self {
        Self { slope, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }
}

/// Both sides of the soundness inequality `h e^(beta h) > (l-1) e^(-1) / beta`.
pub fn soundness_terms(p: &ActivationParams, len: usize) -> (f64, f64) {
    let lhs = p.h * (p.beta * p.h).exp();
    let rhs = len.saturating_sub(1) as f64 * (-1.0f64).exp() / p.beta;
    (lhs, rhs)
}

/// Whether the sparse softmax is sign-preserving for inputs of length `len`.
pub fn soundness_bound_check(p: &ActivationParams, len: usize) -> bool {
    if len <= 1 {
        return true;
    }
    let (lhs, rhs) = soundness_terms(p, len);
    lhs > rhs
}

/// Smallest `beta` (to within 1e-9 relative) satisfying the soundness bound
/// for the given `h` and `len`. The left side grows and the right side
/// shrinks in `beta`, so bisection applies.
pub fn min_sound_beta(h: f64, len: usize) -> f64 {
    let sound = |beta: f64| soundness_bound_check(&ActivationParams { beta, h, ..Default::default() }, len);
    if len <= 1 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while !sound(hi) {
        lo = hi;
        hi *= 2.0;
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if sound(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// `Ok` when sound, otherwise the [`Error::Unsound`] naming both sides.
pub fn require_sound(p: &ActivationParams, len: usize) -> Result<()> {
    if soundness_bound_check(p, len) {
        return Ok(());
    }
    let (lhs, rhs) = soundness_terms(p, len);
    Err(Error::Unsound { beta: p.beta, h: p.h, len, lhs, rhs })
}

/// Sparse softmax of `r` over the subset weighted by `w`.
///
/// `r' = r*w`, `r'' = h r' / (|max r'| + eps)`, `q = softmax(beta r'')` and the
/// result is `sum(r w q) / sum(w q)`. The softmax normaliser cancels in the
/// final ratio, so the exponent is shifted by the largest selected value;
/// this keeps the weights representable when `|max r'|` is tiny. Exponents
/// of unselected entries are capped at zero for the same reason.
pub fn sparse_softmax_var(tape: &mut Tape, r: Var, w: Var, p: &ActivationParams) -> Result<Var> {
    let rw = tape.mul(r, w)?;
    let scaled = match p.mode {
        SoftmaxMode::Sparse => {
            let m = tape.abs_max(rw)?;
            let eps = tape.constant(p.eps)?;
            let den = tape.add(m, eps)?;
            let unit = tape.div(rw, den)?;
            tape.scale(unit, p.h)?
        }
        SoftmaxMode::Standard => rw,
    };
    let z = tape.scale(scaled, p.beta)?;

    let shift = tape
        .value(z)
        .iter()
        .zip(tape.value(w))
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(&zi, _)| zi)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::VacuousSelection);
    }
    let shift = tape.constant(shift)?;
    let zs = tape.sub(z, shift)?;
    // selected entries are already <= 0; unselected ones carry zero weight
    let zero = tape.constant(0.0)?;
    let zs = tape.min(zs, zero)?;
    let q = tape.exp(zs)?;
    let wq = tape.mul(w, q)?;
    let den = tape.sum(wq)?;
    let d = tape.scalar(den);
    if d <= 0.0 || d < p.eps {
        return Err(Error::VacuousSelection);
    }
    let num = tape.dot(r, wq)?;
    tape.div(num, den)
}

/// `-sparse_softmax(-r, w)`: a soft minimum whose sign follows the true
/// minimum of the selected elements.
pub fn sparse_softmin_var(tape: &mut Tape, r: Var, w: Var, p: &ActivationParams) -> Result<Var> {
    let neg = tape.neg(r)?;
    let m = sparse_softmax_var(tape, neg, w, p)?;
    tape.neg(m)
}

/// Trapezoidal soft indicator of `[t1, t2]` on the grid `0..len`.
///
/// Rising ramp `(relu(d - t1 + slope) - relu(d - t1)) / slope`, falling ramp
/// `(relu(t2 + slope - d) - relu(t2 - d)) / slope`, and their elementwise
/// minimum.
pub fn time_indicator_var(tape: &mut Tape, t1: Var, t2: Var, slope: f64, len: usize) -> Result<Var> {
    let grid = tape.leaf((0..len).map(|i| i as f64).collect())?;
    let sl = tape.constant(slope)?;

    let a = tape.sub(grid, t1)?;
    let a_shift = tape.add(a, sl)?;
    let up_hi = tape.relu(a_shift)?;
    let up_lo = tape.relu(a)?;
    let rising = tape.sub(up_hi, up_lo)?;

    let b = tape.sub(t2, grid)?;
    let b_shift = tape.add(b, sl)?;
    let down_hi = tape.relu(b_shift)?;
    let down_lo = tape.relu(b)?;
    let falling = tape.sub(down_hi, down_lo)?;

    let m = tape.min(rising, falling)?;
    tape.scale(m, 1.0 / slope)
}

pub fn sparse_softmax(r: &[f64], w: &[f64], p: &ActivationParams) -> Result<f64> {
    eval_pair(r, w, |t, r, w| sparse_softmax_var(t, r, w, p))
}

pub fn sparse_softmin(r: &[f64], w: &[f64], p: &ActivationParams) -> Result<f64> {
    eval_pair(r, w, |t, r, w| sparse_softmin_var(t, r, w, p))
}

fn eval_pair(r: &[f64], w: &[f64], f: impl Fn(&mut Tape, Var, Var) -> Result<Var>) -> Result<f64> {
    if r.len() != w.len() {
        return Err(Error::Shape { op: "sparse_softmax", lhs: r.len(), rhs: w.len() });
    }
    let mut tape = Tape::new();
    let rv = tape.leaf(r.to_vec())?;
    let wv = tape.leaf(w.to_vec())?;
    let out = f(&mut tape, rv, wv)?;
    Ok(tape.scalar(out))
}

pub fn time_indicator(t1: f64, t2: f64, slope: f64, len: usize) -> Result<Vec<f64>> {
    if !(slope > 0.0) {
        return Err(Error::InvalidInput(format!("time-function slope must be positive, got {slope}")));
    }
    let mut tape = Tape::new();
    let a = tape.constant(t1)?;
    let b = tape.constant(t2)?;
    let w = time_indicator_var(&mut tape, a, b, slope, len)?;
    Ok(tape.value(w).to_vec())
}

/// Fixed structure of one temporal slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub axis: usize,
    pub sign: Sign,
    pub kind: TemporalKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub slots: Vec<Slot>,
    /// Number of conjunction rows feeding the disjunction.
    pub rows: usize,
}

impl NetworkShape {
    /// Slots cycle through every `(axis, sign)` pair, each appearing twice in
    /// a row with kinds alternating always/eventually. `k = 4 * dim` covers
    /// every pair with both kinds.
    pub fn cycled(dim: usize, k: usize, rows: usize) -> Result<Self> {
        if dim == 0 || k == 0 || rows == 0 {
            return Err(Error::InvalidInput(format!("network shape needs dim, k, m >= 1 (got {dim}, {k}, {rows})")));
        }
        let slots = (0..k)
            .map(|j| {
                let combo = (j / 2) % (2 * dim);
                Slot {
                    axis: combo / 2,
                    sign: if combo.is_multiple_of(2) { Sign::Pos } else { Sign::Neg },
                    kind: if j % 2 == 0 { TemporalKind::Always } else { TemporalKind::Eventually },
                }
            })
            .collect();
        Ok(Self { slots, rows })
    }

    pub fn k(&self) -> usize {
        self.slots.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.slots.is_empty() || self.rows == 0 {
            return Err(Error::InvalidInput("network shape needs k >= 1 and m >= 1".into()));
        }
        if let Some(s) = self.slots.iter().find(|s| s.axis >= dim) {
            return Err(Error::Axis { axis: s.axis, dim });
        }
        Ok(())
    }
}

/// Trainable quantities. `gates` is the `rows x k` conjunction-disjunction
/// matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub b: Vec<f64>,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub gates: Vec<f64>,
    pub rows: usize,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.b.len()
    }

    pub fn gate(&self, i: usize, j: usize) -> f64 {
        self.gates[i * self.k() + j]
    }

    pub fn gate_row(&self, i: usize) -> &[f64] {
        let k = self.k();
        &self.gates[i * k..(i + 1) * k]
    }

    pub fn check(&self, shape: &NetworkShape) -> Result<()> {
        let k = shape.k();
        if self.b.len() != k || self.t1.len() != k || self.t2.len() != k {
            return Err(Error::Shape { op: "params", lhs: self.b.len(), rhs: k });
        }
        if self.rows != shape.rows || self.gates.len() != shape.rows * k {
            return Err(Error::Shape { op: "gates", lhs: self.gates.len(), rhs: shape.rows * k });
        }
        Ok(())
    }
}

/// Parameter leaves of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub b: Var,
    pub t1: Var,
    pub t2: Var,
    pub gates: Var,
}

impl ParamVars {
    pub fn record(tape: &mut Tape, params: &ModelParams) -> Result<Self> {
        Ok(Self {
            b: tape.leaf(params.b.clone())?,
            t1: tape.leaf(params.t1.clone())?,
            t2: tape.leaf(params.t2.clone())?,
            gates: tape.leaf(params.gates.clone())?,
        })
    }
}

/// Row `j` is `sign_j * s[:, axis_j] - b_j`.
pub fn predicate_layer_var(tape: &mut Tape, s: &Signal, shape: &NetworkShape, b: Var) -> Result<Vec<Var>> {
    shape.validate(s.dim())?;
    shape
        .slots
        .iter()
        .enumerate()
        .map(|(j, slot)| {
            let sign = slot.sign.value();
            let col = tape.leaf(s.column(slot.axis).into_iter().map(|v| sign * v).collect())?;
            let bj = tape.index(b, j)?;
            tape.sub(col, bj)
        })
        .collect()
}

pub fn predicate_layer(s: &Signal, shape: &NetworkShape, b: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let bv = tape.leaf(b.to_vec())?;
    let rows = predicate_layer_var(&mut tape, s, shape, bv)?;
    Ok(rows.into_iter().map(|r| tape.value(r).to_vec()).collect())
}

/// One value per slot: soft max (eventually) or soft min (always) of the
/// predicate row over its time window. Returns a length-`k` node.
pub fn temporal_layer_var(
    tape: &mut Tape,
    rows: &[Var],
    t1: Var,
    t2: Var,
    p: &ActivationParams,
    shape: &NetworkShape,
) -> Result<Var> {
    let mut out = Vec::with_capacity(rows.len());
    for (j, (&row, slot)) in rows.iter().zip(&shape.slots).enumerate() {
        let len = tape.value(row).len();
        let a = tape.index(t1, j)?;
        let b = tape.index(t2, j)?;
        let w = time_indicator_var(tape, a, b, p.slope, len)?;
        out.push(match slot.kind {
            TemporalKind::Eventually => sparse_softmax_var(tape, row, w, p)?,
            TemporalKind::Always => sparse_softmin_var(tape, row, w, p)?,
        });
    }
    tape.concat(&out)
}

/// Soft minimum of `g` over the slots each binary gate row selects. Rows
/// with no selected slot come back as `None`.
pub fn conjunction_layer_var(
    tape: &mut Tape,
    g: Var,
    gate_rows: &[Var],
    p: &ActivationParams,
) -> Result<Vec<Option<Var>>> {
    gate_rows
        .iter()
        .map(|&row| {
            if tape.value(row).iter().all(|&c| c == 0.0) {
                Ok(None)
            } else {
                sparse_softmin_var(tape, g, row, p).map(Some)
            }
        })
        .collect()
}

/// Soft maximum over the active conjunction rows; this is the network output.
pub fn disjunction_layer_var(tape: &mut Tape, hvals: &[Option<Var>], p: &ActivationParams) -> Result<Var> {
    let active: Vec<Var> = hvals.iter().flatten().copied().collect();
    if active.is_empty() {
        return Err(Error::EmptyFormula);
    }
    let h = tape.concat(&active)?;
    let d = tape.leaf(vec![1.0; active.len()])?;
    sparse_softmax_var(tape, h, d, p)
}

/// How the binary gates are read from the real-valued gate matrix.
pub enum GateDraw<'a> {
    Threshold,
    Sample(&'a mut dyn rand::RngCore),
}

/// Full forward pass; returns the scalar output `R`.
pub fn forward_var(
    tape: &mut Tape,
    s: &Signal,
    vars: &ParamVars,
    shape: &NetworkShape,
    p: &ActivationParams,
    draw: GateDraw<'_>,
) -> Result<Var> {
    let rows = predicate_layer_var(tape, s, shape, vars.b)?;
    let g = temporal_layer_var(tape, &rows, vars.t1, vars.t2, p, shape)?;
    let gates = match draw {
        GateDraw::Threshold => tape.ste_binarize(vars.gates)?,
        GateDraw::Sample(rng) => tape.ste_sample(vars.gates, rng)?,
    };
    let k = shape.k();
    let gate_rows = (0..shape.rows).map(|i| tape.slice(gates, i * k, k)).collect::<Result<Vec<_>>>()?;
    let h = conjunction_layer_var(tape, g, &gate_rows, p)?;
    disjunction_layer_var(tape, &h, p)
}

/// Network output for one signal with threshold gates.
pub fn predict(s: &Signal, params: &ModelParams, shape: &NetworkShape, p: &ActivationParams) -> Result<f64> {
    params.check(shape)?;
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params)?;
    let r = forward_var(&mut tape, s, &vars, shape, p, GateDraw::Threshold)?;
    Ok(tape.scalar(r))
}

/// Same as [`predict`] but drawing stochastic gates from `rng`.
pub fn predict_sampled<R: Rng>(
    s: &Signal,
    params: &ModelParams,
    shape: &NetworkShape,
    p: &ActivationParams,
    rng: &mut R,
) -> Result<f64> {
    params.check(shape)?;
    let mut tape = Tape::new();
    let vars = ParamVars::record(&mut tape, params)?;
    let r = forward_var(&mut tape, s, &vars, shape, p, GateDraw::Sample(rng))?;
    Ok(tape.scalar(r))
}
