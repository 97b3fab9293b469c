//! Exact STL(1) formulas and their quantitative semantics.
//!
//! Everything here uses true `min`/`max`; it is the ground truth the
//! network's smooth operators are checked against.

mod display;
mod parser;

use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};

pub use display::format_formula;
pub use parser::parse_formula;

/// An `n`-dimensional discrete-time signal of length `l`, stored time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
    len: usize,
    dim: usize,
}

impl Signal {
    pub fn new(values: Vec<f64>, len: usize, dim: usize) -> Result<Self> {
        if len == 0 || dim == 0 {
            return Err(Error::InvalidInput(format!("signal needs positive length and dimension, got {len} x {dim}")));
        }
        if values.len() != len * dim {
            return Err(Error::InvalidInput(format!(
                "signal of shape {len} x {dim} needs {} values, got {}",
                len * dim,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite signal value at time {}, axis {}", i / dim, i % dim)));
        }
        Ok(Self { values, len, dim })
    }

    /// Builds a signal from one row per time step.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidInput("ragged signal rows".into()));
        }
        Self::new(rows.concat(), rows.len(), dim)
    }

    /// One-dimensional signal.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        Self::new(values.to_vec(), values.len(), 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, t: usize, axis: usize) -> f64 {
        self.values[t * self.dim + axis]
    }

    pub fn column(&self, axis: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.at(t, axis)).collect()
    }
}

/// Axis-aligned predicate `sign * s[axis] >= offset`.
///
/// `sign = -1` encodes `s[axis] <= -offset`; negated predicates fold into
/// this form by flipping the sign and negating the offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub axis: usize,
    pub sign: Sign,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

impl Predicate {
    /// `s[axis] > threshold`
    pub fn gt(axis: usize, threshold: f64) -> Self {
        Self { axis, sign: Sign::Pos, offset: threshold }
    }

    /// `s[axis] < threshold`
    pub fn lt(axis: usize, threshold: f64) -> Self {
        Self { axis, sign: Sign::Neg, offset: -threshold }
    }

    pub fn negate(self) -> Self {
        Self { axis: self.axis, sign: self.sign.flip(), offset: -self.offset }
    }

    /// The threshold as written in `x<i> > c` / `x<i> < c`.
    pub fn threshold(&self) -> f64 {
        self.sign.value() * self.offset
    }

    #[inline]
    pub fn robustness_at(&self, s: &Signal, t: usize) -> f64 {
        self.sign.value() * s.at(t, self.axis) - self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalKind {
    Always,
    Eventually,
}

/// An STL(1) formula: Boolean combinations of predicates and of temporal
/// operators applied to predicate-only bodies.
#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Temporal { kind: TemporalKind, t1: usize, t2: usize, body: Box<Formula> },
}

/// A single temporal operator over one predicate; the building block of
/// the DNF formulas the network produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalAtom {
    pub kind: TemporalKind,
    pub t1: usize,
    pub t2: usize,
    pub predicate: Predicate,
}

impl From<TemporalAtom> for Formula {
    fn from(a: TemporalAtom) -> Self {
        Formula::Temporal { kind: a.kind, t1: a.t1, t2: a.t2, body: Box::new(Formula::Pred(a.predicate)) }
    }
}

impl Formula {
    pub fn always(t1: usize, t2: usize, body: Formula) -> Self {
        Formula::Temporal { kind: TemporalKind::Always, t1, t2, body: Box::new(body) }
    }

    pub fn eventually(t1: usize, t2: usize, body: Formula) -> Self {
        Formula::Temporal { kind: TemporalKind::Eventually, t1, t2, body: Box::new(body) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    /// Disjunction of conjunctions of atoms. Singleton clauses and a
    /// singleton disjunction are unwrapped so printing stays minimal.
    pub fn dnf(clauses: Vec<Vec<TemporalAtom>>) -> Result<Self> {
        if clauses.is_empty() || clauses.iter().any(Vec::is_empty) {
            return Err(Error::EmptyFormula);
        }
        let mut terms: Vec<Formula> = clauses
            .into_iter()
            .map(|c| {
                let mut atoms: Vec<Formula> = c.into_iter().map(Formula::from).collect();
                if atoms.len() == 1 {
                    atoms.pop().unwrap()
                } else {
                    Formula::And(atoms)
                }
            })
            .collect();
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::Or(terms) })
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, Formula::Temporal { .. })
    }

    /// Number of temporal operators in the tree.
    pub fn temporal_count(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(f) => f.temporal_count(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::temporal_count).sum(),
            Formula::Temporal { body, .. } => 1 + body.temporal_count(),
        }
    }

    /// True when no temporal operator sits below another one.
    pub fn is_stl1(&self) -> bool {
        match self {
            Formula::Pred(_) => true,
            Formula::Not(f) => f.is_stl1(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().all(Formula::is_stl1),
            Formula::Temporal { body, .. } => body.temporal_count() == 0,
        }
    }

    /// Number of samples after `t` the formula looks at.
    pub fn horizon(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(f) => f.horizon(),
            Formula::And(fs) | Formula::Or(fs) => fs.iter().map(Formula::horizon).max().unwrap_or(0),
            Formula::Temporal { t2, body, .. } => t2 + body.horizon(),
        }
    }
}

/// Exact robustness `r(s, f, t)`.
pub fn robustness(s: &Signal, f: &Formula, t: usize) -> Result<f64> {
    match f {
        Formula::Pred(p) => {
            if p.axis >= s.dim() {
                return Err(Error::Axis { axis: p.axis, dim: s.dim() });
            }
            if t >= s.len() {
                return Err(Error::Bounds { atom: f.to_string(), end: t, len: s.len() });
            }
            Ok(p.robustness_at(s, t))
        }
        Formula::Not(g) => Ok(-robustness(s, g, t)?),
        Formula::And(fs) => fold(s, fs, t, f64::INFINITY, f64::min),
        Formula::Or(fs) => fold(s, fs, t, f64::NEG_INFINITY, f64::max),
        Formula::Temporal { kind, t1, t2, body } => {
            if t1 > t2 {
                return Err(Error::InvalidInput(format!("reversed interval in `{f}`")));
            }
            let end = t + t2;
            if end >= s.len() {
                return Err(Error::Bounds { atom: f.to_string(), end, len: s.len() });
            }
            let mut window = (t + t1..=end).map(|tau| robustness(s, body, tau));
            match kind {
                TemporalKind::Always => window.try_fold(f64::INFINITY, |acc, r| Ok(f64::min(acc, r?))),
                TemporalKind::Eventually => window.try_fold(f64::NEG_INFINITY, |acc, r| Ok(f64::max(acc, r?))),
            }
        }
    }
}

fn fold(s: &Signal, fs: &[Formula], t: usize, init: f64, op: fn(f64, f64) -> f64) -> Result<f64> {
    if fs.is_empty() {
        return Err(Error::InvalidInput("empty conjunction or disjunction".into()));
    }
    fs.iter().try_fold(init, |acc, g| Ok(op(acc, robustness(s, g, t)?)))
}

/// `s |= f` iff `r(s, f, 0) > 0`; zero robustness is a violation.
pub fn satisfies(s: &Signal, f: &Formula) -> Result<bool> {
    Ok(robustness(s, f, 0)? > 0.0)
}

/// Predicted class from a robustness value: positive only when strictly above zero.
pub fn classify(r: f64) -> i8 {
    if r > 0.0 {
        1
    } else {
        -1
    }
}

/// Misclassification rate of `f` on `data` under exact semantics.
pub fn mcr(data: &LabeledDataset, f: &Formula) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidInput("misclassification rate of an empty dataset".into()));
    }
    let mut wrong = 0usize;
    for (s, y) in data.iter() {
        if classify(robustness(s, f, 0)?) != y {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}
