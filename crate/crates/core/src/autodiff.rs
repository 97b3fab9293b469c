//! A small reverse-mode tape over fixed-length `f64` arrays.
//!
//! Values are vectors; a scalar is a vector of length one. Binary
//! elementwise ops accept equal lengths or a length-one operand, which is
//! broadcast. Every recorded value is checked for finiteness, so a NaN or
//! infinity fails at the node that produced it.

use rand::Rng;

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Exp(Var),
    Relu(Var),
    Sum(Var),
    Dot(Var, Var),
    Scale(Var, f64),
    /// `|max v|`, with the index of the (first) maximum.
    AbsMax(Var, usize),
    Slice(Var, usize),
    Concat(Vec<Var>),
    /// Straight-through: forward is a binarization, backward is identity.
    Ste(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Exp(_) => "exp",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Dot(..) => "dot",
            Op::Scale(..) => "scale",
            Op::AbsMax(..) => "abs_max",
            Op::Slice(..) => "slice",
            Op::Concat(_) => "concat",
            Op::Ste(_) => "ste",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Vec<f64>,
}

/// Append-only record of a forward computation.
///
/// Nodes are stored in creation order, which is a topological order since
/// an op can only reference existing nodes. [`Tape::backward`] may run once;
/// call [`Tape::clear`] before recording the next forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of one scalar output with respect to every node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.consumed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Value of a length-one node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    fn push(&mut self, op: Op, value: Vec<f64>) -> Result<Var> {
        let id = self.nodes.len();
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { node: id, op: op.name() });
        }
        self.nodes.push(Node { op, value });
        Ok(Var(id))
    }

    /// Input or parameter. Constants are leaves whose gradient is ignored.
    pub fn leaf(&mut self, value: Vec<f64>) -> Result<Var> {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: f64) -> Result<Var> {
        self.push(Op::Leaf, vec![value])
    }

    fn zip(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        match (x.len(), y.len()) {
            (n, m) if n == m => Ok(x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect()),
            (_, 1) => Ok(x.iter().map(|&p| f(p, y[0])).collect()),
            (1, _) => Ok(y.iter().map(|&q| f(x[0], q)).collect()),
            (n, m) => Err(Error::Shape { op, lhs: n, rhs: m }),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("add", a, b, |p, q| p + q)?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("sub", a, b, |p, q| p - q)?;
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("mul", a, b, |p, q| p * q)?;
        self.push(Op::Mul(a, b), v)
    }

    /// Elementwise quotient. Callers guard the denominator.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("div", a, b, |p, q| p / q)?;
        self.push(Op::Div(a, b), v)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.iter().map(|x| x.exp()).collect();
        self.push(Op::Exp(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        self.push(Op::Relu(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.iter().sum();
        self.push(Op::Sum(a), vec![v])
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.len() != y.len() {
            return Err(Error::Shape { op: "dot", lhs: x.len(), rhs: y.len() });
        }
        let v = x.iter().zip(y).map(|(p, q)| p * q).sum();
        self.push(Op::Dot(a, b), vec![v])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.nodes[a.0].value.iter().map(|x| x * c).collect();
        self.push(Op::Scale(a, c), v)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    /// `|max_i v_i|`; the gradient goes to the first maximal element.
    pub fn abs_max(&mut self, a: Var) -> Result<Var> {
        let x = &self.nodes[a.0].value;
        if x.is_empty() {
            return Err(Error::Shape { op: "abs_max", lhs: 0, rhs: 1 });
        }
        let mut arg = 0;
        for (i, &xi) in x.iter().enumerate() {
            if xi > x[arg] {
                arg = i;
            }
        }
        let v = x[arg].abs();
        self.push(Op::AbsMax(a, arg), vec![v])
    }

    /// Elementwise minimum, as `a - relu(a - b)`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.sub(a, b)?;
        let r = self.relu(d)?;
        self.sub(a, r)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = &self.nodes[a.0].value;
        if start + len > x.len() {
            return Err(Error::Shape { op: "slice", lhs: x.len(), rhs: start + len });
        }
        let v = x[start..start + len].to_vec();
        self.push(Op::Slice(a, start), v)
    }

    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        self.slice(a, i, 1)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let v = parts.iter().flat_map(|p| self.nodes[p.0].value.iter().copied()).collect();
        self.push(Op::Concat(parts.to_vec()), v)
    }

    /// Deterministic gate: 1 where `c >= 0.5`, else 0.
    pub fn ste_binarize(&mut self, c: Var) -> Result<Var> {
        let v = self.nodes[c.0].value.iter().map(|&x| if x >= 0.5 { 1.0 } else { 0.0 }).collect();
        self.push(Op::Ste(c), v)
    }

    /// Stochastic gate: each entry is 1 with probability `c` (clamped to [0,1]).
    pub fn ste_sample<R: Rng + ?Sized>(&mut self, c: Var, rng: &mut R) -> Result<Var> {
        let v = self.nodes[c.0]
            .value
            .iter()
            .map(|&x| if rng.random::<f64>() < x.clamp(0.0, 1.0) { 1.0 } else { 0.0 })
            .collect();
        self.push(Op::Ste(c), v)
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&mut self, out: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        let n_out = self.nodes[out.0].value.len();
        if n_out != 1 {
            return Err(Error::NonScalarOutput(n_out));
        }
        self.consumed = true;

        let mut grads: Vec<Vec<f64>> = self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[out.0][0] = 1.0;

        for id in (0..=out.0).rev() {
            if grads[id].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g = std::mem::take(&mut grads[id]);
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], &g, |_, gi| gi);
                    accumulate(&mut grads[b.0], &g, |_, gi| gi);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[a.0], &g, |_, gi| gi);
                    accumulate(&mut grads[b.0], &g, |_, gi| -gi);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    accumulate(&mut grads[a.0], &g, |i, gi| gi * pick(y, i));
                    accumulate(&mut grads[b.0], &g, |i, gi| gi * pick(x, i));
                }
                Op::Div(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    accumulate(&mut grads[a.0], &g, |i, gi| gi / pick(y, i));
                    accumulate(&mut grads[b.0], &g, |i, gi| {
                        let q = pick(y, i);
                        -gi * pick(x, i) / (q * q)
                    });
                }
                Op::Exp(a) => {
                    let v = &node.value;
                    accumulate(&mut grads[a.0], &g, |i, gi| gi * v[i]);
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    accumulate(&mut grads[a.0], &g, |i, gi| if x[i] > 0.0 { gi } else { 0.0 });
                }
                Op::Sum(a) => {
                    for ga in grads[a.0].iter_mut() {
                        *ga += g[0];
                    }
                }
                Op::Dot(a, b) => {
                    let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    for (ga, yi) in grads[a.0].iter_mut().zip(y) {
                        *ga += g[0] * yi;
                    }
                    for (gb, xi) in grads[b.0].iter_mut().zip(x) {
                        *gb += g[0] * xi;
                    }
                }
                Op::Scale(a, c) => accumulate(&mut grads[a.0], &g, |_, gi| gi * c),
                Op::AbsMax(a, arg) => {
                    let m = self.nodes[a.0].value[*arg];
                    let s = if m > 0.0 {
                        1.0
                    } else if m < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    grads[a.0][*arg] += s * g[0];
                }
                Op::Slice(a, start) => {
                    for (ga, gi) in grads[a.0][*start..].iter_mut().zip(&g) {
                        *ga += gi;
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let gp = &mut grads[p.0];
                        let len = gp.len();
                        for (ga, gi) in gp.iter_mut().zip(&g[off..off + len]) {
                            *ga += gi;
                        }
                        off += len;
                    }
                }
                Op::Ste(a) => accumulate(&mut grads[a.0], &g, |_, gi| gi),
            }
            grads[id] = g;
        }
        Ok(Gradients { grads })
    }
}

#[inline]
fn pick(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

/// Adds `f(i, g_i)` into `target`, summing over `i` when `target` was broadcast.
#[inline]
fn accumulate(target: &mut [f64], g: &[f64], f: impl Fn(usize, f64) -> f64) {
    if target.len() == g.len() {
        for (i, (t, &gi)) in target.iter_mut().zip(g).enumerate() {
            *t += f(i, gi);
        }
    } else {
        target[0] += g.iter().enumerate().map(|(i, &gi)| f(i, gi)).sum::<f64>();
    }
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps`.
///
/// `f` records its computation on the tape given the parameter leaf. The
/// result is `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn gradient_check<F>(f: F, x: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let eval = |point: Vec<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.leaf(point)?;
        let out = f(&mut tape, p)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let p = tape.leaf(x.to_vec())?;
    let out = f(&mut tape, p)?;
    let analytic = tape.backward(out)?.wrt(p).to_vec();

    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let mut hi = x.to_vec();
        let mut lo = x.to_vec();
        hi[i] += eps;
        lo[i] -= eps;
        let numeric = (eval(hi)? - eval(lo)?) / (2.0 * eps);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}
