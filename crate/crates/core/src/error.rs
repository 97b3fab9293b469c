use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time bounds out of range for `{atom}`: window ends at {end}, signal has {len} samples")]
    Bounds { atom: String, end: usize, len: usize },

    #[error("axis {axis} out of range for a {dim}-dimensional signal")]
    Axis { axis: usize, dim: usize },

    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("nested temporal operator at byte {pos}; only STL(1) formulas are supported")]
    NestedTemporal { pos: usize },

    #[error("shape mismatch in `{op}`: {lhs} vs {rhs}")]
    Shape { op: &'static str, lhs: usize, rhs: usize },

    #[error("non-finite value produced by node {node} (`{op}`)")]
    NonFinite { node: usize, op: &'static str },

    #[error("backward already ran on this tape; record a new forward pass first")]
    BackwardConsumed,

    #[error("backward needs a scalar output, got length {0}")]
    NonScalarOutput(usize),

    #[error("vacuous selection: no element of the window carries weight")]
    VacuousSelection,

    #[error("empty formula: every conjunction row is gated off")]
    EmptyFormula,

    #[error(
        "unsound activation parameters: h*exp(beta*h) = {lhs:.6e} is not greater than \
         (l-1)*exp(-1)/beta = {rhs:.6e} (beta = {beta}, h = {h}, l = {len})"
    )]
    Unsound { beta: f64, h: f64, len: usize, lhs: f64, rhs: f64 },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
