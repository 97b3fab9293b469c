use std::fmt;

use super::{Formula, Predicate, Sign, TemporalKind};

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.sign {
            Sign::Pos => '>',
            Sign::Neg => '<',
        };
        write!(f, "x{} {} {}", self.axis, op, self.threshold())
    }
}

impl fmt::Display for TemporalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalKind::Always => "G",
            TemporalKind::Eventually => "F",
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Temporal { kind, t1, t2, body } => write!(f, "{kind}[{t1},{t2}]({body})"),
            Formula::Not(g) => match g.as_ref() {
                Formula::Temporal { .. } | Formula::Not(_) => write!(f, "!{g}"),
                _ => write!(f, "!({g})"),
            },
            Formula::And(gs) => {
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" & ")?;
                    }
                    match g {
                        Formula::And(_) | Formula::Or(_) => write!(f, "({g})")?,
                        _ => write!(f, "{g}")?,
                    }
                }
                Ok(())
            }
            Formula::Or(gs) => {
                if let [only] = gs.as_slice() {
                    return write!(f, "{only}");
                }
                for (i, g) in gs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "({g})")?;
                }
                Ok(())
            }
        }
    }
}

/// Renders `f` in the text grammar accepted by [`super::parse_formula`].
pub fn format_formula(f: &Formula) -> String {
    f.to_string()
}
