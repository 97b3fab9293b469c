//! Recursive-descent parser for the formula text grammar.
//!
//! ```text
//! or      := and ('|' and)*
//! and     := unary ('&' unary)*
//! unary   := '!' unary | primary
//! primary := '(' or ')' | ('G' | 'F') '[' int ',' int ']' '(' or ')' | pred
//! pred    := 'x' int ('>' | '<') number
//! ```

use super::{Formula, Predicate, TemporalKind};
use crate::error::{Error, Result};

pub fn parse_formula(text: &str) -> Result<Formula> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, in_temporal: false };
    let f = p.or()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(f)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    in_temporal: bool,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", c as char)))
        }
    }

    fn or(&mut self) -> Result<Formula> {
        let mut terms = vec![self.and()?];
        while self.eat(b'|') {
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::Or(terms) })
    }

    fn and(&mut self) -> Result<Formula> {
        let mut terms = vec![self.unary()?];
        while self.eat(b'&') {
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Formula::And(terms) })
    }

    fn unary(&mut self) -> Result<Formula> {
        if self.eat(b'!') {
            Ok(Formula::Not(Box::new(self.unary()?)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let f = self.or()?;
                self.expect(b')')?;
                Ok(f)
            }
            Some(c @ (b'G' | b'F')) => {
                if self.in_temporal {
                    return Err(Error::NestedTemporal { pos: self.pos });
                }
                self.pos += 1;
                let kind = if c == b'G' { TemporalKind::Always } else { TemporalKind::Eventually };
                self.expect(b'[')?;
                let t1 = self.uint()?;
                self.expect(b',')?;
                let t2 = self.uint()?;
                if t1 > t2 {
                    return Err(self.err(format!("interval [{t1},{t2}] has start after end")));
                }
                self.expect(b']')?;
                self.expect(b'(')?;
                self.in_temporal = true;
                let body = self.or();
                self.in_temporal = false;
                let body = body?;
                self.expect(b')')?;
                Ok(Formula::Temporal { kind, t1, t2, body: Box::new(body) })
            }
            Some(b'x') => {
                self.pos += 1;
                let axis = self.uint()?;
                let gt = match self.peek() {
                    Some(b'>') => true,
                    Some(b'<') => false,
                    _ => return Err(self.err("expected `>` or `<`")),
                };
                self.pos += 1;
                let c = self.number()?;
                Ok(Formula::Pred(if gt { Predicate::gt(axis, c) } else { Predicate::lt(axis, c) }))
            }
            Some(_) => Err(self.err("expected `(`, `!`, `G`, `F` or a predicate `x<i>`")),
            None => Err(self.err("unexpected end of input")),
        }
    }

    fn uint(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a non-negative integer"));
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| Error::Syntax { pos: start, msg: format!("integer `{text}` out of range") })
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        if i < bytes.len() && matches!(bytes[i], b'+' | b'-') {
            i += 1;
        }
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && matches!(bytes[i], b'e' | b'E') {
            i += 1;
            if i < bytes.len() && matches!(bytes[i], b'+' | b'-') {
                i += 1;
            }
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        let text = std::str::from_utf8(&bytes[start..i]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = i;
                Ok(v)
            }
            _ => Err(self.err("expected a finite number")),
        }
    }
}
