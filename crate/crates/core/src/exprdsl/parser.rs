//! Recursive-descent parser for the expression grammar:
//!
//! ```text
//!   expr  := term  (('+'|'-') term)*
//!   term  := unary (('*'|'/') unary)*
//!   unary := '-' unary | power
//!   power := atom ('^' unary)?            right-associative
//!   atom  := number | func '(' expr ')' | ident | '(' expr ')'
//! ```

use std::collections::HashMap;

use super::{Func, Node};
use crate::error::{Error, Result};

/// Some(k-1) when `s` is a coordinate name `x<k>`, k >= 1.
pub(crate) fn coordinate_index(s: &str) -> Option<usize> {
    let digits = s.strip_prefix('x')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let k: usize = digits.parse().ok()?;
    if k == 0 {
        None
    } else {
        Some(k - 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn err(pos: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        pos,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'+' => {
                toks.push((Tok::Plus, i));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, i));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, i));
                i += 1;
            }
            b'/' => {
                toks.push((Tok::Slash, i));
                i += 1;
            }
            b'^' => {
                toks.push((Tok::Caret, i));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, i));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, i));
                i += 1;
            }
            b',' => {
                return Err(err(i, "unexpected `,`: functions take exactly one argument"));
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(start, format!("invalid number literal `{s}`")))?;
                toks.push((Tok::Num(v), start));
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(text[start..i].to_string()), start));
            }
            _ => {
                return Err(err(i, format!("unexpected character `{}`", b as char)));
            }
        }
    }
    Ok(toks)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
    params: &'a HashMap<String, f64>,
    dim: usize,
}

pub(crate) fn parse(text: &str, params: &HashMap<String, f64>, dim: usize) -> Result<Node> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        params,
        dim,
    };
    let node = p.expr()?;
    if let Some((tok, at)) = p.peek() {
        return Err(err(at, format!("unexpected trailing token {tok:?}")));
    }
    Ok(node)
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<(Tok, usize)> {
        self.toks.get(self.pos).cloned()
    }

    fn bump(&mut self) -> Option<(Tok, usize)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_rparen(&mut self) -> Result<()> {
        match self.bump() {
            Some((Tok::RParen, _)) => Ok(()),
            Some((tok, at)) => Err(err(at, format!("expected `)`, found {tok:?}"))),
            None => Err(err(self.end, "expected `)`, found end of input")),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some((Tok::Plus, _)) => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some((Tok::Minus, _)) => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some((Tok::Star, _)) => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some((Tok::Slash, _)) => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some((Tok::Minus, _)) = self.peek() {
            self.bump();
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some((Tok::Caret, _)) = self.peek() {
            self.bump();
            // Exponent admits unary minus: `x1^-2` works and `^` binds
            // tighter than the minus in `-x1^2`.
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.bump() {
            Some((Tok::Num(v), _)) => Ok(Node::Const(v)),
            Some((Tok::LParen, _)) => {
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Some((Tok::Ident(name), at)) => self.ident(name, at),
            Some((tok, at)) => Err(err(at, format!("expected expression, found {tok:?}"))),
            None => Err(err(self.end, "expected expression, found end of input")),
        }
    }

    fn ident(&mut self, name: String, at: usize) -> Result<Node> {
        if let Some(f) = Func::from_name(&name) {
            match self.bump() {
                Some((Tok::LParen, _)) => {
                    let arg = self.expr()?;
                    self.expect_rparen()?;
                    return Ok(Node::Func(f, Box::new(arg)));
                }
                _ => {
                    return Err(err(
                        at,
                        format!("function `{name}` requires an argument list"),
                    ))
                }
            }
        }
        if let Some(k) = coordinate_index(&name) {
            if k >= self.dim {
                return Err(err(
                    at,
                    format!(
                        "coordinate `{name}` out of range for dimension {}",
                        self.dim
                    ),
                ));
            }
            return Ok(Node::Coord(k));
        }
        match self.params.get(&name) {
            Some(v) => Ok(Node::Param {
                name,
                value: *v,
            }),
            None => Err(err(at, format!("unknown identifier `{name}`"))),
        }
    }
}
