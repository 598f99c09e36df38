//! Expression DSL for metric coefficients.
//!
//! Closed arithmetic over floating literals, named parameters and
//! coordinates `x1..xn`, with `+ - * / ^`, unary minus and the functions
//! `exp`, `sin`, `cos`, `sqrt`, `abs`. Parameters are bound to values at
//! parse time; re-binding requires a re-parse. Gradients are exact
//! (forward-mode), one pass per coordinate.
//!
//! Precedence, tightest first: `^` (right-associative), unary minus,
//! `* /`, `+ -`. So `-exp(x1)/2` is `(-exp(x1))/2` and `-x1^2` is
//! `-(x1^2)`.

mod dual;
mod parser;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use dual::{Dual, Num};

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Param { name: String, value: f64 },
    Coord(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Func(Func, Box<Node>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Func {
    Exp,
    Sin,
    Cos,
    Sqrt,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub(crate) fn from_name(s: &str) -> Option<Func> {
        match s {
            "exp" => Some(Func::Exp),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "sqrt" => Some(Func::Sqrt),
            "abs" => Some(Func::Abs),
            _ => None,
        }
    }
}

/// A parsed expression over `dim` coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    node: Node,
    dim: usize,
}

/// Value and exact gradient of an expression at a point.
#[derive(Clone, Debug)]
pub struct ValueGrad {
    pub value: f64,
    pub grad: Vec<f64>,
    /// True when `abs` was differentiated at its kink; the gradient then
    /// contains the subgradient choice 0 for that term.
    pub nondifferentiable: bool,
}

/// Parses `text` over coordinates `x1..x<dim>`, substituting `params`.
pub fn parse(text: &str, params: &HashMap<String, f64>, dim: usize) -> Result<Expr> {
    for (name, value) in params {
        if Func::from_name(name).is_some() || parser::coordinate_index(name).is_some() {
            return Err(Error::InvalidParameter(format!(
                "parameter name `{name}` shadows a builtin"
            )));
        }
        if !value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "parameter `{name}` is not finite"
            )));
        }
    }
    let node = parser::parse(text, params, dim)?;
    Ok(Expr { node, dim })
}

impl Expr {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Constant expression helper (used by presets; negative values are
    /// stored as negated positives so printing round-trips).
    pub fn constant(c: f64, dim: usize) -> Expr {
        assert!(c.is_finite(), "constant must be finite");
        let node = if c.is_sign_negative() && c != 0.0 {
            Node::Neg(Box::new(Node::Const(-c)))
        } else {
            Node::Const(c)
        };
        Expr { node, dim }
    }

    /// Evaluates at `point`; errors name the offending subexpression.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        self.check_dim(point)?;
        let mut flag = false;
        let v: f64 = eval_node(&self.node, point, usize::MAX, &mut flag)?;
        Ok(v)
    }

    /// Evaluates value and gradient with one forward pass per coordinate.
    /// The value is bit-identical to `eval` at the same point.
    pub fn eval_grad(&self, point: &[f64]) -> Result<ValueGrad> {
        self.check_dim(point)?;
        let mut grad = vec![0.0; self.dim];
        let mut flag = false;
        let mut value = 0.0;
        for (k, g) in grad.iter_mut().enumerate() {
            let d: Dual = eval_node(&self.node, point, k, &mut flag)?;
            *g = d.d;
            if k == 0 {
                value = d.v;
            }
        }
        Ok(ValueGrad {
            value,
            grad,
            nondifferentiable: flag,
        })
    }

    /// Some(value) when no coordinate occurs in the expression.
    pub fn as_constant(&self) -> Option<f64> {
        fn uses_coord(n: &Node) -> bool {
            match n {
                Node::Const(_) | Node::Param { .. } => false,
                Node::Coord(_) => true,
                Node::Neg(a) | Node::Func(_, a) => uses_coord(a),
                Node::Add(a, b)
                | Node::Sub(a, b)
                | Node::Mul(a, b)
                | Node::Div(a, b)
                | Node::Pow(a, b) => uses_coord(a) || uses_coord(b),
            }
        }
        if uses_coord(&self.node) {
            None
        } else {
            let zeros = vec![0.0; self.dim];
            self.eval(&zeros).ok()
        }
    }

    fn check_dim(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        Ok(())
    }
}

/// Evaluates a node generically; `seed` selects the coordinate whose dual
/// derivative is 1 (pass `usize::MAX` for plain evaluation).
fn eval_node<T: Num>(node: &Node, point: &[f64], seed: usize, flag: &mut bool) -> Result<T> {
    let v = match node {
        Node::Const(c) => T::constant(*c),
        Node::Param { value, .. } => T::constant(*value),
        Node::Coord(k) => T::coord(point[*k], *k == seed),
        Node::Neg(a) => eval_node::<T>(a, point, seed, flag)?.neg(),
        Node::Add(a, b) => {
            eval_node::<T>(a, point, seed, flag)?.add(eval_node::<T>(b, point, seed, flag)?)
        }
        Node::Sub(a, b) => {
            eval_node::<T>(a, point, seed, flag)?.sub(eval_node::<T>(b, point, seed, flag)?)
        }
        Node::Mul(a, b) => {
            eval_node::<T>(a, point, seed, flag)?.mul(eval_node::<T>(b, point, seed, flag)?)
        }
        Node::Div(a, b) => {
            eval_node::<T>(a, point, seed, flag)?.div(eval_node::<T>(b, point, seed, flag)?)
        }
        Node::Pow(a, b) => {
            eval_node::<T>(a, point, seed, flag)?.pow(eval_node::<T>(b, point, seed, flag)?)
        }
        Node::Func(f, a) => {
            let x = eval_node::<T>(a, point, seed, flag)?;
            match f {
                Func::Exp => x.exp(),
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Sqrt => x.sqrt(),
                Func::Abs => x.abs(flag),
            }
        }
    };
    if !v.value().is_finite() {
        return Err(domain_error(node, point, v.value()));
    }
    Ok(v)
}

fn domain_error(node: &Node, point: &[f64], value: f64) -> Error {
    let msg = match node {
        Node::Div(_, b) => {
            if plain_value(b, point) == Some(0.0) {
                "division by zero".to_string()
            } else {
                format!("non-finite result ({value})")
            }
        }
        Node::Func(Func::Sqrt, a) => {
            if plain_value(a, point).map(|v| v < 0.0).unwrap_or(false) {
                "square root of a negative value".to_string()
            } else {
                format!("non-finite result ({value})")
            }
        }
        Node::Pow(..) => "invalid power (non-finite result)".to_string(),
        _ => format!("non-finite result ({value})"),
    };
    Error::ExprDomain {
        node: render(node),
        msg,
    }
}

fn plain_value(node: &Node, point: &[f64]) -> Option<f64> {
    let mut flag = false;
    eval_node::<f64>(node, point, usize::MAX, &mut flag).ok()
}

fn render(node: &Node) -> String {
    let mut s = String::new();
    fmt_node(node, &mut s);
    s
}

fn prec(node: &Node) -> u8 {
    match node {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Pow(..) => 4,
        _ => 5,
    }
}

fn fmt_node(node: &Node, out: &mut String) {
    fn child(node: &Node, out: &mut String, need_parens: bool) {
        if need_parens {
            out.push('(');
            fmt_node(node, out);
            out.push(')');
        } else {
            fmt_node(node, out);
        }
    }
    let p = prec(node);
    match node {
        Node::Const(c) => out.push_str(&format!("{c}")),
        Node::Param { name, .. } => out.push_str(name),
        Node::Coord(k) => out.push_str(&format!("x{}", k + 1)),
        Node::Neg(a) => {
            out.push('-');
            child(a, out, prec(a) < 4);
        }
        Node::Add(a, b) => {
            child(a, out, prec(a) < p);
            out.push('+');
            child(b, out, prec(b) <= p);
        }
        Node::Sub(a, b) => {
            child(a, out, prec(a) < p);
            out.push('-');
            child(b, out, prec(b) <= p);
        }
        Node::Mul(a, b) => {
            child(a, out, prec(a) < p);
            out.push('*');
            child(b, out, prec(b) <= p);
        }
        Node::Div(a, b) => {
            child(a, out, prec(a) < p);
            out.push('/');
            child(b, out, prec(b) <= p);
        }
        Node::Pow(a, b) => {
            child(a, out, prec(a) <= p);
            out.push('^');
            child(b, out, prec(b) < p);
        }
        Node::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            fmt_node(a, out);
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(&self.node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str) -> Expr {
        parse(text, &HashMap::new(), 2).unwrap()
    }

    fn pw(text: &str, w: f64) -> Expr {
        let mut params = HashMap::new();
        params.insert("w".to_string(), w);
        parse(text, &params, 2).unwrap()
    }

    fn fd_grad(e: &Expr, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for k in 0..x.len() {
            let h = 1e-6 * (1.0 + x[k].abs());
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            g[k] = (e.eval(&xp).unwrap() - e.eval(&xm).unwrap()) / (2.0 * h);
        }
        g
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("2+3*4").eval(&[0.0, 0.0]).unwrap(), 14.0);
        assert_eq!(p("2*3+4").eval(&[0.0, 0.0]).unwrap(), 10.0);
        assert_eq!(p("2^3^2").eval(&[0.0, 0.0]).unwrap(), 512.0);
        assert_eq!(p("-2^2").eval(&[0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(p("6/3/2").eval(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p("2^-1").eval(&[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(p("-x1^2").eval(&[3.0, 0.0]).unwrap(), -9.0);
        assert_eq!(p("(2+3)*4").eval(&[0.0, 0.0]).unwrap(), 20.0);
    }

    #[test]
    fn godel_coefficient_parses_and_evaluates() {
        let a = pw("-exp(2*sqrt(2)*w*x1)/2", 1.0);
        assert_eq!(a.eval(&[0.0, 0.0]).unwrap(), -0.5);
        let x1 = 0.37;
        let want = -(2.0_f64.sqrt() * 2.0 * x1).exp() / 2.0;
        assert!((a.eval(&[x1, 0.0]).unwrap() - want).abs() < 1e-15);
        // unary minus binds looser than the division's operands: -(exp)/2
        assert_eq!(a.to_string(), "-exp(2*sqrt(2)*w*x1)/2");
    }

    #[test]
    fn value_channel_is_bitwise_identical() {
        let exprs = [
            "x1^2 + sin(x2)*exp(x1/3)",
            "-exp(2*sqrt(2)*x1)/2",
            "sqrt(1+x1^2)/(2-cos(x2))",
            "x1^x2",
        ];
        for text in exprs {
            let e = p(text);
            for pt in [[0.4, -1.3], [2.0, 3.0], [0.1, 0.9]] {
                let v = e.eval(&pt).unwrap();
                let vg = e.eval_grad(&pt).unwrap();
                assert_eq!(v.to_bits(), vg.value.to_bits(), "{text} at {pt:?}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let exprs = [
            "x1^3 - 2*x1*x2 + x2^2",
            "exp(x1)*sin(x2)",
            "sqrt(4+x1^2+x2^2)",
            "1/(1+x1^2)",
            "cos(x1*x2)^2",
            "x1^x2",
            "exp(2*sqrt(2)*x1)",
            "abs(x1-2)*x2",
        ];
        let points = [[0.3, 0.7], [1.1, -0.4], [0.9, 1.7], [-0.6, 2.2]];
        for text in exprs {
            let e = p(text);
            for pt in points {
                if text == "x1^x2" && pt[0] <= 0.0 {
                    continue;
                }
                let vg = e.eval_grad(&pt).unwrap();
                let fd = fd_grad(&e, &pt);
                for (k, fdk) in fd.iter().enumerate() {
                    let scale = 1.0_f64.max(vg.grad[k].abs());
                    assert!(
                        (vg.grad[k] - fdk).abs() / scale < 1e-6,
                        "{text} d{k} at {pt:?}: exact {} fd {}",
                        vg.grad[k],
                        fdk
                    );
                }
            }
        }
    }

    #[test]
    fn abs_kink_gives_flagged_subgradient_zero() {
        let e = p("abs(x1)");
        let vg = e.eval_grad(&[0.0, 0.0]).unwrap();
        assert_eq!(vg.value, 0.0);
        assert_eq!(vg.grad[0], 0.0);
        assert!(vg.nondifferentiable);
        let vg = e.eval_grad(&[2.0, 0.0]).unwrap();
        assert_eq!(vg.grad[0], 1.0);
        assert!(!vg.nondifferentiable);
        let vg = e.eval_grad(&[-2.0, 0.0]).unwrap();
        assert_eq!(vg.grad[0], -1.0);
    }

    #[test]
    fn domain_errors_name_the_offending_node() {
        let e = p("1/x1");
        match e.eval(&[0.0, 0.0]) {
            Err(Error::ExprDomain { node, msg }) => {
                assert_eq!(node, "1/x1");
                assert!(msg.contains("division by zero"), "{msg}");
            }
            other => panic!("expected domain error, got {other:?}"),
        }
        let e = p("sqrt(x1-1)");
        match e.eval(&[0.0, 0.0]) {
            Err(Error::ExprDomain { node, .. }) => assert_eq!(node, "sqrt(x1-1)"),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(p("exp(x1)").eval(&[1.0e4, 0.0]).is_err());
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse("x3+1", &HashMap::new(), 2) {
            Err(Error::Parse { pos, msg }) => {
                assert_eq!(pos, 0);
                assert!(msg.contains("out of range"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("2*q", &HashMap::new(), 2).is_err());
        assert!(parse("exp(x1,x2)", &HashMap::new(), 2).is_err());
        assert!(parse("exp", &HashMap::new(), 2).is_err());
        assert!(parse("1+", &HashMap::new(), 2).is_err());
        assert!(parse("(1+2", &HashMap::new(), 2).is_err());
        assert!(parse("1 $ 2", &HashMap::new(), 2).is_err());
        let mut bad = HashMap::new();
        bad.insert("exp".to_string(), 1.0);
        assert!(parse("exp", &bad, 2).is_err());
    }

    #[test]
    fn printing_reparses_to_the_same_ast() {
        let texts = [
            "x1^2+sin(x2)*exp(x1/3)",
            "-exp(2*sqrt(2)*w*x1)/2",
            "a-(x1+x2)",
            "x1/(x2*x1)",
            "2^x1^2",
            "(x1+1)*(x2-1)",
            "-(x1*x2)",
            "x1--x2",
        ];
        let mut params = HashMap::new();
        params.insert("w".to_string(), 2.5);
        params.insert("a".to_string(), -0.5);
        for text in texts {
            let e = parse(text, &params, 2).unwrap();
            let printed = e.to_string();
            let e2 = parse(&printed, &params, 2).unwrap();
            assert_eq!(e, e2, "`{text}` printed as `{printed}`");
        }
    }

    #[test]
    fn constants_fold_and_round_trip() {
        let e = Expr::constant(-1.5, 2);
        assert_eq!(e.to_string(), "-1.5");
        let back = p("-1.5");
        assert_eq!(e, back);
        assert_eq!(e.as_constant(), Some(-1.5));
        assert_eq!(p("x1").as_constant(), None);
        assert_eq!(pw("w*3", 2.0).as_constant(), Some(6.0));
    }

    #[test]
    fn dimension_checks() {
        let e = p("x1+x2");
        assert!(matches!(
            e.eval(&[1.0]),
            Err(Error::DimMismatch { expected: 2, got: 1 })
        ));
        assert!(parse("x2", &HashMap::new(), 1).is_err());
        assert!(parse("x1", &HashMap::new(), 1).is_ok());
    }
}
