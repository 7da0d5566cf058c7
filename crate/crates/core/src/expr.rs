//! Closed-form scalar expressions in chart coordinates.
//!
//! Grammar (lowest to highest precedence, all left-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | '+' unary | power
//! power := atom ('^' exponent)*
//! atom  := number | symbol | func '(' expr ')' | '(' expr ')' | 'pi'
//! ```
//!
//! Exponents are integer literals, optionally negated or parenthesized.
//! Functions: sin cos tan exp log sqrt sinh cosh.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::jet::{multi_factorial, Jet, JetFamily};
use crate::scalar::{Literal, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Sinh,
    Cosh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(Literal),
    Pi,
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, i64),
    Call(Func, Box<Node>),
}

/// A parsed expression together with the chart's symbol names.
#[derive(Debug, Clone)]
pub struct Expression {
    node: Node,
    symbols: Arc<[String]>,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.node == other.node && self.symbols == other.symbols
    }
}

impl Expression {
    pub fn new(node: Node, symbols: Arc<[String]>) -> Self {
        Expression { node, symbols }
    }

    pub fn parse(text: &str, symbols: &[&str]) -> Result<Self> {
        let symbols: Arc<[String]> = symbols.iter().map(|s| s.to_string()).collect();
        Self::parse_with(text, symbols)
    }

    pub fn parse_with(text: &str, symbols: Arc<[String]>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("no chart symbols declared"));
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return Err(Error::invalid(format!("duplicate symbol \"{s}\"")));
            }
        }
        let mut p = Parser {
            src: text,
            pos: 0,
            symbols: &symbols,
        };
        let node = p.expr()?;
        p.skip_ws();
        if p.pos < text.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(Expression { node, symbols })
    }

    pub fn constant(lit: Literal, symbols: Arc<[String]>) -> Self {
        Expression {
            node: Node::Num(lit),
            symbols,
        }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn symbols(&self) -> &Arc<[String]> {
        &self.symbols
    }

    pub fn nvars(&self) -> usize {
        self.symbols.len()
    }

    /// Jet of the expression at `p` up to `order`.
    pub fn eval_jet<S: Scalar>(&self, p: &[S], fam: &Arc<JetFamily>, order: usize) -> Result<Jet<S>> {
        if p.len() != self.symbols.len() {
            return Err(Error::invalid(format!(
                "point has {} coordinates, chart has {}",
                p.len(),
                self.symbols.len()
            )));
        }
        let j = eval_node(&self.node, p, fam, order)?;
        j.check()?;
        Ok(j)
    }

    /// Plain value at `p`.
    pub fn eval<S: Scalar>(&self, p: &[S]) -> Result<S> {
        let fam = JetFamily::new(self.symbols.len(), 0);
        Ok(self.eval_jet(p, &fam, 0)?.value())
    }

    pub fn is_constant_zero(&self) -> bool {
        matches!(&self.node, Node::Num(l) if l.approx == 0.0)
    }
}

fn eval_node<S: Scalar>(n: &Node, p: &[S], fam: &Arc<JetFamily>, order: usize) -> Result<Jet<S>> {
    let j = match n {
        Node::Num(l) => Jet::constant(fam, order, S::from_literal(l)?),
        Node::Pi => Jet::constant(fam, order, S::pi()?),
        Node::Var(i) => Jet::variable(fam, order, *i, p[*i]),
        Node::Neg(a) => eval_node(a, p, fam, order)?.neg(),
        Node::Add(a, b) => eval_node(a, p, fam, order)?.add(&eval_node(b, p, fam, order)?),
        Node::Sub(a, b) => eval_node(a, p, fam, order)?.sub(&eval_node(b, p, fam, order)?),
        Node::Mul(a, b) => eval_node(a, p, fam, order)?.mul(&eval_node(b, p, fam, order)?),
        Node::Div(a, b) => {
            let den = eval_node(b, p, fam, order)?;
            den.check()?;
            eval_node(a, p, fam, order)?.div(&den)?
        }
        Node::Pow(a, e) => eval_node(a, p, fam, order)?.powi(*e)?,
        Node::Call(f, a) => {
            let x = eval_node(a, p, fam, order)?;
            x.check()?;
            match f {
                Func::Sin => x.sin()?,
                Func::Cos => x.cos()?,
                Func::Tan => x.tan()?,
                Func::Exp => x.exp()?,
                Func::Log => x.ln()?,
                Func::Sqrt => x.sqrt()?,
                Func::Sinh => x.sinh()?,
                Func::Cosh => x.cosh()?,
            }
        }
    };
    Ok(j)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    symbols: &'a [String],
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let mut base = self.atom()?;
        while self.eat('^') {
            let e = self.exponent()?;
            base = Node::Pow(Box::new(base), e);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i64> {
        if self.eat('-') {
            return Ok(-self.exponent()?);
        }
        if self.eat('+') {
            return self.exponent();
        }
        if self.eat('(') {
            let e = self.exponent()?;
            if !self.eat(')') {
                return Err(self.err("expected ')'"));
            }
            return Ok(e);
        }
        self.skip_ws();
        let start = self.pos;
        match self.number()? {
            Some(lit) => lit.is_integer().ok_or(Error::Syntax {
                offset: start,
                message: "exponent must be an integer".into(),
            }),
            None => Err(self.err("expected integer exponent")),
        }
    }

    fn number(&mut self) -> Result<Option<Literal>> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i == start {
            return Ok(None);
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            let digits = j;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j > digits {
                i = j;
            }
        }
        let text = &self.src[start..i];
        match Literal::parse_decimal(text) {
            Some(l) => {
                self.pos = i;
                Ok(Some(l))
            }
            None => Err(Error::Syntax {
                offset: start,
                message: format!("malformed number \"{text}\""),
            }),
        }
    }

    fn atom(&mut self) -> Result<Node> {
        if let Some(l) = self.number()? {
            return Ok(Node::Num(l));
        }
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Some(c) if c.is_alphabetic() || c == '_' => {
                let start = self.pos;
                let rest = &self.src[start..];
                let len = rest
                    .char_indices()
                    .find(|(_, c)| !(c.is_alphanumeric() || *c == '_'))
                    .map(|(i, _)| i)
                    .unwrap_or(rest.len());
                let name = &rest[..len];
                self.pos += len;
                if let Some(i) = self.symbols.iter().position(|s| s == name) {
                    return Ok(Node::Var(i));
                }
                if let Some(f) = Func::from_name(name) {
                    if !self.eat('(') {
                        return Err(self.err("expected '(' after function name"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.err("expected ')'"));
                    }
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                if name == "pi" {
                    return Ok(Node::Pi);
                }
                Err(Error::UndeclaredSymbol(name.to_string()))
            }
            Some(_) => Err(self.err("unexpected character")),
        }
    }
}

// Printing: precedence levels 1 (+,-), 2 (*,/), 3 (unary -), 4 (^), 5 (atom).
fn prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(..) => 3,
        Node::Pow(..) => 4,
        Node::Num(l) if l.approx < 0.0 || l.approx.is_sign_negative() => 0,
        Node::Num(l) if l.exact.is_some_and(|(_, d)| d != 1) && l.to_string().contains('/') => 0,
        _ => 5,
    }
}

struct Show<'a> {
    n: &'a Node,
    symbols: &'a [String],
}

impl Show<'_> {
    fn sub<'b>(&'b self, n: &'b Node) -> Show<'b> {
        Show {
            n,
            symbols: self.symbols,
        }
    }

    fn child(&self, f: &mut fmt::Formatter<'_>, n: &Node, min: u8) -> fmt::Result {
        if prec(n) < min {
            write!(f, "({})", self.sub(n))
        } else {
            write!(f, "{}", self.sub(n))
        }
    }
}

impl fmt::Display for Show<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.n {
            Node::Num(l) => write!(f, "{l}"),
            Node::Pi => write!(f, "pi"),
            Node::Var(i) => write!(f, "{}", self.symbols[*i]),
            Node::Neg(a) => {
                write!(f, "-")?;
                self.child(f, a, 3)
            }
            Node::Add(a, b) => {
                self.child(f, a, 1)?;
                write!(f, " + ")?;
                self.child(f, b, 2)
            }
            Node::Sub(a, b) => {
                self.child(f, a, 1)?;
                write!(f, " - ")?;
                self.child(f, b, 2)
            }
            Node::Mul(a, b) => {
                self.child(f, a, 2)?;
                write!(f, "*")?;
                self.child(f, b, 3)
            }
            Node::Div(a, b) => {
                self.child(f, a, 2)?;
                write!(f, "/")?;
                self.child(f, b, 3)
            }
            Node::Pow(a, e) => {
                self.child(f, a, 5)?;
                if *e < 0 {
                    write!(f, "^({e})")
                } else {
                    write!(f, "^{e}")
                }
            }
            Node::Call(func, a) => write!(f, "{}({})", func.name(), self.sub(a)),
        }
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}",
            Show {
                n: &self.node,
                symbols: &self.symbols,
            }
        )
    }
}

/// `(e − p)^T / T!` in the chart coordinates.
pub fn monomial_form<S: Scalar>(symbols: Arc<[String]>, p: &[S], t: &[u8]) -> Expression {
    let mut factors: Vec<Node> = Vec::new();
    for (i, &ti) in t.iter().enumerate() {
        if ti == 0 {
            continue;
        }
        let base = if p[i].is_zero() {
            Node::Var(i)
        } else {
            let lit = p[i].to_literal();
            if lit.approx < 0.0 {
                let pos = (-p[i]).to_literal();
                Node::Add(Box::new(Node::Var(i)), Box::new(Node::Num(pos)))
            } else {
                Node::Sub(Box::new(Node::Var(i)), Box::new(Node::Num(lit)))
            }
        };
        factors.push(if ti == 1 {
            base
        } else {
            Node::Pow(Box::new(base), ti as i64)
        });
    }
    let mut node = factors
        .into_iter()
        .reduce(|a, b| Node::Mul(Box::new(a), Box::new(b)))
        .unwrap_or(Node::Num(Literal::integer(1)));
    let fact = multi_factorial(t);
    if fact != 1 {
        node = Node::Div(Box::new(node), Box::new(Node::Num(Literal::ratio(fact, 1))));
    }
    Expression { node, symbols }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;

    #[test]
    fn shape_of_simple_parse() {
        let e = Expression::parse("x*y + sin(x)", &["x", "y"]).unwrap();
        match e.node() {
            Node::Add(a, b) => {
                assert!(matches!(**a, Node::Mul(ref l, ref r) if **l == Node::Var(0) && **r == Node::Var(1)));
                assert!(matches!(**b, Node::Call(Func::Sin, ref x) if **x == Node::Var(0)));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn errors() {
        assert_eq!(
            Expression::parse("x +", &["x"]).unwrap_err(),
            Error::Syntax {
                offset: 3,
                message: "unexpected end of input".into()
            }
        );
        assert_eq!(
            Expression::parse("z", &["x", "y"]).unwrap_err(),
            Error::UndeclaredSymbol("z".into())
        );
    }

    #[test]
    fn precedence() {
        let e = Expression::parse("-x^2", &["x"]).unwrap();
        assert!(matches!(e.node(), Node::Neg(_)));
        let v: Rational = e.eval(&[Rational::new(3, 1)]).unwrap();
        assert_eq!(v, Rational::new(-9, 1));
        let e = Expression::parse("8/2/2 - 1 - 1", &["x"]).unwrap();
        assert_eq!(e.eval(&[Rational::zero()]).unwrap(), Rational::zero());
        let e = Expression::parse("2^3^2", &["x"]).unwrap();
        assert_eq!(e.eval(&[Rational::zero()]).unwrap(), Rational::new(64, 1));
    }

    #[test]
    fn monomial_printing() {
        let sym: Arc<[String]> = vec!["x".to_string(), "y".to_string()].into();
        let p = [Rational::new(1, 1), Rational::new(2, 1)];
        assert_eq!(monomial_form(sym.clone(), &p, &[2, 0]).to_string(), "(x - 1)^2/2");
        assert_eq!(monomial_form(sym.clone(), &p, &[0, 0]).to_string(), "1");
        let z = [Rational::zero(), Rational::zero()];
        assert_eq!(monomial_form(sym, &z, &[1, 1]).to_string(), "x*y");
    }

    #[test]
    fn jet_examples() {
        let fam = JetFamily::new(2, 2);
        let e = Expression::parse("x*y + sin(x)", &["x", "y"]).unwrap();
        let j = e.eval_jet(&[0.0, 0.0], &fam, 2).unwrap();
        assert_eq!(j.value(), 0.0);
        assert_eq!(j.partial(&[1, 0]), 1.0);
        assert_eq!(j.partial(&[0, 1]), 0.0);
        assert_eq!(j.partial(&[1, 1]), 1.0);
        assert_eq!(j.partial(&[2, 0]), 0.0);
        let c = Expression::parse("3.5", &["x", "y"]).unwrap();
        let j = c.eval_jet(&[Rational::new(1, 3), Rational::zero()], &fam, 2).unwrap();
        assert_eq!(j.value(), Rational::new(7, 2));
        assert!(j.coeffs()[1..].iter().all(|c| c.is_zero()));
    }

    #[test]
    fn domain_errors() {
        let e = Expression::parse("sqrt(x)", &["x"]).unwrap();
        assert!(matches!(e.eval(&[-1.0]), Err(Error::Domain(_))));
        let e = Expression::parse("log(x)", &["x"]).unwrap();
        assert!(matches!(e.eval(&[0.0]), Err(Error::Domain(_))));
        let e = Expression::parse("x^40", &["x"]).unwrap();
        assert_eq!(e.eval(&[Rational::new(1000, 1)]), Err(Error::Overflow));
    }
}
