//! A small expression language for barrier formulas.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | base ('^' INT)?
//! base   := NUMBER | 'x' | 'y' | FUNC '(' expr (',' expr)* ')' | '(' expr ')'
//! FUNC   := min | max | abs | sqrt | exp | log
//! ```
//!
//! Exponents must be integer literals, optionally signed and optionally
//! parenthesised (`x^2`, `x^(-1)`).

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Min,
    Max,
    Abs,
    Sqrt,
    Exp,
    Log,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "min" => Func::Min,
            "max" => Func::Max,
            "abs" => Func::Abs,
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            _ => return None,
        })
    }

    fn check_arity(self, n: usize) -> std::result::Result<(), String> {
        match self {
            Func::Min | Func::Max if n < 2 => Err(format!("{self} needs at least 2 arguments, got {n}")),
            Func::Abs | Func::Sqrt | Func::Exp | Func::Log if n != 1 => {
                Err(format!("{self} takes exactly 1 argument, got {n}"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Func::Min => "min",
            Func::Max => "max",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    X,
    Y,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Vec<Node>),
}

impl Node {
    fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Node::Num(v) => *v,
            Node::X => x,
            Node::Y => y,
            Node::Neg(a) => -a.eval(x, y),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, y), b.eval(x, y));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Node::Pow(a, k) => a.eval(x, y).powi(*k),
            Node::Call(func, args) => match func {
                Func::Min => args.iter().map(|a| a.eval(x, y)).fold(f64::INFINITY, f64::min),
                Func::Max => args.iter().map(|a| a.eval(x, y)).fold(f64::NEG_INFINITY, f64::max),
                Func::Abs => args[0].eval(x, y).abs(),
                Func::Sqrt => args[0].eval(x, y).sqrt(),
                Func::Exp => args[0].eval(x, y).exp(),
                Func::Log => args[0].eval(x, y).ln(),
            },
        }
    }

    fn uses_y(&self) -> bool {
        match self {
            Node::Y => true,
            Node::Num(_) | Node::X => false,
            Node::Neg(a) | Node::Pow(a, _) => a.uses_y(),
            Node::Bin(_, a, b) => a.uses_y() || b.uses_y(),
            Node::Call(_, args) => args.iter().any(Node::uses_y),
        }
    }
}

/// A parsed expression in `x` and `y`, keeping its source text.
#[derive(Clone, Debug)]
pub struct Expression {
    source: String,
    root: Node,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expression {
    pub fn parse(text: &str) -> Result<Expression> {
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        p.skip_ws();
        if p.at_end() {
            return Err(p.err("empty expression"));
        }
        let root = p.expr()?;
        p.skip_ws();
        if !p.at_end() {
            return Err(p.err(format!("unexpected character '{}'", p.peek_char())));
        }
        Ok(Expression { source: text.to_string(), root })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn uses_y(&self) -> bool {
        self.root.uses_y()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.root.eval(x, y)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Expression::parse(s)
    }
}

impl Serialize for Expression {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expression {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expression::parse(&text).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_char(&self) -> char {
        // Decode from the current position so multi-byte input reports a real char.
        std::str::from_utf8(&self.src[self.pos..])
            .ok()
            .and_then(|s| s.chars().next())
            .unwrap_or(self.src[self.pos] as char)
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(c) if c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
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
        } else if self.at_end() {
            Err(self.err(format!("expected '{}', found end of input", c as char)))
        } else {
            Err(self.err(format!("expected '{}', found '{}'", c as char, self.peek_char())))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat(b'+') {
                BinOp::Add
            } else if self.eat(b'-') {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat(b'*') {
                BinOp::Mul
            } else if self.eat(b'/') {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.factor()?;
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Node> {
        self.skip_ws();
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.factor()?)));
        }
        let base = self.base()?;
        if self.eat(b'^') {
            let k = self.exponent()?;
            return Ok(Node::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        let paren = self.eat(b'(');
        self.skip_ws();
        let neg = self.eat(b'-');
        self.skip_ws();
        let num_start = self.pos;
        let (text, is_int) = self.number_text();
        if text.is_empty() {
            self.pos = start;
            return Err(self.err("integer exponent required"));
        }
        if !is_int {
            self.pos = num_start;
            return Err(self.err("integer exponent required"));
        }
        if paren {
            self.expect(b')')?;
        }
        let k: i32 =
            text.parse().map_err(|_| Error::Parse { offset: num_start, message: "exponent out of range".into() })?;
        Ok(if neg { -k } else { k })
    }

    /// Scans a numeric literal; returns its text and whether it is a plain integer.
    fn number_text(&mut self) -> (String, bool) {
        let start = self.pos;
        let mut is_int = true;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            is_int = false;
            self.pos += 1;
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if self.pos > start && matches!(self.peek(), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                is_int = false;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        (text, is_int)
    }

    fn base(&mut self) -> Result<Node> {
        self.skip_ws();
        let Some(c) = self.peek() else {
            return Err(self.err("unexpected end of input"));
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            let (text, _) = self.number_text();
            return text
                .parse::<f64>()
                .map(Node::Num)
                .map_err(|_| Error::Parse { offset: start, message: format!("malformed number '{text}'") });
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = self.pos;
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
            return match name {
                "x" => Ok(Node::X),
                "y" => Ok(Node::Y),
                _ => {
                    let Some(func) = Func::from_name(name) else {
                        return Err(Error::Parse { offset: start, message: format!("unknown identifier '{name}'") });
                    };
                    self.expect(b'(')?;
                    let mut args = vec![self.expr()?];
                    while self.eat(b',') {
                        args.push(self.expr()?);
                    }
                    self.expect(b')')?;
                    func.check_arity(args.len()).map_err(|m| Error::Parse { offset: start, message: m })?;
                    Ok(Node::Call(func, args))
                }
            };
        }
        Err(self.err(format!("unexpected character '{}'", self.peek_char())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn offset_of(e: Error) -> (usize, String) {
        match e {
            Error::Parse { offset, message } => (offset, message),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn parses_power() {
        let e = Expression::parse("x^2").unwrap();
        assert_eq!(e.root(), &Node::Pow(Box::new(Node::X), 2));
        assert_eq!(e.eval(3.0, 0.0), 9.0);
    }

    #[test]
    fn parses_min_call() {
        let e = Expression::parse("min(x^2,(x-1)^2)").unwrap();
        match e.root() {
            Node::Call(Func::Min, args) => assert_eq!(args.len(), 2),
            other => panic!("unexpected tree {other:?}"),
        }
        assert_eq!(e.eval(0.5, 0.0), 0.25);
    }

    #[test]
    fn rejects_fractional_exponent() {
        let (_, msg) = offset_of(Expression::parse("x^(0.5)").unwrap_err());
        assert_eq!(msg, "integer exponent required");
        let (_, msg) = offset_of(Expression::parse("x^1.5").unwrap_err());
        assert_eq!(msg, "integer exponent required");
    }

    #[test]
    fn left_associative_operators() {
        assert_eq!(Expression::parse("8-4-2").unwrap().eval(0.0, 0.0), 2.0);
        assert_eq!(Expression::parse("8/4/2").unwrap().eval(0.0, 0.0), 1.0);
        assert_eq!(Expression::parse("2*3^2").unwrap().eval(0.0, 0.0), 18.0);
        assert_eq!(Expression::parse(" x * y + 1 ").unwrap().eval(2.0, 3.0), 7.0);
    }

    #[test]
    fn unknown_identifier_reports_offset() {
        let (off, msg) = offset_of(Expression::parse("x + foo(1)").unwrap_err());
        assert_eq!(off, 4);
        assert!(msg.contains("foo"));
    }

    #[test]
    fn arity_is_checked() {
        assert!(Expression::parse("abs(x, y)").is_err());
        assert!(Expression::parse("max(x)").is_err());
        assert!(Expression::parse("max(x, y, 1)").is_ok());
    }

    #[test]
    fn syntax_errors_have_offsets() {
        let (off, _) = offset_of(Expression::parse("x +").unwrap_err());
        assert_eq!(off, 3);
        let (off, _) = offset_of(Expression::parse("(x").unwrap_err());
        assert_eq!(off, 2);
        assert!(Expression::parse("").is_err());
        assert!(Expression::parse("x y").is_err());
    }

    #[test]
    fn functions_and_negation() {
        assert_eq!(Expression::parse("-x^2").unwrap().eval(3.0, 0.0), -9.0);
        assert_eq!(Expression::parse("2*-x").unwrap().eval(3.0, 0.0), -6.0);
        let e = Expression::parse("-abs(x) + sqrt(4) * exp(0) - log(1)").unwrap();
        assert_eq!(e.eval(-3.0, 0.0), -1.0);
        assert_eq!(Expression::parse("x^(-1)").unwrap().eval(4.0, 0.0), 0.25);
        assert_eq!(Expression::parse("1e-1*x").unwrap().eval(10.0, 0.0), 1.0);
    }

    proptest! {
        #[test]
        fn never_panics(text in "\\PC{0,24}") {
            let _ = Expression::parse(&text);
        }

        #[test]
        fn never_panics_on_grammar_soup(text in "[xy0-9.+*/^(),\\- ]{0,24}|(min|max|abs|sqrt|exp|log)\\([xy0-9,+\\-]{0,10}\\)?") {
            match Expression::parse(&text) {
                Ok(_) => {}
                Err(Error::Parse { offset, .. }) => prop_assert!(offset <= text.len()),
                Err(other) => prop_assert!(false, "unexpected error kind {other}"),
            }
        }
    }
}
