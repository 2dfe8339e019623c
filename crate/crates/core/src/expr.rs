//! Arithmetic expressions over the coordinates `r`, `x`, `y`, used for
//! potentials and drift fields in configuration files.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | pow
//! pow   := atom ('^' unary)?          right associative
//! atom  := number | 'pi' | 'e' | var | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | exp
//! ```

use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message} at column {column} in `{source_text}`")]
pub struct ExprError {
    pub column: usize,
    pub message: String,
    pub source_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    R,
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Parsed expression; cheap to clone and shareable across threads.
#[derive(Clone)]
pub struct Expr {
    text: String,
    root: Arc<Node>,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.text)
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Expr {
    /// Parses `text`, accepting only the variables in `allowed`.
    pub fn parse(text: &str, allowed: &[Var]) -> Result<Self, ExprError> {
        let mut p = Parser { src: text, bytes: text.as_bytes(), pos: 0, allowed };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.bytes.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { text: text.to_string(), root: Arc::new(root) })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn eval(&self, r: f64, x: f64, y: f64) -> f64 {
        eval(&self.root, r, x, y)
    }

    pub fn is_constant_zero(&self) -> bool {
        matches!(*self.root, Node::Num(v) if v == 0.0)
    }
}

fn eval(n: &Node, r: f64, x: f64, y: f64) -> f64 {
    match n {
        Node::Num(v) => *v,
        Node::Var(Var::R) => r,
        Node::Var(Var::X) => x,
        Node::Var(Var::Y) => y,
        Node::Neg(a) => -eval(a, r, x, y),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, r, x, y), eval(b, r, x, y));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => a.powf(b),
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, r, x, y);
            match f {
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Exp => a.exp(),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    allowed: &'a [Var],
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError { column: self.pos + 1, message: message.to_string(), source_text: self.src.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            lhs = Node::Bin(c as char, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            lhs = Node::Bin(c as char, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            return Ok(Node::Bin('^', Box::new(base), Box::new(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let word = &self.src[start..self.pos];
                let func = match word {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    _ => None,
                };
                if let Some(func) = func {
                    self.expect(b'(')?;
                    let arg = self.expr()?;
                    self.expect(b')')?;
                    return Ok(Node::Call(func, Box::new(arg)));
                }
                let var = match word {
                    "pi" => return Ok(Node::Num(std::f64::consts::PI)),
                    "e" => return Ok(Node::Num(std::f64::consts::E)),
                    "r" => Var::R,
                    "x" => Var::X,
                    "y" => Var::Y,
                    _ => {
                        self.pos = start;
                        return Err(self.error(&format!("unknown identifier `{word}`")));
                    }
                };
                if !self.allowed.contains(&var) {
                    self.pos = start;
                    return Err(self.error(&format!("variable `{word}` is not available here")));
                }
                Ok(Node::Var(var))
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.bytes.len() && p.bytes[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.bytes.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = save;
            }
        }
        self.src[start..self.pos].parse().map(Node::Num).map_err(|_| {
            self.pos = start;
            self.error("malformed number")
        })
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: &[Var] = &[Var::R, Var::X, Var::Y];

    fn ev(s: &str) -> f64 {
        Expr::parse(s, ALL).unwrap().eval(0.5, 2.0, 3.0)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2*3"), 7.0);
        assert_eq!(ev("2^3^2"), 512.0);
        assert_eq!(ev("-2^2"), -4.0);
        assert_eq!(ev("8/4/2"), 1.0);
        assert_eq!(ev("(1+2)*3"), 9.0);
        assert_eq!(ev("x*y - r"), 5.5);
        assert_eq!(ev("1.5e2 + .5"), 150.5);
        assert!((ev("sin(pi/2) + cos(0) + exp(0)") - 3.0).abs() < 1e-15);
        assert!((ev("r^2/4") - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_columns() {
        let e = Expr::parse("1 + foo", ALL).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(Expr::parse("x", &[Var::R]).is_err());
        assert!(Expr::parse("(1 + 2", ALL).is_err());
        assert!(Expr::parse("1 2", ALL).is_err());
        assert!(Expr::parse("", ALL).is_err());
        assert!(Expr::parse("sin 1", ALL).is_err());
    }

    proptest! {
        #[test]
        fn linear_combinations_evaluate(a in -1e3f64..1e3, b in -1e3f64..1e3, x in -10f64..10.0) {
            let e = Expr::parse(&format!("{a:e} * x + ({b:e})"), ALL).unwrap();
            prop_assert!((e.eval(0.0, x, 0.0) - (a * x + b)).abs() <= 1e-12 * (1.0 + (a * x).abs() + b.abs()));
        }
    }
}
