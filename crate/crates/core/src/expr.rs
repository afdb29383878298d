//! Operator expressions such as `0.5*0.004*adag*adag*a*a + 2i*(adag - a)`.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr      := term (('+' | '-') term)*
//! term      := factor ('*' factor)*
//! factor    := scalar | primitive | '(' expr ')' | '-' factor
//! primitive := a | adag | n | q | p | id
//! scalar    := float ['i'] | 'i'
//! ```
//!
//! Expressions are dimension independent; [`OperatorExpr::eval`] builds the
//! matrix for a given basis size.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{QsdError, Result};
use crate::linalg::{self, OperatorMatrix, C64, ONE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    A,
    Adag,
    N,
    Q,
    P,
    Id,
}

impl Primitive {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "a" => Primitive::A,
            "adag" => Primitive::Adag,
            "n" => Primitive::N,
            "q" => Primitive::Q,
            "p" => Primitive::P,
            "id" => Primitive::Id,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Primitive::A => "a",
            Primitive::Adag => "adag",
            Primitive::N => "n",
            Primitive::Q => "q",
            Primitive::P => "p",
            Primitive::Id => "id",
        }
    }

    fn matrix(self, dim: usize) -> Result<OperatorMatrix> {
        match self {
            Primitive::A => linalg::fock_annihilation(dim),
            Primitive::Adag => linalg::fock_creation(dim),
            Primitive::N => linalg::fock_number(dim),
            Primitive::Q => linalg::position(dim),
            Primitive::P => linalg::momentum(dim),
            Primitive::Id => OperatorMatrix::identity(dim),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum OperatorExpr {
    Scalar(C64),
    Primitive(Primitive),
    Neg(Box<OperatorExpr>),
    Sum(Box<OperatorExpr>, Box<OperatorExpr>),
    Difference(Box<OperatorExpr>, Box<OperatorExpr>),
    Product(Box<OperatorExpr>, Box<OperatorExpr>),
}

enum Value {
    Scalar(C64),
    Matrix(DMatrix<C64>),
}

impl Value {
    fn into_matrix(self, dim: usize) -> DMatrix<C64> {
        match self {
            Value::Scalar(s) => DMatrix::identity(dim, dim) * s,
            Value::Matrix(m) => m,
        }
    }
}

impl OperatorExpr {
    pub fn parse(text: &str) -> Result<Self> {
        let mut parser = Parser::new(text);
        let expr = parser.expr()?;
        parser.skip_ws();
        if let Some(c) = parser.peek() {
            return Err(parser.error(format!("unexpected '{c}'")));
        }
        Ok(expr)
    }

    /// Evaluates the expression on a `dim`-level truncated Fock basis.
    pub fn eval(&self, dim: usize) -> Result<OperatorMatrix> {
        let m = self.value(dim)?.into_matrix(dim);
        OperatorMatrix::new(m)
    }

    fn value(&self, dim: usize) -> Result<Value> {
        Ok(match self {
            OperatorExpr::Scalar(s) => Value::Scalar(*s),
            OperatorExpr::Primitive(p) => Value::Matrix(p.matrix(dim)?.matrix().clone()),
            OperatorExpr::Neg(e) => match e.value(dim)? {
                Value::Scalar(s) => Value::Scalar(-s),
                Value::Matrix(m) => Value::Matrix(-m),
            },
            OperatorExpr::Sum(l, r) => combine(l.value(dim)?, r.value(dim)?, dim, ONE),
            OperatorExpr::Difference(l, r) => combine(l.value(dim)?, r.value(dim)?, dim, -ONE),
            OperatorExpr::Product(l, r) => match (l.value(dim)?, r.value(dim)?) {
                (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a * b),
                (Value::Scalar(s), Value::Matrix(m)) | (Value::Matrix(m), Value::Scalar(s)) => {
                    Value::Matrix(m * s)
                }
                (Value::Matrix(a), Value::Matrix(b)) => Value::Matrix(a * b),
            },
        })
    }
}

fn combine(left: Value, right: Value, dim: usize, sign: C64) -> Value {
    match (left, right) {
        (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a + sign * b),
        (l, r) => Value::Matrix(l.into_matrix(dim) + r.into_matrix(dim) * sign),
    }
}

impl FromStr for OperatorExpr {
    type Err = QsdError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

impl fmt::Display for OperatorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorExpr::Scalar(s) if s.im == 0.0 => write!(f, "{}", s.re),
            OperatorExpr::Scalar(s) if s.re == 0.0 => write!(f, "{}i", s.im),
            OperatorExpr::Scalar(s) => write!(f, "({} + {}i)", s.re, s.im),
            OperatorExpr::Primitive(p) => f.write_str(p.name()),
            OperatorExpr::Neg(e) => write!(f, "-({e})"),
            OperatorExpr::Sum(l, r) => write!(f, "({l} + {r})"),
            OperatorExpr::Difference(l, r) => write!(f, "({l} - {r})"),
            OperatorExpr::Product(l, r) => write!(f, "{l}*{r}"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn error(&self, message: String) -> QsdError {
        let before = &self.src[..self.pos];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        QsdError::Parse {
            line,
            column,
            message,
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.pos += want.len_utf8();
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<OperatorExpr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = OperatorExpr::Sum(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = OperatorExpr::Difference(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<OperatorExpr> {
        let mut lhs = self.factor()?;
        while self.eat('*') {
            lhs = OperatorExpr::Product(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<OperatorExpr> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of expression".into())),
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(')') {
                    return Err(self.error("expected ')'".into()));
                }
                Ok(inner)
            }
            Some('-') => {
                self.pos += 1;
                Ok(OperatorExpr::Neg(Box::new(self.factor()?)))
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.scalar(),
            Some(c) if c.is_ascii_alphabetic() => self.primitive(),
            Some(c) => Err(self.error(format!("unexpected '{c}'"))),
        }
    }

    fn scalar(&mut self) -> Result<OperatorExpr> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut end = start;
        while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
            end += 1;
        }
        if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
            let mut exp = end + 1;
            if exp < bytes.len() && (bytes[exp] == b'+' || bytes[exp] == b'-') {
                exp += 1;
            }
            if exp < bytes.len() && bytes[exp].is_ascii_digit() {
                while exp < bytes.len() && bytes[exp].is_ascii_digit() {
                    exp += 1;
                }
                end = exp;
            }
        }
        let literal = &self.src[start..end];
        let value: f64 = literal
            .parse()
            .map_err(|_| self.error(format!("malformed number '{literal}'")))?;
        self.pos = end;
        if self.peek() == Some('i') {
            // Reject things like `2id`; the suffix must end the literal.
            let next = self.src[self.pos + 1..].chars().next();
            if !next.is_some_and(|c| c.is_ascii_alphanumeric()) {
                self.pos += 1;
                return Ok(OperatorExpr::Scalar(C64::new(0.0, value)));
            }
        }
        Ok(OperatorExpr::Scalar(C64::new(value, 0.0)))
    }

    fn primitive(&mut self) -> Result<OperatorExpr> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        if name == "i" {
            return Ok(OperatorExpr::Scalar(C64::new(0.0, 1.0)));
        }
        match Primitive::from_name(name) {
            Some(p) => Ok(OperatorExpr::Primitive(p)),
            None => {
                self.pos = start;
                Err(self.error(format!("unknown primitive '{name}'")))
            }
        }
    }
}

/// Parses and evaluates in one step.
pub fn eval_expr(text: &str, dim: usize) -> Result<OperatorMatrix> {
    OperatorExpr::parse(text)?.eval(dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fock_annihilation, fock_number, momentum, position};

    fn assert_close(a: &OperatorMatrix, b: &DMatrix<C64>, tol: f64) {
        assert!((a.matrix() - b).camax() <= tol, "{} vs {}", a.matrix(), b);
    }

    #[test]
    fn number_operator() {
        let m = eval_expr("adag*a", 3).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            C64::from(0.0),
            C64::from(1.0),
            C64::from(2.0),
        ]));
        assert_close(&m, &expected, 1e-15);
        assert!(m.is_hermitian());
    }

    #[test]
    fn anharmonic_term() {
        let dim = 10;
        let m = eval_expr("0.5*0.004*adag*adag*a*a", dim).unwrap();
        for k in 0..dim {
            let expected = 0.002 * (k * k.saturating_sub(1)) as f64;
            assert!((m.matrix()[(k, k)].re - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_and_scalars() {
        for dim in [2, 7] {
            let id = eval_expr("id", dim).unwrap();
            assert_close(&id, &DMatrix::identity(dim, dim), 0.0);
            let two = eval_expr("1 + 1", dim).unwrap();
            assert_close(&two, &(DMatrix::identity(dim, dim) * C64::from(2.0)), 0.0);
        }
    }

    #[test]
    fn driven_damped_hamiltonian() {
        let dim = 6;
        let h = eval_expr("2i*(adag - a)", dim).unwrap();
        let a = fock_annihilation(dim).unwrap();
        let expected = (a.matrix().adjoint() - a.matrix()) * C64::new(0.0, 2.0);
        assert_close(&h, &expected, 1e-15);
        assert!(h.is_hermitian());
        assert_eq!(eval_expr("i*(adag - a)*2", dim).unwrap(), h);
    }

    #[test]
    fn quadratures_and_precedence() {
        let dim = 5;
        assert_close(
            &eval_expr("q", dim).unwrap(),
            position(dim).unwrap().matrix(),
            0.0,
        );
        assert_close(
            &eval_expr("p", dim).unwrap(),
            momentum(dim).unwrap().matrix(),
            0.0,
        );
        let n = fock_number(dim).unwrap();
        let lhs = eval_expr("1 + 2*n", dim).unwrap();
        let expected = DMatrix::identity(dim, dim) + n.matrix() * C64::from(2.0);
        assert_close(&lhs, &expected, 1e-15);
        let grouped = eval_expr("(1 + 2)*n", dim).unwrap();
        assert_close(&grouped, &(n.matrix() * C64::from(3.0)), 1e-15);
        let neg = eval_expr("-n + 1e-1*n", dim).unwrap();
        assert_close(&neg, &(n.matrix() * C64::from(-0.9)), 1e-15);
    }

    #[test]
    fn errors_carry_position() {
        match OperatorExpr::parse("adag*b") {
            Err(QsdError::Parse {
                line,
                column,
                message,
            }) => {
                assert_eq!((line, column), (1, 6));
                assert!(message.contains("unknown primitive 'b'"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(OperatorExpr::parse("(a + adag").is_err());
        assert!(OperatorExpr::parse("a +").is_err());
        assert!(OperatorExpr::parse("a ) ").is_err());
        assert!(OperatorExpr::parse("").is_err());
    }

    #[test]
    fn display_round_trips() {
        for text in [
            "0.5*0.004*adag*adag*a*a + 2i*(adag - a)",
            "-q*p + id",
            "(n - 3)*(n - 3)",
        ] {
            let expr = OperatorExpr::parse(text).unwrap();
            let again = OperatorExpr::parse(&expr.to_string()).unwrap();
            assert_eq!(expr.eval(6).unwrap(), again.eval(6).unwrap());
        }
    }
}
