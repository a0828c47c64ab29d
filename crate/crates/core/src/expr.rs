//! A small arithmetic expression language for user-defined maps.
//!
//! Variables are `x1..xd`. Supported operators: `+ - * / % ^`, unary minus,
//! parentheses. Functions: `sin cos tan exp log sqrt abs floor`, and the
//! two-argument `mod(a, b)` (result in `[0, b)`), `min`, `max`, `atan2`.
//! Constants: `pi`, `tau`, `e`, plus any user parameter passed at parse time.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("column {column}: {message}")]
pub struct ExprError {
    /// 1-based column in the expression source.
    pub column: usize,
    pub message: String,
}

impl ExprError {
    fn new(column: usize, message: impl Into<String>) -> Self {
        Self {
            column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Floor,
    Mod,
    Min,
    Max,
    Atan2,
}

impl Func {
    fn lookup(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "tan" => Self::Tan,
            "exp" => Self::Exp,
            "log" | "ln" => Self::Log,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            "floor" => Self::Floor,
            "mod" => Self::Mod,
            "min" => Self::Min,
            "max" => Self::Max,
            "atan2" => Self::Atan2,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Self::Mod | Self::Min | Self::Max | Self::Atan2 => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index (`x1` is `Var(0)`).
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Floored modulus; the result has the sign of `b`.
pub fn fmod_floor(a: f64, b: f64) -> f64 {
    let r = a - b * (a / b).floor();
    // a/b rounding can leave r == b
    if b > 0.0 && r >= b {
        0.0
    } else {
        r
    }
}

impl Expr {
    /// Parses `src` with variables `x1..x{dimension}` and the given named constants.
    pub fn parse(
        src: &str,
        dimension: usize,
        params: &BTreeMap<String, f64>,
    ) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            dimension,
            params,
            end_column: src.chars().count() + 1,
        };
        let expr = parser.expr()?;
        if let Some(tok) = parser.peek() {
            return Err(ExprError::new(
                tok.column,
                format!("unexpected {}", tok.kind),
            ));
        }
        Ok(expr)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(e) => -e.eval(x),
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Mod => fmod_floor(a, b),
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(x);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Floor => a.floor(),
                    Func::Mod => fmod_floor(a, args[1].eval(x)),
                    Func::Min => a.min(args[1].eval(x)),
                    Func::Max => a.max(args[1].eval(x)),
                    Func::Atan2 => a.atan2(args[1].eval(x)),
                }
            }
        }
    }

    /// Highest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_var(),
            Expr::Binary(_, a, b) => a.max_var().max(b.max_var()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Num(v) => write!(f, "number {v}"),
            TokenKind::Ident(s) => write!(f, "identifier '{s}'"),
            TokenKind::Op(c) => write!(f, "operator '{c}'"),
            TokenKind::LParen => write!(f, "'('"),
            TokenKind::RParen => write!(f, "')'"),
            TokenKind::Comma => write!(f, "','"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    column: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let value = text
                .parse::<f64>()
                .map_err(|_| ExprError::new(column, format!("malformed number '{text}'")))?;
            out.push(Token {
                kind: TokenKind::Num(value),
                column,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                column,
            });
            continue;
        }
        let kind = match c {
            '+' | '-' | '*' | '/' | '%' | '^' => TokenKind::Op(c),
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            ',' => TokenKind::Comma,
            _ => return Err(ExprError::new(column, format!("unexpected character '{c}'"))),
        };
        out.push(Token { kind, column });
        i += 1;
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    dimension: usize,
    params: &'a BTreeMap<String, f64>,
    end_column: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn peek_op(&self) -> Option<char> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Op(c),
                ..
            }) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, kind: TokenKind) -> Result<(), ExprError> {
        match self.next() {
            Some(tok) if tok.kind == kind => Ok(()),
            Some(tok) => Err(ExprError::new(
                tok.column,
                format!("expected {kind}, found {}", tok.kind),
            )),
            None => Err(ExprError::new(
                self.end_column,
                format!("expected {kind}, found end of input"),
            )),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_op().filter(|c| *c == '+' || *c == '-') {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if op == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self
            .peek_op()
            .filter(|c| *c == '*' || *c == '/' || *c == '%')
        {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = match op {
                '*' => BinOp::Mul,
                '/' => BinOp::Div,
                _ => BinOp::Mod,
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            // right associative, binds tighter than unary minus on the left
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some(tok) = self.next() else {
            return Err(ExprError::new(self.end_column, "unexpected end of input"));
        };
        match tok.kind {
            TokenKind::Num(v) => Ok(Expr::Const(v)),
            TokenKind::LParen => {
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            TokenKind::Ident(name) => {
                if matches!(self.peek(), Some(Token { kind: TokenKind::LParen, .. })) {
                    let func = Func::lookup(&name).ok_or_else(|| {
                        ExprError::new(tok.column, format!("unknown function '{name}'"))
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while matches!(self.peek(), Some(Token { kind: TokenKind::Comma, .. })) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(TokenKind::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ExprError::new(
                            tok.column,
                            format!(
                                "'{name}' takes {} argument(s), got {}",
                                func.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Expr::Call(func, args));
                }
                self.identifier(&name, tok.column)
            }
            other => Err(ExprError::new(tok.column, format!("unexpected {other}"))),
        }
    }

    fn identifier(&self, name: &str, column: usize) -> Result<Expr, ExprError> {
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if idx == 0 || idx > self.dimension {
                return Err(ExprError::new(
                    column,
                    format!("variable '{name}' out of range for dimension {}", self.dimension),
                ));
            }
            return Ok(Expr::Var(idx - 1));
        }
        if let Some(v) = self.params.get(name) {
            return Ok(Expr::Const(*v));
        }
        match name {
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "tau" => Ok(Expr::Const(std::f64::consts::TAU)),
            "e" => Ok(Expr::Const(std::f64::consts::E)),
            _ => Err(ExprError::new(column, format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64]) -> f64 {
        Expr::parse(src, x.len(), &BTreeMap::new()).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(eval("1 + 2 * 3", &[]), 7.0);
        assert_eq!(eval("(1 + 2) * 3", &[]), 9.0);
        assert_eq!(eval("2 ^ 3 ^ 2", &[]), 512.0);
        assert_eq!(eval("-2 ^ 2", &[]), -4.0);
        assert_eq!(eval("8 / 4 / 2", &[]), 1.0);
        assert_eq!(eval("10 - 4 - 3", &[]), 3.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(eval("2*x1 + x2", &[0.5, 0.25]), 1.25);
        assert_eq!(eval("mod(2*x1, 1)", &[0.75]), 0.5);
        assert_eq!(eval("mod(-0.25, 1)", &[0.0]), 0.75);
        assert_eq!(eval("-7 % 3", &[]), 2.0);
        assert!((eval("sin(pi/2)", &[]) - 1.0).abs() < 1e-15);
        assert_eq!(eval("max(x1, 3)", &[1.0]), 3.0);
        assert_eq!(eval("floor(2.7)", &[]), 2.0);
        assert_eq!(eval("1.5e-3 * 2E3", &[]), 3.0);
    }

    #[test]
    fn params_are_constants() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 1.2);
        let e = Expr::parse("k * x1", 1, &params).unwrap();
        assert_eq!(e.eval(&[2.0]), 2.4);
    }

    #[test]
    fn errors_carry_columns() {
        let none = BTreeMap::new();
        let err = Expr::parse("x1 + x3", 2, &none).unwrap_err();
        assert_eq!(err.column, 6);
        let err = Expr::parse("x1 + $", 1, &none).unwrap_err();
        assert_eq!(err.column, 6);
        let err = Expr::parse("sin(x1", 1, &none).unwrap_err();
        assert_eq!(err.column, 7);
        let err = Expr::parse("foo(1)", 1, &none).unwrap_err();
        assert_eq!(err.column, 1);
        let err = Expr::parse("mod(1)", 1, &none).unwrap_err();
        assert!(err.message.contains("2 argument"));
        assert!(Expr::parse("1 2", 1, &none).is_err());
        assert!(Expr::parse("", 1, &none).is_err());
    }

    #[test]
    fn floored_mod_stays_in_range() {
        for &a in &[-1e-17, -0.0, 0.9999999999999999, 3.0, -3.0] {
            let r = fmod_floor(a, 1.0);
            assert!((0.0..1.0).contains(&r), "{a} -> {r}");
        }
    }
}
