//! Arithmetic expression trees over named variables and parameters.
//!
//! Expressions are the carrier for every user-supplied function in the engine:
//! Lagrangians, Hamiltonians, metric entries, constraints, generating functions,
//! and symmetry generator components. The grammar is deliberately small:
//!
//! ```text
//! expr    := term (('+' | '-') term)*          left-assoc
//! term    := power (('*' | '/') power)*        left-assoc
//! power   := unary ('^' power)?                right-assoc
//! unary   := '-' unary | primary
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds tighter than `^`, which binds tighter than `*`/`/`,
//! which bind tighter than `+`/`-`. `a^b` is the same node as `pow(a, b)`.
//! There is no implicit multiplication: `2q` is a syntax error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{EvalError, ParseError};

/// The closed set of callable functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
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
            Func::Abs => "abs",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// An immutable arithmetic expression tree.
///
/// Identifiers are classified as variables or parameters only at evaluation
/// time, against a [`VarLayout`] and a parameter map; the tree itself does not
/// distinguish them.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Ident(String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn ident(name: impl Into<String>) -> Expr {
        Expr::Ident(name.into())
    }

    /// The set of identifiers appearing anywhere in the tree.
    pub fn free_identifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_identifiers(&mut out);
        out
    }

    fn collect_identifiers(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Ident(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(inner) => inner.collect_identifiers(out),
            Expr::Binary(_, lhs, rhs) => {
                lhs.collect_identifiers(out);
                rhs.collect_identifiers(out);
            }
            Expr::Call(_, arg) => arg.collect_identifiers(out),
        }
    }

    /// True if `name` occurs in the tree.
    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Ident(id) => id == name,
            Expr::Neg(inner) => inner.depends_on(name),
            Expr::Binary(_, lhs, rhs) => lhs.depends_on(name) || rhs.depends_on(name),
            Expr::Call(_, arg) => arg.depends_on(name),
        }
    }
}

// Precedence levels used by both the parser and the printer.
// Higher binds tighter. `unary -` sits above `^` on purpose: `-q^2`
// parses as `(-q)^2`.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_NEG: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) | Expr::Ident(_) | Expr::Call(..) => PREC_ATOM,
        Expr::Neg(_) => PREC_NEG,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Expr::Binary(BinOp::Pow, ..) => PREC_POW,
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if precedence(e) < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Ident(name) => write!(f, "{name}"),
            Expr::Neg(inner) => {
                write!(f, "-")?;
                fmt_child(inner, PREC_NEG, f)
            }
            Expr::Binary(op, lhs, rhs) => {
                let (sym, prec) = match op {
                    BinOp::Add => ("+", PREC_ADD),
                    BinOp::Sub => ("-", PREC_ADD),
                    BinOp::Mul => ("*", PREC_MUL),
                    BinOp::Div => ("/", PREC_MUL),
                    BinOp::Pow => ("^", PREC_POW),
                };
                if *op == BinOp::Pow {
                    // right-assoc: the left child needs strictly tighter binding
                    fmt_child(lhs, prec + 1, f)?;
                    write!(f, "{sym}")?;
                    fmt_child(rhs, prec, f)
                } else {
                    fmt_child(lhs, prec, f)?;
                    write!(f, " {sym} ")?;
                    fmt_child(rhs, prec + 1, f)
                }
            }
            Expr::Call(func, arg) => write!(f, "{}({})", func.name(), arg),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
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
    Comma,
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Lexer<'a> {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Returns (token, byte offset of its first character).
    fn next(&mut self) -> Result<(Tok, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((Tok::End, start));
        }
        let c = self.src[self.pos];
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            self.pos += 1;
            return Ok((tok, start));
        }
        if c.is_ascii_digit() || (c == b'.' && self.peek_digit(self.pos + 1)) {
            return self.lex_number(start);
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.src.len()
                && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.src[start..self.pos])
                .expect("ascii ident")
                .to_owned();
            return Ok((Tok::Ident(name), start));
        }
        Err(ParseError {
            offset: start,
            message: format!("unexpected character `{}`", c as char),
        })
    }

    fn peek_digit(&self, at: usize) -> bool {
        at < self.src.len() && self.src[at].is_ascii_digit()
    }

    fn lex_number(&mut self, start: usize) -> Result<(Tok, usize), ParseError> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if self.pos < self.src.len() && (self.src[self.pos] | 0x20) == b'e' {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            if self.peek_digit(self.pos) {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // `1e` followed by non-digit: the `e` belongs to an identifier,
                // which the grammar rejects anyway; back off and let the parser complain.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii number");
        let value: f64 = text.parse().map_err(|_| ParseError {
            offset: start,
            message: format!("invalid numeric literal `{text}`"),
        })?;
        Ok((Tok::Num(value), start))
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    offset: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Parser<'a>, ParseError> {
        let mut lexer = Lexer::new(src);
        let (tok, offset) = lexer.next()?;
        Ok(Parser { lexer, tok, offset })
    }

    fn bump(&mut self) -> Result<(), ParseError> {
        let (tok, offset) = self.lexer.next()?;
        self.tok = tok;
        self.offset = offset;
        Ok(())
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        ParseError {
            offset: self.offset,
            message: format!("expected {expected}, found {}", self.tok.describe()),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.power()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.power()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if self.tok == Tok::Caret {
            self.bump()?;
            let exponent = self.power()?;
            Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)))
        } else {
            Ok(base)
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Minus {
            self.bump()?;
            let inner = self.unary()?;
            Ok(Expr::Neg(Box::new(inner)))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Tok::Ident(name) => {
                let at = self.offset;
                self.bump()?;
                if self.tok == Tok::LParen {
                    self.call(&name, at)
                } else {
                    Ok(Expr::Ident(name))
                }
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.expr()?;
                if self.tok != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump()?;
                Ok(inner)
            }
            _ => Err(self.unexpected("a number, identifier, `-`, or `(`")),
        }
    }

    fn call(&mut self, name: &str, name_offset: usize) -> Result<Expr, ParseError> {
        debug_assert_eq!(self.tok, Tok::LParen);
        self.bump()?;
        let mut args = Vec::new();
        if self.tok != Tok::RParen {
            args.push(self.expr()?);
            while self.tok == Tok::Comma {
                self.bump()?;
                args.push(self.expr()?);
            }
        }
        if self.tok != Tok::RParen {
            return Err(self.unexpected("`,` or `)`"));
        }
        self.bump()?;

        if name == "pow" {
            if args.len() != 2 {
                return Err(ParseError {
                    offset: name_offset,
                    message: format!("function `pow` takes 2 arguments, got {}", args.len()),
                });
            }
            let exponent = args.pop().expect("two args");
            let base = args.pop().expect("two args");
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        let func = Func::from_name(name).ok_or_else(|| ParseError {
            offset: name_offset,
            message: format!("unknown function `{name}`"),
        })?;
        if args.len() != 1 {
            return Err(ParseError {
                offset: name_offset,
                message: format!("function `{name}` takes 1 argument, got {}", args.len()),
            });
        }
        Ok(Expr::Call(func, Box::new(args.pop().expect("one arg"))))
    }
}

/// Parse an expression in the engine grammar.
pub fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut parser = Parser::new(text)?;
    let expr = parser.expr()?;
    if parser.tok != Tok::End {
        return Err(parser.unexpected("an operator or end of input"));
    }
    Ok(expr)
}

// ---------------------------------------------------------------------------
// Variable layout
// ---------------------------------------------------------------------------

/// An ordered set of variable names with a name-to-slot index.
///
/// A layout fixes the meaning of a flat state vector, Darboux-style:
/// e.g. `[t, q1..qn, v1..vn]` for the nonautonomous Lagrangian chart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarLayout {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl VarLayout {
    pub fn new(names: Vec<String>) -> Result<VarLayout, EvalError> {
        let mut index = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            if !is_valid_identifier(name) {
                return Err(EvalError::InvalidIdentifier { name: name.clone() });
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(EvalError::DuplicateVariable { name: name.clone() });
            }
        }
        Ok(VarLayout { names, index })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<VarLayout, EvalError> {
        VarLayout::new(names.iter().map(|s| s.as_ref().to_owned()).collect())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

pub fn is_valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Integer power by repeated (binary) multiplication; defined for any base.
pub(crate) fn powi(base: f64, n: i64) -> f64 {
    let mut e = n.unsigned_abs();
    let mut acc = 1.0_f64;
    let mut b = base;
    while e > 0 {
        if e & 1 == 1 {
            acc *= b;
        }
        b *= b;
        e >>= 1;
    }
    if n < 0 {
        1.0 / acc
    } else {
        acc
    }
}

/// If `v` is an exactly-representable integer within range, return it.
pub(crate) fn as_integer_exponent(v: f64) -> Option<i64> {
    if v.fract() == 0.0 && v.abs() <= 2_147_483_647.0 {
        Some(v as i64)
    } else {
        None
    }
}

/// Evaluate `e` at `point` under `layout`, with `params` supplying the
/// remaining identifiers. Division by zero and out-of-domain function
/// arguments are errors, not NaNs.
pub fn eval(
    e: &Expr,
    layout: &VarLayout,
    point: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    if point.len() != layout.len() {
        return Err(EvalError::PointLength {
            expected: layout.len(),
            found: point.len(),
        });
    }
    eval_inner(e, layout, point, params)
}

fn domain(e: &Expr, reason: &str) -> EvalError {
    EvalError::Domain {
        subexpr: e.to_string(),
        reason: reason.to_owned(),
    }
}

fn eval_inner(
    e: &Expr,
    layout: &VarLayout,
    point: &[f64],
    params: &BTreeMap<String, f64>,
) -> Result<f64, EvalError> {
    let value = match e {
        Expr::Const(v) => *v,
        Expr::Ident(name) => match layout.slot(name) {
            Some(slot) => point[slot],
            None => *params
                .get(name)
                .ok_or_else(|| EvalError::Unbound { name: name.clone() })?,
        },
        Expr::Neg(inner) => -eval_inner(inner, layout, point, params)?,
        Expr::Binary(op, lhs, rhs) => {
            let a = eval_inner(lhs, layout, point, params)?;
            let b = eval_inner(rhs, layout, point, params)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(domain(e, "division by zero"));
                    }
                    a / b
                }
                BinOp::Pow => match as_integer_exponent(b) {
                    Some(n) => {
                        if a == 0.0 && n < 0 {
                            return Err(domain(e, "zero base with negative exponent"));
                        }
                        powi(a, n)
                    }
                    None => {
                        if a <= 0.0 {
                            return Err(domain(e, "non-integer power of a non-positive base"));
                        }
                        a.powf(b)
                    }
                },
            }
        }
        Expr::Call(func, arg) => {
            let x = eval_inner(arg, layout, point, params)?;
            match func {
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
                Func::Tan => {
                    if x.cos() == 0.0 {
                        return Err(domain(e, "tangent pole"));
                    }
                    x.tan()
                }
                Func::Exp => x.exp(),
                Func::Log => {
                    if x <= 0.0 {
                        return Err(domain(e, "logarithm of a non-positive value"));
                    }
                    x.ln()
                }
                Func::Sqrt => {
                    if x < 0.0 {
                        return Err(domain(e, "square root of a negative value"));
                    }
                    x.sqrt()
                }
                Func::Abs => x.abs(),
            }
        }
    };
    if !value.is_finite() {
        return Err(domain(e, "non-finite result"));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(src: &str) -> Expr {
        parse(src).expect(src)
    }

    #[test]
    fn precedence_forces_mul_under_add() {
        assert_eq!(
            p("a + b * c"),
            Expr::Binary(
                BinOp::Add,
                Box::new(Expr::ident("a")),
                Box::new(Expr::Binary(
                    BinOp::Mul,
                    Box::new(Expr::ident("b")),
                    Box::new(Expr::ident("c")),
                )),
            )
        );
    }

    #[test]
    fn caret_is_right_associative() {
        assert_eq!(p("a^b^c"), p("a^(b^c)"));
        assert_ne!(p("a^b^c"), p("(a^b)^c"));
    }

    #[test]
    fn unary_minus_binds_tighter_than_caret() {
        assert_eq!(p("-a^2"), p("(-a)^2"));
    }

    #[test]
    fn pow_call_is_the_caret_node() {
        assert_eq!(p("pow(a, b)"), p("a^b"));
    }

    #[test]
    fn kepler_friction_lagrangian_identifiers() {
        let expr = p("0.5*m*(vr^2 + r^2*vphi^2) - K/r - gamma*s");
        let ids = expr.free_identifiers();
        let expected: BTreeSet<String> = ["m", "K", "gamma", "vr", "r", "vphi", "s"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn damped_oscillator_identifiers() {
        let ids = p("0.5*m*v^2 - 0.5*k*q^2 - gamma*s").free_identifiers();
        let expected: BTreeSet<String> = ["m", "k", "gamma", "q", "v", "s"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(ids, expected);
    }

    #[test]
    fn constant_has_no_identifiers() {
        assert!(p("3.5").free_identifiers().is_empty());
    }

    #[test]
    fn sin_arity_error() {
        let err = parse("sin()").unwrap_err();
        assert!(err.message.contains("takes 1 argument"), "{err}");
    }

    #[test]
    fn unknown_function_error() {
        let err = parse("sinh(x)").unwrap_err();
        assert!(err.message.contains("unknown function"), "{err}");
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn no_implicit_multiplication() {
        assert!(parse("2q").is_err());
    }

    #[test]
    fn error_carries_byte_offset() {
        let err = parse("a + * b").unwrap_err();
        assert_eq!(err.offset, 4);
    }

    fn ev(src: &str, vars: &[(&str, f64)], params: &[(&str, f64)]) -> Result<f64, EvalError> {
        let layout =
            VarLayout::from_names(&vars.iter().map(|(n, _)| *n).collect::<Vec<_>>()).unwrap();
        let point: Vec<f64> = vars.iter().map(|(_, v)| *v).collect();
        let params: BTreeMap<String, f64> =
            params.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        eval(&p(src), &layout, &point, &params)
    }

    #[test]
    fn eval_square() {
        assert_eq!(ev("q^2", &[("q", 3.0)], &[]).unwrap(), 9.0);
    }

    #[test]
    fn eval_kepler_potential() {
        assert_eq!(ev("K/r", &[("r", 1.0)], &[("K", -1.0)]).unwrap(), -1.0);
    }

    #[test]
    fn eval_sqrt_negative_is_domain_error() {
        let err = ev("sqrt(q)", &[("q", -1.0)], &[]).unwrap_err();
        match err {
            EvalError::Domain { subexpr, .. } => assert_eq!(subexpr, "sqrt(q)"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn eval_division_by_zero_is_error() {
        assert!(ev("1/q", &[("q", 0.0)], &[]).is_err());
    }

    #[test]
    fn eval_unbound_identifier() {
        match ev("a + b", &[("a", 1.0)], &[]).unwrap_err() {
            EvalError::Unbound { name } => assert_eq!(name, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn integer_exponent_of_negative_base() {
        assert_eq!(ev("q^3", &[("q", -2.0)], &[]).unwrap(), -8.0);
        assert!(ev("q^0.5", &[("q", -2.0)], &[]).is_err());
    }

    #[test]
    fn display_round_trips_structurally() {
        for src in [
            "a + b * c",
            "a^b^c",
            "-a^2",
            "-(a^2)",
            "(a + b) * c",
            "0.5*m*(vr^2 + r^2*vphi^2) - K/r - gamma*s",
            "sin(q)*exp(v) - abs(q - v)/sqrt(2)",
            "1e-3 * q - 2.5e2",
            "a - (b - c)",
            "a / (b / c)",
            "--a",
        ] {
            let once = p(src);
            let again = parse(&once.to_string()).expect("printed form parses");
            assert_eq!(once, again, "round trip failed for `{src}` -> `{once}`");
        }
    }
}
