//! Expression trees and their prefix-token linearization.
//!
//! Expressions are binary trees over {+, -, *, /}, {log, exp, sin, cos, tan},
//! variables x0..x9 and real constants. The canonical serialized form is the
//! prefix (Polish) token sequence wrapped in BOS/EOS, with each constant
//! emitted as its sign/mantissa/exponent sub-token triple.

use crate::encoding::{self, NumericTokenTriple};
use crate::token::{Token, TokenSeq, MAX_VARS};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add = 0,
    Sub = 1,
    Mul = 2,
    Div = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Log = 0,
    Exp = 1,
    Sin = 2,
    Cos = 3,
    Tan = 4,
}

impl BinaryOp {
    pub const ALL: [BinaryOp; 4] = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];

    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::Div => "div",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }

    pub(crate) fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 5] = [
        UnaryOp::Log,
        UnaryOp::Exp,
        UnaryOp::Sin,
        UnaryOp::Cos,
        UnaryOp::Tan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Log => "log",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Tan => "tan",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == s)
    }

    pub(crate) fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// An expression tree node.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    /// Variable x_i, i < 10.
    Var(u8),
    /// Concrete real constant.
    Const(f64),
    /// The constant placeholder "c" (a skeleton slot to be fitted).
    Hole,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ExprError {
    /// Evaluation left the operator's domain: log of a non-positive value,
    /// division by (near-)zero, tan at a pole, or overflow to non-finite.
    #[error("domain error: {0}")]
    Domain(&'static str),
    /// The expression still contains unfitted constant placeholders.
    #[error("expression contains an unfitted constant placeholder")]
    Placeholder,
    /// Variable index not covered by the input vector.
    #[error("variable x{0} out of range for input of dimension {1}")]
    VarOutOfRange(u8, usize),
    /// The token sequence is not a valid prefix encoding.
    #[error("syntax error: {0}")]
    Syntax(String),
}

/// Tan poles are detected as |cos x| below this threshold.
pub const TAN_POLE_EPS: f64 = 1e-12;
/// Divisors with magnitude below this raise a domain error.
pub const DIV_EPS: f64 = 1e-300;

impl Expr {
    pub fn var(i: u8) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Expr {
        Expr::Unary(op, Box::new(child))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Evaluate at `x` under exact operator semantics. Any domain violation
    /// or non-finite intermediate is an error, never a silent NaN.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Var(i) => *x
                .get(*i as usize)
                .ok_or(ExprError::VarOutOfRange(*i, x.len()))?,
            Expr::Const(c) => *c,
            Expr::Hole => return Err(ExprError::Placeholder),
            Expr::Unary(op, a) => {
                let a = a.eval(x)?;
                match op {
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return Err(ExprError::Domain("log of non-positive value"));
                        }
                        a.ln()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => {
                        if a.cos().abs() < TAN_POLE_EPS {
                            return Err(ExprError::Domain("tan at a pole"));
                        }
                        a.tan()
                    }
                }
            }
            Expr::Binary(op, l, r) => {
                let l = l.eval(x)?;
                let r = r.eval(x)?;
                match op {
                    BinaryOp::Add => l + r,
                    BinaryOp::Sub => l - r,
                    BinaryOp::Mul => l * r,
                    BinaryOp::Div => {
                        if r.abs() < DIV_EPS {
                            return Err(ExprError::Domain("division by zero"));
                        }
                        l / r
                    }
                }
            }
        };
        if !v.is_finite() {
            return Err(ExprError::Domain("overflow to non-finite"));
        }
        Ok(v)
    }

    /// Token count of the equation: one per operator, variable and constant.
    /// Sub-token triples count once; BOS/EOS/PAD are excluded.
    pub fn complexity(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) | Expr::Hole => 1,
            Expr::Unary(_, a) => 1 + a.complexity(),
            Expr::Binary(_, l, r) => 1 + l.complexity() + r.complexity(),
        }
    }

    /// Replace every concrete constant by the placeholder "c".
    pub fn canonicalize_constants(&self) -> Expr {
        match self {
            Expr::Var(i) => Expr::Var(*i),
            Expr::Const(_) | Expr::Hole => Expr::Hole,
            Expr::Unary(op, a) => Expr::unary(*op, a.canonicalize_constants()),
            Expr::Binary(op, l, r) => {
                Expr::binary(*op, l.canonicalize_constants(), r.canonicalize_constants())
            }
        }
    }

    /// Number of constant placeholders in the tree.
    pub fn hole_count(&self) -> usize {
        match self {
            Expr::Hole => 1,
            Expr::Var(_) | Expr::Const(_) => 0,
            Expr::Unary(_, a) => a.hole_count(),
            Expr::Binary(_, l, r) => l.hole_count() + r.hole_count(),
        }
    }

    /// Substitute placeholders with `values` in left-to-right prefix order.
    /// `values` must have exactly `hole_count()` entries.
    pub fn substitute_holes(&self, values: &[f64]) -> Expr {
        fn go(e: &Expr, values: &[f64], next: &mut usize) -> Expr {
            match e {
                Expr::Hole => {
                    let v = values[*next];
                    *next += 1;
                    Expr::Const(v)
                }
                Expr::Var(i) => Expr::Var(*i),
                Expr::Const(c) => Expr::Const(*c),
                Expr::Unary(op, a) => Expr::unary(*op, go(a, values, next)),
                Expr::Binary(op, l, r) => {
                    Expr::binary(*op, go(l, values, next), go(r, values, next))
                }
            }
        }
        let mut next = 0;
        let out = go(self, values, &mut next);
        assert_eq!(next, values.len(), "hole/value count mismatch");
        out
    }

    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<u8> {
        match self {
            Expr::Var(i) => Some(*i),
            Expr::Const(_) | Expr::Hole => None,
            Expr::Unary(_, a) => a.max_var(),
            Expr::Binary(_, l, r) => l.max_var().into_iter().chain(r.max_var()).max(),
        }
    }

    /// True if a log node anywhere in the tree has a variable-dependent
    /// argument — the signal to sample inputs from a positive domain.
    pub fn wants_positive_domain(&self) -> bool {
        match self {
            Expr::Var(_) | Expr::Const(_) | Expr::Hole => false,
            Expr::Unary(op, a) => {
                (*op == UnaryOp::Log && a.max_var().is_some()) || a.wants_positive_domain()
            }
            Expr::Binary(_, l, r) => l.wants_positive_domain() || r.wants_positive_domain(),
        }
    }
}

/// Linearize in prefix order, wrapped in BOS/EOS. Constants are emitted as
/// sign/mantissa/exponent triples (saturating at the exponent range limits,
/// so this never fails).
pub fn to_prefix(expr: &Expr) -> TokenSeq {
    fn walk(e: &Expr, out: &mut TokenSeq) {
        match e {
            Expr::Var(i) => out.push(Token::Var(*i)),
            Expr::Const(v) => {
                let t = encoding::tokenize_float_saturating(*v);
                out.push(Token::Sign {
                    negative: t.negative,
                });
                out.push(Token::Mantissa(t.mantissa));
                out.push(Token::Exponent(t.exponent));
            }
            Expr::Hole => out.push(Token::ConstHole),
            Expr::Unary(op, a) => {
                out.push(Token::Un(*op));
                walk(a, out);
            }
            Expr::Binary(op, l, r) => {
                out.push(Token::Bin(*op));
                walk(l, out);
                walk(r, out);
            }
        }
    }
    let mut out = vec![Token::Bos];
    walk(expr, &mut out);
    out.push(Token::Eos);
    out
}

/// Parse a prefix token sequence back into an expression.
///
/// Accepts arbitrary decoder output: trailing PAD after EOS is tolerated,
/// everything else must be a well-formed BOS + prefix encoding + EOS.
pub fn from_prefix(tokens: &[Token]) -> Result<Expr, ExprError> {
    // Strip trailing PAD, reject interior PAD.
    let mut end = tokens.len();
    while end > 0 && tokens[end - 1] == Token::Pad {
        end -= 1;
    }
    let toks = &tokens[..end];
    if toks.iter().any(|t| *t == Token::Pad) {
        return Err(ExprError::Syntax("interior PAD".into()));
    }
    if toks.first() != Some(&Token::Bos) {
        return Err(ExprError::Syntax("missing BOS".into()));
    }
    if toks.last() != Some(&Token::Eos) {
        return Err(ExprError::Syntax("missing EOS".into()));
    }
    let body = &toks[1..toks.len() - 1];
    if body.iter().any(|t| matches!(t, Token::Bos | Token::Eos)) {
        return Err(ExprError::Syntax("interior BOS/EOS".into()));
    }

    fn parse(body: &[Token], pos: &mut usize) -> Result<Expr, ExprError> {
        let tok = *body
            .get(*pos)
            .ok_or_else(|| ExprError::Syntax("arity underflow".into()))?;
        *pos += 1;
        match tok {
            Token::Var(i) => Ok(Expr::Var(i)),
            Token::ConstHole => Ok(Expr::Hole),
            Token::Un(op) => Ok(Expr::unary(op, parse(body, pos)?)),
            Token::Bin(op) => {
                let l = parse(body, pos)?;
                let r = parse(body, pos)?;
                Ok(Expr::binary(op, l, r))
            }
            Token::Sign { negative } => {
                let m = match body.get(*pos) {
                    Some(Token::Mantissa(m)) => *m,
                    _ => return Err(ExprError::Syntax("sign without mantissa".into())),
                };
                *pos += 1;
                let e = match body.get(*pos) {
                    Some(Token::Exponent(e)) => *e,
                    _ => return Err(ExprError::Syntax("mantissa without exponent".into())),
                };
                *pos += 1;
                Ok(Expr::Const(
                    NumericTokenTriple {
                        negative,
                        mantissa: m,
                        exponent: e,
                    }
                    .value(),
                ))
            }
            Token::Mantissa(_) | Token::Exponent(_) => {
                Err(ExprError::Syntax("dangling numeric sub-token".into()))
            }
            Token::Pad | Token::Bos | Token::Eos => unreachable!("filtered above"),
        }
    }

    let mut pos = 0;
    let expr = parse(body, &mut pos)?;
    if pos != body.len() {
        return Err(ExprError::Syntax("trailing tokens after expression".into()));
    }
    Ok(expr)
}

impl std::fmt::Display for Expr {
    /// Canonical textual form: infix with explicit parentheses, variables
    /// x0..x9, constants in shortest round-trip decimal, placeholder "c".
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Expr::Var(i) => write!(f, "x{i}"),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Hole => write!(f, "c"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
        }
    }
}

/// Parse the canonical textual form (the inverse of `Display`).
///
/// Grammar: sum of products with `+ - * /` at conventional precedence,
/// optional unary minus, `log/exp/sin/cos/tan(...)`, `x0..x9`, `c`,
/// decimal literals (including scientific notation).
pub fn parse_text(input: &str) -> Result<Expr, ExprError> {
    struct P<'a> {
        s: &'a [u8],
        pos: usize,
    }
    impl<'a> P<'a> {
        fn err(&self, what: &str) -> ExprError {
            ExprError::Syntax(format!("{what} at byte {}", self.pos))
        }
        fn skip_ws(&mut self) {
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
        }
        fn peek(&mut self) -> Option<u8> {
            self.skip_ws();
            self.s.get(self.pos).copied()
        }
        fn bump(&mut self) -> Option<u8> {
            let c = self.peek()?;
            self.pos += 1;
            Some(c)
        }
        fn expr(&mut self) -> Result<Expr, ExprError> {
            let mut lhs = self.term()?;
            loop {
                match self.peek() {
                    Some(b'+') => {
                        self.bump();
                        let rhs = self.term()?;
                        lhs = Expr::binary(BinaryOp::Add, lhs, rhs);
                    }
                    Some(b'-') => {
                        self.bump();
                        let rhs = self.term()?;
                        lhs = Expr::binary(BinaryOp::Sub, lhs, rhs);
                    }
                    _ => return Ok(lhs),
                }
            }
        }
        fn term(&mut self) -> Result<Expr, ExprError> {
            let mut lhs = self.factor()?;
            loop {
                match self.peek() {
                    Some(b'*') => {
                        self.bump();
                        let rhs = self.factor()?;
                        lhs = Expr::binary(BinaryOp::Mul, lhs, rhs);
                    }
                    Some(b'/') => {
                        self.bump();
                        let rhs = self.factor()?;
                        lhs = Expr::binary(BinaryOp::Div, lhs, rhs);
                    }
                    _ => return Ok(lhs),
                }
            }
        }
        fn factor(&mut self) -> Result<Expr, ExprError> {
            match self.peek() {
                Some(b'-') => {
                    self.bump();
                    // Fold the sign into literals, otherwise emit 0 - e.
                    let inner = self.factor()?;
                    Ok(match inner {
                        Expr::Const(v) => Expr::Const(-v),
                        other => Expr::binary(BinaryOp::Sub, Expr::Const(0.0), other),
                    })
                }
                Some(b'(') => {
                    self.bump();
                    let e = self.expr()?;
                    if self.bump() != Some(b')') {
                        return Err(self.err("expected ')'"));
                    }
                    Ok(e)
                }
                Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
                Some(c) if c.is_ascii_alphabetic() => self.ident(),
                _ => Err(self.err("expected expression")),
            }
        }
        fn number(&mut self) -> Result<Expr, ExprError> {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len()
                && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
            {
                self.pos += 1;
            }
            // Scientific suffix e[+-]?digits.
            if self.pos < self.s.len() && (self.s[self.pos] | 0x20) == b'e' {
                let mark = self.pos;
                self.pos += 1;
                if self.pos < self.s.len() && (self.s[self.pos] == b'+' || self.s[self.pos] == b'-')
                {
                    self.pos += 1;
                }
                if self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                    while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                } else {
                    self.pos = mark;
                }
            }
            let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
            text.parse::<f64>()
                .map(Expr::Const)
                .map_err(|_| self.err("bad numeric literal"))
        }
        fn ident(&mut self) -> Result<Expr, ExprError> {
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.s.len()
                && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
            if name == "c" {
                return Ok(Expr::Hole);
            }
            if let Some(rest) = name.strip_prefix('x') {
                if let Ok(i) = rest.parse::<u8>() {
                    if (i as usize) < MAX_VARS {
                        return Ok(Expr::Var(i));
                    }
                }
            }
            if let Some(op) = UnaryOp::from_name(name) {
                if self.bump() != Some(b'(') {
                    return Err(self.err("expected '(' after function name"));
                }
                let arg = self.expr()?;
                if self.bump() != Some(b')') {
                    return Err(self.err("expected ')'"));
                }
                return Ok(Expr::unary(op, arg));
            }
            Err(ExprError::Syntax(format!("unknown identifier {name:?}")))
        }
    }

    let mut p = P {
        s: input.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn add(l: Expr, r: Expr) -> Expr {
        Expr::binary(BinaryOp::Add, l, r)
    }

    #[test]
    fn eval_arithmetic_identity() {
        let e = add(Expr::var(0), Expr::var(1));
        assert_eq!(e.eval(&[2.0, 3.0]), Ok(5.0));
    }

    #[test]
    fn eval_log_domain() {
        let e = Expr::unary(UnaryOp::Log, Expr::var(0));
        assert!(matches!(e.eval(&[-1.0]), Err(ExprError::Domain(_))));
        assert!(matches!(e.eval(&[0.0]), Err(ExprError::Domain(_))));
    }

    /// Independent tree-walking oracle used to pin the hand-evaluated case.
    fn oracle_eval(e: &Expr, x: &[f64]) -> Option<f64> {
        let v = match e {
            Expr::Var(i) => *x.get(*i as usize)?,
            Expr::Const(c) => *c,
            Expr::Hole => return None,
            Expr::Unary(op, a) => {
                let a = oracle_eval(a, x)?;
                match op {
                    UnaryOp::Log => {
                        if a <= 0.0 {
                            return None;
                        }
                        a.ln()
                    }
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Sin => a.sin(),
                    UnaryOp::Cos => a.cos(),
                    UnaryOp::Tan => {
                        if a.cos().abs() < TAN_POLE_EPS {
                            return None;
                        }
                        a.tan()
                    }
                }
            }
            Expr::Binary(op, l, r) => {
                let l = oracle_eval(l, x)?;
                let r = oracle_eval(r, x)?;
                match op {
                    BinaryOp::Add => l + r,
                    BinaryOp::Sub => l - r,
                    BinaryOp::Mul => l * r,
                    BinaryOp::Div => {
                        if r.abs() < DIV_EPS {
                            return None;
                        }
                        l / r
                    }
                }
            }
        };
        v.is_finite().then_some(v)
    }

    #[test]
    fn eval_hand_case_sin_mul_plus_const() {
        // sin(x0)*x1 + 0.5 at [pi/2, 2] = 2.5
        let e = add(
            Expr::binary(
                BinaryOp::Mul,
                Expr::unary(UnaryOp::Sin, Expr::var(0)),
                Expr::var(1),
            ),
            Expr::constant(0.5),
        );
        let x = [FRAC_PI_2, 2.0];
        let got = e.eval(&x).unwrap();
        assert!((got - 2.5).abs() < 1e-12);
        assert_eq!(got, oracle_eval(&e, &x).unwrap());
    }

    #[test]
    fn eval_division_near_zero_is_domain_error() {
        let e = Expr::binary(BinaryOp::Div, Expr::constant(1.0), Expr::var(0));
        assert!(matches!(e.eval(&[0.0]), Err(ExprError::Domain(_))));
        assert!(matches!(e.eval(&[1e-301]), Err(ExprError::Domain(_))));
        assert_eq!(e.eval(&[2.0]), Ok(0.5));
    }

    #[test]
    fn eval_tan_pole() {
        let e = Expr::unary(UnaryOp::Tan, Expr::var(0));
        assert!(matches!(e.eval(&[FRAC_PI_2]), Err(ExprError::Domain(_))));
        assert!(e.eval(&[1.0]).is_ok());
    }

    #[test]
    fn eval_overflow_is_domain_error() {
        let e = Expr::unary(UnaryOp::Exp, Expr::var(0));
        assert!(matches!(e.eval(&[1000.0]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn prefix_simple_forms() {
        let e = add(Expr::var(0), Expr::var(1));
        assert_eq!(
            to_prefix(&e),
            vec![
                Token::Bos,
                Token::Bin(BinaryOp::Add),
                Token::Var(0),
                Token::Var(1),
                Token::Eos
            ]
        );
        let s = Expr::unary(UnaryOp::Sin, Expr::var(0));
        assert_eq!(
            to_prefix(&s),
            vec![Token::Bos, Token::Un(UnaryOp::Sin), Token::Var(0), Token::Eos]
        );
    }

    #[test]
    fn prefix_constant_triple() {
        // x0 + 0.7895 -> [BOS, add, x0, +, 7895, E-4, EOS]
        let e = add(Expr::var(0), Expr::constant(0.7895));
        assert_eq!(
            to_prefix(&e),
            vec![
                Token::Bos,
                Token::Bin(BinaryOp::Add),
                Token::Var(0),
                Token::Sign { negative: false },
                Token::Mantissa(7895),
                Token::Exponent(-4),
                Token::Eos
            ]
        );
    }

    #[test]
    fn from_prefix_inverse_and_arity_underflow() {
        let toks = vec![
            Token::Bos,
            Token::Bin(BinaryOp::Add),
            Token::Var(0),
            Token::Var(1),
            Token::Eos,
        ];
        assert_eq!(from_prefix(&toks).unwrap(), add(Expr::var(0), Expr::var(1)));

        let short = vec![
            Token::Bos,
            Token::Bin(BinaryOp::Add),
            Token::Var(0),
            Token::Eos,
        ];
        assert!(matches!(from_prefix(&short), Err(ExprError::Syntax(_))));
    }

    #[test]
    fn from_prefix_numeric_triple() {
        // [BOS, mul, sin, x0, +, 2000, E-3, EOS] -> sin(x0) * 2.0
        let toks = vec![
            Token::Bos,
            Token::Bin(BinaryOp::Mul),
            Token::Un(UnaryOp::Sin),
            Token::Var(0),
            Token::Sign { negative: false },
            Token::Mantissa(2000),
            Token::Exponent(-3),
            Token::Eos,
        ];
        let e = from_prefix(&toks).unwrap();
        assert_eq!(
            e,
            Expr::binary(
                BinaryOp::Mul,
                Expr::unary(UnaryOp::Sin, Expr::var(0)),
                Expr::constant(2.0)
            )
        );
    }

    #[test]
    fn from_prefix_rejects_bad_sequences() {
        use Token::*;
        // Dangling mantissa.
        assert!(from_prefix(&[Bos, Mantissa(2000), Eos]).is_err());
        // Missing EOS.
        assert!(from_prefix(&[Bos, Var(0)]).is_err());
        // Interior PAD.
        assert!(from_prefix(&[Bos, Pad, Var(0), Eos]).is_err());
        // Trailing tokens.
        assert!(from_prefix(&[Bos, Var(0), Var(1), Eos]).is_err());
        // Trailing PAD after EOS is fine.
        assert!(from_prefix(&[Bos, Var(0), Eos, Pad, Pad]).is_ok());
    }

    #[test]
    fn complexity_counts_constants_once() {
        assert_eq!(Expr::var(0).complexity(), 1);
        assert_eq!(add(Expr::var(0), Expr::var(1)).complexity(), 3);
        // sin(x0)*c + x1 -> 6
        let e = add(
            Expr::binary(
                BinaryOp::Mul,
                Expr::unary(UnaryOp::Sin, Expr::var(0)),
                Expr::Hole,
            ),
            Expr::var(1),
        );
        assert_eq!(e.complexity(), 6);
        // Concrete constants count the same as holes.
        let e2 = add(Expr::binary(BinaryOp::Mul, Expr::constant(2.0), Expr::var(0)), Expr::constant(3.0));
        assert_eq!(e2.complexity(), 5);
    }

    #[test]
    fn canonicalize_replaces_all_literals() {
        let e = add(
            Expr::binary(BinaryOp::Mul, Expr::constant(0.7895), Expr::var(0)),
            Expr::constant(3.0),
        );
        let c = e.canonicalize_constants();
        assert_eq!(
            c,
            add(Expr::binary(BinaryOp::Mul, Expr::Hole, Expr::var(0)), Expr::Hole)
        );
        let no_consts = add(Expr::var(0), Expr::var(1));
        assert_eq!(no_consts.canonicalize_constants(), no_consts);
    }

    #[test]
    fn display_and_parse_roundtrip() {
        let e = add(
            Expr::binary(
                BinaryOp::Mul,
                Expr::unary(UnaryOp::Sin, Expr::var(0)),
                Expr::var(1),
            ),
            Expr::constant(0.5),
        );
        let text = e.to_string();
        assert_eq!(text, "((sin(x0) * x1) + 0.5)");
        assert_eq!(parse_text(&text).unwrap(), e);
        assert_eq!(parse_text("c*x0 + c").unwrap().hole_count(), 2);
        assert!(parse_text("foo(x0)").is_err());
    }

    #[test]
    fn substitute_holes_in_prefix_order() {
        let skel = parse_text("c*x0 + c").unwrap();
        let fitted = skel.substitute_holes(&[2.0, 3.0]);
        assert_eq!(fitted.eval(&[10.0]), Ok(23.0));
    }
}
