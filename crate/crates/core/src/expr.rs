//! Scalar expression DSL for user-specified vector field components.
//!
//! Grammar (standard precedence, `^` right-associative and binding tighter
//! than unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := '-' factor | power
//! power  := atom ('^' factor)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `t` (time), `x1..xn` (coordinates), `p1..pm` (parameters),
//! and the functions `sin`, `cos`, `exp`, `tanh`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ScalarExpr {
    Const(f64),
    Time,
    /// Coordinate `x{i+1}`.
    Coord(usize),
    /// Parameter `p{i+1}`.
    Param(usize),
    Neg(Box<ScalarExpr>),
    Add(Box<ScalarExpr>, Box<ScalarExpr>),
    Sub(Box<ScalarExpr>, Box<ScalarExpr>),
    Mul(Box<ScalarExpr>, Box<ScalarExpr>),
    Div(Box<ScalarExpr>, Box<ScalarExpr>),
    Pow(Box<ScalarExpr>, Box<ScalarExpr>),
    Sin(Box<ScalarExpr>),
    Cos(Box<ScalarExpr>),
    Exp(Box<ScalarExpr>),
    Tanh(Box<ScalarExpr>),
}

/// Values bound to the free symbols during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub t: f64,
    pub x: &'a [f64],
    pub p: &'a [f64],
}

impl ScalarExpr {
    pub fn parse(src: &str) -> Result<ScalarExpr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.parse_expr()?;
        match p.peek() {
            None => Ok(e),
            Some(tok) => Err(Error::Parse {
                offset: tok.offset,
                message: format!("unexpected `{}` after expression", tok.kind.describe()),
            }),
        }
    }

    pub fn constant(c: f64) -> ScalarExpr {
        ScalarExpr::Const(c)
    }

    pub fn eval(&self, ctx: &EvalContext) -> Result<f64> {
        use ScalarExpr::*;
        Ok(match self {
            Const(c) => *c,
            Time => ctx.t,
            Coord(i) => *ctx.x.get(*i).ok_or(Error::DimensionMismatch {
                expected: *i + 1,
                got: ctx.x.len(),
            })?,
            Param(i) => *ctx.p.get(*i).ok_or_else(|| {
                Error::Eval(format!("parameter p{} unbound ({} given)", i + 1, ctx.p.len()))
            })?,
            Neg(a) => -a.eval(ctx)?,
            Add(a, b) => a.eval(ctx)? + b.eval(ctx)?,
            Sub(a, b) => a.eval(ctx)? - b.eval(ctx)?,
            Mul(a, b) => a.eval(ctx)? * b.eval(ctx)?,
            Div(a, b) => {
                let den = b.eval(ctx)?;
                if den == 0.0 {
                    return Err(Error::Eval("division by zero".into()));
                }
                a.eval(ctx)? / den
            }
            Pow(a, b) => {
                let base = a.eval(ctx)?;
                let exp = b.eval(ctx)?;
                let v = base.powf(exp);
                if !v.is_finite() {
                    return Err(Error::Eval(format!("{base}^{exp} is not finite")));
                }
                v
            }
            Sin(a) => a.eval(ctx)?.sin(),
            Cos(a) => a.eval(ctx)?.cos(),
            Exp(a) => a.eval(ctx)?.exp(),
            Tanh(a) => a.eval(ctx)?.tanh(),
        })
    }

    /// Largest coordinate index used, plus one.
    pub fn coord_arity(&self) -> usize {
        self.fold_arity(&|e| match e {
            ScalarExpr::Coord(i) => i + 1,
            _ => 0,
        })
    }

    /// Largest parameter index used, plus one.
    pub fn param_arity(&self) -> usize {
        self.fold_arity(&|e| match e {
            ScalarExpr::Param(i) => i + 1,
            _ => 0,
        })
    }

    /// Whether the expression mentions `t`.
    pub fn depends_on_time(&self) -> bool {
        self.fold_arity(&|e| usize::from(matches!(e, ScalarExpr::Time))) > 0
    }

    fn fold_arity(&self, f: &dyn Fn(&ScalarExpr) -> usize) -> usize {
        use ScalarExpr::*;
        let below = match self {
            Const(_) | Time | Coord(_) | Param(_) => 0,
            Neg(a) | Sin(a) | Cos(a) | Exp(a) | Tanh(a) => a.fold_arity(f),
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Pow(a, b) => {
                a.fold_arity(f).max(b.fold_arity(f))
            }
        };
        below.max(f(self))
    }

    /// Canonical text form; parses back to the same tree.
    pub fn pretty(&self) -> String {
        let mut s = String::new();
        self.write(&mut s, 0);
        s
    }

    // precedence levels: 1 add/sub, 2 mul/div, 3 unary minus, 4 pow, 5 atom
    fn precedence(&self) -> u8 {
        use ScalarExpr::*;
        match self {
            Add(..) | Sub(..) => 1,
            Mul(..) | Div(..) => 2,
            Neg(..) => 3,
            Pow(..) => 4,
            _ => 5,
        }
    }

    fn write(&self, out: &mut String, min_prec: u8) {
        use ScalarExpr::*;
        let prec = self.precedence();
        let need_parens = prec < min_prec;
        if need_parens {
            out.push('(');
        }
        match self {
            Const(c) => out.push_str(&format!("{c}")),
            Time => out.push('t'),
            Coord(i) => out.push_str(&format!("x{}", i + 1)),
            Param(i) => out.push_str(&format!("p{}", i + 1)),
            Neg(a) => {
                out.push('-');
                a.write(out, 3);
            }
            Add(a, b) => {
                a.write(out, 1);
                out.push_str(" + ");
                b.write(out, 2);
            }
            Sub(a, b) => {
                a.write(out, 1);
                out.push_str(" - ");
                b.write(out, 2);
            }
            Mul(a, b) => {
                a.write(out, 2);
                out.push_str(" * ");
                b.write(out, 3);
            }
            Div(a, b) => {
                a.write(out, 2);
                out.push_str(" / ");
                b.write(out, 3);
            }
            Pow(a, b) => {
                a.write(out, 5);
                out.push('^');
                b.write(out, 3);
            }
            Sin(a) => write_call(out, "sin", a),
            Cos(a) => write_call(out, "cos", a),
            Exp(a) => write_call(out, "exp", a),
            Tanh(a) => write_call(out, "tanh", a),
        }
        if need_parens {
            out.push(')');
        }
    }
}

fn write_call(out: &mut String, name: &str, arg: &ScalarExpr) {
    out.push_str(name);
    out.push('(');
    arg.write(out, 0);
    out.push(')');
}

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
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

impl TokenKind {
    fn describe(&self) -> String {
        match self {
            TokenKind::Num(v) => format!("{v}"),
            TokenKind::Ident(s) => s.clone(),
            TokenKind::Plus => "+".into(),
            TokenKind::Minus => "-".into(),
            TokenKind::Star => "*".into(),
            TokenKind::Slash => "/".into(),
            TokenKind::Caret => "^".into(),
            TokenKind::LParen => "(".into(),
            TokenKind::RParen => ")".into(),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let offset = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => tokens.push(Token { kind: TokenKind::Plus, offset }),
            '-' => tokens.push(Token { kind: TokenKind::Minus, offset }),
            '*' => tokens.push(Token { kind: TokenKind::Star, offset }),
            '/' => tokens.push(Token { kind: TokenKind::Slash, offset }),
            '^' => tokens.push(Token { kind: TokenKind::Caret, offset }),
            '(' => tokens.push(Token { kind: TokenKind::LParen, offset }),
            ')' => tokens.push(Token { kind: TokenKind::RParen, offset }),
            '0'..='9' | '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| Error::Parse {
                    offset,
                    message: format!("invalid number `{text}`"),
                })?;
                tokens.push(Token { kind: TokenKind::Num(v), offset });
                i = j;
                continue;
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(src[i..j].to_string()),
                    offset,
                });
                i = j;
                continue;
            }
            other => {
                return Err(Error::Parse {
                    offset,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
        i += 1;
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_offset(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.offset + t.kind.describe().len())
            .unwrap_or(0)
    }

    fn parse_expr(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.parse_term()?;
        while let Some(tok) = self.peek() {
            let op = tok.kind.clone();
            match op {
                TokenKind::Plus | TokenKind::Minus => {
                    self.bump();
                    let rhs = self.parse_term()?;
                    lhs = if op == TokenKind::Plus {
                        ScalarExpr::Add(Box::new(lhs), Box::new(rhs))
                    } else {
                        ScalarExpr::Sub(Box::new(lhs), Box::new(rhs))
                    };
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn parse_term(&mut self) -> Result<ScalarExpr> {
        let mut lhs = self.parse_factor()?;
        while let Some(tok) = self.peek() {
            let op = tok.kind.clone();
            match op {
                TokenKind::Star | TokenKind::Slash => {
                    self.bump();
                    let rhs = self.parse_factor()?;
                    lhs = if op == TokenKind::Star {
                        ScalarExpr::Mul(Box::new(lhs), Box::new(rhs))
                    } else {
                        ScalarExpr::Div(Box::new(lhs), Box::new(rhs))
                    };
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn parse_factor(&mut self) -> Result<ScalarExpr> {
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Minus {
                self.bump();
                let inner = self.parse_factor()?;
                return Ok(ScalarExpr::Neg(Box::new(inner)));
            }
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<ScalarExpr> {
        let base = self.parse_atom()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Caret {
                self.bump();
                let exp = self.parse_factor()?;
                return Ok(ScalarExpr::Pow(Box::new(base), Box::new(exp)));
            }
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<ScalarExpr> {
        let end = self.end_offset();
        let tok = self.bump().ok_or(Error::Parse {
            offset: end,
            message: "expected expression, found end of input".into(),
        })?;
        match tok.kind {
            TokenKind::Num(v) => Ok(ScalarExpr::Const(v)),
            TokenKind::LParen => {
                let inner = self.parse_expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => self.resolve_ident(&name, tok.offset),
            other => Err(Error::Parse {
                offset: tok.offset,
                message: format!("expected expression, found `{}`", other.describe()),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let end = self.end_offset();
        match self.bump() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => Ok(()),
            Some(tok) => Err(Error::Parse {
                offset: tok.offset,
                message: format!("expected `)`, found `{}`", tok.kind.describe()),
            }),
            None => Err(Error::Parse {
                offset: end,
                message: "expected `)`, found end of input".into(),
            }),
        }
    }

    fn resolve_ident(&mut self, name: &str, offset: usize) -> Result<ScalarExpr> {
        let func: Option<fn(Box<ScalarExpr>) -> ScalarExpr> = match name {
            "sin" => Some(ScalarExpr::Sin),
            "cos" => Some(ScalarExpr::Cos),
            "exp" => Some(ScalarExpr::Exp),
            "tanh" => Some(ScalarExpr::Tanh),
            _ => None,
        };
        if let Some(ctor) = func {
            match self.bump() {
                Some(Token {
                    kind: TokenKind::LParen,
                    ..
                }) => {
                    let arg = self.parse_expr()?;
                    self.expect_rparen()?;
                    return Ok(ctor(Box::new(arg)));
                }
                other => {
                    return Err(Error::Parse {
                        offset: other.map(|t| t.offset).unwrap_or_else(|| self.end_offset()),
                        message: format!("function `{name}` must be followed by `(`"),
                    })
                }
            }
        }
        if name == "t" {
            return Ok(ScalarExpr::Time);
        }
        if let Some(idx) = parse_indexed(name, 'x') {
            return Ok(ScalarExpr::Coord(idx));
        }
        if let Some(idx) = parse_indexed(name, 'p') {
            return Ok(ScalarExpr::Param(idx));
        }
        Err(Error::Parse {
            offset,
            message: format!("unknown identifier `{name}`"),
        })
    }
}

fn parse_indexed(name: &str, prefix: char) -> Option<usize> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() || rest.starts_with('0') || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse::<usize>().ok().map(|i| i - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx<'a>(t: f64, x: &'a [f64]) -> EvalContext<'a> {
        EvalContext { t, x, p: &[] }
    }

    #[test]
    fn parse_product_tree() {
        let e = ScalarExpr::parse("x1*(1-x1)").unwrap();
        assert_eq!(
            e,
            ScalarExpr::Mul(
                Box::new(ScalarExpr::Coord(0)),
                Box::new(ScalarExpr::Sub(
                    Box::new(ScalarExpr::Const(1.0)),
                    Box::new(ScalarExpr::Coord(0))
                ))
            )
        );
    }

    #[test]
    fn parse_sin_plus_pow() {
        let e = ScalarExpr::parse("sin(t)+x2^2").unwrap();
        assert_eq!(
            e,
            ScalarExpr::Add(
                Box::new(ScalarExpr::Sin(Box::new(ScalarExpr::Time))),
                Box::new(ScalarExpr::Pow(
                    Box::new(ScalarExpr::Coord(1)),
                    Box::new(ScalarExpr::Const(2.0))
                ))
            )
        );
    }

    #[test]
    fn malformed_input_offset() {
        match ScalarExpr::parse("x1+*2") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        match ScalarExpr::parse("x1 + foo") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 5);
                assert!(message.contains("foo"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let e = ScalarExpr::parse("1-2-3").unwrap();
        assert_eq!(e.eval(&ctx(0.0, &[])).unwrap(), -4.0);
        let e = ScalarExpr::parse("2^3^2").unwrap();
        assert_eq!(e.eval(&ctx(0.0, &[])).unwrap(), 512.0);
        let e = ScalarExpr::parse("-x1^2").unwrap();
        assert_eq!(e.eval(&ctx(0.0, &[3.0])).unwrap(), -9.0);
        let e = ScalarExpr::parse("2^-1").unwrap();
        assert_eq!(e.eval(&ctx(0.0, &[])).unwrap(), 0.5);
        let e = ScalarExpr::parse("1+2*3").unwrap();
        assert_eq!(e.eval(&ctx(0.0, &[])).unwrap(), 7.0);
    }

    #[test]
    fn division_by_zero_guarded() {
        let e = ScalarExpr::parse("1/x1").unwrap();
        assert!(e.eval(&ctx(0.0, &[0.0])).is_err());
        assert_eq!(e.eval(&ctx(0.0, &[2.0])).unwrap(), 0.5);
    }

    #[test]
    fn pow_guarded() {
        let e = ScalarExpr::parse("(-1)^0.5").unwrap();
        assert!(e.eval(&ctx(0.0, &[])).is_err());
    }

    #[test]
    fn parameters_bound() {
        let e = ScalarExpr::parse("p1*x1*(1-x1)").unwrap();
        let v = e
            .eval(&EvalContext {
                t: 0.0,
                x: &[0.5],
                p: &[0.4],
            })
            .unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        assert!(e.eval(&ctx(0.0, &[0.5])).is_err(), "unbound parameter");
    }

    #[test]
    fn pretty_round_trip_corpus() {
        let corpus = [
            "x1",
            "t",
            "x1 + x2",
            "x1 - x2",
            "x1 * x2",
            "x1 / x2",
            "x1^2",
            "x1^2^3",
            "(x1^2)^3",
            "-x1",
            "-(x1 + x2)",
            "x1 * (1 - x1)",
            "0.3 * x1 * (1 - x1)",
            "sin(t)",
            "cos(x1)",
            "exp(-x1)",
            "tanh(x1 * x2)",
            "sin(t) + x2^2",
            "1 - 2 - 3",
            "1 - (2 - 3)",
            "x1 * x2 * x3",
            "x1 * (x2 * x3)",
            "x1 + x2 * x3",
            "(x1 + x2) * x3",
            "x1 / (x2 + 1)",
            "2^-1",
            "x1^-2",
            "-x1^2",
            "x1 + t * x2",
            "p1 * x1",
            "p1 * x1 * (1 - x1)",
            "p2 + p1 * t",
            "sin(cos(x1))",
            "exp(x1 + x2)",
            "tanh(t) * x1",
            "x1 * (1 - x1) * x2 * (1 - x2)",
            "0.5 * sin(p1) + 0.5 * x1",
            "1 + x1 + x1^2 + x1^3",
            "x2 - x1^2",
            "sin(3.141592653589793 * x1)",
            "x1^2 * x2^2",
            "1 / (1 + exp(-x1))",
            "t^2",
            "x1 - -x2",
            "--x1",
            "2 * x1 - 3 * x2 + 4 * x3",
            "x1 * x2 + x2 * x3 + x3 * x1",
            "exp(-1 / x1)",
            "0.25 - (x1 - 0.5)^2",
            "sin(t * x1) * cos(t * x2)",
        ];
        assert_eq!(corpus.len(), 50);
        for src in corpus {
            let tree = ScalarExpr::parse(src).unwrap();
            let printed = tree.pretty();
            let strip = |s: &str| s.replace(' ', "");
            assert_eq!(strip(&printed), strip(src), "round trip failed for `{src}`");
            assert_eq!(ScalarExpr::parse(&printed).unwrap(), tree);
        }
    }

    #[test]
    fn arity_queries() {
        let e = ScalarExpr::parse("sin(t) + x3 * p2").unwrap();
        assert_eq!(e.coord_arity(), 3);
        assert_eq!(e.param_arity(), 2);
        assert!(e.depends_on_time());
        assert!(!ScalarExpr::parse("x1").unwrap().depends_on_time());
    }

    mod round_trip {
        use super::*;
        use proptest::prelude::*;

        fn arb_expr() -> impl Strategy<Value = ScalarExpr> {
            // dyadic constants print as finite decimals and parse back
            // exactly; negative values arise through Neg
            let leaf = prop_oneof![
                (0u32..256).prop_map(|v| ScalarExpr::Const(v as f64 / 8.0)),
                Just(ScalarExpr::Time),
                (0usize..3).prop_map(ScalarExpr::Coord),
                (0usize..2).prop_map(ScalarExpr::Param),
            ];
            leaf.prop_recursive(5, 48, 3, |inner| {
                prop_oneof![
                    (inner.clone(), inner.clone())
                        .prop_map(|(a, b)| ScalarExpr::Add(a.into(), b.into())),
                    (inner.clone(), inner.clone())
                        .prop_map(|(a, b)| ScalarExpr::Sub(a.into(), b.into())),
                    (inner.clone(), inner.clone())
                        .prop_map(|(a, b)| ScalarExpr::Mul(a.into(), b.into())),
                    (inner.clone(), inner.clone())
                        .prop_map(|(a, b)| ScalarExpr::Div(a.into(), b.into())),
                    (inner.clone(), inner.clone())
                        .prop_map(|(a, b)| ScalarExpr::Pow(a.into(), b.into())),
                    inner.clone().prop_map(|a| ScalarExpr::Neg(a.into())),
                    inner.clone().prop_map(|a| ScalarExpr::Sin(a.into())),
                    inner.clone().prop_map(|a| ScalarExpr::Cos(a.into())),
                    inner.clone().prop_map(|a| ScalarExpr::Exp(a.into())),
                    inner.clone().prop_map(|a| ScalarExpr::Tanh(a.into())),
                ]
            })
        }

        proptest! {
            #[test]
            fn pretty_then_parse_is_identity(e in arb_expr()) {
                let printed = e.pretty();
                let reparsed = ScalarExpr::parse(&printed)
                    .unwrap_or_else(|err| panic!("`{printed}` failed to parse: {err}"));
                prop_assert_eq!(reparsed, e);
            }
        }
    }
}
