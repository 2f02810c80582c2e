//! A small arithmetic expression language for distance formulas, self-maps
//! and comparison functions.
//!
//! Grammar (one grammar everywhere):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := factor (('*' | '/') factor)*
//! factor  := unary ('^' factor)?          right-associative
//! unary   := '-' unary | primary
//! primary := number | var | func '(' args ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus, so `-2^2` is `-4`. The conditional
//! `if(a relop b, then, else)` evaluates exactly one branch and compares
//! with exact float semantics.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at byte offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown variable `{name}` at byte offset {offset} (allowed: {allowed})")]
    UnknownVariable {
        name: String,
        offset: usize,
        allowed: String,
    },
    #[error("unknown function `{name}` at byte offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function `{name}` at byte offset {offset} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        offset: usize,
        expected: usize,
        found: usize,
    },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. }
            | ParseError::UnknownVariable { offset, .. }
            | ParseError::UnknownFunction { offset, .. }
            | ParseError::Arity { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero in `{subexpr}`")]
    DivisionByZero { subexpr: String },
    #[error("{func} of {arg} is undefined in `{subexpr}`")]
    Domain {
        func: &'static str,
        arg: f64,
        subexpr: String,
    },
    #[error("non-finite result in `{subexpr}`")]
    NonFinite { subexpr: String },
    #[error("variable `{name}` is unbound")]
    Unbound { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "!=",
        }
    }

    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Exp,
    Ln,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Abstract syntax tree. Variables are resolved to slots in the allowed
/// variable list at parse time.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var { name: String, slot: usize },
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
    If {
        op: RelOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        then: Box<Expr>,
        otherwise: Box<Expr>,
    },
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `{:?}` is the shortest repr that parses back to the same f64.
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var { name, .. } => f.write_str(name),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::If {
                op,
                lhs,
                rhs,
                then,
                otherwise,
            } => write!(f, "if({lhs} {} {rhs}, {then}, {otherwise})", op.symbol()),
        }
    }
}

impl Expr {
    /// Evaluates with `env[slot]` bound to each variable.
    pub fn eval(&self, env: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var { name, slot } => *env.get(*slot).ok_or_else(|| EvalError::Unbound {
                name: name.clone(),
            })?,
            Expr::Neg(e) => -e.eval(env)?,
            Expr::Bin(op, a, b) => {
                let a = a.eval(env)?;
                let b = b.eval(env)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero {
                                subexpr: self.to_string(),
                            });
                        }
                        a / b
                    }
                    BinOp::Pow => a.powf(b),
                }
            }
            Expr::Call(func, args) => {
                let a = args[0].eval(env)?;
                match func {
                    Func::Sqrt => {
                        if a < 0.0 {
                            return Err(EvalError::Domain {
                                func: "sqrt",
                                arg: a,
                                subexpr: self.to_string(),
                            });
                        }
                        a.sqrt()
                    }
                    Func::Ln => {
                        if a <= 0.0 {
                            return Err(EvalError::Domain {
                                func: "ln",
                                arg: a,
                                subexpr: self.to_string(),
                            });
                        }
                        a.ln()
                    }
                    Func::Abs => a.abs(),
                    Func::Exp => a.exp(),
                    Func::Min => a.min(args[1].eval(env)?),
                    Func::Max => a.max(args[1].eval(env)?),
                }
            }
            Expr::If {
                op,
                lhs,
                rhs,
                then,
                otherwise,
            } => {
                if op.holds(lhs.eval(env)?, rhs.eval(env)?) {
                    then.eval(env)?
                } else {
                    otherwise.eval(env)?
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite {
                subexpr: self.to_string(),
            })
        }
    }
}

/// Named variable bindings.
#[derive(Debug, Clone, Default)]
pub struct EvalContext {
    bindings: Vec<(String, f64)>,
}

impl EvalContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(mut self, name: &str, value: f64) -> Self {
        self.bindings.retain(|(n, _)| n != name);
        self.bindings.push((name.to_string(), value));
        self
    }

    fn get(&self, name: &str) -> Option<f64> {
        self.bindings
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// Evaluates an expression against named bindings.
pub fn evaluate(expr: &Expr, ctx: &EvalContext) -> Result<f64, EvalError> {
    let mut env = Vec::new();
    collect_env(expr, ctx, &mut env)?;
    expr.eval(&env)
}

fn collect_env(expr: &Expr, ctx: &EvalContext, env: &mut Vec<f64>) -> Result<(), EvalError> {
    match expr {
        Expr::Num(_) => {}
        Expr::Var { name, slot } => {
            let v = ctx.get(name).ok_or_else(|| EvalError::Unbound { name: name.clone() })?;
            if env.len() <= *slot {
                env.resize(slot + 1, f64::NAN);
            }
            env[*slot] = v;
        }
        Expr::Neg(e) => collect_env(e, ctx, env)?,
        Expr::Bin(_, a, b) => {
            collect_env(a, ctx, env)?;
            collect_env(b, ctx, env)?;
        }
        Expr::Call(_, args) => {
            for a in args {
                collect_env(a, ctx, env)?;
            }
        }
        Expr::If {
            lhs,
            rhs,
            then,
            otherwise,
            ..
        } => {
            for e in [lhs, rhs, then, otherwise] {
                collect_env(e, ctx, env)?;
            }
        }
    }
    Ok(())
}

/// A parsed expression together with its source text and variable order.
#[derive(Debug, Clone)]
pub struct Formula {
    source: String,
    vars: Vec<String>,
    expr: Expr,
}

impl Formula {
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self, ParseError> {
        let expr = parse(source, vars)?;
        Ok(Formula {
            source: source.to_string(),
            vars: vars.iter().map(|v| v.to_string()).collect(),
            expr,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, env: &[f64]) -> Result<f64, EvalError> {
        self.expr.eval(env)
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.vars == other.vars && self.expr == other.expr
    }
}

// --- lexer ---

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit)) {
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                } else {
                    return Err(ParseError::Syntax {
                        offset: j,
                        message: "malformed exponent".into(),
                    });
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                offset: start,
                message: format!("malformed number `{text}`"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                offset: start,
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                offset: start,
            });
            continue;
        }
        let two = bytes.get(i..i + 2);
        let tok = match two {
            Some(b"<=") => Some("<="),
            Some(b">=") => Some(">="),
            Some(b"==") => Some("=="),
            Some(b"!=") => Some("!="),
            _ => None,
        };
        if let Some(op) = tok {
            out.push(Token {
                tok: Tok::Op(op),
                offset: start,
            });
            i += 2;
            continue;
        }
        let tok = match c {
            b'+' => Tok::Op("+"),
            b'-' => Tok::Op("-"),
            b'*' => Tok::Op("*"),
            b'/' => Tok::Op("/"),
            b'^' => Tok::Op("^"),
            b'<' => Tok::Op("<"),
            b'>' => Tok::Op(">"),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: i,
                    message: format!("unexpected character `{ch}`"),
                });
            }
        };
        out.push(Token { tok, offset: start });
        i += 1;
    }
    out.push(Token {
        tok: Tok::End,
        offset: src.len(),
    });
    Ok(out)
}

// --- parser ---

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
}

/// Parses `source`, accepting only the variables in `allowed_vars`.
pub fn parse(source: &str, allowed_vars: &[&str]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(source)?,
        pos: 0,
        vars: allowed_vars,
    };
    let e = p.expr()?;
    match &p.peek().tok {
        Tok::End => Ok(e),
        _ => Err(p.unexpected("end of input")),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> ParseError {
        let t = self.peek();
        let found = match &t.tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(o) => format!("`{o}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::End => "end of input".into(),
        };
        ParseError::Syntax {
            offset: t.offset,
            message: format!("expected {wanted}, found {found}"),
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.peek().tok == Tok::Op(match op {
            "+" => "+",
            "-" => "-",
            "*" => "*",
            "/" => "/",
            "^" => "^",
            _ => return false,
        }) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat_op("+") {
                BinOp::Add
            } else if self.eat_op("-") {
                BinOp::Sub
            } else {
                break;
            };
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = if self.eat_op("*") {
                BinOp::Mul
            } else if self.eat_op("/") {
                BinOp::Div
            } else {
                break;
            };
            let rhs = self.factor()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        let base = self.unary()?;
        if self.eat_op("^") {
            let exp = self.factor()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat_op("-") {
            // `-a^b` is `-(a^b)`: the operand is a full factor.
            let inner = self.unary()?;
            if self.eat_op("^") {
                let exp = self.factor()?;
                return Ok(Expr::Neg(Box::new(Expr::Bin(
                    BinOp::Pow,
                    Box::new(inner),
                    Box::new(exp),
                ))));
            }
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.peek().clone();
        match t.tok {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                if self.peek().tok == Tok::LParen {
                    self.call(name, t.offset)
                } else if let Some(slot) = self.vars.iter().position(|v| *v == name) {
                    Ok(Expr::Var { name, slot })
                } else if name == "if" || Func::lookup(&name).is_some() {
                    Err(self.unexpected("`(`"))
                } else {
                    Err(ParseError::UnknownVariable {
                        name,
                        offset: t.offset,
                        allowed: self.vars.join(", "),
                    })
                }
            }
            _ => Err(self.unexpected("a number, variable, function call or `(`")),
        }
    }

    fn call(&mut self, name: String, offset: usize) -> Result<Expr, ParseError> {
        self.expect(Tok::LParen, "`(`")?;
        if name == "if" {
            let lhs = self.expr()?;
            let op = match self.peek().tok {
                Tok::Op("<") => RelOp::Lt,
                Tok::Op("<=") => RelOp::Le,
                Tok::Op(">") => RelOp::Gt,
                Tok::Op(">=") => RelOp::Ge,
                Tok::Op("==") => RelOp::Eq,
                Tok::Op("!=") => RelOp::Ne,
                _ => return Err(self.unexpected("a comparison operator")),
            };
            self.bump();
            let rhs = self.expr()?;
            let mut rest = Vec::new();
            while self.peek().tok == Tok::Comma {
                self.bump();
                rest.push(self.expr()?);
            }
            self.expect(Tok::RParen, "`)`")?;
            if rest.len() != 2 {
                return Err(ParseError::Arity {
                    name,
                    offset,
                    expected: 3,
                    found: rest.len() + 1,
                });
            }
            let otherwise = rest.pop().unwrap();
            let then = rest.pop().unwrap();
            return Ok(Expr::If {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                then: Box::new(then),
                otherwise: Box::new(otherwise),
            });
        }
        let func = Func::lookup(&name).ok_or(ParseError::UnknownFunction {
            name: name.clone(),
            offset,
        })?;
        let mut args = Vec::new();
        if self.peek().tok != Tok::RParen {
            args.push(self.expr()?);
            while self.peek().tok == Tok::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.expect(Tok::RParen, "`)`")?;
        if args.len() != func.arity() {
            return Err(ParseError::Arity {
                name,
                offset,
                expected: func.arity(),
                found: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}
