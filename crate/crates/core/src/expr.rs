//! Analytic expressions over named chart coordinates.
//!
//! Every coefficient function in the crate (metric entries, connection
//! components, solder-form coefficients) is an [`Expr`]. Expressions are
//! immutable DAGs behind `Arc`, so cloning is cheap and evaluation is safe
//! from any number of threads.
//!
//! Variables are stored by index into the owning chart's coordinate list;
//! names are only needed for parsing and printing.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { name: String, offset: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {op} of {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("variable index {index} not covered by a point of dimension {dim}")]
    MissingVariable { index: usize, dim: usize },
    #[error("non-finite result in {op}")]
    NonFinite { op: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => UnaryOp::Sin,
            "cos" => UnaryOp::Cos,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "sqrt" => UnaryOp::Sqrt,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            UnaryOp::Neg => -x,
            UnaryOp::Sin => x.sin(),
            UnaryOp::Cos => x.cos(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => {
                if x <= 0.0 {
                    return Err(EvalError::Domain {
                        op: "log",
                        value: x,
                    });
                }
                x.ln()
            }
            UnaryOp::Sqrt => {
                if x < 0.0 {
                    return Err(EvalError::Domain {
                        op: "sqrt",
                        value: x,
                    });
                }
                x.sqrt()
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite { op: self.name() })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

fn apply_pow(x: f64, n: i32) -> Result<f64, EvalError> {
    if x == 0.0 && n < 0 {
        return Err(EvalError::Domain {
            op: "negative power",
            value: x,
        });
    }
    let v = x.powi(n);
    if !v.is_finite() {
        return Err(EvalError::NonFinite { op: "^" });
    }
    Ok(v)
}

impl BinaryOp {
    fn apply(self, x: f64, y: f64) -> Result<f64, EvalError> {
        let v = match self {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => {
                if y == 0.0 {
                    return Err(EvalError::Domain {
                        op: "division",
                        value: y,
                    });
                }
                x / y
            }
        };
        if !v.is_finite() {
            return Err(EvalError::NonFinite { op: self.symbol() });
        }
        Ok(v)
    }

    fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Unary(UnaryOp, Expr),
    Binary(BinaryOp, Expr, Expr),
    /// Integer power.
    Pow(Expr, i32),
}

/// Immutable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

/// Per-call cache for nodes that are shared inside a DAG. Unshared nodes are
/// visited once anyway, so they are not recorded.
struct Memo<T> {
    map: Option<HashMap<*const Node, T>>,
}

impl<T> Default for Memo<T> {
    fn default() -> Self {
        Memo { map: None }
    }
}

impl<T: Clone> Memo<T> {
    fn get(&self, e: &Expr) -> Option<T> {
        self.map.as_ref()?.get(&Arc::as_ptr(&e.0)).cloned()
    }

    fn put(&mut self, e: &Expr, value: T) {
        if Arc::strong_count(&e.0) > 1 && !matches!(*e.0, Node::Const(_) | Node::Var(_)) {
            self.map
                .get_or_insert_with(HashMap::new)
                .insert(Arc::as_ptr(&e.0), value);
        }
    }
}

/// Structural equality that gives up (answers `false`) after `budget` nodes.
fn same_within(a: &Expr, b: &Expr, budget: &mut usize) -> bool {
    if Arc::ptr_eq(&a.0, &b.0) {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    match (a.node(), b.node()) {
        (Node::Const(x), Node::Const(y)) => x == y,
        (Node::Var(i), Node::Var(j)) => i == j,
        (Node::Unary(o1, x), Node::Unary(o2, y)) => o1 == o2 && same_within(x, y, budget),
        (Node::Binary(o1, x1, y1), Node::Binary(o2, x2, y2)) => {
            o1 == o2 && same_within(x1, x2, budget) && same_within(y1, y2, budget)
        }
        (Node::Pow(x, n), Node::Pow(y, m)) => n == m && same_within(x, y, budget),
        _ => false,
    }
}

fn cheaply_equal(a: &Expr, b: &Expr) -> bool {
    same_within(a, b, &mut 64)
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || *self.0 == *other.0
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_indexed())
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(c: f64) -> Self {
        Expr(Arc::new(Node::Const(c)))
    }

    pub fn zero() -> Self {
        Expr::constant(0.0)
    }

    pub fn one() -> Self {
        Expr::constant(1.0)
    }

    pub fn var(index: usize) -> Self {
        Expr(Arc::new(Node::Var(index)))
    }

    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    // Smart constructors. They fold constants and the identities
    // 0+x, x-0, 0*x, 1*x, x/1, x^0, x^1, --x and nothing else.

    pub fn add(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x == 0.0 => b.clone(),
            (_, Some(y)) if y == 0.0 => a.clone(),
            _ => match (a.node(), b.node()) {
                (_, Node::Unary(UnaryOp::Neg, nb)) if cheaply_equal(nb, a) => Expr::zero(),
                (Node::Unary(UnaryOp::Neg, na), _) if cheaply_equal(na, b) => Expr::zero(),
                (_, Node::Unary(UnaryOp::Neg, nb)) => Expr::sub(a, nb),
                _ => Expr(Arc::new(Node::Binary(BinaryOp::Add, a.clone(), b.clone()))),
            },
        }
    }

    pub fn sub(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            (_, Some(y)) if y == 0.0 => a.clone(),
            _ if cheaply_equal(a, b) => Expr::zero(),
            _ => Expr(Arc::new(Node::Binary(BinaryOp::Sub, a.clone(), b.clone()))),
        }
    }

    pub fn mul(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 0.0 => Expr::zero(),
            (Some(x), _) if x == 1.0 => b.clone(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            (Some(x), _) if x == -1.0 => Expr::neg(b),
            (_, Some(y)) if y == -1.0 => Expr::neg(a),
            _ => Expr(Arc::new(Node::Binary(BinaryOp::Mul, a.clone(), b.clone()))),
        }
    }

    pub fn div(a: &Expr, b: &Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => Expr::constant(x / y),
            (Some(x), _) if x == 0.0 => Expr::zero(),
            (_, Some(y)) if y == 1.0 => a.clone(),
            _ => Expr(Arc::new(Node::Binary(BinaryOp::Div, a.clone(), b.clone()))),
        }
    }

    pub fn neg(a: &Expr) -> Expr {
        match a.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Unary(UnaryOp::Neg, inner) => inner.clone(),
            _ => Expr(Arc::new(Node::Unary(UnaryOp::Neg, a.clone()))),
        }
    }

    pub fn unary(op: UnaryOp, a: &Expr) -> Expr {
        if op == UnaryOp::Neg {
            return Expr::neg(a);
        }
        if let Some(c) = a.as_const() {
            if let Ok(v) = op.apply(c) {
                return Expr::constant(v);
            }
        }
        Expr(Arc::new(Node::Unary(op, a.clone())))
    }

    pub fn sin(a: &Expr) -> Expr {
        Expr::unary(UnaryOp::Sin, a)
    }
    pub fn cos(a: &Expr) -> Expr {
        Expr::unary(UnaryOp::Cos, a)
    }
    pub fn exp(a: &Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, a)
    }
    pub fn log(a: &Expr) -> Expr {
        Expr::unary(UnaryOp::Log, a)
    }
    pub fn sqrt(a: &Expr) -> Expr {
        Expr::unary(UnaryOp::Sqrt, a)
    }

    pub fn powi(a: &Expr, n: i32) -> Expr {
        if n == 0 {
            return Expr::one();
        }
        if n == 1 {
            return a.clone();
        }
        if let Some(c) = a.as_const() {
            let v = c.powi(n);
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
        Expr(Arc::new(Node::Pow(a.clone(), n)))
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::mul(&Expr::constant(c), self)
    }

    /// Sum of an iterator of expressions, folding zeros.
    pub fn sum<'a, I: IntoIterator<Item = &'a Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .fold(Expr::zero(), |acc, t| Expr::add(&acc, t))
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self.node() {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::Unary(_, a) | Node::Pow(a, _) => a.max_var(),
            Node::Binary(_, a, b) => match (a.max_var(), b.max_var()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
        }
    }

    pub fn eval(&self, vals: &[f64]) -> Result<f64, EvalError> {
        self.eval_memo(vals, &mut Memo::default())
    }

    fn eval_memo(&self, vals: &[f64], memo: &mut Memo<f64>) -> Result<f64, EvalError> {
        if let Some(v) = memo.get(self) {
            return Ok(v);
        }
        let out = match self.node() {
            Node::Const(c) => *c,
            Node::Var(i) => vals.get(*i).copied().ok_or(EvalError::MissingVariable {
                index: *i,
                dim: vals.len(),
            })?,
            Node::Unary(op, a) => op.apply(a.eval_memo(vals, memo)?)?,
            Node::Binary(op, a, b) => {
                let x = a.eval_memo(vals, memo)?;
                let y = b.eval_memo(vals, memo)?;
                op.apply(x, y)?
            }
            Node::Pow(a, n) => apply_pow(a.eval_memo(vals, memo)?, *n)?,
        };
        memo.put(self, out);
        Ok(out)
    }

    /// Exact partial derivative with respect to variable `v`.
    pub fn diff(&self, v: usize) -> Expr {
        self.diff_memo(v, &mut Memo::default())
    }

    fn diff_memo(&self, v: usize, memo: &mut Memo<Expr>) -> Expr {
        if let Some(d) = memo.get(self) {
            return d;
        }
        let out = match self.node() {
            Node::Const(_) => Expr::zero(),
            Node::Var(i) => {
                if *i == v {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Unary(op, a) => {
                let da = a.diff_memo(v, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    match op {
                        UnaryOp::Neg => Expr::neg(&da),
                        UnaryOp::Sin => Expr::mul(&Expr::cos(a), &da),
                        UnaryOp::Cos => Expr::mul(&Expr::neg(&Expr::sin(a)), &da),
                        UnaryOp::Exp => Expr::mul(self, &da),
                        UnaryOp::Log => Expr::div(&da, a),
                        UnaryOp::Sqrt => Expr::div(&da, &Expr::mul(&Expr::constant(2.0), self)),
                    }
                }
            }
            Node::Binary(op, a, b) => {
                let da = a.diff_memo(v, memo);
                let db = b.diff_memo(v, memo);
                match op {
                    BinaryOp::Add => Expr::add(&da, &db),
                    BinaryOp::Sub => Expr::sub(&da, &db),
                    BinaryOp::Mul => Expr::add(&Expr::mul(&da, b), &Expr::mul(a, &db)),
                    BinaryOp::Div => {
                        if db.is_zero() {
                            Expr::div(&da, b)
                        } else {
                            let num = Expr::sub(&Expr::mul(&da, b), &Expr::mul(a, &db));
                            Expr::div(&num, &Expr::powi(b, 2))
                        }
                    }
                }
            }
            Node::Pow(a, n) => {
                let da = a.diff_memo(v, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    let outer = Expr::mul(&Expr::constant(*n as f64), &Expr::powi(a, n - 1));
                    Expr::mul(&outer, &da)
                }
            }
        };
        memo.put(self, out.clone());
        out
    }

    /// Replace variable `i` by `subs[i]` throughout.
    pub fn substitute(&self, subs: &[Expr]) -> Expr {
        self.substitute_memo(subs, &mut Memo::default())
    }

    fn substitute_memo(&self, subs: &[Expr], memo: &mut Memo<Expr>) -> Expr {
        if let Some(e) = memo.get(self) {
            return e;
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Var(i) => subs.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Node::Unary(op, a) => Expr::unary(*op, &a.substitute_memo(subs, memo)),
            Node::Binary(op, a, b) => {
                let a = a.substitute_memo(subs, memo);
                let b = b.substitute_memo(subs, memo);
                match op {
                    BinaryOp::Add => Expr::add(&a, &b),
                    BinaryOp::Sub => Expr::sub(&a, &b),
                    BinaryOp::Mul => Expr::mul(&a, &b),
                    BinaryOp::Div => Expr::div(&a, &b),
                }
            }
            Node::Pow(a, n) => Expr::powi(&a.substitute_memo(subs, memo), *n),
        };
        memo.put(self, out.clone());
        out
    }

    /// Print with the given coordinate names. The output re-parses to an
    /// expression that evaluates identically.
    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        Printer {
            expr: self,
            names: Some(names),
        }
    }

    fn display_indexed(&self) -> impl fmt::Display + '_ {
        Printer {
            expr: self,
            names: None,
        }
    }

    pub fn to_text(&self, names: &[String]) -> String {
        self.display(names).to_string()
    }
}

struct Printer<'a> {
    expr: &'a Expr,
    names: Option<&'a [String]>,
}

impl Printer<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e.node() {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "(-{:?})", -c)
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(i) => match self.names.and_then(|n| n.get(*i)) {
                Some(name) => f.write_str(name),
                None => write!(f, "v{i}"),
            },
            Node::Unary(UnaryOp::Neg, a) => {
                f.write_str("(-")?;
                self.write(a, f)?;
                f.write_str(")")
            }
            Node::Unary(op, a) => {
                write!(f, "{}(", op.name())?;
                self.write(a, f)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                f.write_str("(")?;
                self.write(a, f)?;
                write!(f, " {} ", op.symbol())?;
                self.write(b, f)?;
                f.write_str(")")
            }
            Node::Pow(a, n) => {
                f.write_str("(")?;
                self.write(a, f)?;
                write!(f, ")^({n})")
            }
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

/// Parse `text` over the ordered variable list `variables`.
///
/// Grammar:
///
/// ```text
/// expr    := term (("+" | "-") term)*
/// term    := unary (("*" | "/") unary)*
/// unary   := ("-" | "+") unary | power
/// power   := atom ("^" exponent)?
/// exponent:= "-"? integer | "(" "-"? integer ")"
/// atom    := number | ident | func "(" expr ")" | "(" expr ")"
/// func    := "sin" | "cos" | "exp" | "log" | "sqrt"
/// ```
pub fn parse_expr<S: AsRef<str>>(text: &str, variables: &[S]) -> Result<Expr, ParseError> {
    let mut parser = Parser {
        src: text,
        bytes: text.as_bytes(),
        pos: 0,
        variables,
    };
    let e = parser.expr()?;
    parser.skip_ws();
    if parser.pos < parser.bytes.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a, S> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    variables: &'a [S],
}

impl<S: AsRef<str>> Parser<'_, S> {
    fn error(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Expr(Arc::new(Node::Binary(BinaryOp::Add, lhs, rhs)));
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Expr(Arc::new(Node::Binary(BinaryOp::Sub, lhs, rhs)));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                lhs = Expr(Arc::new(Node::Binary(BinaryOp::Mul, lhs, rhs)));
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                lhs = Expr(Arc::new(Node::Binary(BinaryOp::Div, lhs, rhs)));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner.as_const() {
                Some(c) => Expr::constant(-c),
                None => Expr(Arc::new(Node::Unary(UnaryOp::Neg, inner))),
            });
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let paren = self.eat(b'(');
            let negative = self.eat(b'-');
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected integer exponent"));
            }
            let mut n: i32 = self.src[start..self.pos]
                .parse()
                .map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: "exponent out of range".into(),
                })?;
            if negative {
                n = -n;
            }
            if paren && !self.eat(b')') {
                return Err(self.error("expected `)` after exponent"));
            }
            return Ok(Expr(Arc::new(Node::Pow(base, n))));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.error("expected `)`"));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.bytes.len()
                    && (self.bytes[self.pos].is_ascii_alphanumeric()
                        || self.bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = &self.src[start..self.pos];
                if let Some(op) = UnaryOp::from_name(name) {
                    if !self.eat(b'(') {
                        return Err(self.error("expected `(` after function name"));
                    }
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return Err(self.error("expected `)`"));
                    }
                    return Ok(Expr(Arc::new(Node::Unary(op, arg))));
                }
                match self.variables.iter().position(|v| v.as_ref() == name) {
                    Some(i) => Ok(Expr::var(i)),
                    None => Err(ParseError::UnknownIdentifier {
                        name: name.to_string(),
                        offset: start,
                    }),
                }
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let b = self.bytes;
        while self.pos < b.len() && (b[self.pos].is_ascii_digit() || b[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < b.len() && (b[self.pos] == b'e' || b[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < b.len() && (b[self.pos] == b'+' || b[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < b.len() && b[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        self.src[start..self.pos]
            .parse::<f64>()
            .map(Expr::constant)
            .map_err(|_| ParseError::Syntax {
                offset: start,
                message: "malformed number".into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Instr {
    Const(u64),
    Var(usize),
    Unary(UnaryOp, usize),
    Binary(BinaryOp, usize, usize),
    Pow(usize, i32),
}

/// Straight-line program for repeated evaluation of one or more expressions.
/// Structurally identical subexpressions are computed once.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    outputs: Vec<usize>,
}

impl Tape {
    pub fn new(exprs: &[Expr]) -> Self {
        let mut by_ptr: HashMap<*const Node, usize> = HashMap::new();
        let mut by_instr: HashMap<Instr, usize> = HashMap::new();
        let mut instrs = Vec::new();
        let outputs = exprs
            .iter()
            .map(|e| Tape::emit(e, &mut by_ptr, &mut by_instr, &mut instrs))
            .collect();
        Tape { instrs, outputs }
    }

    fn emit(
        e: &Expr,
        by_ptr: &mut HashMap<*const Node, usize>,
        by_instr: &mut HashMap<Instr, usize>,
        instrs: &mut Vec<Instr>,
    ) -> usize {
        if let Some(&k) = by_ptr.get(&Arc::as_ptr(&e.0)) {
            return k;
        }
        let ins = match e.node() {
            Node::Const(c) => Instr::Const(c.to_bits()),
            Node::Var(i) => Instr::Var(*i),
            Node::Unary(op, a) => Instr::Unary(*op, Tape::emit(a, by_ptr, by_instr, instrs)),
            Node::Binary(op, a, b) => {
                let x = Tape::emit(a, by_ptr, by_instr, instrs);
                let y = Tape::emit(b, by_ptr, by_instr, instrs);
                Instr::Binary(*op, x, y)
            }
            Node::Pow(a, n) => Instr::Pow(Tape::emit(a, by_ptr, by_instr, instrs), *n),
        };
        let k = *by_instr.entry(ins).or_insert_with(|| {
            instrs.push(ins);
            instrs.len() - 1
        });
        by_ptr.insert(Arc::as_ptr(&e.0), k);
        k
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    /// Values of all expressions at `vals`.
    pub fn eval(&self, vals: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut reg = Vec::with_capacity(self.instrs.len());
        for ins in &self.instrs {
            let v = match *ins {
                Instr::Const(bits) => f64::from_bits(bits),
                Instr::Var(i) => *vals.get(i).ok_or(EvalError::MissingVariable {
                    index: i,
                    dim: vals.len(),
                })?,
                Instr::Unary(op, a) => op.apply(reg[a])?,
                Instr::Binary(op, a, b) => op.apply(reg[a], reg[b])?,
                Instr::Pow(a, n) => apply_pow(reg[a], n)?,
            };
            reg.push(v);
        }
        Ok(self.outputs.iter().map(|&k| reg[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(text: &str, vars: &[&str]) -> Expr {
        parse_expr(text, vars).unwrap()
    }

    #[test]
    fn parses_top_level_add() {
        let e = p("x*y + sin(x)", &["x", "y"]);
        assert!(matches!(e.node(), Node::Binary(BinaryOp::Add, _, _)));
    }

    #[test]
    fn parses_integer_power() {
        let e = p("x^3", &["x"]);
        assert!(matches!(e.node(), Node::Pow(_, 3)));
        let e = p("x^-2", &["x"]);
        assert!(matches!(e.node(), Node::Pow(_, -2)));
        assert_eq!(p("x^(-2)", &["x"]).eval(&[2.0]).unwrap(), 0.25);
    }

    #[test]
    fn syntax_error_offset() {
        assert_eq!(
            parse_expr("x + ", &["x"]).unwrap_err(),
            ParseError::Syntax {
                offset: 4,
                message: "unexpected end of input".into()
            }
        );
        assert!(matches!(
            parse_expr("x ^ 1.5", &["x"]),
            Err(ParseError::Syntax { .. })
        ));
        assert!(matches!(
            parse_expr("(x", &["x"]),
            Err(ParseError::Syntax { .. })
        ));
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            parse_expr("x + w", &["x"]).unwrap_err(),
            ParseError::UnknownIdentifier {
                name: "w".into(),
                offset: 4
            }
        );
    }

    #[test]
    fn precedence() {
        assert_eq!(p("-x^2", &["x"]).eval(&[3.0]).unwrap(), -9.0);
        assert_eq!(p("2*3+4/2-1", &[] as &[&str]).eval(&[]).unwrap(), 7.0);
        assert_eq!(p("1.5e2 + 2E-1", &[] as &[&str]).eval(&[]).unwrap(), 150.2);
    }

    #[test]
    fn derivative_examples() {
        let e = p("x*y + sin(x)", &["x", "y"]);
        assert_eq!(e.diff(0).eval(&[0.0, 2.0]).unwrap(), 3.0);
        assert!(p("7", &["x"]).diff(0).is_zero());
        assert_eq!(p("x^3", &["x"]).diff(0).eval(&[2.0]).unwrap(), 12.0);
        assert_eq!(p("log(x)", &["x"]).diff(0).eval(&[4.0]).unwrap(), 0.25);
        assert_eq!(p("sqrt(x)", &["x"]).diff(0).eval(&[4.0]).unwrap(), 0.25);
        assert_eq!(p("1/x", &["x"]).diff(0).eval(&[2.0]).unwrap(), -0.25);
    }

    #[test]
    fn constant_folding() {
        let x = Expr::var(0);
        assert_eq!(Expr::mul(&Expr::zero(), &x), Expr::zero());
        assert_eq!(Expr::add(&x, &Expr::zero()), x);
        assert_eq!(Expr::mul(&Expr::one(), &x), x);
        assert_eq!(Expr::div(&Expr::one(), &Expr::zero()).as_const(), None);
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(p("x*y", &["x", "y"]).eval(&[2.0, 3.0]).unwrap(), 6.0);
        assert!(matches!(
            p("sqrt(x)", &["x"]).eval(&[-1.0]),
            Err(EvalError::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(
            p("log(x)", &["x"]).eval(&[-1.0]),
            Err(EvalError::Domain { .. })
        ));
        assert!(matches!(
            p("1/x", &["x"]).eval(&[0.0]),
            Err(EvalError::Domain { .. })
        ));
        assert_eq!(p("exp(0)", &[] as &[&str]).eval(&[]).unwrap(), 1.0);
    }

    #[test]
    fn print_parse_roundtrip() {
        let names: Vec<String> = vec!["x".into(), "y".into()];
        let e = p("-3.25*x^2 - sin(y)/(x+0.1) + exp(-x*y) - 1e-7", &["x", "y"]);
        let back = parse_expr(&e.to_text(&names), &names).unwrap();
        for &(a, b) in &[(0.3, -0.2), (1.7, 2.5), (-0.4, 0.9)] {
            assert_eq!(e.eval(&[a, b]).unwrap(), back.eval(&[a, b]).unwrap());
        }
    }

    #[test]
    fn substitution_composes() {
        let e = p("x*y", &["x", "y"]);
        let t = Expr::var(0);
        let c = e.substitute(&[Expr::cos(&t), Expr::sin(&t)]);
        let v: f64 = 0.7;
        assert!((c.eval(&[v]).unwrap() - v.cos() * v.sin()).abs() < 1e-15);
    }
}
