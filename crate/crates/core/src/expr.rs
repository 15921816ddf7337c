//! Scalar expressions over `x1..xm` with exact first and second derivatives.
//!
//! The accepted grammar is [`GRAMMAR`].
//!
//! `normsq(i, j)` is `x_i² + ... + x_j²` (inclusive, 1-based). Unary minus
//! applied directly to a numeric literal folds into the constant.
//!
//! Evaluation runs over a postfix tape and propagates value, gradient and the
//! packed upper triangle of the Hessian through every node.

use std::cell::RefCell;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    /// 0-based variable index.
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, f64),
    Sqrt(Box<Node>),
    Exp(Box<Node>),
    Log(Box<Node>),
    /// Inclusive 0-based range.
    NormSq(usize, usize),
}

impl Node {
    pub fn count(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var(_) | Node::NormSq(..) => 1,
            Node::Neg(a) | Node::Pow(a, _) | Node::Sqrt(a) | Node::Exp(a) | Node::Log(a) => {
                1 + a.count()
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                1 + a.count() + b.count()
            }
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Node::Const(_) => None,
            Node::Var(i) => Some(*i),
            Node::NormSq(_, j) => Some(*j),
            Node::Neg(a) | Node::Pow(a, _) | Node::Sqrt(a) | Node::Exp(a) | Node::Log(a) => {
                a.max_var()
            }
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
        }
    }

    /// Replaces every `Var(i)` by `f(i)`.
    pub fn map_vars(&self, f: &dyn Fn(usize) -> Node) -> Node {
        let b = |n: &Node| Box::new(n.map_vars(f));
        match self {
            Node::Const(c) => Node::Const(*c),
            Node::Var(i) => f(*i),
            Node::NormSq(i, j) => {
                let mut acc: Option<Node> = None;
                for k in *i..=*j {
                    let sq = Node::Pow(Box::new(f(k)), 2.0);
                    acc = Some(match acc {
                        None => sq,
                        Some(a) => Node::Add(Box::new(a), Box::new(sq)),
                    });
                }
                acc.expect("normsq range is never empty")
            }
            Node::Neg(a) => Node::Neg(b(a)),
            Node::Pow(a, e) => Node::Pow(b(a), *e),
            Node::Sqrt(a) => Node::Sqrt(b(a)),
            Node::Exp(a) => Node::Exp(b(a)),
            Node::Log(a) => Node::Log(b(a)),
            Node::Add(x, y) => Node::Add(b(x), b(y)),
            Node::Sub(x, y) => Node::Sub(b(x), b(y)),
            Node::Mul(x, y) => Node::Mul(b(x), b(y)),
            Node::Div(x, y) => Node::Div(b(x), b(y)),
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if *c < 0.0 || (*c == 0.0 && c.is_sign_negative()) {
                    write!(f, "({c:?})")
                } else {
                    write!(f, "{c:?}")
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::NormSq(i, j) => write!(f, "normsq({}, {})", i + 1, j + 1),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Pow(a, e) => {
                if *e < 0.0 {
                    write!(f, "({a}^({e:?}))")
                } else {
                    write!(f, "({a}^{e:?})")
                }
            }
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Log(a) => write!(f, "log({a})"),
            Node::Add(a, b) => write!(f, "({a} + {b})"),
            Node::Sub(a, b) => write!(f, "({a} - {b})"),
            Node::Mul(a, b) => write!(f, "({a} * {b})"),
            Node::Div(a, b) => write!(f, "({a} / {b})"),
        }
    }
}

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl Jet2 {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }
}

#[derive(Debug, Clone, Copy)]
enum Op {
    Const(f64),
    Var(usize),
    NormSq(usize, usize),
    Neg(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// `c·a`
    Scale(usize, f64),
    /// `a + c`
    Shift(usize, f64),
    Pow(usize, f64),
    Sqrt(usize),
    Exp(usize),
    Log(usize),
}

/// A parsed expression together with its declared dimension.
#[derive(Debug, Clone)]
pub struct Expr {
    root: Node,
    dim: usize,
    tape: Vec<Op>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.root == other.root
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.fmt(f)
    }
}

#[derive(Default)]
struct Scratch {
    val: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

thread_local! {
    static SCRATCH: RefCell<Scratch> = RefCell::new(Scratch::default());
}

impl Expr {
    /// Wraps an already-built tree. Fails if a variable exceeds `dim`.
    pub fn from_node(root: Node, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if let Some(i) = root.max_var() {
            if i >= dim {
                return Err(Error::VariableOutOfRange {
                    index: i + 1,
                    dim,
                    offset: 0,
                });
            }
        }
        let mut tape = Vec::with_capacity(root.count());
        compile(&root, &mut tape);
        Ok(Self { root, dim, tape })
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    /// Value only.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        SCRATCH.with(|s| {
            let s = &mut *s.borrow_mut();
            s.val.clear();
            for op in &self.tape {
                let v = match *op {
                    Op::Const(c) => c,
                    Op::Var(i) => x[i],
                    Op::NormSq(i, j) => x[i..=j].iter().map(|t| t * t).sum(),
                    Op::Neg(a) => -s.val[a],
                    Op::Add(a, b) => s.val[a] + s.val[b],
                    Op::Sub(a, b) => s.val[a] - s.val[b],
                    Op::Mul(a, b) => s.val[a] * s.val[b],
                    Op::Scale(a, c) => c * s.val[a],
                    Op::Shift(a, c) => s.val[a] + c,
                    Op::Div(a, b) => {
                        if s.val[b] == 0.0 {
                            return Err(Error::EvalDomain {
                                op: "division",
                                arg: 0.0,
                            });
                        }
                        s.val[a] / s.val[b]
                    }
                    Op::Pow(a, e) => pow_scalar(s.val[a], e)?.0,
                    Op::Sqrt(a) => sqrt_scalar(s.val[a])?.0,
                    Op::Exp(a) => s.val[a].exp(),
                    Op::Log(a) => log_scalar(s.val[a])?.0,
                };
                if !v.is_finite() {
                    return Err(Error::NonFinite { op: op_name(op) });
                }
                s.val.push(v);
            }
            Ok(*s.val.last().expect("tape is never empty"))
        })
    }

    /// Value, gradient and full row-major Hessian written into caller buffers.
    pub fn eval_into(&self, x: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Result<f64> {
        self.check_len(x)?;
        let m = self.dim;
        let p = m * (m + 1) / 2;
        SCRATCH.with(|s| {
            let s = &mut *s.borrow_mut();
            let n = self.tape.len();
            s.val.resize(n, 0.0);
            s.grad.resize(n * m, 0.0);
            s.hess.resize(n * p, 0.0);
            let Scratch {
                val,
                grad: g,
                hess: h,
            } = s;
            for (k, op) in self.tape.iter().enumerate() {
                let (before_g, rest_g) = g.split_at_mut(k * m);
                let gk = &mut rest_g[..m];
                let (before_h, rest_h) = h.split_at_mut(k * p);
                let hk = &mut rest_h[..p];
                let ga = |a: usize| &before_g[a * m..(a + 1) * m];
                let ha = |a: usize| &before_h[a * p..(a + 1) * p];
                let v = match *op {
                    Op::Const(c) => {
                        gk.fill(0.0);
                        hk.fill(0.0);
                        c
                    }
                    Op::Var(i) => {
                        gk.fill(0.0);
                        gk[i] = 1.0;
                        hk.fill(0.0);
                        x[i]
                    }
                    Op::NormSq(i, j) => {
                        gk.fill(0.0);
                        hk.fill(0.0);
                        let mut v = 0.0;
                        for t in i..=j {
                            v += x[t] * x[t];
                            gk[t] = 2.0 * x[t];
                            hk[packed(t, t, m)] = 2.0;
                        }
                        v
                    }
                    Op::Neg(a) => {
                        for (o, i) in gk.iter_mut().zip(ga(a)) {
                            *o = -i;
                        }
                        for (o, i) in hk.iter_mut().zip(ha(a)) {
                            *o = -i;
                        }
                        -val[a]
                    }
                    Op::Add(a, b) | Op::Sub(a, b) => {
                        let sgn = if matches!(op, Op::Add(..)) { 1.0 } else { -1.0 };
                        for ((o, i), j) in gk.iter_mut().zip(ga(a)).zip(ga(b)) {
                            *o = i + sgn * j;
                        }
                        for ((o, i), j) in hk.iter_mut().zip(ha(a)).zip(ha(b)) {
                            *o = i + sgn * j;
                        }
                        val[a] + sgn * val[b]
                    }
                    Op::Scale(a, c) => {
                        for (o, i) in gk.iter_mut().zip(ga(a)) {
                            *o = c * i;
                        }
                        for (o, i) in hk.iter_mut().zip(ha(a)) {
                            *o = c * i;
                        }
                        c * val[a]
                    }
                    Op::Shift(a, c) => {
                        gk.copy_from_slice(ga(a));
                        hk.copy_from_slice(ha(a));
                        val[a] + c
                    }
                    Op::Mul(a, b) => {
                        let (va, vb) = (val[a], val[b]);
                        let (gfa, gfb) = (ga(a), ga(b));
                        for t in 0..m {
                            gk[t] = va * gfb[t] + vb * gfa[t];
                        }
                        let (hfa, hfb) = (ha(a), ha(b));
                        let mut idx = 0;
                        for i in 0..m {
                            for j in i..m {
                                hk[idx] = va * hfb[idx]
                                    + vb * hfa[idx]
                                    + gfa[i] * gfb[j]
                                    + gfb[i] * gfa[j];
                                idx += 1;
                            }
                        }
                        va * vb
                    }
                    Op::Div(a, b) => {
                        let vb = val[b];
                        if vb == 0.0 {
                            return Err(Error::EvalDomain {
                                op: "division",
                                arg: 0.0,
                            });
                        }
                        let q = val[a] / vb;
                        let (gfa, gfb) = (ga(a), ga(b));
                        for t in 0..m {
                            gk[t] = (gfa[t] - q * gfb[t]) / vb;
                        }
                        let (hfa, hfb) = (ha(a), ha(b));
                        let mut idx = 0;
                        for i in 0..m {
                            for j in i..m {
                                hk[idx] = (hfa[idx]
                                    - q * hfb[idx]
                                    - gfb[i] * gk[j]
                                    - gk[i] * gfb[j])
                                    / vb;
                                idx += 1;
                            }
                        }
                        q
                    }
                    Op::Pow(a, e) => {
                        let (v, d1, d2) = pow_scalar(val[a], e)?;
                        chain(gk, hk, ga(a), ha(a), d1, d2, m);
                        v
                    }
                    Op::Sqrt(a) => {
                        let (v, d1, d2) = sqrt_scalar(val[a])?;
                        chain(gk, hk, ga(a), ha(a), d1, d2, m);
                        v
                    }
                    Op::Exp(a) => {
                        let v = val[a].exp();
                        chain(gk, hk, ga(a), ha(a), v, v, m);
                        v
                    }
                    Op::Log(a) => {
                        let (v, d1, d2) = log_scalar(val[a])?;
                        chain(gk, hk, ga(a), ha(a), d1, d2, m);
                        v
                    }
                };
                if !v.is_finite() {
                    return Err(Error::NonFinite { op: op_name(op) });
                }
                val[k] = v;
            }
            let last = n - 1;
            // Non-finite derivatives propagate to the output; name the op
            // where they first appeared.
            let out_ok = g[last * m..(last + 1) * m].iter().chain(&h[last * p..(last + 1) * p]).all(|t| t.is_finite());
            if !out_ok {
                for (k, op) in self.tape.iter().enumerate() {
                    if g[k * m..(k + 1) * m].iter().chain(&h[k * p..(k + 1) * p]).any(|t| !t.is_finite()) {
                        return Err(Error::NonFinite { op: op_name(op) });
                    }
                }
            }
            grad.copy_from_slice(&g[last * m..(last + 1) * m]);
            let hl = &h[last * p..(last + 1) * p];
            let mut idx = 0;
            for i in 0..m {
                for j in i..m {
                    hess[i * m + j] = hl[idx];
                    hess[j * m + i] = hl[idx];
                    idx += 1;
                }
            }
            Ok(val[last])
        })
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// EBNF accepted by [`parse_expression`].
pub const GRAMMAR: &str = r#"expr    = term , { ( "+" | "-" ) , term } ;
term    = unary , { ( "*" | "/" ) , unary } ;
unary   = "-" , unary | power ;
power   = primary , [ "^" , unary ] ;          (* exponent must be constant *)
primary = number | var | func , "(" , expr , ")"
        | "normsq" , "(" , index , "," , index , ")"
        | "(" , expr , ")" ;
func    = "sqrt" | "exp" | "log" ;
var     = "x" , index ;                         (* 1 <= index <= dim *)
index   = digit , { digit } ;
number  = digits , [ "." , [ digits ] ] , [ exponent ]
        | "." , digits , [ exponent ] ;
exponent = ( "e" | "E" ) , [ "+" | "-" ] , digits ;
digits  = digit , { digit } ;
digit   = "0" | "1" | "2" | "3" | "4" | "5" | "6" | "7" | "8" | "9" ;
"#;

/// Parses `source` as an expression in `dim` variables.
pub fn parse_expression(source: &str, dim: usize) -> Result<Expr> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        dim,
    };
    p.skip_ws();
    if p.pos >= p.src.len() {
        return Err(Error::Syntax {
            offset: 0,
            message: "empty expression".into(),
        });
    }
    let root = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Expr::from_node(root, dim)
}

/// Value, gradient and Hessian of `ast` at `x`.
pub fn eval_jet2(ast: &Expr, x: &[f64]) -> Result<Jet2> {
    let m = ast.dim();
    let mut g = vec![0.0; m];
    let mut h = vec![0.0; m * m];
    let value = ast.eval_into(x, &mut g, &mut h)?;
    Ok(Jet2 {
        value,
        gradient: DVector::from_vec(g),
        hessian: DMatrix::from_row_slice(m, m, &h),
    })
}

fn compile(node: &Node, tape: &mut Vec<Op>) -> usize {
    let op = match node {
        Node::Const(c) => Op::Const(*c),
        Node::Var(i) => Op::Var(*i),
        Node::NormSq(i, j) => Op::NormSq(*i, *j),
        Node::Neg(a) => Op::Neg(compile(a, tape)),
        Node::Pow(a, e) => Op::Pow(compile(a, tape), *e),
        Node::Sqrt(a) => Op::Sqrt(compile(a, tape)),
        Node::Exp(a) => Op::Exp(compile(a, tape)),
        Node::Log(a) => Op::Log(compile(a, tape)),
        // Constant operands need no derivative bookkeeping; the folded ops
        // round exactly like the general ones.
        Node::Add(a, b) => match (&**a, &**b) {
            (Node::Const(c), other) | (other, Node::Const(c)) => Op::Shift(compile(other, tape), *c),
            _ => {
                let (x, y) = (compile(a, tape), compile(b, tape));
                Op::Add(x, y)
            }
        },
        Node::Sub(a, b) => match &**b {
            Node::Const(c) => Op::Shift(compile(a, tape), -*c),
            _ => {
                let (x, y) = (compile(a, tape), compile(b, tape));
                Op::Sub(x, y)
            }
        },
        Node::Mul(a, b) => match (&**a, &**b) {
            (Node::Const(c), other) | (other, Node::Const(c)) => Op::Scale(compile(other, tape), *c),
            _ => {
                let (x, y) = (compile(a, tape), compile(b, tape));
                Op::Mul(x, y)
            }
        },
        Node::Div(a, b) => {
            let (x, y) = (compile(a, tape), compile(b, tape));
            Op::Div(x, y)
        }
    };
    tape.push(op);
    tape.len() - 1
}

#[inline]
fn packed(i: usize, j: usize, m: usize) -> usize {
    // row i of the upper triangle starts after i rows of decreasing length
    i * m - i * (i + 1) / 2 + j
}

#[inline]
fn chain(gk: &mut [f64], hk: &mut [f64], ga: &[f64], ha: &[f64], d1: f64, d2: f64, m: usize) {
    for t in 0..m {
        gk[t] = d1 * ga[t];
    }
    let mut idx = 0;
    for i in 0..m {
        for j in i..m {
            hk[idx] = d1 * ha[idx] + d2 * ga[i] * ga[j];
            idx += 1;
        }
    }
}

fn pow_scalar(u: f64, e: f64) -> Result<(f64, f64, f64)> {
    if e == 0.0 {
        return Ok((1.0, 0.0, 0.0));
    }
    if e.fract() == 0.0 && e.abs() < 1e9 {
        let n = e as i32;
        if u == 0.0 && n < 0 {
            return Err(Error::EvalDomain { op: "pow", arg: u });
        }
        let v = u.powi(n);
        let d1 = e * u.powi(n - 1);
        let d2 = if n == 1 { 0.0 } else { e * (e - 1.0) * u.powi(n - 2) };
        return Ok((v, d1, d2));
    }
    if u <= 0.0 {
        return Err(Error::EvalDomain { op: "pow", arg: u });
    }
    let v = u.powf(e);
    Ok((v, e * v / u, e * (e - 1.0) * v / (u * u)))
}

fn sqrt_scalar(u: f64) -> Result<(f64, f64, f64)> {
    if u <= 0.0 {
        return Err(Error::EvalDomain { op: "sqrt", arg: u });
    }
    let v = u.sqrt();
    Ok((v, 0.5 / v, -0.25 / (u * v)))
}

fn log_scalar(u: f64) -> Result<(f64, f64, f64)> {
    if u <= 0.0 {
        return Err(Error::EvalDomain { op: "log", arg: u });
    }
    Ok((u.ln(), 1.0 / u, -1.0 / (u * u)))
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Const(_) => "constant",
        Op::Var(_) => "variable",
        Op::NormSq(..) => "normsq",
        Op::Neg(_) => "negation",
        Op::Add(..) => "addition",
        Op::Sub(..) => "subtraction",
        Op::Mul(..) => "multiplication",
        Op::Div(..) => "division",
        Op::Scale(..) => "multiplication",
        Op::Shift(..) => "addition",
        Op::Pow(..) => "pow",
        Op::Sqrt(_) => "sqrt",
        Op::Exp(_) => "exp",
        Op::Log(_) => "log",
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
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
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            let inner = self.unary()?;
            return Ok(match inner {
                Node::Const(c) => Node::Const(-c),
                other => Node::Neg(Box::new(other)),
            });
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let at = self.pos;
            let exponent = self.unary()?;
            if exponent.max_var().is_some() {
                return Err(Error::Syntax {
                    offset: at,
                    message: "exponent must be constant".into(),
                });
            }
            let e = Expr::from_node(exponent, 1)?.value(&[0.0]).map_err(|_| Error::Syntax {
                offset: at,
                message: "exponent does not evaluate to a finite constant".into(),
            })?;
            return Ok(Node::Pow(Box::new(base), e));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.err("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.err(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        let mut p = self.pos;
        digits(&mut p);
        if p < s.len() && s[p] == b'.' {
            p += 1;
            digits(&mut p);
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                digits(&mut q);
                p = q;
            }
        }
        let text = std::str::from_utf8(&s[start..p]).expect("ascii slice");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = p;
                Ok(Node::Const(v))
            }
            _ => Err(self.err(&format!("invalid number `{text}`"))),
        }
    }

    fn identifier(&mut self) -> Result<Node> {
        let start = self.pos;
        let mut p = self.pos;
        while p < self.src.len() && (self.src[p].is_ascii_alphanumeric() || self.src[p] == b'_') {
            p += 1;
        }
        let name = std::str::from_utf8(&self.src[start..p]).expect("ascii slice");
        self.pos = p;
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().unwrap_or(usize::MAX);
                return self.var(index, start);
            }
        }
        match name {
            "sqrt" | "exp" | "log" => {
                self.expect(b'(')?;
                let a = Box::new(self.expr()?);
                self.expect(b')')?;
                Ok(match name {
                    "sqrt" => Node::Sqrt(a),
                    "exp" => Node::Exp(a),
                    _ => Node::Log(a),
                })
            }
            "normsq" => {
                self.expect(b'(')?;
                let i = self.index_literal()?;
                self.expect(b',')?;
                let j = self.index_literal()?;
                self.expect(b')')?;
                if j < i {
                    return Err(Error::Syntax {
                        offset: start,
                        message: "normsq range is empty".into(),
                    });
                }
                Ok(Node::NormSq(i, j))
            }
            _ => Err(Error::UnknownIdentifier {
                name: name.to_string(),
                offset: start,
            }),
        }
    }

    fn var(&self, index: usize, offset: usize) -> Result<Node> {
        if index == 0 || index > self.dim {
            return Err(Error::VariableOutOfRange {
                index,
                dim: self.dim,
                offset,
            });
        }
        Ok(Node::Var(index - 1))
    }

    /// 1-based variable index literal inside `normsq(...)`; returns 0-based.
    fn index_literal(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected an index"));
        }
        let index: usize = std::str::from_utf8(&self.src[start..self.pos])
            .expect("ascii")
            .parse()
            .unwrap_or(usize::MAX);
        match self.var(index, start)? {
            Node::Var(i) => Ok(i),
            _ => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_has_seven_nodes() {
        let e = parse_expression("x1^2 + x2^2 - 1", 2).unwrap();
        assert_eq!(e.node_count(), 7);
        let j = eval_jet2(&e, &[0.6, 0.8]).unwrap();
        assert!(j.value.abs() < 1e-15);
        assert!((j.gradient[0] - 1.2).abs() < 1e-15);
        assert!((j.gradient[1] - 1.6).abs() < 1e-15);
        assert_eq!(j.hessian, DMatrix::from_diagonal_element(2, 2, 2.0));
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_expression("x1 +", 1),
            Err(Error::Syntax { offset: 4, .. })
        ));
        assert!(matches!(
            parse_expression("x3", 2),
            Err(Error::VariableOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            parse_expression("x0", 2),
            Err(Error::VariableOutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            parse_expression("foo(x1)", 2),
            Err(Error::UnknownIdentifier { .. })
        ));
        assert!(parse_expression("x1^x2", 2).is_err());
        assert!(parse_expression("", 2).is_err());
        assert!(parse_expression("(x1", 2).is_err());
    }

    #[test]
    fn linear_and_log() {
        let e = parse_expression("x1", 3).unwrap();
        let j = eval_jet2(&e, &[0.3, -2.0, 5.0]).unwrap();
        assert_eq!(j.gradient.as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(j.hessian, DMatrix::zeros(3, 3));

        let e = parse_expression("log(x1)", 1).unwrap();
        let j = eval_jet2(&e, &[1.0]).unwrap();
        assert_eq!((j.value, j.gradient[0], j.hessian[(0, 0)]), (0.0, 1.0, -1.0));
    }

    #[test]
    fn domain_errors() {
        let e = parse_expression("log(x1)", 1).unwrap();
        assert!(matches!(eval_jet2(&e, &[0.0]), Err(Error::EvalDomain { .. })));
        let e = parse_expression("1 / x1", 1).unwrap();
        assert!(matches!(eval_jet2(&e, &[0.0]), Err(Error::EvalDomain { .. })));
        let e = parse_expression("sqrt(x1)", 1).unwrap();
        assert!(e.value(&[-1.0]).is_err());
        let e = parse_expression("exp(x1)", 1).unwrap();
        assert!(matches!(e.value(&[1000.0]), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn normsq_and_powers() {
        let e = parse_expression("normsq(1, 3) - 1", 3).unwrap();
        let j = eval_jet2(&e, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(j.value, 13.0);
        assert_eq!(j.gradient.as_slice(), &[2.0, 4.0, 6.0]);
        let e = parse_expression("x1^-2 + 2^3^2", 1).unwrap();
        assert_eq!(e.value(&[2.0]).unwrap(), 0.25 + 512.0);
        let e = parse_expression("-2^2", 1).unwrap();
        assert_eq!(e.value(&[0.0]).unwrap(), -4.0);
    }

    #[test]
    fn display_round_trips() {
        for src in [
            "x1^2 + x2^2 - 1",
            "-x1 * (x2 - 3.5e-3) / sqrt(x1^2 + 1)",
            "exp(-1 * normsq(1,2)) - log(x2^0.5 + 2)",
            "x1 - -1",
            "x2^-1.5",
        ] {
            let a = parse_expression(src, 2).unwrap();
            let b = parse_expression(&a.to_string(), 2).unwrap();
            assert_eq!(a, b, "{src} -> {a}");
        }
    }

    #[test]
    fn map_vars_expands_normsq() {
        let e = parse_expression("normsq(1,2)", 2).unwrap();
        let swapped = e.root().map_vars(&|i| Node::Var(1 - i));
        let f = Expr::from_node(swapped, 2).unwrap();
        assert_eq!(f.value(&[1.0, 2.0]).unwrap(), 5.0);
    }
}
