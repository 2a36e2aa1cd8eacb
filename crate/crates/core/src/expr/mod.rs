//! Scalar expressions over named variables, evaluated with exact first and
//! second derivatives.
//!
//! Grammar (precedence from loosest to tightest; `^` is right-associative
//! and its exponent may carry a unary minus):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | identifier | identifier '(' sum (',' sum)* ')' | '(' sum ')'
//! number  := digits ('.' digits?)? (('e' | 'E') ('+' | '-')? digits)?
//!          | '.' digits (('e' | 'E') ('+' | '-')? digits)?
//! ```
//!
//! Functions: `exp ln sin cos sinh cosh tan tanh sqrt abs` (one argument)
//! and `pow(base, exponent)`.

mod dual;
mod parse;

use std::fmt;

use thiserror::Error;

pub use dual::DualScalar;
pub use parse::{BinOp, Func, Node};

use crate::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at byte {offset}: expected one of {}", expected.join(", "))]
    Parse { offset: usize, expected: Vec<String> },
    #[error("unknown variable `{name}` at byte {offset}")]
    UnknownVariable { name: String, offset: usize },
    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), found {found}")]
    Arity { name: String, offset: usize, expected: usize, found: usize },
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{expr}` at argument {arg}: {reason}")]
    Domain { expr: String, arg: f64, reason: &'static str },
    #[error("expected {expected} input value(s), got {found}")]
    Arity { expected: usize, found: usize },
}

/// A parsed expression together with its variable list. Immutable.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    vars: Vec<String>,
    root: Node,
}

/// Parses `source` over the variables `vars`.
pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Expr, ExprError> {
    Expr::parse(source, vars)
}

impl Expr {
    pub fn parse<S: AsRef<str>>(source: &str, vars: &[S]) -> Result<Self, ExprError> {
        let vars: Vec<String> = vars.iter().map(|v| v.as_ref().to_string()).collect();
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(ExprError::DuplicateVariable(v.clone()));
            }
        }
        let root = parse::Parser::new(source, &vars)?.parse_all()?;
        Ok(Self { vars, root })
    }

    /// Wraps an already-built tree.
    pub fn from_node(root: Node, vars: Vec<String>) -> Self {
        Self { vars, root }
    }

    pub fn constant(value: f64, vars: &[&str]) -> Self {
        Self { vars: vars.iter().map(|v| v.to_string()).collect(), root: Node::Num(value) }
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// Fully parenthesised source text; `parse(serialize(e))` rebuilds `e`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        self.root.write(&self.vars, &mut s).expect("writing to a String");
        s
    }

    /// Value, gradient and Hessian at `point`.
    pub fn eval_jet2<T: Real>(&self, point: &[T]) -> Result<DualScalar<T>, EvalError> {
        self.check_arity(point.len())?;
        let inputs = DualScalar::seed(point);
        self.eval_dual(&inputs)
    }

    /// Evaluates with dual inputs, composing derivatives through whatever
    /// the inputs already carry.
    pub fn eval_dual<T: Real>(&self, inputs: &[DualScalar<T>]) -> Result<DualScalar<T>, EvalError> {
        self.check_arity(inputs.len())?;
        let nvars = inputs.first().map_or(0, DualScalar::nvars);
        Evaluator { vars: &self.vars, inputs, nvars }.eval(&self.root)
    }

    pub fn eval<T: Real>(&self, point: &[T]) -> Result<T, EvalError> {
        self.check_arity(point.len())?;
        let inputs: Vec<_> = point.iter().map(|&v| DualScalar::constant(v, 0)).collect();
        Ok(Evaluator { vars: &self.vars, inputs: &inputs, nvars: 0 }.eval(&self.root)?.value())
    }

    /// Value and gradient only.
    pub fn eval_grad<T: Real>(&self, point: &[T]) -> Result<(T, Vec<T>), EvalError> {
        let d = self.eval_jet2(point)?;
        Ok((d.value(), d.grad().to_vec()))
    }

    fn check_arity(&self, found: usize) -> Result<(), EvalError> {
        if found != self.vars.len() {
            return Err(EvalError::Arity { expected: self.vars.len(), found });
        }
        Ok(())
    }

    /// If the expression is affine in its variables, returns the
    /// coefficients and the constant term. Decided structurally, with
    /// constant sub-trees folded.
    pub fn as_affine(&self) -> Option<(Vec<f64>, f64)> {
        affine(&self.root, self.vars.len()).map(|a| (a.coeffs, a.constant))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(&self.vars, f)
    }
}

struct Affine {
    coeffs: Vec<f64>,
    constant: f64,
}

impl Affine {
    fn is_constant(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    fn scale(mut self, k: f64) -> Self {
        self.coeffs.iter_mut().for_each(|c| *c *= k);
        self.constant *= k;
        self
    }

    fn combine(mut self, other: Affine, sign: f64) -> Self {
        self.coeffs.iter_mut().zip(other.coeffs).for_each(|(a, b)| *a += sign * b);
        self.constant += sign * other.constant;
        self
    }
}

fn affine(node: &Node, n: usize) -> Option<Affine> {
    let constant = |v: f64| Affine { coeffs: vec![0.0; n], constant: v };
    match node {
        Node::Num(v) => Some(constant(*v)),
        Node::Var(i) => {
            let mut a = constant(0.0);
            a.coeffs[*i] = 1.0;
            Some(a)
        }
        Node::Neg(inner) => affine(inner, n).map(|a| a.scale(-1.0)),
        Node::Binary(op, l, r) => {
            let (l, r) = (affine(l, n)?, affine(r, n)?);
            match op {
                BinOp::Add => Some(l.combine(r, 1.0)),
                BinOp::Sub => Some(l.combine(r, -1.0)),
                BinOp::Mul if l.is_constant() => Some(r.scale(l.constant)),
                BinOp::Mul if r.is_constant() => Some(l.scale(r.constant)),
                BinOp::Div if r.is_constant() && r.constant != 0.0 => Some(l.scale(r.constant.recip())),
                BinOp::Pow if l.is_constant() && r.is_constant() => {
                    let folded = Node::binary(BinOp::Pow, Node::Num(l.constant), Node::Num(r.constant));
                    let v = Evaluator::<f64> { vars: &[], inputs: &[], nvars: 0 }.eval(&folded).ok()?;
                    Some(constant(v.value()))
                }
                _ => None,
            }
        }
        Node::Call(f, args) => {
            // constant sub-trees only, e.g. `exp(1)`
            let mut literals = Vec::with_capacity(args.len());
            for a in args {
                let a = affine(a, n)?;
                if !a.is_constant() {
                    return None;
                }
                literals.push(Node::Num(a.constant));
            }
            let folded = Node::Call(*f, literals);
            let v = Evaluator::<f64> { vars: &[], inputs: &[], nvars: 0 }.eval(&folded).ok()?;
            Some(constant(v.value()))
        }
    }
}

struct Evaluator<'a, T> {
    vars: &'a [String],
    inputs: &'a [DualScalar<T>],
    nvars: usize,
}

impl<T: Real> Evaluator<'_, T> {
    fn domain(&self, node: &Node, arg: T, reason: &'static str) -> EvalError {
        let mut expr = String::new();
        node.write(self.vars, &mut expr).ok();
        EvalError::Domain { expr, arg: arg.as_f64(), reason }
    }

    fn eval(&self, node: &Node) -> Result<DualScalar<T>, EvalError> {
        let out = match node {
            Node::Num(v) => DualScalar::constant(T::lit(*v), self.nvars),
            Node::Var(i) => self.inputs[*i].clone(),
            Node::Neg(inner) => -self.eval(inner)?,
            Node::Binary(op, l, r) => {
                if *op == BinOp::Pow {
                    return self.power(node, l, r);
                }
                let (a, b) = (self.eval(l)?, self.eval(r)?);
                match op {
                    BinOp::Add => &a + &b,
                    BinOp::Sub => &a - &b,
                    BinOp::Mul => &a * &b,
                    BinOp::Div => {
                        if b.value() == T::zero() {
                            return Err(self.domain(node, b.value(), "division by zero"));
                        }
                        &a / &b
                    }
                    BinOp::Pow => unreachable!(),
                }
            }
            Node::Call(Func::Pow, args) => return self.power(node, &args[0], &args[1]),
            Node::Call(f, args) => {
                let a = self.eval(&args[0])?;
                let x = a.value();
                match f {
                    Func::Exp => a.exp(),
                    Func::Ln if x > T::zero() => a.ln(),
                    Func::Ln => return Err(self.domain(node, x, "ln needs a positive argument")),
                    Func::Sqrt if x > T::zero() => a.sqrt(),
                    Func::Sqrt => return Err(self.domain(node, x, "sqrt needs a positive argument")),
                    Func::Abs if x != T::zero() => a.abs(),
                    Func::Abs => return Err(self.domain(node, x, "abs is not differentiable at 0")),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan if x.cos() != T::zero() => a.tan(),
                    Func::Tan => return Err(self.domain(node, x, "tan pole")),
                    Func::Sinh => a.sinh(),
                    Func::Cosh => a.cosh(),
                    Func::Tanh => a.tanh(),
                    Func::Pow => unreachable!(),
                }
            }
        };
        if !out.is_finite() {
            return Err(self.domain(node, out.value(), "non-finite result"));
        }
        Ok(out)
    }

    fn power(&self, node: &Node, base: &Node, exponent: &Node) -> Result<DualScalar<T>, EvalError> {
        let b = self.eval(base)?;
        let out = if let Some(p) = exponent.integer_literal() {
            if p < 0 && b.value() == T::zero() {
                return Err(self.domain(node, b.value(), "negative power of zero"));
            }
            b.powi(p)
        } else {
            if b.value() <= T::zero() {
                return Err(self.domain(node, b.value(), "non-integer power needs a positive base"));
            }
            match exponent {
                Node::Num(p) => b.powf(T::lit(*p)),
                _ => b.pow(&self.eval(exponent)?),
            }
        };
        if !out.is_finite() {
            return Err(self.domain(node, out.value(), "non-finite result"));
        }
        Ok(out)
    }
}
