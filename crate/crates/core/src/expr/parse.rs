use std::fmt;

use super::ExprError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Tan,
    Tanh,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Exp,
        Func::Ln,
        Func::Sin,
        Func::Cos,
        Func::Sinh,
        Func::Cosh,
        Func::Tan,
        Func::Tanh,
        Func::Sqrt,
        Func::Abs,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Tan => "tan",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

/// Expression tree. Variables are indices into the owning [`super::Expr`]'s
/// variable list.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

impl Node {
    /// Unary minus; a literal operand is folded into a negative literal so
    /// that printing and re-parsing is the identity on trees.
    pub fn negated(inner: Node) -> Node {
        match inner {
            Node::Num(v) => Node::Num(-v),
            other => Node::Neg(Box::new(other)),
        }
    }

    pub fn binary(op: BinOp, lhs: Node, rhs: Node) -> Node {
        Node::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// Exponent of `^`/`pow` if it is an integer literal.
    pub(crate) fn integer_literal(&self) -> Option<i32> {
        match *self {
            Node::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => Some(v as i32),
            _ => None,
        }
    }

    pub(crate) fn write(&self, vars: &[String], out: &mut impl fmt::Write) -> fmt::Result {
        match self {
            Node::Num(v) if v.is_sign_negative() => write!(out, "(-{})", -v),
            Node::Num(v) => write!(out, "{v}"),
            Node::Var(i) => out.write_str(&vars[*i]),
            Node::Neg(inner) => {
                out.write_str("(-")?;
                inner.write(vars, out)?;
                out.write_str(")")
            }
            Node::Binary(op, l, r) => {
                out.write_str("(")?;
                l.write(vars, out)?;
                write!(out, " {} ", op.symbol())?;
                r.write(vars, out)?;
                out.write_str(")")
            }
            Node::Call(f, args) => {
                write!(out, "{}(", f.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.write_str(", ")?;
                    }
                    a.write(vars, out)?;
                }
                out.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Returns the next token and its starting byte offset.
    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        self.skip_ws();
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let Some(&c) = bytes.get(start) else {
            return Ok((Tok::End, start));
        };
        let tok = match c {
            b'0'..=b'9' | b'.' => return self.number(start),
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let len = bytes[start..]
                    .iter()
                    .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
                    .count();
                self.pos += len;
                return Ok((Tok::Ident(self.src[start..start + len].to_string()), start));
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            _ => {
                return Err(ExprError::Parse {
                    offset: start,
                    expected: expected(&["number", "identifier", "operator", "'('", "')'", "','"]),
                })
            }
        };
        self.pos += 1;
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Tok, usize), ExprError> {
        let bytes = self.src.as_bytes();
        let mut i = start;
        let digits = |i: &mut usize| {
            let s = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i - s
        };
        let mut mantissa = digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            mantissa += digits(&mut i);
        }
        if mantissa == 0 {
            return Err(ExprError::Parse { offset: start, expected: expected(&["digit"]) });
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if digits(&mut j) == 0 {
                return Err(ExprError::Parse { offset: j, expected: expected(&["exponent digits"]) });
            }
            i = j;
        }
        let text = &self.src[start..i];
        let value: f64 = text
            .parse()
            .map_err(|_| ExprError::Parse { offset: start, expected: expected(&["number"]) })?;
        if !value.is_finite() {
            return Err(ExprError::Parse { offset: start, expected: expected(&["finite number"]) });
        }
        self.pos = i;
        Ok((Tok::Num(value), start))
    }
}

fn expected(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

const OPERAND: [&str; 4] = ["number", "identifier", "'('", "'-'"];

pub(crate) struct Parser<'a> {
    lexer: Lexer<'a>,
    tok: Tok,
    at: usize,
    vars: &'a [String],
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &'a str, vars: &'a [String]) -> Result<Self, ExprError> {
        let mut lexer = Lexer { src, pos: 0 };
        let (tok, at) = lexer.next()?;
        Ok(Self { lexer, tok, at, vars })
    }

    fn bump(&mut self) -> Result<(), ExprError> {
        let (tok, at) = self.lexer.next()?;
        self.tok = tok;
        self.at = at;
        Ok(())
    }

    fn fail<T>(&self, items: &[&str]) -> Result<T, ExprError> {
        Err(ExprError::Parse { offset: self.at, expected: expected(items) })
    }

    pub(crate) fn parse_all(mut self) -> Result<Node, ExprError> {
        let node = self.sum()?;
        if self.tok != Tok::End {
            return self.fail(&["operator", "end of input"]);
        }
        Ok(node)
    }

    // sum := product (('+' | '-') product)*
    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.product()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    // product := unary (('*' | '/') unary)*
    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Node::binary(op, lhs, rhs);
        }
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            return Ok(Node::negated(self.unary()?));
        }
        self.power()
    }

    // power := primary ('^' unary)?
    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.tok == Tok::Op('^') {
            self.bump()?;
            let exponent = self.unary()?;
            return Ok(Node::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match std::mem::replace(&mut self.tok, Tok::End) {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Node::Num(v))
            }
            Tok::LParen => {
                self.bump()?;
                let inner = self.sum()?;
                if self.tok != Tok::RParen {
                    return self.fail(&["operator", "')'"]);
                }
                self.bump()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                let at = self.at;
                self.bump()?;
                if self.tok == Tok::LParen {
                    let func = Func::from_name(&name)
                        .ok_or(ExprError::UnknownFunction { name: name.clone(), offset: at })?;
                    self.bump()?;
                    let mut args = vec![self.sum()?];
                    while self.tok == Tok::Comma {
                        self.bump()?;
                        args.push(self.sum()?);
                    }
                    if self.tok != Tok::RParen {
                        return self.fail(&["operator", "','", "')'"]);
                    }
                    if args.len() != func.arity() {
                        return Err(ExprError::Arity {
                            name,
                            offset: at,
                            expected: func.arity(),
                            found: args.len(),
                        });
                    }
                    self.bump()?;
                    Ok(Node::Call(func, args))
                } else {
                    let index = self
                        .vars
                        .iter()
                        .position(|v| *v == name)
                        .ok_or(ExprError::UnknownVariable { name, offset: at })?;
                    Ok(Node::Var(index))
                }
            }
            other => {
                self.tok = other;
                self.fail(&OPERAND)
            }
        }
    }
}
