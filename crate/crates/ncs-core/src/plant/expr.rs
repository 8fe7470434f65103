//! A small arithmetic expression language for user-defined vector fields.
//!
//! Grammar: numbers, the variables `x0..`, `u0..`, named parameters, the
//! constants `pi` and `e`, binary `+ - * / ^`, unary minus, parentheses and
//! the functions `sin cos tan asin acos atan exp ln sqrt abs tanh`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::VectorField;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at offset {at}")]
    BadChar { ch: char, at: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token at offset {at}")]
    UnexpectedToken { at: usize },
    #[error("unknown identifier {0:?}")]
    UnknownIdent(String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("variable {name} out of range (dimension {dim})")]
    OutOfRange { name: String, dim: usize },
}

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Tanh,
}

impl Func {
    fn parse(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "asin" => Func::Asin,
            "acos" => Func::Acos,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => libm::sin(v),
            Func::Cos => libm::cos(v),
            Func::Tan => libm::tan(v),
            Func::Asin => libm::asin(v),
            Func::Acos => libm::acos(v),
            Func::Atan => libm::atan(v),
            Func::Exp => libm::exp(v),
            Func::Ln => libm::log(v),
            Func::Sqrt => libm::sqrt(v),
            Func::Abs => libm::fabs(v),
            Func::Tanh => libm::tanh(v),
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    U(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X(i) => x[*i],
            Expr::U(i) => u[*i],
            Expr::Neg(a) => -a.eval(x, u),
            Expr::Add(a, b) => a.eval(x, u) + b.eval(x, u),
            Expr::Sub(a, b) => a.eval(x, u) - b.eval(x, u),
            Expr::Mul(a, b) => a.eval(x, u) * b.eval(x, u),
            Expr::Div(a, b) => a.eval(x, u) / b.eval(x, u),
            Expr::Pow(a, b) => libm::pow(a.eval(x, u), b.eval(x, u)),
            Expr::Call(f, a) => f.apply(a.eval(x, u)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == '.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == 'e' || bytes[i] == 'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == '+' || bytes[j] == '-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = bytes[start..i].iter().collect();
            let v = text
                .parse::<f64>()
                .map_err(|_| ExprError::UnexpectedToken { at: start })?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                i += 1;
            }
            out.push((start, Tok::Ident(bytes[start..i].iter().collect())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Op(c)));
            i += 1;
        } else {
            return Err(ExprError::BadChar { ch: c, at: i });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    params: &'a BTreeMap<String, f64>,
    dim_x: usize,
    dim_u: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.1)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(usize::MAX, |t| t.0)
    }

    fn expect_op(&mut self, op: char) -> Result<(), ExprError> {
        match self.peek() {
            Some(Tok::Op(c)) if *c == op => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(ExprError::UnexpectedToken { at: self.at() }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let c = *c;
            self.pos += 1;
            let rhs = self.product()?;
            lhs = if c == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let c = *c;
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if c == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            // Right associative; the exponent may carry its own sign.
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let at = self.at();
        let tok = self.peek().cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Op('(') => {
                let e = self.sum()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(Tok::Op('(')) = self.peek() {
                    let f = Func::parse(&name).ok_or(ExprError::UnknownFunction(name))?;
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect_op(')')?;
                    return Ok(Expr::Call(f, Box::new(arg)));
                }
                self.ident(name)
            }
            Tok::Op(_) => Err(ExprError::UnexpectedToken { at }),
        }
    }

    fn ident(&self, name: String) -> Result<Expr, ExprError> {
        if let Some(v) = self.params.get(&name) {
            return Ok(Expr::Num(*v));
        }
        match name.as_str() {
            "pi" => return Ok(Expr::Num(core::f64::consts::PI)),
            "e" => return Ok(Expr::Num(core::f64::consts::E)),
            _ => {}
        }
        let (kind, rest) = name.split_at(1);
        if let (Ok(i), "x" | "u") = (rest.parse::<usize>(), kind) {
            let dim = if kind == "x" { self.dim_x } else { self.dim_u };
            if i >= dim {
                return Err(ExprError::OutOfRange { name, dim });
            }
            return Ok(if kind == "x" { Expr::X(i) } else { Expr::U(i) });
        }
        Err(ExprError::UnknownIdent(name))
    }
}

/// Parses one expression over `dim_x` states and `dim_u` inputs.
pub fn parse(
    src: &str,
    dim_x: usize,
    dim_u: usize,
    params: &BTreeMap<String, f64>,
) -> Result<Expr, ExprError> {
    let toks = lex(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        params,
        dim_x,
        dim_u,
    };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        return Err(ExprError::UnexpectedToken { at: p.at() });
    }
    Ok(e)
}

/// A vector field with one expression per state component.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprField {
    exprs: Vec<Expr>,
    dim_u: usize,
}

impl ExprField {
    pub fn parse<S: AsRef<str>>(
        components: &[S],
        dim_u: usize,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self, ExprError> {
        let n = components.len();
        let exprs = components
            .iter()
            .map(|c| parse(c.as_ref(), n, dim_u, params))
            .collect::<Result<_, _>>()?;
        Ok(ExprField { exprs, dim_u })
    }
}

impl VectorField for ExprField {
    fn dim_x(&self) -> usize {
        self.exprs.len()
    }

    fn dim_u(&self) -> usize {
        self.dim_u
    }

    fn eval(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        for (d, e) in dx.iter_mut().zip(&self.exprs) {
            *d = e.eval(x, u);
        }
    }
}

impl core::fmt::Display for Func {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Tanh => "tanh",
        };
        f.write_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn p(src: &str) -> Expr {
        parse(src, 3, 2, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2 * 3").eval(&[], &[]), 7.0);
        assert_eq!(p("2 ^ 3 ^ 2").eval(&[], &[]), 512.0);
        assert_eq!(p("-2 ^ 2").eval(&[], &[]), -4.0);
        assert_eq!(p("(1 - 2) - 3").eval(&[], &[]), -4.0);
        assert_eq!(p("8 / 2 / 2").eval(&[], &[]), 2.0);
        assert_eq!(p("1.5e1 + 2E-1").eval(&[], &[]), 15.2);
    }

    #[test]
    fn variables_functions_params() {
        let mut params = BTreeMap::new();
        params.insert("k".to_string(), 2.0);
        let e = parse("-k * x0 + u1 + cos(pi)", 1, 2, &params).unwrap();
        assert_eq!(e.eval(&[3.0], &[0.0, 1.0]), -6.0);
        let f = ExprField::parse(&["-x0 + u0"], 1, &BTreeMap::new()).unwrap();
        let mut dx = vec![0.0];
        f.eval(&[1.0], &[0.5], &mut dx);
        assert_eq!(dx, vec![-0.5]);
    }

    #[test]
    fn errors() {
        let none = BTreeMap::new();
        assert!(matches!(parse("x3", 3, 0, &none), Err(ExprError::OutOfRange { .. })));
        assert!(matches!(parse("foo(1)", 1, 0, &none), Err(ExprError::UnknownFunction(_))));
        assert!(matches!(parse("y", 1, 0, &none), Err(ExprError::UnknownIdent(_))));
        assert!(matches!(parse("1 +", 1, 0, &none), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(parse("1 $ 2", 1, 0, &none), Err(ExprError::BadChar { .. })));
        assert!(matches!(parse("(1", 1, 0, &none), Err(ExprError::UnexpectedEnd)));
    }
}
