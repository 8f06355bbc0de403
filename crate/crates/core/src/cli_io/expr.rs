//! Arithmetic in `x` and `y` for initial conditions: literals, `pi`, `+ - * /`,
//! `cos`, `sin` and parentheses.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Cos(a) => a.eval(x, y).cos(),
            Expr::Sin(a) => a.eval(x, y).sin(),
        }
    }

    /// Whether the expression mentions `x` or `y`.
    pub fn depends_on_position(&self) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::X | Expr::Y => true,
            Expr::Neg(a) | Expr::Cos(a) | Expr::Sin(a) => a.depends_on_position(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_position() || b.depends_on_position()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExprError {
    pub pos: usize,
    pub msg: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at column {}", self.msg, self.pos + 1)
    }
}

impl std::error::Error for ExprError {}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                let mut j = i + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let end = chars.get(i).map_or(src.len(), |c| c.0);
            let text = &src[pos..end];
            let v: f64 = text.parse().map_err(|_| ExprError {
                pos: chars[start].0,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push((pos, Tok::Num(v)));
        } else if ch.is_ascii_alphabetic() {
            while i < chars.len() && chars[i].1.is_ascii_alphanumeric() {
                i += 1;
            }
            let end = chars.get(i).map_or(src.len(), |c| c.0);
            out.push((pos, Tok::Ident(src[pos..end].to_ascii_lowercase())));
        } else {
            let op = match ch {
                '·' | '×' => '*',
                '−' => '-',
                c @ ('+' | '-' | '*' | '/' | '(' | ')') => c,
                c => {
                    return Err(ExprError {
                        pos,
                        msg: format!("unexpected character `{c}`"),
                    })
                }
            };
            out.push((pos, Tok::Op(op)));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |t| t.0)
    }

    fn err(&self, msg: impl Into<String>) -> ExprError {
        ExprError {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Tok::Op(op)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.atom()
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.at += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match name.as_str() {
                    "x" => Ok(Expr::X),
                    "y" => Ok(Expr::Y),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "cos" | "sin" => {
                        if !self.eat('(') {
                            return Err(self.err(format!("expected `(` after `{name}`")));
                        }
                        let arg = Box::new(self.expr()?);
                        if !self.eat(')') {
                            return Err(self.err("expected `)`"));
                        }
                        Ok(if name == "cos" { Expr::Cos(arg) } else { Expr::Sin(arg) })
                    }
                    other => Err(ExprError {
                        pos: self.toks[self.at - 1].0,
                        msg: format!("unknown name `{other}`"),
                    }),
                }
            }
            Some(Tok::Op('(')) => {
                self.at += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected `)`"));
                }
                Ok(e)
            }
            Some(Tok::Op(c)) => Err(self.err(format!("unexpected `{c}`"))),
            None => Err(self.err("unexpected end of expression")),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        at: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

/// Value of an expression that must not mention `x` or `y`.
pub fn eval_constant(src: &str) -> Result<f64, ExprError> {
    let e = parse_expr(src)?;
    if e.depends_on_position() {
        return Err(ExprError {
            pos: 0,
            msg: "expected a constant, found `x` or `y`".into(),
        });
    }
    Ok(e.eval(0.0, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn precedence_and_functions() {
        let e = parse_expr("0.05*cos(x)*cos(y) + 0.3").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 0.05 + 0.3);
        assert_eq!(eval_constant("1 - 2 * 3").unwrap(), -5.0);
        assert_eq!(eval_constant("-(1 + 1) / 4").unwrap(), -0.5);
        assert_eq!(eval_constant("2*pi").unwrap(), 2.0 * PI);
        assert_eq!(eval_constant("1.5e-3").unwrap(), 1.5e-3);
        assert_eq!(eval_constant("2E+2").unwrap(), 200.0);
        assert_eq!(eval_constant("sin(0)").unwrap(), 0.0);
        assert_eq!(parse_expr("x - y").unwrap().eval(3.0, 1.0), 2.0);
        assert_eq!(parse_expr("8 / 2 / 2").unwrap().eval(0.0, 0.0), 2.0);
        assert_eq!(parse_expr("2·x").unwrap().eval(3.0, 0.0), 6.0);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "banana", "1 +", "cos x", "(1", "1)", "2 $ 3", "exp(1)", "1..2"] {
            assert!(parse_expr(bad).is_err(), "{bad}");
        }
        assert!(eval_constant("x + 1").is_err());
        assert_eq!(parse_expr("1 + @").unwrap_err().pos, 4);
    }
}
