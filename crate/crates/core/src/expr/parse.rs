//! S-expression reader and printer for [`Expr`].
//!
//! ```text
//! expr := (const R) | (var N) | (affine (R+) R) | (sum expr+) | (scale R expr)
//!       | (max expr expr+) | (min expr expr+) | (abs expr) | (sq expr)
//!       | (builtin NAME expr)
//! ```

use std::fmt;

use thiserror::Error;

use super::{Builtin, Expr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("{line}:{col}: unknown builtin `{name}`")]
    UnknownBuiltin {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: `{head}` {msg}")]
    Arity {
        line: usize,
        col: usize,
        head: String,
        msg: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Vec<Spanned> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 1;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            ';' => {
                // comment to end of line
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '(' | ')' => {
                chars.next();
                out.push(Spanned {
                    tok: if c == '(' { Tok::Open } else { Tok::Close },
                    line,
                    col,
                });
                col += 1;
            }
            _ => {
                let start = col;
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c);
                    chars.next();
                    col += 1;
                }
                out.push(Spanned {
                    tok: Tok::Atom(s),
                    line,
                    col: start,
                });
            }
        }
    }
    out
}

struct Reader {
    toks: Vec<Spanned>,
    pos: usize,
    end: (usize, usize),
}

impl Reader {
    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|t| (t.line, t.col))
            .unwrap_or(self.end)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn expect_open(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Open) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.syntax("expected `(`"),
        }
    }

    fn expect_close(&mut self, head: &str, at: (usize, usize)) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                Ok(())
            }
            None => self.syntax("unexpected end of input, expected `)`"),
            _ => Err(ParseError::Arity {
                line: at.0,
                col: at.1,
                head: head.to_string(),
                msg: "has too many arguments".into(),
            }),
        }
    }

    fn atom(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Atom(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.syntax("expected an atom"),
        }
    }

    fn real(&mut self) -> Result<f64, ParseError> {
        let at = self.here();
        let s = self.atom()?;
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(ParseError::Syntax {
                line: at.0,
                col: at.1,
                msg: format!("`{s}` is not a finite decimal literal"),
            }),
        }
    }

    fn index(&mut self) -> Result<usize, ParseError> {
        let at = self.here();
        let s = self.atom()?;
        s.parse::<usize>().map_err(|_| ParseError::Syntax {
            line: at.0,
            col: at.1,
            msg: format!("`{s}` is not a variable index"),
        })
    }

    fn exprs_until_close(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut out = Vec::new();
        while matches!(self.peek(), Some(Tok::Open)) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.expect_open()?;
        let at = self.here();
        let head = self.atom()?;
        let arity = |msg: &str| ParseError::Arity {
            line: at.0,
            col: at.1,
            head: head.clone(),
            msg: msg.to_string(),
        };
        let e = match head.as_str() {
            "const" => Expr::Const(self.real()?),
            "var" => Expr::Var(self.index()?),
            "affine" => {
                self.expect_open()?;
                let mut coeffs = Vec::new();
                while matches!(self.peek(), Some(Tok::Atom(_))) {
                    coeffs.push(self.real()?);
                }
                if coeffs.is_empty() {
                    return Err(arity("needs at least one coefficient"));
                }
                match self.peek() {
                    Some(Tok::Close) => self.pos += 1,
                    _ => return self.syntax("expected `)` after affine coefficients"),
                }
                let offset = self.real()?;
                Expr::Affine { coeffs, offset }
            }
            "sum" => {
                let cs = self.exprs_until_close()?;
                if cs.is_empty() {
                    return Err(arity("needs at least one argument"));
                }
                Expr::Sum(cs)
            }
            "scale" => {
                let c = self.real()?;
                Expr::Scale(c, Box::new(self.expr()?))
            }
            "max" | "min" => {
                let cs = self.exprs_until_close()?;
                if cs.len() < 2 {
                    return Err(arity("needs at least two arguments"));
                }
                if head == "max" {
                    Expr::Max(cs)
                } else {
                    Expr::Min(cs)
                }
            }
            "abs" => Expr::Abs(Box::new(self.expr()?)),
            "sq" => Expr::Sq(Box::new(self.expr()?)),
            "builtin" => {
                let name_at = self.here();
                let name = self.atom()?;
                let b = Builtin::lookup(&name).ok_or(ParseError::UnknownBuiltin {
                    line: name_at.0,
                    col: name_at.1,
                    name,
                })?;
                Expr::Builtin(b, Box::new(self.expr()?))
            }
            other => {
                return Err(ParseError::Syntax {
                    line: at.0,
                    col: at.1,
                    msg: format!("unknown form `{other}`"),
                })
            }
        };
        self.expect_close(&head, at)?;
        Ok(e)
    }
}

/// Parses one expression; trailing input is an error.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text);
    let lines: Vec<&str> = text.split('\n').collect();
    let end = (
        lines.len(),
        lines.last().map(|l| l.chars().count() + 1).unwrap_or(1),
    );
    let mut r = Reader { toks, pos: 0, end };
    let e = r.expr()?;
    if r.pos != r.toks.len() {
        return r.syntax("trailing input after expression");
    }
    Ok(e)
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "(const {c})"),
            Expr::Var(i) => write!(f, "(var {i})"),
            Expr::Affine { coeffs, offset } => {
                write!(f, "(affine (")?;
                for (k, c) in coeffs.iter().enumerate() {
                    if k > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{c}")?;
                }
                write!(f, ") {offset})")
            }
            Expr::Sum(cs) => list(f, "sum", cs),
            Expr::Scale(c, e) => write!(f, "(scale {c} {e})"),
            Expr::Max(cs) => list(f, "max", cs),
            Expr::Min(cs) => list(f, "min", cs),
            Expr::Abs(e) => write!(f, "(abs {e})"),
            Expr::Sq(e) => write!(f, "(sq {e})"),
            Expr::Builtin(b, e) => write!(f, "(builtin {} {e})", b.name()),
        }
    }
}

fn list(f: &mut fmt::Formatter<'_>, head: &str, cs: &[Expr]) -> fmt::Result {
    write!(f, "({head}")?;
    for c in cs {
        write!(f, " {c}")?;
    }
    write!(f, ")")
}
