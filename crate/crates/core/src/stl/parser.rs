//! Recursive-descent parser for the formula concrete syntax.
//!
//! ```text
//! formula    := implies
//! implies    := or ( "->" implies )?
//! or         := and ( "|" and )*
//! and        := until ( "&" until )*
//! until      := unary ( "U" interval unary )*
//! unary      := "!" unary | "G" interval unary | "F" interval unary | atom
//! atom       := "true" | "(" formula ")" | expr cmp expr
//! cmp        := ">=" | ">" | "<=" | "<"
//! interval   := "[" int "," int "]"
//! expr       := term ( ("+" | "-") term )*
//! term       := factor ( "*" factor | "%" number )*
//! factor     := "-" factor | power
//! power      := primary ( "^" "2" )*
//! primary    := number | channel | "abs(" expr ")" | "norm2(" expr ("," expr)* ")" | "(" expr ")"
//! ```
//!
//! Comparisons are normalized to `Pred(e)` meaning `e >= 0`:
//! `a >= b` and `a > b` become `a - b`, `a <= b` and `a < b` become `b - a`;
//! a literal zero on the far side is dropped.

use super::formula::{Expr, Formula, Interval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Amp,
    Pipe,
    Arrow,
    Bang,
    Plus,
    Minus,
    Star,
    Percent,
    Caret,
    Ge,
    Gt,
    Le,
    Lt,
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
    /// Source text of numeric literals, for integer checks.
    text: String,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let push = |out: &mut Vec<Token>, tok: Tok| out.push(Token { tok, line: tl, col: tc, text: String::new() });
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            col += i - start;
            push(&mut out, Tok::Ident(s));
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && i + 1 < chars.len() && chars[i + 1].is_ascii_digit()) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s.parse().map_err(|_| Error::Syntax {
                line: tl,
                col: tc,
                msg: format!("malformed number `{s}`"),
            })?;
            col += i - start;
            out.push(Token { tok: Tok::Num(v), line: tl, col: tc, text: s });
            continue;
        }
        let two = if i + 1 < chars.len() { Some(chars[i + 1]) } else { None };
        let (tok, len) = match (c, two) {
            ('-', Some('>')) => (Tok::Arrow, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', _) => (Tok::Gt, 1),
            ('<', _) => (Tok::Lt, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            (',', _) => (Tok::Comma, 1),
            ('&', _) => (Tok::Amp, 1),
            ('|', _) => (Tok::Pipe, 1),
            ('!', _) => (Tok::Bang, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('%', _) => (Tok::Percent, 1),
            ('^', _) => (Tok::Caret, 1),
            _ => {
                return Err(Error::Syntax { line: tl, col: tc, msg: format!("unexpected character `{c}`") });
            }
        };
        push(&mut out, tok);
        i += len;
        col += len;
    }
    out.push(Token { tok: Tok::Eof, line, col, text: String::new() });
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Token>,
    pos: usize,
    schema: &'a [String],
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = self.here();
        Err(Error::Syntax { line: t.line, col: t.col, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            self.err(format!("expected {what}, found {}", describe(self.peek())))
        }
    }

    fn is_keyword_op(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw) && *self.peek_at(1) == Tok::LBracket
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut items = vec![self.and()?];
        while *self.peek() == Tok::Pipe {
            self.bump();
            items.push(self.and()?);
        }
        Ok(Formula::or(items))
    }

    fn and(&mut self) -> Result<Formula> {
        let mut items = vec![self.until()?];
        while *self.peek() == Tok::Amp {
            self.bump();
            items.push(self.until()?);
        }
        Ok(Formula::and(items))
    }

    fn until(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while self.is_keyword_op("U") {
            self.bump();
            let i = self.interval()?;
            let rhs = self.unary()?;
            lhs = Formula::until(i, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        if *self.peek() == Tok::Bang {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        if self.is_keyword_op("G") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::always(i, self.unary()?));
        }
        if self.is_keyword_op("F") {
            self.bump();
            let i = self.interval()?;
            return Ok(Formula::eventually(i, self.unary()?));
        }
        self.atom()
    }

    fn interval(&mut self) -> Result<Interval> {
        let open = self.expect(Tok::LBracket, "`[`")?;
        let lo = self.step_count()?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.step_count()?;
        self.expect(Tok::RBracket, "`]`")?;
        Interval::new(lo, hi).map_err(|_| Error::BadInterval { lo, hi, line: open.line, col: open.col })
    }

    fn step_count(&mut self) -> Result<usize> {
        match self.peek().clone() {
            Tok::Num(_) => {
                let t = self.bump();
                t.text.parse::<usize>().map_err(|_| Error::Syntax {
                    line: t.line,
                    col: t.col,
                    msg: format!("interval bound `{}` is not a non-negative integer", t.text),
                })
            }
            other => self.err(format!("expected interval bound, found {}", describe(&other))),
        }
    }

    fn atom(&mut self) -> Result<Formula> {
        if matches!(self.peek(), Tok::Ident(s) if s == "true") {
            self.bump();
            return Ok(Formula::True);
        }
        if *self.peek() == Tok::LParen {
            let save = self.pos;
            match self.comparison() {
                Ok(f) => return Ok(f),
                Err(first) => {
                    self.pos = save;
                    self.bump();
                    let inner = match self.formula() {
                        Ok(f) => f,
                        Err(e) => return Err(pick_error(first, e)),
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(inner);
                }
            }
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Formula> {
        let lhs = self.expr()?;
        let op = self.peek().clone();
        if !matches!(op, Tok::Ge | Tok::Gt | Tok::Le | Tok::Lt) {
            return self.err(format!("expected comparison operator, found {}", describe(&op)));
        }
        self.bump();
        let rhs = self.expr()?;
        let zero = |e: &Expr| matches!(e, Expr::Const(c) if *c == 0.0);
        let body = match op {
            Tok::Ge | Tok::Gt if zero(&rhs) => lhs,
            Tok::Ge | Tok::Gt => Expr::Sub(Box::new(lhs), Box::new(rhs)),
            _ if zero(&lhs) => rhs,
            _ => Expr::Sub(Box::new(rhs), Box::new(lhs)),
        };
        Ok(Formula::Pred(body))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Tok::Star => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Tok::Percent => {
                    self.bump();
                    let p = match self.peek().clone() {
                        Tok::Num(v) if v > 0.0 => {
                            self.bump();
                            v
                        }
                        other => return self.err(format!("expected positive modulus, found {}", describe(&other))),
                    };
                    lhs = Expr::Mod(Box::new(lhs), p);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = self.peek().clone() {
                self.bump();
                return self.postfix(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        let p = self.primary()?;
        self.postfix(p)
    }

    fn postfix(&mut self, mut e: Expr) -> Result<Expr> {
        while *self.peek() == Tok::Caret {
            self.bump();
            match self.peek() {
                Tok::Num(v) if *v == 2.0 => {
                    self.bump();
                    e = Expr::Square(Box::new(e));
                }
                _ => return self.err("only `^2` is supported"),
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let t = self.bump();
                if *self.peek() == Tok::LParen && (name == "abs" || name == "norm2") {
                    self.bump();
                    let mut args = vec![self.expr()?];
                    while *self.peek() == Tok::Comma {
                        self.bump();
                        args.push(self.expr()?);
                    }
                    self.expect(Tok::RParen, "`)`")?;
                    return if name == "abs" {
                        if args.len() != 1 {
                            return Err(Error::Syntax { line: t.line, col: t.col, msg: "abs takes one argument".into() });
                        }
                        Ok(Expr::Abs(Box::new(args.pop().unwrap())))
                    } else {
                        Ok(Expr::Norm2(args))
                    };
                }
                match self.schema.iter().position(|s| *s == name) {
                    Some(index) => Ok(Expr::Channel { name, index }),
                    None => Err(Error::UnknownChannel { name, line: t.line, col: t.col }),
                }
            }
            other => self.err(format!("expected expression, found {}", describe(&other))),
        }
    }
}

/// Prefers semantic errors, then whichever error got further into the input.
fn pick_error(a: Error, b: Error) -> Error {
    let rank = |e: &Error| match e {
        Error::UnknownChannel { .. } | Error::BadInterval { .. } => (1, 0, 0),
        Error::Syntax { line, col, .. } => (0, *line, *col),
        _ => (0, 0, 0),
    };
    if rank(&a) > rank(&b) {
        a
    } else {
        b
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Num(v) => format!("number {v}"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

/// Parses formula text against a channel schema.
pub fn parse_formula(text: &str, schema: &[String]) -> Result<Formula> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, schema };
    let f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return p.err(format!("unexpected {} after formula", describe(p.peek())));
    }
    Ok(f)
}
