use std::collections::BTreeMap;

use crate::error::Error;
use crate::litmus::{
    FinalPredicate, InitEntry, InitState, InitTarget, LayoutConstraint, Location, Observable,
    Prop, Quantifier, Value, Width,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Meta(String, String),
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const PUNCT2: [&str; 4] = ["/\\", "\\/", "==", "!="];
const PUNCT1: &str = "(){}[];,=*&:~+-|#<>";

pub(crate) fn lex(text: &str, first_line: usize) -> Result<Vec<Token>, Error> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, first_line, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, c: char| {
        *i += 1;
        if c == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, c);
            continue;
        }
        let (tl, tc) = (line, col);
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            }
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            let start = i + 2;
            let mut j = start;
            while j + 1 < chars.len() && !(chars[j] == '*' && chars[j + 1] == ')') {
                j += 1;
            }
            if j + 1 >= chars.len() {
                return Err(Error::syntax(tl, tc, "closing `*)`"));
            }
            let body: String = chars[start..j].iter().collect();
            while i < j + 2 {
                { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            }
            let body = body.trim();
            if let Some(rest) = body.strip_prefix('@') {
                if let Some((k, v)) = rest.split_once(':') {
                    out.push(Token {
                        tok: Tok::Meta(k.trim().to_string(), v.trim().to_string()),
                        line: tl,
                        col: tc,
                    });
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let mut j = i;
            let s: String;
            if c == '0' && matches!(chars.get(i + 1), Some('x') | Some('X')) {
                j += 2;
                while j < chars.len() && chars[j].is_ascii_hexdigit() {
                    j += 1;
                }
                s = chars[i + 2..j].iter().collect();
                let v = u64::from_str_radix(&s, 16)
                    .map_err(|_| Error::syntax(tl, tc, "hexadecimal integer"))?;
                out.push(Token {
                    tok: Tok::Int(v as i64),
                    line: tl,
                    col: tc,
                });
            } else {
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                s = chars[i..j].iter().collect();
                let v: i64 = s.parse().map_err(|_| Error::syntax(tl, tc, "integer"))?;
                out.push(Token {
                    tok: Tok::Int(v),
                    line: tl,
                    col: tc,
                });
            }
            while i < j {
                { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            }
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len()
                && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '@' || chars[j] == '.')
            {
                j += 1;
            }
            let s: String = chars[i..j].iter().collect();
            while i < j {
                { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            }
            out.push(Token {
                tok: Tok::Ident(s),
                line: tl,
                col: tc,
            });
            continue;
        }
        if let Some(p) = PUNCT2
            .iter()
            .find(|p| chars[i..].iter().take(2).copied().eq(p.chars()))
        {
            { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            { let c = chars[i]; advance(&mut i, &mut line, &mut col, c); }
            out.push(Token {
                tok: Tok::Punct(p),
                line: tl,
                col: tc,
            });
            continue;
        }
        if let Some(pos) = PUNCT1.find(c) {
            let p = &PUNCT1[pos..pos + 1];
            advance(&mut i, &mut line, &mut col, c);
            out.push(Token {
                tok: Tok::Punct(p),
                line: tl,
                col: tc,
            });
            continue;
        }
        return Err(Error::syntax(tl, tc, format!("a token, found `{c}`")));
    }
    Ok(out)
}

pub(crate) struct Parser {
    toks: Vec<Token>,
    pos: usize,
    end_line: usize,
}

impl Parser {
    pub fn new(toks: Vec<Token>, end_line: usize) -> Self {
        Parser {
            toks,
            pos: 0,
            end_line,
        }
    }

    pub fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    pub fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        self.pos += 1;
        t
    }

    pub fn err(&self, expected: impl Into<String>) -> Error {
        match self.toks.get(self.pos) {
            Some(t) => Error::syntax(t.line, t.col, expected),
            None => Error::syntax(self.end_line, 1, expected),
        }
    }

    pub fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Tok::Punct(q)) if *q == p)
    }

    pub fn is_ident(&self, s: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(q)) if q == s)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), Error> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.err(format!("`{p}`")))
        }
    }

    pub fn ident(&mut self) -> Result<String, Error> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.err("identifier")),
        }
    }

    pub fn int(&mut self) -> Result<i64, Error> {
        let neg = self.eat_punct("-");
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if neg { v.wrapping_neg() } else { v })
            }
            _ => Err(self.err("integer")),
        }
    }

    pub fn metadata(&mut self, into: &mut BTreeMap<String, String>) {
        while let Some(Tok::Meta(k, v)) = self.peek() {
            into.insert(k.clone(), v.clone());
            self.pos += 1;
        }
    }

    /// `{ entries }` shared by both dialects. `allow_symbols` permits
    /// address-valued initialisers (assembly dialect).
    pub fn init_block(&mut self, allow_symbols: bool) -> Result<InitState, Error> {
        self.expect_punct("{")?;
        let mut init = InitState::default();
        while !self.eat_punct("}") {
            if self.eat_punct(";") {
                continue;
            }
            if self.is_ident("layout") {
                self.pos += 1;
                self.expect_punct("(")?;
                let a = self.ident()?;
                self.expect_punct(",")?;
                let b = self.ident()?;
                self.expect_punct(",")?;
                let off = self.int()?;
                self.expect_punct(")")?;
                init.layout.push(LayoutConstraint {
                    first: Location::new(a),
                    second: Location::new(b),
                    offset: off,
                });
                continue;
            }
            // register initialiser: N:reg=value
            if let Some(Tok::Int(t)) = self.peek() {
                let t = *t as usize;
                self.pos += 1;
                self.expect_punct(":")?;
                let reg = self.ident()?;
                self.expect_punct("=")?;
                let value = self.init_value(allow_symbols)?;
                init.entries.push(InitEntry {
                    target: InitTarget::Reg {
                        thread: t,
                        name: reg.to_ascii_uppercase(),
                    },
                    value,
                    width: Width::W64,
                });
                self.eat_punct(";");
                continue;
            }
            let mut width = Width::default();
            let mut name = self.ident()?;
            if let Some(w) = type_width(&name) {
                width = w;
                // `int* x` style pointer declarations are not supported
                name = self.ident()?;
            }
            self.eat_punct("[");
            self.eat_punct("]");
            let value = if self.eat_punct("=") {
                self.init_value(allow_symbols)?
            } else {
                Value::Int(0)
            };
            let value = match value {
                Value::Int(v) => Value::Int(width.wrap(v)),
                v => {
                    width = Width::W64;
                    v
                }
            };
            init.entries.push(InitEntry {
                target: InitTarget::Loc(Location::new(name)),
                value,
                width,
            });
            if !self.is_punct("}") {
                self.expect_punct(";")?;
            }
        }
        Ok(init)
    }

    fn init_value(&mut self, allow_symbols: bool) -> Result<Value, Error> {
        match self.peek() {
            Some(Tok::Ident(_)) if allow_symbols => {
                self.eat_punct("&");
                Ok(Value::Addr(Location::new(self.ident()?)))
            }
            Some(Tok::Punct("&")) if allow_symbols => {
                self.pos += 1;
                Ok(Value::Addr(Location::new(self.ident()?)))
            }
            _ => Ok(Value::Int(self.int()?)),
        }
    }

    pub fn final_predicate(&mut self) -> Result<FinalPredicate, Error> {
        let quantifier = match self.peek() {
            Some(Tok::Ident(s)) if s == "exists" => Quantifier::Exists,
            Some(Tok::Ident(s)) if s == "forall" => Quantifier::Forall,
            _ => return Err(self.err("`exists` or `forall`")),
        };
        self.pos += 1;
        let prop = self.prop_or()?;
        if matches!(prop, Prop::True) {
            return Err(self.err("a non-empty final condition"));
        }
        self.eat_punct(";");
        if !self.at_end() {
            return Err(self.err("end of input"));
        }
        Ok(FinalPredicate { quantifier, prop })
    }

    fn prop_or(&mut self) -> Result<Prop, Error> {
        let mut ps = vec![self.prop_and()?];
        while self.eat_punct("\\/") {
            ps.push(self.prop_and()?);
        }
        Ok(if ps.len() == 1 { ps.pop().unwrap() } else { Prop::Or(ps) })
    }

    fn prop_and(&mut self) -> Result<Prop, Error> {
        let mut ps = vec![self.prop_unary()?];
        while self.eat_punct("/\\") {
            ps.push(self.prop_unary()?);
        }
        Ok(if ps.len() == 1 { ps.pop().unwrap() } else { Prop::And(ps) })
    }

    fn prop_unary(&mut self) -> Result<Prop, Error> {
        if self.eat_punct("~") {
            return Ok(Prop::Not(Box::new(self.prop_unary()?)));
        }
        if self.eat_punct("(") {
            if self.is_punct(")") {
                return Err(self.err("a proposition"));
            }
            let p = self.prop_or()?;
            self.expect_punct(")")?;
            return Ok(p);
        }
        if self.is_ident("true") {
            self.pos += 1;
            return Ok(Prop::True);
        }
        let obs = self.observable()?;
        self.expect_punct("=")?;
        let value = match self.peek() {
            Some(Tok::Ident(_)) => Value::Addr(Location::new(self.ident()?)),
            _ => Value::Int(self.int()?),
        };
        Ok(Prop::Atom(obs, value))
    }

    fn observable(&mut self) -> Result<Observable, Error> {
        match self.peek().cloned() {
            Some(Tok::Int(t)) => {
                self.pos += 1;
                self.expect_punct(":")?;
                let r = self.ident()?;
                Ok(Observable::reg(t as usize, normalize_reg_name(&r)))
            }
            Some(Tok::Punct("[")) => {
                self.pos += 1;
                let l = self.ident()?;
                self.expect_punct("]")?;
                Ok(Observable::loc(l))
            }
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                if self.is_punct(":") {
                    if let Some(n) = s.strip_prefix('P').and_then(|n| n.parse::<usize>().ok()) {
                        self.pos += 1;
                        let r = self.ident()?;
                        return Ok(Observable::reg(n, normalize_reg_name(&r)));
                    }
                }
                Ok(Observable::loc(s))
            }
            _ => Err(self.err("an observable")),
        }
    }
}

/// Assembly register names are canonicalised to their 64-bit view.
pub(crate) fn normalize_reg_name(r: &str) -> String {
    let up = r.to_ascii_uppercase();
    if let Some(n) = up.strip_prefix('W') {
        if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() {
            return format!("X{n}");
        }
    }
    if up.starts_with('X') && up[1..].chars().all(|c| c.is_ascii_digit()) && up.len() > 1 {
        return up;
    }
    r.to_string()
}

pub(crate) fn type_width(s: &str) -> Option<Width> {
    let s = s.strip_prefix("atomic_").unwrap_or(s);
    Some(match s {
        "int8_t" | "uint8_t" | "char" => Width::W8,
        "int16_t" | "uint16_t" | "short" => Width::W16,
        "int" | "int32_t" | "uint32_t" => Width::W32,
        "int64_t" | "uint64_t" | "long" => Width::W64,
        _ => return None,
    })
}
