//! Parser for reference-manual-style instruction pseudocode.
//!
//! The grammar is indentation-insensitive: statement lists are
//! separated by newlines or `;` and delimited by `then`/`else` (and
//! `when`/`otherwise` inside `case`). An operation source is a header
//! line (section tag plus mnemonic), a prologue of
//! `param <name> : <kind>` lines, and a statement list. Several
//! operations in one file are separated by `===` lines. The full
//! grammar ships in `docs/pseudocode-grammar.ebnf`.
//!
//! Calls to the manual's flag helpers are normalized while parsing:
//! `CarryFrom(a + b + c)` becomes the three-argument primitive
//! `CarryFrom_add3`, and likewise for the other carry/borrow/overflow
//! forms. The pretty printer in [`crate::ast`] prints them back in the
//! surface spelling, so print-then-parse is the identity.

use std::collections::HashSet;

use crate::ast::{BinOp, Exp, OperationAst, OperationIdent, Param, ParamKind, Stm};
use crate::builtins::Builtin;
use crate::state::{FlagId, MemSize, ProcessorMode};

/// Syntax or binding error with 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

fn err<T>(line: u32, col: u32, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { line, col, msg: msg.into() })
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u32),
    If,
    Then,
    Else,
    LogAnd,
    LogOr,
    Not,
    BitAnd,
    BitOr,
    BitEor,
    For,
    To,
    Do,
    Case,
    Of,
    When,
    Otherwise,
    Unpredictable,
    CpsrKw,
    SpsrKw,
    MemoryKw,
    FlagKw,
    PcKw,
    LrKw,
    Assign,
    EqEq,
    NeOp,
    Plus,
    Minus,
    Shl,
    Shr,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Semicolon,
    Newline,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(v) => format!("integer {v}"),
            Tok::Newline => "end of line".into(),
            Tok::Eof => "end of input".into(),
            other => format!("`{}`", token_text(other)),
        }
    }
}

fn token_text(t: &Tok) -> &'static str {
    match t {
        Tok::If => "if",
        Tok::Then => "then",
        Tok::Else => "else",
        Tok::LogAnd => "and",
        Tok::LogOr => "or",
        Tok::Not => "NOT",
        Tok::BitAnd => "AND",
        Tok::BitOr => "OR",
        Tok::BitEor => "EOR",
        Tok::For => "for",
        Tok::To => "to",
        Tok::Do => "do",
        Tok::Case => "case",
        Tok::Of => "of",
        Tok::When => "when",
        Tok::Otherwise => "otherwise",
        Tok::Unpredictable => "UNPREDICTABLE",
        Tok::CpsrKw => "CPSR",
        Tok::SpsrKw => "SPSR",
        Tok::MemoryKw => "Memory",
        Tok::FlagKw => "Flag",
        Tok::PcKw => "PC",
        Tok::LrKw => "LR",
        Tok::Assign => "=",
        Tok::EqEq => "==",
        Tok::NeOp => "!=",
        Tok::Plus => "+",
        Tok::Minus => "-",
        Tok::Shl => "<<",
        Tok::Shr => ">>",
        Tok::LParen => "(",
        Tok::RParen => ")",
        Tok::LBracket => "[",
        Tok::RBracket => "]",
        Tok::Comma => ",",
        Tok::Semicolon => ";",
        _ => "",
    }
}

struct Spanned {
    tok: Tok,
    line: u32,
    col: u32,
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "and" => Tok::LogAnd,
        "or" => Tok::LogOr,
        "NOT" => Tok::Not,
        "AND" => Tok::BitAnd,
        "OR" => Tok::BitOr,
        "EOR" => Tok::BitEor,
        "for" => Tok::For,
        "to" => Tok::To,
        "do" => Tok::Do,
        "case" => Tok::Case,
        "of" => Tok::Of,
        "when" => Tok::When,
        "otherwise" => Tok::Otherwise,
        "UNPREDICTABLE" => Tok::Unpredictable,
        "CPSR" => Tok::CpsrKw,
        "SPSR" => Tok::SpsrKw,
        "Memory" => Tok::MemoryKw,
        "Flag" => Tok::FlagKw,
        "PC" => Tok::PcKw,
        "LR" => Tok::LrKw,
        _ => return None,
    })
}

fn lex(text: &str, first_line: u32) -> Result<Vec<Spanned>, ParseError> {
    let mut toks = Vec::new();
    let mut line = first_line;
    let mut col = 1u32;
    let mut chars = text.chars().peekable();

    macro_rules! push {
        ($tok:expr, $col:expr) => {
            toks.push(Spanned { tok: $tok, line, col: $col })
        };
    }

    while let Some(&ch) = chars.peek() {
        let start_col = col;
        match ch {
            '\n' => {
                chars.next();
                push!(Tok::Newline, start_col);
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => {
                chars.next();
                col += 1;
            }
            '0'..='9' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let parsed = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
                    u64::from_str_radix(&hex.replace('_', ""), 16).ok()
                } else if let Some(bin) = s.strip_prefix("0b").or_else(|| s.strip_prefix("0B")) {
                    u64::from_str_radix(&bin.replace('_', ""), 2).ok()
                } else {
                    s.replace('_', "").parse::<u64>().ok()
                };
                match parsed {
                    Some(v) if v <= u32::MAX as u64 => push!(Tok::Int(v as u32), start_col),
                    _ => return err(line, start_col, format!("bad integer literal `{s}`")),
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_alphanumeric() || c == '_' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                match keyword(&s) {
                    Some(t) => push!(t, start_col),
                    None => push!(Tok::Ident(s), start_col),
                }
            }
            _ => {
                chars.next();
                col += 1;
                let two = |chars: &mut std::iter::Peekable<std::str::Chars>, next: char| {
                    if chars.peek() == Some(&next) {
                        chars.next();
                        true
                    } else {
                        false
                    }
                };
                let tok = match ch {
                    '=' => {
                        if two(&mut chars, '=') {
                            col += 1;
                            Tok::EqEq
                        } else {
                            Tok::Assign
                        }
                    }
                    '!' => {
                        if two(&mut chars, '=') {
                            col += 1;
                            Tok::NeOp
                        } else {
                            return err(line, start_col, "expected `!=`");
                        }
                    }
                    '<' => {
                        if two(&mut chars, '<') {
                            col += 1;
                            Tok::Shl
                        } else {
                            return err(line, start_col, "expected `<<`");
                        }
                    }
                    '>' => {
                        if two(&mut chars, '>') {
                            col += 1;
                            Tok::Shr
                        } else {
                            return err(line, start_col, "expected `>>`");
                        }
                    }
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    ';' => Tok::Semicolon,
                    ':' => Tok::Comma, // `:` only occurs in bit ranges; handled there
                    other => {
                        return err(line, start_col, format!("unexpected character `{other}`"))
                    }
                };
                push!(tok, start_col);
            }
        }
    }
    toks.push(Spanned { tok: Tok::Eof, line, col });
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    /// Names visible to the body: parameters plus locals introduced so
    /// far. Empty set plus `lenient` for the fragment entry points.
    bound: HashSet<String>,
    reg_params: HashSet<String>,
    lenient: bool,
}

impl Parser {
    fn new(toks: Vec<Spanned>, lenient: bool) -> Parser {
        Parser { toks, pos: 0, bound: HashSet::new(), reg_params: HashSet::new(), lenient }
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (u32, u32) {
        let s = &self.toks[self.pos];
        (s.line, s.col)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            let (line, col) = self.here();
            err(line, col, format!("expected {}, found {}", want.describe(), self.peek().describe()))
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semicolon) {
            self.bump();
        }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        err(line, col, msg)
    }

    // -- expressions --------------------------------------------------------

    fn parse_exp(&mut self) -> Result<Exp, ParseError> {
        if *self.peek() == Tok::If {
            self.bump();
            let cond = self.parse_exp()?;
            self.expect(&Tok::Then)?;
            let then = self.parse_exp()?;
            self.expect(&Tok::Else)?;
            let els = self.parse_exp()?;
            return Ok(Exp::IfExp(Box::new(cond), Box::new(then), Box::new(els)));
        }
        self.parse_binary(1)
    }

    fn parse_binary(&mut self, min_prec: u8) -> Result<Exp, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::Shl => BinOp::Shl,
                Tok::Shr => BinOp::Shr,
                Tok::EqEq => BinOp::Eq,
                Tok::NeOp => BinOp::Ne,
                Tok::BitAnd => BinOp::BitAnd,
                Tok::BitEor => BinOp::BitEor,
                Tok::BitOr => BinOp::BitOr,
                Tok::LogAnd => BinOp::LogAnd,
                Tok::LogOr => BinOp::LogOr,
                _ => break,
            };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.parse_binary(prec + 1)?;
            lhs = Exp::binop(lhs, op, rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> Result<Exp, ParseError> {
        if *self.peek() == Tok::Not {
            self.bump();
            let inner = self.parse_unary()?;
            return Ok(Exp::Fun("NOT".into(), vec![inner]));
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> Result<Exp, ParseError> {
        let mut e = self.parse_primary()?;
        while *self.peek() == Tok::LBracket {
            self.bump();
            let hi = self.parse_int("bit index")?;
            let lo = if *self.peek() == Tok::Comma {
                // `:` and `,` lex identically; ranges read as [hi:lo]
                self.bump();
                self.parse_int("bit index")?
            } else {
                hi
            };
            self.expect(&Tok::RBracket)?;
            if lo > hi || hi > 31 {
                return self.fail(format!("bad bit range [{hi}:{lo}]"));
            }
            e = Exp::BitRange(Box::new(e), hi as u8, lo as u8);
        }
        Ok(e)
    }

    fn parse_int(&mut self, what: &str) -> Result<u32, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            other => self.fail(format!("expected {what}, found {}", other.describe())),
        }
    }

    fn parse_primary(&mut self) -> Result<Exp, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Exp::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.parse_exp()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::CpsrKw => {
                self.bump();
                Ok(Exp::Cpsr)
            }
            Tok::SpsrKw => {
                self.bump();
                Ok(Exp::Spsr(None))
            }
            Tok::PcKw => {
                self.bump();
                Ok(Exp::Reg(Box::new(Exp::Const(15)), None))
            }
            Tok::LrKw => {
                self.bump();
                Ok(Exp::Reg(Box::new(Exp::Const(14)), None))
            }
            Tok::MemoryKw => {
                self.bump();
                self.expect(&Tok::LBracket)?;
                let addr = self.parse_exp()?;
                self.expect(&Tok::Comma)?;
                let size = match self.parse_int("access size (1, 2 or 4)")? {
                    1 => MemSize::Byte,
                    2 => MemSize::Half,
                    4 => MemSize::Word,
                    other => return self.fail(format!("bad memory access size {other}")),
                };
                self.expect(&Tok::RBracket)?;
                Ok(Exp::Memory(Box::new(addr), size))
            }
            Tok::Ident(name) => {
                self.bump();
                self.ident_exp(name)
            }
            other => self.fail(format!("expected expression, found {}", other.describe())),
        }
    }

    fn ident_exp(&mut self, name: String) -> Result<Exp, ParseError> {
        // flag reference: `N Flag`
        if *self.peek() == Tok::FlagKw {
            let flag = match name.as_str() {
                "N" => Some(FlagId::N),
                "Z" => Some(FlagId::Z),
                "C" => Some(FlagId::C),
                "V" => Some(FlagId::V),
                _ => None,
            };
            if let Some(f) = flag {
                self.bump();
                return Ok(Exp::Flag(f));
            }
        }
        // call into the primitive library
        if *self.peek() == Tok::LParen {
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.parse_exp()?);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
            }
            self.expect(&Tok::RParen)?;
            return self.make_call(name, args);
        }
        // SPSR_<mode>
        if let Some(tail) = name.strip_prefix("SPSR_") {
            match ProcessorMode::from_name(tail) {
                Some(m) => return Ok(Exp::Spsr(Some(m))),
                None => return self.fail(format!("unknown processor mode `{tail}`")),
            }
        }
        // register references: R<param>, R<digits>, optional _<mode> suffix
        if let Some(rest) = name.strip_prefix('R') {
            if !rest.is_empty() && !self.is_bound_name(&name) {
                let (body, mode) = match rest.rsplit_once('_') {
                    Some((head, tail)) => match ProcessorMode::from_name(tail) {
                        Some(m) => (head, Some(m)),
                        None => (rest, None),
                    },
                    None => (rest, None),
                };
                let idx = if body.chars().all(|c| c.is_ascii_digit()) {
                    let v: u32 = body
                        .parse()
                        .map_err(|_| self.fail::<()>("bad register number").unwrap_err())?;
                    if v > 15 {
                        return self.fail(format!("register number {v} out of range"));
                    }
                    Exp::Const(v)
                } else if self.lenient || self.reg_params.contains(body) {
                    Exp::Var(body.to_string())
                } else if self.bound.contains(body) {
                    return self.fail(format!(
                        "`{body}` is not a register-index parameter"
                    ));
                } else {
                    return self.fail(format!("unbound register parameter `{body}`"));
                };
                return Ok(Exp::Reg(Box::new(idx), mode));
            }
        }
        if self.lenient || self.is_bound_name(&name) {
            Ok(Exp::Var(name))
        } else {
            self.fail(format!("unbound variable `{name}`"))
        }
    }

    fn is_bound_name(&self, name: &str) -> bool {
        self.bound.contains(name)
    }

    /// Build a call, normalizing the manual's flag helpers to the
    /// primitive library names and checking name and arity.
    fn make_call(&self, name: String, args: Vec<Exp>) -> Result<Exp, ParseError> {
        fn sum_parts(e: &Exp, op: BinOp) -> Option<Vec<Exp>> {
            match e {
                Exp::BinOp(l, o, r) if *o == op => {
                    let mut parts = sum_parts(l, op).unwrap_or_else(|| vec![(**l).clone()]);
                    parts.push((**r).clone());
                    Some(parts)
                }
                _ => None,
            }
        }
        let normalized = match name.as_str() {
            "CarryFrom" | "OverflowFrom" | "BorrowFrom" => {
                if args.len() != 1 {
                    return self.fail(format!("{name} takes one argument"));
                }
                let adds = sum_parts(&args[0], BinOp::Add);
                let subs = sum_parts(&args[0], BinOp::Sub);
                let (parts, suffix) = match (name.as_str(), adds, subs) {
                    ("CarryFrom", Some(p), _) => (p, "add"),
                    ("OverflowFrom", Some(p), _) => (p, "add"),
                    ("OverflowFrom", _, Some(p)) => (p, "sub"),
                    ("BorrowFrom", _, Some(p)) => (p, "sub"),
                    _ => {
                        return self.fail(format!(
                            "{name} argument must be a {}",
                            if name == "BorrowFrom" { "difference" } else { "sum or difference" }
                        ))
                    }
                };
                if parts.len() < 2 || parts.len() > 3 {
                    return self.fail(format!("{name} argument must combine 2 or 3 operands"));
                }
                let full = format!(
                    "{}_{suffix}{}",
                    if name == "BorrowFrom" { "BorrowFrom" } else { &name },
                    parts.len()
                );
                Exp::Fun(full, parts)
            }
            _ => Exp::Fun(name, args),
        };
        if let Exp::Fun(n, a) = &normalized {
            match Builtin::lookup(n) {
                None => return self.fail(format!("unknown function `{n}`")),
                Some(b) if b.arity() != a.len() => {
                    return self.fail(format!(
                        "`{n}` takes {} argument(s), got {}",
                        b.arity(),
                        a.len()
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(normalized)
    }

    // -- statements ---------------------------------------------------------

    /// Parse statements until `else`, `when`, `otherwise`, or EOF.
    fn parse_stm_list(&mut self) -> Result<Vec<Stm>, ParseError> {
        let mut stms = Vec::new();
        loop {
            self.skip_separators();
            match self.peek() {
                Tok::Else | Tok::When | Tok::Otherwise | Tok::Eof => break,
                _ => {}
            }
            stms.push(self.parse_stm()?);
            match self.peek() {
                Tok::Newline | Tok::Semicolon => {}
                Tok::Else | Tok::When | Tok::Otherwise | Tok::Eof => {}
                other => {
                    let d = other.describe();
                    return self.fail(format!("expected end of statement, found {d}"));
                }
            }
        }
        Ok(stms)
    }

    fn block_of(mut stms: Vec<Stm>) -> Stm {
        if stms.len() == 1 {
            stms.pop().unwrap()
        } else {
            Stm::Block(stms)
        }
    }

    fn parse_stm(&mut self) -> Result<Stm, ParseError> {
        match self.peek().clone() {
            Tok::Unpredictable => {
                self.bump();
                Ok(Stm::Unpredictable)
            }
            Tok::If => {
                self.bump();
                let cond = self.parse_exp()?;
                self.expect(&Tok::Then)?;
                let then = Self::block_of(self.parse_stm_list()?);
                let els = if *self.peek() == Tok::Else {
                    self.bump();
                    self.skip_separators();
                    Some(Box::new(Self::block_of(self.parse_stm_list()?)))
                } else {
                    None
                };
                Ok(Stm::If(cond, Box::new(then), els))
            }
            Tok::For => {
                self.bump();
                let counter = match self.bump() {
                    Tok::Ident(n) => n,
                    other => return self.fail(format!("expected counter name, found {}", other.describe())),
                };
                self.expect(&Tok::Assign)?;
                let min = self.parse_int("loop start")?;
                self.expect(&Tok::To)?;
                let max = self.parse_int("loop end")?;
                self.expect(&Tok::Do)?;
                self.bound.insert(counter.clone());
                let body = Self::block_of(self.parse_stm_list()?);
                Ok(Stm::For(counter, min, max, Box::new(body)))
            }
            Tok::Case => {
                self.bump();
                let scrutinee = self.parse_exp()?;
                self.expect(&Tok::Of)?;
                let mut arms = Vec::new();
                loop {
                    self.skip_separators();
                    match self.peek() {
                        Tok::When => {
                            self.bump();
                            let v = self.parse_int("case value")?;
                            self.expect(&Tok::Then)?;
                            let body = Self::block_of(self.parse_stm_list()?);
                            arms.push((v, body));
                        }
                        Tok::Otherwise => {
                            self.bump();
                            let default = Self::block_of(self.parse_stm_list()?);
                            return Ok(Stm::Case(scrutinee, arms, Box::new(default)));
                        }
                        other => {
                            let d = other.describe();
                            return self.fail(format!("expected `when` or `otherwise`, found {d}"));
                        }
                    }
                }
            }
            // `<ident> = ...` may introduce a fresh local, which the
            // expression parser would reject as unbound. Names with a
            // register or SPSR shape are not locals.
            Tok::Ident(name)
                if *self.peek2() == Tok::Assign
                    && !name.starts_with('R')
                    && !name.starts_with("SPSR_") =>
            {
                self.bump();
                self.bump();
                let rhs = self.parse_exp()?;
                self.bound.insert(name.clone());
                Ok(Stm::Assign(Exp::Var(name), rhs))
            }
            _ => {
                let lhs = self.parse_exp()?;
                if *self.peek() == Tok::Assign {
                    self.bump();
                    // introduce locals before parsing the right-hand side?
                    // No: the right side is evaluated first, so a fresh
                    // local is not in scope within its own initializer.
                    let rhs = self.parse_exp()?;
                    self.check_lvalue(&lhs)?;
                    if let Exp::Var(n) = &lhs {
                        self.bound.insert(n.clone());
                    }
                    Ok(Stm::Assign(lhs, rhs))
                } else if let Exp::Fun(name, args) = lhs {
                    Ok(Stm::Proc(name, args))
                } else {
                    self.fail("expected `=` after expression statement")
                }
            }
        }
    }

    fn check_lvalue(&self, e: &Exp) -> Result<(), ParseError> {
        match e {
            Exp::Reg(..) | Exp::Cpsr | Exp::Spsr(_) | Exp::Memory(..) | Exp::Flag(_) | Exp::Var(_) => Ok(()),
            Exp::BitRange(inner, ..) if matches!(**inner, Exp::Reg(..)) => Ok(()),
            _ => self.fail("this expression cannot be assigned to"),
        }
    }
}

// ---------------------------------------------------------------------------
// Entry points

/// Parse a single expression (test entry point; names need no declaration).
pub fn parse_exp(text: &str) -> Result<Exp, ParseError> {
    let mut p = Parser::new(lex(text, 1)?, true);
    let e = p.parse_exp()?;
    p.skip_separators();
    p.expect(&Tok::Eof)?;
    Ok(e)
}

/// Parse a single statement (test entry point; names need no declaration).
pub fn parse_stm(text: &str) -> Result<Stm, ParseError> {
    let mut p = Parser::new(lex(text, 1)?, true);
    let stms = p.parse_stm_list()?;
    p.expect(&Tok::Eof)?;
    if stms.is_empty() {
        return err(1, 1, "empty statement");
    }
    Ok(Parser::block_of(stms))
}

/// Parse one operation: header line, `param` prologue, body.
pub fn parse_operation(text: &str) -> Result<OperationAst, ParseError> {
    let mut lines = text.split('\n').enumerate().peekable();

    // header: first non-blank line
    let (header_ix, header) = loop {
        match lines.next() {
            Some((ix, l)) if l.trim().is_empty() => {
                let _ = ix;
                continue;
            }
            Some((ix, l)) => break (ix, l.trim()),
            None => return err(1, 1, "empty operation source"),
        }
    };
    let mut parts = header.split_whitespace();
    let ident = match (parts.next(), parts.next(), parts.next()) {
        (Some(section), Some(name), None) => {
            OperationIdent { section: section.to_string(), name: name.to_string() }
        }
        _ => {
            return err(
                header_ix as u32 + 1,
                1,
                format!("header must be `<section> <name>`, got `{header}`"),
            )
        }
    };

    // prologue: `param <name> : <kind>` lines
    let mut params: Vec<Param> = Vec::new();
    let mut body_start = header_ix + 1;
    while let Some(&(ix, line)) = lines.peek() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            lines.next();
            body_start = ix + 1;
            continue;
        }
        let Some(rest) = trimmed.strip_prefix("param ") else { break };
        lines.next();
        body_start = ix + 1;
        let lineno = ix as u32 + 1;
        let Some((name, kind)) = rest.split_once(':') else {
            return err(lineno, 1, "param line must be `param <name> : <kind>`");
        };
        let (name, kind) = (name.trim(), kind.trim());
        let Some(kind) = ParamKind::from_name(kind) else {
            return err(lineno, 1, format!("unknown parameter kind `{kind}`"));
        };
        if name.is_empty() || params.iter().any(|p| p.name == name) {
            return err(lineno, 1, format!("bad or duplicate parameter name `{name}`"));
        }
        params.push(Param { name: name.to_string(), kind });
    }

    let body_text: String =
        text.split('\n').skip(body_start).collect::<Vec<_>>().join("\n");
    let mut p = Parser::new(lex(&body_text, body_start as u32 + 1)?, false);
    p.bound = params.iter().map(|p| p.name.clone()).collect();
    p.reg_params = params
        .iter()
        .filter(|p| p.kind == ParamKind::RegisterIndex)
        .map(|p| p.name.clone())
        .collect();
    let stms = p.parse_stm_list()?;
    p.expect(&Tok::Eof)?;
    Ok(OperationAst { ident, params, body: Stm::Block(stms) })
}

/// Parse a file holding one operation or several separated by `===` lines.
pub fn parse_operations(text: &str) -> Result<Vec<OperationAst>, ParseError> {
    text.split('\n')
        .collect::<Vec<_>>()
        .split(|l| l.trim_start().starts_with("==="))
        .filter(|chunk| chunk.iter().any(|l| !l.trim().is_empty()))
        .map(|chunk| parse_operation(&chunk.join("\n")))
        .collect()
}

// ---------------------------------------------------------------------------
// Old-parameter resolution

/// Rewrite operand reads so they refer to the operation-entry register
/// values.
///
/// A read `R<p>` of a register-index parameter is turned into an
/// entry-snapshot read when an earlier assignment may have overwritten
/// that register through a *different* index expression (`Rd = ...`
/// may clobber `Rn` whenever `d == n` at run time). Reads through the
/// same parameter keep observing the current state, which is what the
/// flag updates want. Flag and CPSR reads are untouched.
pub fn resolve_old_params(op: &OperationAst) -> OperationAst {
    let reg_params: HashSet<String> = op
        .params
        .iter()
        .filter(|p| p.kind == ParamKind::RegisterIndex)
        .map(|p| p.name.clone())
        .collect();
    let mut written: Vec<Exp> = Vec::new();
    let body = walk_stm(&op.body, &mut written, &reg_params);
    OperationAst { ident: op.ident.clone(), params: op.params.clone(), body }
}

/// May a write through index `written` clobber the register read
/// through parameter `read`? Distinct constants never alias; the same
/// parameter is the same register (and should read the new value).
fn taints(read: &str, written: &Exp) -> bool {
    match written {
        Exp::Var(q) => q != read,
        Exp::Const(_) => true,
        _ => true,
    }
}

fn rewrite_exp(e: &Exp, written: &[Exp], reg_params: &HashSet<String>) -> Exp {
    match e {
        Exp::Reg(idx, None) => {
            if let Exp::Var(p) = idx.as_ref() {
                if reg_params.contains(p) && written.iter().any(|w| taints(p, w)) {
                    return Exp::OldParam(p.clone());
                }
            }
            e.clone()
        }
        Exp::Memory(addr, size) => {
            Exp::Memory(Box::new(rewrite_exp(addr, written, reg_params)), *size)
        }
        Exp::BinOp(l, op, r) => Exp::BinOp(
            Box::new(rewrite_exp(l, written, reg_params)),
            *op,
            Box::new(rewrite_exp(r, written, reg_params)),
        ),
        Exp::IfExp(c, t, f) => Exp::IfExp(
            Box::new(rewrite_exp(c, written, reg_params)),
            Box::new(rewrite_exp(t, written, reg_params)),
            Box::new(rewrite_exp(f, written, reg_params)),
        ),
        Exp::Fun(n, args) => Exp::Fun(
            n.clone(),
            args.iter().map(|a| rewrite_exp(a, written, reg_params)).collect(),
        ),
        Exp::BitRange(inner, hi, lo) => {
            Exp::BitRange(Box::new(rewrite_exp(inner, written, reg_params)), *hi, *lo)
        }
        _ => e.clone(),
    }
}

fn record_write(lhs: &Exp, written: &mut Vec<Exp>) {
    let reg = match lhs {
        Exp::Reg(idx, _) => Some(idx),
        Exp::BitRange(inner, ..) => match inner.as_ref() {
            Exp::Reg(idx, _) => Some(idx),
            _ => None,
        },
        _ => None,
    };
    if let Some(idx) = reg {
        if !written.contains(idx) {
            written.push((**idx).clone());
        }
    }
}

fn collect_writes(s: &Stm, written: &mut Vec<Exp>) {
    match s {
        Stm::Assign(lhs, _) => record_write(lhs, written),
        Stm::If(_, t, e) => {
            collect_writes(t, written);
            if let Some(e) = e {
                collect_writes(e, written);
            }
        }
        Stm::For(_, _, _, body) => collect_writes(body, written),
        Stm::Case(_, arms, default) => {
            for (_, s) in arms {
                collect_writes(s, written);
            }
            collect_writes(default, written);
        }
        Stm::Block(stms) => {
            for s in stms {
                collect_writes(s, written);
            }
        }
        Stm::Unpredictable | Stm::Proc(..) => {}
    }
}

fn walk_stm(s: &Stm, written: &mut Vec<Exp>, reg_params: &HashSet<String>) -> Stm {
    match s {
        Stm::Assign(lhs, rhs) => {
            let rhs = rewrite_exp(rhs, written, reg_params);
            // reads embedded in the lvalue (memory address, mode-qualified
            // banks) happen before the write lands
            let lhs2 = match lhs {
                Exp::Memory(addr, size) => {
                    Exp::Memory(Box::new(rewrite_exp(addr, written, reg_params)), *size)
                }
                other => other.clone(),
            };
            record_write(&lhs2, written);
            Stm::Assign(lhs2, rhs)
        }
        Stm::If(cond, then, els) => {
            let cond = rewrite_exp(cond, written, reg_params);
            let mut w_then = written.clone();
            let then = walk_stm(then, &mut w_then, reg_params);
            let mut w_else = written.clone();
            let els = els.as_ref().map(|e| Box::new(walk_stm(e, &mut w_else, reg_params)));
            for w in w_then.into_iter().chain(w_else) {
                if !written.contains(&w) {
                    written.push(w);
                }
            }
            Stm::If(cond, Box::new(then), els)
        }
        Stm::For(counter, min, max, body) => {
            // later iterations observe earlier ones: taint with the loop
            // body's own writes before rewriting it
            collect_writes(body, written);
            let body = walk_stm(body, written, reg_params);
            Stm::For(counter.clone(), *min, *max, Box::new(body))
        }
        Stm::Case(scrutinee, arms, default) => {
            let scrutinee = rewrite_exp(scrutinee, written, reg_params);
            let mut merged = written.clone();
            let arms: Vec<(u32, Stm)> = arms
                .iter()
                .map(|(v, s)| {
                    let mut w = written.clone();
                    let s = walk_stm(s, &mut w, reg_params);
                    for x in w {
                        if !merged.contains(&x) {
                            merged.push(x);
                        }
                    }
                    (*v, s)
                })
                .collect();
            let mut w = written.clone();
            let default = walk_stm(default, &mut w, reg_params);
            for x in w {
                if !merged.contains(&x) {
                    merged.push(x);
                }
            }
            *written = merged;
            Stm::Case(scrutinee, arms, Box::new(default))
        }
        Stm::Block(stms) => {
            Stm::Block(stms.iter().map(|s| walk_stm(s, written, reg_params)).collect())
        }
        Stm::Unpredictable => Stm::Unpredictable,
        Stm::Proc(name, args) => Stm::Proc(
            name.clone(),
            args.iter().map(|a| rewrite_exp(a, written, reg_params)).collect(),
        ),
    }
}
