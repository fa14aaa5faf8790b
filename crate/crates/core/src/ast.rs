//! Abstract syntax for instruction pseudocode bodies.

use std::fmt;

use crate::state::{FlagId, MemSize, ProcessorMode};

/// Binary operators, C-like precedence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Shl,
    Shr,
    Eq,
    Ne,
    BitAnd,
    BitEor,
    BitOr,
    LogAnd,
    LogOr,
}

impl BinOp {
    pub fn token(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::BitAnd => "AND",
            BinOp::BitEor => "EOR",
            BinOp::BitOr => "OR",
            BinOp::LogAnd => "and",
            BinOp::LogOr => "or",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 8,
            BinOp::Shl | BinOp::Shr => 7,
            BinOp::Eq | BinOp::Ne => 6,
            BinOp::BitAnd => 5,
            BinOp::BitEor => 4,
            BinOp::BitOr => 3,
            BinOp::LogAnd => 2,
            BinOp::LogOr => 1,
        }
    }

    /// Value semantics shared by both engines. Arithmetic wraps; shift
    /// amounts of 32 or more produce 0; the logical and equality
    /// operators yield 0 or 1.
    ///
    /// `LogAnd`/`LogOr` short-circuit in the engines: the right operand
    /// is only evaluated when it can decide the result. This function
    /// gives the combining rule once both sides are known.
    pub fn eval(self, a: u32, b: u32) -> u32 {
        match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::Shl => {
                if b >= 32 {
                    0
                } else {
                    a << b
                }
            }
            BinOp::Shr => {
                if b >= 32 {
                    0
                } else {
                    a >> b
                }
            }
            BinOp::Eq => u32::from(a == b),
            BinOp::Ne => u32::from(a != b),
            BinOp::BitAnd => a & b,
            BinOp::BitEor => a ^ b,
            BinOp::BitOr => a | b,
            BinOp::LogAnd => u32::from(a != 0 && b != 0),
            BinOp::LogOr => u32::from(a != 0 || b != 0),
        }
    }
}

/// Expressions. All expressions are side-effect free; faults
/// (misaligned memory, SPSR in usr/sys, reserved condition) propagate
/// without touching state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Exp {
    Var(String),
    Const(u32),
    /// Register content; the index expression is a `Var` or `Const`.
    /// An explicit mode reads another bank.
    Reg(Box<Exp>, Option<ProcessorMode>),
    Cpsr,
    Spsr(Option<ProcessorMode>),
    Memory(Box<Exp>, MemSize),
    Flag(FlagId),
    BinOp(Box<Exp>, BinOp, Box<Exp>),
    IfExp(Box<Exp>, Box<Exp>, Box<Exp>),
    /// Call into the primitive library; the name is validated at parse
    /// time against [`crate::builtins::Builtin::lookup`].
    Fun(String, Vec<Exp>),
    BitRange(Box<Exp>, u8, u8),
    /// Register content of a register-index parameter as it was on
    /// operation entry, regardless of writes made by the body.
    OldParam(String),
}

impl Exp {
    pub fn var(name: &str) -> Exp {
        Exp::Var(name.to_string())
    }

    pub fn reg_var(name: &str) -> Exp {
        Exp::Reg(Box::new(Exp::var(name)), None)
    }

    pub fn binop(lhs: Exp, op: BinOp, rhs: Exp) -> Exp {
        Exp::BinOp(Box::new(lhs), op, Box::new(rhs))
    }
}

/// Statements. `Assign` lvalues are restricted to registers, CPSR,
/// SPSR, memory, flags, locals, and bit ranges of registers; the
/// parser enforces this.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Stm {
    Assign(Exp, Exp),
    If(Exp, Box<Stm>, Option<Box<Stm>>),
    For(String, u32, u32, Box<Stm>),
    Case(Exp, Vec<(u32, Stm)>, Box<Stm>),
    Block(Vec<Stm>),
    Unpredictable,
    Proc(String, Vec<Exp>),
}

/// Declared kind of an operation parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Bit,
    Condition,
    RegisterIndex,
    Word,
}

impl ParamKind {
    pub fn name(self) -> &'static str {
        match self {
            ParamKind::Bit => "bit",
            ParamKind::Condition => "condition",
            ParamKind::RegisterIndex => "register-index",
            ParamKind::Word => "word",
        }
    }

    pub fn from_name(s: &str) -> Option<ParamKind> {
        Some(match s {
            "bit" => ParamKind::Bit,
            "condition" => ParamKind::Condition,
            "register-index" => ParamKind::RegisterIndex,
            "word" => ParamKind::Word,
            _ => return None,
        })
    }

    /// Largest value a bound argument of this kind may take.
    pub fn max_value(self) -> u32 {
        match self {
            ParamKind::Bit => 1,
            ParamKind::Condition => 15,
            ParamKind::RegisterIndex => 15,
            ParamKind::Word => u32::MAX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

/// Operation identifier: the manual-style section tag plus mnemonic,
/// e.g. section "A4.1.2", name "ADC".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationIdent {
    pub section: String,
    pub name: String,
}

impl fmt::Display for OperationIdent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.section, self.name)
    }
}

/// One parsed operation: header, parameter prologue, body.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OperationAst {
    pub ident: OperationIdent,
    pub params: Vec<Param>,
    pub body: Stm,
}

impl OperationAst {
    pub fn param(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }
}

// ---------------------------------------------------------------------------
// Pretty printer. The printed form reparses to the same AST; the
// sugared flag helpers (CarryFrom/OverflowFrom/BorrowFrom) print back
// in their surface spelling.

fn print_exp(e: &Exp, parent_prec: u8, out: &mut String) {
    match e {
        Exp::Var(n) => out.push_str(n),
        Exp::Const(v) => {
            if *v > 9 {
                out.push_str(&format!("{v:#x}"));
            } else {
                out.push_str(&v.to_string());
            }
        }
        Exp::Reg(idx, mode) => {
            match idx.as_ref() {
                Exp::Var(n) => out.push_str(&format!("R{n}")),
                Exp::Const(15) if mode.is_none() => out.push_str("PC"),
                Exp::Const(14) if mode.is_none() => out.push_str("LR"),
                Exp::Const(k) => out.push_str(&format!("R{k}")),
                other => panic!("unprintable register index {other:?}"),
            }
            if let Some(m) = mode {
                out.push('_');
                out.push_str(m.name());
            }
        }
        Exp::Cpsr => out.push_str("CPSR"),
        Exp::Spsr(None) => out.push_str("SPSR"),
        Exp::Spsr(Some(m)) => out.push_str(&format!("SPSR_{}", m.name())),
        Exp::Memory(addr, size) => {
            out.push_str("Memory[");
            print_exp(addr, 0, out);
            out.push_str(&format!(", {}]", size.bytes()));
        }
        Exp::Flag(f) => out.push_str(&format!("{} Flag", f.name())),
        Exp::BinOp(l, op, r) => {
            let prec = op.precedence();
            let need = prec < parent_prec;
            if need {
                out.push('(');
            }
            print_exp(l, prec, out);
            out.push_str(&format!(" {} ", op.token()));
            // left-associative: parenthesize right children of equal precedence
            print_exp(r, prec + 1, out);
            if need {
                out.push(')');
            }
        }
        Exp::IfExp(c, t, f) => {
            let need = parent_prec > 0;
            if need {
                out.push('(');
            }
            out.push_str("if ");
            print_exp(c, 0, out);
            out.push_str(" then ");
            print_exp(t, 0, out);
            out.push_str(" else ");
            print_exp(f, 0, out);
            if need {
                out.push(')');
            }
        }
        Exp::Fun(name, args) => print_fun(name, args, parent_prec, out),
        Exp::BitRange(inner, hi, lo) => {
            print_exp(inner, u8::MAX, out);
            if hi == lo {
                out.push_str(&format!("[{hi}]"));
            } else {
                out.push_str(&format!("[{hi}:{lo}]"));
            }
        }
        Exp::OldParam(n) => out.push_str(&format!("R{n}")),
    }
}

/// Print a primitive call, re-sugaring the normalized carry/overflow/
/// borrow helpers into the manual's `F(a + b + c)` spelling.
fn print_fun(name: &str, args: &[Exp], parent_prec: u8, out: &mut String) {
    let chain = |args: &[Exp], op: BinOp| -> Exp {
        let mut it = args.iter().cloned();
        let first = it.next().expect("arity checked at parse");
        it.fold(first, |acc, e| Exp::binop(acc, op, e))
    };
    match name {
        "NOT" => {
            let need = parent_prec > 9;
            if need {
                out.push('(');
            }
            out.push_str("NOT ");
            print_exp(&args[0], 9, out);
            if need {
                out.push(')');
            }
        }
        "CarryFrom_add2" | "CarryFrom_add3" => {
            out.push_str("CarryFrom(");
            print_exp(&chain(args, BinOp::Add), 0, out);
            out.push(')');
        }
        "OverflowFrom_add2" | "OverflowFrom_add3" => {
            out.push_str("OverflowFrom(");
            print_exp(&chain(args, BinOp::Add), 0, out);
            out.push(')');
        }
        "BorrowFrom_sub2" | "BorrowFrom_sub3" => {
            out.push_str("BorrowFrom(");
            print_exp(&chain(args, BinOp::Sub), 0, out);
            out.push(')');
        }
        "OverflowFrom_sub2" | "OverflowFrom_sub3" => {
            out.push_str("OverflowFrom(");
            print_exp(&chain(args, BinOp::Sub), 0, out);
            out.push(')');
        }
        _ => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print_exp(a, 0, out);
            }
            out.push(')');
        }
    }
}

fn print_stm(s: &Stm, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match s {
        Stm::Assign(lhs, rhs) => {
            out.push_str(&pad);
            print_exp(lhs, 0, out);
            out.push_str(" = ");
            print_exp(rhs, 0, out);
            out.push('\n');
        }
        Stm::If(cond, then, els) => {
            out.push_str(&pad);
            out.push_str("if ");
            print_exp(cond, 0, out);
            out.push_str(" then\n");
            print_stm(then, indent + 1, out);
            if let Some(e) = els {
                out.push_str(&pad);
                out.push_str("else\n");
                print_stm(e, indent + 1, out);
            }
        }
        Stm::For(counter, min, max, body) => {
            out.push_str(&pad);
            out.push_str(&format!("for {counter} = {min} to {max} do\n"));
            print_stm(body, indent + 1, out);
        }
        Stm::Case(scrutinee, arms, default) => {
            out.push_str(&pad);
            out.push_str("case ");
            print_exp(scrutinee, 0, out);
            out.push_str(" of\n");
            for (value, stm) in arms {
                out.push_str(&pad);
                out.push_str(&format!("when {value} then\n"));
                print_stm(stm, indent + 1, out);
            }
            out.push_str(&pad);
            out.push_str("otherwise\n");
            print_stm(default, indent + 1, out);
        }
        Stm::Block(stms) => {
            for s in stms {
                print_stm(s, indent, out);
            }
        }
        Stm::Unpredictable => {
            out.push_str(&pad);
            out.push_str("UNPREDICTABLE\n");
        }
        Stm::Proc(name, args) => {
            out.push_str(&pad);
            print_fun(name, args, 0, out);
            out.push('\n');
        }
    }
}

/// Render an expression in concrete syntax.
pub fn exp_to_string(e: &Exp) -> String {
    let mut s = String::new();
    print_exp(e, 0, &mut s);
    s
}

/// Render a statement in concrete syntax.
pub fn stm_to_string(s: &Stm) -> String {
    let mut out = String::new();
    print_stm(s, 0, &mut out);
    out
}

/// Render a whole operation, including header and parameter prologue.
pub fn operation_to_string(op: &OperationAst) -> String {
    let mut out = format!("{}\n", op.ident);
    for p in &op.params {
        out.push_str(&format!("param {} : {}\n", p.name, p.kind.name()));
    }
    out.push('\n');
    print_stm(&op.body, 0, &mut out);
    out
}
