//! Lowering from the pseudocode AST to the fast engine's executable
//! form.
//!
//! The executable form resolves every name to a slot: parameters become
//! indices into the decoded-argument array, locals (and the captured
//! entry values of old parameters) become indices into a fixed-size
//! frame. Expressions are flattened into one contiguous arena per
//! operation with index-based children, so evaluation walks an array
//! instead of chasing pointers. Statement-by-statement the translation
//! is one case per AST constructor: register reads become
//! register-array accesses, a CPSR-from-SPSR assignment becomes a
//! whole-status copy, flag assignments become flag-byte stores, and an
//! old-parameter read becomes a frame slot captured before the body
//! runs.

use std::collections::HashMap;

use crate::ast::{BinOp, Exp, OperationAst, ParamKind, Stm};
use crate::builtins::Builtin;
use crate::state::{FlagId, MemSize, ProcessorMode};

/// Largest locals frame an operation may need.
pub const MAX_LOCALS: usize = 16;

/// Index into an operation's expression arena.
pub type ExpId = u16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot lower {construct}: {reason}")]
pub struct LowerError {
    pub construct: String,
    pub reason: String,
}

/// Arena node. Children are arena indices; the node list is in
/// bottom-up order, so every child index is smaller than its parent's.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FastExp {
    Const(u32),
    /// Decoded argument by slot.
    Arg(u8),
    /// Locals frame slot (locals and captured old parameters).
    Local(u8),
    /// Register read; the index expression evaluates to 0..=15.
    Reg(ExpId, Option<ProcessorMode>),
    Cpsr,
    Spsr(Option<ProcessorMode>),
    Mem(ExpId, MemSize),
    Flag(FlagId),
    Binop(BinOp, ExpId, ExpId),
    IfExp(ExpId, ExpId, ExpId),
    /// Call into the primitive library; argument count given by the
    /// builtin's arity.
    Call(Builtin, [ExpId; 3]),
    BitRange(ExpId, u8, u8),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FastStm {
    SetLocal(u8, ExpId),
    /// Register write through the PC-aware path.
    SetRegOrPc(ExpId, Option<ProcessorMode>, ExpId),
    /// Whole-status copy from the current mode's SPSR into the CPSR.
    CopySpsrToCpsr,
    /// CPSR write from an arbitrary word (unpacked, may fault).
    SetCpsr(ExpId),
    SetSpsr(Option<ProcessorMode>, ExpId),
    SetFlag(FlagId, ExpId),
    SetRegBits(ExpId, Option<ProcessorMode>, u8, u8, ExpId),
    StoreMem(ExpId, MemSize, ExpId),
    If(ExpId, Vec<FastStm>, Vec<FastStm>),
    For(u8, u32, u32, Vec<FastStm>),
    Case(ExpId, Vec<(u32, Vec<FastStm>)>, Vec<FastStm>),
    Unpredictable,
}

/// A lowered operation ready for dispatch.
#[derive(Clone, Debug)]
pub struct ExecutableOp {
    pub name: String,
    /// Parameter names and kinds; slot = position.
    pub params: Vec<(String, ParamKind)>,
    pub exps: Vec<FastExp>,
    pub body: Vec<FastStm>,
    pub n_locals: u8,
    /// The body contains a PC write with a constant or non-parameter index.
    pub writes_pc_const: bool,
    /// Parameter slots used as register-write indices; the op branches
    /// when such an argument is 15.
    pub pc_param_slots: Vec<u8>,
    /// The body can write memory (drives block-cache invalidation).
    pub may_store: bool,
}

impl ExecutableOp {
    /// May this decoded instance write the PC?
    pub fn may_branch(&self, args: &[u32]) -> bool {
        self.writes_pc_const || self.pc_param_slots.iter().any(|&s| args[s as usize] == 15)
    }
}

struct Lowerer<'a> {
    op: &'a OperationAst,
    exps: Vec<FastExp>,
    locals: HashMap<String, u8>,
    /// param slot -> captured-old local slot
    old_captures: Vec<(u8, u8)>,
    writes_pc_const: bool,
    pc_param_slots: Vec<u8>,
    may_store: bool,
}

impl<'a> Lowerer<'a> {
    fn push(&mut self, e: FastExp) -> ExpId {
        let id = self.exps.len();
        assert!(id < u16::MAX as usize, "expression arena overflow");
        self.exps.push(e);
        id as ExpId
    }

    fn param_slot(&self, name: &str) -> Option<u8> {
        self.op.params.iter().position(|p| p.name == name).map(|i| i as u8)
    }

    fn local_slot(&mut self, name: &str) -> Result<u8, LowerError> {
        if let Some(&s) = self.locals.get(name) {
            return Ok(s);
        }
        let s = self.locals.len() as u8;
        if s as usize >= MAX_LOCALS {
            return Err(LowerError {
                construct: format!("local `{name}`"),
                reason: format!("more than {MAX_LOCALS} locals"),
            });
        }
        self.locals.insert(name.to_string(), s);
        Ok(s)
    }

    fn lower_exp(&mut self, e: &Exp) -> Result<ExpId, LowerError> {
        let node = match e {
            Exp::Const(v) => FastExp::Const(*v),
            Exp::Var(name) => match self.param_slot(name) {
                Some(s) => FastExp::Arg(s),
                None => FastExp::Local(self.local_slot(name)?),
            },
            Exp::OldParam(name) => {
                let p = self.param_slot(name).ok_or_else(|| LowerError {
                    construct: format!("old parameter `{name}`"),
                    reason: "not a declared parameter".into(),
                })?;
                let slot = self.local_slot(&format!("old_{name}"))?;
                if !self.old_captures.contains(&(p, slot)) {
                    self.old_captures.push((p, slot));
                }
                FastExp::Local(slot)
            }
            Exp::Reg(idx, mode) => {
                let idx = self.lower_exp(idx)?;
                FastExp::Reg(idx, *mode)
            }
            Exp::Cpsr => FastExp::Cpsr,
            Exp::Spsr(mode) => FastExp::Spsr(*mode),
            Exp::Memory(addr, size) => {
                let addr = self.lower_exp(addr)?;
                FastExp::Mem(addr, *size)
            }
            Exp::Flag(f) => FastExp::Flag(*f),
            Exp::BinOp(l, op, r) => {
                let l = self.lower_exp(l)?;
                let r = self.lower_exp(r)?;
                FastExp::Binop(*op, l, r)
            }
            Exp::IfExp(c, t, f) => {
                let c = self.lower_exp(c)?;
                let t = self.lower_exp(t)?;
                let f = self.lower_exp(f)?;
                FastExp::IfExp(c, t, f)
            }
            Exp::Fun(name, args) => {
                let b = Builtin::lookup(name).ok_or_else(|| LowerError {
                    construct: format!("call `{name}`"),
                    reason: "not in the primitive library".into(),
                })?;
                if args.len() != b.arity() || b.arity() > 3 {
                    return Err(LowerError {
                        construct: format!("call `{name}`"),
                        reason: format!("expected {} argument(s)", b.arity()),
                    });
                }
                let mut ids = [0 as ExpId; 3];
                for (i, a) in args.iter().enumerate() {
                    ids[i] = self.lower_exp(a)?;
                }
                FastExp::Call(b, ids)
            }
            Exp::BitRange(inner, hi, lo) => {
                let inner = self.lower_exp(inner)?;
                FastExp::BitRange(inner, *hi, *lo)
            }
        };
        Ok(self.push(node))
    }

    fn note_pc_write(&mut self, idx: ExpId) {
        match self.exps[idx as usize] {
            FastExp::Const(15) => self.writes_pc_const = true,
            FastExp::Const(_) => {}
            FastExp::Arg(s) => {
                if !self.pc_param_slots.contains(&s) {
                    self.pc_param_slots.push(s);
                }
            }
            // dynamic index outside the parameters: assume it may branch
            _ => self.writes_pc_const = true,
        }
    }

    fn lower_block(&mut self, s: &Stm) -> Result<Vec<FastStm>, LowerError> {
        match s {
            Stm::Block(stms) => {
                let mut out = Vec::with_capacity(stms.len());
                for s in stms {
                    out.extend(self.lower_block(s)?);
                }
                Ok(out)
            }
            other => Ok(vec![self.lower_stm(other)?]),
        }
    }

    fn lower_stm(&mut self, s: &Stm) -> Result<FastStm, LowerError> {
        Ok(match s {
            Stm::Assign(lhs, rhs) => {
                let v = self.lower_exp(rhs)?;
                match lhs {
                    Exp::Var(name) => {
                        if self.param_slot(name).is_some() {
                            return Err(LowerError {
                                construct: format!("assignment to `{name}`"),
                                reason: "parameters are read-only".into(),
                            });
                        }
                        FastStm::SetLocal(self.local_slot(name)?, v)
                    }
                    Exp::Reg(idx, mode) => {
                        let idx = self.lower_exp(idx)?;
                        self.note_pc_write(idx);
                        FastStm::SetRegOrPc(idx, *mode, v)
                    }
                    Exp::Cpsr => {
                        if matches!(rhs, Exp::Spsr(None)) {
                            FastStm::CopySpsrToCpsr
                        } else {
                            FastStm::SetCpsr(v)
                        }
                    }
                    Exp::Spsr(mode) => FastStm::SetSpsr(*mode, v),
                    Exp::Flag(f) => FastStm::SetFlag(*f, v),
                    Exp::Memory(addr, size) => {
                        self.may_store = true;
                        let addr = self.lower_exp(addr)?;
                        FastStm::StoreMem(addr, *size, v)
                    }
                    Exp::BitRange(inner, hi, lo) => match inner.as_ref() {
                        Exp::Reg(idx, mode) => {
                            let idx = self.lower_exp(idx)?;
                            self.note_pc_write(idx);
                            FastStm::SetRegBits(idx, *mode, *hi, *lo, v)
                        }
                        other => {
                            return Err(LowerError {
                                construct: format!("bit-range assignment to {other:?}"),
                                reason: "only register bit ranges are assignable".into(),
                            })
                        }
                    },
                    other => {
                        return Err(LowerError {
                            construct: format!("assignment to {other:?}"),
                            reason: "not an assignable expression".into(),
                        })
                    }
                }
            }
            Stm::If(cond, then, els) => {
                let cond = self.lower_exp(cond)?;
                let then = self.lower_block(then)?;
                let els = match els {
                    Some(e) => self.lower_block(e)?,
                    None => Vec::new(),
                };
                FastStm::If(cond, then, els)
            }
            Stm::For(counter, min, max, body) => {
                let slot = self.local_slot(counter)?;
                FastStm::For(slot, *min, *max, self.lower_block(body)?)
            }
            Stm::Case(scrutinee, arms, default) => {
                let scrutinee = self.lower_exp(scrutinee)?;
                let arms = arms
                    .iter()
                    .map(|(v, s)| Ok((*v, self.lower_block(s)?)))
                    .collect::<Result<Vec<_>, LowerError>>()?;
                FastStm::Case(scrutinee, arms, self.lower_block(default)?)
            }
            Stm::Block(_) => unreachable!("blocks are flattened by lower_block"),
            Stm::Unpredictable => FastStm::Unpredictable,
            Stm::Proc(name, _) => {
                return Err(LowerError {
                    construct: format!("procedure call `{name}`"),
                    reason: "the fast engine has no procedure table".into(),
                })
            }
        })
    }
}

fn new_lowerer(op: &OperationAst) -> Lowerer<'_> {
    Lowerer {
        op,
        exps: Vec::new(),
        locals: HashMap::new(),
        old_captures: Vec::new(),
        writes_pc_const: false,
        pc_param_slots: Vec::new(),
        may_store: false,
    }
}

/// Lower a standalone expression with nothing in scope: free variables
/// become frame slots that read as zero. Used for expression-level
/// purity checks. Returns the arena and the root index.
pub fn lower_exp_standalone(e: &Exp) -> Result<(Vec<FastExp>, ExpId), LowerError> {
    let empty = OperationAst {
        ident: crate::ast::OperationIdent { section: String::new(), name: String::new() },
        params: Vec::new(),
        body: Stm::Block(Vec::new()),
    };
    let mut lw = new_lowerer(&empty);
    let root = lw.lower_exp(e)?;
    Ok((lw.exps, root))
}

/// Lower a parsed, old-parameter-resolved operation.
pub fn lower_operation(op: &OperationAst) -> Result<ExecutableOp, LowerError> {
    let mut lw = new_lowerer(op);
    let mut body = lw.lower_block(&op.body)?;
    // capture entry values of rewritten operand registers up front
    let mut prologue: Vec<FastStm> = lw
        .old_captures
        .clone()
        .into_iter()
        .map(|(param, slot)| {
            let arg = lw.push(FastExp::Arg(param));
            let read = lw.push(FastExp::Reg(arg, None));
            FastStm::SetLocal(slot, read)
        })
        .collect();
    prologue.append(&mut body);
    Ok(ExecutableOp {
        name: op.ident.name.clone(),
        params: op.params.iter().map(|p| (p.name.clone(), p.kind)).collect(),
        exps: lw.exps,
        body: prologue,
        n_locals: lw.locals.len() as u8,
        writes_pc_const: lw.writes_pc_const,
        pc_param_slots: lw.pc_param_slots,
        may_store: lw.may_store,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_operation, resolve_old_params};

    #[test]
    fn empty_body_lowers_to_nothing() {
        let op = parse_operation("A0 NOPLIKE\n\n").unwrap();
        let exe = lower_operation(&op).unwrap();
        assert!(exe.body.is_empty());
        assert_eq!(exe.n_locals, 0);
        assert!(!exe.may_branch(&[]));
        assert!(!exe.may_store);
    }

    #[test]
    fn old_params_become_entry_captures() {
        let op = parse_operation(
            "A0 X\nparam d : register-index\nparam n : register-index\n\nRd = Rn\nR0 = Rn",
        )
        .unwrap();
        let exe = lower_operation(&resolve_old_params(&op)).unwrap();
        // first statement captures Rn before the Rd write can clobber it
        match &exe.body[0] {
            FastStm::SetLocal(slot, read) => {
                assert_eq!(*slot, 0);
                match exe.exps[*read as usize] {
                    FastExp::Reg(idx, None) => {
                        assert_eq!(exe.exps[idx as usize], FastExp::Arg(1));
                    }
                    other => panic!("expected register read, got {other:?}"),
                }
            }
            other => panic!("expected capture, got {other:?}"),
        }
        assert_eq!(exe.body.len(), 3);
        assert_eq!(exe.pc_param_slots, vec![0], "writes through d");
        assert!(exe.may_branch(&[15, 3]));
        assert!(!exe.may_branch(&[3, 15]));
    }

    #[test]
    fn procedure_calls_are_rejected_by_name() {
        let op = OperationAst {
            ident: crate::ast::OperationIdent { section: "A0".into(), name: "P".into() },
            params: vec![],
            body: Stm::Proc("NOT".into(), vec![Exp::Const(1)]),
        };
        let e = lower_operation(&op).unwrap_err();
        assert!(e.construct.contains("procedure call `NOT`"), "{e}");
    }

    #[test]
    fn stores_are_flagged() {
        let op = parse_operation("A0 ST\n\nMemory[0x100, 4] = 7").unwrap();
        let exe = lower_operation(&op).unwrap();
        assert!(exe.may_store);
    }
}
