//! Per-instruction specialization for the block cache.
//!
//! Once a word is decoded its field arguments (condition, S bit,
//! register numbers) are constants; only the shifter operand still
//! depends on processor state. Folding those constants through the
//! lowered body lets an always-executed, non-flag-setting instruction
//! shrink to its one register write: the condition call becomes a
//! constant, constant `if` chains splice away, and entry captures
//! nobody reads anymore are dropped. The result computes exactly what
//! the generic body computes for those arguments.

use crate::ast::BinOp;
use crate::builtins::{Builtin, StateView};
use crate::state::Cpsr;

use super::lower::{ExecutableOp, ExpId, FastExp, FastStm};

/// Specialized arena and body for one decoded instruction.
#[derive(Clone, Debug)]
pub struct Specialized {
    pub exps: Vec<FastExp>,
    pub body: Vec<FastStm>,
}

/// A builtin that is a pure function of its arguments (never reads
/// flags or mode, never faults).
fn is_pure_fn(b: Builtin) -> bool {
    !matches!(b, Builtin::ConditionPassed | Builtin::CurrentModeHasSpsr)
}

struct Folder<'a> {
    old: &'a [FastExp],
    /// Field-argument values; `None` for state-dependent slots.
    args: &'a [Option<u32>],
    new: Vec<FastExp>,
    /// old arena id -> new arena id
    map: Vec<ExpId>,
}

impl<'a> Folder<'a> {
    fn push(&mut self, e: FastExp) -> ExpId {
        // reuse an existing identical node when cheap to find
        if let FastExp::Const(_) = e {
            if let Some(ix) = self.new.iter().rposition(|n| *n == e) {
                return ix as ExpId;
            }
        }
        self.new.push(e);
        (self.new.len() - 1) as ExpId
    }

    fn const_of(&self, id: ExpId) -> Option<u32> {
        match self.new[id as usize] {
            FastExp::Const(v) => Some(v),
            _ => None,
        }
    }

    /// Fold one node; children are already folded (the arena is in
    /// bottom-up order).
    fn fold(&mut self, node: FastExp) -> ExpId {
        let folded = match node {
            FastExp::Arg(s) => match self.args.get(s as usize).copied().flatten() {
                Some(v) => FastExp::Const(v),
                None => FastExp::Arg(s),
            },
            FastExp::Reg(idx, mode) => FastExp::Reg(self.map[idx as usize], mode),
            FastExp::Mem(addr, size) => FastExp::Mem(self.map[addr as usize], size),
            FastExp::Binop(op, l, r) => {
                let (l, r) = (self.map[l as usize], self.map[r as usize]);
                match (self.const_of(l), self.const_of(r)) {
                    (Some(a), Some(b)) => FastExp::Const(op.eval(a, b)),
                    // a decided logical operand folds even when the other
                    // side is dynamic: the dynamic side is pure
                    (Some(0), _) if op == BinOp::LogAnd => FastExp::Const(0),
                    (Some(a), _) if op == BinOp::LogOr && a != 0 => FastExp::Const(1),
                    _ => FastExp::Binop(op, l, r),
                }
            }
            FastExp::IfExp(c, t, f) => {
                let (c, t, f) = (self.map[c as usize], self.map[t as usize], self.map[f as usize]);
                match self.const_of(c) {
                    Some(0) => return f,
                    Some(_) => return t,
                    None => FastExp::IfExp(c, t, f),
                }
            }
            FastExp::Call(b, ids) => {
                let mut new_ids = [0 as ExpId; 3];
                let arity = b.arity();
                for (new_id, old) in new_ids.iter_mut().zip(&ids[..arity]) {
                    *new_id = self.map[*old as usize];
                }
                let consts: Vec<Option<u32>> =
                    (0..arity).map(|i| self.const_of(new_ids[i])).collect();
                if is_pure_fn(b) && consts.iter().all(|c| c.is_some()) {
                    let vals: Vec<u32> = consts.into_iter().map(|c| c.unwrap()).collect();
                    let dummy = StateView { cpsr: Cpsr::default() };
                    FastExp::Const(b.eval(&vals, &dummy).expect("pure builtins cannot fault"))
                } else if b == Builtin::ConditionPassed && consts[0] == Some(14) {
                    // the always condition; other fields need the flags
                    FastExp::Const(1)
                } else {
                    FastExp::Call(b, new_ids)
                }
            }
            FastExp::BitRange(inner, hi, lo) => {
                let inner = self.map[inner as usize];
                match self.const_of(inner) {
                    Some(v) => {
                        FastExp::Const(crate::bits::bit_range(v, hi as u32, lo as u32))
                    }
                    None => FastExp::BitRange(inner, hi, lo),
                }
            }
            other => other,
        };
        self.push(folded)
    }

    fn fold_body(&mut self, body: &[FastStm]) -> Vec<FastStm> {
        let mut out = Vec::with_capacity(body.len());
        for stm in body {
            self.fold_stm(stm, &mut out);
        }
        out
    }

    fn fold_stm(&mut self, stm: &FastStm, out: &mut Vec<FastStm>) {
        let m = |f: &Folder, id: &ExpId| f.map[*id as usize];
        match stm {
            FastStm::SetLocal(slot, e) => out.push(FastStm::SetLocal(*slot, m(self, e))),
            FastStm::SetRegOrPc(idx, mode, e) => {
                out.push(FastStm::SetRegOrPc(m(self, idx), *mode, m(self, e)))
            }
            FastStm::CopySpsrToCpsr => out.push(FastStm::CopySpsrToCpsr),
            FastStm::SetCpsr(e) => out.push(FastStm::SetCpsr(m(self, e))),
            FastStm::SetSpsr(mode, e) => out.push(FastStm::SetSpsr(*mode, m(self, e))),
            FastStm::SetFlag(f, e) => out.push(FastStm::SetFlag(*f, m(self, e))),
            FastStm::SetRegBits(idx, mode, hi, lo, e) => {
                out.push(FastStm::SetRegBits(m(self, idx), *mode, *hi, *lo, m(self, e)))
            }
            FastStm::StoreMem(addr, size, e) => {
                out.push(FastStm::StoreMem(m(self, addr), *size, m(self, e)))
            }
            FastStm::If(cond, then, els) => {
                let cond = m(self, cond);
                match self.const_of(cond) {
                    Some(0) => out.extend(self.fold_body(els)),
                    Some(_) => out.extend(self.fold_body(then)),
                    None => {
                        let then = self.fold_body(then);
                        let els = self.fold_body(els);
                        out.push(FastStm::If(cond, then, els));
                    }
                }
            }
            FastStm::For(slot, min, max, body) => {
                let body = self.fold_body(body);
                out.push(FastStm::For(*slot, *min, *max, body));
            }
            FastStm::Case(scrutinee, arms, default) => {
                let scrutinee = m(self, scrutinee);
                match self.const_of(scrutinee) {
                    Some(v) => {
                        let body =
                            arms.iter().find(|(pat, _)| *pat == v).map(|(_, b)| b).unwrap_or(default);
                        out.extend(self.fold_body(body));
                    }
                    None => {
                        let arms =
                            arms.iter().map(|(v, b)| (*v, self.fold_body(b))).collect();
                        let default = self.fold_body(default);
                        out.push(FastStm::Case(scrutinee, arms, default));
                    }
                }
            }
            FastStm::Unpredictable => out.push(FastStm::Unpredictable),
        }
    }
}

/// An expression whose evaluation can neither fault nor observe the
/// locals frame being built (used to decide capture pruning).
fn exp_is_safe_to_drop(exps: &[FastExp], id: ExpId) -> bool {
    match exps[id as usize] {
        FastExp::Const(_) | FastExp::Arg(_) | FastExp::Local(_) | FastExp::Flag(_) | FastExp::Cpsr => {
            true
        }
        FastExp::Reg(idx, _) => matches!(exps[idx as usize], FastExp::Const(v) if v < 16),
        _ => false,
    }
}

fn collect_local_reads(exps: &[FastExp], body: &[FastStm], reads: &mut [bool]) {
    fn exp_reads(exps: &[FastExp], id: ExpId, reads: &mut [bool]) {
        match exps[id as usize] {
            FastExp::Local(s) => reads[s as usize] = true,
            FastExp::Reg(c, _) | FastExp::Mem(c, _) | FastExp::BitRange(c, ..) => {
                exp_reads(exps, c, reads)
            }
            FastExp::Binop(_, a, b) => {
                exp_reads(exps, a, reads);
                exp_reads(exps, b, reads);
            }
            FastExp::IfExp(a, b, c) => {
                exp_reads(exps, a, reads);
                exp_reads(exps, b, reads);
                exp_reads(exps, c, reads);
            }
            FastExp::Call(bi, ids) => {
                for &id in &ids[..bi.arity()] {
                    exp_reads(exps, id, reads);
                }
            }
            _ => {}
        }
    }
    for stm in body {
        match stm {
            FastStm::SetLocal(_, e)
            | FastStm::SetCpsr(e)
            | FastStm::SetSpsr(_, e)
            | FastStm::SetFlag(_, e) => exp_reads(exps, *e, reads),
            FastStm::SetRegOrPc(a, _, b) | FastStm::StoreMem(a, _, b) => {
                exp_reads(exps, *a, reads);
                exp_reads(exps, *b, reads);
            }
            FastStm::SetRegBits(a, _, _, _, b) => {
                exp_reads(exps, *a, reads);
                exp_reads(exps, *b, reads);
            }
            FastStm::If(c, t, e) => {
                exp_reads(exps, *c, reads);
                collect_local_reads(exps, t, reads);
                collect_local_reads(exps, e, reads);
            }
            FastStm::For(_, _, _, b) => collect_local_reads(exps, b, reads),
            FastStm::Case(c, arms, d) => {
                exp_reads(exps, *c, reads);
                for (_, b) in arms {
                    collect_local_reads(exps, b, reads);
                }
                collect_local_reads(exps, d, reads);
            }
            FastStm::CopySpsrToCpsr | FastStm::Unpredictable => {}
        }
    }
}

/// Specialize a lowered operation for known field arguments.
/// `args[slot]` is `Some` for decode-time constants and `None` for the
/// shifter operand and carry.
pub fn specialize(exe: &ExecutableOp, args: &[Option<u32>]) -> Specialized {
    let mut folder = Folder { old: &exe.exps, args, new: Vec::with_capacity(exe.exps.len()), map: Vec::with_capacity(exe.exps.len()) };
    for i in 0..folder.old.len() {
        let node = folder.old[i];
        let id = folder.fold(node);
        folder.map.push(id);
    }
    let mut body = folder.fold_body(&exe.body);

    // drop top-level stores to locals nothing reads (entry captures made
    // dead by branch folding), as long as evaluating them cannot fault
    let mut reads = [false; super::lower::MAX_LOCALS];
    collect_local_reads(&folder.new, &body, &mut reads);
    body.retain(|stm| match stm {
        FastStm::SetLocal(slot, e) => {
            reads[*slot as usize] || !exp_is_safe_to_drop(&folder.new, *e)
        }
        _ => true,
    });

    Specialized { exps: folder.new, body }
}
