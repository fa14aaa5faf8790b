//! The pure reference interpreter: a state-passing evaluator over
//! [`RefState`] that both the fast engine and the differential harness
//! are measured against.
//!
//! Sequencing is the `Result` monad: faults short-circuit the rest of
//! the body and carry the operation name outward. Expression
//! evaluation never modifies state (it only borrows), and CPSR reads
//! inside a body observe the current, possibly already updated flags;
//! only rewritten operand reads ([`Exp::OldParam`]) go back to the
//! entry snapshot.

use std::collections::HashMap;

use crate::ast::{BinOp, Exp, OperationAst, Stm};
use crate::builtins::{Builtin, StateView};
use crate::catalog::Catalog;
use crate::decoder;
use crate::sim::StepOutcome;
use crate::state::{Cpsr, Fault, MemSize, RefState, SemResult, SemState};

/// Evaluate an expression. `entry` is the operation-entry snapshot
/// consulted by old-parameter reads; everything else reads `cur`.
pub fn eval_exp(e: &Exp, entry: &RefState, cur: &SemState) -> Result<u32, Fault> {
    Ok(match e {
        Exp::Const(v) => *v,
        Exp::Var(name) => *cur
            .loc
            .get(name)
            .unwrap_or_else(|| panic!("unbound variable `{name}` escaped the parser")),
        Exp::OldParam(name) => {
            let idx = *cur
                .loc
                .get(name)
                .unwrap_or_else(|| panic!("unbound old parameter `{name}`"));
            entry.reg_content(idx)
        }
        Exp::Reg(idx, mode) => {
            let i = eval_exp(idx, entry, cur)?;
            match mode {
                None => cur.st.reg_content(i),
                Some(m) => cur.st.reg_content_mode(*m, i),
            }
        }
        Exp::Cpsr => cur.st.cpsr.pack(),
        Exp::Spsr(None) => cur.st.spsr()?.pack(),
        Exp::Spsr(Some(m)) => cur.st.spsr_of(*m)?.pack(),
        Exp::Memory(addr, size) => {
            let a = eval_exp(addr, entry, cur)?;
            cur.st.mem_read(a, *size)?
        }
        Exp::Flag(f) => u32::from(cur.st.cpsr.flag(*f)),
        Exp::BinOp(l, op, r) => {
            let a = eval_exp(l, entry, cur)?;
            match op {
                // short-circuit: the right side may fault
                BinOp::LogAnd if a == 0 => 0,
                BinOp::LogOr if a != 0 => 1,
                _ => op.eval(a, eval_exp(r, entry, cur)?),
            }
        }
        Exp::IfExp(c, t, f) => {
            if eval_exp(c, entry, cur)? != 0 {
                eval_exp(t, entry, cur)?
            } else {
                eval_exp(f, entry, cur)?
            }
        }
        Exp::Fun(name, args) => {
            let b = Builtin::lookup(name)
                .unwrap_or_else(|| panic!("unknown function `{name}` escaped the parser"));
            let mut vals = Vec::with_capacity(args.len());
            for a in args {
                vals.push(eval_exp(a, entry, cur)?);
            }
            b.eval(&vals, &StateView { cpsr: cur.st.cpsr })?
        }
        Exp::BitRange(inner, hi, lo) => {
            crate::bits::bit_range(eval_exp(inner, entry, cur)?, *hi as u32, *lo as u32)
        }
    })
}

/// Execute one statement, threading the semantic state through.
pub fn exec_stm(s: &Stm, entry: &RefState, mut cur: SemState) -> SemResult {
    match s {
        Stm::Block(stms) => {
            for s in stms {
                cur = exec_stm(s, entry, cur)?;
            }
            Ok(cur)
        }
        Stm::Assign(lhs, rhs) => {
            let v = eval_exp(rhs, entry, &cur)?;
            assign(lhs, v, entry, cur)
        }
        Stm::If(cond, then, els) => {
            if eval_exp(cond, entry, &cur)? != 0 {
                exec_stm(then, entry, cur)
            } else if let Some(e) = els {
                exec_stm(e, entry, cur)
            } else {
                Ok(cur)
            }
        }
        Stm::For(counter, min, max, body) => {
            for i in *min..=*max {
                cur.loc.insert(counter.clone(), i);
                cur = exec_stm(body, entry, cur)?;
            }
            Ok(cur)
        }
        Stm::Case(scrutinee, arms, default) => {
            let v = eval_exp(scrutinee, entry, &cur)?;
            match arms.iter().find(|(pat, _)| *pat == v) {
                Some((_, s)) => exec_stm(s, entry, cur),
                None => exec_stm(default, entry, cur),
            }
        }
        Stm::Unpredictable => Err(Fault::Unpredictable("explicit UNPREDICTABLE".into())),
        Stm::Proc(name, args) => {
            for a in args {
                eval_exp(a, entry, &cur)?;
            }
            Err(Fault::NotImplemented(format!("procedure call `{name}`")))
        }
    }
}

fn assign(lhs: &Exp, v: u32, entry: &RefState, mut cur: SemState) -> SemResult {
    match lhs {
        Exp::Var(name) => {
            cur.loc.insert(name.clone(), v);
        }
        Exp::Reg(idx, mode) => {
            let i = eval_exp(idx, entry, &cur)?;
            cur.st = match mode {
                None => cur.st.set_reg(i, v),
                Some(m) => cur.st.set_reg_mode(*m, i, v),
            };
            if i == 15 {
                cur.bo = false;
            }
        }
        Exp::Cpsr => {
            cur.st.cpsr = unpack_status(v)?;
        }
        Exp::Spsr(mode) => {
            let m = mode.unwrap_or(cur.st.cpsr.mode);
            let value = unpack_status(v)?;
            cur.st.set_spsr_of(m, value)?;
        }
        Exp::Flag(f) => {
            cur.st.cpsr.set_flag(*f, v & 1 == 1);
        }
        Exp::Memory(addr, size) => {
            let a = eval_exp(addr, entry, &cur)?;
            cur.st = cur.st.mem_write(a, *size, v)?;
        }
        Exp::BitRange(inner, hi, lo) => match inner.as_ref() {
            Exp::Reg(idx, mode) => {
                let i = eval_exp(idx, entry, &cur)?;
                let old = match mode {
                    None => cur.st.reg_content(i),
                    Some(m) => cur.st.reg_content_mode(*m, i),
                };
                let new = crate::bits::set_bit_range(old, *hi as u32, *lo as u32, v);
                cur.st = match mode {
                    None => cur.st.set_reg(i, new),
                    Some(m) => cur.st.set_reg_mode(*m, i, new),
                };
                if i == 15 {
                    cur.bo = false;
                }
            }
            other => panic!("bit-range assignment to {other:?} escaped the parser"),
        },
        other => panic!("assignment to {other:?} escaped the parser"),
    }
    Ok(cur)
}

fn unpack_status(v: u32) -> Result<Cpsr, Fault> {
    Cpsr::unpack(v)
        .ok_or_else(|| Fault::Unpredictable(format!("malformed status word {v:#010x}")))
}

/// Run one operation against a state.
///
/// Binds the arguments, snapshots the entry state, and executes the
/// body. The caller advances the PC by 4 when the result is `Ok` with
/// `bo` still set. Faults come back with the operation name attached.
pub fn run_operation(
    op: &OperationAst,
    args: &HashMap<String, u32>,
    st: RefState,
) -> SemResult {
    let mut loc = HashMap::with_capacity(args.len() + 4);
    for p in &op.params {
        let v = *args
            .get(&p.name)
            .unwrap_or_else(|| panic!("{}: missing argument `{}`", op.ident.name, p.name));
        assert!(
            v <= p.kind.max_value(),
            "{}: argument `{}` = {v} exceeds its {} kind",
            op.ident.name,
            p.name,
            p.kind.name()
        );
        loc.insert(p.name.clone(), v);
    }
    let entry = st.clone();
    let cur = SemState { loc, bo: true, st };
    exec_stm(&op.body, &entry, cur).map_err(|f| match f {
        Fault::Unpredictable(m) => Fault::Unpredictable(format!("{}: {m}", op.ident.name)),
        Fault::NotImplemented(m) => Fault::NotImplemented(format!("{}: {m}", op.ident.name)),
    })
}

/// Fetch, decode, and run one instruction on the reference model.
///
/// On a fault the input state is returned unchanged (the monadic
/// result drops the partial state).
pub fn step(cat: &Catalog, st: RefState) -> (RefState, StepOutcome) {
    let pc = st.pc();
    if pc & 3 != 0 {
        return (
            st,
            StepOutcome::Unpredictable(format!("misaligned instruction fetch at {pc:#010x}")),
        );
    }
    let word = match st.mem_read(pc, MemSize::Word) {
        Ok(w) => w,
        Err(f) => return (st, f.into()),
    };
    let Some(instr) = decoder::decode(cat, word) else {
        return (st, StepOutcome::Undefined(word));
    };
    let args = instr.arg_map(cat, &st);
    let lop = cat.get(instr.op as usize);
    match run_operation(&lop.ast, &args, st.clone()) {
        Ok(sem) => {
            let mut st = sem.st;
            if sem.bo {
                let next = st.pc().wrapping_add(4);
                st = st.set_reg(15, next);
            }
            (st, StepOutcome::Ok)
        }
        Err(f) => (st, f.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cond::COND_AL;
    use crate::parser::{parse_exp, parse_stm};
    use crate::state::{FlagId, ProcessorMode};

    fn sem(st: RefState) -> SemState {
        SemState::new(st)
    }

    fn adc() -> &'static OperationAst {
        let cat = Catalog::bundled();
        &cat.get(cat.find("ADC").unwrap()).ast
    }

    fn adc_args(s: u32, cond: u32, d: u32, n: u32, so: u32) -> HashMap<String, u32> {
        [
            ("S".to_string(), s),
            ("cond".to_string(), cond),
            ("d".to_string(), d),
            ("n".to_string(), n),
            ("shifter_operand".to_string(), so),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn eval_basics() {
        let st = RefState::new();
        let cur = sem(st.clone());
        assert_eq!(eval_exp(&Exp::Const(5), &st, &cur).unwrap(), 5);

        let mut with_c = RefState::new();
        with_c.cpsr.c = true;
        let cur = sem(with_c.clone());
        assert_eq!(eval_exp(&Exp::Flag(FlagId::C), &with_c, &cur).unwrap(), 1);
    }

    #[test]
    fn old_param_reads_entry_state() {
        // write Rd with d == n, then check OldParam(n) still sees entry
        let entry = RefState::new().set_reg(3, 77);
        let mut cur = sem(entry.clone());
        cur.loc.insert("n".into(), 3);
        cur.st = cur.st.set_reg(3, 0);
        assert_eq!(eval_exp(&Exp::OldParam("n".into()), &entry, &cur).unwrap(), 77);
        assert_eq!(eval_exp(&parse_exp("Rn").unwrap(), &entry, &cur).unwrap(), 0);
    }

    #[test]
    fn eval_leaves_state_untouched() {
        let mut st = RefState::new().set_reg(1, 9).mem_write(0x20, MemSize::Word, 7).unwrap();
        st.cpsr.c = true;
        let cur = sem(st.clone());
        let before = cur.clone();
        for src in ["Rn + shifter_operand + C Flag", "Memory[0x20, 4]", "CPSR", "Rd[31]"] {
            let mut c2 = cur.clone();
            c2.loc.extend([("n".to_string(), 1), ("d".to_string(), 1), ("shifter_operand".to_string(), 2)]);
            let snapshot = c2.clone();
            let _ = eval_exp(&parse_exp(src).unwrap(), &st, &c2);
            assert_eq!(c2, snapshot, "{src} mutated the state");
        }
        assert_eq!(cur, before);
    }

    #[test]
    fn empty_block_is_identity() {
        let st = RefState::new().set_reg(2, 5);
        let cur = sem(st.clone());
        let out = exec_stm(&Stm::Block(vec![]), &st, cur.clone()).unwrap();
        assert_eq!(out, cur);
    }

    #[test]
    fn unpredictable_statement_faults() {
        let st = RefState::new();
        assert!(matches!(
            exec_stm(&Stm::Unpredictable, &st, sem(st.clone())),
            Err(Fault::Unpredictable(_))
        ));
    }

    #[test]
    fn flag_assign_updates_one_field() {
        let st = RefState::new();
        let out = exec_stm(&parse_stm("Z Flag = 1").unwrap(), &st, sem(st.clone())).unwrap();
        let mut expect = st.clone();
        expect.cpsr.z = true;
        assert_eq!(out.st, expect);
        assert!(out.bo);
    }

    #[test]
    fn pc_write_clears_bo() {
        let st = RefState::new();
        let out = exec_stm(&parse_stm("PC = 0x100").unwrap(), &st, sem(st.clone())).unwrap();
        assert!(!out.bo);
        assert_eq!(out.st.pc(), 0x100);
        let out = exec_stm(&parse_stm("R3 = 0x100").unwrap(), &st, sem(st.clone())).unwrap();
        assert!(out.bo);
    }

    #[test]
    fn adc_skips_when_condition_fails() {
        // NE with Z set: skip, state unchanged, bo still true
        let mut st = RefState::new().set_reg(1, 10);
        st.cpsr.z = true;
        let out = run_operation(adc(), &adc_args(1, 1, 0, 1, 5), st.clone()).unwrap();
        assert_eq!(out.st, st);
        assert!(out.bo);
    }

    #[test]
    fn adc_s1_d15_without_spsr_is_unpredictable() {
        let st = RefState::new(); // usr mode
        let r = run_operation(adc(), &adc_args(1, COND_AL, 15, 1, 0), st);
        match r {
            Err(Fault::Unpredictable(m)) => assert!(m.contains("ADC"), "{m}"),
            other => panic!("expected fault, got {other:?}"),
        }
        let mut sys = RefState::new();
        sys.cpsr.mode = ProcessorMode::Sys;
        assert!(run_operation(adc(), &adc_args(1, COND_AL, 15, 1, 0), sys).is_err());
    }

    #[test]
    fn adc_flag_example() {
        let mut st = RefState::new().set_reg(1, 0xFFFF_FFFF);
        st.cpsr.c = true;
        let out = run_operation(adc(), &adc_args(1, COND_AL, 0, 1, 1), st).unwrap();
        assert_eq!(out.st.reg_content(0), 1);
        assert!(!out.st.cpsr.n);
        assert!(!out.st.cpsr.z);
        assert!(out.st.cpsr.c);
        assert!(!out.st.cpsr.v);
        assert!(out.bo);
    }

    #[test]
    fn adc_s0_keeps_cpsr_bit_for_bit() {
        let mut st = RefState::new().set_reg(1, 0x7FFF_FFFF);
        st.cpsr = Cpsr::unpack(0xF000_00D1).unwrap(); // all flags set, fiq, rest bits
        let before = st.cpsr;
        let out = run_operation(adc(), &adc_args(0, COND_AL, 0, 1, 1), st).unwrap();
        assert_eq!(out.st.cpsr, before);
    }

    #[test]
    fn adc_cpsr_from_spsr_in_svc() {
        let mut st = RefState::new();
        st.cpsr.mode = ProcessorMode::Svc;
        let target = Cpsr::unpack(0x9000_0011).unwrap(); // N set, fiq mode
        st.set_spsr_of(ProcessorMode::Svc, target).unwrap();
        let out = run_operation(adc(), &adc_args(1, COND_AL, 15, 1, 4), st).unwrap();
        assert_eq!(out.st.cpsr, target);
        assert!(!out.bo, "d = 15 wrote the PC");
        assert_eq!(out.st.pc(), 4, "r0 carries 0, shifter operand 4");
    }

    #[test]
    fn run_operation_is_deterministic() {
        let mut st = RefState::new().set_reg(1, 123).set_reg(4, 9);
        st.cpsr.c = true;
        let args = adc_args(1, COND_AL, 4, 1, 55);
        let a = run_operation(adc(), &args, st.clone());
        let b = run_operation(adc(), &args, st);
        assert_eq!(a, b);
    }

    #[test]
    fn skip_law_holds_for_every_catalog_operation() {
        // condition EQ with Z clear: every operation must return its
        // input unchanged with the PC-increment flag still set
        let cat = Catalog::bundled();
        for lop in cat.ops() {
            let mut st = RefState::new().set_reg(1, 0x1234).set_reg(2, 7);
            st.cpsr.z = false;
            st.cpsr.c = true;
            let mut args = HashMap::new();
            for p in &lop.ast.params {
                let v = match p.name.as_str() {
                    "cond" => 0, // EQ
                    "S" | "shifter_carry_out" => 1,
                    "d" => 3,
                    "n" => 1,
                    _ => 5,
                };
                args.insert(p.name.clone(), v);
            }
            let out = run_operation(&lop.ast, &args, st.clone())
                .unwrap_or_else(|f| panic!("{}: {f}", lop.spec.name));
            assert_eq!(out.st, st, "{} modified a skipped state", lop.spec.name);
            assert!(out.bo, "{} cleared bo while skipped", lop.spec.name);
        }
    }

    #[test]
    fn old_param_rewrite_changes_aliased_destination_reads() {
        // ADC with d == n: without the rewrite, the carry computation
        // reads the freshly written Rd; with it, the entry value.
        let cat = Catalog::bundled();
        let lop = cat.get(cat.find("ADC").unwrap());
        let raw = crate::parser::parse_operation(&lop.spec.pseudocode).unwrap();
        let resolved = crate::parser::resolve_old_params(&raw);
        assert_ne!(raw, resolved);

        let mut st = RefState::new().set_reg(1, 0xFFFF_FFFE);
        st.cpsr.c = false;
        let args = adc_args(1, COND_AL, 1, 1, 1); // d == n == 1
        // entry Rn = 0xFFFFFFFE, so Rd = 0xFFFFFFFF, no carry out
        let with = run_operation(&resolved, &args, st.clone()).unwrap();
        assert_eq!(with.st.reg_content(1), 0xFFFF_FFFF);
        assert!(!with.st.cpsr.c, "carry must use the entry value of Rn");
        // the unresolved body reads the new Rd = 0xFFFFFFFF instead and
        // wrongly reports a carry
        let without = run_operation(&raw, &args, st).unwrap();
        assert!(without.st.cpsr.c);
    }

    #[test]
    fn spsr_read_in_usr_faults() {
        let st = RefState::new();
        let e = eval_exp(&Exp::Spsr(None), &st, &sem(st.clone())).unwrap_err();
        assert!(matches!(e, Fault::Unpredictable(_)));
    }

    #[test]
    fn for_and_case_execute() {
        let st = RefState::new();
        let body = parse_stm("for i = 1 to 4 do\n    sum = sum + i").unwrap();
        let mut cur = sem(st.clone());
        cur.loc.insert("sum".into(), 0);
        let out = exec_stm(&body, &st, cur).unwrap();
        assert_eq!(out.loc["sum"], 10);

        let case = parse_stm("case x of\nwhen 2 then\n    R0 = 5\notherwise\n    R0 = 9").unwrap();
        let mut cur = sem(st.clone());
        cur.loc.insert("x".into(), 2);
        assert_eq!(exec_stm(&case, &st, cur).unwrap().st.reg_content(0), 5);
        let mut cur = sem(st);
        cur.loc.insert("x".into(), 7);
        assert_eq!(
            exec_stm(&case, &RefState::new(), cur).unwrap().st.reg_content(0),
            9
        );
    }
}
