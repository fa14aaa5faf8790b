//! Differential harness: randomized checks that the two engines
//! commute under projection, frame checks on the written footprint,
//! condition purity/agreement checks, a greedy shrinker, and the
//! replayable reproducer format.

use std::collections::BTreeMap;
use std::fmt;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::cond::condition_passed;
use crate::decoder::{self, DecodedInstr};
use crate::fast::project::project;
use crate::fast::{self, FastProcessor, FastStatus, Simulator};
use crate::ref_engine;
use crate::shifter::{ShiftKind, ShifterDescriptor};
use crate::sim::{HaltDetector, RunOutcome, RunReport, StepOutcome};
use crate::state::{
    all_phys_regs, Cpsr, Fault, FlagId, PhysReg, ProcessorMode, RefState, ALL_FLAGS, ALL_MODES,
    CPSR_REST_MASK, EXCEPTION_MODES,
};

// ---------------------------------------------------------------------------
// State components and diffs

/// An addressable piece of architectural state, named in mismatch
/// reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Reg(PhysReg),
    Flag(FlagId),
    Mode,
    CpsrRest,
    Spsr(ProcessorMode),
    Mem(u32),
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::Reg(r) => write!(f, "{r}"),
            Component::Flag(fl) => write!(f, "{}_flag", fl.name()),
            Component::Mode => write!(f, "mode"),
            Component::CpsrRest => write!(f, "cpsr_rest"),
            Component::Spsr(m) => write!(f, "spsr_{m}"),
            Component::Mem(a) => write!(f, "mem[{a:#010x}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentDiff {
    pub component: Component,
    pub left: u32,
    pub right: u32,
}

impl fmt::Display for ComponentDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#010x} vs {:#010x}", self.component, self.left, self.right)
    }
}

/// Every component where the two states differ.
pub fn state_diff(a: &RefState, b: &RefState) -> Vec<ComponentDiff> {
    let mut out = Vec::new();
    let mut push = |component, left, right| {
        if left != right {
            out.push(ComponentDiff { component, left, right });
        }
    };
    for r in all_phys_regs() {
        push(Component::Reg(r), a.regs.get_phys(r), b.regs.get_phys(r));
    }
    for f in ALL_FLAGS {
        push(Component::Flag(f), a.cpsr.flag(f).into(), b.cpsr.flag(f).into());
    }
    push(Component::Mode, a.cpsr.mode.bits(), b.cpsr.mode.bits());
    push(Component::CpsrRest, a.cpsr.rest, b.cpsr.rest);
    for (i, m) in EXCEPTION_MODES.iter().enumerate() {
        push(Component::Spsr(*m), a.spsr[i].pack(), b.spsr[i].pack());
    }
    let addrs: std::collections::BTreeSet<u32> =
        a.mem.keys().chain(b.mem.keys()).copied().collect();
    for addr in addrs {
        push(
            Component::Mem(addr),
            a.mem.get(&addr).copied().unwrap_or(0).into(),
            b.mem.get(&addr).copied().unwrap_or(0).into(),
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Verdicts

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutcomeClass {
    Ok,
    Unpredictable,
    NotImplemented,
    Undefined,
}

impl OutcomeClass {
    pub fn of_step(s: &StepOutcome) -> OutcomeClass {
        match s {
            StepOutcome::Ok => OutcomeClass::Ok,
            StepOutcome::Unpredictable(_) => OutcomeClass::Unpredictable,
            StepOutcome::NotImplemented(_) => OutcomeClass::NotImplemented,
            StepOutcome::Undefined(_) => OutcomeClass::Undefined,
        }
    }

    pub fn of_fault(f: &Fault) -> OutcomeClass {
        match f {
            Fault::Unpredictable(_) => OutcomeClass::Unpredictable,
            Fault::NotImplemented(_) => OutcomeClass::NotImplemented,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Ok => "ok",
            OutcomeClass::Unpredictable => "unpredictable",
            OutcomeClass::NotImplemented => "not-implemented",
            OutcomeClass::Undefined => "undefined",
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one differential check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Both engines completed but the projected states differ.
    Mismatch { instr: Option<DecodedInstr>, seed: u64, diffs: Vec<ComponentDiff> },
    /// The engines disagree about the outcome class (or a checked
    /// boolean result).
    OutcomeDisagree { instr: Option<DecodedInstr>, seed: u64, reference: String, fast: String },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn describe(&self, cat: &Catalog) -> String {
        match self {
            Verdict::Pass => "pass".into(),
            Verdict::Mismatch { instr, seed, diffs } => {
                let name = instr.as_ref().map(|i| i.mnemonic(cat)).unwrap_or("-");
                let list: Vec<String> = diffs.iter().map(|d| d.to_string()).collect();
                format!("mismatch {name} seed={seed}: {}", list.join(", "))
            }
            Verdict::OutcomeDisagree { instr, seed, reference, fast } => {
                let name = instr.as_ref().map(|i| i.mnemonic(cat)).unwrap_or("-");
                format!("outcome disagreement {name} seed={seed}: reference={reference} fast={fast}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Random generation

pub const CORNER_WORDS: [u32; 5] = [0, 1, 0x7FFF_FFFF, 0x8000_0000, 0xFFFF_FFFF];

fn corner_or_uniform(rng: &mut ChaCha8Rng) -> u32 {
    if rng.gen_bool(0.30) {
        *CORNER_WORDS.choose(rng).unwrap()
    } else {
        rng.gen()
    }
}

/// Build a projective-related pair: a random processor, and the
/// reference state obtained by projecting it. Deterministic per seed.
pub fn random_state(seed: u64) -> (RefState, FastProcessor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut proc = FastProcessor::new();
    proc.set_mode(*ALL_MODES.choose(&mut rng).unwrap());
    for r in all_phys_regs() {
        proc.write_phys(r, corner_or_uniform(&mut rng));
    }
    // keep the fetch stream word-aligned and clear of the +8 underflow
    proc.set_next_fetch(rng.gen_range(0x10u32..0x4000_0000) & !3);
    proc.cpsr.n = rng.gen_range(0..=1);
    proc.cpsr.z = rng.gen_range(0..=1);
    proc.cpsr.c = rng.gen_range(0..=1);
    proc.cpsr.v = rng.gen_range(0..=1);
    proc.cpsr.rest = rng.gen::<u32>() & CPSR_REST_MASK;
    for i in 0..5 {
        proc.spsr[i] = FastStatus {
            n: rng.gen_range(0..=1),
            z: rng.gen_range(0..=1),
            c: rng.gen_range(0..=1),
            v: rng.gen_range(0..=1),
            mode: *ALL_MODES.choose(&mut rng).unwrap(),
            rest: rng.gen::<u32>() & CPSR_REST_MASK,
        };
    }
    let n_bytes = rng.gen_range(0..48usize);
    let base: u32 = rng.gen_range(0..0x1_0000u32);
    for i in 0..n_bytes {
        proc.mem.write_byte(base.wrapping_add(i as u32), rng.gen());
    }
    (project(&proc), proc)
}

fn random_shifter(rng: &mut ChaCha8Rng) -> ShifterDescriptor {
    let m = rng.gen_range(0..16) as u8;
    match rng.gen_range(0..5) {
        0 => ShifterDescriptor::Immediate {
            rotate: rng.gen_range(0..16) as u8,
            imm8: if rng.gen_bool(0.3) { *[0u8, 1, 0x7F, 0x80, 0xFF].choose(rng).unwrap() } else { rng.gen() },
        },
        1 => ShifterDescriptor::Register { m },
        2 => {
            let shift = *crate::shifter::ALL_SHIFTS.choose(rng).unwrap();
            let amount = rng.gen_range(0..32) as u8;
            match (shift, amount) {
                (ShiftKind::Lsl, 0) => ShifterDescriptor::Register { m },
                (ShiftKind::Ror, 0) => ShifterDescriptor::Rrx { m },
                _ => ShifterDescriptor::ShiftImm { m, shift, amount },
            }
        }
        3 => ShifterDescriptor::ShiftReg {
            m,
            shift: *crate::shifter::ALL_SHIFTS.choose(rng).unwrap(),
            s: rng.gen_range(0..16) as u8,
        },
        _ => ShifterDescriptor::Rrx { m },
    }
}

/// Random decoded instance of a specific catalog operation.
pub fn random_instr_for(cat: &Catalog, op: usize, rng: &mut ChaCha8Rng) -> DecodedInstr {
    let lop = cat.get(op);
    let fields = lop
        .spec
        .pattern
        .fields
        .iter()
        .map(|f| {
            let max = if f.width() >= 32 { u32::MAX } else { (1u32 << f.width()) - 1 };
            match f.name.as_str() {
                "cond" => {
                    let roll = rng.gen_range(0..100);
                    if roll < 40 {
                        14 // always
                    } else if roll < 96 {
                        rng.gen_range(0..14)
                    } else {
                        15 // reserved: both engines must call it unpredictable
                    }
                }
                "d" | "n" => {
                    if rng.gen_bool(0.12) {
                        15
                    } else {
                        rng.gen_range(0..16)
                    }
                }
                "signed_immed_24" => {
                    if rng.gen_bool(0.3) {
                        *[0u32, 1, 0x7F_FFFF, 0x80_0000, 0xFF_FFFF, 0xFF_FFFE].choose(rng).unwrap()
                    } else {
                        rng.gen_range(0..=max)
                    }
                }
                _ => rng.gen_range(0..=max),
            }
        })
        .collect();
    let shifter = lop.spec.has_shifter.then(|| random_shifter(rng));
    DecodedInstr { op: op as u16, fields, shifter }
}

/// Random instruction over the whole catalog.
pub fn random_instr(cat: &Catalog, rng: &mut ChaCha8Rng) -> DecodedInstr {
    let op = rng.gen_range(0..cat.ops().len());
    random_instr_for(cat, op, rng)
}

// ---------------------------------------------------------------------------
// Differential checks

/// Optional fault injection, used to prove the harness can see bugs.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiffConfig {
    /// Invert the carry flag the fast engine computes for a
    /// flag-setting ADC (a seeded bug the suite must catch).
    pub invert_adc_carry: bool,
}

/// A concrete differential case: one instruction against one
/// processor state (the reference state is the projection).
#[derive(Clone, Debug, PartialEq)]
pub struct DiffCase {
    pub instr: DecodedInstr,
    pub proc: FastProcessor,
}

/// Deterministic (instruction, state) pair for an operation and seed.
pub fn case_for_seed(cat: &Catalog, op: usize, seed: u64) -> DiffCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(op as u64));
    let instr = random_instr_for(cat, op, &mut rng);
    let (_, proc) = random_state(seed.wrapping_add(0x0DDC_0FFE).wrapping_add((op as u64) << 40));
    DiffCase { instr, proc }
}

/// Run the reference engine over one instruction, applying the PC
/// advance the way the step loop does.
fn ref_exec(cat: &Catalog, instr: &DecodedInstr, st: &RefState) -> Result<RefState, Fault> {
    let args = instr.arg_map(cat, st);
    let lop = cat.get(instr.op as usize);
    ref_engine::run_operation(&lop.ast, &args, st.clone()).map(|sem| {
        let mut st = sem.st;
        if sem.bo {
            let next = st.pc().wrapping_add(4);
            st = st.set_reg(15, next);
        }
        st
    })
}

fn apply_injection(
    cfg: &DiffConfig,
    cat: &Catalog,
    instr: &DecodedInstr,
    entry: &RefState,
    proc: &mut FastProcessor,
) {
    if !cfg.invert_adc_carry || instr.mnemonic(cat) != "ADC" {
        return;
    }
    let s = instr.field(cat, "S").unwrap_or(0);
    let d = instr.field(cat, "d").unwrap_or(0);
    let cond = instr.field(cat, "cond").unwrap_or(14);
    let passed = condition_passed(&entry.cpsr, cond).unwrap_or(false);
    if s == 1 && d != 15 && passed {
        proc.cpsr.c ^= 1;
    }
}

/// Check the correctness square for one case: run the reference engine
/// on the projected state and the fast engine on the concrete state,
/// then compare projections (or outcome classes on faults).
pub fn check_case(cat: &Catalog, cfg: &DiffConfig, case: &DiffCase, seed: u64) -> Verdict {
    let ref0 = project(&case.proc);
    let ref_out = ref_exec(cat, &case.instr, &ref0);
    let mut proc = case.proc.clone();
    let fast_out = fast::exec_decoded(cat, &mut proc, &case.instr);
    if fast_out == StepOutcome::Ok {
        apply_injection(cfg, cat, &case.instr, &ref0, &mut proc);
    }
    match (&ref_out, &fast_out) {
        (Ok(ref_st), StepOutcome::Ok) => {
            let diffs = state_diff(ref_st, &project(&proc));
            if diffs.is_empty() {
                Verdict::Pass
            } else {
                Verdict::Mismatch { instr: Some(case.instr.clone()), seed, diffs }
            }
        }
        (Err(f), out) if OutcomeClass::of_fault(f) == OutcomeClass::of_step(out) => Verdict::Pass,
        (r, f) => Verdict::OutcomeDisagree {
            instr: Some(case.instr.clone()),
            seed,
            reference: match r {
                Ok(_) => "ok".into(),
                Err(e) => format!("{}", OutcomeClass::of_fault(e)),
            },
            fast: format!("{}", OutcomeClass::of_step(f)),
        },
    }
}

/// The commuting-square check for a random state drawn from `seed`.
pub fn check_commutes(cat: &Catalog, instr: &DecodedInstr, seed: u64) -> Verdict {
    check_commutes_with(cat, &DiffConfig::default(), instr, seed)
}

pub fn check_commutes_with(
    cat: &Catalog,
    cfg: &DiffConfig,
    instr: &DecodedInstr,
    seed: u64,
) -> Verdict {
    let (_, proc) = random_state(seed);
    check_case(cat, cfg, &DiffCase { instr: instr.clone(), proc }, seed)
}

/// Frame check: everything outside the reference run's written
/// footprint must be bit-identical in the fast engine.
pub fn check_frame(cat: &Catalog, instr: &DecodedInstr, seed: u64) -> Verdict {
    let (ref0, proc0) = random_state(seed);
    let Ok(ref_after) = ref_exec(cat, instr, &ref0) else {
        // faulting executions have no defined footprint
        return Verdict::Pass;
    };
    let footprint: Vec<Component> =
        state_diff(&ref0, &ref_after).into_iter().map(|d| d.component).collect();
    let mut proc = proc0.clone();
    if fast::exec_decoded(cat, &mut proc, instr) != StepOutcome::Ok {
        return Verdict::Pass;
    }
    let violations: Vec<ComponentDiff> = state_diff(&ref0, &project(&proc))
        .into_iter()
        .filter(|d| !footprint.contains(&d.component))
        .collect();
    if violations.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Mismatch { instr: Some(instr.clone()), seed, diffs: violations }
    }
}

/// Evaluate a condition in both engines: the fast evaluation must not
/// mutate anything, and the boolean results must agree.
pub fn check_condition_purity_and_agreement(cat: &Catalog, cond: u32, seed: u64) -> Verdict {
    let _ = cat;
    assert!(cond < 15, "reserved condition is covered by the commute suite");
    let (ref0, proc) = random_state(seed);
    let snapshot = proc.clone();
    let fast_result = fast::eval_condition(&proc, cond);
    if proc != snapshot {
        return Verdict::Mismatch {
            instr: None,
            seed,
            diffs: state_diff(&project(&snapshot), &project(&proc)),
        };
    }
    let ref_result = condition_passed(&ref0.cpsr, cond);
    match (ref_result, fast_result) {
        (Ok(a), Ok(b)) if a == b => Verdict::Pass,
        (a, b) => Verdict::OutcomeDisagree {
            instr: None,
            seed,
            reference: format!("{a:?}"),
            fast: format!("{b:?}"),
        },
    }
}

// ---------------------------------------------------------------------------
// Shrinking

/// Greedily minimize a failing case: zero registers and flags, drop
/// memory bytes, and simplify the shifter descriptor, keeping each
/// move only while the verdict stays failing. Deterministic.
pub fn shrink(cat: &Catalog, cfg: &DiffConfig, case: &DiffCase) -> DiffCase {
    let fails = |c: &DiffCase| !check_case(cat, cfg, c, 0).passed();
    if !fails(case) {
        return case.clone();
    }
    let mut best = case.clone();
    for _round in 0..4 {
        let mut changed = false;
        // registers (the PC slot "zeroes" to fetch address 0)
        for r in all_phys_regs() {
            let mut cand = best.clone();
            let zero = if r.index == 15 { 8 } else { 0 };
            if cand.proc.read_phys(r) != zero {
                cand.proc.write_phys(r, zero);
                if fails(&cand) {
                    best = cand;
                    changed = true;
                }
            }
        }
        // flags, preserved bits, spsrs, mode
        for f in ALL_FLAGS {
            let mut cand = best.clone();
            if cand.proc.cpsr.flag(f) != 0 {
                cand.proc.cpsr.set_flag(f, 0);
                if fails(&cand) {
                    best = cand;
                    changed = true;
                }
            }
        }
        for mutate in [
            (|p: &mut FastProcessor| p.cpsr.rest = 0) as fn(&mut FastProcessor),
            |p| p.spsr = [FastStatus::default(); 5],
            |p| p.set_mode(ProcessorMode::Usr),
        ] {
            let mut cand = best.clone();
            mutate(&mut cand.proc);
            if cand != best && fails(&cand) {
                best = cand;
                changed = true;
            }
        }
        // memory bytes
        for (addr, _) in best.proc.mem.nonzero_map() {
            let mut cand = best.clone();
            cand.proc.mem.write_byte(addr, 0);
            if fails(&cand) {
                best = cand;
                changed = true;
            }
        }
        // shifter ladder: immediate zero, then a bare register
        if let Some(desc) = best.instr.shifter {
            for simpler in [
                ShifterDescriptor::Immediate { rotate: 0, imm8: 0 },
                ShifterDescriptor::Register { m: 0 },
            ] {
                if desc != simpler {
                    let mut cand = best.clone();
                    cand.instr.shifter = Some(simpler);
                    if fails(&cand) {
                        best = cand;
                        changed = true;
                        break;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Reproducer files

/// Serialize a case to the replayable text format.
pub fn write_reproducer(cat: &Catalog, case: &DiffCase) -> String {
    let lop = cat.get(case.instr.op as usize);
    let mut out = String::from("# armsim reproducer\n");
    out.push_str(&format!("op {}\n", lop.spec.name));
    for (f, v) in lop.spec.pattern.fields.iter().zip(&case.instr.fields) {
        out.push_str(&format!("field {} {v}\n", f.name));
    }
    if let Some(desc) = case.instr.shifter {
        let line = match desc {
            ShifterDescriptor::Immediate { rotate, imm8 } => format!("imm {rotate} {imm8}"),
            ShifterDescriptor::Register { m } => format!("reg {m}"),
            ShifterDescriptor::ShiftImm { m, shift, amount } => {
                format!("shift_imm {m} {} {amount}", shift.name())
            }
            ShifterDescriptor::ShiftReg { m, shift, s } => {
                format!("shift_reg {m} {} {s}", shift.name())
            }
            ShifterDescriptor::Rrx { m } => format!("rrx {m}"),
        };
        out.push_str(&format!("shifter {line}\n"));
    }
    out.push_str(&format!("cpsr {:#010x}\n", case.proc.cpsr.pack()));
    for (i, m) in EXCEPTION_MODES.iter().enumerate() {
        out.push_str(&format!("spsr {m} {:#010x}\n", case.proc.spsr[i].pack()));
    }
    for r in all_phys_regs() {
        out.push_str(&format!("reg {r} {:#010x}\n", case.proc.read_phys(r)));
    }
    for (addr, byte) in case.proc.mem.nonzero_map() {
        out.push_str(&format!("mem {addr:#010x} {byte:#04x}\n"));
    }
    out
}

/// Parse the reproducer format back into a runnable case.
pub fn parse_reproducer(cat: &Catalog, text: &str) -> Result<DiffCase, String> {
    let mut op: Option<usize> = None;
    let mut fields: BTreeMap<String, u32> = BTreeMap::new();
    let mut shifter: Option<ShifterDescriptor> = None;
    let mut cpsr: Option<Cpsr> = None;
    let mut spsr: Vec<(ProcessorMode, Cpsr)> = Vec::new();
    let mut regs: Vec<(PhysReg, u32)> = Vec::new();
    let mut mem: Vec<(u32, u8)> = Vec::new();

    let parse_u32 = |s: &str| -> Result<u32, String> {
        let s = s.trim();
        if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
            u32::from_str_radix(h, 16).map_err(|e| format!("bad number `{s}`: {e}"))
        } else {
            s.parse().map_err(|e| format!("bad number `{s}`: {e}"))
        }
    };

    for (ix, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| format!("line {}: {msg}", ix + 1);
        let mut words = line.split_whitespace();
        let key = words.next().unwrap();
        let rest: Vec<&str> = words.collect();
        match key {
            "op" => {
                let name = rest.first().ok_or_else(|| err("missing op name".into()))?;
                op = Some(
                    cat.find(name).ok_or_else(|| err(format!("unknown operation `{name}`")))?,
                );
            }
            "field" => {
                let [name, value] = rest[..] else {
                    return Err(err("field line must be `field <name> <value>`".into()));
                };
                fields.insert(name.to_string(), parse_u32(value).map_err(err)?);
            }
            "shifter" => {
                let desc = match rest.as_slice() {
                    ["imm", r, i] => ShifterDescriptor::Immediate {
                        rotate: parse_u32(r).map_err(&err)? as u8,
                        imm8: parse_u32(i).map_err(&err)? as u8,
                    },
                    ["reg", m] => {
                        ShifterDescriptor::Register { m: parse_u32(m).map_err(&err)? as u8 }
                    }
                    ["shift_imm", m, k, a] => ShifterDescriptor::ShiftImm {
                        m: parse_u32(m).map_err(&err)? as u8,
                        shift: ShiftKind::from_name(k)
                            .ok_or_else(|| err(format!("bad shift kind `{k}`")))?,
                        amount: parse_u32(a).map_err(&err)? as u8,
                    },
                    ["shift_reg", m, k, s] => ShifterDescriptor::ShiftReg {
                        m: parse_u32(m).map_err(&err)? as u8,
                        shift: ShiftKind::from_name(k)
                            .ok_or_else(|| err(format!("bad shift kind `{k}`")))?,
                        s: parse_u32(s).map_err(&err)? as u8,
                    },
                    ["rrx", m] => ShifterDescriptor::Rrx { m: parse_u32(m).map_err(&err)? as u8 },
                    other => return Err(err(format!("bad shifter spec {other:?}"))),
                };
                shifter = Some(desc);
            }
            "cpsr" => {
                let w = parse_u32(rest.first().ok_or_else(|| err("missing value".into()))?)
                    .map_err(&err)?;
                cpsr = Some(
                    Cpsr::unpack(w).ok_or_else(|| err(format!("malformed cpsr {w:#010x}")))?,
                );
            }
            "spsr" => {
                let [mode, value] = rest[..] else {
                    return Err(err("spsr line must be `spsr <mode> <value>`".into()));
                };
                let m = ProcessorMode::from_name(mode)
                    .ok_or_else(|| err(format!("unknown mode `{mode}`")))?;
                let w = parse_u32(value).map_err(&err)?;
                spsr.push((
                    m,
                    Cpsr::unpack(w).ok_or_else(|| err(format!("malformed spsr {w:#010x}")))?,
                ));
            }
            "reg" => {
                let [name, value] = rest[..] else {
                    return Err(err("reg line must be `reg <name> <value>`".into()));
                };
                let phys = parse_phys_reg(name).ok_or_else(|| err(format!("bad register `{name}`")))?;
                regs.push((phys, parse_u32(value).map_err(&err)?));
            }
            "mem" => {
                let [addr, value] = rest[..] else {
                    return Err(err("mem line must be `mem <addr> <byte>`".into()));
                };
                mem.push((parse_u32(addr).map_err(&err)?, parse_u32(value).map_err(&err)? as u8));
            }
            other => return Err(err(format!("unknown key `{other}`"))),
        }
    }

    let op = op.ok_or("missing `op` line")?;
    let lop = cat.get(op);
    let mut field_values = Vec::with_capacity(lop.spec.pattern.fields.len());
    for f in &lop.spec.pattern.fields {
        let v = fields
            .remove(&f.name)
            .ok_or_else(|| format!("missing field `{}` for {}", f.name, lop.spec.name))?;
        field_values.push(v);
    }
    if let Some((name, _)) = fields.into_iter().next() {
        return Err(format!("field `{name}` does not belong to {}", lop.spec.name));
    }
    let instr = DecodedInstr { op: op as u16, fields: field_values, shifter };
    // round-trip through the encoder validates field and shifter ranges
    decoder::encode(cat, &instr).map_err(|e| e.to_string())?;

    let mut proc = FastProcessor::new();
    let cpsr = cpsr.ok_or("missing `cpsr` line")?;
    proc.set_mode(cpsr.mode);
    proc.cpsr = FastStatus::from_cpsr(cpsr);
    for (m, c) in spsr {
        let ix = m.spsr_index().ok_or(format!("mode {m} has no spsr"))?;
        proc.spsr[ix] = FastStatus::from_cpsr(c);
    }
    for (r, v) in regs {
        proc.write_phys(r, v);
    }
    for (addr, byte) in mem {
        proc.mem.write_byte(addr, byte);
    }
    Ok(DiffCase { instr, proc })
}

fn parse_phys_reg(name: &str) -> Option<PhysReg> {
    all_phys_regs().into_iter().find(|r| r.to_string() == name)
}

// ---------------------------------------------------------------------------
// Suite driver

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub cases: u64,
    pub failures: Vec<(u64, Verdict)>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Run `cases` differential checks for every catalog operation,
/// splitting seeds across worker threads; per-seed results are
/// deterministic regardless of the split.
pub fn run_commute_suite(
    cat: &Catalog,
    cfg: &DiffConfig,
    cases_per_op: u64,
    threads: usize,
) -> SuiteReport {
    run_commute_suite_seeded(cat, cfg, 0, cases_per_op, threads)
}

/// As [`run_commute_suite`], starting the per-operation seeds at
/// `base_seed`.
pub fn run_commute_suite_seeded(
    cat: &Catalog,
    cfg: &DiffConfig,
    base_seed: u64,
    cases_per_op: u64,
    threads: usize,
) -> SuiteReport {
    let n_ops = cat.ops().len() as u64;
    let total = n_ops * cases_per_op;
    let threads = threads.max(1);
    let mut failures: Vec<(u64, Verdict)> = std::thread::scope(|scope| {
        let workers: Vec<_> = (0..threads)
            .map(|t| {
                let cfg = *cfg;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut ix = t as u64;
                    while ix < total {
                        let op = (ix / cases_per_op) as usize;
                        let seed = base_seed + ix % cases_per_op;
                        let case = case_for_seed(cat, op, seed);
                        let v = check_case(cat, &cfg, &case, seed);
                        if !v.passed() {
                            local.push((ix, v));
                        }
                        ix += threads as u64;
                    }
                    local
                })
            })
            .collect();
        workers.into_iter().flat_map(|w| w.join().expect("worker panicked")).collect()
    });
    failures.sort_by_key(|(ix, _)| *ix);
    SuiteReport { cases: total, failures }
}

// ---------------------------------------------------------------------------
// Lockstep co-simulation

#[derive(Clone, Debug)]
pub enum LockstepStop {
    Run(RunOutcome),
    Diverged { step: u64, addr: u32, detail: String },
}

#[derive(Debug)]
pub struct LockstepReport {
    pub steps: u64,
    pub stop: LockstepStop,
    pub wall: std::time::Duration,
}

/// Step both engines in lockstep, comparing the projection after every
/// instruction. The observer sees (step index, instruction address,
/// word, mnemonic, per-step state changes).
pub fn run_lockstep<F>(
    cat: &Catalog,
    mut ref_st: RefState,
    fast0: FastProcessor,
    max_steps: u64,
    mut observer: F,
) -> LockstepReport
where
    F: FnMut(u64, u32, u32, &str, &[ComponentDiff]),
{
    let start = std::time::Instant::now();
    let mut sim = Simulator::new(cat, fast0);
    let mut steps = 0u64;
    let mut halt = HaltDetector::default();
    let stop = loop {
        if steps >= max_steps {
            break LockstepStop::Run(RunOutcome::MaxSteps);
        }
        let addr = ref_st.pc();
        let word = ref_st.mem_read(addr & !3, crate::state::MemSize::Word).unwrap_or(0);
        let mnemonic = decoder::decode(cat, word)
            .map(|i| i.mnemonic(cat).to_string())
            .unwrap_or_else(|| "?".into());

        let before = ref_st.clone();
        let (next_ref, ref_out) = ref_engine::step(cat, ref_st);
        ref_st = next_ref;
        let fast_out = sim.step();

        let ref_class = OutcomeClass::of_step(&ref_out);
        let fast_class = OutcomeClass::of_step(&fast_out);
        if ref_class != fast_class {
            break LockstepStop::Diverged {
                step: steps,
                addr,
                detail: format!("outcome classes differ: reference={ref_class} fast={fast_class}"),
            };
        }
        if ref_class != OutcomeClass::Ok {
            break LockstepStop::Run(
                RunOutcome::from_step(ref_out).expect("non-ok step stops the run"),
            );
        }
        steps += 1;
        let diffs = state_diff(&before, &ref_st);
        observer(steps, addr, word, &mnemonic, &diffs);
        let commute = state_diff(&ref_st, &project(&sim.proc));
        if !commute.is_empty() {
            let list: Vec<String> = commute.iter().map(|d| d.to_string()).collect();
            break LockstepStop::Diverged {
                step: steps,
                addr,
                detail: format!("states diverged: {}", list.join(", ")),
            };
        }
        let branched = ref_st.pc() != addr.wrapping_add(4);
        if halt.observe(addr, branched, ref_st.pc()) {
            break LockstepStop::Run(RunOutcome::Halted);
        }
    };
    LockstepReport { steps, stop, wall: start.elapsed() }
}

/// Convenience wrapper for program-level lockstep runs.
pub fn lockstep_report_to_run(report: &LockstepReport) -> RunReport {
    RunReport {
        steps: report.steps,
        outcome: match &report.stop {
            LockstepStop::Run(o) => o.clone(),
            LockstepStop::Diverged { detail, .. } => RunOutcome::Unpredictable(detail.clone()),
        },
        wall: report.wall,
    }
}
