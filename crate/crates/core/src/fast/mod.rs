//! The optimized imperative engine: a mutable processor with the PC
//! aliased to register 15, byte-sized flag fields, paged memory, and a
//! run loop that caches decoded basic blocks.
//!
//! Register 15 of the live array always holds the next fetch address
//! plus 8, so a plain array read of r15 yields the pipeline-visible PC
//! with no special casing; [`project`](project::project) subtracts the
//! offset when mapping onto the reference state.

pub mod lower;
pub mod project;
pub mod specialize;

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use crate::ast::BinOp;
use crate::builtins::StateView;
use crate::catalog::{ArgSource, Catalog, LoadedOp};
use crate::decoder::{self, DecodedInstr};
use crate::shifter;
use crate::sim::{HaltDetector, RunOutcome, RunReport, StepOutcome};
use crate::state::{
    check_alignment, resolve_reg, Bank, Cpsr, Fault, FlagId, MemSize, PhysReg, ProcessorMode,
};
use lower::{FastExp, FastStm, MAX_LOCALS};

pub const PAGE_SHIFT: u32 = 12;
pub const PAGE_SIZE: usize = 1 << PAGE_SHIFT;

/// Largest parameter list an operation may declare.
pub const MAX_PARAMS: usize = 8;

/// Byte store in 4 KiB pages, allocated on first write and zero-filled.
/// Reads never allocate.
#[derive(Clone, Debug, Default)]
pub struct PagedMemory {
    pages: HashMap<u32, Box<[u8; PAGE_SIZE]>>,
    epoch: u64,
}

impl PagedMemory {
    pub fn read_byte(&self, addr: u32) -> u8 {
        match self.pages.get(&(addr >> PAGE_SHIFT)) {
            Some(p) => p[(addr as usize) & (PAGE_SIZE - 1)],
            None => 0,
        }
    }

    pub fn write_byte(&mut self, addr: u32, v: u8) {
        self.epoch += 1;
        let page = self
            .pages
            .entry(addr >> PAGE_SHIFT)
            .or_insert_with(|| Box::new([0u8; PAGE_SIZE]));
        page[(addr as usize) & (PAGE_SIZE - 1)] = v;
    }

    /// Bumps whenever memory is written; used to invalidate decoded blocks.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn read(&self, addr: u32, size: MemSize) -> Result<u32, Fault> {
        check_alignment(addr, size, "read")?;
        if size == MemSize::Word && (addr as usize) & (PAGE_SIZE - 1) <= PAGE_SIZE - 4 {
            // aligned word within one page
            if let Some(p) = self.pages.get(&(addr >> PAGE_SHIFT)) {
                let off = (addr as usize) & (PAGE_SIZE - 1);
                return Ok(u32::from_le_bytes(p[off..off + 4].try_into().unwrap()));
            }
            return Ok(0);
        }
        let mut v = 0u32;
        for i in 0..size.bytes() {
            v |= (self.read_byte(addr.wrapping_add(i)) as u32) << (8 * i);
        }
        Ok(v)
    }

    pub fn write(&mut self, addr: u32, size: MemSize, v: u32) -> Result<(), Fault> {
        check_alignment(addr, size, "write")?;
        for i in 0..size.bytes() {
            self.write_byte(addr.wrapping_add(i), (v >> (8 * i)) as u8);
        }
        Ok(())
    }

    pub fn load_bytes(&mut self, base: u32, bytes: &[u8]) {
        for (i, &b) in bytes.iter().enumerate() {
            self.write_byte(base.wrapping_add(i as u32), b);
        }
    }

    /// Nonzero bytes in address order (the canonical sparse image).
    pub fn nonzero_map(&self) -> std::collections::BTreeMap<u32, u8> {
        let mut out = std::collections::BTreeMap::new();
        for (&page, data) in &self.pages {
            let base = page << PAGE_SHIFT;
            for (i, &b) in data.iter().enumerate() {
                if b != 0 {
                    out.insert(base + i as u32, b);
                }
            }
        }
        out
    }
}

impl PartialEq for PagedMemory {
    /// Content equality: a page of zeroes equals no page at all.
    fn eq(&self, other: &Self) -> bool {
        self.nonzero_map() == other.nonzero_map()
    }
}

impl Eq for PagedMemory {}

/// Status register in split form: one byte per flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FastStatus {
    pub n: u8,
    pub z: u8,
    pub c: u8,
    pub v: u8,
    pub mode: ProcessorMode,
    pub rest: u32,
}

impl Default for FastStatus {
    fn default() -> Self {
        FastStatus { n: 0, z: 0, c: 0, v: 0, mode: ProcessorMode::Usr, rest: 0 }
    }
}

impl FastStatus {
    pub fn from_cpsr(c: Cpsr) -> FastStatus {
        FastStatus {
            n: c.n.into(),
            z: c.z.into(),
            c: c.c.into(),
            v: c.v.into(),
            mode: c.mode,
            rest: c.rest,
        }
    }

    pub fn to_cpsr(self) -> Cpsr {
        debug_assert!(self.n <= 1 && self.z <= 1 && self.c <= 1 && self.v <= 1);
        Cpsr {
            n: self.n != 0,
            z: self.z != 0,
            c: self.c != 0,
            v: self.v != 0,
            mode: self.mode,
            rest: self.rest,
        }
    }

    pub fn pack(self) -> u32 {
        self.to_cpsr().pack()
    }

    pub fn flag(&self, f: FlagId) -> u8 {
        match f {
            FlagId::N => self.n,
            FlagId::Z => self.z,
            FlagId::C => self.c,
            FlagId::V => self.v,
        }
    }

    pub fn set_flag(&mut self, f: FlagId, v: u8) {
        match f {
            FlagId::N => self.n = v,
            FlagId::Z => self.z = v,
            FlagId::C => self.c = v,
            FlagId::V => self.v = v,
        }
    }
}

/// The imperative processor.
///
/// `regs` is the current-mode view; the banked arrays hold the values
/// of registers not visible in the current mode. Mode changes swap the
/// affected window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FastProcessor {
    pub regs: [u32; 16],
    banked_usr: [u32; 7],
    banked_fiq: [u32; 7],
    banked_irq: [u32; 2],
    banked_svc: [u32; 2],
    banked_abt: [u32; 2],
    banked_und: [u32; 2],
    pub cpsr: FastStatus,
    pub spsr: [FastStatus; 5],
    pub mem: PagedMemory,
    branch_taken: bool,
}

impl Default for FastProcessor {
    fn default() -> Self {
        FastProcessor {
            // next fetch at 0: stored r15 is fetch + 8
            regs: [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 8],
            banked_usr: [0; 7],
            banked_fiq: [0; 7],
            banked_irq: [0; 2],
            banked_svc: [0; 2],
            banked_abt: [0; 2],
            banked_und: [0; 2],
            cpsr: FastStatus::default(),
            spsr: [FastStatus::default(); 5],
            mem: PagedMemory::default(),
            branch_taken: false,
        }
    }
}

impl FastProcessor {
    pub fn new() -> FastProcessor {
        FastProcessor::default()
    }

    /// Read-only PC accessor: identical to reading register 15.
    pub fn pc(&self) -> u32 {
        self.regs[15]
    }

    /// Address of the next instruction to fetch.
    pub fn fetch_addr(&self) -> u32 {
        self.regs[15].wrapping_sub(8)
    }

    /// Point the fetch stream at `addr` without recording a branch.
    pub fn set_next_fetch(&mut self, addr: u32) {
        self.regs[15] = addr.wrapping_add(8);
    }

    pub fn reg(&self, n: u32) -> u32 {
        self.regs[n as usize]
    }

    /// Register write that understands the PC: writing r15 redirects
    /// the fetch stream and records a taken branch so the run loop
    /// skips its own increment.
    pub fn set_reg_or_pc(&mut self, d: u32, v: u32) {
        assert!(d < 16, "register index {d} out of range");
        if d == 15 {
            self.regs[15] = v.wrapping_add(8);
            self.branch_taken = true;
        } else {
            self.regs[d as usize] = v;
        }
    }

    fn bank_slot(&self, r: PhysReg) -> u32 {
        let i = r.index as usize;
        match r.bank {
            Bank::Usr => self.banked_usr[i - 8],
            Bank::Fiq => self.banked_fiq[i - 8],
            Bank::Irq => self.banked_irq[i - 13],
            Bank::Svc => self.banked_svc[i - 13],
            Bank::Abt => self.banked_abt[i - 13],
            Bank::Und => self.banked_und[i - 13],
        }
    }

    fn bank_slot_mut(&mut self, r: PhysReg) -> &mut u32 {
        let i = r.index as usize;
        match r.bank {
            Bank::Usr => &mut self.banked_usr[i - 8],
            Bank::Fiq => &mut self.banked_fiq[i - 8],
            Bank::Irq => &mut self.banked_irq[i - 13],
            Bank::Svc => &mut self.banked_svc[i - 13],
            Bank::Abt => &mut self.banked_abt[i - 13],
            Bank::Und => &mut self.banked_und[i - 13],
        }
    }

    fn in_view(&self, r: PhysReg) -> bool {
        r.index < 8 || r.index == 15 || resolve_reg(self.cpsr.mode, r.index as u32) == r
    }

    /// Read a physical slot whether or not it is currently mapped.
    pub fn read_phys(&self, r: PhysReg) -> u32 {
        if self.in_view(r) {
            self.regs[r.index as usize]
        } else {
            self.bank_slot(r)
        }
    }

    pub fn write_phys(&mut self, r: PhysReg, v: u32) {
        if self.in_view(r) {
            self.regs[r.index as usize] = v;
        } else {
            *self.bank_slot_mut(r) = v;
        }
    }

    /// Register read in an explicit mode. The +8 PC view is baked into
    /// the stored r15, so no adjustment is needed here.
    pub fn reg_mode(&self, mode: ProcessorMode, n: u32) -> u32 {
        assert!(n < 16);
        self.read_phys(resolve_reg(mode, n))
    }

    pub fn write_reg_mode(&mut self, mode: ProcessorMode, n: u32, v: u32) {
        assert!(n < 16);
        if n == 15 {
            self.set_reg_or_pc(15, v);
        } else {
            self.write_phys(resolve_reg(mode, n), v);
        }
    }

    /// Switch modes, swapping the banked register window.
    pub fn set_mode(&mut self, new: ProcessorMode) {
        let old = self.cpsr.mode;
        if new == old {
            return;
        }
        for i in 8..=14u32 {
            let slot = resolve_reg(old, i);
            *self.bank_slot_mut(slot) = self.regs[i as usize];
        }
        self.cpsr.mode = new;
        for i in 8..=14u32 {
            let slot = resolve_reg(new, i);
            self.regs[i as usize] = self.bank_slot(slot);
        }
    }

    /// Whole-status write (flags, preserved bits, and mode switch).
    pub fn set_cpsr_status(&mut self, s: FastStatus) {
        self.cpsr.n = s.n;
        self.cpsr.z = s.z;
        self.cpsr.c = s.c;
        self.cpsr.v = s.v;
        self.cpsr.rest = s.rest;
        self.set_mode(s.mode);
    }

    pub fn spsr_current(&self) -> Result<FastStatus, Fault> {
        self.spsr_of(self.cpsr.mode)
    }

    pub fn spsr_of(&self, mode: ProcessorMode) -> Result<FastStatus, Fault> {
        match mode.spsr_index() {
            Some(i) => Ok(self.spsr[i]),
            None => Err(Fault::Unpredictable(format!("SPSR read in mode {mode} which has none"))),
        }
    }

    pub fn set_spsr_of(&mut self, mode: ProcessorMode, v: FastStatus) -> Result<(), Fault> {
        match mode.spsr_index() {
            Some(i) => {
                self.spsr[i] = v;
                Ok(())
            }
            None => Err(Fault::Unpredictable(format!("SPSR write in mode {mode} which has none"))),
        }
    }

    fn view(&self) -> StateView {
        StateView { cpsr: self.cpsr.to_cpsr() }
    }
}

// ---------------------------------------------------------------------------
// Executable-form evaluation

fn eval(
    proc: &FastProcessor,
    exps: &[FastExp],
    id: lower::ExpId,
    args: &[u32],
    locals: &[u32; MAX_LOCALS],
) -> Result<u32, Fault> {
    Ok(match exps[id as usize] {
        FastExp::Const(v) => v,
        FastExp::Arg(s) => args[s as usize],
        FastExp::Local(s) => locals[s as usize],
        FastExp::Reg(idx, mode) => {
            let i = eval(proc, exps, idx, args, locals)?;
            assert!(i < 16, "register index {i} out of range");
            match mode {
                None => proc.reg(i),
                Some(m) => proc.reg_mode(m, i),
            }
        }
        FastExp::Cpsr => proc.cpsr.pack(),
        FastExp::Spsr(None) => proc.spsr_current()?.pack(),
        FastExp::Spsr(Some(m)) => proc.spsr_of(m)?.pack(),
        FastExp::Mem(addr, size) => {
            let a = eval(proc, exps, addr, args, locals)?;
            proc.mem.read(a, size)?
        }
        FastExp::Flag(f) => proc.cpsr.flag(f) as u32,
        FastExp::Binop(op, l, r) => {
            let a = eval(proc, exps, l, args, locals)?;
            match op {
                BinOp::LogAnd if a == 0 => 0,
                BinOp::LogOr if a != 0 => 1,
                _ => op.eval(a, eval(proc, exps, r, args, locals)?),
            }
        }
        FastExp::IfExp(c, t, f) => {
            if eval(proc, exps, c, args, locals)? != 0 {
                eval(proc, exps, t, args, locals)?
            } else {
                eval(proc, exps, f, args, locals)?
            }
        }
        FastExp::Call(b, ids) => {
            let mut vals = [0u32; 3];
            let arity = b.arity();
            for i in 0..arity {
                vals[i] = eval(proc, exps, ids[i], args, locals)?;
            }
            b.eval(&vals[..arity], &proc.view())?
        }
        FastExp::BitRange(inner, hi, lo) => {
            crate::bits::bit_range(eval(proc, exps, inner, args, locals)?, hi as u32, lo as u32)
        }
    })
}

fn exec_body(
    proc: &mut FastProcessor,
    exps: &[FastExp],
    body: &[FastStm],
    args: &[u32],
    locals: &mut [u32; MAX_LOCALS],
) -> Result<(), Fault> {
    for stm in body {
        exec_stm(proc, exps, stm, args, locals)?;
    }
    Ok(())
}

fn exec_stm(
    proc: &mut FastProcessor,
    exps: &[FastExp],
    stm: &FastStm,
    args: &[u32],
    locals: &mut [u32; MAX_LOCALS],
) -> Result<(), Fault> {
    match stm {
        FastStm::SetLocal(slot, e) => {
            locals[*slot as usize] = eval(proc, exps, *e, args, locals)?;
        }
        FastStm::SetRegOrPc(idx, mode, e) => {
            let i = eval(proc, exps, *idx, args, locals)?;
            assert!(i < 16, "register index {i} out of range");
            let v = eval(proc, exps, *e, args, locals)?;
            match mode {
                None => proc.set_reg_or_pc(i, v),
                Some(m) => proc.write_reg_mode(*m, i, v),
            }
        }
        FastStm::CopySpsrToCpsr => {
            let s = proc.spsr_current()?;
            proc.set_cpsr_status(s);
        }
        FastStm::SetCpsr(e) => {
            let v = eval(proc, exps, *e, args, locals)?;
            let c = Cpsr::unpack(v)
                .ok_or_else(|| Fault::Unpredictable(format!("malformed status word {v:#010x}")))?;
            proc.set_cpsr_status(FastStatus::from_cpsr(c));
        }
        FastStm::SetSpsr(mode, e) => {
            let v = eval(proc, exps, *e, args, locals)?;
            let c = Cpsr::unpack(v)
                .ok_or_else(|| Fault::Unpredictable(format!("malformed status word {v:#010x}")))?;
            let m = mode.unwrap_or(proc.cpsr.mode);
            proc.set_spsr_of(m, FastStatus::from_cpsr(c))?;
        }
        FastStm::SetFlag(f, e) => {
            let v = eval(proc, exps, *e, args, locals)?;
            proc.cpsr.set_flag(*f, (v & 1) as u8);
        }
        FastStm::SetRegBits(idx, mode, hi, lo, e) => {
            let i = eval(proc, exps, *idx, args, locals)?;
            assert!(i < 16);
            let v = eval(proc, exps, *e, args, locals)?;
            let old = match mode {
                None => proc.reg(i),
                Some(m) => proc.reg_mode(*m, i),
            };
            let new = crate::bits::set_bit_range(old, *hi as u32, *lo as u32, v);
            match mode {
                None => proc.set_reg_or_pc(i, new),
                Some(m) => proc.write_reg_mode(*m, i, new),
            }
        }
        FastStm::StoreMem(addr, size, e) => {
            let a = eval(proc, exps, *addr, args, locals)?;
            let v = eval(proc, exps, *e, args, locals)?;
            proc.mem.write(a, *size, v)?;
        }
        FastStm::If(cond, then, els) => {
            let branch = if eval(proc, exps, *cond, args, locals)? != 0 { then } else { els };
            exec_body(proc, exps, branch, args, locals)?;
        }
        FastStm::For(slot, min, max, body) => {
            for i in *min..=*max {
                locals[*slot as usize] = i;
                exec_body(proc, exps, body, args, locals)?;
            }
        }
        FastStm::Case(scrutinee, arms, default) => {
            let v = eval(proc, exps, *scrutinee, args, locals)?;
            let body = arms.iter().find(|(pat, _)| *pat == v).map(|(_, b)| b).unwrap_or(default);
            exec_body(proc, exps, body, args, locals)?;
        }
        FastStm::Unpredictable => {
            return Err(Fault::Unpredictable("explicit UNPREDICTABLE".into()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// The simulation loop

#[derive(Clone, Debug)]
struct CachedEntry {
    instr: DecodedInstr,
    ends: bool,
    spec: specialize::Specialized,
}

#[derive(Clone, Debug, Default)]
struct CachedBlock {
    entries: Vec<CachedEntry>,
    /// Some entry can write memory, so the cache may need invalidating
    /// mid-block.
    has_store: bool,
}

const MAX_BLOCK_LEN: usize = 64;

/// Fast engine driver: owns a processor, a catalog reference, and the
/// decoded-block cache.
pub struct Simulator<'c> {
    pub cat: &'c Catalog,
    pub proc: FastProcessor,
    /// Decode straight-line runs once and skip per-instruction branch
    /// checks inside them.
    pub block_opt: bool,
    blocks: HashMap<u32, Rc<CachedBlock>>,
    mem_epoch_seen: u64,
}

impl<'c> Simulator<'c> {
    pub fn new(cat: &'c Catalog, proc: FastProcessor) -> Simulator<'c> {
        let epoch = proc.mem.epoch();
        Simulator { cat, proc, block_opt: true, blocks: HashMap::new(), mem_epoch_seen: epoch }
    }

    /// Execute one already-decoded instruction against the processor,
    /// including the PC advance when no branch was taken. On a fault
    /// the processor freezes at the fault point.
    pub fn exec_decoded(&mut self, instr: &DecodedInstr) -> StepOutcome {
        exec_decoded(self.cat, &mut self.proc, instr)
    }

    /// Fetch, decode, and execute a single instruction.
    pub fn step(&mut self) -> StepOutcome {
        let fetch = self.proc.fetch_addr();
        if fetch & 3 != 0 {
            return StepOutcome::Unpredictable(format!(
                "misaligned instruction fetch at {fetch:#010x}"
            ));
        }
        let word = self.proc.mem.read(fetch, MemSize::Word).expect("aligned");
        match decoder::decode(self.cat, word) {
            Some(instr) => self.exec_decoded(&instr),
            None => StepOutcome::Undefined(word),
        }
    }

    /// Run up to `max_steps` instructions, stopping early on a fault or
    /// on the halt convention (branch-to-self executed twice).
    pub fn run(&mut self, max_steps: u64) -> RunReport {
        let start = Instant::now();
        let mut steps = 0u64;
        let mut halt = HaltDetector::default();
        let outcome = 'outer: loop {
            if steps >= max_steps {
                break RunOutcome::MaxSteps;
            }
            if self.proc.mem.epoch() != self.mem_epoch_seen {
                self.blocks.clear();
                self.mem_epoch_seen = self.proc.mem.epoch();
            }
            if !self.block_opt {
                let before = self.proc.fetch_addr();
                if let Some(stop) = RunOutcome::from_step(self.step()) {
                    break stop;
                }
                steps += 1;
                let now = self.proc.fetch_addr();
                if halt.observe(before, now != before.wrapping_add(4), now) {
                    break RunOutcome::Halted;
                }
                continue;
            }

            let fetch = self.proc.fetch_addr();
            if fetch & 3 != 0 {
                break RunOutcome::Unpredictable(format!(
                    "misaligned instruction fetch at {fetch:#010x}"
                ));
            }
            let block = match self.blocks.get(&fetch) {
                Some(b) => Rc::clone(b),
                None => {
                    let b = self.build_block(fetch);
                    self.blocks.insert(fetch, Rc::clone(&b));
                    b
                }
            };
            if block.entries.is_empty() {
                // first word does not decode; report through the slow path
                if let Some(stop) = RunOutcome::from_step(self.step()) {
                    break stop;
                }
                unreachable!("an empty block implies a faulting step");
            }
            for entry in &block.entries {
                if steps >= max_steps {
                    break 'outer RunOutcome::MaxSteps;
                }
                let before = self.proc.fetch_addr();
                let out = exec_with(
                    self.cat,
                    &mut self.proc,
                    &entry.instr,
                    &entry.spec.exps,
                    &entry.spec.body,
                );
                if let Some(stop) = RunOutcome::from_step(out) {
                    break 'outer stop;
                }
                steps += 1;
                let now = self.proc.fetch_addr();
                debug_assert!(entry.ends || now == before.wrapping_add(4));
                if halt.observe(before, now != before.wrapping_add(4), now) {
                    break 'outer RunOutcome::Halted;
                }
                if block.has_store && self.proc.mem.epoch() != self.mem_epoch_seen {
                    // the block just wrote memory; drop caches and refetch
                    continue 'outer;
                }
            }
        };
        RunReport { steps, outcome, wall: start.elapsed() }
    }

    /// Decode a straight-line run starting at `start`, up to and
    /// including the first instruction that may branch.
    fn build_block(&self, start: u32) -> Rc<CachedBlock> {
        let mut entries = Vec::new();
        let mut has_store = false;
        let mut addr = start;
        while entries.len() < MAX_BLOCK_LEN {
            let Ok(word) = self.proc.mem.read(addr, MemSize::Word) else { break };
            let Some(instr) = decoder::decode(self.cat, word) else { break };
            let lop = self.cat.get(instr.op as usize);
            // branchiness depends only on field arguments, never on the
            // shifter operand (checked at catalog load)
            let args = decoder::bind_args(lop, &instr.fields, (0, 0));
            let ends = lop.exe.may_branch(&args);
            has_store |= lop.exe.may_store;
            let known: Vec<Option<u32>> = lop
                .arg_sources
                .iter()
                .map(|src| match src {
                    ArgSource::Field(ix) => Some(instr.fields[*ix as usize]),
                    ArgSource::ShifterValue | ArgSource::ShifterCarry => None,
                })
                .collect();
            let spec = specialize::specialize(&lop.exe, &known);
            entries.push(CachedEntry { instr, ends, spec });
            addr = addr.wrapping_add(4);
            if ends || addr & 3 != 0 {
                break;
            }
        }
        Rc::new(CachedBlock { entries, has_store })
    }
}

/// One-instruction execution against a processor (shared by the step
/// path and the harness, which injects instructions directly).
pub fn exec_decoded(cat: &Catalog, proc: &mut FastProcessor, instr: &DecodedInstr) -> StepOutcome {
    let lop: &LoadedOp = cat.get(instr.op as usize);
    exec_with(cat, proc, instr, &lop.exe.exps, &lop.exe.body)
}

/// Execute one decoded instruction through a given arena and body (the
/// generic lowered form, or a block-cache specialization of it).
fn exec_with(
    cat: &Catalog,
    proc: &mut FastProcessor,
    instr: &DecodedInstr,
    exps: &[FastExp],
    body: &[FastStm],
) -> StepOutcome {
    let lop: &LoadedOp = cat.get(instr.op as usize);
    let shifter = match instr.shifter {
        Some(d) => {
            shifter::compute(d, |r| proc.reg(r as u32), proc.cpsr.c as u32)
        }
        None => (0, 0),
    };
    let mut args = [0u32; MAX_PARAMS];
    for (i, src) in lop.arg_sources.iter().enumerate() {
        args[i] = match src {
            ArgSource::Field(ix) => instr.fields[*ix as usize],
            ArgSource::ShifterValue => shifter.0,
            ArgSource::ShifterCarry => shifter.1,
        };
    }
    let args = &args[..lop.arg_sources.len()];
    if cfg!(debug_assertions) {
        for ((name, kind), &v) in lop.exe.params.iter().zip(args) {
            debug_assert!(v <= kind.max_value(), "{}: argument `{name}` out of range", lop.exe.name);
        }
    }
    proc.branch_taken = false;
    let mut locals = [0u32; MAX_LOCALS];
    match exec_body(proc, exps, body, args, &mut locals) {
        Ok(()) => {
            if proc.branch_taken {
                proc.branch_taken = false;
            } else {
                self_advance(proc);
            }
            StepOutcome::Ok
        }
        Err(f) => {
            // freeze at the fault point: no rollback, no PC advance
            proc.branch_taken = false;
            f.into()
        }
    }
}

fn self_advance(proc: &mut FastProcessor) {
    proc.regs[15] = proc.regs[15].wrapping_add(4);
}

/// Run a lowered operation body against a processor with bound
/// arguments (slot order = parameter order).
///
/// This is the raw callable form of an [`lower::ExecutableOp`]: no fetch, no
/// PC advance — exactly the operation body, as
/// [`crate::ref_engine::run_operation`] executes it on the reference
/// state. On a fault the processor freezes at the fault point.
pub fn exec_lowered(
    proc: &mut FastProcessor,
    exe: &lower::ExecutableOp,
    args: &[u32],
) -> Result<(), Fault> {
    assert_eq!(args.len(), exe.params.len(), "{}: argument count", exe.name);
    for ((name, kind), &v) in exe.params.iter().zip(args) {
        assert!(v <= kind.max_value(), "{}: argument `{name}` out of range", exe.name);
    }
    proc.branch_taken = false;
    let mut locals = [0u32; MAX_LOCALS];
    let r = exec_body(proc, &exe.exps, &exe.body, args, &mut locals);
    proc.branch_taken = false;
    r
}

/// Evaluate a condition field against the processor's flags through
/// the engine's own expression path. Takes a shared reference, so the
/// evaluation cannot touch state.
pub fn eval_condition(proc: &FastProcessor, cond: u32) -> Result<bool, Fault> {
    let exps = [
        FastExp::Const(cond),
        FastExp::Call(crate::builtins::Builtin::ConditionPassed, [0, 0, 0]),
    ];
    eval(proc, &exps, 1, &[], &[0; MAX_LOCALS]).map(|v| v != 0)
}

/// Evaluate a standalone lowered expression arena without mutating
/// anything.
pub fn eval_pure(proc: &FastProcessor, exps: &[FastExp], root: lower::ExpId) -> Result<u32, Fault> {
    eval(proc, exps, root, &[], &[0; MAX_LOCALS])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fast::project::project;
    use crate::state::RefState;

    fn cat() -> &'static Catalog {
        Catalog::bundled()
    }

    #[test]
    fn set_reg_or_pc_examples() {
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(3, 7);
        assert_eq!(p.reg(3), 7);
        assert!(!p.branch_taken);
        p.set_reg_or_pc(15, 0x40);
        assert_eq!(p.fetch_addr(), 0x40);
        assert!(p.branch_taken);
        p.set_reg_or_pc(15, 0x80);
        assert_eq!(p.fetch_addr(), 0x80, "last write wins");
    }

    #[test]
    fn pc_alias_reads_agree() {
        let mut p = FastProcessor::new();
        p.set_next_fetch(0x200);
        assert_eq!(p.pc(), p.reg(15));
        assert_eq!(p.pc(), 0x208);
    }

    #[test]
    fn adc_step_adds_registers() {
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(0, 2);
        p.set_reg_or_pc(1, 3);
        p.mem.write(0, MemSize::Word, 0xE0A0_0001).unwrap(); // ADC r0, r0, r1
        let mut sim = Simulator::new(cat(), p);
        assert_eq!(sim.step(), StepOutcome::Ok);
        assert_eq!(sim.proc.reg(0), 5);
        assert_eq!(sim.proc.fetch_addr(), 4);
    }

    #[test]
    fn undecodable_word_is_undefined() {
        let mut p = FastProcessor::new();
        p.mem.write(0, MemSize::Word, 0xE7F0_00F0).unwrap();
        let mut sim = Simulator::new(cat(), p);
        assert_eq!(sim.step(), StepOutcome::Undefined(0xE7F0_00F0));
        assert_eq!(sim.proc.fetch_addr(), 0, "frozen at the fault");
    }

    #[test]
    fn unpredictable_freezes_processor() {
        // ADCS r15, r0, r1 in usr mode
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(1, 3);
        p.mem.write(0, MemSize::Word, 0xE0B0_F001).unwrap();
        let mut sim = Simulator::new(cat(), p);
        let before_regs = sim.proc.regs;
        match sim.step() {
            StepOutcome::Unpredictable(_) => {}
            other => panic!("expected unpredictable, got {other:?}"),
        }
        // the destination write landed before the fault; the PC then froze
        assert_ne!(sim.proc.regs, before_regs);
        assert_eq!(sim.proc.fetch_addr(), 3, "pc holds the faulting write");
    }

    #[test]
    fn run_zero_steps() {
        let mut sim = Simulator::new(cat(), FastProcessor::new());
        let r = sim.run(0);
        assert_eq!(r.steps, 0);
        assert_eq!(r.outcome, RunOutcome::MaxSteps);
    }

    #[test]
    fn fresh_projection_matches_fresh_state() {
        assert_eq!(project(&FastProcessor::new()), RefState::new());
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(3, 7);
        assert_eq!(project(&p), RefState::new().set_reg(3, 7));
    }

    #[test]
    fn mode_switch_swaps_banks() {
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(13, 0x1111);
        p.set_mode(ProcessorMode::Svc);
        assert_eq!(p.reg(13), 0, "svc r13 starts empty");
        p.set_reg_or_pc(13, 0x2222);
        p.set_mode(ProcessorMode::Usr);
        assert_eq!(p.reg(13), 0x1111);
        assert_eq!(p.read_phys(PhysReg { bank: Bank::Svc, index: 13 }), 0x2222);
        // projection sees both banks
        let st = project(&p);
        assert_eq!(st.reg_content_mode(ProcessorMode::Svc, 13), 0x2222);
        assert_eq!(st.reg_content_mode(ProcessorMode::Usr, 13), 0x1111);
    }

    #[test]
    fn specialized_bodies_match_generic_execution() {
        // drive the specializer the way the block cache does, against
        // the generic path, per instruction over random states
        use crate::harness;
        use rand::SeedableRng;
        let cat = cat();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5BEC);
        for seed in 0..2_000u64 {
            let instr = harness::random_instr(cat, &mut rng);
            let lop = cat.get(instr.op as usize);
            let known: Vec<Option<u32>> = lop
                .arg_sources
                .iter()
                .map(|src| match src {
                    ArgSource::Field(ix) => Some(instr.fields[*ix as usize]),
                    _ => None,
                })
                .collect();
            let spec = specialize::specialize(&lop.exe, &known);
            let (_, proc) = harness::random_state(seed);
            let mut generic = proc.clone();
            let mut specialized = proc;
            let a = exec_decoded(cat, &mut generic, &instr);
            let b = exec_with(cat, &mut specialized, &instr, &spec.exps, &spec.body);
            assert_eq!(
                std::mem::discriminant(&a),
                std::mem::discriminant(&b),
                "seed {seed} {}: {a:?} vs {b:?}",
                lop.spec.name
            );
            if a == StepOutcome::Ok {
                assert_eq!(
                    crate::fast::project::project(&generic),
                    crate::fast::project::project(&specialized),
                    "seed {seed} {}",
                    lop.spec.name
                );
            }
        }
    }

    #[test]
    fn flag_bytes_stay_binary_after_steps() {
        let mut p = FastProcessor::new();
        p.set_reg_or_pc(0, u32::MAX);
        p.set_reg_or_pc(1, u32::MAX);
        // ADDS r0, r0, r1 then ANDEQS-style flag churn
        p.mem.write(0, MemSize::Word, 0xE090_0001).unwrap();
        p.mem.write(4, MemSize::Word, 0xE0B0_0001).unwrap(); // ADCS
        let mut sim = Simulator::new(cat(), p);
        for _ in 0..2 {
            assert_eq!(sim.step(), StepOutcome::Ok);
            for f in [FlagId::N, FlagId::Z, FlagId::C, FlagId::V] {
                assert!(sim.proc.cpsr.flag(f) <= 1);
            }
        }
    }
}
