//! Processor state for the reference model: CPSR, banked registers,
//! sparse memory, and the result type threaded through operation bodies.

use std::collections::BTreeMap;
use std::fmt;

/// ARM processor modes. `usr` and `sys` share the user register bank
/// and have no SPSR; the five exception modes each bank some registers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProcessorMode {
    Usr,
    Fiq,
    Irq,
    Svc,
    Abt,
    Und,
    Sys,
}

pub const ALL_MODES: [ProcessorMode; 7] = [
    ProcessorMode::Usr,
    ProcessorMode::Fiq,
    ProcessorMode::Irq,
    ProcessorMode::Svc,
    ProcessorMode::Abt,
    ProcessorMode::Und,
    ProcessorMode::Sys,
];

/// Exception modes, i.e. the modes that own an SPSR, in SPSR-bank order.
pub const EXCEPTION_MODES: [ProcessorMode; 5] = [
    ProcessorMode::Fiq,
    ProcessorMode::Irq,
    ProcessorMode::Svc,
    ProcessorMode::Abt,
    ProcessorMode::Und,
];

impl ProcessorMode {
    /// Standard mode encoding for CPSR bits 4..0.
    pub fn bits(self) -> u32 {
        match self {
            ProcessorMode::Usr => 0b10000,
            ProcessorMode::Fiq => 0b10001,
            ProcessorMode::Irq => 0b10010,
            ProcessorMode::Svc => 0b10011,
            ProcessorMode::Abt => 0b10111,
            ProcessorMode::Und => 0b11011,
            ProcessorMode::Sys => 0b11111,
        }
    }

    /// Decode CPSR bits 4..0; any pattern outside the seven defined
    /// modes is malformed state.
    pub fn from_bits(bits: u32) -> Option<ProcessorMode> {
        Some(match bits & 0x1F {
            0b10000 => ProcessorMode::Usr,
            0b10001 => ProcessorMode::Fiq,
            0b10010 => ProcessorMode::Irq,
            0b10011 => ProcessorMode::Svc,
            0b10111 => ProcessorMode::Abt,
            0b11011 => ProcessorMode::Und,
            0b11111 => ProcessorMode::Sys,
            _ => return None,
        })
    }

    pub fn has_spsr(self) -> bool {
        !matches!(self, ProcessorMode::Usr | ProcessorMode::Sys)
    }

    /// Index into the SPSR bank for exception modes.
    pub fn spsr_index(self) -> Option<usize> {
        EXCEPTION_MODES.iter().position(|&m| m == self)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProcessorMode::Usr => "usr",
            ProcessorMode::Fiq => "fiq",
            ProcessorMode::Irq => "irq",
            ProcessorMode::Svc => "svc",
            ProcessorMode::Abt => "abt",
            ProcessorMode::Und => "und",
            ProcessorMode::Sys => "sys",
        }
    }

    pub fn from_name(name: &str) -> Option<ProcessorMode> {
        ALL_MODES.iter().copied().find(|m| m.name() == name)
    }
}

impl fmt::Display for ProcessorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Current program status register, kept in unpacked form.
///
/// `rest` holds every CPSR bit outside N/Z/C/V and the mode field,
/// preserved verbatim across pack/unpack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cpsr {
    pub n: bool,
    pub z: bool,
    pub c: bool,
    pub v: bool,
    pub mode: ProcessorMode,
    pub rest: u32,
}

/// Mask of the CPSR bits held in `Cpsr::rest` (everything but flags and mode).
pub const CPSR_REST_MASK: u32 = 0x0FFF_FFE0;

impl Default for Cpsr {
    fn default() -> Self {
        Cpsr { n: false, z: false, c: false, v: false, mode: ProcessorMode::Usr, rest: 0 }
    }
}

impl Cpsr {
    pub fn pack(&self) -> u32 {
        (u32::from(self.n) << 31)
            | (u32::from(self.z) << 30)
            | (u32::from(self.c) << 29)
            | (u32::from(self.v) << 28)
            | (self.rest & CPSR_REST_MASK)
            | self.mode.bits()
    }

    /// Inverse of [`pack`](Self::pack). Fails on malformed mode bits.
    pub fn unpack(w: u32) -> Option<Cpsr> {
        Some(Cpsr {
            n: w & (1 << 31) != 0,
            z: w & (1 << 30) != 0,
            c: w & (1 << 29) != 0,
            v: w & (1 << 28) != 0,
            mode: ProcessorMode::from_bits(w)?,
            rest: w & CPSR_REST_MASK,
        })
    }

    pub fn flag(&self, f: FlagId) -> bool {
        match f {
            FlagId::N => self.n,
            FlagId::Z => self.z,
            FlagId::C => self.c,
            FlagId::V => self.v,
        }
    }

    pub fn set_flag(&mut self, f: FlagId, v: bool) {
        match f {
            FlagId::N => self.n = v,
            FlagId::Z => self.z = v,
            FlagId::C => self.c = v,
            FlagId::V => self.v = v,
        }
    }
}

/// The four condition flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlagId {
    N,
    Z,
    C,
    V,
}

pub const ALL_FLAGS: [FlagId; 4] = [FlagId::N, FlagId::Z, FlagId::C, FlagId::V];

impl FlagId {
    pub fn name(self) -> &'static str {
        match self {
            FlagId::N => "N",
            FlagId::Z => "Z",
            FlagId::C => "C",
            FlagId::V => "V",
        }
    }
}

/// Memory access width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MemSize {
    Byte,
    Half,
    Word,
}

impl MemSize {
    pub fn bytes(self) -> u32 {
        match self {
            MemSize::Byte => 1,
            MemSize::Half => 2,
            MemSize::Word => 4,
        }
    }
}

/// Failure outcomes of running an operation. Once raised, sequencing
/// stops and the fault propagates to the caller.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Fault {
    Unpredictable(String),
    NotImplemented(String),
}

impl Fault {
    pub fn message(&self) -> &str {
        match self {
            Fault::Unpredictable(m) | Fault::NotImplemented(m) => m,
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::Unpredictable(m) => write!(f, "UNPREDICTABLE: {m}"),
            Fault::NotImplemented(m) => write!(f, "not implemented: {m}"),
        }
    }
}

/// Banked register file.
///
/// `usr` holds the user-bank registers r0..r15 (r0..r7 and r15 are shared
/// by every mode); the per-mode arrays overlay r8..r14 (fiq) or r13..r14
/// (the other exception modes).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RegisterFile {
    pub usr: [u32; 16],
    pub fiq: [u32; 7],
    pub irq: [u32; 2],
    pub svc: [u32; 2],
    pub abt: [u32; 2],
    pub und: [u32; 2],
}

/// A physical register slot: the bank plus the architectural index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PhysReg {
    pub bank: Bank,
    pub index: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bank {
    Usr,
    Fiq,
    Irq,
    Svc,
    Abt,
    Und,
}

impl fmt::Display for PhysReg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bank {
            Bank::Usr => write!(f, "r{}", self.index),
            Bank::Fiq => write!(f, "r{}_fiq", self.index),
            Bank::Irq => write!(f, "r{}_irq", self.index),
            Bank::Svc => write!(f, "r{}_svc", self.index),
            Bank::Abt => write!(f, "r{}_abt", self.index),
            Bank::Und => write!(f, "r{}_und", self.index),
        }
    }
}

/// Every physical register slot, in diff/report order.
pub fn all_phys_regs() -> Vec<PhysReg> {
    let mut v: Vec<PhysReg> =
        (0..16).map(|i| PhysReg { bank: Bank::Usr, index: i }).collect();
    v.extend((8..15).map(|i| PhysReg { bank: Bank::Fiq, index: i }));
    for bank in [Bank::Irq, Bank::Svc, Bank::Abt, Bank::Und] {
        v.extend((13..15).map(|i| PhysReg { bank, index: i }));
    }
    v
}

/// Resolve (mode, architectural index) to the physical slot that backs it.
pub fn resolve_reg(mode: ProcessorMode, n: u32) -> PhysReg {
    debug_assert!(n < 16);
    let n = n as u8;
    let bank = match n {
        8..=12 if mode == ProcessorMode::Fiq => Bank::Fiq,
        13 | 14 => match mode {
            ProcessorMode::Usr | ProcessorMode::Sys => Bank::Usr,
            ProcessorMode::Fiq => Bank::Fiq,
            ProcessorMode::Irq => Bank::Irq,
            ProcessorMode::Svc => Bank::Svc,
            ProcessorMode::Abt => Bank::Abt,
            ProcessorMode::Und => Bank::Und,
        },
        _ => Bank::Usr,
    };
    PhysReg { bank, index: n }
}

impl RegisterFile {
    pub fn get_phys(&self, r: PhysReg) -> u32 {
        let i = r.index as usize;
        match r.bank {
            Bank::Usr => self.usr[i],
            Bank::Fiq => self.fiq[i - 8],
            Bank::Irq => self.irq[i - 13],
            Bank::Svc => self.svc[i - 13],
            Bank::Abt => self.abt[i - 13],
            Bank::Und => self.und[i - 13],
        }
    }

    pub fn set_phys(&mut self, r: PhysReg, v: u32) {
        let i = r.index as usize;
        match r.bank {
            Bank::Usr => self.usr[i] = v,
            Bank::Fiq => self.fiq[i - 8] = v,
            Bank::Irq => self.irq[i - 13] = v,
            Bank::Svc => self.svc[i - 13] = v,
            Bank::Abt => self.abt[i - 13] = v,
            Bank::Und => self.und[i - 13] = v,
        }
    }
}

/// Pure-functional processor state: the reference model both engines
/// are compared against.
///
/// Register 15 stores the address of the current (or next-to-fetch)
/// instruction; reads through [`reg_content`](Self::reg_content) apply
/// the pipeline-visible +8 offset. Memory is a sparse byte map; a byte
/// that was never written reads as 0, and zero bytes are kept out of
/// the map so structural equality is semantic equality.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RefState {
    pub cpsr: Cpsr,
    pub spsr: [Cpsr; 5],
    pub regs: RegisterFile,
    pub mem: BTreeMap<u32, u8>,
}

impl RefState {
    pub fn new() -> RefState {
        RefState::default()
    }

    /// Raw stored r15: the address of the next instruction to fetch.
    pub fn pc(&self) -> u32 {
        self.regs.usr[15]
    }

    /// Read register `n` in the current mode; `n = 15` yields PC + 8.
    pub fn reg_content(&self, n: u32) -> u32 {
        self.reg_content_mode(self.cpsr.mode, n)
    }

    /// Read register `n` in an explicit mode.
    pub fn reg_content_mode(&self, mode: ProcessorMode, n: u32) -> u32 {
        assert!(n < 16, "register index {n} out of range");
        let raw = self.regs.get_phys(resolve_reg(mode, n));
        if n == 15 {
            raw.wrapping_add(8)
        } else {
            raw
        }
    }

    /// Write register `n` in the current mode. Writing r15 stores the
    /// branch target directly (no +8 adjustment); callers tracking the
    /// PC-increment flag must clear it.
    pub fn set_reg(mut self, n: u32, v: u32) -> RefState {
        self.set_reg_in_place(self.cpsr.mode, n, v);
        self
    }

    pub fn set_reg_mode(mut self, mode: ProcessorMode, n: u32, v: u32) -> RefState {
        self.set_reg_in_place(mode, n, v);
        self
    }

    fn set_reg_in_place(&mut self, mode: ProcessorMode, n: u32, v: u32) {
        assert!(n < 16, "register index {n} out of range");
        self.regs.set_phys(resolve_reg(mode, n), v);
    }

    pub fn current_mode_has_spsr(&self) -> bool {
        self.cpsr.mode.has_spsr()
    }

    /// SPSR of the current mode, or a fault in usr/sys.
    pub fn spsr(&self) -> Result<Cpsr, Fault> {
        self.spsr_of(self.cpsr.mode)
    }

    pub fn spsr_of(&self, mode: ProcessorMode) -> Result<Cpsr, Fault> {
        match mode.spsr_index() {
            Some(i) => Ok(self.spsr[i]),
            None => Err(Fault::Unpredictable(format!("SPSR read in mode {mode} which has none"))),
        }
    }

    pub fn set_spsr_of(&mut self, mode: ProcessorMode, v: Cpsr) -> Result<(), Fault> {
        match mode.spsr_index() {
            Some(i) => {
                self.spsr[i] = v;
                Ok(())
            }
            None => Err(Fault::Unpredictable(format!("SPSR write in mode {mode} which has none"))),
        }
    }

    fn read_byte(&self, addr: u32) -> u8 {
        self.mem.get(&addr).copied().unwrap_or(0)
    }

    fn write_byte(&mut self, addr: u32, v: u8) {
        if v == 0 {
            self.mem.remove(&addr);
        } else {
            self.mem.insert(addr, v);
        }
    }

    /// Little-endian load. Misaligned half/word accesses fault.
    pub fn mem_read(&self, addr: u32, size: MemSize) -> Result<u32, Fault> {
        check_alignment(addr, size, "read")?;
        let mut v = 0u32;
        for i in 0..size.bytes() {
            v |= (self.read_byte(addr.wrapping_add(i)) as u32) << (8 * i);
        }
        Ok(v)
    }

    /// Little-endian store, symmetric to [`mem_read`](Self::mem_read).
    pub fn mem_write(mut self, addr: u32, size: MemSize, v: u32) -> Result<RefState, Fault> {
        check_alignment(addr, size, "write")?;
        for i in 0..size.bytes() {
            self.write_byte(addr.wrapping_add(i), (v >> (8 * i)) as u8);
        }
        Ok(self)
    }

    /// Copy raw bytes into memory starting at `base` (image loading).
    pub fn load_bytes(&mut self, base: u32, bytes: &[u8]) {
        for (i, &b) in bytes.iter().enumerate() {
            self.write_byte(base.wrapping_add(i as u32), b);
        }
    }
}

pub(crate) fn check_alignment(addr: u32, size: MemSize, what: &str) -> Result<(), Fault> {
    let misaligned = match size {
        MemSize::Byte => false,
        MemSize::Half => addr & 1 != 0,
        MemSize::Word => addr & 3 != 0,
    };
    if misaligned {
        let kind = if size == MemSize::Half { "half-word" } else { "word" };
        Err(Fault::Unpredictable(format!("misaligned {kind} {what} at {addr:#010x}")))
    } else {
        Ok(())
    }
}

/// Monadic state threaded through an operation body: locals, the
/// PC-increment flag `bo`, and the processor state.
///
/// `bo` starts true and is cleared exactly when the body writes r15.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemState {
    pub loc: std::collections::HashMap<String, u32>,
    pub bo: bool,
    pub st: RefState,
}

impl SemState {
    pub fn new(st: RefState) -> SemState {
        SemState { loc: Default::default(), bo: true, st }
    }
}

/// Outcome of an operation: `Ok` carries the updated [`SemState`];
/// faults short-circuit the rest of the body.
pub type SemResult = Result<SemState, Fault>;
