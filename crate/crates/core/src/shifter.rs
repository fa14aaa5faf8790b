//! Addressing-mode-1 shifter operand: the second operand of every
//! data-processing instruction, producing a value and a carry-out.

use crate::state::RefState;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShiftKind {
    Lsl,
    Lsr,
    Asr,
    Ror,
}

pub const ALL_SHIFTS: [ShiftKind; 4] = [ShiftKind::Lsl, ShiftKind::Lsr, ShiftKind::Asr, ShiftKind::Ror];

impl ShiftKind {
    pub fn bits(self) -> u32 {
        match self {
            ShiftKind::Lsl => 0,
            ShiftKind::Lsr => 1,
            ShiftKind::Asr => 2,
            ShiftKind::Ror => 3,
        }
    }

    pub fn from_bits(b: u32) -> ShiftKind {
        match b & 3 {
            0 => ShiftKind::Lsl,
            1 => ShiftKind::Lsr,
            2 => ShiftKind::Asr,
            _ => ShiftKind::Ror,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ShiftKind::Lsl => "LSL",
            ShiftKind::Lsr => "LSR",
            ShiftKind::Asr => "ASR",
            ShiftKind::Ror => "ROR",
        }
    }

    pub fn from_name(s: &str) -> Option<ShiftKind> {
        ALL_SHIFTS.into_iter().find(|k| k.name() == s)
    }
}

/// Decoded form of addressing mode 1.
///
/// `amount` in `ShiftImm` is the raw 5-bit field: 0 encodes a shift of
/// 32 for LSR and ASR. The encodings LSL #0 and ROR #0 decode to
/// `Register` and `Rrx`, so those `ShiftImm` combinations never come
/// out of the decoder (the semantics below still give them a meaning).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShifterDescriptor {
    /// 8-bit immediate rotated right by `2 * rotate`.
    Immediate { rotate: u8, imm8: u8 },
    /// Plain register operand (LSL #0).
    Register { m: u8 },
    ShiftImm { m: u8, shift: ShiftKind, amount: u8 },
    /// Shift by the low byte of register `s`.
    ShiftReg { m: u8, shift: ShiftKind, s: u8 },
    /// Rotate right with extend: C flag shifts into bit 31.
    Rrx { m: u8 },
}

fn bit(w: u32, i: u32) -> u32 {
    (w >> i) & 1
}

/// Shift `rm` by an immediate amount 1..=32, returning value and carry-out.
fn shift_by(kind: ShiftKind, rm: u32, amount: u32) -> (u32, u32) {
    debug_assert!((1..=32).contains(&amount));
    match kind {
        ShiftKind::Lsl => {
            if amount == 32 {
                (0, rm & 1)
            } else {
                (rm << amount, bit(rm, 32 - amount))
            }
        }
        ShiftKind::Lsr => {
            if amount == 32 {
                (0, bit(rm, 31))
            } else {
                (rm >> amount, bit(rm, amount - 1))
            }
        }
        ShiftKind::Asr => {
            if amount == 32 {
                (((rm as i32) >> 31) as u32, bit(rm, 31))
            } else {
                (((rm as i32) >> amount) as u32, bit(rm, amount - 1))
            }
        }
        ShiftKind::Ror => {
            let k = amount & 31;
            if k == 0 {
                // pure multiple of 32: value unchanged, carry = bit 31
                (rm, bit(rm, 31))
            } else {
                (rm.rotate_right(k), bit(rm, k - 1))
            }
        }
    }
}

/// Compute the shifter operand from register values.
///
/// `read_reg` supplies register contents (with the PC read rule already
/// applied); `c` is the current carry flag. Total for every descriptor.
pub fn compute<F: Fn(u8) -> u32>(desc: ShifterDescriptor, read_reg: F, c: u32) -> (u32, u32) {
    debug_assert!(c <= 1);
    match desc {
        ShifterDescriptor::Immediate { rotate, imm8 } => {
            let value = (imm8 as u32).rotate_right(2 * rotate as u32);
            let carry = if rotate == 0 { c } else { bit(value, 31) };
            (value, carry)
        }
        ShifterDescriptor::Register { m } => (read_reg(m), c),
        ShifterDescriptor::ShiftImm { m, shift, amount } => {
            let rm = read_reg(m);
            match (shift, amount) {
                (ShiftKind::Lsl, 0) => (rm, c),
                (ShiftKind::Ror, 0) => rrx(rm, c),
                // LSR/ASR: the zero encoding means a shift of 32
                (_, 0) => shift_by(shift, rm, 32),
                (_, k) => shift_by(shift, rm, k as u32),
            }
        }
        ShifterDescriptor::ShiftReg { m, shift, s } => {
            let rm = read_reg(m);
            let amount = read_reg(s) & 0xFF;
            if amount == 0 {
                (rm, c)
            } else {
                match shift {
                    ShiftKind::Lsl | ShiftKind::Lsr if amount > 32 => (0, 0),
                    ShiftKind::Asr if amount > 32 => shift_by(shift, rm, 32),
                    ShiftKind::Ror => {
                        let k = amount & 31;
                        if k == 0 {
                            (rm, bit(rm, 31))
                        } else {
                            shift_by(shift, rm, k)
                        }
                    }
                    _ => shift_by(shift, rm, amount),
                }
            }
        }
        ShifterDescriptor::Rrx { m } => rrx(read_reg(m), c),
    }
}

fn rrx(rm: u32, c: u32) -> (u32, u32) {
    ((c << 31) | (rm >> 1), rm & 1)
}

/// Convenience wrapper reading operands from a [`RefState`].
pub fn compute_shifter_operand(desc: ShifterDescriptor, st: &RefState) -> (u32, u32) {
    compute(desc, |r| st.reg_content(r as u32), u32::from(st.cpsr.c))
}

impl std::fmt::Display for ShifterDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShifterDescriptor::Immediate { rotate, imm8 } => write!(f, "#{imm8} ROR {}", 2 * rotate),
            ShifterDescriptor::Register { m } => write!(f, "r{m}"),
            ShifterDescriptor::ShiftImm { m, shift, amount } => {
                write!(f, "r{m} {} #{amount}", shift.name())
            }
            ShifterDescriptor::ShiftReg { m, shift, s } => write!(f, "r{m} {} r{s}", shift.name()),
            ShifterDescriptor::Rrx { m } => write!(f, "r{m} RRX"),
        }
    }
}
