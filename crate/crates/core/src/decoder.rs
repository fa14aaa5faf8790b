//! Instruction word decoding against the catalog's encoding patterns,
//! and the inverse encoder used for test generation.

use std::collections::HashMap;

use crate::catalog::{ArgSource, Catalog, LoadedOp};
use crate::shifter::{ShiftKind, ShifterDescriptor};
use crate::state::RefState;

/// A decoded instruction: catalog index, extracted field values (in
/// the pattern's field order), and the shifter operand descriptor for
/// data-processing encodings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodedInstr {
    pub op: u16,
    pub fields: Vec<u32>,
    pub shifter: Option<ShifterDescriptor>,
}

impl DecodedInstr {
    pub fn mnemonic<'c>(&self, cat: &'c Catalog) -> &'c str {
        &cat.get(self.op as usize).spec.name
    }

    pub fn field(&self, cat: &Catalog, name: &str) -> Option<u32> {
        let (ix, _) = cat.get(self.op as usize).spec.pattern.field(name)?;
        self.fields.get(ix).copied()
    }

    /// Bind the operation's parameters by name, computing the shifter
    /// operand against a reference state.
    pub fn arg_map(&self, cat: &Catalog, st: &RefState) -> HashMap<String, u32> {
        let lop = cat.get(self.op as usize);
        let shifter = self
            .shifter
            .map(|d| crate::shifter::compute_shifter_operand(d, st))
            .unwrap_or((0, 0));
        bind_args(lop, &self.fields, shifter)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (lop.exe.params[i].0.clone(), v))
            .collect()
    }
}

/// Argument vector in parameter-slot order.
pub fn bind_args(lop: &LoadedOp, fields: &[u32], shifter: (u32, u32)) -> Vec<u32> {
    lop.arg_sources
        .iter()
        .map(|src| match src {
            ArgSource::Field(ix) => fields[*ix as usize],
            ArgSource::ShifterValue => shifter.0,
            ArgSource::ShifterCarry => shifter.1,
        })
        .collect()
}

/// The multiply and extra-load-store space: bits 27..25 = 000 with
/// bits 7 and 4 both set. No catalog pattern may claim these words.
fn in_multiply_space(w: u32) -> bool {
    w & 0x0E00_0000 == 0 && w & 0x90 == 0x90
}

/// Decode one word. Returns `None` when no catalog pattern matches.
pub fn decode(cat: &Catalog, w: u32) -> Option<DecodedInstr> {
    if in_multiply_space(w) {
        return None;
    }
    for (ix, op) in cat.match_order() {
        if op.spec.pattern.matches(w) {
            let fields = op.spec.pattern.fields.iter().map(|f| f.extract(w)).collect();
            let shifter = op.spec.has_shifter.then(|| decode_shifter(w));
            return Some(DecodedInstr { op: ix as u16, fields, shifter });
        }
    }
    None
}

fn decode_shifter(w: u32) -> ShifterDescriptor {
    let m = (w & 0xF) as u8;
    if w & (1 << 25) != 0 {
        ShifterDescriptor::Immediate { rotate: ((w >> 8) & 0xF) as u8, imm8: (w & 0xFF) as u8 }
    } else if w & (1 << 4) == 0 {
        let amount = ((w >> 7) & 0x1F) as u8;
        let shift = ShiftKind::from_bits((w >> 5) & 3);
        match (shift, amount) {
            (ShiftKind::Lsl, 0) => ShifterDescriptor::Register { m },
            (ShiftKind::Ror, 0) => ShifterDescriptor::Rrx { m },
            _ => ShifterDescriptor::ShiftImm { m, shift, amount },
        }
    } else {
        // bit 7 is clear here: words with bits 7 and 4 both set were
        // filtered out as multiply-space encodings
        ShifterDescriptor::ShiftReg {
            m,
            shift: ShiftKind::from_bits((w >> 5) & 3),
            s: ((w >> 8) & 0xF) as u8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot encode field `{field}`: {msg}")]
pub struct EncodeError {
    pub field: String,
    pub msg: String,
}

fn enc_err<T>(field: &str, msg: impl Into<String>) -> Result<T, EncodeError> {
    Err(EncodeError { field: field.to_string(), msg: msg.into() })
}

/// Encode a decoded instruction back to its word. Inverse of
/// [`decode`] on canonical instructions.
pub fn encode(cat: &Catalog, instr: &DecodedInstr) -> Result<u32, EncodeError> {
    let lop = cat.get(instr.op as usize);
    let pattern = &lop.spec.pattern;
    if instr.fields.len() != pattern.fields.len() {
        return enc_err("fields", "field count does not match the pattern");
    }
    let mut w = pattern.value;
    for (f, &v) in pattern.fields.iter().zip(&instr.fields) {
        let max = if f.width() >= 32 { u32::MAX } else { (1u32 << f.width()) - 1 };
        if v > max {
            return enc_err(&f.name, format!("value {v} exceeds {} bits", f.width()));
        }
        w |= v << f.lo;
    }
    match (lop.spec.has_shifter, instr.shifter) {
        (true, Some(desc)) => w |= encode_shifter(desc)?,
        (false, None) => {}
        (true, None) => return enc_err("shifter_operand", "operation requires a shifter operand"),
        (false, Some(_)) => return enc_err("shifter_operand", "operation takes no shifter operand"),
    }
    Ok(w)
}

fn encode_shifter(desc: ShifterDescriptor) -> Result<u32, EncodeError> {
    let reg = |name: &str, r: u8| -> Result<u32, EncodeError> {
        if r > 15 {
            enc_err(name, format!("register index {r} out of range"))
        } else {
            Ok(r as u32)
        }
    };
    Ok(match desc {
        ShifterDescriptor::Immediate { rotate, imm8 } => {
            if rotate > 15 {
                return enc_err("rotate_imm", format!("rotation {rotate} out of range"));
            }
            (1 << 25) | ((rotate as u32) << 8) | imm8 as u32
        }
        ShifterDescriptor::Register { m } => reg("m", m)?,
        ShifterDescriptor::ShiftImm { m, shift, amount } => {
            if amount > 31 {
                return enc_err("shift_imm", format!("amount {amount} out of range"));
            }
            if amount == 0 && matches!(shift, ShiftKind::Lsl | ShiftKind::Ror) {
                return enc_err(
                    "shift_imm",
                    format!("{} #0 is written Register/RRX", shift.name()),
                );
            }
            ((amount as u32) << 7) | (shift.bits() << 5) | reg("m", m)?
        }
        ShifterDescriptor::ShiftReg { m, shift, s } => {
            (reg("s", s)? << 8) | (shift.bits() << 5) | 0x10 | reg("m", m)?
        }
        ShifterDescriptor::Rrx { m } => (ShiftKind::Ror.bits() << 5) | reg("m", m)?,
    })
}
