//! Condition-field evaluation over the N/Z/C/V flags.

use crate::state::{Cpsr, Fault};

/// Condition mnemonics indexed by the 4-bit condition field (0..=14).
pub const COND_NAMES: [&str; 15] = [
    "EQ", "NE", "CS", "CC", "MI", "PL", "VS", "VC", "HI", "LS", "GE", "LT", "GT", "LE", "AL",
];

pub const COND_AL: u32 = 14;

/// Standard ARM condition table. `cond` 0b1111 is reserved and faults.
pub fn condition_passed(cpsr: &Cpsr, cond: u32) -> Result<bool, Fault> {
    let (n, z, c, v) = (cpsr.n, cpsr.z, cpsr.c, cpsr.v);
    Ok(match cond {
        0 => z,
        1 => !z,
        2 => c,
        3 => !c,
        4 => n,
        5 => !n,
        6 => v,
        7 => !v,
        8 => c && !z,
        9 => !c || z,
        10 => n == v,
        11 => n != v,
        12 => !z && n == v,
        13 => z || n != v,
        14 => true,
        _ => {
            return Err(Fault::Unpredictable(format!(
                "condition field {cond:#06b} is reserved"
            )))
        }
    })
}
