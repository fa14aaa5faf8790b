//! Small bundled programs, assembled through the encoder. Each ends in
//! a branch-to-self so the run loop's halt convention fires.

use crate::catalog::Catalog;
use crate::cond::COND_AL;
use crate::decoder::{encode, DecodedInstr};
use crate::shifter::ShifterDescriptor;

const COND_NE: u32 = 1;

struct Asm<'c> {
    cat: &'c Catalog,
    words: Vec<u32>,
}

impl<'c> Asm<'c> {
    fn new(cat: &'c Catalog) -> Asm<'c> {
        Asm { cat, words: Vec::new() }
    }

    fn here(&self) -> usize {
        self.words.len()
    }

    fn push(&mut self, name: &str, fields: &[(&str, u32)], shifter: Option<ShifterDescriptor>) {
        let op = self.cat.find(name).unwrap_or_else(|| panic!("unknown op {name}"));
        let lop = self.cat.get(op);
        let values = lop
            .spec
            .pattern
            .fields
            .iter()
            .map(|f| {
                fields
                    .iter()
                    .find(|(n, _)| *n == f.name)
                    .map(|(_, v)| *v)
                    .unwrap_or_else(|| panic!("{name}: missing field {}", f.name))
            })
            .collect();
        let instr = DecodedInstr { op: op as u16, fields: values, shifter };
        self.words.push(encode(self.cat, &instr).expect("valid encoding"));
    }

    fn mov_imm(&mut self, d: u32, imm8: u8) {
        self.push(
            "MOV",
            &[("cond", COND_AL), ("S", 0), ("d", d)],
            Some(ShifterDescriptor::Immediate { rotate: 0, imm8 }),
        );
    }

    fn mov_reg(&mut self, d: u32, m: u8) {
        self.push(
            "MOV",
            &[("cond", COND_AL), ("S", 0), ("d", d)],
            Some(ShifterDescriptor::Register { m }),
        );
    }

    fn dp_reg(&mut self, name: &str, s: u32, d: u32, n: u32, m: u8) {
        self.push(
            name,
            &[("cond", COND_AL), ("S", s), ("n", n), ("d", d)],
            Some(ShifterDescriptor::Register { m }),
        );
    }

    fn subs_imm(&mut self, d: u32, n: u32, imm8: u8) {
        self.push(
            "SUB",
            &[("cond", COND_AL), ("S", 1), ("n", n), ("d", d)],
            Some(ShifterDescriptor::Immediate { rotate: 0, imm8 }),
        );
    }

    /// Branch from the *next* slot to instruction index `target`.
    fn branch(&mut self, cond: u32, target: usize) {
        let offset = target as i64 - (self.here() as i64 + 2);
        let imm24 = (offset as u32) & 0x00FF_FFFF;
        self.push("B", &[("cond", cond), ("signed_immed_24", imm24)], None);
    }

    fn halt(&mut self) {
        let here = self.here();
        self.branch(COND_AL, here);
    }
}

/// Sum the integers 1..=10 into r0 (r0 = 55 at the halt).
pub fn sum_1_to_10(cat: &Catalog) -> Vec<u32> {
    let mut a = Asm::new(cat);
    a.mov_imm(0, 0); // r0 = 0
    a.mov_imm(1, 10); // r1 = 10
    let loop_top = a.here();
    a.dp_reg("ADD", 0, 0, 0, 1); // r0 += r1
    a.subs_imm(1, 1, 1); // r1 -= 1, set flags
    a.branch(COND_NE, loop_top);
    a.halt();
    a.words
}

/// Iterate the Fibonacci recurrence: r0 = 55 and r1 = 89 at the halt.
pub fn fibonacci_10(cat: &Catalog) -> Vec<u32> {
    let mut a = Asm::new(cat);
    a.mov_imm(0, 1);
    a.mov_imm(1, 1);
    a.mov_imm(2, 9);
    let loop_top = a.here();
    a.dp_reg("ADD", 0, 3, 0, 1); // r3 = r0 + r1
    a.mov_reg(0, 1);
    a.mov_reg(1, 3);
    a.subs_imm(2, 2, 1);
    a.branch(COND_NE, loop_top);
    a.halt();
    a.words
}

/// An endless loop of plain arithmetic: `body` data-processing
/// instructions followed by an unconditional branch back. Used for
/// throughput measurement.
pub fn arithmetic_loop(cat: &Catalog, body: usize) -> Vec<u32> {
    let mut a = Asm::new(cat);
    a.mov_imm(0, 1);
    a.mov_imm(1, 2);
    a.mov_imm(2, 3);
    let loop_top = a.here();
    for i in 0..body {
        match i % 4 {
            0 => a.dp_reg("ADD", 0, 3, 0, 1),
            1 => a.dp_reg("EOR", 0, 4, 3, 2),
            2 => a.dp_reg("ADC", 0, 5, 4, 1),
            _ => a.dp_reg("SUB", 0, 6, 5, 2),
        }
    }
    a.branch(COND_AL, loop_top);
    a.words
}

/// Ten independent arithmetic instructions and no branch: a single
/// straight-line block.
pub fn straight_line_10(cat: &Catalog) -> Vec<u32> {
    let mut a = Asm::new(cat);
    a.mov_imm(0, 7);
    a.mov_imm(1, 9);
    for i in 0..8 {
        let d = 2 + (i % 6) as u32;
        a.dp_reg(["ADD", "EOR", "SUB", "ORR"][i % 4], 0, d, 0, 1);
    }
    a.words
}

/// Little-endian byte image of an assembled program.
pub fn to_bytes(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_le_bytes()).collect()
}
