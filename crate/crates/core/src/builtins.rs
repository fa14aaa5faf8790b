//! The primitive function library both engines dispatch into.
//!
//! These are the "general purpose functions" instruction bodies call:
//! condition evaluation, SPSR availability, the carry/borrow/overflow
//! helpers, and a couple of bit utilities. Each builtin is a pure
//! function of its arguments plus a read-only view of the flags and
//! mode, so the two engines can share one implementation.

use crate::bits;
use crate::cond::condition_passed;
use crate::state::{Cpsr, Fault, ProcessorMode};

/// Read-only slice of processor state a builtin may consult.
#[derive(Clone, Copy, Debug)]
pub struct StateView {
    pub cpsr: Cpsr,
}

impl StateView {
    pub fn mode(&self) -> ProcessorMode {
        self.cpsr.mode
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    ConditionPassed,
    CurrentModeHasSpsr,
    CarryFromAdd2,
    CarryFromAdd3,
    OverflowFromAdd2,
    OverflowFromAdd3,
    BorrowFromSub2,
    BorrowFromSub3,
    OverflowFromSub2,
    OverflowFromSub3,
    GetBit,
    Not,
    SignExtend30,
}

impl Builtin {
    pub fn lookup(name: &str) -> Option<Builtin> {
        Some(match name {
            "ConditionPassed" => Builtin::ConditionPassed,
            "CurrentModeHasSPSR" => Builtin::CurrentModeHasSpsr,
            "CarryFrom_add2" => Builtin::CarryFromAdd2,
            "CarryFrom_add3" => Builtin::CarryFromAdd3,
            "OverflowFrom_add2" => Builtin::OverflowFromAdd2,
            "OverflowFrom_add3" => Builtin::OverflowFromAdd3,
            "BorrowFrom_sub2" => Builtin::BorrowFromSub2,
            "BorrowFrom_sub3" => Builtin::BorrowFromSub3,
            "OverflowFrom_sub2" => Builtin::OverflowFromSub2,
            "OverflowFrom_sub3" => Builtin::OverflowFromSub3,
            "get_bit" => Builtin::GetBit,
            "NOT" => Builtin::Not,
            "SignExtend_30" => Builtin::SignExtend30,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::ConditionPassed => "ConditionPassed",
            Builtin::CurrentModeHasSpsr => "CurrentModeHasSPSR",
            Builtin::CarryFromAdd2 => "CarryFrom_add2",
            Builtin::CarryFromAdd3 => "CarryFrom_add3",
            Builtin::OverflowFromAdd2 => "OverflowFrom_add2",
            Builtin::OverflowFromAdd3 => "OverflowFrom_add3",
            Builtin::BorrowFromSub2 => "BorrowFrom_sub2",
            Builtin::BorrowFromSub3 => "BorrowFrom_sub3",
            Builtin::OverflowFromSub2 => "OverflowFrom_sub2",
            Builtin::OverflowFromSub3 => "OverflowFrom_sub3",
            Builtin::GetBit => "get_bit",
            Builtin::Not => "NOT",
            Builtin::SignExtend30 => "SignExtend_30",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::CurrentModeHasSpsr => 0,
            Builtin::ConditionPassed | Builtin::Not | Builtin::SignExtend30 => 1,
            Builtin::CarryFromAdd2
            | Builtin::OverflowFromAdd2
            | Builtin::BorrowFromSub2
            | Builtin::OverflowFromSub2
            | Builtin::GetBit => 2,
            Builtin::CarryFromAdd3
            | Builtin::OverflowFromAdd3
            | Builtin::BorrowFromSub3
            | Builtin::OverflowFromSub3 => 3,
        }
    }

    /// Evaluate with the given arguments. Arity is checked at parse
    /// time; the only run-time failure is a reserved condition field.
    pub fn eval(self, args: &[u32], view: &StateView) -> Result<u32, Fault> {
        debug_assert_eq!(args.len(), self.arity(), "{}", self.name());
        Ok(match self {
            Builtin::ConditionPassed => u32::from(condition_passed(&view.cpsr, args[0])?),
            Builtin::CurrentModeHasSpsr => u32::from(view.mode().has_spsr()),
            Builtin::CarryFromAdd2 => bits::carry_from_add2(args[0], args[1]),
            Builtin::CarryFromAdd3 => bits::carry_from_add3(args[0], args[1], args[2] & 1),
            Builtin::OverflowFromAdd2 => bits::overflow_from_add2(args[0], args[1]),
            Builtin::OverflowFromAdd3 => bits::overflow_from_add3(args[0], args[1], args[2] & 1),
            Builtin::BorrowFromSub2 => bits::borrow_from_sub2(args[0], args[1]),
            Builtin::BorrowFromSub3 => bits::borrow_from_sub3(args[0], args[1], args[2] & 1),
            Builtin::OverflowFromSub2 => bits::overflow_from_sub2(args[0], args[1]),
            Builtin::OverflowFromSub3 => bits::overflow_from_sub3(args[0], args[1], args[2] & 1),
            // dynamic index: out-of-range reads as 0 rather than panicking
            Builtin::GetBit => {
                if args[1] < 32 {
                    bits::get_bit(args[0], args[1])
                } else {
                    0
                }
            }
            Builtin::Not => !args[0],
            Builtin::SignExtend30 => bits::sign_extend_30(args[0]),
        })
    }
}
