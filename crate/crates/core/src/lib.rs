//! ARMv6 subset simulator with two semantic engines.
//!
//! The crate hosts a pure, state-passing reference interpreter and an
//! optimized imperative engine over the same instruction catalog, a
//! projection from the fast engine's state onto the reference state,
//! and a differential harness that checks the two engines commute
//! under that projection. Instruction behavior comes from pseudocode
//! sources parsed at load time, so the catalog can be extended with
//! data files only.

pub mod ast;
pub mod bits;
pub mod builtins;
pub mod catalog;
pub mod cond;
pub mod decoder;
pub mod fast;
pub mod harness;
pub mod parser;
pub mod programs;
pub mod ref_engine;
pub mod shifter;
pub mod sim;
pub mod state;

pub use ast::{Exp, OperationAst, Stm};
pub use catalog::{Catalog, EncodingPattern, OperationSpec};
pub use decoder::DecodedInstr;
pub use fast::{FastProcessor, Simulator};
pub use shifter::ShifterDescriptor;
pub use sim::{RunOutcome, RunReport, StepOutcome};
pub use state::{Cpsr, Fault, ProcessorMode, RefState, SemResult, SemState};
