//! Run-loop plumbing shared by both engines: step/run outcomes, the
//! halt convention, a reference-engine run loop, and the register dump
//! format.

use std::time::Duration;

use crate::catalog::Catalog;
use crate::ref_engine;
use crate::state::{Fault, RefState};

/// Outcome of executing a single instruction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Ok,
    Unpredictable(String),
    NotImplemented(String),
    Undefined(u32),
}

impl From<Fault> for StepOutcome {
    fn from(f: Fault) -> StepOutcome {
        match f {
            Fault::Unpredictable(m) => StepOutcome::Unpredictable(m),
            Fault::NotImplemented(m) => StepOutcome::NotImplemented(m),
        }
    }
}

/// Why a run loop stopped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    /// Step budget exhausted (a clean end for open-ended programs).
    MaxSteps,
    /// Branch-to-self executed twice in a row: the halt convention for
    /// a subset with no software interrupt.
    Halted,
    Unpredictable(String),
    NotImplemented(String),
    Undefined(u32),
}

impl RunOutcome {
    pub fn is_clean(&self) -> bool {
        matches!(self, RunOutcome::MaxSteps | RunOutcome::Halted)
    }

    pub fn from_step(s: StepOutcome) -> Option<RunOutcome> {
        match s {
            StepOutcome::Ok => None,
            StepOutcome::Unpredictable(m) => Some(RunOutcome::Unpredictable(m)),
            StepOutcome::NotImplemented(m) => Some(RunOutcome::NotImplemented(m)),
            StepOutcome::Undefined(w) => Some(RunOutcome::Undefined(w)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub steps: u64,
    pub outcome: RunOutcome,
    pub wall: Duration,
}

impl RunReport {
    /// Millions of simulated instructions per second.
    pub fn mips(&self) -> f64 {
        let secs = self.wall.as_secs_f64();
        if secs == 0.0 {
            f64::INFINITY
        } else {
            self.steps as f64 / secs / 1.0e6
        }
    }
}

/// Detects the halt convention: an instruction that branches to its own
/// address, executed twice consecutively.
#[derive(Default)]
pub struct HaltDetector {
    streak: u8,
}

impl HaltDetector {
    /// Record one executed instruction; returns true when the program
    /// should halt.
    pub fn observe(&mut self, instr_addr: u32, branched: bool, next_fetch: u32) -> bool {
        if branched && next_fetch == instr_addr {
            self.streak += 1;
            self.streak >= 2
        } else {
            self.streak = 0;
            false
        }
    }
}

/// Run the reference engine for up to `max_steps` instructions.
pub fn ref_run(cat: &Catalog, mut st: RefState, max_steps: u64) -> (RefState, RunReport) {
    let start = std::time::Instant::now();
    let mut halt = HaltDetector::default();
    let mut steps = 0u64;
    let outcome = loop {
        if steps >= max_steps {
            break RunOutcome::MaxSteps;
        }
        let before = st.pc();
        let (next, out) = ref_engine::step(cat, st);
        st = next;
        if let Some(stop) = RunOutcome::from_step(out) {
            break stop;
        }
        steps += 1;
        let branched = st.pc() != before.wrapping_add(4);
        if halt.observe(before, branched, st.pc()) {
            break RunOutcome::Halted;
        }
    };
    (st, RunReport { steps, outcome, wall: start.elapsed() })
}

/// Stable register/flag dump, shared by every engine front end.
pub fn render_dump(st: &RefState) -> String {
    let mut out = String::new();
    for row in 0..4 {
        for col in 0..4 {
            let i = row * 4 + col;
            out.push_str(&format!("{:>4} {:08x}", format!("r{i}"), st.regs.usr[i]));
            out.push_str(if col == 3 { "\n" } else { "  " });
        }
    }
    let c = st.cpsr;
    out.push_str(&format!(
        "cpsr {:08x}  N={} Z={} C={} V={}  mode={}\n",
        c.pack(),
        u8::from(c.n),
        u8::from(c.z),
        u8::from(c.c),
        u8::from(c.v),
        c.mode
    ));
    out
}
