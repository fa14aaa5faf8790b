//! Benchmark helpers: prebuilt workloads for the criterion benches.

use armsim_core::catalog::Catalog;
use armsim_core::fast::{FastProcessor, Simulator};
use armsim_core::programs;
use armsim_core::state::RefState;

/// A fast-engine simulator loaded with an endless arithmetic loop.
pub fn arithmetic_loop_sim(cat: &Catalog) -> Simulator<'_> {
    let words = programs::arithmetic_loop(cat, 29);
    let mut proc = FastProcessor::new();
    proc.mem.load_bytes(0, &programs::to_bytes(&words));
    Simulator::new(cat, proc)
}

/// The same image as a reference state.
pub fn arithmetic_loop_state(cat: &Catalog) -> RefState {
    let words = programs::arithmetic_loop(cat, 29);
    let mut st = RefState::new();
    st.load_bytes(0, &programs::to_bytes(&words));
    st
}
