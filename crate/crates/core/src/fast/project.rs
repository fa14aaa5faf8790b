//! Projection from the fast engine's state onto the reference state.
//!
//! Total on every processor value: flag bytes map to flag bits, the
//! register view plus banks map to the banked file, paged memory maps
//! to the sparse byte image, and the stored-PC offset is removed.
//! Performance-only machinery (the decoded-block cache, the taken-
//! branch latch) has no image.

use super::FastProcessor;
use crate::state::{all_phys_regs, RefState};

pub fn project(proc: &FastProcessor) -> RefState {
    let mut st = RefState::new();
    for r in all_phys_regs() {
        st.regs.set_phys(r, proc.read_phys(r));
    }
    // stored r15 carries the fetch-address + 8 convention
    st.regs.usr[15] = proc.regs[15].wrapping_sub(8);
    st.cpsr = proc.cpsr.to_cpsr();
    for (i, s) in proc.spsr.iter().enumerate() {
        st.spsr[i] = s.to_cpsr();
    }
    st.mem = proc.mem.nonzero_map();
    st
}
