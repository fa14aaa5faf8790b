//! Program-level cross-engine checks: random instruction streams must
//! behave identically with the basic-block optimization on, with it
//! off, and (up to fault freezing) on the reference engine.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use armsim_core::catalog::Catalog;
use armsim_core::decoder::encode;
use armsim_core::fast::project::project;
use armsim_core::fast::{FastProcessor, Simulator};
use armsim_core::harness::{random_instr, state_diff};
use armsim_core::programs;
use armsim_core::sim::{ref_run, RunOutcome};
use armsim_core::state::RefState;

fn outcome_class(o: &RunOutcome) -> String {
    match o {
        RunOutcome::MaxSteps => "max-steps".into(),
        RunOutcome::Halted => "halted".into(),
        RunOutcome::Unpredictable(_) => "unpredictable".into(),
        RunOutcome::NotImplemented(_) => "not-implemented".into(),
        RunOutcome::Undefined(w) => format!("undefined({w:#010x})"),
    }
}

fn random_program(cat: &Catalog, rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let words: Vec<u32> = (0..len)
        .map(|_| {
            if rng.gen_bool(0.05) {
                rng.gen() // arbitrary word, possibly undecodable
            } else {
                encode(cat, &random_instr(cat, rng)).unwrap()
            }
        })
        .collect();
    programs::to_bytes(&words)
}

#[test]
fn block_optimization_matches_stepping_on_random_programs() {
    let cat = Catalog::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(0xB10C);
    for case in 0..150u32 {
        let image = random_program(cat, &mut rng, 48);
        let mut with = {
            let mut p = FastProcessor::new();
            p.mem.load_bytes(0, &image);
            Simulator::new(cat, p)
        };
        let mut without = {
            let mut p = FastProcessor::new();
            p.mem.load_bytes(0, &image);
            let mut s = Simulator::new(cat, p);
            s.block_opt = false;
            s
        };
        let a = with.run(300);
        let b = without.run(300);
        assert_eq!(a.outcome, b.outcome, "case {case}");
        assert_eq!(a.steps, b.steps, "case {case}");
        let diffs = state_diff(&project(&with.proc), &project(&without.proc));
        assert!(diffs.is_empty(), "case {case}: {diffs:?}");
    }
}

#[test]
fn fast_engine_matches_reference_on_random_programs() {
    let cat = Catalog::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0515);
    for case in 0..80u32 {
        let image = random_program(cat, &mut rng, 32);
        let mut sim = {
            let mut p = FastProcessor::new();
            p.mem.load_bytes(0, &image);
            Simulator::new(cat, p)
        };
        let fast_report = sim.run(200);

        let mut st = RefState::new();
        st.load_bytes(0, &image);
        let (ref_final, ref_report) = ref_run(cat, st, 200);

        assert_eq!(
            outcome_class(&fast_report.outcome),
            outcome_class(&ref_report.outcome),
            "case {case}"
        );
        assert_eq!(fast_report.steps, ref_report.steps, "case {case}");
        if fast_report.outcome.is_clean() {
            let diffs = state_diff(&ref_final, &project(&sim.proc));
            assert!(diffs.is_empty(), "case {case}: {diffs:?}");
        }
    }
}
