//! Execution paths for the CLI: program runs on either engine,
//! lockstep co-simulation, reproducer replay, and the diff subcommand.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use armsim_core::catalog::Catalog;
use armsim_core::decoder;
use armsim_core::fast::project::project;
use armsim_core::fast::{FastProcessor, Simulator};
use armsim_core::harness::{
    self, ComponentDiff, DiffConfig, LockstepStop, Verdict,
};
use armsim_core::ref_engine;
use armsim_core::sim::{render_dump, HaltDetector, RunOutcome, RunReport};
use armsim_core::state::RefState;
use armsim_core::StepOutcome;

use crate::{DiffArgs, Engine, RunArgs, EXIT_USAGE};

fn fail_usage(msg: &str) -> ExitCode {
    eprintln!("armsim: {msg}");
    ExitCode::from(EXIT_USAGE)
}

/// Print a line, exiting quietly when the consumer closed the pipe.
fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out.write_fmt(args).and_then(|_| out.write_all(b"\n")).is_err() {
        std::process::exit(0);
    }
}

macro_rules! outln {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn outcome_code(outcome: &RunOutcome) -> ExitCode {
    ExitCode::from(match outcome {
        RunOutcome::MaxSteps | RunOutcome::Halted => 0u8,
        RunOutcome::Unpredictable(_) => 2,
        RunOutcome::NotImplemented(_) => 4,
        RunOutcome::Undefined(_) => 3,
    })
}

fn outcome_text(outcome: &RunOutcome) -> String {
    match outcome {
        RunOutcome::MaxSteps => "max-steps".into(),
        RunOutcome::Halted => "halted".into(),
        RunOutcome::Unpredictable(m) => format!("unpredictable: {m}"),
        RunOutcome::NotImplemented(m) => format!("not-implemented: {m}"),
        RunOutcome::Undefined(w) => format!("undefined: {w:#010x}"),
    }
}

struct Sink {
    trace: bool,
    json: bool,
}

impl Sink {
    fn step(&self, step: u64, addr: u32, word: u32, mnemonic: &str, diffs: &[ComponentDiff]) {
        if !self.trace {
            return;
        }
        if self.json {
            let changes: Vec<serde_json::Value> = diffs
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "component": d.component.to_string(),
                        "from": format!("{:#010x}", d.left),
                        "to": format!("{:#010x}", d.right),
                    })
                })
                .collect();
            outln!(
                "{}",
                serde_json::json!({
                    "event": "step",
                    "step": step,
                    "addr": format!("{addr:#010x}"),
                    "word": format!("{word:#010x}"),
                    "mnemonic": mnemonic,
                    "changes": changes,
                })
            );
        } else {
            let changes = if diffs.is_empty() {
                "-".to_string()
            } else {
                diffs
                    .iter()
                    .map(|d| format!("{}: {:#x} -> {:#x}", d.component, d.left, d.right))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            outln!("{addr:08x}  {word:08x}  {mnemonic:<4} {changes}");
        }
    }

    fn summary(&self, report: &RunReport, final_st: &RefState) {
        if self.json {
            let regs: Vec<String> =
                (0..16).map(|i| format!("{:#010x}", final_st.regs.usr[i])).collect();
            outln!(
                "{}",
                serde_json::json!({
                    "event": "summary",
                    "steps": report.steps,
                    "outcome": outcome_text(&report.outcome),
                    "mips": report.mips(),
                    "registers": regs,
                    "cpsr": format!("{:#010x}", final_st.cpsr.pack()),
                })
            );
        } else {
            emit(format_args!("{}", render_dump(final_st).trim_end()));
            outln!(
                "steps {}  outcome {}  mips {:.2}",
                report.steps,
                outcome_text(&report.outcome),
                report.mips()
            );
        }
    }
}

/// Run a flat binary image per the CLI arguments.
pub fn program(cat: &Catalog, args: &RunArgs, image: &Path) -> ExitCode {
    let bytes = match std::fs::read(image) {
        Ok(b) => b,
        Err(e) => return fail_usage(&format!("reading {}: {e}", image.display())),
    };
    if bytes.is_empty() {
        return fail_usage(&format!("{}: empty image", image.display()));
    }
    if args.base & 3 != 0 {
        return fail_usage(&format!("load address {:#x} is not word-aligned", args.base));
    }
    let entry = args.entry.unwrap_or(args.base);
    if entry & 3 != 0 {
        return fail_usage(&format!("entry {entry:#x} is not word-aligned"));
    }
    let sink = Sink { trace: args.trace, json: args.json };

    let mut ref_st = RefState::new();
    ref_st.load_bytes(args.base, &bytes);
    ref_st = ref_st.set_reg(15, entry);
    let mut proc = FastProcessor::new();
    proc.mem.load_bytes(args.base, &bytes);
    proc.set_next_fetch(entry);

    match args.engine {
        Engine::Fast => {
            let mut sim = Simulator::new(cat, proc);
            let report = if args.trace {
                run_traced(args.steps, &sink, |n| {
                    let addr = sim.proc.fetch_addr();
                    let word = sim.proc.mem.read(addr & !3, armsim_core::state::MemSize::Word).unwrap_or(0);
                    let before = project(&sim.proc);
                    let out = sim.step();
                    let after = project(&sim.proc);
                    let mnemonic = mnemonic_of(cat, word);
                    sink.step(n, addr, word, &mnemonic, &harness::state_diff(&before, &after));
                    (addr, out, sim.proc.fetch_addr())
                })
            } else {
                sim.run(args.steps)
            };
            sink.summary(&report, &project(&sim.proc));
            outcome_code(&report.outcome)
        }
        Engine::Ref => {
            let report = run_traced(args.steps, &sink, |n| {
                let addr = ref_st.pc();
                let word = ref_st.mem_read(addr & !3, armsim_core::state::MemSize::Word).unwrap_or(0);
                let before = ref_st.clone();
                let (next, out) = ref_engine::step(cat, std::mem::take(&mut ref_st));
                ref_st = next;
                if args.trace {
                    let mnemonic = mnemonic_of(cat, word);
                    sink.step(n, addr, word, &mnemonic, &harness::state_diff(&before, &ref_st));
                }
                (addr, out, ref_st.pc())
            });
            sink.summary(&report, &ref_st);
            outcome_code(&report.outcome)
        }
        Engine::Both => {
            let lock = harness::run_lockstep(cat, ref_st.clone(), proc, args.steps, |n, addr, word, mnemonic, diffs| {
                sink.step(n, addr, word, mnemonic, diffs);
            });
            match lock.stop {
                LockstepStop::Run(outcome) => {
                    // both engines hold the same state; dump the reference's
                    let (final_ref, _) = armsim_core::sim::ref_run(cat, ref_st, lock.steps);
                    let report = RunReport { steps: lock.steps, outcome, wall: lock.wall };
                    sink.summary(&report, &final_ref);
                    outcome_code(&report.outcome)
                }
                LockstepStop::Diverged { step, addr, detail } => {
                    eprintln!("engines diverged at step {step}, address {addr:#010x}: {detail}");
                    ExitCode::from(5)
                }
            }
        }
    }
}

fn mnemonic_of(cat: &Catalog, word: u32) -> String {
    decoder::decode(cat, word).map(|i| i.mnemonic(cat).to_string()).unwrap_or_else(|| "?".into())
}

/// Shared per-step driver for the traced paths: the closure executes
/// one instruction and reports (address, outcome, next fetch address).
fn run_traced<F>(max_steps: u64, _sink: &Sink, mut step: F) -> RunReport
where
    F: FnMut(u64) -> (u32, StepOutcome, u32),
{
    let start = Instant::now();
    let mut halt = HaltDetector::default();
    let mut steps = 0u64;
    let outcome = loop {
        if steps >= max_steps {
            break RunOutcome::MaxSteps;
        }
        let (addr, out, next) = step(steps + 1);
        if let Some(stop) = RunOutcome::from_step(out) {
            break stop;
        }
        steps += 1;
        if halt.observe(addr, next != addr.wrapping_add(4), next) {
            break RunOutcome::Halted;
        }
    };
    RunReport { steps, outcome, wall: start.elapsed() }
}

/// Replay a reproducer file: exit 0 when the engines agree on it.
pub fn replay(cat: &Catalog, path: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail_usage(&format!("reading {}: {e}", path.display())),
    };
    let case = match harness::parse_reproducer(cat, &text) {
        Ok(c) => c,
        Err(e) => return fail_usage(&format!("{}: {e}", path.display())),
    };
    let name = case.instr.mnemonic(cat).to_string();
    let verdict = harness::check_case(cat, &DiffConfig::default(), &case, 0);
    match &verdict {
        Verdict::Pass => {
            outln!("replay: {name} - pass");
            ExitCode::SUCCESS
        }
        other => {
            outln!("replay: {}", other.describe(cat));
            ExitCode::from(5)
        }
    }
}

/// The differential-harness subcommand.
pub fn diff(cat: &Catalog, args: &DiffArgs) -> ExitCode {
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let cfg = DiffConfig { invert_adc_carry: args.inject_adc_carry_fault };
    let start = Instant::now();
    let report = harness::run_commute_suite_seeded(cat, &cfg, args.seed, args.cases, threads);
    let secs = start.elapsed().as_secs_f64();
    if report.passed() {
        outln!(
            "diff: {} cases across {} operations in {secs:.1}s - all passed",
            report.cases,
            cat.ops().len()
        );
        return ExitCode::SUCCESS;
    }
    outln!(
        "diff: {} cases across {} operations in {secs:.1}s - {} FAILURES",
        report.cases,
        cat.ops().len(),
        report.failures.len()
    );
    let (ix, verdict) = &report.failures[0];
    outln!("first failure: {}", verdict.describe(cat));
    // rebuild, shrink, and write a replayable reproducer
    let op = (*ix / args.cases) as usize;
    let seed = args.seed + (*ix % args.cases);
    let case = harness::case_for_seed(cat, op, seed);
    let small = harness::shrink(cat, &cfg, &case);
    let text = harness::write_reproducer(cat, &small);
    match std::fs::write(&args.out, text) {
        Ok(()) => outln!("reproducer written to {}", args.out.display()),
        Err(e) => eprintln!("armsim: writing {}: {e}", args.out.display()),
    }
    ExitCode::from(5)
}
