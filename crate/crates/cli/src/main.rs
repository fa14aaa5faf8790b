//! armsim: run flat ARM binaries on the reference or fast engine (or
//! both in lockstep), replay differential-harness reproducers, and
//! drive the harness itself.

mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use armsim_core::catalog::Catalog;

/// Exit codes: 0 clean halt, 2 unpredictable, 3 undefined instruction,
/// 4 not implemented, 5 engine mismatch, 64 usage or startup error.
pub const EXIT_USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "armsim",
    about = "ARMv6 subset simulator with a reference and an optimized engine",
    after_help = "A program halts cleanly when it executes a branch-to-self twice in a row \
                  or exhausts --steps. Exit codes: 0 clean halt, 2 unpredictable, 3 undefined, \
                  4 not-implemented, 5 engine mismatch, 64 usage error."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Option<Cmd>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand, Debug)]
pub(crate) enum Cmd {
    /// Run randomized differential checks between the two engines.
    Diff(DiffArgs),
}

#[derive(Args, Debug)]
pub(crate) struct RunArgs {
    /// Flat little-endian binary image to execute.
    pub(crate) image: Option<PathBuf>,

    /// Engine to run; `both` runs the engines in lockstep and compares
    /// state after every instruction.
    #[arg(long, value_enum, default_value_t = Engine::Fast)]
    pub(crate) engine: Engine,

    /// Maximum number of instructions to execute.
    #[arg(long, default_value_t = 10_000_000)]
    pub(crate) steps: u64,

    /// Load address for the image (hex accepted).
    #[arg(long, value_parser = parse_u32, default_value = "0")]
    pub(crate) base: u32,

    /// Entry PC; defaults to the load address.
    #[arg(long, value_parser = parse_u32)]
    pub(crate) entry: Option<u32>,

    /// Print one line per executed instruction.
    #[arg(long)]
    pub(crate) trace: bool,

    /// Emit the trace and summary as JSON objects, one per line.
    #[arg(long)]
    pub(crate) json: bool,

    /// Load the instruction catalog from a directory instead of the
    /// built-in one.
    #[arg(long)]
    pub(crate) catalog: Option<PathBuf>,

    /// Replay a differential-harness reproducer file.
    #[arg(long, conflicts_with = "image")]
    pub(crate) replay: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub(crate) struct DiffArgs {
    /// Base seed for the random cases.
    #[arg(long, default_value_t = 0)]
    pub(crate) seed: u64,

    /// Random cases per catalog operation.
    #[arg(long, default_value_t = 10_000)]
    pub(crate) cases: u64,

    /// Worker threads (defaults to the available parallelism).
    #[arg(long)]
    pub(crate) threads: Option<usize>,

    /// Where to write the shrunk reproducer of the first failure.
    #[arg(long, default_value = "armsim-failure.repro")]
    pub(crate) out: PathBuf,

    /// Invert the fast engine's ADC carry (harness self-test).
    #[arg(long)]
    pub(crate) inject_adc_carry_fault: bool,

    #[arg(long)]
    pub(crate) catalog: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub(crate) enum Engine {
    Ref,
    Fast,
    Both,
}

fn parse_u32(s: &str) -> Result<u32, String> {
    let t = s.trim();
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(h, 16).map_err(|e| e.to_string())
    } else {
        t.parse().map_err(|e: std::num::ParseIntError| e.to_string())
    }
}

fn fail_usage(msg: &str) -> ExitCode {
    eprintln!("armsim: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap renders --help/--version through the error path too
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };

    let catalog_dir = match &cli.cmd {
        Some(Cmd::Diff(d)) => d.catalog.clone(),
        None => cli.run.catalog.clone(),
    };
    let owned;
    let cat: &Catalog = match catalog_dir {
        Some(dir) => match Catalog::load_dir(&dir) {
            Ok(c) => {
                owned = c;
                &owned
            }
            Err(e) => return fail_usage(&format!("loading catalog {}: {e}", dir.display())),
        },
        None => Catalog::bundled(),
    };

    match cli.cmd {
        Some(Cmd::Diff(args)) => run::diff(cat, &args),
        None => {
            if let Some(path) = &cli.run.replay {
                return run::replay(cat, path);
            }
            let Some(image) = &cli.run.image else {
                return fail_usage("expected a binary image, --replay FILE, or a subcommand");
            };
            run::program(cat, &cli.run, image)
        }
    }
}
