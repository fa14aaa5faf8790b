//! End-to-end CLI checks: exit codes, dump stability, trace formats,
//! catalog overrides, and reproducer replay.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use armsim_core::catalog::Catalog;
use armsim_core::harness;
use armsim_core::programs;

fn armsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_armsim")).args(args).output().expect("spawn armsim")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn temp_image(words: &[u32]) -> tempfile::NamedTempFile {
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), programs::to_bytes(words)).unwrap();
    f
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(exit_code(&armsim(&[])), 64, "no image");
    assert_eq!(exit_code(&armsim(&["--bogus-flag"])), 64);
    assert_eq!(exit_code(&armsim(&["/nonexistent/prog.bin"])), 64);
    let empty = tempfile::NamedTempFile::new().unwrap();
    assert_eq!(exit_code(&armsim(&[empty.path().to_str().unwrap()])), 64, "empty image");
    let img = temp_image(&[0xE1A0_0000]);
    let p = img.path().to_str().unwrap();
    assert_eq!(exit_code(&armsim(&["--base", "0x2", p])), 64, "misaligned base");
    assert_eq!(exit_code(&armsim(&["--entry", "0x6", p])), 64, "misaligned entry");
}

#[test]
fn committed_binaries_match_the_generator() {
    let cat = Catalog::bundled();
    for (file, words) in [
        ("programs/sum10.bin", programs::sum_1_to_10(cat)),
        ("programs/fib10.bin", programs::fibonacci_10(cat)),
    ] {
        let disk = std::fs::read(repo_path(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(disk, programs::to_bytes(&words), "{file} is stale; re-run gen_programs");
    }
}

#[test]
fn dump_format_is_stable() {
    let out = armsim(&[repo_path("programs/sum10.bin").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    let text = stdout(&out);
    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/sum10_dump.txt"),
    )
    .unwrap();
    let lines: Vec<&str> = text.lines().collect();
    for (i, expect) in golden.lines().enumerate() {
        assert_eq!(lines[i], expect, "dump line {i}");
    }
    let last = lines.last().unwrap();
    assert!(
        last.starts_with("steps 34  outcome halted  mips "),
        "summary line changed: {last}"
    );
}

#[test]
fn engines_agree_on_the_bundled_programs() {
    for engine in ["ref", "fast", "both"] {
        let out = armsim(&["--engine", engine, repo_path("programs/fib10.bin").to_str().unwrap()]);
        assert_eq!(exit_code(&out), 0, "{engine}: {}", stdout(&out));
        let text = stdout(&out);
        assert!(text.contains("  r0 00000037 "), "{engine}: {text}");
        assert!(text.contains("  r1 00000059 "), "{engine}: {text}");
        assert!(text.contains("outcome halted"), "{engine}");
    }
}

#[test]
fn fault_exit_codes() {
    // ADCS r15, r0, r1 in usr mode: unpredictable
    let img = temp_image(&[0xE0B0_F001]);
    let out = armsim(&[img.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "{}", stdout(&out));
    assert!(stdout(&out).contains("unpredictable"));

    // architecturally undefined word
    let img = temp_image(&[0xE7F0_00F0]);
    let out = armsim(&[img.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 3);
    assert!(stdout(&out).contains("undefined: 0xe7f000f0"));

    // reference engine reports the same classes
    let img = temp_image(&[0xE0B0_F001]);
    let out = armsim(&["--engine", "ref", img.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn max_steps_is_a_clean_exit() {
    let img = temp_image(&[0xE080_0001]); // ADD, then falls into zero words
    let out = armsim(&["--steps", "10", img.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("steps 10  outcome max-steps"));
}

#[test]
fn trace_lines_have_the_documented_shape() {
    let out = armsim(&["--trace", "--steps", "3", repo_path("programs/sum10.bin").to_str().unwrap()]);
    let text = stdout(&out);
    let first = text.lines().next().unwrap();
    assert_eq!(first, "00000000  e3a00000  MOV  r15: 0x0 -> 0x4");
    // ref-engine tracing prints the same lines
    let ref_out =
        armsim(&["--engine", "ref", "--trace", "--steps", "3", repo_path("programs/sum10.bin").to_str().unwrap()]);
    assert_eq!(text.lines().next(), stdout(&ref_out).lines().next());
}

#[test]
fn json_mode_emits_parseable_objects() {
    let out = armsim(&["--json", "--trace", "--steps", "4", repo_path("programs/sum10.bin").to_str().unwrap()]);
    let text = stdout(&out);
    let mut events = Vec::new();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"));
        events.push(v["event"].as_str().unwrap().to_string());
    }
    assert_eq!(events.len(), 5, "{text}");
    assert!(events[..4].iter().all(|e| e == "step"));
    assert_eq!(events[4], "summary");
}

#[test]
fn diff_subcommand_and_replay_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let repro = dir.path().join("fail.repro");

    let out = armsim(&["diff", "--cases", "64"]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("all passed"));

    let out = armsim(&[
        "diff",
        "--cases",
        "512",
        "--inject-adc-carry-fault",
        "--out",
        repro.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 5, "{}", stdout(&out));
    assert!(stdout(&out).contains("C_flag"), "{}", stdout(&out));
    assert!(repro.exists());

    // the written reproducer parses and replays (the engines agree on
    // it once the injected fault is gone)
    let out = armsim(&["--replay", repro.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("pass"));

    // a case written straight from the harness replays too
    let cat = Catalog::bundled();
    let case = harness::case_for_seed(cat, cat.find("SUB").unwrap(), 7);
    let path = dir.path().join("case.repro");
    std::fs::write(&path, harness::write_reproducer(cat, &case)).unwrap();
    let out = armsim(&["--replay", path.to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));

    let bad = dir.path().join("junk.repro");
    std::fs::write(&bad, "op NOPE\n").unwrap();
    assert_eq!(exit_code(&armsim(&["--replay", bad.to_str().unwrap()])), 64);
}

#[test]
fn catalog_directory_override_works() {
    let dir = repo_path("crates/core/src/catalog_data");
    let out = armsim(&[
        "--catalog",
        dir.to_str().unwrap(),
        repo_path("programs/sum10.bin").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0);
    assert!(stdout(&out).contains("  r0 00000037 "));

    let out = armsim(&["--catalog", "/nonexistent", repo_path("programs/sum10.bin").to_str().unwrap()]);
    assert_eq!(exit_code(&out), 64);
}

#[test]
fn base_and_entry_relocate_the_image() {
    let out = armsim(&[
        "--base",
        "0x1000",
        "--entry",
        "0x1000",
        repo_path("programs/sum10.bin").to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("  r0 00000037 "), "{text}");
    assert!(text.contains(" r15 00001014"), "halt address moved with the image: {text}");
}
