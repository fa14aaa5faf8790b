//! CLI-level acceptance: the bundled programs halt with the
//! hand-computed register values under every engine selection,
//! including lockstep co-simulation through the real binary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn program_level_check_via_cli() {
    let cases = [
        ("programs/sum10.bin", vec![("  r0 00000037 ", "r0 = 55")]),
        (
            "programs/fib10.bin",
            vec![("  r0 00000037 ", "r0 = 55"), ("  r1 00000059 ", "r1 = 89")],
        ),
    ];
    for (image, expects) in &cases {
        for engine in ["ref", "fast", "both"] {
            let out = Command::new(env!("CARGO_BIN_EXE_armsim"))
                .args(["--engine", engine, repo_path(image).to_str().unwrap()])
                .output()
                .expect("spawn armsim");
            assert_eq!(out.status.code(), Some(0), "{image} under {engine}");
            let text = String::from_utf8_lossy(&out.stdout);
            assert!(text.contains("outcome halted"), "{image} under {engine}: {text}");
            for (needle, label) in expects {
                assert!(text.contains(needle), "{image} under {engine}: expected {label}\n{text}");
            }
        }
    }
    println!("PASS program-level-check-cli: sum and fibonacci halt correctly under ref, fast, both");
}
