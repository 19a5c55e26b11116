//! The full command-line workflow driven from code: run a scenario file,
//! verify its artifacts, trace a lot. Pass a scenario path to use your own.

use std::path::{Path, PathBuf};

use pharmachain::cli::{cmd_run, cmd_trace, cmd_verify, TraceFormat};

pub fn run_example_with(scenario: &Path, out_dir: &Path) -> String {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = cmd_run(scenario, out_dir, &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));

    let code = cmd_verify(
        &out_dir.join("ledger.ndjson"),
        &out_dir.join("snapshot.json"),
        &out_dir.join("keys.json"),
        &mut out,
        &mut err,
    );
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&out));

    let code = cmd_trace(
        &out_dir.join("ledger.ndjson"),
        &out_dir.join("snapshot.json"),
        "B0/1",
        TraceFormat::Text,
        &mut out,
        &mut err,
    );
    assert!(code == 0 || code == 3);
    String::from_utf8(out).unwrap()
}

pub fn run_example() -> String {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/regional.json");
    let dir = std::env::temp_dir().join(format!("pharmachain-run-{}", std::process::id()));
    let report = run_example_with(&scenario, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    report
}

#[allow(dead_code)]
fn main() {
    match std::env::args().nth(1) {
        Some(path) => {
            let dir = PathBuf::from("pharmachain-out");
            print!("{}", run_example_with(Path::new(&path), &dir));
            println!("artifacts in {}", dir.display());
        }
        None => print!("{}", run_example()),
    }
}
