//! Command implementations behind the `pharmachain` binary. Each command
//! writes its output to the given streams and returns the process exit
//! code.
//!
//! Exit codes: 0 clean, 1 input error, 2 post-run invariant failure,
//! 3 unknown batch, 4 verification findings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::crypto::KeyDirectory;
use crate::inject::apply_fault;
use crate::ledger::file::{read_ledger, verify_ledger_bytes, write_ledger};
use crate::ledger::Chain;
use crate::scenario::{check_invariants, simulate, FaultSpec, Scenario};
use crate::storage::{read_snapshot, write_snapshot, MedicineListStore, PayloadStore};
use crate::trace::TraceIndex;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_UNKNOWN_BATCH: i32 = 3;
pub const EXIT_FINDINGS: i32 = 4;

pub const LEDGER_FILE: &str = "ledger.ndjson";
pub const CLEAN_LEDGER_FILE: &str = "ledger.clean.ndjson";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const KEYS_FILE: &str = "keys.json";
pub const DELIVERY_LOG_FILE: &str = "delivery_log.ndjson";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "pharmachain", version, about = "Pharmaceutical supply-chain ledger simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the history and position of one batch or lot.
    Trace {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        batch_id: String,
        #[arg(long, value_enum, default_value = "text")]
        format: TraceFormat,
    },
    /// Check chain integrity and every batch's authenticity.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        keys: PathBuf,
    },
    /// Write a faulted copy of a ledger.
    Inject {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        fault: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Snapshot to copy alongside, receiving any injected payload.
        #[arg(long)]
        snapshot: Option<PathBuf>,
    },
}

pub fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match cli.command {
        Command::Run { scenario, out: dir } => cmd_run(&scenario, &dir, out, err),
        Command::Trace {
            ledger,
            snapshot,
            batch_id,
            format,
        } => cmd_trace(&ledger, &snapshot, &batch_id, format, out, err),
        Command::Verify { ledger, snapshot, keys } => cmd_verify(&ledger, &snapshot, &keys, out, err),
        Command::Inject {
            ledger,
            fault,
            out: dir,
            snapshot,
        } => cmd_inject(&ledger, &fault, &dir, snapshot.as_deref(), out, err),
    }
}

macro_rules! input {
    ($err:expr, $result:expr, $what:expr) => {
        match $result {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!($err, "error: {}: {e}", $what);
                return EXIT_INPUT;
            }
        }
    };
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn pretty<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

fn write_all(dir: &Path, files: &[(&str, &[u8])]) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_run(scenario_path: &Path, out_dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let bytes = input!(err, read(scenario_path), "reading scenario");
    let scenario = input!(err, Scenario::from_json(&bytes), scenario_path.display());
    let mut outcome = input!(err, simulate(&scenario), "simulation");
    let violations = check_invariants(&outcome);

    let clean = write_ledger(&outcome.chain);
    let mut chain = outcome.chain.clone();
    for fault in scenario.faults.iter().filter(|f| f.kind.is_artifact_fault()) {
        chain = input!(err, apply_fault(&chain, &mut outcome.payloads, fault), format!("{:?}", fault.kind));
    }
    let ledger = write_ledger(&chain);
    let mut files: Vec<(&str, &[u8])> = Vec::new();
    files.push((LEDGER_FILE, &ledger));
    if ledger != clean {
        files.push((CLEAN_LEDGER_FILE, &clean));
    }
    let snapshot = write_snapshot(&outcome.formulary, &outcome.payloads);
    let keys = outcome.keys.to_json();
    let deliveries = outcome.deliveries.to_ndjson();
    let verdicts = pretty(&outcome.verdicts);
    let summary = pretty(&outcome.summary);
    files.extend([
        (SNAPSHOT_FILE, snapshot.as_slice()),
        (KEYS_FILE, keys.as_slice()),
        (DELIVERY_LOG_FILE, deliveries.as_slice()),
        (VERDICTS_FILE, verdicts.as_slice()),
        (SUMMARY_FILE, summary.as_slice()),
    ]);
    input!(err, write_all(out_dir, &files), "writing artifacts");

    let s = &outcome.summary;
    let _ = writeln!(
        out,
        "run: {} blocks, {} transactions; {} batches, {} accepted, {} lots delivered, {} shortfalls",
        s.blocks, s.transactions, s.batches, s.accepted, s.delivered, s.shortfalls
    );
    for (label, n) in &s.rejected_by_label {
        let _ = writeln!(out, "rejected {n}: {label}");
    }
    for w in &outcome.warnings {
        let _ = writeln!(out, "advisory: {w}");
    }
    if !violations.is_empty() {
        for v in &violations {
            let _ = writeln!(err, "invariant violated: {v}");
        }
        return EXIT_INVARIANT;
    }
    EXIT_OK
}

fn load_chain(ledger: &Path) -> Result<Chain, String> {
    let bytes = read(ledger)?;
    read_ledger(&bytes).map_err(|e| format!("{}: {e}", ledger.display()))
}

fn load_snapshot(path: &Path) -> Result<(MedicineListStore, PayloadStore), String> {
    let bytes = read(path)?;
    read_snapshot(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn cmd_trace(
    ledger: &Path,
    snapshot: &Path,
    batch_id: &str,
    format: TraceFormat,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let chain = input!(err, load_chain(ledger), "reading ledger");
    let (_, payloads) = input!(err, load_snapshot(snapshot), "reading snapshot");
    let report = TraceIndex::new(&chain, &payloads).trace(batch_id);
    let _ = match format {
        TraceFormat::Json => out.write_all(&pretty(&report)),
        TraceFormat::Text => out.write_all(report.render_text().as_bytes()),
    };
    if report.unknown_batch {
        EXIT_UNKNOWN_BATCH
    } else {
        EXIT_OK
    }
}

pub fn cmd_verify(ledger: &Path, snapshot: &Path, keys: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let bytes = input!(err, read(ledger), "reading ledger");
    let (_, payloads) = input!(err, load_snapshot(snapshot), "reading snapshot");
    let key_bytes = input!(err, read(keys), "reading keys");
    let keys = input!(err, KeyDirectory::from_json(&key_bytes), keys.display());

    let integrity = verify_ledger_bytes(&bytes, &keys, &payloads);
    let findings = integrity.findings();
    for f in &findings {
        let _ = writeln!(out, "{f}");
    }
    let chain = match read_ledger(&bytes) {
        Ok(chain) => chain,
        Err(e) => {
            let _ = writeln!(out, "authenticity not checked: {e}");
            let _ = writeln!(out, "FAIL: {} integrity findings", findings.len());
            return EXIT_FINDINGS;
        }
    };
    let index = TraceIndex::new(&chain, &payloads);
    let mut batches = 0;
    let mut failed = 0;
    for batch_id in index.batch_ids() {
        batches += 1;
        let verdict = index.verify(batch_id, &keys);
        if !verdict.authentic {
            failed += 1;
            for f in &verdict.findings {
                let _ = writeln!(out, "batch {batch_id}: {f}");
            }
        }
    }
    if findings.is_empty() && failed == 0 {
        let _ = writeln!(out, "OK: {} blocks, {batches} batches", chain.len());
        EXIT_OK
    } else {
        let _ = writeln!(
            out,
            "FAIL: {} integrity findings, {failed} of {batches} batches not authentic",
            findings.len()
        );
        EXIT_FINDINGS
    }
}

pub fn cmd_inject(
    ledger: &Path,
    fault: &Path,
    out_dir: &Path,
    snapshot: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let target = out_dir.join(LEDGER_FILE);
    let same = |a: &Path, b: &Path| match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    };
    if same(ledger, &target) || snapshot.is_some_and(|s| same(s, &out_dir.join(SNAPSHOT_FILE))) {
        let _ = writeln!(err, "error: refusing to overwrite the input; choose another --out");
        return EXIT_INPUT;
    }
    let chain = input!(err, load_chain(ledger), "reading ledger");
    let spec_bytes = input!(err, read(fault), "reading fault spec");
    let spec = input!(err, FaultSpec::from_json(&spec_bytes), fault.display());
    let (formulary, mut payloads) = match snapshot {
        Some(p) => input!(err, load_snapshot(p), "reading snapshot"),
        None => Default::default(),
    };
    let faulted = input!(err, apply_fault(&chain, &mut payloads, &spec), format!("{:?}", spec.kind));
    let ledger_bytes = write_ledger(&faulted);
    let snapshot_bytes = write_snapshot(&formulary, &payloads);
    let mut files: Vec<(&str, &[u8])> = vec![(LEDGER_FILE, &ledger_bytes)];
    if snapshot.is_some() {
        files.push((SNAPSHOT_FILE, &snapshot_bytes));
    }
    input!(err, write_all(out_dir, &files), "writing artifacts");
    let _ = writeln!(out, "injected {:?} into {}", spec.kind, target.display());
    EXIT_OK
}
