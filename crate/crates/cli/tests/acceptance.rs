//! Runs `bergmc validate` on the shipped default config (full profile) and
//! prints one verdict line per acceptance criterion.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};

fn main() -> ExitCode {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.cfg");
    let text = fs::read_to_string(&shipped).expect("shipped default config");
    let dir = tempfile::tempdir().expect("temp dir");
    let cfg = dir.path().join("default.cfg");
    fs::write(&cfg, text.replace("dir = ../results/default", "dir = out")).expect("write config");

    println!("acceptance: bergmc validate --config {}", shipped.display());
    let out = Command::new(env!("CARGO_BIN_EXE_bergmc"))
        .args(["validate", "--config"])
        .arg(&cfg)
        .output()
        .expect("bergmc runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let verdicts: Vec<&str> = stdout.lines().filter(|l| l.starts_with("criterion ")).collect();
    for v in &verdicts {
        println!("{v}");
    }
    let report = fs::read_to_string(dir.path().join("out/validation_report.txt"));
    if let Ok(r) = &report {
        println!("\n{r}");
    }
    let code = out.status.code();
    let ok = code == Some(0) && verdicts.len() == 8 && report.is_ok();
    if !ok {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
        println!("acceptance: FAIL (exit {code:?}, {} verdicts)", verdicts.len());
        return ExitCode::FAILURE;
    }
    println!("acceptance: all 8 criteria PASS");
    ExitCode::SUCCESS
}
