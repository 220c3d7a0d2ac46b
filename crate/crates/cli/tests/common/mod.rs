#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn stickrec(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stickrec"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("failed to launch stickrec")
}

/// Runs every subcommand at small sizes into `out`, feeding each one the
/// artifacts of the previous ones. Returns the failing step, if any.
pub fn run_pipeline(out: &Path, seed: u64) -> Result<(), String> {
    let seed = seed.to_string();
    let steps: [&[&str]; 10] = [
        &["simulate", "--users", "400"],
        &["train-short", "--data"],
        &["train-stickiness", "--data"],
        &["build-resurfacing", "--data"],
        &["score", "--states"],
        &["ab-test", "--users", "300"],
        &["holdback", "--users", "300"],
        &["calibration", "--heldout", "400"],
        &["sample-complexity", "--grid", "100,200", "--aux", "200"],
        &["policy-improve", "--clusters", "3", "--data"],
    ];
    let trajectories = out.join("trajectories.jsonl");
    let states = out.join("states.jsonl");
    for step in steps {
        let mut args: Vec<&str> = vec!["--seed", &seed];
        args.extend_from_slice(step);
        match *step.last().unwrap() {
            "--data" => args.push(trajectories.to_str().unwrap()),
            "--states" => args.push(states.to_str().unwrap()),
            _ => {}
        }
        let output = stickrec(out, &args);
        if !output.status.success() {
            return Err(format!(
                "{}: {}",
                step[0],
                String::from_utf8_lossy(&output.stderr)
            ));
        }
    }
    Ok(())
}

/// Every file in `dir` with its bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}
