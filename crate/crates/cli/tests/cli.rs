//! End-to-end runs of the `mixlogit` binary.

use std::path::Path;
use std::process::{Command, Output};

use mixlogit_core::mslestim::EstimationResult;
use mixlogit_core::postfit::{Numeraire, Tenure, VotSummary};

fn mixlogit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixlogit"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(output: &Output) {
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
}

/// Simulated data for 80 respondents from the M-MNL I reference estimates.
fn simulated(dir: &Path) -> String {
    ok(&mixlogit(&dir.join("sim"), &["simulate", "--spec", "paper_mmnl1", "--respondents", "80"]));
    dir.join("sim/choices.csv").to_str().unwrap().to_string()
}

#[test]
fn estimate_and_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("fit");
    ok(&mixlogit(&out, &["estimate", "--data", &data, "--spec", "paper_cmnl"]));
    ok(&mixlogit(
        &out,
        &["estimate", "--data", &data, "--spec", "paper_ecmnl", "--draws", "16", "--start", out.join("paper_cmnl.json").to_str().unwrap()],
    ));
    let cmnl: EstimationResult = serde_json::from_slice(&std::fs::read(out.join("paper_cmnl.json")).unwrap()).unwrap();
    let ecmnl: EstimationResult = serde_json::from_slice(&std::fs::read(out.join("paper_ecmnl.json")).unwrap()).unwrap();
    // A model without random terms is estimated with a single draw.
    assert_eq!(cmnl.draws.draws, 1);
    assert!(ecmnl.loglik >= cmnl.loglik);
    assert_eq!(cmnl.data_sha256, ecmnl.data_sha256);
    assert!(out.join("paper_ecmnl.manifest.json").exists());

    ok(&mixlogit(&out, &["compare", out.join("paper_cmnl.json").to_str().unwrap(), out.join("paper_ecmnl.json").to_str().unwrap()]));
    let md = std::fs::read_to_string(out.join("comparison.md")).unwrap();
    assert!(md.contains("C-MNL") && md.contains("EC-MNL") && md.contains("χ²"));
}

#[test]
fn compare_rejects_results_from_different_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    ok(&mixlogit(&dir.path().join("other"), &["--seed", "2", "simulate", "--spec", "paper_cmnl", "--respondents", "50"]));
    let other = dir.path().join("other/choices.csv");
    let out = dir.path().join("fit");
    ok(&mixlogit(&out, &["estimate", "--data", &data, "--spec", "paper_cmnl", "--name", "a"]));
    ok(&mixlogit(&out, &["estimate", "--data", other.to_str().unwrap(), "--spec", "paper_cmnl", "--name", "b"]));
    let r = mixlogit(&out, &["compare", out.join("a.json").to_str().unwrap(), out.join("b.json").to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2), "{}", String::from_utf8_lossy(&r.stderr));
}

#[test]
fn reference_vot_scales_with_income() {
    let dir = tempfile::tempdir().unwrap();
    let read = |sub: &str| -> Vec<VotSummary> {
        serde_json::from_slice(&std::fs::read(dir.path().join(sub).join("vot.json")).unwrap()).unwrap()
    };
    ok(&mixlogit(&dir.path().join("base"), &["vot", "--reference", "paper_mmnl2"]));
    ok(&mixlogit(&dir.path().join("double"), &["vot", "--reference", "paper_mmnl2", "--income-owner", "4489.4"]));
    let (base, double) = (read("base"), read("double"));
    assert_eq!(base.len(), 9);
    assert!((base[0].mean - 25.26).abs() < 0.05);
    for (b, d) in base.iter().zip(&double) {
        let owner = matches!(b.numeraire, Numeraire::HousingCost { tenure: Tenure::Owner, .. });
        let ratio = d.mean / b.mean;
        if owner {
            assert!((ratio - 2.0).abs() < 1e-12, "{ratio}");
        } else {
            assert!((ratio - 1.0).abs() < 1e-12, "{ratio}");
        }
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("fit");
    let unknown = mixlogit(&out, &["estimate", "--data", &data, "--spec", "no_such_spec"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown bundled spec"));
    let missing = mixlogit(&out, &["estimate", "--data", "does/not/exist.csv", "--spec", "paper_cmnl"]);
    assert_eq!(missing.status.code(), Some(2));
    let no_income = mixlogit(&out, &["vot", "--reference", "paper_mmnl2", "--income-owner", "0"]);
    assert_eq!(no_income.status.code(), Some(2));

    // Non-convergence still writes the result.
    let short = mixlogit(&out, &["estimate", "--data", &data, "--spec", "paper_ecmnl", "--draws", "8", "--max-iter", "2"]);
    assert_eq!(short.status.code(), Some(3));
    let r: EstimationResult = serde_json::from_slice(&std::fs::read(out.join("paper_ecmnl.json")).unwrap()).unwrap();
    assert_eq!(r.convergence.iterations, 2);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(dir.path());
    let out = dir.path().join("fit");
    ok(&mixlogit(&out, &["estimate", "--data", &data, "--spec", "paper_ecmnl", "--draws", "8"]));
    ok(&mixlogit(&out, &["replay", out.join("paper_ecmnl.manifest.json").to_str().unwrap()]));

    // A manifest whose recorded hash does not match the re-run fails.
    let manifest = out.join("paper_ecmnl.manifest.json");
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    let key = m["outputs"].as_object().unwrap().keys().find(|k| k.ends_with(".md")).unwrap().clone();
    m["outputs"][&key] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&manifest, serde_json::to_vec(&m).unwrap()).unwrap();
    let r = mixlogit(&out, &["replay", manifest.to_str().unwrap()]);
    assert!(!r.status.success());
}

#[test]
fn draws_dump_writes_the_tensor() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&mixlogit(&out, &["draws-dump", "--spec", "paper_mmnl2", "--respondents", "4", "--draws", "8"]));
    let bytes = std::fs::read(out.join("draws.bin")).unwrap();
    let tensor = mixlogit_core::qmc::DrawTensor::read_from(&bytes[..]).unwrap();
    assert_eq!((tensor.n_draws, tensor.dims()), (8, 9));
}
