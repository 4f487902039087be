use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use paracflow_cli::{run, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_paracflow"))
}

fn small_bo(out: &Path, workers: usize) -> RunConfig {
    let text = format!(
        r#"{{
            "experiment": "bo",
            "seed": 11,
            "out_dir": {out:?},
            "workers": {workers},
            "bo": {{
                "context_dims": [2],
                "families": ["mlp", "paracflow"],
                "trials": 2,
                "total_steps": 100,
                "init_steps": 30,
                "refit_every": 50
            }}
        }}"#
    );
    RunConfig::from_json(&text).unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn bo_trace_has_one_row_per_step_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    run(&small_bo(&a, 1)).unwrap();
    run(&small_bo(&b, 1)).unwrap();
    run(&small_bo(&c, 3)).unwrap();

    let trace = std::fs::read_to_string(a.join("bo_trid_dc2_mlp_lcb_trial0.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next().unwrap(), "step,context_hash,action,value,regret,cumulative_regret");
    assert_eq!(lines.count(), 100);

    let fa = csv_files(&a);
    assert_eq!(fa.len(), 4 + 2 + 1);
    assert_eq!(fa, csv_files(&b));
    assert_eq!(fa, csv_files(&c), "worker count changed the results");
}

#[test]
fn families_share_contexts_within_a_trial() {
    let tmp = tempfile::tempdir().unwrap();
    run(&small_bo(tmp.path(), 2)).unwrap();
    let col = |name: &str| -> Vec<String> {
        std::fs::read_to_string(tmp.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect()
    };
    assert_eq!(col("bo_trid_dc2_mlp_lcb_trial1.csv"), col("bo_trid_dc2_paracflow_lcb_trial1.csv"));
    assert_ne!(col("bo_trid_dc2_mlp_lcb_trial0.csv"), col("bo_trid_dc2_mlp_lcb_trial1.csv"));
}

#[test]
fn invalid_config_exits_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"experiment": "bo", "seed": 1, "bo": {"context_dims": []}}"#).unwrap();
    let out = bin().arg("run").arg(&cfg).arg("--out-dir").arg(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bo.context_dims"));

    std::fs::write(&cfg, r#"{"experiment": "nope", "seed": 1}"#).unwrap();
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("kt.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "kt", "seed": 1, "kt": {"context_dim": 2, "sizes": [40], "trials": 5, "test_contexts": 5, "families": ["mlp"]}}"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin().args(["run"]).arg(&cfg).arg("--out-dir").arg(&out_dir).args(["--trials", "2", "--seed", "4"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(out_dir.join("kt_report_seed4.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2);
}

#[test]
fn verify_subcommand_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("verify").arg("--out-dir").arg(tmp.path()).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(tmp.path().join("verify.csv").exists());
}

#[test]
fn taiji_run_writes_a_checkpoint_that_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "experiment": "taiji",
            "seed": 3,
            "out_dir": {:?},
            "taiji": {{
                "samples": 300,
                "test_samples": 100,
                "grid_points": 11,
                "derivative_points": 9,
                "params": [0.5],
                "flow": {{"train": {{"epochs": 3}}}},
                "eliminator": {{"train": {{"epochs": 2}}}}
            }}
        }}"#,
        tmp.path()
    );
    let lines = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert!(lines.iter().any(|l| l.starts_with("taiji eliminator")));
    let ckpt = tmp.path().join("taiji_model_seed3.json");
    let out = bin().arg("checkpoint").arg(&ckpt).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("identical true"));
    let grid = std::fs::read_to_string(tmp.path().join("taiji_grid_y0p5_seed3.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 121);

    let corrupt = tmp.path().join("corrupt.json");
    let full = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(&corrupt, &full[..full.len() / 2]).unwrap();
    let out = bin().arg("checkpoint").arg(&corrupt).output().unwrap();
    assert!(!out.status.success());
    std::fs::write(&corrupt, full.replace("\"schema_version\":1", "\"schema_version\":7")).unwrap();
    let out = bin().arg("checkpoint").arg(&corrupt).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema version 7"));
}

#[test]
fn decomp_and_compare_run_small() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"experiment": "decomp", "seed": 2, "out_dir": {:?}, "decomp": {{"dims": [2], "maps": 2, "grid_points": 15}}}}"#,
        tmp.path()
    );
    let lines = run(&RunConfig::from_json(&text).unwrap()).unwrap();
    assert_eq!(lines.len(), 1);
    assert_eq!(std::fs::read_to_string(tmp.path().join("decomp_seed2.csv")).unwrap().lines().count(), 3);

    let text = format!(
        r#"{{"experiment": "taiji_compare", "seed": 2, "out_dir": {:?}, "compare": {{
            "samples": 100, "test_samples": 20, "mlp_hidden": [4], "resnet_hidden": [4],
            "flow": {{"hidden": 4}}, "train": {{"epochs": 1}}, "grid_points": 5, "coverage_cells": 4, "params": [1.0]}}}}"#,
        tmp.path()
    );
    run(&RunConfig::from_json(&text).unwrap()).unwrap();
    let cov = std::fs::read_to_string(tmp.path().join("compare_coverage_seed2.csv")).unwrap();
    assert_eq!(cov.lines().count(), 1 + 3);
}
