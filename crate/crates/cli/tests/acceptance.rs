//! CLI acceptance: reproducibility of benchmark outputs (criterion 9)
//! plus end-to-end behavior of every subcommand.

use std::path::Path;
use std::process::Command;

fn ssvep() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ssvep"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawning ssvep");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn make_dataset(dir: &Path, blocks: u32, duration: &str) {
    run_ok(ssvep().args(["synth", "--out"]).arg(dir).args([
        "--channels",
        "4",
        "--blocks",
        &blocks.to_string(),
        "--duration",
        duration,
        "--snr-db",
        "0",
        "--mixing-seed",
        "5",
        "--noise-seed",
        "6",
    ]));
}

/// Criterion 9: two bench runs with identical config and seed must
/// produce byte-identical CSV outputs.
#[test]
fn criterion_9_bench_outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_dataset(&data, 4, "2.5");
    let run = |out: &Path| {
        run_ok(
            ssvep()
                .args(["bench", "--data"])
                .arg(&data)
                .args([
                    "--methods",
                    "cca,trca,adtrca",
                    "--tw",
                    "0.5:2:0.5",
                    "--n-train",
                    "2,3",
                    "--seed",
                    "42",
                    "--out",
                ])
                .arg(out),
        );
    };
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    run(&out_a);
    run(&out_b);
    // run_metadata.json echoes its own output path; everything else must
    // match byte for byte.
    for file in ["report.csv", "curves.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    println!("[criterion 9] PASS: repeated bench runs are byte-identical");
}

#[test]
fn bench_grid_shape_matches_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_dataset(&data, 3, "4.5");
    let out = tmp.path().join("bench");
    run_ok(
        ssvep()
            .args(["bench", "--data"])
            .arg(&data)
            .args([
                "--methods",
                "trca,adtrca",
                "--tw",
                "0.5:4:0.5",
                "--channels",
                "C1,C2",
                "--out",
            ])
            .arg(&out),
    );
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    // Header + 8 windows x 2 methods x 3 folds.
    assert_eq!(report.lines().count(), 1 + 8 * 2 * 3);
    assert!(report.lines().skip(1).all(|l| l.contains("C1+C2")));
}

#[test]
fn train_then_classify_identity_filter_degenerates_to_trca() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    make_dataset(&data, 4, "1.5");
    let trca_model = tmp.path().join("trca.ssvf");
    let ad_model = tmp.path().join("ad.ssvf");
    run_ok(
        ssvep()
            .args(["train", "--data"])
            .arg(&data)
            .args(["--method", "trca", "--tw-train", "1.0", "--out"])
            .arg(&trca_model),
    );
    run_ok(
        ssvep()
            .args(["train", "--data"])
            .arg(&data)
            .args([
                "--method",
                "adtrca",
                "--tw-train",
                "1.0",
                "--debug-identity-filter",
                "--out",
            ])
            .arg(&ad_model),
    );
    let classify = |model: &Path, out: &Path| {
        run_ok(
            ssvep()
                .args(["classify", "--data"])
                .arg(&data)
                .args(["--tw-train", "1.0", "--model"])
                .arg(model)
                .arg("--out")
                .arg(out),
        );
    };
    let pred_trca = tmp.path().join("trca.csv");
    let pred_ad = tmp.path().join("ad.csv");
    classify(&trca_model, &pred_trca);
    classify(&ad_model, &pred_ad);
    let labels = |path: &Path| -> Vec<(String, String)> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| {
                let mut fields = l.split(',');
                let _block = fields.next().unwrap();
                (
                    fields.next().unwrap().to_string(),
                    fields.next().unwrap().to_string(),
                )
            })
            .collect()
    };
    assert_eq!(labels(&pred_trca), labels(&pred_ad));
}

#[test]
fn multi_subject_bench_aggregates_over_subjects() {
    let tmp = tempfile::tempdir().unwrap();
    let subj_a = tmp.path().join("subj_a");
    let subj_b = tmp.path().join("subj_b");
    make_dataset(&subj_a, 3, "1.5");
    run_ok(ssvep().args(["synth", "--out"]).arg(&subj_b).args([
        "--channels",
        "4",
        "--blocks",
        "3",
        "--duration",
        "1.5",
        "--snr-db",
        "0",
        "--mixing-seed",
        "9",
        "--noise-seed",
        "10",
    ]));
    let out = tmp.path().join("bench");
    run_ok(
        ssvep()
            .args(["bench", "--data"])
            .arg(&subj_a)
            .arg("--data")
            .arg(&subj_b)
            .args(["--methods", "cca,trca", "--tw", "1.0", "--out"])
            .arg(&out),
    );
    for subdir in ["subj_a", "subj_b"] {
        assert!(out.join(subdir).join("report.csv").exists());
        assert!(out.join(subdir).join("summary.json").exists());
    }
    let combined = std::fs::read_to_string(out.join("subjects_summary.csv")).unwrap();
    // Header + 2 methods x 1 window x 1 channel set x 1 n_train.
    assert_eq!(combined.lines().count(), 3);
    assert!(combined.lines().nth(1).unwrap().contains("cca"));
    let fields: Vec<&str> = combined.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields[4], "2", "n_subjects column");
}

#[test]
fn itr_prints_closed_form() {
    let out = run_ok(ssvep().args(["itr", "--k", "40", "--p", "1", "--t", "1"]));
    assert_eq!(out.trim(), "319.316");
}

#[test]
fn convert_roundtrips_csv_trials() {
    let tmp = tempfile::tempdir().unwrap();
    let csv_dir = tmp.path().join("csv");
    std::fs::create_dir_all(&csv_dir).unwrap();
    for b in 0..2 {
        for t in 0..2 {
            let mut text = String::new();
            for r in 0..32 {
                text.push_str(&format!("{}.5,{}\n", r, (b + 1) * (t + 1) * r));
            }
            std::fs::write(csv_dir.join(format!("block{b}_target{t}.csv")), text).unwrap();
        }
    }
    let spec = tmp.path().join("import.json");
    std::fs::write(
        &spec,
        serde_json::json!({
            "sampling_rate_hz": 32.0,
            "stimulus_frequencies_hz": [8.0, 10.0],
            "channel_names": ["O1", "O2"],
            "n_blocks": 2,
            "latency_s": 0.25
        })
        .to_string(),
    )
    .unwrap();
    let out = tmp.path().join("converted");
    run_ok(
        ssvep()
            .args(["convert", "--csv-dir"])
            .arg(&csv_dir)
            .arg("--spec")
            .arg(&spec)
            .arg("--out")
            .arg(&out),
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["latency_s"], 0.25);
    assert_eq!(manifest["n_targets"], 2);
    assert_eq!(manifest["n_samples"], 32);
}

#[test]
fn unknown_flags_and_methods_fail_fast_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let status = ssvep()
        .args(["bench", "--data", "nowhere", "--methods", "psda", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("psda"));
    let status = ssvep().args(["synth", "--no-such-flag"]).output().unwrap();
    assert!(!status.status.success());
    assert!(!out.join("report.csv").exists());
}
