use std::path::Path;
use std::process::{Command, Output};

fn loadplan(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadplan"))
        .args(args)
        .env("LOADPLAN_OUT_DIR", out_dir)
        .output()
        .expect("spawn loadplan")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_train_calibrate_predict() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let summary = ok(loadplan(dir, &["generate", "--n-loads", "4000", "--seed", "3"]));
    assert!(summary.contains("external_shift"), "{summary}");
    let data = dir.join("loads.csv");
    assert!(data.exists());

    let exp = dir.join("exp.json");
    std::fs::write(&exp, r#"{"test_window_days": 20, "train": {"max_epochs": 2, "patience": 2}}"#).unwrap();
    let model = dir.join("model");
    ok(loadplan(
        dir,
        &["train", "--config", p(&exp), "--data", p(&data), "--out", p(&model)],
    ));
    for f in ["cascade.json", "schema.json", "calibration_predictions.csv", "test_loads.csv"] {
        assert!(model.join(f).exists(), "missing {f}");
    }

    ok(loadplan(
        dir,
        &[
            "calibrate",
            "--predictions",
            p(&model.join("calibration_predictions.csv")),
            "--model",
            p(&model),
        ],
    ));
    let cal: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(model.join("calibration/sort_week.json")).unwrap()).unwrap();
    assert_eq!(cal["config"]["alpha"], 0.05);

    let preds = dir.join("preds.csv");
    ok(loadplan(
        dir,
        &[
            "predict",
            "--model",
            p(&model),
            "--data",
            p(&model.join("test_loads.csv")),
            "--sets",
            "--out",
            p(&preds),
        ],
    ));
    let mut rdr = csv::Reader::from_path(&preds).unwrap();
    let header = rdr.headers().unwrap().clone();
    let size_col = header.iter().position(|h| h == "building_week_set_size").unwrap();
    let set_col = header.iter().position(|h| h == "building_week_set").unwrap();
    let pred_col = header.iter().position(|h| h == "sort_day_pred").unwrap();
    let mut n = 0;
    for row in rdr.records() {
        let row = row.unwrap();
        let size: usize = row[size_col].parse().unwrap();
        assert!((1..=6).contains(&size));
        assert_eq!(row[set_col].split('|').count(), size);
        assert!(row[pred_col].starts_with('S'));
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn evaluate_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let text = ok(loadplan(
        dir,
        &[
            "evaluate",
            "--n-loads",
            "3000",
            "--horizons",
            "1",
            "--test-window-days",
            "20",
            "--max-epochs",
            "1",
            "--d-block",
            "64",
        ],
    ));
    assert!(text.contains("conformal prediction sets"), "{text}");
    let report = dir.join("report.json");
    assert!(dir.join("report.csv").exists());
    let csv_out = dir.join("again.csv");
    let again = ok(loadplan(dir, &["report", "--report", p(&report), "--csv", p(&csv_out)]));
    assert_eq!(again, text);
    assert_eq!(
        std::fs::read_to_string(&csv_out).unwrap(),
        std::fs::read_to_string(dir.join("report.csv")).unwrap()
    );
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = loadplan(dir, &["report", "--report", p(&dir.join("missing.json"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let out = loadplan(dir, &["evaluate", "--backbone", "transformer", "--n-loads", "500", "--horizons", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("transformer"));
    let out = loadplan(dir, &["evaluate", "--n-blocks", "1"]);
    assert!(!out.status.success());
}
