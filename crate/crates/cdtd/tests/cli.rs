mod common;

use cdtd::Checkpoint;
use cdtd_core::ScheduleMode;
use common::{cdtd, desk_files, p};

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_then_sample() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 600, ScheduleMode::PerType);
    let model = dir.path().join("model.ckpt");
    let o = cdtd(&["train", "--config", p(&f.config), "--data", p(&f.data), "--schema", p(&f.schema), "--out", p(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("step=50 loss="));
    let ckpt = Checkpoint::load(&model).unwrap();
    assert_eq!(ckpt.meta.steps, 50);
    assert_eq!(ckpt.registry.entries.len(), 2);
    assert_eq!(ckpt.meta.validation.len(), 2);

    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cdtd(&["sample", "--model", p(&model), "--n", "300", "--steps", "20", "--seed", "42", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("x1,x2,c1,c2\n"));
    assert_eq!(text.lines().count(), 301);

    let one = dir.path().join("one.csv");
    let o = cdtd(&["sample", "--model", p(&model), "--n", "10", "--steps", "1", "--out", p(&one)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = std::fs::read_to_string(&one).unwrap();
    assert!(rows.lines().skip(1).all(|l| l.split(',').take(2).all(|v| v.parse::<f64>().unwrap().is_finite())));

    let o = cdtd(&["sample", "--model", p(&model), "--n", "0", "--out", p(&one)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn per_feature_config_gives_one_schedule_per_feature() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 300, ScheduleMode::PerFeature);
    let model = dir.path().join("model.ckpt");
    let o = cdtd(&["train", "--config", p(&f.config), "--data", p(&f.data), "--schema", p(&f.schema), "--out", p(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(Checkpoint::load(&model).unwrap().registry.entries.len(), 4);
}

#[test]
fn missing_files_and_bad_headers_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 100, ScheduleMode::PerType);
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("m.ckpt");
    let o = cdtd(&["train", "--data", p(&f.data), "--schema", p(&missing), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("schema not found"), "{}", stderr(&o));

    let o = cdtd(&["sample", "--model", p(&missing), "--n", "5", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,x2,c1,other\n1,2,a,b\n").unwrap();
    let report = dir.path().join("r.json");
    let o = cdtd(&["eval", "--real", p(&f.data), "--fake", p(&bad), "--schema", p(&f.schema), "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = cdtd(&["sample", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(cdtd(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_of_real_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 10, ScheduleMode::PerType);
    let real = dir.path().join("real.csv");
    let o = cdtd(&["make-synthetic", "--spec", p(&f.spec), "--n", "5000", "--seed", "3", "--out", p(&real)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = dir.path().join("r.json");
    let o = cdtd(&["eval", "--real", p(&real), "--fake", p(&real), "--schema", p(&f.schema), "--out", p(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["jsd_mean"].as_f64().unwrap() <= 0.01);
    assert!(r["wd_mean"].as_f64().unwrap() <= 0.01);
    assert_eq!(r["jsd_per_feature"].as_array().unwrap().len(), 2);
    assert_eq!(r["wd_per_feature"].as_array().unwrap().len(), 2);
}

#[test]
fn make_synthetic_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = desk_files(dir.path(), 10, ScheduleMode::PerType);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cdtd(&["make-synthetic", "--spec", p(&f.spec), "--n", "500", "--seed", "9", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let o = cdtd(&["make-synthetic", "--spec", p(&f.data), "--n", "5", "--out", p(&a)]);
    assert_eq!(o.status.code(), Some(2));
}
