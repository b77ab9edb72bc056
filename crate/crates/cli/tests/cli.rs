use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--set",
    "backbone=\"tiny\"",
    "--set",
    "head_channels=3",
    "--set",
    "classifier_hidden=4",
    "--set",
    "input_size=32",
    "--set",
    "epochs_step1=1",
    "--set",
    "epochs_step2=1",
    "--set",
    "batch_size=4",
    "--set",
    "precision=\"f64\"",
];

fn fmdl(args: &[&str]) -> Output {
    fmdl_env(args, &[])
}

fn fmdl_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fmdl"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth(dir: &Path, count: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--count", count, "--seed", "7", "--size", "32", "--out", s(dir)];
    args.extend_from_slice(extra);
    let o = fmdl(&args);
    assert!(o.status.success(), "{}", stderr(&o));
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    train_env(data, out, extra, &[])
}

fn train_env(data: &Path, out: &Path, extra: &[&str], env: &[(&str, &str)]) -> Output {
    let manifest = data.join("manifest.jsonl");
    let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(out)];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    fmdl_env(&args, env)
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["", "images", "masks"] {
        let d = dir.join(sub);
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&d)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        for p in entries {
            let rel = p.strip_prefix(dir).unwrap().to_path_buf();
            out.push((rel, std::fs::read(&p).unwrap()));
        }
    }
    out
}

#[test]
fn synth_writes_pairs_and_is_repeatable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "10", &[]);
    synth(b.path(), "10", &[]);
    let manifest = std::fs::read_to_string(a.path().join("manifest.jsonl")).unwrap();
    let lines: Vec<&str> = manifest.lines().collect();
    assert_eq!(lines.len(), 20);
    assert_eq!(lines.iter().filter(|l| l.contains("\"real\"")).count(), 10);
    assert_eq!(std::fs::read_dir(a.path().join("images")).unwrap().count(), 20);
    assert!(a.path().join("config.toml").exists());
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let o = fmdl(&["synth", "--count", "3", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
    assert_eq!(fmdl(&["--help"]).status.code(), Some(0));
    assert_eq!(fmdl(&["train", "--help"]).status.code(), Some(0));
    assert_eq!(fmdl(&[]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2", &[]);
    let out = dir.path().join("run");
    let o = train(dir.path(), &out, &["--set", "learning_rate=0.1"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("learning_rate"));

    let o = fmdl_env(&["synth", "--count", "1", "--out", s(&out)], &[("FMDL_WORKERS", "0")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fmdl(&["train", "--manifest", s(&dir.path().join("none.jsonl")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_localize_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "6", &["--val-count", "2", "--test-count", "3"]);
    let run = dir.path().join("run");
    let o = train_env(&data, &run, &[], &[("FMDL_WORKERS", "2")]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["config.toml", "train_log.jsonl", "step1.ckpt", "step2.ckpt", "model.ckpt", "summary.json"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run.join("train_log.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for k in ["step", "L_c", "L_n", "L_b", "total"] {
        assert!(first.get(k).is_some(), "{k}");
    }

    let ckpt = run.join("model.ckpt");
    let ev = dir.path().join("eval");
    let o = fmdl(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--out",
        s(&ev),
        "--name",
        "tiny",
        "--curves",
        "--set",
        "precision=\"f64\"",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ev.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["detection"]["samples"], 6);
    assert_eq!(report["localization"]["masks"], 3);
    assert!(ev.join("roc.csv").exists() && ev.join("pr.csv").exists());

    let loc = dir.path().join("loc");
    let o = fmdl(&[
        "localize",
        "--checkpoint",
        s(&ckpt),
        "--input",
        s(&data.join("images/test_00009_fake.png")),
        "--out",
        s(&loc),
        "--debug",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(loc.join("test_00009_fake.png").exists());
    assert!(loc.join("test_00009_fake.json").exists());
    assert!(loc.join("debug/test_00009_fake_f3.f32").exists());

    // a report without a localization block renders blank cells
    let mut bare = report.clone();
    bare.as_object_mut().unwrap().remove("localization");
    bare["name"] = "bare".into();
    let bare_path = dir.path().join("bare.json");
    std::fs::write(&bare_path, serde_json::to_string(&bare).unwrap()).unwrap();
    let rep = dir.path().join("report");
    let o = fmdl(&["report", s(&ev.join("report.json")), s(&bare_path), "--out", s(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "run,samples,acc,auc,eer,ap,fpr,fnr,iou,pbca,iinc");
    assert!(rows[1].starts_with("tiny,6,"));
    assert!(rows[2].starts_with("bare,6,") && rows[2].ends_with(",,,"));
    assert!(rep.join("report.txt").exists());
}

#[test]
fn training_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4", &["--val-count", "2"]);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(train(&data, &a, &[]).status.success());
    assert!(train(&data, &b, &[]).status.success());
    for f in ["model.ckpt", "train_log.jsonl", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    // resuming step 2 from the step-1 checkpoint reproduces the two-step run
    let c = dir.path().join("c");
    let init = a.join("step1.ckpt");
    let o = train(&data, &c, &["--step", "2", "--init", s(&init)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(a.join("model.ckpt")).unwrap(), std::fs::read(c.join("model.ckpt")).unwrap());
}

#[test]
fn eval_on_reals_only_reports_single_class() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4", &[]);
    let run = dir.path().join("run");
    assert!(train(&data, &run, &[]).status.success());
    let text = std::fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    let reals: String = text.lines().filter(|l| l.contains("\"real\"")).map(|l| format!("{l}\n")).collect();
    let manifest = data.join("reals.jsonl");
    std::fs::write(&manifest, reals).unwrap();
    let o = fmdl(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.ckpt")),
        "--manifest",
        s(&manifest),
        "--split",
        "all",
        "--out",
        s(&dir.path().join("eval")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("single-class"), "{}", stderr(&o));
}

#[test]
fn diverging_training_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "4", &[]);
    let o = train(&data, &dir.path().join("run"), &["--set", "lr=1e300", "--set", "epochs_step1=3"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn extract_noise_and_make_masks_write_arrays() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "3", &[]);
    let noise = dir.path().join("noise");
    let o = fmdl(&["extract-noise", "--input", s(&data.join("images")), "--out", s(&noise), "--sigma", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = std::fs::read(noise.join("train_00000_fake.f32")).unwrap();
    assert_eq!(raw.len(), 3 * 32 * 32 * 4);
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(noise.join("train_00000_fake.json")).unwrap()).unwrap();
    assert_eq!(side["sigma"], 5.0);
    assert_eq!(side["channels"], 3);
    let o = fmdl(&["extract-noise", "--input", s(&data.join("images")), "--out", s(&noise), "--filter", "srm"]);
    assert!(o.status.success());

    let masks = dir.path().join("masks");
    let o = fmdl(&[
        "make-masks",
        "--manifest",
        s(&data.join("manifest.jsonl")),
        "--out",
        s(&masks),
        "--input-size",
        "32",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(masks.join("masks/train_00000_fake.png").exists());
    let s1 = std::fs::read(masks.join("masks/train_00000_fake_s1.f32")).unwrap();
    assert_eq!(s1.len(), 8 * 8 * 4);
    let manifest = std::fs::read_to_string(masks.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 6);
    let o = fmdl(&["make-masks", "--manifest", s(&data.join("manifest.jsonl")), "--out", s(&masks), "--threshold", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
