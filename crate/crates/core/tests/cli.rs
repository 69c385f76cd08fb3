use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use artic::dataset::{object_to_json, synth::synth_object};

fn artic(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artic"))
        .current_dir(cwd)
        .env_remove("ARTIC_HOME")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_object(dir: &Path, name: &str, category: &str, seed: u64) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, object_to_json(&synth_object(category, seed))).unwrap();
    p
}

#[test]
fn evaluate_self_prints_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    write_object(dir.path(), "x.aoj", "Refrigerator", 1);
    let o = artic(dir.path(), &["--out", "out", "evaluate", "--gen", "x.aoj", "--gt", "x.aoj"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,rs_giou,as_giou,rs_cdist,as_cdist,rs_cd,as_cd,aor,graph_acc");
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(row[0], "refrigerator-000001");
    // every distance is zero; graph accuracy of a graph against itself is 1
    assert!(row[1..8].iter().all(|v| *v == "0" || v.is_empty()), "{}", lines[1]);
    assert_eq!(row[8], "1");
    assert!(dir.path().join("out/report.csv").exists());
    assert!(dir.path().join("out/report.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = artic(dir.path(), &["bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = artic(dir.path(), &["evaluate", "--gen", "a.aoj"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--gen"));
    let o = artic(dir.path(), &["sample", "--checkpoint", "missing.safetensors"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--checkpoint"), "{}", stderr(&o));
    let o = artic(dir.path(), &["train", "--epochs", "many"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--epochs"));

    std::fs::write(dir.path().join("bad.json"), r#"{"train": {"batch_size": 0}}"#).unwrap();
    let o = artic(dir.path(), &["--config", "bad.json", "train", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
    std::fs::write(dir.path().join("typo.json"), r#"{"trian": {}}"#).unwrap();
    let o = artic(dir.path(), &["--config", "typo.json", "synth"]);
    assert_eq!(o.status.code(), Some(2));
    // nothing was written by the rejected commands
    assert!(!dir.path().join("artic-out").exists());
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = object_to_json(&synth_object("Table", 0)).replacen(r#""parent": null"#, r#""parent": 1"#, 1);
    std::fs::write(dir.path().join("cyclic.aoj"), text).unwrap();
    let o = artic(dir.path(), &["--out", "out", "ingest", "cyclic.aoj"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("cyclic.aoj"));
}

#[test]
fn every_command_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in [
        "synth",
        "ingest",
        "augment",
        "features",
        "train",
        "sample",
        "predict-graph",
        "retrieve",
        "evaluate",
        "attn",
        "serve",
    ] {
        let o = artic(dir.path(), &[cmd, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}");
        assert!(stdout(&o).contains("--out"), "{cmd}");
    }
}

#[test]
fn training_is_reproducible_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let o = artic(dir.path(), &["--out", out, "train", "--epochs", "1", "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(dir.path().join(out).join("train_log.jsonl")).unwrap()
    };
    let a = run("a");
    assert!(!a.is_empty());
    assert_eq!(a, run("b"));
    let ckpt = |d: &str| std::fs::read(dir.path().join(d).join("checkpoint.safetensors")).unwrap();
    assert!(ckpt("a") == ckpt("b"), "checkpoints differ");
}

fn files_under(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files_under(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn pipeline_stays_inside_out() {
    let root = tempfile::tempdir().unwrap();
    let input = root.path().join("input");
    std::fs::create_dir(&input).unwrap();
    for (i, cat) in ["StorageFurniture", "Table", "Oven", "StorageFurniture"].iter().enumerate() {
        write_object(&input, &format!("o{i}.aoj"), cat, i as u64);
    }
    let before = files_under(&input);
    let cwd = root.path().join("cwd");
    std::fs::create_dir(&cwd).unwrap();
    let input_s = input.to_str().unwrap();
    let obj1 = input.join("o1.aoj");
    let obj1 = obj1.to_str().unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec!["--out", "w", "synth", "--n", "3", "--meshes", "--category", "Table"],
        vec!["--out", "w", "ingest", input_s, "--train-ratio", "0.5"],
        vec!["--out", "w", "augment", "--manifest", "w/manifest.json"],
        vec!["--out", "w", "features", "--manifest", "w/augment/manifest.json", "--views", "2"],
        vec!["--out", "w/run", "train", "--manifest", "w/features/manifest.json", "--epochs", "1"],
        vec!["--out", "w/s", "--seed", "4", "sample", "--checkpoint", "w/run/checkpoint.safetensors", "--features", "w/features/table-000001_0.feat", "--num-samples", "2"],
        vec!["--out", "w/g", "predict-graph", "--features", "w/features/table-000001_0.feat"],
        vec!["--out", "w/r", "retrieve", "--object", "w/s/samples/sample_4.aoj.json", "--library", "w/objects", "--name", "asm"],
        vec!["--out", "w/e", "evaluate", "--gen", "w/r/asm/object.aoj.json", "--gt", "w/objects/table-000001.aoj.json"],
        vec!["--out", "w/a", "attn", "--checkpoint", "w/run/checkpoint.safetensors", "--object", obj1, "--t", "10"],
    ];
    for args in &steps {
        let o = artic(&cwd, args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    }
    let w = cwd.join("w");
    for p in ["s/samples/sample_5.aoj.json", "g/graph.json", "r/asm/object.urdf", "e/report.csv", "a/attn_layer3_t10.csv"] {
        assert!(w.join(p).exists(), "{p}");
    }
    let csv = std::fs::read_to_string(w.join("e/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    // the assembled sample was evaluated with meshes, so chamfer is present
    assert!(!csv.lines().nth(1).unwrap().split(',').nth(5).unwrap().is_empty());
    let attn = std::fs::read_to_string(w.join("a/attn_layer3_t10.csv")).unwrap();
    assert_eq!(attn.lines().count(), 1 + synth_object("Table", 1).object.len() * 256);
    // everything written lives under the output directories
    let top: Vec<String> = std::fs::read_dir(&cwd)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(top, ["w"]);
    assert_eq!(files_under(&input), before);
}
