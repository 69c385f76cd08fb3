use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use artic::conditioning::SYNTH_DIM;
use artic::dataset::{object_to_json, synth::synth_object};
use artic::diffusion::{save_checkpoint, Denoiser, DenoiserConfig};
use artic_ffi::*;
use serde_json::{json, Value};

const DRAWER: &str = r#"{"id": "pair", "parts": [
  {"id": 0, "label": "base", "parent": null,
   "bbox": {"center": [0, 0, 0], "halfextent": [0.5, 0.5, 0.5]},
   "joint": {"type": "fixed", "origin": [0, 0, 0], "direction": [0, 0, 1], "range": [0, 0]}},
  {"id": 1, "label": "drawer", "parent": 0,
   "bbox": {"center": [0.5, 0, 0], "halfextent": [0.1, 0.4, 0.2]},
   "joint": {"type": "prismatic", "origin": [0.5, 0, 0], "direction": [1, 0, 0], "range": [0, 0.5]}}
]}"#;

fn last_error() -> String {
    unsafe { CStr::from_ptr(artic_last_error()) }.to_str().unwrap().to_string()
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { artic_string_free(p) };
    s
}

fn object(json: &str) -> *mut ArticObject {
    let c = CString::new(json).unwrap();
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { artic_object_from_json(c.as_ptr(), &mut o) }, ArticStatus::Ok, "{}", last_error());
    o
}

#[test]
fn object_round_trip_and_pose() {
    let o = object(DRAWER);
    assert_eq!(unsafe { artic_object_part_count(o) }, 2);
    let mut text = ptr::null_mut();
    assert_eq!(unsafe { artic_object_to_json(o, &mut text) }, ArticStatus::Ok);
    let v: Value = serde_json::from_str(&take_string(text)).unwrap();
    assert_eq!(v["parts"].as_array().unwrap().len(), 2);

    let mut poses = [0.0; 32];
    assert_eq!(unsafe { artic_object_pose(o, 1.0, poses.as_mut_ptr(), 32) }, ArticStatus::Ok);
    // root identity; the drawer slides its full range of 0.5 along x
    assert_eq!(&poses[..4], &[1.0, 0.0, 0.0, 0.0]);
    assert_eq!(poses[16 + 3], 0.5);
    assert_eq!(poses[16 + 15], 1.0);
    assert_eq!(unsafe { artic_object_pose(o, 1.0, poses.as_mut_ptr(), 31) }, ArticStatus::BufferTooSmall);
    assert!(last_error().contains("32"));

    let mut a = -1.0;
    assert_eq!(unsafe { artic_object_aor(o, &mut a) }, ArticStatus::Ok);
    assert!((0.0..=1.0).contains(&a));
    unsafe { artic_object_free(o) };
}

#[test]
fn evaluate_self_is_zero() {
    let o = object(DRAWER);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { artic_evaluate(o, o, ptr::null(), &mut out) }, ArticStatus::Ok);
    let r: Value = serde_json::from_str(&take_string(out)).unwrap();
    for k in ["rs_giou", "as_giou", "rs_cdist", "as_cdist"] {
        assert_eq!(r[k], 0.0, "{k}");
    }
    assert_eq!(r["graph_acc"], 1.0);
    let cfg = CString::new(r#"{"k_states": 3}"#).unwrap();
    assert_eq!(unsafe { artic_evaluate(o, o, cfg.as_ptr(), &mut out) }, ArticStatus::Ok);
    let r: Value = serde_json::from_str(&take_string(out)).unwrap();
    assert_eq!(r["k_states"], 3);
    unsafe { artic_object_free(o) };
}

#[test]
fn errors_set_status_and_message() {
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { artic_object_from_json(ptr::null(), &mut o) }, ArticStatus::NullArgument);
    assert!(last_error().contains("json"));
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { artic_object_from_json(bad.as_ptr(), &mut o) }, ArticStatus::Parse);
    let cyclic = DRAWER.replace(r#""parent": null"#, r#""parent": 1"#);
    let c = CString::new(cyclic).unwrap();
    assert_eq!(unsafe { artic_object_from_json(c.as_ptr(), &mut o) }, ArticStatus::Invalid);
    assert!(o.is_null());
    let not_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { artic_object_from_json(not_utf8.as_ptr().cast(), &mut o) },
        ArticStatus::InvalidUtf8
    );
    let missing = CString::new("/nonexistent/object.json").unwrap();
    assert_eq!(unsafe { artic_object_load(missing.as_ptr(), &mut o) }, ArticStatus::Io);
    assert_eq!(unsafe { artic_object_part_count(ptr::null()) }, 0);

    let good = object(DRAWER);
    let mut n = 0.0;
    assert_eq!(unsafe { artic_object_aor(good, &mut n) }, ArticStatus::Ok);
    assert_eq!(last_error(), "");
    unsafe {
        artic_object_free(good);
        artic_object_free(ptr::null_mut());
        artic_model_free(ptr::null_mut());
        artic_string_free(ptr::null_mut());
    }
}

fn tiny_checkpoint(path: &Path) {
    let cfg = DenoiserConfig {
        layers: 1,
        heads: 2,
        hidden: 16,
        d_f: SYNTH_DIM,
        steps: 20,
        beta_1: 1e-3,
        beta_t: 0.2,
        ..Default::default()
    };
    save_checkpoint(&Denoiser::new(cfg, 1).unwrap(), path).unwrap();
}

#[test]
fn generate_is_deterministic_and_pins_hold() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("tiny.safetensors");
    tiny_checkpoint(&ckpt);
    let path = CString::new(ckpt.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { artic_model_load(path.as_ptr(), &mut m) }, ArticStatus::Ok, "{}", last_error());

    let rec = synth_object("StorageFurniture", 2);
    let graph: Value = serde_json::to_value(rec.object.graph()).unwrap();
    let pin = [0.1, 0.2, 0.3, 0.05, 0.05, 0.05];
    let req = json!({
        "graph": graph,
        "category": "StorageFurniture",
        "num_samples": 2,
        "seed": 9,
        "pins": [{"part": rec.object.parts[1].id, "row": "bbox", "values": pin}],
    });
    let req = CString::new(req.to_string()).unwrap();
    let run = || {
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { artic_generate(m, req.as_ptr(), &mut out) }, ArticStatus::Ok, "{}", last_error());
        take_string(out)
    };
    let first = run();
    assert_eq!(first, run());
    let v: Value = serde_json::from_str(&first).unwrap();
    let samples = v.as_array().unwrap();
    assert_eq!(samples.len(), 2);
    assert_eq!(samples[0]["seed"], 9);
    assert_eq!(samples[1]["seed"], 10);
    let row: Vec<f64> = serde_json::from_value(samples[0]["rows"][1][0].clone()).unwrap();
    assert_eq!(row, pin);

    let no_graph = CString::new("{}").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { artic_generate(m, no_graph.as_ptr(), &mut out) }, ArticStatus::Invalid);
    let bad_cat = CString::new(json!({"graph": graph, "category": "Boat"}).to_string()).unwrap();
    assert_eq!(unsafe { artic_generate(m, bad_cat.as_ptr(), &mut out) }, ArticStatus::Invalid);
    unsafe { artic_model_free(m) };
}

#[test]
fn loaded_objects_are_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let rec = synth_object("Table", 4);
    let p = dir.path().join("t.json");
    std::fs::write(&p, object_to_json(&rec)).unwrap();
    let c = CString::new(p.to_str().unwrap()).unwrap();
    let mut o = ptr::null_mut();
    assert_eq!(unsafe { artic_object_load(c.as_ptr(), &mut o) }, ArticStatus::Ok);
    assert_eq!(unsafe { artic_object_part_count(o) }, rec.object.len());
    unsafe { artic_object_free(o) };
}

#[test]
fn version_matches_package() {
    let v = unsafe { CStr::from_ptr(artic_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles and runs a C program against the generated header and the
/// static library, when a C compiler is available.
#[test]
fn c_program_links_against_header() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if std::process::Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libartic_ffi.a");
    if !lib.exists() {
        eprintln!("skipping: {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = std::process::Command::new(&cc)
        .args(["-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(&format!("{} 0.500", env!("CARGO_PKG_VERSION"))));
    assert!(stdout.contains("\"rs_giou\":0.0"));
}
