use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn holonomy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_holonomy"))
        .args(args)
        .env_remove("HOLONOMY_PRECISION")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn exit_codes() {
    let cases: &[(&[&str], i32)] = &[
        (&["classify", "--catalog", "serre"], 0),
        (&["classify", "--f", "poly(1,1)", "--g", "poly(1,0,1)"], 4),
        (&["classify", "--f", "rot(1/2", "--g", "id"], 2),
        (&["classify", "--catalog", "no-such-model"], 2),
        (&["hedgehog", "--map", "poly(1,1)", "--radius", "1", "--grid", "16"], 5),
        (&["cycles", "--theta", "cf:[0;10,100]", "--periods", "3", "--rings", "4", "--angles", "8"], 3),
        (&["linearize", "--f", "poly(e(1/3),1)", "--order", "16"], 3),
        (&["bogus"], 2),
    ];
    for (args, code) in cases {
        let out = holonomy(args);
        assert_eq!(out.status.code(), Some(*code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        if *code == 2 {
            assert!(out.stdout.is_empty());
            assert!(!out.stderr.is_empty());
        }
    }
}

#[test]
fn classify_output_is_byte_deterministic() {
    let a = holonomy(&["classify", "--catalog", "ueda-cremer"]);
    let b = holonomy(&["classify", "--catalog", "ueda-cremer", "--workers", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["case"], "IV");
    assert_eq!(v["ueda_type"]["kind"], "gamma");
}

#[test]
fn hedgehog_writes_image_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("rot.pgm");
    let csv = dir.path().join("rot.csv");
    let out = holonomy(&[
        "hedgehog",
        "--map",
        "rot(golden)",
        "--radius",
        "1",
        "--grid",
        "64",
        "--out",
        pgm.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let image = std::fs::read(&pgm).unwrap();
    assert!(image.starts_with(b"P5\n64 64\n255\n"));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(pgm.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["checksum"], hex::encode(Sha256::digest(&image)));
    assert_eq!(meta["resolution"], 64);
    assert_eq!(json(&out)["zero_position"], "interior");
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("ix,iy,set\n"));
}

#[test]
fn precision_env_and_config_file() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_holonomy"));
        cmd.args(["orbit", "--map", "rot(golden)", "--seed", "0.25", "--n", "10"]).args(extra);
        match env {
            Some(v) => cmd.env("HOLONOMY_PRECISION", v),
            None => cmd.env_remove("HOLONOMY_PRECISION"),
        };
        cmd.output().unwrap()
    };
    assert_eq!(json(&run(None, &[]))["precision_bits"], 512);
    assert_eq!(json(&run(Some("128"), &[]))["precision_bits"], 128);
    assert_eq!(json(&run(Some("128"), &["--precision", "200"]))["precision_bits"], 200);
    assert_eq!(run(Some("lots"), &[]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"precision": 96, "n": 5}"#).unwrap();
    let v = json(&run(Some("128"), &["--config", cfg.to_str().unwrap()]));
    assert_eq!(v["precision_bits"], 96);
    assert_eq!(v["n"], 10);
}

#[test]
fn catalog_lists_the_models() {
    let v = json(&holonomy(&["catalog"]));
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["models"].as_array().unwrap().len(), 6);
}

#[test]
fn shuffled_start_mesh_finds_the_same_cycle() {
    let base = ["cycles", "--theta", "cf:[0;10,100]", "--periods", "q1"];
    let a = json(&holonomy(&base));
    let mut shuffled = base.to_vec();
    shuffled.extend(["--mesh-seed", "7"]);
    let b = json(&holonomy(&shuffled));
    let radius = |v: &serde_json::Value| v["results"][0]["cycles"][0]["radius"].as_f64().unwrap();
    assert!((radius(&a) - radius(&b)).abs() < 1e-12);
    assert_eq!(b["results"][0]["cycles"].as_array().unwrap().len(), 1);
}
