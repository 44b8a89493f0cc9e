use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contramap::reconstruction::Mesh;

const BIN: &str = env!("CARGO_BIN_EXE_contramap");

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run(cmd: &str, config: &Path, outdir: &Path) -> Output {
    Command::new(BIN)
        .args([cmd, "--config", config.to_str().unwrap(), "--outdir", outdir.to_str().unwrap()])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MOONS: &str = r#"{
    "dataset": {"source": "toy", "kind": "moons", "n": 600, "noise_std": 0.1, "seed": 4},
    "split": 0.9,
    "hinges": {"layout": "grid", "spacing": 0.3},
    "eval": {"metrics": ["auc", "miou"]},
    "map": {"outputs": ["raster"], "resolution": [40, 30]}
}"#;

#[test]
fn moons_train_eval_map() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "moons.json", MOONS);
    let out = dir.path().join("run");

    let o = run("train", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["model.json", "model.bin", "loss.csv", "resolved-config.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(o.stdout.is_empty(), "machine output goes to files only");

    let o = run("eval", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let auc = report["metrics"]["auc"]["value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["tables"]["iou_per_class"]["class_1"].is_number());
    assert_eq!(report["config"]["seed"], 0);

    let o = run("map", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["occupancy.pgm", "uncertainty.pgm"] {
        let r = contramap::reconstruction::Raster::read_pgm(&out.join(f)).unwrap();
        assert_eq!((r.width, r.height), (40, 30));
    }
}

#[test]
fn rerun_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "moons.json", MOONS);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run("train", &cfg, &a)), 0);
    assert_eq!(code(&run("train", &cfg, &b)), 0);
    for f in ["model.json", "model.bin", "loss.csv", "resolved-config.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn seed_flag_changes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "moons.json", MOONS);
    let a = dir.path().join("a");
    assert_eq!(code(&run("train", &cfg, &a)), 0);
    let b = dir.path().join("b");
    let o = Command::new(BIN)
        .args(["train", "--config", cfg.to_str().unwrap(), "--outdir", b.to_str().unwrap(), "--seed", "9"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(std::fs::read(a.join("model.bin")).unwrap(), std::fs::read(b.join("model.bin")).unwrap());
    let resolved: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(b.join("resolved-config.json")).unwrap()).unwrap();
    assert_eq!(resolved["config"]["train"]["seed"], 9);
}

#[test]
fn malformed_config_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = write_config(dir.path(), "bad.json", &MOONS.replace("\"split\"", "\"splt\""));
    let o = run("train", &cfg, &out);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("splt"), "{}", stderr(&o));
    assert!(!out.join("model.json").exists());

    let cfg = write_config(dir.path(), "trunc.json", &MOONS[..40]);
    assert_eq!(code(&run("train", &cfg, &out)), 2);
    assert_eq!(code(&run("train", &dir.path().join("missing.json"), &out)), 2);
}

#[test]
fn missing_data_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.json",
        r#"{"dataset": {"source": "file", "path": "/nonexistent/points.csv"}, "hinges": {"layout": "count", "count": 10}}"#,
    );
    assert_eq!(code(&run("train", &cfg, &dir.path().join("o"))), 3);
}

#[test]
fn inapplicable_metrics_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "moons.json", MOONS);
    let out = dir.path().join("run");
    assert_eq!(code(&run("train", &cfg, &out)), 0);
    let ch = write_config(dir.path(), "ch.json", &MOONS.replace("[\"auc\", \"miou\"]", "[\"chamfer\"]"));
    let o = run("eval", &ch, &out);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("chamfer"));
}

#[test]
fn multiclass_auc_needs_a_binary_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("x,y,label\n");
    for i in 0..300 {
        let c = i % 4;
        let (cx, cy) = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)][c];
        let t = i as f64 * 0.37;
        csv.push_str(&format!("{},{},{}\n", cx + 0.4 * t.cos(), cy + 0.4 * t.sin(), c + 1));
    }
    let data = dir.path().join("four.csv");
    std::fs::write(&data, csv).unwrap();
    let base = format!(
        r#"{{"dataset": {{"source": "file", "path": {:?}}}, "split": 0.8, "hinges": {{"layout": "grid", "spacing": 0.5}}, "eval": METRICS}}"#,
        data.to_str().unwrap()
    );
    let out = dir.path().join("run");
    let miou = write_config(dir.path(), "m.json", &base.replace("METRICS", r#"{"metrics": ["miou"]}"#));
    assert_eq!(code(&run("train", &miou, &out)), 0);
    assert_eq!(code(&run("eval", &miou, &out)), 0);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tables"]["iou_per_class"].as_object().unwrap().len(), 4);

    let auc = write_config(dir.path(), "a.json", &base.replace("METRICS", r#"{"metrics": ["auc"]}"#));
    let o = run("eval", &auc, &out);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("auc"));
    let reduced = write_config(dir.path(), "r.json", &base.replace("METRICS", r#"{"metrics": ["auc"], "positive_class": 3}"#));
    assert_eq!(code(&run("eval", &reduced, &out)), 0);
}

#[test]
fn resolution_one_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "moons.json", MOONS);
    let out = dir.path().join("run");
    assert_eq!(code(&run("train", &cfg, &out)), 0);
    let bad = write_config(dir.path(), "r1.json", &MOONS.replace("[40, 30]", "[1, 30]"));
    assert_eq!(code(&run("map", &bad, &out)), 2);
}

#[test]
fn tabletop_mesh_and_scene_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "t.json",
        r#"{
            "dataset": {"source": "tabletop", "objects": 2, "num_classes": 3, "scene_seed": 5, "rays": 1500},
            "hinges": {"layout": "near_surface", "count": 300, "jitter": 0.03, "spacing": 0.05},
            "noise": {"strategy": "uniform", "ratio": 0.25},
            "train": {"epochs": 100},
            "eval": {"metrics": ["iou", "chamfer", "miou", "uncertainty_contrast"], "voxel": 0.04, "surface_samples": 1000},
            "map": {"outputs": ["mesh", "slice"], "resolution": [21, 16, 11]}
        }"#,
    );
    let out = dir.path().join("run");
    assert_eq!(code(&run("train", &cfg, &out)), 0);
    let o = run("eval", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    for m in ["iou", "chamfer", "miou", "uncertainty_contrast"] {
        assert!(report["metrics"][m]["value"].is_number(), "{m}");
    }
    let o = run("map", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mesh = Mesh::read_ply(&out.join("scene.ply")).unwrap();
    assert!(!mesh.triangles.is_empty());
    assert!(out.join("slice_uncertainty.pgm").is_file());
    let text = std::fs::read(out.join("scene.ply")).unwrap();
    assert!(String::from_utf8_lossy(&text[..300]).contains("comment config_sha256="));
}

#[test]
fn bench_rows_failures_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    // The budget admits every ContraMap and HM cell but only the smallest BHM cells.
    let cfg = write_config(
        dir.path(),
        "b.json",
        r#"{
            "dataset": {"source": "office", "pose_spacing": 4.0, "beams": 30},
            "split": 0.9,
            "max_train_rows": 200,
            "bench": {"hinge_counts": [20, 40, 80, 400], "methods": ["contramap", "hm", "bhm"], "repeats": 2,
                      "query_resolution": 20, "memory_budget_bytes": 7000000, "train": {"epochs": 20}}
        }"#,
    );
    let out = dir.path().join("run");
    let o = run("bench", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3 * 4);
    assert!(rows.iter().any(|r| r.starts_with("bhm,400") && r.contains("FAILED")), "{csv}");
    for m in ["contramap", "hm", "bhm"] {
        let per = std::fs::read_to_string(out.join(format!("bench_{m}.csv"))).unwrap();
        assert_eq!(per.lines().filter(|l| l.starts_with(&format!("{m},"))).count(), 4);
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("bench_report.json")).unwrap()).unwrap();
    let slopes = report["tables"]["time_slope"].as_object().unwrap();
    assert!(slopes.contains_key("contramap") && slopes.contains_key("hm") && slopes.contains_key("bhm"), "{slopes:?}");
}
