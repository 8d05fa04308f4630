use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use shape_currents::io::{write_csv_polyline, write_off};
use shape_currents::{gen_contour, gen_mesh, Family, GramMatrix, Scenario, ScenarioSpec};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shape-currents"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn synth(dir: &Path, spec: &ScenarioSpec, out: &str) {
    fs::write(dir.join("spec.json"), serde_json::to_string(spec).unwrap()).unwrap();
    ok(dir, &["synth", "--spec", "spec.json", "--out", out]);
}

fn contour_dir(dir: &Path, n: usize) {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let fam = match i % 3 {
            0 => Family::Ellipse { a: 2.0, b: 1.0 },
            1 => Family::Star { radius: 1.5, amplitude: 0.3, lobes: 5 },
            _ => Family::RoundedRect { half_width: 2.0, half_height: 0.6, exponent: 4.0 },
        };
        let poly = gen_contour(&fam, 50, 0.03, i as u64).unwrap();
        fs::write(dir.join(format!("c{i:02}.csv")), write_csv_polyline(&poly)).unwrap();
    }
}

#[test]
fn ingest_directory_of_contours() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    contour_dir(&d.join("in"), 60);
    fs::write(d.join("meta.csv"), "id,label,true_label,height\nc00,ellipse,0,120.5\nc01,star,1,99\n").unwrap();
    ok(d, &["ingest", "in", "--meta", "meta.csv", "--out", "bundle"]);
    let index = read_json(&d.join("bundle/index.json"));
    let shapes = index["shapes"].as_array().unwrap();
    assert_eq!(shapes.len(), 60);
    assert_eq!(index["dim"], 2);
    assert_eq!(shapes[0]["id"], "c00");
    assert_eq!(shapes[0]["label"], "ellipse");
    assert_eq!(shapes[0]["true_label"], 0);
    assert_eq!(shapes[0]["meta"]["height"], 120.5);
    assert_eq!(index["manifest"]["command"], "ingest");
    assert_eq!(index["manifest"]["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn ingest_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("empty")).unwrap();
    let out = run(d, &["ingest", "empty", "--out", "b"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no input shapes"));

    contour_dir(&d.join("mixed"), 2);
    let mesh = gen_mesh(&Family::Sphere { radius: 1.0 }, 200, 0.0, 0).unwrap();
    fs::write(d.join("mixed/m.off"), write_off(&mesh)).unwrap();
    let out = run(d, &["ingest", "mixed", "--out", "b"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension"));

    // every broken file is reported, not just the first
    contour_dir(&d.join("broken"), 2);
    fs::write(d.join("broken/x.csv"), "x,y\n0,0\n1,oops\n").unwrap();
    fs::write(d.join("broken/y.off"), "not an off file\n").unwrap();
    let out = run(d, &["ingest", "broken", "--out", "b"]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("2 of 4 inputs failed") && err.contains("x.csv") && err.contains("y.off"), "{err}");
    assert!(!d.join("b").exists());
}

#[test]
fn ingest_close_flag_closes_open_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("sq.csv"), "0,0\n1,0\n1,1\n0,1\n").unwrap();
    ok(d, &["ingest", "sq.csv", "--out", "open"]);
    ok(d, &["ingest", "sq.csv", "--close", "--out", "closed"]);
    let rows = |b: &str| fs::read_to_string(d.join(b).join("atoms/sq.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows("open"), 3);
    assert_eq!(rows("closed"), 4);
}

#[test]
fn gram_constant_matrix_for_identical_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::create_dir(d.join("in")).unwrap();
    let poly = gen_contour(&Family::Ellipse { a: 2.0, b: 1.0 }, 40, 0.0, 0).unwrap();
    for name in ["a", "b"] {
        fs::write(d.join(format!("in/{name}.csv")), write_csv_polyline(&poly)).unwrap();
    }
    ok(d, &["ingest", "in", "--out", "bundle"]);
    ok(d, &["gram", "--dataset", "bundle", "--lambda", "1.0", "--out", "g.csv"]);
    let g = GramMatrix::from_csv(&fs::read_to_string(d.join("g.csv")).unwrap()).unwrap();
    let v = g.get(0, 0);
    assert!(v > 0.0);
    assert!(g.entries().iter().all(|&x| x == v));
    assert_eq!(g.shape_ids(), ["a", "b"]);

    ok(d, &["gram", "--dataset", "bundle", "--lambda", "1.0", "--out", "g.bin"]);
    let b = GramMatrix::from_bytes(&fs::read(d.join("g.bin")).unwrap()).unwrap();
    assert_eq!(b.entries(), g.entries());
    assert_eq!(b.lambda(), Some(1.0));

    let out = run(d, &["gram", "--dataset", "bundle", "--lambda", "0", "--out", "x.csv"]);
    assert_eq!(code(&out), 1);
    let out = run(d, &["gram", "--dataset", "bundle", "--out", "x.csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gram_auto_lambda_recorded_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::contours(Scenario::CommonHeight, 5), "bundle");
    let out = ok(d, &["gram", "--dataset", "bundle", "--lambda-auto", "--check", "--out", "g.csv"]);
    let manifest = read_json(&d.join("g.csv.manifest.json"));
    let lambda = manifest["lambda"].as_f64().unwrap();
    assert!(lambda > 0.0);
    assert_eq!(manifest["lambda_source"], "auto-rms");
    assert_eq!(manifest["inputs"][0]["path"], "bundle");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(String::from_utf8_lossy(&out.stdout).contains("lambda ="));

    ok(d, &["gram", "--dataset", "bundle", "--lambda-auto", "--lambda-mode", "coordinate", "--out", "c.csv"]);
    let coord = read_json(&d.join("c.csv.manifest.json"))["lambda"].as_f64().unwrap();
    assert!((coord * 2f64.sqrt() - lambda).abs() <= 1e-12 * lambda);
}

#[test]
fn cluster_outputs_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::contours(Scenario::TwoHeights, 6), "bundle");
    ok(d, &["gram", "--dataset", "bundle", "--lambda-auto", "--out", "g.bin"]);

    ok(d, &["cluster", "--gram", "g.bin", "--k", "1", "--out", "k1.json"]);
    let k1 = read_json(&d.join("k1.json"));
    assert!(k1["assignment"].as_array().unwrap().iter().all(|c| c == 0));
    assert_eq!(k1["converged"], true);

    ok(d, &["cluster", "--gram", "g.bin", "--k", "6", "--truth", "bundle", "--out", "k6.json"]);
    let k6 = read_json(&d.join("k6.json"));
    assert_eq!(k6["ari"], 1.0);
    assert_eq!(k6["restarts_used"], 10);
    assert_eq!(k6["init"], "kmeans++");
    assert_eq!(k6["manifest"]["seed"], 0);

    let out = run(d, &["cluster", "--gram", "g.bin", "--k", "19", "--out", "x.json"]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("x.json").exists());

    let out = run(d, &[
        "cluster", "--gram", "g.bin", "--k", "6", "--init", "random", "--restarts", "1", "--max-iter", "1", "--out", "slow.json",
    ]);
    assert_eq!(code(&out), 2);
    assert_eq!(read_json(&d.join("slow.json"))["converged"], false);

    fs::write(d.join("start.json"), serde_json::to_string(&vec![0; 18]).unwrap()).unwrap();
    let out = run(d, &["cluster", "--gram", "g.bin", "--k", "2", "--init-assignment", "start.json", "--out", "p.json"]);
    assert!(out.status.success());
    assert_eq!(read_json(&d.join("p.json"))["init"], "provided");

    ok(d, &["validate", "--gram", "g.bin", "--assignment", "k6.json", "--truth", "bundle", "--out", "v.json"]);
    let v = read_json(&d.join("v.json"));
    assert_eq!(v["ari"], 1.0);
    assert!(v["mean_silhouette"].as_f64().unwrap() > 0.5);
}

#[test]
fn sweep_rows_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::contours(Scenario::CommonHeight, 8), "bundle");
    ok(d, &["gram", "--dataset", "bundle", "--lambda-auto", "--out", "g.csv"]);
    ok(d, &["sweep", "--gram", "g.csv", "--k-min", "2", "--k-max", "8", "--out", "s.csv"]);
    let csv = fs::read_to_string(d.join("s.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,W,silhouette");
    assert_eq!(lines.len(), 8);
    assert!(d.join("s.csv.manifest.json").exists());

    ok(d, &["sweep", "--gram", "g.csv", "--k-min", "1", "--k-max", "2", "--out", "one.csv"]);
    assert!(fs::read_to_string(d.join("one.csv")).unwrap().lines().nth(1).unwrap().ends_with(','));

    assert_eq!(code(&run(d, &["sweep", "--gram", "g.csv", "--k-min", "5", "--k-max", "2", "--out", "x.csv"])), 1);
    assert_eq!(code(&run(d, &["sweep", "--gram", "g.csv", "--out", "x.csv"])), 1);
    assert_eq!(code(&run(d, &["frobnicate"])), 1);
    assert_eq!(code(&run(d, &["--help"])), 0);
}

#[test]
fn sizing_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::contours(Scenario::TwoHeights, 10).with_resolution(40), "bundle");
    ok(d, &["sizing", "--dataset", "bundle", "--pooled", "--k", "5", "--sort-key", "height", "--out", "pooled"]);
    let report = read_json(&d.join("pooled.json"));
    let sizes = report["sizes"].as_array().unwrap();
    assert_eq!(sizes.len(), 5);
    assert_eq!(report["mode"], "pooled");
    assert_eq!(sizes.iter().map(|s| s["group_size"].as_u64().unwrap()).sum::<u64>(), 30);
    assert!(sizes.iter().all(|s| s.get("band").is_none()));
    let long = fs::read_to_string(d.join("pooled.long.csv")).unwrap();
    assert_eq!(long.lines().next(), Some("size,shape_id,key,value"));
    assert_eq!(long.lines().count(), 1 + 30 * 2);

    ok(d, &["sizing", "--dataset", "bundle", "--bands", "90-125,125-170", "--out", "banded"]);
    let banded = read_json(&d.join("banded.json"));
    assert_eq!(banded["sizes"].as_array().unwrap().len(), 4);
    assert_eq!(banded["sample_size"], 30);

    assert_eq!(code(&run(d, &["sizing", "--dataset", "bundle", "--bands", "90-125", "--band-key", "weight", "--out", "x"])), 1);
    assert_eq!(code(&run(d, &["sizing", "--dataset", "bundle", "--bands", "1-2,2-3", "--out", "x"])), 1);
    assert_eq!(code(&run(d, &["sizing", "--dataset", "bundle", "--pooled", "--out", "x"])), 1);
}

#[test]
fn sizing_medians_cover_only_supplied_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    contour_dir(&d.join("in"), 6);
    let mut meta = String::from("id,height\n");
    for i in 0..6 {
        meta.push_str(&format!("c{i:02},{}\n", 100 + 10 * i));
    }
    fs::write(d.join("meta.csv"), meta).unwrap();
    ok(d, &["ingest", "in", "--meta", "meta.csv", "--out", "bundle"]);
    ok(d, &["sizing", "--dataset", "bundle", "--pooled", "--k", "2", "--out", "s"]);
    let report = read_json(&d.join("s.json"));
    for size in report["sizes"].as_array().unwrap() {
        let keys: Vec<&String> = size["medians"].as_object().unwrap().keys().collect();
        assert_eq!(keys, ["height"]);
    }
}

#[test]
fn synth_bundles_and_spec_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::meshes(Scenario::TwoHeights, 10).with_seed(4), "three");
    let index = read_json(&d.join("three/index.json"));
    let shapes = index["shapes"].as_array().unwrap();
    assert_eq!(index["dim"], 3);
    assert_eq!(shapes.len(), 30);
    let labels: std::collections::BTreeSet<u64> = shapes.iter().map(|s| s["true_label"].as_u64().unwrap()).collect();
    assert_eq!(labels.len(), 6);

    fs::write(d.join("spec.json"), serde_json::to_string(&ScenarioSpec::contours(Scenario::CommonHeight, 3)).unwrap()).unwrap();
    ok(d, &["synth", "--spec", "spec.json", "--out", "geo", "--export-geometry"]);
    assert_eq!(fs::read_dir(d.join("geo/geometry")).unwrap().count(), 9);
    ok(d, &["ingest", "geo/geometry", "--out", "reingested"]);

    fs::write(d.join("bad.json"), r#"{"scenario": "common-height", "classes": [], "colour": "red"}"#).unwrap();
    assert_eq!(code(&run(d, &["synth", "--spec", "bad.json", "--out", "x"])), 1);
    fs::write(d.join("empty.json"), r#"{"scenario": "common-height", "classes": []}"#).unwrap();
    assert_eq!(code(&run(d, &["synth", "--spec", "empty.json", "--out", "x"])), 1);
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, &ScenarioSpec::contours(Scenario::CommonHeight, 10), "bundle");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let g = format!("g{threads}.csv");
        let c = format!("c{threads}.json");
        for args in [
            vec!["gram", "--dataset", "bundle", "--lambda-auto", "--out", g.as_str()],
            vec!["cluster", "--gram", g.as_str(), "--k", "3", "--out", c.as_str()],
        ] {
            let out = Command::new(env!("CARGO_BIN_EXE_shape-currents"))
                .current_dir(d)
                .env("SHAPE_CURRENTS_THREADS", threads)
                .args(&args)
                .output()
                .unwrap();
            assert!(out.status.success());
        }
        outputs.push((fs::read(d.join(&g)).unwrap(), read_json(&d.join(&c))["assignment"].clone()));
    }
    assert_eq!(outputs[0], outputs[1]);

    let out = Command::new(env!("CARGO_BIN_EXE_shape-currents"))
        .current_dir(d)
        .env("SHAPE_CURRENTS_THREADS", "zero")
        .args(["cluster", "--gram", "g1.csv", "--k", "3", "--out", "x.json"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}
