use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use samplet_core::geometry::{load_points_path, load_values_path};

fn samplet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_samplet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = samplet(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let schema: Value =
        serde_json::from_str(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/bench_report.schema.json"))).unwrap();
    if let Err(e) = jsonschema::validate(&schema, &v) {
        panic!("report violates the schema: {e}");
    }
    v
}

fn error(v: &Value, key: &str) -> f64 {
    v["errors"][key].as_f64().unwrap_or_else(|| panic!("missing {key}"))
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn compress_is_reproducible() {
    let args = ["compress", "--random", "1024", "2", "7"];
    let (a, b) = (report(&args), report(&args));
    assert_eq!(a["errors"], b["errors"]);
    assert_eq!(a["nnz"], b["nnz"]);
    assert!(error(&a, "compression_apriori") <= 1e-4);
    assert!(a["nnz"]["aposteriori"].as_u64() <= a["nnz"]["apriori"].as_u64());
}

#[test]
fn thread_count_does_not_change_metrics() {
    let run = |t: &str| report(&["--threads", t, "bench-multiply", "--random", "700", "2", "3", "--repeats", "1", "--warmup", "0"]);
    assert_eq!(run("1")["errors"], run("3")["errors"]);
}

#[test]
fn exit_codes() {
    assert_eq!(samplet(&["compress", "--random", "0", "2", "7"]).status.code(), Some(2));
    assert_eq!(samplet(&["compress", "--bogus"]).status.code(), Some(2));
    assert_eq!(samplet(&["compress", "--points", "/nonexistent/points.csv"]).status.code(), Some(4));
    let indefinite = samplet(&["bench-invert", "--random", "300", "2", "1", "--mu", "-1"]);
    assert_eq!(indefinite.status.code(), Some(2));
}

#[test]
fn masked_product_matches_dense() {
    let v = report(&["bench-multiply", "--random", "512", "2", "5", "--repeats", "1"]);
    assert!(error(&v, "masked_entrywise") <= 1e-12);
    assert!(error(&v, "multiplication") < 1e-4);
    let sym = report(&["bench-multiply", "--random", "512", "2", "5", "--perturbation", "0", "--repeats", "1"]);
    assert!(sym["values"]["product_asymmetry"].as_f64().unwrap() <= 1e-15);
}

#[test]
fn inversion_residual_shrinks_with_ridge() {
    let v = report(&["bench-invert", "--random", "1024", "2", "9", "--repeats", "1", "--warmup", "0"]);
    let r: Vec<f64> = ["1e-6", "1e-4", "1e-2"]
        .iter()
        .map(|m| error(&v, &format!("inversion_residual[{m}]")))
        .collect();
    assert!(r[2] < r[1] && r[1] < r[0], "{r:?}");
    let apriori = report(&["bench-invert", "--random", "1024", "2", "9", "--pattern", "apriori", "--mu", "1e-2", "--repeats", "1"]);
    assert!(v["nnz"]["aposteriori"].as_u64() <= apriori["nnz"]["apriori"].as_u64());
}

#[test]
fn diagonal_matrix_inverts_exactly() {
    // A length scale far below the point spacing leaves only the diagonal.
    let v = report(&["bench-invert", "--random", "256", "2", "2", "--ell", "1e-6", "--mu", "0", "--repeats", "1"]);
    assert!(error(&v, "inversion_residual[0e0]") <= 1e-14);
}

#[test]
fn matrix_function_sweeps() {
    let s = report(&["sqrt", "--random", "512", "3", "4", "--quad-points", "3,7"]);
    assert!(error(&s, "sqrt_residual[K=7]") < error(&s, "sqrt_residual[K=3]"));
    let e = report(&["exp", "--random", "512", "3", "4", "--terms", "4,8"]);
    assert!(error(&e, "exp_difference[terms=8]") <= 1e-8);
    assert!(e["values"]["norm_estimate"].as_f64().unwrap() < 1.0);
}

#[test]
fn gp_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (pts, labels, pred) = (path(dir.path(), "x.csv"), path(dir.path(), "y.csv"), path(dir.path(), "pred.csv"));
    let out = samplet(&["gp", "make-constraints", "--sphere", "300", "--inner", "40", "--outer", "160", "--out", &pts, "--labels", &labels]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let x = load_points_path(Path::new(&pts), None).unwrap();
    let y = load_values_path(Path::new(&labels)).unwrap();
    assert_eq!((x.len(), y.len()), (500, 500));

    let v = report(&[
        "gp", "predict", "--train", &pts, "--labels", &labels, "--eval", &pts, "--mu", "1e-8", "--scale", "1", "--tau", "0", "--tau-cross", "0", "--out", &pred,
        "--dense-check", "1000",
    ]);
    assert!(error(&v, "mean_vs_dense") <= 10.0 * error(&v, "compression").max(1e-12));
    let table = load_points_path(Path::new(&pred), None).unwrap();
    assert_eq!((table.len(), table.dim()), (500, 5));
    for i in 0..500 {
        let row = table.point(i);
        assert_eq!(&row[..3], x.point(i));
        assert!((row[3] - y[i]).abs() < 1e-3, "site {i}: {} vs {}", row[3], y[i]);
    }

    let far = path(dir.path(), "far.csv");
    std::fs::write(&far, "100,100,100\n-100,50,80\n").unwrap();
    let out = samplet(&["gp", "predict", "--train", &pts, "--labels", &labels, "--eval", &far, "--mu", "1e-4", "--scale", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for line in text.lines().skip(1) {
        let stddev: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((stddev - 2.0).abs() < 1e-12, "{line}");
    }
}

#[test]
fn convert_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, bin, back) = (path(dir.path(), "a.csv"), path(dir.path(), "a.bin"), path(dir.path(), "b.csv"));
    std::fs::write(&csv, "x,y\n0.5,1\n-2,3.25\n").unwrap();
    assert!(samplet(&["convert", "--input", &csv, "--output", &bin]).status.success());
    assert!(samplet(&["convert", "--input", &bin, "--output", &back]).status.success());
    let (a, b) = (load_points_path(Path::new(&csv), None).unwrap(), load_points_path(Path::new(&back), None).unwrap());
    assert_eq!(a.coords(), b.coords());
}

#[test]
fn matrix_market_dump() {
    let dir = tempfile::tempdir().unwrap();
    let mm = path(dir.path(), "k.mtx");
    let v = report(&["compress", "--random", "300", "2", "1", "--out-mm", &mm]);
    let text = std::fs::read_to_string(&mm).unwrap();
    assert!(text.starts_with("%%MatrixMarket"));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(format!("{mm}.json")).unwrap()).unwrap();
    assert_eq!(meta["nnz"], v["nnz"]["aposteriori"]);
}
