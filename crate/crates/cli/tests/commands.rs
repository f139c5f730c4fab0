use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rodlimit"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn csv_rows(path: PathBuf) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

const SMALL: &str = r#"{
    "geometry": {"target_edge": 0.5, "axial_elements": 8},
    "load": {"g": [0, 0, -0.01]},
    "h": 0.2
}"#;

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nowhere/config.json");
    let out = run(&["stiffness"], &missing, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&missing.display().to_string()), "{err}");
}

#[test]
fn invalid_config_exits_2_with_all_pointers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"h_list": [0.1, 0.2, 0.3], "bogus": 1}"#);
    let out = run(&["converge"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("h_list must be strictly decreasing") && err.contains("/bogus"), "{err}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "{}");
    assert_eq!(run(&["explode"], &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn stiffness_on_a_homogeneous_disk_has_constant_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let out_dir = dir.path().join("out");
    let out = run(&["stiffness"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = csv_rows(out_dir.join("stiffness.csv"));
    assert_eq!(header.len(), 1 + 10 + 6 + 3);
    assert_eq!(header[1], "gram_11");
    assert_eq!(header[11], "reduced_11");
    assert_eq!(header[19], "bmin_row_3");
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(&r[1..], &rows[0][1..]);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert!((xs[0] - 1.0 / 16.0).abs() < 1e-15 && xs.windows(2).all(|w| w[1] > w[0]));
    let manifest = json(out_dir.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "stiffness");
    assert_eq!(manifest["exit_code"], 0);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(manifest["versions"]["rodlimit"].is_string());
    let stages: Vec<&str> = manifest["stages"].as_array().unwrap().iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert!(stages.contains(&"stiffness") && stages.contains(&"write stiffness.csv"), "{stages:?}");
    assert!(manifest["stages"].as_array().unwrap().iter().all(|s| s["status"] == "ok"));
}

#[test]
fn stiffness_rows_change_across_a_material_interface() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{
            "geometry": {"target_edge": 0.5, "axial_elements": 4},
            "material": {"regions": [
                {"shape": "box", "min": [0.5, -5, -5], "max": [2, 5, 5], "lambda": 2, "mu": 3},
                {"shape": "all", "lambda": 1, "mu": 1}
            ]}
        }"#,
    );
    let out_dir = dir.path().join("out");
    assert_eq!(run(&["stiffness"], &cfg, &out_dir).status.code(), Some(0));
    let (_, rows) = csv_rows(out_dir.join("stiffness.csv"));
    assert_eq!(rows[0][1..], rows[1][1..]);
    assert_eq!(rows[2][1..], rows[3][1..]);
    assert!((rows[2][1] / rows[0][1] - 3.0).abs() < 1e-9, "torsion scales with mu");
}

#[test]
fn solve1d_writes_summary_and_profile() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let out_dir = dir.path().join("out");
    let out = run(&["solve1d"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(0));
    let s = json(out_dir.join("solve1d.json"));
    assert!(s["residual"].as_f64().unwrap() <= 1e-6);
    assert!(s["energy"].as_f64().unwrap() < 0.0);
    let tip = s["tip"].as_array().unwrap();
    assert!(tip[2].as_f64().unwrap() < 0.0);
    let (header, rows) = csv_rows(out_dir.join("rod1d.csv"));
    assert_eq!(header, ["x1", "y1", "y2", "y3", "a1", "a2", "a3", "bmin"]);
    assert_eq!(rows.len(), 8);
    // Sagging under a downward load bends about +e₂ with the largest curvature at the clamp.
    assert!(rows.iter().all(|r| r[5] > 0.0) && rows[0][5] > rows[7][5]);
}

#[test]
fn solve3d_dumps_every_node() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, SMALL);
    let out_dir = dir.path().join("out");
    let out = run(&["solve3d"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(out_dir.join("solve3d.json"));
    assert!(s["min_det"].as_f64().unwrap() > 0.0);
    assert_eq!(s["clamp_defect"].as_f64().unwrap(), 0.0);
    let text = std::fs::read_to_string(out_dir.join("nodes.txt")).unwrap();
    let lines: Vec<Vec<f64>> = text.lines().map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(lines.len() as u64, s["nodes"].as_u64().unwrap());
    assert!(lines.iter().all(|l| l.len() == 6));
    let h = 0.2;
    for l in lines.iter().filter(|l| l[0] == 0.0) {
        assert_eq!([l[3], l[4], l[5]], [0.0, h * l[1], h * l[2]]);
    }
}

#[test]
fn griso_check_reports_stable_constants_and_honours_the_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"griso": {"levels": 2, "random_fields": 2, "h_values": [0.2]}}"#);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(run(&["griso-check", "--seed", "3"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["griso-check", "--seed", "3"], &cfg, &b).status.code(), Some(0));
    assert_eq!(run(&["griso-check", "--seed", "4"], &cfg, &c).status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("griso.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let s = json(a.join("griso.json"));
    assert_eq!(s["passed"], true);
    assert!(s["identity_residual_max"].as_f64().unwrap() <= 1e-10);
    assert_eq!(json(a.join("manifest.json"))["seed"], 3);
}

#[test]
fn converge_failure_is_exit_1_with_a_verdict() {
    let dir = TempDir::new().unwrap();
    // A two-ring section is too coarse for the 3D error to fall with h.
    let cfg = write_config(&dir, r#"{"geometry": {"target_edge": 0.5, "axial_elements": 40}}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["converge", "--threads", "2"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(1));
    let v = json(out_dir.join("verdict.json"));
    assert_eq!(v["passed"], false);
    let criteria = v["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 5);
    assert!(criteria.iter().all(|c| c["passed"].is_boolean()));
    let (header, rows) = csv_rows(out_dir.join("converge.csv"));
    for col in ["h", "err_grad", "err_rot", "energy_gap", "residual_1d", "ident_gap", "rate_err_grad", "rate_err_rot"] {
        assert!(header.iter().any(|h| h == col), "{col}");
    }
    assert_eq!(rows.len(), 3);
    let rate = header.iter().position(|h| h == "rate_err_rot").unwrap();
    assert!(rows[0][rate].is_nan() && (rows[1][rate] - 1.0).abs() < 0.2, "{:?}", rows[1][rate]);
    let m = json(out_dir.join("manifest.json"));
    assert_eq!(m["exit_code"], 1);
    assert_eq!(m["criteria_passed"], false);
    assert_eq!(m["threads"], 2);
}

#[test]
fn converge_csv_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"geometry": {"target_edge": 0.5, "axial_elements": 24}}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["converge"], &cfg, &a);
    run(&["converge"], &cfg, &b);
    for f in ["converge.csv", "verdict.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failing_stage_is_recorded_in_the_manifest() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"geometry": {"target_edge": 0.5, "axial_elements": 8}, "solver": {"max_iterations_3d": 1}}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["solve3d"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(1));
    let m = json(out_dir.join("manifest.json"));
    let failed: Vec<&Value> = m["stages"].as_array().unwrap().iter().filter(|s| s["status"] == "failed").collect();
    assert_eq!(failed.len(), 1);
    assert_eq!(failed[0]["name"], "solve3d");
    assert!(failed[0]["message"].as_str().unwrap().contains("iteration cap"));
    assert!(!out_dir.join("solve3d.json").exists());
}

#[test]
fn imported_mesh_is_read_relative_to_the_config() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("square.txt"), "4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 3\n").unwrap();
    let cfg = write_config(
        &dir,
        r#"{"geometry": {"section": {"shape": "imported", "path": "square.txt"}, "target_edge": 0.1, "axial_elements": 2}}"#,
    );
    let out_dir = dir.path().join("out");
    let out = run(&["stiffness"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh = std::fs::read_to_string(out_dir.join("section_mesh.txt")).unwrap();
    let counts: Vec<usize> = mesh.lines().next().unwrap().split(' ').map(|v| v.parse().unwrap()).collect();
    // Refined until the longest edge (a diagonal, √2/2ᵏ) is at most 0.2.
    assert_eq!(counts[1], 2 * 4usize.pow(3));
    let (_, rows) = csv_rows(out_dir.join("stiffness.csv"));
    // Square bending stiffness E·(1/12) at unit area with λ = μ = 1.
    assert!((rows[0][5] / (2.5 / 12.0) - 1.0).abs() < 0.01, "{}", rows[0][5]);
}

#[test]
fn missing_mesh_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"geometry": {"section": {"shape": "imported", "path": "absent.txt"}}}"#);
    let out_dir = dir.path().join("out");
    let out = run(&["stiffness"], &cfg, &out_dir);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.txt"));
    let m = json(out_dir.join("manifest.json"));
    assert_eq!(m["stages"][0]["name"], "mesh");
    assert_eq!(m["stages"][0]["status"], "failed");
}
