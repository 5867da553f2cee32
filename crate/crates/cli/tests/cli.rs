use serde_json::Value;
use std::process::{Command, Output};

fn weylforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weylforge")).args(args).env("WEYLFORGE_WORKERS", "2").output().expect("spawn weylforge")
}

fn report(args: &[&str]) -> (i32, Value) {
    let out = weylforge(args);
    let code = out.status.code().unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad report ({}): {}", e, String::from_utf8_lossy(&out.stderr)));
    (code, v)
}

fn measurement(v: &Value, name: &str) -> f64 {
    v["measurements"].as_array().unwrap().iter().find(|m| m["name"] == name).unwrap()["mean"].as_f64().unwrap()
}

fn csv_rows(out: &Output) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    let header = rdr.headers().unwrap().iter().map(String::from).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<String> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {}", name));
    rows.iter().map(|r| r[i].clone()).collect()
}

#[test]
fn verify_round_sphere_passes() {
    let (code, v) = report(&["verify", "--family", "geodesic_symmetry", "--param", "H=1", "--points", "50"]);
    assert_eq!(code, 0);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(names.contains(&"ew_residual"));
    assert!(names.contains(&"hypercr_residual"));
    for c in v["checks"].as_array().unwrap() {
        assert_eq!(c["points"], 50);
        assert_eq!(c["pass"], true, "{}", c);
    }
    assert_eq!(v["pass"], true);
}

#[test]
fn verify_einstein_scalar_curvature() {
    let (code, v) = report(&["verify", "--family", "einstein_tod", "--param", "a=1", "--param", "b=0", "--param", "c=1", "--points", "20"]);
    assert_eq!(code, 0);
    let scal = measurement(&v, "measured_scal");
    assert!((scal + 6.0).abs() < 6e-6, "scal = {}", scal);
}

#[test]
fn verify_reports_every_registered_check() {
    for fam in ["ward_toda", "toda_cc", "flat_r4"] {
        let (code, v) = report(&["verify", "--family", fam, "--points", "10"]);
        assert_eq!(code, 0, "{}", fam);
        assert_eq!(v["checks"].as_array().unwrap().len(), if fam == "flat_r4" { 4 } else { 3 });
    }
}

#[test]
fn non_harmonic_potential_is_rejected() {
    let out = weylforge(&["verify", "--family", "ward_toda", "--param", "V=rho"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not harmonic"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["verify", "--family", "nope"],
        vec!["verify", "--family", "toda_cc", "--param", "q=1"],
        vec!["verify", "--family", "toda_cc", "--param", "a"],
        vec!["verify", "--family", "toda_cc", "--tol", "nope=1"],
        vec!["verify", "--family", "toda_cc", "--convention", "other"],
        vec!["verify", "--family", "ward_toda", "--param", "V=rho+"],
        vec!["verify", "--bogus"],
    ] {
        assert_eq!(weylforge(&args).status.code(), Some(2), "{:?}", args);
    }
}

#[test]
fn tolerance_override_makes_a_check_fail() {
    let (code, v) = report(&["verify", "--family", "toda_cc", "--points", "10", "--tol", "ew_residual=1e-300"]);
    assert_eq!(code, 1);
    let ew = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "ew_residual").unwrap();
    assert_eq!(ew["tolerance"].as_f64(), Some(1e-300));
    assert_eq!(ew["pass"], false);
    assert_eq!(v["pass"], false);
}

#[test]
fn numerical_breakdown_exits_3() {
    for w in ["1/(r-r)", "sqrt(-r)"] {
        let out = weylforge(&["verify", "--family", "gibbons_hawking", "--param", &format!("W={}", w), "--points", "5"]);
        assert_eq!(out.status.code(), Some(3), "{}", w);
        assert!(String::from_utf8_lossy(&out.stderr).contains("guard"));
    }
}

#[test]
fn reports_are_deterministic() {
    let dir = env!("CARGO_TARGET_TMPDIR");
    let mut texts = Vec::new();
    for (i, workers) in ["1", "4"].iter().enumerate() {
        let path = format!("{}/det_{}.json", dir, i);
        let st = Command::new(env!("CARGO_BIN_EXE_weylforge"))
            .args(["verify", "--family", "gibbons_hawking", "--points", "30", "--seed", "7", "--report", &path])
            .env("WEYLFORGE_WORKERS", workers)
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        texts.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let v: Value = serde_json::from_slice(&texts[0]).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["convention"], "tilde");
}

#[test]
fn other_star_convention_agrees() {
    for fam in ["gibbons_hawking", "einstein_tod"] {
        let (code, v) = report(&["verify", "--family", fam, "--points", "10", "--convention", "paper"]);
        assert_eq!(code, 0, "{}", fam);
        assert_eq!(v["convention"], "paper");
    }
}

#[test]
fn scan_toda_constant_curvature_grid() {
    let out = weylforge(&["scan", "--family", "toda_cc", "--grid", "a=0:1:2", "--grid", "c=0:1:2", "--param", "b=0", "--points", "10"]);
    let (header, rows) = csv_rows(&out);
    assert_eq!(rows.len(), 4);
    assert_eq!(column(&header, &rows, "a"), ["0", "0", "1", "1"]);
    assert_eq!(column(&header, &rows, "c"), ["0", "1", "0", "1"]);
    let pass = column(&header, &rows, "pass");
    let err = column(&header, &rows, "error");
    // a = b = c = 0 makes e^u vanish identically: no metric to verify.
    assert_eq!(pass[0], "false");
    assert!(err[0].contains("az^2+bz+c"), "{}", err[0]);
    assert_eq!(&pass[1..], ["true", "true", "true"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scan_einstein_scalar_curvature_column() {
    let out = weylforge(&["scan", "--family", "einstein_tod", "--grid", "a=0:1:2", "--param", "b=1", "--points", "10"]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header.last().unwrap(), "error");
    let scal: Vec<f64> = column(&header, &rows, "measured_scal").iter().map(|s| s.parse().unwrap()).collect();
    // −12ac/(a² + c²) at c = 1.
    assert!(scal[0].abs() < 1e-6, "{:?}", scal);
    assert!((scal[1] + 6.0).abs() < 6e-6, "{:?}", scal);
    assert!(column(&header, &rows, "pass").iter().all(|p| p == "true"));
}

#[test]
fn scan_header_is_fixed() {
    let out = weylforge(&["scan", "--family", "toda_cc", "--grid", "a=1:1:1", "--points", "5"]);
    let (header, _) = csv_rows(&out);
    let want = "a,b,c,toda_pde_max,ew_residual_max,special_monopole_max,toda_pde_pass,ew_residual_pass,special_monopole_pass,pass,error";
    assert_eq!(header.join(","), want);
}

#[test]
fn empty_grid_exits_2() {
    assert_eq!(weylforge(&["scan", "--family", "toda_cc", "--grid", "a=0:1:0"]).status.code(), Some(2));
    assert_eq!(weylforge(&["scan", "--family", "toda_cc"]).status.code(), Some(2));
}

fn emit(args: &[&str]) -> (Vec<String>, Vec<Vec<f64>>) {
    let out = weylforge(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = csv_rows(&out);
    (h, rows.iter().map(|r| r.iter().map(|s| s.parse().unwrap()).collect()).collect())
}

#[test]
fn emit_flat_radial() {
    let (h, rows) = emit(&["emit-congruence", "--family", "flat_r3", "--congruence", "radial", "--samples", "40"]);
    assert_eq!(h.join(","), "c1,c2,c3,chi1,chi2,chi3,tau,kappa,shear,accel");
    assert_eq!(rows.len(), 40);
    for r in rows {
        // Spherical chart: c1 = r.
        assert!((r[6] - 1.0 / r[0]).abs() < 1e-10);
        assert!(r[7].abs() < 1e-10);
    }
}

#[test]
fn emit_round_sphere_values() {
    let (_, rows) = emit(&["emit-congruence", "--family", "geodesic_symmetry", "--param", "H=1", "--samples", "40"]);
    for r in rows {
        assert!(r[6].abs() < 1e-10);
        assert!((r[7] - 0.5).abs() < 1e-10);
    }
}

#[test]
fn emit_ward_toda_twist_free() {
    let (_, rows) = emit(&["emit-congruence", "--family", "ward_toda", "--param", "V=eta^2-rho^2/2", "--samples", "40"]);
    assert!(rows.iter().all(|r| r[7].abs() < 1e-7));
}

#[test]
fn emit_rejects_unknown_congruence() {
    let out = weylforge(&["emit-congruence", "--family", "flat_r3", "--congruence", "hyperboloid"]);
    assert_eq!(out.status.code(), Some(2));
    let out = weylforge(&["emit-congruence", "--family", "einstein_tod"]);
    assert_eq!(out.status.code(), Some(2));
}
