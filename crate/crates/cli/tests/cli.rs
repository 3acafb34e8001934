use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn blkrylov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blkrylov")).args(args).env_remove("BLKRYLOV_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn real_matrix(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Value {
    let data: Vec<Value> = (0..rows * cols).map(|i| json!([f(i / cols, i % cols), 0.0])).collect();
    json!({"rows": rows, "cols": cols, "data": data})
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(v).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Textbook real GMRES: Gram-Schmidt Arnoldi and Givens rotations.
fn scalar_gmres(a: &[Vec<f64>], b: &[f64], steps: usize) -> Vec<f64> {
    let m = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let beta = dot(b, b).sqrt();
    let mut v = vec![b.iter().map(|x| x / beta).collect::<Vec<_>>()];
    let mut rot: Vec<(f64, f64)> = Vec::new();
    let mut g = vec![beta];
    let mut out = vec![beta];
    for j in 0..steps {
        let mut w: Vec<f64> = (0..m).map(|i| dot(&a[i], &v[j])).collect();
        let mut h = vec![0.0; j + 2];
        for (i, vi) in v.iter().enumerate() {
            h[i] = dot(vi, &w);
            for (wk, vk) in w.iter_mut().zip(vi) {
                *wk -= h[i] * vk;
            }
        }
        h[j + 1] = dot(&w, &w).sqrt();
        for (i, &(c, s)) in rot.iter().enumerate() {
            let (x, y) = (h[i], h[i + 1]);
            h[i] = c * x + s * y;
            h[i + 1] = -s * x + c * y;
        }
        let r = h[j].hypot(h[j + 1]);
        let (c, s) = (h[j] / r, h[j + 1] / r);
        rot.push((c, s));
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        out.push(g[j + 1].abs());
        let hn = dot(&w, &w).sqrt();
        v.push(w.iter().map(|x| x / hn).collect());
    }
    out
}

#[test]
fn poisson_curve_matches_scalar_gmres() {
    let dir = TempDir::new().unwrap();
    let m = 8;
    let lap = |i: usize, j: usize| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    };
    let problem = json!({"A": real_matrix(m, m, lap), "B": real_matrix(m, 1, |i, _| if i == 0 { 1.0 } else { 0.0 })});
    let input = write(dir.path(), "problem.json", &problem);
    let csv = dir.path().join("curve.csv");
    let out = blkrylov(&["solve", "--input", &input, "--emit-csv", csv.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let a: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| lap(i, j)).collect()).collect();
    let mut b = vec![0.0; m];
    b[0] = 1.0;
    // the last step reaches the exact solution; compare the nonzero part
    let oracle = scalar_gmres(&a, &b, m - 1);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,frobenius,col_1"));
    let curve: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(curve.len(), m + 1);
    for (k, o) in oracle.iter().enumerate() {
        assert!((curve[k] - o).abs() <= 1e-9, "step {k}: {} vs {o}", curve[k]);
    }
    assert!(curve.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    assert!(curve[m] <= 1e-12);
}

#[test]
fn identity_converges_in_one_step() {
    let dir = TempDir::new().unwrap();
    let problem = json!({"A": real_matrix(4, 4, |i, j| if i == j { 1.0 } else { 0.0 }),
                         "B": real_matrix(4, 2, |i, j| (i + 2 * j) as f64 + 1.0)});
    let input = write(dir.path(), "p.json", &problem);
    let trace = dir.path().join("trace.json");
    let out = blkrylov(&["solve", "--input", &input, "--output", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("after 1 steps"), "{}", stdout(&out));
    let t = read(&trace);
    assert_eq!(t["trace"]["termination"], "invariant");
}

#[test]
fn odd_size_is_padded() {
    let dir = TempDir::new().unwrap();
    let problem = json!({"A": real_matrix(5, 5, |i, j| if i == j { 2.0 + i as f64 } else { 0.3 / (1.0 + i as f64 + j as f64) }),
                         "B": real_matrix(5, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 1.5)});
    let input = write(dir.path(), "p.json", &problem);
    let trace = dir.path().join("trace.json");
    let out = blkrylov(&["solve", "--input", &input, "--output", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("padded: size 5 extended to 6"));
    let t = read(&trace);
    assert_eq!(t["padding"]["original_size"], 5);
    assert_eq!(t["k_max"], 1);
    assert_eq!(t["solution"]["rows"], 5);
}

#[test]
fn bad_input_and_breakdown_exit_codes() {
    let dir = TempDir::new().unwrap();
    let junk = dir.path().join("junk.json");
    fs::write(&junk, "{\"A\": 3}").unwrap();
    assert_eq!(blkrylov(&["solve", "--input", junk.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(blkrylov(&["solve"]).status.code(), Some(2));

    // A = diag(1..6), B = [e1 + e2, e3]: A B adds only one new direction
    let problem = json!({"A": real_matrix(6, 6, |i, j| if i == j { 1.0 + i as f64 } else { 0.0 }),
                         "B": real_matrix(6, 2, |i, j| match (i, j) { (0, 0) | (1, 0) | (2, 1) => 1.0, _ => 0.0 })});
    let input = write(dir.path(), "p.json", &problem);
    let out = blkrylov(&["solve", "--input", &input]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("breakdown at step 2"));

    let too_many = blkrylov(&["solve", "--input", &input, "--kmax", "9"]);
    assert_eq!(too_many.status.code(), Some(2));
}

fn scalar_norm(v: f64) -> Value {
    json!({"rows": 1, "cols": 1, "data": [[v, 0.0]]})
}

fn prescriptions() -> Vec<Value> {
    let upper2 =
        |a: f64, b: f64, d: f64| json!({"rows": 2, "cols": 2, "data": [[a, 0.0], [b, 0.0], [0.0, 0.0], [d, 0.0]]});
    vec![
        // scalar, strictly decreasing, explicit Ritz polynomials
        json!({"n": 3, "s": 1, "F": [scalar_norm(1.0), scalar_norm(0.6), scalar_norm(0.2)],
               "ritz": [{"n": 1, "s": 1, "coeffs": [scalar_norm(0.5)]},
                        {"n": 2, "s": 1, "coeffs": [scalar_norm(-1.0), scalar_norm(0.3)]},
                        {"n": 3, "s": 1, "coeffs": [scalar_norm(1.0), scalar_norm(0.0), scalar_norm(0.0)]}]}),
        // block, one step of complete stagnation
        json!({"n": 3, "s": 2, "F": [upper2(1.0, 0.2, 0.9), upper2(1.0, 0.2, 0.9), upper2(0.5, 0.1, 0.4)],
               "ritz": {"solvent_chain": [real_matrix(2, 2, |i, j| [[1.0, 0.2], [0.0, -0.8]][i][j]),
                                          real_matrix(2, 2, |i, j| [[0.0, 1.0], [-1.0, 0.0]][i][j]),
                                          real_matrix(2, 2, |i, j| [[1.2, 0.0], [0.3, 0.7]][i][j])],
                        "ritz_mode": "zero"},
               "seed": 11}),
        // block, single step
        json!({"n": 1, "s": 2, "F": [upper2(2.0, -0.5, 1.0)],
               "ritz": [{"n": 1, "s": 2, "coeffs": [real_matrix(2, 2, |i, j| [[1.0, 2.0], [0.0, 3.0]][i][j])]}]}),
    ]
}

#[test]
fn prescribe_then_verify_round_trips() {
    for (i, p) in prescriptions().iter().enumerate() {
        let dir = TempDir::new().unwrap();
        let input = write(dir.path(), "prescription.in.json", p);
        let inst = dir.path().join("inst");
        let out = blkrylov(&["prescribe", "--input", &input, "--output", inst.to_str().unwrap(), "--seed", "7"]);
        assert!(out.status.success(), "case {i}: {}", stderr(&out));
        for f in ["A.json", "B.json", "H.json", "problem.json", "prescription.json", "manifest.json"] {
            assert!(inst.join(f).exists(), "case {i}: missing {f}");
        }
        assert_eq!(read(&inst.join("manifest.json"))["seed"], 7);
        let v = blkrylov(&["verify", "--input", inst.to_str().unwrap()]);
        assert!(v.status.success(), "case {i}: {}{}", stdout(&v), stderr(&v));
    }
}

#[test]
fn outputs_are_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.json", &prescriptions()[1]);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let o = blkrylov(&["prescribe", "--input", &input, "--output", out_dir.to_str().unwrap(), "--randomize-free"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let trace = out_dir.join("trace.json");
        let csv = out_dir.join("curve.csv");
        let problem = out_dir.join("problem.json");
        let o = blkrylov(&[
            "solve",
            "--input",
            problem.to_str().unwrap(),
            "--output",
            trace.to_str().unwrap(),
            "--emit-csv",
            csv.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out_dir
    };
    let (x, y) = (run("x"), run("y"));
    for f in ["A.json", "B.json", "H.json", "problem.json", "manifest.json", "trace.json", "curve.csv"] {
        assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap(), "{f} differs");
    }
    // the prescription's own seed is used when no flag or env var is given
    assert_eq!(read(&x.join("manifest.json"))["seed"], 11);

    let env_dir = dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_blkrylov"))
        .args(["prescribe", "--input", &input, "--output", env_dir.to_str().unwrap()])
        .env("BLKRYLOV_SEED", "42")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read(&env_dir.join("manifest.json"))["seed"], 42);
}

#[test]
fn solve_output_agrees_with_verify_report() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.json", &prescriptions()[1]);
    let inst = dir.path().join("inst");
    assert!(blkrylov(&["prescribe", "--input", &input, "--output", inst.to_str().unwrap()]).status.success());
    let report = dir.path().join("report.json");
    let v = blkrylov(&["verify", "--input", inst.to_str().unwrap(), "--output", report.to_str().unwrap()]);
    assert!(v.status.success());
    let trace = dir.path().join("trace.json");
    let problem = inst.join("problem.json");
    let s = blkrylov(&["solve", "--input", problem.to_str().unwrap(), "--output", trace.to_str().unwrap()]);
    assert!(s.status.success(), "{}", stderr(&s));

    let t = read(&trace);
    let rep = read(&report);
    let p = read(&inst.join("prescription.json"));
    let steps = t["trace"]["steps"].as_array().unwrap();
    for (k, expected) in rep["residual_mismatch"].as_array().unwrap().iter().enumerate() {
        let gram = &steps[k]["gmres_gram"];
        let fk = &p["F"][k];
        let mismatch = gram_mismatch(gram, fk);
        let reported = expected.as_f64().unwrap();
        let norm = dominant_gram_eig(&p["F"][0]);
        assert!((mismatch / norm - reported).abs() <= 1e-12, "step {k}: {mismatch} / {norm} vs {reported}");
    }
}

fn entries(m: &Value) -> (usize, Vec<(f64, f64)>) {
    let cols = m["cols"].as_u64().unwrap() as usize;
    let data = m["data"].as_array().unwrap().iter().map(|z| (z[0].as_f64().unwrap(), z[1].as_f64().unwrap())).collect();
    (cols, data)
}

/// Upper triangular `F` from JSON to its Gram matrix `F^* F`.
fn gram_of(f: &Value) -> Vec<Vec<(f64, f64)>> {
    let (n, d) = entries(f);
    let at = |i: usize, j: usize| d[i * n + j];
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    (0..n).fold((0.0, 0.0), |acc, k| {
                        let (a, b) = at(k, i);
                        let (c, e) = at(k, j);
                        (acc.0 + a * c + b * e, acc.1 + a * e - b * c)
                    })
                })
                .collect()
        })
        .collect()
}

fn gram_mismatch(gram: &Value, f: &Value) -> f64 {
    let (n, d) = entries(gram);
    let g = gram_of(f);
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (a, b) = d[i * n + j];
            let (c, e) = g[i][j];
            sum += (a - c).powi(2) + (b - e).powi(2);
        }
    }
    sum.sqrt()
}

/// Largest eigenvalue of the 2x2 (or 1x1) Hermitian Gram matrix of `F`.
fn dominant_gram_eig(f: &Value) -> f64 {
    let g = gram_of(f);
    if g.len() == 1 {
        return g[0][0].0;
    }
    let (a, d) = (g[0][0].0, g[1][1].0);
    let (br, bi) = g[0][1];
    let mean = 0.5 * (a + d);
    mean + (0.25 * (a - d).powi(2) + br * br + bi * bi).sqrt()
}

#[test]
fn inconsistent_prescription_is_reported() {
    let dir = TempDir::new().unwrap();
    let p = json!({"n": 2, "s": 1, "F": [scalar_norm(1.0), scalar_norm(1.0)],
                   "ritz": [{"n": 1, "s": 1, "coeffs": [scalar_norm(2.0)]},
                            {"n": 2, "s": 1, "coeffs": [scalar_norm(1.0), scalar_norm(0.0)]}]});
    let input = write(dir.path(), "p.json", &p);
    let out = blkrylov(&["prescribe", "--input", &input, "--output", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(stderr(&out).contains("step 1"), "{}", stderr(&out));
    let adm = blkrylov(&["admissible", "--input", &input]);
    assert_eq!(adm.status.code(), Some(4));
    assert!(stdout(&adm).contains("inconsistent at k = 1"));
}

#[test]
fn tampered_instance_fails_verification() {
    let dir = TempDir::new().unwrap();
    let input = write(dir.path(), "p.json", &prescriptions()[0]);
    let inst = dir.path().join("inst");
    assert!(blkrylov(&["prescribe", "--input", &input, "--output", inst.to_str().unwrap()]).status.success());
    let mut p = read(&inst.join("prescription.json"));
    p["F"][1] = scalar_norm(0.61);
    fs::write(inst.join("prescription.json"), serde_json::to_string(&p).unwrap()).unwrap();
    let out = blkrylov(&["verify", "--input", inst.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    assert!(stdout(&out).contains("FAILED"));
}

#[test]
fn roots_of_a_solvent_chain() {
    let dir = TempDir::new().unwrap();
    let chain = json!({"solvent_chain": [real_matrix(1, 1, |_, _| 3.0), real_matrix(1, 1, |_, _| -2.0)]});
    let input = write(dir.path(), "c.json", &chain);
    let out_path = dir.path().join("roots.json");
    let out = blkrylov(&["roots", "--input", &input, "--output", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let roots = read(&out_path)["roots"].clone();
    let re: Vec<f64> = roots.as_array().unwrap().iter().map(|z| z[0].as_f64().unwrap()).collect();
    assert!((re[0] + 2.0).abs() < 1e-12 && (re[1] - 3.0).abs() < 1e-12);
}

#[test]
fn nearly_dependent_residuals_are_not_admissible() {
    let dir = TempDir::new().unwrap();
    let eps = 0.01;
    let sym = |a: f64, b: f64, d: f64| json!({"rows": 2, "cols": 2, "data": [[a, 0.0], [b, 0.0], [b, 0.0], [d, 0.0]]});
    for p in [-0.1, 0.0, 0.05, 0.1] {
        let input = write(dir.path(), "g.json", &json!({"grams": [sym(1.0, 1.0 - eps, 1.0), sym(eps, p, 1.0 - eps)]}));
        let out = blkrylov(&["admissible", "--input", &input]);
        assert_eq!(out.status.code(), Some(4), "p = {p}");
    }
    let ok = write(dir.path(), "ok.json", &json!({"grams": [sym(1.0, 0.0, 1.0), sym(0.5, 0.0, 0.1)]}));
    assert!(blkrylov(&["admissible", "--input", &ok]).status.success());
}
