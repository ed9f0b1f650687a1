use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roesser2d::grid::GridData;
use serde_json::Value;

const SCALAR: &str = r#"{"n_h":1,"n_v":1,"n_y":1,"A1":[[0.5]],"A2":[[0.3]],"A3":[[0.8]],"A4":[[0.4]],
"C1":[[1.0]],"C2":[[-1.2]],"K1":[[1.0]],"K2":[[-0.8991322189916415]],"Re":[[1.0]]}"#;

fn workdir(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("roesser2d-it-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_model(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roesser2d")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn grid(p: PathBuf) -> GridData {
    GridData::read(fs::File::open(p).unwrap()).unwrap()
}

#[test]
fn simulate_writes_grids_of_the_implied_extent() {
    let d = workdir("sim");
    let model = write_model(&d, "m.json", SCALAR);
    let out = d.join("out");
    let o = run(&["simulate", "--model", s(&model), "--i", "4", "--j", "100", "--m", "20", "--seed", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let y = grid(out.join("y.r2d"));
    assert_eq!((y.dim(), y.rows(), y.cols()), (1, 106, 20));
    let text = fs::read_to_string(out.join("y.r2d")).unwrap();
    assert!(text.starts_with("R2D1 1 106 20\n"));
    assert_eq!(text.lines().count(), 1 + 107 * 21);
    assert!(!out.join("xh.r2d").exists());
}

#[test]
fn emit_states_adds_matching_grids() {
    let d = workdir("emit");
    let model = write_model(&d, "m.json", SCALAR);
    let out = d.join("out");
    let o = run(&[
        "simulate", "--model", s(&model), "--i", "2", "--j", "20", "--m", "5", "--seed", "9", "--out", s(&out),
        "--emit-states", "--format", "binary",
    ]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["y", "xh", "xv", "e"] {
        let g = grid(out.join(format!("{name}.r2db")));
        assert_eq!((g.rows(), g.cols()), (22, 5), "{name}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let d = workdir("det");
    let model = write_model(&d, "m.json", SCALAR);
    let (a, b) = (d.join("a"), d.join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--model", s(&model), "--j", "60", "--m", "8", "--seed", "4", "--out", s(out), "--emit-states"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["y.r2d", "xh.r2d", "xv.r2d", "e.r2d", "report.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let other = d.join("c");
    run(&["simulate", "--model", s(&model), "--j", "60", "--m", "8", "--seed", "5", "--out", s(&other)]);
    assert_ne!(fs::read(a.join("y.r2d")).unwrap(), fs::read(other.join("y.r2d")).unwrap());
}

#[test]
fn identify_reports_and_is_repeatable() {
    let d = workdir("ident");
    let model = write_model(&d, "m.json", SCALAR);
    let out = d.join("sim");
    run(&["simulate", "--model", s(&model), "--i", "3", "--j", "300", "--m", "8", "--seed", "2", "--out", s(&out)]);
    let data = out.join("y.r2d");
    let args = [
        "identify", "--data", s(&data), "--i", "3", "--j", "300", "--order-h", "1", "--order-v", "1", "--model",
        s(&model),
    ];
    let first = run(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, run(&args).stdout);
    let r = json(&first);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["config"]["order_h"], 1);
    assert_eq!(r["result"]["diagnostics"]["stage1_h"]["order_given"], true);
    assert!(r.get("timings").is_none());
    let table = r["result"]["eigenvalue_errors"].as_array().unwrap();
    assert_eq!(table.len(), 2);
    assert!(table[0]["abs_error"][0].as_f64().unwrap().is_finite());

    let threaded = json(&run(&[&args[..], &["--threads", "1"]].concat()));
    assert_eq!(threaded["result"], r["result"]);
    let timed = json(&run(&[&args[..], &["--timings"]].concat()));
    assert!(timed["timings"]["identify_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn identify_emits_state_grids() {
    let d = workdir("ident-states");
    let model = write_model(&d, "m.json", SCALAR);
    let sim = d.join("sim");
    run(&["simulate", "--model", s(&model), "--i", "3", "--j", "200", "--m", "6", "--seed", "3", "--out", s(&sim)]);
    let out = d.join("id");
    let o = run(&[
        "identify", "--data", s(&sim.join("y.r2d")), "--i", "3", "--order-h", "1", "--order-v", "1", "--out", s(&out),
        "--emit-states",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let xh = grid(out.join("xh.r2d"));
    assert_eq!((xh.dim(), xh.rows(), xh.cols()), (1, 204, 6));
    assert!(out.join("report.json").exists());
}

#[test]
fn wrong_extent_is_an_input_error() {
    let d = workdir("extent");
    let model = write_model(&d, "m.json", SCALAR);
    let sim = d.join("sim");
    run(&["simulate", "--model", s(&model), "--i", "2", "--j", "20", "--m", "4", "--seed", "1", "--out", s(&sim)]);
    let o = run(&["identify", "--data", s(&sim.join("y.r2d")), "--i", "4", "--j", "20"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("N=2i+j-2"));
    let o = run(&["identify", "--data", s(&sim.join("y.r2d")), "--i", "2", "--j", "18", "--truncate", "--order-h", "1", "--order-v", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&o)["config"]["j"], 18);
}

#[test]
fn flat_spectrum_is_a_numerical_failure() {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let d = workdir("flat");
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let g = GridData::from_fn(1, 204, 6, |_, _, _| StandardNormal.sample(&mut rng));
    let data = d.join("white.r2d");
    g.write_text(fs::File::create(&data).unwrap()).unwrap();
    let o = run(&["identify", "--data", s(&data), "--i", "3"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("singular values"));
}

#[test]
fn validate_reports() {
    let d = workdir("validate");
    let good = write_model(&d, "good.json", SCALAR);
    let r = json(&run(&["validate", "--model", s(&good)]));
    assert_eq!(r["result"]["validation"]["pass"], true);
    assert!(r["result"]["notes"][0].as_str().unwrap().contains("Q, R, S not supplied"));

    let noisy = r#"{"n_h":1,"n_v":1,"n_y":1,"A1":[[0.5]],"A2":[[0.2]],"A3":[[0.1]],"A4":[[0.4]],
"C1":[[1.0]],"C2":[[1.0]],"K1":[[0.0]],"K2":[[0.0]],"Re":[[1.0]],
"Q":[[0.71,-0.13],[-0.13,0.83]],"R":[[1.0]],"S":[[0.1],[0.0]]}"#;
    let r = json(&run(&["validate", "--model", s(&write_model(&d, "noisy.json", noisy))]));
    assert_eq!(r["result"]["validation"]["pass"], true);
    // Q = I − A·Aᵀ makes the identity the stationary state covariance
    let res = &r["result"]["covariances"]["residuals"];
    assert!(res["gain_agreement"].as_f64().unwrap() < 1e-8);
    assert!(res["sigma_identity"].as_f64().unwrap() < 1e-8);
    assert!(r["result"]["notes"].as_array().unwrap().is_empty());

    let unstable = SCALAR.replace("[[0.5]]", "[[1.5]]");
    let o = run(&["validate", "--model", s(&write_model(&d, "bad.json", &unstable))]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["result"]["validation"]["pass"], false);
    assert!(r["result"]["validation"]["failures"][0].as_str().unwrap().contains("spectral radius"));

    let o = run(&["simulate", "--model", s(&d.join("bad.json")), "--seed", "1", "--out", s(&d.join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["result"]["validation"]["pass"], false);

    let o = run(&["validate", "--model", s(&write_model(&d, "broken.json", "{\"n_h\": 1}"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bias_check_on_uncorrelated_model() {
    let d = workdir("bias");
    let model = write_model(&d, "m.json", SCALAR);
    let o = run(&["bias-check", "--model", s(&model), "--i", "2", "--m", "1", "--jbar", "200,800", "--seeds", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    let rows = r["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|row| row["closed_form_norm"] == 0.0));
    assert!(r["result"]["note"].as_str().unwrap().contains("vanishes"));
    assert!(r["result"]["decay"][0]["decay_exponent"].as_f64().unwrap().is_finite());
}
