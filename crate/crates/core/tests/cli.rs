use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn optdesign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optdesign"))
        .args(args)
        .env_remove("OPTDESIGN_SEED")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn line<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .trim()
}

const EXP_TREND: [&str; 10] = [
    "--v",
    "5",
    "--n",
    "8",
    "--g",
    "2",
    "--model",
    "exp",
    "--criterion",
    "A",
];

#[test]
fn weights_for_controls() {
    let text = stdout(&optdesign(&[
        "weights",
        "--contrast",
        "controls",
        "--v",
        "5",
        "--g",
        "2",
        "--criterion",
        "A",
    ]));
    assert_eq!(line(&text, "gamma:"), "0.449490");
    assert_eq!(
        line(&text, "weights:"),
        "0.224745 0.224745 0.183503 0.183503 0.183503"
    );
    let mv = stdout(&optdesign(&[
        "weights",
        "--v",
        "5",
        "--g",
        "2",
        "--criterion",
        "MV",
    ]));
    assert_eq!(line(&mv, "weights:"), line(&text, "weights:"));
    let e = stdout(&optdesign(&[
        "weights",
        "--contrast",
        "centered",
        "--v",
        "4",
        "--criterion",
        "E",
    ]));
    assert_eq!(line(&e, "weights:"), "0.250000 0.250000 0.250000 0.250000");
}

#[test]
fn construct_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["construct", "--out-dir", out];
    args.extend(EXP_TREND);
    let report = json(&optdesign(&args));
    assert_eq!(report["support_size"], 16);
    assert_eq!(report["support_bound"], 16);
    assert_eq!(report["optimal"], true);
    let on_disk: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);
    let seq = fs::read_to_string(dir.path().join("exact.txt")).unwrap();
    assert_eq!(seq.trim(), report["exact_sequence"].as_str().unwrap());

    let sparse = dir.path().join("design_sparse.csv");
    let mut args = vec![
        "verify",
        "--tol",
        "1e-8",
        "--design",
        sparse.to_str().unwrap(),
    ];
    args.extend(EXP_TREND);
    let v = json(&optdesign(&args));
    assert_eq!(v["optimal"], true);
    assert_eq!(v["is_balanced"], true);

    let dense = dir.path().join("design.csv");
    let header = fs::read_to_string(&dense).unwrap();
    assert!(header.starts_with("u,1,2,3,4,5,6,7,8\n"));
    let mut args = vec![
        "verify",
        "--tol",
        "1e-5",
        "--design",
        dense.to_str().unwrap(),
    ];
    args.extend(EXP_TREND);
    assert_eq!(json(&optdesign(&args))["optimal"], true);

    let mut args = vec![
        "efficiency",
        "--design",
        dir.path()
            .join("exact.txt")
            .to_str()
            .unwrap()
            .to_string()
            .leak(),
    ];
    args.extend(EXP_TREND);
    let eff = json(&optdesign(&args));
    let e = eff["efficiency"].as_f64().unwrap();
    assert!((e - report["efficiency"].as_f64().unwrap()).abs() < 1e-12);
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_published_table_and_uniform_design() {
    let dir = tempfile::tempdir().unwrap();
    let table = write(
        dir.path(),
        "published.csv",
        "u,1,2,3,4,5,6,7,8\n\
         1,0,0.1250,0.0560,0,0,0,0,0.0437\n\
         2,0,0,0.0690,0,0,0.1250,0.0059,0.0249\n\
         3,0.0245,0,0,0.1250,0,0,0,0.0340\n\
         4,0.0154,0,0,0,0.1250,0,0.0207,0.0224\n\
         5,0.0851,0,0,0,0,0,0.0984,0\n",
    );
    let mut args = vec!["verify", "--tol", "5e-4", "--design", &table];
    args.extend(EXP_TREND);
    assert_eq!(json(&optdesign(&args))["optimal"], true);

    let row = format!(",{}", ["0.025"; 8].join(","));
    let body: String = (1..=5).map(|u| format!("{u}{row}\n")).collect();
    let uniform = write(
        dir.path(),
        "uniform.csv",
        &format!("u,1,2,3,4,5,6,7,8\n{body}"),
    );
    let mut args = vec!["verify", "--design", &uniform];
    args.extend(EXP_TREND);
    let v = json(&optdesign(&args));
    assert_eq!(v["optimal"], false);
    assert!(v["efficiency"].as_f64().unwrap() < 1.0);
}

#[test]
fn verify_replicated_trig_order() {
    let dir = tempfile::tempdir().unwrap();
    let seq = write(dir.path(), "order.txt", "2113211321132113\n");
    let v = json(&optdesign(&[
        "verify",
        "--design",
        &seq,
        "--v",
        "3",
        "--n",
        "16",
        "--g",
        "1",
        "--model",
        "trig",
        "--degree",
        "3",
        "--criterion",
        "E",
    ]));
    assert_eq!(v["optimal"], true);
    assert_eq!(v["is_balanced"], true);
}

#[test]
fn enumerate_and_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"v": 3, "model": {"kind": "poly", "n": 5, "degree": 1}, "contrast": {"kind": "centered"}, "criterion": "D"}"#,
    );
    let a = json(&optdesign(&["enumerate", "--spec", &spec]));
    let b = json(&optdesign(&[
        "enumerate",
        "--v",
        "3",
        "--n",
        "5",
        "--model",
        "poly",
        "--degree",
        "1",
        "--contrast",
        "centered",
        "--criterion",
        "D",
    ]));
    assert_eq!(a, b);
    assert_eq!(a["evaluated"], 243);
    assert!(a["efficiency"].as_f64().unwrap() <= 1.0 + 1e-9);
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_optdesign"));
        cmd.args(["construct", "--out-dir", dir.path().to_str().unwrap()])
            .args(EXP_TREND);
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        match env {
            Some(s) => cmd.env("OPTDESIGN_SEED", s),
            None => cmd.env_remove("OPTDESIGN_SEED"),
        };
        json(&cmd.output().unwrap())["seed"].as_u64().unwrap()
    };
    assert_eq!(run(None, None), 1);
    assert_eq!(run(Some("7"), None), 7);
    assert_eq!(run(Some("7"), Some("9")), 9);
}

#[test]
fn exit_codes() {
    let out = optdesign(&["weights", "--v", "4", "--g", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = optdesign(&["weights", "--v", "4", "--criterion", "phi_0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    // Three runs cannot estimate two contrasts alongside a linear trend.
    let out = optdesign(&[
        "construct",
        "--out-dir",
        out_dir,
        "--v",
        "3",
        "--n",
        "3",
        "--model",
        "poly",
        "--degree",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let seq = write(dir.path(), "order.txt", "123\n");
    let eff = json(&optdesign(&[
        "efficiency",
        "--design",
        &seq,
        "--v",
        "3",
        "--n",
        "3",
        "--model",
        "poly",
        "--degree",
        "1",
    ]));
    assert_eq!(eff["efficiency"], 0.0);
    let out = optdesign(&[
        "verify",
        "--design",
        "/nonexistent/design.csv",
        "--v",
        "3",
        "--n",
        "3",
        "--model",
        "poly",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
