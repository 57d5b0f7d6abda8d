use std::path::Path;
use std::process::Command;

use serde_json::Value;

use blochframe::io::{write_mmn, MmnData};
use blochframe::models::{kane_mele, KaneMeleParams};
use blochframe::{KGrid, ModelProvider, Tolerances};

fn run(args: &[&str], out: &Path) -> (i32, Value) {
    let output = Command::new(env!("CARGO_BIN_EXE_blochframe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BLOCHFRAME_OUT")
        .output()
        .expect("binary runs");
    let code = output.status.code().expect("exit code");
    let summary = std::fs::read_to_string(out.join("summary.json"))
        .map(|s| serde_json::from_str(&s).expect("summary is JSON"))
        .unwrap_or(Value::Null);
    (code, summary)
}

#[test]
fn qsh_columns_frame_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s) = run(
        &[
            "frame",
            "--model",
            "kane-mele",
            "--lambda-nu",
            "0",
            "--grid",
            "48x48",
        ],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert_eq!(s["status"], "ok");
    assert!(
        s["results"]["frame"]["periodicity_residual"]
            .as_f64()
            .unwrap()
            < 1e-6
    );
    assert!(dir.path().join("frame.field").exists());
    let csv = std::fs::read_to_string(dir.path().join("regularity.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("k1,k2,value"));
    assert_eq!(csv.lines().count(), 1 + 48 * 48);
}

#[test]
fn qsh_log_frame_is_an_obstruction() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s) = run(
        &[
            "frame",
            "--model",
            "kane-mele",
            "--lambda-nu",
            "0",
            "--grid",
            "32x32",
            "--method",
            "log",
        ],
        dir.path(),
    );
    assert_eq!(code, 2);
    assert_eq!(s["status"], "obstruction");
    assert_eq!(s["error"]["kind"], "EigenvalueWinding");
}

#[test]
fn haldane_reports_chern_obstruction() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s) = run(
        &["frame", "--model", "haldane", "--grid", "32x32"],
        dir.path(),
    );
    assert_eq!(code, 2);
    assert_eq!(s["error"]["kind"], "ChernObstruction");
    assert_eq!(s["error"]["chern"][0]["value"], 1);
    let (code, s) = run(
        &["chern", "--model", "haldane", "--grid", "32x32"],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert_eq!(s["results"]["chern"][0]["value"], 1);
}

#[test]
fn toy_loop_wind_and_contract() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s) = run(&["wind", "--windings", "1,-1", "--grid", "64"], dir.path());
    assert_eq!(code, 0);
    assert_eq!(s["results"]["winding"]["det"], 0);
    assert_eq!(
        s["results"]["winding"]["per_eigenvalue"],
        serde_json::json!([1, -1])
    );

    let loop_file = dir.path().join("loop.field");
    let input = loop_file.to_str().unwrap();
    let (code, s) = run(
        &["contract", "--input", input, "--method", "log"],
        dir.path(),
    );
    assert_eq!(code, 2);
    assert_eq!(s["error"]["windings"], serde_json::json!([1, -1]));
    let (code, s) = run(
        &["contract", "--input", input, "--t-points", "17"],
        dir.path(),
    );
    assert_eq!(code, 0);
    assert!(s["results"]["homotopy"]["endpoint_error"].as_f64().unwrap() < 1e-8);
    assert_eq!(s["results"]["homotopy"]["t_points"], 17);
}

#[test]
fn qsh_obstruction_loop_contracts_with_columns() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "contract",
        "--model",
        "kane-mele",
        "--lambda-nu",
        "0",
        "--grid",
        "32x32",
    ];
    let (code, s) = run(&args, dir.path());
    assert_eq!(code, 0, "{s}");
    assert!(dir.path().join("homotopy.field").exists());
}

#[test]
fn config_file_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(
        &cfg,
        "# QSH\nmodel = kane-mele\nlambda-nu = 0\ngrid = 24x24\nseed = 5\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&["frame", "--config", cfg.to_str().unwrap()], &a).0, 0);
    assert_eq!(run(&["frame", "--config", cfg.to_str().unwrap()], &b).0, 0);
    let fa = std::fs::read(a.join("frame.field")).unwrap();
    let fb = std::fs::read(b.join("frame.field")).unwrap();
    assert_eq!(fa, fb);
    // Flags override the file.
    let (_, s) = run(
        &["frame", "--config", cfg.to_str().unwrap(), "--seed", "6"],
        &a,
    );
    assert_eq!(s["config"]["seed"], 6);
}

#[test]
fn ingest_w90_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tol = Tolerances::default();
    let grid = KGrid::square(12).unwrap();
    let model = kane_mele(KaneMeleParams::new(6.0, 1.0))
        .unwrap()
        .with_occupation(4)
        .unwrap();
    let p = ModelProvider::new(&model, &grid, &tol).unwrap();
    let offsets = vec![vec![1, 0], vec![0, 1], vec![-1, 0], vec![0, -1]];
    let mmn = dir.path().join("km.mmn");
    std::fs::write(
        &mmn,
        write_mmn(&MmnData::from_provider(&p, &offsets, "synthetic").unwrap()),
    )
    .unwrap();
    let (code, s) = run(
        &[
            "ingest-w90",
            "--mmn",
            mmn.to_str().unwrap(),
            "--window",
            "1-2",
            "--grid",
            "12x12",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{s}");
    assert_eq!(s["results"]["ingest"]["n_bands"], 4);
    assert_eq!(s["results"]["chern"][0]["value"], 0);

    let (code, s) = run(
        &[
            "ingest-w90",
            "--mmn",
            mmn.to_str().unwrap(),
            "--grid",
            "12x12",
        ],
        dir.path(),
    );
    assert_eq!(code, 1);
    assert_eq!(s["error"]["kind"], "Config");
}

#[test]
fn converge_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = run(
        &[
            "converge",
            "--model",
            "kane-mele",
            "--lambda-nu",
            "0",
            "--sizes",
            "8,12",
        ],
        dir.path(),
    );
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn bad_input_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, s) = run(&["frame", "--model", "nope"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(s["error"]["kind"], "Config");
    let (code, _) = run(&["frame", "--set", "bogus"], dir.path());
    assert_eq!(code, 1);
}
