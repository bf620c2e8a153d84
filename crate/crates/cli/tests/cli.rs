use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use semicomp::io::{read_bbs_curve, read_dataset, read_predictions, read_rows, BbsSummary};
use semicomp::runner::{BbsTableRow, NeuralEmTableRow};

const CONFIG: &str = r#"{
  "sim": {
    "n": 300,
    "theta": 0.5,
    "weibull": [
      { "phi1": 2.0, "phi2": 2.25 },
      { "phi1": 2.0, "phi2": 2.25 },
      { "phi1": 0.75, "phi2": 2.0 }
    ],
    "risk_kind": "linear",
    "p": 2,
    "covariates": "standard-normal",
    "censoring": { "kind": "target", "fraction": 0.25 },
    "seed": 3
  },
  "em": { "max_iterations": 25, "tolerance": 1e-6, "n_step_epochs_per_iteration": 5, "seed": 3 },
  "train": { "learning_rate": 0.01, "dropout": 0.0, "l2": 0.001, "hidden": [4] },
  "seed": 3
}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self { dir: TempDir::new().unwrap() };
        fs::write(ws.path("config.json"), CONFIG).unwrap();
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_semicomp"))
            .current_dir(self.dir.path())
            .env("RUST_LOG", "warn")
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    }

    fn simulate(&self, name: &str) {
        self.ok(&["simulate", "--config", "config.json", "--out", name]);
    }
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

fn code(out: &Output) -> Option<i32> {
    out.status.code()
}

#[test]
fn simulate_fit_predict_evaluate_round_trip() {
    let ws = Workspace::new();
    ws.ok(&["simulate", "--config", "config.json", "--out", "data.csv", "--truth", "truth.csv"]);
    assert_eq!(header(&ws.path("data.csv")), "y1,delta1,y2,delta2,x1,x2");
    assert_eq!(header(&ws.path("truth.csv")), "gamma,h1,h2,h3,t1_true,t2_true,c");
    let data = read_dataset(&ws.path("data.csv")).unwrap();
    assert_eq!(data.len(), 300);

    ws.ok(&["fit", "--config", "config.json", "--data", "data.csv", "--model", "neural", "--out", "model.json", "--trace", "trace.csv"]);
    assert_eq!(header(&ws.path("trace.csv")), "iter,obs_loglik,theta,q1,q2,q3,q4");
    let model: Value = serde_json::from_str(&fs::read_to_string(ws.path("model.json")).unwrap()).unwrap();
    assert!(model["risk_model"]["xi"].is_f64());
    assert_eq!(model["risk_model"]["networks"][0][0]["activation"], "relu");
    assert_eq!(model["risk_model"]["networks"][0][1]["b"], serde_json::json!([0.0]));

    ws.ok(&["predict", "--model", "model.json", "--data", "data.csv", "--times", "0.25,0.5,1.0", "--out", "preds.csv"]);
    let preds = read_predictions(&ws.path("preds.csv")).unwrap();
    assert_eq!(preds.len(), 900);
    assert!(preds.iter().all(|p| (0.0..=1.0).contains(&p.pi)));

    ws.ok(&["evaluate", "--data", "data.csv", "--preds", "preds.csv", "--horizon", "1.0", "--out", "bbs.csv", "--summary", "summary.json"]);
    let curve = read_bbs_curve(&ws.path("bbs.csv")).unwrap();
    assert_eq!(curve.iter().map(|r| r.t).collect::<Vec<_>>(), vec![0.25, 0.5, 1.0]);
    let summary: BbsSummary = serde_json::from_str(&fs::read_to_string(ws.path("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.n_points, 3);
    assert_eq!(summary.horizon, 1.0);
    assert!(summary.ibbs > 0.0 && summary.ibbs < 0.25, "ibbs {}", summary.ibbs);
}

#[test]
fn parametric_model_predicts_on_a_horizon_grid() {
    let ws = Workspace::new();
    ws.simulate("data.csv");
    ws.ok(&["fit", "--data", "data.csv", "--model", "parametric", "--out", "model.json"]);
    let model: Value = serde_json::from_str(&fs::read_to_string(ws.path("model.json")).unwrap()).unwrap();
    assert_eq!(model["phi"].as_array().unwrap().len(), 3);
    ws.ok(&["predict", "--model", "model.json", "--data", "data.csv", "--horizon", "1.0", "--out", "preds.csv"]);
    assert_eq!(read_predictions(&ws.path("preds.csv")).unwrap().len(), 300 * 100);
    let stdout = ws.ok(&["evaluate", "--data", "data.csv", "--preds", "preds.csv", "--horizon", "1.0"]);
    let summary: BbsSummary = serde_json::from_str(stdout.trim()).unwrap();
    assert_eq!(summary.n_points, 100);
}

#[test]
fn invalid_data_exits_with_two() {
    let ws = Workspace::new();
    fs::write(ws.path("bad.csv"), "y1,delta1,y2,delta2,x1\n2.0,0,1.0,1,0.5\n1.0,1,2.0,1,0.1\n").unwrap();
    let out = ws.run(&["fit", "--data", "bad.csv", "--model", "parametric", "--out", "m.json"]);
    assert_eq!(code(&out), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 0"));

    fs::write(ws.path("flags.csv"), "y1,delta1,y2,delta2\n1.0,2,1.0,1\n").unwrap();
    let out = ws.run(&["fit", "--data", "flags.csv", "--model", "parametric", "--out", "m.json"]);
    assert_eq!(code(&out), Some(2));
}

#[test]
fn configuration_errors_exit_with_two() {
    let ws = Workspace::new();
    ws.simulate("data.csv");
    assert_eq!(code(&ws.run(&["fit", "--model", "parametric", "--out", "m.json"])), Some(2));
    assert_eq!(code(&ws.run(&["fit", "--data", "data.csv", "--out", "data.csv"])), Some(2));
    assert_eq!(code(&ws.run(&["cv", "--data", "data.csv", "--folds", "1", "--horizon", "1"])), Some(2));
    assert_eq!(code(&ws.run(&["cv", "--data", "data.csv", "--folds", "2"])), Some(2));
    assert_eq!(code(&ws.run(&["simulate", "--out", "x.csv"])), Some(2));
}

#[test]
fn numeric_failure_exits_with_three() {
    let ws = Workspace::new();
    let mut csv = String::from("y1,delta1,y2,delta2,x1\n");
    for i in 0..20 {
        let x = if i % 3 == 0 { -1e200 } else { 1e200 };
        csv.push_str(&format!("{},1,{},1,{x}\n", 1.0 + 0.1 * i as f64, 1.5 + 0.1 * i as f64));
    }
    fs::write(ws.path("huge.csv"), csv).unwrap();
    let out = ws.run(&["fit", "--data", "huge.csv", "--model", "parametric", "--out", "m.json"]);
    assert_eq!(code(&out), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn flags_override_the_configuration() {
    let ws = Workspace::new();
    ws.ok(&["simulate", "--config", "config.json", "--out", "a.csv", "--n", "50"]);
    assert_eq!(read_dataset(&ws.path("a.csv")).unwrap().len(), 50);
    ws.ok(&["simulate", "--config", "config.json", "--out", "b.csv", "--n", "50", "--seed", "4"]);
    ws.ok(&["simulate", "--config", "config.json", "--out", "c.csv", "--n", "50"]);
    let read = |n: &str| fs::read_to_string(ws.path(n)).unwrap();
    assert_eq!(read("a.csv"), read("c.csv"));
    assert_ne!(read("a.csv"), read("b.csv"));
}

#[test]
fn cross_validation_is_seed_deterministic() {
    let ws = Workspace::new();
    ws.simulate("data.csv");
    let args = |out: &'static str| ["cv", "--config", "config.json", "--data", "data.csv", "--model", "neural", "--folds", "3", "--horizon", "1.0", "--out", out];
    ws.ok(&args("a.json"));
    ws.ok(&args("b.json"));
    let a: Value = serde_json::from_str(&fs::read_to_string(ws.path("a.json")).unwrap()).unwrap();
    let b: Value = serde_json::from_str(&fs::read_to_string(ws.path("b.json")).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a["per_fold"].as_array().unwrap().len(), 3);
}

#[test]
fn single_resample_collapses_the_band() {
    let ws = Workspace::new();
    ws.simulate("data.csv");
    ws.ok(&["bootstrap", "--config", "config.json", "--data", "data.csv", "--model", "parametric", "--resamples", "1", "--out", "bands.csv"]);
    assert_eq!(header(&ws.path("bands.csv")), "transition,t,mean,lower,upper");
    let rows: Vec<semicomp::app::BandRow> = read_rows(&ws.path("bands.csv")).unwrap();
    assert_eq!(rows.len(), 300);
    for r in rows {
        assert_eq!(r.lower, r.mean);
        assert_eq!(r.upper, r.mean);
    }
}

#[test]
fn replicate_studies_write_their_tables() {
    let ws = Workspace::new();
    ws.ok(&["replicate-study", "--study", "bbs-validation", "--replicates", "3", "--n", "200", "--setting", "1,3", "--out", "bbs.csv", "--raw", "raw.csv"]);
    let rows: Vec<BbsTableRow> = read_rows(&ws.path("bbs.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.setting).collect::<Vec<_>>(), vec![1, 3]);
    assert!(rows.iter().all(|r| r.replicates == 3 && r.n == 200));
    assert_eq!(header(&ws.path("raw.csv")), "setting,replicate,true_ibbs,calculated_ibbs");

    ws.ok(&[
        "replicate-study", "--config", "config.json", "--study", "neural-em-validation", "--replicates", "2", "--n", "1000",
        "--theta", "0.5", "--risk", "linear", "--censoring", "0.25", "--out", "nem.csv",
    ]);
    let rows: Vec<NeuralEmTableRow> = read_rows(&ws.path("nem.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].replicates, 2);
    assert_eq!(rows[0].risk, "linear");
    assert!(rows[0].theta_parametric_mean > 0.0 && rows[0].theta_neural_mean > 0.0);
}
