use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sbomp::dataset::{iteration_inputs, load_dataset};
use sbomp::heuristics::DpHeuristic;
use sbomp::lattice::{build_occupancy_grid, LatticeParams, Node, Obstacle, Scenario};
use sbomp::mlmodel::{save_model, MlpModel};
use sbomp::search::exhaustive_search;
use serde_json::Value;
use tempfile::TempDir;

fn sbomp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbomp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sbomp(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_params(dir: &Path, params: &LatticeParams) -> std::path::PathBuf {
    let path = dir.join("params.json");
    fs::write(&path, serde_json::to_string(params).unwrap()).unwrap();
    path
}

fn write_scenario(dir: &Path, scenario: &Scenario) -> std::path::PathBuf {
    let path = dir.join(format!("{}.json", scenario.id));
    fs::write(&path, serde_json::to_string(scenario).unwrap()).unwrap();
    path
}

fn small() -> LatticeParams {
    LatticeParams::sized(8, 6, 2, 3)
}

#[test]
fn scenarios_count_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let params = write_params(tmp.path(), &small());
    let none = tmp.path().join("none");
    ok(&["scenarios", "--count", "0", "--params", p(&params), "--out", p(&none)]);
    assert_eq!(fs::read_dir(&none).unwrap().count(), 0);

    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&[
            "scenarios",
            "--count",
            "100",
            "--seed",
            "7",
            "--params",
            p(&params),
            "--out",
            p(dir),
        ]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 100);
    let mut ids = std::collections::BTreeSet::new();
    for name in &names {
        let text = fs::read(a.join(name)).unwrap();
        assert_eq!(text, fs::read(b.join(name)).unwrap());
        let s: Scenario = serde_json::from_slice(&text).unwrap();
        ids.insert(s.id);
    }
    assert_eq!(ids.len(), 100);
}

#[test]
fn plan_heuristics_agree_on_cost() {
    let tmp = TempDir::new().unwrap();
    let empty = write_scenario(tmp.path(), &Scenario::empty("empty", small()));
    let cost = |args: &[&str]| -> f64 {
        let v: Value = serde_json::from_str(&ok(args)).unwrap();
        v["cost"].as_f64().unwrap()
    };
    let zero = cost(&["plan", "--scenario", p(&empty), "--heuristic", "zero"]);
    let dp = cost(&["plan", "--scenario", p(&empty), "--heuristic", "dp"]);
    assert_eq!(zero, dp);

    let model_path = tmp.path().join("m.json");
    save_model(&MlpModel::for_lattice(&small(), &[8], 5), &model_path).unwrap();
    for seed in 0..10 {
        let s = sbomp::lattice::random_scenario(&small(), seed);
        let path = write_scenario(tmp.path(), &s);
        let zero = sbomp(&["plan", "--scenario", p(&path), "--heuristic", "zero"]);
        let ml = sbomp(&[
            "plan",
            "--scenario",
            p(&path),
            "--heuristic",
            "ml",
            "--model",
            p(&model_path),
            "--epsilon",
            "1.0",
        ]);
        assert_eq!(zero.status.code(), ml.status.code());
        if zero.status.success() {
            let z: Value = serde_json::from_slice(&zero.stdout).unwrap();
            let m: Value = serde_json::from_slice(&ml.stdout).unwrap();
            assert!((z["cost"].as_f64().unwrap() - m["cost"].as_f64().unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn plan_writes_chain_to_out() {
    let tmp = TempDir::new().unwrap();
    let s = write_scenario(tmp.path(), &Scenario::empty("e", small()));
    let out = tmp.path().join("plan.json");
    ok(&["plan", "--scenario", p(&s), "--out", p(&out)]);
    let v: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    let chain = v["chain"].as_array().unwrap();
    assert_eq!(chain[0]["ks"], 0);
    assert!(chain[0]["a"].is_null());
    assert_eq!(
        v["stats"]["nodes_explored"].as_u64().unwrap() as usize,
        v["stats"]["expansions"].as_u64().unwrap() as usize + 1
    );
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let s = write_scenario(tmp.path(), &Scenario::empty("e", small()));
    // ml without a model is a usage error.
    assert_eq!(
        sbomp(&["plan", "--scenario", p(&s), "--heuristic", "ml"]).status.code(),
        Some(3)
    );
    assert_eq!(
        sbomp(&["plan", "--scenario", p(&s), "--heuristic", "bogus"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(sbomp(&["frobnicate"]).status.code(), Some(3));
    let missing = tmp.path().join("missing.json");
    assert_eq!(
        sbomp(&["plan", "--scenario", p(&s), "--heuristic", "ml", "--model", p(&missing)])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(sbomp(&["plan", "--scenario", p(&missing)]).status.code(), Some(4));

    // Moving too fast toward a parked car on a single lane: nothing is safe.
    let trapped = Scenario {
        obstacles: vec![Obstacle::MovingVehicle { lane: 0, s0: 1, v: 0 }],
        ..Scenario::empty("trapped", LatticeParams::sized(8, 6, 1, 3))
    };
    let t = write_scenario(tmp.path(), &trapped);
    assert_eq!(
        sbomp(&["plan", "--scenario", p(&t), "--start-kv", "2"]).status.code(),
        Some(2)
    );

    let trace = tmp.path().join("trace.json");
    let out = sbomp(&["drive", "--scenario", p(&t), "--start-kv", "2", "--out", p(&trace)]);
    assert_eq!(out.status.code(), Some(2));
    let v: Value = serde_json::from_slice(&fs::read(&trace).unwrap()).unwrap();
    assert_eq!(v["outcome"], "no_solution");
    assert_eq!(v["trajectory"].as_array().unwrap().len(), 1);

    assert_eq!(
        sbomp(&["drive", "--scenario", p(&s), "--commit-steps", "0"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(sbomp(&["--help"]).status.code(), Some(0));
}

#[test]
fn dataset_counts_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let params = small();
    let pf = write_params(tmp.path(), &params);
    let one = tmp.path().join("one.jsonl");
    ok(&[
        "dataset",
        "--k-max",
        "1",
        "--seed",
        "3",
        "--params",
        p(&pf),
        "--out",
        p(&one),
    ]);
    let ds = load_dataset(&one).unwrap();
    assert_eq!(ds.scenarios.len(), 1);
    assert!(ds.records.iter().all(|r| r.scenario_id == ds.scenarios[0].id));

    let a = tmp.path().join("a.jsonl.gz");
    let b = tmp.path().join("b.jsonl.gz");
    for out in [&a, &b] {
        ok(&[
            "dataset",
            "--k-max",
            "6",
            "--seed",
            "3",
            "--params",
            p(&pf),
            "--out",
            p(out),
        ]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let ds = load_dataset(&a).unwrap();
    let mut closed = 0;
    for k in 1..=6 {
        let (scenario, start) = iteration_inputs(k, &params, 3).unwrap();
        let grid = build_occupancy_grid(&scenario).unwrap();
        let run = exhaustive_search(&Node::root(start), &grid, &params, DpHeuristic::new(&params)).unwrap();
        closed += run.closed.len();
    }
    assert_eq!(ds.records.len(), closed);
}

#[test]
fn train_log_and_determinism() {
    let tmp = TempDir::new().unwrap();
    let pf = write_params(tmp.path(), &small());
    let data = tmp.path().join("d.jsonl");
    ok(&[
        "dataset",
        "--k-max",
        "12",
        "--seed",
        "1",
        "--params",
        p(&pf),
        "--out",
        p(&data),
    ]);
    let cfg = tmp.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"hidden": [16], "train": {"epochs": 4, "learning_rate": 0.005}}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let model = tmp.path().join(format!("{name}.json"));
        ok(&[
            "train",
            "--dataset",
            p(&data),
            "--config",
            p(&cfg),
            "--seed",
            "9",
            "--out",
            p(&model),
        ]);
        (
            fs::read(&model).unwrap(),
            fs::read(tmp.path().join(format!("{name}.log.csv"))).unwrap(),
        )
    };
    let (m1, l1) = run("m1");
    let (m2, l2) = run("m2");
    assert_eq!(m1, m2);
    assert_eq!(l1, l2);
    let log = String::from_utf8(l1).unwrap();
    assert_eq!(log.lines().next().unwrap(), "epoch,train_mse,val_mse");
    assert_eq!(log.lines().count(), 1 + 4);

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"train": {"epochs": 0}}"#).unwrap();
    let out = sbomp(&[
        "train",
        "--dataset",
        p(&data),
        "--config",
        p(&bad),
        "--out",
        p(&tmp.path().join("x.json")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_outputs() {
    let tmp = TempDir::new().unwrap();
    let pf = write_params(tmp.path(), &small());
    let dir = tmp.path().join("scn");
    ok(&[
        "scenarios",
        "--count",
        "15",
        "--seed",
        "4",
        "--params",
        p(&pf),
        "--out",
        p(&dir),
    ]);
    let model = tmp.path().join("m.json");
    save_model(&MlpModel::for_lattice(&small(), &[8], 2), &model).unwrap();
    let out_a = tmp.path().join("ra");
    let out_b = tmp.path().join("rb");
    for out in [&out_a, &out_b] {
        ok(&[
            "bench",
            "--scenarios",
            p(&dir),
            "--model",
            p(&model),
            "--epsilons",
            "1.0,2.0",
            "--out",
            p(out),
        ]);
    }
    for f in ["bench.csv", "bench_aggregate.csv", "bench.md"] {
        assert_eq!(
            fs::read(out_a.join(f)).unwrap(),
            fs::read(out_b.join(f)).unwrap(),
            "{f}"
        );
    }
    let mut rdr = csv::Reader::from_path(out_a.join("bench.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 15 * 4);
    for r in &rows {
        if !r[col("cost_ratio")].is_empty() {
            let ratio: f64 = r[col("cost_ratio")].parse().unwrap();
            let eps: f64 = r[col("epsilon")].parse().unwrap();
            assert!(ratio <= eps + 1e-9);
        }
    }
    let agg = fs::read_to_string(out_a.join("bench_aggregate.csv")).unwrap();
    assert!(agg.starts_with("heuristic,epsilon,dynamic,instances,solved,median_nodes,mean_nodes\n"));
    assert!(agg.lines().any(|l| l.starts_with("dp,1,true,")) || agg.lines().any(|l| l.starts_with("dp,1,false,")));

    let timed = tmp.path().join("rt");
    ok(&["bench", "--scenarios", p(&dir), "--timing", "--out", p(&timed)]);
    let text = fs::read_to_string(timed.join("bench.csv")).unwrap();
    assert!(text.lines().next().unwrap().ends_with(",wall_time"));
    assert_eq!(text.lines().count(), 1 + 15 * 2);
}

#[test]
fn drive_on_empty_world() {
    let tmp = TempDir::new().unwrap();
    let s = write_scenario(tmp.path(), &Scenario::empty("e", LatticeParams::sized(6, 10, 1, 2)));
    let v: Value = serde_json::from_str(&ok(&[
        "drive",
        "--scenario",
        p(&s),
        "--commit-steps",
        "2",
        "--route-multiple",
        "2",
    ]))
    .unwrap();
    assert_eq!(v["outcome"], "route_end");
    assert!(v["first_collision"].is_null());
    assert!((v["total_cost"].as_f64().unwrap() - 10.5).abs() < 1e-9);
}
