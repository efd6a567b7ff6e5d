use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use mimicry::plot::{forest_svg, ForestRow};
use mimicry::schema::validate_results;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mimicry"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let out = bin().args(args).current_dir(dir).output().unwrap();
    assert!(
        out.status.code().is_some(),
        "killed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run_in(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// One simulated data set shared by all tests.
fn data() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        std::fs::write(
            dir.join("sim.toml"),
            "seed = 4\n[simulation]\nn_persons = 500\nn_days = 100\n[simulation.delta]\ndessert = 0.2\nsoup = 0.1\n",
        )
        .unwrap();
        ok(&dir, &["simulate", "--config", "sim.toml", "--out", "."]);
        dir
    })
}

fn inputs() -> Vec<String> {
    let d = data();
    vec![
        "--transactions".into(),
        d.join("transactions.csv").display().to_string(),
        "--catalog".into(),
        d.join("catalog.csv").display().to_string(),
        "--demographics".into(),
        d.join("demographics.csv").display().to_string(),
    ]
}

fn args<'a>(base: &'a [&'a str], extra: &'a [String]) -> Vec<&'a str> {
    base.iter().copied().chain(extra.iter().map(String::as_str)).collect()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// A finished `run` with 300 bootstrap replicates.
fn full_run() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        std::fs::write(dir.join("run.toml"), "seed = 21\n[estimation]\nreplicates = 300\n").unwrap();
        let extra = inputs();
        ok(&dir, &args(&["run", "--config", "run.toml", "--out", "out"], &extra));
        dir
    })
}

#[test]
fn results_validate_against_schema() {
    let doc: Value = serde_json::from_str(&read(full_run().join("out/results.json"))).unwrap();
    validate_results(&doc).unwrap();
    assert_eq!(doc["seed"], 21);
    let dessert = doc["items"].as_array().unwrap().iter().find(|i| i["item"] == "dessert").unwrap();
    assert_eq!(dessert["status"], "ok");
    assert!(dessert["estimate"]["rd"].as_f64().unwrap() > 0.1);

    let mut broken = doc.clone();
    broken["format_version"] = Value::from("one");
    assert!(validate_results(&broken).is_err());
    broken = doc;
    broken.as_object_mut().unwrap().insert("extra".into(), Value::Null);
    assert!(validate_results(&broken).is_err());
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(full_run().join("run.toml"), dir.path().join("run.toml")).unwrap();
    let extra = inputs();
    ok(dir.path(), &args(&["run", "--config", "run.toml", "--out", "out", "--threads", "3"], &extra));
    for name in ["results.json", "estimates.csv", "baseline.csv", "subgroups.csv", "forest.svg", "sensitivity.svg"] {
        assert_eq!(read(dir.path().join("out").join(name)), read(full_run().join("out").join(name)), "{name}");
    }
}

#[test]
fn stages_reproduce_run_from_dumps() {
    let run = full_run().join("out");
    let dir = tempfile::tempdir().unwrap();
    let extra = inputs();
    let cfg = full_run().join("run.toml").display().to_string();
    let dyads = run.join("dyads.csv").display().to_string();
    let pairs = run.join("matched_pairs.csv").display().to_string();
    let stage = |cmd: &str, flag: &str, file: &str| {
        let base = [cmd, "--config", cfg.as_str(), "--out", ".", flag, file];
        ok(dir.path(), &args(&base, &extra));
    };
    stage("match", "--dyads", &dyads);
    stage("estimate", "--pairs", &pairs);
    stage("baseline", "--dyads", &dyads);
    stage("sensitivity", "--pairs", &pairs);
    stage("dose", "--pairs", &pairs);
    for name in [
        "matched_pairs.csv",
        "matching.csv",
        "balance.csv",
        "estimates.csv",
        "baseline.csv",
        "sensitivity.csv",
        "boundary.csv",
        "dose.csv",
    ] {
        assert_eq!(read(dir.path().join(name)), read(run.join(name)), "{name}");
    }
    ok(dir.path(), &["plot", "--out", ".", "--results", run.join("results.json").to_str().unwrap()]);
    assert_eq!(read(dir.path().join("forest.svg")), read(run.join("forest.svg")));
}

#[test]
fn unmatchable_items_are_reported_not_fatal() {
    // every partner buys dessert, so there are no control dyads
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(
        p.join("sim.toml"),
        "seed = 6\n[simulation]\nn_persons = 300\nn_days = 40\n[simulation.base_rates]\ndessert = [1.0, 1.0, 1.0]\n",
    )
    .unwrap();
    ok(p, &["simulate", "--config", "sim.toml", "--out", "d"]);
    let out = ok(
        p,
        &["run", "--seed", "3", "--out", "out", "--transactions", "d/transactions.csv", "--catalog", "d/catalog.csv"],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothing to draw"));
    let doc: Value = serde_json::from_str(&read(p.join("out/results.json"))).unwrap();
    let dessert = doc["items"].as_array().unwrap().iter().find(|i| i["item"] == "dessert").unwrap();
    assert_eq!(dessert["status"], "no_pairs");
    assert!(dessert["estimate"].is_null());
    assert_eq!(dessert["n_control"], 0);
    assert_eq!(doc["dose_response"]["status"], "skipped");
    assert!(doc["notices"].as_array().unwrap().iter().any(|n| n == "dessert: no matched pairs"));
    assert!(!p.join("out/forest.svg").exists());
}

#[test]
fn require_balance_passes_on_balanced_data() {
    let dir = tempfile::tempdir().unwrap();
    let extra = inputs();
    let run = full_run().join("run.toml").display().to_string();
    let out = run_in(dir.path(), &args(&["match", "--config", &run, "--out", ".", "--require-balance"], &extra));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn errors_name_their_module() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["estimate", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config: input.catalog is not set"));

    let out = run_in(dir.path(), &["estimate", "--transactions", "nope.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no seed"));

    let out = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_rejects_bad_rows_and_keeps_the_rest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::copy(data().join("catalog.csv"), p.join("catalog.csv")).unwrap();
    std::fs::write(
        p.join("tx.csv"),
        "tx_id,person_id,timestamp,shop_id,register_id,items\n\
         t1,a,2020-01-06T12:00:00,s1,r1,meal;dessert\n\
         t2,b,not-a-time,s1,r1,meal\n\
         t3,c,2020-01-06T12:01:00,s1,r1,meal;mystery\n",
    )
    .unwrap();
    let out = ok(p, &["ingest", "--seed", "1", "--out", "o", "--transactions", "tx.csv", "--catalog", "catalog.csv"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("model: rejected record"), "{err}");
    let ingest: Value = serde_json::from_str(&read(p.join("o/ingest.json"))).unwrap();
    assert_eq!(ingest["n_transactions"], 2, "{ingest}");
    assert_eq!(ingest["n_rejected"], 1);
    assert_eq!(ingest["unknown_item_occurrences"], 1);
    let canon = read(p.join("o/transactions.csv"));
    assert_eq!(canon.lines().count(), 3);
}

#[test]
fn forest_plot_matches_golden() {
    let rows = vec![
        ForestRow {
            label: "dessert".into(),
            rd: 0.142,
            rd_ci: [0.131, 0.153],
            rr: Some(1.83),
            rr_ci: Some([1.76, 1.91]),
            baseline: Some((0.011, [-0.004, 0.026])),
        },
        ForestRow {
            label: "soup".into(),
            rd: 0.052,
            rd_ci: [0.021, 0.083],
            rr: Some(1.31),
            rr_ci: Some([1.12, 1.52]),
            baseline: None,
        },
        ForestRow { label: "salad".into(), rd: -0.01, rd_ci: [-0.04, 0.02], rr: None, rr_ci: None, baseline: None },
    ];
    let svg = forest_svg(&rows).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/forest.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &svg).unwrap();
    }
    assert_eq!(svg, read(&golden));
}
