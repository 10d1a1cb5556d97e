use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sdsearch"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

const SMALL: &str = r#"
seed = 5
[panel]
consumers = 40
[estimation]
model = "ds1"
n_draws = 10
max_iter = 40
restarts = 0
[counterfactual]
model = "rs"
paths = 20
[tables]
models = ["sd", "ds1", "fi"]
paths = 10
"#;

#[test]
fn reservation_reports_xi_for_exponential_residuals() {
    let cfg = config("reservation.toml");
    let v = json(&run(&["reservation", "--config", cfg.to_str().unwrap()]));
    let xi = v["result"]["xi"].as_f64().unwrap();
    assert!((xi - 2.302585).abs() < 1e-6, "{xi}");
    assert_eq!(v["provenance"]["command"], "reservation");
    assert_eq!(v["provenance"]["seed"], 1);
}

#[test]
fn bundled_corpus_has_no_violations() {
    let out = run(&["oracle-check"]);
    let v = json(&out);
    assert_eq!(v["result"]["failures"].as_array().unwrap().len(), 0);
    assert!(v["result"]["instances"].as_u64().unwrap() >= 200);
}

#[test]
fn corrupted_corpus_exits_with_corpus_code() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/oracle_corpus.json");
    let mut entries: Value = serde_json::from_str(&std::fs::read_to_string(fixture).unwrap()).unwrap();
    let first = &mut entries[0]["dp_value"];
    *first = Value::from(first.as_f64().unwrap() + 0.5);
    let corpus = dir.path().join("corpus.json");
    std::fs::write(&corpus, serde_json::to_string(&entries).unwrap()).unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, format!(r#"{{"oracle": {{"corpus": {:?}}}}}"#, corpus.to_str().unwrap())).unwrap();
    let out = run(&["oracle-check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_config_is_rejected_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "environment": {"c_s": 0.1, "c_d": 0.1, "num_products": 3, "colour": 1}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["reservation", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(!out_dir.exists());

    let toml = dir.path().join("bad.toml");
    std::fs::write(&toml, "seed = 1\n[x]\nfamily = \"normal\"\nmean = 0.0\nvar = -1.0\n").unwrap();
    let out = run(&["reservation", "--config", toml.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());

    std::fs::write(&toml, "command = \"simulate\"\n").unwrap();
    assert_eq!(run(&["reservation", "--config", toml.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn solver_failure_has_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(
        &cfg,
        "[environment]\nc_s = 0.1\nc_d = 0.1\nnum_products = 3\n[x]\nfamily = \"point_mass\"\nvalue = 0.0\n\
         [y]\nfamily = \"point_mass\"\nvalue = 0.0\n[demand]\nmodes = [\"rs\"]\n",
    )
    .unwrap();
    let out = run(&["demand", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

fn outputs(cmd: &str, cfg: &Path, threads: &str, dir: &Path) -> Vec<(String, Vec<u8>)> {
    for format in ["json", "csv"] {
        let out = run(&[
            cmd,
            "--config",
            cfg.to_str().unwrap(),
            "--threads",
            threads,
            "--format",
            format,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn output_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.toml");
    std::fs::write(&small, SMALL).unwrap();
    let cases = [
        ("reservation", config("reservation.toml")),
        ("simulate", config("simulate.toml")),
        ("payoff", config("simulate.toml")),
        ("demand", config("demand.toml")),
        ("bounds", config("bounds.toml")),
        ("estimate", small.clone()),
        ("counterfactual", small.clone()),
        ("replicate-tables", small.clone()),
    ];
    for (cmd, cfg) in cases {
        let a = outputs(cmd, &cfg, "1", &dir.path().join(format!("{cmd}-a")));
        let b = outputs(cmd, &cfg, "3", &dir.path().join(format!("{cmd}-b")));
        let c = outputs(cmd, &cfg, "1", &dir.path().join(format!("{cmd}-c")));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{cmd}: thread count changed the output");
        assert_eq!(a, c, "{cmd}: rerun changed the output");
    }
}

#[test]
fn provenance_config_reproduces_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.toml");
    std::fs::write(&small, SMALL).unwrap();
    let first = json(&run(&["estimate", "--config", small.to_str().unwrap(), "--seed", "11"]));
    let embedded = dir.path().join("embedded.json");
    std::fs::write(&embedded, first["provenance"]["config"].to_string()).unwrap();
    let second = json(&run(&["estimate", "--config", embedded.to_str().unwrap()]));
    assert_eq!(first["provenance"]["seed"], 11);
    assert_eq!(first["result"], second["result"]);
}

#[test]
fn seed_changes_simulated_output() {
    let cfg = config("simulate.toml");
    let a = json(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "1"]));
    let b = json(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "2"]));
    assert_ne!(a["result"], b["result"]);
}
