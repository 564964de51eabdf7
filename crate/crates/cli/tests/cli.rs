use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mednnt::io::{read_dataset, Columns};
use mednnt::parallel;
use mednnt_core::simulate::{coverage_study, generate, mc_oracle, SimulationConfig};
use mednnt_core::stack::solve;
use mednnt_core::{IndexKind, LinkFamily};
use serde_json::Value;

fn mednnt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mednnt"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schema")
        .join(format!("{name}.v1.schema.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(schema_name: &str, doc: &Value) {
    let schema = schema(schema_name);
    jsonschema::draft202012::meta::validate(&schema).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:#?}");
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generated_csv(dir: &Path, extra: &[&str]) -> PathBuf {
    let path = dir.join("data.csv");
    let mut args = vec!["generate", "--out", path_str(&path)];
    args.extend_from_slice(extra);
    let out = mednnt(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

fn index<'a>(doc: &'a Value, name: &str) -> &'a Value {
    doc["indices"]
        .as_array()
        .unwrap()
        .iter()
        .find(|i| i["name"] == name)
        .unwrap()
}

#[test]
fn parse_error_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "I,A,M,L\n1,0,1,0.5\n0,1,1,0.2\n1,1,2,0.4\n").unwrap();
    let out = mednnt(&["estimate", "--input", path_str(&path)]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 3") && err.contains("`M`"), "{err}");
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "I,A,M,L\n1,1,1,0.5\n0,1,0,0.2\n1,1,0,0.4\n").unwrap();
    let out = mednnt(&["estimate", "--input", path_str(&empty)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unexposed group"));

    let missing = mednnt(&[
        "estimate",
        "--input",
        path_str(&dir.path().join("none.csv")),
    ]);
    assert_eq!(missing.status.code(), Some(3));

    // The mediator never varies within the data, so its coefficient is not identified.
    let flat = dir.path().join("flat.csv");
    let rows: String = (0..40)
        .map(|k| format!("{},{},0,{}\n", k % 3 == 0, k % 2, k as f64 / 40.0))
        .collect();
    fs::write(
        &flat,
        format!(
            "I,A,M,L\n{}",
            rows.replace("true", "1").replace("false", "0")
        ),
    )
    .unwrap();
    let out = mednnt(&["estimate", "--input", path_str(&flat)]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    assert_eq!(
        mednnt(&["simulate", "--sigma", "-1"]).status.code(),
        Some(2)
    );
    assert_eq!(
        mednnt(&["estimate", "--input", path_str(&empty), "--level", "1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        mednnt(&["oracle", "--family", "cauchit"]).status.code(),
        Some(2)
    );
    assert_eq!(
        mednnt(&["simulate", "--beta", "1,2"]).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = mednnt(&[
            "simulate",
            "--n",
            "200",
            "--reps",
            "10",
            "--seed",
            "7",
            "--draws",
            "200000",
            "--out",
            path_str(&out_dir),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        (
            fs::read(out_dir.join("coverage.json")).unwrap(),
            fs::read(out_dir.join("replications.csv")).unwrap(),
        )
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let doc: Value = serde_json::from_slice(&a.0).unwrap();
    assert_valid("coverage", &doc);
    let csv = String::from_utf8(a.1).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10 * 9);
}

#[test]
fn written_data_reproduces_the_in_memory_solve() {
    let dir = tempfile::tempdir().unwrap();
    for (family, seed) in [("logit", "11"), ("probit", "12")] {
        let path = generated_csv(
            dir.path(),
            &["--family", family, "--seed", seed, "--n", "800"],
        );
        let config = SimulationConfig {
            family: family.parse().unwrap(),
            seed: seed.parse().unwrap(),
            n: 800,
            ..SimulationConfig::default()
        };
        let memory = generate(&config, 0);
        let disk = read_dataset(&path, &Columns::default()).unwrap();
        assert_eq!(disk, memory);
        let expected = solve(&memory, config.family).unwrap();
        assert_eq!(solve(&disk, config.family).unwrap(), expected);

        let doc = stdout_json(&mednnt(&[
            "estimate",
            "--input",
            path_str(&path),
            "--family",
            family,
        ]));
        for kind in IndexKind::ALL {
            let reported = index(&doc, kind.name())["estimate"].as_f64().unwrap();
            assert_eq!(
                reported.to_bits(),
                expected.theta.index(kind).to_f64().to_bits(),
                "{kind}"
            );
        }
    }
}

#[test]
fn reports_validate_against_shipped_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let path = generated_csv(dir.path(), &["--n", "400", "--seed", "2"]);
    assert_valid(
        "report",
        &stdout_json(&mednnt(&["estimate", "--input", path_str(&path)])),
    );
    assert_valid("example", &stdout_json(&mednnt(&["example", "--json"])));
    assert_valid(
        "oracle",
        &stdout_json(&mednnt(&[
            "oracle", "--draws", "100000", "--family", "probit",
        ])),
    );

    let mut doc = stdout_json(&mednnt(&["estimate", "--input", path_str(&path)]));
    let entry = &mut doc["indices"][0];
    entry["estimate"] = "inf".into();
    entry["infinite"] = true.into();
    entry["lower"] = Value::Null;
    entry["upper"] = Value::Null;
    assert_valid("report", &doc);
    doc["indices"][0]["lower"] = 1.5.into();
    assert!(!jsonschema::is_valid(&schema("report"), &doc));
}

#[test]
fn infinite_indices_serialize_as_marker_with_null_bounds() {
    use mednnt::report::Num;
    let doc = serde_json::json!({
        "estimate": Num(f64::INFINITY),
        "lower": Num(f64::NAN),
    });
    assert_eq!(doc["estimate"], "inf");
    assert!(doc["lower"].is_null());
}

#[test]
fn report_totals_are_direct_plus_indirect() {
    let dir = tempfile::tempdir().unwrap();
    let path = generated_csv(dir.path(), &["--n", "1000", "--seed", "5"]);
    let doc = stdout_json(&mednnt(&["estimate", "--input", path_str(&path)]));
    let effects = doc["effects"].as_array().unwrap();
    let get = |p: &str, s: &str| {
        effects
            .iter()
            .find(|e| e["pathway"] == p && e["scope"] == s)
            .unwrap()["estimate"]
            .as_f64()
            .unwrap()
    };
    for scope in ["unexposed", "exposed", "marginal"] {
        assert_eq!(
            get("total", scope),
            get("direct", scope) + get("indirect", scope)
        );
    }
    assert_eq!(doc["metadata"]["n"], 1000);
    assert_eq!(
        doc["metadata"]["n0"].as_u64().unwrap() + doc["metadata"]["n1"].as_u64().unwrap(),
        1000
    );
}

#[test]
fn example_prints_the_worked_table() {
    let out = mednnt(&["example"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let expected = [
        ("EIN", "2.0000"),
        ("DEIN", "5.0000"),
        ("IEIN", "3.3333"),
        ("NNE", "1.4286"),
        ("DNNE", "3.3333"),
        ("INNE", "2.5000"),
        ("NNT", "1.5625"),
        ("DNNT", "3.7037"),
        ("INNT", "2.7027"),
    ];
    for (name, value) in expected {
        let line = text
            .lines()
            .find(|l| l.split_whitespace().next() == Some(name))
            .unwrap();
        assert_eq!(line.split_whitespace().last(), Some(value), "{line}");
    }
}

#[test]
fn estimate_recovers_population_nnt() {
    let dir = tempfile::tempdir().unwrap();
    let mut contained = 0;
    for seed in 1..=10 {
        let path = generated_csv(dir.path(), &["--n", "1600", "--seed", &seed.to_string()]);
        let doc = stdout_json(&mednnt(&["estimate", "--input", path_str(&path)]));
        let nnt = index(&doc, "NNT");
        let (est, lo, hi) = (
            nnt["estimate"].as_f64().unwrap(),
            nnt["lower"].as_f64().unwrap(),
            nnt["upper"].as_f64().unwrap(),
        );
        assert!((est - 2.07).abs() < 0.4, "seed {seed}: {est}");
        contained += usize::from(lo <= 2.07 && 2.07 <= hi);
    }
    assert!(contained >= 8, "{contained}/10 intervals contain 2.07");
}

#[test]
fn parallel_drivers_match_sequential_core() {
    for family in [LinkFamily::Logit, LinkFamily::Probit] {
        let config = SimulationConfig {
            family,
            n: 300,
            reps: 16,
            seed: 31,
            ..SimulationConfig::default()
        };
        let oracle = parallel::oracle(&config, 250_000).unwrap();
        assert_eq!(oracle, mc_oracle(&config, 250_000).unwrap());
        let truth = oracle.effects.indices;
        assert_eq!(
            parallel::coverage(&config, &truth).unwrap(),
            coverage_study(&config, &truth).unwrap()
        );
    }
}

#[test]
fn config_file_drives_simulation_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"family": "probit", "draws": 50000, "mu": 0.4}"#).unwrap();
    let doc = stdout_json(&mednnt(&[
        "oracle",
        "--config",
        path_str(&cfg),
        "--sigma",
        "0.2",
    ]));
    assert_eq!(doc["config"]["family"], "probit");
    assert_eq!(doc["config"]["mu"], 0.4);
    assert_eq!(doc["config"]["sigma"], 0.2);
    assert_eq!(doc["draws"], 50000);

    fs::write(&cfg, r#"{"draw": 5}"#).unwrap();
    assert_eq!(
        mednnt(&["oracle", "--config", path_str(&cfg)])
            .status
            .code(),
        Some(2)
    );
}
