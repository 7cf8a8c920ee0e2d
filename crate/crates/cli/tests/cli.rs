use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn fairdiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdiv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &PathBuf) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let ok = fairdiv(&["validate", path(&data("hz3.json"))]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("permutation_invariant=true"));

    let bad = fairdiv(&["validate", path(&data("pazner_schmeidler.json"))]);
    assert_eq!(bad.status.code(), Some(1));
    let out = stdout(&bad);
    assert!(out.contains("permutation_invariant=false"));
    assert!(out.contains("witness=("));
}

#[test]
fn solve_refuses_non_invariant_space() {
    let o = fairdiv(&[
        "solve",
        path(&data("pazner_schmeidler.json")),
        path(&data("pazner_schmeidler_prefs.json")),
        "--eps",
        "1e-3",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(String::from_utf8_lossy(&o.stderr).contains("refusing to solve"));
}

#[test]
fn certificates_are_reproducible_and_check_out() {
    let dir = tempfile::tempdir().unwrap();
    let (inst, prefs) = (data("hz3.json"), data("hz3_prefs.json"));
    let certs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("cert{i}.json"))).collect();
    for c in &certs {
        let o = fairdiv(&["solve", path(&inst), path(&prefs), "--eps", "1e-3", "-o", path(c)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes: Vec<Vec<u8>> = certs.iter().map(|c| std::fs::read(c).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);

    let o = fairdiv(&["oracle-check", path(&inst), path(&prefs), path(&certs[0])]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("verdict=pass"));

    // move all the weight to one allocation: some agent now envies another
    let mut cert: serde_json::Value = serde_json::from_slice(&bytes[0]).unwrap();
    let support = cert["lottery"]["support"].as_array_mut().unwrap();
    support.truncate(1);
    support[0]["weight"] = 1.0.into();
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_string(&cert).unwrap()).unwrap();
    let o = fairdiv(&["oracle-check", path(&inst), path(&prefs), path(&tampered)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("envies"));
}

#[test]
fn solve_writes_trace_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, plot) = (dir.path().join("t.csv"), dir.path().join("s.svg"));
    let o = fairdiv(&[
        "solve",
        path(&data("hz3.json")),
        path(&data("hz3_prefs.json")),
        "--eps",
        "1e-3",
        "--trace",
        path(&trace),
        "--plot",
        path(&plot),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("round,mesh,n_vertices,n_completely_labeled,candidate_lambda,max_envy"));
    assert!(csv.lines().count() >= 2);
    assert!(std::fs::read_to_string(&plot).unwrap().starts_with("<svg"));
}

#[test]
fn envy_csv() {
    let o = fairdiv(&[
        "envy",
        path(&data("hz3.json")),
        path(&data("hz3_prefs.json")),
        path(&data("lottery.json")),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows[0], "agent,0,1,2");
    assert_eq!(rows.len(), 4);
    // agent 2 gets C or A, worth 0.35 to them, while agent 1 always gets B, worth 0.9
    let e: f64 = rows[3].split(',').nth(2).unwrap().parse().unwrap();
    assert!((e - 0.55).abs() < 1e-12);
}

#[test]
fn maximize_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("q.csv");
    let o = fairdiv(&[
        "maximize",
        path(&data("hz3.json")),
        path(&data("hz3_prefs.json")),
        "--lambda",
        "1/3,1/3,1/3",
        "--delta",
        "0.01",
        "--trace",
        path(&trace),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["duality_gap"].as_f64().unwrap() <= 1e-10);
    assert_eq!(v["marginals"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("iter,gap,q_value\n"));
}

#[test]
fn decompose_methods() {
    let cake = data("cake.json");
    let rows = |method: &str| {
        let o = fairdiv(&["decompose", path(&cake), "--method", method]);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o)
    };
    let two = rows("two-agent");
    assert_eq!(two, "weight,assignment\n1/5,\"1,1,1\"\n3/10,\"2,1,1\"\n1/2,\"2,2,1\"\n");
    assert_eq!(rows("greedy").lines().count(), 4);
    assert_eq!(rows("farkas").lines().next(), Some("weight,assignment"));

    let o = fairdiv(&["decompose", path(&data("cake3.json")), "--method", "two-agent"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cake_solve_emits_partitions() {
    let o = fairdiv(&["cake-solve", path(&data("cake.json")), "--eps", "1e-3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.starts_with("weight,assignment\n"));
    assert!(out.lines().count() >= 2);
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("x.json");
    std::fs::write(&f, r#"{"kind":"nonsense","params":{}}"#).unwrap();
    let o = fairdiv(&["validate", path(&f)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown instance kind"));
}
