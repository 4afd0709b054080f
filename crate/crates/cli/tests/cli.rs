use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures(set: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(set)
}

fn tabroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabroute"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn classify_marks_table_tokens() {
    let table = fixtures("demo").join("table.csv");
    let out = ok(tabroute(&["classify", "--table", p(&table), "--step", "So Oslo has 709,000 people"]));
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "So Oslo has 709,000 people");
    assert_eq!(lines[1], "   ^^^^^    ^^^^^^^^");
    assert!(lines[2].contains("tab tokens: 2"));
}

#[test]
fn run_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let demo = fixtures("demo");
    let out = ok(tabroute(&[
        "--config",
        p(&demo.join("config.json")),
        "--output-dir",
        p(dir.path()),
        "run",
        "--dataset",
        p(&demo.join("dataset.jsonl")),
    ]));
    assert!(out.contains("accuracy 4/4"));
    let traces = std::fs::read_to_string(dir.path().join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 4);
}

fn sweep_into(set: &str, dir: &Path) -> String {
    let f = fixtures(set);
    ok(tabroute(&[
        "--config",
        p(&f.join("config.json")),
        "--output-dir",
        p(dir),
        "--workers",
        "2",
        "sweep",
        "--dataset",
        p(&f.join("dataset.jsonl")),
    ]))
}

#[test]
fn zero_risk_sweep_rows_are_equal() {
    let dir = tempfile::tempdir().unwrap();
    sweep_into("flat", dir.path());
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 21);
    let tails: Vec<&str> = rows.iter().map(|r| r.split_once(',').unwrap().1).collect();
    assert!(tails.iter().all(|t| *t == tails[0]), "{csv}");
}

#[test]
fn sweep_is_reproducible_and_reportable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let printed = sweep_into("demo", a.path());
    sweep_into("demo", b.path());
    for name in ["sweep.json", "curve.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    assert_eq!(printed, std::fs::read_to_string(a.path().join("curve.csv")).unwrap());

    let report = ok(tabroute(&[
        "--output-dir",
        p(b.path()),
        "report",
        "--input",
        p(&a.path().join("sweep.json")),
    ]));
    assert!(report.contains("acc at 60% of LRM FLOPs"));
    assert!(report.contains("tau,acc,flops,lrm_frac"));
    assert!(b.path().join("report.json").exists());
}

#[test]
fn bench_on_hundred_step_trace() {
    let dir = tempfile::tempdir().unwrap();
    let demo = fixtures("demo");
    // sequential script: 99 boundary steps then an answer, all for query q1
    let mut script = String::new();
    for i in 0..100 {
        let (text, finish) = if i == 99 {
            ("Final Answer is \\boxed{Oslo}".to_string(), "answer")
        } else {
            (format!("Oslo has 709,000 people step {i}.\n\n"), "step_boundary")
        };
        let n = text.split_whitespace().count();
        let line = serde_json::json!({
            "step_text": text,
            "probs": vec![vec![0.7, 0.2, 0.1]; n],
            "finish": finish,
        });
        script.push_str(&line.to_string());
        script.push('\n');
    }
    std::fs::write(dir.path().join("long.jsonl"), script).unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(demo.join("config.json")).unwrap()).unwrap();
    cfg["srm"]["script"] = "long.jsonl".into();
    cfg["lrm"]["script"] = "long.jsonl".into();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let dataset = demo.join("dataset.jsonl");

    ok(tabroute(&[
        "--config",
        p(&cfg_path),
        "--output-dir",
        p(dir.path()),
        "run",
        "--dataset",
        p(&dataset),
        "--query",
        "q1",
        "--only",
        "srm",
    ]));
    let out = ok(tabroute(&[
        "--config",
        p(&cfg_path),
        "bench-routing",
        "--trace",
        p(&dir.path().join("traces.jsonl")),
        "--dataset",
        p(&dataset),
    ]));
    assert!(out.contains("steps: 100"), "{out}");
    let mean = out
        .lines()
        .find_map(|l| l.strip_prefix("mean per-step routing: "))
        .and_then(|v| v.trim_end_matches(" us").parse::<f64>().ok())
        .unwrap();
    assert!(mean > 0.0);
}

#[test]
fn calibrate_from_traces_is_reproducible() {
    let demo = fixtures("demo");
    let cfg = demo.join("config.json");
    let data = demo.join("dataset.jsonl");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (only, name) in [("lrm", "lrm.jsonl"), ("srm", "srm.jsonl")] {
        ok(tabroute(&["--config", p(&cfg), "--output-dir", p(d), "run", "--dataset", p(&data), "--only", only]));
        std::fs::rename(d.join("traces.jsonl"), d.join(name)).unwrap();
    }
    let calibrate = |out: &Path| {
        ok(tabroute(&[
            "--config",
            p(&cfg),
            "--output-dir",
            p(out),
            "calibrate",
            "--traces",
            p(&d.join("lrm.jsonl")),
            "--srm-traces",
            p(&d.join("srm.jsonl")),
            "--dataset",
            p(&data),
        ]))
    };
    let (a, b) = (d.join("a"), d.join("b"));
    let printed = calibrate(&a);
    calibrate(&b);
    assert!(printed.contains("labeled 2 traces"), "{printed}");
    for name in ["samples.jsonl", "boundaries.jsonl", "mapping_tab.json", "mapping_text.json", "mappings.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    // the fitted pair drops straight into a run config
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("mappings.json")).unwrap()).unwrap();
    assert_eq!(m["text"]["signal"], "text");

    let refit = ok(tabroute(&["--output-dir", p(&d.join("c")), "calibrate", "--samples", p(&a.join("samples.jsonl"))]));
    assert!(refit.contains("text: a ="));
    assert_eq!(
        std::fs::read(a.join("mappings.json")).unwrap(),
        std::fs::read(d.join("c/mappings.json")).unwrap()
    );
}

#[test]
fn exit_codes() {
    let demo = fixtures("demo");
    assert_eq!(tabroute(&["run"]).status.code(), Some(2));
    assert_eq!(tabroute(&["frobnicate"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{not json\n").unwrap();
    let cfg = demo.join("config.json");
    let o = tabroute(&["--config", p(&cfg), "run", "--dataset", p(&bad)]);
    assert_eq!(o.status.code(), Some(2));

    // a query the scripts know nothing about fails at run time
    let unknown = dir.path().join("unknown.jsonl");
    std::fs::write(
        &unknown,
        r#"{"id":"zz","table":{"headers":["a"],"rows":[["1"]]},"question":"?","answer":"1"}"#,
    )
    .unwrap();
    let o = tabroute(&["--config", p(&cfg), "--output-dir", p(dir.path()), "run", "--dataset", p(&unknown)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("traces.jsonl").exists());
}
