use std::path::Path;
use std::process::{Command, Output};

fn setrlusi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setrlusi"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gen_task(dir: &Path, name: &str, target: &str) {
    let out = setrlusi(&[
        "gen",
        dir.to_str().unwrap(),
        "--n-per-domain",
        "60",
        "--seed",
        "5",
        "--target",
        target,
        "--sources",
        "0,4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.join("config.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("H = 100"));
    let text = text
        .replace("H = 100", "H = 6")
        .replace("name = \"synthetic12\"", &format!("name = \"{name}\""))
        .replace("split_fraction = 0.1", "split_fraction = 0.3");
    std::fs::write(&path, text).unwrap();
}

#[test]
fn gen_run_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mut result_files = Vec::new();
    for (name, target) in [("first", "11"), ("second", "6")] {
        let task = dir.path().join(name);
        gen_task(&task, name, target);
        assert!(task.join("domain12.csv").exists());
        let out_dir = task.join("out");
        let out = setrlusi(&[
            "run",
            task.join("config.toml").to_str().unwrap(),
            "--trials",
            "2",
            "--output",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(stdout.contains("setrlusi_no_si"));

        let results = out_dir.join("results.jsonl");
        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&results)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        // 3 methods x (2 trials + aggregate)
        assert_eq!(lines.len(), 9);
        let keys: Vec<&str> = lines[0].as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = vec![
            "task",
            "method",
            "trial",
            "seed",
            "accuracy",
            "wall_time_seconds",
            "h_index",
            "test_error",
        ];
        let mut got = keys.clone();
        got.sort_unstable();
        expected.sort_unstable();
        assert_eq!(got, expected);
        let conv = std::fs::read_to_string(out_dir.join(format!("convergence_{name}_setrlusi.csv"))).unwrap();
        assert_eq!(conv.lines().count(), 7);
        assert_eq!(conv.lines().next().unwrap(), "h,mean_test_error,std_test_error");
        assert!(out_dir.join("timing.json").exists());
        result_files.push(results);
    }

    let out = setrlusi(&[
        "stats",
        result_files[0].to_str().unwrap(),
        result_files[1].to_str().unwrap(),
        "--json",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    match out.status.code() {
        Some(0) => {
            let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
            assert_eq!(report["methods"].as_array().unwrap().len(), 3);
            assert!(report["critical_difference"].as_f64().unwrap() > 0.0);
        }
        // two tasks ranking the methods identically make F_F undefined
        Some(3) => assert!(String::from_utf8_lossy(&out.stderr).contains("denominator")),
        other => panic!("unexpected exit {other:?}: {}", String::from_utf8_lossy(&out.stderr)),
    }
}

#[test]
fn csv_output_format() {
    let dir = tempfile::tempdir().unwrap();
    gen_task(dir.path(), "csvtask", "11");
    let out_dir = dir.path().join("out");
    let out = setrlusi(&[
        "run",
        dir.path().join("config.toml").to_str().unwrap(),
        "--trials",
        "1",
        "--format",
        "csv",
        "--inline-timing",
        "--sequential",
        "--output",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "task,method,trial,seed,accuracy,wall_time_seconds,h_index,test_error"
    );
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    assert!(!out_dir.join("timing.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(setrlusi(&["run", missing.to_str().unwrap()]).status.code(), Some(4));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[task]\nsplit_fraction = 2.0\n[task.synthetic_spec]\n").unwrap();
    assert_eq!(setrlusi(&["run", bad.to_str().unwrap()]).status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[task]\n[task.synthetic_spec]\n[model]\nsigma = 1\n").unwrap();
    let out = setrlusi(&["run", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sigma"));

    // both tasks rank the methods in the same order
    let results = dir.path().join("agree.jsonl");
    let row = |task: &str, method: &str, acc: f64| {
        format!(
            "{{\"task\":\"{task}\",\"method\":\"{method}\",\"trial\":null,\"seed\":0,\"accuracy\":{acc},\"wall_time_seconds\":null,\"h_index\":[],\"test_error\":[]}}\n"
        )
    };
    let text: String = ["a", "b"]
        .iter()
        .flat_map(|t| [row(t, "m1", 0.9), row(t, "m2", 0.8)])
        .collect();
    std::fs::write(&results, text).unwrap();
    assert_eq!(setrlusi(&["stats", results.to_str().unwrap()]).status.code(), Some(3));

    assert_eq!(setrlusi(&["run"]).status.code(), Some(2));
}

#[test]
fn bench_reports_slope() {
    let out = setrlusi(&["bench", "--q", "20,40", "--rounds", "2", "--repeats", "1", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
    assert!(report["slope"].as_f64().unwrap().is_finite());
}
