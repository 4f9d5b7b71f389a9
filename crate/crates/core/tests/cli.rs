use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bottomk(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bottomk"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_keys(path: &Path, keys: impl Iterator<Item = u64>) {
    let text: String = keys.map(|k| format!("{k}\n")).collect();
    fs::write(path, text).unwrap();
}

#[test]
fn sketch_merge_estimate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_keys(&d.join("a.txt"), 0..3000);
    write_keys(&d.join("b.txt"), 2000..6000);
    write_keys(&d.join("u.txt"), 0..6000);
    for name in ["a", "b", "u"] {
        ok(&bottomk(
            &[
                "sketch",
                "--input",
                &format!("{name}.txt"),
                "--k",
                "128",
                "--n",
                "100000",
                "--seed",
                "5",
                "-o",
                &format!("{name}.sketch"),
            ],
            d,
        ));
    }
    ok(&bottomk(
        &["merge", "a.sketch", "b.sketch", "-o", "m.sketch"],
        d,
    ));
    assert_eq!(
        fs::read(d.join("m.sketch")).unwrap(),
        fs::read(d.join("u.sketch")).unwrap()
    );

    let est: serde_json::Value =
        serde_json::from_str(&ok(&bottomk(&["estimate", "--sketch", "m.sketch"], d))).unwrap();
    let v = est["estimate"].as_f64().unwrap();
    assert!((v - 6000.0).abs() < 1500.0, "{v}");
    assert!(est["deactivated"].is_null());

    fs::write(
        d.join("cfg.json"),
        r#"{"k":128,"r":3,"n":100000,"alpha":0.3,"beta":0.1,"variant":"tracking","seed":5}"#,
    )
    .unwrap();
    let first = ok(&bottomk(
        &[
            "estimate",
            "--sketch",
            "m.sketch",
            "--config",
            "cfg.json",
            "--ledger-out",
            "l1.json",
        ],
        d,
    ));
    let est: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(est["deactivated"].as_u64(), Some(0));
    for (i, (from, to)) in [
        ("l1.json", "l2.json"),
        ("l2.json", "l3.json"),
        ("l3.json", "l4.json"),
    ]
    .iter()
    .enumerate()
    {
        let out = ok(&bottomk(
            &[
                "estimate",
                "--sketch",
                "m.sketch",
                "--config",
                "cfg.json",
                "--noise-index",
                &(i + 1).to_string(),
                "--ledger-in",
                from,
                "--ledger-out",
                to,
            ],
            d,
        ));
        let est: serde_json::Value = serde_json::from_str(&out).unwrap();
        if i == 2 {
            assert!(est["deactivated"].as_u64().unwrap() > 0, "{out}");
        }
    }
}

#[test]
fn mismatched_merge_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_keys(&d.join("k.txt"), 0..100);
    ok(&bottomk(
        &[
            "sketch", "--input", "k.txt", "--k", "8", "--n", "1000", "--seed", "1", "-o",
            "a.sketch",
        ],
        d,
    ));
    ok(&bottomk(
        &[
            "sketch", "--input", "k.txt", "--k", "8", "--n", "1000", "--seed", "2", "-o",
            "b.sketch",
        ],
        d,
    ));
    let out = bottomk(&["merge", "a.sketch", "b.sketch"], d);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("incompatible sketches"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bottomk(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        bottomk(&["accounting", "--r", "100"], dir.path())
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bad_key_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("k.txt"), "1\n2\nthree\n").unwrap();
    let out = bottomk(
        &["sketch", "--input", "k.txt", "--k", "8", "--n", "10"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn accounting_prints_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&bottomk(
        &[
            "accounting",
            "--r",
            "100",
            "--eps",
            "0.1",
            "--alpha",
            "1",
            "--delta",
            "1e-6",
        ],
        dir.path(),
    ));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let pure = v["pure"]["epsilon"].as_f64().unwrap();
    assert!((pure - 42.103).abs() < 1e-3, "{pure}");
}

#[test]
fn attack_writes_report_and_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&bottomk(
        &[
            "attack",
            "--k",
            "16",
            "--universe",
            "1024",
            "--rounds",
            "20",
            "--seed",
            "4",
            "--report",
            "r.json",
            "--transcript",
            "t.jsonl",
        ],
        d,
    ));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report["queries_used"].as_u64(), Some(41));
    let transcript = fs::read_to_string(d.join("t.jsonl")).unwrap();
    assert_eq!(transcript.lines().count(), 41);
    let first: serde_json::Value =
        serde_json::from_str(transcript.lines().next().unwrap()).unwrap();
    assert_eq!(first["qid"].as_u64(), Some(0));
    assert_eq!(first["size"].as_u64(), Some(512));
}

#[test]
fn experiment_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.json"),
        r#"{"ks":[48,32],"distributions":[{"kind":"uniform"}],"support":20000,"query_size":400,"r_coefficient":0.005,"max_queries":5000,"trials":2}"#,
    )
    .unwrap();
    ok(&bottomk(
        &["experiment", "--config", "c.json", "-o", "out.csv"],
        d,
    ));
    let csv = fs::read_to_string(d.join("out.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "k,distribution,baseline_queries,robust_queries,gain"
    );
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("32,uniform,5,") && lines[3].starts_with("48,uniform,11,"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("out.csv.json")).unwrap()).unwrap();
    assert_eq!(sidecar["rows"].as_array().unwrap().len(), 4);
    assert_eq!(sidecar["config"]["trials"].as_u64(), Some(2));
}
