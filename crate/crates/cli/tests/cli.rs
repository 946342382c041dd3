use std::path::PathBuf;
use std::process::{Command, Output};

fn desk(file: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/desk")
        .join(file)
        .to_string_lossy()
        .into_owned()
}

fn ethica(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ethica"))
        .args(args)
        .env_remove("ETHICA_LOG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_args(context: &str) -> Vec<String> {
    vec![
        "--cdt".into(),
        desk("cdt.tree"),
        "--data".into(),
        desk(""),
        "--manifest".into(),
        desk("manifest.txt"),
        "--views".into(),
        desk("views.reg"),
        "--context".into(),
        context.into(),
    ]
}

fn transform(context: &str, log: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec!["transform".to_string()];
    args.extend(data_args(context));
    for (flag, value) in [
        ("--ert", desk("ert.tree")),
        ("--rules", desk("rules.txt")),
        ("--params", desk("params.toml")),
        ("--log", log.into()),
        ("--out", out.into()),
    ] {
        args.push(flag.into());
        args.push(value);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    ethica(&argv)
}

#[test]
fn validate_accepts_the_desk_inputs() {
    let o = ethica(&[
        "validate",
        "--cdt",
        &desk("cdt.tree"),
        "--ert",
        &desk("ert.tree"),
        "--views",
        &desk("views.reg"),
        "--rules",
        &desk("rules.txt"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn validate_rejects_an_attribute_with_children() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tree");
    std::fs::write(&bad, "root r\n  dim d\n    attr a\n      val x\n").unwrap();
    let o = ethica(&["validate", "--cdt", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = ethica(&["validate", "--cdt", "/definitely/not/here.tree"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(ethica(&["transform"]).status.code(), Some(1));
    assert_eq!(ethica(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn resolve_reports_the_matched_view() {
    let mut args = vec!["resolve".to_string()];
    args.extend(data_args("action=promotion; role=clerk"));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ethica(&argv);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(json["view"], "promotion");
    assert_eq!(json["tables"][0]["label"], "E1");
    assert_eq!(json["tables"][0]["rows"], 40);
    assert_eq!(json["tables"][1]["rows"], 12);
}

#[test]
fn analyze_flags_the_manager_disparity() {
    let mut args = vec!["analyze".to_string()];
    args.extend(data_args("action=promotion; role=clerk"));
    args.extend(["--affected".into(), "gender".into()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ethica(&argv);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let e2 = &json["tables"][1]["disparities"][0];
    assert_eq!(e2["ratio"], 0.2);
    assert_eq!(e2["flagged"], true);
}

#[test]
fn analyze_rejects_an_unknown_attribute() {
    let mut args = vec!["analyze".to_string()];
    args.extend(data_args("action=promotion; role=clerk"));
    args.extend(["--affected".into(), "shoesize".into()]);
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ethica(&argv);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("shoesize"));
}

#[test]
fn context_without_a_view_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let views = dir.path().join("views.reg");
    std::fs::write(&views, "view only\nwhen action=dismissal\ndef E1 = EMPLOYEE\n").unwrap();
    let mut args = vec!["resolve".to_string()];
    args.extend(data_args("action=promotion"));
    args[8] = views.to_string_lossy().into_owned();
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ethica(&argv);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no view binding"), "{}", stderr(&o));
}

#[test]
fn sibling_bindings_are_rejected() {
    let mut args = vec!["resolve".to_string()];
    args.extend(data_args("action=promotion; action=dismissal"));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = ethica(&argv);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn transform_then_explain() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let out = dir.path().join("ev.csv");
    let o = transform(
        "action=promotion; role=clerk",
        log.to_str().unwrap(),
        out.to_str().unwrap(),
        &["--facet", "fairness/equity", "--affected", "gender"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let id = stdout(&o).trim().to_string();
    assert!(id.ends_with("-000001"), "{id}");
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 25);

    let e = ethica(&["explain", "--log", log.to_str().unwrap(), "--id", &id]);
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let text = stdout(&e);
    assert!(text.contains("ratio 0.2 "), "{text}");
    assert!(text.contains("p=2"), "{text}");
    assert!(text.contains("Output: EV has 24 rows."), "{text}");

    let by_seq = ethica(&["explain", "--log", log.to_str().unwrap(), "--id", "1"]);
    assert_eq!(stdout(&by_seq), text);
}

#[test]
fn transform_writes_csv_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let o = transform(
        "action=recruitment; role=manager",
        log.to_str().unwrap(),
        "-",
        &["--facet", "privacy", "--affected", "race"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 13);
    assert!(!csv.lines().next().unwrap().contains("Race"));
    assert!(stderr(&o).trim().ends_with("-000001"));
}

#[test]
fn failed_transform_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let out = dir.path().join("ev.csv");
    let o = transform(
        "action=promotion; role=clerk",
        log.to_str().unwrap(),
        out.to_str().unwrap(),
        &[
            "--facet",
            "fairness/equity",
            "--affected",
            "gender",
            "--pmin",
            "4.9",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("recorded failure as"), "{}", stderr(&o));
    assert!(!out.exists());
    let e = ethica(&["explain", "--log", log.to_str().unwrap(), "--id", "1"]);
    assert!(stdout(&e).contains("The run failed"), "{}", stdout(&e));
}

#[test]
fn explain_unknown_id_fails() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let o = ethica(&["explain", "--log", log.to_str().unwrap(), "--id", "abc"]);
    assert_eq!(o.status.code(), Some(1));
}
