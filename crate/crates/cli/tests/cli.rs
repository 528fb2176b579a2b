use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fx(rel: &str) -> String {
    fixtures().join(rel).display().to_string()
}

fn myopia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_myopia")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = myopia(args);
    assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    stdout(&o)
}

fn csv_rows(text: &str) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

#[test]
fn ingest_reports_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.mkdx"), dir.path().join("b.mkdx"));
    let args = |out: &Path| {
        vec![
            "ingest".to_string(),
            "--corpus".into(),
            fx("corpus_small"),
            "--out".into(),
            out.display().to_string(),
            "--language".into(),
            "en".into(),
            "--chunk-size".into(),
            "10".into(),
        ]
    };
    let run = |out: &Path| ok(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
    let summary = run(&a);
    assert!(summary.starts_with("2 documents, 4 chunks"), "{summary}");
    assert_eq!(summary.trim(), "2 documents, 4 chunks, 31 tokens");
    run(&b);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn ingest_rejects_missing_front_matter_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    std::fs::write(corpus.join("good.md"), "id: g\ntitle: G\nsource_kind: guideline\nlanguage: en\n\nBody text.\n").unwrap();
    std::fs::write(corpus.join("broken.md"), "title: No id here\n\nBody text.\n").unwrap();
    let out = dir.path().join("x.mkdx");
    let o = myopia(&["ingest", "--corpus", corpus.to_str().unwrap(), "--out", out.to_str().unwrap(), "--language", "en"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.md"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn ingest_rejects_a_language_mismatch_and_bad_chunking() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.mkdx");
    let o = myopia(&["ingest", "--corpus", &fx("corpus/zh"), "--out", out.to_str().unwrap(), "--language", "en"]);
    assert_eq!(o.status.code(), Some(1));
    let o = myopia(&[
        "ingest", "--corpus", &fx("corpus/en"), "--out", out.to_str().unwrap(), "--language", "en", "--chunk-size", "5",
        "--overlap", "5",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("overlap"));
}

#[test]
fn ingest_write_failure_is_a_runtime_error() {
    let o = myopia(&["ingest", "--corpus", &fx("corpus/en"), "--out", "/nonexistent-dir/x/y.mkdx", "--language", "en"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn en_index(dir: &Path) -> String {
    let out = dir.join("en.mkdx");
    ok(&["ingest", "--corpus", &fx("corpus/en"), "--out", out.to_str().unwrap(), "--language", "en"]);
    out.display().to_string()
}

#[test]
fn query_returns_k_rows_in_descending_score_order() {
    let dir = tempfile::tempdir().unwrap();
    let index = en_index(dir.path());
    let out = ok(&["query", "--index", &index, "--k", "2", "--format", "csv", "How do atropine drops slow myopia?"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 2);
    let scores: Vec<f64> = rows.iter().map(|r| r["score"].parse().unwrap()).collect();
    assert!(scores[0] >= scores[1]);
    assert_eq!(rows[0]["rank"], "1");
    assert!(rows[0]["citation"].starts_with('['));
    // Read-only commands are idempotent.
    assert_eq!(out, ok(&["query", "--index", &index, "--k", "2", "--format", "csv", "How do atropine drops slow myopia?"]));
}

#[test]
fn query_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let index = en_index(dir.path());
    let o = myopia(&["query", "--index", "/no/such/index.mkdx", "myopia"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/index.mkdx"));
    assert_eq!(myopia(&["query", "--index", &index, "--k", "0", "myopia"]).status.code(), Some(1));
    let junk = dir.path().join("junk.mkdx");
    std::fs::write(&junk, b"not an index").unwrap();
    assert_eq!(myopia(&["query", "--index", junk.to_str().unwrap(), "myopia"]).status.code(), Some(1));
    // A query embedder other than the one the index was built with is refused.
    assert_eq!(myopia(&["query", "--index", &index, "--language", "zh", "近视"]).status.code(), Some(1));
    // An unreachable embedding endpoint is a runtime failure.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let endpoint = format!("http://127.0.0.1:{port}/v1/embeddings");
    let o = myopia(&[
        "query", "--index", &index, "--embedding-endpoint", &endpoint, "--embedding-model", "m", "--embedding-dim", "64",
        "myopia",
    ]);
    assert_eq!(o.status.code(), Some(1), "fingerprint mismatch is detected before any network call");
}

#[test]
fn classify_grades_images_from_the_sidecar() {
    let out = ok(&[
        "classify",
        "--sidecar",
        &fx("grading_sidecar.csv"),
        "--format",
        "csv",
        &fx("images/fundus_05.png"),
        &fx("images/fundus_02.png"),
    ]);
    let rows = csv_rows(&out);
    assert_eq!(rows[0]["label"], "C4");
    assert_eq!(rows[0]["condition"], "Macular atrophy");
    assert_eq!(rows[1]["label"], "C1");
    let sum: f64 = (0..5).map(|i| rows[0][&format!("p{i}")].parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-3);
}

#[test]
fn classify_errors() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"nope").unwrap();
    let o = myopia(&["classify", "--sidecar", &fx("grading_sidecar.csv"), junk.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(myopia(&["classify", "--sidecar", &fx("grading_sidecar.csv")]).status.code(), Some(1));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = myopia(&["classify", "--endpoint", &format!("http://127.0.0.1:{port}/grade"), &fx("images/fundus_01.png")]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn classify_metrics_reports_every_condition_and_overall() {
    let out = ok(&["classify", "--sidecar", &fx("grading_sidecar.csv"), "--metrics", "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5]["condition"], "Overall");
    assert_eq!(rows[5]["accuracy"], "1.0000");
}

#[test]
fn split_on_the_500_participant_fixture() {
    let labels = fx("split_labels.csv");
    let assign = ok(&["split", "--labels", &labels, "--seed", "11", "--format", "csv"]);
    assert_eq!(assign, ok(&["split", "--labels", &labels, "--seed", "11", "--format", "csv"]));
    let rows = csv_rows(&assign);
    assert_eq!(rows.len(), 500);
    let by_pid: BTreeMap<String, String> =
        rows.iter().map(|r| (r["participant_id"].clone(), r["split"].clone())).collect();
    assert_eq!(by_pid.len(), 500, "each participant is assigned exactly once");

    // Recount image fractions from the labels file and the assignment.
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    let text = std::fs::read_to_string(&labels).unwrap();
    for r in csv_rows(&text) {
        *counts.entry((r["label"].clone(), by_pid[&r["participant_id"]].clone())).or_default() += 1;
        *totals.entry(r["label"].clone()).or_default() += 1;
    }
    for (class, total) in &totals {
        for (split, target) in [("train", 0.8), ("val", 0.1), ("test", 0.1)] {
            let n = counts.get(&(class.clone(), split.to_string())).copied().unwrap_or(0);
            let frac = n as f64 / *total as f64;
            assert!((frac - target).abs() <= 0.02, "{class} {split}: {frac}");
        }
    }
    let summary = csv_rows(&ok(&["split", "--labels", &labels, "--seed", "11", "--summary", "--format", "csv"]));
    assert_eq!(summary.len(), 15);
}

#[test]
fn split_rejects_bad_ratios() {
    let o = myopia(&["split", "--labels", &fx("split_labels.csv"), "--train", "0.9"]);
    assert_eq!(o.status.code(), Some(1));
}

fn value(rows: &[HashMap<String, String>], section: &str, subject: &str, measure: &str) -> String {
    rows.iter()
        .find(|r| r["section"] == section && r["subject"] == subject && r["measure"] == measure)
        .unwrap_or_else(|| panic!("no row {section}/{subject}/{measure}"))["value"]
        .clone()
}

#[test]
fn eval_scq_reports_the_system_score_and_subgroups() {
    let out = ok(&["eval", "scq", "--items", &fx("scq_items.csv"), "--responses", &fx("scq_responses.csv"), "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(value(&rows, "group", "system", "mean_score"), "80.0000");
    assert_eq!(value(&rows, "group", "system", "scenario_accuracy"), "75.7576");
    assert_eq!(value(&rows, "anova", "group", "df"), "2.0000");
    assert!(rows.iter().any(|r| r["section"] == "posthoc"));
    assert_eq!(rows.iter().filter(|r| r["section"] == "system_vs_individual" && r["measure"] == "p_value").count(), 9);
}

#[test]
fn eval_reports_malformed_rows_with_their_number() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("ratings.csv");
    std::fs::write(&bad, "question_id,source,criterion,rater_id,rating\n1,system,accuracy,r1,3\n1,system,accuracy,r2,7\n")
        .unwrap();
    let o = myopia(&["eval", "ratings", "--ratings", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));

    let items = std::fs::read_to_string(fixtures().join("scq_items.csv")).unwrap();
    let broken = dir.path().join("items.csv");
    let mut lines: Vec<&str> = items.lines().collect();
    lines[4] = "x,notanumber,knowledge,A";
    std::fs::write(&broken, lines.join("\n")).unwrap();
    let o = myopia(&["eval", "scq", "--items", broken.to_str().unwrap(), "--responses", &fx("scq_responses.csv")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("row 5"), "{}", stderr(&o));
}

#[test]
fn eval_rct_identical_arms_give_p_one() {
    let out = ok(&["eval", "rct", "--questionnaires", &fx("questionnaires_identical.csv"), "--format", "csv"]);
    let rows = csv_rows(&out);
    let ps: Vec<&HashMap<String, String>> =
        rows.iter().filter(|r| r["section"] == "arms" && r["measure"] == "p_value").collect();
    assert!(!ps.is_empty());
    assert!(ps.iter().all(|r| r["value"] == "1.0000"));
    assert_eq!(value(&rows, "arms", "cmissr.total", "statistic"), "50.0000");
}

#[test]
fn eval_rct_on_the_trial_fixture() {
    let out = ok(&["eval", "rct", "--questionnaires", &fx("questionnaires.csv"), "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(value(&rows, "arms", "cmissr.total", "n_agent"), "32");
    assert_eq!(rows.iter().filter(|r| r["section"] == "correlation" && r["measure"] == "p_value").count(), 7);
    let o = myopia(&["eval", "rct", "--questionnaires", &fx("questionnaires.csv"), "--cmissr-map", "broken"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_ratings_distribution() {
    let out = ok(&["eval", "ratings", "--ratings", &fx("ratings.csv"), "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(value(&rows, "distribution", "system/accuracy", "count_3"), "58");
    assert_eq!(value(&rows, "distribution", "system/accuracy", "percent_3"), "68.2400");
}

#[test]
fn every_subcommand_honors_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("i.mkdx");
    let runs: Vec<Vec<String>> = vec![
        vec!["ingest".into(), "--corpus".into(), fx("corpus/en"), "--out".into(), index.display().to_string(), "--language".into(), "en".into()],
        vec!["query".into(), "--index".into(), index.display().to_string(), "outdoor time".into()],
        vec!["classify".into(), "--sidecar".into(), fx("grading_sidecar.csv"), fx("images/fundus_01.png")],
        vec!["classify".into(), "--sidecar".into(), fx("grading_sidecar.csv"), "--metrics".into()],
        vec!["split".into(), "--labels".into(), fx("split_labels.csv")],
        vec!["eval".into(), "scq".into(), "--items".into(), fx("scq_items.csv"), "--responses".into(), fx("scq_responses.csv")],
        vec!["eval".into(), "ratings".into(), "--ratings".into(), fx("ratings.csv")],
        vec!["eval".into(), "rct".into(), "--questionnaires".into(), fx("questionnaires.csv")],
    ];
    for args in runs {
        let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
        a.extend(["--format", "json-lines"]);
        let out = ok(&a);
        assert!(!out.is_empty(), "{a:?}");
        for line in out.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap_or_else(|e| panic!("{a:?}: {e}: {line}"));
            assert!(v.is_object());
        }
        a.pop();
        a.pop();
        a.extend(["--format", "csv"]);
        assert!(csv_rows(&ok(&a)).len() >= 1, "{a:?}");
    }
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(myopia(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(myopia(&["query"]).status.code(), Some(1));
    assert_eq!(myopia(&["split", "--labels", "x", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(myopia(&["--help"]).status.code(), Some(0));
    assert_eq!(myopia(&["--version"]).status.code(), Some(0));
}

const HELP_PAGES: &[&[&str]] = &[
    &[],
    &["ingest"],
    &["query"],
    &["classify"],
    &["split"],
    &["eval"],
    &["eval", "scq"],
    &["eval", "ratings"],
    &["eval", "rct"],
    &["serve"],
];

/// Set `BLESS=1` to rewrite the golden files after an intended change.
#[test]
fn help_text_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("BLESS").is_some();
    for page in HELP_PAGES {
        let mut args = page.to_vec();
        args.push("--help");
        let text = ok(&args);
        let name = if page.is_empty() { "myopia".to_string() } else { format!("myopia-{}", page.join("-")) };
        let path = golden.join(format!("{name}.txt"));
        if bless {
            std::fs::create_dir_all(&golden).unwrap();
            std::fs::write(&path, &text).unwrap();
        } else {
            let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
            assert_eq!(text, expected, "{name}");
        }
    }
}

fn write_service_config(dir: &Path, index: Option<&str>) -> PathBuf {
    let script = dir.join("script.json");
    std::fs::write(&script, r#"{"rules": [], "fallback": "Go outside more [1].\n---FOLLOW-UP---\n1. Why?"}"#).unwrap();
    let index_line = index.map(|i| format!("en = {i:?}\n")).unwrap_or_else(|| "en = \"missing.mkdx\"\n".into());
    let config = dir.join("service.toml");
    std::fs::write(
        &config,
        format!(
            "session_store = \"sessions\"\n[indexes]\n{index_line}[chat]\nkind = \"scripted\"\nscript = {:?}\n",
            script
        ),
    )
    .unwrap();
    config
}

#[test]
fn serve_with_a_missing_index_exits_one_before_binding() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_service_config(dir.path(), None);
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let o = myopia(&["serve", "--config", config.to_str().unwrap(), "--listen", &addr]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("indexes.en"), "{}", stderr(&o));
    assert!(!stderr(&o).contains("listening"));
    std::net::TcpListener::bind(&addr).expect("port was never bound");
}

#[test]
fn serve_answers_health_and_turns() {
    let dir = tempfile::tempdir().unwrap();
    let index = en_index(dir.path());
    let config = write_service_config(dir.path(), Some(&index));
    let mut child = Command::new(env!("CARGO_BIN_EXE_myopia"))
        .args(["serve", "--config", config.to_str().unwrap(), "--listen", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let addr = loop {
        let line = lines.next().expect("server exited").unwrap();
        if let Some(a) = line.strip_prefix("listening on ") {
            break a.to_string();
        }
    };
    std::thread::spawn(move || for _ in lines {});
    let health = http(&addr, "GET /api/health HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains("\"loaded\":true"));
    let body = r#"{"language":"en"}"#;
    let created = http(
        &addr,
        &format!(
            "POST /api/sessions HTTP/1.1\r\nHost: x\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ),
    );
    assert!(created.starts_with("HTTP/1.1 201"), "{created}");
    child.kill().unwrap();
    child.wait().unwrap();
}

fn http(addr: &str, request: &str) -> String {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(addr).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}
