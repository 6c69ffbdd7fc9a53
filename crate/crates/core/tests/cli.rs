use factvec::index::{EmbeddingIndex, IndexEntry};
use factvec::metrics::{compute_metrics, Gaps};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn factvec<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_factvec")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn train(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let ck = dir.join(name);
    let mut args: Vec<std::ffi::OsString> = vec![
        "train".into(),
        fixture("stories10.json").into(),
        "--vectors".into(),
        fixture("vectors.txt").into(),
        "--out".into(),
        ck.clone().into(),
    ];
    args.extend(extra.iter().map(Into::into));
    let out = factvec(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    ck
}

#[test]
fn validate_exit_codes() {
    assert_eq!(
        code(&factvec([fixture("stories10.json")])),
        2,
        "missing subcommand is a usage error"
    );
    let ok = factvec(["validate".as_ref(), fixture("stories10.json").as_os_str()]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("10 visualizations, 50 charts"));

    let short = factvec(["validate".as_ref(), fixture("two_chart_story.json").as_os_str()]);
    assert_eq!(code(&short), 1);
    let line = stderr(&short).lines().next().unwrap().to_string();
    assert!(
        line.starts_with("visualization=") && line.contains("minimum chart number"),
        "{line}"
    );

    let bad = factvec(["validate".as_ref(), fixture("invalid_breakdown.json").as_os_str()]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("position=") && stderr(&bad).contains("chart="));

    let dup = factvec(["validate".as_ref(), fixture("duplicate_chart_id.json").as_os_str()]);
    assert_eq!(code(&dup), 1);

    assert_eq!(code(&factvec(["validate", "/nonexistent/corpus.json"])), 2);
}

#[test]
fn train_embed_eval_nearest() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path(), "m.ck", &["--epochs", "2", "--test-fraction", "0"]);
    let history = std::fs::read_to_string(format!("{}.history.csv", ck.display())).unwrap();
    assert_eq!(history.lines().count(), 3);
    assert!(history.starts_with("epoch,interp_term,pair_term,l1,l2,total,wall_ms\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.manifest.json", ck.display())).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["hyper"]["loss"]["alpha"], 0.5);
    assert_eq!(manifest["config"]["hyper"]["epochs"], 2);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);

    let index = dir.path().join("i.tsv");
    let out = factvec([
        "embed".as_ref(),
        "--checkpoint".as_ref(),
        ck.as_os_str(),
        "--corpus".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--out".as_ref(),
        index.as_os_str(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&index).unwrap();
    assert_eq!(text.lines().count(), 51);
    let first = text.lines().nth(1).unwrap();
    assert_eq!(first.split('\t').count(), 4 + 540);

    let eval = factvec(["eval".as_ref(), index.as_os_str(), "--format".as_ref(), "json".as_ref()]);
    assert_eq!(code(&eval), 0);
    let report: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    let parsed = EmbeddingIndex::<f64>::from_tsv(&text).unwrap();
    let direct = compute_metrics(&parsed, Gaps::default()).unwrap();
    assert_eq!(report["cooccurrence"].as_f64().unwrap(), direct.cooccurrence);
    assert_eq!(report["n_anchors"], 50);

    let near = factvec([
        "nearest".as_ref(),
        index.as_os_str(),
        "c001".as_ref(),
        "--k".as_ref(),
        "100".as_ref(),
    ]);
    assert_eq!(code(&near), 0);
    // c001 belongs to a dataset with 15 charts
    assert_eq!(stdout(&near).lines().count(), 14);
    let all = factvec([
        "nearest".as_ref(),
        index.as_os_str(),
        "c001".as_ref(),
        "--k".as_ref(),
        "100".as_ref(),
        "--scope".as_ref(),
        "all".as_ref(),
    ]);
    assert_eq!(stdout(&all).lines().count(), 49);
    assert_eq!(
        code(&factvec(["nearest".as_ref(), index.as_os_str(), "nope".as_ref()])),
        1
    );
}

#[test]
fn nearest_matches_brute_force_on_toy_index() {
    let dir = tempfile::tempdir().unwrap();
    let entries = [
        ("a", "s1", 1, [0.0, 0.0]),
        ("b", "s1", 2, [3.0, 4.0]),
        ("c", "s2", 1, [1.0, 0.0]),
        ("d", "s2", 2, [0.0, 1.0]),
        ("e", "s2", 3, [-2.0, 0.0]),
    ];
    let index = EmbeddingIndex::from_entries(
        entries
            .iter()
            .map(|(id, story, pos, v)| IndexEntry {
                chart_id: id.to_string(),
                story_id: story.to_string(),
                position: *pos,
                dataset_id: "d".into(),
                vector: v.to_vec(),
            })
            .collect(),
    )
    .unwrap();
    let path = dir.path().join("toy.tsv");
    std::fs::write(&path, index.to_tsv()).unwrap();
    let out = factvec([
        "nearest".as_ref(),
        path.as_os_str(),
        "a".as_ref(),
        "--k".as_ref(),
        "3".as_ref(),
    ]);
    assert_eq!(code(&out), 0);
    let ids: Vec<String> = stdout(&out)
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect();
    // distances from a: c 1, d 1 (tie, c first), e 2, b 5
    assert_eq!(ids, ["c", "d", "e"]);
}

#[test]
fn epochs_zero_writes_initial_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path(), "z.ck", &["--epochs", "0", "--seed", "4"]);
    let loaded: factvec::checkpoint::Checkpoint<f64> = factvec::checkpoint::load(&ck).unwrap();
    let config = factvec::EncoderConfig::default();
    assert_eq!(loaded.params, factvec::EncoderParams::init(4, &config).unwrap());
}

#[test]
fn train_rejects_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = factvec([
        "train".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        "/nonexistent/vectors.txt".as_ref(),
        "--out".as_ref(),
        dir.path().join("x.ck").as_os_str(),
    ]);
    assert_eq!(code(&out), 2);
    let out = factvec([
        "train".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--out".as_ref(),
        dir.path().join("x.ck").as_os_str(),
        "--lr".as_ref(),
        "-1".as_ref(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"alpha": 0.25, "epochs": 1, "margin": 2.0}"#).unwrap();
    let ck = train(
        dir.path(),
        "c.ck",
        &["--config", cfg.to_str().unwrap(), "--epochs", "2"],
    );
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.manifest.json", ck.display())).unwrap()).unwrap();
    let hyper = &manifest["config"]["hyper"];
    assert_eq!(hyper["loss"]["alpha"], 0.25);
    assert_eq!(hyper["loss"]["margin"], 2.0);
    assert_eq!(hyper["epochs"], 2);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);

    std::fs::write(&cfg, r#"{"alpah": 0.25}"#).unwrap();
    let out = factvec([
        "train".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--out".as_ref(),
        dir.path().join("y.ck").as_os_str(),
        "--config".as_ref(),
        cfg.as_os_str(),
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn embed_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path(), "e.ck", &["--epochs", "0"]);
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, r#"{"visualizations": []}"#).unwrap();
    let index = dir.path().join("empty.tsv");
    let out = factvec([
        "embed".as_ref(),
        "--checkpoint".as_ref(),
        ck.as_os_str(),
        "--corpus".as_ref(),
        empty.as_os_str(),
        "--out".as_ref(),
        index.as_os_str(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(std::fs::read_to_string(&index).unwrap().lines().count(), 1);
    assert_eq!(code(&factvec(["eval".as_ref(), index.as_os_str()])), 1, "empty index");

    // word vectors of the wrong width
    let narrow = dir.path().join("narrow.txt");
    std::fs::write(&narrow, "year 0.1 0.2 0.3\n").unwrap();
    let out = factvec([
        "embed".as_ref(),
        "--checkpoint".as_ref(),
        ck.as_os_str(),
        "--corpus".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        narrow.as_os_str(),
        "--out".as_ref(),
        index.as_os_str(),
    ]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let test_side = dir.path().join("test.tsv");
    let out = factvec([
        "embed".as_ref(),
        "--checkpoint".as_ref(),
        ck.as_os_str(),
        "--corpus".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--out".as_ref(),
        test_side.as_os_str(),
        "--split".as_ref(),
        "test".as_ref(),
        "--test-fraction".as_ref(),
        "0.3".as_ref(),
    ]);
    assert_eq!(code(&out), 0);
    let rows = std::fs::read_to_string(&test_side).unwrap().lines().count() - 1;
    assert!(rows > 0 && rows < 50, "{rows}");
}

#[test]
fn single_story_dataset_scores_full_cooccurrence() {
    let dir = tempfile::tempdir().unwrap();
    let index = EmbeddingIndex::from_entries(
        (1..=4)
            .map(|p| IndexEntry {
                chart_id: format!("x{p}"),
                story_id: "only".into(),
                position: p,
                dataset_id: "d".into(),
                vector: vec![p as f64 * 1.5, 0.0],
            })
            .collect(),
    )
    .unwrap();
    let path = dir.path().join("one.tsv");
    std::fs::write(&path, index.to_tsv()).unwrap();
    let out = factvec(["eval".as_ref(), path.as_os_str(), "--format".as_ref(), "json".as_ref()]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["cooccurrence"], 1.0);
}

#[test]
fn gradcheck_command() {
    let ok = factvec(["gradcheck"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let faulty = factvec(["gradcheck", "--inject-fault"]);
    assert_eq!(code(&faulty), 1);
    let coarse = factvec(["gradcheck", "--epsilon", "1e-2"]);
    assert!(stderr(&coarse).contains("warning: epsilon"), "{}", stderr(&coarse));
}

#[test]
fn ablate_single_variant_matches_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = factvec([
        "ablate".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--variants".as_ref(),
        "full,no-fc".as_ref(),
        "--epochs".as_ref(),
        "2".as_ref(),
        "--test-fraction".as_ref(),
        "0".as_ref(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant,top2,top3,cooccurrence,wall_ms,peak_bytes");
    assert_eq!(lines.len(), 3);
    let full: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(full[0], "full");
    assert!(full[5].parse::<usize>().unwrap() > 0, "peak bytes recorded");

    let ck = train(dir.path(), "f.ck", &["--epochs", "2", "--test-fraction", "0"]);
    let index = dir.path().join("f.tsv");
    let emb = factvec([
        "embed".as_ref(),
        "--checkpoint".as_ref(),
        ck.as_os_str(),
        "--corpus".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--out".as_ref(),
        index.as_os_str(),
    ]);
    assert_eq!(code(&emb), 0);
    let eval = factvec(["eval".as_ref(), index.as_os_str(), "--format".as_ref(), "json".as_ref()]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&eval)).unwrap();
    assert_eq!(
        full[3].parse::<f64>().unwrap(),
        report["cooccurrence"].as_f64().unwrap()
    );
    assert_eq!(full[2].parse::<f64>().unwrap(), report["top3"].as_f64().unwrap());

    let unknown = factvec([
        "ablate".as_ref(),
        fixture("stories10.json").as_os_str(),
        "--vectors".as_ref(),
        fixture("vectors.txt").as_os_str(),
        "--variants".as_ref(),
        "no-such-variant".as_ref(),
    ]);
    assert_eq!(code(&unknown), 2);
}

#[test]
fn grammar_and_import() {
    let g = factvec(["grammar"]);
    assert_eq!(code(&g), 0);
    assert_eq!(stdout(&g).lines().count(), 60);

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("stories.json");
    std::fs::write(
        &input,
        r#"[{"id":"s1","dataset":"pop","domain":"society",
            "schema":[{"field":"Year","type":"temporal"},{"field":"Population","type":"numerical"}],
            "facts":[
              {"chart":"line chart","type":"trend","breakdown":["Year"],"measure":[{"field":"Population","aggregate":"sum"}],"parameter":"increasing"},
              {"chart":"line chart","type":"value","measure":[{"field":"Population","aggregate":"sum"}]},
              {"chart":"table","type":"extreme","breakdown":["Year"],"parameter":"max"}]}]"#,
    )
    .unwrap();
    let corpus = dir.path().join("corpus.json");
    let out = factvec([
        "import".as_ref(),
        input.as_os_str(),
        "--format".as_ref(),
        "calliope".as_ref(),
        "--out".as_ref(),
        corpus.as_os_str(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(code(&factvec(["validate".as_ref(), corpus.as_os_str()])), 0);
    assert_eq!(
        code(&factvec([
            "import".as_ref(),
            corpus.as_os_str(),
            "--out".as_ref(),
            input.as_os_str()
        ])),
        1
    );
}
