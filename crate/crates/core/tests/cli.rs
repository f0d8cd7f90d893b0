use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn imgk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imgk")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/six_cluster")
}

/// Relative path → bytes for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn score_fixture(out: &Path, extra: &[&str]) -> Output {
    let f = fixture();
    let (m, st, c) = (f.join("manifests"), f.join("store"), f.join("config.json"));
    let mut args = vec!["score", "--manifests", s(&m), "--store", s(&st), "--config", s(&c), "--out", s(out)];
    args.extend_from_slice(extra);
    imgk(&args)
}

#[test]
fn shipped_fixture_is_what_synth_writes() {
    let dir = tempfile::tempdir().unwrap();
    let out = imgk(&["synth", "fixture", "--out", s(dir.path())]);
    assert!(out.status.success());
    assert_eq!(tree(dir.path()), tree(&fixture()));
}

#[test]
fn score_reports_six_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run1");
    let out = score_fixture(&run, &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let index = std::fs::read_to_string(run.join("index.csv")).unwrap();
    assert!(index.lines().nth(1).unwrap().starts_with("six_cluster,6,2,"), "{index}");
    for file in ["config.json", "kvalues.jsonl", "failures.csv", "traces/six_cluster.csv", "traces/six_cluster.json"] {
        assert!(run.join(file).is_file(), "{file}");
    }
    assert!(!run.join("INCOMPLETE").exists());

    let trace = imgk(&["trace", s(&run.join("traces/six_cluster.csv"))]);
    assert!(trace.status.success());
    assert!(String::from_utf8_lossy(&trace.stdout).contains("k* = 6"));
}

#[test]
fn same_seed_gives_identical_trees_and_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert!(score_fixture(&a, &["--seed", "7", "--runs", "5"]).status.success());
    assert!(score_fixture(&b, &["--seed", "7", "--runs", "5"]).status.success());
    assert_eq!(tree(&a), tree(&b));

    // only the echoed thread count may differ
    let t = dir.path().join("t");
    assert!(score_fixture(&t, &["--seed", "7", "--runs", "5", "--threads", "3"]).status.success());
    let (mut ta, mut tt) = (tree(&a), tree(&t));
    assert_ne!(ta.remove(Path::new("config.json")), tt.remove(Path::new("config.json")));
    assert_eq!(ta, tt);

    let replay = imgk(&["replay", s(&a.join("config.json")), "--out", s(&c)]);
    assert!(replay.status.success(), "{}", String::from_utf8_lossy(&replay.stderr));
    assert_eq!(tree(&a), tree(&c));
}

#[test]
fn missing_store_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture();
    let out = imgk(&[
        "score",
        "--manifests",
        s(&f.join("manifests")),
        "--store",
        s(&dir.path().join("nope")),
        "--out",
        s(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("store not found"));
}

#[test]
fn corrupt_set_fails_alone_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let gen = dir.path().join("gen");
    assert!(imgk(&["synth", "mixture", "--out", s(&gen), "--set-id", "good", "--k", "5", "--patches", "30", "--dim", "8"])
        .status
        .success());
    std::fs::write(gen.join("store/broken.kemb"), b"KEMB\x01\x01\0\0garbage").unwrap();
    std::fs::write(gen.join("manifests/bad.json"), r#"{"set_id":"bad","image_ids":["broken"],"notes":""}"#).unwrap();
    let run = dir.path().join("run");
    let out = imgk(&[
        "score",
        "--manifests",
        s(&gen.join("manifests")),
        "--store",
        s(&gen.join("store")),
        "--out",
        s(&run),
        "--components",
        "8",
        "--runs",
        "3",
        "--patience",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let failures = std::fs::read_to_string(run.join("failures.csv")).unwrap();
    assert!(failures.contains("bad,stack,"), "{failures}");
    let index = std::fs::read_to_string(run.join("index.csv")).unwrap();
    assert!(index.contains("\ngood,5,"), "{index}");
}

#[test]
fn exp1_reports_positive_k_term_in_all_four_specs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("exp1.csv");
    assert!(imgk(&["synth", "choice", "--out", s(&data), "--beta", "0,1", "--seed", "3"]).status.success());
    let run = dir.path().join("reg");
    let out = imgk(&["regress", "--exp1", s(&data), "--out", s(&run)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let fits: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("fits.json")).unwrap()).unwrap();
    let fits = fits.as_array().unwrap();
    assert_eq!(fits.len(), 4);
    for fit in fits {
        let k_term = fit["coefficients"]
            .as_array()
            .unwrap()
            .iter()
            .find(|c| c["name"] == "k1-k2" || c["name"] == "k1/(k1+k2)")
            .unwrap();
        assert!(k_term["estimate"].as_f64().unwrap() > 0.0, "{k_term}");
    }
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("k1-k2") && report.contains("k1/(k1+k2)"));
    assert!(run.join("coefficients.csv").is_file() && run.join("report.txt").is_file());
}

#[test]
fn exp2_report_has_both_panels_and_fe_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("exp2.csv");
    assert!(imgk(&["synth", "panel", "--out", s(&data), "--users", "120", "--seed", "2"]).status.success());
    let out = imgk(&["regress", "--exp2", s(&data), "--out", s(&dir.path().join("reg")), "--se", "clustered"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in ["Panel A: purchase", "Panel B: decision_time", "(1)", "(2)", "(3)", "k/1000", "price/1000", "n_images"] {
        assert!(text.contains(needle), "missing {needle}:\n{text}");
    }
    // "Yes" cells right-aligned under columns (1)-(3), blank for no
    let header = text.lines().find(|l| l.contains("(1)")).unwrap();
    let col_ends: Vec<usize> = ["(1)", "(2)", "(3)"].iter().map(|c| header.find(c).unwrap() + 3).collect();
    let fe_cells = |label: &str| {
        let line = text.lines().find(|l| l.starts_with(label)).unwrap();
        col_ends.iter().map(|&end| line.get(end - 3..end) == Some("Yes")).collect::<Vec<_>>()
    };
    assert_eq!(fe_cells("Brand FE"), [false, true, true]);
    assert_eq!(fe_cells("User FE"), [false, false, true]);
    assert!(text.contains("1200"));
}

#[test]
fn missing_price_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("exp2.csv");
    std::fs::write(
        &data,
        "participant_id,product_id,brand_id,set_id,purchase,decision_time_s,k,n_images\nu1,p1,b1,s1,1,30.5,120,3\n",
    )
    .unwrap();
    let out = imgk(&["regress", "--exp2", s(&data), "--out", s(&dir.path().join("reg"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("price"));
    assert!(!dir.path().join("reg").exists());
}

#[test]
fn quick_validate_passes() {
    let out = imgk(&["validate", "--quick", "--threads", "2"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 8, "{stdout}");
}
