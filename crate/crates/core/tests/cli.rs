use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lexcase(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lexcase"))
        .current_dir(dir)
        .args(args)
        .env_remove("LEXCASE_DATA_DIR")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&lexcase(d, &["frobnicate"])), 1);
    let o = lexcase(d, &["retrieve", "fx", "--variant", "bm25", "--out", "r.jsonl"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--task"));
    assert_eq!(code(&lexcase(d, &["gen-fixture", "--queries", "2", "--candidates", "3", "--seed", "1", "--out", "fx"])), 0);
    let o = lexcase(d, &["retrieve", "fx", "--task", "t1", "--variant", "docbm", "--out", "r.jsonl"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--model"));
    assert_eq!(code(&lexcase(d, &["--help"])), 0);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&lexcase(d, &["evaluate", "--run", "missing.jsonl", "--gold", "."])), 2);
    fs::create_dir_all(d.join("bad/q1/candidates")).unwrap();
    let o = lexcase(d, &["retrieve", "bad", "--task", "t1", "--variant", "bm25", "--out", "r.jsonl"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("base.txt"));
}

#[test]
fn gen_fixture_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        assert_eq!(code(&lexcase(d, &["gen-fixture", "--queries", "5", "--candidates", "20", "--seed", "3", "--out", out])), 0);
    }
    let mut files = 0;
    for q in fs::read_dir(d.join("a")).unwrap() {
        let q = q.unwrap().file_name();
        for rel in ["base.txt", "gold.json"] {
            let a = fs::read(d.join("a").join(&q).join(rel)).unwrap();
            assert_eq!(a, fs::read(d.join("b").join(&q).join(rel)).unwrap());
            files += 1;
        }
        assert_eq!(fs::read_dir(d.join("a").join(&q).join("candidates")).unwrap().count(), 20);
    }
    assert_eq!(files, 10);

    assert_eq!(code(&lexcase(d, &["gen-fixture", "--queries", "2", "--candidates", "1", "--seed", "3", "--out", "one"])), 0);
    assert_eq!(fs::read_to_string(d.join("one/q001/gold.json")).unwrap(), "[\"c001\"]\n");
}

#[test]
fn evaluate_prints_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("g/q1")).unwrap();
    fs::write(d.join("g/q1/gold.json"), "[\"a\",\"b\"]").unwrap();
    fs::write(d.join("r.jsonl"), "{\"query\":\"q1\",\"retrieved\":[\"a\",\"x\"]}\n").unwrap();
    let o = lexcase(d, &["evaluate", "--run", "r.jsonl", "--gold", "g", "--beta", "1", "--map-k", "100"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("precision") && out.contains("MAP@100"));
    let report: serde_json::Value = serde_json::from_str(out.lines().last().unwrap()).unwrap();
    assert_eq!(report["precision"], 0.5);
    assert_eq!(report["recall"], 0.5);
    assert_eq!(report["map_at_k"], 0.5);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&lexcase(d, &["gen-fixture", "--queries", "3", "--candidates", "8", "--seed", "2", "--out", "fx"])), 0);
    fs::write(d.join("lexcase.toml"), "[bm25]\nk1 = 2.0\nb = 0.5\n\n[retrieve]\nvariant = \"tfidf\"\nrel_frac = 0.7\n").unwrap();
    let o = lexcase(d, &["--config", "lexcase.toml", "retrieve", "fx", "--task", "t1", "--variant", "bm25", "--b", "0.3", "--out", "r.jsonl"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.jsonl.report.json")).unwrap()).unwrap();
    let cfg = &report["config"];
    assert_eq!(cfg["variant"], "bm25");
    assert_eq!(cfg["bm25"]["k1"], 2.0);
    assert_eq!(cfg["bm25"]["b"], 0.3);
    assert_eq!(cfg["rule"]["rel_frac"], 0.7);

    fs::write(d.join("bad.toml"), "[bm25]\nk3 = 1\n").unwrap();
    assert_eq!(code(&lexcase(d, &["--config", "bad.toml", "retrieve", "fx", "--task", "t1", "--variant", "bm25", "--out", "r.jsonl"])), 1);
}

#[test]
fn data_dir_overrides_stopwords() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::create_dir_all(d.join("fx/q1/candidates")).unwrap();
    fs::write(d.join("fx/q1/base.txt"), "zebra quagga").unwrap();
    fs::write(d.join("fx/q1/candidates/c1.txt"), "zebra stripes").unwrap();
    fs::write(d.join("fx/q1/candidates/c2.txt"), "quagga extinct").unwrap();
    let run = |extra: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lexcase"));
        cmd.current_dir(d).args(["retrieve", "fx", "--task", "t2", "--variant", "bm25", "--out", "r.jsonl"]);
        match extra {
            Some(dir) => cmd.env("LEXCASE_DATA_DIR", dir),
            None => cmd.env_remove("LEXCASE_DATA_DIR"),
        };
        assert!(cmd.status().unwrap().success());
        fs::read_to_string(d.join("r.jsonl")).unwrap()
    };
    // tie broken by id without custom tables
    assert!(run(None).contains("[\"c1\"]"));
    fs::create_dir_all(d.join("tables")).unwrap();
    fs::write(d.join("tables/stopwords.txt"), "zebra\n").unwrap();
    assert!(run(Some("tables")).contains("[\"c2\"]"));
}

#[test]
fn entail_train_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = lexcase(d, &["gen-fixture", "--queries", "40", "--candidates", "60", "--seed", "4", "--layout", "statutes", "--out", "st"]);
    assert_eq!(code(&gen), 0);
    let o = lexcase(d, &["entail", "train", "--pairs", "st/pairs.xml", "--articles", "st/articles.jsonl", "--seed", "7", "--out", "m.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = lexcase(d, &["entail", "predict", "--model", "m.json", "--pairs", "st/pairs.xml", "--out", "p.jsonl"]);
    assert_eq!(code(&o), 0);
    let preds = fs::read_to_string(d.join("p.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 40);
    for line in preds.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["label"] == "Y" || v["label"] == "N");
    }
    assert!(stdout(&o).starts_with("accuracy"));
}
