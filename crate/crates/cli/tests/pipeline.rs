//! End-to-end runs of the `traitgen` binary.

use std::path::Path;
use std::process::{Command, Output};

use traitgen_core::datastore::{load_corpus, Split};

fn traitgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_traitgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn traitgen")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = traitgen(dir, args);
    assert!(
        out.status.success(),
        "traitgen {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_split_train_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--seed", "7", "--out", "corpus.jsonl"]);
    assert!(d.join("corpus.jsonl.meta.json").exists());
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("corpus.jsonl.meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["command"], "generate");
    assert!(meta["tool_version"].is_string());

    ok(
        d,
        &[
            "split",
            "-i",
            "corpus.jsonl",
            "-o",
            "split.jsonl",
            "--holdout",
            "200",
            "--seed",
            "7",
        ],
    );
    let records = load_corpus(&d.join("split.jsonl")).unwrap();
    assert_eq!(records.len(), 2000);
    assert_eq!(
        records.iter().filter(|r| r.split == Split::Test).count(),
        200
    );

    for s in ["together", "separate", "adapter"] {
        let out = format!("{s}.bundle");
        ok(
            d,
            &[
                "train",
                "--corpus",
                "split.jsonl",
                "--strategy",
                s,
                "--seed",
                "7",
                "-o",
                &out,
            ],
        );
    }
    let stdout = ok(
        d,
        &[
            "evaluate",
            "--bundle",
            "together.bundle",
            "--bundle",
            "separate.bundle",
            "--bundle",
            "adapter.bundle",
            "--corpus",
            "split.jsonl",
            "-o",
            "report.csv",
        ],
    );
    assert!(stdout.contains("EXT"));
    let csv = std::fs::read_to_string(d.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3, "{csv}");
    for (row, short) in rows.iter().zip(["TO", "SE", "AT"]) {
        let cols: Vec<&str> = row.split(',').collect();
        assert!(cols[0].ends_with(&format!("({short})")), "{row}");
        assert_eq!(cols[1], "generated");
        for acc in &cols[2..7] {
            assert!(acc.parse::<f64>().unwrap() >= 0.9, "{row}");
        }
    }

    ok(
        d,
        &[
            "predict",
            "--bundle",
            "adapter.bundle",
            "--corpus",
            "split.jsonl",
            "-o",
            "pred.jsonl",
        ],
    );
    let preds = std::fs::read_to_string(d.join("pred.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 200);
    let first: serde_json::Value = serde_json::from_str(preds.lines().next().unwrap()).unwrap();
    assert!(first["processed_output"]["NEU"].as_f64().unwrap() >= 0.0);

    let report = ok(
        d,
        &["report", "--accuracy", "report.csv", "-o", "report.txt"],
    );
    assert!(report.contains("Avg"));
    assert!(d.join("report.txt").exists());
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &[
            "generate",
            "--seed",
            "7",
            "--scripts",
            "2",
            "--workers",
            "3",
            "--out",
            "a.jsonl",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--seed",
            "7",
            "--scripts",
            "2",
            "--workers",
            "1",
            "--out",
            "b.jsonl",
        ],
    );
    ok(
        d,
        &[
            "generate",
            "--seed",
            "8",
            "--scripts",
            "2",
            "--out",
            "c.jsonl",
        ],
    );
    let a = std::fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(d.join("b.jsonl")).unwrap());
    assert_ne!(a, std::fs::read(d.join("c.jsonl")).unwrap());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("lines.txt"),
        "Hello there.\nHow are you?\nNice weather.\nSee you.\n",
    )
    .unwrap();
    std::fs::create_dir(d.join("cfg")).unwrap();
    std::fs::write(
        d.join("cfg/pipeline.toml"),
        "[corpus]\nuser_lines = \"../lines.txt\"\nscripts = 2\nexchanges = 2\nseed = 3\n",
    )
    .unwrap();
    ok(
        d,
        &[
            "--config",
            "cfg/pipeline.toml",
            "generate",
            "--out",
            "x.jsonl",
        ],
    );
    assert_eq!(load_corpus(&d.join("x.jsonl")).unwrap().len(), 2 * 20 * 2);
    ok(
        d,
        &[
            "--config",
            "cfg/pipeline.toml",
            "generate",
            "--exchanges",
            "1",
            "--out",
            "y.jsonl",
        ],
    );
    assert_eq!(load_corpus(&d.join("y.jsonl")).unwrap().len(), 2 * 20);
    let shown = ok(d, &["--config", "cfg/pipeline.toml", "show-config"]);
    assert!(shown.contains("scripts = 2"));
}

#[test]
fn failures_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[corpus]\nscripts = \"many\"\n").unwrap();
    let out = traitgen(
        d,
        &["--config", "bad.toml", "generate", "--out", "never.jsonl"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!d.join("never.jsonl").exists());

    // pool of 100 lines cannot feed 11 scripts of 10 exchanges
    let out = traitgen(d, &["generate", "--scripts", "11", "--out", "never.jsonl"]);
    assert!(!out.status.success());
    assert!(!d.join("never.jsonl").exists());

    ok(
        d,
        &[
            "generate",
            "--scripts",
            "1",
            "--exchanges",
            "2",
            "--out",
            "c.jsonl",
        ],
    );
    let out = traitgen(d, &["train", "--corpus", "c.jsonl", "-o", "m.bundle"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
}

#[test]
fn ingest_annotate_and_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let movie: String = (0..40)
        .map(|i| {
            format!(
                "L{i} +++$+++ u0 +++$+++ m0 +++$+++ BOB +++$+++ I am line {i} and I feel {}.\n",
                ["great", "awful", "calm", "tense"][i % 4]
            )
        })
        .collect();
    std::fs::write(d.join("movie_lines.txt"), movie).unwrap();
    ok(
        d,
        &[
            "ingest",
            "--source",
            "movie",
            "--input",
            "movie_lines.txt",
            "--n",
            "30",
            "--seed",
            "1",
            "-o",
            "real.jsonl",
        ],
    );
    let real = load_corpus(&d.join("real.jsonl")).unwrap();
    assert_eq!(real.len(), 30);
    assert!(real
        .iter()
        .all(|r| r.split == Split::Test && r.message.trait_dim.is_none()));

    // annotations as exported by the service
    let mut jsonl = String::new();
    for (i, r) in real.iter().enumerate() {
        for a in ["a1", "a2"] {
            let rating = 1 + (i % 10);
            let scores: serde_json::Value = ["EXT", "AGR", "OPE", "CON", "NEU"]
                .iter()
                .map(|t| (t.to_string(), serde_json::json!(rating)))
                .collect::<serde_json::Map<_, _>>()
                .into();
            let diff: serde_json::Value = ["EXT", "AGR", "OPE", "CON", "NEU"]
                .iter()
                .map(|t| (t.to_string(), serde_json::json!(1 + (i * 7 + a.len()) % 10)))
                .collect::<serde_json::Map<_, _>>()
                .into();
            let rec = serde_json::json!({
                "annotator_id": a, "message_id": r.message.id, "ratings": scores,
                "difficulty": diff, "submitted_at": "2024-01-01T00:00:00Z"
            });
            jsonl.push_str(&rec.to_string());
            jsonl.push('\n');
        }
    }
    std::fs::write(d.join("ann.jsonl"), jsonl).unwrap();

    ok(d, &["generate", "--scripts", "2", "--out", "gen.jsonl"]);
    ok(
        d,
        &[
            "split",
            "-i",
            "gen.jsonl",
            "-o",
            "gen_split.jsonl",
            "--holdout",
            "40",
        ],
    );
    ok(
        d,
        &[
            "train",
            "--corpus",
            "gen_split.jsonl",
            "--epochs",
            "5",
            "-o",
            "m.bundle",
        ],
    );
    let eval = ok(
        d,
        &[
            "evaluate",
            "--bundle",
            "m.bundle",
            "--corpus",
            "real.jsonl",
            "--annotations",
            "ann.jsonl",
            "-o",
            "real.csv",
        ],
    );
    assert!(eval.contains("[movie]"), "{eval}");
    let csv = std::fs::read_to_string(d.join("real.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",movie,"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",30,30,30,30,30"));

    let corr = ok(
        d,
        &[
            "correlate",
            "--bundle",
            "m.bundle",
            "--corpus",
            "real.jsonl",
            "--annotations",
            "ann.jsonl",
            "-o",
            "corr.csv",
        ],
    );
    assert!(corr.contains("NEU"));
    assert_eq!(
        std::fs::read_to_string(d.join("corr.csv"))
            .unwrap()
            .lines()
            .count(),
        6
    );
    let rendered = ok(
        d,
        &[
            "report",
            "--accuracy",
            "real.csv",
            "--correlation",
            "corr.csv",
        ],
    );
    assert!(rendered.contains("p < .001"));
}

#[test]
fn personas_command_lists_twenty() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["personas"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 20);
}
