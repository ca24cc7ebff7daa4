use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sanitext::synth::demo_store;
use sanitext::StoreFormat;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sanitext"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    store: PathBuf,
    table: PathBuf,
    input: PathBuf,
    root: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let store = root.join("vocab.txt");
    demo_store(1)
        .unwrap()
        .save(std::fs::File::create(&store).unwrap(), StoreFormat::Text)
        .unwrap();
    let table = root.join("vocab.ssct");
    let out = run(&[
        "build-index",
        "--store",
        s(&store),
        "--k",
        "5",
        "--out",
        s(&table),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let input = root.join("note.txt");
    std::fs::write(&input, "my doctor treated my asthma in lisbon, then zzz.\n").unwrap();
    Fixture {
        _dir: dir,
        store,
        table,
        input,
        root,
    }
}

fn sanitize(f: &Fixture, tag: &str, extra: &[&str]) -> (Output, PathBuf, PathBuf) {
    let out = f.root.join(format!("{tag}.txt"));
    let audit = f.root.join(format!("{tag}.jsonl"));
    let mut args = vec![
        "sanitize",
        "--store",
        s(&f.store),
        "--table",
        s(&f.table),
        "--k",
        "5",
        "--seed",
        "42",
        "--in",
        s(&f.input),
        "--out",
        s(&out),
        "--audit",
        s(&audit),
    ];
    args.extend_from_slice(extra);
    (run(&args), out, audit)
}

#[test]
fn sanitize_is_byte_identical_across_runs() {
    let f = fixture();
    let (a, out_a, audit_a) = sanitize(&f, "a", &[]);
    let (b, out_b, audit_b) = sanitize(&f, "b", &[]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
    assert_eq!(
        std::fs::read(&audit_a).unwrap(),
        std::fs::read(&audit_b).unwrap()
    );
    let text = std::fs::read_to_string(&out_a).unwrap();
    assert!(text.ends_with("zzz.\n"));
    let lines = std::fs::read_to_string(&audit_a).unwrap();
    assert_eq!(lines.lines().count(), 9);
    for line in lines.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn partition_prints_counts() {
    let f = fixture();
    let out = run(&["partition", "--store", s(&f.store), "--q", "0.25"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(
        stdout.starts_with("tokens=36 sensitive=9 non_sensitive=27"),
        "{stdout}"
    );
}

#[test]
fn verify_writes_json_report() {
    let f = fixture();
    let json = f.root.join("report.json");
    let out = run(&[
        "verify",
        "case1",
        "--store",
        s(&f.store),
        "--table",
        s(&f.table),
        "--q",
        "0.5",
        "--x",
        "asthma",
        "--xprime",
        "insomnia",
        "--trials",
        "20000",
        "--json",
        s(&json),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["trials"], 20000);
    assert_eq!(v["epsilon"], 1.0);
}

#[test]
fn exit_codes_follow_error_class() {
    let f = fixture();
    // Table built with k = 5 but requested k = 30.
    let (out, _, _) = sanitize(&f, "k", &["--k", "30"]);
    assert_eq!(out.status.code(), Some(2));
    let (out, _, _) = sanitize(&f, "eps", &["--epsilon", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["partition", "--store", s(&f.root.join("missing.txt"))]);
    assert_eq!(out.status.code(), Some(3));
    let bad = f.root.join("bad.txt");
    std::fs::write(&bad, "#dim=2 count=1\nword\t3\t1.0\n").unwrap();
    let out = run(&["partition", "--store", s(&bad)]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!out.stderr.is_empty());
}

#[test]
fn table_for_another_store_is_rejected() {
    let f = fixture();
    let other = f.root.join("other.txt");
    demo_store(2)
        .unwrap()
        .save(std::fs::File::create(&other).unwrap(), StoreFormat::Text)
        .unwrap();
    let out = run(&[
        "sanitize",
        "--store",
        s(&other),
        "--table",
        s(&f.table),
        "--k",
        "5",
        "--in",
        s(&f.input),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
