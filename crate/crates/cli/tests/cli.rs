use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pstate");

fn pstate(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = pstate(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn small_run(dir: &Path) {
    ok(&["pipeline", "--patients", "40", "--seed", "3", "--k", "1,3", "--out", dir.to_str().unwrap()]);
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_run(&a);
    ok(&["pipeline", "--patients", "40", "--seed", "3", "--k", "1,3", "--jobs", "1", "--out", b.to_str().unwrap()]);
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.len() > 40);
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{} differs", k.display());
    }
}

#[test]
fn manifests_record_inputs_and_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    small_run(tmp.path());
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.segment.json")).unwrap()).unwrap();
    let events = fs::read(tmp.path().join("events.tsv")).unwrap();
    use sha2::Digest;
    assert_eq!(m["inputs"]["events.tsv"], hex::encode(sha2::Sha256::digest(&events)));
    assert_eq!(m["outputs"], serde_json::json!(["instances.tsv"]));
    let p: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.pipeline.json")).unwrap()).unwrap();
    assert_eq!(p["seeds"]["synth"], 3);
    assert_eq!(p["config"]["k"], serde_json::json!([1, 3]));
    for f in p["outputs"].as_array().unwrap() {
        assert!(tmp.path().join(f.as_str().unwrap()).is_file(), "{f}");
    }
}

#[test]
fn rank_truncates_to_top() {
    let tmp = tempfile::tempdir().unwrap();
    small_run(tmp.path());
    let dir = tmp.path().to_str().unwrap();
    let out = ok(&["rank", "--input", dir, "--decision", "lab_order:LAB001", "--top", "10"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.starts_with("lab_order:LAB001\t")));
    let ranks: Vec<&str> = rows.iter().map(|r| r.split('\t').nth(4).unwrap()).collect();
    assert_eq!(ranks, (1..=10).map(|i| i.to_string()).collect::<Vec<_>>());
}

#[test]
fn json_format_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    small_run(tmp.path());
    let dir = tmp.path().to_str().unwrap();
    let out = ok(&["histogram", "--input", dir, "--kind", "med_commission", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["grouping"], "clinical5");
    assert_eq!(v["counts"].as_object().unwrap().len(), 5);
}

#[test]
fn missing_input_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.tsv");
    let out = pstate(&["segment", "--events", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("missing input") && err.contains("nope.tsv"), "{err}");
}

#[test]
fn format_version_mismatch_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    small_run(tmp.path());
    let dir = tmp.path().to_str().unwrap();

    let meta_path = tmp.path().join("matrix.meta.json");
    let meta = fs::read_to_string(&meta_path).unwrap();
    fs::write(&meta_path, meta.replacen("\"format_version\": \"1\"", "\"format_version\": \"9\"", 1)).unwrap();
    let out = pstate(&["rank", "--input", dir]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format version `9`"));

    let events_path = tmp.path().join("events.tsv");
    let events = fs::read_to_string(&events_path).unwrap();
    fs::write(&events_path, events.replacen("\tv1", "\tv7", 1)).unwrap();
    let out = pstate(&["validate", "--events", events_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("v7"));

    let index_path = tmp.path().join("models_lab_order.json");
    let index = fs::read_to_string(&index_path).unwrap();
    fs::write(&index_path, index.replacen("\"format_version\": \"1\"", "\"format_version\": \"2\"", 1)).unwrap();
    let out = pstate(&["evaluate", "--input", dir, "--models", index_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format version `2`"));
}

#[test]
fn bad_flags_fail() {
    assert!(!pstate(&["rank", "--no-such-flag"]).status.success());
    assert!(!pstate(&["frobnicate"]).status.success());
    let out = pstate(&["rank", "--decision", "lab_order"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lab_order:ID"));
}

#[test]
fn validate_accepts_generated_events() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&["synth", "--patients", "5", "--out", tmp.path().to_str().unwrap()]);
    let out = ok(&["validate", "--events", tmp.path().join("events.tsv").to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid; 5 patients"));
}

const SUBCOMMANDS: &[&str] = &[
    "synth", "validate", "segment", "featurize", "rank", "histogram", "train", "evaluate", "report", "pipeline",
];

/// `UPDATE_SNAPSHOTS=1 cargo test -p pstate-cli --test cli` rewrites the snapshots.
#[test]
fn help_matches_snapshots() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    let mut cases: Vec<(String, Vec<&str>)> = vec![("pstate".into(), vec!["--help"])];
    for s in SUBCOMMANDS {
        cases.push((s.to_string(), vec![s, "--help"]));
    }
    for (name, args) in cases {
        let help = String::from_utf8(ok(&args).stdout).unwrap();
        let path = dir.join(format!("{name}.help.txt"));
        if update {
            fs::create_dir_all(&dir).unwrap();
            fs::write(&path, &help).unwrap();
            continue;
        }
        let want = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing snapshot {}", path.display()));
        assert_eq!(help, want, "{name} --help changed; rerun with UPDATE_SNAPSHOTS=1");
    }
}

#[test]
fn help_lists_defaults() {
    let help = String::from_utf8(ok(&["pipeline", "--help"]).stdout).unwrap();
    for flag in ["--seed", "--jobs", "--out", "--format", "--train-count", "--train-fraction", "--k", "--min-support"] {
        assert!(help.contains(flag), "{flag}");
    }
    assert!(help.contains("[default: 1,3,30]"));
    assert!(help.contains("[default: 0.65]"));
}

#[test]
fn staged_temporal_histogram_matches_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_str().unwrap();
    let events = tmp.path().join("events.tsv");
    let instances = tmp.path().join("instances.tsv");
    ok(&["synth", "--seed", "42", "--out", dir]);
    ok(&["segment", "--events", events.to_str().unwrap(), "--out", dir]);
    ok(&["featurize", "--events", events.to_str().unwrap(), "--instances", instances.to_str().unwrap(), "--out", dir]);
    ok(&[
        "histogram", "--input", dir, "--grouping", "temporal40", "--scope", "same_variable_only", "--kind", "lab_order",
        "--out", dir,
    ]);

    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("ground_truth.json")).unwrap()).unwrap();
    let expected = truth
        .as_object()
        .unwrap()
        .values()
        .filter(|e| e["scope"] == "same_variable_only" && e["temporal_category"] == "F19")
        .count();
    let table = fs::read_to_string(tmp.path().join("histogram_lab_order_temporal40_same_variable_only.tsv")).unwrap();
    let f19: usize = table
        .lines()
        .find(|l| l.starts_with("F19\t"))
        .map_or(0, |l| l.rsplit('\t').next().unwrap().parse().unwrap());
    assert!(expected > 0);
    assert!(f19 * 5 >= expected * 4, "F19 best for {f19} of {expected} routine labs");
    assert!(tmp.path().join("manifest.histogram_lab_order_temporal40_same_variable_only.json").is_file());
}
