//! End-to-end tests of the command-line interface: exit codes, file
//! conventions, determinism and schema validity of the emitted JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ghdrs"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates a small deterministic cohort once per test that needs ink.
fn synth_cohort_sized(dir: &Path, seed: u64, intact: usize, injected: usize) -> PathBuf {
    let rec = dir.join("rec");
    let out = run(&[
        "synth",
        "--cohort",
        "--output-dir",
        path_str(&rec),
        "--grades",
        "2",
        "--intact",
        &intact.to_string(),
        "--inject",
        &format!("slow={injected}"),
        "--tasks",
        "TSK5",
        "--compact",
        "--seed",
        &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "synth failed: {}", stderr(&out));
    rec
}

fn synth_cohort(dir: &Path, seed: u64) -> PathBuf {
    synth_cohort_sized(dir, seed, 4, 2)
}

fn recording_files(rec: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(rec)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map(|e| e == "txt").unwrap_or(false))
        .collect();
    files.sort();
    files
}

// ---------------------------------------------------------------------------
// schema validation helpers
// ---------------------------------------------------------------------------

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

struct LocalSchemas;

impl jsonschema::Retrieve for LocalSchemas {
    fn retrieve(
        &self,
        uri: &jsonschema::Uri<String>,
    ) -> Result<serde_json::Value, Box<dyn std::error::Error + Send + Sync>> {
        let name = uri.path().as_str().rsplit('/').next().unwrap().to_string();
        let text = fs::read_to_string(schema_dir().join(&name))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn assert_valid(schema_file: &str, instance: &serde_json::Value) {
    let schema: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(schema_dir().join(schema_file)).unwrap())
            .unwrap();
    let validator = jsonschema::options()
        .with_retriever(LocalSchemas)
        .build(&schema)
        .expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(instance).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_file}: {errors:?}");
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

#[test]
fn extract_writes_one_row_per_recording() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 11);
    let files = recording_files(&rec);
    let csv = dir.path().join("features.csv");
    let json = dir.path().join("features.json");

    let mut args = vec!["extract"];
    args.extend(files.iter().map(|p| path_str(p)));
    let manifest = rec.join("manifest.csv");
    args.extend([
        "--manifest",
        path_str(&manifest),
        "--output",
        path_str(&csv),
        "--json",
        path_str(&json),
    ]);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let csv_text = fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().count(), files.len() + 1, "header plus one row per file");

    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), files.len());
    assert_valid("features.schema.json", &parsed);
}

#[test]
fn extract_reports_corrupt_files_and_keeps_good_ones() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 12);
    let good = recording_files(&rec)[0].clone();
    let corrupt = dir.path().join("BAD_TSK5.txt");
    fs::write(&corrupt, "3\n1 2 notanumber\n").unwrap();
    let csv = dir.path().join("features.csv");

    let out = run(&[
        "extract",
        path_str(&good),
        path_str(&corrupt),
        "--output",
        path_str(&csv),
    ]);
    assert_eq!(code(&out), 2, "partial failure exit code");
    assert!(
        stderr(&out).contains("BAD_TSK5.txt"),
        "diagnostic names the corrupt file: {}",
        stderr(&out)
    );
    let csv_text = fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().count(), 2, "the good recording still produced a row");
}

#[test]
fn extract_output_is_byte_identical_on_repeat() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 13);
    let files = recording_files(&rec);
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let json = dir.path().join(name);
        let mut args = vec!["extract"];
        args.extend(files.iter().map(|p| path_str(p)));
        args.extend(["--json", path_str(&json), "--output"]);
        let csv = dir.path().join(format!("{name}.csv"));
        args.push(path_str(&csv));
        let out = run(&args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        outputs.push((fs::read(&json).unwrap(), fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1], "repeat extraction is byte-identical");
}

#[test]
fn extract_without_files_is_a_usage_error() {
    assert_eq!(code(&run(&["extract"])), 1);
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(code(&run(&["extract", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

// ---------------------------------------------------------------------------
// fit-norms / score round trip
// ---------------------------------------------------------------------------

/// One selection that the tooth-trace cohort can always support.
const SELECTIONS: &str = r#"[
  {"manifestation": "HigherDurationOfWriting", "feature": "DUR", "task": "TSK5", "weight": 1}
]"#;

fn extract_features(dir: &Path, rec: &Path) -> PathBuf {
    let json = dir.join("features.json");
    let csv = dir.join("features.csv");
    let manifest = rec.join("manifest.csv");
    let files = recording_files(rec);
    let mut args = vec!["extract"];
    args.extend(files.iter().map(|p| path_str(p)));
    args.extend([
        "--manifest",
        path_str(&manifest),
        "--json",
        path_str(&json),
        "--output",
        path_str(&csv),
    ]);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    json
}

fn fit_norms(dir: &Path, features: &Path, extra: &[&str]) -> (PathBuf, Output) {
    let selections = dir.join("selections.json");
    fs::write(&selections, SELECTIONS).unwrap();
    let norms = dir.join("norms.json");
    let mut args = vec![
        "fit-norms",
        "--features",
        path_str(features),
        "--selections",
        path_str(&selections),
        "--output",
        path_str(&norms),
    ];
    if !extra.contains(&"--min-intact") {
        args.extend(["--min-intact", "4"]);
    }
    args.extend(extra);
    let out = run(&args);
    (norms, out)
}

#[test]
fn fit_norms_and_score_round_trip() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 21);
    let features = extract_features(dir.path(), &rec);
    let (norms, out) = fit_norms(dir.path(), &features, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&norms).unwrap()).unwrap();
    assert_valid("norm-table.schema.json", &table);
    assert_eq!(table["entries"].as_array().unwrap().len(), 1);

    // score the injected subject; flagged output still exits 0
    let manifest = rec.join("manifest.csv");
    let profiles = dir.path().join("profiles");
    let subject = rec.join("S2004_TSK5.txt");
    let out = run(&[
        "score",
        path_str(&subject),
        "--norms",
        path_str(&norms),
        "--manifest",
        path_str(&manifest),
        "--output-dir",
        path_str(&profiles),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let profile: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(profiles.join("S2004.profile.json")).unwrap())
            .unwrap();
    assert_valid("profile.schema.json", &profile);
    assert!(profiles.join("S2004.profile.svg").exists());
    let duration = &profile["manifestations"][0];
    assert_eq!(duration["manifestation"], "HigherDurationOfWriting");
    assert_eq!(duration["flagged"], true, "the slowed subject is flagged on duration");
    let hdc = profile["hdc"].as_u64().unwrap();
    assert!(hdc >= 2, "an injected subject with a poor rating scores at least 2, got {hdc}");
}

#[test]
fn score_json_only_suppresses_svg() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 22);
    let features = extract_features(dir.path(), &rec);
    let (norms, out) = fit_norms(dir.path(), &features, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = rec.join("manifest.csv");
    let profiles = dir.path().join("profiles");
    let subject = rec.join("S2000_TSK5.txt");
    let out = run(&[
        "score",
        path_str(&subject),
        "--norms",
        path_str(&norms),
        "--manifest",
        path_str(&manifest),
        "--output-dir",
        path_str(&profiles),
        "--json-only",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(profiles.join("S2000.profile.json").exists());
    assert!(!profiles.join("S2000.profile.svg").exists());
}

#[test]
fn score_refuses_mismatched_configuration() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 23);
    let features = extract_features(dir.path(), &rec);
    let (norms, out) = fit_norms(dir.path(), &features, &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    // a different extraction configuration must be refused with exit 3
    let config = dir.path().join("config.json");
    let mut altered = ghdrs::catalog::FeatureConfig::default();
    altered.entropy_bins = 32;
    fs::write(&config, serde_json::to_string(&altered).unwrap()).unwrap();
    let manifest = rec.join("manifest.csv");
    let profiles = dir.path().join("profiles");
    let subject = rec.join("S2000_TSK5.txt");
    let out = run(&[
        "score",
        path_str(&subject),
        "--norms",
        path_str(&norms),
        "--manifest",
        path_str(&manifest),
        "--config",
        path_str(&config),
        "--output-dir",
        path_str(&profiles),
    ]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn threshold_override_is_applied_and_audited() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 24);
    let features = extract_features(dir.path(), &rec);
    let (norms, out) = fit_norms(
        dir.path(),
        &features,
        &[
            "--override-threshold",
            "HigherDurationOfWriting=2.5",
            "--author",
            "reviewer",
            "--reason",
            "small pilot cohort",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&norms).unwrap()).unwrap();
    assert_valid("norm-table.schema.json", &table);
    let entry = &table["entries"][0];
    assert_eq!(entry["threshold"].as_f64().unwrap(), 2.5);
    let audit = &entry["threshold_override"];
    assert_eq!(audit["author"], "reviewer");
    assert_eq!(audit["reason"], "small pilot cohort");
    assert!(audit["original"].is_number());
}

#[test]
fn fit_norms_with_too_few_intact_fails_partially() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort(dir.path(), 25);
    let features = extract_features(dir.path(), &rec);
    let (_, out) = fit_norms(dir.path(), &features, &["--min-intact", "100"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

// ---------------------------------------------------------------------------
// select
// ---------------------------------------------------------------------------

#[test]
fn select_emits_schema_valid_selections() {
    let dir = TempDir::new().unwrap();
    let rec = synth_cohort_sized(dir.path(), 26, 8, 4);
    let features = extract_features(dir.path(), &rec);
    let labels = dir.path().join("labels.csv");
    let mut text = String::from("subject,intact,group\n");
    for (i, line) in fs::read_to_string(rec.join("manifest.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .enumerate()
    {
        let cols: Vec<&str> = line.split(',').collect();
        let intact = if cols[3].parse::<u8>().unwrap() <= 1 { 1 } else { 0 };
        text.push_str(&format!("{},{},{}\n", cols[0], intact, i % 2));
    }
    fs::write(&labels, text).unwrap();
    let selections = dir.path().join("selections.json");
    let out = run(&[
        "select",
        "--features",
        path_str(&features),
        "--labels",
        path_str(&labels),
        "--grid",
        "25",
        "--output",
        path_str(&selections),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&selections).unwrap()).unwrap();
    assert_valid("selections.schema.json", &parsed);
    assert!(
        !parsed["selections"].as_array().unwrap().is_empty(),
        "the slowed cohort yields at least one selection"
    );
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

#[test]
fn synth_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let a = synth_cohort(&dir.path().join("a"), 31);
    let b = synth_cohort(&dir.path().join("b"), 31);
    let c = synth_cohort(&dir.path().join("c"), 32);
    let read_all = |rec: &Path| {
        let mut blobs = vec![fs::read(rec.join("manifest.csv")).unwrap()];
        blobs.extend(recording_files(rec).iter().map(|p| fs::read(p).unwrap()));
        blobs
    };
    assert_eq!(read_all(&a), read_all(&b), "same seed gives identical bytes");
    assert_ne!(read_all(&a), read_all(&c), "different seed gives different ink");
}

#[test]
fn synth_single_recording_with_knob() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("single");
    let out = run(&[
        "synth",
        "--output-dir",
        path_str(&out_dir),
        "--task",
        "TSK1",
        "--knob",
        "unstable-pressure",
        "--severity",
        "1.2",
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("SYN000_TSK1.txt").exists());
    let bad = run(&["synth", "--output-dir", path_str(&out_dir), "--task", "TSK1", "--knob", "nope"]);
    assert_eq!(code(&bad), 1, "unknown knob is a usage error");
}

// ---------------------------------------------------------------------------
// hdc
// ---------------------------------------------------------------------------

#[test]
fn hdc_appends_the_criterion_column() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "subject,oee,hpsq\nA,3,25\nB,0,5\nC,4,30\nD,4,10\nE,3,18\n").unwrap();
    let out = run(&["hdc", path_str(&labels)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "subject,oee,hpsq,hdc");
    assert_eq!(lines[1], "A,3,25,2");
    assert_eq!(lines[2], "B,0,5,0");
    assert_eq!(lines[3], "C,4,30,3");
    assert_eq!(lines[4], "D,4,10,2");
    assert_eq!(lines[5], "E,3,18,1");
}

#[test]
fn hdc_handles_empty_input_and_bad_rows() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = run(&["hdc", path_str(&empty)]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "subject,oee,hpsq\nA,7,0\nB,2,3\n").unwrap();
    let out = run(&["hdc", path_str(&bad)]);
    assert_eq!(code(&out), 2, "out-of-range expert rating fails the row");
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(stdout.contains("B,2,3,0"), "good rows are still emitted: {stdout}");
}
