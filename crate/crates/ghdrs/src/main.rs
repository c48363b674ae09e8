//! Command-line surface of the assessment pipeline: extraction, norm
//! fitting, component derivation, feature selection, scoring, synthetic
//! corpus generation and the handwriting-disabilities criterion.
//!
//! Exit codes: 0 ok, 1 usage error, 2 partial data failure, 3 missing
//! norms or configuration mismatch.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ghdrs::catalog::{
    extract_all, manifestation_candidates, to_csv, FeatureConfig, FeatureKey, FeatureVector,
    ManifestationId,
};
use ghdrs::ink::{
    parse_recording, serialize_recording, DeviceProfile, InkRecording, Sex, SubjectMeta, TaskKind,
};
use ghdrs::modeling::{
    grid_search_logo, pair_task, pca_promax, select_feature, derive_weights, SelectionConfig,
    log_spaced_grid,
};
use ghdrs::scoring::{
    assemble_profile, fit_norms, hdc, override_threshold, render_svg, ComponentId, ComponentModel,
    FitReport, HdcInput, NormTable, ScoringError, Selection, DEFAULT_MIN_INTACT,
};
use ghdrs::synth::{
    apply_manifestation, generate, generate_cohort, manifest_csv, CohortSpec, Knob, SynthConfig,
};

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_NORMS: u8 = 3;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
    fn partial(message: impl Into<String>) -> Self {
        CliError { code: EXIT_PARTIAL, message: message.into() }
    }
    fn norms(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NORMS, message: message.into() }
    }
    fn from_scoring(e: ScoringError) -> Self {
        match e {
            ScoringError::NoNorms(_) | ScoringError::ConfigMismatch { .. } => {
                CliError::norms(e.to_string())
            }
            _ => CliError::partial(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "ghdrs",
    version,
    about = "Graphomotor and handwriting assessment pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract the feature catalog from recording files
    Extract(ExtractArgs),
    /// Fit grade-wise normative entries from extracted features
    FitNorms(FitNormsArgs),
    /// Derive global components from scaled features and a norm table
    Components(ComponentsArgs),
    /// Run the model-based feature/task selection over a labeled corpus
    Select(SelectArgs),
    /// Score recordings against a norm table, emitting profile JSON and SVG
    Score(ScoreArgs),
    /// Generate synthetic recordings or a labeled cohort
    Synth(SynthArgs),
    /// Compute the handwriting-disabilities criterion for a labels CSV
    Hdc(HdcArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Recording files named `<subject>_<TASK>.txt`
    files: Vec<PathBuf>,
    /// Device profile (`key = value` lines); identity when omitted
    #[arg(long)]
    device_profile: Option<PathBuf>,
    /// Feature configuration JSON; defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Cohort manifest CSV supplying grade/OEE/HPSQ per subject
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Grade for subjects absent from the manifest
    #[arg(long, default_value_t = 0)]
    grade: u8,
    /// Write the feature CSV here instead of stdout
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the feature vectors as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct FitNormsArgs {
    /// Feature vectors JSON produced by `extract --json`
    #[arg(long)]
    features: PathBuf,
    /// Selections JSON (array or `select` output)
    #[arg(long)]
    selections: PathBuf,
    /// Labels CSV with `subject,intact` columns; defaults to OEE <= 1
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Fit only this grade; all grades present when omitted
    #[arg(long)]
    grade: Option<u8>,
    #[arg(long, default_value_t = DEFAULT_MIN_INTACT)]
    min_intact: usize,
    /// Threshold override `Manifestation=value` (repeatable)
    #[arg(long = "override-threshold")]
    overrides: Vec<String>,
    /// Author recorded with each override
    #[arg(long)]
    author: Option<String>,
    /// Reason recorded with each override
    #[arg(long)]
    reason: Option<String>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ComponentsArgs {
    #[arg(long)]
    features: PathBuf,
    /// Norm table to read entries from and append components to
    #[arg(long)]
    norms: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output norm table; the input is overwritten when omitted
    #[arg(long)]
    output: Option<PathBuf>,
    /// Optional PCA audit JSON (eigenvalues, loadings)
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    features: PathBuf,
    /// Labels CSV with `subject,intact[,group]` columns
    #[arg(long)]
    labels: PathBuf,
    /// Size of the logarithmic regularization grid
    #[arg(long, default_value_t = 250)]
    grid: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    /// Recording files named `<subject>_<TASK>.txt`, any number of subjects
    files: Vec<PathBuf>,
    #[arg(long)]
    norms: PathBuf,
    #[arg(long)]
    device_profile: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    grade: u8,
    #[arg(long)]
    output_dir: PathBuf,
    /// Suppress the SVG report
    #[arg(long)]
    json_only: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Single-recording mode: the task to draw
    #[arg(long)]
    task: Option<String>,
    /// Manifestation knob applied to the single recording
    #[arg(long)]
    knob: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    severity: f64,
    /// Cohort mode
    #[arg(long)]
    cohort: bool,
    /// Comma-separated grades, e.g. `0,1,2`
    #[arg(long, default_value = "2")]
    grades: String,
    #[arg(long, default_value_t = 25)]
    intact: usize,
    /// Injections per grade, e.g. `slow=3,overwriting=2`
    #[arg(long, default_value = "")]
    inject: String,
    /// Comma-separated tasks for the cohort
    #[arg(long, default_value = "TSK1,TSK8")]
    tasks: String,
    /// Shrink task geometry for faster extraction
    #[arg(long)]
    compact: bool,
}

#[derive(Args)]
struct HdcArgs {
    /// Labels CSV with `oee` and `hpsq` columns
    labels: PathBuf,
    /// Output CSV with an appended `hdc` column; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Extract(args) => cmd_extract(args),
        Command::FitNorms(args) => cmd_fit_norms(args),
        Command::Components(args) => cmd_components(args),
        Command::Select(args) => cmd_select(args),
        Command::Score(args) => cmd_score(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Hdc(args) => cmd_hdc(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ghdrs: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

// ---------------------------------------------------------------------------
// shared input helpers
// ---------------------------------------------------------------------------

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::usage(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::partial(format!("cannot write {}: {e}", path.display())))
}

fn load_device_profile(path: Option<&PathBuf>) -> Result<DeviceProfile, CliError> {
    match path {
        None => Ok(DeviceProfile::default()),
        Some(p) => DeviceProfile::parse(&read_to_string(p)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
    }
}

fn load_feature_config(path: Option<&PathBuf>) -> Result<FeatureConfig, CliError> {
    match path {
        None => Ok(FeatureConfig::default()),
        Some(p) => serde_json::from_str(&read_to_string(p)?)
            .map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
    }
}

fn load_features(path: &Path) -> Result<Vec<FeatureVector>, CliError> {
    serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// `<subject>_<TASK>` naming convention for recording files.
fn parse_file_name(path: &Path) -> Option<(String, TaskKind)> {
    let stem = path.file_stem()?.to_str()?;
    let (subject, task) = stem.rsplit_once('_')?;
    Some((subject.to_string(), TaskKind::parse(task)?))
}

/// Tiny CSV reader: header row, comma separator, no quoting.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = match lines.next() {
        None => return Ok((Vec::new(), Vec::new())),
        Some(h) => h.split(',').map(|c| c.trim().to_lowercase()).collect(),
    };
    let rows = lines
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect())
        .collect();
    Ok((header, rows))
}

fn column<'a>(header: &[String], rows: &'a [Vec<String>], name: &str) -> Option<Vec<&'a str>> {
    let idx = header.iter().position(|h| h == name)?;
    Some(rows.iter().map(|r| r.get(idx).map(|s| s.as_str()).unwrap_or("")).collect())
}

struct ManifestRow {
    grade: u8,
    sex: Sex,
    oee: Option<u8>,
    hpsq: Option<u32>,
}

fn load_manifest(path: Option<&PathBuf>) -> Result<BTreeMap<String, ManifestRow>, CliError> {
    let mut out = BTreeMap::new();
    let Some(path) = path else { return Ok(out) };
    let (header, rows) = read_csv(path)?;
    let find = |name: &str| header.iter().position(|h| h == name);
    let (si, gi) = match (find("subject"), find("grade")) {
        (Some(s), Some(g)) => (s, g),
        _ => return Err(CliError::usage("manifest needs `subject` and `grade` columns")),
    };
    for row in &rows {
        let grade = row[gi]
            .parse()
            .map_err(|_| CliError::usage(format!("bad grade `{}` in manifest", row[gi])))?;
        let sex = match find("sex").and_then(|i| row.get(i)).map(|s| s.as_str()) {
            Some("F") => Sex::Female,
            Some("M") => Sex::Male,
            _ => Sex::Unknown,
        };
        let cell = |i: Option<usize>| i.and_then(|i| row.get(i));
        out.insert(
            row[si].clone(),
            ManifestRow {
                grade,
                sex,
                oee: cell(find("oee")).and_then(|v| v.parse().ok()),
                hpsq: cell(find("hpsq")).and_then(|v| v.parse().ok()),
            },
        );
    }
    Ok(out)
}

fn subject_meta(
    id: &str,
    manifest: &BTreeMap<String, ManifestRow>,
    default_grade: u8,
) -> SubjectMeta {
    match manifest.get(id) {
        Some(m) => SubjectMeta {
            id: id.to_string(),
            grade: m.grade,
            sex: m.sex,
            oee: m.oee,
            hpsq_total: m.hpsq,
        },
        None => SubjectMeta { id: id.to_string(), ..SubjectMeta::anonymous(default_grade) },
    }
}

fn read_recordings(
    files: &[PathBuf],
    profile: &DeviceProfile,
    manifest: &BTreeMap<String, ManifestRow>,
    default_grade: u8,
) -> (Vec<InkRecording>, Vec<String>) {
    let mut recordings = Vec::new();
    let mut failures = Vec::new();
    for path in files {
        let Some((subject, task)) = parse_file_name(path) else {
            failures.push(format!("{}: file name is not `<subject>_<TASK>`", path.display()));
            continue;
        };
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                failures.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        match parse_recording(&text, profile, task, subject_meta(&subject, manifest, default_grade))
        {
            Ok(rec) => recordings.push(rec),
            Err(e) => failures.push(format!("{}: {e}", path.display())),
        }
    }
    recordings.sort_by(|a, b| {
        (a.subject.id.clone(), a.task.index()).cmp(&(b.subject.id.clone(), b.task.index()))
    });
    (recordings, failures)
}

/// Intact mask from a labels CSV, falling back to OEE <= 1.
fn intact_mask(
    vectors: &[FeatureVector],
    labels: Option<&PathBuf>,
) -> Result<Vec<bool>, CliError> {
    match labels {
        None => Ok(vectors
            .iter()
            .map(|v| v.subject.oee.map(|o| o <= 1).unwrap_or(true))
            .collect()),
        Some(path) => {
            let (header, rows) = read_csv(path)?;
            let subjects = column(&header, &rows, "subject")
                .ok_or_else(|| CliError::usage("labels need a `subject` column"))?;
            let intact = column(&header, &rows, "intact")
                .ok_or_else(|| CliError::usage("labels need an `intact` column"))?;
            let map: BTreeMap<&str, bool> = subjects
                .iter()
                .zip(&intact)
                .map(|(s, v)| (*s, matches!(*v, "1" | "true" | "yes")))
                .collect();
            vectors
                .iter()
                .map(|v| {
                    map.get(v.subject.id.as_str()).copied().ok_or_else(|| {
                        CliError::usage(format!("subject `{}` missing from labels", v.subject.id))
                    })
                })
                .collect()
        }
    }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn cmd_extract(args: ExtractArgs) -> Result<(), CliError> {
    if args.files.is_empty() {
        return Err(CliError::usage("no recording files given"));
    }
    let profile = load_device_profile(args.device_profile.as_ref())?;
    let config = load_feature_config(args.config.as_ref())?;
    let manifest = load_manifest(args.manifest.as_ref())?;
    let (recordings, failures) = read_recordings(&args.files, &profile, &manifest, args.grade);
    let vectors: Vec<FeatureVector> =
        recordings.iter().map(|rec| extract_all(rec, &config)).collect();

    let csv = to_csv(&vectors);
    match &args.output {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        let json = serde_json::to_string_pretty(&vectors).expect("vectors serialize");
        write_file(path, &json)?;
    }
    for f in &failures {
        eprintln!("ghdrs: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::partial(format!(
            "{} of {} file(s) failed",
            failures.len(),
            args.files.len()
        )))
    }
}

fn parse_selections(text: &str) -> Result<Vec<Selection>, CliError> {
    // either a bare array or the `select` output object
    if let Ok(v) = serde_json::from_str::<Vec<Selection>>(text) {
        return Ok(v);
    }
    #[derive(serde::Deserialize)]
    struct Wrapped {
        selections: Vec<Selection>,
    }
    serde_json::from_str::<Wrapped>(text)
        .map(|w| w.selections)
        .map_err(|e| CliError::usage(format!("selections parse: {e}")))
}

fn cmd_fit_norms(args: FitNormsArgs) -> Result<(), CliError> {
    let vectors = load_features(&args.features)?;
    if vectors.is_empty() {
        return Err(CliError::usage("feature file contains no vectors"));
    }
    let selections = parse_selections(&read_to_string(&args.selections)?)?;
    let intact = intact_mask(&vectors, args.labels.as_ref())?;
    let config_hash = vectors[0].config_hash.clone();
    if let Some(v) = vectors.iter().find(|v| v.config_hash != config_hash) {
        return Err(CliError::norms(format!(
            "feature vectors mix configuration hashes {} and {}",
            config_hash, v.config_hash
        )));
    }

    let grades: Vec<u8> = match args.grade {
        Some(g) => vec![g],
        None => {
            let mut g: Vec<u8> = vectors.iter().map(|v| v.subject.grade).collect();
            g.sort_unstable();
            g.dedup();
            g
        }
    };
    let mut entries = Vec::new();
    for &grade in &grades {
        let FitReport { entries: fitted, warnings } =
            fit_norms(&vectors, &intact, grade, &selections, args.min_intact)
                .map_err(CliError::from_scoring)?;
        for w in warnings {
            eprintln!("ghdrs: grade {grade}: {w}");
        }
        entries.extend(fitted);
    }

    for spec in &args.overrides {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("override `{spec}` is not `Name=value`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| CliError::usage(format!("override value `{value}` is not a number")))?;
        let id: ManifestationId = serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| CliError::usage(format!("unknown manifestation `{name}`")))?;
        let author = args.author.as_deref().unwrap_or("unknown");
        let reason = args
            .reason
            .as_deref()
            .ok_or_else(|| CliError::usage("--override-threshold requires --reason"))?;
        let mut hit = false;
        for entry in entries.iter_mut().filter(|e| e.manifestation == id) {
            override_threshold(entry, value, author, reason).map_err(CliError::from_scoring)?;
            hit = true;
        }
        if !hit {
            return Err(CliError::usage(format!("no fitted entry for manifestation `{name}`")));
        }
    }

    let table = NormTable::new(entries, Vec::new(), config_hash);
    write_file(&args.output, &table.to_json())
}

#[derive(Serialize)]
struct ComponentsAudit {
    eigenvalues: Vec<f64>,
    retained: usize,
    features: Vec<FeatureKey>,
    rotated_loadings: Vec<Vec<f64>>,
}

fn cmd_components(args: ComponentsArgs) -> Result<(), CliError> {
    let vectors = load_features(&args.features)?;
    let mut table =
        NormTable::from_json(&read_to_string(&args.norms)?).map_err(CliError::from_scoring)?;
    let intact = intact_mask(&vectors, args.labels.as_ref())?;

    // per subject: scaled values of each fitted entry's feature
    let mut by_subject: BTreeMap<String, (bool, BTreeMap<FeatureKey, f64>)> = BTreeMap::new();
    for (v, &ok) in vectors.iter().zip(&intact) {
        let slot = by_subject
            .entry(v.subject.id.clone())
            .or_insert_with(|| (ok, BTreeMap::new()));
        for entry in table.entries_for_grade(v.subject.grade) {
            if entry.task != v.task {
                continue;
            }
            if let Some(raw) = v.value(&entry.feature) {
                slot.1.insert(entry.feature.clone(), entry.scale(raw));
            }
        }
    }
    let mut keys: Vec<FeatureKey> = Vec::new();
    for e in &table.entries {
        if !keys.contains(&e.feature) {
            keys.push(e.feature.clone());
        }
    }
    keys.sort();
    let complete: Vec<(&bool, Vec<f64>)> = by_subject
        .values()
        .filter(|(_, m)| keys.iter().all(|k| m.contains_key(k)))
        .map(|(ok, m)| (ok, keys.iter().map(|k| m[k]).collect()))
        .collect();
    let rows: Vec<Vec<f64>> = complete
        .iter()
        .filter(|(ok, _)| **ok)
        .map(|(_, r)| r.clone())
        .collect();
    if rows.len() < keys.len() + 2 {
        return Err(CliError::partial(format!(
            "only {} complete intact subjects for {} features",
            rows.len(),
            keys.len()
        )));
    }

    let fit = pca_promax(&rows, args.seed).map_err(|e| CliError::partial(e.to_string()))?;
    let k = fit.rotated.ncols().min(ComponentId::ALL.len());
    let mut components = Vec::new();
    for (j, id) in ComponentId::ALL.iter().take(k).enumerate() {
        let loadings: Vec<f64> = (0..keys.len()).map(|i| fit.rotated[(i, j)]).collect();
        let members = match derive_weights(&loadings) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("ghdrs: component {}: {e}, dropped", id.as_str());
                continue;
            }
        };
        let members: Vec<(FeatureKey, f64)> =
            members.into_iter().map(|(i, w)| (keys[i].clone(), w)).collect();
        let scores: Vec<f64> = rows
            .iter()
            .map(|r| {
                members
                    .iter()
                    .map(|(key, w)| w * r[keys.iter().position(|k| k == key).unwrap()])
                    .sum()
            })
            .collect();
        let median = ghdrs::stats::median(&scores).map_err(|e| CliError::partial(e.to_string()))?;
        let threshold =
            ghdrs::stats::quantile(&scores, 0.95).map_err(|e| CliError::partial(e.to_string()))?;
        if threshold == median {
            eprintln!("ghdrs: component {}: threshold equals median, dropped", id.as_str());
            continue;
        }
        let model = ComponentModel {
            id: *id,
            members,
            median,
            threshold,
            config_hash: table.config_hash.clone(),
        };
        model.validate().map_err(CliError::from_scoring)?;
        components.push(model);
    }
    if components.is_empty() {
        return Err(CliError::partial("no component reached the loading threshold"));
    }
    table.components = components;

    if let Some(path) = &args.audit {
        let audit = ComponentsAudit {
            eigenvalues: fit.eigenvalues.clone(),
            retained: fit.retained,
            features: keys.clone(),
            rotated_loadings: (0..keys.len())
                .map(|i| (0..fit.rotated.ncols()).map(|j| fit.rotated[(i, j)]).collect())
                .collect(),
        };
        write_file(path, &serde_json::to_string_pretty(&audit).expect("audit serializes"))?;
    }
    let out = args.output.as_ref().unwrap_or(&args.norms);
    write_file(out, &table.to_json())
}

#[derive(Serialize)]
struct TaskModelAudit {
    task: TaskKind,
    best_c: f64,
    mean_bacc: f64,
    weights: Vec<f64>,
}

#[derive(Serialize)]
struct ManifestationAudit {
    manifestation: ManifestationId,
    features: Vec<FeatureKey>,
    task_models: Vec<TaskModelAudit>,
    rho_by_task: Vec<(TaskKind, f64)>,
    warnings: Vec<String>,
}

#[derive(Serialize)]
struct SelectOutput {
    selections: Vec<Selection>,
    audit: Vec<ManifestationAudit>,
}

fn cmd_select(args: SelectArgs) -> Result<(), CliError> {
    let vectors = load_features(&args.features)?;
    let (header, rows) = read_csv(&args.labels)?;
    let subjects = column(&header, &rows, "subject")
        .ok_or_else(|| CliError::usage("labels need a `subject` column"))?;
    let intact_col = column(&header, &rows, "intact")
        .ok_or_else(|| CliError::usage("labels need an `intact` column"))?;
    let group_col = column(&header, &rows, "group");
    let mut label_map: BTreeMap<&str, (bool, usize)> = BTreeMap::new();
    for (i, s) in subjects.iter().enumerate() {
        let intact = matches!(intact_col[i], "1" | "true" | "yes");
        let group = group_col
            .as_ref()
            .and_then(|g| g[i].parse().ok())
            .unwrap_or(i % 4);
        label_map.insert(s, (intact, group));
    }

    let mut config = SelectionConfig::default();
    if args.grid != config.grid.len() {
        config.grid = log_spaced_grid(args.grid.max(2), -2.0, 0.25);
    }
    config.seed = args.seed;

    let mut selections = Vec::new();
    let mut audits = Vec::new();
    for spec in manifestation_candidates() {
        let features = spec.candidate_features();
        let mut task_models = Vec::new();
        let mut warnings = Vec::new();
        for task in spec.candidate_tasks() {
            let mut x = Vec::new();
            let mut y = Vec::new();
            let mut groups = Vec::new();
            for v in vectors.iter().filter(|v| v.task == task) {
                let Some(&(intact, group)) = label_map.get(v.subject.id.as_str()) else {
                    continue;
                };
                let row: Option<Vec<f64>> = features.iter().map(|f| v.value(f)).collect();
                if let Some(row) = row {
                    x.push(row);
                    y.push(!intact);
                    groups.push(group);
                }
            }
            if x.len() < 8 || y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
                warnings.push(format!("{}: too little labeled data, task skipped", task.as_str()));
                continue;
            }
            match grid_search_logo(&x, &y, &groups, &config) {
                Ok(result) => {
                    warnings.extend(result.warnings.iter().map(|w| format!("{}: {w}", task.as_str())));
                    task_models.push(TaskModelAudit {
                        task,
                        best_c: result.best_c,
                        mean_bacc: result.best_mean_bacc,
                        weights: result.model.weights,
                    });
                }
                Err(e) => warnings.push(format!("{}: {e}", task.as_str())),
            }
        }
        if task_models.is_empty() {
            eprintln!("ghdrs: {:?}: no usable task model, skipped", spec.id);
            continue;
        }
        let weight_sets: Vec<Vec<f64>> = task_models.iter().map(|m| m.weights.clone()).collect();
        let winner = match select_feature(&features, &weight_sets) {
            Ok(w) => w,
            Err(e) => {
                eprintln!("ghdrs: {:?}: {e}, skipped", spec.id);
                continue;
            }
        };
        let candidate = spec
            .candidates
            .iter()
            .find(|c| c.feature == winner)
            .expect("winner comes from the candidate list");

        // pair the winning feature with a task on the intact trend
        let mut trend_candidates = Vec::new();
        for &task in &candidate.tasks {
            let samples: Vec<(u8, f64)> = vectors
                .iter()
                .filter(|v| v.task == task)
                .filter(|v| label_map.get(v.subject.id.as_str()).map(|l| l.0).unwrap_or(false))
                .filter_map(|v| {
                    v.value(&winner)
                        .map(|raw| (v.subject.grade, candidate.polarity as f64 * raw))
                })
                .collect();
            if !samples.is_empty() {
                trend_candidates.push((task, samples));
            }
        }
        let (task, rho_by_task, trend_warnings) = match pair_task(&trend_candidates) {
            Ok(p) => (p.task, p.rho_by_task, p.warnings),
            Err(e) => {
                // fall back to the task whose model weighs the winner highest
                let fi = features.iter().position(|f| *f == winner).unwrap();
                let best = task_models
                    .iter()
                    .max_by(|a, b| {
                        a.weights[fi].abs().partial_cmp(&b.weights[fi].abs()).unwrap()
                    })
                    .unwrap();
                (
                    best.task,
                    Vec::new(),
                    vec![format!("trend pairing failed ({e}), using the strongest task model")],
                )
            }
        };
        let mut warnings = warnings;
        warnings.extend(trend_warnings);
        selections.push(Selection {
            manifestation: spec.id,
            feature: winner.clone(),
            task,
            weight: candidate.polarity,
        });
        audits.push(ManifestationAudit {
            manifestation: spec.id,
            features,
            task_models,
            rho_by_task,
            warnings,
        });
    }

    let out = SelectOutput { selections, audit: audits };
    write_file(&args.output, &serde_json::to_string_pretty(&out).expect("output serializes"))
}

fn cmd_score(args: ScoreArgs) -> Result<(), CliError> {
    if args.files.is_empty() {
        return Err(CliError::usage("no recording files given"));
    }
    let table =
        NormTable::from_json(&read_to_string(&args.norms)?).map_err(CliError::from_scoring)?;
    let profile = load_device_profile(args.device_profile.as_ref())?;
    let config = load_feature_config(args.config.as_ref())?;
    if config.hash() != table.config_hash {
        return Err(CliError::norms(format!(
            "feature configuration hash {} does not match the norm table's {}",
            config.hash(),
            table.config_hash
        )));
    }
    let manifest = load_manifest(args.manifest.as_ref())?;
    let (recordings, failures) = read_recordings(&args.files, &profile, &manifest, args.grade);
    if recordings.is_empty() {
        for f in &failures {
            eprintln!("ghdrs: {f}");
        }
        return Err(CliError::partial("no readable recordings"));
    }

    let mut by_subject: BTreeMap<String, Vec<FeatureVector>> = BTreeMap::new();
    for rec in &recordings {
        by_subject
            .entry(rec.subject.id.clone())
            .or_default()
            .push(extract_all(rec, &config));
    }
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", args.output_dir.display())))?;
    for (subject, vectors) in &by_subject {
        let result = assemble_profile(vectors, &table).map_err(CliError::from_scoring)?;
        let json = serde_json::to_string_pretty(&result).expect("profile serializes");
        write_file(&args.output_dir.join(format!("{subject}.profile.json")), &json)?;
        if !args.json_only {
            let svg = render_svg(&result, &table);
            write_file(&args.output_dir.join(format!("{subject}.profile.svg")), &svg)?;
        }
    }
    for f in &failures {
        eprintln!("ghdrs: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::partial(format!("{} recording(s) failed to parse", failures.len())))
    }
}

fn parse_task_list(text: &str) -> Result<Vec<TaskKind>, CliError> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            TaskKind::parse(s.trim()).ok_or_else(|| CliError::usage(format!("unknown task `{s}`")))
        })
        .collect()
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", args.output_dir.display())))?;

    if !args.cohort {
        let task_name = args
            .task
            .as_deref()
            .ok_or_else(|| CliError::usage("single mode needs --task (or use --cohort)"))?;
        let task = TaskKind::parse(task_name)
            .ok_or_else(|| CliError::usage(format!("unknown task `{task_name}`")))?;
        let config = SynthConfig::for_task(task, args.seed);
        let mut rec = generate(&config).map_err(|e| CliError::usage(e.to_string()))?;
        if let Some(knob) = &args.knob {
            let knob = Knob::parse(knob).map_err(|e| CliError::usage(e.to_string()))?;
            rec = apply_manifestation(&rec, knob, args.severity, args.seed)
                .map_err(|e| CliError::usage(e.to_string()))?;
        }
        rec.subject.id = "SYN000".into();
        let path = args.output_dir.join(format!("SYN000_{}.txt", task.as_str()));
        return write_file(&path, &serialize_recording(&rec));
    }

    let grades: Vec<u8> = args
        .grades
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| CliError::usage(format!("bad grade `{s}`"))))
        .collect::<Result<_, _>>()?;
    let mut injected = Vec::new();
    for part in args.inject.split(',').filter(|s| !s.trim().is_empty()) {
        let (knob, count) = part
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("injection `{part}` is not `knob=count`")))?;
        let knob = Knob::parse(knob.trim()).map_err(|e| CliError::usage(e.to_string()))?;
        let count = count
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("bad injection count in `{part}`")))?;
        injected.push((knob, count));
    }
    let spec = CohortSpec {
        grades,
        intact_per_grade: args.intact,
        injected_per_grade: injected,
        tasks: parse_task_list(&args.tasks)?,
        seed: args.seed,
        compact: args.compact,
    };
    let subjects = generate_cohort(&spec).map_err(|e| CliError::usage(e.to_string()))?;
    for s in &subjects {
        for rec in &s.recordings {
            let path = args
                .output_dir
                .join(format!("{}_{}.txt", s.meta.id, rec.task.as_str()));
            write_file(&path, &serialize_recording(rec))?;
        }
    }
    write_file(&args.output_dir.join("manifest.csv"), &manifest_csv(&subjects))
}

fn cmd_hdc(args: HdcArgs) -> Result<(), CliError> {
    let (header, rows) = read_csv(&args.labels)?;
    let mut out = String::new();
    let mut failures = Vec::new();
    if !header.is_empty() {
        let oee_idx = header
            .iter()
            .position(|h| h == "oee")
            .ok_or_else(|| CliError::usage("labels need an `oee` column"))?;
        let hpsq_idx = header.iter().position(|h| h == "hpsq");
        out.push_str(&header.join(","));
        out.push_str(",hdc\n");
        for (n, row) in rows.iter().enumerate() {
            let oee: u8 = match row.get(oee_idx).and_then(|v| v.parse().ok()) {
                Some(v) => v,
                None => {
                    failures.push(format!("row {}: bad oee value", n + 2));
                    continue;
                }
            };
            let hpsq = hpsq_idx.and_then(|i| row.get(i)).and_then(|v| v.parse().ok());
            match hdc(HdcInput { oee, hpsq_total: hpsq }) {
                Ok(value) => {
                    out.push_str(&row.join(","));
                    out.push_str(&format!(",{value}\n"));
                }
                Err(e) => failures.push(format!("row {}: {e}", n + 2)),
            }
        }
    }
    match &args.output {
        Some(path) => write_file(path, &out)?,
        None => print!("{out}"),
    }
    for f in &failures {
        eprintln!("ghdrs: {f}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::partial(format!("{} label row(s) failed", failures.len())))
    }
}
