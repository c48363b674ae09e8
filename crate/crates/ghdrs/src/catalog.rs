//! Feature identity and notation, the manifestation-to-feature-to-task map,
//! and orchestration of full feature extraction from a recording.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::complexity::{self, BandConfig};
use crate::geometry;
use crate::ink::{segment_strokes, InkRecording, StrokeKind, SubjectMeta, TaskKind};
use crate::kinematics::{self, Scope, TimeProfile};
use crate::siglognormal::{self, FitConfig};
use crate::stats::{self, Aggregator, StatsError};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown {kind} token '{token}'")]
    UnknownToken { kind: &'static str, token: String },
    #[error("malformed feature key '{0}'")]
    Malformed(String),
}

/// Signal a feature was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Info {
    On,
    Air,
    Press,
    Tilt,
    Azim,
    None,
}

impl Info {
    pub fn as_str(&self) -> &'static str {
        match self {
            Info::On => "ON",
            Info::Air => "AIR",
            Info::Press => "PRESS",
            Info::Tilt => "TILT",
            Info::Azim => "AZIM",
            Info::None => "",
        }
    }

    fn parse(s: &str) -> Option<Info> {
        match s {
            "ON" => Some(Info::On),
            "AIR" => Some(Info::Air),
            "PRESS" => Some(Info::Press),
            "TILT" => Some(Info::Tilt),
            "AZIM" => Some(Info::Azim),
            _ => None,
        }
    }
}

/// Projection a feature was computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    Global,
    Horizontal,
    Vertical,
    None,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Global => "G",
            Direction::Horizontal => "H",
            Direction::Vertical => "V",
            Direction::None => "",
        }
    }
}

/// Every feature mnemonic the extractor can produce.
pub const MNEMONICS: &[&str] = &[
    "DUR", "DURR", "SDUR", "SDURR", "TEMPO", "NINT", "VEL", "ACC", "SNR", "nbLog", "SNR/nbLog",
    "NCV", "RNCV", "NPS", "MPSSF", "MPSTF", "LZC", "SHE", "PRESS", "TILT", "AZIM", "NCP", "NCT",
    "NCA", "NCX", "NCY", "SHEIGHT", "LMIN", "LMAX", "DLMAX", "VLMAX", "DFB", "NDFB", "DBB",
    "NIAI", "RNIAI", "NIEI", "RNIEI", "ADEN", "PDEN", "DoS", "MDS", "2ndSm", "SPI", "TGHTNS",
    "SWVI", "1stZC",
];

/// A feature identity in the `INF: DIR-FN (HL)` notation; `INF` names the
/// processed signal, `DIR` the projection, `FN` the feature mnemonic and
/// `HL` the vector-to-scalar aggregator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureKey {
    pub info: Info,
    pub direction: Direction,
    pub name: String,
    pub aggregator: Option<Aggregator>,
}

impl FeatureKey {
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        // a dynamic-signal mnemonic equal to its info token is written once
        if self.info != Info::None && self.name != self.info.as_str() {
            out.push_str(self.info.as_str());
            out.push_str(": ");
        }
        if self.direction != Direction::None {
            out.push_str(self.direction.as_str());
            out.push('-');
        }
        out.push_str(&self.name);
        if let Some(agg) = self.aggregator {
            out.push_str(" (");
            out.push_str(agg.as_str());
            out.push(')');
        }
        out
    }
}

impl fmt::Display for FeatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl Serialize for FeatureKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for FeatureKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_feature_key(&s).map_err(serde::de::Error::custom)
    }
}

pub fn parse_feature_key(s: &str) -> Result<FeatureKey, CatalogError> {
    let s = s.trim();
    let (info, rest) = match s.find(':') {
        Some(idx) => {
            let token = &s[..idx];
            let info = Info::parse(token).ok_or_else(|| CatalogError::UnknownToken {
                kind: "info",
                token: token.to_string(),
            })?;
            (info, s[idx + 1..].trim_start())
        }
        None => (Info::None, s),
    };
    let (core, aggregator) = if rest.ends_with(')') {
        let open = rest.rfind(" (").ok_or_else(|| CatalogError::Malformed(s.to_string()))?;
        let token = &rest[open + 2..rest.len() - 1];
        let agg = Aggregator::parse(token).ok_or_else(|| CatalogError::UnknownToken {
            kind: "aggregator",
            token: token.to_string(),
        })?;
        (rest[..open].trim_end(), Some(agg))
    } else {
        (rest, None)
    };
    let (direction, name) = if let Some(r) = core.strip_prefix("G-") {
        (Direction::Global, r)
    } else if let Some(r) = core.strip_prefix("H-") {
        (Direction::Horizontal, r)
    } else if let Some(r) = core.strip_prefix("V-") {
        (Direction::Vertical, r)
    } else {
        (Direction::None, core)
    };
    if !MNEMONICS.contains(&name) {
        return Err(CatalogError::UnknownToken { kind: "mnemonic", token: name.to_string() });
    }
    // a bare dynamic-signal mnemonic implies its info channel
    let info = if info == Info::None {
        match name {
            "PRESS" => Info::Press,
            "TILT" => Info::Tilt,
            "AZIM" => Info::Azim,
            _ => Info::None,
        }
    } else {
        info
    };
    Ok(FeatureKey { info, direction, name: name.to_string(), aggregator })
}

/// Why a feature value is absent from a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingReason {
    NotApplicable,
    DegenerateStatistic,
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue {
    Value(f64),
    Missing(MissingReason),
}

/// All features extracted from one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub task: TaskKind,
    pub subject: SubjectMeta,
    /// Hash of the extraction configuration; norm tables refuse vectors
    /// extracted under a different configuration.
    pub config_hash: String,
    pub values: BTreeMap<FeatureKey, FeatureValue>,
}

impl FeatureVector {
    pub fn new(task: TaskKind, subject: SubjectMeta, config_hash: String) -> Self {
        FeatureVector { task, subject, config_hash, values: BTreeMap::new() }
    }

    /// Store a value; a non-finite result is recorded as a degenerate
    /// statistic so the vector never holds NaN or infinities.
    pub fn insert(&mut self, key: FeatureKey, value: f64) {
        if value.is_finite() {
            self.values.insert(key, FeatureValue::Value(value));
        } else {
            self.values.insert(key, FeatureValue::Missing(MissingReason::DegenerateStatistic));
        }
    }

    pub fn insert_missing(&mut self, key: FeatureKey, reason: MissingReason) {
        self.values.insert(key, FeatureValue::Missing(reason));
    }

    pub fn value(&self, key: &FeatureKey) -> Option<f64> {
        match self.values.get(key) {
            Some(FeatureValue::Value(v)) => Some(*v),
            _ => None,
        }
    }
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// One row per recording; the column set is the sorted union of all keys.
/// Missing values appear as their reason code.
pub fn to_csv(vectors: &[FeatureVector]) -> String {
    let mut keys: Vec<&FeatureKey> = Vec::new();
    for v in vectors {
        for k in v.values.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.sort();
    let mut out = String::from("subject_id,grade,task,config_hash");
    for k in &keys {
        out.push(',');
        out.push_str(&csv_escape(&k.canonical()));
    }
    out.push('\n');
    for v in vectors {
        out.push_str(&csv_escape(&v.subject.id));
        out.push_str(&format!(",{},{},{}", v.subject.grade, v.task.as_str(), v.config_hash));
        for k in &keys {
            out.push(',');
            match v.values.get(*k) {
                Some(FeatureValue::Value(x)) => out.push_str(&format!("{x}")),
                Some(FeatureValue::Missing(r)) => {
                    out.push_str(match r {
                        MissingReason::NotApplicable => "not-applicable",
                        MissingReason::DegenerateStatistic => "degenerate-statistic",
                        MissingReason::InsufficientData => "insufficient-data",
                    });
                }
                None => {}
            }
        }
        out.push('\n');
    }
    out
}

/// Extraction configuration; hashed into every vector it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Speed threshold for a pen stop (mm/s).
    pub pen_stop_speed: f64,
    /// Minimum duration of a pen stop (s).
    pub pen_stop_min_dur: f64,
    /// Histogram bins for entropy.
    pub entropy_bins: usize,
    pub bands: BandConfig,
    pub siglog: FitConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            pen_stop_speed: 5.0,
            pen_stop_min_dur: 0.075,
            entropy_bins: 16,
            bands: BandConfig::default(),
            siglog: FitConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        format!("{digest:x}")
    }
}

// ---------------------------------------------------------------------------
// manifestation map
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ManifestationId {
    HigherDurationOfWriting,
    LowVelocity,
    LowAcceleration,
    LowerVariabilityOfVelocity,
    LowerVariabilityOfAcceleration,
    DysfluencyInVelocity,
    GraduallyDecreasingVelocity,
    GraduallyDecreasingAcceleration,
    UnstablePressure,
    UnstableTilt,
    VisuospatialDeficits,
    DisabilityToPerformLongerStrokes,
    InstabilityInAmplitudeOfLetters,
    AllLettersSameAmplitude,
    InabilityToMaintainHandwritingOnLine,
    FrequentOverwriting,
    UnstableDensity,
}

impl ManifestationId {
    pub const ALL: [ManifestationId; 17] = [
        ManifestationId::HigherDurationOfWriting,
        ManifestationId::LowVelocity,
        ManifestationId::LowAcceleration,
        ManifestationId::LowerVariabilityOfVelocity,
        ManifestationId::LowerVariabilityOfAcceleration,
        ManifestationId::DysfluencyInVelocity,
        ManifestationId::GraduallyDecreasingVelocity,
        ManifestationId::GraduallyDecreasingAcceleration,
        ManifestationId::UnstablePressure,
        ManifestationId::UnstableTilt,
        ManifestationId::VisuospatialDeficits,
        ManifestationId::DisabilityToPerformLongerStrokes,
        ManifestationId::InstabilityInAmplitudeOfLetters,
        ManifestationId::AllLettersSameAmplitude,
        ManifestationId::InabilityToMaintainHandwritingOnLine,
        ManifestationId::FrequentOverwriting,
        ManifestationId::UnstableDensity,
    ];

    pub fn title(&self) -> &'static str {
        match self {
            ManifestationId::HigherDurationOfWriting => "Higher duration of writing",
            ManifestationId::LowVelocity => "Low velocity",
            ManifestationId::LowAcceleration => "Low acceleration",
            ManifestationId::LowerVariabilityOfVelocity => "Lower variability of velocity",
            ManifestationId::LowerVariabilityOfAcceleration => {
                "Lower variability of acceleration"
            }
            ManifestationId::DysfluencyInVelocity => "Dysfluency in velocity",
            ManifestationId::GraduallyDecreasingVelocity => "Gradually decreasing velocity",
            ManifestationId::GraduallyDecreasingAcceleration => {
                "Gradually decreasing acceleration"
            }
            ManifestationId::UnstablePressure => "Unstable pressure on pen tip",
            ManifestationId::UnstableTilt => "Unstable tilt of pen",
            ManifestationId::VisuospatialDeficits => "Visuospatial deficits",
            ManifestationId::DisabilityToPerformLongerStrokes => {
                "Disability to perform longer strokes"
            }
            ManifestationId::InstabilityInAmplitudeOfLetters => {
                "Instability in amplitude of letters"
            }
            ManifestationId::AllLettersSameAmplitude => "All letters have same amplitude",
            ManifestationId::InabilityToMaintainHandwritingOnLine => {
                "Inability to maintain handwriting on a line"
            }
            ManifestationId::FrequentOverwriting => "Frequent overwriting",
            ManifestationId::UnstableDensity => "Unstable density",
        }
    }
}

/// One candidate feature of a manifestation; polarity +1 means a higher
/// value is worse, -1 means the raw value is flipped before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub feature: FeatureKey,
    pub tasks: Vec<TaskKind>,
    pub polarity: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestationSpec {
    pub id: ManifestationId,
    pub symptom: &'static str,
    pub candidates: Vec<Candidate>,
}

impl ManifestationSpec {
    pub fn candidate_tasks(&self) -> Vec<TaskKind> {
        let mut tasks: Vec<TaskKind> = Vec::new();
        for c in &self.candidates {
            for t in &c.tasks {
                if !tasks.contains(t) {
                    tasks.push(*t);
                }
            }
        }
        tasks.sort();
        tasks
    }

    pub fn candidate_features(&self) -> Vec<FeatureKey> {
        let mut keys: Vec<FeatureKey> = Vec::new();
        for c in &self.candidates {
            if !keys.contains(&c.feature) {
                keys.push(c.feature.clone());
            }
        }
        keys
    }
}

fn tasks(lo: usize, hi: usize) -> Vec<TaskKind> {
    TaskKind::ALL[lo - 1..hi].to_vec()
}

fn key(s: &str) -> FeatureKey {
    parse_feature_key(s).expect("static catalog key")
}

fn cand(feature: &str, task_range: &[(usize, usize)], polarity: i8) -> Candidate {
    let mut t = Vec::new();
    for &(lo, hi) in task_range {
        t.extend(tasks(lo, hi));
    }
    Candidate { feature: key(feature), tasks: t, polarity }
}

/// The static 17-row manifestation map: each manifestation with its parent
/// symptom and the candidate (feature, tasks, polarity) triples.
pub fn manifestation_candidates() -> Vec<ManifestationSpec> {
    use ManifestationId::*;
    let mut out = Vec::new();
    let mut add = |id: ManifestationId, symptom: &'static str, candidates: Vec<Candidate>| {
        out.push(ManifestationSpec { id, symptom, candidates });
    };

    add(
        HigherDurationOfWriting,
        "Variability in speed",
        vec![cand("DUR", &[(8, 10)], 1)],
    );
    add(
        LowVelocity,
        "Variability in speed",
        vec![
            cand("ON: DUR", &[(1, 10)], 1),
            cand("ON: SDUR (median)", &[(1, 10)], 1),
            cand("ON: G-VEL (median)", &[(1, 10)], -1),
            cand("ON: H-VEL (median)", &[(1, 10)], -1),
            cand("ON: V-VEL (median)", &[(1, 10)], -1),
            cand("ON: G-VEL (95p)", &[(1, 10)], -1),
            cand("ON: H-VEL (95p)", &[(1, 10)], -1),
            cand("ON: V-VEL (95p)", &[(1, 10)], -1),
            cand("MDS", &[(1, 2)], -1),
        ],
    );
    add(
        LowAcceleration,
        "Variability in speed",
        vec![
            cand("ON: G-ACC (median)", &[(1, 10)], -1),
            cand("ON: H-ACC (median)", &[(1, 10)], -1),
            cand("ON: V-ACC (median)", &[(1, 10)], -1),
            cand("ON: G-ACC (95p)", &[(1, 10)], -1),
            cand("ON: H-ACC (95p)", &[(1, 10)], -1),
            cand("ON: V-ACC (95p)", &[(1, 10)], -1),
        ],
    );
    add(
        LowerVariabilityOfVelocity,
        "Variability in speed",
        vec![
            cand("ON: G-VEL (iqr)", &[(8, 10)], -1),
            cand("ON: H-VEL (iqr)", &[(8, 10)], -1),
            cand("ON: V-VEL (iqr)", &[(8, 10)], -1),
        ],
    );
    add(
        LowerVariabilityOfAcceleration,
        "Variability in speed",
        vec![
            cand("ON: G-ACC (iqr)", &[(8, 10)], -1),
            cand("ON: H-ACC (iqr)", &[(8, 10)], -1),
            cand("ON: V-ACC (iqr)", &[(8, 10)], -1),
        ],
    );
    add(
        DysfluencyInVelocity,
        "Variability in speed",
        vec![
            cand("ON: NCV", &[(1, 7)], 1),
            cand("ON: RNCV", &[(1, 7)], 1),
            cand("ON: MPSSF", &[(1, 7)], 1),
            cand("ON: SNR", &[(1, 7)], -1),
            cand("ON: nbLog", &[(1, 7)], 1),
            cand("ON: SNR/nbLog", &[(1, 7)], -1),
            cand("ON: NPS", &[(1, 7)], 1),
        ],
    );
    add(
        GraduallyDecreasingVelocity,
        "Unusual wrist and body position",
        vec![
            cand("ON: G-VEL (slope)", &[(8, 10)], -1),
            cand("ON: H-VEL (slope)", &[(8, 10)], -1),
            cand("ON: V-VEL (slope)", &[(8, 10)], -1),
        ],
    );
    add(
        GraduallyDecreasingAcceleration,
        "Unusual wrist and body position",
        vec![
            cand("ON: G-ACC (slope)", &[(8, 10)], -1),
            cand("ON: H-ACC (slope)", &[(8, 10)], -1),
            cand("ON: V-ACC (slope)", &[(8, 10)], -1),
        ],
    );
    add(
        UnstablePressure,
        "Unstable pressure",
        vec![
            cand("PRESS (ncv)", &[(1, 10)], 1),
            cand("PRESS (slope)", &[(1, 10)], -1),
            cand("NCP", &[(1, 10)], 1),
        ],
    );
    add(
        UnstableTilt,
        "Unstable tilt",
        vec![cand("TILT (ncv)", &[(1, 10)], 1), cand("NCT", &[(1, 10)], 1)],
    );
    add(
        VisuospatialDeficits,
        "Longer in-air time period",
        vec![
            cand("AIR: DUR", &[(8, 10)], 1),
            cand("AIR: SDUR (median)", &[(8, 10)], 1),
        ],
    );
    add(
        DisabilityToPerformLongerStrokes,
        "Dysfluency of handwriting",
        vec![cand("DURR", &[(8, 10)], -1), cand("NINT", &[(8, 10)], 1)],
    );
    add(
        InstabilityInAmplitudeOfLetters,
        "Problems with size control",
        vec![
            cand("ON: V-LMAX (ncv)", &[(3, 5)], 1),
            cand("ON: SHEIGHT (ncv)", &[(8, 10)], 1),
        ],
    );
    add(
        AllLettersSameAmplitude,
        "Problems with size control",
        vec![cand("ON: SHEIGHT (ncv)", &[(8, 10)], -1)],
    );
    add(
        InabilityToMaintainHandwritingOnLine,
        "Messy organization",
        vec![cand("ON: V-LMIN (ncv)", &[(3, 3), (5, 6)], 1)],
    );
    add(
        FrequentOverwriting,
        "Grammar mistakes",
        vec![cand("ON: NIEI", &[(8, 10)], 1), cand("ON: RNIEI", &[(8, 10)], 1)],
    );
    add(
        UnstableDensity,
        "Poor spacing",
        vec![
            cand("ON: PDEN", &[(1, 10)], 1),
            cand("ON: ADEN", &[(1, 10)], 1),
            cand("ON: V-DLMAX (ncv)", &[(3, 4)], 1),
            cand("SPI", &[(1, 2)], -1),
            cand("TGHTNS", &[(1, 2)], -1),
            cand("SWVI", &[(1, 2)], 1),
            cand("ON: NIAI (median)", &[(1, 4), (7, 10)], 1),
            cand("ON: RNIAI (median)", &[(1, 4), (7, 10)], 1),
        ],
    );
    debug_assert_eq!(out.len(), 17);
    out
}

// ---------------------------------------------------------------------------
// extraction
// ---------------------------------------------------------------------------

fn stats_reason(e: &StatsError) -> MissingReason {
    match e {
        StatsError::EmptyInput => MissingReason::InsufficientData,
        StatsError::Degenerate(_) => MissingReason::DegenerateStatistic,
        StatsError::InvalidArgument(_) => MissingReason::DegenerateStatistic,
    }
}

fn set(fv: &mut FeatureVector, k: &str, r: Result<f64, MissingReason>) {
    match r {
        Ok(v) => fv.insert(key(k), v),
        Err(reason) => fv.insert_missing(key(k), reason),
    }
}

fn set_stat(fv: &mut FeatureVector, k: &str, r: Result<f64, StatsError>) {
    set(fv, k, r.map_err(|e| stats_reason(&e)));
}

fn set_opt(fv: &mut FeatureVector, k: &str, v: Option<f64>, reason: MissingReason) {
    set(fv, k, v.ok_or(reason));
}

/// Median/95p/iqr/slope block for one projection of a profile.
fn profile_block(fv: &mut FeatureVector, mnemonic: &str, dir: &str, p: &TimeProfile) {
    let base = format!("ON: {dir}-{mnemonic}");
    set_stat(fv, &format!("{base} (median)"), stats::median(&p.values));
    set_stat(fv, &format!("{base} (95p)"), stats::quantile(&p.values, 0.95));
    set_stat(fv, &format!("{base} (iqr)"), stats::iqr(&p.values));
    set(
        fv,
        &format!("{base} (slope)"),
        kinematics::profile_slope(p).map_err(|_| MissingReason::InsufficientData),
    );
}

fn mark_missing(fv: &mut FeatureVector, keys: &[&str], reason: MissingReason) {
    for k in keys {
        fv.insert_missing(key(k), reason);
    }
}

const VEL_ACC_KEYS: &[&str] = &[
    "ON: G-VEL (median)", "ON: G-VEL (95p)", "ON: G-VEL (iqr)", "ON: G-VEL (slope)",
    "ON: H-VEL (median)", "ON: H-VEL (95p)", "ON: H-VEL (iqr)", "ON: H-VEL (slope)",
    "ON: V-VEL (median)", "ON: V-VEL (95p)", "ON: V-VEL (iqr)", "ON: V-VEL (slope)",
];
const ACC_KEYS: &[&str] = &[
    "ON: G-ACC (median)", "ON: G-ACC (95p)", "ON: G-ACC (iqr)", "ON: G-ACC (slope)",
    "ON: H-ACC (median)", "ON: H-ACC (95p)", "ON: H-ACC (iqr)", "ON: H-ACC (slope)",
    "ON: V-ACC (median)", "ON: V-ACC (95p)", "ON: V-ACC (iqr)", "ON: V-ACC (slope)",
];
const SPEED_DERIVED_KEYS: &[&str] = &[
    "ON: NCV", "ON: RNCV", "ON: NPS", "ON: LZC", "ON: SHE", "ON: MPSSF", "ON: MPSTF",
    "ON: SNR", "ON: nbLog", "ON: SNR/nbLog",
];

/// Dynamic-signal (pressure/tilt/azimuth) block over on-surface samples.
fn dynamic_block(fv: &mut FeatureVector, mnemonic: &str, values: &[f64], ts: &[f64]) {
    set_stat(fv, &format!("{mnemonic} (median)"), stats::median(values));
    set_stat(fv, &format!("{mnemonic} (iqr)"), stats::iqr(values));
    set_stat(fv, &format!("{mnemonic} (ncv)"), stats::ncv(values));
    let pts: Vec<(f64, f64)> = ts.iter().cloned().zip(values.iter().cloned()).collect();
    set_stat(fv, &format!("{mnemonic} (slope)"), stats::theil_sen_slope(&pts));
}

/// Split a concatenated profile into per-stroke profiles.
fn split_by_strokes(p: &TimeProfile) -> Vec<TimeProfile> {
    let mut out = Vec::new();
    for (bi, &start) in p.stroke_bounds.iter().enumerate() {
        let end = p.stroke_bounds.get(bi + 1).copied().unwrap_or(p.values.len());
        out.push(TimeProfile {
            values: p.values[start..end].to_vec(),
            t: p.t[start..end].to_vec(),
            stroke_bounds: vec![0],
        });
    }
    out
}

/// Extract every feature applicable to the recording's task. Per-feature
/// failures become explicit missing values; features that do not apply to
/// the task are absent from the vector.
pub fn extract_all(rec: &InkRecording, config: &FeatureConfig) -> FeatureVector {
    let task = rec.task;
    let mut fv = FeatureVector::new(task, rec.subject.clone(), config.hash());

    // temporal
    match kinematics::temporal_features(rec) {
        Ok(t) => {
            set(&mut fv, "DUR", Ok(t.dur_total));
            set(&mut fv, "ON: DUR", Ok(t.dur_on));
            set(&mut fv, "AIR: DUR", Ok(t.dur_air));
            set_opt(&mut fv, "DURR", t.durr, MissingReason::DegenerateStatistic);
            set_stat(&mut fv, "ON: SDUR (median)", stats::median(&t.sdur_on));
            set_stat(&mut fv, "AIR: SDUR (median)", stats::median(&t.sdur_air));
            set_opt(&mut fv, "SDURR", t.sdurr, MissingReason::DegenerateStatistic);
            set(&mut fv, "TEMPO", Ok(t.tempo));
            set(&mut fv, "NINT", Ok(t.nint as f64));
        }
        Err(_) => mark_missing(
            &mut fv,
            &[
                "DUR", "ON: DUR", "AIR: DUR", "DURR", "ON: SDUR (median)",
                "AIR: SDUR (median)", "SDURR", "TEMPO", "NINT",
            ],
            MissingReason::InsufficientData,
        ),
    }

    // on-surface kinematics
    let vel = kinematics::velocity(rec, Scope::OnSurface);
    match &vel {
        Ok(v) => {
            profile_block(&mut fv, "VEL", "G", &v.global);
            profile_block(&mut fv, "VEL", "H", &v.horizontal);
            profile_block(&mut fv, "VEL", "V", &v.vertical);

            set(
                &mut fv,
                "ON: NCV",
                kinematics::count_changes(&v.global.values)
                    .map(|c| c as f64)
                    .map_err(|_| MissingReason::InsufficientData),
            );
            set(
                &mut fv,
                "ON: RNCV",
                kinematics::relative_changes(&v.global)
                    .map_err(|_| MissingReason::InsufficientData),
            );
            set(
                &mut fv,
                "ON: NPS",
                Ok(kinematics::pen_stops(&v.global, config.pen_stop_speed, config.pen_stop_min_dur)
                    as f64),
            );
            set(
                &mut fv,
                "ON: LZC",
                complexity::lzc(&v.global.values).map_err(|_| MissingReason::InsufficientData),
            );
            set(
                &mut fv,
                "ON: SHE",
                complexity::shannon_entropy(&v.global.values, config.entropy_bins)
                    .map_err(|_| MissingReason::InsufficientData),
            );
            match complexity::psd_medians(&v.global.values, rec.sample_rate, &config.bands) {
                Ok((speed, tremor)) => {
                    set(&mut fv, "ON: MPSSF", Ok(speed));
                    set(&mut fv, "ON: MPSTF", Ok(tremor));
                }
                Err(_) => mark_missing(
                    &mut fv,
                    &["ON: MPSSF", "ON: MPSTF"],
                    MissingReason::InsufficientData,
                ),
            }

            let stroke_profiles = split_by_strokes(&v.global);
            match siglognormal::fit_strokes(&stroke_profiles, &config.siglog) {
                Ok(fit) => {
                    set(&mut fv, "ON: SNR", Ok(fit.snr_db));
                    set(&mut fv, "ON: nbLog", Ok(fit.nb_log as f64));
                    set(
                        &mut fv,
                        "ON: SNR/nbLog",
                        if fit.nb_log > 0 {
                            Ok(fit.snr_db / fit.nb_log as f64)
                        } else {
                            Err(MissingReason::DegenerateStatistic)
                        },
                    );
                }
                Err(_) => mark_missing(
                    &mut fv,
                    &["ON: SNR", "ON: nbLog", "ON: SNR/nbLog"],
                    MissingReason::InsufficientData,
                ),
            }
        }
        Err(_) => {
            mark_missing(&mut fv, VEL_ACC_KEYS, MissingReason::InsufficientData);
            mark_missing(&mut fv, SPEED_DERIVED_KEYS, MissingReason::InsufficientData);
        }
    }
    match kinematics::acceleration(rec, Scope::OnSurface) {
        Ok(a) => {
            profile_block(&mut fv, "ACC", "G", &a.global);
            profile_block(&mut fv, "ACC", "H", &a.horizontal);
            profile_block(&mut fv, "ACC", "V", &a.vertical);
        }
        Err(_) => mark_missing(&mut fv, ACC_KEYS, MissingReason::InsufficientData),
    }

    // dynamic signals over on-surface samples
    let on: Vec<&crate::ink::Sample> = segment_strokes(rec)
        .into_iter()
        .filter(|s| s.kind == StrokeKind::OnSurface)
        .flat_map(|s| rec.samples[s.range()].iter().collect::<Vec<_>>())
        .collect();
    let ts: Vec<f64> = on.iter().map(|s| s.t).collect();
    let press: Vec<f64> = on.iter().map(|s| s.pressure).collect();
    let tilt: Vec<f64> = on.iter().map(|s| s.tilt).collect();
    let azim: Vec<f64> = on.iter().map(|s| s.azimuth).collect();
    let xs: Vec<f64> = on.iter().map(|s| s.x).collect();
    let ys: Vec<f64> = on.iter().map(|s| s.y).collect();
    dynamic_block(&mut fv, "PRESS", &press, &ts);
    dynamic_block(&mut fv, "TILT", &tilt, &ts);
    dynamic_block(&mut fv, "AZIM", &azim, &ts);
    for (k, series) in [
        ("NCP", &press),
        ("NCT", &tilt),
        ("NCA", &azim),
        ("NCX", &xs),
        ("NCY", &ys),
    ] {
        set(
            &mut fv,
            k,
            kinematics::count_changes(series)
                .map(|c| c as f64)
                .map_err(|_| MissingReason::InsufficientData),
        );
    }

    // shape features
    let (points, _) = geometry::on_surface_points(rec);

    set(
        &mut fv,
        "ON: SHEIGHT (median)",
        stats::median(&geometry::stroke_heights(rec)).map_err(|e| stats_reason(&e)),
    );
    set(
        &mut fv,
        "ON: SHEIGHT (ncv)",
        stats::ncv(&geometry::stroke_heights(rec)).map_err(|e| stats_reason(&e)),
    );

    let counts = geometry::intersections(rec);
    let niai_f: Vec<f64> = counts.niai.iter().map(|&c| c as f64).collect();
    set_stat(&mut fv, "ON: NIAI (median)", stats::median(&niai_f));
    set_stat(&mut fv, "ON: RNIAI (median)", stats::median(&counts.rniai));
    set(&mut fv, "ON: NIEI", Ok(counts.niei as f64));
    set_opt(&mut fv, "ON: RNIEI", counts.rniei, MissingReason::DegenerateStatistic);

    match geometry::densities(rec) {
        Ok(d) => {
            set_opt(&mut fv, "ON: ADEN", d.aden, MissingReason::DegenerateStatistic);
            set_opt(&mut fv, "ON: PDEN", d.pden, MissingReason::DegenerateStatistic);
        }
        Err(_) => {
            mark_missing(&mut fv, &["ON: ADEN", "ON: PDEN"], MissingReason::InsufficientData)
        }
    }

    if task.is_spiral() {
        let mds = vel
            .as_ref()
            .ok()
            .map(|v| v.global.values.iter().sum::<f64>() / v.global.values.len() as f64);
        match mds.ok_or(MissingReason::InsufficientData).and_then(|m| {
            geometry::spiral_features(&points, m).map_err(|_| MissingReason::InsufficientData)
        }) {
            Ok(sf) => {
                set(&mut fv, "DoS", Ok(sf.dos));
                set(&mut fv, "MDS", Ok(sf.mds));
                set(&mut fv, "2ndSm", Ok(sf.second_order_smoothness));
                set(&mut fv, "SPI", Ok(sf.spi));
                set(&mut fv, "TGHTNS", Ok(sf.tghtns));
                set_opt(&mut fv, "SWVI", sf.swvi, MissingReason::DegenerateStatistic);
                set(&mut fv, "1stZC", Ok(sf.first_zero_crossing_rate));
            }
            Err(reason) => mark_missing(
                &mut fv,
                &["DoS", "MDS", "2ndSm", "SPI", "TGHTNS", "SWVI", "1stZC"],
                reason,
            ),
        }
    } else {
        // vertical-projection extrema features for loops, zig-zags, arcades
        // and pseudo-text
        let es = geometry::vertical_extrema(&ys);
        let maxima: Vec<f64> = es.maxima.iter().map(|&(_, y)| y).collect();
        let minima: Vec<f64> = es.minima.iter().map(|&(_, y)| y).collect();
        set_stat(&mut fv, "ON: V-LMAX (ncv)", stats::ncv(&maxima));
        set_stat(&mut fv, "ON: V-LMIN (ncv)", stats::ncv(&minima));
        set(
            &mut fv,
            "ON: V-DLMAX (ncv)",
            geometry::dlmax(&es, &points)
                .ok_or(MissingReason::InsufficientData)
                .and_then(|d| stats::ncv(&d).map_err(|e| stats_reason(&e))),
        );
        let vlmax = vel
            .as_ref()
            .ok()
            .filter(|v| v.global.values.len() == points.len())
            .map(|v| geometry::vlmax(&es, &v.global.values));
        match vlmax {
            Some(vals) if !vals.is_empty() => {
                set_stat(&mut fv, "ON: V-VLMAX (median)", stats::median(&vals));
                set_stat(&mut fv, "ON: V-VLMAX (ncv)", stats::ncv(&vals));
            }
            _ => mark_missing(
                &mut fv,
                &["ON: V-VLMAX (median)", "ON: V-VLMAX (ncv)"],
                MissingReason::InsufficientData,
            ),
        }
    }

    if task == TaskKind::Tsk5 {
        match geometry::zigzag_teeth(&points) {
            Some(teeth) => {
                set_stat(&mut fv, "ON: DFB (median)", stats::median(&teeth.dfb));
                set_stat(&mut fv, "ON: DFB (ncv)", stats::ncv(&teeth.dfb));
                set_stat(&mut fv, "ON: NDFB (median)", stats::median(&teeth.ndfb));
                set_stat(&mut fv, "ON: NDFB (ncv)", stats::ncv(&teeth.ndfb));
            }
            None => mark_missing(
                &mut fv,
                &["ON: DFB (median)", "ON: DFB (ncv)", "ON: NDFB (median)", "ON: NDFB (ncv)"],
                MissingReason::InsufficientData,
            ),
        }
    }
    if task == TaskKind::Tsk6 {
        match geometry::arcade_bows(&points) {
            Some(gaps) => {
                set_stat(&mut fv, "ON: DBB (median)", stats::median(&gaps));
                set_stat(&mut fv, "ON: DBB (ncv)", stats::ncv(&gaps));
            }
            None => mark_missing(
                &mut fv,
                &["ON: DBB (median)", "ON: DBB (ncv)"],
                MissingReason::InsufficientData,
            ),
        }
    }

    fv
}
