//! Normative tables, manifestation and global component scores, the sigmoid
//! display transform, Gaussian KDE, the handwriting-disabilities criterion
//! and assessment-profile assembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{FeatureKey, FeatureValue, FeatureVector, ManifestationId, MissingReason};
use crate::ink::TaskKind;
use crate::stats;

pub const DEFAULT_SIGMOID_K: f64 = 2.0;
pub const DEFAULT_MIN_INTACT: usize = 20;
pub const NORM_TABLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("configuration hash mismatch: norms fitted under {expected}, vector extracted under {got}")]
    ConfigMismatch { expected: String, got: String },
    #[error("no norms for grade {0}")]
    NoNorms(u8),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("too few intact subjects: need {needed}, got {got}")]
    TooFewIntact { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// Audit record for a manually adjusted threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOverride {
    pub original: f64,
    pub author: String,
    pub reason: String,
}

/// Gaussian kernel density estimate on a fixed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

/// Normative record for one manifestation in one grade: the selected
/// feature/task pair, the min-max bounds of the weight-adjusted raw axis,
/// and the intact-cohort median and threshold in scaled units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEntry {
    pub manifestation: ManifestationId,
    pub grade: u8,
    pub feature: FeatureKey,
    pub task: TaskKind,
    /// +1 keeps the raw axis, -1 flips it so higher always means worse.
    pub weight: i8,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub threshold: f64,
    pub config_hash: String,
    #[serde(default)]
    pub threshold_override: Option<ThresholdOverride>,
    /// Scaled-value density of the fitting cohort, for report panels.
    #[serde(default)]
    pub density: Option<KdeCurve>,
}

impl NormEntry {
    /// Weight-adjusted min-max scaling of a raw value (not clamped).
    pub fn scale(&self, raw: f64) -> f64 {
        (self.weight as f64 * raw - self.min) / (self.max - self.min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub scaled: f64,
    pub score: f64,
    pub flagged: bool,
}

/// Severity of one manifestation: min-max scale the weight-adjusted raw
/// value with the stored bounds, then place it on the median-to-threshold
/// axis. A value at the threshold scores exactly 1 and is flagged beyond it.
pub fn manifestation_score(
    raw: f64,
    entry: &NormEntry,
    config_hash: &str,
) -> Result<Score, ScoringError> {
    if config_hash != entry.config_hash {
        return Err(ScoringError::ConfigMismatch {
            expected: entry.config_hash.clone(),
            got: config_hash.to_string(),
        });
    }
    if !raw.is_finite() {
        return Err(ScoringError::InvalidArgument("raw value is not finite".into()));
    }
    if entry.max <= entry.min {
        return Err(ScoringError::Degenerate("min-max bounds collapsed".into()));
    }
    if entry.threshold == entry.median {
        return Err(ScoringError::Degenerate("threshold equals median".into()));
    }
    let scaled = entry.scale(raw);
    let score = (scaled - entry.median) / (entry.threshold - entry.median);
    Ok(Score { scaled, score, flagged: score > 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentId {
    G1,
    G2,
    G3,
    G4,
}

impl ComponentId {
    pub const ALL: [ComponentId; 4] =
        [ComponentId::G1, ComponentId::G2, ComponentId::G3, ComponentId::G4];

    pub fn title(&self) -> &'static str {
        match self {
            ComponentId::G1 => "Kinematic abilities (graphomotor task)",
            ComponentId::G2 => "Kinematic abilities (handwriting task)",
            ComponentId::G3 => "Visuo-spatial and cognitive abilities (handwriting task)",
            ComponentId::G4 => "Spatial abilities (graphomotor task)",
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentId::G1 => "G1",
            ComponentId::G2 => "G2",
            ComponentId::G3 => "G3",
            ComponentId::G4 => "G4",
        }
    }
}

/// A global component: a convex combination of scaled member features with
/// its own intact-cohort median and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub id: ComponentId,
    pub members: Vec<(FeatureKey, f64)>,
    pub median: f64,
    pub threshold: f64,
    pub config_hash: String,
}

impl ComponentModel {
    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.members.is_empty() {
            return Err(ScoringError::Degenerate("component without members".into()));
        }
        let sum: f64 = self.members.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ScoringError::InvalidArgument(format!(
                "component weights sum to {sum}, expected 1"
            )));
        }
        if self.members.iter().any(|(_, w)| *w <= 0.0) {
            return Err(ScoringError::InvalidArgument("component weight not positive".into()));
        }
        Ok(())
    }
}

/// Global component score over scaled member features.
pub fn global_score(
    features: &BTreeMap<FeatureKey, f64>,
    model: &ComponentModel,
    config_hash: &str,
) -> Result<Score, ScoringError> {
    model.validate()?;
    if config_hash != model.config_hash {
        return Err(ScoringError::ConfigMismatch {
            expected: model.config_hash.clone(),
            got: config_hash.to_string(),
        });
    }
    if model.threshold == model.median {
        return Err(ScoringError::Degenerate("threshold equals median".into()));
    }
    let mut o = 0.0;
    for (key, w) in &model.members {
        let f = features.get(key).ok_or_else(|| {
            ScoringError::InvalidArgument(format!("member feature '{key}' missing"))
        })?;
        o += w * f;
    }
    let score = (o - model.median) / (model.threshold - model.median);
    Ok(Score { scaled: o, score, flagged: score > 1.0 })
}

/// Sigmoid display transform: 0.5 exactly at the disability threshold
/// (score 1), limits 0 and 1.
pub fn display_transform(score: f64) -> f64 {
    display_transform_k(score, DEFAULT_SIGMOID_K)
}

pub fn display_transform_k(score: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (score - 1.0)).exp())
}

// ---------------------------------------------------------------------------
// norm fitting
// ---------------------------------------------------------------------------

/// The manifestation/feature/task pairing produced by model selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub manifestation: ManifestationId,
    pub feature: FeatureKey,
    pub task: TaskKind,
    pub weight: i8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub entries: Vec<NormEntry>,
    pub warnings: Vec<String>,
}

/// Fit normative entries for one grade: min-max bounds over every subject
/// in the grade, median and 95th-percentile threshold over the intact
/// cohort only.
pub fn fit_norms(
    cohort: &[FeatureVector],
    intact: &[bool],
    grade: u8,
    selections: &[Selection],
    min_intact: usize,
) -> Result<FitReport, ScoringError> {
    if cohort.len() != intact.len() {
        return Err(ScoringError::InvalidArgument(
            "intact mask length differs from cohort length".into(),
        ));
    }
    let config_hash = match cohort.iter().find(|v| v.subject.grade == grade) {
        Some(v) => v.config_hash.clone(),
        None => return Err(ScoringError::NoNorms(grade)),
    };
    if let Some(v) = cohort
        .iter()
        .find(|v| v.subject.grade == grade && v.config_hash != config_hash)
    {
        return Err(ScoringError::ConfigMismatch {
            expected: config_hash,
            got: v.config_hash.clone(),
        });
    }

    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for sel in selections {
        let mut all_adjusted = Vec::new();
        let mut intact_adjusted = Vec::new();
        for (v, &ok) in cohort.iter().zip(intact) {
            if v.subject.grade != grade || v.task != sel.task {
                continue;
            }
            if let Some(raw) = v.value(&sel.feature) {
                let adjusted = sel.weight as f64 * raw;
                all_adjusted.push(adjusted);
                if ok {
                    intact_adjusted.push(adjusted);
                }
            }
        }
        if intact_adjusted.len() < min_intact {
            return Err(ScoringError::TooFewIntact {
                needed: min_intact,
                got: intact_adjusted.len(),
            });
        }
        let min = all_adjusted.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = all_adjusted.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            warnings.push(format!(
                "{:?}: feature '{}' is constant across the grade-{} cohort, entry omitted",
                sel.manifestation, sel.feature, grade
            ));
            continue;
        }
        let scaled: Vec<f64> = intact_adjusted.iter().map(|a| (a - min) / (max - min)).collect();
        let median = stats::median(&scaled)?;
        let threshold = stats::quantile(&scaled, 0.95)?;
        if threshold == median {
            warnings.push(format!(
                "{:?}: intact median equals the 95th percentile in grade {}, entry omitted",
                sel.manifestation, grade
            ));
            continue;
        }
        let density = kde(&scaled).ok();
        entries.push(NormEntry {
            manifestation: sel.manifestation,
            grade,
            feature: sel.feature.clone(),
            task: sel.task,
            weight: sel.weight,
            min,
            max,
            median,
            threshold,
            config_hash: config_hash.clone(),
            threshold_override: None,
            density,
        });
    }
    Ok(FitReport { entries, warnings })
}

/// Replace an entry's threshold, keeping an audit trail of the original
/// value and the reason.
pub fn override_threshold(
    entry: &mut NormEntry,
    new_threshold: f64,
    author: &str,
    reason: &str,
) -> Result<(), ScoringError> {
    if !new_threshold.is_finite() || new_threshold == entry.median {
        return Err(ScoringError::InvalidArgument(
            "override threshold must be finite and differ from the median".into(),
        ));
    }
    entry.threshold_override = Some(ThresholdOverride {
        original: entry.threshold,
        author: author.to_string(),
        reason: reason.to_string(),
    });
    entry.threshold = new_threshold;
    Ok(())
}

/// Gaussian KDE with the Silverman bandwidth on a 512-point grid spanning
/// the data plus three bandwidths on each side.
pub fn kde(values: &[f64]) -> Result<KdeCurve, ScoringError> {
    if values.len() < 3 {
        return Err(ScoringError::InvalidArgument("kde needs at least 3 values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let iqr = stats::iqr(values)?;
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    if !(h > 0.0) {
        return Err(ScoringError::Degenerate("zero bandwidth: all values equal".into()));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let grid = 512usize;
    let step = (hi - lo) / (grid - 1) as f64;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut x = Vec::with_capacity(grid);
    let mut density = Vec::with_capacity(grid);
    for i in 0..grid {
        let xi = lo + i as f64 * step;
        let d: f64 = values.iter().map(|v| (-0.5 * ((xi - v) / h).powi(2)).exp()).sum();
        x.push(xi);
        density.push(norm * d);
    }
    Ok(KdeCurve { x, density, bandwidth: h })
}

// ---------------------------------------------------------------------------
// handwriting-disabilities criterion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdcInput {
    /// Overall expert evaluation, 0 to 4.
    pub oee: u8,
    /// Self-assessment questionnaire total; absent means no contribution.
    pub hpsq_total: Option<u32>,
}

/// Combined criterion: expert evaluation gates severity, the questionnaire
/// threshold of 19 points raises it by one level.
pub fn hdc(input: HdcInput) -> Result<u8, ScoringError> {
    if input.oee > 4 {
        return Err(ScoringError::InvalidArgument(format!(
            "expert evaluation {} outside 0-4",
            input.oee
        )));
    }
    let oee_t = matches!(input.oee, 3 | 4);
    let hpsq_t = input.hpsq_total.map(|h| h >= 19).unwrap_or(false);
    Ok(match (input.oee, oee_t, hpsq_t) {
        (_, false, _) => 0,
        (3, true, false) => 1,
        (3, true, true) | (4, true, false) => 2,
        (4, true, true) => 3,
        _ => unreachable!(),
    })
}

// ---------------------------------------------------------------------------
// norm table and profile
// ---------------------------------------------------------------------------

/// Versioned, serializable container for one configuration's norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormTable {
    pub version: u32,
    pub sigmoid_k: f64,
    pub config_hash: String,
    pub entries: Vec<NormEntry>,
    pub components: Vec<ComponentModel>,
}

impl NormTable {
    pub fn new(entries: Vec<NormEntry>, components: Vec<ComponentModel>, config_hash: String) -> Self {
        NormTable {
            version: NORM_TABLE_VERSION,
            sigmoid_k: DEFAULT_SIGMOID_K,
            config_hash,
            entries,
            components,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("norm table serializes")
    }

    pub fn from_json(text: &str) -> Result<NormTable, ScoringError> {
        let table: NormTable = serde_json::from_str(text)
            .map_err(|e| ScoringError::InvalidArgument(format!("norm table parse: {e}")))?;
        if table.version != NORM_TABLE_VERSION {
            return Err(ScoringError::InvalidArgument(format!(
                "norm table version {} unsupported",
                table.version
            )));
        }
        Ok(table)
    }

    pub fn entries_for_grade(&self, grade: u8) -> Vec<&NormEntry> {
        self.entries.iter().filter(|e| e.grade == grade).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestationResult {
    pub manifestation: ManifestationId,
    pub title: String,
    pub feature: FeatureKey,
    pub task: TaskKind,
    pub raw: Option<f64>,
    pub scaled: Option<f64>,
    pub score: Option<f64>,
    pub flagged: Option<bool>,
    pub display: Option<f64>,
    pub missing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentResult {
    pub id: ComponentId,
    pub title: String,
    pub value: Option<f64>,
    pub score: Option<f64>,
    pub flagged: Option<bool>,
    pub display: Option<f64>,
    pub missing: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub subject_id: String,
    pub grade: u8,
    pub manifestations: Vec<ManifestationResult>,
    pub components: Vec<ComponentResult>,
    pub hdc: Option<u8>,
}

fn missing_text(reason: MissingReason) -> String {
    match reason {
        MissingReason::NotApplicable => "not applicable to the task".into(),
        MissingReason::DegenerateStatistic => "degenerate statistic".into(),
        MissingReason::InsufficientData => "insufficient data".into(),
    }
}

/// Score one subject's vectors (one per task) against a norm table.
pub fn assemble_profile(
    vectors: &[FeatureVector],
    table: &NormTable,
) -> Result<Profile, ScoringError> {
    if vectors.is_empty() {
        return Err(ScoringError::InvalidArgument("no feature vectors supplied".into()));
    }
    let subject = &vectors[0].subject;
    let grade = subject.grade;
    let entries = table.entries_for_grade(grade);
    if entries.is_empty() {
        return Err(ScoringError::NoNorms(grade));
    }
    for v in vectors {
        if v.config_hash != table.config_hash {
            return Err(ScoringError::ConfigMismatch {
                expected: table.config_hash.clone(),
                got: v.config_hash.clone(),
            });
        }
    }

    let mut manifestations = Vec::new();
    let mut scaled_by_feature: BTreeMap<FeatureKey, f64> = BTreeMap::new();
    let mut component_blockers: BTreeMap<FeatureKey, String> = BTreeMap::new();
    for entry in &entries {
        let vector = vectors.iter().find(|v| v.task == entry.task);
        let mut result = ManifestationResult {
            manifestation: entry.manifestation,
            title: entry.manifestation.title().to_string(),
            feature: entry.feature.clone(),
            task: entry.task,
            raw: None,
            scaled: None,
            score: None,
            flagged: None,
            display: None,
            missing: None,
        };
        match vector {
            None => {
                result.missing = Some(format!("no recording for task {}", entry.task.as_str()));
            }
            Some(v) => match v.values.get(&entry.feature) {
                Some(FeatureValue::Value(raw)) => {
                    let s = manifestation_score(*raw, entry, &v.config_hash)?;
                    result.raw = Some(*raw);
                    result.scaled = Some(s.scaled);
                    result.score = Some(s.score);
                    result.flagged = Some(s.flagged);
                    result.display = Some(display_transform_k(s.score, table.sigmoid_k));
                    scaled_by_feature.insert(entry.feature.clone(), s.scaled);
                }
                Some(FeatureValue::Missing(reason)) => {
                    result.missing = Some(missing_text(*reason));
                }
                None => {
                    result.missing = Some("feature absent from vector".into());
                }
            },
        }
        if let Some(text) = &result.missing {
            component_blockers.insert(entry.feature.clone(), text.clone());
        }
        manifestations.push(result);
    }

    let mut components = Vec::new();
    for model in &table.components {
        let mut result = ComponentResult {
            id: model.id,
            title: model.id.title().to_string(),
            value: None,
            score: None,
            flagged: None,
            display: None,
            missing: None,
        };
        let blocked = model
            .members
            .iter()
            .find(|(k, _)| !scaled_by_feature.contains_key(k));
        match blocked {
            Some((k, _)) => {
                let why = component_blockers
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| "member feature not scored".into());
                result.missing = Some(format!("{k}: {why}"));
            }
            None => {
                let s = global_score(&scaled_by_feature, model, &table.config_hash)?;
                result.value = Some(s.scaled);
                result.score = Some(s.score);
                result.flagged = Some(s.flagged);
                result.display = Some(display_transform_k(s.score, table.sigmoid_k));
            }
        }
        components.push(result);
    }

    let hdc_value = match subject.oee {
        Some(oee) => Some(hdc(HdcInput { oee, hpsq_total: subject.hpsq_total })?),
        None => None,
    };

    Ok(Profile {
        subject_id: subject.id.clone(),
        grade,
        manifestations,
        components,
        hdc: hdc_value,
    })
}

// ---------------------------------------------------------------------------
// SVG report
// ---------------------------------------------------------------------------

const ROW_H: f64 = 26.0;
const BAR_X: f64 = 330.0;
const BAR_W: f64 = 260.0;
const KDE_X: f64 = 620.0;
const KDE_W: f64 = 180.0;

fn svg_bar(out: &mut String, y: f64, label: &str, display: Option<f64>, flagged: bool, note: &str) {
    out.push_str(&format!(
        "<text x=\"10\" y=\"{:.1}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>\n",
        y + 16.0,
        xml_escape(label)
    ));
    out.push_str(&format!(
        "<rect x=\"{BAR_X}\" y=\"{:.1}\" width=\"{BAR_W}\" height=\"14\" fill=\"#eee\" stroke=\"#999\"/>\n",
        y + 5.0
    ));
    match display {
        Some(d) => {
            let w = (d.clamp(0.0, 1.0)) * BAR_W;
            let fill = if flagged { "#c0392b" } else { "#2e86c1" };
            out.push_str(&format!(
                "<rect x=\"{BAR_X}\" y=\"{:.1}\" width=\"{w:.2}\" height=\"14\" fill=\"{fill}\"/>\n",
                y + 5.0
            ));
            // threshold tick at display 0.5
            out.push_str(&format!(
                "<line x1=\"{0:.1}\" y1=\"{1:.1}\" x2=\"{0:.1}\" y2=\"{2:.1}\" stroke=\"#333\" stroke-dasharray=\"2,2\"/>\n",
                BAR_X + 0.5 * BAR_W,
                y + 3.0,
                y + 21.0
            ));
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\">{d:.3}</text>\n",
                BAR_X + BAR_W + 8.0,
                y + 16.0
            ));
        }
        None => {
            out.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" font-family=\"sans-serif\" fill=\"#888\">{}</text>\n",
                BAR_X + BAR_W + 8.0,
                y + 16.0,
                xml_escape(note)
            ));
        }
    }
}

fn svg_kde(out: &mut String, y: f64, curve: &KdeCurve, marker: Option<f64>) {
    let dmax = curve.density.iter().cloned().fold(0.0_f64, f64::max);
    if dmax <= 0.0 {
        return;
    }
    let (xmin, xmax) = (curve.x[0], curve.x[curve.x.len() - 1]);
    let span = xmax - xmin;
    let mut path = String::new();
    for (i, (xv, dv)) in curve.x.iter().zip(&curve.density).enumerate() {
        let px = KDE_X + (xv - xmin) / span * KDE_W;
        let py = y + 21.0 - dv / dmax * 18.0;
        path.push_str(if i == 0 { "M" } else { "L" });
        path.push_str(&format!("{px:.2},{py:.2} "));
    }
    out.push_str(&format!(
        "<path d=\"{path}\" fill=\"none\" stroke=\"#7d3c98\" stroke-width=\"1\" class=\"kde\"/>\n"
    ));
    if let Some(m) = marker {
        let clamped = m.clamp(xmin, xmax);
        let px = KDE_X + (clamped - xmin) / span * KDE_W;
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.1}\" x2=\"{px:.2}\" y2=\"{:.1}\" stroke=\"#c0392b\" stroke-width=\"1.5\" class=\"marker\"/>\n",
            y + 2.0,
            y + 22.0
        ));
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar-chart report: the global component block on top, then manifestation
/// blocks grouped by the component their feature belongs to, each row with
/// its display value and, when norms carry one, the cohort density with the
/// subject's position marked.
pub fn render_svg(profile: &Profile, table: &NormTable) -> String {
    let entries = table.entries_for_grade(profile.grade);
    let entry_of = |m: ManifestationId| entries.iter().find(|e| e.manifestation == m);
    let group_of = |m: ManifestationId| -> Option<ComponentId> {
        let entry = entry_of(m)?;
        table
            .components
            .iter()
            .find(|c| c.members.iter().any(|(k, _)| *k == entry.feature))
            .map(|c| c.id)
    };

    let mut groups: Vec<(String, Vec<&ManifestationResult>)> = Vec::new();
    for cid in ComponentId::ALL {
        let rows: Vec<&ManifestationResult> = profile
            .manifestations
            .iter()
            .filter(|r| group_of(r.manifestation) == Some(cid))
            .collect();
        if !rows.is_empty() {
            groups.push((format!("{} - {}", cid.as_str(), cid.title()), rows));
        }
    }
    let ungrouped: Vec<&ManifestationResult> = profile
        .manifestations
        .iter()
        .filter(|r| group_of(r.manifestation).is_none())
        .collect();
    if !ungrouped.is_empty() {
        groups.push(("Other manifestations".to_string(), ungrouped));
    }

    let n_rows = profile.components.len()
        + profile.manifestations.len()
        + groups.len()
        + 3;
    let height = n_rows as f64 * ROW_H + 60.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"830\" height=\"{height:.0}\" viewBox=\"0 0 830 {height:.0}\">\n"
    );
    let mut y = 10.0;
    out.push_str(&format!(
        "<text x=\"10\" y=\"{:.1}\" font-size=\"15\" font-family=\"sans-serif\" font-weight=\"bold\">Assessment profile: subject {} (grade {})</text>\n",
        y + 14.0,
        xml_escape(&profile.subject_id),
        profile.grade
    ));
    if let Some(h) = profile.hdc {
        out.push_str(&format!(
            "<text x=\"620\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\">HDC level: {h}</text>\n",
            y + 14.0
        ));
    }
    y += ROW_H + 6.0;

    out.push_str(&format!(
        "<text x=\"10\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" font-weight=\"bold\">Global scores</text>\n",
        y + 14.0
    ));
    y += ROW_H;
    for c in &profile.components {
        svg_bar(
            &mut out,
            y,
            &format!("{} - {}", c.id.as_str(), c.title),
            c.display,
            c.flagged.unwrap_or(false),
            c.missing.as_deref().unwrap_or("missing"),
        );
        y += ROW_H;
    }

    for (title, rows) in &groups {
        y += 6.0;
        out.push_str(&format!(
            "<text x=\"10\" y=\"{:.1}\" font-size=\"13\" font-family=\"sans-serif\" font-weight=\"bold\">{}</text>\n",
            y + 14.0,
            xml_escape(title)
        ));
        y += ROW_H;
        for r in rows {
            svg_bar(
                &mut out,
                y,
                &r.title,
                r.display,
                r.flagged.unwrap_or(false),
                r.missing.as_deref().unwrap_or("missing"),
            );
            if let Some(entry) = entry_of(r.manifestation) {
                if let Some(curve) = &entry.density {
                    svg_kde(&mut out, y, curve, r.scaled);
                }
            }
            y += ROW_H;
        }
    }
    out.push_str("</svg>\n");
    out
}
