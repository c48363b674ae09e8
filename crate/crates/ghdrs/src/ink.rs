//! Data model for digitizer recordings: file ingestion, unit normalization
//! and stroke segmentation.
//!
//! Recording file format (text, UTF-8, LF): line 1 is the integer sample
//! count; each following line is `x y t pen_state azimuth tilt pressure`.
//! Positions are device counts (or millimeters under the identity profile),
//! time is in device ticks (or seconds), pen_state is 0 (in-air) or
//! 1 (on-surface).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nominal digitizer sampling frequency in Hz.
pub const NOMINAL_SAMPLE_RATE: f64 = 133.0;

#[derive(Debug, Error)]
pub enum InkError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One digitizer sample. Position in millimeters, time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    /// 1 = on-surface, 0 = in-air (pen tip within hover range).
    pub pen_state: u8,
    pub pressure: f64,
    /// Pen tilt in degrees, [0, 90].
    pub tilt: f64,
    /// Pen azimuth in degrees, [0, 360).
    pub azimuth: f64,
}

/// Graphomotor / handwriting task identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskKind {
    Tsk1,
    Tsk2,
    Tsk3,
    Tsk4,
    Tsk5,
    Tsk6,
    Tsk7,
    Tsk8,
    Tsk9,
    Tsk10,
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        TaskKind::Tsk1,
        TaskKind::Tsk2,
        TaskKind::Tsk3,
        TaskKind::Tsk4,
        TaskKind::Tsk5,
        TaskKind::Tsk6,
        TaskKind::Tsk7,
        TaskKind::Tsk8,
        TaskKind::Tsk9,
        TaskKind::Tsk10,
    ];

    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|t| t == self).unwrap()
    }

    /// TSK1-TSK7 are elementary graphomotor tasks, TSK8-TSK10 handwriting.
    pub fn is_graphomotor(&self) -> bool {
        self.index() < 7
    }

    pub fn is_handwriting(&self) -> bool {
        !self.is_graphomotor()
    }

    pub fn is_spiral(&self) -> bool {
        matches!(self, TaskKind::Tsk1 | TaskKind::Tsk2)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Tsk1 => "TSK1",
            TaskKind::Tsk2 => "TSK2",
            TaskKind::Tsk3 => "TSK3",
            TaskKind::Tsk4 => "TSK4",
            TaskKind::Tsk5 => "TSK5",
            TaskKind::Tsk6 => "TSK6",
            TaskKind::Tsk7 => "TSK7",
            TaskKind::Tsk8 => "TSK8",
            TaskKind::Tsk9 => "TSK9",
            TaskKind::Tsk10 => "TSK10",
        }
    }

    pub fn parse(s: &str) -> Option<TaskKind> {
        Self::ALL.iter().copied().find(|t| t.as_str() == s)
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
    Unknown,
}

/// Subject metadata; grade 0 is the final kindergarten grade.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: String,
    pub grade: u8,
    pub sex: Sex,
    /// Overall expert evaluation, 0 (intact) to 4 (severe), when available.
    pub oee: Option<u8>,
    /// HPSQ-C questionnaire total, when available.
    pub hpsq_total: Option<u32>,
}

impl SubjectMeta {
    pub fn anonymous(grade: u8) -> Self {
        SubjectMeta {
            id: String::new(),
            grade,
            sex: Sex::Unknown,
            oee: None,
            hpsq_total: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrokeKind {
    OnSurface,
    InAir,
}

/// Maximal run of samples with constant pen state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stroke {
    /// Inclusive start index into the recording's samples.
    pub start: usize,
    /// Inclusive end index.
    pub end: usize,
    pub kind: StrokeKind,
}

impl Stroke {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// A pen-digitizer recording with normalized units (mm, seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InkRecording {
    pub samples: Vec<Sample>,
    pub sample_rate: f64,
    pub task: TaskKind,
    pub subject: SubjectMeta,
}

/// Scale factors converting raw device counts/ticks to millimeters/seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub x_scale_mm: f64,
    pub y_scale_mm: f64,
    pub t_scale_s: f64,
}

impl Default for DeviceProfile {
    fn default() -> Self {
        DeviceProfile {
            x_scale_mm: 1.0,
            y_scale_mm: 1.0,
            t_scale_s: 1.0,
        }
    }
}

impl DeviceProfile {
    /// Parse a key-value config file (`key = value` per line, `#` comments).
    pub fn parse(text: &str) -> Result<DeviceProfile, InkError> {
        let mut profile = DeviceProfile::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| InkError::Parse {
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            let value: f64 = value.trim().parse().map_err(|_| InkError::Parse {
                line: i + 1,
                message: format!("invalid number `{}`", value.trim()),
            })?;
            match key.trim() {
                "x_scale_mm" => profile.x_scale_mm = value,
                "y_scale_mm" => profile.y_scale_mm = value,
                "t_scale_s" => profile.t_scale_s = value,
                other => {
                    return Err(InkError::Parse {
                        line: i + 1,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        Ok(profile)
    }
}

/// Parse a recording file, normalize units and collapse duplicate timestamps
/// (keeping the last sample for each timestamp).
pub fn parse_recording(
    text: &str,
    profile: &DeviceProfile,
    task: TaskKind,
    subject: SubjectMeta,
) -> Result<InkRecording, InkError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| {
        InkError::InsufficientData("empty file".into())
    })?;
    let declared: usize = header.trim().parse().map_err(|_| InkError::Parse {
        line: 1,
        message: format!("invalid sample count `{}`", header.trim()),
    })?;

    let mut samples: Vec<Sample> = Vec::with_capacity(declared);
    for (i, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(InkError::Parse {
                line: i + 1,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let num = |idx: usize| -> Result<f64, InkError> {
            fields[idx].parse().map_err(|_| InkError::Parse {
                line: i + 1,
                message: format!("invalid number `{}`", fields[idx]),
            })
        };
        let pen_state_raw = num(3)?;
        if pen_state_raw != 0.0 && pen_state_raw != 1.0 {
            return Err(InkError::Parse {
                line: i + 1,
                message: format!("pen_state must be 0 or 1, found `{}`", fields[3]),
            });
        }
        let pressure = num(6)?;
        if pressure < 0.0 {
            return Err(InkError::Parse {
                line: i + 1,
                message: "negative pressure".into(),
            });
        }
        let sample = Sample {
            x: num(0)? * profile.x_scale_mm,
            y: num(1)? * profile.y_scale_mm,
            t: num(2)? * profile.t_scale_s,
            pen_state: pen_state_raw as u8,
            azimuth: num(4)?,
            tilt: num(5)?,
            pressure,
        };
        // duplicate timestamp: keep the last sample
        if let Some(last) = samples.last_mut() {
            if last.t == sample.t {
                *last = sample;
                continue;
            }
        }
        samples.push(sample);
    }

    if samples.len() != declared && declared != 0 {
        // header counts raw lines; duplicates may have been collapsed
        let raw_count = text.lines().skip(1).filter(|l| !l.trim().is_empty()).count();
        if raw_count != declared {
            return Err(InkError::Integrity(format!(
                "header declares {declared} samples, file contains {raw_count}"
            )));
        }
    }
    if samples.len() < 2 {
        return Err(InkError::InsufficientData(format!(
            "{} sample(s) after deduplication, need at least 2",
            samples.len()
        )));
    }
    for w in samples.windows(2) {
        if w[1].t <= w[0].t {
            return Err(InkError::Integrity(format!(
                "timestamps not strictly increasing near t = {}",
                w[0].t
            )));
        }
    }

    Ok(InkRecording {
        samples,
        sample_rate: NOMINAL_SAMPLE_RATE,
        task,
        subject,
    })
}

/// Serialize a recording into the text format read by `parse_recording`.
pub fn serialize_recording(rec: &InkRecording) -> String {
    let mut out = String::new();
    out.push_str(&rec.samples.len().to_string());
    out.push('\n');
    for s in &rec.samples {
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            s.x, s.y, s.t, s.pen_state, s.azimuth, s.tilt, s.pressure
        ));
    }
    out
}

/// Segment a recording into maximal runs of constant pen state.
pub fn segment_strokes(rec: &InkRecording) -> Vec<Stroke> {
    let mut strokes = Vec::new();
    if rec.samples.is_empty() {
        return strokes;
    }
    let mut start = 0;
    for i in 1..rec.samples.len() {
        if rec.samples[i].pen_state != rec.samples[start].pen_state {
            strokes.push(Stroke {
                start,
                end: i - 1,
                kind: kind_of(rec.samples[start].pen_state),
            });
            start = i;
        }
    }
    strokes.push(Stroke {
        start,
        end: rec.samples.len() - 1,
        kind: kind_of(rec.samples[start].pen_state),
    });
    strokes
}

fn kind_of(pen_state: u8) -> StrokeKind {
    if pen_state == 1 {
        StrokeKind::OnSurface
    } else {
        StrokeKind::InAir
    }
}

/// Resample each stroke onto the uniform grid t = k/fs using per-channel
/// linear interpolation. Interpolation never bridges a pen-state change.
pub fn resample_uniform(rec: &InkRecording, fs: f64) -> Result<InkRecording, InkError> {
    if fs <= 0.0 {
        return Err(InkError::InvalidArgument(format!(
            "sampling frequency must be positive, got {fs}"
        )));
    }
    let strokes = segment_strokes(rec);
    let mut samples = Vec::new();
    for stroke in &strokes {
        let slice = &rec.samples[stroke.start..=stroke.end];
        if slice.len() < 2 {
            samples.push(slice[0]);
            continue;
        }
        let t0 = slice[0].t;
        let t1 = slice[slice.len() - 1].t;
        // small tolerance so grid points landing exactly on stroke
        // boundaries are not lost to floating-point rounding
        let k0 = (t0 * fs - 1e-9).ceil() as i64;
        let k1 = (t1 * fs + 1e-9).floor() as i64;
        let mut cursor = 0;
        for k in k0..=k1 {
            let t = k as f64 / fs;
            while cursor + 2 < slice.len() && slice[cursor + 1].t < t {
                cursor += 1;
            }
            let a = &slice[cursor];
            let b = &slice[cursor + 1];
            let frac = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 0.0 };
            let lerp = |u: f64, v: f64| u + frac * (v - u);
            samples.push(Sample {
                x: lerp(a.x, b.x),
                y: lerp(a.y, b.y),
                t,
                pen_state: a.pen_state,
                pressure: lerp(a.pressure, b.pressure),
                tilt: lerp(a.tilt, b.tilt),
                azimuth: lerp(a.azimuth, b.azimuth),
            });
        }
    }
    if samples.len() < 2 {
        return Err(InkError::InsufficientData(
            "resampling produced fewer than 2 samples".into(),
        ));
    }
    Ok(InkRecording {
        samples,
        sample_rate: fs,
        task: rec.task,
        subject: rec.subject.clone(),
    })
}
