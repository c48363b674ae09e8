//! Velocity/acceleration profiles, profile-change counts, pen stops and
//! temporal features.

use crate::ink::{segment_strokes, InkRecording, Stroke, StrokeKind};
use crate::stats;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// Which strokes a profile is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scope {
    OnSurface,
    InAir,
    Both,
}

impl Scope {
    pub fn includes(&self, kind: StrokeKind) -> bool {
        match self {
            Scope::OnSurface => kind == StrokeKind::OnSurface,
            Scope::InAir => kind == StrokeKind::InAir,
            Scope::Both => true,
        }
    }
}

/// A scalar time series sampled at (possibly non-uniform) instants.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeProfile {
    pub values: Vec<f64>,
    pub t: Vec<f64>,
    /// Index of the first sample of each stroke contributing to the profile.
    pub stroke_bounds: Vec<usize>,
}

impl TimeProfile {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[self.t.len() - 1] - self.t[0]
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.t.iter().cloned().zip(self.values.iter().cloned()).collect()
    }
}

/// Central differences on interior points, one-sided at the ends.
/// Handles non-uniform time grids.
pub fn differentiate(x: &[f64], t: &[f64]) -> Result<Vec<f64>, KinematicsError> {
    let n = x.len();
    if n < 2 || t.len() != n {
        return Err(KinematicsError::InsufficientData(format!(
            "differentiate needs at least 2 samples, got {n}"
        )));
    }
    let mut d = vec![0.0; n];
    d[0] = (x[1] - x[0]) / (t[1] - t[0]);
    d[n - 1] = (x[n - 1] - x[n - 2]) / (t[n - 1] - t[n - 2]);
    for i in 1..(n - 1) {
        d[i] = (x[i + 1] - x[i - 1]) / (t[i + 1] - t[i - 1]);
    }
    Ok(d)
}

/// Global (speed), horizontal and vertical velocity profiles. Derivatives
/// are taken per stroke, never across pen-state changes. H and V are the
/// absolute values of the component derivatives.
pub struct VelocityProfiles {
    pub global: TimeProfile,
    pub horizontal: TimeProfile,
    pub vertical: TimeProfile,
    /// Signed component derivatives, kept for acceleration computation.
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
}

fn scoped_strokes(rec: &InkRecording, scope: Scope) -> Vec<Stroke> {
    segment_strokes(rec)
        .into_iter()
        .filter(|s| scope.includes(s.kind))
        .collect()
}

pub fn velocity(rec: &InkRecording, scope: Scope) -> Result<VelocityProfiles, KinematicsError> {
    let strokes = scoped_strokes(rec, scope);
    let mut global = TimeProfile { values: vec![], t: vec![], stroke_bounds: vec![] };
    let mut horizontal = global.clone();
    let mut vertical = global.clone();
    let mut vx_all = Vec::new();
    let mut vy_all = Vec::new();
    for stroke in &strokes {
        if stroke.len() < 2 {
            continue;
        }
        let slice = &rec.samples[stroke.range()];
        let xs: Vec<f64> = slice.iter().map(|s| s.x).collect();
        let ys: Vec<f64> = slice.iter().map(|s| s.y).collect();
        let ts: Vec<f64> = slice.iter().map(|s| s.t).collect();
        let vx = differentiate(&xs, &ts)?;
        let vy = differentiate(&ys, &ts)?;
        global.stroke_bounds.push(global.values.len());
        horizontal.stroke_bounds.push(horizontal.values.len());
        vertical.stroke_bounds.push(vertical.values.len());
        for i in 0..vx.len() {
            global.values.push((vx[i] * vx[i] + vy[i] * vy[i]).sqrt());
            horizontal.values.push(vx[i].abs());
            vertical.values.push(vy[i].abs());
            global.t.push(ts[i]);
            horizontal.t.push(ts[i]);
            vertical.t.push(ts[i]);
        }
        vx_all.extend(vx);
        vy_all.extend(vy);
    }
    if global.is_empty() {
        return Err(KinematicsError::InsufficientData(
            "no stroke long enough for a derivative".into(),
        ));
    }
    Ok(VelocityProfiles { global, horizontal, vertical, vx: vx_all, vy: vy_all })
}

pub struct AccelerationProfiles {
    pub global: TimeProfile,
    pub horizontal: TimeProfile,
    pub vertical: TimeProfile,
}

pub fn acceleration(
    rec: &InkRecording,
    scope: Scope,
) -> Result<AccelerationProfiles, KinematicsError> {
    let vel = velocity(rec, scope)?;
    let mut global = TimeProfile { values: vec![], t: vec![], stroke_bounds: vec![] };
    let mut horizontal = global.clone();
    let mut vertical = global.clone();
    let bounds = &vel.global.stroke_bounds;
    for (bi, &start) in bounds.iter().enumerate() {
        let end = bounds.get(bi + 1).copied().unwrap_or(vel.global.len());
        if end - start < 2 {
            continue;
        }
        let ts = &vel.global.t[start..end];
        let ax = differentiate(&vel.vx[start..end], ts)?;
        let ay = differentiate(&vel.vy[start..end], ts)?;
        global.stroke_bounds.push(global.values.len());
        horizontal.stroke_bounds.push(horizontal.values.len());
        vertical.stroke_bounds.push(vertical.values.len());
        for i in 0..ax.len() {
            global.values.push((ax[i] * ax[i] + ay[i] * ay[i]).sqrt());
            horizontal.values.push(ax[i].abs());
            vertical.values.push(ay[i].abs());
            global.t.push(ts[i]);
            horizontal.t.push(ts[i]);
            vertical.t.push(ts[i]);
        }
    }
    if global.is_empty() {
        return Err(KinematicsError::InsufficientData(
            "no stroke long enough for a second derivative".into(),
        ));
    }
    Ok(AccelerationProfiles { global, horizontal, vertical })
}

/// Number of strict local extrema of a profile; plateaus are collapsed so a
/// flat-topped peak counts once.
pub fn count_changes(values: &[f64]) -> Result<usize, KinematicsError> {
    if values.len() < 3 {
        return Err(KinematicsError::InsufficientData(
            "count_changes needs at least 3 samples".into(),
        ));
    }
    let mut collapsed: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if collapsed.last() != Some(&v) {
            collapsed.push(v);
        }
    }
    if collapsed.len() < 3 {
        return Ok(0);
    }
    let mut count = 0;
    for w in collapsed.windows(3) {
        if (w[1] > w[0] && w[1] > w[2]) || (w[1] < w[0] && w[1] < w[2]) {
            count += 1;
        }
    }
    Ok(count)
}

/// Number of profile changes divided by the profile duration in seconds.
pub fn relative_changes(p: &TimeProfile) -> Result<f64, KinematicsError> {
    let count = count_changes(&p.values)?;
    let dur = p.duration();
    if dur <= 0.0 {
        return Err(KinematicsError::InsufficientData("zero profile duration".into()));
    }
    Ok(count as f64 / dur)
}

/// Count maximal runs with speed below `v_thresh` lasting at least `min_dur`.
pub fn pen_stops(vel_global: &TimeProfile, v_thresh: f64, min_dur: f64) -> usize {
    let mut count = 0;
    let mut run_start: Option<usize> = None;
    let n = vel_global.len();
    for i in 0..=n {
        let below = i < n && vel_global.values[i] < v_thresh;
        match (below, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(start)) => {
                let dur = vel_global.t[i - 1] - vel_global.t[start];
                if dur >= min_dur {
                    count += 1;
                }
                run_start = None;
            }
            _ => {}
        }
    }
    count
}

/// Temporal feature set for a segmented recording.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFeatures {
    pub dur_total: f64,
    pub dur_on: f64,
    pub dur_air: f64,
    /// DUR_on / DUR_air; missing when there is no in-air time.
    pub durr: Option<f64>,
    pub sdur_on: Vec<f64>,
    pub sdur_air: Vec<f64>,
    /// median(SDUR_on) / median(SDUR_air); missing without in-air strokes.
    pub sdurr: Option<f64>,
    /// Stroke count normalised by total duration (strokes per second).
    pub tempo: f64,
    /// Number of in-air strokes between on-surface strokes.
    pub nint: usize,
}

pub fn temporal_features(rec: &InkRecording) -> Result<TemporalFeatures, KinematicsError> {
    let strokes = segment_strokes(rec);
    if rec.samples.len() < 2 {
        return Err(KinematicsError::InsufficientData("fewer than 2 samples".into()));
    }
    let stroke_dur = |s: &Stroke| rec.samples[s.end].t - rec.samples[s.start].t;
    let mut sdur_on = Vec::new();
    let mut sdur_air = Vec::new();
    let mut nint = 0;
    for (i, s) in strokes.iter().enumerate() {
        match s.kind {
            StrokeKind::OnSurface => sdur_on.push(stroke_dur(s)),
            StrokeKind::InAir => {
                sdur_air.push(stroke_dur(s));
                if i > 0 && i + 1 < strokes.len() {
                    nint += 1;
                }
            }
        }
    }
    let dur_on: f64 = sdur_on.iter().sum();
    let dur_air: f64 = sdur_air.iter().sum();
    let dur_total = rec.samples[rec.samples.len() - 1].t - rec.samples[0].t;
    let durr = (dur_air > 0.0).then(|| dur_on / dur_air);
    let sdurr = match (sdur_on.is_empty(), sdur_air.is_empty()) {
        (false, false) => {
            let m_air = stats::median(&sdur_air)?;
            (m_air > 0.0).then(|| stats::median(&sdur_on).unwrap() / m_air)
        }
        _ => None,
    };
    let tempo = if dur_total > 0.0 {
        strokes.len() as f64 / dur_total
    } else {
        0.0
    };
    Ok(TemporalFeatures {
        dur_total,
        dur_on,
        dur_air,
        durr,
        sdur_on,
        sdur_air,
        sdurr,
        tempo,
        nint,
    })
}

/// Theil-Sen slope of a profile over time.
pub fn profile_slope(p: &TimeProfile) -> Result<f64, KinematicsError> {
    Ok(stats::theil_sen_slope(&p.points())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::{InkRecording, Sample, SubjectMeta, TaskKind};

    fn make_rec(samples: Vec<Sample>) -> InkRecording {
        InkRecording {
            samples,
            sample_rate: 133.0,
            task: TaskKind::Tsk1,
            subject: SubjectMeta::anonymous(2),
        }
    }

    fn sample(x: f64, y: f64, t: f64, pen: u8) -> Sample {
        Sample { x, y, t, pen_state: pen, pressure: 1.0, tilt: 45.0, azimuth: 0.0 }
    }

    #[test]
    fn differentiate_linear_and_quadratic() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(differentiate(&t, &t).unwrap(), vec![1.0; 4]);
        let x: Vec<f64> = t.iter().map(|v| v * v).collect();
        // interior central differences are exact for quadratics; ends one-sided
        assert_eq!(differentiate(&x, &t).unwrap(), vec![1.0, 2.0, 4.0, 5.0]);
        assert_eq!(differentiate(&[7.0; 4], &t).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn velocity_straight_line() {
        // 100 mm in 2 s at constant rate
        let n = 267;
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let t = 2.0 * i as f64 / (n - 1) as f64;
                sample(50.0 * t, 0.0, t, 1)
            })
            .collect();
        let rec = make_rec(samples);
        let v = velocity(&rec, Scope::OnSurface).unwrap();
        assert!((stats::median(&v.global.values).unwrap() - 50.0).abs() < 1e-9);
        assert!((stats::median(&v.horizontal.values).unwrap() - 50.0).abs() < 1e-9);
        assert!(stats::median(&v.vertical.values).unwrap().abs() < 1e-9);
    }

    #[test]
    fn velocity_circle_constant_angular_rate() {
        let omega = 2.0 * std::f64::consts::PI; // one turn per second
        let r = 20.0;
        let n = 266; // 2 s at 133 Hz
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let t = i as f64 / 133.0;
                sample(r * (omega * t).cos(), r * (omega * t).sin(), t, 1)
            })
            .collect();
        let rec = make_rec(samples);
        let v = velocity(&rec, Scope::OnSurface).unwrap();
        let expected = omega * r;
        for (i, &g) in v.global.values.iter().enumerate() {
            if i == 0 || i == v.global.len() - 1 {
                continue;
            }
            assert!((g - expected).abs() / expected < 0.02, "sample {i}: {g}");
        }
    }

    #[test]
    fn acceleration_circle_centripetal() {
        let omega = 2.0 * std::f64::consts::PI;
        let r = 20.0;
        let n = 266;
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let t = i as f64 / 133.0;
                sample(r * (omega * t).cos(), r * (omega * t).sin(), t, 1)
            })
            .collect();
        let rec = make_rec(samples);
        let a = acceleration(&rec, Scope::OnSurface).unwrap();
        let expected = omega * omega * r;
        let m = stats::median(&a.global.values).unwrap();
        assert!((m - expected).abs() / expected < 0.02, "median {m} vs {expected}");
    }

    #[test]
    fn acceleration_constant_rate_fixture() {
        // x = 0.5*a*t^2 -> interior ax = a exactly
        let a = 8.0;
        let n = 40;
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let t = i as f64 / 133.0;
                sample(0.5 * a * t * t, 0.0, t, 1)
            })
            .collect();
        let rec = make_rec(samples);
        let acc = acceleration(&rec, Scope::OnSurface).unwrap();
        for &v in &acc.horizontal.values[2..n - 2] {
            assert!((v - a).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn time_dilation_halves_velocity_median() {
        let n = 200;
        let mk = |dilation: f64| {
            make_rec(
                (0..n)
                    .map(|i| {
                        let t = i as f64 / 133.0;
                        sample(30.0 * t + (7.0 * t).sin(), 5.0 * t, t * dilation, 1)
                    })
                    .collect(),
            )
        };
        let v1 = velocity(&mk(1.0), Scope::OnSurface).unwrap();
        let v2 = velocity(&mk(2.0), Scope::OnSurface).unwrap();
        let m1 = stats::median(&v1.global.values).unwrap();
        let m2 = stats::median(&v2.global.values).unwrap();
        assert!((m1 / m2 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn count_changes_cases() {
        let monotone: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(count_changes(&monotone).unwrap(), 0);
        assert_eq!(count_changes(&[0.0, 1.0, 1.0, 1.0, 0.0]).unwrap(), 1);
        // sin(2*pi*3*t) over [0,1) at 133 Hz has 6 interior extrema
        let v: Vec<f64> = (0..133)
            .map(|i| (2.0 * std::f64::consts::PI * 3.0 * i as f64 / 133.0).sin())
            .collect();
        assert_eq!(count_changes(&v).unwrap(), 6);
    }

    #[test]
    fn count_changes_invariant_under_monotone_rescale() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..300).map(|_| rng.gen::<f64>() * 10.0).collect();
        let mapped: Vec<f64> = v.iter().map(|x| (x * 0.3).exp()).collect();
        assert_eq!(count_changes(&v).unwrap(), count_changes(&mapped).unwrap());
    }

    fn profile_from(values: Vec<f64>, fs: f64) -> TimeProfile {
        let t = (0..values.len()).map(|i| i as f64 / fs).collect();
        TimeProfile { values, t, stroke_bounds: vec![0] }
    }

    #[test]
    fn pen_stop_counting() {
        let fast = profile_from(vec![100.0; 200], 133.0);
        assert_eq!(pen_stops(&fast, 10.0, 0.075), 0);

        // 200 ms dwell inserted
        let mut v = vec![100.0; 100];
        v.extend(vec![0.5; 27]); // ~200 ms at 133 Hz
        v.extend(vec![100.0; 100]);
        assert_eq!(pen_stops(&profile_from(v, 133.0), 10.0, 0.08), 1);

        // two dwells separated by fast motion
        let mut v = vec![100.0; 50];
        v.extend(vec![0.5; 20]);
        v.extend(vec![100.0; 50]);
        v.extend(vec![0.5; 20]);
        v.extend(vec![100.0; 50]);
        assert_eq!(pen_stops(&profile_from(v, 133.0), 10.0, 0.08), 2);
    }

    #[test]
    fn pen_stops_monotone_in_min_duration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..500).map(|_| rng.gen::<f64>() * 20.0).collect();
        let p = profile_from(v, 133.0);
        let mut last = usize::MAX;
        for min_dur in [0.0, 0.02, 0.05, 0.1, 0.2] {
            let c = pen_stops(&p, 10.0, min_dur);
            assert!(c <= last, "count increased as min_dur grew");
            last = c;
        }
    }

    #[test]
    fn temporal_single_stroke() {
        let n = 267; // 2 s
        let samples: Vec<Sample> = (0..n)
            .map(|i| sample(i as f64, 0.0, 2.0 * i as f64 / (n - 1) as f64, 1))
            .collect();
        let tf = temporal_features(&make_rec(samples)).unwrap();
        assert!((tf.dur_on - 2.0).abs() < 1e-12);
        assert_eq!(tf.nint, 0);
        assert!((tf.tempo - 0.5).abs() < 1e-12);
        assert!(tf.durr.is_none());
    }

    #[test]
    fn temporal_on_air_on() {
        // on(1 s), air(1 s), on(1 s)
        let mut samples = Vec::new();
        let fs = 133.0;
        for i in 0..400 {
            let t = i as f64 / fs;
            let pen = if t < 1.0 || t >= 2.0 { 1 } else { 0 };
            samples.push(sample(i as f64 * 0.1, 0.0, t, pen));
        }
        let tf = temporal_features(&make_rec(samples)).unwrap();
        assert_eq!(tf.nint, 1);
        let durr = tf.durr.unwrap();
        assert!((durr - 2.0).abs() < 0.05, "durr {durr}");
    }

    #[test]
    fn time_dilation_scales_temporal_features() {
        let mk = |f: f64| {
            let mut samples = Vec::new();
            for i in 0..300 {
                let t = f * i as f64 / 133.0;
                let pen = if i < 150 { 1 } else { 0 };
                samples.push(sample(i as f64 * 0.1, 0.0, t, pen));
            }
            make_rec(samples)
        };
        let a = temporal_features(&mk(1.0)).unwrap();
        let b = temporal_features(&mk(2.0)).unwrap();
        assert!((b.dur_total / a.dur_total - 2.0).abs() < 1e-9);
        assert!((a.tempo / b.tempo - 2.0).abs() < 1e-9);
        assert!((a.durr.unwrap() - b.durr.unwrap()).abs() < 1e-9);
    }

    #[test]
    fn slope_features() {
        // linearly decaying 100 -> 50 mm/s over 5 s
        let n = 666;
        let values: Vec<f64> = (0..n)
            .map(|i| 100.0 - 50.0 * (i as f64 / (n - 1) as f64))
            .collect();
        let t: Vec<f64> = (0..n).map(|i| 5.0 * i as f64 / (n - 1) as f64).collect();
        let p = TimeProfile { values, t, stroke_bounds: vec![0] };
        assert!((profile_slope(&p).unwrap() + 10.0).abs() < 1e-9);

        let flat = profile_from(vec![42.0; 50], 133.0);
        assert_eq!(profile_slope(&flat).unwrap(), 0.0);
    }

    #[test]
    fn slope_robust_to_outlier_spikes() {
        let n = 400;
        let t: Vec<f64> = (0..n).map(|i| 5.0 * i as f64 / (n - 1) as f64).collect();
        let clean: Vec<f64> = t.iter().map(|&tt| 100.0 - 10.0 * tt).collect();
        let mut spiky = clean.clone();
        for i in 0..(n / 10) {
            spiky[i * 10] += 500.0;
        }
        let pc = TimeProfile { values: clean, t: t.clone(), stroke_bounds: vec![0] };
        let ps = TimeProfile { values: spiky, t, stroke_bounds: vec![0] };
        let sc = profile_slope(&pc).unwrap();
        let ss = profile_slope(&ps).unwrap();
        assert!((sc - ss).abs() < 1e-6, "clean {sc} spiky {ss}");
    }
}
