//! Synthetic ink generation: task templates, lognormal-pulse kinematics
//! and controlled manifestation injection. Serves as the oracle corpus for
//! the extraction pipeline and as a demo cohort for norm fitting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ink::{InkRecording, Sample, Sex, SubjectMeta, TaskKind, NOMINAL_SAMPLE_RATE};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown knob `{0}`")]
    UnknownKnob(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub spiral_turns: f64,
    pub spiral_max_radius: f64,
    pub loop_count: usize,
    pub loop_height: f64,
    pub loop_spacing: f64,
    pub tooth_count: usize,
    pub tooth_base: f64,
    pub tooth_height: f64,
    pub bow_count: usize,
    pub bow_radius: f64,
    pub word_count: usize,
    pub letters_per_word: usize,
    pub letter_height: f64,
    pub word_gap: f64,
    /// Standard deviation of the random part of inter-word gaps; negative
    /// draws let neighbouring words overlap occasionally.
    pub word_gap_jitter: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            spiral_turns: 5.0,
            spiral_max_radius: 75.0,
            loop_count: 8,
            loop_height: 14.0,
            loop_spacing: 9.0,
            tooth_count: 8,
            tooth_base: 12.0,
            tooth_height: 16.0,
            bow_count: 6,
            bow_radius: 7.0,
            word_count: 4,
            letters_per_word: 4,
            letter_height: 9.0,
            word_gap: 6.0,
            word_gap_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicParams {
    /// Mean on-surface drawing speed in mm/s.
    pub target_speed: f64,
}

impl Default for KinematicParams {
    fn default() -> Self {
        KinematicParams { target_speed: 35.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Tremor amplitude in mm, added to on-surface positions.
    pub tremor_amplitude: f64,
    pub tremor_frequency: f64,
    /// Autoregressive pressure noise amplitude (device units, 0..1 scale).
    pub pressure_noise: f64,
    /// Slow sinusoidal tilt wobble amplitude in degrees.
    pub tilt_wobble: f64,
    /// Base in-air dwell between strokes, seconds.
    pub in_air_dwell: f64,
    pub dwell_multiplier: f64,
    /// Uniform time stretch applied to the finished recording.
    pub time_dilation: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            tremor_amplitude: 0.0,
            tremor_frequency: 8.0,
            pressure_noise: 0.0,
            tilt_wobble: 0.0,
            in_air_dwell: 0.25,
            dwell_multiplier: 1.0,
            time_dilation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub task: TaskKind,
    pub seed: u64,
    pub geometry: GeometryParams,
    pub kinematics: KinematicParams,
    pub noise: NoiseParams,
}

impl SynthConfig {
    pub fn for_task(task: TaskKind, seed: u64) -> Self {
        let mut geometry = GeometryParams::default();
        match task {
            TaskKind::Tsk2 => {
                geometry.spiral_turns = 2.5;
                geometry.spiral_max_radius = 37.5;
            }
            TaskKind::Tsk9 => geometry.word_count = 6,
            TaskKind::Tsk10 => geometry.word_count = 8,
            _ => {}
        }
        SynthConfig {
            task,
            seed,
            geometry,
            kinematics: KinematicParams::default(),
            noise: NoiseParams::default(),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let g = &self.geometry;
        let checks: [(bool, &str); 10] = [
            (g.spiral_turns > 0.0, "spiral turns must be positive"),
            (g.spiral_max_radius > 0.0, "spiral radius must be positive"),
            (g.loop_count >= 1, "need at least one loop"),
            (g.tooth_count >= 2, "need at least two teeth"),
            (g.bow_count >= 2, "need at least two bows"),
            (g.word_count >= 2, "need at least two words"),
            (g.letters_per_word >= 1, "need at least one letter per word"),
            (self.kinematics.target_speed > 0.0, "target speed must be positive"),
            (self.noise.time_dilation > 0.0, "time dilation must be positive"),
            (self.noise.in_air_dwell > 0.0, "in-air dwell must be positive"),
        ];
        for (ok, message) in checks {
            if !ok {
                return Err(SynthError::InvalidArgument(message.into()));
            }
        }
        let amplitudes = [
            self.noise.tremor_amplitude,
            self.noise.pressure_noise,
            self.noise.tilt_wobble,
            g.word_gap_jitter,
        ];
        if amplitudes.iter().any(|a| *a < 0.0) {
            return Err(SynthError::InvalidArgument("amplitudes must be >= 0".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// templates
// ---------------------------------------------------------------------------

/// Dense polyline for one pen-down stroke; `unit_ends` are point indices
/// closing each kinematic unit (loop, tooth, bow, half-turn).
struct TemplateStroke {
    points: Vec<(f64, f64)>,
    unit_ends: Vec<usize>,
}

const TEMPLATE_STEP: f64 = 0.1;

fn spiral_template(turns: f64, max_radius: f64) -> TemplateStroke {
    let total = 2.0 * std::f64::consts::PI * turns;
    let b = max_radius / total;
    let mut points = vec![(0.0, 0.0)];
    let mut unit_ends = Vec::new();
    let mut theta = 0.0;
    let mut next_unit = std::f64::consts::PI;
    while theta < total {
        let r = b * theta.max(0.05);
        // near the center the arc step must stay angularly fine, or chord
        // interpolation distorts the r(theta) relation
        theta += (TEMPLATE_STEP / r).min(0.02);
        let theta_c = theta.min(total);
        points.push((b * theta_c * theta_c.cos(), b * theta_c * theta_c.sin()));
        if theta_c >= next_unit || theta >= total {
            unit_ends.push(points.len() - 1);
            next_unit += std::f64::consts::PI;
        }
    }
    TemplateStroke { points, unit_ends }
}

/// Prolate-cycloid loops (cursive `l` row). `sign` +1 for upper loops,
/// -1 for lower loops.
fn loops_template(
    count: usize,
    height: f64,
    spacing: f64,
    sign: f64,
    origin: (f64, f64),
) -> TemplateStroke {
    let a = spacing / (2.0 * std::f64::consts::PI);
    // sine amplitude above `a` makes each loop cross itself
    let amp = 2.2 * a;
    let total = 2.0 * std::f64::consts::PI * count as f64;
    let steps_per_loop = 400;
    let n = steps_per_loop * count;
    let mut points = Vec::with_capacity(n + 1);
    let mut unit_ends = Vec::new();
    for i in 0..=n {
        let t = total * i as f64 / n as f64;
        let x = origin.0 + a * t - amp * t.sin();
        let y = origin.1 + sign * 0.5 * height * (1.0 - t.cos());
        points.push((x, y));
        if i > 0 && i % steps_per_loop == 0 {
            unit_ends.push(points.len() - 1);
        }
    }
    TemplateStroke { points, unit_ends }
}

fn zigzag_template(teeth: usize, base: f64, height: f64) -> TemplateStroke {
    let mut vertices = vec![(0.0, 0.0)];
    for i in 0..teeth {
        let x0 = i as f64 * base;
        vertices.push((x0 + 0.5 * base, height));
        vertices.push((x0 + base, 0.0));
    }
    let mut points = vec![vertices[0]];
    let mut unit_ends = Vec::new();
    for w in vertices.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
        let steps = (len / TEMPLATE_STEP).ceil().max(2.0) as usize;
        for s in 1..=steps {
            let f = s as f64 / steps as f64;
            points.push((x0 + f * (x1 - x0), y0 + f * (y1 - y0)));
        }
        unit_ends.push(points.len() - 1);
    }
    TemplateStroke { points, unit_ends }
}

/// Touching semicircular bows drawn left to right over the baseline.
fn arcade_template(bows: usize, radius: f64, origin: (f64, f64)) -> TemplateStroke {
    let steps_per_bow = 200;
    let mut points = Vec::new();
    let mut unit_ends = Vec::new();
    for i in 0..bows {
        let cx = origin.0 + radius + 2.0 * radius * i as f64;
        let start = if i == 0 { 0 } else { 1 };
        for s in start..=steps_per_bow {
            let theta = std::f64::consts::PI * (1.0 - s as f64 / steps_per_bow as f64);
            points.push((cx + radius * theta.cos(), origin.1 + radius * theta.sin()));
        }
        unit_ends.push(points.len() - 1);
    }
    TemplateStroke { points, unit_ends }
}

fn line_template(from: (f64, f64), to: (f64, f64)) -> TemplateStroke {
    let len = ((to.0 - from.0).powi(2) + (to.1 - from.1).powi(2)).sqrt();
    let steps = (len / TEMPLATE_STEP).ceil().max(2.0) as usize;
    let points = (0..=steps)
        .map(|s| {
            let f = s as f64 / steps as f64;
            (from.0 + f * (to.0 - from.0), from.1 + f * (to.1 - from.1))
        })
        .collect::<Vec<_>>();
    let unit_ends = vec![points.len() - 1];
    TemplateStroke { points, unit_ends }
}

/// Word-like loop clusters with in-air gaps; letterform realism is not a
/// goal, the features under test are shape-agnostic.
fn pseudo_text_template(g: &GeometryParams, rng: &mut ChaCha8Rng) -> Vec<TemplateStroke> {
    let letter_spacing = 0.65 * g.letter_height;
    let mut strokes = Vec::new();
    let mut x = 0.0;
    for w in 0..g.word_count {
        let word = loops_template(
            g.letters_per_word,
            g.letter_height,
            letter_spacing,
            1.0,
            (x, 0.0),
        );
        let width = word.points.last().unwrap().0 - word.points[0].0;
        strokes.push(word);
        if w + 1 < g.word_count {
            let jitter = g.word_gap_jitter * randn(rng);
            x += width + g.word_gap + jitter;
        }
    }
    strokes
}

fn template_for(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<TemplateStroke> {
    let g = &config.geometry;
    match config.task {
        TaskKind::Tsk1 | TaskKind::Tsk2 => {
            vec![spiral_template(g.spiral_turns, g.spiral_max_radius)]
        }
        TaskKind::Tsk3 => vec![loops_template(g.loop_count, g.loop_height, g.loop_spacing, 1.0, (0.0, 0.0))],
        TaskKind::Tsk4 => vec![loops_template(g.loop_count, g.loop_height, g.loop_spacing, -1.0, (0.0, 0.0))],
        TaskKind::Tsk5 => vec![zigzag_template(g.tooth_count, g.tooth_base, g.tooth_height)],
        TaskKind::Tsk6 => vec![arcade_template(g.bow_count, g.bow_radius, (0.0, 0.0))],
        TaskKind::Tsk7 => vec![
            line_template((0.0, 0.0), (40.0, 28.0)),
            line_template((50.0, 0.0), (90.0, 28.0)),
        ],
        TaskKind::Tsk8 | TaskKind::Tsk9 | TaskKind::Tsk10 => pseudo_text_template(g, rng),
    }
}

// ---------------------------------------------------------------------------
// kinematics
// ---------------------------------------------------------------------------

fn cumulative_lengths(points: &[(f64, f64)]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        cum.push(acc);
    }
    cum
}

fn point_at(points: &[(f64, f64)], cum: &[f64], s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, *cum.last().unwrap());
    let idx = cum.partition_point(|&c| c < s).max(1).min(cum.len() - 1);
    let (c0, c1) = (cum[idx - 1], cum[idx]);
    let f = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
    let (p0, p1) = (points[idx - 1], points[idx]);
    (p0.0 + f * (p1.0 - p0.0), p0.1 + f * (p1.1 - p0.1))
}

fn lognormal_pulse(t: f64, onset: f64, d: f64, mu: f64, sigma: f64) -> f64 {
    let dt = t - onset;
    if dt <= 0.0 {
        return 0.0;
    }
    let z = (dt.ln() - mu) / sigma;
    d / (sigma * (2.0 * std::f64::consts::PI).sqrt() * dt) * (-0.5 * z * z).exp()
}

/// Trace one stroke at 133 Hz: a lognormal speed pulse per template unit,
/// positions interpolated along the arc length.
fn stroke_positions(template: &TemplateStroke, speed: f64, fs: f64) -> Vec<(f64, f64)> {
    let cum = cumulative_lengths(&template.points);
    let total_len = *cum.last().unwrap();
    let sigma = 0.35;
    let mut pulses = Vec::new();
    let mut onset = 0.0;
    let mut prev_end = 0;
    for &end in &template.unit_ends {
        let d = cum[end] - cum[prev_end];
        if d > 1e-9 {
            let duration = d / speed;
            // bulk of the pulse mass inside [onset, onset + ~1.2*duration]
            let mu = (1.17 * duration).ln() - 2.0 * sigma;
            pulses.push((onset, d, mu));
            onset += duration;
        }
        prev_end = end;
    }
    if pulses.is_empty() {
        return vec![template.points[0]];
    }

    let dt_fine = 1.0 / (8.0 * fs);
    let t_limit = 2.0 * onset + 1.0;
    let mut positions = Vec::new();
    let mut s = 0.0;
    let mut v_prev = 0.0;
    let mut t = 0.0;
    let mut next_sample = 0.0;
    while t < t_limit {
        if t + 1e-12 >= next_sample {
            positions.push(point_at(&template.points, &cum, s));
            next_sample += 1.0 / fs;
        }
        let v: f64 = pulses
            .iter()
            .map(|&(t0, d, mu)| lognormal_pulse(t + dt_fine, t0, d, mu, sigma))
            .sum();
        s += 0.5 * (v_prev + v) * dt_fine;
        v_prev = v;
        t += dt_fine;
        if s >= total_len - 0.02 {
            positions.push(point_at(&template.points, &cum, total_len));
            break;
        }
    }
    if positions.len() < 3 {
        positions = template.points.iter().step_by(template.points.len() / 3 + 1).cloned().collect();
        positions.push(*template.points.last().unwrap());
    }
    positions
}

fn randn(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn heading_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    let deg = (to.1 - from.1).atan2(to.0 - from.0).to_degrees();
    (deg + 360.0) % 360.0
}

/// Generate a synthetic recording for the configured task: template
/// geometry, lognormal-pulse speed at 133 Hz, smooth pressure profile and
/// configured noise. Deterministic per seed.
pub fn generate(config: &SynthConfig) -> Result<InkRecording, SynthError> {
    config.validate()?;
    let fs = NOMINAL_SAMPLE_RATE;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strokes = template_for(config, &mut rng);
    let tremor_phase_x: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let tremor_phase_y: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let tilt_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut samples: Vec<Sample> = Vec::new();
    let mut k: u64 = 0; // global sample index, t = k / fs
    let mut pressure_ar = 0.0;
    for (si, stroke) in strokes.iter().enumerate() {
        // in-air transition from the previous stroke's end
        if si > 0 {
            let from = (samples.last().unwrap().x, samples.last().unwrap().y);
            let to = stroke.points[0];
            let dwell = config.noise.in_air_dwell * config.noise.dwell_multiplier;
            let n_air = ((dwell * fs).round() as usize).max(3);
            for i in 1..=n_air {
                let f = i as f64 / (n_air + 1) as f64;
                let ease = f * f * (3.0 - 2.0 * f);
                let t = k as f64 / fs;
                samples.push(Sample {
                    x: from.0 + ease * (to.0 - from.0),
                    y: from.1 + ease * (to.1 - from.1),
                    t,
                    pen_state: 0,
                    pressure: 0.0,
                    tilt: 45.0,
                    azimuth: heading_deg(from, to),
                });
                k += 1;
            }
        }
        let positions = stroke_positions(stroke, config.kinematics.target_speed, fs);
        let n = positions.len();
        for (i, &(x, y)) in positions.iter().enumerate() {
            let t = k as f64 / fs;
            let progress = i as f64 / (n - 1).max(1) as f64;
            pressure_ar = 0.95 * pressure_ar + config.noise.pressure_noise * randn(&mut rng);
            let pressure =
                (0.45 + 0.3 * (std::f64::consts::PI * progress).sin() + pressure_ar).clamp(0.05, 1.5);
            let next = positions.get(i + 1).copied().unwrap_or((x, y));
            let prev = if i > 0 { positions[i - 1] } else { (x, y) };
            let tw = config.noise.tilt_wobble;
            let tilt = (45.0 + tw * (std::f64::consts::TAU * 0.3 * t + tilt_phase).sin())
                .clamp(0.0, 90.0);
            let ta = config.noise.tremor_amplitude;
            let tf = config.noise.tremor_frequency;
            samples.push(Sample {
                x: x + ta * (std::f64::consts::TAU * tf * t + tremor_phase_x).sin(),
                y: y + ta * (std::f64::consts::TAU * tf * t + tremor_phase_y).sin(),
                t,
                pen_state: 1,
                pressure,
                tilt,
                azimuth: heading_deg(prev, next),
            });
            k += 1;
        }
    }
    if config.noise.time_dilation != 1.0 {
        for s in &mut samples {
            s.t *= config.noise.time_dilation;
        }
    }
    Ok(InkRecording {
        samples,
        sample_rate: fs / config.noise.time_dilation,
        task: config.task,
        subject: SubjectMeta::anonymous(0),
    })
}

// ---------------------------------------------------------------------------
// manifestation knobs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Knob {
    Slow,
    Dysfluent,
    UnstablePressure,
    UnstableTilt,
    LongInAir,
    UnevenAmplitude,
    UnevenSpacing,
    Overwriting,
}

impl Knob {
    pub const ALL: [Knob; 8] = [
        Knob::Slow,
        Knob::Dysfluent,
        Knob::UnstablePressure,
        Knob::UnstableTilt,
        Knob::LongInAir,
        Knob::UnevenAmplitude,
        Knob::UnevenSpacing,
        Knob::Overwriting,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Knob::Slow => "slow",
            Knob::Dysfluent => "dysfluent",
            Knob::UnstablePressure => "unstable-pressure",
            Knob::UnstableTilt => "unstable-tilt",
            Knob::LongInAir => "long-in-air",
            Knob::UnevenAmplitude => "uneven-amplitude",
            Knob::UnevenSpacing => "uneven-spacing",
            Knob::Overwriting => "overwriting",
        }
    }

    pub fn parse(s: &str) -> Result<Knob, SynthError> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SynthError::UnknownKnob(s.to_string()))
    }
}

impl std::fmt::Display for Knob {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn on_surface_stroke_spans(rec: &InkRecording) -> Vec<(usize, usize)> {
    crate::ink::segment_strokes(rec)
        .into_iter()
        .filter(|s| s.kind == crate::ink::StrokeKind::OnSurface)
        .map(|s| (s.start, s.end))
        .collect()
}

/// Inject one controlled manifestation into a recording. Severity 1.0 is
/// the standard dose (e.g. `slow` then dilates time by exactly 2x).
pub fn apply_manifestation(
    rec: &InkRecording,
    knob: Knob,
    severity: f64,
    seed: u64,
) -> Result<InkRecording, SynthError> {
    if severity <= 0.0 {
        return Err(SynthError::InvalidArgument(format!(
            "severity must be positive, got {severity}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = rec.clone();
    match knob {
        Knob::Slow => {
            let factor = 1.0 + severity;
            for s in &mut out.samples {
                s.t *= factor;
            }
            out.sample_rate = rec.sample_rate / factor;
        }
        Knob::LongInAir => {
            let factor = 1.0 + 2.0 * severity;
            let mut new_t = out.samples[0].t;
            let mut prev_t = out.samples[0].t;
            for i in 0..out.samples.len() {
                if i > 0 {
                    let dt = out.samples[i].t - prev_t;
                    let in_air =
                        out.samples[i].pen_state == 0 && out.samples[i - 1].pen_state == 0;
                    prev_t = out.samples[i].t;
                    new_t += if in_air { dt * factor } else { dt };
                }
                out.samples[i].t = new_t;
            }
        }
        Knob::Dysfluent => {
            let amp = 0.35 * severity;
            let freq = 8.0;
            let phase_x: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let phase_y: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            for s in &mut out.samples {
                if s.pen_state == 1 {
                    s.x += amp * (std::f64::consts::TAU * freq * s.t + phase_x).sin();
                    s.y += amp * (std::f64::consts::TAU * freq * s.t + phase_y).sin();
                }
            }
        }
        Knob::UnstablePressure => {
            let t0 = out.samples[0].t;
            let t1 = out.samples.last().unwrap().t;
            let span = (t1 - t0).max(1e-9);
            let mut ar = 0.0;
            for s in &mut out.samples {
                if s.pen_state == 1 {
                    ar = 0.92 * ar + 0.12 * severity * randn(&mut rng);
                    let drift = -0.3 * severity * (s.t - t0) / span;
                    s.pressure = (s.pressure + ar + drift).clamp(0.02, 1.5);
                }
            }
        }
        Knob::UnstableTilt => {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut ar = 0.0;
            for s in &mut out.samples {
                ar = 0.9 * ar + 3.0 * severity * randn(&mut rng);
                let wave = 12.0 * severity * (std::f64::consts::TAU * 0.4 * s.t + phase).sin();
                s.tilt = (s.tilt + wave + ar).clamp(0.0, 90.0);
            }
        }
        Knob::UnevenAmplitude => {
            for (start, end) in on_surface_stroke_spans(&out) {
                let factor = (1.0 + 0.2 * severity * randn(&mut rng)).clamp(0.4, 2.5);
                let baseline = out.samples[start..=end]
                    .iter()
                    .map(|s| s.y)
                    .fold(f64::INFINITY, f64::min);
                for s in &mut out.samples[start..=end] {
                    s.y = baseline + factor * (s.y - baseline);
                }
            }
        }
        Knob::UnevenSpacing => {
            // pull strokes toward their predecessor, ramping the shift
            // across the in-air transition so the path stays continuous
            let spans = on_surface_stroke_spans(&out);
            for w in spans.windows(2) {
                let (_, prev_end) = w[0];
                let (start, _) = w[1];
                let dx = out.samples[start].x - out.samples[prev_end].x;
                // crowd each stroke past its predecessor so neighbours
                // collide; an already-overlapping pair is pushed further in
                let overshoot = rng.gen_range(1.0..3.0);
                let delta = -severity.min(1.0) * (dx.max(0.0) + overshoot);
                let air_len = (start - prev_end) as f64;
                for i in prev_end + 1..start {
                    let f = (i - prev_end) as f64 / air_len;
                    out.samples[i].x += f * delta;
                }
                for s in &mut out.samples[start..] {
                    s.x += delta;
                }
            }
        }
        Knob::Overwriting => {
            let spans = on_surface_stroke_spans(&out);
            let n_dup = ((0.3 * severity * spans.len() as f64).round() as usize).clamp(1, spans.len());
            let fs = rec.sample_rate;
            for &(start, end) in spans.iter().take(n_dup) {
                let last = *out.samples.last().unwrap();
                let target = out.samples[start];
                let n_air = ((0.25 * fs).round() as usize).max(3);
                let mut t = last.t;
                for i in 1..=n_air {
                    let f = i as f64 / (n_air + 1) as f64;
                    let ease = f * f * (3.0 - 2.0 * f);
                    t += 1.0 / fs;
                    out.samples.push(Sample {
                        x: last.x + ease * (target.x - last.x),
                        y: last.y + ease * (target.y - last.y),
                        t,
                        pen_state: 0,
                        pressure: 0.0,
                        tilt: last.tilt,
                        azimuth: last.azimuth,
                    });
                }
                let t_offset = t + 1.0 / fs - out.samples[start].t;
                for i in start..=end {
                    let src = out.samples[i];
                    out.samples.push(Sample {
                        x: src.x + 0.3 * severity * (rng.gen::<f64>() - 0.5),
                        y: src.y + 0.3 * severity * (rng.gen::<f64>() - 0.5),
                        t: src.t + t_offset,
                        ..src
                    });
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// cohort generation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSpec {
    pub grades: Vec<u8>,
    pub intact_per_grade: usize,
    /// Injected subjects per grade, by knob.
    pub injected_per_grade: Vec<(Knob, usize)>,
    pub tasks: Vec<TaskKind>,
    pub seed: u64,
    /// Shrink task geometry for faster downstream extraction.
    pub compact: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub meta: SubjectMeta,
    pub knobs: Vec<Knob>,
    pub severity: f64,
    pub recordings: Vec<InkRecording>,
}

fn compact_geometry(g: &mut GeometryParams) {
    g.spiral_turns = 3.0;
    g.spiral_max_radius = 35.0;
    g.loop_count = 6;
    g.tooth_count = 6;
    g.bow_count = 5;
    g.word_count = 3;
    g.letters_per_word = 4;
}

/// Generate a labeled cohort: grade trends (faster, steadier writing with
/// grade), per-subject variability, optional injected manifestations and
/// synthetic OEE/HPSQ labels tied to injection severity.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticSubject>, SynthError> {
    if spec.grades.is_empty() || spec.tasks.is_empty() {
        return Err(SynthError::InvalidArgument("need grades and tasks".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut subjects = Vec::new();
    for &grade in &spec.grades {
        let mut roster: Vec<Option<Knob>> = vec![None; spec.intact_per_grade];
        for &(knob, count) in &spec.injected_per_grade {
            roster.extend(std::iter::repeat(Some(knob)).take(count));
        }
        for (idx, knob) in roster.into_iter().enumerate() {
            let subject_seed: u64 = master.gen();
            let mut srng = ChaCha8Rng::seed_from_u64(subject_seed);
            let g = grade as f64;
            let speed = 24.0 * (1.0 + 0.12 * g) * (1.0 + 0.06 * randn(&mut srng));
            let tremor = (0.45 * (1.0 - 0.12 * g)).max(0.06) * srng.gen_range(0.6..1.4);
            let dwell_mult = srng.gen_range(0.8..1.5);
            let tilt_wobble = srng.gen_range(1.0..4.0);
            let pressure_noise = srng.gen_range(0.01..0.05);
            let severity = if knob.is_some() { srng.gen_range(1.0..1.5) } else { 0.0 };

            let mut recordings = Vec::new();
            for &task in &spec.tasks {
                let mut config = SynthConfig::for_task(task, subject_seed ^ (task.index() as u64 + 1));
                if spec.compact {
                    compact_geometry(&mut config.geometry);
                }
                config.geometry.word_gap = 4.0;
                config.geometry.word_gap_jitter = 4.0;
                config.kinematics.target_speed = speed.max(8.0);
                config.noise.tremor_amplitude = tremor;
                config.noise.dwell_multiplier = dwell_mult;
                config.noise.tilt_wobble = tilt_wobble;
                config.noise.pressure_noise = pressure_noise;
                let mut rec = generate(&config)?;
                if let Some(knob) = knob {
                    rec = apply_manifestation(
                        &rec,
                        knob,
                        severity,
                        subject_seed ^ 0x517,
                    )?;
                }
                recordings.push(rec);
            }

            let (oee, hpsq) = match knob {
                None => {
                    let oee = if srng.gen::<f64>() < 0.8 { 0 } else { 1 };
                    (oee, 4 + (srng.gen::<f64>() * 11.0) as u32)
                }
                Some(_) => {
                    let oee = if severity < 1.2 { 3 } else { 4 };
                    (oee, 12 + (severity * 12.0) as u32)
                }
            };
            let meta = SubjectMeta {
                id: format!("S{grade}{idx:03}"),
                grade,
                sex: if idx % 2 == 0 { Sex::Female } else { Sex::Male },
                oee: Some(oee),
                hpsq_total: Some(hpsq),
            };
            for rec in &mut recordings {
                rec.subject = meta.clone();
            }
            subjects.push(SyntheticSubject {
                meta,
                knobs: knob.into_iter().collect(),
                severity,
                recordings,
            });
        }
    }
    Ok(subjects)
}

/// Cohort manifest: one CSV row per subject.
pub fn manifest_csv(subjects: &[SyntheticSubject]) -> String {
    let mut out = String::from("subject,grade,sex,oee,hpsq,knobs\n");
    for s in subjects {
        let sex = match s.meta.sex {
            Sex::Female => "F",
            Sex::Male => "M",
            Sex::Unknown => "U",
        };
        let knobs: Vec<&str> = s.knobs.iter().map(|k| k.as_str()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.meta.id,
            s.meta.grade,
            sex,
            s.meta.oee.map(|v| v.to_string()).unwrap_or_default(),
            s.meta.hpsq_total.map(|v| v.to_string()).unwrap_or_default(),
            knobs.join("+"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::{psd_medians, BandConfig};
    use crate::geometry;
    use crate::ink::serialize_recording;
    use crate::kinematics::{self, Scope};
    use crate::stats;

    #[test]
    fn perfect_spiral_geometry() {
        let config = SynthConfig::for_task(TaskKind::Tsk1, 3);
        let rec = generate(&config).unwrap();
        let (points, _) = geometry::on_surface_points(&rec);
        let vel = kinematics::velocity(&rec, Scope::OnSurface).unwrap();
        let mean_speed = vel.global.values.iter().sum::<f64>() / vel.global.len() as f64;
        let f = geometry::spiral_features(&points, mean_speed).unwrap();
        assert!(f.dos < 1e-3, "dos {}", f.dos);
        let swvi = f.swvi.unwrap_or(0.0);
        assert!(swvi < 1e-3, "swvi {swvi}");
    }

    #[test]
    fn loops_have_equal_maxima() {
        let mut config = SynthConfig::for_task(TaskKind::Tsk3, 4);
        config.geometry.loop_count = 8;
        let rec = generate(&config).unwrap();
        let (points, _) = geometry::on_surface_points(&rec);
        let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        let es = geometry::vertical_extrema(&ys);
        assert_eq!(es.maxima.len(), 8, "expected 8 loop crests");
        let lmax: Vec<f64> = es.maxima.iter().map(|&(_, y)| y).collect();
        let ncv = stats::ncv(&lmax).unwrap();
        assert!(ncv < 0.02, "ncv of loop maxima {ncv}");
    }

    #[test]
    fn zigzag_and_arcade_templates_parse() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk5, 5)).unwrap();
        let (points, _) = geometry::on_surface_points(&rec);
        let teeth = geometry::zigzag_teeth(&points).unwrap();
        // the two edge teeth lack an enclosing pair of strict minima
        assert_eq!(teeth.dfb.len(), 6);
        for w in &teeth.dfb {
            let expected = 0.05 * 12.0; // chord at 95% height of a triangle
            assert!((w - expected).abs() < 0.1 * expected, "tooth width {w}");
        }
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk6, 5)).unwrap();
        let (points, _) = geometry::on_surface_points(&rec);
        let gaps = geometry::arcade_bows(&points).unwrap();
        assert_eq!(gaps.len(), 5, "6 bows -> 5 gaps");
    }

    #[test]
    fn tremor_raises_tremor_band_power() {
        let quiet = SynthConfig::for_task(TaskKind::Tsk1, 6);
        let mut shaky = quiet.clone();
        shaky.noise.tremor_amplitude = 0.5;
        let bands = BandConfig::default();
        let power = |config: &SynthConfig| {
            let rec = generate(config).unwrap();
            let vel = kinematics::velocity(&rec, Scope::OnSurface).unwrap();
            psd_medians(&vel.global.values, rec.sample_rate, &bands).unwrap().1
        };
        let (p_quiet, p_shaky) = (power(&quiet), power(&shaky));
        assert!(p_shaky > p_quiet, "tremor power {p_shaky} vs {p_quiet}");
    }

    #[test]
    fn generation_is_deterministic() {
        let config = SynthConfig::for_task(TaskKind::Tsk8, 99);
        let a = serialize_recording(&generate(&config).unwrap());
        let b = serialize_recording(&generate(&config).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut config = SynthConfig::for_task(TaskKind::Tsk3, 1);
        config.geometry.loop_count = 0;
        assert!(matches!(generate(&config), Err(SynthError::InvalidArgument(_))));
        assert!(matches!(Knob::parse("wobbly"), Err(SynthError::UnknownKnob(_))));
    }

    #[test]
    fn slow_knob_dilates_time_exactly() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk8, 7)).unwrap();
        let slow = apply_manifestation(&rec, Knob::Slow, 1.0, 1).unwrap();
        let before = kinematics::temporal_features(&rec).unwrap();
        let after = kinematics::temporal_features(&slow).unwrap();
        assert!((after.dur_total - 2.0 * before.dur_total).abs() < 1e-9);
        for (a, b) in rec.samples.iter().zip(&slow.samples) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.y, b.y);
        }
    }

    #[test]
    fn long_in_air_triples_air_time() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk8, 8)).unwrap();
        let out = apply_manifestation(&rec, Knob::LongInAir, 1.0, 1).unwrap();
        let before = kinematics::temporal_features(&rec).unwrap();
        let after = kinematics::temporal_features(&out).unwrap();
        assert!((after.dur_air - 3.0 * before.dur_air).abs() < 1e-9);
        assert!((after.dur_on - before.dur_on).abs() < 1e-9);
        assert!(after.durr.unwrap() < before.durr.unwrap());
    }

    #[test]
    fn uneven_amplitude_raises_height_variability() {
        let mut wins = 0;
        for seed in 0..20 {
            let rec = generate(&SynthConfig::for_task(TaskKind::Tsk8, 1000 + seed)).unwrap();
            let out = apply_manifestation(&rec, Knob::UnevenAmplitude, 1.0, seed).unwrap();
            let ncv_of = |r: &InkRecording| {
                stats::ncv(&geometry::stroke_heights(r)).unwrap_or(0.0)
            };
            if ncv_of(&out) > ncv_of(&rec) {
                wins += 1;
            }
        }
        assert!(wins >= 19, "height ncv increased in only {wins}/20 seeds");
    }

    #[test]
    fn overwriting_adds_crossings() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk8, 9)).unwrap();
        let out = apply_manifestation(&rec, Knob::Overwriting, 1.0, 2).unwrap();
        let before = geometry::intersections(&rec);
        let after = geometry::intersections(&out);
        assert!(after.niei > before.niei, "{} vs {}", after.niei, before.niei);
    }

    #[test]
    fn pressure_and_tilt_knobs_raise_variability() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk5, 10)).unwrap();
        let on_pressure = |r: &InkRecording| -> Vec<f64> {
            r.samples.iter().filter(|s| s.pen_state == 1).map(|s| s.pressure).collect()
        };
        let on_tilt = |r: &InkRecording| -> Vec<f64> {
            r.samples.iter().filter(|s| s.pen_state == 1).map(|s| s.tilt).collect()
        };
        let p = apply_manifestation(&rec, Knob::UnstablePressure, 1.0, 3).unwrap();
        assert!(
            stats::iqr(&on_pressure(&p)).unwrap() > stats::iqr(&on_pressure(&rec)).unwrap()
        );
        let t = apply_manifestation(&rec, Knob::UnstableTilt, 1.0, 3).unwrap();
        assert!(stats::iqr(&on_tilt(&t)).unwrap() > stats::iqr(&on_tilt(&rec)).unwrap());
    }

    #[test]
    fn knob_leaves_untargeted_features_stable() {
        // dysfluency shifts velocity texture but not duration or extent
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk5, 11)).unwrap();
        let out = apply_manifestation(&rec, Knob::Dysfluent, 1.0, 4).unwrap();
        let dur = |r: &InkRecording| kinematics::temporal_features(r).unwrap().dur_total;
        assert!((dur(&out) - dur(&rec)).abs() / dur(&rec) < 0.10);
        let width = |r: &InkRecording| {
            let xs: Vec<f64> = r.samples.iter().map(|s| s.x).collect();
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - xs.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        assert!((width(&out) - width(&rec)).abs() / width(&rec) < 0.10);
        // while the targeted direction moves clearly
        let changes = |r: &InkRecording| {
            let vel = kinematics::velocity(r, Scope::OnSurface).unwrap();
            kinematics::count_changes(&vel.global.values).unwrap() as f64
        };
        assert!(changes(&out) > 1.5 * changes(&rec));
    }

    #[test]
    fn uneven_spacing_compresses_layout() {
        let rec = generate(&SynthConfig::for_task(TaskKind::Tsk8, 12)).unwrap();
        let out = apply_manifestation(&rec, Knob::UnevenSpacing, 1.0, 5).unwrap();
        let width = |r: &InkRecording| {
            let xs: Vec<f64> = r.samples.iter().map(|s| s.x).collect();
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - xs.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        assert!(width(&out) < width(&rec));
        // timestamps untouched
        for (a, b) in rec.samples.iter().zip(&out.samples) {
            assert_eq!(a.t, b.t);
        }
    }

    #[test]
    fn cohort_is_deterministic_and_labeled() {
        let spec = CohortSpec {
            grades: vec![1, 2],
            intact_per_grade: 3,
            injected_per_grade: vec![(Knob::Slow, 1)],
            tasks: vec![TaskKind::Tsk5, TaskKind::Tsk8],
            seed: 42,
            compact: true,
        };
        let a = generate_cohort(&spec).unwrap();
        let b = generate_cohort(&spec).unwrap();
        assert_eq!(manifest_csv(&a), manifest_csv(&b));
        assert_eq!(
            serialize_recording(&a[0].recordings[0]),
            serialize_recording(&b[0].recordings[0])
        );
        assert_eq!(a.len(), 8);
        for s in &a {
            assert_eq!(s.recordings.len(), 2);
            if s.knobs.is_empty() {
                assert!(s.meta.oee.unwrap() <= 1);
            } else {
                assert!(s.meta.oee.unwrap() >= 3);
                assert!(s.meta.hpsq_total.unwrap() >= 19);
            }
        }
        // injected subjects really are slower
        let dur = |s: &SyntheticSubject| {
            kinematics::temporal_features(&s.recordings[1]).unwrap().dur_total
        };
        let intact_mean = a.iter().filter(|s| s.knobs.is_empty()).map(dur).sum::<f64>() / 6.0;
        for s in a.iter().filter(|s| !s.knobs.is_empty()) {
            assert!(dur(s) > 1.5 * intact_mean);
        }
    }
}
