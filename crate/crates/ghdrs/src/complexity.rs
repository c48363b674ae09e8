//! Information-theoretic and spectral features: Lempel-Ziv complexity,
//! Shannon entropy and power-spectral-density band medians.

use crate::stats;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComplexityError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

/// Frequency bands (Hz) used for the PSD medians. The defaults follow the
/// tremor-analysis convention: speed 0-5 Hz, tremor 5-12 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandConfig {
    pub speed_band: (f64, f64),
    pub tremor_band: (f64, f64),
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            speed_band: (0.0, 5.0),
            tremor_band: (5.0, 12.0),
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
}

/// Normalized Lempel-Ziv complexity: binarize by median, count LZ76 phrases
/// c(n), return c(n) * log2(n) / n. Constant signals return 0.
pub fn lzc(v: &[f64]) -> Result<f64, ComplexityError> {
    if v.len() < 16 {
        return Err(ComplexityError::InsufficientData(format!(
            "lzc needs at least 16 samples, got {}",
            v.len()
        )));
    }
    let med = stats::median(v)?;
    let bits: Vec<bool> = v.iter().map(|&x| x > med).collect();
    if bits.iter().all(|&b| b == bits[0]) {
        return Ok(0.0);
    }
    let c = lz76_phrase_count(&bits);
    let n = v.len() as f64;
    Ok(c as f64 * n.log2() / n)
}

/// LZ76 phrase counting (Kaspar-Schuster formulation).
fn lz76_phrase_count(s: &[bool]) -> usize {
    let n = s.len();
    let mut c = 1;
    let mut i = 0; // start of the prefix used as dictionary
    let mut k = 1; // current match length
    let mut l = 1; // start of the phrase being built
    let mut k_max = 1;
    loop {
        if s[i + k - 1] == s[l + k - 1] {
            k += 1;
            if l + k > n {
                c += 1;
                break;
            }
        } else {
            if k > k_max {
                k_max = k;
            }
            i += 1;
            if i == l {
                c += 1;
                l += k_max;
                if l + 1 > n {
                    break;
                }
                i = 0;
                k = 1;
                k_max = 1;
            } else {
                k = 1;
            }
        }
    }
    c
}

/// Shannon entropy in bits over an equal-width histogram of [min, max].
pub fn shannon_entropy(v: &[f64], bins: usize) -> Result<f64, ComplexityError> {
    if bins < 2 {
        return Err(ComplexityError::InsufficientData("bins must be >= 2".into()));
    }
    if v.len() < bins {
        return Err(ComplexityError::InsufficientData(format!(
            "need at least {} samples, got {}",
            bins,
            v.len()
        )));
    }
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    for &x in v {
        let idx = (((x - min) / (max - min)) * bins as f64) as usize;
        counts[idx.min(bins - 1)] += 1;
    }
    let n = v.len() as f64;
    let mut h = 0.0;
    for &c in &counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    Ok(h)
}

/// Welch-style averaged periodogram: Hann window, segment length 128,
/// 50% overlap, one-sided density scaling.
pub fn welch_psd(v: &[f64], fs: f64) -> Result<Spectrum, ComplexityError> {
    const SEGMENT: usize = 128;
    if v.len() < SEGMENT {
        return Err(ComplexityError::InsufficientData(format!(
            "welch needs at least {SEGMENT} samples, got {}",
            v.len()
        )));
    }
    let hop = SEGMENT / 2;
    let window: Vec<f64> = (0..SEGMENT)
        .map(|i| {
            let x = std::f64::consts::PI * i as f64 / SEGMENT as f64;
            x.sin() * x.sin()
        })
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(SEGMENT);
    let n_bins = SEGMENT / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let mut segments = 0usize;
    let mut start = 0;
    while start + SEGMENT <= v.len() {
        let mut buf: Vec<Complex<f64>> = v[start..start + SEGMENT]
            .iter()
            .zip(&window)
            .map(|(&x, &w)| Complex::new(x * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (k, value) in buf.iter().take(n_bins).enumerate() {
            let mut p = value.norm_sqr() / (fs * win_power);
            if k != 0 && k != SEGMENT / 2 {
                p *= 2.0; // fold the negative frequencies
            }
            psd[k] += p;
        }
        segments += 1;
        start += hop;
    }
    for p in &mut psd {
        *p /= segments as f64;
    }
    let freqs = (0..n_bins).map(|k| k as f64 * fs / SEGMENT as f64).collect();
    Ok(Spectrum { freqs, psd })
}

/// Median PSD over the speed and tremor bands of a uniformly resampled
/// on-surface speed profile.
pub fn psd_medians(
    speed: &[f64],
    fs: f64,
    bands: &BandConfig,
) -> Result<(f64, f64), ComplexityError> {
    if speed.len() < 256 {
        return Err(ComplexityError::InsufficientData(format!(
            "psd_medians needs at least 256 samples, got {}",
            speed.len()
        )));
    }
    let spectrum = welch_psd(speed, fs)?;
    let band_median = |lo: f64, hi: f64| -> Result<f64, ComplexityError> {
        let values: Vec<f64> = spectrum
            .freqs
            .iter()
            .zip(&spectrum.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| *p)
            .collect();
        Ok(stats::median(&values)?)
    };
    Ok((
        band_median(bands.speed_band.0, bands.speed_band.1)?,
        band_median(bands.tremor_band.0, bands.tremor_band.1)?,
    ))
}
