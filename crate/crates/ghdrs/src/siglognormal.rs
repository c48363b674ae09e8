//! Sigma-lognormal reconstruction of speed profiles.
//!
//! Greedy mode extraction: detect the largest remaining speed peak, estimate
//! (t0, mu, sigma, D) from characteristic points, refine by derivative-free
//! local search, subtract and repeat. Two backfitting passes re-refine each
//! component against the joint residual.

use crate::kinematics::TimeProfile;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SigLogError {
    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
}

/// One lognormal speed pulse:
/// v(t) = D / (sigma * sqrt(2*pi) * (t - t0)) * exp(-(ln(t - t0) - mu)^2 / (2*sigma^2))
/// for t > t0, else 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalComponent {
    /// Pulse amplitude (stroke length contribution) in mm.
    pub d: f64,
    /// Onset time in seconds.
    pub t0: f64,
    /// Log-time mean.
    pub mu: f64,
    /// Log-time standard deviation, > 0.
    pub sigma: f64,
}

impl LognormalComponent {
    pub fn speed_at(&self, t: f64) -> f64 {
        let dt = t - self.t0;
        if dt <= 0.0 {
            return 0.0;
        }
        let z = (dt.ln() - self.mu) / self.sigma;
        self.d / (self.sigma * (2.0 * std::f64::consts::PI).sqrt() * dt) * (-0.5 * z * z).exp()
    }

    /// Time of the speed maximum: t0 + exp(mu - sigma^2).
    pub fn peak_time(&self) -> f64 {
        self.t0 + (self.mu - self.sigma * self.sigma).exp()
    }

    pub fn peak_speed(&self) -> f64 {
        self.speed_at(self.peak_time())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Stop when residual energy falls below this fraction of the original.
    pub residual_energy_frac: f64,
    /// Stop when the next peak is below this fraction of the original max.
    pub min_peak_frac: f64,
    pub max_components: usize,
    /// Function-evaluation budget per component refinement.
    pub refine_evals: usize,
    /// Backfitting passes after greedy extraction.
    pub backfit_passes: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            residual_energy_frac: 0.01,
            min_peak_frac: 0.01,
            max_components: 60,
            refine_evals: 200,
            backfit_passes: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SigmaLognormalFit {
    pub components: Vec<LognormalComponent>,
    pub reconstructed: Vec<f64>,
    pub snr_db: f64,
    pub nb_log: usize,
}

/// Signal-to-noise ratio in dB between an original profile and its
/// reconstruction, capped at +90 dB.
pub fn snr(original: &[f64], reconstructed: &[f64]) -> Result<f64, SigLogError> {
    if original.len() != reconstructed.len() {
        return Err(SigLogError::InsufficientData("length mismatch".into()));
    }
    let signal: f64 = original.iter().map(|v| v * v).sum();
    if signal == 0.0 {
        return Err(SigLogError::Degenerate("zero signal energy".into()));
    }
    let residual: f64 = original
        .iter()
        .zip(reconstructed)
        .map(|(v, r)| (v - r) * (v - r))
        .sum();
    if residual == 0.0 {
        return Ok(90.0);
    }
    Ok((10.0 * (signal / residual).log10()).min(90.0))
}

/// SNR per lognormal component; missing (None) for zero-component fits.
pub fn snr_per_nblog(fit: &SigmaLognormalFit) -> Option<f64> {
    if fit.nb_log == 0 {
        None
    } else {
        Some(fit.snr_db / fit.nb_log as f64)
    }
}

fn check_uniform(t: &[f64]) -> Result<f64, SigLogError> {
    if t.len() < 2 {
        return Err(SigLogError::InsufficientData("need at least 2 samples".into()));
    }
    let dt = t[1] - t[0];
    for w in t.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1e-12) {
            return Err(SigLogError::NonUniformSampling(format!(
                "step {} differs from {}",
                w[1] - w[0],
                dt
            )));
        }
    }
    Ok(dt)
}

/// Estimate (t0, mu, sigma, D) from the peak location/value and half-height
/// crossing times of the current residual.
fn characteristic_point_init(
    speed: &[f64],
    t: &[f64],
    peak_idx: usize,
) -> LognormalComponent {
    let vp = speed[peak_idx];
    let tm = t[peak_idx];
    let half = vp / 2.0;

    // walk outwards to the half-height crossings, interpolating linearly
    let mut t1 = t[0];
    for i in (0..peak_idx).rev() {
        if speed[i] <= half {
            let frac = (half - speed[i]) / (speed[i + 1] - speed[i]);
            t1 = t[i] + frac * (t[i + 1] - t[i]);
            break;
        }
        t1 = t[i];
    }
    let mut t2 = t[t.len() - 1];
    for i in (peak_idx + 1)..t.len() {
        if speed[i] <= half {
            let frac = (speed[i - 1] - half) / (speed[i - 1] - speed[i]);
            t2 = t[i - 1] + frac * (t[i] - t[i - 1]);
            break;
        }
        t2 = t[i];
    }

    // For a lognormal pulse, ln(t - t0) is Gaussian in shape, so
    // (t1-t0)(t2-t0) = (tm-t0)^2, giving t0 in closed form.
    let denom = 2.0 * tm - t1 - t2;
    let mut t0 = if denom.abs() > 1e-12 {
        (tm * tm - t1 * t2) / denom
    } else {
        t1 - 0.25 * (t2 - t1)
    };
    if !(t0 < t1) || !t0.is_finite() {
        t0 = t1 - 0.25 * (t2 - t1).max(1e-3);
    }

    let ratio = ((t2 - t0) / (t1 - t0)).max(1.0 + 1e-9);
    let sigma = (ratio.ln() / (2.0 * (2.0_f64.ln() * 2.0).sqrt())).clamp(0.01, 3.0);
    let mu = (tm - t0).ln() + sigma * sigma;
    let d = vp * sigma * (2.0 * std::f64::consts::PI).sqrt() * (mu - 0.5 * sigma * sigma).exp();
    LognormalComponent { d, t0, mu, sigma }
}

/// Nelder-Mead over (t0, mu, ln sigma, ln D) with a fixed evaluation budget.
fn refine(
    init: LognormalComponent,
    target: &[f64],
    t: &[f64],
    max_evals: usize,
) -> LognormalComponent {
    let decode = |p: &[f64; 4]| LognormalComponent {
        t0: p[0],
        mu: p[1],
        sigma: p[2].exp(),
        d: p[3].exp(),
    };
    let sse = |p: &[f64; 4]| -> f64 {
        let c = decode(p);
        if !c.t0.is_finite() || !c.mu.is_finite() || c.sigma <= 0.0 || !c.d.is_finite() {
            return f64::INFINITY;
        }
        target
            .iter()
            .zip(t)
            .map(|(&v, &ti)| {
                let e = v - c.speed_at(ti);
                e * e
            })
            .sum()
    };

    let x0 = [
        init.t0,
        init.mu,
        init.sigma.max(1e-4).ln(),
        init.d.max(1e-12).ln(),
    ];
    let steps = [0.02 * (t[t.len() - 1] - t[0]).max(1e-3), 0.1, 0.1, 0.1];

    let mut evals = 0usize;
    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    simplex.push((x0, sse(&x0)));
    evals += 1;
    for i in 0..4 {
        let mut p = x0;
        p[i] += steps[i];
        simplex.push((p, sse(&p)));
        evals += 1;
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[4].1;
        if worst - best <= 1e-12 * (1.0 + best) {
            break;
        }
        let mut centroid = [0.0; 4];
        for s in &simplex[..4] {
            for i in 0..4 {
                centroid[i] += s.0[i] / 4.0;
            }
        }
        let xw = simplex[4].0;
        let combine = |alpha: f64| {
            let mut p = [0.0; 4];
            for i in 0..4 {
                p[i] = centroid[i] + alpha * (centroid[i] - xw[i]);
            }
            p
        };
        let xr = combine(1.0);
        let fr = sse(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = combine(2.0);
            let fe = sse(&xe);
            evals += 1;
            simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (xr, fr);
        } else {
            let xc = combine(-0.5);
            let fc = sse(&xc);
            evals += 1;
            if fc < simplex[4].1 {
                simplex[4] = (xc, fc);
            } else {
                // shrink toward best
                let xb = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    for i in 0..4 {
                        s.0[i] = xb[i] + 0.5 * (s.0[i] - xb[i]);
                    }
                    s.1 = sse(&s.0);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    decode(&simplex[0].0)
}

/// Fit a sigma-lognormal decomposition to a uniformly sampled speed profile.
pub fn fit_sigma_lognormal(
    speed: &[f64],
    t: &[f64],
    config: &FitConfig,
) -> Result<SigmaLognormalFit, SigLogError> {
    if speed.len() < 10 {
        return Err(SigLogError::InsufficientData(format!(
            "need at least 10 samples, got {}",
            speed.len()
        )));
    }
    check_uniform(t)?;

    let original_energy: f64 = speed.iter().map(|v| v * v).sum();
    let original_max = speed.iter().cloned().fold(0.0_f64, f64::max);
    if original_energy == 0.0 || original_max <= 0.0 {
        return Ok(SigmaLognormalFit {
            components: vec![],
            reconstructed: vec![0.0; speed.len()],
            snr_db: 0.0,
            nb_log: 0,
        });
    }

    let mut residual: Vec<f64> = speed.to_vec();
    let mut components: Vec<LognormalComponent> = Vec::new();

    while components.len() < config.max_components {
        let res_energy: f64 = residual.iter().map(|v| v * v).sum();
        if res_energy < config.residual_energy_frac * original_energy {
            break;
        }
        let peak_idx = residual
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if residual[peak_idx] < config.min_peak_frac * original_max {
            break;
        }
        let init = characteristic_point_init(&residual, t, peak_idx);
        let comp = refine(init, &residual, t, config.refine_evals);
        // reject a refinement that failed to reduce the residual
        let before = res_energy;
        let mut after = 0.0;
        for (r, &ti) in residual.iter().zip(t) {
            let e = r - comp.speed_at(ti);
            after += e * e;
        }
        if after >= before {
            break;
        }
        for (r, &ti) in residual.iter_mut().zip(t) {
            *r -= comp.speed_at(ti);
        }
        components.push(comp);
    }

    // backfitting: re-refine each component against residual + itself
    for _ in 0..config.backfit_passes {
        for k in 0..components.len() {
            let comp = components[k];
            for (r, &ti) in residual.iter_mut().zip(t) {
                *r += comp.speed_at(ti);
            }
            let updated = refine(comp, &residual, t, config.refine_evals);
            let better = {
                let mut before = 0.0;
                let mut after = 0.0;
                for (r, &ti) in residual.iter().zip(t) {
                    let e0 = r - comp.speed_at(ti);
                    let e1 = r - updated.speed_at(ti);
                    before += e0 * e0;
                    after += e1 * e1;
                }
                after < before
            };
            let keep = if better { updated } else { comp };
            for (r, &ti) in residual.iter_mut().zip(t) {
                *r -= keep.speed_at(ti);
            }
            components[k] = keep;
        }
    }

    let reconstructed: Vec<f64> = t
        .iter()
        .map(|&ti| components.iter().map(|c| c.speed_at(ti)).sum())
        .collect();
    let snr_db = if components.is_empty() {
        0.0
    } else {
        snr(speed, &reconstructed)?
    };
    Ok(SigmaLognormalFit {
        nb_log: components.len(),
        components,
        reconstructed,
        snr_db,
    })
}

/// Recording-level features from per-stroke fits: nbLog sums over strokes,
/// SNR combines energy-weighted (total signal over total residual energy).
pub struct RecordingFit {
    pub nb_log: usize,
    pub snr_db: f64,
}

pub fn fit_strokes(
    stroke_profiles: &[TimeProfile],
    config: &FitConfig,
) -> Result<RecordingFit, SigLogError> {
    let mut nb_log = 0;
    let mut signal_energy = 0.0;
    let mut residual_energy = 0.0;
    let mut fitted_any = false;
    for p in stroke_profiles {
        if p.len() < 10 {
            continue;
        }
        let fit = fit_sigma_lognormal(&p.values, &p.t, config)?;
        fitted_any = true;
        nb_log += fit.nb_log;
        for (v, r) in p.values.iter().zip(&fit.reconstructed) {
            signal_energy += v * v;
            residual_energy += (v - r) * (v - r);
        }
    }
    if !fitted_any {
        return Err(SigLogError::InsufficientData(
            "no stroke with at least 10 samples".into(),
        ));
    }
    let snr_db = if signal_energy == 0.0 {
        0.0
    } else if residual_energy == 0.0 {
        90.0
    } else {
        (10.0 * (signal_energy / residual_energy).log10()).min(90.0)
    };
    Ok(RecordingFit { nb_log, snr_db })
}
