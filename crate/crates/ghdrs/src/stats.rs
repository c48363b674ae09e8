//! Robust scalar statistics used to collapse feature vectors to scalars
//! and to build normative tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
}

/// Statistic used to collapse a feature vector into a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Aggregator {
    Median,
    Iqr,
    Ncv,
    P95,
    Slope,
}

impl Aggregator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Aggregator::Median => "median",
            Aggregator::Iqr => "iqr",
            Aggregator::Ncv => "ncv",
            Aggregator::P95 => "95p",
            Aggregator::Slope => "slope",
        }
    }

    pub fn parse(s: &str) -> Option<Aggregator> {
        match s {
            "median" => Some(Aggregator::Median),
            "iqr" => Some(Aggregator::Iqr),
            "ncv" => Some(Aggregator::Ncv),
            "95p" => Some(Aggregator::P95),
            "slope" => Some(Aggregator::Slope),
            _ => None,
        }
    }
}

/// Sample median; mean of the two middle order statistics for even n.
pub fn median(v: &[f64]) -> Result<f64, StatsError> {
    if v.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    quantile(v, 0.5)
}

/// Linear-interpolation quantile at position q*(n-1) between order statistics.
pub fn quantile(v: &[f64], q: f64) -> Result<f64, StatsError> {
    if v.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::InvalidArgument(format!(
            "quantile q={q} outside [0, 1]"
        )));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile input"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        Ok(sorted[lo])
    } else {
        let frac = pos - lo as f64;
        Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
    }
}

/// Interquartile range: Q3 - Q1.
pub fn iqr(v: &[f64]) -> Result<f64, StatsError> {
    Ok(quantile(v, 0.75)? - quantile(v, 0.25)?)
}

/// Non-parametric coefficient of variation, iqr/median.
pub fn ncv(v: &[f64]) -> Result<f64, StatsError> {
    let m = median(v)?;
    if m == 0.0 {
        return Err(StatsError::Degenerate("ncv with zero median".into()));
    }
    Ok(iqr(v)? / m)
}

/// Cap on the number of pairwise slopes enumerated exactly; beyond this a
/// seeded uniform subsample of pairs is used.
const THEIL_SEN_PAIR_CAP: usize = 4_000_000;

/// Theil-Sen slope: median of all pairwise slopes over pairs with distinct x.
pub fn theil_sen_slope(points: &[(f64, f64)]) -> Result<f64, StatsError> {
    if points.len() < 2 {
        return Err(StatsError::InvalidArgument(
            "theil_sen_slope needs at least 2 points".into(),
        ));
    }
    let n = points.len();
    let total_pairs = n * (n - 1) / 2;
    let mut slopes = Vec::new();
    if total_pairs <= THEIL_SEN_PAIR_CAP {
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = points[j].0 - points[i].0;
                if dx != 0.0 {
                    slopes.push((points[j].1 - points[i].1) / dx);
                }
            }
        }
    } else {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7ea1_5e2a);
        while slopes.len() < THEIL_SEN_PAIR_CAP {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let dx = points[j].0 - points[i].0;
            if dx != 0.0 {
                slopes.push((points[j].1 - points[i].1) / dx);
            }
        }
    }
    if slopes.is_empty() {
        return Err(StatsError::Degenerate("all x values equal".into()));
    }
    median(&slopes)
}

/// Min-max scaling over a cohort; the stored (min, max) are reused for new
/// subjects without clamping, so out-of-range outputs are permitted.
pub fn minmax_scale(v: &[f64]) -> Result<(Vec<f64>, f64, f64), StatsError> {
    if v.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(StatsError::Degenerate("max equals min".into()));
    }
    let scaled = v.iter().map(|x| (x - min) / (max - min)).collect();
    Ok((scaled, min, max))
}

/// Apply a stored min-max transform to a new value (no clamping).
pub fn minmax_apply(x: f64, min: f64, max: f64) -> f64 {
    (x - min) / (max - min)
}

/// Fractional ranks with ties replaced by average rank (1-based).
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).expect("NaN in rank input"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::Degenerate("constant vector".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman's rank correlation: Pearson correlation of fractional ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument("length mismatch".into()));
    }
    if x.len() < 3 {
        return Err(StatsError::InvalidArgument(
            "spearman needs at least 3 pairs".into(),
        ));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_basics() {
        assert_eq!(median(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
        assert_eq!(median(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn median_matches_sort_oracle_on_large_random() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..10_001).map(|_| rng.gen::<f64>()).collect();
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = sorted[5000]; // odd length: exact middle order statistic
        assert_eq!(median(&v).unwrap(), oracle);
    }

    #[test]
    fn quantile_anchors() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        assert_eq!(quantile(&v, 0.95).unwrap(), 95.0);
        assert_eq!(quantile(&v, 0.0).unwrap(), 0.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 100.0);
        assert!(quantile(&v, 1.5).is_err());
    }

    #[test]
    fn ncv_hand_values() {
        assert_eq!(ncv(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        // Q1 = 2, Q3 = 4, median = 3 under linear interpolation
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!((ncv(&v).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            ncv(&[-1.0, 0.0, 1.0]),
            Err(StatsError::Degenerate(_))
        ));
    }

    #[test]
    fn iqr_translation_invariant() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let shifted: Vec<f64> = v.iter().map(|x| x + 17.5).collect();
        assert!((iqr(&v).unwrap() - iqr(&shifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn theil_sen_exact_on_linear() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        assert_eq!(theil_sen_slope(&pts).unwrap(), 2.0);
    }

    #[test]
    fn theil_sen_outlier_fixture() {
        // pairwise slopes enumerated by hand: [1,1,1,1,49,33,98/3] -> median 1
        let pts = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 100.0)];
        let mut slopes = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                slopes.push((pts[j].1 - pts[i].1) / (pts[j].0 - pts[i].0));
            }
        }
        let oracle = median(&slopes).unwrap();
        assert_eq!(theil_sen_slope(&pts).unwrap(), oracle);
    }

    #[test]
    fn theil_sen_y_translation_invariant() {
        let pts = [(0.0, 1.0), (1.0, 3.5), (2.0, 2.0), (4.0, 8.0)];
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y + 100.0)).collect();
        assert!(
            (theil_sen_slope(&pts).unwrap() - theil_sen_slope(&shifted).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn theil_sen_all_x_equal() {
        assert!(matches!(
            theil_sen_slope(&[(1.0, 2.0), (1.0, 3.0)]),
            Err(StatsError::Degenerate(_))
        ));
    }

    #[test]
    fn minmax_basics() {
        let (scaled, min, max) = minmax_scale(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(scaled, vec![0.0, 0.5, 1.0]);
        assert_eq!((min, max), (2.0, 6.0));
        // stored transform extrapolates without clamping
        assert_eq!(minmax_apply(8.0, min, max), 1.5);
        assert!(minmax_scale(&[3.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_basics() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let dec = [9.0, 7.0, 4.0, 1.0];
        assert!((spearman_rho(&x, &dec).unwrap() + 1.0).abs() < 1e-12);
        assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!(spearman_rho(&x, &[2.0; 4]).is_err());
    }

    #[test]
    fn spearman_matches_rank_then_pearson_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.gen::<f64>()).collect();
        // independent oracle: brute-force ranks by counting smaller elements
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let below = v.iter().filter(|b| *b < a).count() as f64;
                    let equal = v.iter().filter(|b| *b == a).count() as f64;
                    below + (equal + 1.0) / 2.0
                })
                .collect()
        };
        let expected = pearson(&rank(&x), &rank(&y)).unwrap();
        assert!((spearman_rho(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn quantile_monotone_in_q() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..57).map(|_| rng.gen::<f64>() * 10.0).collect();
        let mut last = f64::NEG_INFINITY;
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            let val = quantile(&v, q).unwrap();
            assert!(val >= last);
            last = val;
        }
        assert_eq!(median(&v).unwrap(), quantile(&v, 0.5).unwrap());
    }

    #[test]
    fn ncv_scale_invariant_for_positive() {
        let v = [2.0, 3.0, 5.0, 8.0, 13.0];
        let scaled: Vec<f64> = v.iter().map(|x| x * 7.3).collect();
        assert!((ncv(&v).unwrap() - ncv(&scaled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn theil_sen_resists_25_percent_outliers() {
        let n = 40;
        let mut pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64, 3.0 * i as f64 + 2.0)).collect();
        let clean = theil_sen_slope(&pts).unwrap();
        for k in 0..(n / 4) {
            pts[k * 4].1 += 1e6;
        }
        assert!((theil_sen_slope(&pts).unwrap() - clean).abs() < 1e-9);
    }
}
