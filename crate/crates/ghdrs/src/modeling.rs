//! Model-based selection: L1-regularized logistic regression with
//! leave-one-group-out cross-validation and balanced accuracy, per-task
//! feature ranking, task pairing by grade trend, and PCA with promax
//! rotation plus parallel analysis for the global components.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::FeatureKey;
use crate::ink::TaskKind;
use crate::stats;

#[derive(Debug, Error)]
pub enum ModelingError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("single-class labels")]
    SingleClass,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("collinear columns: {0:?}")]
    Collinear(Vec<(usize, usize)>),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    /// Regularization grid, ascending.
    pub grid: Vec<f64>,
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            grid: log_spaced_grid(250, -2.0, 0.25),
            seed: 42,
            tolerance: 1e-6,
            max_iterations: 5000,
        }
    }
}

/// `count` values of 10^e with exponents evenly spaced in [lo, hi].
pub fn log_spaced_grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let e = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            10f64.powf(e)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub c: f64,
    pub mean_bacc: f64,
}

impl LassoModel {
    pub fn margin(&self, z: &[f64]) -> f64 {
        self.intercept + z.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn predict(&self, z: &[f64]) -> bool {
        self.margin(z) > 0.0
    }
}

// ---------------------------------------------------------------------------
// standardization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub z: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// Original column indices that survived (non-constant).
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Standardization {
    /// Apply the stored transform to a new row (training statistics only).
    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(j, &orig)| (row[orig] - self.means[j]) / self.sds[j])
            .collect()
    }
}

/// Per-feature z-scores using the sample (n-1) standard deviation;
/// constant columns are dropped with a warning.
pub fn standardize(x: &[Vec<f64>]) -> Result<Standardization, ModelingError> {
    if x.len() < 2 {
        return Err(ModelingError::InvalidArgument("need at least 2 rows".into()));
    }
    let p = x[0].len();
    if x.iter().any(|r| r.len() != p) {
        return Err(ModelingError::InvalidArgument("ragged rows".into()));
    }
    let n = x.len() as f64;
    let mut kept = Vec::new();
    let mut means = Vec::new();
    let mut sds = Vec::new();
    let mut warnings = Vec::new();
    for j in 0..p {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let sd = var.sqrt();
        if sd > 0.0 {
            kept.push(j);
            means.push(mean);
            sds.push(sd);
        } else {
            warnings.push(format!("column {j} is constant, dropped"));
        }
    }
    let z = x
        .iter()
        .map(|r| {
            kept.iter()
                .enumerate()
                .map(|(j, &orig)| (r[orig] - means[j]) / sds[j])
                .collect()
        })
        .collect();
    Ok(Standardization { z, means, sds, kept, warnings })
}

// ---------------------------------------------------------------------------
// L1 logistic regression
// ---------------------------------------------------------------------------

fn balanced_class_weights(y: &[bool]) -> Result<(f64, f64), ModelingError> {
    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelingError::SingleClass);
    }
    let n = y.len() as f64;
    Ok((n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)))
}

fn lasso_objective(z: &[Vec<f64>], y: &[bool], cw: (f64, f64), c: f64, w: &[f64], b: f64) -> f64 {
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let mut loss = 0.0;
    for (row, &label) in z.iter().zip(y) {
        let margin = b + row.iter().zip(w).map(|(a, v)| a * v).sum::<f64>();
        let sign = if label { 1.0 } else { -1.0 };
        let weight = if label { cw.1 } else { cw.0 };
        // numerically stable log(1 + exp(-sign*margin))
        let t = -sign * margin;
        loss += weight * if t > 30.0 { t } else { (1.0 + t.exp()).ln() };
    }
    l1 + c * loss
}

/// Minimize ||w||_1 + C * sum_i cw(y_i) log(1 + exp(-y~_i (z_i.w + b)))
/// by proximal gradient with backtracking; the intercept is unpenalized
/// and class weights are balanced.
pub fn fit_lasso_logistic(
    z: &[Vec<f64>],
    y: &[bool],
    c: f64,
    config: &SelectionConfig,
) -> Result<LassoModel, ModelingError> {
    if z.len() != y.len() || z.is_empty() {
        return Err(ModelingError::InvalidArgument("rows/labels mismatch".into()));
    }
    let cw = balanced_class_weights(y)?;
    let p = z[0].len();
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut step = 1.0;
    let mut obj = lasso_objective(z, y, cw, c, &w, b);
    for _ in 0..config.max_iterations {
        // gradient of the smooth part
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for (row, &label) in z.iter().zip(y) {
            let margin = b + row.iter().zip(&w).map(|(a, v)| a * v).sum::<f64>();
            let sign = if label { 1.0 } else { -1.0 };
            let weight = if label { cw.1 } else { cw.0 };
            let sig = 1.0 / (1.0 + (sign * margin).exp());
            let g = -c * weight * sign * sig;
            for (gj, &xj) in gw.iter_mut().zip(row) {
                *gj += g * xj;
            }
            gb += g;
        }
        // backtracking proximal step
        let mut accepted = false;
        for _ in 0..60 {
            let mut w_new = Vec::with_capacity(p);
            for j in 0..p {
                let v = w[j] - step * gw[j];
                w_new.push(v.signum() * (v.abs() - step).max(0.0));
            }
            let b_new = b - step * gb;
            let obj_new = lasso_objective(z, y, cw, c, &w_new, b_new);
            if obj_new <= obj + 1e-15 {
                let delta = obj - obj_new;
                w = w_new;
                b = b_new;
                obj = obj_new;
                accepted = true;
                step *= 1.2;
                if delta < config.tolerance {
                    return Ok(LassoModel { weights: w, intercept: b, c, mean_bacc: f64::NAN });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(LassoModel { weights: w, intercept: b, c, mean_bacc: f64::NAN })
}

/// Balanced accuracy: mean of sensitivity and specificity.
pub fn bacc(y_true: &[bool], y_pred: &[bool]) -> Result<f64, ModelingError> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(ModelingError::InvalidArgument("length mismatch".into()));
    }
    let (mut tp, mut fn_, mut tn, mut fp) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (true, true) => tp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => tn += 1.0,
            (false, true) => fp += 1.0,
        }
    }
    if tp + fn_ == 0.0 || tn + fp == 0.0 {
        return Err(ModelingError::SingleClass);
    }
    Ok(0.5 * (tp / (tp + fn_) + tn / (tn + fp)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_mean_bacc: f64,
    /// (C, mean BACC over usable folds) for the whole grid.
    pub per_c: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
    /// Model refitted on all data at the best C.
    pub model: LassoModel,
}

/// Leave-one-group-out grid search: for each regularization value, hold
/// out each group once, train on the rest (standardized with training
/// statistics), and average balanced accuracy; ties prefer the smallest,
/// sparsest C.
pub fn grid_search_logo(
    x: &[Vec<f64>],
    y: &[bool],
    groups: &[usize],
    config: &SelectionConfig,
) -> Result<GridSearchResult, ModelingError> {
    if x.len() != y.len() || x.len() != groups.len() {
        return Err(ModelingError::InvalidArgument("rows/labels/groups mismatch".into()));
    }
    let mut unique: Vec<usize> = groups.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < 2 {
        return Err(ModelingError::InvalidArgument("need at least 2 groups".into()));
    }
    let mut warnings = Vec::new();

    // precompute fold splits and drop test folds without both classes
    let mut folds = Vec::new();
    for &g in &unique {
        let test: Vec<usize> = (0..x.len()).filter(|&i| groups[i] == g).collect();
        let train: Vec<usize> = (0..x.len()).filter(|&i| groups[i] != g).collect();
        let pos = test.iter().filter(|&&i| y[i]).count();
        if pos == 0 || pos == test.len() {
            warnings.push(format!("group {g}: single-class test fold skipped"));
            continue;
        }
        let train_pos = train.iter().filter(|&&i| y[i]).count();
        if train_pos == 0 || train_pos == train.len() {
            warnings.push(format!("group {g}: single-class training fold skipped"));
            continue;
        }
        folds.push((train, test));
    }
    if folds.is_empty() {
        return Err(ModelingError::SingleClass);
    }

    // fold data is identical across the grid, standardize once per fold
    let mut prepared = Vec::new();
    for (train, test) in &folds {
        let x_train: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
        let y_train: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let st = standardize(&x_train)?;
        let z_test: Vec<Vec<f64>> = test.iter().map(|&i| st.apply(&x[i])).collect();
        let y_test: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        prepared.push((st, y_train, z_test, y_test));
    }

    let mut per_c = Vec::with_capacity(config.grid.len());
    let mut best_c = config.grid[0];
    let mut best_mean = f64::NEG_INFINITY;
    for &c in &config.grid {
        let mut sum = 0.0;
        for (st, y_train, z_test, y_test) in &prepared {
            let model = fit_lasso_logistic(&st.z, y_train, c, config)?;
            let preds: Vec<bool> = z_test.iter().map(|r| model.predict(r)).collect();
            sum += bacc(y_test, &preds)?;
        }
        let mean = sum / prepared.len() as f64;
        per_c.push((c, mean));
        if mean > best_mean {
            best_mean = mean;
            best_c = c;
        }
    }

    let st = standardize(x)?;
    let mut model = fit_lasso_logistic(&st.z, y, best_c, config)?;
    // report weights on the original column order, zero for dropped columns
    let mut full = vec![0.0; x[0].len()];
    for (j, &orig) in st.kept.iter().enumerate() {
        full[orig] = model.weights[j];
    }
    model.weights = full;
    model.mean_bacc = best_mean;
    Ok(GridSearchResult { best_c, best_mean_bacc: best_mean, per_c, warnings, model })
}

// ---------------------------------------------------------------------------
// feature selection and task pairing
// ---------------------------------------------------------------------------

/// Winner across per-task models: best (lowest) mean rank of |weight|,
/// ties broken by higher mean |weight|.
pub fn select_feature(
    features: &[FeatureKey],
    per_task_weights: &[Vec<f64>],
) -> Result<FeatureKey, ModelingError> {
    let p = features.len();
    if p == 0 || per_task_weights.is_empty() {
        return Err(ModelingError::InvalidArgument("no features or models".into()));
    }
    if per_task_weights.iter().any(|w| w.len() != p) {
        return Err(ModelingError::InvalidArgument("weight vector length mismatch".into()));
    }
    if per_task_weights
        .iter()
        .all(|w| w.iter().all(|v| v.abs() == 0.0))
    {
        return Err(ModelingError::Degenerate("all models are zero".into()));
    }
    let mut mean_rank = vec![0.0; p];
    let mut mean_abs = vec![0.0; p];
    for weights in per_task_weights {
        let abs: Vec<f64> = weights.iter().map(|v| v.abs()).collect();
        // rank 1 = largest |weight|; average ranks on ties
        let ranks = stats::fractional_ranks(&abs);
        let n = abs.len() as f64;
        for j in 0..p {
            mean_rank[j] += (n + 1.0 - ranks[j]) / per_task_weights.len() as f64;
            mean_abs[j] += abs[j] / per_task_weights.len() as f64;
        }
    }
    let mut best = 0;
    for j in 1..p {
        let better = mean_rank[j] < mean_rank[best] - 1e-12
            || ((mean_rank[j] - mean_rank[best]).abs() <= 1e-12 && mean_abs[j] > mean_abs[best]);
        if better {
            best = j;
        }
    }
    Ok(features[best].clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskPairing {
    pub task: TaskKind,
    /// Spearman correlation with grade for every candidate task, for audit.
    pub rho_by_task: Vec<(TaskKind, f64)>,
    pub warnings: Vec<String>,
}

fn medians_decreasing(samples: &[(u8, f64)]) -> bool {
    let mut grades: Vec<u8> = samples.iter().map(|&(g, _)| g).collect();
    grades.sort_unstable();
    grades.dedup();
    if grades.len() < 2 {
        return false;
    }
    let mut last = f64::INFINITY;
    let mut strict = false;
    for g in grades {
        let vals: Vec<f64> = samples.iter().filter(|&&(gg, _)| gg == g).map(|&(_, v)| v).collect();
        let m = stats::median(&vals).unwrap_or(f64::NAN);
        if !(m <= last) {
            return false;
        }
        if m < last {
            strict = true;
        }
        last = m;
    }
    strict
}

/// Pair a feature with the task where the intact cohort shows the feature
/// softening with grade: monotone-decreasing per-grade medians and the
/// most negative Spearman correlation against grade.
pub fn pair_task(
    candidates: &[(TaskKind, Vec<(u8, f64)>)],
) -> Result<TaskPairing, ModelingError> {
    if candidates.is_empty() {
        return Err(ModelingError::InvalidArgument("no candidate tasks".into()));
    }
    let mut rho_by_task = Vec::new();
    let mut monotone = Vec::new();
    for (task, samples) in candidates {
        let grades: Vec<f64> = samples.iter().map(|&(g, _)| g as f64).collect();
        let values: Vec<f64> = samples.iter().map(|&(_, v)| v).collect();
        let mut unique = grades.clone();
        unique.sort_by(|a, b| a.partial_cmp(b).unwrap());
        unique.dedup();
        if unique.len() < 3 {
            return Err(ModelingError::InvalidArgument(format!(
                "task {}: need intact subjects spanning at least 3 grades",
                task.as_str()
            )));
        }
        let rho = stats::spearman_rho(&values, &grades)?;
        rho_by_task.push((*task, rho));
        if medians_decreasing(samples) {
            monotone.push((*task, rho));
        }
    }
    let mut warnings = Vec::new();
    let pool = if monotone.is_empty() {
        warnings.push("no task shows monotone-decreasing per-grade medians; falling back to the most negative correlation".to_string());
        rho_by_task.clone()
    } else {
        monotone
    };
    // most negative rho; ties resolve to the lowest task index
    let mut best = pool[0];
    for &(task, rho) in &pool[1..] {
        if rho < best.1 - 1e-12 || ((rho - best.1).abs() <= 1e-12 && task < best.0) {
            best = (task, rho);
        }
    }
    Ok(TaskPairing { task: best.0, rho_by_task, warnings })
}

// ---------------------------------------------------------------------------
// PCA, rotation, parallel analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFit {
    /// Unrotated loadings (features x retained), eigenvalue-scaled.
    pub loadings: DMatrix<f64>,
    pub retained: usize,
    /// Promax-rotated pattern loadings (features x retained).
    pub rotated: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

fn correlation_eigen(x: &[Vec<f64>]) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>), ModelingError> {
    let st = standardize(x)?;
    if st.kept.len() != x[0].len() {
        return Err(ModelingError::Degenerate("constant column in component input".into()));
    }
    let n = st.z.len();
    let p = st.kept.len();
    let z = DMatrix::from_fn(n, p, |i, j| st.z[i][j]);
    let r = (z.transpose() * &z) / (n as f64 - 1.0);
    // perfectly correlated pairs make the analysis unstable; name them
    let mut collinear = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if r[(i, j)].abs() > 1.0 - 1e-9 {
                collinear.push((i, j));
            }
        }
    }
    if !collinear.is_empty() {
        return Err(ModelingError::Collinear(collinear));
    }
    let eig = r.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(p, p, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((r, values, vectors))
}

/// Horn parallel analysis: retain components whose eigenvalue exceeds the
/// 95th percentile of eigenvalues at the same rank from column-permuted
/// replicates.
fn parallel_analysis(
    x: &[Vec<f64>],
    eigenvalues: &[f64],
    seed: u64,
    replicates: usize,
) -> Result<usize, ModelingError> {
    let n = x.len();
    let p = x[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permuted_eigs: Vec<Vec<f64>> = vec![Vec::with_capacity(replicates); p];
    let mut shuffled = x.to_vec();
    for _ in 0..replicates {
        for j in 0..p {
            let mut col: Vec<f64> = x.iter().map(|r| r[j]).collect();
            col.shuffle(&mut rng);
            for i in 0..n {
                shuffled[i][j] = col[i];
            }
        }
        let (_, values, _) = correlation_eigen(&shuffled)?;
        for (rank, v) in values.iter().enumerate() {
            permuted_eigs[rank].push(*v);
        }
    }
    let mut retained = 0;
    for rank in 0..p {
        let cutoff = stats::quantile(&permuted_eigs[rank], 0.95)?;
        if eigenvalues[rank] > cutoff {
            retained += 1;
        } else {
            break;
        }
    }
    Ok(retained)
}

/// Varimax rotation with Kaiser normalization (pairwise sweeps).
fn varimax(loadings: &DMatrix<f64>) -> DMatrix<f64> {
    let (p, k) = loadings.shape();
    if k < 2 {
        return loadings.clone();
    }
    let mut a = loadings.clone();
    // Kaiser: normalize rows to unit communality
    let mut comm = vec![0.0; p];
    for i in 0..p {
        comm[i] = a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if comm[i] > 0.0 {
            for j in 0..k {
                a[(i, j)] /= comm[i];
            }
        }
    }
    for _ in 0..100 {
        let mut total_rotation = 0.0;
        for c1 in 0..k {
            for c2 in (c1 + 1)..k {
                let (mut su, mut sv, mut suv, mut su2v2) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let u = a[(i, c1)] * a[(i, c1)] - a[(i, c2)] * a[(i, c2)];
                    let v = 2.0 * a[(i, c1)] * a[(i, c2)];
                    su += u;
                    sv += v;
                    suv += u * v;
                    su2v2 += u * u - v * v;
                }
                let pf = p as f64;
                let num = 2.0 * (suv - su * sv / pf);
                let den = su2v2 - (su * su - sv * sv) / pf;
                let phi = 0.25 * num.atan2(den);
                if phi.abs() > 1e-9 {
                    total_rotation += phi.abs();
                    let (cos, sin) = (phi.cos(), phi.sin());
                    for i in 0..p {
                        let x1 = a[(i, c1)];
                        let x2 = a[(i, c2)];
                        a[(i, c1)] = cos * x1 + sin * x2;
                        a[(i, c2)] = -sin * x1 + cos * x2;
                    }
                }
            }
        }
        if total_rotation < 1e-8 {
            break;
        }
    }
    for i in 0..p {
        for j in 0..k {
            a[(i, j)] *= comm[i];
        }
    }
    a
}

/// Promax: oblique target rotation of the varimax solution with power 4.
fn promax(varimax_loadings: &DMatrix<f64>, power: i32) -> DMatrix<f64> {
    let k = varimax_loadings.ncols();
    if k < 2 {
        return varimax_loadings.clone();
    }
    let a = varimax_loadings;
    let target = a.map(|v| v * v.abs().powi(power - 1));
    let ata = a.transpose() * a;
    let Some(inv) = ata.try_inverse() else {
        return a.clone();
    };
    let mut u = inv * a.transpose() * target;
    let Some(utu_inv) = (u.transpose() * &u).try_inverse() else {
        return a.clone();
    };
    for j in 0..k {
        let d = utu_inv[(j, j)].sqrt();
        for i in 0..k {
            u[(i, j)] *= d;
        }
    }
    a * u
}

/// Correlation-matrix PCA with promax rotation; the component count comes
/// from parallel analysis (100 permutation replicates, 95th percentile).
pub fn pca_promax(x: &[Vec<f64>], seed: u64) -> Result<ComponentFit, ModelingError> {
    if x.is_empty() || x[0].len() < 3 {
        return Err(ModelingError::InvalidArgument("need at least 3 feature columns".into()));
    }
    let (_, eigenvalues, vectors) = correlation_eigen(x)?;
    let retained = parallel_analysis(x, &eigenvalues, seed, 100)?;
    let k = retained.max(1);
    let p = x[0].len();
    let loadings = DMatrix::from_fn(p, k, |i, j| vectors[(i, j)] * eigenvalues[j].max(0.0).sqrt());
    let rotated = promax(&varimax(&loadings), 4);
    Ok(ComponentFit { loadings, retained, rotated, eigenvalues })
}

/// Members are the features whose |rotated loading| reaches 0.4; weights
/// are the loading magnitudes normalized to sum 1.
pub fn derive_weights(loadings: &[f64]) -> Result<Vec<(usize, f64)>, ModelingError> {
    let members: Vec<(usize, f64)> = loadings
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() >= 0.4)
        .map(|(i, v)| (i, v.abs()))
        .collect();
    if members.is_empty() {
        return Err(ModelingError::Degenerate("no loading reaches 0.4".into()));
    }
    let total: f64 = members.iter().map(|(_, v)| v).sum();
    Ok(members.into_iter().map(|(i, v)| (i, v / total)).collect())
}
