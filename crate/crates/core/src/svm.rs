//! Soft-margin kernel SVM trained by sequential minimal optimization, with
//! one-vs-one voting for three or more classes.
//!
//! The SMO working pair is chosen deterministically: the maximal KKT
//! violator, paired with the index maximizing `|E_i - E_j|`; fallbacks scan
//! in index order. No randomization anywhere, so training is reproducible
//! and independent of how callers parallelize around it.
//!
//! Trained models serialize to a versioned JSON document that round-trips
//! predictions bit-for-bit (serde_json emits shortest-round-trip floats).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("degenerate features: all training rows are identical")]
    DegenerateFeatures,
    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("class pair ({a}, {b}) has no rows for one side")]
    EmptyPair { a: String, b: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("model (de)serialization failed: {0}")]
    Serde(String),
}

/// Kernel choice at configuration time. `Rbf { gamma: None }` resolves to
/// `1 / n_features` when training starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Linear,
    Rbf { gamma: Option<f64> },
}

/// Kernel with all parameters resolved; what trained models store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelSpec::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

impl KernelChoice {
    pub fn resolve(&self, n_features: usize) -> Result<KernelSpec, SvmError> {
        match self {
            KernelChoice::Linear => Ok(KernelSpec::Linear),
            KernelChoice::Rbf { gamma } => {
                let g = match gamma {
                    Some(g) => *g,
                    None => {
                        if n_features == 0 {
                            return Err(SvmError::InvalidInput("zero-width feature rows".into()));
                        }
                        1.0 / n_features as f64
                    }
                };
                if !g.is_finite() || g <= 0.0 {
                    return Err(SvmError::InvalidInput(format!(
                        "rbf gamma must be positive, got {g}"
                    )));
                }
                Ok(KernelSpec::Rbf { gamma: g })
            }
        }
    }
}

/// Per-class multipliers on the penalty C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassWeights {
    /// Same C for every class (matches an unweighted SVM).
    #[default]
    Uniform,
    /// `C_k = C * n / (K * n_k)`: upweights minority classes.
    Balanced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    pub kernel: KernelChoice,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub standardize: bool,
    pub class_weights: ClassWeights,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            kernel: KernelChoice::Rbf { gamma: None },
            c: 10.0,
            tol: 1e-3,
            max_passes: 50_000,
            standardize: true,
            class_weights: ClassWeights::Uniform,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<(), SvmError> {
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(SvmError::InvalidInput(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !self.tol.is_finite() || self.tol <= 0.0 {
            return Err(SvmError::InvalidInput(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Per-feature training mean and standard deviation. Constant columns get
/// sd 1 so they pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in rows {
            for k in 0..d {
                let c = row[k] - mean[k];
                var[k] += c * c;
            }
        }
        let sd = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, sd }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(self.sd.iter()))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Binary decision-function model: `sign(sum_i coef_i K(sv_i, x) + bias)`,
/// with a decision value of exactly 0 predicting +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub kernel: KernelSpec,
    pub support: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector; every stored alpha is > 0.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub standardizer: Option<Standardizer>,
    n_features: usize,
}

impl BinarySvm {
    pub fn decision(&self, row: &[f64]) -> Result<f64, SvmError> {
        if row.len() != self.n_features {
            return Err(SvmError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let std_row;
        let r = match &self.standardizer {
            Some(s) => {
                std_row = s.apply(row);
                &std_row[..]
            }
            None => row,
        };
        let mut d = self.bias;
        for (sv, c) in self.support.iter().zip(&self.coef) {
            d += c * self.kernel.eval(sv, r);
        }
        Ok(d)
    }

    /// +1 / -1 prediction; a decision value of 0 maps to +1.
    pub fn predict_sign(&self, row: &[f64]) -> Result<i8, SvmError> {
        Ok(if self.decision(row)? >= 0.0 { 1 } else { -1 })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}

/// Train a binary model on rows labeled +1 / -1.
pub fn train_binary(rows: &[Vec<f64>], y: &[f64], cfg: &SvmConfig) -> Result<BinarySvm, SvmError> {
    train_binary_with_alpha(rows, y, cfg).map(|(m, _)| m)
}

/// [`train_binary`] that also returns the per-row multipliers, for
/// optimality checks against brute-force oracles.
pub fn train_binary_with_alpha(
    rows: &[Vec<f64>],
    y: &[f64],
    cfg: &SvmConfig,
) -> Result<(BinarySvm, Vec<f64>), SvmError> {
    cfg.validate()?;
    if rows.len() != y.len() {
        return Err(SvmError::InvalidInput(format!(
            "{} rows but {} labels",
            rows.len(),
            y.len()
        )));
    }
    if rows.len() < 2 {
        return Err(SvmError::InvalidInput("need at least 2 rows".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(SvmError::InvalidInput(
            "ragged or empty feature rows".into(),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SvmError::InvalidInput("non-finite feature value".into()));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(SvmError::InvalidInput("labels must be +1 or -1".into()));
    }
    let n_pos = y.iter().filter(|&&v| v == 1.0).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(SvmError::SingleClass);
    }
    if rows.iter().all(|r| r == &rows[0]) {
        return Err(SvmError::DegenerateFeatures);
    }

    let standardizer = if cfg.standardize {
        Some(Standardizer::fit(rows))
    } else {
        None
    };
    let work: Vec<Vec<f64>> = match &standardizer {
        Some(s) => rows.iter().map(|r| s.apply(r)).collect(),
        None => rows.to_vec(),
    };
    let kernel = cfg.kernel.resolve(d)?;

    // Per-sample box constraint.
    let n = work.len();
    let c_of = |yi: f64| -> f64 {
        match cfg.class_weights {
            ClassWeights::Uniform => cfg.c,
            ClassWeights::Balanced => {
                let nk = if yi > 0.0 { n_pos } else { n - n_pos };
                cfg.c * n as f64 / (2.0 * nk as f64)
            }
        }
    };
    let c_box: Vec<f64> = y.iter().map(|&yi| c_of(yi)).collect();

    let (alpha, bias) = smo(&work, y, &c_box, &kernel, cfg.tol, cfg.max_passes);

    let mut support = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        if alpha[i] > 0.0 {
            support.push(work[i].clone());
            coef.push(alpha[i] * y[i]);
        }
    }
    Ok((
        BinarySvm {
            kernel,
            support,
            coef,
            bias,
            standardizer,
            n_features: d,
        },
        alpha,
    ))
}

/// Dual objective `sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`,
/// exposed for optimality checks against brute-force oracles.
pub fn dual_objective(rows: &[Vec<f64>], y: &[f64], alpha: &[f64], kernel: &KernelSpec) -> f64 {
    let n = rows.len();
    let mut obj: f64 = alpha.iter().sum();
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if alpha[j] == 0.0 {
                continue;
            }
            obj -= 0.5 * alpha[i] * alpha[j] * y[i] * y[j] * kernel.eval(&rows[i], &rows[j]);
        }
    }
    obj
}

const STEP_EPS: f64 = 1e-12;

/// Core SMO loop. Returns (alpha, bias).
fn smo(
    rows: &[Vec<f64>],
    y: &[f64],
    c_box: &[f64],
    kernel: &KernelSpec,
    tol: f64,
    max_passes: usize,
) -> (Vec<f64>, f64) {
    let n = rows.len();
    // Full Gram cache for moderate sizes; recompute on the fly above that.
    let gram: Option<Vec<f64>> = if n <= 1500 {
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(&rows[i], &rows[j]);
                g[i * n + j] = v;
                g[j * n + i] = v;
            }
        }
        Some(g)
    } else {
        None
    };
    let k = |i: usize, j: usize| -> f64 {
        match &gram {
            Some(g) => g[i * n + j],
            None => kernel.eval(&rows[i], &rows[j]),
        }
    };

    let mut alpha = vec![0.0; n];
    let mut b = 0.0;
    let mut err: Vec<f64> = y.iter().map(|&yi| -yi).collect();

    let violation = |i: usize, alpha: &[f64], err: &[f64]| -> f64 {
        let r = err[i] * y[i];
        if r < -tol && alpha[i] < c_box[i] - STEP_EPS {
            -r
        } else if r > tol && alpha[i] > STEP_EPS {
            r
        } else {
            0.0
        }
    };

    for _pass in 0..max_passes {
        // Violators, worst first; ties break to the smaller index.
        let mut violators: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| {
                let v = violation(i, &alpha, &err);
                (v > 0.0).then_some((v, i))
            })
            .collect();
        if violators.is_empty() {
            break;
        }
        violators.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut progressed = false;
        'outer: for &(_, i) in &violators {
            // Partners ranked by |E_i - E_j|, ties to the smaller index.
            let mut partners: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| ((err[i] - err[j]).abs(), j))
                .collect();
            partners.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, j) in &partners {
                if take_step(i, j, &k, y, c_box, &mut alpha, &mut b, &mut err) {
                    progressed = true;
                    break 'outer;
                }
            }
        }
        if !progressed {
            break; // numerically stalled; remaining violations are at tol scale
        }
    }
    (alpha, b)
}

#[allow(clippy::too_many_arguments)]
fn take_step(
    i: usize,
    j: usize,
    k: &dyn Fn(usize, usize) -> f64,
    y: &[f64],
    c_box: &[f64],
    alpha: &mut [f64],
    b: &mut f64,
    err: &mut [f64],
) -> bool {
    let (a1_old, a2_old) = (alpha[i], alpha[j]);
    let (y1, y2) = (y[i], y[j]);
    let (e1, e2) = (err[i], err[j]);
    let s = y1 * y2;
    let (lo, hi) = if y1 != y2 {
        (
            (a2_old - a1_old).max(0.0),
            c_box[j].min(c_box[i] + a2_old - a1_old),
        )
    } else {
        (
            (a1_old + a2_old - c_box[i]).max(0.0),
            c_box[j].min(a1_old + a2_old),
        )
    };
    if hi - lo < STEP_EPS {
        return false;
    }
    let k11 = k(i, i);
    let k12 = k(i, j);
    let k22 = k(j, j);
    let eta = k11 + k22 - 2.0 * k12;
    let mut a2 = if eta > STEP_EPS {
        (a2_old + y2 * (e1 - e2) / eta).clamp(lo, hi)
    } else {
        // Flat direction: evaluate the objective at both clip ends.
        let f1 = y1 * (e1 + *b) - a1_old * k11 - s * a2_old * k12;
        let f2 = y2 * (e2 + *b) - s * a1_old * k12 - a2_old * k22;
        let l1 = a1_old + s * (a2_old - lo);
        let h1 = a1_old + s * (a2_old - hi);
        let psi_l =
            l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
        let psi_h =
            h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
        if psi_l < psi_h - STEP_EPS {
            lo
        } else if psi_l > psi_h + STEP_EPS {
            hi
        } else {
            return false;
        }
    };
    if (a2 - a2_old).abs() < STEP_EPS * (a2 + a2_old + STEP_EPS) {
        return false;
    }
    // Snap to the box to keep feasibility exact.
    if a2 < STEP_EPS {
        a2 = 0.0;
    } else if a2 > c_box[j] - STEP_EPS {
        a2 = c_box[j];
    }
    let a1 = (a1_old + s * (a2_old - a2)).clamp(0.0, c_box[i]);

    let d1 = y1 * (a1 - a1_old);
    let d2 = y2 * (a2 - a2_old);
    let b1 = *b - e1 - d1 * k11 - d2 * k12;
    let b2 = *b - e2 - d1 * k12 - d2 * k22;
    let b_new = if a1 > STEP_EPS && a1 < c_box[i] - STEP_EPS {
        b1
    } else if a2 > STEP_EPS && a2 < c_box[j] - STEP_EPS {
        b2
    } else {
        0.5 * (b1 + b2)
    };
    let db = b_new - *b;
    *b = b_new;
    alpha[i] = a1;
    alpha[j] = a2;
    for (t, e) in err.iter_mut().enumerate() {
        *e += d1 * k(i, t) + d2 * k(j, t) + db;
    }
    true
}

/// A pairwise model inside a one-vs-one ensemble: a positive decision votes
/// for `classes[a]`, negative for `classes[b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub a: usize,
    pub b: usize,
    pub model: BinarySvm,
}

/// A trained classifier over string labels: a single binary model for two
/// classes, a one-vs-one ensemble for three or more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum SvmModel {
    Binary {
        classes: [String; 2],
        model: BinarySvm,
    },
    Multiclass {
        classes: Vec<String>,
        standardizer: Option<Standardizer>,
        pairs: Vec<PairModel>,
    },
}

const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    model: SvmModel,
}

impl SvmModel {
    pub fn classes(&self) -> Vec<String> {
        match self {
            SvmModel::Binary { classes, .. } => classes.to_vec(),
            SvmModel::Multiclass { classes, .. } => classes.clone(),
        }
    }

    /// Predicted label, plus the decision value for binary models.
    pub fn predict(&self, row: &[f64]) -> Result<(String, Option<f64>), SvmError> {
        match self {
            SvmModel::Binary { classes, model } => {
                let d = model.decision(row)?;
                let label = if d >= 0.0 { &classes[0] } else { &classes[1] };
                Ok((label.clone(), Some(d)))
            }
            SvmModel::Multiclass {
                classes,
                standardizer,
                pairs,
            } => {
                let std_row;
                let r = match standardizer {
                    Some(s) => {
                        if row.len() != s.mean.len() {
                            return Err(SvmError::DimensionMismatch {
                                expected: s.mean.len(),
                                got: row.len(),
                            });
                        }
                        std_row = s.apply(row);
                        &std_row[..]
                    }
                    None => row,
                };
                let mut votes = vec![0usize; classes.len()];
                let mut margin = vec![0.0f64; classes.len()];
                for p in pairs {
                    let d = p.model.decision(r)?;
                    let winner = if d >= 0.0 { p.a } else { p.b };
                    votes[winner] += 1;
                    margin[winner] += d.abs();
                }
                // Max votes; ties by the larger summed |decision|, then by
                // class order.
                let mut best = 0usize;
                for c in 1..classes.len() {
                    if votes[c] > votes[best]
                        || (votes[c] == votes[best] && margin[c] > margin[best])
                    {
                        best = c;
                    }
                }
                Ok((classes[best].clone(), None))
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDoc {
            version: MODEL_VERSION,
            model: self.clone(),
        })
        .expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, SvmError> {
        let doc: ModelDoc =
            serde_json::from_str(text).map_err(|e| SvmError::Serde(e.to_string()))?;
        if doc.version != MODEL_VERSION {
            return Err(SvmError::Serde(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        Ok(doc.model)
    }
}

/// Train from string labels: binary for exactly two classes, one-vs-one
/// for three or more. Class order is sorted-lexicographic; in the binary
/// case the first class maps to +1.
pub fn train_from_labels(
    rows: &[Vec<f64>],
    labels: &[String],
    cfg: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    if rows.len() != labels.len() {
        return Err(SvmError::InvalidInput(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    match classes.len() {
        0 | 1 => Err(SvmError::SingleClass),
        2 => {
            let y: Vec<f64> = labels
                .iter()
                .map(|l| if *l == classes[0] { 1.0 } else { -1.0 })
                .collect();
            let model = train_binary(rows, &y, cfg)?;
            Ok(SvmModel::Binary {
                classes: [classes[0].clone(), classes[1].clone()],
                model,
            })
        }
        _ => train_multiclass(rows, labels, Some(&classes), cfg),
    }
}

/// Train a one-vs-one ensemble over `K >= 3` classes. When `classes` is
/// given explicitly, a class without rows turns its pairs into `EmptyPair`
/// errors; otherwise the class list is taken from the data.
pub fn train_multiclass(
    rows: &[Vec<f64>],
    labels: &[String],
    classes: Option<&[String]>,
    cfg: &SvmConfig,
) -> Result<SvmModel, SvmError> {
    cfg.validate()?;
    if rows.len() != labels.len() {
        return Err(SvmError::InvalidInput(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let classes: Vec<String> = match classes {
        Some(c) => c.to_vec(),
        None => {
            let mut c: Vec<String> = labels.to_vec();
            c.sort();
            c.dedup();
            c
        }
    };
    if classes.len() < 3 {
        return Err(SvmError::InvalidInput(format!(
            "multiclass training needs K >= 3 classes, got {}",
            classes.len()
        )));
    }
    if rows.is_empty() {
        return Err(SvmError::InvalidInput("no training rows".into()));
    }

    // Shared standardization from the full training set; pairwise models
    // train on pre-standardized rows.
    let standardizer = if cfg.standardize {
        Some(Standardizer::fit(rows))
    } else {
        None
    };
    let work: Vec<Vec<f64>> = match &standardizer {
        Some(s) => rows.iter().map(|r| s.apply(r)).collect(),
        None => rows.to_vec(),
    };
    let pair_cfg = SvmConfig {
        standardize: false,
        ..*cfg
    };

    let pair_indices: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|a| ((a + 1)..classes.len()).map(move |b| (a, b)))
        .collect();
    let pairs = exec::try_map_indexed(pair_indices.len(), |pi| {
        let (a, b) = pair_indices[pi];
        let mut sub_rows = Vec::new();
        let mut sub_y = Vec::new();
        for (row, label) in work.iter().zip(labels) {
            if *label == classes[a] {
                sub_rows.push(row.clone());
                sub_y.push(1.0);
            } else if *label == classes[b] {
                sub_rows.push(row.clone());
                sub_y.push(-1.0);
            }
        }
        let has_pos = sub_y.contains(&1.0);
        let has_neg = sub_y.contains(&-1.0);
        if !has_pos || !has_neg {
            return Err(SvmError::EmptyPair {
                a: classes[a].clone(),
                b: classes[b].clone(),
            });
        }
        let model = train_binary(&sub_rows, &sub_y, &pair_cfg).map_err(|e| match e {
            SvmError::SingleClass => SvmError::EmptyPair {
                a: classes[a].clone(),
                b: classes[b].clone(),
            },
            other => other,
        })?;
        Ok(PairModel { a, b, model })
    })?;
    Ok(SvmModel::Multiclass {
        classes,
        standardizer,
        pairs,
    })
}
