//! Stratified k-fold cross-validation, classification metrics, and the
//! table-style reports.
//!
//! Metrics with an empty denominator are undefined, never zero: a zero
//! would silently skew fold means, so undefined values carry through as
//! `None` and render as `n/a`.
//!
//! Model selection is leakage-free by construction: per fold, the config is
//! chosen by an internal stratified 3-fold split of the training rows only,
//! and feature standardization happens inside SVM training on training rows
//! only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::exec;
use crate::fmt::format_sig;
use crate::seeds;
use crate::svm::{self, SvmConfig, SvmError, SvmModel};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("too few rows: {0}")]
    TooFewRows(String),
    #[error("data contains a single class")]
    SingleClass,
    #[error("positive class '{0}' not present in the data")]
    UnknownPositive(String),
    #[error("empty config grid")]
    EmptyGrid,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Svm(#[from] SvmError),
}

/// Square confusion matrix: `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<usize>>) -> Result<Self, EvalError> {
        let k = classes.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::InvalidInput(
                "confusion matrix must be square over the class list".into(),
            ));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn record(&mut self, true_label: &str, predicted: &str) -> Result<(), EvalError> {
        let t = self.index_of(true_label)?;
        let p = self.index_of(predicted)?;
        self.counts[t][p] += 1;
        Ok(())
    }

    fn index_of(&self, label: &str) -> Result<usize, EvalError> {
        self.classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| EvalError::InvalidInput(format!("unknown class '{label}'")))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn count(&self, true_idx: usize, pred_idx: usize) -> usize {
        self.counts[true_idx][pred_idx]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

/// Binary metrics; `None` marks an undefined value (empty denominator).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinaryMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
}

/// sensitivity = TP/(TP+FN), specificity = TN/(TN+FP), accuracy over all.
pub fn metrics_binary(cm: &ConfusionMatrix, positive: &str) -> Result<BinaryMetrics, EvalError> {
    if cm.classes.len() != 2 {
        return Err(EvalError::InvalidInput(format!(
            "binary metrics need a 2x2 matrix, got {} classes",
            cm.classes.len()
        )));
    }
    let p = cm.index_of(positive)?;
    let n = 1 - p;
    let (tp, fn_) = (cm.counts[p][p], cm.counts[p][n]);
    let (tn, fp) = (cm.counts[n][n], cm.counts[n][p]);
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(BinaryMetrics {
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
    })
}

/// Multiclass metrics: per-class sensitivity (row-normalized diagonal) and
/// total accuracy, in the matrix's class order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiMetrics {
    pub per_class_sensitivity: Vec<Option<f64>>,
    pub accuracy: Option<f64>,
}

pub fn metrics_multiclass(cm: &ConfusionMatrix) -> Result<MultiMetrics, EvalError> {
    let k = cm.classes.len();
    if k < 2 {
        return Err(EvalError::InvalidInput(
            "multiclass metrics need at least 2 classes".into(),
        ));
    }
    let per_class_sensitivity = (0..k)
        .map(|c| {
            let row: usize = cm.counts[c].iter().sum();
            (row > 0).then(|| cm.counts[c][c] as f64 / row as f64)
        })
        .collect();
    let total = cm.total();
    let trace: usize = (0..k).map(|c| cm.counts[c][c]).sum();
    Ok(MultiMetrics {
        per_class_sensitivity,
        accuracy: (total > 0).then(|| trace as f64 / total as f64),
    })
}

/// Canonical report order for the standard diagnostic classes; anything
/// else follows alphabetically.
pub fn report_class_order(classes: &[String]) -> Vec<String> {
    const CANONICAL: [&str; 6] = ["MI", "VHD", "DY", "BBB", "CH", "HC"];
    let mut out: Vec<String> = CANONICAL
        .iter()
        .filter(|c| classes.iter().any(|x| x == *c))
        .map(|c| c.to_string())
        .collect();
    let mut rest: Vec<String> = classes
        .iter()
        .filter(|c| !CANONICAL.contains(&c.as_str()))
        .cloned()
        .collect();
    rest.sort();
    rest.dedup();
    out.extend(rest);
    out
}

/// Stratified fold assignment: returns a fold id per row. Fold sizes differ
/// by at most one, per-class fold counts differ by at most one, and the
/// assignment is a pure function of (labels, k, seed).
pub fn stratified_kfold(labels: &[String], k: usize, seed: u64) -> Result<Vec<usize>, EvalError> {
    if k < 2 {
        return Err(EvalError::TooFewRows(format!("k must be >= 2, got {k}")));
    }
    if labels.len() < k {
        return Err(EvalError::TooFewRows(format!(
            "{} rows cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();

    let mut assignment = vec![usize::MAX; labels.len()];
    // Extras rotate across classes so global fold sizes stay within one.
    let mut offset = 0usize;
    for (ci, class) in classes.iter().enumerate() {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == class).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive2(seed, 1, ci as u64));
        idx.shuffle(&mut rng);
        let n_c = idx.len();
        let base = n_c / k;
        let extras = n_c % k;
        let mut cursor = 0usize;
        for f in 0..k {
            let extra = ((f + k - offset) % k < extras) as usize;
            for _ in 0..(base + extra) {
                assignment[idx[cursor]] = f;
                cursor += 1;
            }
        }
        offset = (offset + extras) % k;
    }
    Ok(assignment)
}

/// Group-aware stratified folds: whole groups (e.g. all records of one
/// subject) land in the same fold. A group's label is its first row's.
pub fn stratified_group_kfold(
    labels: &[String],
    groups: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, EvalError> {
    if labels.len() != groups.len() {
        return Err(EvalError::InvalidInput(
            "labels and groups must have equal length".into(),
        ));
    }
    let mut group_ids: Vec<String> = Vec::new();
    let mut group_labels: Vec<String> = Vec::new();
    for (g, l) in groups.iter().zip(labels) {
        if !group_ids.contains(g) {
            group_ids.push(g.clone());
            group_labels.push(l.clone());
        }
    }
    let group_fold = stratified_kfold(&group_labels, k, seed)?;
    Ok(groups
        .iter()
        .map(|g| group_fold[group_ids.iter().position(|x| x == g).unwrap()])
        .collect())
}

/// Labeled feature rows, the unit the CV harness works on.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub ids: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Fold metrics for one task.
#[derive(Debug, Clone, PartialEq)]
pub enum Metrics {
    Binary(BinaryMetrics),
    Multi(MultiMetrics),
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub chosen: String,
    pub train: Metrics,
    pub test: Metrics,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    /// Report-ordered class list. For the binary task the first entry is
    /// the positive class.
    pub classes: Vec<String>,
    pub binary: bool,
    pub folds: Vec<FoldOutcome>,
    pub mean_train: Metrics,
    pub mean_test: Metrics,
}

#[derive(Debug, Clone)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    /// Positive class for binary metrics; defaults to the first class in
    /// report order.
    pub positive: Option<String>,
    /// Group id per row (e.g. subject); whole groups stay in one fold.
    pub groups: Option<Vec<String>>,
    /// Folds of the internal selection split.
    pub inner_folds: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 10,
            seed: 17,
            positive: None,
            groups: None,
            inner_folds: 3,
        }
    }
}

fn describe(cfg: &SvmConfig, n_features: usize) -> String {
    let kernel = match cfg.kernel.resolve(n_features) {
        Ok(svm::KernelSpec::Linear) => "linear".to_string(),
        Ok(svm::KernelSpec::Rbf { gamma }) => format!("rbf(gamma={})", format_sig(gamma, 6)),
        Err(_) => "invalid".to_string(),
    };
    format!("{kernel} C={}", format_sig(cfg.c, 6))
}

fn confusion_for(
    data: &Dataset,
    idx: &[usize],
    classes: &[String],
    model: &SvmModel,
) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::new(classes.to_vec());
    for &i in idx {
        let (label, _) = model.predict(&data.rows[i])?;
        cm.record(&data.labels[i], &label)?;
    }
    Ok(cm)
}

fn metrics_for(cm: &ConfusionMatrix, binary: bool, positive: &str) -> Result<Metrics, EvalError> {
    if binary {
        Ok(Metrics::Binary(metrics_binary(cm, positive)?))
    } else {
        Ok(Metrics::Multi(metrics_multiclass(cm)?))
    }
}

/// Pick a config from the grid by mean accuracy over an internal stratified
/// split of the training rows; ties prefer smaller C, then smaller gamma,
/// then grid order. A grid of one skips the inner split entirely.
fn select_config(
    data: &Dataset,
    train_idx: &[usize],
    grid: &[SvmConfig],
    inner_folds: usize,
    seed: u64,
) -> Result<usize, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if grid.len() == 1 {
        return Ok(0);
    }
    let inner_labels: Vec<String> = train_idx.iter().map(|&i| data.labels[i].clone()).collect();
    let k = inner_folds.max(2).min(train_idx.len());
    let inner_assign = stratified_kfold(&inner_labels, k, seed)?;
    let n_features = data.rows[0].len();

    let mut scores = vec![0.0f64; grid.len()];
    for (gi, cfg) in grid.iter().enumerate() {
        let mut acc_sum = 0.0;
        for fold in 0..k {
            let tr: Vec<usize> = train_idx
                .iter()
                .enumerate()
                .filter(|(pos, _)| inner_assign[*pos] != fold)
                .map(|(_, &i)| i)
                .collect();
            let te: Vec<usize> = train_idx
                .iter()
                .enumerate()
                .filter(|(pos, _)| inner_assign[*pos] == fold)
                .map(|(_, &i)| i)
                .collect();
            if tr.is_empty() || te.is_empty() {
                continue;
            }
            let rows: Vec<Vec<f64>> = tr.iter().map(|&i| data.rows[i].clone()).collect();
            let labels: Vec<String> = tr.iter().map(|&i| data.labels[i].clone()).collect();
            // An inner fold can lose a class entirely for tiny classes; the
            // candidate simply scores zero there.
            let model = match svm::train_from_labels(&rows, &labels, cfg) {
                Ok(m) => m,
                Err(_) => continue,
            };
            let mut correct = 0usize;
            for &i in &te {
                if model.predict(&data.rows[i])?.0 == data.labels[i] {
                    correct += 1;
                }
            }
            acc_sum += correct as f64 / te.len() as f64;
        }
        scores[gi] = acc_sum / k as f64;
    }

    let gamma_of = |cfg: &SvmConfig| match cfg.kernel.resolve(n_features) {
        Ok(svm::KernelSpec::Rbf { gamma }) => gamma,
        _ => 0.0,
    };
    let mut best = 0usize;
    for gi in 1..grid.len() {
        let better = scores[gi] > scores[best] + 1e-12
            || (scores[gi] >= scores[best] - 1e-12
                && (grid[gi].c < grid[best].c
                    || (grid[gi].c == grid[best].c
                        && gamma_of(&grid[gi]) < gamma_of(&grid[best]))));
        if better {
            best = gi;
        }
    }
    Ok(best)
}

/// Run stratified k-fold CV with inner-split model selection.
pub fn run_cv(data: &Dataset, grid: &[SvmConfig], opts: &CvOptions) -> Result<CvReport, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if data.is_empty() {
        return Err(EvalError::TooFewRows("empty dataset".into()));
    }
    let classes = report_class_order(&data.labels);
    if classes.len() < 2 {
        return Err(EvalError::SingleClass);
    }
    let binary = classes.len() == 2;
    let positive = match &opts.positive {
        Some(p) => {
            if !classes.contains(p) {
                return Err(EvalError::UnknownPositive(p.clone()));
            }
            p.clone()
        }
        None => classes[0].clone(),
    };
    // Binary report orders the positive class first.
    let classes: Vec<String> = if binary {
        let mut c = classes;
        c.retain(|x| x != &positive);
        let mut out = vec![positive.clone()];
        out.append(&mut c);
        out
    } else {
        classes
    };

    let assignment = match &opts.groups {
        Some(groups) => stratified_group_kfold(&data.labels, groups, opts.k, opts.seed)?,
        None => stratified_kfold(&data.labels, opts.k, opts.seed)?,
    };

    let folds = exec::try_map_indexed(opts.k, |fold| {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] != fold).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| assignment[i] == fold).collect();
        if train_idx.is_empty() || test_idx.is_empty() {
            return Err(EvalError::TooFewRows(format!(
                "fold {fold} has an empty train or test side"
            )));
        }
        let chosen_idx = select_config(
            data,
            &train_idx,
            grid,
            opts.inner_folds,
            seeds::derive2(opts.seed, 2, fold as u64),
        )?;
        let cfg = &grid[chosen_idx];
        let rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.rows[i].clone()).collect();
        let labels: Vec<String> = train_idx.iter().map(|&i| data.labels[i].clone()).collect();
        let model = svm::train_from_labels(&rows, &labels, cfg)?;
        let train_cm = confusion_for(data, &train_idx, &classes, &model)?;
        let test_cm = confusion_for(data, &test_idx, &classes, &model)?;
        Ok(FoldOutcome {
            fold,
            chosen: describe(cfg, data.rows[0].len()),
            train: metrics_for(&train_cm, binary, &positive)?,
            test: metrics_for(&test_cm, binary, &positive)?,
        })
    })?;

    let mean_train = mean_metrics(folds.iter().map(|f| &f.train), binary, classes.len());
    let mean_test = mean_metrics(folds.iter().map(|f| &f.test), binary, classes.len());
    Ok(CvReport {
        classes,
        binary,
        folds,
        mean_train,
        mean_test,
    })
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

fn mean_metrics<'a>(
    folds: impl Iterator<Item = &'a Metrics> + Clone,
    binary: bool,
    n_classes: usize,
) -> Metrics {
    if binary {
        let pick = |f: &Metrics| match f {
            Metrics::Binary(b) => *b,
            _ => unreachable!("mixed metrics"),
        };
        Metrics::Binary(BinaryMetrics {
            sensitivity: mean_opt(folds.clone().map(|f| pick(f).sensitivity)),
            specificity: mean_opt(folds.clone().map(|f| pick(f).specificity)),
            accuracy: mean_opt(folds.map(|f| pick(f).accuracy)),
        })
    } else {
        let pick = |f: &Metrics| match f {
            Metrics::Multi(m) => m.clone(),
            _ => unreachable!("mixed metrics"),
        };
        let per_class = (0..n_classes)
            .map(|c| mean_opt(folds.clone().map(|f| pick(f).per_class_sensitivity[c])))
            .collect();
        Metrics::Multi(MultiMetrics {
            per_class_sensitivity: per_class,
            accuracy: mean_opt(folds.map(|f| pick(f).accuracy)),
        })
    }
}

fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format_sig(x, 10),
        None => "n/a".to_string(),
    }
}

/// A labeled report row: one lead set, one CV run.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub lead_set: String,
    pub report: CvReport,
}

pub const BINARY_REPORT_HEADER: &str = "lead_set,train_sensitivity,train_specificity,train_accuracy,test_sensitivity,test_specificity,test_accuracy";

/// Table-1-style CSV: mean train/test metrics per lead set.
pub fn render_binary_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from(BINARY_REPORT_HEADER);
    out.push('\n');
    for r in rows {
        let (tr, te) = match (&r.report.mean_train, &r.report.mean_test) {
            (Metrics::Binary(tr), Metrics::Binary(te)) => (tr, te),
            _ => continue,
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.lead_set,
            opt_cell(tr.sensitivity),
            opt_cell(tr.specificity),
            opt_cell(tr.accuracy),
            opt_cell(te.sensitivity),
            opt_cell(te.specificity),
            opt_cell(te.accuracy),
        ));
    }
    out
}

/// Tables-2/3-style CSV: per-class mean sensitivity plus accuracy, for the
/// train or test side.
pub fn render_multiclass_csv(rows: &[ReportRow], test_side: bool) -> String {
    let classes = rows
        .first()
        .map(|r| r.report.classes.clone())
        .unwrap_or_default();
    let mut out = String::from("lead_set");
    for c in &classes {
        out.push(',');
        out.push_str(c);
    }
    out.push_str(",accuracy\n");
    for r in rows {
        let m = if test_side {
            &r.report.mean_test
        } else {
            &r.report.mean_train
        };
        let m = match m {
            Metrics::Multi(m) => m,
            _ => continue,
        };
        out.push_str(&r.lead_set);
        for c in &m.per_class_sensitivity {
            out.push(',');
            out.push_str(&opt_cell(*c));
        }
        out.push(',');
        out.push_str(&opt_cell(m.accuracy));
        out.push('\n');
    }
    out
}

fn pad(s: &str, width: usize) -> String {
    format!("{s:<width$}")
}

/// Aligned plain-text rendering of the binary report.
pub fn render_binary_text(rows: &[ReportRow]) -> String {
    let headers = [
        "lead_set",
        "train_sens",
        "train_spec",
        "train_acc",
        "test_sens",
        "test_spec",
        "test_acc",
    ];
    let mut table: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        if let (Metrics::Binary(tr), Metrics::Binary(te)) =
            (&r.report.mean_train, &r.report.mean_test)
        {
            table.push(vec![
                r.lead_set.clone(),
                opt_cell(tr.sensitivity),
                opt_cell(tr.specificity),
                opt_cell(tr.accuracy),
                opt_cell(te.sensitivity),
                opt_cell(te.specificity),
                opt_cell(te.accuracy),
            ]);
        }
    }
    render_table(&table)
}

/// Aligned plain-text rendering of one side of the multiclass report.
pub fn render_multiclass_text(rows: &[ReportRow], test_side: bool) -> String {
    let classes = rows
        .first()
        .map(|r| r.report.classes.clone())
        .unwrap_or_default();
    let mut headers = vec!["lead_set".to_string()];
    headers.extend(classes.iter().cloned());
    headers.push("accuracy".to_string());
    let mut table = vec![headers];
    for r in rows {
        let m = if test_side {
            &r.report.mean_test
        } else {
            &r.report.mean_train
        };
        if let Metrics::Multi(m) = m {
            let mut row = vec![r.lead_set.clone()];
            row.extend(m.per_class_sensitivity.iter().map(|c| opt_cell(*c)));
            row.push(opt_cell(m.accuracy));
            table.push(row);
        }
    }
    render_table(&table)
}

fn render_table(table: &[Vec<String>]) -> String {
    if table.is_empty() {
        return String::new();
    }
    let cols = table[0].len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in table {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, &w)| pad(s, w)).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svm::KernelChoice;
    use proptest::prelude::*;
    use rand::Rng;

    fn cm2(tp: usize, fn_: usize, tn: usize, fp: usize) -> ConfusionMatrix {
        // classes [pos, neg]; counts[true][pred]
        ConfusionMatrix::from_counts(
            vec!["pos".into(), "neg".into()],
            vec![vec![tp, fn_], vec![fp, tn]],
        )
        .unwrap()
    }

    #[test]
    fn binary_metric_arithmetic() {
        let m = metrics_binary(&cm2(9, 1, 8, 2), "pos").unwrap();
        assert_eq!(m.sensitivity, Some(0.9));
        assert_eq!(m.specificity, Some(0.8));
        assert_eq!(m.accuracy, Some(0.85));

        let perfect = metrics_binary(&cm2(10, 0, 10, 0), "pos").unwrap();
        assert_eq!(perfect.sensitivity, Some(1.0));
        assert_eq!(perfect.specificity, Some(1.0));
        assert_eq!(perfect.accuracy, Some(1.0));
    }

    #[test]
    fn empty_denominator_is_undefined() {
        let m = metrics_binary(&cm2(0, 0, 8, 2), "pos").unwrap();
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.specificity, Some(0.8));
        assert_eq!(opt_cell(m.sensitivity), "n/a");
    }

    #[test]
    fn multiclass_metric_arithmetic() {
        let cm = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![2, 1, 0], vec![0, 3, 0], vec![1, 0, 4]],
        )
        .unwrap();
        let m = metrics_multiclass(&cm).unwrap();
        assert_eq!(m.per_class_sensitivity[0], Some(2.0 / 3.0));
        assert_eq!(m.per_class_sensitivity[1], Some(1.0));
        assert_eq!(m.per_class_sensitivity[2], Some(0.8));
        assert_eq!(m.accuracy, Some(9.0 / 11.0));

        let identity = ConfusionMatrix::from_counts(
            vec!["a".into(), "b".into()],
            vec![vec![5, 0], vec![0, 7]],
        )
        .unwrap();
        let mi = metrics_multiclass(&identity).unwrap();
        assert!(mi.per_class_sensitivity.iter().all(|s| *s == Some(1.0)));
        assert_eq!(mi.accuracy, Some(1.0));
    }

    #[test]
    fn majority_classifier_on_90_10_fold() {
        // 9 positives + 1 negative; predicting the majority class gives
        // accuracy 0.9, sensitivity 1, specificity 0.
        let mut cm = ConfusionMatrix::new(vec!["pos".into(), "neg".into()]);
        for _ in 0..9 {
            cm.record("pos", "pos").unwrap();
        }
        cm.record("neg", "pos").unwrap();
        let m = metrics_binary(&cm, "pos").unwrap();
        assert_eq!(m.accuracy, Some(0.9));
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.specificity, Some(0.0));
    }

    #[test]
    fn kfold_balances_two_equal_classes() {
        let labels: Vec<String> = (0..20)
            .map(|i| if i % 2 == 0 { "A".into() } else { "B".into() })
            .collect();
        let assign = stratified_kfold(&labels, 10, 7).unwrap();
        for f in 0..10 {
            let in_fold: Vec<usize> = (0..20).filter(|&i| assign[i] == f).collect();
            assert_eq!(in_fold.len(), 2);
            let a = in_fold.iter().filter(|&&i| labels[i] == "A").count();
            assert_eq!(a, 1, "fold {f} lacks class balance");
        }
    }

    #[test]
    fn kfold_is_deterministic_and_partitioning() {
        let labels: Vec<String> = (0..37)
            .map(|i| if i % 5 == 0 { "A".into() } else { "B".into() })
            .collect();
        let a = stratified_kfold(&labels, 4, 99).unwrap();
        let b = stratified_kfold(&labels, 4, 99).unwrap();
        assert_eq!(a, b);
        let c = stratified_kfold(&labels, 4, 100).unwrap();
        assert_ne!(a, c);
        // Every row lands in exactly one fold.
        assert!(a.iter().all(|&f| f < 4));
    }

    #[test]
    fn kfold_matches_expected_sizes_for_uneven_classes() {
        // 368 + 80 rows in 10 folds: sizes {45 x 8, 44 x 2}, class counts
        // within one per fold.
        let mut labels: Vec<String> = vec!["MI".into(); 368];
        labels.extend(vec!["HC".into(); 80]);
        let assign = stratified_kfold(&labels, 10, 42).unwrap();
        let mut sizes = [0usize; 10];
        let mut mi = [0usize; 10];
        let mut hc = [0usize; 10];
        for (i, &f) in assign.iter().enumerate() {
            sizes[f] += 1;
            if labels[i] == "MI" {
                mi[f] += 1;
            } else {
                hc[f] += 1;
            }
        }
        let mut sorted = sizes;
        sorted.sort();
        assert_eq!(sorted, [44, 44, 45, 45, 45, 45, 45, 45, 45, 45]);
        assert_eq!(mi.iter().max().unwrap() - mi.iter().min().unwrap(), 1);
        assert_eq!(hc.iter().max().unwrap() - hc.iter().min().unwrap(), 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn kfold_invariants(
            n_a in 4usize..40,
            n_b in 4usize..40,
            k in 2usize..6,
            seed in 0u64..1000,
        ) {
            let mut labels: Vec<String> = vec!["A".into(); n_a];
            labels.extend(vec!["B".into(); n_b]);
            let assign = stratified_kfold(&labels, k, seed).unwrap();
            let mut sizes = vec![0usize; k];
            let mut per_class = vec![[0usize; 2]; k];
            for (i, &f) in assign.iter().enumerate() {
                sizes[f] += 1;
                per_class[f][(labels[i] == "B") as usize] += 1;
            }
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for c in 0..2 {
                let counts: Vec<usize> = per_class.iter().map(|p| p[c]).collect();
                prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            }
        }
    }

    #[test]
    fn grouped_folds_keep_groups_together() {
        let labels: Vec<String> = (0..24)
            .map(|i| if i % 2 == 0 { "A".into() } else { "B".into() })
            .collect();
        let groups: Vec<String> = (0..24).map(|i| format!("s{}", i / 3)).collect();
        let assign = stratified_group_kfold(&labels, &groups, 4, 5).unwrap();
        for g in 0..8 {
            let folds: Vec<usize> = (0..24)
                .filter(|&i| groups[i] == format!("s{g}"))
                .map(|i| assign[i])
                .collect();
            assert!(
                folds.windows(2).all(|w| w[0] == w[1]),
                "group s{g} split across folds"
            );
        }
    }

    fn toy_dataset(n_per_class: usize, sep: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut ids = Vec::new();
        for c in 0..2 {
            for i in 0..n_per_class {
                let cx = c as f64 * sep;
                rows.push(vec![
                    cx + rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ]);
                labels.push(if c == 0 { "MI".into() } else { "HC".into() });
                ids.push(format!("r{c}_{i}"));
            }
        }
        Dataset { rows, labels, ids }
    }

    fn small_grid() -> Vec<SvmConfig> {
        vec![
            SvmConfig {
                kernel: KernelChoice::Rbf { gamma: None },
                c: 1.0,
                ..SvmConfig::default()
            },
            SvmConfig {
                kernel: KernelChoice::Rbf { gamma: None },
                c: 10.0,
                ..SvmConfig::default()
            },
        ]
    }

    #[test]
    fn separable_data_reaches_perfect_cv_accuracy() {
        let data = toy_dataset(20, 10.0, 3);
        let report = run_cv(
            &data,
            &small_grid(),
            &CvOptions {
                k: 5,
                ..CvOptions::default()
            },
        )
        .unwrap();
        match &report.mean_test {
            Metrics::Binary(m) => assert_eq!(m.accuracy, Some(1.0)),
            _ => panic!("expected binary"),
        }
        assert_eq!(report.folds.len(), 5);
        assert_eq!(report.classes[0], "MI"); // canonical positive first
    }

    #[test]
    fn reported_means_recompute_from_folds() {
        let data = toy_dataset(12, 2.0, 9);
        let report = run_cv(
            &data,
            &small_grid(),
            &CvOptions {
                k: 4,
                ..CvOptions::default()
            },
        )
        .unwrap();
        let accs: Vec<Option<f64>> = report
            .folds
            .iter()
            .map(|f| match &f.test {
                Metrics::Binary(b) => b.accuracy,
                _ => None,
            })
            .collect();
        let mean = mean_opt(accs.into_iter()).unwrap();
        match &report.mean_test {
            Metrics::Binary(m) => {
                assert!((m.accuracy.unwrap() - mean).abs() < 1e-12);
            }
            _ => panic!("expected binary"),
        }
    }

    #[test]
    fn invalid_k_is_rejected() {
        let data = toy_dataset(5, 5.0, 1);
        let err = run_cv(
            &data,
            &small_grid(),
            &CvOptions {
                k: 1,
                ..CvOptions::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::TooFewRows(_)));
    }

    #[test]
    fn single_class_is_rejected() {
        let data = Dataset {
            rows: vec![vec![0.0], vec![1.0], vec![2.0]],
            labels: vec!["A".into(), "A".into(), "A".into()],
            ids: vec!["1".into(), "2".into(), "3".into()],
        };
        assert!(matches!(
            run_cv(
                &data,
                &small_grid(),
                &CvOptions {
                    k: 2,
                    ..CvOptions::default()
                }
            ),
            Err(EvalError::SingleClass)
        ));
    }

    #[test]
    fn no_leakage_from_test_fold_rows() {
        // Blowing up one test-fold row must not change that fold's trained
        // model: identical chosen config and identical train-side metrics.
        let data = toy_dataset(10, 3.0, 21);
        let opts = CvOptions {
            k: 4,
            seed: 11,
            ..CvOptions::default()
        };
        let assign = stratified_kfold(&data.labels, opts.k, opts.seed).unwrap();
        let victim = 0usize;
        let victim_fold = assign[victim];

        let mut bent = data.clone();
        bent.rows[victim] = vec![1e9, -1e9];

        let a = run_cv(&data, &small_grid(), &opts).unwrap();
        let b = run_cv(&bent, &small_grid(), &opts).unwrap();
        let fa = &a.folds[victim_fold];
        let fb = &b.folds[victim_fold];
        assert_eq!(fa.chosen, fb.chosen);
        assert_eq!(fa.train, fb.train);
    }

    #[test]
    fn metrics_are_row_order_invariant() {
        let mut cm1 = ConfusionMatrix::new(vec!["pos".into(), "neg".into()]);
        let mut cm2m = ConfusionMatrix::new(vec!["pos".into(), "neg".into()]);
        let pairs = [
            ("pos", "pos"),
            ("neg", "pos"),
            ("pos", "neg"),
            ("neg", "neg"),
        ];
        for (t, p) in pairs {
            cm1.record(t, p).unwrap();
        }
        for (t, p) in pairs.iter().rev() {
            cm2m.record(t, p).unwrap();
        }
        assert_eq!(
            metrics_binary(&cm1, "pos").unwrap(),
            metrics_binary(&cm2m, "pos").unwrap()
        );
    }

    #[test]
    fn report_rendering_shape() {
        let data = toy_dataset(10, 8.0, 2);
        let report = run_cv(
            &data,
            &small_grid(),
            &CvOptions {
                k: 2,
                ..CvOptions::default()
            },
        )
        .unwrap();
        let rows = vec![ReportRow {
            lead_set: "i".into(),
            report,
        }];
        let csv = render_binary_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), BINARY_REPORT_HEADER);
        let data_line = lines.next().unwrap();
        assert!(data_line.starts_with("i,"));
        assert_eq!(data_line.split(',').count(), 7);
        let txt = render_binary_text(&rows);
        assert!(txt.contains("lead_set"));
    }

    #[test]
    fn canonical_class_order() {
        let classes = vec![
            "HC".to_string(),
            "ZZ".to_string(),
            "MI".to_string(),
            "BBB".to_string(),
        ];
        assert_eq!(
            report_class_order(&classes),
            vec![
                "MI".to_string(),
                "BBB".to_string(),
                "HC".to_string(),
                "ZZ".to_string()
            ]
        );
    }
}
