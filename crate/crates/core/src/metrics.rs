//! Threshold metrics, ranking metrics, curve export and cross-validation reports.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Scores at or above this are predicted positive.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

fn check_lengths(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid("no scores to evaluate"));
    }
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Labels are positive when `> 0.5`.
fn is_pos(label: f64) -> bool {
    label > 0.5
}

pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<Confusion> {
    check_lengths(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, is_pos(y)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub mcc: f64,
}

/// Zero-denominator metrics are reported as 0.
pub fn threshold_metrics(c: &Confusion) -> ThresholdMetrics {
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    ThresholdMetrics {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        sensitivity: ratio(tp, tp + fn_),
        specificity: ratio(tn, tn + fp),
        precision: ratio(tp, tp + fp),
        mcc: ratio(tp * tn - fp * fn_, den),
    }
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

fn class_counts(scores: &[f64], labels: &[f64]) -> Result<(usize, usize)> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let pos = labels.iter().filter(|&&y| is_pos(y)).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ranking metrics need both classes"));
    }
    Ok((pos, neg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub area: f64,
    /// `(x, y)`: `(fpr, tpr)` for ROC, `(recall, precision)` for PR.
    pub points: Vec<(f64, f64)>,
}

/// Area under the ROC curve as the probability a positive outscores a
/// negative, ties counting one half. Points run from (0,0) to (1,1).
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<Curve> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut wins = 0.0;
    for group in tie_groups(scores) {
        let gp = group.iter().filter(|&&i| is_pos(labels[i])).count();
        let gn = group.len() - gp;
        // Each negative here loses to every positive above it and ties with this group's.
        wins += gn as f64 * tp as f64 + 0.5 * (gp * gn) as f64;
        tp += gp;
        fp += gn;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(Curve {
        area: wins / (pos as f64 * neg as f64),
        points,
    })
}

/// Step-wise average precision: the sum of `(r_i − r_{i−1}) · p_i` over
/// descending distinct thresholds.
pub fn pr_auc(scores: &[f64], labels: &[f64]) -> Result<Curve> {
    let (pos, _) = class_counts(scores, labels)?;
    let mut points = Vec::new();
    let (mut tp, mut predicted) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for group in tie_groups(scores) {
        tp += group.iter().filter(|&&i| is_pos(labels[i])).count();
        predicted += group.len();
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / predicted as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        points.push((recall, precision));
    }
    Ok(Curve { area, points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub confusion: Confusion,
    pub threshold: ThresholdMetrics,
    pub auc: f64,
    pub aupr: f64,
    pub roc: Vec<(f64, f64)>,
    pub pr: Vec<(f64, f64)>,
}

impl FoldMetrics {
    /// Acc, Sen, Spec, Prec, MCC, AUC, AUPR.
    pub fn values(&self) -> [f64; 7] {
        let t = &self.threshold;
        [t.accuracy, t.sensitivity, t.specificity, t.precision, t.mcc, self.auc, self.aupr]
    }
}

pub const METRIC_NAMES: [&str; 7] = ["acc", "sen", "spec", "prec", "mcc", "auc", "aupr"];

pub fn evaluate_scores(scores: &[f64], labels: &[f64]) -> Result<FoldMetrics> {
    let confusion = confusion(scores, labels, DEFAULT_THRESHOLD)?;
    let roc = roc_auc(scores, labels)?;
    let pr = pr_auc(scores, labels)?;
    Ok(FoldMetrics {
        threshold: threshold_metrics(&confusion),
        confusion,
        auc: roc.area,
        aupr: pr.area,
        roc: roc.points,
        pr: pr.points,
    })
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample (n − 1) standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub folds: Vec<FoldMetrics>,
}

impl EvalReport {
    pub fn column(&self, metric: usize) -> Vec<f64> {
        self.folds.iter().map(|f| f.values()[metric]).collect()
    }

    pub fn mean(&self) -> [f64; 7] {
        std::array::from_fn(|m| mean(&self.column(m)))
    }

    pub fn std(&self) -> [f64; 7] {
        std::array::from_fn(|m| sample_std(&self.column(m)))
    }

    pub fn mean_auc(&self) -> f64 {
        self.mean()[5]
    }

    /// One row per fold, then `mean` and `std` rows.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("fold");
        for name in METRIC_NAMES {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        let mut row = |label: &str, values: [f64; 7]| {
            out.push_str(label);
            for v in values {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        };
        for (i, f) in self.folds.iter().enumerate() {
            row(&(i + 1).to_string(), f.values());
        }
        row("mean", self.mean());
        row("std", self.std());
        out
    }

    /// `mean±std` summary in percent for the threshold metrics and raw AUC/AUPR.
    pub fn summary(&self) -> String {
        let (m, s) = (self.mean(), self.std());
        let mut out = String::new();
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            if i < 5 {
                let _ = write!(out, "{name} {:.2}±{:.2}", 100.0 * m[i], 100.0 * s[i]);
            } else {
                let _ = write!(out, "{name} {:.4}±{:.4}", m[i], s[i]);
            }
        }
        out
    }

    /// Write the TSV report to `path` and per-fold `roc_foldN.csv` / `pr_foldN.csv`
    /// next to it.
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for (i, f) in self.folds.iter().enumerate() {
            write_curve(&dir.join(format!("roc_fold{}.csv", i + 1)), "fpr,tpr", &f.roc)?;
            write_curve(&dir.join(format!("pr_fold{}.csv", i + 1)), "recall,precision", &f.pr)?;
        }
        Ok(())
    }
}

pub fn write_curve(path: &Path, header: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut out = format!("{header}\n");
    for (x, y) in points {
        let _ = writeln!(out, "{x:.6},{y:.6}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
