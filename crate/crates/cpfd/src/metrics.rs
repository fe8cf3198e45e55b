//! Binary classification metrics (ROC AUC, average precision, F1, hit rate)
//! and the teacher-loss-vs-student-correctness confidence table.

use crate::error::{Error, Result};

/// Everything reported for one evaluated model.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub f1_at_half: f64,
    pub best_f1: f64,
    pub best_f1_threshold: f64,
    /// Precision among the top `hit_recall_count` scored samples; the recall
    /// budget equals the positive count so it is comparable across models.
    pub hit_rate: f64,
    pub hit_threshold: f64,
    pub hit_recall_count: usize,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn check_binary(scores: &[f64], labels: &[usize]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::UndefinedMetric("empty input".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Param(format!("label {y} is not binary")));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((n_pos, labels.len() - n_pos))
}

/// Mann-Whitney ROC AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed from average ranks.
pub fn roc_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let (n_pos, n_neg) = check_binary(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied scores share the average rank of the run
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: sum of (R_k - R_{k-1}) * P_k over descending distinct
/// score thresholds, whole tie-groups included per step.
pub fn pr_auc(scores: &[f64], labels: &[usize]) -> Result<f64> {
    let (n_pos, _) = check_binary(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("PR AUC needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            tp += labels[idx];
        }
        seen += j - i;
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// F1 at a fixed threshold; predictions are `score >= threshold`. Defined as
/// zero when precision + recall is zero.
pub fn f1(scores: &[f64], labels: &[usize], threshold: f64) -> Result<f64> {
    check_binary(scores, labels)?;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        let pred = s >= threshold;
        match (pred, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Maximize F1 over all distinct score thresholds, ties broken toward the
/// lower threshold.
pub fn best_f1(scores: &[f64], labels: &[usize]) -> Result<(f64, f64)> {
    check_binary(scores, labels)?;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    let mut best = (0.0, thresholds[0]);
    for &t in &thresholds {
        let v = f1(scores, labels, t)?;
        if v > best.0 {
            best = (v, t);
        }
    }
    Ok(best)
}

/// Among samples scoring at or above the threshold, the fraction that are
/// truly positive, plus how many were recalled.
pub fn hit_rate(scores: &[f64], labels: &[usize], threshold: f64) -> Result<(f64, usize)> {
    check_binary(scores, labels)?;
    let mut recalled = 0usize;
    let mut hits = 0usize;
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= threshold {
            recalled += 1;
            hits += y;
        }
    }
    if recalled == 0 {
        return Err(Error::UndefinedMetric("no samples recalled at this threshold".into()));
    }
    Ok((hits as f64 / recalled as f64, recalled))
}

/// Mean teacher loss split by student correctness x sample class, mirroring
/// the confidence-correlation analysis. `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    /// [correct/incorrect][neg/pos]
    pub mean_loss: [[Option<f64>; 2]; 2],
    pub counts: [[usize; 2]; 2],
    pub overall: [Option<f64>; 2],
    pub threshold: f64,
}

impl ConfidenceTable {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn confidence_table(
    teacher_losses: &[f64],
    student_scores: &[f64],
    labels: &[usize],
    threshold: f64,
) -> Result<ConfidenceTable> {
    if teacher_losses.len() != student_scores.len() || student_scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "lengths differ: {} losses, {} scores, {} labels",
            teacher_losses.len(),
            student_scores.len(),
            labels.len()
        )));
    }
    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0usize; 2]; 2];
    let mut overall_sums = [0.0f64; 2];
    for ((&l, &s), &y) in teacher_losses.iter().zip(student_scores).zip(labels) {
        let correct = usize::from((s >= threshold) != (y == 1)); // 0 = correct row
        let class = y.min(1);
        sums[correct][class] += l;
        counts[correct][class] += 1;
        overall_sums[correct] += l;
    }
    let cell = |r: usize, c: usize| {
        (counts[r][c] > 0).then(|| sums[r][c] / counts[r][c] as f64)
    };
    let row_total = |r: usize| {
        let n = counts[r][0] + counts[r][1];
        (n > 0).then(|| overall_sums[r] / n as f64)
    };
    Ok(ConfidenceTable {
        mean_loss: [[cell(0, 0), cell(0, 1)], [cell(1, 0), cell(1, 1)]],
        counts,
        overall: [row_total(0), row_total(1)],
        threshold,
    })
}

/// Full report for one model's scores on one eval set.
pub fn report(scores: &[f64], labels: &[usize]) -> Result<MetricsReport> {
    let (n_pos, n_neg) = check_binary(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("report needs both classes".into()));
    }
    let (best, best_thr) = best_f1(scores, labels)?;
    // recall budget = positive count: threshold at the n_pos-th highest score
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let hit_threshold = sorted[n_pos - 1];
    let (hit, recalled) = hit_rate(scores, labels, hit_threshold)?;
    Ok(MetricsReport {
        roc_auc: roc_auc(scores, labels)?,
        pr_auc: pr_auc(scores, labels)?,
        f1_at_half: f1(scores, labels, 0.5)?,
        best_f1: best,
        best_f1_threshold: best_thr,
        hit_rate: hit,
        hit_threshold,
        hit_recall_count: recalled,
        n_pos,
        n_neg,
    })
}
