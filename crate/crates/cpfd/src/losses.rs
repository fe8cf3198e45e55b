//! The distillation loss stack: hard-label cross-entropy, temperature-scaled
//! KL distillation, and their per-sample alpha-weighted combination.

use crate::error::{Error, Result};
use crate::ndcore::softmax_t;

/// Probability clamp preventing log(0) on degenerate confident predictions.
pub const PROB_EPS: f64 = 1e-12;

/// Per-sample and batch-mean values of the combined student objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub l_cls: f64,
    pub l_distill: f64,
    pub mean_alpha: f64,
    pub l_student: f64,
    pub per_sample_cls: Vec<f64>,
    pub per_sample_distill: Vec<f64>,
    pub per_sample_alpha: Vec<f64>,
    pub per_sample_student: Vec<f64>,
}

/// Hard-label cross-entropy of an explicit probability vector.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::Param(format!("label {label} out of range for K={}", probs.len())));
    }
    Ok(-probs[label].max(PROB_EPS).ln())
}

/// Cross-entropy against a hard label, from logits through softmax at T=1.
pub fn ce_of_logits(logits: &[f64], label: usize) -> Result<f64> {
    let probs = softmax_t(logits, 1.0)?;
    cross_entropy(&probs, label)
}

/// Temperature-scaled distillation loss:
/// `T^2 * sum_i q_t,i(T) * log(q_t,i(T) / q_s,i(T))`.
///
/// The teacher side is a constant in the student's graph; only the tape's
/// fused objective op differentiates this, w.r.t. the student logits.
pub fn kl_distill(teacher_logits: &[f64], student_logits: &[f64], temperature: f64) -> Result<f64> {
    if teacher_logits.len() != student_logits.len() {
        return Err(Error::Shape(format!(
            "teacher logits length {} vs student {}",
            teacher_logits.len(),
            student_logits.len()
        )));
    }
    let qt = softmax_t(teacher_logits, temperature)?;
    let qs = softmax_t(student_logits, temperature)?;
    let mut kl = 0.0;
    for (&t, &s) in qt.iter().zip(&qs) {
        if t > 0.0 {
            kl += t * (t.max(PROB_EPS).ln() - s.max(PROB_EPS).ln());
        }
    }
    // rounding can leave a tiny negative residue when the distributions match
    Ok((temperature * temperature * kl).max(0.0))
}

/// Eq-style affine combination `(1-alpha)*l_cls + alpha*l_distill`.
pub fn combined_loss(l_cls: f64, l_distill: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Param(format!("alpha {alpha} outside [0,1]")));
    }
    Ok((1.0 - alpha) * l_cls + alpha * l_distill)
}

/// The teacher's own per-sample loss, the confidence signal driving alpha.
/// Computed at T=1 with the hard label.
pub fn teacher_sample_loss(teacher_logits: &[f64], label: usize) -> Result<f64> {
    ce_of_logits(teacher_logits, label)
}

/// One batch record for `batch_student_loss`.
pub struct BatchItem<'a> {
    pub student_logits: &'a [f64],
    pub teacher_logits: &'a [f64],
    pub label: usize,
    pub alpha: f64,
}

/// Per-sample combined losses averaged uniformly over the batch.
pub fn batch_student_loss(items: &[BatchItem<'_>], temperature: f64) -> Result<LossBreakdown> {
    if items.is_empty() {
        return Err(Error::Param("empty batch".into()));
    }
    let n = items.len() as f64;
    let mut bd = LossBreakdown {
        l_cls: 0.0,
        l_distill: 0.0,
        mean_alpha: 0.0,
        l_student: 0.0,
        per_sample_cls: Vec::with_capacity(items.len()),
        per_sample_distill: Vec::with_capacity(items.len()),
        per_sample_alpha: Vec::with_capacity(items.len()),
        per_sample_student: Vec::with_capacity(items.len()),
    };
    for item in items {
        let l_cls = ce_of_logits(item.student_logits, item.label)?;
        let l_distill = kl_distill(item.teacher_logits, item.student_logits, temperature)?;
        let l_student = combined_loss(l_cls, l_distill, item.alpha)?;
        bd.per_sample_cls.push(l_cls);
        bd.per_sample_distill.push(l_distill);
        bd.per_sample_alpha.push(item.alpha);
        bd.per_sample_student.push(l_student);
    }
    bd.l_cls = bd.per_sample_cls.iter().sum::<f64>() / n;
    bd.l_distill = bd.per_sample_distill.iter().sum::<f64>() / n;
    bd.mean_alpha = bd.per_sample_alpha.iter().sum::<f64>() / n;
    bd.l_student = bd.per_sample_student.iter().sum::<f64>() / n;
    Ok(bd)
}
