//! Optimization loops: teacher training on all features, student training in
//! plain / PFD / CPFD modes, Adam with per-epoch learning-rate decay, and
//! best-eval-AUC checkpoint selection.
//!
//! All three student modes share one code path; the mode only decides the
//! per-sample alpha vector. That makes the degenerate identities (cpfd with a
//! constant mapping == pfd, pfd with alpha 0 == plain) hold bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::confmap::{default_config_from_stats, map_alpha, MappingConfig, MappingKind, TeacherStats};
use crate::data::{write_atomic, Dataset, DistillSet};
use crate::error::{Error, Result};
use crate::losses::{ce_of_logits, kl_distill};
use crate::metrics::roc_auc;
use crate::ndcore::{GradTape, Matrix};
use crate::nn::{deserialize_model, serialize_model, AnyModel, MlpSpec, StudentModel, TeacherModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Teacher,
    Plain,
    Pfd,
    Cpfd,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Teacher => "teacher",
            Mode::Plain => "plain",
            Mode::Pfd => "pfd",
            Mode::Cpfd => "cpfd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "teacher" => Ok(Mode::Teacher),
            "plain" => Ok(Mode::Plain),
            "pfd" => Ok(Mode::Pfd),
            "cpfd" => Ok(Mode::Cpfd),
            _ => Err(Error::Config(format!("unknown mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_factor: f64,
    pub temperature: f64,
    /// PFD mode: the constant distillation weight.
    pub alpha: f64,
    /// CPFD mode: explicit mapping; when absent, calibrated stats fill in an
    /// exp-decay default.
    pub mapping: Option<MappingConfig>,
    pub seed: u64,
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn defaults(mode: Mode, seed: u64) -> Self {
        TrainConfig {
            mode,
            epochs: 20,
            batch_size: 128,
            learning_rate: 1e-3,
            lr_decay_factor: 0.9,
            temperature: 1.0,
            alpha: 0.5,
            mapping: None,
            seed,
            eval_every: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("epochs, batch_size and eval_every must be positive".into()));
        }
        if self.learning_rate <= 0.0 || self.lr_decay_factor <= 0.0 {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.mode == Mode::Pfd && !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("pfd alpha {} outside [0,1]", self.alpha)));
        }
        if let Some(m) = &self.mapping {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        let repr = format!(
            "{}|{}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}",
            self.mode.name(),
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.lr_decay_factor,
            self.temperature,
            self.alpha,
            self.mapping,
            self.seed,
            self.eval_every,
        );
        fnv1a(repr.as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Learning rate for the given epoch: initial rate times decay^epoch.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    config.learning_rate * config.lr_decay_factor.powi(epoch as i32)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_cls: f64,
    pub l_distill: f64,
    pub l_student: f64,
    pub mean_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSnapshot {
    pub epoch: usize,
    pub roc_auc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub snapshots: Vec<EvalSnapshot>,
    pub best_epoch: usize,
    pub seed: u64,
    pub config_hash: u64,
    pub wall_clock_secs: f64,
}

impl TrainLog {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#privdistill-trainlog-v1 seed={} config_hash={:016x} best_epoch={}\n",
            self.seed, self.config_hash, self.best_epoch
        );
        for e in &self.epochs {
            writeln!(
                out,
                "epoch {} l_cls {:?} l_distill {:?} l_student {:?} mean_alpha {:?}",
                e.epoch, e.l_cls, e.l_distill, e.l_student, e.mean_alpha
            )
            .unwrap();
        }
        for s in &self.snapshots {
            writeln!(out, "snapshot {} roc_auc {:?}", s.epoch, s.roc_auc).unwrap();
        }
        writeln!(out, "wall_clock_secs {:.3}", self.wall_clock_secs).unwrap();
        out
    }

    /// Equality of everything except wall clock; the reproducibility notion
    /// used by the mode-identity checks.
    pub fn same_trajectory(&self, other: &TrainLog) -> bool {
        self.epochs == other.epochs
            && self.snapshots == other.snapshots
            && self.best_epoch == other.best_epoch
            && self.seed == other.seed
    }
}

struct Adam {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(shapes: &[&Matrix]) -> Self {
        Adam {
            m: shapes.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            v: shapes.iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut Matrix], grads: &[&Matrix], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t);
        for ((p, g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                let mi = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gi;
                let vi = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                pd[i] -= lr * (mi / bc1) / ((vi / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

fn shuffled_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx.chunks(batch_size).map(|c| c.to_vec()).collect()
}

fn positive_scores(logits: &Matrix) -> Result<Vec<f64>> {
    let probs = crate::ndcore::softmax_t_rows(logits, 1.0)?;
    Ok((0..probs.rows()).map(|r| probs.get(r, 1)).collect())
}

fn guard_finite(loss: f64, context: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss during {context}: {loss}")));
    }
    Ok(())
}

fn guard_params(params: &[&mut Matrix], context: &str) -> Result<()> {
    for p in params {
        if !p.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after {context}")));
        }
    }
    Ok(())
}

/// Train the two-branch teacher by cross-entropy on all features. Returns the
/// parameters of the best-eval-AUC snapshot.
pub fn train_teacher(
    config: &TrainConfig,
    raw_spec: MlpSpec,
    priv_spec: MlpSpec,
    train: &Dataset,
    eval: &Dataset,
) -> Result<(TeacherModel, TrainLog)> {
    config.validate()?;
    if config.mode != Mode::Teacher {
        return Err(Error::Config(format!(
            "train_teacher called with mode {}",
            config.mode.name()
        )));
    }
    if raw_spec.input_width() != train.d_raw || priv_spec.input_width() != train.d_priv {
        return Err(Error::Shape(format!(
            "model specs ({}, {}) do not match dataset widths ({}, {})",
            raw_spec.input_width(),
            priv_spec.input_width(),
            train.d_raw,
            train.d_priv
        )));
    }
    let started = std::time::Instant::now();
    let mut model = TeacherModel::init(raw_spec, priv_spec, train.k, config.seed)?;
    let mut adam = {
        let params = model.params_mut();
        Adam::new(&params.iter().map(|p| &**p).collect::<Vec<_>>())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels_all = train.labels();
    let eval_labels = eval.labels();
    let eval_raw = eval.raw_matrix(&(0..eval.len()).collect::<Vec<_>>());
    let eval_priv = eval.priv_matrix(&(0..eval.len()).collect::<Vec<_>>());

    let mut log = TrainLog {
        epochs: Vec::new(),
        snapshots: Vec::new(),
        best_epoch: 0,
        seed: config.seed,
        config_hash: config.hash(),
        wall_clock_secs: 0.0,
    };
    let mut best: Option<(f64, TeacherModel)> = None;

    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in shuffled_batches(train.len(), config.batch_size, &mut rng) {
            let raw = train.raw_matrix(&batch);
            let privileged = train.priv_matrix(&batch);
            let labels: Vec<usize> = batch.iter().map(|&i| labels_all[i]).collect();

            let mut tape = GradTape::new();
            let raw_v = tape.leaf(raw);
            let priv_v = tape.leaf(privileged);
            let mut param_vars = Vec::new();
            let logits = model.forward_tape(&mut tape, raw_v, priv_v, &mut param_vars)?;
            let ce = tape.ce_softmax(logits, &labels)?;
            let loss = tape.mean(ce);
            let loss_value = tape.value(loss).get(0, 0);
            guard_finite(loss_value, "teacher training")?;
            epoch_loss += loss_value * batch.len() as f64;
            seen += batch.len();

            tape.backward(loss, &Matrix::row_vec(&[1.0]))?;
            let grads: Vec<Matrix> =
                param_vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();
            let mut params = model.params_mut();
            adam.step(&mut params, &grads.iter().collect::<Vec<_>>(), lr);
        }
        let mean_loss = epoch_loss / seen as f64;
        {
            let params = model.params_mut();
            guard_params(&params, &format!("teacher epoch {epoch}"))?;
        }
        log.epochs.push(EpochRecord {
            epoch,
            l_cls: mean_loss,
            l_distill: 0.0,
            l_student: mean_loss,
            mean_alpha: 0.0,
        });

        if (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs {
            let scores = positive_scores(&model.forward_batch(&eval_raw, &eval_priv)?)?;
            let auc = roc_auc(&scores, &eval_labels)?;
            log.snapshots.push(EvalSnapshot { epoch, roc_auc: auc });
            if best.as_ref().map_or(true, |(b, _)| auc > *b) {
                best = Some((auc, model.clone()));
                log.best_epoch = epoch;
            }
        }
    }

    let (_, best_model) = best.expect("at least one snapshot");
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((best_model, log))
}

/// Per-record distillation weights for the given student mode.
pub fn student_alphas(
    config: &TrainConfig,
    records: &DistillSet,
    stats: Option<&TeacherStats>,
) -> Result<(Vec<f64>, Option<MappingConfig>)> {
    match config.mode {
        Mode::Plain => Ok((vec![0.0; records.records.len()], None)),
        Mode::Pfd => Ok((vec![config.alpha; records.records.len()], None)),
        Mode::Cpfd => {
            let mapping = match (&config.mapping, stats) {
                (Some(m), _) => m.clone(),
                (None, Some(st)) => default_config_from_stats(MappingKind::ExpDecay, st),
                (None, None) => {
                    return Err(Error::Config(
                        "cpfd mode needs a mapping config or calibrated teacher stats".into(),
                    ))
                }
            };
            let alphas = records
                .records
                .iter()
                .map(|r| map_alpha(&mapping, r.teacher_loss))
                .collect::<Result<Vec<_>>>()?;
            Ok((alphas, Some(mapping)))
        }
        Mode::Teacher => Err(Error::Config("student_alphas called in teacher mode".into())),
    }
}

/// Train a student from frozen distillation records. Plain mode ignores the
/// teacher (alpha 0), pfd uses a constant alpha, cpfd maps each record's
/// teacher loss through the mapping function.
pub fn train_student(
    config: &TrainConfig,
    raw_spec: MlpSpec,
    records: &DistillSet,
    eval: &Dataset,
    stats: Option<&TeacherStats>,
) -> Result<(StudentModel, TrainLog)> {
    config.validate()?;
    if config.mode == Mode::Teacher {
        return Err(Error::Config("train_student called in teacher mode".into()));
    }
    if raw_spec.input_width() != records.d_raw {
        return Err(Error::Shape(format!(
            "student spec input {} does not match record width {}",
            raw_spec.input_width(),
            records.d_raw
        )));
    }
    if records.records.is_empty() {
        return Err(Error::Param("no distillation records".into()));
    }
    let started = std::time::Instant::now();
    let (alphas_all, _) = student_alphas(config, records, stats)?;

    let mut model = StudentModel::init(raw_spec, records.k, config.seed)?;
    let mut adam = {
        let params = model.params_mut();
        Adam::new(&params.iter().map(|p| &**p).collect::<Vec<_>>())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let eval_labels = eval.labels();
    let eval_raw = eval.raw_matrix(&(0..eval.len()).collect::<Vec<_>>());

    let mut log = TrainLog {
        epochs: Vec::new(),
        snapshots: Vec::new(),
        best_epoch: 0,
        seed: config.seed,
        config_hash: config.hash(),
        wall_clock_secs: 0.0,
    };
    let mut best: Option<(f64, StudentModel)> = None;
    let n = records.records.len();

    for epoch in 0..config.epochs {
        let lr = lr_at(epoch, config);
        let mut sums = (0.0, 0.0, 0.0, 0.0); // cls, distill, student, alpha
        for batch in shuffled_batches(n, config.batch_size, &mut rng) {
            let mut raw_data = Vec::with_capacity(batch.len() * records.d_raw);
            let mut teacher_data = Vec::with_capacity(batch.len() * records.k);
            let mut labels = Vec::with_capacity(batch.len());
            let mut alphas = Vec::with_capacity(batch.len());
            for &i in &batch {
                let r = &records.records[i];
                raw_data.extend_from_slice(&r.raw);
                teacher_data.extend_from_slice(&r.teacher_logits);
                labels.push(r.label);
                alphas.push(alphas_all[i]);
            }
            let raw = Matrix::new(batch.len(), records.d_raw, raw_data)?;
            let teacher = Matrix::new(batch.len(), records.k, teacher_data)?;

            let mut tape = GradTape::new();
            let raw_v = tape.leaf(raw);
            let mut param_vars = Vec::new();
            let logits = model.forward_tape(&mut tape, raw_v, &mut param_vars)?;
            let loss = tape.distill_objective(
                logits,
                &teacher,
                &labels,
                &alphas,
                config.temperature,
            )?;
            let loss_value = tape.value(loss).get(0, 0);
            guard_finite(loss_value, "student training")?;

            // per-sample breakdown for the log
            let logit_values = tape.value(logits).clone();
            for (row, &i) in batch.iter().enumerate() {
                let r = &records.records[i];
                let l_cls = ce_of_logits(logit_values.row(row), r.label)?;
                let l_distill =
                    kl_distill(&r.teacher_logits, logit_values.row(row), config.temperature)?;
                let a = alphas_all[i];
                sums.0 += l_cls;
                sums.1 += l_distill;
                sums.2 += (1.0 - a) * l_cls + a * l_distill;
                sums.3 += a;
            }

            tape.backward(loss, &Matrix::row_vec(&[1.0]))?;
            let grads: Vec<Matrix> =
                param_vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();
            let mut params = model.params_mut();
            adam.step(&mut params, &grads.iter().collect::<Vec<_>>(), lr);
        }
        {
            let params = model.params_mut();
            guard_params(&params, &format!("student epoch {epoch}"))?;
        }
        let nf = n as f64;
        log.epochs.push(EpochRecord {
            epoch,
            l_cls: sums.0 / nf,
            l_distill: sums.1 / nf,
            l_student: sums.2 / nf,
            mean_alpha: sums.3 / nf,
        });

        if (epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs {
            let scores = positive_scores(&model.forward_batch(&eval_raw)?)?;
            let auc = roc_auc(&scores, &eval_labels)?;
            log.snapshots.push(EvalSnapshot { epoch, roc_auc: auc });
            if best.as_ref().map_or(true, |(b, _)| auc > *b) {
                best = Some((auc, model.clone()));
                log.best_epoch = epoch;
            }
        }
    }

    let (_, best_model) = best.expect("at least one snapshot");
    log.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((best_model, log))
}

pub fn save_checkpoint(model: &AnyModel, path: &Path) -> Result<()> {
    write_atomic(path, serialize_model(model).as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<AnyModel> {
    deserialize_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{export_distill, generate, split, GenConfig};

    fn tiny_data() -> (Dataset, Dataset) {
        let ds = generate(&GenConfig { n_samples: 600, ..GenConfig::default() }).unwrap();
        split(&ds, 0.2, 9).unwrap()
    }

    fn quick_config(mode: Mode) -> TrainConfig {
        TrainConfig { epochs: 3, batch_size: 64, ..TrainConfig::defaults(mode, 1) }
    }

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            lr_decay_factor: 0.5,
            ..TrainConfig::defaults(Mode::Teacher, 0)
        };
        assert_eq!(lr_at(0, &cfg), 1e-3);
        assert!((lr_at(2, &cfg) - 2.5e-4).abs() < 1e-18);
        let flat = TrainConfig { lr_decay_factor: 1.0, ..cfg };
        assert_eq!(lr_at(7, &flat), 1e-3);
    }

    #[test]
    fn teacher_training_reduces_loss_and_is_deterministic() {
        let (train, eval) = tiny_data();
        let cfg = quick_config(Mode::Teacher);
        let spec_r = crate::nn::default_raw_spec(train.d_raw);
        let spec_p = crate::nn::default_priv_spec(train.d_priv);
        let (m1, log1) =
            train_teacher(&cfg, spec_r.clone(), spec_p.clone(), &train, &eval).unwrap();
        let (m2, log2) = train_teacher(&cfg, spec_r, spec_p, &train, &eval).unwrap();
        assert!(log1.epochs.last().unwrap().l_cls < log1.epochs[0].l_cls);
        assert!(log1.same_trajectory(&log2));
        assert_eq!(m1, m2);
    }

    #[test]
    fn student_mode_identities_are_bit_exact() {
        let (train, eval) = tiny_data();
        let spec_r = crate::nn::default_raw_spec(train.d_raw);
        let spec_p = crate::nn::default_priv_spec(train.d_priv);
        let (teacher, _) = train_teacher(
            &quick_config(Mode::Teacher),
            spec_r.clone(),
            spec_p,
            &train,
            &eval,
        )
        .unwrap();
        let records = export_distill(&teacher, &train).unwrap();

        // pfd with alpha = 0 == plain
        let pfd0 = TrainConfig { alpha: 0.0, ..quick_config(Mode::Pfd) };
        let (m_pfd0, log_pfd0) =
            train_student(&pfd0, spec_r.clone(), &records, &eval, None).unwrap();
        let (m_plain, log_plain) =
            train_student(&quick_config(Mode::Plain), spec_r.clone(), &records, &eval, None)
                .unwrap();
        assert!(log_pfd0.same_trajectory(&log_plain));
        assert_eq!(m_pfd0.head, m_plain.head);

        // cpfd with constant mapping == pfd with same alpha
        let pfd = TrainConfig { alpha: 0.4, ..quick_config(Mode::Pfd) };
        let cpfd = TrainConfig {
            mapping: Some(MappingConfig::constant(0.4).unwrap()),
            ..quick_config(Mode::Cpfd)
        };
        let (m_pfd, log_pfd) =
            train_student(&pfd, spec_r.clone(), &records, &eval, None).unwrap();
        let (m_cpfd, log_cpfd) = train_student(&cpfd, spec_r, &records, &eval, None).unwrap();
        assert!(log_pfd.same_trajectory(&log_cpfd));
        assert_eq!(m_pfd.raw_encoder, m_cpfd.raw_encoder);
    }

    #[test]
    fn cpfd_without_mapping_or_stats_is_config_error() {
        let (train, eval) = tiny_data();
        let spec_r = crate::nn::default_raw_spec(train.d_raw);
        let spec_p = crate::nn::default_priv_spec(train.d_priv);
        let (teacher, _) =
            train_teacher(&quick_config(Mode::Teacher), spec_r.clone(), spec_p, &train, &eval)
                .unwrap();
        let records = export_distill(&teacher, &train).unwrap();
        let err =
            train_student(&quick_config(Mode::Cpfd), spec_r, &records, &eval, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn one_small_step_decreases_batch_loss() {
        let (train, eval) = tiny_data();
        let spec_r = crate::nn::default_raw_spec(train.d_raw);
        let mut model = StudentModel::init(spec_r, 2, 3).unwrap();
        let idx: Vec<usize> = (0..64).collect();
        let raw = train.raw_matrix(&idx);
        let labels: Vec<usize> = idx.iter().map(|&i| train.samples[i].label).collect();
        let _ = eval;

        let batch_loss = |m: &StudentModel| {
            let logits = m.forward_batch(&raw).unwrap();
            (0..idx.len())
                .map(|r| ce_of_logits(logits.row(r), labels[r]).unwrap())
                .sum::<f64>()
                / idx.len() as f64
        };
        let before = batch_loss(&model);

        let mut tape = GradTape::new();
        let raw_v = tape.leaf(raw.clone());
        let mut param_vars = Vec::new();
        let logits = model.forward_tape(&mut tape, raw_v, &mut param_vars).unwrap();
        let ce = tape.ce_softmax(logits, &labels).unwrap();
        let loss = tape.mean(ce);
        tape.backward(loss, &Matrix::row_vec(&[1.0])).unwrap();
        let grads: Vec<Matrix> =
            param_vars.iter().map(|&v| tape.grad(v).unwrap().clone()).collect();
        let mut adam = {
            let params = model.params_mut();
            Adam::new(&params.iter().map(|p| &**p).collect::<Vec<_>>())
        };
        let mut params = model.params_mut();
        adam.step(&mut params, &grads.iter().collect::<Vec<_>>(), 1e-5);

        assert!(batch_loss(&model) < before);
    }

    #[test]
    fn checkpoint_roundtrip_preserves_forward() {
        let (train, eval) = tiny_data();
        let spec_r = crate::nn::default_raw_spec(train.d_raw);
        let spec_p = crate::nn::default_priv_spec(train.d_priv);
        let (teacher, _) =
            train_teacher(&quick_config(Mode::Teacher), spec_r, spec_p, &train, &eval).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("teacher.ckpt");
        save_checkpoint(&AnyModel::Teacher(teacher.clone()), &path).unwrap();
        let back = load_checkpoint(&path).unwrap().into_teacher().unwrap();
        let idx: Vec<usize> = (0..10).collect();
        assert_eq!(
            teacher.forward_batch(&eval.raw_matrix(&idx), &eval.priv_matrix(&idx)).unwrap(),
            back.forward_batch(&eval.raw_matrix(&idx), &eval.priv_matrix(&idx)).unwrap()
        );
    }
}
